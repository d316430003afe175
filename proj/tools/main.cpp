// Command-line surface: model inspection, comparison, benchmarking,
// gradient self-tests, and single-image inference.
//
// Exit codes: 0 success, 1 validation failure (bad flags, failed check
// suites), 2 runtime error (I/O, config, forward failures).

#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "yk/analysis.hpp"
#include "yk/image_io.hpp"
#include "yk/model.hpp"
#include "yk/postprocess.hpp"
#include "yk/selfcheck.hpp"

namespace {

using nlohmann::ordered_json;

// Results go to stdout, or verbatim to --out when given.
void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        std::cout.flush();
    } else {
        yk::write_file(out_path, text);
    }
}

yk::Model load_model(const std::string& config_path, const std::string& variant,
                     std::uint64_t seed) {
    const auto spec = yk::parse_config(yk::read_file(config_path));
    return yk::build_model(yk::apply_scale(spec, variant), seed);
}

std::string stem(const std::string& path) {
    const auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    const auto dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

struct CommonOpts {
    std::string config;
    std::string variant = "n";
    std::string out;
    std::int64_t imgsz = 640;
    std::uint64_t seed = 0;
    bool json = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_json = true) {
    cmd->add_option("--config", o.config, "model config file")->required();
    cmd->add_option("--variant", o.variant, "scale variant (n/s/m/l/x)");
    cmd->add_option("--imgsz", o.imgsz, "input size for MAC/shape accounting");
    cmd->add_option("--seed", o.seed, "weight-init seed");
    cmd->add_option("--out", o.out, "write results to this file instead of stdout");
    if (with_json) cmd->add_flag("--json", o.json, "machine-readable JSON output");
}

int run_summary(const CommonOpts& o) {
    auto m = load_model(o.config, o.variant, o.seed);
    emit(o.out, yk::summary_table(m, o.imgsz, o.imgsz));
    return 0;
}

int run_params(const CommonOpts& o) {
    auto m = load_model(o.config, o.variant, o.seed);
    const auto rep = yk::count_params(m, o.imgsz, o.imgsz);
    if (o.json) {
        emit(o.out, yk::report_json(stem(o.config), o.variant, rep).dump(2) + "\n");
        return 0;
    }
    std::ostringstream os;
    for (const auto& l : rep.layers)
        os << l.index << " " << l.name << " " << l.params << "\n";
    os << "total " << rep.total_params << "\n";
    emit(o.out, os.str());
    return 0;
}

int run_flops(const CommonOpts& o) {
    auto m = load_model(o.config, o.variant, o.seed);
    const auto rep = yk::count_params(m, o.imgsz, o.imgsz);
    if (o.json) {
        auto j = yk::report_json(stem(o.config), o.variant, rep);
        j["model"]["flops"] = 2 * rep.total_macs;
        emit(o.out, j.dump(2) + "\n");
        return 0;
    }
    std::ostringstream os;
    for (const auto& l : rep.layers)
        os << l.index << " " << l.name << " " << l.macs << "\n";
    os << "total_macs " << rep.total_macs << "\n";
    os << "total_flops " << 2 * rep.total_macs << "\n";
    emit(o.out, os.str());
    return 0;
}

struct CompareOpts {
    std::string config_a, config_b;
    std::string variant_a = "n", variant_b = "n";
    std::string out;
    std::int64_t imgsz = 640;
    std::uint64_t seed = 0;
    bool json = false;
};

int run_compare(const CompareOpts& o) {
    auto a = load_model(o.config_a, o.variant_a, o.seed);
    auto b = load_model(o.config_b, o.variant_b, o.seed);
    const auto r = yk::compare(a, b, o.imgsz, o.imgsz);
    if (o.json) {
        const auto rep = yk::count_params(a, o.imgsz, o.imgsz);
        emit(o.out, yk::report_json(stem(o.config_a), o.variant_a, rep, &r).dump(2) + "\n");
        return 0;
    }
    std::ostringstream os;
    os << "model_a " << stem(o.config_a) << "@" << o.variant_a << " params " << r.params_a
       << " macs " << r.macs_a << "\n";
    os << "model_b " << stem(o.config_b) << "@" << o.variant_b << " params " << r.params_b
       << " macs " << r.macs_b << "\n";
    os << "param_ratio " << r.param_ratio << "\n";
    os << "macs_ratio " << r.macs_ratio << "\n";
    emit(o.out, os.str());
    return 0;
}

struct InferOpts {
    std::string config, variant = "n", weights, image, out;
    std::int64_t imgsz = 640;
    std::uint64_t seed = 0;
    float conf = 0.25f, iou = 0.45f;
};

int run_infer(const InferOpts& o) {
    auto m = load_model(o.config, o.variant, o.seed);
    if (!o.weights.empty()) yk::load_weights(m, yk::read_file(o.weights));
    const yk::Tensor4 image = yk::load_image(o.image);
    auto [boxed, tf] = yk::letterbox(image, o.imgsz, o.imgsz);
    const auto preds = yk::forward(m, boxed);
    yk::check(preds.task == yk::Task::Detect, "infer requires a detect config");
    const auto dets =
        yk::unletterbox(yk::nms(yk::decode(preds, o.conf), o.iou), tf);
    std::ostringstream os;
    for (const auto& d : dets) {
        ordered_json j = {{"class_id", d.class_id},
                          {"score", d.score},
                          {"box", {d.x1, d.y1, d.x2, d.y2}}};
        os << j.dump() << "\n";
    }
    emit(o.out, os.str());
    std::cerr << dets.size() << " detections (random-init weights are not semantically "
                                "meaningful without training)\n";
    return 0;
}

struct BenchOpts {
    std::string config, variant = "n", out;
    std::int64_t imgsz = 640;
    std::uint64_t seed = 0;
    int iters = 10, warmup = 2;
};

int run_bench(const BenchOpts& o) {
    const auto m = load_model(o.config, o.variant, o.seed);
    const auto r = yk::bench_forward(m, o.imgsz, o.imgsz, o.iters, o.warmup);
    std::ostringstream os;
    os << "input " << r.h << "x" << r.w << " iters " << r.iters << " warmup " << r.warmup
       << "\n";
    os << "min_ms " << r.min_ms << "\n";
    os << "median_ms " << r.median_ms << "\n";
    os << "mean_ms " << r.mean_ms << "\n";
    emit(o.out, os.str());
    return 0;
}

struct GradcheckOpts {
    std::string out;
    std::uint64_t seed = 0;
    bool inject_fault = false;
};

int run_gradcheck(const GradcheckOpts& o) {
    const auto results = yk::selfcheck::gradcheck(o.seed, o.inject_fault);
    std::ostringstream os;
    bool ok = true;
    for (const auto& r : results) {
        os << r.name << " " << std::scientific << r.max_rel_err << "\n";
        if (!(r.max_rel_err < 1e-4)) ok = false;
    }
    os << (ok ? "gradcheck: all items < 1e-4\n" : "gradcheck: FAILED\n");
    emit(o.out, os.str());
    return ok ? 0 : 1;
}

struct SelftestOpts {
    std::string out;
    int instances = 100;
    bool inject_fault = false;
};

int run_selftest(const SelftestOpts& o) {
    const auto results = yk::selfcheck::selftest(o.instances, o.inject_fault);
    std::ostringstream os;
    bool ok = true;
    for (const auto& r : results) {
        os << (r.pass ? "PASS " : "FAIL ") << r.name;
        if (!r.detail.empty()) os << " (" << r.detail << ")";
        os << "\n";
        if (!r.pass) ok = false;
    }
    emit(o.out, os.str());
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"YOLO-style detector: inference, analysis, and self-checks"};
    app.require_subcommand(1);

    CommonOpts summary_o, params_o, flops_o;
    add_common(app.add_subcommand("summary", "per-layer model table"), summary_o, false);
    add_common(app.add_subcommand("params", "parameter counts"), params_o);
    add_common(app.add_subcommand("flops", "MAC/FLOP estimates"), flops_o);

    CompareOpts cmp_o;
    auto* cmp = app.add_subcommand("compare", "compare two models");
    cmp->add_option("--config-a", cmp_o.config_a)->required();
    cmp->add_option("--variant-a", cmp_o.variant_a);
    cmp->add_option("--config-b", cmp_o.config_b)->required();
    cmp->add_option("--variant-b", cmp_o.variant_b);
    cmp->add_option("--imgsz", cmp_o.imgsz);
    cmp->add_option("--seed", cmp_o.seed);
    cmp->add_option("--out", cmp_o.out);
    cmp->add_flag("--json", cmp_o.json);

    InferOpts inf_o;
    auto* inf = app.add_subcommand("infer", "single-image inference, JSON-lines output");
    inf->add_option("--config", inf_o.config)->required();
    inf->add_option("--variant", inf_o.variant);
    inf->add_option("--weights", inf_o.weights, "YWTS weights file (optional)");
    inf->add_option("--image", inf_o.image, "P6 PPM or YTEN tensor file")->required();
    inf->add_option("--imgsz", inf_o.imgsz);
    inf->add_option("--conf", inf_o.conf, "confidence threshold");
    inf->add_option("--iou", inf_o.iou, "NMS IoU threshold");
    inf->add_option("--seed", inf_o.seed);
    inf->add_option("--out", inf_o.out);

    BenchOpts bench_o;
    auto* ben = app.add_subcommand("bench", "forward-pass wall-clock benchmark");
    ben->add_option("--config", bench_o.config)->required();
    ben->add_option("--variant", bench_o.variant);
    ben->add_option("--imgsz", bench_o.imgsz);
    ben->add_option("--iters", bench_o.iters);
    ben->add_option("--warmup", bench_o.warmup);
    ben->add_option("--seed", bench_o.seed);
    ben->add_option("--out", bench_o.out);

    GradcheckOpts grad_o;
    auto* grd = app.add_subcommand("gradcheck", "finite-difference gradient validation");
    grd->add_option("--seed", grad_o.seed);
    grd->add_option("--out", grad_o.out);
    grd->add_flag("--inject-fault", grad_o.inject_fault)->group("");  // test hook

    SelftestOpts st_o;
    auto* st = app.add_subcommand("selftest", "oracle-equivalence property suite");
    st->add_option("--instances", st_o.instances, "seeded instances per kernel check");
    st->add_option("--out", st_o.out);
    st->add_flag("--inject-fault", st_o.inject_fault)->group("");  // test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << app.help();
        return 1;
    }

    try {
        if (app.got_subcommand("summary")) return run_summary(summary_o);
        if (app.got_subcommand("params")) return run_params(params_o);
        if (app.got_subcommand("flops")) return run_flops(flops_o);
        if (app.got_subcommand("compare")) return run_compare(cmp_o);
        if (app.got_subcommand("infer")) return run_infer(inf_o);
        if (app.got_subcommand("bench")) return run_bench(bench_o);
        if (app.got_subcommand("gradcheck")) return run_gradcheck(grad_o);
        if (app.got_subcommand("selftest")) return run_selftest(st_o);
    } catch (const yk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
