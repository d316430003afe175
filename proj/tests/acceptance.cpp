// Acceptance suite: one line per criterion, PASS/FAIL, nonzero exit on any
// failure. Runs against the shipped configs and the CLI binary.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "yk/analysis.hpp"
#include "yk/image_io.hpp"
#include "yk/model.hpp"
#include "yk/postprocess.hpp"
#include "yk/selfcheck.hpp"

using namespace yk;

namespace {

const std::string kConfigDir = YK_CONFIG_DIR;
const std::string kCli = YK_CLI_PATH;

int failures = 0;

void report(int idx, const std::string& name, bool pass, const std::string& detail = "") {
    std::cout << (pass ? "PASS" : "FAIL") << " [" << idx << "] " << name;
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << std::endl;
    if (!pass) ++failures;
}

template <class Fn>
void criterion(int idx, const std::string& name, Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        report(idx, name, false, std::string("exception: ") + e.what());
    }
}

Model build(const std::string& file, const std::string& variant, std::uint64_t seed = 0) {
    return build_model(
        apply_scale(parse_config(read_file(kConfigDir + "/" + file)), variant), seed);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int shell(const std::string& cmd) { return WEXITSTATUS(std::system(cmd.c_str())); }

bool maps_equal(const RawPredictions& a, const RawPredictions& b) {
    if (a.maps.size() != b.maps.size()) return false;
    for (size_t i = 0; i < a.maps.size(); ++i) {
        if (!(a.maps[i].shape == b.maps[i].shape)) return false;
        for (size_t j = 0; j < a.maps[i].data.size(); ++j)
            if (a.maps[i].data[j] != b.maps[i].data[j]) return false;
    }
    return true;
}

// forward pass that records the observed output shape of every layer
std::vector<std::vector<Shape4>> observed_shapes(const Model& m, const Tensor4& x) {
    std::vector<std::vector<Shape4>> obs(m.layers.size());
    std::vector<Tensor4> cache(m.layers.size());
    EvalCtx cx;
    auto src = [&](int f) -> const Tensor4& {
        return f < 0 ? x : cache[static_cast<size_t>(f)];
    };
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& decl = m.layers[i].decl;
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, layers::Conv>) {
                    cache[i] = l.cbs.forward(cx, src(decl.from[0]));
                } else if constexpr (std::is_same_v<T, layers::C3k2L> ||
                                     std::is_same_v<T, layers::C2fL> ||
                                     std::is_same_v<T, layers::SppfL> ||
                                     std::is_same_v<T, layers::C2psaL>) {
                    cache[i] = l.block.forward(cx, src(decl.from[0]));
                } else if constexpr (std::is_same_v<T, layers::UpsampleL>) {
                    cache[i] = upsample_nearest2x(src(decl.from[0]));
                } else if constexpr (std::is_same_v<T, layers::ConcatL>) {
                    std::vector<const Tensor4*> parts;
                    for (int f : decl.from) parts.push_back(&src(f));
                    cache[i] = concat_channels(parts);
                } else if constexpr (std::is_same_v<T, layers::DetectL>) {
                    for (size_t b = 0; b < l.branches.size(); ++b) {
                        const auto& br = l.branches[b];
                        const Tensor4& in = src(decl.from[b]);
                        Tensor4 box =
                            conv2d(br.box2.forward(cx, br.box1.forward(cx, in)), br.box_w,
                                   &br.box_b, ConvParams{1, 1, 1, 0, 1});
                        Tensor4 c = in;
                        for (const auto& stage : br.cls) c = stage.forward(cx, c);
                        Tensor4 cls = conv2d(c, br.cls_w, &br.cls_b, ConvParams{1, 1, 1, 0, 1});
                        obs[i].push_back(concat_channels<float>({&box, &cls}).shape);
                    }
                } else if constexpr (std::is_same_v<T, layers::ClassifyL>) {
                    Tensor4 y = global_avgpool(l.pre.forward(cx, src(decl.from[0])));
                    obs[i].push_back(
                        conv2d(y, l.fc_w, &l.fc_b, ConvParams{1, 1, 1, 0, 1}).shape);
                }
            },
            m.layers[i].impl);
        if (obs[i].empty()) obs[i].push_back(cache[i].shape);
    }
    return obs;
}

}  // namespace

int main() {
    criterion(1, "param_ratio of v11-m vs v8-m in [0.75, 0.81]", [] {
        auto a = build("yolo11-detect.cfg", "m");
        auto b = build("yolov8-ref.cfg", "m");
        const double ratio = compare(a, b).param_ratio;
        std::ostringstream os;
        os << "ratio = " << ratio;
        report(1, "param_ratio of v11-m vs v8-m in [0.75, 0.81]",
               ratio > 0.75 && ratio < 0.81, os.str());
    });

    criterion(2, "absolute totals within 5% of 20.1M / 25.9M", [] {
        auto a = build("yolo11-detect.cfg", "m");
        auto b = build("yolov8-ref.cfg", "m");
        const auto pa = count_params(a).total_params;
        const auto pb = count_params(b).total_params;
        const bool ok = std::abs(static_cast<double>(pa) / 20.1e6 - 1.0) < 0.05 &&
                        std::abs(static_cast<double>(pb) / 25.9e6 - 1.0) < 0.05;
        report(2, "absolute totals within 5% of 20.1M / 25.9M", ok,
               std::to_string(pa) + " / " + std::to_string(pb));
    });

    criterion(3, "C3k2(c3k=false) bit-identical to C2f over 50 seeds", [] {
        bool ok = true;
        for (int seed = 0; seed < 50 && ok; ++seed) {
            Rng r1(9000 + seed), r2(9000 + seed);
            const auto a = C3k2::make(r1, 16, 16, 2, false, true);
            const auto b = C2f::make(r2, 16, 16, 2, true);
            Rng rx(9500 + seed);
            const auto x = random_tensor<float>({1, 16, 8, 8}, rx);
            EvalCtx cx;
            if (!selfcheck::bit_equal(a.forward(cx, x), b.forward(cx, x))) ok = false;
        }
        report(3, "C3k2(c3k=false) bit-identical to C2f over 50 seeds", ok);
    });

    criterion(4, "SPPF chained 5x5 pools equal 9x9/13x13 pools on 100 inputs", [] {
        bool ok = true;
        for (int seed = 0; seed < 100 && ok; ++seed) {
            Rng rng(seed);
            const auto x = random_tensor<float>({1, 4, 9, 9}, rng);
            const auto p5 = maxpool2d(x, 5, 1, 2);
            if (!selfcheck::bit_equal(maxpool2d(p5, 5, 1, 2), maxpool2d(x, 9, 1, 4))) ok = false;
            if (!selfcheck::bit_equal(maxpool2d(maxpool2d(p5, 5, 1, 2), 5, 1, 2),
                                      maxpool2d(x, 13, 1, 6)))
                ok = false;
        }
        report(4, "SPPF chained 5x5 pools equal 9x9/13x13 pools on 100 inputs", ok);
    });

    criterion(5, "kernel brute-force oracles over 100 seeded instances", [] {
        bool ok = true;
        std::string detail;
        for (const auto& r : selfcheck::selftest(100)) {
            if (!r.pass) {
                ok = false;
                detail += r.name + " ";
            }
        }
        report(5, "kernel brute-force oracles over 100 seeded instances", ok, detail);
    });

    criterion(6, "gradcheck: every op and block < 1e-4", [] {
        bool ok = true;
        double worst = 0;
        for (const auto& r : selfcheck::gradcheck(0)) {
            worst = std::max(worst, r.max_rel_err);
            if (!(r.max_rel_err < 1e-4)) ok = false;
        }
        std::ostringstream os;
        os << "worst = " << worst;
        report(6, "gradcheck: every op and block < 1e-4", ok, os.str());
    });

    criterion(7, "shape contract at 640 for all five variants", [] {
        bool ok = true;
        std::string detail;
        for (const char* v : {"n", "s", "m", "l", "x"}) {
            auto m = build("yolo11-detect.cfg", v);
            Rng rng(1);
            const auto x = random_tensor<float>({1, 3, 640, 640}, rng, 0.0f, 1.0f);
            const auto want = infer_shapes(m, 1, 640, 640);
            const auto got = observed_shapes(m, x);
            for (size_t i = 0; i < want.size() && ok; ++i)
                if (got[i] != want[i]) {
                    ok = false;
                    detail = std::string(v) + " layer " + std::to_string(i);
                }
            const auto& det = got.back();
            if (det.size() != 3 || det[0].h != 80 || det[1].h != 40 || det[2].h != 20) {
                ok = false;
                detail = std::string(v) + " detect grids";
            }
        }
        report(7, "shape contract at 640 for all five variants", ok, detail);
    });

    criterion(8, "params strictly increase n<s<m<l<x for both configs", [] {
        bool ok = true;
        for (const char* cfg : {"yolo11-detect.cfg", "yolov8-ref.cfg"}) {
            std::int64_t prev = 0;
            for (const char* v : {"n", "s", "m", "l", "x"}) {
                auto m = build(cfg, v);
                const auto p = count_params(m).total_params;
                if (p <= prev) ok = false;
                prev = p;
            }
        }
        report(8, "params strictly increase n<s<m<l<x for both configs", ok);
    });

    criterion(9, "infer determinism and save/load bit-exactness", [] {
        // CLI determinism on a generated fixture
        std::string ppm = "P6\n96 64\n255\n";
        Rng prng(31);
        for (int i = 0; i < 96 * 64 * 3; ++i)
            ppm.push_back(static_cast<char>(prng.next_u64() % 256));
        write_file("acc_fixture.ppm", ppm);
        const std::string flags = " infer --config " + kConfigDir +
                                  "/yolo11-detect.cfg --variant n --image acc_fixture.ppm"
                                  " --imgsz 320 --conf 0.01";
        const int c1 = shell(kCli + flags + " --out acc_run1.txt 2>/dev/null");
        const int c2 = shell(kCli + flags + " --out acc_run2.txt 2>/dev/null");
        bool ok = c1 == 0 && c2 == 0 && slurp("acc_run1.txt") == slurp("acc_run2.txt") &&
                  !slurp("acc_run1.txt").empty();

        // save/load round trip preserves forward output bit-exactly
        auto m = build("yolo11-detect.cfg", "n", 3);
        Rng rng(7);
        const auto x = random_tensor<float>({1, 3, 320, 320}, rng, 0.0f, 1.0f);
        const auto before = forward(m, x);
        const auto bytes = save_weights(m);
        auto other = build("yolo11-detect.cfg", "n", 4);
        load_weights(other, bytes);
        if (!maps_equal(forward(other, x), before)) ok = false;
        report(9, "infer determinism and save/load bit-exactness", ok);
    });

    criterion(10, "median forward latency n < m < x at 640", [] {
        auto n = build("yolo11-detect.cfg", "n");
        auto m = build("yolo11-detect.cfg", "m");
        auto x = build("yolo11-detect.cfg", "x");
        const double tn = bench_forward(n, 640, 640, 3, 1).median_ms;
        const double tm = bench_forward(m, 640, 640, 1, 0).median_ms;
        const double tx = bench_forward(x, 640, 640, 1, 0).median_ms;
        std::ostringstream os;
        os << tn << " < " << tm << " < " << tx << " ms";
        report(10, "median forward latency n < m < x at 640", tn < tm && tm < tx, os.str());
    });

    if (failures) std::cout << failures << " criterion(s) failed" << std::endl;
    return failures ? 1 : 0;
}
