#pragma once

#include <chrono>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "yk/model.hpp"

namespace yk {

struct LayerStats {
    int index = 0;
    std::string name;
    std::int64_t params = 0;      // trainable only: conv w/b + BN gamma/beta
    std::int64_t macs = 0;        // multiply-accumulates at the given input size
    std::int64_t elementwise = 0; // BN/activation element ops, kept separate
    Shape4 out_shape;
};

struct AnalysisReport {
    std::vector<LayerStats> layers;
    std::int64_t total_params = 0;
    std::int64_t total_macs = 0;
};

namespace formulas {

// Closed-form parameter counts, derived from hyperparameters only. The
// enumeration path in count_params must agree with these exactly.

inline std::int64_t conv(std::int64_t cin, std::int64_t cout, std::int64_t k,
                         std::int64_t g = 1, bool bn = true, bool bias = false) {
    std::int64_t p = k * k * (cin / g) * cout + (bias ? cout : 0);
    if (bn) p += 2 * cout;
    return p;
}

inline std::int64_t bottleneck(std::int64_t c1, std::int64_t c2, std::int64_t k1,
                               std::int64_t k2, double e) {
    const auto c_ = static_cast<std::int64_t>(c2 * e);
    return conv(c1, c_, k1) + conv(c_, c2, k2);
}

inline std::int64_t c2f(std::int64_t c1, std::int64_t c2, std::int64_t n, double e) {
    const auto h = static_cast<std::int64_t>(c2 * e);
    return conv(c1, 2 * h, 1) + n * bottleneck(h, h, 3, 3, 1.0) + conv((2 + n) * h, c2, 1);
}

inline std::int64_t c3k(std::int64_t c1, std::int64_t c2, std::int64_t n, std::int64_t k,
                        double e) {
    const auto c_ = static_cast<std::int64_t>(c2 * e);
    return conv(c1, c_, 1) * 2 + n * bottleneck(c_, c_, k, k, 1.0) + conv(2 * c_, c2, 1);
}

inline std::int64_t c3k2(std::int64_t c1, std::int64_t c2, std::int64_t n, bool use_c3k,
                         double e) {
    const auto h = static_cast<std::int64_t>(c2 * e);
    const std::int64_t inner = use_c3k ? c3k(h, h, 2, 3, 0.5) : bottleneck(h, h, 3, 3, 1.0);
    return conv(c1, 2 * h, 1) + n * inner + conv((2 + n) * h, c2, 1);
}

inline std::int64_t sppf(std::int64_t c1, std::int64_t c2) {
    const std::int64_t c_ = c1 / 2;
    return conv(c1, c_, 1) + conv(c_ * 4, c2, 1);
}

inline std::int64_t attention(std::int64_t dim) {
    const std::int64_t nh = dim >= 64 ? dim / 64 : 1;
    const std::int64_t hd = dim / nh;
    const std::int64_t kd = hd / 2;
    const std::int64_t qkv_ch = dim + 2 * nh * kd;
    return conv(dim, qkv_ch, 1) + conv(dim, dim, 1) + conv(dim, dim, 3, dim);
}

inline std::int64_t psa(std::int64_t c) {
    return attention(c) + conv(c, 2 * c, 1) + conv(2 * c, c, 1);
}

inline std::int64_t c2psa(std::int64_t c, std::int64_t n) {
    const std::int64_t h = c / 2;
    return conv(c, 2 * h, 1) + n * psa(h) + conv(2 * h, c, 1);
}

inline std::int64_t detect(const std::vector<std::int64_t>& ch, std::int64_t nc, bool dw) {
    const std::int64_t c2 = std::max<std::int64_t>({16, ch[0] / 4, 64});
    const std::int64_t c3 = std::max<std::int64_t>(ch[0], std::min<std::int64_t>(nc, 100));
    std::int64_t total = 0;
    for (std::int64_t c : ch) {
        total += conv(c, c2, 3) + conv(c2, c2, 3) + conv(c2, 4, 1, 1, false, true);
        if (dw) {
            total += conv(c, c, 3, c) + conv(c, c3, 1);
            total += conv(c3, c3, 3, c3) + conv(c3, c3, 1);
        } else {
            total += conv(c, c3, 3) + conv(c3, c3, 3);
        }
        total += conv(c3, 1 + nc, 1, 1, false, true);
    }
    return total;
}

inline std::int64_t classify(std::int64_t cin, std::int64_t c, std::int64_t nc) {
    return conv(cin, c, 1) + conv(c, nc, 1, 1, false, true);
}

}  // namespace formulas

namespace macs {

inline std::int64_t conv(std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t g,
                         std::int64_t oh, std::int64_t ow) {
    return k * k * (cin / g) * cout * oh * ow;
}

inline std::int64_t bottleneck(std::int64_t c1, std::int64_t c2, std::int64_t k,
                               std::int64_t hw) {
    return conv(c1, c2, k, 1, hw, 1) + conv(c2, c2, k, 1, hw, 1);
}

inline std::int64_t attention(std::int64_t dim, std::int64_t hw) {
    const std::int64_t nh = dim >= 64 ? dim / 64 : 1;
    const std::int64_t hd = dim / nh;
    const std::int64_t kd = hd / 2;
    const std::int64_t qkv_ch = dim + 2 * nh * kd;
    std::int64_t m = conv(dim, qkv_ch, 1, 1, hw, 1) + conv(dim, dim, 1, 1, hw, 1) +
                     conv(dim, dim, 3, dim, hw, 1);
    m += nh * (hw * hw * kd + hw * hw * hd);  // score and value products
    return m;
}

}  // namespace macs

// Per-layer parameters (closed form) and MACs at input size h x w.
inline AnalysisReport analyze(const Model& m, std::int64_t h, std::int64_t w) {
    AnalysisReport rep;
    const auto shapes = infer_shapes(m, 1, h, w);
    const Shape4 input{1, 3, h, w};
    auto src_shape = [&](int f) { return f < 0 ? input : shapes[static_cast<size_t>(f)][0]; };

    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i].decl;
        const Shape4 in = src_shape(l.from[0]);
        const Shape4 out = shapes[i][0];
        const std::int64_t hw = out.h * out.w;
        LayerStats st;
        st.index = l.index;
        st.name = module_name(l.module);
        st.out_shape = out;

        switch (l.module) {
            case Module::Conv:
                st.params = formulas::conv(in.c, l.c, l.k);
                st.macs = macs::conv(in.c, l.c, l.k, 1, out.h, out.w);
                st.elementwise = 2 * l.c * hw;
                break;
            case Module::C2f: {
                const auto hid = static_cast<std::int64_t>(l.c * l.e);
                st.params = formulas::c2f(in.c, l.c, l.repeats, l.e);
                st.macs = macs::conv(in.c, 2 * hid, 1, 1, hw, 1) +
                          l.repeats * macs::bottleneck(hid, hid, 3, hw) +
                          macs::conv((2 + l.repeats) * hid, l.c, 1, 1, hw, 1);
                break;
            }
            case Module::C3k2: {
                const auto hid = static_cast<std::int64_t>(l.c * l.e);
                st.params = formulas::c3k2(in.c, l.c, l.repeats, l.c3k, l.e);
                std::int64_t inner;
                if (l.c3k) {
                    const auto c_ = hid / 2;
                    inner = 2 * macs::conv(hid, c_, 1, 1, hw, 1) +
                            2 * macs::bottleneck(c_, c_, 3, hw) +
                            macs::conv(2 * c_, hid, 1, 1, hw, 1);
                } else {
                    inner = macs::bottleneck(hid, hid, 3, hw);
                }
                st.macs = macs::conv(in.c, 2 * hid, 1, 1, hw, 1) + l.repeats * inner +
                          macs::conv((2 + l.repeats) * hid, l.c, 1, 1, hw, 1);
                break;
            }
            case Module::SPPF: {
                const std::int64_t c_ = in.c / 2;
                st.params = formulas::sppf(in.c, l.c);
                st.macs = macs::conv(in.c, c_, 1, 1, hw, 1) +
                          macs::conv(4 * c_, l.c, 1, 1, hw, 1);
                break;
            }
            case Module::C2PSA: {
                const std::int64_t hid = in.c / 2;
                st.params = formulas::c2psa(in.c, l.repeats);
                std::int64_t unit = macs::attention(hid, hw) +
                                    macs::conv(hid, 2 * hid, 1, 1, hw, 1) +
                                    macs::conv(2 * hid, hid, 1, 1, hw, 1);
                st.macs = macs::conv(in.c, 2 * hid, 1, 1, hw, 1) + l.repeats * unit +
                          macs::conv(2 * hid, in.c, 1, 1, hw, 1);
                break;
            }
            case Module::Upsample:
            case Module::Concat:
                break;
            case Module::Detect: {
                std::vector<std::int64_t> chs;
                for (int f : l.from) chs.push_back(src_shape(f).c);
                st.params = formulas::detect(chs, m.spec.num_classes, l.dw);
                const std::int64_t c2 = std::max<std::int64_t>({16, chs[0] / 4, 64});
                const std::int64_t c3 = std::max<std::int64_t>(
                    chs[0], std::min<std::int64_t>(m.spec.num_classes, 100));
                for (size_t b = 0; b < chs.size(); ++b) {
                    const Shape4 s = src_shape(l.from[b]);
                    const std::int64_t bhw = s.h * s.w;
                    st.macs += macs::conv(s.c, c2, 3, 1, bhw, 1) +
                               macs::conv(c2, c2, 3, 1, bhw, 1) +
                               macs::conv(c2, 4, 1, 1, bhw, 1);
                    if (l.dw) {
                        st.macs += macs::conv(s.c, s.c, 3, s.c, bhw, 1) +
                                   macs::conv(s.c, c3, 1, 1, bhw, 1) +
                                   macs::conv(c3, c3, 3, c3, bhw, 1) +
                                   macs::conv(c3, c3, 1, 1, bhw, 1);
                    } else {
                        st.macs += macs::conv(s.c, c3, 3, 1, bhw, 1) +
                                   macs::conv(c3, c3, 3, 1, bhw, 1);
                    }
                    st.macs += macs::conv(c3, 1 + m.spec.num_classes, 1, 1, bhw, 1);
                }
                break;
            }
            case Module::Classify:
                st.params = formulas::classify(in.c, l.c, m.spec.num_classes);
                st.macs = macs::conv(in.c, l.c, 1, 1, in.h * in.w, 1) +
                          l.c * m.spec.num_classes;
                break;
        }
        rep.total_params += st.params;
        rep.total_macs += st.macs;
        rep.layers.push_back(std::move(st));
    }
    return rep;
}

// Parameter counts with the formula/enumeration cross-check. Throws if the
// closed-form walk and the stored-tensor enumeration ever disagree.
inline AnalysisReport count_params(Model& m, std::int64_t h = 640, std::int64_t w = 640) {
    AnalysisReport rep = analyze(m, h, w);
    std::vector<std::int64_t> enumerated(m.layers.size(), 0);
    for (const auto& r : m.tensor_refs()) {
        if (!r.trainable) continue;
        const size_t dot = r.name.find('.');
        const auto idx = static_cast<size_t>(std::stoll(r.name.substr(5, dot - 5)));
        enumerated[idx] += r.numel;
    }
    for (size_t i = 0; i < m.layers.size(); ++i) {
        check(enumerated[i] == rep.layers[i].params,
              "parameter cross-check failed at layer " + std::to_string(i) + " (" +
                  rep.layers[i].name + "): formula " + std::to_string(rep.layers[i].params) +
                  " vs enumeration " + std::to_string(enumerated[i]));
    }
    return rep;
}

struct CompareReport {
    std::int64_t params_a = 0, params_b = 0;
    std::int64_t macs_a = 0, macs_b = 0;
    double param_ratio = 0.0;  // A / B
    double macs_ratio = 0.0;
};

inline CompareReport compare(Model& a, Model& b, std::int64_t h = 640, std::int64_t w = 640) {
    const AnalysisReport ra = count_params(a, h, w);
    const AnalysisReport rb = count_params(b, h, w);
    CompareReport r;
    r.params_a = ra.total_params;
    r.params_b = rb.total_params;
    r.macs_a = ra.total_macs;
    r.macs_b = rb.total_macs;
    r.param_ratio = static_cast<double>(ra.total_params) / static_cast<double>(rb.total_params);
    r.macs_ratio = static_cast<double>(ra.total_macs) / static_cast<double>(rb.total_macs);
    return r;
}

struct BenchResult {
    std::int64_t h = 0, w = 0;
    int iters = 0, warmup = 0;
    double min_ms = 0, median_ms = 0, mean_ms = 0;
};

inline BenchResult bench_forward(const Model& m, std::int64_t h, std::int64_t w, int iters,
                                 int warmup) {
    check(iters >= 1, "bench: iters must be >= 1");
    Rng rng(12345);
    const Tensor4 x = random_tensor<float>({1, 3, h, w}, rng, 0.0f, 1.0f);
    for (int i = 0; i < warmup; ++i) (void)forward(m, x);
    std::vector<double> samples;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)forward(m, x);
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    BenchResult r;
    r.h = h;
    r.w = w;
    r.iters = iters;
    r.warmup = warmup;
    r.min_ms = samples.front();
    r.median_ms = samples[samples.size() / 2];
    r.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) /
                static_cast<double>(samples.size());
    return r;
}

inline std::string summary_table(Model& m, std::int64_t h = 640, std::int64_t w = 640) {
    const AnalysisReport rep = count_params(m, h, w);
    std::ostringstream os;
    os << std::left << std::setw(5) << "idx" << std::setw(14) << "from" << std::setw(10)
       << "module" << std::setw(22) << "output" << std::right << std::setw(12) << "params"
       << std::setw(16) << "macs" << "\n";
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i].decl;
        std::string from;
        for (size_t f = 0; f < l.from.size(); ++f)
            from += (f ? "," : "") + std::to_string(l.from[f]);
        os << std::left << std::setw(5) << l.index << std::setw(14) << from << std::setw(10)
           << module_name(l.module) << std::setw(22) << rep.layers[i].out_shape.str()
           << std::right << std::setw(12) << rep.layers[i].params << std::setw(16)
           << rep.layers[i].macs << "\n";
    }
    os << std::left << std::setw(51) << "total" << std::right << std::setw(12)
       << rep.total_params << std::setw(16) << rep.total_macs << "\n";
    return os.str();
}

inline nlohmann::json report_json(const std::string& name, const std::string& variant,
                                  const AnalysisReport& rep,
                                  const CompareReport* cmp = nullptr) {
    nlohmann::json per_layer = nlohmann::json::array();
    for (const auto& l : rep.layers) {
        per_layer.push_back({{"index", l.index},
                             {"name", l.name},
                             {"params", l.params},
                             {"macs", l.macs},
                             {"output_shape", {l.out_shape.n, l.out_shape.c, l.out_shape.h,
                                               l.out_shape.w}}});
    }
    nlohmann::json j = {{"model",
                         {{"name", name},
                          {"variant", variant},
                          {"params", rep.total_params},
                          {"macs", rep.total_macs}}},
                        {"per_layer", per_layer}};
    if (cmp) {
        j["comparison"] = {{"param_ratio", cmp->param_ratio}, {"macs_ratio", cmp->macs_ratio}};
    }
    return j;
}

}  // namespace yk
