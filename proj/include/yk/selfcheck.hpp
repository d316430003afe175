#pragma once

// Independent oracle implementations and the self-check suites behind the
// `selftest` and `gradcheck` subcommands. Everything here recomputes results
// from first principles and must stay decoupled from the kernel code paths
// it validates.

#include <functional>
#include <string>
#include <vector>

#include "yk/analysis.hpp"
#include "yk/autodiff.hpp"
#include "yk/blocks.hpp"
#include "yk/postprocess.hpp"

namespace yk::oracle {

// Quadruple-loop direct convolution, f32 accumulation in the documented
// (kernel row, kernel col, input channel) order.
inline Tensor4 conv2d(const Tensor4& x, const Tensor4& w, const std::vector<float>* bias,
                      const ConvParams& p) {
    const std::int64_t out_h = conv_out_dim(x.shape.h, p.kh, p.stride, p.padding);
    const std::int64_t out_w = conv_out_dim(x.shape.w, p.kw, p.stride, p.padding);
    const std::int64_t cpg_in = x.shape.c / p.groups;
    const std::int64_t cpg_out = w.shape.n / p.groups;
    Tensor4 out({x.shape.n, w.shape.n, out_h, out_w});
    for (std::int64_t n = 0; n < x.shape.n; ++n)
        for (std::int64_t co = 0; co < w.shape.n; ++co)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    float acc = bias ? (*bias)[static_cast<size_t>(co)] : 0.0f;
                    for (std::int64_t kh = 0; kh < p.kh; ++kh)
                        for (std::int64_t kw = 0; kw < p.kw; ++kw)
                            for (std::int64_t ci = 0; ci < cpg_in; ++ci) {
                                const std::int64_t iy = oy * p.stride - p.padding + kh;
                                const std::int64_t ix = ox * p.stride - p.padding + kw;
                                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w)
                                    continue;
                                acc += w.at(co, ci, kh, kw) *
                                       x.at(n, (co / cpg_out) * cpg_in + ci, iy, ix);
                            }
                    out.at(n, co, oy, ox) = acc;
                }
    return out;
}

inline Tensor4 maxpool2d(const Tensor4& x, std::int64_t k, std::int64_t stride,
                         std::int64_t padding) {
    const std::int64_t out_h = conv_out_dim(x.shape.h, k, stride, padding);
    const std::int64_t out_w = conv_out_dim(x.shape.w, k, stride, padding);
    Tensor4 out({x.shape.n, x.shape.c, out_h, out_w});
    for (std::int64_t n = 0; n < x.shape.n; ++n)
        for (std::int64_t c = 0; c < x.shape.c; ++c)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t iy = oy * stride - padding + ky;
                            const std::int64_t ix = ox * stride - padding + kx;
                            if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w)
                                continue;
                            best = std::max(best, x.at(n, c, iy, ix));
                        }
                    out.at(n, c, oy, ox) = best;
                }
    return out;
}

// Triple-loop product, same k-ascending order per output element.
inline Tensor4 matmul(const Tensor4& a, const Tensor4& b) {
    Tensor4 out({a.shape.n, a.shape.c, a.shape.h, b.shape.w});
    for (std::int64_t bi = 0; bi < a.shape.n * a.shape.c; ++bi)
        for (std::int64_t i = 0; i < a.shape.h; ++i)
            for (std::int64_t j = 0; j < b.shape.w; ++j) {
                float acc = 0.0f;
                for (std::int64_t k = 0; k < a.shape.w; ++k)
                    acc += a.data[(bi * a.shape.h + i) * a.shape.w + k] *
                           b.data[(bi * b.shape.h + k) * b.shape.w + j];
                out.data[(bi * a.shape.h + i) * b.shape.w + j] = acc;
            }
    return out;
}

inline DTensor softmax_lastdim_f64(const Tensor4& x) {
    return yk::softmax_lastdim(x.cast<double>());
}

// Greedy class-aware NMS by repeated max extraction.
inline std::vector<Detection> nms(std::vector<Detection> cands, float iou_thresh) {
    std::vector<bool> used(cands.size(), false);
    std::vector<Detection> kept;
    for (;;) {
        int best = -1;
        for (size_t i = 0; i < cands.size(); ++i) {
            if (used[i]) continue;
            if (best < 0) {
                best = static_cast<int>(i);
                continue;
            }
            const auto& a = cands[i];
            const auto& b = cands[static_cast<size_t>(best)];
            const bool wins = a.score > b.score ||
                              (a.score == b.score &&
                               (a.class_id < b.class_id ||
                                (a.class_id == b.class_id && a.x1 < b.x1)));
            if (wins) best = static_cast<int>(i);
        }
        if (best < 0) break;
        used[static_cast<size_t>(best)] = true;
        const Detection& c = cands[static_cast<size_t>(best)];
        bool ok = true;
        for (const auto& k : kept)
            if (k.class_id == c.class_id && yk::iou(k, c) >= iou_thresh) ok = false;
        if (ok) kept.push_back(c);
    }
    return kept;
}

}  // namespace yk::oracle

namespace yk::selfcheck {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct GradResult {
    std::string name;
    double max_rel_err = 0.0;
};

inline bool bit_equal(const Tensor4& a, const Tensor4& b) {
    if (!(a.shape == b.shape)) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

inline double max_rel_diff(const Tensor4& a, const Tensor4& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::abs(static_cast<double>(a.data[i]) - b.data[i]);
        m = std::max(m, d / std::max(1e-8, std::abs(static_cast<double>(b.data[i]))));
    }
    return m;
}

// The oracle-equivalence suite. fault_hook deliberately mis-wires the
// C3k2/C2f comparison to verify the failure path end to end.
inline std::vector<CheckResult> selftest(int instances = 100, bool fault_hook = false) {
    std::vector<CheckResult> out;

    {  // conv2d vs quadruple-loop oracle, bit-exact
        bool pass = true;
        std::string detail;
        for (int seed = 0; seed < instances && pass; ++seed) {
            Rng rng(1000 + static_cast<std::uint64_t>(seed));
            const std::int64_t groups = (seed % 4 == 3) ? 2 : 1;
            const std::int64_t cin = (1 + static_cast<std::int64_t>(rng.next_u64() % 4)) * groups;
            const std::int64_t cout = (1 + static_cast<std::int64_t>(rng.next_u64() % 4)) * groups;
            const std::int64_t k = 1 + static_cast<std::int64_t>(rng.next_u64() % 3);
            const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.next_u64() % 2);
            const std::int64_t pad = static_cast<std::int64_t>(rng.next_u64() % 2);
            const std::int64_t h = k + static_cast<std::int64_t>(rng.next_u64() % 6);
            const std::int64_t w = k + static_cast<std::int64_t>(rng.next_u64() % 6);
            const auto x = random_tensor<float>({2, cin, h, w}, rng);
            const auto wt = random_tensor<float>({cout, cin / groups, k, k}, rng);
            std::vector<float> bias(static_cast<size_t>(cout));
            for (auto& b : bias) b = rng.uniform(-1, 1);
            const ConvParams p{k, k, stride, pad, groups};
            if (!bit_equal(yk::conv2d(x, wt, &bias, p), oracle::conv2d(x, wt, &bias, p))) {
                pass = false;
                detail = "mismatch at seed " + std::to_string(seed);
            }
        }
        out.push_back({"conv2d-vs-bruteforce", pass, detail});
    }

    {  // maxpool vs oracle, exact
        bool pass = true;
        for (int seed = 0; seed < instances && pass; ++seed) {
            Rng rng(2000 + static_cast<std::uint64_t>(seed));
            const std::int64_t k = 1 + static_cast<std::int64_t>(rng.next_u64() % 5);
            const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.next_u64() % 2);
            const std::int64_t pad = static_cast<std::int64_t>(rng.next_u64() % (k / 2 + 1));
            const std::int64_t h = k + static_cast<std::int64_t>(rng.next_u64() % 6);
            const auto x = random_tensor<float>({1, 2, h, h}, rng);
            if (!bit_equal(yk::maxpool2d(x, k, stride, pad),
                           oracle::maxpool2d(x, k, stride, pad)))
                pass = false;
        }
        out.push_back({"maxpool2d-vs-bruteforce", pass, ""});
    }

    {  // matmul vs triple loop, exact
        bool pass = true;
        for (int seed = 0; seed < instances && pass; ++seed) {
            Rng rng(3000 + static_cast<std::uint64_t>(seed));
            const std::int64_t r = 1 + static_cast<std::int64_t>(rng.next_u64() % 6);
            const std::int64_t k = 1 + static_cast<std::int64_t>(rng.next_u64() % 6);
            const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next_u64() % 6);
            const auto a = random_tensor<float>({1, 2, r, k}, rng);
            const auto b = random_tensor<float>({1, 2, k, c}, rng);
            if (!bit_equal(yk::matmul(a, b), oracle::matmul(a, b))) pass = false;
        }
        out.push_back({"matmul-vs-bruteforce", pass, ""});
    }

    {  // softmax vs f64 oracle, 1e-6 relative
        bool pass = true;
        for (int seed = 0; seed < instances && pass; ++seed) {
            Rng rng(4000 + static_cast<std::uint64_t>(seed));
            const auto x = random_tensor<float>({1, 1, 4, 7}, rng, -5.0f, 5.0f);
            const auto got = yk::softmax_lastdim(x);
            const auto want = oracle::softmax_lastdim_f64(x);
            for (size_t i = 0; i < got.data.size(); ++i) {
                const double rel = std::abs(got.data[i] - want.data[i]) /
                                   std::max(1e-8, std::abs(want.data[i]));
                if (rel > 1e-6) pass = false;
            }
        }
        out.push_back({"softmax-vs-f64", pass, ""});
    }

    {  // NMS vs repeated-extraction oracle, exact
        bool pass = true;
        for (int seed = 0; seed < instances && pass; ++seed) {
            Rng rng(5000 + static_cast<std::uint64_t>(seed));
            std::vector<Detection> cands;
            for (int i = 0; i < 64; ++i) {
                Detection d;
                d.class_id = static_cast<int>(rng.next_u64() % 4);
                d.score = rng.uniform(0.0f, 1.0f);
                d.x1 = rng.uniform(0, 80);
                d.y1 = rng.uniform(0, 80);
                d.x2 = d.x1 + rng.uniform(1, 40);
                d.y2 = d.y1 + rng.uniform(1, 40);
                cands.push_back(d);
            }
            const auto got = yk::nms(cands, 0.45f);
            const auto want = oracle::nms(cands, 0.45f);
            if (got.size() != want.size()) {
                pass = false;
            } else {
                for (size_t i = 0; i < got.size(); ++i)
                    if (got[i].score != want[i].score || got[i].class_id != want[i].class_id ||
                        got[i].x1 != want[i].x1)
                        pass = false;
            }
        }
        out.push_back({"nms-vs-bruteforce", pass, ""});
    }

    {  // C3k2(c3k=false) is structurally C2f: bit-identical outputs
        bool pass = true;
        for (int seed = 0; seed < 50 && pass; ++seed) {
            Rng r1(6000 + static_cast<std::uint64_t>(seed));
            Rng r2(6000 + static_cast<std::uint64_t>(seed));
            const auto a = C3k2::make(r1, 8, 8, 2, false, true);
            const auto b = C2f::make(r2, 8, 8, 2, true);
            Rng rx(7000 + static_cast<std::uint64_t>(seed));
            const auto x = random_tensor<float>({1, 8, 6, 6}, rx);
            EvalCtx cx;
            Tensor4 ya;
            if (fault_hook) {
                // mis-wired split order
                auto y = a.cv1.forward(cx, x);
                std::vector<Tensor4> parts{cx.slice(y, a.hidden, a.hidden),
                                           cx.slice(y, 0, a.hidden)};
                for (const auto& u : a.bn_units) parts.push_back(u.forward(cx, parts.back()));
                ya = a.cv2.forward(cx, cx.concat(parts));
            } else {
                ya = a.forward(cx, x);
            }
            if (!bit_equal(ya, b.forward(cx, x))) pass = false;
        }
        out.push_back({"c3k2-equals-c2f", pass, fault_hook ? "fault hook active" : ""});
    }

    {  // SPPF chained 5x5 pools match parallel {5,9,13} pooling
        bool pass = true;
        for (int seed = 0; seed < 50 && pass; ++seed) {
            Rng rng(8000 + static_cast<std::uint64_t>(seed));
            auto sppf = Sppf::make(rng, 8, 8, 5);
            Rng rx(9000 + static_cast<std::uint64_t>(seed));
            const auto x = random_tensor<float>({1, 8, 7, 7}, rx);
            EvalCtx cx;
            const auto got = sppf.forward(cx, x);
            const auto x0 = sppf.cv1.forward(cx, x);
            const auto p5 = yk::maxpool2d(x0, 5, 1, 2);
            const auto p9 = yk::maxpool2d(x0, 9, 1, 4);
            const auto p13 = yk::maxpool2d(x0, 13, 1, 6);
            const auto spp = sppf.cv2.forward(cx, cx.concat({x0, p5, p9, p13}));
            if (max_rel_diff(got, spp) > 1e-6) pass = false;
        }
        out.push_back({"sppf-equals-spp", pass, ""});
    }

    {  // closed-form param counts vs tensor enumeration
        static const char* kMiniCfg =
            "[meta]\n"
            "task=detect\n"
            "nc=4\n"
            "[scales]\n"
            "n = 0.50, 0.25, 1024\n"
            "[layers]\n"
            "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
            "from=-1 repeats=1 module=Conv args=c=128,k=3,s=2\n"
            "from=-1 repeats=2 module=C3k2 args=c=128,c3k=false,e=0.25\n"
            "from=-1 repeats=1 module=Conv args=c=128,k=3,s=2\n"
            "from=-1 repeats=2 module=C3k2 args=c=128,c3k=true\n"
            "from=-1 repeats=1 module=Conv args=c=256,k=3,s=2\n"
            "from=-1 repeats=3 module=C2f args=c=256,shortcut=true\n"
            "from=-1 repeats=1 module=Conv args=c=256,k=3,s=2\n"
            "from=-1 repeats=1 module=SPPF args=c=256,k=5\n"
            "from=-1 repeats=1 module=C2PSA args=c=256\n"
            "from=4,6,9 repeats=1 module=Detect args=dw=true\n";
        bool pass = true;
        std::string detail;
        try {
            auto model = build_model(apply_scale(parse_config(kMiniCfg), "n"), 7);
            (void)count_params(model);  // throws on any per-layer disagreement
        } catch (const Error& e) {
            pass = false;
            detail = e.what();
        }
        out.push_back({"params-formula-vs-enumeration", pass, detail});
    }

    return out;
}

// Finite-difference validation of every differentiable op and block at small
// shapes. fault_hook corrupts the recorded adjoints of the final item.
inline std::vector<GradResult> gradcheck(std::uint64_t seed, bool fault_hook = false) {
    std::vector<GradResult> out;
    const double h = 1e-3;
    Rng rng(seed);

    auto dtensor = [&](Shape4 s, float lo = -2.0f, float hi = 2.0f) {
        return random_tensor<double>(s, rng, lo, hi);
    };

    // ops
    {
        const auto x = dtensor({1, 2, 4, 4});
        const auto w = dtensor({3, 2, 3, 3});
        out.push_back({"op.conv2d", ad::finite_diff_check(
            [](ad::Tape& t, const std::vector<ad::Var>& v) {
                return t.sum(t.conv2d(v[0], v[1], nullptr, ConvParams{3, 3, 1, 1, 1}));
            },
            {x, w}, h)});
    }
    {
        const auto x = dtensor({1, 3, 4, 4});
        std::vector<double> g{1.1, 0.9, 1.3}, b{0.1, -0.2, 0.3}, mu{0.2, -0.1, 0.0},
            var{1.0, 0.5, 2.0};
        out.push_back({"op.batchnorm", ad::finite_diff_check(
            [&](ad::Tape& t, ad::Var v) { return t.sum(t.batchnorm(v, g, b, mu, var, 1e-3)); },
            x, h)});
    }
    out.push_back({"op.silu", ad::finite_diff_check(
        [](ad::Tape& t, ad::Var v) { return t.sum(t.silu(v)); }, dtensor({1, 2, 4, 4}), h)});
    out.push_back({"op.maxpool", ad::finite_diff_check(
        [](ad::Tape& t, ad::Var v) { return t.sum(t.maxpool(v, 3, 1, 1)); },
        dtensor({1, 2, 5, 5}), h)});
    out.push_back({"op.upsample", ad::finite_diff_check(
        [](ad::Tape& t, ad::Var v) { return t.sum(t.upsample2x(v)); }, dtensor({1, 2, 3, 3}),
        h)});
    {
        const auto a = dtensor({1, 2, 3, 3});
        const auto b = dtensor({1, 3, 3, 3});
        out.push_back({"op.concat", ad::finite_diff_check(
            [](ad::Tape& t, const std::vector<ad::Var>& v) {
                return t.sum(t.silu(t.concat({v[0], v[1]})));
            },
            {a, b}, h)});
    }
    out.push_back({"op.softmax", ad::finite_diff_check(
        [](ad::Tape& t, ad::Var v) { return t.sum(t.silu(t.softmax_lastdim(v))); },
        dtensor({1, 1, 3, 5}), h)});
    {
        const auto a = dtensor({1, 1, 3, 4});
        const auto b = dtensor({1, 1, 4, 5});
        out.push_back({"op.matmul", ad::finite_diff_check(
            [](ad::Tape& t, const std::vector<ad::Var>& v) {
                return t.sum(t.matmul(v[0], v[1]));
            },
            {a, b}, h)});
    }

    // blocks, gradient w.r.t. the input
    auto block_item = [&](const std::string& name, const auto& block, Shape4 in_shape) {
        const auto x = dtensor(in_shape);
        out.push_back({name, ad::finite_diff_check(
            [&block](ad::Tape& t, ad::Var v) {
                TapeCtx cx{&t};
                return t.sum(block.forward(cx, v));
            },
            x, h)});
    };

    Rng wr(seed ^ 0xabcdef);
    block_item("block.cbs", Cbs::make(wr, 3, 4, 3), {1, 3, 5, 5});
    block_item("block.bottleneck", Bottleneck::make(wr, 4, 4, true), {1, 4, 5, 5});
    block_item("block.c2f", C2f::make(wr, 8, 8, 2, true), {1, 8, 4, 4});
    block_item("block.c3k", C3k::make(wr, 8, 8, 2), {1, 8, 4, 4});
    block_item("block.c3k2-plain", C3k2::make(wr, 8, 8, 1, false), {1, 8, 4, 4});
    block_item("block.c3k2-c3k", C3k2::make(wr, 8, 8, 1, true), {1, 8, 4, 4});
    block_item("block.sppf", Sppf::make(wr, 8, 8, 5), {1, 8, 5, 5});
    block_item("block.attention", Attention::make(wr, 8), {1, 8, 4, 4});
    block_item("block.psa", PsaBlock::make(wr, 8), {1, 8, 4, 4});
    block_item("block.c2psa", C2psa::make(wr, 8, 1), {1, 8, 4, 4});

    if (fault_hook) {
        // real corruption of the adjoint data path: scale the recorded
        // analytic gradient, then run the same comparison
        const auto x = dtensor({1, 2, 3, 3});
        ad::Tape t;
        const ad::Var xin = t.input(x);
        t.backward(t.sum(t.silu(xin)));
        DTensor analytic = t.grad(xin);
        for (auto& v : analytic.data) v *= 1.05;
        double max_rel = 0.0;
        DTensor probe = x;
        for (size_t i = 0; i < probe.data.size(); ++i) {
            auto eval = [&](double delta) {
                DTensor p = probe;
                p.data[i] += delta;
                ad::Tape tt;
                return tt.value(tt.sum(tt.silu(tt.input(p)))).data[0];
            };
            const double numeric = (eval(h) - eval(-h)) / (2 * h);
            max_rel = std::max(max_rel, std::abs(analytic.data[i] - numeric) /
                                            std::max(1e-8, std::abs(numeric)));
        }
        out.push_back({"fault-injection", max_rel});
    }

    return out;
}

}  // namespace yk::selfcheck
