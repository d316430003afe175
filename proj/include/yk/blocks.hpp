#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "yk/autodiff.hpp"
#include "yk/tensor.hpp"

namespace yk {

// Named view of one stored weight tensor; used by save/load and by the
// parameter counter's enumeration path. BN running stats are persisted but
// not trainable.
struct TensorRef {
    std::string name;
    std::vector<std::int64_t> dims;
    float* data = nullptr;
    std::int64_t numel = 0;
    bool trainable = true;
};

inline void push_ref(std::vector<TensorRef>& out, const std::string& name, Tensor4& t,
                     bool trainable = true) {
    out.push_back({name,
                   {t.shape.n, t.shape.c, t.shape.h, t.shape.w},
                   t.data.data(),
                   t.numel(),
                   trainable});
}

inline void push_ref(std::vector<TensorRef>& out, const std::string& name,
                     std::vector<float>& v, bool trainable = true) {
    out.push_back({name, {static_cast<std::int64_t>(v.size())}, v.data(),
                   static_cast<std::int64_t>(v.size()), trainable});
}

// Forward contexts. Blocks are written once against this interface and run
// either directly on float tensors or recorded onto the double-precision
// tape for finite-difference validation.
struct EvalCtx {
    using V = Tensor4;

    Shape4 shape(const V& x) const { return x.shape; }
    V conv(const V& x, const Tensor4& w, const std::vector<float>* bias, const ConvParams& p) {
        return yk::conv2d(x, w, bias, p);
    }
    V bn(const V& x, const BnParams& b) {
        return yk::batchnorm2d_infer(x, b.gamma, b.beta, b.running_mean, b.running_var,
                                     static_cast<double>(b.eps));
    }
    V silu(const V& x) { return yk::silu(x); }
    V maxpool(const V& x, std::int64_t k, std::int64_t s, std::int64_t p) {
        return yk::maxpool2d(x, k, s, p);
    }
    V upsample2x(const V& x) { return yk::upsample_nearest2x(x); }
    V concat(const std::vector<V>& parts) {
        std::vector<const Tensor4*> ptrs;
        for (const auto& p : parts) ptrs.push_back(&p);
        return yk::concat_channels(ptrs);
    }
    V slice(const V& x, std::int64_t c0, std::int64_t len) {
        return yk::slice_channels(x, c0, len);
    }
    V add(const V& a, const V& b) { return yk::add(a, b); }
    V scale(const V& a, double s) { return yk::scale(a, static_cast<float>(s)); }
    V reshape(const V& a, Shape4 s) { return a.reshaped(s); }
    V transpose_last2(const V& a) { return yk::transpose_last2(a); }
    V matmul(const V& a, const V& b) { return yk::matmul(a, b); }
    V softmax_lastdim(const V& x) { return yk::softmax_lastdim(x); }
    V global_avgpool(const V& x) { return yk::global_avgpool(x); }
};

struct TapeCtx {
    ad::Tape* tape;
    using V = ad::Var;

    Shape4 shape(V x) const { return tape->value(x).shape; }
    V conv(V x, const Tensor4& w, const std::vector<float>* bias, const ConvParams& p) {
        V wv = tape->input(w.cast<double>());
        if (bias) {
            std::vector<double> b(bias->begin(), bias->end());
            return tape->conv2d(x, wv, &b, p);
        }
        return tape->conv2d(x, wv, nullptr, p);
    }
    V bn(V x, const BnParams& b) {
        auto d = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
        return tape->batchnorm(x, d(b.gamma), d(b.beta), d(b.running_mean), d(b.running_var),
                               static_cast<double>(b.eps));
    }
    V silu(V x) { return tape->silu(x); }
    V maxpool(V x, std::int64_t k, std::int64_t s, std::int64_t p) {
        return tape->maxpool(x, k, s, p);
    }
    V upsample2x(V x) { return tape->upsample2x(x); }
    V concat(const std::vector<V>& parts) { return tape->concat(parts); }
    V slice(V x, std::int64_t c0, std::int64_t len) { return tape->slice_channels(x, c0, len); }
    V add(V a, V b) { return tape->add(a, b); }
    V scale(V a, double s) { return tape->scale(a, s); }
    V reshape(V a, Shape4 s) { return tape->reshape(a, s); }
    V transpose_last2(V a) { return tape->transpose_last2(a); }
    V matmul(V a, V b) { return tape->matmul(a, b); }
    V softmax_lastdim(V x) { return tape->softmax_lastdim(x); }
};

inline Tensor4 init_conv_weight(Rng& rng, std::int64_t c_out, std::int64_t c_in_per_group,
                                std::int64_t kh, std::int64_t kw) {
    Tensor4 w({c_out, c_in_per_group, kh, kw});
    const float bound = std::sqrt(1.0f / static_cast<float>(c_in_per_group * kh * kw));
    for (auto& v : w.data) v = rng.uniform(-bound, bound);
    return w;
}

inline BnParams identity_bn(std::int64_t c, float eps = 1e-3f) {
    BnParams b;
    b.gamma.assign(static_cast<size_t>(c), 1.0f);
    b.beta.assign(static_cast<size_t>(c), 0.0f);
    b.running_mean.assign(static_cast<size_t>(c), 0.0f);
    b.running_var.assign(static_cast<size_t>(c), 1.0f);
    b.eps = eps;
    return b;
}

// Conv + BatchNorm + SiLU. Conv bias is folded into BN beta and therefore
// absent. Attention projections reuse this with the activation disabled.
struct Cbs {
    Tensor4 w;
    ConvParams p;
    BnParams bn;
    bool act = true;

    static Cbs make(Rng& rng, std::int64_t c_in, std::int64_t c_out, std::int64_t k,
                    std::int64_t stride = 1, std::int64_t groups = 1, bool act = true) {
        Cbs b;
        b.p = {k, k, stride, k / 2, groups};
        b.w = init_conv_weight(rng, c_out, c_in / groups, k, k);
        b.bn = identity_bn(c_out);
        b.act = act;
        return b;
    }

    std::int64_t out_channels() const { return w.shape.n; }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto y = cx.bn(cx.conv(x, w, nullptr, p), bn);
        return act ? cx.silu(y) : y;
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        push_ref(out, prefix + ".conv.weight", w);
        push_ref(out, prefix + ".bn.gamma", bn.gamma);
        push_ref(out, prefix + ".bn.beta", bn.beta);
        push_ref(out, prefix + ".bn.mean", bn.running_mean, false);
        push_ref(out, prefix + ".bn.var", bn.running_var, false);
    }
};

struct Bottleneck {
    Cbs cv1, cv2;
    bool shortcut = true;

    static Bottleneck make(Rng& rng, std::int64_t c1, std::int64_t c2, bool shortcut,
                           std::int64_t k1 = 3, std::int64_t k2 = 3, double e = 0.5) {
        Bottleneck b;
        const auto c_ = static_cast<std::int64_t>(c2 * e);
        b.cv1 = Cbs::make(rng, c1, c_, k1);
        b.cv2 = Cbs::make(rng, c_, c2, k2);
        b.shortcut = shortcut && c1 == c2;
        return b;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto y = cv2.forward(cx, cv1.forward(cx, x));
        return shortcut ? cx.add(x, y) : y;
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        cv1.collect(prefix + ".cv1", out);
        cv2.collect(prefix + ".cv2", out);
    }
};

// CSP block accumulating every intermediate bottleneck output into the exit
// concat. This is the reference design C3k2 degenerates to when c3k=false.
struct C2f {
    Cbs cv1, cv2;
    std::vector<Bottleneck> units;
    std::int64_t hidden = 0;

    static C2f make(Rng& rng, std::int64_t c1, std::int64_t c2, std::int64_t n, bool shortcut,
                    double e = 0.5) {
        C2f b;
        b.hidden = static_cast<std::int64_t>(c2 * e);
        b.cv1 = Cbs::make(rng, c1, 2 * b.hidden, 1);
        for (std::int64_t i = 0; i < n; ++i)
            b.units.push_back(Bottleneck::make(rng, b.hidden, b.hidden, shortcut, 3, 3, 1.0));
        b.cv2 = Cbs::make(rng, (2 + n) * b.hidden, c2, 1);
        return b;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto y = cv1.forward(cx, x);
        std::vector<typename Ctx::V> parts{cx.slice(y, 0, hidden), cx.slice(y, hidden, hidden)};
        for (const auto& u : units) parts.push_back(u.forward(cx, parts.back()));
        return cv2.forward(cx, cx.concat(parts));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        cv1.collect(prefix + ".cv1", out);
        for (size_t i = 0; i < units.size(); ++i)
            units[i].collect(prefix + ".m" + std::to_string(i), out);
        cv2.collect(prefix + ".cv2", out);
    }
};

// CSP block with a bypass branch and configurable bottleneck kernel size.
struct C3k {
    Cbs cv1, cv2, cv3;
    std::vector<Bottleneck> units;

    static C3k make(Rng& rng, std::int64_t c1, std::int64_t c2, std::int64_t n,
                    std::int64_t k = 3, double e = 0.5) {
        C3k b;
        const auto c_ = static_cast<std::int64_t>(c2 * e);
        b.cv1 = Cbs::make(rng, c1, c_, 1);
        b.cv2 = Cbs::make(rng, c1, c_, 1);
        for (std::int64_t i = 0; i < n; ++i)
            b.units.push_back(Bottleneck::make(rng, c_, c_, true, k, k, 1.0));
        b.cv3 = Cbs::make(rng, 2 * c_, c2, 1);
        return b;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto a = cv1.forward(cx, x);
        for (const auto& u : units) a = u.forward(cx, a);
        auto b = cv2.forward(cx, x);
        return cv3.forward(cx, cx.concat({a, b}));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        cv1.collect(prefix + ".cv1", out);
        cv2.collect(prefix + ".cv2", out);
        for (size_t i = 0; i < units.size(); ++i)
            units[i].collect(prefix + ".m" + std::to_string(i), out);
        cv3.collect(prefix + ".cv3", out);
    }
};

// With c3k=false the computation graph is exactly C2f's; with c3k=true each
// inner unit is a two-bottleneck C3k.
struct C3k2 {
    Cbs cv1, cv2;
    bool c3k = false;
    std::vector<Bottleneck> bn_units;
    std::vector<C3k> c3k_units;
    std::int64_t hidden = 0;

    static C3k2 make(Rng& rng, std::int64_t c1, std::int64_t c2, std::int64_t n, bool c3k,
                     bool shortcut = true, double e = 0.5) {
        C3k2 b;
        b.c3k = c3k;
        b.hidden = static_cast<std::int64_t>(c2 * e);
        b.cv1 = Cbs::make(rng, c1, 2 * b.hidden, 1);
        for (std::int64_t i = 0; i < n; ++i) {
            if (c3k)
                b.c3k_units.push_back(C3k::make(rng, b.hidden, b.hidden, 2, 3));
            else
                b.bn_units.push_back(Bottleneck::make(rng, b.hidden, b.hidden, shortcut, 3, 3, 1.0));
        }
        b.cv2 = Cbs::make(rng, (2 + n) * b.hidden, c2, 1);
        return b;
    }

    std::int64_t unit_count() const {
        return static_cast<std::int64_t>(c3k ? c3k_units.size() : bn_units.size());
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto y = cv1.forward(cx, x);
        std::vector<typename Ctx::V> parts{cx.slice(y, 0, hidden), cx.slice(y, hidden, hidden)};
        if (c3k) {
            for (const auto& u : c3k_units) parts.push_back(u.forward(cx, parts.back()));
        } else {
            for (const auto& u : bn_units) parts.push_back(u.forward(cx, parts.back()));
        }
        return cv2.forward(cx, cx.concat(parts));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        cv1.collect(prefix + ".cv1", out);
        for (size_t i = 0; i < bn_units.size(); ++i)
            bn_units[i].collect(prefix + ".m" + std::to_string(i), out);
        for (size_t i = 0; i < c3k_units.size(); ++i)
            c3k_units[i].collect(prefix + ".m" + std::to_string(i), out);
        cv2.collect(prefix + ".cv2", out);
    }
};

// Three chained equal-kernel stride-1 maxpools; concat of the four stages
// matches parallel pooling with kernels {k, 2k-1, 3k-2}.
struct Sppf {
    Cbs cv1, cv2;
    std::int64_t k = 5;

    static Sppf make(Rng& rng, std::int64_t c1, std::int64_t c2, std::int64_t k = 5) {
        Sppf b;
        b.k = k;
        const std::int64_t c_ = c1 / 2;
        b.cv1 = Cbs::make(rng, c1, c_, 1);
        b.cv2 = Cbs::make(rng, c_ * 4, c2, 1);
        return b;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto x0 = cv1.forward(cx, x);
        auto p1 = cx.maxpool(x0, k, 1, k / 2);
        auto p2 = cx.maxpool(p1, k, 1, k / 2);
        auto p3 = cx.maxpool(p2, k, 1, k / 2);
        return cv2.forward(cx, cx.concat({x0, p1, p2, p3}));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        cv1.collect(prefix + ".cv1", out);
        cv2.collect(prefix + ".cv2", out);
    }
};

// Multi-head attention over spatial positions with a depthwise positional
// conv on the values. head_dim is 64 when channels allow, else one head.
struct Attention {
    Cbs qkv, proj, pe;
    std::int64_t heads = 1, key_dim = 0, head_dim = 0;

    static Attention make(Rng& rng, std::int64_t dim) {
        Attention a;
        a.heads = dim >= 64 ? dim / 64 : 1;
        check(dim % a.heads == 0, "attention: head count must divide channels");
        a.head_dim = dim / a.heads;
        a.key_dim = a.head_dim / 2;
        check(a.key_dim >= 1, "attention: channels too small for key dim");
        const std::int64_t qkv_ch = dim + 2 * a.heads * a.key_dim;
        a.qkv = Cbs::make(rng, dim, qkv_ch, 1, 1, 1, false);
        a.proj = Cbs::make(rng, dim, dim, 1, 1, 1, false);
        a.pe = Cbs::make(rng, dim, dim, 3, 1, dim, false);
        return a;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        const Shape4 s = cx.shape(x);
        const std::int64_t hw = s.h * s.w;
        auto q = qkv.forward(cx, x);
        std::vector<typename Ctx::V> outs, values;
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
        for (std::int64_t hd = 0; hd < heads; ++hd) {
            const std::int64_t base = hd * (2 * key_dim + head_dim);
            auto qh = cx.reshape(cx.slice(q, base, key_dim), {s.n, 1, key_dim, hw});
            auto kh = cx.reshape(cx.slice(q, base + key_dim, key_dim), {s.n, 1, key_dim, hw});
            auto vh = cx.slice(q, base + 2 * key_dim, head_dim);
            auto vm = cx.reshape(vh, {s.n, 1, head_dim, hw});
            // rows are query positions; each row softmaxes to 1
            auto attn = cx.softmax_lastdim(
                cx.scale(cx.matmul(cx.transpose_last2(qh), kh), inv_scale));
            auto om = cx.matmul(vm, cx.transpose_last2(attn));
            outs.push_back(cx.reshape(om, {s.n, head_dim, s.h, s.w}));
            values.push_back(vh);
        }
        auto att = outs.size() == 1 ? outs[0] : cx.concat(outs);
        auto vcat = values.size() == 1 ? values[0] : cx.concat(values);
        auto y = cx.add(att, pe.forward(cx, vcat));
        return proj.forward(cx, y);
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        qkv.collect(prefix + ".qkv", out);
        proj.collect(prefix + ".proj", out);
        pe.collect(prefix + ".pe", out);
    }
};

struct PsaBlock {
    Attention attn;
    Cbs ffn1, ffn2;

    static PsaBlock make(Rng& rng, std::int64_t c) {
        PsaBlock b;
        b.attn = Attention::make(rng, c);
        b.ffn1 = Cbs::make(rng, c, 2 * c, 1);
        b.ffn2 = Cbs::make(rng, 2 * c, c, 1, 1, 1, false);
        return b;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto y = cx.add(x, attn.forward(cx, x));
        return cx.add(y, ffn2.forward(cx, ffn1.forward(cx, y)));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        attn.collect(prefix + ".attn", out);
        ffn1.collect(prefix + ".ffn1", out);
        ffn2.collect(prefix + ".ffn2", out);
    }
};

struct C2psa {
    Cbs cv1, cv2;
    std::vector<PsaBlock> units;
    std::int64_t hidden = 0;

    static C2psa make(Rng& rng, std::int64_t c, std::int64_t n, double e = 0.5) {
        C2psa b;
        b.hidden = static_cast<std::int64_t>(c * e);
        b.cv1 = Cbs::make(rng, c, 2 * b.hidden, 1);
        for (std::int64_t i = 0; i < n; ++i) b.units.push_back(PsaBlock::make(rng, b.hidden));
        b.cv2 = Cbs::make(rng, 2 * b.hidden, c, 1);
        return b;
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& cx, typename Ctx::V x) const {
        auto y = cv1.forward(cx, x);
        auto a = cx.slice(y, 0, hidden);
        auto b = cx.slice(y, hidden, hidden);
        for (const auto& u : units) b = u.forward(cx, b);
        return cv2.forward(cx, cx.concat({a, b}));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        cv1.collect(prefix + ".cv1", out);
        for (size_t i = 0; i < units.size(); ++i)
            units[i].collect(prefix + ".m" + std::to_string(i), out);
        cv2.collect(prefix + ".cv2", out);
    }
};

}  // namespace yk
