#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "yk/common.hpp"
#include "yk/rng.hpp"

namespace yk {

struct Shape4 {
    std::int64_t n = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
               std::to_string(h) + ", " + std::to_string(w) + ")";
    }
};

// Dense rank-4 array, NCHW, row-major. Matrices ride along as (n, c, r, k)
// with the last two dims carrying the matrix and (n, c) as batch dims.
template <class T>
struct TensorT {
    Shape4 shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(Shape4 s, T fill = T(0))
        : shape(s), data(static_cast<size_t>(s.numel()), fill) {
        check(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0, "negative tensor dim");
    }

    std::int64_t numel() const { return shape.numel(); }

    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data[static_cast<size_t>(((n * shape.c + c) * shape.h + h) * shape.w + w)];
    }
    T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data[static_cast<size_t>(((n * shape.c + c) * shape.h + h) * shape.w + w)];
    }

    T* plane(std::int64_t n, std::int64_t c) {
        return data.data() + (n * shape.c + c) * shape.h * shape.w;
    }
    const T* plane(std::int64_t n, std::int64_t c) const {
        return data.data() + (n * shape.c + c) * shape.h * shape.w;
    }

    TensorT reshaped(Shape4 s) const {
        check(s.numel() == numel(), "reshape element-count mismatch");
        TensorT out;
        out.shape = s;
        out.data = data;
        return out;
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor4 = TensorT<float>;
using DTensor = TensorT<double>;

template <class T>
void ensure_finite(const TensorT<T>& t, const char* where) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v)))
            fail(std::string("non-finite value in ") + where);
}

struct ConvParams {
    std::int64_t kh = 1, kw = 1;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t groups = 1;
};

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                 std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Direct convolution. The per-output-element reduction order is fixed:
// kernel rows, kernel cols, then input channel. Threads only split whole
// (batch, out-channel) planes, so results are bit-identical at any thread
// count.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight,
                  const std::vector<std::type_identity_t<T>>* bias, const ConvParams& p) {
    check(p.stride >= 1, "conv2d: stride must be positive");
    check(p.padding >= 0, "conv2d: negative padding");
    check(p.groups >= 1, "conv2d: groups must be positive");
    const std::int64_t c_out = weight.shape.n;
    const std::int64_t c_in = x.shape.c;
    check(weight.shape.h == p.kh && weight.shape.w == p.kw,
          "conv2d: weight spatial dims disagree with ConvParams");
    check(c_in % p.groups == 0 && c_out % p.groups == 0,
          "conv2d: groups must divide both channel counts");
    check(weight.shape.c == c_in / p.groups,
          "conv2d: weight shape " + weight.shape.str() + " incompatible with input " +
              x.shape.str() + " (groups=" + std::to_string(p.groups) + ")");
    if (bias) check(static_cast<std::int64_t>(bias->size()) == c_out, "conv2d: bias length mismatch");
    ensure_finite(x, "conv2d input");

    const std::int64_t out_h = conv_out_dim(x.shape.h, p.kh, p.stride, p.padding);
    const std::int64_t out_w = conv_out_dim(x.shape.w, p.kw, p.stride, p.padding);
    check(out_h >= 1 && out_w >= 1, "conv2d: zero-sized output");

    TensorT<T> out({x.shape.n, c_out, out_h, out_w});
    const std::int64_t cpg_in = c_in / p.groups;
    const std::int64_t cpg_out = c_out / p.groups;
    const std::int64_t h = x.shape.h, w = x.shape.w;

    parallel_for(x.shape.n * c_out, [&](std::int64_t job) {
        const std::int64_t n = job / c_out;
        const std::int64_t co = job % c_out;
        const std::int64_t g = co / cpg_out;
        T* op = out.plane(n, co);
        if (bias) {
            const T b = (*bias)[static_cast<size_t>(co)];
            for (std::int64_t i = 0; i < out_h * out_w; ++i) op[i] = b;
        }
        for (std::int64_t kh = 0; kh < p.kh; ++kh) {
            // valid output rows for this kernel row
            std::int64_t oy_lo = 0;
            while (oy_lo < out_h && oy_lo * p.stride - p.padding + kh < 0) ++oy_lo;
            std::int64_t oy_hi = out_h - 1;
            while (oy_hi >= 0 && oy_hi * p.stride - p.padding + kh >= h) --oy_hi;
            for (std::int64_t kw = 0; kw < p.kw; ++kw) {
                std::int64_t ox_lo = 0;
                while (ox_lo < out_w && ox_lo * p.stride - p.padding + kw < 0) ++ox_lo;
                std::int64_t ox_hi = out_w - 1;
                while (ox_hi >= 0 && ox_hi * p.stride - p.padding + kw >= w) --ox_hi;
                for (std::int64_t ci = 0; ci < cpg_in; ++ci) {
                    const T wv = weight.at(co, ci, kh, kw);
                    const T* ip = x.plane(n, g * cpg_in + ci);
                    for (std::int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                        const std::int64_t iy = oy * p.stride - p.padding + kh;
                        const T* irow = ip + iy * w - p.padding + kw;
                        T* orow = op + oy * out_w;
                        if (p.stride == 1) {
                            for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * irow[ox];
                        } else {
                            for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * irow[ox * p.stride];
                        }
                    }
                }
            }
        }
    });
    ensure_finite(out, "conv2d output");
    return out;
}

struct BnParams {
    std::vector<float> gamma, beta, running_mean, running_var;
    float eps = 1e-3f;
};

template <class T>
TensorT<T> batchnorm2d_infer(const TensorT<T>& x, const std::vector<T>& gamma,
                             const std::vector<T>& beta, const std::vector<T>& mean,
                             const std::vector<T>& var, double eps) {
    const auto c = static_cast<size_t>(x.shape.c);
    check(gamma.size() == c && beta.size() == c && mean.size() == c && var.size() == c,
          "batchnorm: parameter length mismatch");
    for (T v : var) check(static_cast<double>(v) >= 0.0, "batchnorm: negative running variance");

    TensorT<T> out(x.shape);
    const std::int64_t hw = x.shape.h * x.shape.w;
    for (std::int64_t n = 0; n < x.shape.n; ++n) {
        for (std::int64_t ch = 0; ch < x.shape.c; ++ch) {
            const double inv = 1.0 / std::sqrt(static_cast<double>(var[ch]) + eps);
            const T scale = static_cast<T>(static_cast<double>(gamma[ch]) * inv);
            const T shift = static_cast<T>(static_cast<double>(beta[ch]) -
                                           static_cast<double>(gamma[ch]) * inv *
                                               static_cast<double>(mean[ch]));
            const T* ip = x.plane(n, ch);
            T* op = out.plane(n, ch);
            for (std::int64_t i = 0; i < hw; ++i) op[i] = scale * ip[i] + shift;
        }
    }
    ensure_finite(out, "batchnorm output");
    return out;
}

// 1/(1+exp(-x)) with a branch for negative x so exp never overflows
template <class T>
T sigmoid(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
TensorT<T> silu(const TensorT<T>& x) {
    TensorT<T> out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * sigmoid(x.data[i]);
    return out;
}

template <class T>
TensorT<T> maxpool2d(const TensorT<T>& x, std::int64_t k, std::int64_t stride,
                     std::int64_t padding) {
    check(k >= 1, "maxpool2d: degenerate window");
    check(stride >= 1, "maxpool2d: stride must be positive");
    const std::int64_t out_h = conv_out_dim(x.shape.h, k, stride, padding);
    const std::int64_t out_w = conv_out_dim(x.shape.w, k, stride, padding);
    check(out_h >= 1 && out_w >= 1, "maxpool2d: zero-sized output");

    TensorT<T> out({x.shape.n, x.shape.c, out_h, out_w});
    for (std::int64_t n = 0; n < x.shape.n; ++n) {
        for (std::int64_t c = 0; c < x.shape.c; ++c) {
            const T* ip = x.plane(n, c);
            T* op = out.plane(n, c);
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= x.shape.h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox * stride - padding + kx;
                            if (ix < 0 || ix >= x.shape.w) continue;
                            best = std::max(best, ip[iy * x.shape.w + ix]);
                        }
                    }
                    op[oy * out_w + ox] = best;
                }
            }
        }
    }
    ensure_finite(out, "maxpool2d output");
    return out;
}

template <class T>
TensorT<T> upsample_nearest2x(const TensorT<T>& x) {
    TensorT<T> out({x.shape.n, x.shape.c, 2 * x.shape.h, 2 * x.shape.w});
    for (std::int64_t n = 0; n < x.shape.n; ++n)
        for (std::int64_t c = 0; c < x.shape.c; ++c) {
            const T* ip = x.plane(n, c);
            T* op = out.plane(n, c);
            for (std::int64_t y = 0; y < 2 * x.shape.h; ++y)
                for (std::int64_t xx = 0; xx < 2 * x.shape.w; ++xx)
                    op[y * 2 * x.shape.w + xx] = ip[(y / 2) * x.shape.w + xx / 2];
        }
    return out;
}

template <class T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts) {
    check(!parts.empty(), "concat: no inputs");
    const Shape4 s0 = parts[0]->shape;
    std::int64_t c_total = 0;
    for (const auto* p : parts) {
        check(p->shape.n == s0.n && p->shape.h == s0.h && p->shape.w == s0.w,
              "concat: spatial/batch mismatch: " + p->shape.str() + " vs " + s0.str());
        c_total += p->shape.c;
    }
    TensorT<T> out({s0.n, c_total, s0.h, s0.w});
    const std::int64_t hw = s0.h * s0.w;
    for (std::int64_t n = 0; n < s0.n; ++n) {
        std::int64_t co = 0;
        for (const auto* p : parts) {
            for (std::int64_t c = 0; c < p->shape.c; ++c, ++co) {
                const T* ip = p->plane(n, c);
                std::copy(ip, ip + hw, out.plane(n, co));
            }
        }
    }
    return out;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, std::int64_t c0, std::int64_t len) {
    check(c0 >= 0 && len >= 0 && c0 + len <= x.shape.c, "slice_channels: out of range");
    TensorT<T> out({x.shape.n, len, x.shape.h, x.shape.w});
    const std::int64_t hw = x.shape.h * x.shape.w;
    for (std::int64_t n = 0; n < x.shape.n; ++n)
        for (std::int64_t c = 0; c < len; ++c) {
            const T* ip = x.plane(n, c0 + c);
            std::copy(ip, ip + hw, out.plane(n, c));
        }
    return out;
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    check(a.shape == b.shape, "add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    TensorT<T> out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    ensure_finite(out, "add output");
    return out;
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    TensorT<T> out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * s;
    return out;
}

// Row softmax over the last dim, max-subtracted, batched over (n, c, h).
template <class T>
TensorT<T> softmax_lastdim(const TensorT<T>& x) {
    TensorT<T> out(x.shape);
    const std::int64_t rows = x.shape.n * x.shape.c * x.shape.h;
    const std::int64_t d = x.shape.w;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* ip = x.data.data() + r * d;
        T* op = out.data.data() + r * d;
        T mx = ip[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, ip[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            op[j] = std::exp(ip[j] - mx);
            sum += static_cast<double>(op[j]);
        }
        const T inv = static_cast<T>(1.0 / sum);
        for (std::int64_t j = 0; j < d; ++j) op[j] *= inv;
    }
    return out;
}

// Batched matrix product over (n, c) with a fixed k-ascending reduction
// order per output element.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    check(a.shape.n == b.shape.n && a.shape.c == b.shape.c, "matmul: batch dims differ");
    check(a.shape.w == b.shape.h, "matmul: inner dims differ: " + a.shape.str() + " vs " + b.shape.str());
    const std::int64_t rows = a.shape.h, inner = a.shape.w, cols = b.shape.w;
    TensorT<T> out({a.shape.n, a.shape.c, rows, cols});
    const std::int64_t batches = a.shape.n * a.shape.c;
    for (std::int64_t bi = 0; bi < batches; ++bi) {
        const T* ap = a.data.data() + bi * rows * inner;
        const T* bp = b.data.data() + bi * inner * cols;
        T* op = out.data.data() + bi * rows * cols;
        for (std::int64_t i = 0; i < rows; ++i) {
            for (std::int64_t k = 0; k < inner; ++k) {
                const T av = ap[i * inner + k];
                const T* brow = bp + k * cols;
                T* orow = op + i * cols;
                for (std::int64_t j = 0; j < cols; ++j) orow[j] += av * brow[j];
            }
        }
    }
    ensure_finite(out, "matmul output");
    return out;
}

template <class T>
TensorT<T> transpose_last2(const TensorT<T>& x) {
    TensorT<T> out({x.shape.n, x.shape.c, x.shape.w, x.shape.h});
    const std::int64_t batches = x.shape.n * x.shape.c;
    for (std::int64_t bi = 0; bi < batches; ++bi) {
        const T* ip = x.data.data() + bi * x.shape.h * x.shape.w;
        T* op = out.data.data() + bi * x.shape.h * x.shape.w;
        for (std::int64_t i = 0; i < x.shape.h; ++i)
            for (std::int64_t j = 0; j < x.shape.w; ++j)
                op[j * x.shape.h + i] = ip[i * x.shape.w + j];
    }
    return out;
}

// mean over (h, w), row-major accumulation
template <class T>
TensorT<T> global_avgpool(const TensorT<T>& x) {
    check(x.shape.h * x.shape.w >= 1, "global_avgpool: empty spatial dims");
    TensorT<T> out({x.shape.n, x.shape.c, 1, 1});
    const std::int64_t hw = x.shape.h * x.shape.w;
    for (std::int64_t n = 0; n < x.shape.n; ++n)
        for (std::int64_t c = 0; c < x.shape.c; ++c) {
            const T* ip = x.plane(n, c);
            T acc = T(0);
            for (std::int64_t i = 0; i < hw; ++i) acc += ip[i];
            out.at(n, c, 0, 0) = acc / static_cast<T>(hw);
        }
    return out;
}

template <class T>
TensorT<T> random_tensor(Shape4 s, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    TensorT<T> out(s);
    for (auto& v : out.data) v = static_cast<T>(rng.uniform(lo, hi));
    return out;
}

}  // namespace yk
