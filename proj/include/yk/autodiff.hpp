#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "yk/tensor.hpp"

namespace yk::ad {

struct Var {
    int idx = -1;
};

// Tape-based reverse mode over the op set the blocks use. Runs in double
// precision; this is a validation facility, not a training framework.
// Adjoints replay in strict reverse order of recording.
class Tape {
public:
    Var input(const DTensor& v) {
        nodes_.push_back({v, {}, nullptr});
        return {static_cast<int>(nodes_.size()) - 1};
    }

    const DTensor& value(Var v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
    const DTensor& grad(Var v) const { return nodes_[static_cast<size_t>(v.idx)].grad; }

    Var conv2d(Var x, Var w, const std::vector<double>* bias, const ConvParams& p) {
        DTensor out = yk::conv2d(value(x), value(w), bias, p);
        return record(std::move(out), [this, x, w, p](const DTensor& go) {
            const DTensor& xv = value(x);
            const DTensor& wv = value(w);
            DTensor& gx = gradref(x);
            DTensor& gw = gradref(w);
            const std::int64_t cpg_in = xv.shape.c / p.groups;
            const std::int64_t cpg_out = wv.shape.n / p.groups;
            for (std::int64_t n = 0; n < go.shape.n; ++n)
                for (std::int64_t co = 0; co < go.shape.c; ++co) {
                    const std::int64_t g = co / cpg_out;
                    for (std::int64_t oy = 0; oy < go.shape.h; ++oy)
                        for (std::int64_t ox = 0; ox < go.shape.w; ++ox) {
                            const double gv = go.at(n, co, oy, ox);
                            for (std::int64_t kh = 0; kh < p.kh; ++kh) {
                                const std::int64_t iy = oy * p.stride - p.padding + kh;
                                if (iy < 0 || iy >= xv.shape.h) continue;
                                for (std::int64_t kw = 0; kw < p.kw; ++kw) {
                                    const std::int64_t ix = ox * p.stride - p.padding + kw;
                                    if (ix < 0 || ix >= xv.shape.w) continue;
                                    for (std::int64_t ci = 0; ci < cpg_in; ++ci) {
                                        const std::int64_t cin = g * cpg_in + ci;
                                        gx.at(n, cin, iy, ix) += wv.at(co, ci, kh, kw) * gv;
                                        gw.at(co, ci, kh, kw) += xv.at(n, cin, iy, ix) * gv;
                                    }
                                }
                            }
                        }
                }
        });
    }

    Var batchnorm(Var x, std::vector<double> gamma, std::vector<double> beta,
                  std::vector<double> mean, std::vector<double> var, double eps) {
        DTensor out = yk::batchnorm2d_infer(value(x), gamma, beta, mean, var, eps);
        return record(std::move(out), [this, x, gamma = std::move(gamma), var = std::move(var),
                                       eps](const DTensor& go) {
            DTensor& gx = gradref(x);
            const std::int64_t hw = go.shape.h * go.shape.w;
            for (std::int64_t n = 0; n < go.shape.n; ++n)
                for (std::int64_t c = 0; c < go.shape.c; ++c) {
                    const double s = gamma[static_cast<size_t>(c)] /
                                     std::sqrt(var[static_cast<size_t>(c)] + eps);
                    const double* gp = go.plane(n, c);
                    double* xp = gx.plane(n, c);
                    for (std::int64_t i = 0; i < hw; ++i) xp[i] += s * gp[i];
                }
        });
    }

    Var silu(Var x) {
        DTensor out = yk::silu(value(x));
        return record(std::move(out), [this, x](const DTensor& go) {
            const DTensor& xv = value(x);
            DTensor& gx = gradref(x);
            for (size_t i = 0; i < go.data.size(); ++i) {
                const double s = yk::sigmoid(xv.data[i]);
                gx.data[i] += go.data[i] * s * (1.0 + xv.data[i] * (1.0 - s));
            }
        });
    }

    Var maxpool(Var x, std::int64_t k, std::int64_t stride, std::int64_t padding) {
        DTensor out = yk::maxpool2d(value(x), k, stride, padding);
        return record(std::move(out), [this, x, k, stride, padding](const DTensor& go) {
            const DTensor& xv = value(x);
            DTensor& gx = gradref(x);
            for (std::int64_t n = 0; n < go.shape.n; ++n)
                for (std::int64_t c = 0; c < go.shape.c; ++c)
                    for (std::int64_t oy = 0; oy < go.shape.h; ++oy)
                        for (std::int64_t ox = 0; ox < go.shape.w; ++ox) {
                            // route to the first-scanned max cell
                            double best = -std::numeric_limits<double>::infinity();
                            std::int64_t by = -1, bx = -1;
                            for (std::int64_t ky = 0; ky < k; ++ky) {
                                const std::int64_t iy = oy * stride - padding + ky;
                                if (iy < 0 || iy >= xv.shape.h) continue;
                                for (std::int64_t kx = 0; kx < k; ++kx) {
                                    const std::int64_t ix = ox * stride - padding + kx;
                                    if (ix < 0 || ix >= xv.shape.w) continue;
                                    if (xv.at(n, c, iy, ix) > best) {
                                        best = xv.at(n, c, iy, ix);
                                        by = iy;
                                        bx = ix;
                                    }
                                }
                            }
                            if (by >= 0) gx.at(n, c, by, bx) += go.at(n, c, oy, ox);
                        }
        });
    }

    Var upsample2x(Var x) {
        DTensor out = yk::upsample_nearest2x(value(x));
        return record(std::move(out), [this, x](const DTensor& go) {
            DTensor& gx = gradref(x);
            for (std::int64_t n = 0; n < go.shape.n; ++n)
                for (std::int64_t c = 0; c < go.shape.c; ++c)
                    for (std::int64_t y = 0; y < go.shape.h; ++y)
                        for (std::int64_t xx = 0; xx < go.shape.w; ++xx)
                            gx.at(n, c, y / 2, xx / 2) += go.at(n, c, y, xx);
        });
    }

    Var concat(const std::vector<Var>& parts) {
        std::vector<const DTensor*> ptrs;
        for (Var p : parts) ptrs.push_back(&value(p));
        DTensor out = yk::concat_channels(ptrs);
        return record(std::move(out), [this, parts](const DTensor& go) {
            std::int64_t c0 = 0;
            for (Var p : parts) {
                DTensor& gp = gradref(p);
                const std::int64_t pc = gp.shape.c;
                const std::int64_t hw = go.shape.h * go.shape.w;
                for (std::int64_t n = 0; n < go.shape.n; ++n)
                    for (std::int64_t c = 0; c < pc; ++c) {
                        const double* src = go.plane(n, c0 + c);
                        double* dst = gp.plane(n, c);
                        for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
                    }
                c0 += pc;
            }
        });
    }

    Var slice_channels(Var x, std::int64_t c0, std::int64_t len) {
        DTensor out = yk::slice_channels(value(x), c0, len);
        return record(std::move(out), [this, x, c0](const DTensor& go) {
            DTensor& gx = gradref(x);
            const std::int64_t hw = go.shape.h * go.shape.w;
            for (std::int64_t n = 0; n < go.shape.n; ++n)
                for (std::int64_t c = 0; c < go.shape.c; ++c) {
                    const double* src = go.plane(n, c);
                    double* dst = gx.plane(n, c0 + c);
                    for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
                }
        });
    }

    Var add(Var a, Var b) {
        DTensor out = yk::add(value(a), value(b));
        return record(std::move(out), [this, a, b](const DTensor& go) {
            DTensor& ga = gradref(a);
            DTensor& gb = gradref(b);
            for (size_t i = 0; i < go.data.size(); ++i) {
                ga.data[i] += go.data[i];
                gb.data[i] += go.data[i];
            }
        });
    }

    Var scale(Var a, double s) {
        DTensor out = yk::scale(value(a), s);
        return record(std::move(out), [this, a, s](const DTensor& go) {
            DTensor& ga = gradref(a);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += s * go.data[i];
        });
    }

    Var reshape(Var a, Shape4 s) {
        DTensor out = value(a).reshaped(s);
        return record(std::move(out), [this, a](const DTensor& go) {
            DTensor& ga = gradref(a);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
        });
    }

    Var transpose_last2(Var a) {
        DTensor out = yk::transpose_last2(value(a));
        return record(std::move(out), [this, a](const DTensor& go) {
            DTensor gt = yk::transpose_last2(go);
            DTensor& ga = gradref(a);
            for (size_t i = 0; i < gt.data.size(); ++i) ga.data[i] += gt.data[i];
        });
    }

    Var matmul(Var a, Var b) {
        DTensor out = yk::matmul(value(a), value(b));
        return record(std::move(out), [this, a, b](const DTensor& go) {
            DTensor da = yk::matmul(go, yk::transpose_last2(value(b)));
            DTensor db = yk::matmul(yk::transpose_last2(value(a)), go);
            DTensor& ga = gradref(a);
            DTensor& gb = gradref(b);
            for (size_t i = 0; i < da.data.size(); ++i) ga.data[i] += da.data[i];
            for (size_t i = 0; i < db.data.size(); ++i) gb.data[i] += db.data[i];
        });
    }

    Var softmax_lastdim(Var x) {
        DTensor out = yk::softmax_lastdim(value(x));
        const DTensor y = out;
        return record(std::move(out), [this, x, y](const DTensor& go) {
            DTensor& gx = gradref(x);
            const std::int64_t rows = y.shape.n * y.shape.c * y.shape.h;
            const std::int64_t d = y.shape.w;
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* yp = y.data.data() + r * d;
                const double* gp = go.data.data() + r * d;
                double* op = gx.data.data() + r * d;
                double dot = 0.0;
                for (std::int64_t j = 0; j < d; ++j) dot += gp[j] * yp[j];
                for (std::int64_t j = 0; j < d; ++j) op[j] += yp[j] * (gp[j] - dot);
            }
        });
    }

    Var sum(Var x) {
        double acc = 0.0;
        for (double v : value(x).data) acc += v;
        DTensor out({1, 1, 1, 1});
        out.data[0] = acc;
        return record(std::move(out), [this, x](const DTensor& go) {
            DTensor& gx = gradref(x);
            for (auto& v : gx.data) v += go.data[0];
        });
    }

    // Reverse-mode sweep from a scalar output. Fills grad() for every node.
    void backward(Var out) {
        check(value(out).numel() == 1, "grad: output must be a scalar");
        for (auto& n : nodes_) {
            n.grad = DTensor(n.value.shape);
        }
        nodes_[static_cast<size_t>(out.idx)].grad.data[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->back) it->back(it->grad);
    }

private:
    struct Node {
        DTensor value;
        DTensor grad;
        std::function<void(const DTensor&)> back;
    };

    DTensor& gradref(Var v) { return nodes_[static_cast<size_t>(v.idx)].grad; }

    template <class Fn>
    Var record(DTensor&& value, Fn&& back) {
        nodes_.push_back({std::move(value), {}, std::forward<Fn>(back)});
        return {static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

// Builds f on a fresh tape, compares reverse-mode adjoints against central
// differences in double precision, and returns the max relative error
// |analytic - numeric| / max(1e-8, |numeric|) over all input elements.
inline double finite_diff_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                                std::vector<DTensor> xs, double h) {
    check(h > 0.0, "finite_diff_check: h must be positive");

    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.input(x));
    Var out = f(tape, vars);
    check(tape.value(out).numel() == 1, "finite_diff_check: f must be scalar-valued");
    check(std::isfinite(tape.value(out).data[0]), "finite_diff_check: non-finite f");
    tape.backward(out);
    std::vector<DTensor> analytic;
    for (Var v : vars) analytic.push_back(tape.grad(v));

    auto eval = [&](const std::vector<DTensor>& pts) {
        Tape t;
        std::vector<Var> vs;
        for (const auto& p : pts) vs.push_back(t.input(p));
        Var o = f(t, vs);
        const double fv = t.value(o).data[0];
        check(std::isfinite(fv), "finite_diff_check: non-finite f");
        return fv;
    };

    double max_rel = 0.0;
    for (size_t vi = 0; vi < xs.size(); ++vi) {
        for (size_t i = 0; i < xs[vi].data.size(); ++i) {
            const double orig = xs[vi].data[i];
            xs[vi].data[i] = orig + h;
            const double fp = eval(xs);
            xs[vi].data[i] = orig - h;
            const double fm = eval(xs);
            xs[vi].data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double rel = std::abs(analytic[vi].data[i] - numeric) /
                               std::max(1e-8, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

inline double finite_diff_check(const std::function<Var(Tape&, Var)>& f, const DTensor& x,
                                double h) {
    return finite_diff_check(
        [&f](Tape& t, const std::vector<Var>& vs) { return f(t, vs[0]); }, {x}, h);
}

}  // namespace yk::ad
