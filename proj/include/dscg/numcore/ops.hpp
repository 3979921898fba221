#pragma once

// Differentiable primitives on a Tape. Matrices are rank-2 [rows x cols],
// vectors rank-1 [n], scalars shape {1}. Each op computes its value eagerly
// and records a backward rule receiving d loss / d output.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dscg/numcore/tape.hpp"

namespace dscg::ops {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kScaleNormEps = 1e-8;

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw DimensionError(what);
}

inline void require_same_tape(const Var& a, const Var& b) {
    if (a.tape != b.tape) throw ContractError("ops: operands on different tapes");
}

inline void require_matrix(const Var& v, const char* op) {
    require(v.value().rank() == 2, std::string(op) + ": expected matrix, got " + shape_str(v.shape()));
}

} // namespace detail

/// W x + b for a single vector.
inline Var affine(const Var& W, const Var& b, const Var& x) {
    detail::require_same_tape(W, b);
    detail::require_same_tape(W, x);
    const Tensor& w = W.value();
    const Tensor& bv = b.value();
    const Tensor& xv = x.value();
    detail::require(w.rank() == 2 && xv.rank() == 1 && bv.rank() == 1 && w.shape()[1] == xv.size() &&
                        w.shape()[0] == bv.size(),
                    "affine: shapes " + shape_str(w.shape()) + " " + shape_str(bv.shape()) + " " +
                        shape_str(xv.shape()) + " do not conform");
    const std::size_t m = w.shape()[0], n = w.shape()[1];
    std::vector<double> out(m);
    for (std::size_t r = 0; r < m; ++r) {
        double acc = bv[r];
        for (std::size_t c = 0; c < n; ++c) acc += w.at(r, c) * xv[c];
        out[r] = acc;
    }
    Tape& t = *W.tape;
    const bool rg = t.requires_grad(W) || t.requires_grad(b) || t.requires_grad(x);
    const std::size_t wi = W.id, bi = b.id, xi = x.id;
    return t.record(Tensor({m}, std::move(out)), rg, [wi, bi, xi, m, n](Tape& tp, std::span<const double> g) {
        const auto& w = tp.value(wi).data();
        const auto& xv = tp.value(xi).data();
        if (tp.requires_grad(wi)) {
            auto gw = tp.grad(wi);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) gw[r * n + c] += g[r] * xv[c];
        }
        if (tp.requires_grad(bi)) {
            auto gb = tp.grad(bi);
            for (std::size_t r = 0; r < m; ++r) gb[r] += g[r];
        }
        if (tp.requires_grad(xi)) {
            auto gx = tp.grad(xi);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) gx[c] += g[r] * w[r * n + c];
        }
    });
}

/// Row-wise X W^T (+ b): X [N x in], W [out x in], b [out].
inline Var linear(const Var& X, const Var& W, const Var* b = nullptr) {
    detail::require_same_tape(X, W);
    detail::require_matrix(X, "linear");
    detail::require_matrix(W, "linear");
    const Tensor& x = X.value();
    const Tensor& w = W.value();
    const std::size_t N = x.shape()[0], in = x.shape()[1], out = w.shape()[0];
    detail::require(w.shape()[1] == in, "linear: input width " + std::to_string(in) + " vs weight " +
                                            shape_str(w.shape()));
    if (b) {
        detail::require_same_tape(X, *b);
        detail::require(b->value().rank() == 1 && b->value().size() == out,
                        "linear: bias " + shape_str(b->shape()) + " vs output width " + std::to_string(out));
    }
    std::vector<double> y(N * out);
    const auto xd = x.data();
    const auto wd = w.data();
    for (std::size_t n = 0; n < N; ++n) {
        const double* xr = xd.data() + n * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = wd.data() + o * in;
            double acc = b ? b->value()[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
            y[n * out + o] = acc;
        }
    }
    Tape& t = *X.tape;
    const bool rg = t.requires_grad(X) || t.requires_grad(W) || (b && t.requires_grad(*b));
    const std::size_t xi = X.id, wi = W.id;
    const std::size_t bi = b ? b->id : std::numeric_limits<std::size_t>::max();
    return t.record(Tensor({N, out}, std::move(y)), rg, [xi, wi, bi, N, in, out](Tape& tp, std::span<const double> g) {
        const auto xd = tp.value(xi).data();
        const auto wd = tp.value(wi).data();
        if (tp.requires_grad(xi)) {
            auto gx = tp.grad(xi);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < out; ++o) {
                    const double go = g[n * out + o];
                    if (go == 0.0) continue;
                    const double* wr = wd.data() + o * in;
                    double* gr = gx.data() + n * in;
                    for (std::size_t i = 0; i < in; ++i) gr[i] += go * wr[i];
                }
        }
        if (tp.requires_grad(wi)) {
            auto gw = tp.grad(wi);
            for (std::size_t n = 0; n < N; ++n) {
                const double* xr = xd.data() + n * in;
                for (std::size_t o = 0; o < out; ++o) {
                    const double go = g[n * out + o];
                    if (go == 0.0) continue;
                    double* gr = gw.data() + o * in;
                    for (std::size_t i = 0; i < in; ++i) gr[i] += go * xr[i];
                }
            }
        }
        if (bi != std::numeric_limits<std::size_t>::max() && tp.requires_grad(bi)) {
            auto gb = tp.grad(bi);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < out; ++o) gb[o] += g[n * out + o];
        }
    });
}

inline Var linear(const Var& X, const Var& W, const Var& b) { return linear(X, W, &b); }

/// Same shape view with a different shape.
inline Var reshape(const Var& x, Shape shape) {
    detail::require(shape_size(shape) == x.value().size(),
                    "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tape& t = *x.tape;
    const std::size_t xi = x.id;
    return t.record(x.value().reshaped(std::move(shape)), t.requires_grad(x), [xi](Tape& tp, std::span<const double> g) {
        auto gx = tp.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

namespace detail {

template <class Fwd, class Bwd>
Var binary_elementwise(const Var& a, const Var& b, const char* name, Fwd fwd, Bwd bwd) {
    require_same_tape(a, b);
    require(a.shape() == b.shape(),
            std::string(name) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
    const auto ad = a.value().data();
    const auto bd = b.value().data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    const std::size_t ai = a.id, bi = b.id;
    return t.record(Tensor(a.shape(), std::move(out)), rg, [ai, bi, bwd](Tape& tp, std::span<const double> g) {
        const auto ad = tp.value(ai).data();
        const auto bd = tp.value(bi).data();
        const bool ga = tp.requires_grad(ai), gb = tp.requires_grad(bi);
        std::span<double> gav, gbv;
        if (ga) gav = tp.grad(ai);
        if (gb) gbv = tp.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double da = 0, db = 0;
            bwd(ad[i], bd[i], g[i], da, db);
            if (ga) gav[i] += da;
            if (gb) gbv[i] += db;
        }
    });
}

} // namespace detail

inline Var add(const Var& a, const Var& b) {
    return detail::binary_elementwise(a, b, "add", [](double x, double y) { return x + y; },
                                      [](double, double, double g, double& da, double& db) { da = g; db = g; });
}

inline Var sub(const Var& a, const Var& b) {
    return detail::binary_elementwise(a, b, "sub", [](double x, double y) { return x - y; },
                                      [](double, double, double g, double& da, double& db) { da = g; db = -g; });
}

inline Var mul(const Var& a, const Var& b) {
    return detail::binary_elementwise(a, b, "mul", [](double x, double y) { return x * y; },
                                      [](double x, double y, double g, double& da, double& db) {
                                          da = g * y;
                                          db = g * x;
                                      });
}

/// 1 - x elementwise.
inline Var one_minus(const Var& x) {
    const auto xd = x.value().data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - xd[i];
    Tape& t = *x.tape;
    const std::size_t xi = x.id;
    return t.record(Tensor(x.shape(), std::move(out)), t.requires_grad(x), [xi](Tape& tp, std::span<const double> g) {
        auto gx = tp.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
    });
}

inline Var scale(const Var& x, double s) {
    const auto xd = x.value().data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * xd[i];
    Tape& t = *x.tape;
    const std::size_t xi = x.id;
    return t.record(Tensor(x.shape(), std::move(out)), t.requires_grad(x), [xi, s](Tape& tp, std::span<const double> g) {
        auto gx = tp.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    });
}

/// ReLU with the subgradient 0 at exactly 0.
inline Var relu(const Var& x) {
    Tape& t = *x.tape;
    const auto xd = x.value().data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
        t.note_branch(xd[i] > 0.0, std::abs(xd[i]));
    }
    const std::size_t xi = x.id;
    return t.record(Tensor(x.shape(), std::move(out)), t.requires_grad(x), [xi](Tape& tp, std::span<const double> g) {
        const auto xd = tp.value(xi).data();
        auto gx = tp.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xd[i] > 0.0) gx[i] += g[i];
    });
}

inline Var sigmoid(const Var& x) {
    const auto xd = x.value().data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Split by sign so exp never overflows.
        out[i] = xd[i] >= 0 ? 1.0 / (1.0 + std::exp(-xd[i])) : std::exp(xd[i]) / (1.0 + std::exp(xd[i]));
    }
    Tape& t = *x.tape;
    const std::size_t xi = x.id;
    const std::size_t yi = t.size();
    return t.record(Tensor(x.shape(), std::move(out)), t.requires_grad(x), [xi, yi](Tape& tp, std::span<const double> g) {
        const auto yd = tp.value(yi).data();
        auto gx = tp.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yd[i] * (1.0 - yd[i]);
    });
}

/// Rows of X selected by index (repeats allowed).
inline Var gather_rows(const Var& X, std::vector<std::size_t> index) {
    detail::require_matrix(X, "gather_rows");
    const Tensor& x = X.value();
    const std::size_t R = x.shape()[0], C = x.shape()[1];
    detail::require(!index.empty(), "gather_rows: empty index");
    std::vector<double> out(index.size() * C);
    for (std::size_t k = 0; k < index.size(); ++k) {
        detail::require(index[k] < R, "gather_rows: row " + std::to_string(index[k]) + " out of " + std::to_string(R));
        std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(index[k] * C), C, out.begin() + static_cast<std::ptrdiff_t>(k * C));
    }
    Tape& t = *X.tape;
    const std::size_t xi = X.id;
    const std::size_t K = index.size();
    return t.record(Tensor({K, C}, std::move(out)), t.requires_grad(X),
                    [xi, C, index = std::move(index)](Tape& tp, std::span<const double> g) {
                        auto gx = tp.grad(xi);
                        for (std::size_t k = 0; k < index.size(); ++k)
                            for (std::size_t c = 0; c < C; ++c) gx[index[k] * C + c] += g[k * C + c];
                    });
}

/// Column-wise concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
    detail::require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t R = parts[0].value().rows();
    std::vector<std::size_t> widths, offsets;
    std::size_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        detail::require_same_tape(parts[0], p);
        detail::require_matrix(p, "concat_cols");
        detail::require(p.value().rows() == R, "concat_cols: row count mismatch");
        offsets.push_back(total);
        widths.push_back(p.value().cols());
        total += p.value().cols();
        rg = rg || p.tape->requires_grad(p);
    }
    std::vector<double> out(R * total);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto d = parts[k].value().data();
        for (std::size_t r = 0; r < R; ++r)
            std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                        out.begin() + static_cast<std::ptrdiff_t>(r * total + offsets[k]));
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id);
    Tape& t = *parts[0].tape;
    return t.record(Tensor({R, total}, std::move(out)), rg,
                    [ids, widths, offsets, R, total](Tape& tp, std::span<const double> g) {
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (!tp.requires_grad(ids[k])) continue;
                            auto gp = tp.grad(ids[k]);
                            for (std::size_t r = 0; r < R; ++r)
                                for (std::size_t c = 0; c < widths[k]; ++c)
                                    gp[r * widths[k] + c] += g[r * total + offsets[k] + c];
                        }
                    });
}

/// Per-row, per-head scaled dot products: out[e,h] = s * <A[e, h-slice], B[e, h-slice]>.
inline Var head_dot(const Var& A, const Var& B, std::size_t heads, double s) {
    detail::require_same_tape(A, B);
    detail::require_matrix(A, "head_dot");
    detail::require(A.shape() == B.shape(), "head_dot: operand shapes differ");
    const std::size_t E = A.value().rows(), D = A.value().cols();
    detail::require(heads >= 1 && D % heads == 0, "head_dot: width not divisible by head count");
    const std::size_t dh = D / heads;
    const auto ad = A.value().data();
    const auto bd = B.value().data();
    std::vector<double> out(E * heads);
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t h = 0; h < heads; ++h) {
            double acc = 0;
            for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) acc += ad[e * D + c] * bd[e * D + c];
            out[e * heads + h] = s * acc;
        }
    Tape& t = *A.tape;
    const bool rg = t.requires_grad(A) || t.requires_grad(B);
    const std::size_t ai = A.id, bi = B.id;
    return t.record(Tensor({E, heads}, std::move(out)), rg, [ai, bi, E, D, heads, dh, s](Tape& tp, std::span<const double> g) {
        const auto ad = tp.value(ai).data();
        const auto bd = tp.value(bi).data();
        const bool ga = tp.requires_grad(ai), gb = tp.requires_grad(bi);
        std::span<double> gav, gbv;
        if (ga) gav = tp.grad(ai);
        if (gb) gbv = tp.grad(bi);
        for (std::size_t e = 0; e < E; ++e)
            for (std::size_t h = 0; h < heads; ++h) {
                const double go = s * g[e * heads + h];
                if (go == 0.0) continue;
                for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
                    if (ga) gav[e * D + c] += go * bd[e * D + c];
                    if (gb) gbv[e * D + c] += go * ad[e * D + c];
                }
            }
    });
}

/// Attention-weighted sum of per-edge values into destination rows:
/// out[dst[e], h-slice] += alpha[e,h] * V[e, h-slice].
///
/// Edges whose weight is exactly zero are skipped in both directions for the
/// value path, so zero-weight messages cost nothing and cannot perturb the
/// accumulation order of the remaining ones.
inline Var weighted_scatter(const Var& alpha, const Var& V, const std::vector<std::size_t>& dst, std::size_t n_rows) {
    detail::require_same_tape(alpha, V);
    detail::require_matrix(alpha, "weighted_scatter");
    detail::require_matrix(V, "weighted_scatter");
    const std::size_t E = V.value().rows(), D = V.value().cols(), H = alpha.value().cols();
    detail::require(alpha.value().rows() == E && dst.size() == E, "weighted_scatter: edge count mismatch");
    detail::require(H >= 1 && D % H == 0, "weighted_scatter: width not divisible by head count");
    const std::size_t dh = D / H;
    const auto ad = alpha.value().data();
    const auto vd = V.value().data();
    std::vector<double> out(n_rows * D, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
        detail::require(dst[e] < n_rows, "weighted_scatter: destination out of range");
        for (std::size_t h = 0; h < H; ++h) {
            const double w = ad[e * H + h];
            if (w == 0.0) continue;
            for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out[dst[e] * D + c] += w * vd[e * D + c];
        }
    }
    Tape& t = *alpha.tape;
    const bool rg = t.requires_grad(alpha) || t.requires_grad(V);
    const std::size_t ai = alpha.id, vi = V.id;
    return t.record(Tensor({n_rows, D}, std::move(out)), rg, [ai, vi, dst, E, D, H, dh](Tape& tp, std::span<const double> g) {
        const auto ad = tp.value(ai).data();
        const auto vd = tp.value(vi).data();
        const bool ga = tp.requires_grad(ai), gv = tp.requires_grad(vi);
        std::span<double> gav, gvv;
        if (ga) gav = tp.grad(ai);
        if (gv) gvv = tp.grad(vi);
        for (std::size_t e = 0; e < E; ++e) {
            const double* gr = g.data() + dst[e] * D;
            for (std::size_t h = 0; h < H; ++h) {
                const double w = ad[e * H + h];
                if (ga) {
                    double acc = 0;
                    for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) acc += gr[c] * vd[e * D + c];
                    gav[e * H + h] += acc;
                }
                if (gv && w != 0.0)
                    for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) gvv[e * D + c] += w * gr[c];
            }
        }
    });
}

/// Row-wise layer normalisation with per-column gain and shift vectors.
inline Var layer_norm_rows(const Var& X, const Var& gain, const Var& shift, double eps = kLayerNormEps) {
    detail::require_same_tape(X, gain);
    detail::require_same_tape(X, shift);
    detail::require_matrix(X, "layer_norm");
    const std::size_t R = X.value().rows(), C = X.value().cols();
    detail::require(C >= 2, "layer_norm: needs at least 2 features, got " + std::to_string(C));
    detail::require(gain.value().size() == C && shift.value().size() == C, "layer_norm: gain/shift width mismatch");
    const auto xd = X.value().data();
    const auto gd = gain.value().data();
    const auto sd = shift.value().data();
    std::vector<double> out(R * C), normed(R * C), inv_std(R);
    for (std::size_t r = 0; r < R; ++r) {
        double mean = 0;
        for (std::size_t c = 0; c < C; ++c) mean += xd[r * C + c];
        mean /= static_cast<double>(C);
        double var = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const double d = xd[r * C + c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < C; ++c) {
            normed[r * C + c] = (xd[r * C + c] - mean) * inv_std[r];
            out[r * C + c] = gd[c] * normed[r * C + c] + sd[c];
        }
    }
    Tape& t = *X.tape;
    const bool rg = t.requires_grad(X) || t.requires_grad(gain) || t.requires_grad(shift);
    const std::size_t xi = X.id, gi = gain.id, si = shift.id;
    return t.record(Tensor(X.shape(), std::move(out)), rg,
                    [xi, gi, si, R, C, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& tp, std::span<const double> g) {
                        const auto gd = tp.value(gi).data();
                        if (tp.requires_grad(gi)) {
                            auto gg = tp.grad(gi);
                            for (std::size_t r = 0; r < R; ++r)
                                for (std::size_t c = 0; c < C; ++c) gg[c] += g[r * C + c] * normed[r * C + c];
                        }
                        if (tp.requires_grad(si)) {
                            auto gs = tp.grad(si);
                            for (std::size_t r = 0; r < R; ++r)
                                for (std::size_t c = 0; c < C; ++c) gs[c] += g[r * C + c];
                        }
                        if (tp.requires_grad(xi)) {
                            auto gx = tp.grad(xi);
                            std::vector<double> gy(C);
                            for (std::size_t r = 0; r < R; ++r) {
                                double mean_gy = 0, mean_gyy = 0;
                                for (std::size_t c = 0; c < C; ++c) {
                                    gy[c] = g[r * C + c] * gd[c];
                                    mean_gy += gy[c];
                                    mean_gyy += gy[c] * normed[r * C + c];
                                }
                                mean_gy /= static_cast<double>(C);
                                mean_gyy /= static_cast<double>(C);
                                for (std::size_t c = 0; c < C; ++c)
                                    gx[r * C + c] += inv_std[r] * (gy[c] - mean_gy - normed[r * C + c] * mean_gyy);
                            }
                        }
                    });
}

/// Layer normalisation of a single vector.
inline Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = kLayerNormEps) {
    detail::require(x.value().rank() == 1, "layer_norm: expected vector");
    const std::size_t n = x.value().size();
    return reshape(layer_norm_rows(reshape(x, {1, n}), gain, shift, eps), {n});
}

/// Row-wise g * x / max(||x||, eps) with a scalar gain g.
inline Var scale_norm_rows(const Var& X, const Var& gain, double eps = kScaleNormEps) {
    detail::require_same_tape(X, gain);
    detail::require_matrix(X, "scale_norm");
    detail::require(gain.value().is_scalar(), "scale_norm: gain must be scalar");
    Tape& t = *X.tape;
    const std::size_t R = X.value().rows(), C = X.value().cols();
    const auto xd = X.value().data();
    const double g = gain.value()[0];
    std::vector<double> out(R * C), denom(R);
    for (std::size_t r = 0; r < R; ++r) {
        double sq = 0;
        for (std::size_t c = 0; c < C; ++c) sq += xd[r * C + c] * xd[r * C + c];
        const double norm = std::sqrt(sq);
        t.note_branch(norm > eps, std::abs(norm - eps));
        denom[r] = std::max(norm, eps);
        for (std::size_t c = 0; c < C; ++c) out[r * C + c] = g * xd[r * C + c] / denom[r];
    }
    const bool rg = t.requires_grad(X) || t.requires_grad(gain);
    const std::size_t xi = X.id, gi = gain.id;
    return t.record(Tensor(X.shape(), std::move(out)), rg,
                    [xi, gi, R, C, eps, denom = std::move(denom)](Tape& tp, std::span<const double> go) {
                        const auto xd = tp.value(xi).data();
                        const double g = tp.value(gi)[0];
                        if (tp.requires_grad(gi)) {
                            double acc = 0;
                            for (std::size_t i = 0; i < R * C; ++i) acc += go[i] * xd[i] / denom[i / C];
                            tp.grad(gi)[0] += acc;
                        }
                        if (tp.requires_grad(xi)) {
                            auto gx = tp.grad(xi);
                            for (std::size_t r = 0; r < R; ++r) {
                                const double n = denom[r];
                                if (n > eps) {
                                    double dot = 0;
                                    for (std::size_t c = 0; c < C; ++c) dot += go[r * C + c] * xd[r * C + c];
                                    for (std::size_t c = 0; c < C; ++c)
                                        gx[r * C + c] += g / n * (go[r * C + c] - xd[r * C + c] * dot / (n * n));
                                } else {
                                    for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g / eps * go[r * C + c];
                                }
                            }
                        }
                    });
}

inline Var scale_norm(const Var& x, const Var& gain, double eps = kScaleNormEps) {
    detail::require(x.value().rank() == 1, "scale_norm: expected vector");
    const std::size_t n = x.value().size();
    return reshape(scale_norm_rows(reshape(x, {1, n}), gain, eps), {n});
}

/// Column means of a matrix, as a vector.
inline Var mean_rows(const Var& X) {
    detail::require_matrix(X, "mean_rows");
    const std::size_t R = X.value().rows(), C = X.value().cols();
    const auto xd = X.value().data();
    std::vector<double> out(C, 0.0);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[c] += xd[r * C + c];
    for (auto& v : out) v /= static_cast<double>(R);
    Tape& t = *X.tape;
    const std::size_t xi = X.id;
    return t.record(Tensor({C}, std::move(out)), t.requires_grad(X), [xi, R, C](Tape& tp, std::span<const double> g) {
        auto gx = tp.grad(xi);
        const double inv = 1.0 / static_cast<double>(R);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c] * inv;
    });
}

inline Var sum(const Var& x) {
    double acc = 0;
    for (double v : x.value().data()) acc += v;
    Tape& t = *x.tape;
    const std::size_t xi = x.id;
    return t.record(Tensor::scalar(acc), t.requires_grad(x), [xi](Tape& tp, std::span<const double> g) {
        auto gx = tp.grad(xi);
        for (auto& v : gx) v += g[0];
    });
}

/// Sum of squared entries.
inline Var sum_squares(const Var& x) {
    double acc = 0;
    for (double v : x.value().data()) acc += v * v;
    Tape& t = *x.tape;
    const std::size_t xi = x.id;
    return t.record(Tensor::scalar(acc), t.requires_grad(x), [xi](Tape& tp, std::span<const double> g) {
        const auto xd = tp.value(xi).data();
        auto gx = tp.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g[0] * xd[i];
    });
}

} // namespace dscg::ops
