#include "alt/ops.hpp"

#include <algorithm>
#include <cmath>

namespace alt {

bool& finite_checks_enabled() {
    static bool on = true;
    return on;
}

namespace {

template <class Real>
using Store = std::shared_ptr<typename Tensor<Real>::Storage>;

template <class Real>
void ensure_grad(const Store<Real>& s) {
    if (s->g.size() != s->v.size()) s->g.assign(s->v.size(), Real(0));
}

template <class Real>
bool grad_pending(const Store<Real>& s) {
    return !s->g.empty();
}

template <class Real, class Fwd, class Bwd>
void finish(const char* op, bool any_requires_grad, Tensor<Real>& out, Fwd&& fwd, Bwd&& bwd) {
    if (finite_checks_enabled()) {
        for (Real x : out.values()) {
            if (!std::isfinite(static_cast<double>(x)))
                throw NumericError(std::string(op) + " produced a non-finite value");
        }
    }
    auto& tape = Tape<Real>::current();
    if (any_requires_grad && tape.recording()) {
        out.set_requires_grad(true);
        tape.record(std::forward<Fwd>(fwd), std::forward<Bwd>(bwd));
    }
}

template <class Real>
void same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
    if (a.dims() != b.dims()) throw ShapeError(std::string(op) + ": operand shapes differ");
}

// raw (non-recorded) matrix kernels used in forward and backward bodies;
// accumulate variants add into the destination
template <class Real>
void mm_nn(const Real* a, const Real* b, Real* c, int m, int k, int n) {
    std::fill(c, c + static_cast<size_t>(m) * n, Real(0));
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * k;
        Real* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class Real>
void mm_nt_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
    // c (m x n) += a (m x k) * b^T, with b stored n x k
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * k;
        Real* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const Real* brow = b + static_cast<size_t>(j) * k;
            Real acc = 0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

template <class Real>
void mm_tn_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
    // c (m x n) += a^T * b, with a stored k x m and b stored k x n
    for (int p = 0; p < k; ++p) {
        const Real* arow = a + static_cast<size_t>(p) * m;
        const Real* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const Real av = arow[i];
            Real* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    same_shape(a, b, "add");
    Tensor<Real> out(a.dims());
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    auto fwd = [as, bs, os] {
        for (size_t i = 0; i < os->v.size(); ++i) os->v[i] = as->v[i] + bs->v[i];
    };
    fwd();
    finish("add", a.requires_grad() || b.requires_grad(), out, std::move(fwd), [as, bs, os] {
        if (!grad_pending<Real>(os)) return;
        if (as->requires_grad) {
            ensure_grad<Real>(as);
            for (size_t i = 0; i < os->g.size(); ++i) as->g[i] += os->g[i];
        }
        if (bs->requires_grad) {
            ensure_grad<Real>(bs);
            for (size_t i = 0; i < os->g.size(); ++i) bs->g[i] += os->g[i];
        }
    });
    return out;
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    same_shape(a, b, "sub");
    Tensor<Real> out(a.dims());
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    auto fwd = [as, bs, os] {
        for (size_t i = 0; i < os->v.size(); ++i) os->v[i] = as->v[i] - bs->v[i];
    };
    fwd();
    finish("sub", a.requires_grad() || b.requires_grad(), out, std::move(fwd), [as, bs, os] {
        if (!grad_pending<Real>(os)) return;
        if (as->requires_grad) {
            ensure_grad<Real>(as);
            for (size_t i = 0; i < os->g.size(); ++i) as->g[i] += os->g[i];
        }
        if (bs->requires_grad) {
            ensure_grad<Real>(bs);
            for (size_t i = 0; i < os->g.size(); ++i) bs->g[i] -= os->g[i];
        }
    });
    return out;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    same_shape(a, b, "mul");
    Tensor<Real> out(a.dims());
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    auto fwd = [as, bs, os] {
        for (size_t i = 0; i < os->v.size(); ++i) os->v[i] = as->v[i] * bs->v[i];
    };
    fwd();
    finish("mul", a.requires_grad() || b.requires_grad(), out, std::move(fwd), [as, bs, os] {
        if (!grad_pending<Real>(os)) return;
        if (as->requires_grad) {
            ensure_grad<Real>(as);
            for (size_t i = 0; i < os->g.size(); ++i) as->g[i] += os->g[i] * bs->v[i];
        }
        if (bs->requires_grad) {
            ensure_grad<Real>(bs);
            for (size_t i = 0; i < os->g.size(); ++i) bs->g[i] += os->g[i] * as->v[i];
        }
    });
    return out;
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c) {
    Tensor<Real> out(a.dims());
    auto as = a.storage(), os = out.storage();
    auto fwd = [as, os, c] {
        for (size_t i = 0; i < os->v.size(); ++i) os->v[i] = as->v[i] * c;
    };
    fwd();
    finish("scale", a.requires_grad(), out, std::move(fwd), [as, os, c] {
        if (!grad_pending<Real>(os) || !as->requires_grad) return;
        ensure_grad<Real>(as);
        for (size_t i = 0; i < os->g.size(); ++i) as->g[i] += os->g[i] * c;
    });
    return out;
}

template <class Real>
Tensor<Real> add_row(const Tensor<Real>& m, const Tensor<Real>& row) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    if (static_cast<int>(row.size()) != c)
        throw ShapeError("add_row: row length " + std::to_string(row.size()) +
                         " vs matrix cols " + std::to_string(c));
    Tensor<Real> out(m.dims());
    auto ms = m.storage(), rs = row.storage(), os = out.storage();
    auto fwd = [ms, rs, os, r, c] {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                os->v[static_cast<size_t>(i) * c + j] =
                    ms->v[static_cast<size_t>(i) * c + j] + rs->v[j];
    };
    fwd();
    finish("add_row", m.requires_grad() || row.requires_grad(), out, std::move(fwd),
           [ms, rs, os, r, c] {
               if (!grad_pending<Real>(os)) return;
               if (ms->requires_grad) {
                   ensure_grad<Real>(ms);
                   for (size_t i = 0; i < os->g.size(); ++i) ms->g[i] += os->g[i];
               }
               if (rs->requires_grad) {
                   ensure_grad<Real>(rs);
                   for (int i = 0; i < r; ++i)
                       for (int j = 0; j < c; ++j)
                           rs->g[j] += os->g[static_cast<size_t>(i) * c + j];
               }
           });
    return out;
}

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    a.require_matrix();
    b.require_matrix();
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dims disagree, " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor<Real> out({m, n});
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    auto fwd = [as, bs, os, m, k, n] { mm_nn(as->v.data(), bs->v.data(), os->v.data(), m, k, n); };
    fwd();
    finish("matmul", a.requires_grad() || b.requires_grad(), out, std::move(fwd),
           [as, bs, os, m, k, n] {
               if (!grad_pending<Real>(os)) return;
               if (as->requires_grad) {
                   ensure_grad<Real>(as);
                   mm_nt_acc(os->g.data(), bs->v.data(), as->g.data(), m, n, k);
               }
               if (bs->requires_grad) {
                   ensure_grad<Real>(bs);
                   mm_tn_acc(as->v.data(), os->g.data(), bs->g.data(), k, m, n);
               }
           });
    return out;
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& m) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    Tensor<Real> out({c, r});
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os, r, c] {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                os->v[static_cast<size_t>(j) * r + i] = ms->v[static_cast<size_t>(i) * c + j];
    };
    fwd();
    finish("transpose", m.requires_grad(), out, std::move(fwd), [ms, os, r, c] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                ms->g[static_cast<size_t>(i) * c + j] += os->g[static_cast<size_t>(j) * r + i];
    });
    return out;
}

template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& m) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    Tensor<Real> out(m.dims());
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os, r, c] {
        for (int i = 0; i < r; ++i) {
            const Real* x = ms->v.data() + static_cast<size_t>(i) * c;
            Real* y = os->v.data() + static_cast<size_t>(i) * c;
            Real mx = x[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
            Real sum = 0;
            for (int j = 0; j < c; ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            for (int j = 0; j < c; ++j) y[j] /= sum;
        }
    };
    fwd();
    finish("softmax_rows", m.requires_grad(), out, std::move(fwd), [ms, os, r, c] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (int i = 0; i < r; ++i) {
            const Real* y = os->v.data() + static_cast<size_t>(i) * c;
            const Real* gy = os->g.data() + static_cast<size_t>(i) * c;
            Real* gx = ms->g.data() + static_cast<size_t>(i) * c;
            Real dot = 0;
            for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
            for (int j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
    return out;
}

template <class Real>
Tensor<Real> log_softmax_rows(const Tensor<Real>& m) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    Tensor<Real> out(m.dims());
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os, r, c] {
        for (int i = 0; i < r; ++i) {
            const Real* x = ms->v.data() + static_cast<size_t>(i) * c;
            Real* y = os->v.data() + static_cast<size_t>(i) * c;
            Real mx = x[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
            Real sum = 0;
            for (int j = 0; j < c; ++j) sum += std::exp(x[j] - mx);
            const Real lse = mx + std::log(sum);
            for (int j = 0; j < c; ++j) y[j] = x[j] - lse;
        }
    };
    fwd();
    finish("log_softmax_rows", m.requires_grad(), out, std::move(fwd), [ms, os, r, c] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (int i = 0; i < r; ++i) {
            const Real* y = os->v.data() + static_cast<size_t>(i) * c;
            const Real* gy = os->g.data() + static_cast<size_t>(i) * c;
            Real* gx = ms->g.data() + static_cast<size_t>(i) * c;
            Real gsum = 0;
            for (int j = 0; j < c; ++j) gsum += gy[j];
            for (int j = 0; j < c; ++j) gx[j] += gy[j] - std::exp(y[j]) * gsum;
        }
    });
    return out;
}

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps) {
    x.require_matrix();
    if (eps <= Real(0)) throw ParameterError("layer_norm: eps must be positive");
    const int r = x.rows(), c = x.cols();
    if (static_cast<int>(gain.size()) != c || static_cast<int>(bias.size()) != c)
        throw ShapeError("layer_norm: gain/bias length must equal the feature dim");
    Tensor<Real> out(x.dims());
    auto xs = x.storage(), gs = gain.storage(), bs = bias.storage(), os = out.storage();
    auto fwd = [xs, gs, bs, os, r, c, eps] {
        for (int i = 0; i < r; ++i) {
            const Real* xr = xs->v.data() + static_cast<size_t>(i) * c;
            Real* yr = os->v.data() + static_cast<size_t>(i) * c;
            Real mean = 0;
            for (int j = 0; j < c; ++j) mean += xr[j];
            mean /= Real(c);
            Real var = 0;
            for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= Real(c);
            const Real inv = Real(1) / std::sqrt(var + eps);
            for (int j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * inv * gs->v[j] + bs->v[j];
        }
    };
    fwd();
    finish("layer_norm", x.requires_grad() || gain.requires_grad() || bias.requires_grad(), out,
           std::move(fwd), [xs, gs, bs, os, r, c, eps] {
               if (!grad_pending<Real>(os)) return;
               std::vector<Real> xhat(c), dxhat(c);
               for (int i = 0; i < r; ++i) {
                   const Real* xr = xs->v.data() + static_cast<size_t>(i) * c;
                   const Real* gy = os->g.data() + static_cast<size_t>(i) * c;
                   Real mean = 0;
                   for (int j = 0; j < c; ++j) mean += xr[j];
                   mean /= Real(c);
                   Real var = 0;
                   for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
                   var /= Real(c);
                   const Real inv = Real(1) / std::sqrt(var + eps);
                   for (int j = 0; j < c; ++j) xhat[j] = (xr[j] - mean) * inv;
                   if (gs->requires_grad) {
                       ensure_grad<Real>(gs);
                       for (int j = 0; j < c; ++j) gs->g[j] += gy[j] * xhat[j];
                   }
                   if (bs->requires_grad) {
                       ensure_grad<Real>(bs);
                       for (int j = 0; j < c; ++j) bs->g[j] += gy[j];
                   }
                   if (xs->requires_grad) {
                       ensure_grad<Real>(xs);
                       Real m1 = 0, m2 = 0;
                       for (int j = 0; j < c; ++j) {
                           dxhat[j] = gy[j] * gs->v[j];
                           m1 += dxhat[j];
                           m2 += dxhat[j] * xhat[j];
                       }
                       m1 /= Real(c);
                       m2 /= Real(c);
                       Real* gx = xs->g.data() + static_cast<size_t>(i) * c;
                       for (int j = 0; j < c; ++j)
                           gx[j] += inv * (dxhat[j] - m1 - xhat[j] * m2);
                   }
               }
           });
    return out;
}

template <class Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
    Tensor<Real> out(x.dims());
    auto xs = x.storage(), os = out.storage();
    const Real inv_sqrt2 = Real(0.7071067811865475244);
    auto fwd = [xs, os, inv_sqrt2] {
        for (size_t i = 0; i < os->v.size(); ++i) {
            const Real v = xs->v[i];
            os->v[i] = v * Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
        }
    };
    fwd();
    finish("gelu", x.requires_grad(), out, std::move(fwd), [xs, os, inv_sqrt2] {
        if (!grad_pending<Real>(os) || !xs->requires_grad) return;
        ensure_grad<Real>(xs);
        const Real inv_sqrt2pi = Real(0.3989422804014326779);
        for (size_t i = 0; i < os->g.size(); ++i) {
            const Real v = xs->v[i];
            const Real phi = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
            const Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * v * v);
            xs->g[i] += os->g[i] * (phi + v * pdf);
        }
    });
    return out;
}

template <class Real>
Tensor<Real> slice_cols(const Tensor<Real>& m, int c0, int c1) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad column range");
    const int w = c1 - c0;
    Tensor<Real> out({r, w});
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os, r, c, c0, w] {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                os->v[static_cast<size_t>(i) * w + j] =
                    ms->v[static_cast<size_t>(i) * c + c0 + j];
    };
    fwd();
    finish("slice_cols", m.requires_grad(), out, std::move(fwd), [ms, os, r, c, c0, w] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                ms->g[static_cast<size_t>(i) * c + c0 + j] += os->g[static_cast<size_t>(i) * w + j];
    });
    return out;
}

template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const int r = parts[0].rows();
    int total = 0;
    bool any_rg = false;
    for (const auto& p : parts) {
        p.require_matrix();
        if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
        total += p.cols();
        any_rg = any_rg || p.requires_grad();
    }
    Tensor<Real> out({r, total});
    std::vector<Store<Real>> ps;
    std::vector<int> widths, offs;
    int off = 0;
    for (const auto& p : parts) {
        ps.push_back(p.storage());
        widths.push_back(p.cols());
        offs.push_back(off);
        off += p.cols();
    }
    auto os = out.storage();
    auto fwd = [ps, widths, offs, os, r, total] {
        for (size_t k = 0; k < ps.size(); ++k) {
            const int w = widths[k], o = offs[k];
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j)
                    os->v[static_cast<size_t>(i) * total + o + j] =
                        ps[k]->v[static_cast<size_t>(i) * w + j];
        }
    };
    fwd();
    finish("concat_cols", any_rg, out, std::move(fwd), [ps, widths, offs, os, r, total] {
        if (!grad_pending<Real>(os)) return;
        for (size_t k = 0; k < ps.size(); ++k) {
            if (!ps[k]->requires_grad) continue;
            ensure_grad<Real>(ps[k]);
            const int w = widths[k], o = offs[k];
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j)
                    ps[k]->g[static_cast<size_t>(i) * w + j] +=
                        os->g[static_cast<size_t>(i) * total + o + j];
        }
    });
    return out;
}

template <class Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const int c = parts[0].cols();
    int total = 0;
    bool any_rg = false;
    for (const auto& p : parts) {
        p.require_matrix();
        if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
        total += p.rows();
        any_rg = any_rg || p.requires_grad();
    }
    Tensor<Real> out({total, c});
    std::vector<Store<Real>> ps;
    std::vector<int> heights, offs;
    int off = 0;
    for (const auto& p : parts) {
        ps.push_back(p.storage());
        heights.push_back(p.rows());
        offs.push_back(off);
        off += p.rows();
    }
    auto os = out.storage();
    auto fwd = [ps, heights, offs, os, c] {
        for (size_t k = 0; k < ps.size(); ++k) {
            std::copy(ps[k]->v.begin(), ps[k]->v.end(),
                      os->v.begin() + static_cast<size_t>(offs[k]) * c);
        }
    };
    fwd();
    finish("concat_rows", any_rg, out, std::move(fwd), [ps, heights, offs, os, c] {
        if (!grad_pending<Real>(os)) return;
        for (size_t k = 0; k < ps.size(); ++k) {
            if (!ps[k]->requires_grad) continue;
            ensure_grad<Real>(ps[k]);
            const size_t base = static_cast<size_t>(offs[k]) * c;
            for (size_t i = 0; i < ps[k]->g.size(); ++i) ps[k]->g[i] += os->g[base + i];
        }
    });
    return out;
}

template <class Real>
Tensor<Real> repeat_rows(const Tensor<Real>& row, int n) {
    if (n <= 0) throw ShapeError("repeat_rows: n must be positive");
    const int c = static_cast<int>(row.size());
    Tensor<Real> out({n, c});
    auto rs = row.storage(), os = out.storage();
    auto fwd = [rs, os, n, c] {
        for (int i = 0; i < n; ++i)
            std::copy(rs->v.begin(), rs->v.end(), os->v.begin() + static_cast<size_t>(i) * c);
    };
    fwd();
    finish("repeat_rows", row.requires_grad(), out, std::move(fwd), [rs, os, n, c] {
        if (!grad_pending<Real>(os) || !rs->requires_grad) return;
        ensure_grad<Real>(rs);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) rs->g[j] += os->g[static_cast<size_t>(i) * c + j];
    });
    return out;
}

template <class Real>
Tensor<Real> mean_rows(const Tensor<Real>& m) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    Tensor<Real> out({1, c});
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os, r, c] {
        for (int j = 0; j < c; ++j) os->v[j] = 0;
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) os->v[j] += ms->v[static_cast<size_t>(i) * c + j];
        for (int j = 0; j < c; ++j) os->v[j] /= Real(r);
    };
    fwd();
    finish("mean_rows", m.requires_grad(), out, std::move(fwd), [ms, os, r, c] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                ms->g[static_cast<size_t>(i) * c + j] += os->g[j] / Real(r);
    });
    return out;
}

template <class Real>
Tensor<Real> l2_normalize_rows(const Tensor<Real>& m) {
    m.require_matrix();
    const int r = m.rows(), c = m.cols();
    // zero-norm rows are rejected eagerly so the error fires at the call site
    for (int i = 0; i < r; ++i) {
        Real ss = 0;
        for (int j = 0; j < c; ++j) {
            const Real v = m.at(i, j);
            ss += v * v;
        }
        if (!(ss > Real(0)))
            throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
    }
    Tensor<Real> out(m.dims());
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os, r, c] {
        for (int i = 0; i < r; ++i) {
            const Real* x = ms->v.data() + static_cast<size_t>(i) * c;
            Real* y = os->v.data() + static_cast<size_t>(i) * c;
            Real ss = 0;
            for (int j = 0; j < c; ++j) ss += x[j] * x[j];
            const Real inv = Real(1) / std::sqrt(ss);
            for (int j = 0; j < c; ++j) y[j] = x[j] * inv;
        }
    };
    fwd();
    finish("l2_normalize_rows", m.requires_grad(), out, std::move(fwd), [ms, os, r, c] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (int i = 0; i < r; ++i) {
            const Real* x = ms->v.data() + static_cast<size_t>(i) * c;
            const Real* y = os->v.data() + static_cast<size_t>(i) * c;
            const Real* gy = os->g.data() + static_cast<size_t>(i) * c;
            Real* gx = ms->g.data() + static_cast<size_t>(i) * c;
            Real ss = 0;
            for (int j = 0; j < c; ++j) ss += x[j] * x[j];
            const Real inv = Real(1) / std::sqrt(ss);
            Real dot = 0;
            for (int j = 0; j < c; ++j) dot += y[j] * gy[j];
            for (int j = 0; j < c; ++j) gx[j] += (gy[j] - y[j] * dot) * inv;
        }
    });
    return out;
}

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& m) {
    Tensor<Real> out({1});
    auto ms = m.storage(), os = out.storage();
    auto fwd = [ms, os] {
        Real acc = 0;
        for (Real v : ms->v) acc += v;
        os->v[0] = acc;
    };
    fwd();
    finish("sum_all", m.requires_grad(), out, std::move(fwd), [ms, os] {
        if (!grad_pending<Real>(os) || !ms->requires_grad) return;
        ensure_grad<Real>(ms);
        for (size_t i = 0; i < ms->g.size(); ++i) ms->g[i] += os->g[0];
    });
    return out;
}

template <class Real>
Tensor<Real> detach(const Tensor<Real>& t) {
    return Tensor<Real>::from(t.dims(), t.values(), false);
}

template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
    return add_row(matmul(x, w), b);
}

template <class Real>
Tensor<Real> conv1d_temporal(const Tensor<Real>& x, const Tensor<Real>& kernels) {
    x.require_matrix();
    if (kernels.rank() != 3) throw ShapeError("conv1d_temporal: kernels must have dims {k, d, d}");
    const int ksize = kernels.dims()[0];
    const int din = kernels.dims()[1];
    const int dout = kernels.dims()[2];
    if (ksize % 2 == 0) throw ParameterError("conv1d_temporal: kernel_size must be odd");
    if (din != x.cols() || dout != x.cols())
        throw ShapeError("conv1d_temporal: kernel channel dims must match the input width");
    const int t_len = x.rows(), d = x.cols(), half = (ksize - 1) / 2;
    Tensor<Real> out({t_len, d});
    auto xs = x.storage(), ws = kernels.storage(), os = out.storage();
    auto fwd = [xs, ws, os, t_len, d, ksize, half] {
        std::fill(os->v.begin(), os->v.end(), Real(0));
        for (int t = 0; t < t_len; ++t) {
            Real* yrow = os->v.data() + static_cast<size_t>(t) * d;
            for (int k = 0; k < ksize; ++k) {
                const int src = t + k - half;
                if (src < 0 || src >= t_len) continue;  // zero padding
                const Real* xrow = xs->v.data() + static_cast<size_t>(src) * d;
                const Real* wk = ws->v.data() + static_cast<size_t>(k) * d * d;
                for (int i = 0; i < d; ++i) {
                    const Real xv = xrow[i];
                    const Real* wrow = wk + static_cast<size_t>(i) * d;
                    for (int o = 0; o < d; ++o) yrow[o] += xv * wrow[o];
                }
            }
        }
    };
    fwd();
    finish("conv1d_temporal", x.requires_grad() || kernels.requires_grad(), out, std::move(fwd),
           [xs, ws, os, t_len, d, ksize, half] {
               if (!grad_pending<Real>(os)) return;
               for (int t = 0; t < t_len; ++t) {
                   const Real* gy = os->g.data() + static_cast<size_t>(t) * d;
                   for (int k = 0; k < ksize; ++k) {
                       const int src = t + k - half;
                       if (src < 0 || src >= t_len) continue;
                       const Real* xrow = xs->v.data() + static_cast<size_t>(src) * d;
                       const Real* wk = ws->v.data() + static_cast<size_t>(k) * d * d;
                       if (xs->requires_grad) {
                           ensure_grad<Real>(xs);
                           Real* gx = xs->g.data() + static_cast<size_t>(src) * d;
                           for (int i = 0; i < d; ++i) {
                               const Real* wrow = wk + static_cast<size_t>(i) * d;
                               Real acc = 0;
                               for (int o = 0; o < d; ++o) acc += wrow[o] * gy[o];
                               gx[i] += acc;
                           }
                       }
                       if (ws->requires_grad) {
                           ensure_grad<Real>(ws);
                           Real* gw = ws->g.data() + static_cast<size_t>(k) * d * d;
                           for (int i = 0; i < d; ++i) {
                               const Real xv = xrow[i];
                               Real* gwrow = gw + static_cast<size_t>(i) * d;
                               for (int o = 0; o < d; ++o) gwrow[o] += xv * gy[o];
                           }
                       }
                   }
               }
           });
    return out;
}

template <class Real>
AttentionWeights<Real> AttentionWeights<Real>::init(int d, RngStream& rng, Real stddev) {
    AttentionWeights<Real> w;
    w.wq = Tensor<Real>::randn({d, d}, rng, stddev, true);
    w.bq = Tensor<Real>({1, d}, true);
    w.wk = Tensor<Real>::randn({d, d}, rng, stddev, true);
    w.wv = Tensor<Real>::randn({d, d}, rng, stddev, true);
    w.bv = Tensor<Real>({1, d}, true);
    w.wo = Tensor<Real>::randn({d, d}, rng, stddev, true);
    w.bo = Tensor<Real>({1, d}, true);
    return w;
}

template <class Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                  const Tensor<Real>& v, const AttentionWeights<Real>& w,
                                  int heads) {
    q.require_matrix();
    k.require_matrix();
    v.require_matrix();
    const int d = q.cols();
    if (k.cols() != d || v.cols() != d)
        throw ShapeError("multi_head_attention: feature dims disagree");
    if (k.rows() != v.rows())
        throw ShapeError("multi_head_attention: key and value row counts differ");
    if (heads <= 0 || d % heads != 0)
        throw ShapeError("multi_head_attention: feature dim " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
    const int hd = d / heads;
    const Real att_scale = Real(1) / std::sqrt(Real(hd));

    Tensor<Real> qp = linear(q, w.wq, w.bq);
    Tensor<Real> kp = matmul(k, w.wk);
    Tensor<Real> vp = linear(v, w.wv, w.bv);

    std::vector<Tensor<Real>> head_out;
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Tensor<Real> qh = slice_cols(qp, h * hd, (h + 1) * hd);
        Tensor<Real> kh = slice_cols(kp, h * hd, (h + 1) * hd);
        Tensor<Real> vh = slice_cols(vp, h * hd, (h + 1) * hd);
        Tensor<Real> attn = softmax_rows(scale(matmul(qh, transpose(kh)), att_scale));
        head_out.push_back(matmul(attn, vh));
    }
    Tensor<Real> merged = heads == 1 ? head_out[0] : concat_cols(head_out);
    return linear(merged, w.wo, w.bo);
}

#define ALT_INSTANTIATE_OPS(Real)                                                              \
    template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                       \
    template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                       \
    template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                       \
    template Tensor<Real> scale(const Tensor<Real>&, Real);                                    \
    template Tensor<Real> add_row(const Tensor<Real>&, const Tensor<Real>&);                   \
    template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                    \
    template Tensor<Real> transpose(const Tensor<Real>&);                                      \
    template Tensor<Real> softmax_rows(const Tensor<Real>&);                                   \
    template Tensor<Real> log_softmax_rows(const Tensor<Real>&);                               \
    template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&,                 \
                                     const Tensor<Real>&, Real);                               \
    template Tensor<Real> gelu(const Tensor<Real>&);                                           \
    template Tensor<Real> slice_cols(const Tensor<Real>&, int, int);                           \
    template Tensor<Real> concat_cols(const std::vector<Tensor<Real>>&);                       \
    template Tensor<Real> concat_rows(const std::vector<Tensor<Real>>&);                       \
    template Tensor<Real> repeat_rows(const Tensor<Real>&, int);                               \
    template Tensor<Real> mean_rows(const Tensor<Real>&);                                      \
    template Tensor<Real> l2_normalize_rows(const Tensor<Real>&);                              \
    template Tensor<Real> sum_all(const Tensor<Real>&);                                        \
    template Tensor<Real> detach(const Tensor<Real>&);                                         \
    template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&,                     \
                                 const Tensor<Real>&);                                         \
    template Tensor<Real> conv1d_temporal(const Tensor<Real>&, const Tensor<Real>&);           \
    template struct AttentionWeights<Real>;                                                    \
    template Tensor<Real> multi_head_attention(const Tensor<Real>&, const Tensor<Real>&,       \
                                               const Tensor<Real>&,                            \
                                               const AttentionWeights<Real>&, int);

ALT_INSTANTIATE_OPS(float)
ALT_INSTANTIATE_OPS(double)

#undef ALT_INSTANTIATE_OPS

}  // namespace alt
