#include "ctrec/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace ctrec {

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(AdNode&)> bw) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    Var out(std::move(value), needs);
    if (needs) {
        auto n = out.node();
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(bw);
    }
    return out;
}

void backward(const Var& root) {
    if (root.value().size() != 1)
        throw ContractViolation("backward: root must be a scalar");
    if (!root.requires_grad()) return;

    // Reverse post-order DFS over requires-grad parents = topological order.
    std::vector<AdNode*> order;
    std::unordered_set<AdNode*> seen;
    struct Frame {
        AdNode* n;
        size_t next;
    };
    std::vector<Frame> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            AdNode* p = f.n->parents[f.next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        AdNode* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ContractViolation(std::string(op) + ": shape mismatch");
}

void accumulate(AdNode& parent, const Tensor& g) {
    parent.ensure_grad();
    real* dst = parent.grad.data();
    const real* src = g.data();
    for (int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value();
    const real* bd = b.value().data();
    for (int64_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return make_op(std::move(out), {a, b}, [](AdNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) accumulate(*n.parents[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value();
    const real* bd = b.value().data();
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return make_op(std::move(out), {a, b}, [](AdNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            real* dst = n.parents[1]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.value();
    const real* bd = b.value().data();
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return make_op(std::move(out), {a, b}, [](AdNode& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            real* dst = n.parents[0]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            real* dst = n.parents[1]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i] * av[i];
        }
    });
}

Var add(const Var& a, real s) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
    return make_op(std::move(out), {a}, [](AdNode& n) { accumulate(*n.parents[0], n.grad); });
}

Var mul(const Var& a, real s) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_op(std::move(out), {a}, [s](AdNode& n) {
        n.parents[0]->ensure_grad();
        real* dst = n.parents[0]->grad.data();
        for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += s * n.grad[i];
    });
}

Var vabs(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
    return make_op(std::move(out), {a}, [](AdNode& n) {
        const Tensor& x = n.parents[0]->value;
        n.parents[0]->ensure_grad();
        real* dst = n.parents[0]->grad.data();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            real s = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0);
            dst[i] += s * n.grad[i];
        }
    });
}

Var vexp(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return make_op(std::move(out), {a}, [](AdNode& n) {
        n.parents[0]->ensure_grad();
        real* dst = n.parents[0]->grad.data();
        for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.value[i] * n.grad[i];
    });
}

Var relu(const Var& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0 ? out[i] : 0.0;
    return make_op(std::move(out), {a}, [](AdNode& n) {
        const Tensor& x = n.parents[0]->value;
        n.parents[0]->ensure_grad();
        real* dst = n.parents[0]->grad.data();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            if (x[i] > 0) dst[i] += n.grad[i];
    });
}

// ---------------- scalar broadcast ----------------

namespace {
void check_scalar(const Var& s, const char* op) {
    if (s.value().size() != 1) throw ContractViolation(std::string(op) + ": scalar expected");
}
}  // namespace

Var bcast_sub(const Var& x, const Var& s) {
    check_scalar(s, "bcast_sub");
    Tensor out = x.value();
    const real sv = s.value()[0];
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= sv;
    return make_op(std::move(out), {x, s}, [](AdNode& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            real acc = 0;
            for (int64_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i];
            n.parents[1]->ensure_grad();
            n.parents[1]->grad[0] -= acc;
        }
    });
}

Var bcast_mul(const Var& x, const Var& s) {
    check_scalar(s, "bcast_mul");
    Tensor out = x.value();
    const real sv = s.value()[0];
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= sv;
    return make_op(std::move(out), {x, s}, [](AdNode& n) {
        const real sv = n.parents[1]->value[0];
        const Tensor& xv = n.parents[0]->value;
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            real* dst = n.parents[0]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += sv * n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            real acc = 0;
            for (int64_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * xv[i];
            n.parents[1]->ensure_grad();
            n.parents[1]->grad[0] += acc;
        }
    });
}

Var bcast_div(const Var& x, const Var& s) {
    check_scalar(s, "bcast_div");
    Tensor out = x.value();
    const real sv = s.value()[0];
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= sv;
    return make_op(std::move(out), {x, s}, [](AdNode& n) {
        const real sv = n.parents[1]->value[0];
        const Tensor& xv = n.parents[0]->value;
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            real* dst = n.parents[0]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i] / sv;
        }
        if (n.parents[1]->requires_grad) {
            real acc = 0;
            for (int64_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * xv[i];
            n.parents[1]->ensure_grad();
            n.parents[1]->grad[0] += -acc / (sv * sv);
        }
    });
}

Var div_scalar(const Var& a, const Var& b) {
    check_scalar(a, "div_scalar");
    check_scalar(b, "div_scalar");
    Tensor out = Tensor::scalar(a.value()[0] / b.value()[0]);
    return make_op(std::move(out), {a, b}, [](AdNode& n) {
        const real av = n.parents[0]->value[0];
        const real bv = n.parents[1]->value[0];
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            n.parents[0]->grad[0] += n.grad[0] / bv;
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            n.parents[1]->grad[0] += -n.grad[0] * av / (bv * bv);
        }
    });
}

// ---------------- reductions ----------------

Var reduce_sum(const Var& a) {
    real acc = 0;
    for (int64_t i = 0; i < a.value().size(); ++i) acc += a.value()[i];
    return make_op(Tensor::scalar(acc), {a}, [](AdNode& n) {
        n.parents[0]->ensure_grad();
        real* dst = n.parents[0]->grad.data();
        const real g = n.grad[0];
        for (int64_t i = 0; i < n.parents[0]->grad.size(); ++i) dst[i] += g;
    });
}

Var reduce_mean(const Var& a) {
    const int64_t m = a.value().size();
    real acc = 0;
    for (int64_t i = 0; i < m; ++i) acc += a.value()[i];
    return make_op(Tensor::scalar(acc / static_cast<real>(m)), {a}, [m](AdNode& n) {
        n.parents[0]->ensure_grad();
        real* dst = n.parents[0]->grad.data();
        const real g = n.grad[0] / static_cast<real>(m);
        for (int64_t i = 0; i < m; ++i) dst[i] += g;
    });
}

namespace {
Var reduce_extreme(const Var& a, bool take_max) {
    int64_t arg = 0;
    real best = a.value()[0];
    for (int64_t i = 1; i < a.value().size(); ++i) {
        real v = a.value()[i];
        if (take_max ? v > best : v < best) {
            best = v;
            arg = i;
        }
    }
    return make_op(Tensor::scalar(best), {a}, [arg](AdNode& n) {
        n.parents[0]->ensure_grad();
        n.parents[0]->grad[arg] += n.grad[0];
    });
}
}  // namespace

Var reduce_min(const Var& a) { return reduce_extreme(a, false); }
Var reduce_max(const Var& a) { return reduce_extreme(a, true); }

Var min2(const Var& a, const Var& b) {
    check_scalar(a, "min2");
    check_scalar(b, "min2");
    bool first = a.value()[0] <= b.value()[0];
    return make_op(Tensor::scalar(first ? a.value()[0] : b.value()[0]), {a, b},
                   [first](AdNode& n) {
                       AdNode* p = first ? n.parents[0].get() : n.parents[1].get();
                       if (p->requires_grad) {
                           p->ensure_grad();
                           p->grad[0] += n.grad[0];
                       }
                   });
}

Var max2(const Var& a, const Var& b) {
    check_scalar(a, "max2");
    check_scalar(b, "max2");
    bool first = a.value()[0] >= b.value()[0];
    return make_op(Tensor::scalar(first ? a.value()[0] : b.value()[0]), {a, b},
                   [first](AdNode& n) {
                       AdNode* p = first ? n.parents[0].get() : n.parents[1].get();
                       if (p->requires_grad) {
                           p->ensure_grad();
                           p->grad[0] += n.grad[0];
                       }
                   });
}

// ---------------- linear algebra ----------------

Var matmul(const Var& a, const Var& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.value().dim(1) != b.value().dim(0))
        throw ContractViolation("matmul: bad shapes");
    const int n = a.value().dim(0), k = a.value().dim(1), c = b.value().dim(1);
    Tensor out({n, c});
    gemm_nn(n, c, k, 1.0, a.value().data(), b.value().data(), 0.0, out.data());
    return make_op(std::move(out), {a, b}, [n, k, c](AdNode& nd) {
        const Tensor& av = nd.parents[0]->value;
        const Tensor& bv = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            nd.parents[0]->ensure_grad();
            gemm_nt(n, k, c, 1.0, nd.grad.data(), bv.data(), 1.0, nd.parents[0]->grad.data());
        }
        if (nd.parents[1]->requires_grad) {
            nd.parents[1]->ensure_grad();
            gemm_tn(k, c, n, 1.0, av.data(), nd.grad.data(), 1.0, nd.parents[1]->grad.data());
        }
    });
}

Var rowscale(const Var& x, const Var& s) {
    if (x.value().rank() != 2 || s.value().rank() != 1 || x.value().dim(1) != s.value().dim(0))
        throw ContractViolation("rowscale: bad shapes");
    const int n = x.value().dim(0), c = x.value().dim(1);
    Tensor out = x.value();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) *= s.value()[j];
    return make_op(std::move(out), {x, s}, [n, c](AdNode& nd) {
        const Tensor& xv = nd.parents[0]->value;
        const Tensor& sv = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            nd.parents[0]->ensure_grad();
            Tensor& gx = nd.parents[0]->grad;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gx.at(i, j) += nd.grad.at(i, j) * sv[j];
        }
        if (nd.parents[1]->requires_grad) {
            nd.parents[1]->ensure_grad();
            Tensor& gs = nd.parents[1]->grad;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gs[j] += nd.grad.at(i, j) * xv.at(i, j);
        }
    });
}

Var column(const Var& w, int c) {
    if (w.value().rank() != 2 || c < 0 || c >= w.value().dim(1))
        throw ContractViolation("column: index out of range");
    const int k = w.value().dim(0), cols = w.value().dim(1);
    Tensor out({k});
    for (int i = 0; i < k; ++i) out[i] = w.value().at(i, c);
    return make_op(std::move(out), {w}, [k, cols, c](AdNode& nd) {
        nd.parents[0]->ensure_grad();
        for (int i = 0; i < k; ++i)
            nd.parents[0]->grad[static_cast<int64_t>(i) * cols + c] += nd.grad[i];
    });
}

Var elem(const Var& v, int i) {
    if (i < 0 || i >= v.value().size()) throw ContractViolation("elem: index out of range");
    return make_op(Tensor::scalar(v.value()[i]), {v}, [i](AdNode& nd) {
        nd.parents[0]->ensure_grad();
        nd.parents[0]->grad[i] += nd.grad[0];
    });
}

// ---------------- conv / norm / pool ----------------

namespace {

void im2col(const Tensor& x, int n, int kh, int kw, int stride, int pad, int ho, int wo,
            real* col) {
    const int cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                real* dst = col + ((static_cast<size_t>(ci) * kh + ki) * kw + kj) *
                                      (static_cast<size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = 0.0;
                        continue;
                    }
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        dst[oy * wo + ox] = (ix >= 0 && ix < w) ? x.at(n, ci, iy, ix) : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_acc(const real* col, int n, int kh, int kw, int stride, int pad, int ho, int wo,
                Tensor& gx) {
    const int cin = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
    for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const real* src = col + ((static_cast<size_t>(ci) * kh + ki) * kw + kj) *
                                            (static_cast<size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) gx.at(n, ci, iy, ix) += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1))
        throw ContractViolation("conv2d: bad shapes");
    const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), iw = xv.dim(3);
    const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (iw + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ContractViolation("conv2d: empty output");
    const int ckk = cin * kh * kw;

    Tensor out({n, cout, ho, wo});
    std::vector<real> col(static_cast<size_t>(ckk) * ho * wo);
    for (int i = 0; i < n; ++i) {
        im2col(xv, i, kh, kw, stride, pad, ho, wo, col.data());
        gemm_nn(cout, ho * wo, ckk, 1.0, wv.data(), col.data(), 0.0,
                out.data() + static_cast<size_t>(i) * cout * ho * wo);
    }
    return make_op(std::move(out), {x, w},
                   [n, cin, cout, kh, kw, stride, pad, ho, wo, ckk](AdNode& nd) {
                       const Tensor& xv = nd.parents[0]->value;
                       std::vector<real> col(static_cast<size_t>(ckk) * ho * wo);
                       std::vector<real> dcol;
                       const bool need_dx = nd.parents[0]->requires_grad;
                       const bool need_dw = nd.parents[1]->requires_grad;
                       if (need_dx) {
                           dcol.resize(col.size());
                           nd.parents[0]->ensure_grad();
                       }
                       if (need_dw) nd.parents[1]->ensure_grad();
                       for (int i = 0; i < n; ++i) {
                           const real* dy = nd.grad.data() + static_cast<size_t>(i) * cout * ho * wo;
                           if (need_dw) {
                               im2col(xv, i, kh, kw, stride, pad, ho, wo, col.data());
                               gemm_nt(cout, ckk, ho * wo, 1.0, dy, col.data(), 1.0,
                                       nd.parents[1]->grad.data());
                           }
                           if (need_dx) {
                               gemm_tn(ckk, ho * wo, cout, 1.0, nd.parents[1]->value.data(), dy,
                                       0.0, dcol.data());
                               col2im_acc(dcol.data(), i, kh, kw, stride, pad, ho, wo,
                                          nd.parents[0]->grad);
                           }
                       }
                   });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, real eps) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4) throw ContractViolation("group_norm: rank-4 input expected");
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (c % groups != 0) throw ContractViolation("group_norm: channels not divisible by groups");
    if (gamma.value().size() != c || beta.value().size() != c)
        throw ContractViolation("group_norm: affine parameter size mismatch");
    const int cg = c / groups;
    const int64_t m = static_cast<int64_t>(cg) * h * w;
    const int64_t chw = static_cast<int64_t>(c) * h * w;
    const int64_t hw = static_cast<int64_t>(h) * w;

    std::vector<real> mean(static_cast<size_t>(n) * groups), istd(static_cast<size_t>(n) * groups);
    Tensor out(xv.shape());
    for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            const real* src = xv.data() + i * chw + static_cast<int64_t>(g) * cg * hw;
            real mu = 0;
            for (int64_t t = 0; t < m; ++t) mu += src[t];
            mu /= static_cast<real>(m);
            real var = 0;
            for (int64_t t = 0; t < m; ++t) {
                real d = src[t] - mu;
                var += d * d;
            }
            var /= static_cast<real>(m);
            const real is = 1.0 / std::sqrt(var + eps);
            mean[i * groups + g] = mu;
            istd[i * groups + g] = is;
            real* dst = out.data() + i * chw + static_cast<int64_t>(g) * cg * hw;
            for (int cc = 0; cc < cg; ++cc) {
                const real ga = gamma.value()[g * cg + cc];
                const real be = beta.value()[g * cg + cc];
                for (int64_t t = 0; t < hw; ++t) {
                    real xh = (src[cc * hw + t] - mu) * is;
                    dst[cc * hw + t] = ga * xh + be;
                }
            }
        }
    }
    return make_op(
        std::move(out), {x, gamma, beta},
        [n, c, groups, cg, m, chw, hw, mean, istd](AdNode& nd) {
            const Tensor& xv = nd.parents[0]->value;
            const Tensor& gav = nd.parents[1]->value;
            const bool need_dx = nd.parents[0]->requires_grad;
            const bool need_dg = nd.parents[1]->requires_grad;
            const bool need_db = nd.parents[2]->requires_grad;
            if (need_dx) nd.parents[0]->ensure_grad();
            if (need_dg) nd.parents[1]->ensure_grad();
            if (need_db) nd.parents[2]->ensure_grad();
            std::vector<real> xhat(static_cast<size_t>(m)), dxh(static_cast<size_t>(m));
            for (int i = 0; i < n; ++i) {
                for (int g = 0; g < groups; ++g) {
                    const real mu = mean[i * groups + g];
                    const real is = istd[i * groups + g];
                    const real* src = xv.data() + i * chw + static_cast<int64_t>(g) * cg * hw;
                    const real* dy = nd.grad.data() + i * chw + static_cast<int64_t>(g) * cg * hw;
                    real s1 = 0, s2 = 0;
                    for (int cc = 0; cc < cg; ++cc) {
                        const real ga = gav[g * cg + cc];
                        for (int64_t t = 0; t < hw; ++t) {
                            const int64_t idx = cc * hw + t;
                            xhat[idx] = (src[idx] - mu) * is;
                            dxh[idx] = dy[idx] * ga;
                            s1 += dxh[idx];
                            s2 += dxh[idx] * xhat[idx];
                        }
                    }
                    if (need_dg || need_db) {
                        for (int cc = 0; cc < cg; ++cc) {
                            real dgacc = 0, dbacc = 0;
                            for (int64_t t = 0; t < hw; ++t) {
                                dgacc += dy[cc * hw + t] * xhat[cc * hw + t];
                                dbacc += dy[cc * hw + t];
                            }
                            if (need_dg) nd.parents[1]->grad[g * cg + cc] += dgacc;
                            if (need_db) nd.parents[2]->grad[g * cg + cc] += dbacc;
                        }
                    }
                    if (need_dx) {
                        real* dx = nd.parents[0]->grad.data() + i * chw +
                                   static_cast<int64_t>(g) * cg * hw;
                        const real inv_m = 1.0 / static_cast<real>(m);
                        for (int64_t t = 0; t < m; ++t)
                            dx[t] += is * (dxh[t] - (s1 + xhat[t] * s2) * inv_m);
                    }
                }
            }
        });
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4) throw ContractViolation("global_avg_pool: rank-4 input expected");
    const int n = xv.dim(0), c = xv.dim(1);
    const int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out({n, c});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            const real* src = xv.data() + (static_cast<int64_t>(i) * c + j) * hw;
            real acc = 0;
            for (int64_t t = 0; t < hw; ++t) acc += src[t];
            out.at(i, j) = acc / static_cast<real>(hw);
        }
    }
    return make_op(std::move(out), {x}, [n, c, hw](AdNode& nd) {
        nd.parents[0]->ensure_grad();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) {
                const real g = nd.grad.at(i, j) / static_cast<real>(hw);
                real* dst = nd.parents[0]->grad.data() + (static_cast<int64_t>(i) * c + j) * hw;
                for (int64_t t = 0; t < hw; ++t) dst[t] += g;
            }
        }
    });
}

// ---------------- 2-d map ops ----------------

namespace {
// reflect-101 index fold; size-1 axes clamp to 0
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}
}  // namespace

Var reflect_pad2d(const Var& x, int p) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ContractViolation("reflect_pad2d: rank-2 input expected");
    const int h = xv.dim(0), w = xv.dim(1);
    const int ho = h + 2 * p, wo = w + 2 * p;
    std::vector<int> ry(ho), rx(wo);
    for (int i = 0; i < ho; ++i) ry[i] = reflect_index(i - p, h);
    for (int j = 0; j < wo; ++j) rx[j] = reflect_index(j - p, w);
    Tensor out({ho, wo});
    for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) out.at(i, j) = xv.at(ry[i], rx[j]);
    return make_op(std::move(out), {x}, [ho, wo, w, ry, rx](AdNode& nd) {
        nd.parents[0]->ensure_grad();
        Tensor& gx = nd.parents[0]->grad;
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) gx[static_cast<int64_t>(ry[i]) * w + rx[j]] += nd.grad.at(i, j);
    });
}

Var box_sum2d(const Var& x, int win) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ContractViolation("box_sum2d: rank-2 input expected");
    const int h = xv.dim(0), w = xv.dim(1);
    const int ho = h - win + 1, wo = w - win + 1;
    if (ho <= 0 || wo <= 0) throw ContractViolation("box_sum2d: window larger than input");
    Tensor out({ho, wo});
    for (int i = 0; i < ho; ++i) {
        for (int j = 0; j < wo; ++j) {
            real acc = 0;
            for (int di = 0; di < win; ++di)
                for (int dj = 0; dj < win; ++dj) acc += xv.at(i + di, j + dj);
            out.at(i, j) = acc;
        }
    }
    return make_op(std::move(out), {x}, [ho, wo, win](AdNode& nd) {
        nd.parents[0]->ensure_grad();
        Tensor& gx = nd.parents[0]->grad;
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
                const real g = nd.grad.at(i, j);
                for (int di = 0; di < win; ++di)
                    for (int dj = 0; dj < win; ++dj) gx.at(i + di, j + dj) += g;
            }
    });
}

Var warp_bilinear(const Var& map, const Tensor& flow) {
    const Tensor& mv = map.value();
    if (mv.rank() != 2) throw ContractViolation("warp_bilinear: rank-2 map expected");
    const int h = mv.dim(0), w = mv.dim(1);
    if (flow.rank() != 3 || flow.dim(0) != 2 || flow.dim(1) != h || flow.dim(2) != w)
        throw ContractViolation("warp_bilinear: flow resolution mismatch");
    Tensor out({h, w});
    // cache interpolation stencils for the backward scatter
    std::vector<int> x0s(static_cast<size_t>(h) * w), x1s(x0s.size()), y0s(x0s.size()),
        y1s(x0s.size());
    std::vector<real> fxs(x0s.size()), fys(x0s.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int64_t idx = static_cast<int64_t>(y) * w + x;
            real sx = x + flow.at(0, y, x);
            real sy = y + flow.at(1, y, x);
            sx = std::min(std::max(sx, 0.0), static_cast<real>(w - 1));
            sy = std::min(std::max(sy, 0.0), static_cast<real>(h - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const real fx = sx - x0, fy = sy - y0;
            x0s[idx] = x0;
            x1s[idx] = x1;
            y0s[idx] = y0;
            y1s[idx] = y1;
            fxs[idx] = fx;
            fys[idx] = fy;
            out[idx] = (1 - fy) * ((1 - fx) * mv.at(y0, x0) + fx * mv.at(y0, x1)) +
                       fy * ((1 - fx) * mv.at(y1, x0) + fx * mv.at(y1, x1));
        }
    }
    return make_op(std::move(out), {map},
                   [h, w, x0s, x1s, y0s, y1s, fxs, fys](AdNode& nd) {
                       nd.parents[0]->ensure_grad();
                       Tensor& gm = nd.parents[0]->grad;
                       for (int64_t idx = 0; idx < static_cast<int64_t>(h) * w; ++idx) {
                           const real g = nd.grad[idx];
                           const real fx = fxs[idx], fy = fys[idx];
                           gm.at(y0s[idx], x0s[idx]) += g * (1 - fy) * (1 - fx);
                           gm.at(y0s[idx], x1s[idx]) += g * (1 - fy) * fx;
                           gm.at(y1s[idx], x0s[idx]) += g * fy * (1 - fx);
                           gm.at(y1s[idx], x1s[idx]) += g * fy * fx;
                       }
                   });
}

Var cam_combine(const Tensor& features, const Var& eff_col) {
    if (features.rank() != 3) throw ContractViolation("cam_combine: rank-3 features expected");
    const int k = features.dim(0), h = features.dim(1), w = features.dim(2);
    if (eff_col.value().size() != k)
        throw ContractViolation("cam_combine: weight column size mismatch");
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({h, w});
    for (int kk = 0; kk < k; ++kk) {
        const real wv = eff_col.value()[kk];
        const real* src = features.data() + kk * hw;
        for (int64_t t = 0; t < hw; ++t) out[t] += wv * src[t];
    }
    return make_op(std::move(out), {eff_col}, [features, k, hw](AdNode& nd) {
        nd.parents[0]->ensure_grad();
        for (int kk = 0; kk < k; ++kk) {
            const real* src = features.data() + kk * hw;
            real acc = 0;
            for (int64_t t = 0; t < hw; ++t) acc += nd.grad[t] * src[t];
            nd.parents[0]->grad[kk] += acc;
        }
    });
}

// ---------------- focal loss ----------------

Var focal_loss_sum(const Var& logits, const std::vector<int>& labels, real gamma) {
    const Tensor& xv = logits.value();
    if (xv.rank() != 2) throw ContractViolation("focal_loss_sum: rank-2 logits expected");
    if (gamma < 0) throw ConfigError("focal loss: gamma must be non-negative");
    const int n = xv.dim(0), c = xv.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ContractViolation("focal_loss_sum: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= c) throw ContractViolation("focal_loss_sum: label out of range");

    Tensor probs({n, c});
    std::vector<real> logp(static_cast<size_t>(n));
    real total = 0;
    for (int i = 0; i < n; ++i) {
        real mx = xv.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, xv.at(i, j));
        real lse = 0;
        for (int j = 0; j < c; ++j) lse += std::exp(xv.at(i, j) - mx);
        lse = mx + std::log(lse);
        for (int j = 0; j < c; ++j) probs.at(i, j) = std::exp(xv.at(i, j) - lse);
        const real l = xv.at(i, labels[i]) - lse;
        logp[i] = l;
        const real u = std::max(1.0 - probs.at(i, labels[i]), 0.0);
        total += -(gamma == 0.0 ? 1.0 : std::pow(u, gamma)) * l;
    }
    return make_op(Tensor::scalar(total), {logits},
                   [n, c, labels, gamma, probs, logp](AdNode& nd) {
                       nd.parents[0]->ensure_grad();
                       Tensor& gx = nd.parents[0]->grad;
                       const real g = nd.grad[0];
                       for (int i = 0; i < n; ++i) {
                           const int y = labels[i];
                           const real p = probs.at(i, y);
                           const real u = std::max(1.0 - p, 0.0);
                           real dl;  // d(-u^g * logp) / d(logp)
                           if (gamma == 0.0) {
                               dl = -1.0;
                           } else if (u <= 0.0) {
                               dl = 0.0;
                           } else {
                               dl = gamma * p * std::pow(u, gamma - 1.0) * logp[i] -
                                    std::pow(u, gamma);
                           }
                           for (int j = 0; j < c; ++j) {
                               const real d = (j == y ? 1.0 : 0.0) - probs.at(i, j);
                               gx.at(i, j) += g * dl * d;
                           }
                       }
                   });
}

}  // namespace ctrec
