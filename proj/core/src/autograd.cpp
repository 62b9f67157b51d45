#include "scenetok/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace scenetok {

namespace {

struct AxisSplit {
    std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) {
        throw TensorError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(s));
    }
    AxisSplit sp{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

Tensor checked(const char* op, Tensor t) {
    t.require_finite(op);
    return t;
}

}  // namespace

void Node::accumulate(const Tensor& g) {
    if (!grad_allocated) {
        grad = Tensor(value.shape());
        grad_allocated = true;
    }
    if (!g.same_shape(grad)) {
        throw TensorError("gradient shape " + shape_to_string(g.shape()) + " does not match value shape " +
                          shape_to_string(grad.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Var Var::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = checked("constant", std::move(t));
    n->requires_grad = false;
    n->op = "constant";
    return Var(n);
}

Var Var::leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = checked("leaf", std::move(t));
    n->requires_grad = true;
    n->op = "leaf";
    return Var(n);
}

const Tensor& Var::grad() const {
    if (!n_->grad_allocated) {
        throw TensorError("gradient requested before backward reached this node");
    }
    return n_->grad;
}

Var make_op(const char* op, Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = checked(op, std::move(value));
    n->op = op;
    n->inputs.reserve(inputs.size());
    bool needs = false;
    for (const Var& v : inputs) {
        if (!v.defined()) throw TensorError(std::string(op) + ": undefined input");
        needs = needs || v.node()->requires_grad;
        n->inputs.push_back(v.node());
    }
    n->requires_grad = needs;
    if (needs) n->backward_fn = std::move(backward_fn);
    return Var(n);
}

// --------------------------------------------------------------------------
// elementwise / structural
// --------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.same_shape(tb)) {
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
        return make_op("add", std::move(out), {a, b}, [](Node& n) {
            n.inputs[0]->accumulate(n.grad);
            n.inputs[1]->accumulate(n.grad);
        });
    }
    // bias broadcast: b is [D] over the last axis of a
    if (tb.rank() == 1 && ta.rank() >= 1 && ta.shape().back() == tb.dim(0)) {
        const std::size_t d = tb.dim(0);
        const std::size_t rows = ta.size() / d;
        Tensor out = ta;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] += tb[j];
        return make_op("add_bias", std::move(out), {a, b}, [rows, d](Node& n) {
            n.inputs[0]->accumulate(n.grad);
            Tensor gb({d});
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) gb[j] += n.grad[r * d + j];
            n.inputs[1]->accumulate(gb);
        });
    }
    if (tb.size() == 1) {
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[0];
        return make_op("add_scalar", std::move(out), {a, b}, [](Node& n) {
            n.inputs[0]->accumulate(n.grad);
            Tensor gb(n.inputs[1]->value.shape());
            for (std::size_t i = 0; i < n.grad.size(); ++i) gb[0] += n.grad[i];
            n.inputs[1]->accumulate(gb);
        });
    }
    throw TensorError("add: incompatible shapes " + shape_to_string(ta.shape()) + " and " +
                      shape_to_string(tb.shape()));
}

Var sub(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (!ta.same_shape(tb)) {
        throw TensorError("sub: incompatible shapes " + shape_to_string(ta.shape()) + " and " +
                          shape_to_string(tb.shape()));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    return make_op("sub", std::move(out), {a, b}, [](Node& n) {
        n.inputs[0]->accumulate(n.grad);
        Tensor gb = n.grad;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = -gb[i];
        n.inputs[1]->accumulate(gb);
    });
}

Var mul(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (!ta.same_shape(tb)) {
        throw TensorError("mul: incompatible shapes " + shape_to_string(ta.shape()) + " and " +
                          shape_to_string(tb.shape()));
    }
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return make_op("mul", std::move(out), {a, b}, [](Node& n) {
        const Tensor& va = n.inputs[0]->value;
        const Tensor& vb = n.inputs[1]->value;
        Tensor ga = n.grad;
        Tensor gb = n.grad;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] *= vb[i];
            gb[i] *= va[i];
        }
        n.inputs[0]->accumulate(ga);
        n.inputs[1]->accumulate(gb);
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_op("scale", std::move(out), {a}, [s](Node& n) {
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
        n.inputs[0]->accumulate(g);
    });
}

Var reshape(const Var& a, Shape shape) {
    if (shape_size(shape) != a.value().size()) {
        throw TensorError("reshape: size mismatch " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
    }
    Tensor out(shape, a.value().raw());
    return make_op("reshape", std::move(out), {a}, [](Node& n) {
        Tensor g(n.inputs[0]->value.shape(), n.grad.raw());
        n.inputs[0]->accumulate(g);
    });
}

namespace {

Tensor permute_tensor(const Tensor& in, const std::vector<std::size_t>& perm) {
    const Shape& is = in.shape();
    const std::size_t r = is.size();
    Shape os(r);
    for (std::size_t i = 0; i < r; ++i) os[i] = is[perm[i]];
    std::vector<std::size_t> istrides(r, 1);
    for (std::size_t i = r; i-- > 1;) istrides[i - 1] = istrides[i] * is[i];
    Tensor out(os);
    std::vector<std::size_t> oidx(r, 0);
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
        std::size_t ioff = 0;
        for (std::size_t i = 0; i < r; ++i) ioff += oidx[i] * istrides[perm[i]];
        out[lin] = in[ioff];
        for (std::size_t i = r; i-- > 0;) {
            if (++oidx[i] < os[i]) break;
            oidx[i] = 0;
        }
    }
    return out;
}

}  // namespace

Var transpose(const Var& a, std::vector<std::size_t> perm) {
    const std::size_t r = a.value().rank();
    if (perm.size() != r) throw TensorError("transpose: permutation rank mismatch");
    std::vector<bool> seen(r, false);
    for (std::size_t p : perm) {
        if (p >= r || seen[p]) throw TensorError("transpose: invalid permutation");
        seen[p] = true;
    }
    Tensor out = permute_tensor(a.value(), perm);
    std::vector<std::size_t> inv(r);
    for (std::size_t i = 0; i < r; ++i) inv[perm[i]] = i;
    return make_op("transpose", std::move(out), {a}, [inv](Node& n) {
        n.inputs[0]->accumulate(permute_tensor(n.grad, inv));
    });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw TensorError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw TensorError("concat: axis out of range");
    Shape os = s0;
    os[axis] = 0;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) throw TensorError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != s0[i]) {
                throw TensorError("concat: shape mismatch " + shape_to_string(s) + " vs " + shape_to_string(s0));
            }
        }
        os[axis] += s[axis];
    }
    const AxisSplit sp = split_axis(os, axis);
    Tensor out(os);
    std::size_t pos = 0;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
        const Tensor& t = p.value();
        const std::size_t na = t.dim(axis);
        sizes.push_back(na);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < na; ++j)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    out[(o * sp.n + pos + j) * sp.inner + i] = t[(o * na + j) * sp.inner + i];
        pos += na;
    }
    return make_op("concat", std::move(out), parts, [sp, sizes](Node& n) {
        std::size_t start = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            const std::size_t na = sizes[p];
            Tensor g(n.inputs[p]->value.shape());
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t j = 0; j < na; ++j)
                    for (std::size_t i = 0; i < sp.inner; ++i)
                        g[(o * na + j) * sp.inner + i] = n.grad[(o * sp.n + start + j) * sp.inner + i];
            n.inputs[p]->accumulate(g);
            start += na;
        }
    });
}

Var stack0(const std::vector<Var>& parts) {
    if (parts.empty()) throw TensorError("stack0: no inputs");
    std::vector<Var> lifted;
    lifted.reserve(parts.size());
    for (const Var& p : parts) {
        Shape s = p.shape();
        s.insert(s.begin(), 1);
        lifted.push_back(reshape(p, s));
    }
    return concat(lifted, 0);
}

Var narrow(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
    const Shape& is = a.shape();
    const AxisSplit sp = split_axis(is, axis);
    if (start + len > sp.n || len == 0) throw TensorError("narrow: range out of bounds");
    Shape os = is;
    os[axis] = len;
    Tensor out(os);
    const Tensor& t = a.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < len; ++j)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[(o * len + j) * sp.inner + i] = t[(o * sp.n + start + j) * sp.inner + i];
    return make_op("narrow", std::move(out), {a}, [sp, start, len](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < len; ++j)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    g[(o * sp.n + start + j) * sp.inner + i] = n.grad[(o * len + j) * sp.inner + i];
        n.inputs[0]->accumulate(g);
    });
}

Var mul_axis0(const Var& x, const Var& r) {
    const Tensor& tx = x.value();
    const Tensor& tr = r.value();
    if (tr.rank() != 1 || tx.rank() < 1 || tr.dim(0) != tx.dim(0)) {
        throw TensorError("mul_axis0: r must be [first axis of x]");
    }
    const std::size_t n0 = tx.dim(0);
    const std::size_t inner = tx.size() / n0;
    Tensor out = tx;
    for (std::size_t i = 0; i < n0; ++i)
        for (std::size_t j = 0; j < inner; ++j) out[i * inner + j] *= tr[i];
    return make_op("mul_axis0", std::move(out), {x, r}, [n0, inner](Node& n) {
        const Tensor& vx = n.inputs[0]->value;
        const Tensor& vr = n.inputs[1]->value;
        Tensor gx = n.grad;
        Tensor gr({n0});
        for (std::size_t i = 0; i < n0; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < inner; ++j) {
                const std::size_t off = i * inner + j;
                acc += n.grad[off] * vx[off];
                gx[off] *= vr[i];
            }
            gr[i] = acc;
        }
        n.inputs[0]->accumulate(gx);
        n.inputs[1]->accumulate(gr);
    });
}

// --------------------------------------------------------------------------
// nonlinearities / reductions
// --------------------------------------------------------------------------

Var softmax(const Var& x, std::size_t axis) {
    const Tensor& t = x.value();
    const AxisSplit sp = split_axis(t.shape(), axis);
    Tensor out(t.shape());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            double m = -HUGE_VAL;
            for (std::size_t j = 0; j < sp.n; ++j) m = std::max(m, t[(o * sp.n + j) * sp.inner + i]);
            double s = 0.0;
            for (std::size_t j = 0; j < sp.n; ++j) {
                const std::size_t off = (o * sp.n + j) * sp.inner + i;
                out[off] = std::exp(t[off] - m);
                s += out[off];
            }
            for (std::size_t j = 0; j < sp.n; ++j) out[(o * sp.n + j) * sp.inner + i] /= s;
        }
    }
    Tensor saved = out;
    return make_op("softmax", std::move(out), {x}, [sp, saved](Node& n) {
        Tensor g(saved.shape());
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < sp.n; ++j) {
                    const std::size_t off = (o * sp.n + j) * sp.inner + i;
                    dot += n.grad[off] * saved[off];
                }
                for (std::size_t j = 0; j < sp.n; ++j) {
                    const std::size_t off = (o * sp.n + j) * sp.inner + i;
                    g[off] = saved[off] * (n.grad[off] - dot);
                }
            }
        }
        n.inputs[0]->accumulate(g);
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& t = x.value();
    if (t.rank() < 1) throw TensorError("layer_norm: rank-0 input");
    const std::size_t d = t.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw TensorError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
    }
    const std::size_t rows = t.size() / d;
    Tensor xhat(t.shape());
    Tensor inv_std({rows});
    Tensor out(t.shape());
    const Tensor& g = gamma.value();
    const Tensor& b = beta.value();
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += t[r * d + j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = t[r * d + j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t off = r * d + j;
            xhat[off] = (t[off] - mu) * is;
            out[off] = g[j] * xhat[off] + b[j];
        }
    }
    return make_op("layer_norm", std::move(out), {x, gamma, beta}, [rows, d, xhat, inv_std](Node& n) {
        const Tensor& gm = n.inputs[1]->value;
        Tensor gx(n.inputs[0]->value.shape());
        Tensor gg({d});
        Tensor gb({d});
        for (std::size_t r = 0; r < rows; ++r) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t off = r * d + j;
                const double dy = n.grad[off] * gm[j];
                sum_dy += dy;
                sum_dy_xhat += dy * xhat[off];
                gg[j] += n.grad[off] * xhat[off];
                gb[j] += n.grad[off];
            }
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t off = r * d + j;
                const double dy = n.grad[off] * gm[j];
                gx[off] = inv_std[r] * (dy - sum_dy * inv_d - xhat[off] * sum_dy_xhat * inv_d);
            }
        }
        n.inputs[0]->accumulate(gx);
        n.inputs[1]->accumulate(gg);
        n.inputs[2]->accumulate(gb);
    });
}

Var gelu(const Var& x) {
    static constexpr double kC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
    static constexpr double kA = 0.044715;
    const Tensor& t = x.value();
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t[i];
        const double u = kC * (v + kA * v * v * v);
        out[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    return make_op("gelu", std::move(out), {x}, [](Node& n) {
        const Tensor& v = n.inputs[0]->value;
        Tensor g(v.shape());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double xv = v[i];
            const double u = kC * (xv + kA * xv * xv * xv);
            const double th = std::tanh(u);
            const double du = kC * (1.0 + 3.0 * kA * xv * xv);
            g[i] = n.grad[i] * (0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * du);
        }
        n.inputs[0]->accumulate(g);
    });
}

Var max_pool(const Var& x, std::size_t axis) {
    const Tensor& t = x.value();
    const AxisSplit sp = split_axis(t.shape(), axis);
    Shape os = t.shape();
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
    if (os.empty()) os = {1};
    Tensor out(os);
    std::vector<std::size_t> arg(sp.outer * sp.inner, 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            double best = t[(o * sp.n) * sp.inner + i];
            std::size_t bj = 0;
            for (std::size_t j = 1; j < sp.n; ++j) {
                const double v = t[(o * sp.n + j) * sp.inner + i];
                if (v > best) {
                    best = v;
                    bj = j;
                }
            }
            out[o * sp.inner + i] = best;
            arg[o * sp.inner + i] = bj;
        }
    }
    return make_op("max_pool", std::move(out), {x}, [sp, arg](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t i = 0; i < sp.inner; ++i)
                g[(o * sp.n + arg[o * sp.inner + i]) * sp.inner + i] = n.grad[o * sp.inner + i];
        n.inputs[0]->accumulate(g);
    });
}

namespace {

Var reduce_axis(const Var& x, std::size_t axis, bool take_mean) {
    const Tensor& t = x.value();
    const AxisSplit sp = split_axis(t.shape(), axis);
    Shape os = t.shape();
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
    if (os.empty()) os = {1};
    Tensor out(os);
    const double w = take_mean ? 1.0 / static_cast<double>(sp.n) : 1.0;
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < sp.n; ++j)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += t[(o * sp.n + j) * sp.inner + i] * w;
    const char* name = take_mean ? "mean" : "sum";
    return make_op(name, std::move(out), {x}, [sp, w](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < sp.n; ++j)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    g[(o * sp.n + j) * sp.inner + i] = n.grad[o * sp.inner + i] * w;
        n.inputs[0]->accumulate(g);
    });
}

}  // namespace

Var mean(const Var& x, std::size_t axis) { return reduce_axis(x, axis, true); }
Var sum(const Var& x, std::size_t axis) { return reduce_axis(x, axis, false); }

Var sum_all(const Var& x) {
    const Tensor& t = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
    return make_op("sum_all", Tensor({1}, {s}), {x}, [](Node& n) {
        Tensor g = Tensor::full(n.inputs[0]->value.shape(), n.grad[0]);
        n.inputs[0]->accumulate(g);
    });
}

// --------------------------------------------------------------------------
// matmul
// --------------------------------------------------------------------------

namespace {

struct MatmulPlan {
    std::size_t batches, m, k, n;
    bool a_shared, b_shared;  // rank-2 operand reused across batches
};

MatmulPlan plan_matmul(const Shape& sa, const Shape& sb) {
    if (sa.size() < 2 || sb.size() < 2) throw TensorError("matmul: operands must have rank >= 2");
    MatmulPlan p{};
    p.m = sa[sa.size() - 2];
    p.k = sa[sa.size() - 1];
    const std::size_t kb = sb[sb.size() - 2];
    p.n = sb[sb.size() - 1];
    if (p.k != kb) {
        throw TensorError("matmul: inner dimensions differ, " + shape_to_string(sa) + " x " + shape_to_string(sb));
    }
    Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
    p.a_shared = ba.empty() && !bb.empty();
    p.b_shared = bb.empty() && !ba.empty();
    if (!ba.empty() && !bb.empty() && ba != bb) {
        throw TensorError("matmul: batch dimensions differ, " + shape_to_string(sa) + " x " + shape_to_string(sb));
    }
    p.batches = shape_size(ba.empty() ? bb : ba);
    return p;
}

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
              bool ta, bool tb) {
    // c[m x n] += op(a) * op(b), op per transpose flags; a is (ta ? k x m : m x k)
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = ta ? a[kk * m + i] : a[i * k + kk];
                const double bv = tb ? b[j * k + kk] : b[kk * n + j];
                acc += av * bv;
            }
            c[i * n + j] += acc;
        }
    }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    const MatmulPlan p = plan_matmul(ta.shape(), tb.shape());

    Shape os;
    const Shape& batch_src = p.a_shared ? tb.shape() : ta.shape();
    os.assign(batch_src.begin(), batch_src.end() - 2);
    os.push_back(p.m);
    os.push_back(p.n);

    Tensor out(os);
    const std::size_t sa = p.m * p.k, sb = p.k * p.n, sc = p.m * p.n;
    for (std::size_t bi = 0; bi < p.batches; ++bi) {
        const double* pa = ta.data() + (p.a_shared ? 0 : bi * sa);
        const double* pb = tb.data() + (p.b_shared ? 0 : bi * sb);
        gemm_acc(pa, pb, out.data() + bi * sc, p.m, p.k, p.n, false, false);
    }
    return make_op("matmul", std::move(out), {a, b}, [p, sa, sb, sc](Node& n) {
        const Tensor& va = n.inputs[0]->value;
        const Tensor& vb = n.inputs[1]->value;
        Tensor ga(va.shape());
        Tensor gb(vb.shape());
        for (std::size_t bi = 0; bi < p.batches; ++bi) {
            const double* pa = va.data() + (p.a_shared ? 0 : bi * sa);
            const double* pb = vb.data() + (p.b_shared ? 0 : bi * sb);
            const double* pc = n.grad.data() + bi * sc;
            double* pga = ga.data() + (p.a_shared ? 0 : bi * sa);
            double* pgb = gb.data() + (p.b_shared ? 0 : bi * sb);
            // dA = dC * B^T  (m x k), dB = A^T * dC  (k x n)
            gemm_acc(pc, pb, pga, p.m, p.n, p.k, false, true);
            gemm_acc(pa, pc, pgb, p.k, p.m, p.n, true, false);
        }
        n.inputs[0]->accumulate(ga);
        n.inputs[1]->accumulate(gb);
    });
}

// --------------------------------------------------------------------------
// multi-head attention
// --------------------------------------------------------------------------

Var multi_head_attention(const Var& q, const Var& k, const Var& v,
                         const AttentionParams& p, std::size_t heads,
                         const Tensor* key_valid) {
    const Shape& sq = q.shape();
    const Shape& sk = k.shape();
    const Shape& sv = v.shape();
    if (sq.size() != 3 || sk.size() != 3 || sv.size() != 3) {
        throw TensorError("multi_head_attention: operands must be [B, L, D]");
    }
    const std::size_t B = sq[0], Lq = sq[1], D = sq[2];
    const std::size_t Lk = sk[1];
    if (sk[0] != B || sv[0] != B || sv[1] != Lk || sk[2] != D || sv[2] != D) {
        throw TensorError("multi_head_attention: inconsistent q/k/v shapes");
    }
    if (heads == 0 || D % heads != 0) {
        throw TensorError("multi_head_attention: D must be divisible by heads");
    }
    const std::size_t dh = D / heads;

    Var Q = add(matmul(q, p.wq), p.bq);
    Var K = add(matmul(k, p.wk), p.bk);
    Var V = add(matmul(v, p.wv), p.bv);

    Var Qh = transpose(reshape(Q, {B, Lq, heads, dh}), {0, 2, 1, 3});  // [B,H,Lq,dh]
    Var Kt = transpose(reshape(K, {B, Lk, heads, dh}), {0, 2, 3, 1});  // [B,H,dh,Lk]
    Var Vh = transpose(reshape(V, {B, Lk, heads, dh}), {0, 2, 1, 3});  // [B,H,Lk,dh]

    Var logits = scale(matmul(Qh, Kt), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (key_valid != nullptr) {
        if (key_valid->shape() != Shape{B, Lk}) {
            throw TensorError("multi_head_attention: key_valid must be [B, Lk]");
        }
        Tensor maskt({B, heads, Lq, Lk});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t i = 0; i < Lq; ++i)
                    for (std::size_t j = 0; j < Lk; ++j)
                        maskt.at(b, h, i, j) = (key_valid->at(b, j) != 0.0) ? 0.0 : -1e9;
        logits = add(logits, Var::constant(std::move(maskt)));
    }
    Var attn = softmax(logits, 3);
    Var ctx = matmul(attn, Vh);                                        // [B,H,Lq,dh]
    Var merged = reshape(transpose(ctx, {0, 2, 1, 3}), {B, Lq, D});
    return add(matmul(merged, p.wo), p.bo);
}

// --------------------------------------------------------------------------
// backward
// --------------------------------------------------------------------------

void backward(const Var& out) {
    if (!out.defined()) throw TensorError("backward: undefined output");
    if (out.value().size() != 1) {
        throw TensorError("backward: output must be scalar, got shape " + shape_to_string(out.shape()));
    }
    if (!out.node()->requires_grad) return;

    // iterative post-order DFS; order of node creation is deterministic,
    // so gradient accumulation order is too
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(out.node().get(), 0);
    visited.insert(out.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next].get();
            ++next;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    out.node()->accumulate(Tensor({1}, {1.0}));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad_allocated) n->backward_fn(*n);
    }
}

}  // namespace scenetok
