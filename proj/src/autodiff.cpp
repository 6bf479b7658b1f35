#include "allnc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "allnc/errors.hpp"
#include "allnc/kernels.hpp"

namespace allnc::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::append(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return append(std::move(n));
}

Var Tape::parameter(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return append(std::move(n));
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (const Var& p : parents) {
        if (&p.tape() != this) throw ContractError("operands belong to different tapes");
        n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return append(std::move(n));
}

Var Tape::stop_gradient(Var x) {
    Node n;
    if (replay_) {
        if (replay_cursor_ >= replay_->size()) throw ContractError("stop_gradient: replay list exhausted");
        const Tensor& v = (*replay_)[replay_cursor_++];
        if (!v.same_shape(nodes_[x.id()].value)) throw DimensionError("stop_gradient: replayed value has wrong shape");
        n.value = v;
    } else {
        n.value = nodes_[x.id()].value;
    }
    stopped_.push_back(n.value);
    return append(std::move(n));
}

void Tape::replay_stopped(const std::vector<Tensor>* values) {
    replay_ = values;
    replay_cursor_ = 0;
}

const Tensor& Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.has_grad) return n.grad;
    // Stable zero tensor per node so references survive further calls.
    if (zero_cache_.size() < nodes_.size()) zero_cache_.resize(nodes_.size());
    Tensor& z = zero_cache_[id];
    if (!z.same_shape(n.value)) z = Tensor(n.value.shape(), 0.0);
    return z;
}

Tensor* Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), 0.0);
        n.has_grad = true;
    }
    return &n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    Tensor* buf = grad_buffer(id);
    if (buf == nullptr) return;
    kernels::active().axpy(1.0, g.data().data(), buf->data().data(), buf->size());
}

void Tape::backward(Var root) {
    if (&root.tape() != this) throw ContractError("backward: root belongs to another tape");
    if (nodes_[root.id()].value.size() != 1) {
        throw ContractError("backward: root must be scalar, got shape " +
                            shape_string(nodes_[root.id()].value.shape()));
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    Tensor* seed = grad_buffer(root.id());
    if (seed == nullptr) return;
    (*seed)[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.backward) continue;
        // The callback may grow no nodes, so the reference stays valid.
        n.backward(*this, n.grad);
    }
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    kernels::active().axpy(1.0, b.value().data().data(), out.data().data(), out.size());
    const auto ia = a.id(), ib = b.id();
    return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a.value(), b.value());
    Tensor out = a.value();
    kernels::active().axpy(-1.0, b.value().data().data(), out.data().data(), out.size());
    const auto ia = a.id(), ib = b.id();
    return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        t.accumulate(ia, g);
        if (Tensor* gb = t.grad_buffer(ib)) kernels::active().axpy(-1.0, g.data().data(), gb->data().data(), g.size());
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_buffer(ia)) {
            const Tensor& bv = t.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        }
        if (Tensor* gb = t.grad_buffer(ib)) {
            const Tensor& av = t.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    kernels::active().scal(s, out.data().data(), out.size());
    const auto ia = a.id();
    return a.tape().push(std::move(out), {a}, [ia, s](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_buffer(ia)) kernels::active().axpy(s, g.data().data(), ga->data().data(), g.size());
    });
}

namespace {

Var row_broadcast(Var x, Var r, double sign, const char* op) {
    const Tensor& xv = x.value();
    const Tensor& rv = r.value();
    if (rv.size() != xv.cols()) {
        throw DimensionError(std::string(op) + ": row of " + std::to_string(rv.size()) + " for matrix " +
                             shape_string(xv.shape()));
    }
    Tensor out = xv;
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < out.rows(); ++i) k.axpy(sign, rv.data().data(), out.row(i).data(), out.cols());
    const auto ix = x.id(), ir = r.id();
    return x.tape().push(std::move(out), {x, r}, [ix, ir, sign](Tape& t, const Tensor& g) {
        t.accumulate(ix, g);
        if (Tensor* gr = t.grad_buffer(ir)) {
            const auto& kk = kernels::active();
            for (std::size_t i = 0; i < g.rows(); ++i) kk.axpy(sign, g.row(i).data(), gr->data().data(), g.cols());
        }
    });
}

}  // namespace

Var add_row(Var x, Var r) { return row_broadcast(x, r, 1.0, "add_row"); }
Var sub_row(Var x, Var r) { return row_broadcast(x, r, -1.0, "sub_row"); }

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    }
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out = Tensor::matrix(m, n);
    kernels::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
    const auto ia = a.id(), ib = b.id();
    return a.tape().push(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_buffer(ia)) {
            kernels::gemm_nt(g.data().data(), t.value(ib).data().data(), ga->data().data(), m, n, k);
        }
        if (Tensor* gb = t.grad_buffer(ib)) {
            kernels::gemm_tn(t.value(ia).data().data(), g.data().data(), gb->data().data(), k, m, n);
        }
    });
}

Var transpose(Var a) {
    Tensor out = allnc::transpose(a.value());
    const auto ia = a.id();
    const Shape in_shape = a.value().shape();
    return a.tape().push(std::move(out), {a}, [ia, in_shape](Tape& t, const Tensor& g) {
        t.accumulate(ia, allnc::transpose(g).reshaped(in_shape));
    });
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    const auto ia = a.id();
    return a.tape().push(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_buffer(ia)) kernels::active().axpy(1.0, g.data().data(), ga->data().data(), g.size());
    });
}

Var relu(Var x) {
    Tensor out = x.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    const auto ix = x.id();
    return x.tape().push(std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(ix);
        if (gx == nullptr) return;
        const Tensor& xv = t.value(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0.0) (*gx)[i] += g[i];
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    const auto ix = x.id();
    return x.tape().push(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(ix);
        if (gx == nullptr) return;
        for (double& v : gx->data()) v += g[0];
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (m == 0) throw ContractError("mean_rows: empty matrix");
    Tensor out(Shape{n}, 0.0);
    const double inv = 1.0 / static_cast<double>(m);
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < m; ++i) k.axpy(inv, xv.row(i).data(), out.data().data(), n);
    const auto ix = x.id();
    return x.tape().push(std::move(out), {x}, [ix, m, n, inv](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(ix);
        if (gx == nullptr) return;
        const auto& kk = kernels::active();
        for (std::size_t i = 0; i < m; ++i) kk.axpy(inv, g.data().data(), gx->data().data() + i * n, n);
    });
}

Var dot(Var a, Var b) {
    if (a.value().size() != b.value().size()) {
        throw DimensionError("dot: " + shape_string(a.value().shape()) + " vs " + shape_string(b.value().shape()));
    }
    const double d = kernels::active().dot(a.value().data().data(), b.value().data().data(), a.value().size());
    const auto ia = a.id(), ib = b.id();
    return a.tape().push(Tensor::scalar(d), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        const auto& k = kernels::active();
        if (Tensor* ga = t.grad_buffer(ia)) k.axpy(g[0], t.value(ib).data().data(), ga->data().data(), ga->size());
        if (Tensor* gb = t.grad_buffer(ib)) k.axpy(g[0], t.value(ia).data().data(), gb->data().data(), gb->size());
    });
}

Var sum_squares(Var x) {
    const auto d = x.value().data();
    const double s = kernels::active().dot(d.data(), d.data(), d.size());
    const auto ix = x.id();
    return x.tape().push(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_buffer(ix)) {
            kernels::active().axpy(2.0 * g[0], t.value(ix).data().data(), gx->data().data(), gx->size());
        }
    });
}

Var frobenius_norm(Var x) {
    const double nrm = allnc::frobenius_norm(x.value());
    if (nrm == 0.0) throw DegenerateInputError("frobenius_norm: zero tensor has no gradient");
    const auto ix = x.id();
    return x.tape().push(Tensor::scalar(nrm), {x}, [ix, nrm](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_buffer(ix)) {
            kernels::active().axpy(g[0] / nrm, t.value(ix).data().data(), gx->data().data(), gx->size());
        }
    });
}

Var normalize_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    const auto& k = kernels::active();
    Tensor out = xv;
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double nrm = std::sqrt(k.dot(xv.row(i).data(), xv.row(i).data(), n));
        if (nrm == 0.0) throw DegenerateInputError("l2 normalization of zero vector (row " + std::to_string(i) + ")");
        norms[i] = nrm;
        k.scal(1.0 / nrm, out.row(i).data(), n);
    }
    Tensor unit = out;
    const auto ix = x.id();
    // dx_i = (g_i - y_i <y_i, g_i>) / |x_i|
    return x.tape().push(std::move(out), {x},
                         [ix, m, n, unit = std::move(unit), norms = std::move(norms)](Tape& t, const Tensor& g) {
                             Tensor* gx = t.grad_buffer(ix);
                             if (gx == nullptr) return;
                             const auto& kk = kernels::active();
                             for (std::size_t i = 0; i < m; ++i) {
                                 const double* yi = unit.data().data() + i * n;
                                 const double* gi = g.data().data() + i * n;
                                 double* out_i = gx->data().data() + i * n;
                                 const double proj = kk.dot(yi, gi, n);
                                 const double inv = 1.0 / norms[i];
                                 kk.axpy(inv, gi, out_i, n);
                                 kk.axpy(-proj * inv, yi, out_i, n);
                             }
                         });
}

Var l2_normalize(Var v) { return normalize_rows(v); }

Var rowwise_dot(Var a, Var b) {
    require_same_shape("rowwise_dot", a.value(), b.value());
    const Tensor& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out(Shape{m}, 0.0);
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < m; ++i) out[i] = k.dot(av.row(i).data(), b.value().row(i).data(), n);
    const auto ia = a.id(), ib = b.id();
    return a.tape().push(std::move(out), {a, b}, [ia, ib, m, n](Tape& t, const Tensor& g) {
        const auto& kk = kernels::active();
        if (Tensor* ga = t.grad_buffer(ia)) {
            const Tensor& bv = t.value(ib);
            for (std::size_t i = 0; i < m; ++i) kk.axpy(g[i], bv.row(i).data(), ga->data().data() + i * n, n);
        }
        if (Tensor* gb = t.grad_buffer(ib)) {
            const Tensor& av2 = t.value(ia);
            for (std::size_t i = 0; i < m; ++i) kk.axpy(g[i], av2.row(i).data(), gb->data().data() + i * n, n);
        }
    });
}

Var log_softmax_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        auto row = out.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        for (double& v : row) v -= lse;
    }
    Tensor logp = out;
    const auto ix = x.id();
    // dx_ij = g_ij - softmax_ij * sum_k g_ik
    return x.tape().push(std::move(out), {x}, [ix, m, n, logp = std::move(logp)](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(ix);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < m; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
            for (std::size_t j = 0; j < n; ++j) {
                (*gx)[i * n + j] += g[i * n + j] - std::exp(logp[i * n + j]) * gsum;
            }
        }
    });
}

Var pick(Var x, std::span<const std::size_t> index) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (index.size() != m) {
        throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + std::to_string(m) + " rows");
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tensor out(Shape{m}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        if (idx[i] >= n) throw ContractError("pick: index " + std::to_string(idx[i]) + " out of range");
        out[i] = xv(i, idx[i]);
    }
    const auto ix = x.id();
    return x.tape().push(std::move(out), {x}, [ix, n, idx = std::move(idx)](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(ix);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < idx.size(); ++i) (*gx)[i * n + idx[i]] += g[i];
    });
}

}  // namespace allnc::ad
