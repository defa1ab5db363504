#include "eegcn/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "eegcn/errors.hpp"
#include "eegcn/kernels.hpp"

namespace eegcn::ad {

namespace {

Tape& same_tape(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw ArgumentError("operands belong to different tapes");
    }
    return *a.tape();
}

Tape& tape_of(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("operation requires at least one input");
    Tape* t = xs.front().tape();
    for (const Var& v : xs) {
        if (!v.valid() || v.tape() != t) {
            throw ArgumentError("operands belong to different tapes");
        }
    }
    return *t;
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
    if (v.shape().size() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             " tensor, got shape " + shape_string(v.shape()));
    }
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

std::size_t Tape::emit(Tensor value, const char* label,
                       const std::vector<std::size_t>& inputs, BackFn back) {
    Node node;
    node.value = std::move(value);
    node.label = label;
    node.back = std::move(back);
    for (std::size_t id : inputs) {
        if (nodes_[id].needs_grad) {
            node.needs_grad = true;
            break;
        }
    }
    if (node.needs_grad) node.grad = Tensor(node.value.shape());
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Var Tape::constant(Tensor value, const char* label) {
    Node node;
    node.value = std::move(value);
    node.label = label;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, const char* label) {
    Node node;
    node.value = std::move(value);
    node.label = label;
    node.needs_grad = true;
    node.grad = Tensor(node.value.shape());
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
    auto it = placed_.find(&p);
    if (it != placed_.end()) return Var(this, it->second);
    Node node;
    node.value = p.value;
    node.label = p.name.c_str();
    node.needs_grad = true;
    node.grad = Tensor(p.value.shape());
    node.bound = &p;
    nodes_.push_back(std::move(node));
    placed_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) {
        throw StateError(std::string("gradient requested for non-differentiable node '") +
                         n.label + "'");
    }
    return n.grad;
}

const Tensor& Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (!n.needs_grad) {
        throw StateError(std::string("gradient requested for non-differentiable node '") +
                         n.label + "'");
    }
    return n.grad;
}

void Tape::backward(Var root) {
    if (!root.valid() || root.tape() != this) throw ArgumentError("backward: foreign var");
    if (backward_done_) throw StateError("backward already ran on this tape");
    Node& r = nodes_[root.id()];
    if (r.value.numel() != 1) {
        throw ArgumentError("backward requires a scalar root, got shape " +
                            r.value.shape_str());
    }
    if (!r.needs_grad) throw StateError("backward root does not require gradients");
    r.grad[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back && n.needs_grad) n.back(*this, i);
    }
    for (Node& n : nodes_) {
        if (n.bound) {
            double* dst = n.bound->grad.data();
            const double* src = n.grad.data();
            for (std::size_t k = 0; k < n.grad.numel(); ++k) dst[k] += src[k];
            n.bound->grad_ready = true;
        }
    }
    backward_done_ = true;
}

const char* Tape::first_nonfinite_label() const {
    for (const Node& n : nodes_) {
        if (!n.value.all_finite()) return n.label;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree: " +
                             shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor out({m, n});
    kernels::gemm(false, false, m, n, k, a.value().data(), b.value().data(),
                  out.data(), false);
    const std::size_t ia = a.id(), ib = b.id();
    std::size_t id = t.emit(std::move(out), "matmul", {ia, ib},
                            [ia, ib, m, n, k](Tape& t, std::size_t self) {
        const double* g = t.grad(self).data();
        if (t.needs(ia)) {
            kernels::gemm(false, true, m, k, n, g, t.value(ib).data(),
                          t.grad(ia).data(), true);
        }
        if (t.needs(ib)) {
            kernels::gemm(true, false, k, n, m, t.value(ia).data(), g,
                          t.grad(ib).data(), true);
        }
    });
    return Var(&t, id);
}

Var concat(const std::vector<Var>& xs, std::size_t axis) {
    Tape& t = tape_of(xs);
    if (xs.size() == 1) return xs[0];
    const Shape& first = xs[0].shape();
    if (axis >= first.size()) {
        throw DimensionError("concat: axis " + std::to_string(axis) +
                             " out of range for shape " + shape_string(first));
    }
    Shape out_shape = first;
    std::size_t axis_total = 0;
    for (const Var& v : xs) {
        const Shape& s = v.shape();
        if (s.size() != first.size()) {
            throw DimensionError("concat: rank mismatch: " + shape_string(first) +
                                 " vs " + shape_string(s));
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != first[i]) {
                throw DimensionError("concat: incompatible shapes " +
                                     shape_string(first) + " vs " + shape_string(s));
            }
        }
        axis_total += s[axis];
    }
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    Tensor out(out_shape);
    const std::size_t out_stride = axis_total * inner;
    std::size_t offset = 0;
    std::vector<std::size_t> ids, offsets, widths;
    for (const Var& v : xs) {
        const std::size_t width = v.shape()[axis] * inner;
        const double* src = v.value().data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::memcpy(out.data() + o * out_stride + offset, src + o * width,
                        width * sizeof(double));
        }
        ids.push_back(v.id());
        offsets.push_back(offset);
        widths.push_back(width);
        offset += width;
    }
    std::size_t id = t.emit(std::move(out), "concat", ids,
                            [ids, offsets, widths, outer, out_stride](Tape& t,
                                                                      std::size_t self) {
        const double* g = t.grad(self).data();
        for (std::size_t x = 0; x < ids.size(); ++x) {
            if (!t.needs(ids[x])) continue;
            double* dst = t.grad(ids[x]).data();
            for (std::size_t o = 0; o < outer; ++o) {
                const double* gsrc = g + o * out_stride + offsets[x];
                double* drow = dst + o * widths[x];
                for (std::size_t j = 0; j < widths[x]; ++j) drow[j] += gsrc[j];
            }
        }
    });
    return Var(&t, id);
}

Var mean_pool(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("mean_pool: empty input list");
    Tape& t = tape_of(xs);
    const Shape& shape = xs[0].shape();
    for (const Var& v : xs) {
        if (v.shape() != shape) {
            throw DimensionError("mean_pool: shape mismatch " + shape_string(shape) +
                                 " vs " + shape_string(v.shape()));
        }
    }
    const double inv = 1.0 / static_cast<double>(xs.size());
    Tensor out(shape);
    for (const Var& v : xs) {
        const double* src = v.value().data();
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += src[i];
    }
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    std::vector<std::size_t> ids;
    for (const Var& v : xs) ids.push_back(v.id());
    std::size_t id = t.emit(std::move(out), "mean_pool", ids,
                            [ids, inv](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t x : ids) {
            if (!t.needs(x)) continue;
            double* dst = t.grad(x).data();
            for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i] * inv;
        }
    });
    return Var(&t, id);
}

namespace {

Var elementwise_binary(Var a, Var b, const char* label,
                       double (*fwd)(double, double),
                       void (*bwd)(double, double, double, double&, double&)) {
    Tape& t = same_tape(a, b);
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(label) + ": shape mismatch " +
                             shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    Tensor out(a.shape());
    const double* av = a.value().data();
    const double* bv = b.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i], bv[i]);
    const std::size_t ia = a.id(), ib = b.id();
    std::size_t id = t.emit(std::move(out), label, {ia, ib},
                            [ia, ib, bwd](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const double* av = t.value(ia).data();
        const double* bv = t.value(ib).data();
        const bool na = t.needs(ia), nb = t.needs(ib);
        double* da = na ? t.grad(ia).data() : nullptr;
        double* db = nb ? t.grad(ib).data() : nullptr;
        double drop = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            bwd(av[i], bv[i], g[i], na ? da[i] : drop, nb ? db[i] : drop);
        }
    });
    return Var(&t, id);
}

}  // namespace

Var add(Var a, Var b) {
    return elementwise_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da += g;
            db += g;
        });
}

Var sub(Var a, Var b) {
    return elementwise_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da += g;
            db -= g;
        });
}

Var mul(Var a, Var b) {
    return elementwise_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da += g * y;
            db += g * x;
        });
}

Var add_n(const std::vector<Var>& xs) {
    Tape& t = tape_of(xs);
    if (xs.size() == 1) return xs[0];
    const Shape& shape = xs[0].shape();
    Tensor out(shape);
    std::vector<std::size_t> ids;
    for (const Var& v : xs) {
        if (v.shape() != shape) {
            throw DimensionError("add_n: shape mismatch " + shape_string(shape) + " vs " +
                                 shape_string(v.shape()));
        }
        const double* src = v.value().data();
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += src[i];
        ids.push_back(v.id());
    }
    std::size_t id = t.emit(std::move(out), "add_n", ids, [ids](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t x : ids) {
            if (!t.needs(x)) continue;
            double* dst = t.grad(x).data();
            for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
        }
    });
    return Var(&t, id);
}

Var add_rowvec(Var m, Var v) {
    Tape& t = same_tape(m, v);
    require_rank(m, 2, "add_rowvec");
    const std::size_t r = m.shape()[0], c = m.shape()[1];
    if (v.value().numel() != c) {
        throw DimensionError("add_rowvec: vector " + shape_string(v.shape()) +
                             " does not match row width " + std::to_string(c));
    }
    Tensor out({r, c});
    const double* mv = m.value().data();
    const double* vv = v.value().data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = mv[i * c + j] + vv[j];
    }
    const std::size_t im = m.id(), iv = v.id();
    std::size_t id = t.emit(std::move(out), "add_rowvec", {im, iv},
                            [im, iv, r, c](Tape& t, std::size_t self) {
        const double* g = t.grad(self).data();
        if (t.needs(im)) {
            double* dm = t.grad(im).data();
            for (std::size_t i = 0; i < r * c; ++i) dm[i] += g[i];
        }
        if (t.needs(iv)) {
            double* dv = t.grad(iv).data();
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) dv[j] += g[i * c + j];
            }
        }
    });
    return Var(&t, id);
}

Var scale(Var a, double s) {
    Tape& t = *a.tape();
    Tensor out(a.shape());
    const double* av = a.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * s;
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), "scale", {ia},
                            [ia, s](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const Tensor& g = t.grad(self);
        double* da = t.grad(ia).data();
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * s;
    });
    return Var(&t, id);
}

Var sum(Var a) {
    Tape& t = *a.tape();
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().numel(); ++i) s += a.value()[i];
    const std::size_t ia = a.id();
    std::size_t id = t.emit(Tensor::scalar(s), "sum", {ia},
                            [ia](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const double g = t.grad(self)[0];
        Tensor& da = t.grad(ia);
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
    });
    return Var(&t, id);
}

Var relu(Var a) {
    Tape& t = *a.tape();
    Tensor out(a.shape());
    kernels::relu(a.value().data(), out.numel(), out.data());
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), "relu", {ia},
                            [ia](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const Tensor& out = t.value(self);
        kernels::relu_backward(out.data(), t.grad(self).data(), out.numel(),
                               t.grad(ia).data());
    });
    return Var(&t, id);
}

namespace {

Var elementwise_unary(Var a, const char* label, double (*fwd)(double),
                      double (*dfd_from_out)(double)) {
    Tape& t = *a.tape();
    Tensor out(a.shape());
    const double* av = a.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i]);
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), label, {ia},
                            [ia, dfd_from_out](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const Tensor& g = t.grad(self);
        const Tensor& out = t.value(self);
        double* da = t.grad(ia).data();
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * dfd_from_out(out[i]);
    });
    return Var(&t, id);
}

}  // namespace

Var tanh(Var a) {
    return elementwise_unary(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return elementwise_unary(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double y) { return y * (1.0 - y); });
}

Var softmax_rows(Var a) {
    Tape& t = *a.tape();
    const Shape& shape = a.shape();
    if (shape.empty()) throw DimensionError("softmax_rows: scalar input");
    const std::size_t width = shape.back();
    const std::size_t rows_n = a.value().numel() / width;
    Tensor out(shape);
    const double* av = a.value().data();
    for (std::size_t r = 0; r < rows_n; ++r) {
        const double* x = av + r * width;
        double* y = out.data() + r * width;
        double mx = x[0];
        for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < width; ++j) y[j] *= inv;
    }
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), "softmax_rows", {ia},
                            [ia, rows_n, width](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const double* y = t.value(self).data();
        const double* g = t.grad(self).data();
        double* da = t.grad(ia).data();
        for (std::size_t r = 0; r < rows_n; ++r) {
            const double* yr = y + r * width;
            const double* gr = g + r * width;
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j) dot += gr[j] * yr[j];
            double* dr = da + r * width;
            for (std::size_t j = 0; j < width; ++j) dr[j] += (gr[j] - dot) * yr[j];
        }
    });
    return Var(&t, id);
}

Var dropout(Var a, double rate, bool training) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ArgumentError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return a;
    Tape& t = *a.tape();
    if (!t.rng()) throw StateError("dropout in training mode requires a tape rng");
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(a.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        mask[i] = t.rng()->uniform() < rate ? 0.0 : keep_scale;
    }
    Tensor out(a.shape());
    const double* av = a.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * mask[i];
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), "dropout", {ia},
                            [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const Tensor& g = t.grad(self);
        double* da = t.grad(ia).data();
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * mask[i];
    });
    return Var(&t, id);
}

Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
    Tape& t = *a.tape();
    require_rank(a, 2, "slice_rows");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (r0 > r1 || r1 > r) {
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + ", " +
                             std::to_string(r1) + ") out of bounds for " +
                             shape_string(a.shape()));
    }
    Tensor out({r1 - r0, c});
    std::memcpy(out.data(), a.value().data() + r0 * c, out.numel() * sizeof(double));
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), "slice_rows", {ia},
                            [ia, r0, c](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const Tensor& g = t.grad(self);
        double* da = t.grad(ia).data() + r0 * c;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    });
    return Var(&t, id);
}

Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    Tape& t = *a.tape();
    require_rank(a, 2, "slice_cols");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (c0 > c1 || c1 > c) {
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + ", " +
                             std::to_string(c1) + ") out of bounds for " +
                             shape_string(a.shape()));
    }
    const std::size_t w = c1 - c0;
    Tensor out({r, w});
    const double* av = a.value().data();
    for (std::size_t i = 0; i < r; ++i) {
        std::memcpy(out.data() + i * w, av + i * c + c0, w * sizeof(double));
    }
    const std::size_t ia = a.id();
    std::size_t id = t.emit(std::move(out), "slice_cols", {ia},
                            [ia, c0, c, w, r](Tape& t, std::size_t self) {
        if (!t.needs(ia)) return;
        const double* g = t.grad(self).data();
        double* da = t.grad(ia).data();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) da[i * c + c0 + j] += g[i * w + j];
        }
    });
    return Var(&t, id);
}

Var rows(Var table, const std::vector<int>& ids) {
    Tape& t = *table.tape();
    require_rank(table, 2, "rows");
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    Tensor out({ids.size(), d});
    const double* tv = table.value().data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw ArgumentError("rows: index " + std::to_string(id) +
                                " out of range for table " + shape_string(table.shape()));
        }
        std::memcpy(out.data() + i * d, tv + static_cast<std::size_t>(id) * d,
                    d * sizeof(double));
    }
    const std::size_t it = table.id();
    std::size_t id = t.emit(std::move(out), "rows", {it},
                            [it, ids, d](Tape& t, std::size_t self) {
        if (!t.needs(it)) return;
        const double* g = t.grad(self).data();
        double* dt = t.grad(it).data();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* drow = dt + static_cast<std::size_t>(ids[i]) * d;
            const double* grow = g + i * d;
            for (std::size_t j = 0; j < d; ++j) drow[j] += grow[j];
        }
    });
    return Var(&t, id);
}

Var eanu(Var e, Var h, Var w) {
    Tape& t = *e.tape();
    same_tape(e, h);
    same_tape(h, w);
    require_rank(e, 3, "eanu");
    require_rank(h, 2, "eanu");
    require_rank(w, 2, "eanu");
    const std::size_t n = e.shape()[0], p = e.shape()[2];
    const std::size_t d = h.shape()[1];
    if (e.shape()[1] != n || h.shape()[0] != n || w.shape()[0] != d || w.shape()[1] != d) {
        throw DimensionError("eanu: inconsistent shapes E=" + shape_string(e.shape()) +
                             " H=" + shape_string(h.shape()) +
                             " W=" + shape_string(w.shape()));
    }
    Tensor abar({n, n});
    kernels::channel_mean(e.value().data(), n, p, abar.data());
    Tensor g({n, d});
    kernels::gemm(false, false, n, d, d, h.value().data(), w.value().data(),
                  g.data(), false);
    Tensor z({n, d});
    kernels::gemm(false, false, n, d, n, abar.data(), g.data(), z.data(), false);
    Tensor out({n, d});
    kernels::relu(z.data(), z.numel(), out.data());

    const std::size_t ie = e.id(), ih = h.id(), iw = w.id();
    std::size_t id = t.emit(std::move(out), "eanu", {ie, ih, iw},
                            [ie, ih, iw, n, d, p, abar = std::move(abar),
                             g = std::move(g)](Tape& t, std::size_t self) {
        const Tensor& out = t.value(self);
        Tensor dz({n, d});
        kernels::relu_backward(out.data(), t.grad(self).data(), out.numel(), dz.data());
        if (t.needs(ie)) {
            Tensor dabar({n, n});
            kernels::gemm(false, true, n, n, d, dz.data(), g.data(), dabar.data(), false);
            kernels::channel_mean_backward(dabar.data(), n, p, t.grad(ie).data());
        }
        if (t.needs(ih) || t.needs(iw)) {
            Tensor dg({n, d});
            kernels::gemm(true, false, n, d, n, abar.data(), dz.data(), dg.data(), false);
            if (t.needs(ih)) {
                kernels::gemm(false, true, n, d, d, dg.data(), t.value(iw).data(),
                              t.grad(ih).data(), true);
            }
            if (t.needs(iw)) {
                kernels::gemm(true, false, d, d, n, t.value(ih).data(), dg.data(),
                              t.grad(iw).data(), true);
            }
        }
    });
    return Var(&t, id);
}

Var naeu(Var e, Var h, Var wu, const std::vector<std::uint8_t>* mask) {
    Tape& t = *e.tape();
    same_tape(e, h);
    same_tape(h, wu);
    require_rank(e, 3, "naeu");
    require_rank(h, 2, "naeu");
    require_rank(wu, 2, "naeu");
    const std::size_t n = e.shape()[0], p = e.shape()[2];
    const std::size_t d = h.shape()[1];
    if (e.shape()[1] != n || h.shape()[0] != n || wu.shape()[0] != p + 2 * d ||
        wu.shape()[1] != p) {
        throw DimensionError("naeu: inconsistent shapes E=" + shape_string(e.shape()) +
                             " H=" + shape_string(h.shape()) +
                             " Wu=" + shape_string(wu.shape()));
    }
    if (mask && mask->size() != n * n) {
        throw DimensionError("naeu: mask size " + std::to_string(mask->size()) +
                             " does not match n*n");
    }
    std::vector<std::uint8_t> mask_copy;
    const std::uint8_t* mask_ptr = nullptr;
    if (mask) {
        mask_copy = *mask;
        mask_ptr = mask_copy.data();
    }
    Tensor out({n, n, p});
    kernels::naeu_forward(e.value().data(), h.value().data(), wu.value().data(),
                          n, d, p, mask_ptr, out.data());
    const std::size_t ie = e.id(), ih = h.id(), iw = wu.id();
    std::size_t id = t.emit(std::move(out), "naeu", {ie, ih, iw},
                            [ie, ih, iw, n, d, p,
                             mask_copy = std::move(mask_copy)](Tape& t, std::size_t self) {
        const std::uint8_t* mp = mask_copy.empty() ? nullptr : mask_copy.data();
        // The kernel accumulates all three gradients in one sweep; unused ones
        // go to scratch buffers.
        Tensor scratch_e, scratch_h, scratch_w;
        double* de;
        double* dh;
        double* dw;
        if (t.needs(ie)) de = t.grad(ie).data();
        else { scratch_e = Tensor({n, n, p}); de = scratch_e.data(); }
        if (t.needs(ih)) dh = t.grad(ih).data();
        else { scratch_h = Tensor({n, d}); dh = scratch_h.data(); }
        if (t.needs(iw)) dw = t.grad(iw).data();
        else { scratch_w = Tensor({p + 2 * d, p}); dw = scratch_w.data(); }
        kernels::naeu_backward(t.value(ie).data(), t.value(ih).data(),
                               t.value(iw).data(), t.grad(self).data(), n, d, p, mp,
                               de, dh, dw);
    });
    return Var(&t, id);
}

Var adjacency_init(Var table, const std::vector<EdgeSlot>& slots, std::size_t n) {
    Tape& t = *table.tape();
    require_rank(table, 2, "adjacency_init");
    const std::size_t rows_n = table.shape()[0], p = table.shape()[1];
    Tensor out({n, n, p});
    const double* tv = table.value().data();
    for (const EdgeSlot& s : slots) {
        if (s.i >= n || s.j >= n) {
            throw ArgumentError("adjacency_init: edge slot out of range");
        }
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= rows_n) {
            throw ArgumentError("adjacency_init: label id " + std::to_string(s.label) +
                                " out of range");
        }
        std::memcpy(out.data() + (s.i * n + s.j) * p,
                    tv + static_cast<std::size_t>(s.label) * p, p * sizeof(double));
    }
    const std::size_t it = table.id();
    std::size_t id = t.emit(std::move(out), "adjacency_init", {it},
                            [it, slots, n, p](Tape& t, std::size_t self) {
        if (!t.needs(it)) return;
        const double* g = t.grad(self).data();
        double* dt = t.grad(it).data();
        for (const EdgeSlot& s : slots) {
            const double* gv = g + (s.i * n + s.j) * p;
            double* drow = dt + static_cast<std::size_t>(s.label) * p;
            for (std::size_t c = 0; c < p; ++c) drow[c] += gv[c];
        }
    });
    return Var(&t, id);
}

Var nll_rows(Var probs, const std::vector<int>& gold, const std::vector<double>& weights,
             double eps) {
    Tape& t = *probs.tape();
    require_rank(probs, 2, "nll_rows");
    const std::size_t n = probs.shape()[0], width = probs.shape()[1];
    if (gold.size() != n || weights.size() != n) {
        throw DimensionError("nll_rows: gold/weights length does not match row count " +
                             std::to_string(n));
    }
    double loss = 0.0;
    const double* pv = probs.value().data();
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] == 0.0) continue;
        const int g = gold[i];
        if (g < 0 || static_cast<std::size_t>(g) >= width) {
            throw ArgumentError("nll_rows: gold id " + std::to_string(g) +
                                " out of range for " + std::to_string(width) + " classes");
        }
        double pr = pv[i * width + static_cast<std::size_t>(g)];
        if (pr < eps) {
            pr = eps;
            t.count_clamp();
        }
        loss += weights[i] * (-std::log(pr));
    }
    const std::size_t ip = probs.id();
    std::size_t id = t.emit(Tensor::scalar(loss), "nll_rows", {ip},
                            [ip, gold, weights, eps, width](Tape& t, std::size_t self) {
        if (!t.needs(ip)) return;
        const double g = t.grad(self)[0];
        const double* pv = t.value(ip).data();
        double* dp = t.grad(ip).data();
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (weights[i] == 0.0) continue;
            const std::size_t idx = i * width + static_cast<std::size_t>(gold[i]);
            // Clamped rows sit on the flat part of -log(max(p, eps)).
            if (pv[idx] < eps) continue;
            dp[idx] -= g * weights[i] / pv[idx];
        }
    });
    return Var(&t, id);
}

void sgd_step(const std::vector<Parameter*>& params, double lr, double l2) {
    for (Parameter* p : params) {
        if (!p->grad_ready) {
            throw StateError("sgd_step: parameter '" + p->name + "' has no gradient");
        }
    }
    for (Parameter* p : params) {
        double* v = p->value.data();
        const double* g = p->grad.data();
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            v[i] -= lr * (g[i] + l2 * v[i]);
        }
        p->zero_grad();
    }
}

void clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const Parameter* p : params) {
        for (std::size_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= s;
    }
}

}  // namespace eegcn::ad
