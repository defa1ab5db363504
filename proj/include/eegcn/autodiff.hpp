#ifndef EEGCN_AUTODIFF_HPP
#define EEGCN_AUTODIFF_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "eegcn/rng.hpp"
#include "eegcn/tensor.hpp"

namespace eegcn::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Named trainable tensor. Lives outside any tape; gradients from each
/// backward pass accumulate here until sgd_step consumes them.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool grad_ready = false;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() {
        grad.zero();
        grad_ready = false;
    }
};

/// Reverse-mode tape: an ordered record of executed ops. backward() replays
/// the record in exact reverse order, accumulating gradients additively, then
/// flushes gradients of parameter leaves into their Parameter objects.
/// Single-threaded per pass; kernels may use OpenMP internally.
class Tape {
public:
    explicit Tape(Rng* rng = nullptr) : rng_(rng) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value, const char* label = "const");
    Var leaf(Tensor value, const char* label = "leaf");
    /// Placing the same parameter again returns the existing node, so several
    /// forward passes on one tape share a single copy of its values.
    Var param(Parameter& p);

    /// root must be a scalar. One call per tape.
    void backward(Var root);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    Tensor& grad(std::size_t id);
    const Tensor& grad(std::size_t id) const;
    bool needs(std::size_t id) const { return nodes_[id].needs_grad; }
    const char* label(std::size_t id) const { return nodes_[id].label; }
    std::size_t size() const { return nodes_.size(); }

    /// Label of the first node holding a NaN/Inf value, or nullptr.
    const char* first_nonfinite_label() const;

    Rng* rng() const { return rng_; }

    std::size_t clamp_count() const { return clamp_count_; }
    void count_clamp() { ++clamp_count_; }

    using BackFn = std::function<void(Tape&, std::size_t self)>;
    std::size_t emit(Tensor value, const char* label,
                     const std::vector<std::size_t>& inputs, BackFn back);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated only when needs_grad
        const char* label = "";
        bool needs_grad = false;
        BackFn back;
        Parameter* bound = nullptr;
    };

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, std::size_t> placed_;
    Rng* rng_ = nullptr;
    std::size_t clamp_count_ = 0;
    bool backward_done_ = false;
};

// --- operations ------------------------------------------------------------

Var matmul(Var a, Var b);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var mean_pool(const std::vector<Var>& xs);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_n(const std::vector<Var>& xs);
Var add_rowvec(Var m, Var v);
Var scale(Var a, double s);
Var sum(Var a);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var dropout(Var a, double rate, bool training);
Var slice_rows(Var a, std::size_t r0, std::size_t r1);
Var slice_cols(Var a, std::size_t c0, std::size_t c1);
Var rows(Var table, const std::vector<int>& ids);

/// Edge-aware node update: relu(mean over channels of E[:,:,c] * H * W).
Var eanu(Var e, Var h, Var w);

/// Node-aware edge update: E'[i,j,:] = [E[i,j,:] | H[i] | H[j]] * Wu for pairs
/// in scope. mask == nullptr means all ordered pairs; otherwise only marked
/// pairs are updated and the rest are zero.
Var naeu(Var e, Var h, Var wu, const std::vector<std::uint8_t>* mask);

/// One directed edge slot of the adjacency tensor at build time.
struct EdgeSlot {
    std::size_t i, j;
    int label;
};

/// E[i,j,:] = table[label,:] for every slot, zero elsewhere. Gradients flow
/// back into the rows of the label embedding table.
Var adjacency_init(Var table, const std::vector<EdgeSlot>& slots, std::size_t n);

/// Weighted negative log-likelihood over rows of a probability matrix:
/// sum_i weights[i] * (-log max(probs[i, gold[i]], eps)). Rows with weight 0
/// are skipped entirely. Clamp events are counted on the tape.
Var nll_rows(Var probs, const std::vector<int>& gold, const std::vector<double>& weights,
             double eps = 1e-12);

/// p <- p - lr * (grad + l2 * p); gradients zeroed afterwards.
void sgd_step(const std::vector<Parameter*>& params, double lr, double l2);

/// Global-norm gradient clipping; no-op when max_norm <= 0.
void clip_gradients(const std::vector<Parameter*>& params, double max_norm);

}  // namespace eegcn::ad

#endif  // EEGCN_AUTODIFF_HPP
