#ifndef SPAE_AUTOGRAD_HPP
#define SPAE_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spae/kernels.hpp"
#include "spae/sparse_tensor.hpp"

namespace spae {

// A differentiable activation: sparse tensor value plus a gradient buffer of
// the same shape.
struct Node {
    SparseTensor st;
    Matrix grad;
};
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(SparseTensor st);

// Trainable tensor with its gradient and optimizer slots.
struct Param {
    std::vector<int64_t> dims;
    std::vector<real> value;
    std::vector<real> grad;
    std::vector<real> m; // adam first moment / sgd momentum
    std::vector<real> v; // adam second moment

    void resize(std::vector<int64_t> d) {
        dims = std::move(d);
        int64_t n = 1;
        for (int64_t x : dims) n *= x;
        value.assign(static_cast<size_t>(n), real(0));
        grad.assign(static_cast<size_t>(n), real(0));
        m.assign(static_cast<size_t>(n), real(0));
        v.assign(static_cast<size_t>(n), real(0));
    }
    int64_t size() const { return static_cast<int64_t>(value.size()); }
};

// Reverse-mode record of one training step. Operations are replayed in
// reverse; every value buffer is written once per forward pass.
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    void backward() {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }
    void clear() { ops_.clear(); }
    size_t size() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
};

// What a training-mode Sparsify layer saw: which input rows were kept (the
// encoder pattern P) and which were dropped (N). f values are channel 0 of
// the recorded input.
struct SparsifierRecord {
    int level = 0;
    NodePtr input;
    std::vector<int32_t> kept_rows;
    std::vector<int32_t> dropped_rows;

    real f_value(int32_t row) const { return input->st.feats.at(row, 0); }
};

struct LossReport {
    real mse = 0;
    std::vector<std::pair<int, real>> sparsifier_losses; // (level, value)
    real total = 0;
    std::vector<real> term_weights; // weight of MSE then each sparsifier term
};

// Per-pass execution state threaded through every layer.
struct ExecContext {
    bool training = false;
    bool update_bn_stats = true; // frozen during finite-difference checks
    Tape* tape = nullptr;        // null: value-only pass
    std::vector<SparsifierRecord> sparsifier_records;

    bool grad() const { return tape != nullptr; }
};

/// Reconstruction error over the shared active set. Requires the output
/// pattern to match the input pattern exactly (training-mode contract).
real mse_loss(const SparseTensor& input, const SparseTensor& output);

/// Squared-hinge sparsification loss for one level:
/// sum_P max(1-f,0)^2 + sum_N max(1+f,0)^2.
real sparsifier_loss(const SparsifierRecord& rec);

/// Weighted sum of the reconstruction MSE and one hinge term per Sparsify
/// level (coarse to fine). The MSE term is dropped for monochrome outputs.
/// Records gradient seeding on the tape when one is present.
LossReport hierarchical_loss(const SparseTensor& input, const NodePtr& output,
                             std::vector<SparsifierRecord>& records,
                             const std::vector<real>& weights, bool monochrome, Tape* tape);

/// Mean softmax cross-entropy over logit rows; seeds gradients on the tape.
real softmax_cross_entropy(const NodePtr& logits, const std::vector<int>& labels, Tape* tape);

/// Row-wise softmax probabilities (no tape).
Matrix softmax(const Matrix& logits);

struct OptimizerConfig {
    enum class Kind { Adam, Sgd };
    Kind kind = Kind::Adam;
    kern::AdamConfig adam;
    kern::SgdConfig sgd;
};

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    void zero_grad(const std::vector<Param*>& params) {
        for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), real(0));
    }
    void step(const std::vector<Param*>& params);

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }

private:
    OptimizerConfig cfg_;
    int64_t t_ = 0;
};

} // namespace spae

#endif
