#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

namespace metaopt {

class Tape;
class Tensor;

namespace detail {
struct TensorAccess;
}

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit tensor. Value semantics with shared immutable storage; ops
// never mutate their inputs. A tensor is either detached (node < 0) or
// recorded on exactly one tape. Detached tensors never contribute gradient.
class Tensor {
public:
    Tensor() = default;

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    const std::vector<double>& values() const;
    // Scalar access; throws ContractError if size() != 1.
    double value() const;

    bool on_tape() const { return node_ >= 0; }
    Tape* tape() const { return tape_; }
    std::ptrdiff_t node() const { return node_; }

    bool all_finite() const;

private:
    friend class Tape;
    friend Tensor constant(std::vector<double>, Shape);
    friend Tensor detach(const Tensor&);
    friend struct detail::TensorAccess;

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    std::ptrdiff_t node_ = -1;
};

// Detached tensor from raw values.
Tensor constant(std::vector<double> values, Shape shape);
Tensor scalar(double v);
Tensor zeros(Shape shape);
Tensor ones(Shape shape);

// Same values, no tape node.
Tensor detach(const Tensor& t);

// Gradients keyed by tape node, as returned by Tape::backward.
class GradMap {
public:
    const std::vector<double>& at(const Tensor& leaf) const;
    bool contains(const Tensor& leaf) const;

private:
    friend class Tape;
    std::unordered_map<std::ptrdiff_t, std::vector<double>> grads_;
};

// Reverse-mode gradient tape. Nodes are appended in execution order, so every
// node's parents precede it; backward is one reverse sweep that touches each
// reached node exactly once. A tape is confined to a single thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Root tensor whose gradient will be reported by backward().
    Tensor leaf(std::vector<double> values, Shape shape);
    Tensor leaf(double v);

    // d(loss)/d(leaf) for every leaf of this tape reachable from `loss`.
    // Unreached leaves report zero gradients. Throws ContractError if loss is
    // not a scalar recorded on this tape.
    GradMap backward(const Tensor& loss);

    std::size_t num_nodes() const { return nodes_.size(); }
    void clear();

    // --- internal (used by the op layer) ---
    using PullFn = std::function<void(const std::vector<double>& upstream,
                                      std::vector<double>* g0, std::vector<double>* g1,
                                      std::vector<double>* g2, std::vector<double>* g3,
                                      std::vector<double>* g4)>;
    std::ptrdiff_t record(std::vector<std::ptrdiff_t> parents, PullFn pull, bool is_leaf);

private:
    struct Node {
        std::vector<std::ptrdiff_t> parents;
        PullFn pull;
        bool is_leaf = false;
        std::size_t leaf_size = 0;
    };
    std::vector<Node> nodes_;
};

// ---- primitive operations -------------------------------------------------

enum class EwBinary { add, sub, mul, div };
enum class EwUnary { sigmoid, relu, tanh, softplus, square, log, exp, neg };
enum class Act { identity, sigmoid, relu, tanh };

// Matrix product of two 2-D tensors (m x k) x (k x n). Both parents recorded.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise binary op; shapes must match or either operand may be a scalar
// (one element), which broadcasts. No other broadcasting exists.
Tensor elementwise(EwBinary op, const Tensor& a, const Tensor& b);
Tensor elementwise(EwUnary op, const Tensor& a);

// Named wrappers.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor neg(const Tensor& a);
// a * c with a detached scalar constant.
Tensor scale(const Tensor& a, double c);

// Sum of all elements -> scalar.
Tensor sum(const Tensor& a);

// Contiguous slice of the flattened tensor -> 1-D tensor of length `len`.
Tensor slice(const Tensor& a, std::size_t offset, std::size_t len);

// Same data viewed under a new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);

// Fused dense layer: act(x @ w + b), with x (m x k), w (k x n), b (n).
// One tape node; partials are expressed from the activated output.
Tensor dense(Act act, const Tensor& x, const Tensor& w, const Tensor& b);

// Fused two-input dense layer: act(x @ wx + h @ wh + b).
Tensor dense2(Act act, const Tensor& x, const Tensor& wx, const Tensor& h,
              const Tensor& wh, const Tensor& b);

// Mean softmax cross-entropy over rows of `logits` (batch x classes) against
// integer labels. Throws DataError if a label falls outside the class range.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace metaopt
