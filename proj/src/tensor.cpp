#include "metaopt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metaopt/errors.hpp"

namespace metaopt {

namespace detail {
struct TensorAccess {
    static Tensor make(Shape shape, std::shared_ptr<const std::vector<double>> data,
                       Tape* tape, std::ptrdiff_t node) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        t.tape_ = tape;
        t.node_ = node;
        return t;
    }
    static const std::shared_ptr<const std::vector<double>>& data(const Tensor& t) {
        return t.data_;
    }
};
}  // namespace detail

using detail::TensorAccess;
using Values = std::vector<double>;
using ValuesPtr = std::shared_ptr<const Values>;

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

const std::vector<double>& Tensor::values() const {
    if (!data_) throw ContractError("values() on an undefined tensor");
    return *data_;
}

double Tensor::value() const {
    if (!data_ || data_->size() != 1)
        throw ContractError("value() requires a one-element tensor, got shape " +
                            shape_str(shape_));
    return (*data_)[0];
}

bool Tensor::all_finite() const {
    if (!data_) return false;
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor constant(std::vector<double> values, Shape shape) {
    if (numel(shape) != values.size())
        throw DimensionError("constant: shape " + shape_str(shape) + " wants " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const Values>(std::move(values));
    return t;
}

Tensor scalar(double v) { return constant({v}, {1}); }

Tensor zeros(Shape shape) {
    auto n = numel(shape);
    return constant(Values(n, 0.0), std::move(shape));
}

Tensor ones(Shape shape) {
    auto n = numel(shape);
    return constant(Values(n, 1.0), std::move(shape));
}

Tensor detach(const Tensor& t) {
    Tensor out;
    out.shape_ = t.shape_;
    out.data_ = t.data_;
    return out;
}

const std::vector<double>& GradMap::at(const Tensor& leaf) const {
    auto it = grads_.find(leaf.node());
    if (it == grads_.end())
        throw ContractError("GradMap::at: tensor is not a leaf of the differentiated tape");
    return it->second;
}

bool GradMap::contains(const Tensor& leaf) const {
    return grads_.find(leaf.node()) != grads_.end();
}

Tensor Tape::leaf(std::vector<double> values, Shape shape) {
    if (numel(shape) != values.size())
        throw DimensionError("leaf: shape/value mismatch");
    auto id = record({}, PullFn{}, /*is_leaf=*/true);
    nodes_.back().leaf_size = values.size();
    return TensorAccess::make(std::move(shape),
                              std::make_shared<const Values>(std::move(values)), this, id);
}

Tensor Tape::leaf(double v) { return leaf(Values{v}, Shape{1}); }

std::ptrdiff_t Tape::record(std::vector<std::ptrdiff_t> parents, PullFn pull, bool is_leaf) {
    nodes_.push_back(Node{std::move(parents), std::move(pull), is_leaf});
    return static_cast<std::ptrdiff_t>(nodes_.size()) - 1;
}

void Tape::clear() { nodes_.clear(); }

GradMap Tape::backward(const Tensor& loss) {
    if (loss.tape() != this || !loss.on_tape())
        throw ContractError("backward: loss is not recorded on this tape");
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_str(loss.shape()));

    const auto root = loss.node();
    // One gradient buffer per node, allocated lazily, freed once propagated.
    std::vector<std::unique_ptr<Values>> grad(static_cast<std::size_t>(root) + 1);
    grad[root] = std::make_unique<Values>(Values{1.0});

    GradMap out;
    for (std::ptrdiff_t id = root; id >= 0; --id) {
        auto& g = grad[id];
        const Node& node = nodes_[id];
        if (node.is_leaf) {
            if (g && !g->empty())
                out.grads_.emplace(id, std::move(*g));
            else
                out.grads_.emplace(id, Values(node.leaf_size, 0.0));
            g.reset();
            continue;
        }
        if (!g || g->empty()) {
            g.reset();
            continue;  // not reachable from the loss
        }
        std::vector<double>* pg[5] = {nullptr, nullptr, nullptr, nullptr, nullptr};
        for (std::size_t k = 0; k < node.parents.size() && k < 5; ++k) {
            auto pid = node.parents[k];
            if (pid < 0) continue;
            if (!grad[pid]) grad[pid] = std::make_unique<Values>();
            pg[k] = grad[pid].get();
        }
        node.pull(*g, pg[0], pg[1], pg[2], pg[3], pg[4]);
        g.reset();
    }
    // Leaves outside the reached subgraph still report zero gradients.
    for (std::ptrdiff_t id = 0; id <= root; ++id)
        if (nodes_[id].is_leaf && out.grads_.find(id) == out.grads_.end())
            out.grads_.emplace(id, Values(nodes_[id].leaf_size, 0.0));
    return out;
}

// ---- op helpers -------------------------------------------------------------

namespace {

// Accumulate src into dst, resizing a fresh (empty) buffer to n zeros first.
inline void accumulate_init(std::vector<double>* dst, std::size_t n) {
    if (dst && dst->empty()) dst->assign(n, 0.0);
}

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t || !t->on_tape()) continue;
        if (tape && tape != t->tape())
            throw ContractError("operands belong to different tapes");
        tape = t->tape();
    }
    return tape;
}

inline std::ptrdiff_t node_or_neg1(const Tensor& t) { return t.on_tape() ? t.node() : -1; }

Tensor finish(Tape* tape, Shape shape, std::shared_ptr<Values> data,
              std::vector<std::ptrdiff_t> parents, Tape::PullFn pull) {
    if (!tape) return TensorAccess::make(std::move(shape), std::move(data), nullptr, -1);
    auto id = tape->record(std::move(parents), std::move(pull), false);
    return TensorAccess::make(std::move(shape), std::move(data), tape, id);
}

// C (m x n) += A (m x k) @ B (k x n)
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (m x k) += A (m x n) @ B^T, with B (k x n)
void matmul_acc_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                   std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double* brow = b + l * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[l] += acc;
        }
    }
}

// C (k x n) += A^T @ B, with A (m x k), B (m x n)
void matmul_acc_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            double* crow = c + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline double sigmoid_scalar(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus_scalar(double x) {
    // log(1 + e^x), stable on both tails
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double act_forward(Act act, double x) {
    switch (act) {
        case Act::identity: return x;
        case Act::sigmoid: return sigmoid_scalar(x);
        case Act::relu: return x > 0 ? x : 0.0;
        case Act::tanh: return std::tanh(x);
    }
    return x;
}

// Derivative expressed from the activated output.
inline double act_deriv_from_out(Act act, double y) {
    switch (act) {
        case Act::identity: return 1.0;
        case Act::sigmoid: return y * (1.0 - y);
        case Act::relu: return y > 0 ? 1.0 : 0.0;
        case Act::tanh: return 1.0 - y * y;
    }
    return 1.0;
}

void require_2d(const Tensor& t, const char* who) {
    if (t.shape().size() != 2)
        throw DimensionError(std::string(who) + ": expected a 2-D tensor, got shape " +
                             shape_str(t.shape()));
}

}  // namespace

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));

    auto out = std::make_shared<Values>(m * n, 0.0);
    matmul_acc(a.values().data(), b.values().data(), out->data(), m, k, n);

    Tape* tape = common_tape({&a, &b});
    if (!tape) return TensorAccess::make({m, n}, std::move(out), nullptr, -1);

    ValuesPtr av = TensorAccess::data(a), bv = TensorAccess::data(b);
    auto pull = [av, bv, m, k, n](const Values& up, Values* ga, Values* gb, Values*, Values*,
                                  Values*) {
        if (ga) {
            accumulate_init(ga, m * k);
            matmul_acc_bt(up.data(), bv->data(), ga->data(), m, n, k);
        }
        if (gb) {
            accumulate_init(gb, k * n);
            matmul_acc_at(av->data(), up.data(), gb->data(), m, k, n);
        }
    };
    return finish(tape, {m, n}, std::move(out), {node_or_neg1(a), node_or_neg1(b)},
                  std::move(pull));
}

// ---- elementwise binary -------------------------------------------------------

Tensor elementwise(EwBinary op, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
    if (!a_scalar && !b_scalar && a.shape() != b.shape())
        throw DimensionError("elementwise: incompatible shapes " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()) +
                             " (only scalar broadcast is supported)");
    const Shape& shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = numel(shape);
    const auto& xa = a.values();
    const auto& xb = b.values();

    auto out = std::make_shared<Values>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = xa[a_scalar ? 0 : i];
        const double y = xb[b_scalar ? 0 : i];
        double r = 0;
        switch (op) {
            case EwBinary::add: r = x + y; break;
            case EwBinary::sub: r = x - y; break;
            case EwBinary::mul: r = x * y; break;
            case EwBinary::div: r = x / y; break;
        }
        (*out)[i] = r;
    }

    Tape* tape = common_tape({&a, &b});
    if (!tape) return TensorAccess::make(shape, std::move(out), nullptr, -1);

    ValuesPtr av = TensorAccess::data(a), bv = TensorAccess::data(b);
    const std::size_t na = a.size(), nb = b.size();
    auto pull = [op, av, bv, n, na, nb, a_scalar, b_scalar](const Values& up, Values* ga,
                                                            Values* gb, Values*, Values*,
                                                            Values*) {
        accumulate_init(ga, na);
        accumulate_init(gb, nb);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (*av)[a_scalar ? 0 : i];
            const double y = (*bv)[b_scalar ? 0 : i];
            double dx = 0, dy = 0;
            switch (op) {
                case EwBinary::add: dx = 1; dy = 1; break;
                case EwBinary::sub: dx = 1; dy = -1; break;
                case EwBinary::mul: dx = y; dy = x; break;
                case EwBinary::div: dx = 1.0 / y; dy = -x / (y * y); break;
            }
            if (ga) (*ga)[a_scalar ? 0 : i] += up[i] * dx;
            if (gb) (*gb)[b_scalar ? 0 : i] += up[i] * dy;
        }
    };
    return finish(tape, shape, std::move(out), {node_or_neg1(a), node_or_neg1(b)},
                  std::move(pull));
}

// ---- elementwise unary --------------------------------------------------------

Tensor elementwise(EwUnary op, const Tensor& a) {
    const std::size_t n = a.size();
    const auto& x = a.values();
    auto out = std::make_shared<Values>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i], r = 0;
        switch (op) {
            case EwUnary::sigmoid: r = sigmoid_scalar(v); break;
            case EwUnary::relu: r = v > 0 ? v : 0.0; break;
            case EwUnary::tanh: r = std::tanh(v); break;
            case EwUnary::softplus: r = softplus_scalar(v); break;
            case EwUnary::square: r = v * v; break;
            case EwUnary::log: r = std::log(v); break;
            case EwUnary::exp: r = std::exp(v); break;
            case EwUnary::neg: r = -v; break;
        }
        (*out)[i] = r;
    }

    Tape* tape = common_tape({&a});
    if (!tape) return TensorAccess::make(a.shape(), std::move(out), nullptr, -1);

    ValuesPtr xv = TensorAccess::data(a);
    ValuesPtr yv = out;  // several partials are cheapest from the output
    auto pull = [op, xv, yv, n](const Values& up, Values* ga, Values*, Values*, Values*,
                                Values*) {
        if (!ga) return;
        accumulate_init(ga, n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (*xv)[i], y = (*yv)[i];
            double d = 0;
            switch (op) {
                case EwUnary::sigmoid: d = y * (1.0 - y); break;
                case EwUnary::relu: d = x > 0 ? 1.0 : 0.0; break;
                case EwUnary::tanh: d = 1.0 - y * y; break;
                case EwUnary::softplus: d = sigmoid_scalar(x); break;
                case EwUnary::square: d = 2.0 * x; break;
                case EwUnary::log: d = 1.0 / x; break;
                case EwUnary::exp: d = y; break;
                case EwUnary::neg: d = -1.0; break;
            }
            (*ga)[i] += up[i] * d;
        }
    };
    return finish(tape, a.shape(), std::move(out), {node_or_neg1(a)}, std::move(pull));
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwBinary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwBinary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwBinary::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(EwBinary::div, a, b); }
Tensor sigmoid(const Tensor& a) { return elementwise(EwUnary::sigmoid, a); }
Tensor relu(const Tensor& a) { return elementwise(EwUnary::relu, a); }
Tensor tanh_op(const Tensor& a) { return elementwise(EwUnary::tanh, a); }
Tensor softplus(const Tensor& a) { return elementwise(EwUnary::softplus, a); }
Tensor square(const Tensor& a) { return elementwise(EwUnary::square, a); }
Tensor log_op(const Tensor& a) { return elementwise(EwUnary::log, a); }
Tensor exp_op(const Tensor& a) { return elementwise(EwUnary::exp, a); }
Tensor neg(const Tensor& a) { return elementwise(EwUnary::neg, a); }
Tensor scale(const Tensor& a, double c) { return mul(a, scalar(c)); }

// ---- reductions / views --------------------------------------------------------

Tensor sum(const Tensor& a) {
    const auto& x = a.values();
    double s = 0;
    for (double v : x) s += v;
    auto out = std::make_shared<Values>(Values{s});

    Tape* tape = common_tape({&a});
    if (!tape) return TensorAccess::make({1}, std::move(out), nullptr, -1);

    const std::size_t n = a.size();
    auto pull = [n](const Values& up, Values* ga, Values*, Values*, Values*, Values*) {
        if (!ga) return;
        accumulate_init(ga, n);
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += up[0];
    };
    return finish(tape, {1}, std::move(out), {node_or_neg1(a)}, std::move(pull));
}

Tensor slice(const Tensor& a, std::size_t offset, std::size_t len) {
    if (offset + len > a.size())
        throw DimensionError("slice: [" + std::to_string(offset) + ", " +
                             std::to_string(offset + len) + ") exceeds size " +
                             std::to_string(a.size()));
    const auto& x = a.values();
    auto out = std::make_shared<Values>(x.begin() + offset, x.begin() + offset + len);

    Tape* tape = common_tape({&a});
    if (!tape) return TensorAccess::make({len}, std::move(out), nullptr, -1);

    const std::size_t n = a.size();
    auto pull = [offset, len, n](const Values& up, Values* ga, Values*, Values*, Values*,
                                 Values*) {
        if (!ga) return;
        accumulate_init(ga, n);
        for (std::size_t i = 0; i < len; ++i) (*ga)[offset + i] += up[i];
    };
    return finish(tape, {len}, std::move(out), {node_or_neg1(a)}, std::move(pull));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    Tape* tape = common_tape({&a});
    auto data = TensorAccess::data(a);
    if (!tape) return TensorAccess::make(std::move(shape), std::move(data), nullptr, -1);

    auto pull = [](const Values& up, Values* ga, Values*, Values*, Values*, Values*) {
        if (!ga) return;
        accumulate_init(ga, up.size());
        for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
    };
    return finish(tape, std::move(shape), std::make_shared<Values>(a.values()),
                  {node_or_neg1(a)}, std::move(pull));
}

// ---- fused dense layers ---------------------------------------------------------

namespace {

Tensor dense_impl(Act act, const Tensor& x, const Tensor& wx, const Tensor* h,
                  const Tensor* wh, const Tensor& b) {
    require_2d(x, "dense");
    require_2d(wx, "dense");
    const std::size_t m = x.shape()[0], k = x.shape()[1];
    const std::size_t n = wx.shape()[1];
    if (wx.shape()[0] != k)
        throw DimensionError("dense: x " + shape_str(x.shape()) + " does not match w " +
                             shape_str(wx.shape()));
    std::size_t kh = 0;
    if (h) {
        require_2d(*h, "dense");
        require_2d(*wh, "dense");
        kh = h->shape()[1];
        if (h->shape()[0] != m || wh->shape()[0] != kh || wh->shape()[1] != n)
            throw DimensionError("dense: recurrent operands do not match, h " +
                                 shape_str(h->shape()) + " wh " + shape_str(wh->shape()));
    }
    if (b.size() != n) throw DimensionError("dense: bias length must equal output width");

    auto out = std::make_shared<Values>(m * n);
    {
        const auto& bv = b.values();
        for (std::size_t i = 0; i < m; ++i)
            std::copy(bv.begin(), bv.end(), out->begin() + i * n);
        matmul_acc(x.values().data(), wx.values().data(), out->data(), m, k, n);
        if (h) matmul_acc(h->values().data(), wh->values().data(), out->data(), m, kh, n);
        for (auto& v : *out) v = act_forward(act, v);
    }

    Tape* tape = h ? common_tape({&x, &wx, h, wh, &b}) : common_tape({&x, &wx, &b});
    if (!tape) return TensorAccess::make({m, n}, std::move(out), nullptr, -1);

    ValuesPtr xv = TensorAccess::data(x), wxv = TensorAccess::data(wx);
    ValuesPtr hv = h ? TensorAccess::data(*h) : nullptr;
    ValuesPtr whv = wh ? TensorAccess::data(*wh) : nullptr;
    ValuesPtr yv = out;
    auto pull = [act, xv, wxv, hv, whv, yv, m, k, kh, n](const Values& up, Values* gx,
                                                         Values* gwx, Values* gh, Values* gwh,
                                                         Values* gb) {
        // d_pre = up * act'(y), then standard affine backward.
        Values dpre(m * n);
        for (std::size_t i = 0; i < m * n; ++i)
            dpre[i] = up[i] * act_deriv_from_out(act, (*yv)[i]);
        if (gx) {
            accumulate_init(gx, m * k);
            matmul_acc_bt(dpre.data(), wxv->data(), gx->data(), m, n, k);
        }
        if (gwx) {
            accumulate_init(gwx, k * n);
            matmul_acc_at(xv->data(), dpre.data(), gwx->data(), m, k, n);
        }
        if (gh && hv) {
            accumulate_init(gh, m * kh);
            matmul_acc_bt(dpre.data(), whv->data(), gh->data(), m, n, kh);
        }
        if (gwh && whv) {
            accumulate_init(gwh, kh * n);
            matmul_acc_at(hv->data(), dpre.data(), gwh->data(), m, kh, n);
        }
        if (gb) {
            accumulate_init(gb, n);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*gb)[j] += dpre[i * n + j];
        }
    };
    std::vector<std::ptrdiff_t> parents = {node_or_neg1(x), node_or_neg1(wx),
                                           h ? node_or_neg1(*h) : -1,
                                           wh ? node_or_neg1(*wh) : -1, node_or_neg1(b)};
    return finish(tape, {m, n}, std::move(out), std::move(parents), std::move(pull));
}

}  // namespace

Tensor dense(Act act, const Tensor& x, const Tensor& w, const Tensor& b) {
    return dense_impl(act, x, w, nullptr, nullptr, b);
}

Tensor dense2(Act act, const Tensor& x, const Tensor& wx, const Tensor& h, const Tensor& wh,
              const Tensor& b) {
    return dense_impl(act, x, wx, &h, &wh, b);
}

// ---- softmax cross-entropy -------------------------------------------------------

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_2d(logits, "softmax_cross_entropy");
    const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
    if (labels.size() != batch)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(batch));
    for (std::size_t i = 0; i < batch; ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw DataError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                            " outside [0, " + std::to_string(classes) + ") at row " +
                            std::to_string(i));

    const auto& z = logits.values();
    auto probs = std::make_shared<Values>(batch * classes);
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = z.data() + i * classes;
        double* prow = probs->data() + i * classes;
        double mx = row[0];
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            prow[j] = std::exp(row[j] - mx);
            denom += prow[j];
        }
        for (std::size_t j = 0; j < classes; ++j) prow[j] /= denom;
        total += (mx + std::log(denom)) - row[labels[i]];
    }
    auto out = std::make_shared<Values>(Values{total / static_cast<double>(batch)});

    Tape* tape = common_tape({&logits});
    if (!tape) return TensorAccess::make({1}, std::move(out), nullptr, -1);

    auto pull = [probs, labels, batch, classes](const Values& up, Values* ga, Values*, Values*,
                                                Values*, Values*) {
        if (!ga) return;
        accumulate_init(ga, batch * classes);
        const double scale = up[0] / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < classes; ++j) {
                double d = (*probs)[i * classes + j];
                if (static_cast<std::size_t>(labels[i]) == j) d -= 1.0;
                (*ga)[i * classes + j] += scale * d;
            }
    };
    return finish(tape, {1}, std::move(out), {node_or_neg1(logits)}, std::move(pull));
}

}  // namespace metaopt
