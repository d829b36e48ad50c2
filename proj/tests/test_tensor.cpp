#include "metaopt/tensor.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "metaopt/errors.hpp"
#include "metaopt/rng.hpp"
#include "test_support.hpp"

using namespace metaopt;
using metaopt::testing::max_grad_mismatch;
using metaopt::testing::numeric_gradient;

namespace {

// Independent oracle: naive triple-loop matrix multiply.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul: identity and hand arithmetic") {
    auto x = constant({1.0, -2.0, 3.0}, {3, 1});
    auto eye = constant({1, 0, 0, 0, 1, 0, 0, 0, 1}, {3, 3});
    auto ix = matmul(eye, x);
    CHECK(ix.values() == x.values());

    auto a = constant({1, 2, 3, 4}, {2, 2});
    auto b = constant({1, 1}, {2, 1});
    auto c = matmul(a, b);
    CHECK(c.values() == std::vector<double>{3.0, 7.0});
}

TEST_CASE("matmul: seeded 5x5 pair matches the triple-loop oracle") {
    Rng rng(42);
    auto av = rng.gaussian_vector(25), bv = rng.gaussian_vector(25);
    auto c = matmul(constant(av, {5, 5}), constant(bv, {5, 5}));
    auto expect = naive_matmul(av, bv, 5, 5, 5);
    for (std::size_t i = 0; i < 25; ++i) CHECK(c.values()[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("matmul: shape mismatch names both shapes") {
    auto a = constant(std::vector<double>(6, 0.0), {2, 3});
    auto b = constant(std::vector<double>(8, 0.0), {4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
    try {
        matmul(a, b);
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("elementwise: fixed points of the listed kinds") {
    CHECK(sigmoid(scalar(0.0)).value() == doctest::Approx(0.5));
    CHECK(relu(scalar(-3.0)).value() == 0.0);
    CHECK(relu(scalar(2.0)).value() == 2.0);
    CHECK(softplus(scalar(0.0)).value() == doctest::Approx(std::log(2.0)));
    CHECK(square(scalar(-3.0)).value() == 9.0);
    CHECK(add(scalar(2.0), scalar(3.0)).value() == 5.0);
    CHECK(div(scalar(1.0), scalar(4.0)).value() == 0.25);
}

TEST_CASE("elementwise: tanh on a seeded vector matches the scalar oracle") {
    Rng rng(7);
    auto v = rng.gaussian_vector(64);
    auto t = tanh_op(constant(v, {64}));
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(t.values()[i] == doctest::Approx(std::tanh(v[i])).epsilon(1e-15));
}

TEST_CASE("elementwise: incompatible shapes raise a dimension error") {
    auto a = constant({1, 2, 3}, {3});
    auto b = constant({1, 2}, {2});
    CHECK_THROWS_AS(add(a, b), DimensionError);
    // scalar broadcast is the one allowed mixing
    CHECK(add(a, scalar(1.0)).values() == std::vector<double>{2, 3, 4});
    CHECK(sub(scalar(1.0), a).values() == std::vector<double>{0, -1, -2});
}

TEST_CASE("backward: d(x^2)/dx at x=3 is 6") {
    Tape tape;
    auto x = tape.leaf(3.0);
    auto loss = square(x);
    auto grads = tape.backward(loss);
    CHECK(grads.at(x) == std::vector<double>{6.0});
}

TEST_CASE("backward: quadratic gradient matches the closed form 2W^T(Wt-y)") {
    Rng rng(123);
    auto wv = rng.gaussian_vector(100);
    auto yv = rng.gaussian_vector(10);
    auto tv = rng.gaussian_vector(10);

    Tape tape;
    auto theta = tape.leaf(tv, {10, 1});
    auto w = constant(wv, {10, 10});
    auto y = constant(yv, {10, 1});
    auto r = sub(matmul(w, theta), y);
    auto loss = sum(square(r));
    auto grads = tape.backward(loss);

    // closed form via the naive oracle
    auto wt = naive_matmul(wv, tv, 10, 10, 1);
    std::vector<double> resid(10);
    for (int i = 0; i < 10; ++i) resid[i] = wt[i] - yv[i];
    std::vector<double> expect(10, 0.0);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) expect[j] += 2.0 * wv[i * 10 + j] * resid[i];

    const auto& g = grads.at(theta);
    for (int i = 0; i < 10; ++i) CHECK(g[i] == doctest::Approx(expect[i]).epsilon(1e-8));
}

TEST_CASE("backward: non-scalar loss is a contract error") {
    Tape tape;
    auto x = tape.leaf({1, 2}, {2});
    auto y = square(x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    CHECK_THROWS_AS(tape.backward(constant({1}, {1})), ContractError);
}

TEST_CASE("backward: fan-out accumulates additively") {
    Tape tape;
    auto x = tape.leaf(2.0);
    auto loss = add(mul(x, x), mul(x, x));  // 2x^2
    auto grads = tape.backward(loss);
    CHECK(grads.at(x)[0] == doctest::Approx(8.0));
}

TEST_CASE("detach: definition and value preservation") {
    Tape tape;
    auto x = tape.leaf(1.5);
    auto w = tape.leaf(2.0);
    auto d = detach(x);
    CHECK(d.values() == x.values());
    CHECK_FALSE(d.on_tape());

    auto loss = mul(d, w);
    auto grads = tape.backward(loss);
    CHECK(grads.at(x) == std::vector<double>{0.0});
    CHECK(grads.at(w) == std::vector<double>{1.5});
}

TEST_CASE("detach: two-step unrolled toy meta-loss, hand-derived") {
    // Inner problem F(x) = x^2 with gradient 2x; two steps of x <- x - w*g,
    // meta-loss F(x1) + F(x2), starting at x0 = 2 with w = 0.1.
    const double w0 = 0.1;

    auto run = [&](bool cut_second_gradient) {
        Tape tape;
        auto w = tape.leaf(w0);
        auto x0 = constant({2.0}, {1});
        auto g1 = scale(x0, 2.0);  // constant either way: x0 is off-tape
        auto x1 = sub(x0, mul(w, g1));
        auto g2_full = scale(x1, 2.0);
        auto g2 = cut_second_gradient ? detach(g2_full) : g2_full;
        auto x2 = sub(x1, mul(w, g2));
        auto meta = add(square(x1), square(x2));
        auto grads = tape.backward(meta);
        return grads.at(w)[0];
    };

    // Hand unroll: x1 = 2 - 4w, c = 2*x1 = 3.2, x2 = x1 - w*c.
    // Detached: d/dw = 2*x1*(-4) + 2*x2*(-4 - c)         = -31.232
    // Full:     d/dw = 2*x1*(-4) + 2*x2*((-4)(1-2w) - 2*x1) = -29.184
    CHECK(run(true) == doctest::Approx(-31.232).epsilon(1e-12));
    CHECK(run(false) == doctest::Approx(-29.184).epsilon(1e-12));
    CHECK(run(true) != run(false));
}

TEST_CASE("every primitive's partials match central finite differences") {
    // One scalar program exercising each primitive at a generic seeded point;
    // inputs are kept away from relu/log/div singularities.
    Rng rng(2024);
    std::vector<double> x0 = rng.gaussian_vector(12);
    for (auto& v : x0)
        if (std::abs(v) < 0.05) v += (v >= 0 ? 0.2 : -0.2);

    struct Case {
        const char* name;
        std::function<double(const std::vector<double>&, Tape*, GradMap*)> run;
    };

    auto eval = [](auto&& build, const std::vector<double>& x, Tape* tape, GradMap* gm,
                   Tensor* leaf_out) -> double {
        Tape local;
        Tape* t = tape ? tape : &local;
        auto leaf = t->leaf(x, {x.size()});
        auto loss = build(*t, leaf);
        if (gm) {
            *gm = t->backward(loss);
            *leaf_out = leaf;
        }
        return loss.value();
    };

    auto check_program = [&](const char* name, auto&& build) {
        CAPTURE(name);
        Tape tape;
        auto leaf = tape.leaf(x0, {x0.size()});
        auto loss = build(tape, leaf);
        auto grads = tape.backward(loss);
        auto numeric = numeric_gradient(
            [&](const std::vector<double>& x) {
                Tape t2;
                auto l2 = t2.leaf(x, {x.size()});
                return build(t2, l2).value();
            },
            x0);
        bool ok = false;
        max_grad_mismatch(grads.at(leaf), numeric, 1e-5, 1e-8, 1e-8, &ok);
        CHECK(ok);
    };
    (void)eval;

    check_program("sigmoid", [](Tape&, const Tensor& x) { return sum(sigmoid(x)); });
    check_program("relu", [](Tape&, const Tensor& x) { return sum(relu(x)); });
    check_program("tanh", [](Tape&, const Tensor& x) { return sum(tanh_op(x)); });
    check_program("softplus", [](Tape&, const Tensor& x) { return sum(softplus(x)); });
    check_program("square", [](Tape&, const Tensor& x) { return sum(square(x)); });
    check_program("exp", [](Tape&, const Tensor& x) { return sum(exp_op(x)); });
    check_program("neg", [](Tape&, const Tensor& x) { return sum(neg(x)); });
    check_program("log", [](Tape&, const Tensor& x) { return sum(log_op(square(x))); });
    check_program("add_mul_sub_div", [](Tape&, const Tensor& x) {
        auto a = slice(x, 0, 6);
        auto b = slice(x, 6, 6);
        return sum(div(mul(add(a, b), sub(a, b)), add(square(b), scalar(1.0))));
    });
    check_program("matmul", [](Tape&, const Tensor& x) {
        auto a = reshape(slice(x, 0, 6), {2, 3});
        auto b = reshape(slice(x, 6, 6), {3, 2});
        return sum(square(matmul(a, b)));
    });
    check_program("dense", [](Tape&, const Tensor& x) {
        auto in = reshape(slice(x, 0, 4), {2, 2});
        auto w = reshape(slice(x, 4, 4), {2, 2});
        auto b = slice(x, 8, 2);
        return sum(dense(Act::tanh, in, w, b));
    });
    check_program("dense2", [](Tape&, const Tensor& x) {
        auto in = reshape(slice(x, 0, 2), {1, 2});
        auto wx = reshape(slice(x, 2, 4), {2, 2});
        auto h = reshape(slice(x, 6, 2), {1, 2});
        auto wh = reshape(slice(x, 8, 2), {2, 1});
        // reuse wh twice to exercise shared parents
        auto whm = matmul(wh, reshape(slice(x, 10, 2), {1, 2}));
        auto bb = slice(x, 10, 2);
        return sum(dense2(Act::sigmoid, in, wx, h, whm, bb));
    });
    check_program("softmax_cross_entropy", [](Tape&, const Tensor& x) {
        auto logits = reshape(slice(x, 0, 12), {3, 4});
        return softmax_cross_entropy(logits, {0, 3, 2});
    });
    check_program("scalar_broadcast", [](Tape&, const Tensor& x) {
        auto s = slice(x, 0, 1);
        auto v = slice(x, 1, 11);
        return sum(mul(add(v, s), div(s, add(square(s), scalar(0.5)))));
    });
}

TEST_CASE("gradient accumulation is linear in the loss combination") {
    Rng rng(99);
    auto x0 = rng.gaussian_vector(6);
    const double a = 1.7, b = -0.4;

    auto build_f = [](Tape&, const Tensor& x) { return sum(square(x)); };
    auto build_g = [](Tape&, const Tensor& x) { return sum(sigmoid(x)); };

    Tape t1;
    auto x1 = t1.leaf(x0, {6});
    auto gf = t1.backward(build_f(t1, x1)).at(x1);

    Tape t2;
    auto x2 = t2.leaf(x0, {6});
    auto gg = t2.backward(build_g(t2, x2)).at(x2);

    Tape t3;
    auto x3 = t3.leaf(x0, {6});
    auto combined = add(scale(build_f(t3, x3), a), scale(build_g(t3, x3), b));
    auto gc = t3.backward(combined).at(x3);

    for (int i = 0; i < 6; ++i)
        CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("replaying a seeded program is bitwise deterministic") {
    auto run = [] {
        Rng rng(555);
        Tape tape;
        auto x = tape.leaf(rng.gaussian_vector(16), {4, 4});
        auto w = tape.leaf(rng.gaussian_vector(16), {4, 4});
        auto y = sum(square(tanh_op(matmul(x, w))));
        auto grads = tape.backward(y);
        auto out = grads.at(x);
        auto gw = grads.at(w);
        out.insert(out.end(), gw.begin(), gw.end());
        out.push_back(y.value());
        return out;
    };
    auto r1 = run(), r2 = run();
    CHECK(r1 == r2);  // exact bit equality
}

TEST_CASE("unreached leaves report zero gradients of the right size") {
    Tape tape;
    auto used = tape.leaf(2.0);
    auto unused = tape.leaf({1, 2, 3}, {3});
    auto grads = tape.backward(square(used));
    CHECK(grads.at(unused) == std::vector<double>(3, 0.0));
}

TEST_CASE("softmax cross-entropy rejects out-of-range labels") {
    auto logits = constant(std::vector<double>(8, 0.0), {2, 4});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 4}), DataError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1, 0}), DataError);
}
