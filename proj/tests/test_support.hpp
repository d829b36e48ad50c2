#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "metaopt/rng.hpp"
#include "metaopt/tensor.hpp"

namespace metaopt::testing {

// Scalar-valued program over a flat parameter vector, rebuilt per evaluation.
using ScalarProgram = std::function<double(const std::vector<double>&)>;

// Central finite differences, the independent oracle for every gradient test.
inline std::vector<double> numeric_gradient(const ScalarProgram& f, std::vector<double> x,
                                            double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = f(x);
        x[i] = x0 - h;
        const double fm = f(x);
        x[i] = x0;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Gradient agreement at the tolerances used throughout: relative error below
// rel_tol where the gradient is meaningfully nonzero, absolute error below
// abs_tol otherwise. Returns the worst relative error seen (0 if all small).
inline double max_grad_mismatch(const std::vector<double>& analytic,
                                const std::vector<double>& numeric, double rel_tol = 1e-5,
                                double abs_tol = 1e-8, double grad_floor = 1e-8,
                                bool* ok = nullptr) {
    double worst = 0.0;
    bool pass = analytic.size() == numeric.size();
    for (std::size_t i = 0; pass && i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double mag = std::max(std::abs(a), std::abs(n));
        if (mag > grad_floor) {
            const double rel = std::abs(a - n) / mag;
            worst = std::max(worst, rel);
            if (rel >= rel_tol) pass = false;
        } else if (std::abs(a - n) >= abs_tol) {
            pass = false;
        }
    }
    if (ok) *ok = pass;
    return worst;
}

inline std::string mnist_dir() {
    if (const char* env = std::getenv("METAOPT_MNIST_DIR")) return env;
    return "data/mnist";
}

}  // namespace metaopt::testing
