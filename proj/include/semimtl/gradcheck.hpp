#pragma once

#include <functional>
#include <string>
#include <vector>

#include "semimtl/tensor.hpp"

namespace semimtl {

/// A scalar-valued expression together with the leaves it is differentiated
/// against. build() must be a pure function of the leaf values.
struct GradCheckCase {
    std::string name;
    std::vector<Tensor> leaves;
    std::function<Tensor()> build;
    double tol = 1e-4;
};

/// Compares tape gradients against central finite differences. Returns the
/// maximum over all leaf coordinates of |analytic - fd| / max(1, |fd|).
double gradcheck_max_rel_error(const GradCheckCase& check, double h = 1e-6);

}  // namespace semimtl
