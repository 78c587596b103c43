#pragma once

#include <vector>

#include "semimtl/gradcheck.hpp"

namespace semimtl {

/// The standard gradient-check suite: every differentiable op at random
/// points (tolerance 1e-4), plus the composed generator objectives (M1, M2,
/// M3) and the discriminator objective on reduced-size networks
/// (tolerance 1e-3). Entries carry their own finite-difference step.
struct GradCheckEntry {
    GradCheckCase check;
    double h = 1e-6;
};

std::vector<GradCheckEntry> build_gradcheck_suite();

}  // namespace semimtl
