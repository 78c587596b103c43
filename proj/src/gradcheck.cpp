#include "semimtl/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace semimtl {

double gradcheck_max_rel_error(const GradCheckCase& check, double h) {
    for (const Tensor& leaf : check.leaves) {
        if (!leaf.requires_grad()) {
            throw std::invalid_argument("gradcheck: leaf does not require grad in case " + check.name);
        }
    }

    // Analytic pass.
    std::vector<std::vector<double>> analytic;
    {
        for (Tensor leaf : check.leaves) {
            leaf.zero_grad();
        }
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = check.build();
        }
        if (!loss.defined() || loss.size() != 1) {
            throw std::invalid_argument("gradcheck: expression must be scalar in case " + check.name);
        }
        tape.backward(loss);
        for (const Tensor& leaf : check.leaves) {
            auto g = leaf.grad();
            analytic.emplace_back(g.begin(), g.end());
            if (analytic.back().empty()) {
                analytic.back().assign(static_cast<std::size_t>(leaf.size()), 0.0);
            }
        }
    }

    // Central differences, one coordinate at a time, forward-only evaluation.
    double max_rel = 0.0;
    for (std::size_t li = 0; li < check.leaves.size(); ++li) {
        Tensor leaf = check.leaves[li];
        auto vals = leaf.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double f_plus = check.build().item();
            vals[i] = saved - h;
            const double f_minus = check.build().item();
            vals[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double rel = std::abs(analytic[li][i] - fd) / std::max(1.0, std::abs(fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace semimtl
