#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "recam/data.hpp"
#include "recam/random.hpp"
#include "recam/tensor.hpp"

namespace test_support {

inline recam::Tensor random_tensor(const std::vector<std::size_t>& shape, recam::RandomSource& rng,
                                   double scale = 1.0, bool requires_grad = false) {
    recam::Tensor t = recam::Tensor::zeros(shape, requires_grad);
    for (double& v : t.data()) v = rng.normal(0.0, scale);
    return t;
}

struct FdReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
};

/// Central finite differences against already-populated analytic gradients.
/// loss_fn must re-run the forward pass from the current parameter values.
inline FdReport finite_difference_check(
    const std::vector<std::pair<std::string, recam::Tensor>>& params,
    const std::function<double()>& loss_fn, double step = 1e-4) {
    // Copy out the analytic gradients first; loss_fn calls do not touch them.
    std::vector<std::vector<double>> analytic;
    for (const auto& [name, p] : params) {
        analytic.push_back(p.has_grad() ? p.node()->grad : std::vector<double>(p.size(), 0.0));
    }

    FdReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        recam::Tensor p = params[k].second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p.data()[i];
            p.data()[i] = orig + step;
            const double lp = loss_fn();
            p.data()[i] = orig - step;
            const double lm = loss_fn();
            p.data()[i] = orig;
            const double fd = (lp - lm) / (2.0 * step);
            const double a = analytic[k][i];
            const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[k].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

/// The cloze sample about Abenomics used across the data-path tests.
inline recam::RecamInstance abenomics_instance() {
    recam::RecamInstance inst;
    inst.id = 1;
    inst.article =
        "... observers have even named it after him, \"Abenomics\". It is based on three key "
        "pillars -- the \"three arrows\" of monetary policy, fiscal stimulus and structural "
        "reforms in order to ensure long-term sustainable growth in the world's third-largest "
        "economy. In this weekend's upper house elections, ....";
    inst.question = "Abenomics: The @placeholder and the risks";
    inst.options = {"chances", "prospective", "security", "objectives", "threats"};
    inst.label = 3;
    return inst;
}

} // namespace test_support
