#include "recam/adamw.hpp"

#include <cmath>

#include "recam/errors.hpp"

namespace recam {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamW::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k];
        const std::vector<double>* g = p.has_grad() ? &p.node()->grad : nullptr;
        if (g && g->size() != p.size()) {
            throw argument_error("adamw: gradient size " + std::to_string(g->size()) +
                                 " does not match parameter size " + std::to_string(p.size()));
        }
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double& w = p.data()[i];
            w -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.epsilon) +
                                       cfg_.weight_decay * w);
        }
    }
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void AdamW::scale_grads(double c) {
    for (Tensor& p : params_) {
        if (!p.has_grad()) continue;
        for (double& g : p.node()->grad) g *= c;
    }
}

} // namespace recam
