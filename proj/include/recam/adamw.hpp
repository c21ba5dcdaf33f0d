#pragma once

#include <cstdint>
#include <vector>

#include "recam/tensor.hpp"

namespace recam {

struct AdamWConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with decoupled weight decay and bias correction. Holds first/second
/// moment estimates per parameter; step() consumes whatever gradients have
/// accumulated on the parameters.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});

    /// One update. Absent gradients count as zero (decay still applies).
    void step();

    void zero_grad();

    std::uint64_t step_count() const { return step_count_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

    // Serialized into checkpoints alongside the parameters.
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    void set_step_count(std::uint64_t n) { step_count_ = n; }

    /// Multiply every accumulated gradient by c (partial accumulation windows).
    void scale_grads(double c);

private:
    std::vector<Tensor> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t step_count_ = 0;
};

} // namespace recam
