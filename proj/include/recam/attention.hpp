#pragma once

#include <cstdint>
#include <vector>

#include "recam/ops.hpp"
#include "recam/random.hpp"
#include "recam/tensor.hpp"

namespace recam {

/// Marks non-padding key positions for one attention call.
struct AttentionMask {
    std::vector<std::uint8_t> key_valid;

    static AttentionMask all_valid(std::size_t len) {
        return AttentionMask{std::vector<std::uint8_t>(len, 1)};
    }
};

/// Projections for one multi-head attention layer: per-head query/key/value
/// maps plus the output projection. No bias terms.
struct MultiHeadParams {
    int num_heads = 1;
    int d_model = 0;
    std::vector<Tensor> w_q; // num_heads x [d_model x d_k]
    std::vector<Tensor> w_k; // num_heads x [d_model x d_k]
    std::vector<Tensor> w_v; // num_heads x [d_model x d_v]
    Tensor w_o;              // [num_heads*d_v x d_model]

    int head_dim() const { return d_model / num_heads; }

    static MultiHeadParams init(int d_model, int num_heads, RandomSource& rng,
                                double init_scale = 0.05, bool requires_grad = true,
                                double init_scale_vo = 0.0);

    static std::size_t parameter_count(int d_model, int num_heads);

    std::vector<Tensor> parameters() const;
};

/// softmax(Q K^T / sqrt(d_k)) V with masked key positions given zero weight.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask& mask);

/// concat(head_1..head_h) W^O, each head attending over projected inputs.
Tensor multi_head_attention(const MultiHeadParams& p, const Tensor& q, const Tensor& k,
                            const Tensor& v, const AttentionMask& mask);

} // namespace recam
