#include "recam/attention.hpp"

#include <cmath>

#include "recam/errors.hpp"

namespace recam {

MultiHeadParams MultiHeadParams::init(int d_model, int num_heads, RandomSource& rng,
                                      double init_scale, bool requires_grad,
                                      double init_scale_vo) {
    if (init_scale_vo <= 0.0) init_scale_vo = init_scale;
    if (num_heads <= 0 || d_model <= 0 || d_model % num_heads != 0) {
        throw config_error("multi-head attention: d_model " + std::to_string(d_model) +
                           " not divisible by " + std::to_string(num_heads) + " heads");
    }
    MultiHeadParams p;
    p.num_heads = num_heads;
    p.d_model = d_model;
    const std::size_t dm = static_cast<std::size_t>(d_model);
    const std::size_t dk = static_cast<std::size_t>(d_model / num_heads);
    auto make = [&](std::size_t r, std::size_t c, double scl) {
        Tensor t = Tensor::zeros({r, c}, requires_grad);
        for (double& x : t.data()) x = rng.normal(0.0, scl);
        return t;
    };
    for (int h = 0; h < num_heads; ++h) {
        // Query and key start from the same matrix, so initial attention
        // logits are the PSD form (xW)(yW)^T and matching tokens already
        // attend to each other before any training.
        Tensor wq = make(dm, dk, init_scale);
        p.w_q.push_back(wq);
        p.w_k.push_back(Tensor::from_data(wq.shape(), wq.data(), requires_grad));
        p.w_v.push_back(make(dm, dk, init_scale_vo));
    }
    p.w_o = make(dm, dm, init_scale_vo); // num_heads * d_v == d_model
    return p;
}

std::size_t MultiHeadParams::parameter_count(int d_model, int num_heads) {
    const std::size_t dm = static_cast<std::size_t>(d_model);
    const std::size_t dk = dm / static_cast<std::size_t>(num_heads);
    return static_cast<std::size_t>(num_heads) * 3 * dm * dk + dm * dm;
}

std::vector<Tensor> MultiHeadParams::parameters() const {
    std::vector<Tensor> out;
    for (int h = 0; h < num_heads; ++h) {
        out.push_back(w_q[static_cast<std::size_t>(h)]);
        out.push_back(w_k[static_cast<std::size_t>(h)]);
        out.push_back(w_v[static_cast<std::size_t>(h)]);
    }
    out.push_back(w_o);
    return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask& mask) {
    if (k.rows() != v.rows()) {
        throw dimension_error("scaled_dot_attention: key length " + std::to_string(k.rows()) +
                              " vs value length " + std::to_string(v.rows()));
    }
    if (q.cols() != k.cols()) {
        throw dimension_error("scaled_dot_attention: query width " + std::to_string(q.cols()) +
                              " vs key width " + std::to_string(k.cols()));
    }
    if (mask.key_valid.size() != k.rows()) {
        throw dimension_error("scaled_dot_attention: mask length " +
                              std::to_string(mask.key_valid.size()) + " vs " +
                              std::to_string(k.rows()) + " keys");
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    Tensor weights = softmax_rows_masked(scores, mask.key_valid);
    return matmul(weights, v);
}

Tensor multi_head_attention(const MultiHeadParams& p, const Tensor& q, const Tensor& k,
                            const Tensor& v, const AttentionMask& mask) {
    if (p.d_model % p.num_heads != 0) {
        throw config_error("multi_head_attention: d_model " + std::to_string(p.d_model) +
                           " not divisible by " + std::to_string(p.num_heads) + " heads");
    }
    const std::size_t dm = static_cast<std::size_t>(p.d_model);
    if (q.cols() != dm || k.cols() != dm || v.cols() != dm) {
        throw dimension_error("multi_head_attention: feature widths must equal d_model " +
                              std::to_string(p.d_model));
    }
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(p.num_heads));
    for (int h = 0; h < p.num_heads; ++h) {
        const auto hi = static_cast<std::size_t>(h);
        Tensor qh = matmul(q, p.w_q[hi]);
        Tensor kh = matmul(k, p.w_k[hi]);
        Tensor vh = matmul(v, p.w_v[hi]);
        heads.push_back(scaled_dot_attention(qh, kh, vh, mask));
    }
    return matmul(concat_cols(heads), p.w_o);
}

} // namespace recam
