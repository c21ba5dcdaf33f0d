#include "recam/heads.hpp"

#include <algorithm>

#include "recam/errors.hpp"
#include "recam/ops.hpp"

namespace recam {

namespace {

// Wide enough that the tied query/key initialization yields decisively
// peaked attention on matching tokens from step one; wider value/output
// projections keep the pooled features large enough to train at small
// learning rates.
constexpr double kHeadAttnInitScale = 0.3;
constexpr double kHeadAttnInitScaleVO = 1.2;

} // namespace

HeadKind head_kind_from_string(const std::string& name) {
    if (name == "softmax") return HeadKind::SoftmaxBaseline;
    if (name == "uni-attn") return HeadKind::UniAttn;
    if (name == "bi-attn") return HeadKind::BiAttn;
    throw config_error("unknown head kind: " + name + " (expected softmax, uni-attn or bi-attn)");
}

std::string to_string(HeadKind kind) {
    switch (kind) {
    case HeadKind::SoftmaxBaseline: return "softmax";
    case HeadKind::UniAttn: return "uni-attn";
    case HeadKind::BiAttn: return "bi-attn";
    }
    throw config_error("invalid head kind value");
}

HeadParams HeadParams::init(HeadKind kind, int d_model, int num_heads, RandomSource& rng,
                            double dropout_rate, int dropout_samples) {
    HeadParams p;
    p.kind = kind;
    p.dropout_rate = dropout_rate;
    p.dropout_samples = dropout_samples;
    const auto d = static_cast<std::size_t>(d_model);
    switch (kind) {
    case HeadKind::SoftmaxBaseline:
        p.score_w = Tensor::zeros({d}, true);
        break;
    case HeadKind::UniAttn:
        p.attn_p_over_qo = MultiHeadParams::init(d_model, num_heads, rng, kHeadAttnInitScale, true, kHeadAttnInitScaleVO);
        p.score_w = Tensor::zeros({d}, true);
        break;
    case HeadKind::BiAttn:
        p.attn_p_over_qo = MultiHeadParams::init(d_model, num_heads, rng, kHeadAttnInitScale, true, kHeadAttnInitScaleVO);
        p.attn_qo_over_p = MultiHeadParams::init(d_model, num_heads, rng, kHeadAttnInitScale, true, kHeadAttnInitScaleVO);
        p.score_w = Tensor::zeros({2 * d}, true);
        break;
    }
    return p;
}

std::vector<std::pair<std::string, Tensor>> HeadParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto add_attn = [&out](const char* base, const MultiHeadParams& a) {
        for (int h = 0; h < a.num_heads; ++h) {
            const std::string hb = std::string(base) + ".head" + std::to_string(h) + ".";
            out.emplace_back(hb + "wq", a.w_q[static_cast<std::size_t>(h)]);
            out.emplace_back(hb + "wk", a.w_k[static_cast<std::size_t>(h)]);
            out.emplace_back(hb + "wv", a.w_v[static_cast<std::size_t>(h)]);
        }
        out.emplace_back(std::string(base) + ".wo", a.w_o);
    };
    if (attn_p_over_qo) add_attn("head.attn1", *attn_p_over_qo);
    if (attn_qo_over_p) add_attn("head.attn2", *attn_qo_over_p);
    out.emplace_back("head.score_w", score_w);
    return out;
}

std::vector<Tensor> HeadParams::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::array<SplitEmbeddings, 5> split_segments(const EncodedChoices& enc) {
    std::array<SplitEmbeddings, 5> out;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& seg = enc.seqs.segments[i];
        const auto& att = enc.seqs.attention[i];
        SplitEmbeddings& s = out[i];
        for (std::size_t p = 0; p < seg.size(); ++p) {
            if (!att[p]) continue;
            if (seg[p] == Segment::QO) s.qo_positions.push_back(p);
            else if (seg[p] == Segment::P) s.p_positions.push_back(p);
        }
        if (s.qo_positions.empty()) {
            throw data_error("split_segments: choice row " + std::to_string(i) +
                             " has an empty question-option segment");
        }
        s.e_qo = gather_rows(enc.rows[i], s.qo_positions);
        s.e_p = s.p_positions.empty()
                    ? Tensor::zeros({0, enc.rows[i].cols()})
                    : gather_rows(enc.rows[i], s.p_positions);
    }
    return out;
}

Tensor multi_sample_dropout_score(const Tensor& o, const HeadParams& params, bool training,
                                  RandomSource& rng) {
    if (params.score_w.size() != o.size()) {
        throw dimension_error("multi_sample_dropout_score: scoring vector width " +
                              std::to_string(params.score_w.size()) + " vs pooled width " +
                              std::to_string(o.size()));
    }
    if (!training || params.dropout_rate == 0.0) {
        return dot(params.score_w, o);
    }
    std::vector<Tensor> samples;
    samples.reserve(static_cast<std::size_t>(params.dropout_samples));
    for (int s = 0; s < params.dropout_samples; ++s) {
        samples.push_back(dot(params.score_w, dropout(o, params.dropout_rate, training, rng)));
    }
    return mean_scalars(samples);
}

namespace {

HeadActivation finish(std::vector<Tensor> mha1, std::vector<Tensor> mha2,
                      std::vector<Tensor> pooled, std::vector<Tensor> scores) {
    HeadActivation act;
    act.mha1 = std::move(mha1);
    act.mha2 = std::move(mha2);
    act.pooled = std::move(pooled);
    act.logits = stack_scalars(scores);
    act.distribution = softmax(act.logits, 0);
    return act;
}

} // namespace

HeadActivation bi_attention_head(const std::array<SplitEmbeddings, 5>& splits,
                                 const HeadParams& params, bool training, RandomSource& rng) {
    if (!params.attn_p_over_qo || !params.attn_qo_over_p) {
        throw config_error("bi_attention_head: params lack the two attention layers");
    }
    std::vector<Tensor> mha1, mha2, pooled, scores;
    for (std::size_t i = 0; i < 5; ++i) {
        const SplitEmbeddings& s = splits[i];
        if (s.p_positions.empty() || s.qo_positions.empty()) {
            throw degenerate_input_error("bi_attention_head: choice row " + std::to_string(i) +
                                         " has an empty segment");
        }
        const AttentionMask qo_mask = AttentionMask::all_valid(s.qo_positions.size());
        const AttentionMask p_mask = AttentionMask::all_valid(s.p_positions.size());
        // Passage queries attend over the question-option tokens, and
        // vice versa; each side is mean-pooled over its own query length.
        Tensor a1 = multi_head_attention(*params.attn_p_over_qo, s.e_p, s.e_qo, s.e_qo, qo_mask);
        Tensor a2 = multi_head_attention(*params.attn_qo_over_p, s.e_qo, s.e_p, s.e_p, p_mask);
        Tensor pool1 = mean_pool(a1, std::vector<std::uint8_t>(s.p_positions.size(), 1));
        Tensor pool2 = mean_pool(a2, std::vector<std::uint8_t>(s.qo_positions.size(), 1));
        Tensor fused = concat_vec(pool1, pool2);
        scores.push_back(multi_sample_dropout_score(fused, params, training, rng));
        mha1.push_back(std::move(a1));
        mha2.push_back(std::move(a2));
        pooled.push_back(std::move(fused));
    }
    return finish(std::move(mha1), std::move(mha2), std::move(pooled), std::move(scores));
}

HeadActivation uni_attention_head(const EncodedChoices& enc, const HeadParams& params,
                                  bool training, RandomSource& rng) {
    if (!params.attn_p_over_qo) {
        throw config_error("uni_attention_head: params lack the attention layer");
    }
    std::vector<Tensor> mha1, pooled, scores;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& valid = enc.seqs.attention[i];
        if (std::none_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; })) {
            throw degenerate_input_error("uni_attention_head: choice row " + std::to_string(i) +
                                         " is all padding");
        }
        const Tensor& x = enc.rows[i];
        Tensor a = multi_head_attention(*params.attn_p_over_qo, x, x, x, AttentionMask{valid});
        Tensor pool = mean_pool(a, valid);
        scores.push_back(multi_sample_dropout_score(pool, params, training, rng));
        mha1.push_back(std::move(a));
        pooled.push_back(std::move(pool));
    }
    return finish(std::move(mha1), {}, std::move(pooled), std::move(scores));
}

HeadActivation softmax_head(const EncodedChoices& enc, const HeadParams& params, bool training,
                            RandomSource& rng) {
    std::vector<Tensor> pooled, scores;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& valid = enc.seqs.attention[i];
        if (std::none_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; })) {
            throw degenerate_input_error("softmax_head: choice row " + std::to_string(i) +
                                         " is all padding");
        }
        Tensor cls = row(enc.rows[i], 0);
        scores.push_back(multi_sample_dropout_score(cls, params, training, rng));
        pooled.push_back(std::move(cls));
    }
    return finish({}, {}, std::move(pooled), std::move(scores));
}

HeadActivation head_forward(const EncodedChoices& enc, const HeadParams& params, bool training,
                            RandomSource& rng) {
    switch (params.kind) {
    case HeadKind::SoftmaxBaseline: return softmax_head(enc, params, training, rng);
    case HeadKind::UniAttn: return uni_attention_head(enc, params, training, rng);
    case HeadKind::BiAttn: return bi_attention_head(split_segments(enc), params, training, rng);
    }
    throw config_error("invalid head kind value");
}

} // namespace recam
