#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "recam/attention.hpp"
#include "recam/encoder.hpp"
#include "recam/tensor.hpp"

namespace recam {

enum class HeadKind { SoftmaxBaseline, UniAttn, BiAttn };

HeadKind head_kind_from_string(const std::string& name);
std::string to_string(HeadKind kind);

/// Encoder output of one choice row split along the segment mask, padding
/// dropped. Positions remember where each embedding came from.
struct SplitEmbeddings {
    Tensor e_qo; // [L_qo x d]
    Tensor e_p;  // [L_p x d], zero rows when the passage is empty
    std::vector<std::size_t> qo_positions;
    std::vector<std::size_t> p_positions;
};

/// Classifier parameters. BiAttn owns two attention layers (passage->QO and
/// QO->passage) and scores a 2d fusion; UniAttn owns one self-attention
/// layer over the unsplit sequence; the softmax baseline scores the [CLS]
/// embedding directly.
struct HeadParams {
    HeadKind kind = HeadKind::BiAttn;
    std::optional<MultiHeadParams> attn_p_over_qo;
    std::optional<MultiHeadParams> attn_qo_over_p;
    Tensor score_w; // [2*d] for BiAttn, [d] otherwise
    double dropout_rate = 0.5;
    int dropout_samples = 5;

    static HeadParams init(HeadKind kind, int d_model, int num_heads, RandomSource& rng,
                           double dropout_rate = 0.5, int dropout_samples = 5);

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
};

/// Intermediate head quantities for one instance: the per-choice attention
/// outputs, pooled fusions, 5 logits and the choice distribution.
struct HeadActivation {
    std::vector<Tensor> mha1;   // per choice, when the head uses attention
    std::vector<Tensor> mha2;   // per choice, BiAttn only
    std::vector<Tensor> pooled; // O per choice
    Tensor logits;              // [5]
    Tensor distribution;        // [5]
};

std::array<SplitEmbeddings, 5> split_segments(const EncodedChoices& enc);

HeadActivation bi_attention_head(const std::array<SplitEmbeddings, 5>& splits,
                                 const HeadParams& params, bool training, RandomSource& rng);

HeadActivation uni_attention_head(const EncodedChoices& enc, const HeadParams& params,
                                  bool training, RandomSource& rng);

HeadActivation softmax_head(const EncodedChoices& enc, const HeadParams& params, bool training,
                            RandomSource& rng);

/// Scores a pooled vector: during training the average of
/// dropout_samples independent dropout masks through the scoring vector,
/// in evaluation exactly score_w . o.
Tensor multi_sample_dropout_score(const Tensor& o, const HeadParams& params, bool training,
                                  RandomSource& rng);

/// Dispatch on params.kind.
HeadActivation head_forward(const EncodedChoices& enc, const HeadParams& params, bool training,
                            RandomSource& rng);

} // namespace recam
