#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recam/attention.hpp"
#include "recam/data.hpp"
#include "recam/tensor.hpp"
#include "recam/vocab.hpp"

namespace recam {

struct EncoderConfig {
    int num_layers = 2;
    int num_heads = 4;
    int d_hidden = 64;
    int max_seq_len = 256;
    int vocab_size = 0;
    int ffn_width = 256;
    bool freeze_encoder = true;

    void validate() const;
};

enum class Segment : std::uint8_t { QO, P, Pad };

/// Five option-filled rows per instance, each exactly max_seq_len long:
/// [CLS] question-with-option [SEP] article [SEP] padding.
struct ChoiceSequences {
    std::array<std::vector<int>, 5> token_ids;
    std::array<std::vector<Segment>, 5> segments;
    std::array<std::vector<std::uint8_t>, 5> attention; // 1 = real token
    std::size_t max_seq_len = 0;
};

/// Encoder output per instance: one [L x d_hidden] tensor per choice row,
/// with the masks the sequences were built with.
struct EncodedChoices {
    std::vector<Tensor> rows; // 5 tensors
    ChoiceSequences seqs;
};

struct EncoderLayerParams {
    Tensor ln1_gain, ln1_bias;
    MultiHeadParams attn;
    Tensor ln2_gain, ln2_bias;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

/// Pre-norm transformer encoder parameters: token + learned positional
/// embeddings, num_layers blocks, final layer norm.
struct EncoderParams {
    Tensor token_embedding;    // [vocab_size x d_hidden]
    Tensor position_embedding; // [max_seq_len x d_hidden]
    std::vector<EncoderLayerParams> layers;
    Tensor final_gain, final_bias;

    static EncoderParams init(const EncoderConfig& cfg, RandomSource& rng, bool trainable);

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    void set_requires_grad(bool v);
};

/// Builds the five option-filled sequences for one instance. Throws
/// data_error when the placeholder is missing or the question alone
/// exceeds max_seq_len - 3.
ChoiceSequences build_choice_sequences(const RecamInstance& inst, const Vocabulary& v,
                                       const EncoderConfig& cfg);

/// One row through the encoder: embeddings, num_layers pre-norm blocks,
/// final layer norm. Padding positions are excluded from attention keys.
Tensor encode_row(const std::vector<int>& ids, const std::vector<std::uint8_t>& valid,
                  const EncoderConfig& cfg, const EncoderParams& params);

EncodedChoices encode(const ChoiceSequences& seqs, const EncoderConfig& cfg,
                      const EncoderParams& params);

struct MlmStats {
    std::size_t eligible = 0;
    std::size_t masked = 0;
};

/// One masked-language-model step: Bernoulli(0.15) masking over non-special
/// positions (at least one), prediction through the tied token embedding,
/// mean cross-entropy over masked positions.
Tensor mlm_pretrain_step(const std::vector<std::vector<int>>& batch_rows,
                         const EncoderConfig& cfg, const EncoderParams& params,
                         RandomSource& rng, MlmStats* stats = nullptr);

/// Chops a corpus file (one document per line) into [CLS] ... [SEP] rows of
/// at most max_seq_len tokens for pretraining.
std::vector<std::vector<int>> make_mlm_rows(const std::string& corpus_path, const Vocabulary& v,
                                            const EncoderConfig& cfg);

} // namespace recam
