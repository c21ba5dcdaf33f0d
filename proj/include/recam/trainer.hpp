#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "recam/adamw.hpp"
#include "recam/data.hpp"
#include "recam/encoder.hpp"
#include "recam/heads.hpp"

namespace recam {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    int train_batch_size = 2;
    int eval_batch_size = 2;
    double epochs = 1.0;
    double val_check_interval = 0.2;
    double dropout_rate = 0.5;
    int grad_accumulation_steps = 32;
    std::uint64_t seed = 1;
    HeadKind head_kind = HeadKind::BiAttn;
    bool freeze_encoder = true;

    void validate() const;
};

struct MetricsEntry {
    std::uint64_t step = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
};

std::string metrics_to_jsonl_line(const MetricsEntry& e);

/// Encoder + head + the vocabulary they were built against.
struct Model {
    Vocabulary vocab;
    EncoderConfig enc_cfg;
    EncoderParams encoder;
    HeadParams head;
    bool freeze_encoder = true;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> trainable_parameters() const;
};

Model make_model(const Vocabulary& vocab, EncoderConfig cfg, HeadKind kind, std::uint64_t seed,
                 double dropout_rate = 0.5, int dropout_samples = 5, bool freeze_encoder = true);

/// Memoizes per-instance sequences, and encoder outputs when the encoder is
/// frozen (its output is then a pure function of the sequence).
struct EncodeCache {
    std::unordered_map<const RecamInstance*, ChoiceSequences> seqs;
    std::unordered_map<const RecamInstance*, EncodedChoices> encoded;
};

/// Head activation for one instance; rng only consumed when training.
HeadActivation instance_forward(const Model& model, const RecamInstance& inst, bool training,
                                RandomSource& rng, EncodeCache* cache = nullptr);

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::vector<int> predictions;
};

/// Evaluation-mode accuracy over a labeled split; argmax ties go to the
/// lowest option index.
EvalResult evaluate_accuracy(const Model& model, const DatasetSplit& data,
                             EncodeCache* cache = nullptr);

struct TrainProgress {
    std::uint64_t step_count = 0;  // optimizer steps
    std::uint64_t epoch_index = 0;
    std::uint64_t micro_index = 0; // consumed micro-batches within epoch
};

/// Self-contained training state: everything needed to evaluate and to
/// resume training exactly where it stopped.
struct Checkpoint {
    int format_version = 1;
    EncoderConfig enc_cfg;
    HeadKind head_kind = HeadKind::BiAttn;
    bool freeze_encoder = true;
    double dropout_rate = 0.5;
    int dropout_samples = 5;
    std::vector<std::string> vocab_tokens; // regular tokens, reserved block implied
    std::vector<std::pair<std::string, std::vector<double>>> blocks;
    AdamWConfig opt_cfg;
    std::uint64_t opt_step_count = 0;
    std::string rng_state;
    TrainProgress progress;
    std::vector<MetricsEntry> metrics;
};

Checkpoint snapshot_checkpoint(const Model& model, const AdamW* optimizer,
                               const RandomSource* rng, const TrainProgress& progress,
                               const std::vector<MetricsEntry>& metrics);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Model model_from_checkpoint(const Checkpoint& ck);

struct TrainOptions {
    std::string checkpoint_dir; // when set, last.ckpt/best.ckpt land here
};

struct TrainResult {
    std::vector<MetricsEntry> metrics;
    std::uint64_t optimizer_steps = 0;
    Checkpoint last;
    std::optional<Checkpoint> best;
    double best_dev_accuracy = -1.0;
};

/// Fine-tuning loop: micro-batches with gradient accumulation, one AdamW
/// step per accumulation window, periodic dev validation with dev-best
/// checkpoint retention. Deterministic for a fixed config and seed.
TrainResult train(Model& model, const DatasetSplit& train_split, const DatasetSplit* dev_split,
                  const TrainConfig& cfg, const TrainOptions& opts = {},
                  const Checkpoint* resume = nullptr);

} // namespace recam
