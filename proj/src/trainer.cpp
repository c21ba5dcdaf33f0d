#include "recam/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "recam/errors.hpp"
#include "recam/ops.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blocks are written as little-endian doubles");

namespace recam {

void TrainConfig::validate() const {
    if (learning_rate <= 0 || train_batch_size < 1 || eval_batch_size < 1 || epochs < 0 ||
        grad_accumulation_steps < 1) {
        throw config_error("train config: rates, batch sizes and accumulation must be positive");
    }
    if (val_check_interval <= 0 || val_check_interval > 1) {
        throw config_error("train config: val_check_interval must lie in (0, 1]");
    }
    if (dropout_rate < 0 || dropout_rate >= 1) {
        throw config_error("train config: dropout_rate must lie in [0, 1)");
    }
}

std::string metrics_to_jsonl_line(const MetricsEntry& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["split"] = e.split;
    j["loss"] = e.loss;
    j["accuracy"] = e.accuracy;
    return j.dump();
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
    auto out = encoder.named_parameters();
    for (auto& p : head.named_parameters()) out.push_back(p);
    return out;
}

std::vector<Tensor> Model::trainable_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        if (t.requires_grad()) out.push_back(t);
    }
    return out;
}

Model make_model(const Vocabulary& vocab, EncoderConfig cfg, HeadKind kind, std::uint64_t seed,
                 double dropout_rate, int dropout_samples, bool freeze_encoder) {
    cfg.vocab_size = vocab.size();
    cfg.freeze_encoder = freeze_encoder;
    cfg.validate();
    RandomSource root(seed);
    RandomSource enc_rng = root.fork(1);
    RandomSource head_rng = root.fork(2);

    Model m;
    m.vocab = vocab;
    m.enc_cfg = cfg;
    m.encoder = EncoderParams::init(cfg, enc_rng, /*trainable=*/!freeze_encoder);
    m.head = HeadParams::init(kind, cfg.d_hidden, cfg.num_heads, head_rng, dropout_rate,
                              dropout_samples);
    m.freeze_encoder = freeze_encoder;
    return m;
}

HeadActivation instance_forward(const Model& model, const RecamInstance& inst, bool training,
                                RandomSource& rng, EncodeCache* cache) {
    const ChoiceSequences* seqs = nullptr;
    if (cache) {
        auto it = cache->seqs.find(&inst);
        if (it == cache->seqs.end()) {
            it = cache->seqs.emplace(&inst, build_choice_sequences(inst, model.vocab, model.enc_cfg))
                     .first;
        }
        seqs = &it->second;
    }
    ChoiceSequences local_seqs;
    if (!seqs) {
        local_seqs = build_choice_sequences(inst, model.vocab, model.enc_cfg);
        seqs = &local_seqs;
    }

    if (model.freeze_encoder && cache) {
        auto it = cache->encoded.find(&inst);
        if (it == cache->encoded.end()) {
            it = cache->encoded.emplace(&inst, encode(*seqs, model.enc_cfg, model.encoder)).first;
        }
        return head_forward(it->second, model.head, training, rng);
    }
    return head_forward(encode(*seqs, model.enc_cfg, model.encoder), model.head, training, rng);
}

namespace {

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

} // namespace

EvalResult evaluate_accuracy(const Model& model, const DatasetSplit& data, EncodeCache* cache) {
    if (data.instances.empty()) {
        throw data_error("evaluate_accuracy: split \"" + data.name + "\" is empty");
    }
    if (!data.labeled()) {
        throw data_error("evaluate_accuracy: split \"" + data.name + "\" has unlabeled instances");
    }
    EncodeCache local;
    if (!cache) cache = &local;
    RandomSource unused(0);

    EvalResult res;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (const RecamInstance& inst : data.instances) {
        HeadActivation act = instance_forward(model, inst, /*training=*/false, unused, cache);
        const int pred = argmax_lowest(act.logits.data());
        res.predictions.push_back(pred);
        if (pred == *inst.label) ++correct;
        loss_sum += cross_entropy(act.logits, *inst.label).item();
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(data.instances.size());
    res.mean_loss = loss_sum / static_cast<double>(data.instances.size());
    return res;
}

Checkpoint snapshot_checkpoint(const Model& model, const AdamW* optimizer,
                               const RandomSource* rng, const TrainProgress& progress,
                               const std::vector<MetricsEntry>& metrics) {
    Checkpoint ck;
    ck.enc_cfg = model.enc_cfg;
    ck.head_kind = model.head.kind;
    ck.freeze_encoder = model.freeze_encoder;
    ck.dropout_rate = model.head.dropout_rate;
    ck.dropout_samples = model.head.dropout_samples;
    ck.vocab_tokens.assign(model.vocab.tokens().begin() + Vocabulary::reserved_count,
                           model.vocab.tokens().end());
    for (auto& [name, t] : model.named_parameters()) {
        ck.blocks.emplace_back("param." + name, t.data());
    }
    if (optimizer) {
        ck.opt_cfg = optimizer->config();
        ck.opt_step_count = optimizer->step_count();
        // Moments follow the trainable-parameter order; keyed by name.
        std::size_t k = 0;
        for (auto& [name, t] : model.named_parameters()) {
            if (!t.requires_grad()) continue;
            ck.blocks.emplace_back("adamw.m." + name, optimizer->first_moments()[k]);
            ck.blocks.emplace_back("adamw.v." + name, optimizer->second_moments()[k]);
            ++k;
        }
    }
    if (rng) ck.rng_state = rng->serialize_state();
    ck.progress = progress;
    ck.metrics = metrics;
    return ck;
}

namespace {

nlohmann::ordered_json encoder_config_to_json(const EncoderConfig& c) {
    nlohmann::ordered_json j;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["d_hidden"] = c.d_hidden;
    j["max_seq_len"] = c.max_seq_len;
    j["vocab_size"] = c.vocab_size;
    j["ffn_width"] = c.ffn_width;
    j["freeze_encoder"] = c.freeze_encoder;
    return j;
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.d_hidden = j.at("d_hidden").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.ffn_width = j.at("ffn_width").get<int>();
    c.freeze_encoder = j.at("freeze_encoder").get<bool>();
    return c;
}

constexpr const char* kCheckpointMagic = "RECAM-CKPT 1";

} // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::ordered_json j;
    j["format_version"] = ck.format_version;
    j["encoder_config"] = encoder_config_to_json(ck.enc_cfg);
    j["head"] = {{"kind", to_string(ck.head_kind)},
                 {"dropout_rate", ck.dropout_rate},
                 {"dropout_samples", ck.dropout_samples}};
    j["freeze_encoder"] = ck.freeze_encoder;
    j["vocab_tokens"] = ck.vocab_tokens;
    j["optimizer"] = {{"learning_rate", ck.opt_cfg.learning_rate},
                      {"weight_decay", ck.opt_cfg.weight_decay},
                      {"beta1", ck.opt_cfg.beta1},
                      {"beta2", ck.opt_cfg.beta2},
                      {"epsilon", ck.opt_cfg.epsilon},
                      {"step_count", ck.opt_step_count}};
    j["rng_state"] = ck.rng_state;
    j["progress"] = {{"step_count", ck.progress.step_count},
                     {"epoch_index", ck.progress.epoch_index},
                     {"micro_index", ck.progress.micro_index}};
    nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
    for (const MetricsEntry& e : ck.metrics) {
        metrics.push_back({{"step", e.step},
                           {"split", e.split},
                           {"loss", e.loss},
                           {"accuracy", e.accuracy}});
    }
    j["metrics"] = std::move(metrics);
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    for (const auto& [name, block] : ck.blocks) {
        manifest.push_back({{"name", name}, {"count", block.size()}});
    }
    j["manifest"] = std::move(manifest);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("save_checkpoint: cannot write " + path);
    out << kCheckpointMagic << '\n' << j.dump() << '\n';
    for (const auto& [name, block] : ck.blocks) {
        out.write(reinterpret_cast<const char*>(block.data()),
                  static_cast<std::streamsize>(block.size() * sizeof(double)));
    }
    if (!out) throw data_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("load_checkpoint: cannot read " + path);
    std::string magic;
    if (!std::getline(in, magic) || magic != kCheckpointMagic) {
        throw format_error("load_checkpoint: " + path + " is not a version-1 checkpoint");
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw format_error("load_checkpoint: " + path + " is missing its header");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw format_error("load_checkpoint: malformed header in " + path + ": " + e.what());
    }

    Checkpoint ck;
    try {
        ck.format_version = j.at("format_version").get<int>();
        if (ck.format_version != 1) {
            throw format_error("load_checkpoint: unsupported format version " +
                               std::to_string(ck.format_version));
        }
        ck.enc_cfg = encoder_config_from_json(j.at("encoder_config"));
        ck.head_kind = head_kind_from_string(j.at("head").at("kind").get<std::string>());
        ck.dropout_rate = j.at("head").at("dropout_rate").get<double>();
        ck.dropout_samples = j.at("head").at("dropout_samples").get<int>();
        ck.freeze_encoder = j.at("freeze_encoder").get<bool>();
        ck.vocab_tokens = j.at("vocab_tokens").get<std::vector<std::string>>();
        const auto& opt = j.at("optimizer");
        ck.opt_cfg.learning_rate = opt.at("learning_rate").get<double>();
        ck.opt_cfg.weight_decay = opt.at("weight_decay").get<double>();
        ck.opt_cfg.beta1 = opt.at("beta1").get<double>();
        ck.opt_cfg.beta2 = opt.at("beta2").get<double>();
        ck.opt_cfg.epsilon = opt.at("epsilon").get<double>();
        ck.opt_step_count = opt.at("step_count").get<std::uint64_t>();
        ck.rng_state = j.at("rng_state").get<std::string>();
        const auto& prog = j.at("progress");
        ck.progress.step_count = prog.at("step_count").get<std::uint64_t>();
        ck.progress.epoch_index = prog.at("epoch_index").get<std::uint64_t>();
        ck.progress.micro_index = prog.at("micro_index").get<std::uint64_t>();
        for (const auto& e : j.at("metrics")) {
            ck.metrics.push_back({e.at("step").get<std::uint64_t>(),
                                  e.at("split").get<std::string>(), e.at("loss").get<double>(),
                                  e.at("accuracy").get<double>()});
        }
        for (const auto& m : j.at("manifest")) {
            ck.blocks.emplace_back(m.at("name").get<std::string>(),
                                   std::vector<double>(m.at("count").get<std::size_t>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error("load_checkpoint: header of " + path +
                           " is missing fields: " + e.what());
    }

    for (auto& [name, block] : ck.blocks) {
        in.read(reinterpret_cast<char*>(block.data()),
                static_cast<std::streamsize>(block.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(block.size() * sizeof(double))) {
            throw format_error("load_checkpoint: " + path + " is truncated at block " + name);
        }
    }
    return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
    Vocabulary vocab;
    for (const std::string& t : ck.vocab_tokens) vocab.add_token(t);
    Model m = make_model(vocab, ck.enc_cfg, ck.head_kind, /*seed=*/0, ck.dropout_rate,
                         ck.dropout_samples, ck.freeze_encoder);
    std::unordered_map<std::string, const std::vector<double>*> by_name;
    for (const auto& [name, block] : ck.blocks) by_name.emplace(name, &block);
    for (auto& [name, t] : m.named_parameters()) {
        auto it = by_name.find("param." + name);
        if (it == by_name.end()) {
            throw format_error("checkpoint: missing parameter block " + name);
        }
        if (it->second->size() != t.size()) {
            throw format_error("checkpoint: parameter " + name + " has " +
                               std::to_string(it->second->size()) + " values, expected " +
                               std::to_string(t.size()));
        }
        Tensor tt = t;
        tt.data() = *it->second;
    }
    return m;
}

namespace {

void restore_optimizer(AdamW& optimizer, const Model& model, const Checkpoint& ck) {
    std::unordered_map<std::string, const std::vector<double>*> by_name;
    for (const auto& [name, block] : ck.blocks) by_name.emplace(name, &block);
    std::size_t k = 0;
    for (auto& [name, t] : model.named_parameters()) {
        if (!t.requires_grad()) continue;
        auto m_it = by_name.find("adamw.m." + name);
        auto v_it = by_name.find("adamw.v." + name);
        if (m_it == by_name.end() || v_it == by_name.end()) {
            throw format_error("checkpoint: missing optimizer moments for " + name);
        }
        optimizer.first_moments()[k] = *m_it->second;
        optimizer.second_moments()[k] = *v_it->second;
        ++k;
    }
    optimizer.set_step_count(ck.opt_step_count);
}

void write_checkpoint_files(const TrainOptions& opts, const Checkpoint& last,
                            const std::optional<Checkpoint>& best) {
    if (opts.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(opts.checkpoint_dir);
    save_checkpoint(last, opts.checkpoint_dir + "/last.ckpt");
    if (best) save_checkpoint(*best, opts.checkpoint_dir + "/best.ckpt");
}

} // namespace

TrainResult train(Model& model, const DatasetSplit& train_split, const DatasetSplit* dev_split,
                  const TrainConfig& cfg, const TrainOptions& opts, const Checkpoint* resume) {
    cfg.validate();
    if (train_split.instances.empty()) {
        throw data_error("train: training split is empty");
    }
    if (!train_split.labeled()) {
        throw data_error("train: training split has unlabeled instances");
    }

    model.head.dropout_rate = cfg.dropout_rate;

    AdamWConfig opt_cfg;
    opt_cfg.learning_rate = cfg.learning_rate;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW optimizer(model.trainable_parameters(), opt_cfg);
    RandomSource rng(splitmix64(cfg.seed ^ 0x7261696e21ULL));

    TrainResult result;
    TrainProgress progress;
    if (resume) {
        restore_optimizer(optimizer, model, *resume);
        rng.restore_state(resume->rng_state);
        progress = resume->progress;
        result.metrics = resume->metrics;
    }

    const std::size_t n = train_split.instances.size();
    const std::size_t batch = static_cast<std::size_t>(cfg.train_batch_size);
    const std::size_t micro_per_epoch = (n + batch - 1) / batch;
    const std::size_t accum = static_cast<std::size_t>(cfg.grad_accumulation_steps);
    const std::size_t opt_steps_per_epoch = (micro_per_epoch + accum - 1) / accum;
    const auto total_micro = static_cast<std::size_t>(
        std::llround(cfg.epochs * static_cast<double>(micro_per_epoch)));
    const std::size_t val_every = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.val_check_interval *
                                               static_cast<double>(opt_steps_per_epoch))));

    EncodeCache train_cache, dev_cache;
    std::uint64_t last_validated_step = 0;

    auto validate = [&](std::uint64_t step) {
        if (!dev_split) return;
        const EvalResult dev = evaluate_accuracy(model, *dev_split, &dev_cache);
        result.metrics.push_back({step, "dev", dev.mean_loss, dev.accuracy});
        last_validated_step = step;
        if (dev.accuracy > result.best_dev_accuracy) {
            result.best_dev_accuracy = dev.accuracy;
            result.best = snapshot_checkpoint(model, &optimizer, &rng, progress, result.metrics);
        }
    };

    std::size_t consumed = progress.epoch_index * micro_per_epoch + progress.micro_index;
    std::size_t pending = 0;
    double window_loss_sum = 0.0;
    std::size_t window_correct = 0, window_count = 0;

    while (consumed < total_micro) {
        // Epoch order comes from the seed and epoch index alone, so a
        // resumed run replays the same order without the main stream.
        RandomSource order_rng(splitmix64(cfg.seed ^ (0x45504f43ULL + progress.epoch_index)));
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        order_rng.shuffle(order);

        while (progress.micro_index < micro_per_epoch && consumed < total_micro) {
            const std::size_t begin = progress.micro_index * batch;
            const std::size_t end = std::min(begin + batch, n);
            std::vector<Tensor> losses;
            for (std::size_t i = begin; i < end; ++i) {
                const RecamInstance& inst = train_split.instances[order[i]];
                HeadActivation act =
                    instance_forward(model, inst, /*training=*/true, rng, &train_cache);
                losses.push_back(cross_entropy(act.logits, *inst.label));
                window_correct +=
                    argmax_lowest(act.logits.data()) == *inst.label ? 1 : 0;
                ++window_count;
                window_loss_sum += losses.back().item();
            }
            Tensor micro_loss =
                scale(mean_scalars(losses), 1.0 / static_cast<double>(accum));
            micro_loss.backward();
            ++pending;
            ++progress.micro_index;
            ++consumed;

            if (pending == accum || consumed == total_micro) {
                if (pending < accum) {
                    // Partial tail window: undo the full-window scaling.
                    optimizer.scale_grads(static_cast<double>(accum) /
                                          static_cast<double>(pending));
                }
                optimizer.step();
                optimizer.zero_grad();
                ++progress.step_count;
                pending = 0;
                result.metrics.push_back(
                    {progress.step_count, "train",
                     window_loss_sum / static_cast<double>(window_count),
                     static_cast<double>(window_correct) / static_cast<double>(window_count)});
                window_loss_sum = 0.0;
                window_correct = window_count = 0;

                if (dev_split && progress.step_count % val_every == 0) {
                    validate(progress.step_count);
                    Checkpoint last_ck =
                        snapshot_checkpoint(model, &optimizer, &rng, progress, result.metrics);
                    write_checkpoint_files(opts, last_ck, result.best);
                }
            }
        }
        if (progress.micro_index >= micro_per_epoch) {
            ++progress.epoch_index;
            progress.micro_index = 0;
        }
    }

    if (dev_split && last_validated_step != progress.step_count) {
        validate(progress.step_count);
    }
    result.optimizer_steps = progress.step_count;
    result.last = snapshot_checkpoint(model, &optimizer, &rng, progress, result.metrics);
    write_checkpoint_files(opts, result.last, result.best);
    return result;
}

} // namespace recam
