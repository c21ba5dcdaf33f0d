#include "recam/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "recam/errors.hpp"
#include "recam/prompting.hpp"
#include "recam/report.hpp"
#include "recam/trainer.hpp"

namespace recam {

namespace {

namespace fs = std::filesystem;

/// Flag > config file > default: entries fill from the config JSON only
/// when the matching flag was not passed.
class ConfigBinder {
public:
    template <typename T>
    void bind(CLI::Option* opt, std::string key, T& target) {
        entries_.emplace_back(opt, [key = std::move(key), &target](const nlohmann::json& j) {
            if (j.contains(key)) target = j.at(key).get<T>();
        });
    }

    void apply(const std::string& config_path) const {
        if (config_path.empty()) return;
        std::ifstream in(config_path);
        if (!in) throw config_error("cannot read config file " + config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw config_error("malformed config file " + config_path + ": " + e.what());
        }
        for (const auto& [opt, fn] : entries_) {
            if (opt->count() == 0) fn(j);
        }
    }

private:
    std::vector<std::pair<CLI::Option*, std::function<void(const nlohmann::json&)>>> entries_;
};

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << content;
}

void write_config_echo(const std::string& dir, const nlohmann::ordered_json& cfg) {
    fs::create_directories(dir);
    write_text_file(dir + "/config.json", cfg.dump(2) + "\n");
}

void write_metrics(const std::string& dir, const std::vector<MetricsEntry>& metrics) {
    fs::create_directories(dir);
    std::string body;
    for (const MetricsEntry& e : metrics) body += metrics_to_jsonl_line(e) + "\n";
    write_text_file(dir + "/metrics.jsonl", body);
}

void write_results(const std::string& dir, const ResultsTable& table) {
    fs::create_directories(dir);
    write_text_file(dir + "/results.json", results_to_json(table).dump(2) + "\n");
    write_text_file(dir + "/results.txt", render_results_text(table));
}

std::string infer_split_name(const std::string& path) {
    const std::string stem = fs::path(path).stem().string();
    for (const char* name : {"trial", "test", "dev", "train"}) {
        if (stem.find(name) != std::string::npos) return name;
    }
    return "train";
}

Vocabulary vocab_from_split(const DatasetSplit& split, std::size_t max_size) {
    std::stringstream corpus;
    for (const RecamInstance& inst : split.instances) {
        corpus << inst.article << '\n' << inst.question << '\n';
        for (const auto& opt : inst.options) corpus << opt << '\n';
    }
    return build_vocab(corpus, max_size);
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string rule = "copy";
    std::size_t n = 32;
    std::uint64_t seed = 1;
    std::string name = "train";
    std::string out = "synth.jsonl";
    std::string config;
};

void run_synth(const SynthArgs& a) {
    RandomSource rng(a.seed);
    const DatasetSplit split = make_synthetic_dataset(synthetic_rule_from_string(a.rule), a.n,
                                                      rng, a.name);
    serialize_recam_jsonl(split, a.out);
    std::cout << "wrote " << split.size() << " " << a.rule << " instances to " << a.out << "\n";
}

struct BuildVocabArgs {
    std::string corpus;
    std::size_t max_size = 4096;
    std::string out = "vocab.json";
    std::string config;
};

void run_build_vocab(const BuildVocabArgs& a) {
    const Vocabulary v = build_vocab_from_file(a.corpus, a.max_size);
    v.save(a.out);
    std::cout << "vocabulary of " << v.size() << " tokens written to " << a.out << "\n";
}

struct PretrainArgs {
    std::string corpus;
    std::string vocab;
    std::string out = "pretrain-run";
    std::uint64_t steps = 100;
    int batch_size = 8;
    double lr = 1e-4;
    double weight_decay = 0.01;
    std::uint64_t seed = 1;
    int layers = 2, heads = 4, d_hidden = 64, ffn_width = 256, max_seq_len = 256;
    std::string head = "bi-attn";
    std::string config;
};

void run_pretrain(const PretrainArgs& a) {
    const Vocabulary vocab =
        a.vocab.empty() ? build_vocab_from_file(a.corpus, 4096) : Vocabulary::load(a.vocab);
    EncoderConfig cfg;
    cfg.num_layers = a.layers;
    cfg.num_heads = a.heads;
    cfg.d_hidden = a.d_hidden;
    cfg.ffn_width = a.ffn_width;
    cfg.max_seq_len = a.max_seq_len;
    Model model = make_model(vocab, cfg, head_kind_from_string(a.head), a.seed,
                             /*dropout_rate=*/0.5, /*dropout_samples=*/5,
                             /*freeze_encoder=*/false);

    const auto rows = make_mlm_rows(a.corpus, vocab, model.enc_cfg);
    if (rows.empty()) throw data_error("pretrain: corpus produced no sequences");

    AdamWConfig opt_cfg;
    opt_cfg.learning_rate = a.lr;
    opt_cfg.weight_decay = a.weight_decay;
    AdamW optimizer(model.trainable_parameters(), opt_cfg);
    RandomSource rng(splitmix64(a.seed ^ 0x6d6c6dULL));

    std::vector<MetricsEntry> metrics;
    const std::size_t batch = static_cast<std::size_t>(a.batch_size);
    std::size_t cursor = 0;
    for (std::uint64_t step = 1; step <= a.steps; ++step) {
        std::vector<std::vector<int>> batch_rows;
        for (std::size_t i = 0; i < batch; ++i) {
            batch_rows.push_back(rows[(cursor + i) % rows.size()]);
        }
        cursor = (cursor + batch) % rows.size();
        Tensor loss = mlm_pretrain_step(batch_rows, model.enc_cfg, model.encoder, rng);
        loss.backward();
        optimizer.step();
        optimizer.zero_grad();
        metrics.push_back({step, "pretrain", loss.item(), 0.0});
        if (step == 1 || step % 10 == 0 || step == a.steps) {
            std::cout << "step " << step << "  mlm loss " << loss.item() << "\n";
        }
    }

    fs::create_directories(a.out);
    write_metrics(a.out, metrics);
    TrainProgress progress;
    save_checkpoint(snapshot_checkpoint(model, &optimizer, &rng, progress, metrics),
                    a.out + "/last.ckpt");
    nlohmann::ordered_json echo;
    echo["subcommand"] = "pretrain";
    echo["corpus"] = a.corpus;
    echo["steps"] = a.steps;
    echo["batch_size"] = a.batch_size;
    echo["lr"] = a.lr;
    echo["weight_decay"] = a.weight_decay;
    echo["seed"] = a.seed;
    echo["encoder"] = {{"num_layers", a.layers},     {"num_heads", a.heads},
                       {"d_hidden", a.d_hidden},     {"ffn_width", a.ffn_width},
                       {"max_seq_len", a.max_seq_len}, {"vocab_size", vocab.size()}};
    echo["head"] = a.head;
    write_config_echo(a.out, echo);
}

struct TrainArgs {
    std::string train_path;
    std::string dev_path;
    std::string vocab;
    std::string init_from;
    std::string out = "train-run";
    std::string head = "bi-attn";
    double lr = 1e-4;
    double weight_decay = 0.01;
    int batch_size = 2;
    int eval_batch_size = 2;
    double epochs = 1.0;
    double val_interval = 0.2;
    double dropout = 0.5;
    int accum = 32;
    std::uint64_t seed = 1;
    bool freeze = true;
    int layers = 2, heads = 4, d_hidden = 64, ffn_width = 256, max_seq_len = 256;
    std::size_t vocab_max_size = 4096;
    std::string config;
};

void run_train(const TrainArgs& a, bool freeze_given) {
    const DatasetSplit train_split = load_recam_jsonl(a.train_path, "train");
    std::optional<DatasetSplit> dev_split;
    if (!a.dev_path.empty()) dev_split = load_recam_jsonl(a.dev_path, "dev");

    Model model = [&] {
        if (!a.init_from.empty()) {
            Model m = model_from_checkpoint(load_checkpoint(a.init_from));
            if (freeze_given && m.freeze_encoder != a.freeze) {
                m.freeze_encoder = a.freeze;
                m.enc_cfg.freeze_encoder = a.freeze;
                m.encoder.set_requires_grad(!a.freeze);
            }
            return m;
        }
        const Vocabulary vocab = a.vocab.empty()
                                     ? vocab_from_split(train_split, a.vocab_max_size)
                                     : Vocabulary::load(a.vocab);
        EncoderConfig cfg;
        cfg.num_layers = a.layers;
        cfg.num_heads = a.heads;
        cfg.d_hidden = a.d_hidden;
        cfg.ffn_width = a.ffn_width;
        cfg.max_seq_len = a.max_seq_len;
        return make_model(vocab, cfg, head_kind_from_string(a.head), a.seed, a.dropout,
                          /*dropout_samples=*/5, a.freeze);
    }();

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.weight_decay = a.weight_decay;
    cfg.train_batch_size = a.batch_size;
    cfg.eval_batch_size = a.eval_batch_size;
    cfg.epochs = a.epochs;
    cfg.val_check_interval = a.val_interval;
    cfg.dropout_rate = a.dropout;
    cfg.grad_accumulation_steps = a.accum;
    cfg.seed = a.seed;
    cfg.head_kind = model.head.kind;
    cfg.freeze_encoder = model.freeze_encoder;

    TrainOptions opts;
    opts.checkpoint_dir = a.out;
    const TrainResult result =
        train(model, train_split, dev_split ? &*dev_split : nullptr, cfg, opts);

    write_metrics(a.out, result.metrics);
    nlohmann::ordered_json echo;
    echo["subcommand"] = "train";
    echo["train"] = a.train_path;
    echo["dev"] = a.dev_path;
    echo["head"] = to_string(model.head.kind);
    echo["learning_rate"] = cfg.learning_rate;
    echo["weight_decay"] = cfg.weight_decay;
    echo["train_batch_size"] = cfg.train_batch_size;
    echo["eval_batch_size"] = cfg.eval_batch_size;
    echo["epochs"] = cfg.epochs;
    echo["val_check_interval"] = cfg.val_check_interval;
    echo["dropout_rate"] = cfg.dropout_rate;
    echo["grad_accumulation_steps"] = cfg.grad_accumulation_steps;
    echo["seed"] = cfg.seed;
    echo["freeze_encoder"] = cfg.freeze_encoder;
    echo["encoder"] = {{"num_layers", model.enc_cfg.num_layers},
                       {"num_heads", model.enc_cfg.num_heads},
                       {"d_hidden", model.enc_cfg.d_hidden},
                       {"ffn_width", model.enc_cfg.ffn_width},
                       {"max_seq_len", model.enc_cfg.max_seq_len},
                       {"vocab_size", model.enc_cfg.vocab_size}};
    echo["init_from"] = a.init_from;
    write_config_echo(a.out, echo);

    std::cout << "trained " << result.optimizer_steps << " optimizer steps\n";
    for (auto it = result.metrics.rbegin(); it != result.metrics.rend(); ++it) {
        if (it->split == "dev") {
            std::cout << "final dev accuracy " << it->accuracy << "\n";
            break;
        }
    }
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split_name;
    std::string name;
    std::string task;
    std::string out = "eval-run";
    std::string config;
};

void run_eval(const EvalArgs& a) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Model model = model_from_checkpoint(ck);
    const std::string split_name =
        a.split_name.empty() ? infer_split_name(a.data) : a.split_name;
    const DatasetSplit split = load_recam_jsonl(a.data, split_name);
    const EvalResult res = evaluate_accuracy(model, split);

    const std::string run_name = a.name.empty() ? to_string(model.head.kind) : a.name;
    const std::string task = a.task.empty() ? split.name : a.task;
    ResultsTable table;
    table.rows.push_back({run_name, task, res.accuracy});
    write_results(a.out, table);

    std::string preds;
    for (std::size_t i = 0; i < split.instances.size(); ++i) {
        nlohmann::ordered_json j;
        j["id"] = split.instances[i].id;
        j["prediction"] = res.predictions[i];
        j["label"] = *split.instances[i].label;
        preds += j.dump() + "\n";
    }
    write_text_file(a.out + "/predictions.jsonl", preds);

    nlohmann::ordered_json echo;
    echo["subcommand"] = "eval";
    echo["checkpoint"] = a.checkpoint;
    echo["data"] = a.data;
    echo["split_name"] = split.name;
    echo["head"] = to_string(model.head.kind);
    echo["name"] = run_name;
    echo["task"] = task;
    write_config_echo(a.out, echo);

    std::cout << "accuracy " << res.accuracy << " (" << split.size() << " instances, loss "
              << res.mean_loss << ")\n";
}

struct PromptArgs {
    std::string data;
    std::string split_name;
    std::string pool;
    std::string pool_name = "trial";
    std::string styles = "multi-choice";
    std::string shots = "0";
    std::string backend = "mock-uniform";
    std::string endpoint;
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string cache_dir;
    std::string selection = "first-k";
    std::uint64_t seed = 1;
    double timeout = 30.0;
    int retries = 4;
    bool echo_capable = false;
    std::string out = "prompt-run";
    std::string config;
};

void run_prompt(const PromptArgs& a) {
    const std::string split_name =
        a.split_name.empty() ? infer_split_name(a.data) : a.split_name;
    const DatasetSplit split = load_recam_jsonl(a.data, split_name);
    std::optional<DatasetSplit> pool;
    if (!a.pool.empty()) pool = load_recam_jsonl(a.pool, a.pool_name);

    std::shared_ptr<ScorerBackend> backend;
    if (a.backend == "mock-oracle") {
        backend = MockScorer::oracle(split);
    } else if (a.backend == "mock-adversarial") {
        backend = MockScorer::adversarial(split);
    } else if (a.backend == "mock-uniform") {
        backend = MockScorer::uniform();
    } else if (a.backend == "http") {
        if (a.endpoint.empty()) throw config_error("prompt: --endpoint required for http backend");
        const char* key = std::getenv(a.api_key_env.c_str());
        HttpScorerLimits limits;
        limits.timeout_seconds = a.timeout;
        limits.max_retries = a.retries;
        const std::string cache = a.cache_dir.empty() ? a.out + "/http_cache" : a.cache_dir;
        backend = std::make_shared<HttpScorer>(a.endpoint, a.model, key ? key : "", cache,
                                               limits, a.echo_capable);
    } else {
        throw config_error("prompt: unknown backend " + a.backend);
    }

    FewShotConfig fewshot;
    fewshot.pool = pool ? &*pool : nullptr;
    fewshot.selection = a.selection == "random" ? FewShotConfig::Selection::SeededRandom
                                                : FewShotConfig::Selection::FirstK;
    fewshot.seed = a.seed;
    const std::vector<int> shots = parse_int_list(a.shots);

    fs::create_directories(a.out);
    ResultsTable table;
    for (const std::string& style_name : parse_string_list(a.styles)) {
        const PromptStyle style = prompt_style_from_string(style_name);
        const std::string audit = a.out + "/audit-" + to_string(style) + ".jsonl";
        const PromptEvalReport report =
            run_prompt_eval(split, style, *backend, fewshot, shots, audit);
        for (const PromptEvalRow& row : report.rows) {
            table.rows.push_back(
                {to_string(style), "k=" + std::to_string(row.shots), row.accuracy});
            std::cout << to_string(style) << " k=" << row.shots << "  accuracy " << row.accuracy
                      << "  errors " << row.errors << "/" << row.total << "\n";
        }
    }
    write_results(a.out, table);

    nlohmann::ordered_json echo;
    echo["subcommand"] = "prompt";
    echo["data"] = a.data;
    echo["split_name"] = split_name;
    echo["pool"] = a.pool;
    echo["styles"] = a.styles;
    echo["shots"] = a.shots;
    echo["backend"] = a.backend;
    echo["endpoint"] = a.endpoint;
    echo["model"] = a.model;
    echo["api_key_env"] = a.api_key_env;
    echo["selection"] = a.selection;
    echo["seed"] = a.seed;
    write_config_echo(a.out, echo);
}

struct ReportArgs {
    std::vector<std::string> runs;
    std::string baseline;
    std::string out = "report";
    std::string config;
};

void run_report(const ReportArgs& a) {
    if (a.runs.empty()) throw config_error("report: no run directories given");
    ResultsTable merged;
    merged.baseline = a.baseline;
    for (const std::string& dir : a.runs) {
        const std::string path = fs::is_directory(dir) ? dir + "/results.json" : dir;
        std::ifstream in(path);
        if (!in) throw data_error("report: cannot read " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw format_error("report: malformed " + path + ": " + e.what());
        }
        for (const ResultRow& row : results_from_json(j).rows) merged.rows.push_back(row);
    }
    if (!a.baseline.empty()) {
        const bool found = std::any_of(merged.rows.begin(), merged.rows.end(),
                                       [&](const ResultRow& r) { return r.name == a.baseline; });
        if (!found) throw config_error("report: baseline \"" + a.baseline + "\" not among runs");
    }
    write_results(a.out, merged);
    nlohmann::ordered_json echo;
    echo["subcommand"] = "report";
    echo["runs"] = a.runs;
    echo["baseline"] = a.baseline;
    write_config_echo(a.out, echo);
    std::cout << render_results_text(merged);
}

} // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"abstract-meaning multiple-choice reading comprehension toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    ConfigBinder synth_bind;
    auto* synth_cmd = app.add_subcommand("synth", "generate a planted-rule synthetic dataset");
    synth_bind.bind(synth_cmd->add_option("--rule", synth.rule, "copy or majority"), "rule", synth.rule);
    synth_bind.bind(synth_cmd->add_option("--n", synth.n, "instance count"), "n", synth.n);
    synth_bind.bind(synth_cmd->add_option("--seed", synth.seed, "generator seed"), "seed", synth.seed);
    synth_bind.bind(synth_cmd->add_option("--name", synth.name, "split name"), "name", synth.name);
    synth_bind.bind(synth_cmd->add_option("--out", synth.out, "output JSONL path"), "out", synth.out);
    synth_cmd->add_option("--config", synth.config, "JSON config file");

    BuildVocabArgs bv;
    ConfigBinder bv_bind;
    auto* bv_cmd = app.add_subcommand("build-vocab", "build a vocabulary from a text corpus");
    bv_bind.bind(bv_cmd->add_option("--corpus", bv.corpus, "UTF-8 text, one document per line")
                     ->required(),
                 "corpus", bv.corpus);
    bv_bind.bind(bv_cmd->add_option("--max-size", bv.max_size, "vocabulary budget"), "max_size",
                 bv.max_size);
    bv_bind.bind(bv_cmd->add_option("--out", bv.out, "output vocabulary path"), "out", bv.out);
    bv_cmd->add_option("--config", bv.config, "JSON config file");

    PretrainArgs pre;
    ConfigBinder pre_bind;
    auto* pre_cmd = app.add_subcommand("pretrain", "task-adaptive masked-LM pretraining");
    pre_bind.bind(pre_cmd->add_option("--corpus", pre.corpus)->required(), "corpus", pre.corpus);
    pre_bind.bind(pre_cmd->add_option("--vocab", pre.vocab), "vocab", pre.vocab);
    pre_bind.bind(pre_cmd->add_option("--out", pre.out), "out", pre.out);
    pre_bind.bind(pre_cmd->add_option("--steps", pre.steps), "steps", pre.steps);
    pre_bind.bind(pre_cmd->add_option("--batch-size", pre.batch_size), "batch_size", pre.batch_size);
    pre_bind.bind(pre_cmd->add_option("--lr", pre.lr), "lr", pre.lr);
    pre_bind.bind(pre_cmd->add_option("--weight-decay", pre.weight_decay), "weight_decay", pre.weight_decay);
    pre_bind.bind(pre_cmd->add_option("--seed", pre.seed), "seed", pre.seed);
    pre_bind.bind(pre_cmd->add_option("--layers", pre.layers), "layers", pre.layers);
    pre_bind.bind(pre_cmd->add_option("--heads", pre.heads), "heads", pre.heads);
    pre_bind.bind(pre_cmd->add_option("--d-hidden", pre.d_hidden), "d_hidden", pre.d_hidden);
    pre_bind.bind(pre_cmd->add_option("--ffn-width", pre.ffn_width), "ffn_width", pre.ffn_width);
    pre_bind.bind(pre_cmd->add_option("--max-seq-len", pre.max_seq_len), "max_seq_len", pre.max_seq_len);
    pre_bind.bind(pre_cmd->add_option("--head", pre.head), "head", pre.head);
    pre_cmd->add_option("--config", pre.config, "JSON config file");

    TrainArgs tr;
    ConfigBinder tr_bind;
    auto* tr_cmd = app.add_subcommand("train", "fine-tune a model on a labeled split");
    tr_bind.bind(tr_cmd->add_option("--train", tr.train_path)->required(), "train", tr.train_path);
    tr_bind.bind(tr_cmd->add_option("--dev", tr.dev_path), "dev", tr.dev_path);
    tr_bind.bind(tr_cmd->add_option("--vocab", tr.vocab), "vocab", tr.vocab);
    tr_bind.bind(tr_cmd->add_option("--init-from", tr.init_from), "init_from", tr.init_from);
    tr_bind.bind(tr_cmd->add_option("--out", tr.out), "out", tr.out);
    tr_bind.bind(tr_cmd->add_option("--head", tr.head, "softmax, uni-attn or bi-attn"), "head", tr.head);
    tr_bind.bind(tr_cmd->add_option("--lr", tr.lr), "lr", tr.lr);
    tr_bind.bind(tr_cmd->add_option("--weight-decay", tr.weight_decay), "weight_decay", tr.weight_decay);
    tr_bind.bind(tr_cmd->add_option("--batch-size", tr.batch_size), "batch_size", tr.batch_size);
    tr_bind.bind(tr_cmd->add_option("--eval-batch-size", tr.eval_batch_size), "eval_batch_size", tr.eval_batch_size);
    tr_bind.bind(tr_cmd->add_option("--epochs", tr.epochs), "epochs", tr.epochs);
    tr_bind.bind(tr_cmd->add_option("--val-interval", tr.val_interval), "val_interval", tr.val_interval);
    tr_bind.bind(tr_cmd->add_option("--dropout", tr.dropout), "dropout", tr.dropout);
    tr_bind.bind(tr_cmd->add_option("--accum", tr.accum, "gradient accumulation steps"), "accum", tr.accum);
    tr_bind.bind(tr_cmd->add_option("--seed", tr.seed), "seed", tr.seed);
    auto* freeze_opt = tr_cmd->add_flag("--freeze,!--no-freeze", tr.freeze, "freeze the encoder");
    tr_bind.bind(freeze_opt, "freeze", tr.freeze);
    tr_bind.bind(tr_cmd->add_option("--layers", tr.layers), "layers", tr.layers);
    tr_bind.bind(tr_cmd->add_option("--heads", tr.heads), "heads", tr.heads);
    tr_bind.bind(tr_cmd->add_option("--d-hidden", tr.d_hidden), "d_hidden", tr.d_hidden);
    tr_bind.bind(tr_cmd->add_option("--ffn-width", tr.ffn_width), "ffn_width", tr.ffn_width);
    tr_bind.bind(tr_cmd->add_option("--max-seq-len", tr.max_seq_len), "max_seq_len", tr.max_seq_len);
    tr_bind.bind(tr_cmd->add_option("--vocab-max-size", tr.vocab_max_size), "vocab_max_size", tr.vocab_max_size);
    tr_cmd->add_option("--config", tr.config, "JSON config file");

    EvalArgs ev;
    ConfigBinder ev_bind;
    auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a labeled split");
    ev_bind.bind(ev_cmd->add_option("--checkpoint", ev.checkpoint)->required(), "checkpoint", ev.checkpoint);
    ev_bind.bind(ev_cmd->add_option("--data", ev.data)->required(), "data", ev.data);
    ev_bind.bind(ev_cmd->add_option("--split-name", ev.split_name), "split_name", ev.split_name);
    ev_bind.bind(ev_cmd->add_option("--name", ev.name, "run name in results"), "name", ev.name);
    ev_bind.bind(ev_cmd->add_option("--task", ev.task, "task column in results"), "task", ev.task);
    ev_bind.bind(ev_cmd->add_option("--out", ev.out), "out", ev.out);
    ev_cmd->add_option("--config", ev.config, "JSON config file");

    PromptArgs pr;
    ConfigBinder pr_bind;
    auto* pr_cmd = app.add_subcommand("prompt", "LLM prompting evaluation");
    pr_bind.bind(pr_cmd->add_option("--data", pr.data)->required(), "data", pr.data);
    pr_bind.bind(pr_cmd->add_option("--split-name", pr.split_name), "split_name", pr.split_name);
    pr_bind.bind(pr_cmd->add_option("--pool", pr.pool, "few-shot example pool (JSONL)"), "pool", pr.pool);
    pr_bind.bind(pr_cmd->add_option("--pool-name", pr.pool_name), "pool_name", pr.pool_name);
    pr_bind.bind(pr_cmd->add_option("--styles", pr.styles, "comma list: fill-back,complete,multi-choice"), "styles", pr.styles);
    pr_bind.bind(pr_cmd->add_option("--shots", pr.shots, "comma list of k values"), "shots", pr.shots);
    pr_bind.bind(pr_cmd->add_option("--backend", pr.backend,
                                    "mock-oracle, mock-adversarial, mock-uniform or http"),
                 "backend", pr.backend);
    pr_bind.bind(pr_cmd->add_option("--endpoint", pr.endpoint, "base URL of the API"), "endpoint", pr.endpoint);
    pr_bind.bind(pr_cmd->add_option("--model", pr.model), "model", pr.model);
    pr_bind.bind(pr_cmd->add_option("--api-key-env", pr.api_key_env), "api_key_env", pr.api_key_env);
    pr_bind.bind(pr_cmd->add_option("--cache-dir", pr.cache_dir), "cache_dir", pr.cache_dir);
    pr_bind.bind(pr_cmd->add_option("--selection", pr.selection, "first-k or random"), "selection", pr.selection);
    pr_bind.bind(pr_cmd->add_option("--seed", pr.seed), "seed", pr.seed);
    pr_bind.bind(pr_cmd->add_option("--timeout", pr.timeout), "timeout", pr.timeout);
    pr_bind.bind(pr_cmd->add_option("--retries", pr.retries), "retries", pr.retries);
    auto* echo_opt = pr_cmd->add_flag("--echo,!--no-echo", pr.echo_capable,
                                      "endpoint supports echoed log-probabilities");
    pr_bind.bind(echo_opt, "echo", pr.echo_capable);
    pr_bind.bind(pr_cmd->add_option("--out", pr.out), "out", pr.out);
    pr_cmd->add_option("--config", pr.config, "JSON config file");

    ReportArgs rp;
    ConfigBinder rp_bind;
    auto* rp_cmd = app.add_subcommand("report", "merge run results into one delta table");
    rp_bind.bind(rp_cmd->add_option("--runs", rp.runs, "run directories or results.json files"),
                 "runs", rp.runs);
    rp_bind.bind(rp_cmd->add_option("--baseline", rp.baseline, "run name deltas are against"),
                 "baseline", rp.baseline);
    rp_bind.bind(rp_cmd->add_option("--out", rp.out), "out", rp.out);
    rp_cmd->add_option("--config", rp.config, "JSON config file");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
        if (synth_cmd->parsed()) {
            synth_bind.apply(synth.config);
            run_synth(synth);
        } else if (bv_cmd->parsed()) {
            bv_bind.apply(bv.config);
            run_build_vocab(bv);
        } else if (pre_cmd->parsed()) {
            pre_bind.apply(pre.config);
            run_pretrain(pre);
        } else if (tr_cmd->parsed()) {
            tr_bind.apply(tr.config);
            run_train(tr, freeze_opt->count() > 0);
        } else if (ev_cmd->parsed()) {
            ev_bind.apply(ev.config);
            run_eval(ev);
        } else if (pr_cmd->parsed()) {
            pr_bind.apply(pr.config);
            run_prompt(pr);
        } else if (rp_cmd->parsed()) {
            rp_bind.apply(rp.config);
            run_report(rp);
        }
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace recam
