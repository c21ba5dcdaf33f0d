#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "recam/data.hpp"

namespace recam {

enum class PromptStyle { FillBackEcho, CompleteEcho, MultiChoice };

PromptStyle prompt_style_from_string(const std::string& name);
std::string to_string(PromptStyle style);

/// One scored token of an echoed text, with its byte offset in that text.
struct TokenLogProb {
    std::string token;
    double logprob = 0.0;
    std::size_t offset = 0;
};

/// Outcome of a next-token query: a distribution over the requested
/// candidates, or (for backends that only generate) the generated text.
struct NextTokenResult {
    std::optional<std::vector<std::pair<std::string, double>>> distribution;
    std::string generated;
    nlohmann::json raw;
};

class ScorerBackend {
public:
    virtual ~ScorerBackend() = default;
    virtual std::string identity() const = 0;
    virtual bool supports_echo_logprobs() const = 0;
    virtual bool supports_next_token_distribution() const = 0;
    /// Log-probability of every token position of `text`.
    virtual std::vector<TokenLogProb> echo_logprobs(const std::string& text) = 0;
    /// Log-probabilities of candidate next tokens after `prompt`.
    virtual NextTokenResult next_token(const std::string& prompt,
                                       const std::vector<std::string>& candidates) = 0;
};

struct FewShotConfig {
    enum class Selection { FirstK, SeededRandom };
    int k = 0;
    const DatasetSplit* pool = nullptr;
    Selection selection = Selection::FirstK;
    std::uint64_t seed = 0;
};

/// The k solved examples a prompt is built from. Throws config_error when k
/// exceeds the pool or the pool lacks labels.
std::vector<const RecamInstance*> select_examples(const FewShotConfig& fewshot);

/// An echo-style text plus the byte span of the option inside it.
struct EchoPrompt {
    std::string text;
    std::size_t option_begin = 0;
    std::size_t option_end = 0;
};

std::string render_multi_choice_prompt(const RecamInstance& inst, const FewShotConfig& fewshot);

/// style must be FillBackEcho or CompleteEcho; one text per option.
std::array<EchoPrompt, 5> render_echo_prompts(const RecamInstance& inst, PromptStyle style,
                                              const FewShotConfig& fewshot);

struct PromptResult {
    std::int64_t instance_id = -1;
    PromptStyle style = PromptStyle::MultiChoice;
    int shots = 0;
    std::array<double, 5> scores{};
    int chosen = 0; // argmax of scores, ties to the lowest index
    std::string prompt;
    nlohmann::json raw;
    bool parse_error = false;
    std::string error;

    nlohmann::ordered_json to_json() const;
};

PromptResult fill_back_echo_select(const RecamInstance& inst, ScorerBackend& backend,
                                   const FewShotConfig& fewshot);
PromptResult complete_echo_select(const RecamInstance& inst, ScorerBackend& backend,
                                  const FewShotConfig& fewshot);
PromptResult multi_choice_select(const RecamInstance& inst, ScorerBackend& backend,
                                 const FewShotConfig& fewshot);

struct PromptEvalRow {
    PromptStyle style;
    int shots = 0;
    double accuracy = 0.0;
    std::size_t errors = 0;
    std::size_t total = 0;
};

struct PromptEvalReport {
    std::vector<PromptEvalRow> rows;
    std::vector<PromptResult> results;
};

/// Runs one style over a labeled split for every shot count; per-instance
/// failures are recorded (and counted wrong), not fatal. When audit_path is
/// set, PromptResults stream there as JSON lines.
PromptEvalReport run_prompt_eval(const DatasetSplit& split, PromptStyle style,
                                 ScorerBackend& backend, FewShotConfig fewshot,
                                 const std::vector<int>& shots,
                                 const std::string& audit_path = "");

/// Deterministic offline backend. TokenRules scores tokens from a lookup
/// table; Oracle/Adversarial identify the rendered target instance by its
/// article and favor the gold (resp. a wrong) option; Uniform ties
/// everything.
class MockScorer final : public ScorerBackend {
public:
    enum class Mode { TokenRules, Oracle, Adversarial, Uniform };

    static std::shared_ptr<MockScorer> uniform();
    static std::shared_ptr<MockScorer> with_token_rules(std::map<std::string, double> rules,
                                                        double default_logprob = -1.0);
    static std::shared_ptr<MockScorer> oracle(const DatasetSplit& split);
    static std::shared_ptr<MockScorer> adversarial(const DatasetSplit& split);

    std::string identity() const override;
    bool supports_echo_logprobs() const override { return echo_capable; }
    bool supports_next_token_distribution() const override { return dist_capable; }
    std::vector<TokenLogProb> echo_logprobs(const std::string& text) override;
    NextTokenResult next_token(const std::string& prompt,
                               const std::vector<std::string>& candidates) override;

    Mode mode = Mode::Uniform;
    std::map<std::string, double> token_rules;
    double default_logprob = -1.0;
    double preferred_logprob = -0.1;
    double other_logprob = -5.0;
    bool echo_capable = true;
    bool dist_capable = true;
    /// When set, next_token returns generated text instead of a distribution.
    bool generate_only = false;
    std::string forced_generation;

private:
    struct Known {
        std::string article;
        std::array<std::string, 5> options;
        int label = 0;
    };
    std::vector<Known> known_;
    const Known* match_instance(const std::string& text) const;
    int preferred_index(const Known& k) const;
};

struct HttpScorerLimits {
    double timeout_seconds = 30.0;
    int max_retries = 4;
    double initial_backoff_ms = 250.0;
    int max_in_flight = 1;
    int top_logprobs = 20;
};

/// OpenAI-compatible HTTP backend: chat completions with one generated
/// token and top log-probabilities for next-token scoring, and (where the
/// endpoint supports it) echoed-prompt log-probabilities via the legacy
/// completions API. Every request/response pair is cached on disk keyed by
/// content hash; reruns cost no network calls.
class HttpScorer final : public ScorerBackend {
public:
    HttpScorer(std::string base_url, std::string model, std::string api_key,
               std::string cache_dir, HttpScorerLimits limits = {}, bool echo_capable = false);
    ~HttpScorer() override;

    std::string identity() const override;
    bool supports_echo_logprobs() const override { return echo_capable_; }
    bool supports_next_token_distribution() const override { return true; }
    std::vector<TokenLogProb> echo_logprobs(const std::string& text) override;
    NextTokenResult next_token(const std::string& prompt,
                               const std::vector<std::string>& candidates) override;

    std::size_t network_requests() const { return network_requests_; }

    static NextTokenResult parse_next_token_payload(const nlohmann::json& body,
                                                    const std::vector<std::string>& candidates);
    static std::vector<TokenLogProb> parse_echo_payload(const nlohmann::json& body);

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body);

    std::string base_url_;
    std::string model_;
    std::string api_key_;
    std::string cache_dir_;
    HttpScorerLimits limits_;
    bool echo_capable_;
    std::size_t network_requests_ = 0;
    std::unordered_map<std::string, nlohmann::json> memory_cache_;
};

std::uint64_t fnv1a64(const std::string& s);

} // namespace recam
