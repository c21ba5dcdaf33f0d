#include "recam/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "recam/errors.hpp"
#include "recam/vocab.hpp"

namespace recam {

namespace {

constexpr const char* kSystemPrompt =
    "Given the article below and the corresponding question, you are expected to choose the "
    "correct answer from five candidates to fill the @placeholder in cloze-style machine "
    "reading comprehension tasks. Output the answer as a single number, choosing an option "
    "from [0,1,2,3,4] that best fits the @placeholder in the question. I will provide you "
    "with a few-shot examples to help you understand the task better.";

const std::vector<std::string> kDigitCandidates = {"0", "1", "2", "3", "4"};

int argmax_lowest(const std::array<double, 5>& scores) {
    int best = 0;
    for (int i = 1; i < 5; ++i) {
        if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) {
            best = i;
        }
    }
    return best;
}

std::string multi_choice_block(const RecamInstance& inst, bool with_answer) {
    std::string block = "Article: " + inst.article + "\nQuestion: " + inst.question + "\n";
    for (int i = 0; i < 5; ++i) {
        block += "Option" + std::to_string(i) + ": " + inst.options[static_cast<std::size_t>(i)] +
                 "\n";
    }
    block += "Answer:";
    if (with_answer) block += " " + std::to_string(*inst.label);
    return block;
}

} // namespace

PromptStyle prompt_style_from_string(const std::string& name) {
    if (name == "fill-back" || name == "fill-back-echo") return PromptStyle::FillBackEcho;
    if (name == "complete" || name == "complete-echo") return PromptStyle::CompleteEcho;
    if (name == "multi-choice" || name == "multi") return PromptStyle::MultiChoice;
    throw config_error("unknown prompt style: " + name +
                       " (expected fill-back, complete or multi-choice)");
}

std::string to_string(PromptStyle style) {
    switch (style) {
    case PromptStyle::FillBackEcho: return "fill-back";
    case PromptStyle::CompleteEcho: return "complete";
    case PromptStyle::MultiChoice: return "multi-choice";
    }
    throw config_error("invalid prompt style value");
}

std::vector<const RecamInstance*> select_examples(const FewShotConfig& fewshot) {
    if (fewshot.k == 0) return {};
    if (fewshot.k < 0) {
        throw config_error("few-shot: k must be non-negative");
    }
    if (!fewshot.pool) {
        throw config_error("few-shot: k > 0 but no example pool configured");
    }
    if (static_cast<std::size_t>(fewshot.k) > fewshot.pool->size()) {
        throw config_error("few-shot: k = " + std::to_string(fewshot.k) + " exceeds pool of " +
                           std::to_string(fewshot.pool->size()) + " examples");
    }
    if (!fewshot.pool->labeled()) {
        throw config_error("few-shot: example pool must be labeled");
    }
    std::vector<const RecamInstance*> out;
    if (fewshot.selection == FewShotConfig::Selection::FirstK) {
        for (int i = 0; i < fewshot.k; ++i) {
            out.push_back(&fewshot.pool->instances[static_cast<std::size_t>(i)]);
        }
    } else {
        RandomSource rng(fewshot.seed);
        std::set<std::size_t> picked;
        while (picked.size() < static_cast<std::size_t>(fewshot.k)) {
            picked.insert(rng.uniform_int(fewshot.pool->size()));
        }
        for (std::size_t i : picked) out.push_back(&fewshot.pool->instances[i]);
    }
    return out;
}

std::string render_multi_choice_prompt(const RecamInstance& inst, const FewShotConfig& fewshot) {
    std::string prompt = std::string(kSystemPrompt) + "\n\n";
    for (const RecamInstance* ex : select_examples(fewshot)) {
        prompt += multi_choice_block(*ex, /*with_answer=*/true) + "\n\n";
    }
    prompt += multi_choice_block(inst, /*with_answer=*/false);
    return prompt;
}

std::array<EchoPrompt, 5> render_echo_prompts(const RecamInstance& inst, PromptStyle style,
                                              const FewShotConfig& fewshot) {
    if (style == PromptStyle::MultiChoice) {
        throw argument_error("render_echo_prompts: style must be an echo style");
    }
    std::string prefix;
    for (const RecamInstance* ex : select_examples(fewshot)) {
        const std::string& gold = ex->options[static_cast<std::size_t>(*ex->label)];
        if (style == PromptStyle::FillBackEcho) {
            prefix += ex->article + "\n" + fill_placeholder(ex->question, gold).text + "\n\n";
        } else {
            prefix += ex->article + "\n" + ex->question + "\nAnswer: " + gold + "\n\n";
        }
    }

    std::array<EchoPrompt, 5> out;
    for (std::size_t i = 0; i < 5; ++i) {
        const std::string& option = inst.options[i];
        EchoPrompt& p = out[i];
        if (style == PromptStyle::FillBackEcho) {
            const FilledText filled = fill_placeholder(inst.question, option);
            const std::string body = inst.article + "\n";
            p.text = prefix + body + filled.text;
            p.option_begin = prefix.size() + body.size() + filled.value_begin;
            p.option_end = prefix.size() + body.size() + filled.value_end;
        } else {
            const std::string body = inst.article + "\n" + inst.question + "\nAnswer: ";
            p.text = prefix + body + option;
            p.option_begin = prefix.size() + body.size();
            p.option_end = p.option_begin + option.size();
        }
    }
    return out;
}

nlohmann::ordered_json PromptResult::to_json() const {
    nlohmann::ordered_json j;
    j["instance_id"] = instance_id;
    j["style"] = recam::to_string(style);
    j["shots"] = shots;
    j["scores"] = scores;
    j["chosen"] = chosen;
    j["parse_error"] = parse_error;
    j["error"] = error;
    j["prompt"] = prompt;
    j["raw"] = raw;
    return j;
}

namespace {

PromptResult echo_select(const RecamInstance& inst, ScorerBackend& backend,
                         const FewShotConfig& fewshot, PromptStyle style) {
    if (!backend.supports_echo_logprobs()) {
        throw capability_error("backend " + backend.identity() +
                               " does not support echoed log-probabilities");
    }
    const auto prompts = render_echo_prompts(inst, style, fewshot);
    PromptResult res;
    res.instance_id = inst.id;
    res.style = style;
    res.shots = fewshot.k;
    res.raw = nlohmann::json::array();
    for (std::size_t i = 0; i < 5; ++i) {
        const auto tokens = backend.echo_logprobs(prompts[i].text);
        double sum = 0.0;
        std::size_t count = 0;
        nlohmann::json span = nlohmann::json::array();
        for (const TokenLogProb& t : tokens) {
            if (t.offset >= prompts[i].option_begin && t.offset < prompts[i].option_end) {
                sum += t.logprob;
                ++count;
                span.push_back({{"token", t.token}, {"logprob", t.logprob}});
            }
        }
        if (count == 0) {
            res.scores[i] = -1e30; // option tokens did not align with the echo
        } else if (style == PromptStyle::CompleteEcho) {
            res.scores[i] = sum / static_cast<double>(count); // length-normalized
        } else {
            res.scores[i] = sum;
        }
        res.raw.push_back({{"option", i}, {"span_tokens", span}});
        if (i) res.prompt += "\n\n---\n\n";
        res.prompt += prompts[i].text;
    }
    res.chosen = argmax_lowest(res.scores);
    return res;
}

} // namespace

PromptResult fill_back_echo_select(const RecamInstance& inst, ScorerBackend& backend,
                                   const FewShotConfig& fewshot) {
    return echo_select(inst, backend, fewshot, PromptStyle::FillBackEcho);
}

PromptResult complete_echo_select(const RecamInstance& inst, ScorerBackend& backend,
                                  const FewShotConfig& fewshot) {
    return echo_select(inst, backend, fewshot, PromptStyle::CompleteEcho);
}

PromptResult multi_choice_select(const RecamInstance& inst, ScorerBackend& backend,
                                 const FewShotConfig& fewshot) {
    if (!backend.supports_next_token_distribution()) {
        throw capability_error("backend " + backend.identity() +
                               " does not support next-token distributions");
    }
    PromptResult res;
    res.instance_id = inst.id;
    res.style = PromptStyle::MultiChoice;
    res.shots = fewshot.k;
    res.prompt = render_multi_choice_prompt(inst, fewshot);

    const NextTokenResult r = backend.next_token(res.prompt, kDigitCandidates);
    res.raw = r.raw;
    if (r.distribution) {
        for (std::size_t i = 0; i < 5; ++i) {
            res.scores[i] = -1e30;
            for (const auto& [token, lp] : *r.distribution) {
                if (token == kDigitCandidates[i]) {
                    res.scores[i] = lp;
                    break;
                }
            }
        }
    } else {
        // Generation fallback: the first digit 0-4 in the output wins.
        int parsed = -1;
        for (char c : r.generated) {
            if (c >= '0' && c <= '4') {
                parsed = c - '0';
                break;
            }
        }
        if (parsed < 0) {
            res.parse_error = true;
            res.error = "no digit 0-4 in generation: \"" + r.generated + "\"";
            res.scores.fill(0.0);
        } else {
            res.scores.fill(-1.0);
            res.scores[static_cast<std::size_t>(parsed)] = 0.0;
        }
    }
    res.chosen = argmax_lowest(res.scores);
    return res;
}

PromptEvalReport run_prompt_eval(const DatasetSplit& split, PromptStyle style,
                                 ScorerBackend& backend, FewShotConfig fewshot,
                                 const std::vector<int>& shots, const std::string& audit_path) {
    if (shots.empty()) {
        throw config_error("run_prompt_eval: shots list is empty");
    }
    if (split.instances.empty()) {
        throw data_error("run_prompt_eval: split \"" + split.name + "\" is empty");
    }
    if (!split.labeled()) {
        throw data_error("run_prompt_eval: split \"" + split.name + "\" has unlabeled instances");
    }

    PromptEvalReport report;
    for (int k : shots) {
        if (k > 0 && (fewshot.pool == &split ||
                      (fewshot.pool && fewshot.pool->name == split.name))) {
            throw config_error(
                "run_prompt_eval: few-shot pool must be disjoint from the evaluated split");
        }
        fewshot.k = k;
        PromptEvalRow row{style, k, 0.0, 0, split.size()};
        std::size_t correct = 0;
        for (const RecamInstance& inst : split.instances) {
            PromptResult res;
            try {
                switch (style) {
                case PromptStyle::FillBackEcho:
                    res = fill_back_echo_select(inst, backend, fewshot);
                    break;
                case PromptStyle::CompleteEcho:
                    res = complete_echo_select(inst, backend, fewshot);
                    break;
                case PromptStyle::MultiChoice:
                    res = multi_choice_select(inst, backend, fewshot);
                    break;
                }
            } catch (const transport_error& e) {
                res.instance_id = inst.id;
                res.style = style;
                res.shots = k;
                res.error = e.what();
            }
            const bool failed = res.parse_error || !res.error.empty();
            if (failed) ++row.errors;
            if (!failed && res.chosen == *inst.label) ++correct;
            report.results.push_back(std::move(res));
        }
        row.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
        report.rows.push_back(row);
    }

    if (!audit_path.empty()) {
        std::ofstream out(audit_path);
        if (!out) throw data_error("run_prompt_eval: cannot write " + audit_path);
        for (const PromptResult& res : report.results) {
            out << res.to_json().dump() << '\n';
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Mock backend

std::shared_ptr<MockScorer> MockScorer::uniform() {
    auto m = std::make_shared<MockScorer>();
    m->mode = Mode::Uniform;
    return m;
}

std::shared_ptr<MockScorer> MockScorer::with_token_rules(std::map<std::string, double> rules,
                                                         double default_logprob) {
    auto m = std::make_shared<MockScorer>();
    m->mode = Mode::TokenRules;
    m->token_rules = std::move(rules);
    m->default_logprob = default_logprob;
    return m;
}

std::shared_ptr<MockScorer> MockScorer::oracle(const DatasetSplit& split) {
    auto m = std::make_shared<MockScorer>();
    m->mode = Mode::Oracle;
    for (const RecamInstance& inst : split.instances) {
        m->known_.push_back({inst.article, inst.options, inst.label.value_or(0)});
    }
    return m;
}

std::shared_ptr<MockScorer> MockScorer::adversarial(const DatasetSplit& split) {
    auto m = oracle(split);
    m->mode = Mode::Adversarial;
    return m;
}

std::string MockScorer::identity() const {
    switch (mode) {
    case Mode::TokenRules: return "mock:token-rules";
    case Mode::Oracle: return "mock:oracle";
    case Mode::Adversarial: return "mock:adversarial";
    case Mode::Uniform: return "mock:uniform";
    }
    return "mock";
}

const MockScorer::Known* MockScorer::match_instance(const std::string& text) const {
    // The target instance is rendered last, so among article matches take
    // the one whose occurrence ends furthest right; ties go to the longer
    // article so a suffix never shadows its superstring.
    const Known* best = nullptr;
    std::size_t best_end = 0;
    for (const Known& k : known_) {
        const std::size_t pos = text.rfind(k.article);
        if (pos == std::string::npos) continue;
        const std::size_t end = pos + k.article.size();
        if (!best || end > best_end ||
            (end == best_end && k.article.size() > best->article.size())) {
            best = &k;
            best_end = end;
        }
    }
    return best;
}

int MockScorer::preferred_index(const Known& k) const {
    return mode == Mode::Adversarial ? (k.label + 1) % 5 : k.label;
}

std::vector<TokenLogProb> MockScorer::echo_logprobs(const std::string& text) {
    if (!echo_capable) {
        throw capability_error("mock backend configured without echo support");
    }
    std::vector<TokenLogProb> out;
    const Known* inst =
        (mode == Mode::Oracle || mode == Mode::Adversarial) ? match_instance(text) : nullptr;
    std::set<std::string> preferred, other;
    if (inst) {
        const int pref = preferred_index(*inst);
        for (int i = 0; i < 5; ++i) {
            for (const std::string& t : split_tokens(inst->options[static_cast<std::size_t>(i)])) {
                if (i == pref) preferred.insert(t);
                else other.insert(t);
            }
        }
    }
    for (const TokenSpan& span : split_tokens_with_offsets(text)) {
        double lp = default_logprob;
        if (mode == Mode::TokenRules) {
            auto it = token_rules.find(span.token);
            if (it != token_rules.end()) lp = it->second;
        } else if (inst) {
            if (preferred.count(span.token)) lp = preferred_logprob;
            else if (other.count(span.token)) lp = other_logprob;
        }
        out.push_back({span.token, lp, span.offset});
    }
    return out;
}

NextTokenResult MockScorer::next_token(const std::string& prompt,
                                       const std::vector<std::string>& candidates) {
    if (!dist_capable) {
        throw capability_error("mock backend configured without next-token support");
    }
    NextTokenResult r;
    const Known* inst =
        (mode == Mode::Oracle || mode == Mode::Adversarial) ? match_instance(prompt) : nullptr;
    if (generate_only) {
        if (!forced_generation.empty()) {
            r.generated = forced_generation;
        } else if (inst) {
            r.generated = std::to_string(preferred_index(*inst));
        } else {
            r.generated = "0";
        }
        r.raw = {{"generated", r.generated}};
        return r;
    }

    std::vector<std::pair<std::string, double>> dist;
    for (const std::string& cand : candidates) {
        double lp;
        if (mode == Mode::TokenRules) {
            auto it = token_rules.find(cand);
            lp = it != token_rules.end() ? it->second : default_logprob;
        } else if (inst) {
            lp = cand == std::to_string(preferred_index(*inst)) ? preferred_logprob
                                                                : other_logprob;
        } else {
            lp = -std::log(static_cast<double>(candidates.size()));
        }
        dist.emplace_back(cand, lp);
    }
    r.raw = nlohmann::json::array();
    for (const auto& [tok, lp] : dist) r.raw.push_back({{"token", tok}, {"logprob", lp}});
    r.distribution = std::move(dist);
    return r;
}

// ---------------------------------------------------------------------------
// HTTP backend

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t x) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[x & 0xf];
        x >>= 4;
    }
    return out;
}

std::string trimmed(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

} // namespace

HttpScorer::HttpScorer(std::string base_url, std::string model, std::string api_key,
                       std::string cache_dir, HttpScorerLimits limits, bool echo_capable)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)),
      cache_dir_(std::move(cache_dir)), limits_(limits), echo_capable_(echo_capable) {
    if (!cache_dir_.empty()) {
        std::filesystem::create_directories(cache_dir_);
    }
}

HttpScorer::~HttpScorer() = default;

std::string HttpScorer::identity() const {
    return "http:" + model_ + "@" + base_url_;
}

nlohmann::json HttpScorer::post_json(const std::string& path, const nlohmann::json& body) {
    nlohmann::ordered_json request;
    request["url"] = base_url_ + path;
    request["body"] = body;
    const std::string canonical = request.dump();

    auto mem = memory_cache_.find(canonical);
    if (mem != memory_cache_.end()) {
        return mem->second;
    }

    // Disk lookup; hash collisions are resolved by verifying the stored
    // request and probing a suffixed name.
    std::string cache_file;
    if (!cache_dir_.empty()) {
        const std::string base = hex64(fnv1a64(canonical));
        for (int probe = 0;; ++probe) {
            std::string candidate =
                cache_dir_ + "/" + base + (probe ? "-" + std::to_string(probe) : "") + ".json";
            if (!std::filesystem::exists(candidate)) {
                cache_file = candidate;
                break;
            }
            try {
                std::ifstream in(candidate);
                nlohmann::json stored;
                in >> stored;
                if (stored.at("request").get<std::string>() == canonical) {
                    nlohmann::json response = stored.at("response");
                    memory_cache_.emplace(canonical, response);
                    return response;
                }
            } catch (const std::exception&) {
                // unreadable entry, keep probing
            }
        }
    }

    httplib::Client client(base_url_);
    client.set_connection_timeout(
        std::chrono::milliseconds(static_cast<int>(limits_.timeout_seconds * 1000)));
    client.set_read_timeout(
        std::chrono::milliseconds(static_cast<int>(limits_.timeout_seconds * 1000)));
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }

    std::string last_error;
    for (int attempt = 0; attempt <= limits_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double ms = limits_.initial_backoff_ms * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(ms)));
        }
        ++network_requests_;
        httplib::Result res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            nlohmann::json parsed;
            try {
                parsed = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw transport_error("malformed response body: " + std::string(e.what()),
                                      attempt + 1);
            }
            memory_cache_.emplace(canonical, parsed);
            if (!cache_file.empty()) {
                nlohmann::ordered_json stored;
                stored["request"] = canonical;
                stored["response"] = parsed;
                const std::string tmp = cache_file + ".tmp";
                std::ofstream out(tmp);
                out << stored.dump();
                out.close();
                std::filesystem::rename(tmp, cache_file);
            }
            return parsed;
        }
        if (res->status == 401 || res->status == 403) {
            throw transport_error("authentication failed (HTTP " + std::to_string(res->status) +
                                      ") for " + base_url_ + path,
                                  attempt + 1);
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        throw transport_error("HTTP " + std::to_string(res->status) + " from " + base_url_ +
                                  path + ": " + res->body.substr(0, 200),
                              attempt + 1);
    }
    throw transport_error("request to " + base_url_ + path + " failed after " +
                              std::to_string(limits_.max_retries + 1) + " attempts: " + last_error,
                          limits_.max_retries + 1);
}

std::vector<TokenLogProb> HttpScorer::parse_echo_payload(const nlohmann::json& body) {
    std::vector<TokenLogProb> out;
    const auto& lp = body.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (logprobs.at(i).is_null()) continue; // the first token carries none
        out.push_back({tokens.at(i).get<std::string>(), logprobs.at(i).get<double>(),
                       offsets.at(i).get<std::size_t>()});
    }
    return out;
}

NextTokenResult HttpScorer::parse_next_token_payload(const nlohmann::json& body,
                                                     const std::vector<std::string>& candidates) {
    NextTokenResult r;
    r.raw = body;
    const auto& choice = body.at("choices").at(0);
    if (choice.contains("logprobs") && !choice.at("logprobs").is_null() &&
        choice.at("logprobs").contains("content") &&
        !choice.at("logprobs").at("content").empty()) {
        const auto& first = choice.at("logprobs").at("content").at(0);
        std::vector<std::pair<std::string, double>> seen;
        if (first.contains("top_logprobs")) {
            for (const auto& e : first.at("top_logprobs")) {
                seen.emplace_back(e.at("token").get<std::string>(), e.at("logprob").get<double>());
            }
        }
        seen.emplace_back(first.at("token").get<std::string>(), first.at("logprob").get<double>());

        std::vector<std::pair<std::string, double>> dist;
        for (const std::string& cand : candidates) {
            double lp = -1e30;
            bool found = false;
            for (const auto& [token, value] : seen) {
                if (trimmed(token) == cand && (!found || value > lp)) {
                    lp = value;
                    found = true;
                }
            }
            dist.emplace_back(cand, lp);
        }
        r.distribution = std::move(dist);
        return r;
    }
    r.generated = choice.at("message").at("content").get<std::string>();
    return r;
}

std::vector<TokenLogProb> HttpScorer::echo_logprobs(const std::string& text) {
    if (!echo_capable_) {
        throw capability_error("backend " + identity() +
                               " is not configured for echoed log-probabilities");
    }
    nlohmann::ordered_json body;
    body["model"] = model_;
    body["prompt"] = text;
    body["max_tokens"] = 0;
    body["echo"] = true;
    body["logprobs"] = 0;
    body["temperature"] = 0;
    try {
        return parse_echo_payload(post_json("/v1/completions", body));
    } catch (const nlohmann::json::exception& e) {
        throw transport_error("unexpected echo response shape: " + std::string(e.what()), 1);
    }
}

NextTokenResult HttpScorer::next_token(const std::string& prompt,
                                       const std::vector<std::string>& candidates) {
    nlohmann::ordered_json body;
    body["model"] = model_;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    body["max_tokens"] = 1;
    body["temperature"] = 0;
    body["logprobs"] = true;
    body["top_logprobs"] = limits_.top_logprobs;
    try {
        return parse_next_token_payload(post_json("/v1/chat/completions", body), candidates);
    } catch (const nlohmann::json::exception& e) {
        throw transport_error("unexpected response shape: " + std::string(e.what()), 1);
    }
}

} // namespace recam
