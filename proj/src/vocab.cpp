#include "recam/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>

#include <nlohmann/json.hpp>

#include "recam/errors.hpp"

namespace recam {

namespace {

const char* kReservedTokens[Vocabulary::reserved_count] = {
    "[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]", kPlaceholderToken,
};

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0;
}

bool placeholder_at(const std::string& text, std::size_t pos) {
    const std::size_t len = std::char_traits<char>::length(kPlaceholderToken);
    if (pos + len > text.size()) return false;
    for (std::size_t i = 0; i < len; ++i) {
        if (std::tolower(static_cast<unsigned char>(text[pos + i])) != kPlaceholderToken[i]) {
            return false;
        }
    }
    return true;
}

} // namespace

Vocabulary::Vocabulary() {
    for (const char* t : kReservedTokens) {
        token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
        id_to_token_.emplace_back(t);
    }
}

int Vocabulary::add_token(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_token_.size());
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) {
        throw argument_error("Vocabulary: id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

void Vocabulary::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["tokens"] = std::vector<std::string>(id_to_token_.begin() + reserved_count,
                                           id_to_token_.end());
    std::ofstream out(path);
    if (!out) throw data_error("Vocabulary: cannot write " + path);
    out << j.dump() << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("Vocabulary: cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("Vocabulary: malformed file " + path + ": " + e.what());
    }
    Vocabulary v;
    for (const auto& t : j.at("tokens")) {
        v.add_token(t.get<std::string>());
    }
    return v;
}

std::vector<TokenSpan> split_tokens_with_offsets(const std::string& text) {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    const std::size_t placeholder_len = std::char_traits<char>::length(kPlaceholderToken);
    while (i < text.size()) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (placeholder_at(text, i)) {
            out.push_back({kPlaceholderToken, i});
            i += placeholder_len;
            continue;
        }
        if (is_word_char(c)) {
            std::size_t j = i;
            std::string word;
            while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) {
                word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j]))));
                ++j;
            }
            out.push_back({std::move(word), i});
            i = j;
            continue;
        }
        out.push_back({std::string(1, text[i]), i});
        ++i;
    }
    return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    for (auto& span : split_tokens_with_offsets(text)) {
        out.push_back(std::move(span.token));
    }
    return out;
}

Vocabulary build_vocab(std::istream& corpus, std::size_t max_size) {
    std::map<std::string, std::size_t> counts;
    std::string line;
    std::size_t total_tokens = 0;
    while (std::getline(corpus, line)) {
        for (auto& tok : split_tokens(line)) {
            if (tok == kPlaceholderToken) continue; // already reserved
            ++counts[tok];
            ++total_tokens;
        }
    }
    if (total_tokens == 0) {
        throw data_error("build_vocab: corpus contains no tokens");
    }

    // Frequency descending, ties lexicographic ascending (map iteration is
    // already lexicographic, and stable_sort keeps it that way).
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    const std::size_t budget =
        max_size > Vocabulary::reserved_count ? max_size - Vocabulary::reserved_count : 0;
    for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) {
        v.add_token(ranked[i].first);
    }
    return v;
}

Vocabulary build_vocab_from_file(const std::string& path, std::size_t max_size) {
    std::ifstream in(path);
    if (!in) throw data_error("build_vocab: cannot read " + path);
    return build_vocab(in, max_size);
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& v) {
    std::vector<int> ids;
    for (const auto& tok : split_tokens(text)) {
        ids.push_back(v.id_of(tok));
    }
    return ids;
}

} // namespace recam
