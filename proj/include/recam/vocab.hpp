#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace recam {

inline constexpr const char* kPlaceholderToken = "@placeholder";

/// Token ids with a fixed reserved block at the front. Dense ids, and
/// id -> token -> id round-trips for everything in the vocabulary.
class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int cls_id = 1;
    static constexpr int sep_id = 2;
    static constexpr int mask_id = 3;
    static constexpr int unk_id = 4;
    static constexpr int placeholder_id = 5;
    static constexpr int reserved_count = 6;

    Vocabulary();

    /// Appends a regular token; returns its id (existing id if present).
    int add_token(const std::string& token);

    int id_of(const std::string& token) const; // unk_id when absent
    const std::string& token_of(int id) const;
    bool contains(const std::string& token) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }

    static bool is_reserved(int id) { return id >= 0 && id < reserved_count; }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

/// Lowercased tokens split on whitespace and punctuation; punctuation
/// characters come out as single-character tokens and "@placeholder"
/// (any case) survives as one token.
std::vector<std::string> split_tokens(const std::string& text);

/// split_tokens plus the byte offset of each token in the original text.
struct TokenSpan {
    std::string token;
    std::size_t offset;
};
std::vector<TokenSpan> split_tokens_with_offsets(const std::string& text);

/// Frequency-ranked vocabulary from a corpus stream (ties broken
/// lexicographically), truncated so the total size does not exceed max_size.
Vocabulary build_vocab(std::istream& corpus, std::size_t max_size);
Vocabulary build_vocab_from_file(const std::string& path, std::size_t max_size);

/// Token ids for a text; out-of-vocabulary tokens map to [UNK].
std::vector<int> tokenize(const std::string& text, const Vocabulary& v);

} // namespace recam
