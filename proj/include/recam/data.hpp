#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recam/random.hpp"

namespace recam {

/// One cloze question: passage, question with a single @placeholder, five
/// candidate options and (except on unlabeled test splits) the gold index.
struct RecamInstance {
    std::int64_t id = -1; // line number within its split
    std::string article;
    std::string question;
    std::array<std::string, 5> options;
    std::optional<int> label;
};

struct DatasetSplit {
    std::string name; // train, trial, dev or test
    std::vector<RecamInstance> instances;

    bool labeled() const;
    std::size_t size() const { return instances.size(); }
};

/// Number of case-insensitive "@placeholder" occurrences in a string.
std::size_t count_placeholders(const std::string& text);

/// Case-insensitive replacement of the first @placeholder occurrence;
/// returns the text and the byte span of the inserted value.
struct FilledText {
    std::string text;
    std::size_t value_begin = 0;
    std::size_t value_end = 0;
};
FilledText fill_placeholder(const std::string& question, const std::string& value);

/// Parses a JSONL file, one instance per line. Accepts both the
/// "option_0"/"article"/"label" and the "Option0"/"Article"/"Label"
/// spellings; labels may arrive as integers or digit strings. Labels are
/// required unless the split is named "test".
DatasetSplit load_recam_jsonl(const std::string& path, const std::string& split_name = "train");

/// Writes the canonical spelling: article, question, option_0..option_4,
/// label (omitted when absent).
void serialize_recam_jsonl(const DatasetSplit& split, const std::string& path);

enum class SyntheticRule { Copy, Majority };

SyntheticRule synthetic_rule_from_string(const std::string& name);
std::string to_string(SyntheticRule rule);

/// Planted-rule datasets for desk-scale verification.
///  COPY     — the gold option is the only option token in the article.
///  MAJORITY — every option appears in the article; the gold one most often.
DatasetSplit make_synthetic_dataset(SyntheticRule rule, std::size_t n, RandomSource& rng,
                                    const std::string& split_name = "train");

} // namespace recam
