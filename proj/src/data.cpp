#include "recam/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "recam/errors.hpp"

namespace recam {

namespace {

std::size_t find_placeholder(const std::string& text, std::size_t from = 0) {
    static const std::string needle = "@placeholder";
    if (text.size() < needle.size()) return std::string::npos;
    for (std::size_t i = from; i + needle.size() <= text.size(); ++i) {
        bool hit = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (std::tolower(static_cast<unsigned char>(text[i + j])) != needle[j]) {
                hit = false;
                break;
            }
        }
        if (hit) return i;
    }
    return std::string::npos;
}

const nlohmann::json* find_field(const nlohmann::json& obj,
                                 std::initializer_list<const char*> names) {
    for (const char* name : names) {
        auto it = obj.find(name);
        if (it != obj.end()) return &*it;
    }
    return nullptr;
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& field,
                            const std::string& what) {
    throw data_error("line " + std::to_string(line_no) + ", field \"" + field + "\": " + what);
}

std::string get_string_field(const nlohmann::json& obj, std::size_t line_no,
                             std::initializer_list<const char*> names) {
    const nlohmann::json* f = find_field(obj, names);
    if (!f) fail_line(line_no, *names.begin(), "missing");
    if (!f->is_string()) fail_line(line_no, *names.begin(), "expected a string");
    return f->get<std::string>();
}

int parse_label(const nlohmann::json& j, std::size_t line_no) {
    if (j.is_number_integer()) return j.get<int>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        try {
            std::size_t used = 0;
            const int v = std::stoi(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
    }
    fail_line(line_no, "label", "expected an integer 0..4");
}

void validate_instance(const RecamInstance& inst, std::size_t line_no, bool label_required) {
    for (int i = 0; i < 5; ++i) {
        if (inst.options[static_cast<std::size_t>(i)].empty()) {
            fail_line(line_no, "option_" + std::to_string(i), "option is empty");
        }
    }
    const std::size_t n = count_placeholders(inst.question);
    if (n != 1) {
        fail_line(line_no, "question",
                  "expected exactly one @placeholder, found " + std::to_string(n));
    }
    if (inst.label) {
        if (*inst.label < 0 || *inst.label > 4) {
            fail_line(line_no, "label", "label " + std::to_string(*inst.label) + " out of 0..4");
        }
    } else if (label_required) {
        fail_line(line_no, "label", "missing");
    }
}

// Shared word pool for synthetic instances.
const std::vector<std::string>& word_pool() {
    static const std::vector<std::string> pool = {
        "apple",  "river",  "stone",  "cloud",  "tiger",  "bread",  "lamp",   "wheel",
        "forest", "silver", "music",  "garden", "window", "candle", "meadow", "paper",
        "bottle", "harbor", "copper", "engine", "island", "jacket", "kettle", "ladder",
        "marble", "needle", "orange", "pencil", "quarry", "rabbit", "saddle", "anchor",
    };
    return pool;
}

const std::vector<std::string>& question_templates() {
    static const std::vector<std::string> templates = {
        "find the @placeholder here",
        "spot the @placeholder now",
        "pick the @placeholder today",
    };
    return templates;
}

} // namespace

bool DatasetSplit::labeled() const {
    return std::all_of(instances.begin(), instances.end(),
                       [](const RecamInstance& i) { return i.label.has_value(); });
}

std::size_t count_placeholders(const std::string& text) {
    std::size_t n = 0;
    std::size_t pos = find_placeholder(text);
    while (pos != std::string::npos) {
        ++n;
        pos = find_placeholder(text, pos + 1);
    }
    return n;
}

FilledText fill_placeholder(const std::string& question, const std::string& value) {
    const std::size_t pos = find_placeholder(question);
    if (pos == std::string::npos) {
        throw data_error("fill_placeholder: question contains no @placeholder");
    }
    static const std::size_t needle_len = std::string("@placeholder").size();
    FilledText out;
    out.text = question.substr(0, pos) + value + question.substr(pos + needle_len);
    out.value_begin = pos;
    out.value_end = pos + value.size();
    return out;
}

DatasetSplit load_recam_jsonl(const std::string& path, const std::string& split_name) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("load_recam_jsonl: cannot read " + path);
    }
    const bool label_required = split_name != "test";

    DatasetSplit split;
    split.name = split_name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        RecamInstance inst;
        inst.id = static_cast<std::int64_t>(line_no);
        inst.article = get_string_field(obj, line_no, {"article", "Article"});
        inst.question = get_string_field(obj, line_no, {"question", "Question"});
        for (int i = 0; i < 5; ++i) {
            const std::string snake = "option_" + std::to_string(i);
            const std::string camel = "Option" + std::to_string(i);
            inst.options[static_cast<std::size_t>(i)] =
                get_string_field(obj, line_no, {snake.c_str(), camel.c_str()});
        }
        if (const nlohmann::json* lab = find_field(obj, {"label", "Label"})) {
            inst.label = parse_label(*lab, line_no);
        }
        validate_instance(inst, line_no, label_required);
        split.instances.push_back(std::move(inst));
    }
    return split;
}

void serialize_recam_jsonl(const DatasetSplit& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw data_error("serialize_recam_jsonl: cannot write " + path);
    }
    for (const RecamInstance& inst : split.instances) {
        nlohmann::ordered_json j;
        j["article"] = inst.article;
        j["question"] = inst.question;
        for (int i = 0; i < 5; ++i) {
            j["option_" + std::to_string(i)] = inst.options[static_cast<std::size_t>(i)];
        }
        if (inst.label) j["label"] = *inst.label;
        out << j.dump() << '\n';
    }
}

SyntheticRule synthetic_rule_from_string(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "copy") return SyntheticRule::Copy;
    if (lower == "majority") return SyntheticRule::Majority;
    throw config_error("unknown synthetic rule: " + name);
}

std::string to_string(SyntheticRule rule) {
    return rule == SyntheticRule::Copy ? "copy" : "majority";
}

DatasetSplit make_synthetic_dataset(SyntheticRule rule, std::size_t n, RandomSource& rng,
                                    const std::string& split_name) {
    if (n < 1) {
        throw argument_error("make_synthetic_dataset: n must be at least 1");
    }
    const auto& pool = word_pool();
    DatasetSplit split;
    split.name = split_name;
    split.instances.reserve(n);

    for (std::size_t idx = 0; idx < n; ++idx) {
        RecamInstance inst;
        inst.id = static_cast<std::int64_t>(idx + 1);

        // Five distinct option words.
        std::vector<std::size_t> chosen;
        while (chosen.size() < 5) {
            const std::size_t w = static_cast<std::size_t>(rng.uniform_int(pool.size()));
            if (std::find(chosen.begin(), chosen.end(), w) == chosen.end()) chosen.push_back(w);
        }
        for (int i = 0; i < 5; ++i) inst.options[static_cast<std::size_t>(i)] = pool[chosen[static_cast<std::size_t>(i)]];
        const int label = static_cast<int>(rng.uniform_int(5));
        inst.label = label;

        // Filler words never collide with any option of this instance.
        std::vector<std::string> filler_pool;
        for (std::size_t w = 0; w < pool.size(); ++w) {
            if (std::find(chosen.begin(), chosen.end(), w) == chosen.end()) {
                filler_pool.push_back(pool[w]);
            }
        }

        std::vector<std::string> words;
        const std::size_t filler_count = 4 + rng.uniform_int(4);
        for (std::size_t w = 0; w < filler_count; ++w) {
            words.push_back(filler_pool[rng.uniform_int(filler_pool.size())]);
        }
        const std::string& gold = inst.options[static_cast<std::size_t>(label)];
        if (rule == SyntheticRule::Copy) {
            words.insert(words.begin() + static_cast<long>(rng.uniform_int(words.size() + 1)),
                         gold);
        } else {
            for (int r = 0; r < 4; ++r) words.push_back(gold);
            for (int i = 0; i < 5; ++i) {
                if (i == label) continue;
                words.push_back(inst.options[static_cast<std::size_t>(i)]);
            }
            rng.shuffle(words);
        }

        std::ostringstream article;
        for (std::size_t w = 0; w < words.size(); ++w) {
            if (w) article << ' ';
            article << words[w];
        }
        article << '.';
        inst.article = article.str();

        inst.question = question_templates()[rng.uniform_int(question_templates().size())];
        split.instances.push_back(std::move(inst));
    }
    return split;
}

} // namespace recam
