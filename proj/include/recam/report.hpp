#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace recam {

/// One accuracy cell: a named run (model/head/style) on a named task.
struct ResultRow {
    std::string name;
    std::string task;
    double accuracy = 0.0;
};

struct ResultsTable {
    std::vector<ResultRow> rows;
    std::string baseline; // run name deltas are rendered against; may be empty
};

nlohmann::ordered_json results_to_json(const ResultsTable& table);
ResultsTable results_from_json(const nlohmann::json& j);

/// Aligned text table, one row per run name, one column per task, with
/// "(+x.xx%)" deltas against the baseline row when one is named.
std::string render_results_text(const ResultsTable& table);

} // namespace recam
