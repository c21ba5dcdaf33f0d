#include "recam/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "recam/errors.hpp"

namespace recam {

nlohmann::ordered_json results_to_json(const ResultsTable& table) {
    nlohmann::ordered_json j;
    j["baseline"] = table.baseline;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const ResultRow& r : table.rows) {
        rows.push_back({{"name", r.name}, {"task", r.task}, {"accuracy", r.accuracy}});
    }
    j["rows"] = std::move(rows);
    return j;
}

ResultsTable results_from_json(const nlohmann::json& j) {
    ResultsTable table;
    try {
        table.baseline = j.value("baseline", std::string());
        for (const auto& r : j.at("rows")) {
            table.rows.push_back({r.at("name").get<std::string>(),
                                  r.at("task").get<std::string>(),
                                  r.at("accuracy").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("results file: ") + e.what());
    }
    return table;
}

namespace {

std::string percent(double accuracy) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", accuracy * 100.0);
    return buf;
}

std::string delta(double accuracy, double baseline) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " (%+.2f%%)", (accuracy - baseline) * 100.0);
    return buf;
}

} // namespace

std::string render_results_text(const ResultsTable& table) {
    // Names and tasks in first-appearance order.
    std::vector<std::string> names, tasks;
    std::map<std::pair<std::string, std::string>, double> cells;
    for (const ResultRow& r : table.rows) {
        if (std::find(names.begin(), names.end(), r.name) == names.end()) names.push_back(r.name);
        if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
        cells[{r.name, r.task}] = r.accuracy;
    }

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"model"};
    header.insert(header.end(), tasks.begin(), tasks.end());
    grid.push_back(header);
    for (const std::string& name : names) {
        std::vector<std::string> line{name};
        for (const std::string& task : tasks) {
            auto it = cells.find({name, task});
            if (it == cells.end()) {
                line.push_back("-");
                continue;
            }
            std::string cell = percent(it->second);
            if (!table.baseline.empty() && name != table.baseline) {
                auto base = cells.find({table.baseline, task});
                if (base != cells.end()) cell += delta(it->second, base->second);
            }
            line.push_back(cell);
        }
        grid.push_back(line);
    }

    std::vector<std::size_t> widths(grid.front().size(), 0);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            widths[c] = std::max(widths[c], line[c].size());
        }
    }
    std::string out;
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out += line[c];
            if (c + 1 < line.size()) {
                out.append(widths[c] - line[c].size() + 2, ' ');
            }
        }
        out += '\n';
    }
    return out;
}

} // namespace recam
