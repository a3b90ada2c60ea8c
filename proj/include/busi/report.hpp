#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "busi/metrics.hpp"

namespace busi {

struct ComparisonRow {
    std::string model_name;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    // Aligned with ComparisonTable::class_names.
    std::vector<double> precision;
    std::vector<double> recall;
};

struct ComparisonTable {
    std::vector<std::string> class_names;
    std::vector<ComparisonRow> rows;  // sorted: accuracy desc, macro_f1 desc, name asc
};

// Writes metrics.json, per_class.csv, confusion_matrix.csv/.png,
// roc_<class>.csv per class, and a combined roc.png into out_dir.
// CSV/JSON carry full precision; only PNG annotations are rounded
// (4 decimals). Throws IoError when out_dir cannot be written.
void emit_report(const EvaluationReport& report,
                 const std::filesystem::path& out_dir);

// Parses a metrics.json produced by emit_report back into a report.
EvaluationReport load_metrics_json(const std::filesystem::path& file);

// Cross-model table sorted by accuracy descending, ties by macro F1
// then model name. All reports must share one class-name list.
// Empty input -> EmptyInputError.
ComparisonTable compare(
    const std::vector<std::pair<std::string, EvaluationReport>>& reports);

// comparison.csv: model,accuracy,macro_f1,<class>_precision,<class>_recall...
void save_comparison_csv(const ComparisonTable& table,
                         const std::filesystem::path& path);

// Fixed-width console rendering, 4-decimal display precision.
std::string format_comparison_table(const ComparisonTable& table);

}  // namespace busi
