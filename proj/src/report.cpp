#include "busi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "busi/errors.hpp"
#include "csv.hpp"

namespace busi {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

// JSON has no infinity; the +inf threshold that opens every ROC curve is
// stored as null and restored on load.
nlohmann::json threshold_to_json(double t) {
    if (std::isinf(t)) return nullptr;
    return t;
}

double threshold_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

cv::Scalar class_color(std::size_t index) {
    static const cv::Scalar palette[] = {
        {200, 70, 0},    // blue-ish (BGR)
        {60, 140, 0},    // green
        {0, 60, 210},    // red
        {160, 0, 160},   // purple
        {0, 160, 220},   // orange
        {160, 160, 0},   // teal
    };
    return palette[index % (sizeof palette / sizeof palette[0])];
}

void render_confusion_png(const EvaluationReport& report,
                          const std::filesystem::path& path) {
    const ConfusionMatrix& cm = report.confusion;
    int k = cm.num_classes;
    const int cell = 96;
    const int left = 150, top = 90, bottom = 40, right = 40;
    int width = left + cell * k + right;
    int height = top + cell * k + bottom;
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

    std::int64_t max_count = 1;
    for (std::int64_t c : cm.counts) max_count = std::max(max_count, c);

    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            double level = static_cast<double>(cm.at(i, j)) /
                           static_cast<double>(max_count);
            // white -> dark blue ramp
            cv::Scalar fill(255 - level * 145.0, 255 - level * 205.0,
                            255 - level * 225.0);
            cv::Rect rect(left + j * cell, top + i * cell, cell, cell);
            cv::rectangle(canvas, rect, fill, cv::FILLED);
            cv::rectangle(canvas, rect, cv::Scalar(180, 180, 180), 1);

            std::string text = std::to_string(cm.at(i, j));
            int baseline = 0;
            cv::Size sz = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, 0.6, 1,
                                          &baseline);
            cv::Scalar ink = level > 0.55 ? cv::Scalar(255, 255, 255)
                                          : cv::Scalar(30, 30, 30);
            cv::putText(canvas, text,
                        {rect.x + (cell - sz.width) / 2,
                         rect.y + (cell + sz.height) / 2},
                        cv::FONT_HERSHEY_SIMPLEX, 0.6, ink, 1, cv::LINE_AA);
        }
    }

    cv::putText(canvas, "Confusion matrix (rows: true, columns: predicted)",
                {left, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.55, {30, 30, 30}, 1,
                cv::LINE_AA);
    for (int j = 0; j < k; ++j) {
        cv::putText(canvas, cm.class_names[static_cast<std::size_t>(j)],
                    {left + j * cell + 8, top - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
                    {30, 30, 30}, 1, cv::LINE_AA);
    }
    for (int i = 0; i < k; ++i) {
        cv::putText(canvas, cm.class_names[static_cast<std::size_t>(i)],
                    {10, top + i * cell + cell / 2 + 5}, cv::FONT_HERSHEY_SIMPLEX,
                    0.5, {30, 30, 30}, 1, cv::LINE_AA);
    }

    if (!cv::imwrite(path.string(), canvas)) {
        throw IoError("cannot write " + path.string());
    }
}

void render_roc_png(const EvaluationReport& report,
                    const std::filesystem::path& path) {
    const int plot = 460;
    const int left = 70, top = 40, bottom = 60, right = 30;
    int width = left + plot + right;
    int height = top + plot + bottom;
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

    auto to_px = [&](double fpr, double tpr) {
        return cv::Point(left + static_cast<int>(std::lround(fpr * plot)),
                         top + plot - static_cast<int>(std::lround(tpr * plot)));
    };

    // frame and gridlines every 0.2
    for (int g = 0; g <= 5; ++g) {
        double v = g / 5.0;
        cv::line(canvas, to_px(v, 0), to_px(v, 1), {230, 230, 230}, 1);
        cv::line(canvas, to_px(0, v), to_px(1, v), {230, 230, 230}, 1);
        char tick[8];
        std::snprintf(tick, sizeof tick, "%.1f", v);
        cv::putText(canvas, tick, to_px(v, 0) + cv::Point(-10, 20),
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, {60, 60, 60}, 1, cv::LINE_AA);
        cv::putText(canvas, tick, to_px(0, v) + cv::Point(-35, 5),
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, {60, 60, 60}, 1, cv::LINE_AA);
    }
    cv::rectangle(canvas, to_px(0, 1), to_px(1, 0), {120, 120, 120}, 1);

    // chance diagonal
    for (int d = 0; d < plot; d += 12) {
        double a = static_cast<double>(d) / plot;
        double b = std::min(1.0, a + 6.0 / plot);
        cv::line(canvas, to_px(a, a), to_px(b, b), {170, 170, 170}, 1);
    }

    for (std::size_t k = 0; k < report.roc.size(); ++k) {
        const RocCurve& curve = report.roc[k];
        std::vector<cv::Point> points;
        points.reserve(curve.fpr.size() + 1);
        for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
            points.push_back(to_px(curve.fpr[i], curve.tpr[i]));
        }
        if (points.empty() || points.back() != to_px(1, 1)) {
            points.push_back(to_px(1, 1));
        }
        cv::polylines(canvas, points, false, class_color(k), 2, cv::LINE_AA);
    }

    // legend, lower right
    int legend_y = top + plot - 18 * static_cast<int>(report.roc.size()) - 12;
    for (std::size_t k = 0; k < report.roc.size(); ++k) {
        std::string label = report.class_names[k] + " (AUC=" +
                            fmt4(report.roc[k].auc) + ")";
        cv::Point anchor(left + plot - 230, legend_y + 18 * static_cast<int>(k));
        cv::line(canvas, anchor, anchor + cv::Point(24, 0), class_color(k), 2,
                 cv::LINE_AA);
        cv::putText(canvas, label, anchor + cv::Point(32, 5),
                    cv::FONT_HERSHEY_SIMPLEX, 0.42, {30, 30, 30}, 1, cv::LINE_AA);
    }

    cv::putText(canvas, "ROC curves (one-vs-rest)", {left, 25},
                cv::FONT_HERSHEY_SIMPLEX, 0.55, {30, 30, 30}, 1, cv::LINE_AA);
    cv::putText(canvas, "False positive rate", {left + plot / 2 - 70, height - 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, {30, 30, 30}, 1, cv::LINE_AA);
    cv::putText(canvas, "True positive rate", {8, top - 12},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, {30, 30, 30}, 1, cv::LINE_AA);

    if (!cv::imwrite(path.string(), canvas)) {
        throw IoError("cannot write " + path.string());
    }
}

}  // namespace

void emit_report(const EvaluationReport& report,
                 const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create report directory: " + out_dir.string());
    }

    std::size_t k = report.class_names.size();

    // metrics.json — the full report, arrays keep class order
    nlohmann::json doc;
    doc["accuracy"] = report.accuracy;
    doc["macro_f1"] = report.macro_f1;
    doc["macro_auc"] = report.macro_auc;
    doc["class_names"] = report.class_names;
    doc["per_class"] = nlohmann::json::array();
    for (std::size_t i = 0; i < k; ++i) {
        const ClassMetrics& m = report.per_class[i];
        doc["per_class"].push_back({{"class", report.class_names[i]},
                                    {"precision", m.precision},
                                    {"recall", m.recall},
                                    {"f1", m.f1},
                                    {"auc", m.auc},
                                    {"support", m.support},
                                    {"degenerate_precision", m.degenerate_precision},
                                    {"degenerate_recall", m.degenerate_recall}});
    }
    doc["confusion_matrix"] = nlohmann::json::array();
    for (int i = 0; i < report.confusion.num_classes; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < report.confusion.num_classes; ++j) {
            row.push_back(report.confusion.at(i, j));
        }
        doc["confusion_matrix"].push_back(row);
    }
    doc["roc"] = nlohmann::json::array();
    for (std::size_t i = 0; i < report.roc.size(); ++i) {
        const RocCurve& curve = report.roc[i];
        nlohmann::json thresholds = nlohmann::json::array();
        for (double t : curve.thresholds) thresholds.push_back(threshold_to_json(t));
        doc["roc"].push_back({{"class", report.class_names[i]},
                              {"fpr", curve.fpr},
                              {"tpr", curve.tpr},
                              {"thresholds", thresholds},
                              {"auc", curve.auc}});
    }
    write_text_file(out_dir / "metrics.json", doc.dump(2) + "\n");

    // per_class.csv
    {
        std::ostringstream out;
        out << "class,precision,recall,f1,auc,support,degenerate_precision,"
               "degenerate_recall\n";
        for (std::size_t i = 0; i < k; ++i) {
            const ClassMetrics& m = report.per_class[i];
            out << detail::csv_escape(report.class_names[i]) << ','
                << fmt(m.precision) << ',' << fmt(m.recall) << ',' << fmt(m.f1)
                << ',' << fmt(m.auc) << ',' << m.support << ','
                << (m.degenerate_precision ? 1 : 0) << ','
                << (m.degenerate_recall ? 1 : 0) << '\n';
        }
        write_text_file(out_dir / "per_class.csv", out.str());
    }

    // confusion_matrix.csv
    {
        std::ostringstream out;
        out << "true_class";
        for (const std::string& name : report.confusion.class_names) {
            out << ',' << detail::csv_escape(name);
        }
        out << '\n';
        for (int i = 0; i < report.confusion.num_classes; ++i) {
            out << detail::csv_escape(
                report.confusion.class_names[static_cast<std::size_t>(i)]);
            for (int j = 0; j < report.confusion.num_classes; ++j) {
                out << ',' << report.confusion.at(i, j);
            }
            out << '\n';
        }
        write_text_file(out_dir / "confusion_matrix.csv", out.str());
    }

    // roc_<class>.csv
    for (std::size_t i = 0; i < report.roc.size(); ++i) {
        const RocCurve& curve = report.roc[i];
        std::ostringstream out;
        out << "fpr,tpr,threshold\n";
        for (std::size_t p = 0; p < curve.fpr.size(); ++p) {
            out << fmt(curve.fpr[p]) << ',' << fmt(curve.tpr[p]) << ','
                << fmt(curve.thresholds[p]) << '\n';
        }
        write_text_file(out_dir / ("roc_" + report.class_names[i] + ".csv"),
                        out.str());
    }

    render_confusion_png(report, out_dir / "confusion_matrix.png");
    render_roc_png(report, out_dir / "roc.png");
}

EvaluationReport load_metrics_json(const std::filesystem::path& file) {
    nlohmann::json doc;
    try {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open " + file.string());
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("cannot parse " + file.string() + ": " + e.what());
    }

    EvaluationReport report;
    try {
        report.accuracy = doc.at("accuracy").get<double>();
        report.macro_f1 = doc.at("macro_f1").get<double>();
        report.macro_auc = doc.at("macro_auc").get<double>();
        report.class_names = doc.at("class_names").get<std::vector<std::string>>();

        for (const auto& entry : doc.at("per_class")) {
            ClassMetrics m;
            m.precision = entry.at("precision").get<double>();
            m.recall = entry.at("recall").get<double>();
            m.f1 = entry.at("f1").get<double>();
            m.auc = entry.at("auc").get<double>();
            m.support = entry.at("support").get<std::int64_t>();
            m.degenerate_precision = entry.at("degenerate_precision").get<bool>();
            m.degenerate_recall = entry.at("degenerate_recall").get<bool>();
            report.per_class.push_back(m);
        }

        const auto& cm_json = doc.at("confusion_matrix");
        int k = static_cast<int>(cm_json.size());
        report.confusion = ConfusionMatrix(k, report.class_names);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                report.confusion.at(i, j) = cm_json.at(i).at(j).get<std::int64_t>();
            }
        }

        for (const auto& entry : doc.at("roc")) {
            RocCurve curve;
            curve.fpr = entry.at("fpr").get<std::vector<double>>();
            curve.tpr = entry.at("tpr").get<std::vector<double>>();
            for (const auto& t : entry.at("thresholds")) {
                curve.thresholds.push_back(threshold_from_json(t));
            }
            curve.auc = entry.at("auc").get<double>();
            report.roc.push_back(std::move(curve));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed metrics file " + file.string() + ": " + e.what());
    }
    return report;
}

ComparisonTable compare(
    const std::vector<std::pair<std::string, EvaluationReport>>& reports) {
    if (reports.empty()) throw EmptyInputError("compare: no reports given");

    ComparisonTable table;
    table.class_names = reports.front().second.class_names;
    for (const auto& [name, report] : reports) {
        if (report.class_names != table.class_names) {
            throw Error("compare: reports disagree on class names ('" + name + "')");
        }
        ComparisonRow row;
        row.model_name = name;
        row.accuracy = report.accuracy;
        row.macro_f1 = report.macro_f1;
        for (const ClassMetrics& m : report.per_class) {
            row.precision.push_back(m.precision);
            row.recall.push_back(m.recall);
        }
        table.rows.push_back(std::move(row));
    }
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [](const ComparisonRow& a, const ComparisonRow& b) {
                         if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
                         if (a.macro_f1 != b.macro_f1) return a.macro_f1 > b.macro_f1;
                         return a.model_name < b.model_name;
                     });
    return table;
}

void save_comparison_csv(const ComparisonTable& table,
                         const std::filesystem::path& path) {
    std::ostringstream out;
    out << "model,accuracy,macro_f1";
    for (const std::string& name : table.class_names) {
        out << ',' << detail::csv_escape(name + "_precision") << ','
            << detail::csv_escape(name + "_recall");
    }
    out << '\n';
    for (const ComparisonRow& row : table.rows) {
        out << detail::csv_escape(row.model_name) << ',' << fmt(row.accuracy) << ','
            << fmt(row.macro_f1);
        for (std::size_t i = 0; i < table.class_names.size(); ++i) {
            out << ',' << fmt(row.precision[i]) << ',' << fmt(row.recall[i]);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

std::string format_comparison_table(const ComparisonTable& table) {
    std::vector<std::string> headers = {"model", "accuracy", "macro_f1"};
    for (const std::string& name : table.class_names) {
        headers.push_back(name + "_p");
        headers.push_back(name + "_r");
    }
    std::vector<std::vector<std::string>> cells;
    for (const ComparisonRow& row : table.rows) {
        std::vector<std::string> line = {row.model_name, fmt4(row.accuracy),
                                         fmt4(row.macro_f1)};
        for (std::size_t i = 0; i < table.class_names.size(); ++i) {
            line.push_back(fmt4(row.precision[i]));
            line.push_back(fmt4(row.recall[i]));
        }
        cells.push_back(std::move(line));
    }

    std::vector<std::size_t> widths;
    for (std::size_t c = 0; c < headers.size(); ++c) {
        std::size_t w = headers[c].size();
        for (const auto& line : cells) w = std::max(w, line[c].size());
        widths.push_back(w);
    }

    std::ostringstream out;
    auto emit_row = [&](const std::vector<std::string>& line) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            if (c) out << "  ";
            // left-align the model column, right-align numbers
            std::size_t pad = widths[c] - line[c].size();
            if (c == 0) {
                out << line[c] << std::string(pad, ' ');
            } else {
                out << std::string(pad, ' ') << line[c];
            }
        }
        out << '\n';
    };
    emit_row(headers);
    for (const auto& line : cells) emit_row(line);
    return out.str();
}

}  // namespace busi
