#include "busi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "busi/errors.hpp"
#include "csv.hpp"

namespace busi {

ConfusionMatrix::ConfusionMatrix(int k, std::vector<std::string> names)
    : num_classes(k),
      counts(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0),
      class_names(std::move(names)) {
    if (class_names.empty()) {
        for (int i = 0; i < k; ++i) class_names.push_back("class_" + std::to_string(i));
    }
}

std::int64_t ConfusionMatrix::at(int true_class, int predicted_class) const {
    return counts[static_cast<std::size_t>(true_class) * num_classes + predicted_class];
}

std::int64_t& ConfusionMatrix::at(int true_class, int predicted_class) {
    return counts[static_cast<std::size_t>(true_class) * num_classes + predicted_class];
}

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (int i = 0; i < num_classes; ++i) t += at(i, i);
    return t;
}

std::int64_t ConfusionMatrix::support(int k) const {
    std::int64_t s = 0;
    for (int j = 0; j < num_classes; ++j) s += at(k, j);
    return s;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, int num_classes,
                                 std::vector<std::string> class_names) {
    if (y_true.size() != y_pred.size()) {
        throw ShapeError("confusion_matrix: y_true has " + std::to_string(y_true.size()) +
                         " entries, y_pred has " + std::to_string(y_pred.size()));
    }
    ConfusionMatrix cm(num_classes, std::move(class_names));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        int t = y_true[i];
        int p = y_pred[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
            throw LabelError("confusion_matrix: label out of range at sample " +
                             std::to_string(i));
        }
        ++cm.at(t, p);
    }
    return cm;
}

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, int k) {
    if (k < 0 || k >= cm.num_classes) {
        throw LabelError("one_vs_rest: class index " + std::to_string(k) +
                         " out of range for K=" + std::to_string(cm.num_classes));
    }
    BinaryCounts c;
    c.tp = cm.at(k, k);
    for (int i = 0; i < cm.num_classes; ++i) {
        if (i == k) continue;
        c.fp += cm.at(i, k);
        c.fn += cm.at(k, i);
    }
    c.tn = cm.total() - c.tp - c.fp - c.fn;
    return c;
}

double accuracy(const ConfusionMatrix& cm) {
    std::int64_t total = cm.total();
    if (total == 0) throw UndefinedMetricError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double precision(const BinaryCounts& c, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (c.tp + c.fp == 0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const BinaryCounts& c, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (c.tp + c.fn == 0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f1(double precision, double recall) {
    double s = precision + recall;
    if (s == 0.0) return 0.0;
    return 2.0 * precision * recall / s;
}

RocCurve roc_curve(const std::vector<int>& y_true_binary,
                   const std::vector<double>& scores) {
    if (y_true_binary.size() != scores.size()) {
        throw ShapeError("roc_curve: label/score length mismatch");
    }
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
    for (int y : y_true_binary) {
        if (y != 0 && y != 1) throw LabelError("roc_curve: labels must be 0 or 1");
        if (y == 1) ++positives; else ++negatives;
    }
    if (positives == 0 || negatives == 0) {
        throw UndefinedMetricError("roc_curve: needs both a positive and a negative sample");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    RocCurve curve;
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());

    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        double threshold = scores[order[i]];
        // consume the whole tie group before emitting a point
        while (i < order.size() && scores[order[i]] == threshold) {
            if (y_true_binary[order[i]] == 1) ++tp; else ++fp;
            ++i;
        }
        curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
        curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
        curve.thresholds.push_back(threshold);
    }

    double auc = 0.0;
    for (std::size_t p = 1; p < curve.fpr.size(); ++p) {
        auc += (curve.fpr[p] - curve.fpr[p - 1]) * (curve.tpr[p] + curve.tpr[p - 1]) / 2.0;
    }
    curve.auc = auc;
    return curve;
}

std::vector<int> argmax_rows(const Tensor& scores) {
    if (scores.ndim() != 2) throw ShapeError("argmax_rows: expected a 2-D tensor");
    int n = scores.dim(0);
    int k = scores.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_value = scores.at(i, 0);
        for (int j = 1; j < k; ++j) {
            if (scores.at(i, j) > best_value) {
                best_value = scores.at(i, j);
                best = j;
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

EvaluationReport evaluate(const std::vector<int>& y_true, const Tensor& y_score,
                          std::vector<std::string> class_names) {
    if (y_score.ndim() != 2) throw ShapeError("evaluate: y_score must be (n, K)");
    int n = y_score.dim(0);
    int k = y_score.dim(1);
    if (static_cast<int>(y_true.size()) != n) {
        throw ShapeError("evaluate: y_true length does not match y_score rows");
    }
    if (static_cast<int>(class_names.size()) != k) {
        throw ShapeError("evaluate: class_names length does not match y_score columns");
    }
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += y_score.at(i, j);
        if (std::abs(s - 1.0) > 1e-3) {
            throw ShapeError("evaluate: y_score row " + std::to_string(i) +
                             " sums to " + std::to_string(s) + ", expected 1");
        }
    }

    EvaluationReport report;
    report.class_names = class_names;

    std::vector<int> y_pred = argmax_rows(y_score);
    report.confusion = confusion_matrix(y_true, y_pred, k, class_names);
    report.accuracy = accuracy(report.confusion);

    double f1_sum = 0.0;
    double auc_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        BinaryCounts counts = one_vs_rest(report.confusion, c);
        ClassMetrics m;
        m.support = report.confusion.support(c);
        m.precision = precision(counts, &m.degenerate_precision);
        m.recall = recall(counts, &m.degenerate_recall);
        m.f1 = f1(m.precision, m.recall);

        std::vector<int> binary(static_cast<std::size_t>(n));
        std::vector<double> column(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            binary[static_cast<std::size_t>(i)] = (y_true[static_cast<std::size_t>(i)] == c) ? 1 : 0;
            column[static_cast<std::size_t>(i)] = y_score.at(i, c);
        }
        RocCurve curve = roc_curve(binary, column);
        m.auc = curve.auc;
        report.roc.push_back(std::move(curve));

        f1_sum += m.f1;
        auc_sum += m.auc;
        report.per_class.push_back(m);
    }
    report.macro_f1 = f1_sum / k;
    report.macro_auc = auc_sum / k;
    return report;
}

void save_predictions_csv(const Predictions& p, const std::filesystem::path& path) {
    int n = p.y_score.ndim() == 2 ? p.y_score.dim(0) : 0;
    int k = p.y_score.ndim() == 2 ? p.y_score.dim(1) : 0;
    if (static_cast<int>(p.paths.size()) != n || static_cast<int>(p.y_true.size()) != n) {
        throw ShapeError("save_predictions_csv: inconsistent row counts");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_path,true_label";
    for (int j = 0; j < k; ++j) out << ",score_" << j;
    out << "\n";
    char buffer[64];
    for (int i = 0; i < n; ++i) {
        out << detail::csv_escape(p.paths[static_cast<std::size_t>(i)]) << ","
            << p.y_true[static_cast<std::size_t>(i)];
        for (int j = 0; j < k; ++j) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", p.y_score.at(i, j));
            out << "," << buffer;
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Predictions load_predictions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing header");
    std::vector<std::string> header = detail::csv_split(line, 1);
    if (header.size() < 3 || header[0] != "sample_path" || header[1] != "true_label") {
        throw ParseError("line 1: expected header sample_path,true_label,score_0,...");
    }
    int k = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < k; ++j) {
        if (header[static_cast<std::size_t>(j) + 2] != "score_" + std::to_string(j)) {
            throw ParseError("line 1: bad score column name");
        }
    }

    Predictions p;
    std::vector<double> scores;
    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::vector<std::string> fields = detail::csv_split(line, line_number);
        if (static_cast<int>(fields.size()) != k + 2) {
            throw ParseError("line " + std::to_string(line_number) + ": expected " +
                             std::to_string(k + 2) + " fields, got " +
                             std::to_string(fields.size()));
        }
        p.paths.push_back(fields[0]);
        try {
            std::size_t used = 0;
            int label = std::stoi(fields[1], &used);
            if (used != fields[1].size()) throw std::invalid_argument("trailing chars");
            p.y_true.push_back(label);
            for (int j = 0; j < k; ++j) {
                const std::string& f = fields[static_cast<std::size_t>(j) + 2];
                double v = std::stod(f, &used);
                if (used != f.size()) throw std::invalid_argument("trailing chars");
                scores.push_back(v);
            }
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_number) + ": malformed number");
        }
    }
    int n = static_cast<int>(p.paths.size());
    p.y_score = Tensor({n, k}, std::move(scores));
    return p;
}

}  // namespace busi
