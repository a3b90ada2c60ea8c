#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "busi/tensor.hpp"

namespace busi {

/// K x K confusion matrix. Rows index the true class, columns the
/// predicted class.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::int64_t> counts;  // row-major K x K
    std::vector<std::string> class_names;

    ConfusionMatrix() = default;
    ConfusionMatrix(int k, std::vector<std::string> names = {});

    std::int64_t at(int true_class, int predicted_class) const;
    std::int64_t& at(int true_class, int predicted_class);
    std::int64_t total() const;
    std::int64_t trace() const;
    /// Row sum: number of samples whose true class is k.
    std::int64_t support(int k) const;

    bool operator==(const ConfusionMatrix& other) const = default;
};

/// One-vs-rest reduction of a multi-class confusion matrix.
struct BinaryCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
};

struct RocCurve {
    // Parallel arrays; point i is (fpr[i], tpr[i]) at thresholds[i].
    // The curve starts at (0,0) (threshold +inf) and ends at (1,1).
    std::vector<double> fpr;
    std::vector<double> tpr;
    std::vector<double> thresholds;
    double auc = 0.0;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    std::int64_t support = 0;
    // Set when the respective denominator was zero and the value fell
    // back to the 0 convention.
    bool degenerate_precision = false;
    bool degenerate_recall = false;
};

struct EvaluationReport {
    double accuracy = 0.0;
    std::vector<std::string> class_names;
    std::vector<ClassMetrics> per_class;
    double macro_f1 = 0.0;
    double macro_auc = 0.0;
    ConfusionMatrix confusion;
    std::vector<RocCurve> roc;  // one curve per class, one-vs-rest
};

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, int num_classes,
                                 std::vector<std::string> class_names = {});

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, int k);

/// trace / total. Reduces to (TP+TN)/(TP+TN+FP+FN) for two classes.
double accuracy(const ConfusionMatrix& cm);

/// tp / (tp + fp); zero denominator yields 0 (see `degenerate` out-flag).
double precision(const BinaryCounts& c, bool* degenerate = nullptr);

/// tp / (tp + fn); zero denominator yields 0 (see `degenerate` out-flag).
double recall(const BinaryCounts& c, bool* degenerate = nullptr);

/// Harmonic mean 2pr/(p+r); 0 when p + r == 0.
double f1(double precision, double recall);

/// Threshold sweep over the distinct scores, descending, ties grouped.
/// AUC is the trapezoidal integral of the curve and equals the
/// pairwise ranking statistic with ties counted 1/2.
RocCurve roc_curve(const std::vector<int>& y_true_binary,
                   const std::vector<double>& scores);

/// Full evaluation: argmax predictions (ties -> lowest index), confusion
/// matrix, per-class one-vs-rest metrics, per-class ROC from score
/// column k, unweighted macro averages.
EvaluationReport evaluate(const std::vector<int>& y_true, const Tensor& y_score,
                          std::vector<std::string> class_names);

/// Row argmax with ties resolved to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);

// predictions.csv interchange: sample_path,true_label,score_0,...,score_{K-1}
struct Predictions {
    std::vector<std::string> paths;
    std::vector<int> y_true;
    Tensor y_score;  // (n, K)
};

void save_predictions_csv(const Predictions& p, const std::filesystem::path& path);
Predictions load_predictions_csv(const std::filesystem::path& path);

}  // namespace busi
