#pragma once

// Independent reference implementations that the library is checked
// against. These are deliberately naive: direct transcriptions of the
// textbook definitions, O(n^2) where that is the obvious form.

#include <cstdint>
#include <vector>

namespace busitest {

// Probability that a random positive outranks a random negative, ties
// counted 1/2 — the pairwise (Mann-Whitney) reading of AUC.
inline double mann_whitney_auc(const std::vector<int>& y_true,
                               const std::vector<double>& scores) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] != 1) continue;
        for (std::size_t j = 0; j < y_true.size(); ++j) {
            if (y_true[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct NaiveBinary {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// One-vs-rest counts for class k, recounted sample by sample.
inline NaiveBinary recount(const std::vector<int>& y_true,
                           const std::vector<int>& y_pred, int k) {
    NaiveBinary c;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        bool actual = y_true[i] == k;
        bool predicted = y_pred[i] == k;
        if (actual && predicted) ++c.tp;
        else if (!actual && predicted) ++c.fp;
        else if (actual && !predicted) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Trapezoidal integral of y over x.
inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double area = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
        area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return area;
}

}  // namespace busitest
