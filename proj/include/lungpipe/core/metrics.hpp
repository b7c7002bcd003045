#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lungpipe/core/error.hpp"

namespace lp {

// Exact ROC-AUC as the Mann-Whitney statistic P(s+ > s-) + 0.5 P(s+ = s-),
// computed with midranks so tied scores earn half credit.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ValueError("roc_auc: scores and labels differ in length");
    const size_t n = scores.size();
    int64_t npos = 0;
    for (int y : labels) npos += y != 0;
    const int64_t nneg = static_cast<int64_t>(n) - npos;
    if (npos == 0 || nneg == 0)
        throw ValueError("roc_auc: needs both classes present");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // midrank over each tie group, 1-based ranks
    double rank_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
        for (size_t t = i; t < j; ++t)
            if (labels[order[t]] != 0) rank_pos += midrank;
        i = j;
    }
    return (rank_pos - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1)) /
           (static_cast<double>(npos) * static_cast<double>(nneg));
}

}  // namespace lp
