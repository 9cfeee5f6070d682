#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include "elden/tensor.hpp"

namespace oracle {

// Naive triple-loop matmul.
inline elden::tc::Tensor matmul(const elden::tc::Tensor& a, const elden::tc::Tensor& b) {
  auto c = elden::tc::Tensor::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c.at(i, j) += a.at(i, k) * b.at(k, j);
  return c;
}

// Central finite difference of a scalar function w.r.t. one stored value.
inline double fd(const std::function<double()>& eval, double* x, double h = 1e-5) {
  const double orig = *x;
  *x = orig + h;
  const double fp = eval();
  *x = orig - h;
  const double fm = eval();
  *x = orig;
  return (fp - fm) / (2.0 * h);
}

// Gradient-check comparison: relative where the magnitudes allow it,
// absolute below the FD noise floor.
inline bool grad_close(double ad, double fdv, double rel_tol, double abs_floor = 1e-4,
                       double abs_tol = 1e-9) {
  const double denom = std::max(std::fabs(ad), std::fabs(fdv));
  if (denom < abs_floor) return std::fabs(ad - fdv) <= abs_tol;
  return std::fabs(ad - fdv) / denom <= rel_tol;
}

// Exact ROC-AUC by comparing every positive/negative pair.
inline double roc_auc_pairwise(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  double wins = 0, ties = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1;
      else if (scores[i] == scores[j])
        ties += 1;
    }
  }
  return (wins + 0.5 * ties) / (double)pairs;
}

// Best F1 by exhaustively sweeping thresholds at every midpoint between
// distinct sorted scores plus the two infinities.
inline double best_f1_sweep(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> thresholds;
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i + 1 < s.size(); ++i) thresholds.push_back(0.5 * (s[i] + s[i + 1]));
  thresholds.push_back(std::numeric_limits<double>::infinity());
  double best = 0.0;
  for (double th : thresholds) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i] >= th;
      if (pred && labels[i] == 1) ++tp;
      if (pred && labels[i] == 0) ++fp;
      if (!pred && labels[i] == 1) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    const double f1 = denom > 0 ? 2.0 * tp / denom : 0.0;
    best = std::max(best, f1);
  }
  return best;
}

}  // namespace oracle
