// Copyright 2026 The sirfit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Fisher's exact test under the two-sided probability-mass criterion.  All
// factorials run through lgamma, so tables far beyond 64-bit factorial
// range still work.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sirfit/analyze.hpp"
#include "sirfit/errors.hpp"
#include "sirfit/rng.hpp"

namespace sirfit::analyze {

namespace {

// Relative slack on "table probability <= observed probability", absorbing
// floating-point noise between algebraically equal masses.
constexpr double kRelTol = 1e-12;

double LogFactorial(int64_t n) { return std::lgamma(static_cast<double>(n) + 1.0); }

struct Margins {
  std::vector<int64_t> rows;
  std::vector<int64_t> cols;
  int64_t total = 0;
  // log( prod rows! * prod cols! / N! ), the table-independent part of the
  // multivariate hypergeometric mass.
  double log_const = 0.0;
};

Margins ComputeMargins(const std::vector<std::vector<int64_t>>& table) {
  if (table.empty() || table[0].empty()) {
    throw InvalidArgumentError("contingency table must be nonempty");
  }
  size_t cols = table[0].size();
  Margins m;
  m.rows.assign(table.size(), 0);
  m.cols.assign(cols, 0);
  for (size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != cols) {
      throw InvalidArgumentError("contingency table rows differ in length");
    }
    for (size_t j = 0; j < cols; ++j) {
      if (table[i][j] < 0) {
        throw InvalidArgumentError("contingency table entries must be >= 0");
      }
      m.rows[i] += table[i][j];
      m.cols[j] += table[i][j];
      m.total += table[i][j];
    }
  }
  if (m.total == 0) {
    throw InvalidArgumentError("contingency table is all zero");
  }
  m.log_const = -LogFactorial(m.total);
  for (int64_t r : m.rows) m.log_const += LogFactorial(r);
  for (int64_t c : m.cols) m.log_const += LogFactorial(c);
  return m;
}

// log probability of a full table given precomputed margins.
double LogProb(const Margins& m, const std::vector<std::vector<int64_t>>& t) {
  double sum = 0.0;
  for (const auto& row : t) {
    for (int64_t v : row) sum += LogFactorial(v);
  }
  return m.log_const - sum;
}

// Depth-first enumeration of every table with the given margins.  Cells are
// filled row-major; the last column and last row are forced.  Calls
// visit(log_prob) per table.  Returns false when the enumeration budget is
// exhausted.
class Enumerator {
 public:
  Enumerator(const Margins& m, uint64_t budget)
      : m_(m),
        budget_(budget),
        row_rem_(m.rows),
        col_rem_(m.cols),
        rows_(m.rows.size()),
        cols_(m.cols.size()) {}

  template <typename Visit>
  bool Run(Visit&& visit) {
    count_ = 0;
    return Fill(0, 0, 0.0, visit);
  }

  uint64_t count() const { return count_; }

 private:
  template <typename Visit>
  bool Fill(size_t i, size_t j, double log_fact_sum, Visit& visit) {
    if (i == rows_) {
      if (++count_ > budget_) return false;
      visit(m_.log_const - log_fact_sum);
      return true;
    }
    if (j == cols_) return Fill(i + 1, 0, log_fact_sum, visit);

    bool last_row = (i + 1 == rows_);
    bool last_col = (j + 1 == cols_);
    int64_t lo, hi;
    if (last_col) {
      lo = hi = row_rem_[i];
      if (lo > col_rem_[j]) return true;  // inconsistent branch, prune
    } else if (last_row) {
      lo = hi = col_rem_[j];
      if (lo > row_rem_[i]) return true;
    } else {
      lo = 0;
      hi = std::min(row_rem_[i], col_rem_[j]);
    }
    for (int64_t v = lo; v <= hi; ++v) {
      row_rem_[i] -= v;
      col_rem_[j] -= v;
      bool ok = Fill(i, j + 1, log_fact_sum + LogFactorial(v), visit);
      row_rem_[i] += v;
      col_rem_[j] += v;
      if (!ok) return false;
    }
    return true;
  }

  const Margins& m_;
  uint64_t budget_;
  uint64_t count_ = 0;
  std::vector<int64_t> row_rem_;
  std::vector<int64_t> col_rem_;
  size_t rows_, cols_;
};

FisherResult MonteCarlo(const Margins& m, double log_p_obs,
                        const FisherOptions& options) {
  // Permutation null: distribute the N units with fixed column labels
  // across rows of fixed size, tabulate, and compare masses.
  std::vector<uint8_t> labels;
  labels.reserve(static_cast<size_t>(m.total));
  for (size_t j = 0; j < m.cols.size(); ++j) {
    labels.insert(labels.end(), static_cast<size_t>(m.cols[j]),
                  static_cast<uint8_t>(j));
  }

  Rng rng(options.mc_seed);
  const double threshold = log_p_obs + std::log1p(kRelTol);
  uint64_t hits = 0;
  std::vector<int64_t> cell(m.rows.size() * m.cols.size());

  for (uint64_t s = 0; s < options.mc_samples; ++s) {
    for (size_t i = labels.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(rng.NextBelow(i + 1));
      std::swap(labels[i], labels[j]);
    }
    std::fill(cell.begin(), cell.end(), 0);
    size_t pos = 0;
    for (size_t i = 0; i < m.rows.size(); ++i) {
      for (int64_t k = 0; k < m.rows[i]; ++k) {
        ++cell[i * m.cols.size() + labels[pos++]];
      }
    }
    double log_fact_sum = 0.0;
    for (int64_t v : cell) log_fact_sum += LogFactorial(v);
    if (m.log_const - log_fact_sum <= threshold) ++hits;
  }

  FisherResult result;
  result.method = FisherMethod::kMonteCarlo;
  result.p = static_cast<double>(hits + 1) /
             static_cast<double>(options.mc_samples + 1);
  result.standard_error = std::sqrt(result.p * (1.0 - result.p) /
                                    static_cast<double>(options.mc_samples));
  return result;
}

}  // namespace

FisherResult FisherExact2x2(int64_t a, int64_t b, int64_t c, int64_t d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) {
    throw InvalidArgumentError("contingency table entries must be >= 0");
  }
  int64_t r1 = a + b, r2 = c + d, c1 = a + c, n = r1 + r2;
  if (n == 0) {
    throw InvalidArgumentError("contingency table is all zero");
  }

  // log P(k) for the table [[k, r1-k], [c1-k, r2-c1+k]].
  auto log_p = [&](int64_t k) {
    return LogFactorial(r1) + LogFactorial(r2) + LogFactorial(c1) +
           LogFactorial(n - c1) - LogFactorial(n) - LogFactorial(k) -
           LogFactorial(r1 - k) - LogFactorial(c1 - k) -
           LogFactorial(r2 - c1 + k);
  };

  int64_t k_min = std::max<int64_t>(0, c1 - r2);
  int64_t k_max = std::min(r1, c1);
  double threshold = log_p(a) + std::log1p(kRelTol);

  double sum = 0.0;
  int64_t included = 0;
  for (int64_t k = k_min; k <= k_max; ++k) {
    double lp = log_p(k);
    if (lp <= threshold) {
      sum += std::exp(lp);
      ++included;
    }
  }

  FisherResult result;
  result.tables = static_cast<uint64_t>(k_max - k_min + 1);
  // When every table qualifies the two-sided mass is the entire
  // distribution; report 1 exactly instead of a rounded sum.
  result.p = included == k_max - k_min + 1 ? 1.0 : std::min(sum, 1.0);
  return result;
}

FisherResult FisherExactRxC(const std::vector<std::vector<int64_t>>& table,
                            const FisherOptions& options) {
  Margins m = ComputeMargins(table);
  double log_p_obs = LogProb(m, table);
  double threshold = log_p_obs + std::log1p(kRelTol);

  Enumerator en(m, options.enumeration_budget);
  double sum = 0.0;
  uint64_t included = 0;
  bool complete = en.Run([&](double lp) {
    if (lp <= threshold) {
      sum += std::exp(lp);
      ++included;
    }
  });

  if (!complete) {
    return MonteCarlo(m, log_p_obs, options);
  }

  FisherResult result;
  result.tables = en.count();
  result.p = included == en.count() ? 1.0 : std::min(sum, 1.0);
  return result;
}

}  // namespace sirfit::analyze
