// Metrics over decoded outputs: edit distance, CER, empirical-entropy
// bitrate, ABX discriminability (Levenshtein or DTW+KL backend) and NMI.
#ifndef SHMM_EVAL_HPP
#define SHMM_EVAL_HPP

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shmm/common.hpp"

namespace shmm {

struct SymbolSequence {
  std::string id;
  std::vector<std::string> symbols;
  double duration_sec = 0.0;
};

struct AbxItem {
  std::string id;
  std::string category;
  SymbolSequence symbols;        // Levenshtein backend payload
  MatrixXd posteriorgram;        // DTW+KL backend payload
};

template <typename Seq>
int levenshtein(const Seq& a, const Seq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline double cer(const std::string& hyp, const std::string& ref) {
  if (ref.empty()) throw Error("cer: empty reference");
  return static_cast<double>(levenshtein(hyp, ref)) / static_cast<double>(ref.size());
}

// Empirical-entropy information rate of the symbol stream: N * H(s) / D
// bits per second, with H the base-2 entropy over all sequences pooled.
inline double bitrate(const std::vector<SymbolSequence>& sequences) {
  double total_duration = 0.0;
  long n = 0;
  std::map<std::string, long> counts;
  for (const auto& s : sequences) {
    total_duration += s.duration_sec;
    for (const auto& sym : s.symbols) {
      ++counts[sym];
      ++n;
    }
  }
  if (total_duration <= 0.0) throw Error("bitrate: zero total duration");
  if (n == 0) return 0.0;
  double entropy = 0.0;
  for (const auto& [sym, c] : counts) {
    double p = static_cast<double>(c) / static_cast<double>(n);
    entropy -= p * std::log2(p);
  }
  return static_cast<double>(n) * entropy / total_duration;
}

// ABX error: probability that a same-category example sits farther from x
// than a different-category one, ties counted half. Averaged within each
// ordered category pair first, then across pairs.
inline double abx_error(
    const std::vector<AbxItem>& items,
    const std::function<double(const AbxItem&, const AbxItem&)>& distance) {
  std::map<std::string, std::vector<const AbxItem*>> by_cat;
  for (const auto& it : items) {
    if (it.category.empty()) throw Error("abx_error: empty category");
    by_cat[it.category].push_back(&it);
  }
  double pair_sum = 0.0;
  long pair_count = 0;
  for (const auto& [cat_a, as] : by_cat) {
    if (as.size() < 2) continue;
    for (const auto& [cat_b, bs] : by_cat) {
      if (cat_b == cat_a) continue;
      double err_sum = 0.0;
      long n_triples = 0;
      for (const auto* x : as)
        for (const auto* a : as) {
          if (a == x) continue;
          double dax = distance(*a, *x);
          for (const auto* b : bs) {
            double dbx = distance(*b, *x);
            if (dax > dbx)
              err_sum += 1.0;
            else if (dax == dbx)
              err_sum += 0.5;
            ++n_triples;
          }
        }
      if (n_triples > 0) {
        pair_sum += err_sum / static_cast<double>(n_triples);
        ++pair_count;
      }
    }
  }
  if (pair_count == 0)
    throw Error("abx_error: need one category with >= 2 items and another non-empty");
  return pair_sum / static_cast<double>(pair_count);
}

// DTW alignment cost with per-frame cost KL(row_a || row_b) in nats,
// epsilon-smoothed, normalized by alignment path length.
inline double dtw_kl(const MatrixXd& a, const MatrixXd& b, double epsilon = 1e-12) {
  if (a.cols() != b.cols()) throw Error("dtw_kl: column count mismatch");
  if (a.rows() < 1 || b.rows() < 1) throw Error("dtw_kl: empty sequence");
  auto check_rows = [](const MatrixXd& m, const char* name) {
    for (Eigen::Index t = 0; t < m.rows(); ++t)
      if ((m.row(t).array() < 0).any() || std::abs(m.row(t).sum() - 1.0) > 1e-6)
        throw Error(std::string("dtw_kl: ") + name + " rows are not distributions");
  };
  check_rows(a, "first");
  check_rows(b, "second");

  auto kl = [&](Eigen::Index i, Eigen::Index j) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      double p = a(i, c) + epsilon;
      double q = b(j, c) + epsilon;
      acc += p * std::log(p / q);
    }
    return std::max(acc, 0.0);
  };

  const auto n = a.rows(), m = b.rows();
  MatrixXd cost(n, m);
  // Path-length normalization: track the best cost together with its length.
  Eigen::MatrixXi len(n, m);
  cost(0, 0) = kl(0, 0);
  len(0, 0) = 1;
  for (Eigen::Index i = 1; i < n; ++i) {
    cost(i, 0) = cost(i - 1, 0) + kl(i, 0);
    len(i, 0) = len(i - 1, 0) + 1;
  }
  for (Eigen::Index j = 1; j < m; ++j) {
    cost(0, j) = cost(0, j - 1) + kl(0, j);
    len(0, j) = len(0, j - 1) + 1;
  }
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index j = 1; j < m; ++j) {
      double best = cost(i - 1, j - 1);
      int l = len(i - 1, j - 1);
      if (cost(i - 1, j) < best) {
        best = cost(i - 1, j);
        l = len(i - 1, j);
      }
      if (cost(i, j - 1) < best) {
        best = cost(i, j - 1);
        l = len(i, j - 1);
      }
      cost(i, j) = best + kl(i, j);
      len(i, j) = l + 1;
    }
  return cost(n - 1, m - 1) / static_cast<double>(len(n - 1, m - 1));
}

// Mutual information normalized by the arithmetic mean of the two label
// entropies; 1 for partitions identical up to relabeling, 0 when either
// labeling is constant or they are independent.
inline double nmi(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  if (labels_a.size() != labels_b.size()) throw Error("nmi: length mismatch");
  if (labels_a.empty()) throw Error("nmi: empty labelings");
  const double n = static_cast<double>(labels_a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (size_t i = 0; i < labels_a.size(); ++i) {
    pa[labels_a[i]] += 1.0 / n;
    pb[labels_b[i]] += 1.0 / n;
    pab[{labels_a[i], labels_b[i]}] += 1.0 / n;
  }
  auto entropy = [](const std::map<int, double>& p) {
    double h = 0.0;
    for (const auto& [k, v] : p) h -= v * std::log(v);
    return h;
  };
  double ha = entropy(pa), hb = entropy(pb);
  double mi = 0.0;
  for (const auto& [kv, v] : pab)
    mi += v * std::log(v / (pa.at(kv.first) * pb.at(kv.second)));
  if (ha + hb == 0.0) return 1.0;  // both constant: identical partitions
  double denom = 0.5 * (ha + hb);
  if (denom == 0.0) return 0.0;
  return std::max(0.0, std::min(1.0, mi / denom));
}

}  // namespace shmm

#endif  // SHMM_EVAL_HPP
