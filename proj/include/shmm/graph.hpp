// Decode/training graphs: per-unit 3-state chains, the pseudo-phone loop and
// forced-alignment chains. Graphs are immutable after build.
#ifndef SHMM_GRAPH_HPP
#define SHMM_GRAPH_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "shmm/common.hpp"
#include "shmm/model.hpp"

namespace shmm {

struct Arc {
  int src = 0;
  int dst = 0;
  double log_weight = 0.0;
};

struct DecodeGraph {
  int num_states = 0;
  // Per graph state: (unit index, state-within-unit 1..3).
  std::vector<std::pair<int, int>> binding;
  std::vector<std::string> unit_labels;
  std::vector<Arc> arcs;
  std::vector<std::vector<Arc>> out_arcs;
  std::vector<std::vector<Arc>> in_arcs;
  VectorXd log_start;
  VectorXd log_final;

  int num_units() const { return static_cast<int>(unit_labels.size()); }

  void add_arc(int src, int dst, double log_weight) {
    arcs.push_back({src, dst, log_weight});
  }
  void index_arcs() {
    out_arcs.assign(num_states, {});
    in_arcs.assign(num_states, {});
    for (const auto& a : arcs) {
      out_arcs[a.src].push_back(a);
      in_arcs[a.dst].push_back(a);
    }
  }
};

// Share of the unit-exit mass that ends the utterance (vs entering the next
// unit). Constant across final states, so decodes are unaffected except for
// a fixed per-switch continuation factor.
constexpr double kExitFinalShare = 0.5;

inline DecodeGraph build_unit_chain(double self_loop,
                                    const std::string& label = "u1") {
  if (!(self_loop > 0.0 && self_loop < 1.0))
    throw Error("build_unit_chain: self_loop must be in (0, 1)");
  DecodeGraph g;
  g.num_states = kStatesPerUnit;
  g.unit_labels = {label};
  g.log_start = VectorXd::Constant(3, kNegInf);
  g.log_final = VectorXd::Constant(3, kNegInf);
  g.log_start[0] = 0.0;
  const double lp = std::log(self_loop);
  const double ladv = std::log1p(-self_loop);
  for (int i = 0; i < 3; ++i) {
    g.binding.emplace_back(0, i + 1);
    g.add_arc(i, i, lp);
    if (i < 2) g.add_arc(i, i + 1, ladv);
  }
  g.log_final[2] = ladv;
  g.index_arcs();
  return g;
}

// Pseudo-phone loop over the truncated inventory: any unit can follow any
// unit, entry weighted by the (normalized) expected unit weights.
inline DecodeGraph build_phone_loop(const VectorXd& unit_log_weights,
                                    double self_loop,
                                    std::vector<std::string> labels = {}) {
  const int T = static_cast<int>(unit_log_weights.size());
  if (T < 1) throw Error("build_phone_loop: empty inventory");
  if (!(self_loop > 0.0 && self_loop < 1.0))
    throw Error("build_phone_loop: self_loop must be in (0, 1)");
  if (labels.empty())
    for (int u = 0; u < T; ++u) labels.push_back("u" + std::to_string(u + 1));
  if (static_cast<int>(labels.size()) != T)
    throw Error("build_phone_loop: label count mismatch");

  // Normalize so entry weights form a distribution; E[ln pi] exponentials
  // sum to slightly under 1.
  VectorXd logw = unit_log_weights.array() - log_sum_exp(unit_log_weights);

  DecodeGraph g;
  g.num_states = 3 * T;
  g.unit_labels = std::move(labels);
  g.log_start = VectorXd::Constant(g.num_states, kNegInf);
  g.log_final = VectorXd::Constant(g.num_states, kNegInf);
  const double lp = std::log(self_loop);
  const double ladv = std::log1p(-self_loop);
  const double lcont = ladv + std::log1p(-kExitFinalShare);
  for (int u = 0; u < T; ++u) {
    int base = 3 * u;
    for (int i = 0; i < 3; ++i) {
      g.binding.emplace_back(u, i + 1);
      g.add_arc(base + i, base + i, lp);
      if (i < 2) g.add_arc(base + i, base + i + 1, ladv);
    }
    g.log_start[base] = logw[u];
    g.log_final[base + 2] = ladv + std::log(kExitFinalShare);
    for (int v = 0; v < T; ++v) g.add_arc(base + 2, 3 * v, lcont + logw[v]);
  }
  g.index_arcs();
  return g;
}

// Left-to-right concatenation of the transcript's unit chains; no skips.
inline DecodeGraph build_forced_alignment(
    const std::vector<std::string>& transcript,
    const std::vector<std::string>& inventory_labels, double self_loop) {
  if (transcript.empty()) throw Error("build_forced_alignment: empty transcript");
  if (!(self_loop > 0.0 && self_loop < 1.0))
    throw Error("build_forced_alignment: self_loop must be in (0, 1)");
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(inventory_labels.size()); ++i)
    index[inventory_labels[i]] = i;

  DecodeGraph g;
  const int L = static_cast<int>(transcript.size());
  g.num_states = 3 * L;
  g.unit_labels = inventory_labels;
  g.log_start = VectorXd::Constant(g.num_states, kNegInf);
  g.log_final = VectorXd::Constant(g.num_states, kNegInf);
  g.log_start[0] = 0.0;
  const double lp = std::log(self_loop);
  const double ladv = std::log1p(-self_loop);
  for (int k = 0; k < L; ++k) {
    auto it = index.find(transcript[k]);
    if (it == index.end())
      throw Error("build_forced_alignment: unknown label '" + transcript[k] + "'");
    int base = 3 * k;
    for (int i = 0; i < 3; ++i) {
      g.binding.emplace_back(it->second, i + 1);
      g.add_arc(base + i, base + i, lp);
      if (i < 2) g.add_arc(base + i, base + i + 1, ladv);
    }
    if (k < L - 1)
      g.add_arc(base + 2, base + 3, ladv);
    else
      g.log_final[base + 2] = ladv;
  }
  g.index_arcs();
  return g;
}

// Per-frame log-likelihoods for every graph state, evaluated once per
// distinct (unit, state) binding.
inline MatrixXd compute_emissions(const DecodeGraph& g,
                                  const std::vector<UnitParams>& units,
                                  const MatrixXd& feats) {
  const auto T = feats.rows();
  MatrixXd em(T, g.num_states);
  std::unordered_map<long, int> cache;  // (unit, state) -> first column
  for (int m = 0; m < g.num_states; ++m) {
    auto [u, i] = g.binding[m];
    if (u < 0 || u >= static_cast<int>(units.size()))
      throw Error("compute_emissions: binding outside inventory");
    long key = static_cast<long>(u) * 4 + i;
    auto it = cache.find(key);
    if (it != cache.end()) {
      em.col(m) = em.col(it->second);
      continue;
    }
    const GmmState& st = units[u].states[i - 1];
    for (Eigen::Index t = 0; t < T; ++t)
      em(t, m) = state_loglik(feats.row(t).transpose(), st);
    cache[key] = m;
  }
  return em;
}

}  // namespace shmm

#endif  // SHMM_GRAPH_HPP
