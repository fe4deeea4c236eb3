// Log-domain forward-backward and Viterbi over decode graphs, plus the
// conversions from state paths/posteriors to unit transcripts and unit
// posteriorgrams.
#ifndef SHMM_INFERENCE_HPP
#define SHMM_INFERENCE_HPP

#include <string>
#include <vector>

#include "shmm/graph.hpp"

namespace shmm {

// Rows are per-frame distributions over graph states (or units).
using Posteriorgram = MatrixXd;

struct UnitToken {
  std::string label;
  int start_frame = 0;
  int end_frame = 0;  // exclusive
};

struct UnitTranscript {
  std::string utterance_id;
  std::vector<UnitToken> tokens;
};

struct ForwardBackwardResult {
  Posteriorgram posteriors;  // T x num_states
  double log_marginal = kNegInf;
  double log_marginal_backward = kNegInf;
};

// The acoustic scale multiplies emission log-likelihoods only; transitions
// are never scaled.
inline ForwardBackwardResult forward_backward(const DecodeGraph& g,
                                              const MatrixXd& emissions,
                                              double acoustic_scale = 1.0) {
  if (emissions.cols() != g.num_states)
    throw Error("forward_backward: emission/state count mismatch");
  if (!(acoustic_scale > 0)) throw Error("forward_backward: non-positive scale");
  const auto T = emissions.rows();
  const int M = g.num_states;
  if (T < 1) throw Error("forward_backward: no frames");

  MatrixXd scaled = acoustic_scale * emissions;
  MatrixXd alpha(T, M), beta(T, M);
  alpha.row(0) = (g.log_start + scaled.row(0).transpose()).transpose();
  for (Eigen::Index t = 1; t < T; ++t)
    for (int j = 0; j < M; ++j) {
      double acc = kNegInf;
      for (const auto& a : g.in_arcs[j])
        acc = log_sum_exp(acc, alpha(t - 1, a.src) + a.log_weight);
      alpha(t, j) = acc + scaled(t, j);
    }
  double logz = log_sum_exp(alpha.row(T - 1).transpose() + g.log_final);
  if (logz == kNegInf)
    throw NoPathError("forward_backward: graph admits no complete path");

  beta.row(T - 1) = g.log_final.transpose();
  for (Eigen::Index t = T - 2; t >= 0; --t)
    for (int i = 0; i < M; ++i) {
      double acc = kNegInf;
      for (const auto& a : g.out_arcs[i])
        acc = log_sum_exp(acc, a.log_weight + scaled(t + 1, a.dst) + beta(t + 1, a.dst));
      beta(t, i) = acc;
    }
  double logz_b = log_sum_exp(g.log_start + scaled.row(0).transpose() +
                              beta.row(0).transpose());

  ForwardBackwardResult res;
  res.log_marginal = logz;
  res.log_marginal_backward = logz_b;
  res.posteriors.resize(T, M);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int m = 0; m < M; ++m) {
      double v = alpha(t, m) + beta(t, m) - logz;
      res.posteriors(t, m) = (v == kNegInf) ? 0.0 : std::exp(v);
    }
    double rs = res.posteriors.row(t).sum();
    res.posteriors.row(t) /= rs;  // sweep accumulated rounding
  }
  return res;
}

struct ViterbiResult {
  std::vector<int> path;  // graph state per frame
  double score = kNegInf;
};

// Ties resolve toward the smallest state index at every decision, so decodes
// are deterministic.
inline ViterbiResult viterbi(const DecodeGraph& g, const MatrixXd& emissions,
                             double acoustic_scale = 1.0) {
  if (emissions.cols() != g.num_states)
    throw Error("viterbi: emission/state count mismatch");
  if (!(acoustic_scale > 0)) throw Error("viterbi: non-positive scale");
  const auto T = emissions.rows();
  const int M = g.num_states;
  if (T < 1) throw Error("viterbi: no frames");

  MatrixXd scaled = acoustic_scale * emissions;
  MatrixXd delta(T, M);
  Eigen::MatrixXi back(T, M);
  delta.row(0) = (g.log_start + scaled.row(0).transpose()).transpose();
  back.row(0).setConstant(-1);
  for (Eigen::Index t = 1; t < T; ++t)
    for (int j = 0; j < M; ++j) {
      double best = kNegInf;
      int arg = -1;
      for (const auto& a : g.in_arcs[j]) {
        double v = delta(t - 1, a.src) + a.log_weight;
        if (v > best || (v == best && arg > a.src)) {
          best = v;
          arg = a.src;
        }
      }
      delta(t, j) = best + scaled(t, j);
      back(t, j) = arg;
    }

  double best = kNegInf;
  int arg = -1;
  for (int j = 0; j < M; ++j) {
    double v = delta(T - 1, j) + g.log_final[j];
    if (v > best) {
      best = v;
      arg = j;
    }
  }
  if (arg < 0 || best == kNegInf)
    throw NoPathError("viterbi: graph admits no complete path");

  ViterbiResult res;
  res.score = best;
  res.path.resize(T);
  res.path[T - 1] = arg;
  for (Eigen::Index t = T - 1; t > 0; --t) res.path[t - 1] = back(t, res.path[t]);
  return res;
}

// A new token starts whenever the path enters a unit's first state from
// outside the unit (different unit, or loop-back within the same unit).
inline UnitTranscript path_to_units(const std::vector<int>& path,
                                    const DecodeGraph& g,
                                    const std::string& utterance_id = "") {
  UnitTranscript tr;
  tr.utterance_id = utterance_id;
  if (path.empty()) return tr;
  int cur_unit = -1, cur_state = 0, start = 0;
  for (int t = 0; t < static_cast<int>(path.size()); ++t) {
    if (path[t] < 0 || path[t] >= g.num_states)
      throw Error("path_to_units: state index out of range");
    auto [u, s] = g.binding[path[t]];
    bool boundary = (t == 0) || u != cur_unit || s < cur_state;
    if (boundary && t > 0) {
      tr.tokens.push_back({g.unit_labels[cur_unit], start, t});
      start = t;
    }
    cur_unit = u;
    cur_state = s;
  }
  tr.tokens.push_back({g.unit_labels[cur_unit], start, static_cast<int>(path.size())});
  return tr;
}

// Collapses state posteriors to per-unit posteriors by summing each unit's
// three states.
inline Posteriorgram unit_posteriorgram(const Posteriorgram& state_post,
                                        const DecodeGraph& g) {
  if (state_post.cols() != g.num_states)
    throw Error("unit_posteriorgram: binding mismatch");
  Posteriorgram out = MatrixXd::Zero(state_post.rows(), g.num_units());
  for (int m = 0; m < g.num_states; ++m)
    out.col(g.binding[m].first) += state_post.col(m);
  return out;
}

inline double mean_row_entropy(const Posteriorgram& p) {
  double h = 0.0;
  for (Eigen::Index t = 0; t < p.rows(); ++t)
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      if (p(t, c) > 0) h -= p(t, c) * std::log(p(t, c));
  return h / static_cast<double>(p.rows());
}

}  // namespace shmm

#endif  // SHMM_INFERENCE_HPP
