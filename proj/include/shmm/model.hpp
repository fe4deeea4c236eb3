// Probabilistic building blocks: diagonal Gaussians, GMM states, 3-state
// left-to-right units and the supervector packing in link coordinates.
#ifndef SHMM_MODEL_HPP
#define SHMM_MODEL_HPP

#include <array>
#include <numbers>
#include <vector>

#include "shmm/common.hpp"

namespace shmm {

constexpr int kStatesPerUnit = 3;
constexpr double kVarianceFloor = 1e-6;
constexpr double kLogitClamp = 30.0;

struct DiagGaussian {
  VectorXd mean;
  VectorXd var;

  DiagGaussian() = default;
  DiagGaussian(VectorXd m, VectorXd v) : mean(std::move(m)), var(std::move(v)) {
    if (mean.size() != var.size()) throw Error("DiagGaussian: dim mismatch");
    if ((var.array() <= 0).any()) throw Error("DiagGaussian: non-positive variance");
  }
  Eigen::Index dim() const { return mean.size(); }
};

struct GmmState {
  VectorXd weights;
  std::vector<DiagGaussian> components;

  GmmState() = default;
  GmmState(VectorXd w, std::vector<DiagGaussian> comps)
      : weights(std::move(w)), components(std::move(comps)) {
    if (weights.size() != static_cast<Eigen::Index>(components.size()))
      throw Error("GmmState: weight/component count mismatch");
    if ((weights.array() <= 0).any()) throw Error("GmmState: non-positive weight");
    if (std::abs(weights.sum() - 1.0) > 1e-10)
      throw Error("GmmState: weights do not sum to 1");
    for (const auto& c : components)
      if (c.dim() != components.front().dim())
        throw Error("GmmState: inhomogeneous component dims");
  }
  int num_components() const { return static_cast<int>(components.size()); }
  Eigen::Index dim() const { return components.front().dim(); }
};

struct UnitParams {
  std::array<GmmState, kStatesPerUnit> states;

  int num_components() const { return states[0].num_components(); }
  Eigen::Index dim() const { return states[0].dim(); }
};

struct SuperVector {
  VectorXd values;
};

struct UnitInventory {
  std::vector<UnitParams> units;
  std::vector<std::string> labels;
};

// Dimension of the canonical supervector: per state K-1 weight logits,
// K*D means and K*D log-variances.
inline Eigen::Index supervector_dim(int K, int D) {
  return static_cast<Eigen::Index>(kStatesPerUnit) * ((K - 1) + 2 * K * D);
}

inline double gaussian_loglik(const VectorXd& x, const DiagGaussian& g) {
  if (x.size() != g.dim()) throw Error("gaussian_loglik: dim mismatch");
  const double d = static_cast<double>(x.size());
  double quad = ((x - g.mean).array().square() / g.var.array()).sum();
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) +
                 g.var.array().log().sum() + quad);
}

inline double state_loglik(const VectorXd& x, const GmmState& s) {
  VectorXd terms(s.num_components());
  for (int j = 0; j < s.num_components(); ++j)
    terms[j] = std::log(s.weights[j]) + gaussian_loglik(x, s.components[j]);
  return log_sum_exp(terms);
}

// Canonical (link-space) coordinates of one unit: unconstrained weight
// logits relative to the last component, raw means, log variances.
inline SuperVector pack_supervector(const UnitParams& u) {
  const int K = u.num_components();
  const int D = static_cast<int>(u.dim());
  SuperVector sv;
  sv.values.resize(supervector_dim(K, D));
  Eigen::Index pos = 0;
  for (const auto& s : u.states) {
    for (int j = 0; j < K - 1; ++j)
      sv.values[pos++] = std::log(s.weights[j]) - std::log(s.weights[K - 1]);
    for (int j = 0; j < K; ++j) {
      sv.values.segment(pos, D) = s.components[j].mean;
      pos += D;
    }
    for (int j = 0; j < K; ++j) {
      sv.values.segment(pos, D) = s.components[j].var.array().log();
      pos += D;
    }
  }
  return sv;
}

inline UnitParams unpack_supervector(const SuperVector& sv, int K, int D) {
  if (sv.values.size() != supervector_dim(K, D))
    throw Error("unpack_supervector: dimension formula violated");
  UnitParams u;
  Eigen::Index pos = 0;
  for (auto& s : u.states) {
    VectorXd logits = sv.values.segment(pos, K - 1)
                          .array()
                          .min(kLogitClamp)
                          .max(-kLogitClamp);
    pos += K - 1;
    // Softmax with the last component's logit pinned at 0.
    double denom = 1.0 + logits.array().exp().sum();
    VectorXd w(K);
    for (int j = 0; j < K - 1; ++j) w[j] = std::exp(logits[j]) / denom;
    w[K - 1] = 1.0 / denom;
    std::vector<DiagGaussian> comps;
    comps.reserve(K);
    Eigen::Index mean_pos = pos;
    Eigen::Index var_pos = pos + static_cast<Eigen::Index>(K) * D;
    for (int j = 0; j < K; ++j) {
      VectorXd mean = sv.values.segment(mean_pos + j * D, D);
      VectorXd var = sv.values.segment(var_pos + j * D, D)
                         .array()
                         .min(kLogitClamp)
                         .exp()
                         .max(kVarianceFloor);
      comps.emplace_back(std::move(mean), std::move(var));
    }
    pos = var_pos + static_cast<Eigen::Index>(K) * D;
    s = GmmState(std::move(w), std::move(comps));
  }
  return u;
}

}  // namespace shmm

#endif  // SHMM_MODEL_HPP
