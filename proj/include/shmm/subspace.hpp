// Variational subspace over unit supervectors: Gaussian posteriors on W, b
// and the per-unit embeddings h, the link function f(W h + b), KL terms and
// analytic gradients of the reparametrized objective.
#ifndef SHMM_SUBSPACE_HPP
#define SHMM_SUBSPACE_HPP

#include <string>
#include <vector>

#include "shmm/model.hpp"

namespace shmm {

// Row assignment of the supervector/link output. Per state: K-1 weight
// logits, then K mean blocks of D rows, then K log-variance blocks.
struct Layout {
  int K = 0;
  int D = 0;

  Layout() = default;
  Layout(int k, int d) : K(k), D(d) {
    if (k < 1 || d < 1) throw Error("Layout: K and D must be positive");
  }
  Eigen::Index S() const { return supervector_dim(K, D); }
  Eigen::Index state_base(int i) const {
    return static_cast<Eigen::Index>(i) * ((K - 1) + 2 * K * D);
  }
  Eigen::Index logit_offset(int i) const { return state_base(i); }
  Eigen::Index mean_offset(int i, int j) const {
    return state_base(i) + (K - 1) + static_cast<Eigen::Index>(j) * D;
  }
  Eigen::Index logvar_offset(int i, int j) const {
    return state_base(i) + (K - 1) + static_cast<Eigen::Index>(K) * D +
           static_cast<Eigen::Index>(j) * D;
  }
};

struct GaussianPosterior {
  VectorXd mean;
  VectorXd var;

  GaussianPosterior() = default;
  GaussianPosterior(VectorXd m, VectorXd v) : mean(std::move(m)), var(std::move(v)) {
    if (mean.size() != var.size()) throw Error("GaussianPosterior: dim mismatch");
    if ((var.array() <= 0).any()) throw Error("GaussianPosterior: non-positive variance");
  }
  Eigen::Index dim() const { return mean.size(); }
};

// q(W) is mean-field over matrix entries; entry (r, c) lives at index r*P+c.
struct SubspaceModel {
  GaussianPosterior q_W;
  GaussianPosterior q_b;
  Layout layout;
  int P = 0;

  Eigen::Index S() const { return layout.S(); }
  void validate() const {
    if (P < 1) throw Error("SubspaceModel: P must be >= 1");
    if (q_W.dim() != S() * P || q_b.dim() != S())
      throw Error("SubspaceModel: posterior dims inconsistent with layout");
  }
};

struct Embedding {
  GaussianPosterior q_h;
  std::string label;
};

inline VectorXd sample_reparam(const GaussianPosterior& q, const VectorXd& noise) {
  if (noise.size() != q.dim()) throw Error("sample_reparam: noise dim mismatch");
  return q.mean.array() + q.var.array().sqrt() * noise.array();
}

inline double kl_to_standard_normal(const GaussianPosterior& q) {
  return 0.5 * (q.var.array() + q.mean.array().square() - 1.0 -
                q.var.array().log())
                   .sum();
}

inline UnitParams link_forward(const MatrixXd& W, const VectorXd& b,
                               const VectorXd& h, const Layout& layout) {
  if (W.rows() != layout.S() || W.cols() != h.size() || b.size() != layout.S())
    throw Error("link_forward: shape mismatch");
  SuperVector sv{W * h + b};
  return unpack_supervector(sv, layout.K, layout.D);
}

// Fixed standard-normal draws shared by an objective evaluation and its
// gradient. Zero noise realizes posterior means (plug-in mode).
struct NoiseBundle {
  MatrixXd eps_W;  // S x P
  VectorXd eps_b;  // S
  VectorXd eps_h;  // P

  static NoiseBundle zero(Eigen::Index S, int P) {
    return {MatrixXd::Zero(S, P), VectorXd::Zero(S), VectorXd::Zero(P)};
  }
  static NoiseBundle draw(std::mt19937_64& rng, Eigen::Index S, int P,
                          bool sample_wb, bool sample_h) {
    NoiseBundle n = zero(S, P);
    if (sample_wb) {
      for (Eigen::Index r = 0; r < S; ++r)
        n.eps_W.row(r) = standard_normal(rng, P).transpose();
      n.eps_b = standard_normal(rng, S);
    }
    if (sample_h) n.eps_h = standard_normal(rng, P);
    return n;
  }
};

inline MatrixXd realize_W(const SubspaceModel& m, const MatrixXd& eps_W) {
  MatrixXd W(m.S(), m.P);
  for (Eigen::Index r = 0; r < m.S(); ++r)
    for (int c = 0; c < m.P; ++c) {
      Eigen::Index idx = r * m.P + c;
      W(r, c) = m.q_W.mean[idx] + std::sqrt(m.q_W.var[idx]) * eps_W(r, c);
    }
  return W;
}

inline VectorXd realize_b(const SubspaceModel& m, const VectorXd& eps_b) {
  return sample_reparam(m.q_b, eps_b);
}

namespace detail {

// Gradient of sum_{t,i} w(t,i) * state_loglik(x_t, state i) with respect to
// the supervector s, evaluated at the realized s. Clamped logits and floored
// variances get zero gradient, matching the piecewise link exactly.
inline VectorXd supervector_grad(const MatrixXd& feats,
                                 const MatrixXd& state_weights,
                                 const VectorXd& s, const Layout& layout) {
  const int K = layout.K;
  const int D = layout.D;
  const auto T = feats.rows();
  if (state_weights.rows() != T || state_weights.cols() != kStatesPerUnit)
    throw Error("supervector_grad: weight shape mismatch");
  UnitParams u = unpack_supervector(SuperVector{s}, K, D);
  VectorXd g = VectorXd::Zero(layout.S());
  VectorXd lnw(K), lp(K), resp(K);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int i = 0; i < kStatesPerUnit; ++i) {
      double w = state_weights(t, i);
      if (w == 0.0) continue;
      const GmmState& st = u.states[i];
      for (int j = 0; j < K; ++j)
        lp[j] = std::log(st.weights[j]) +
                gaussian_loglik(feats.row(t).transpose(), st.components[j]);
      double ll = log_sum_exp(lp);
      for (int j = 0; j < K; ++j) resp[j] = std::exp(lp[j] - ll);
      for (int j = 0; j < K - 1; ++j) {
        double raw = s[layout.logit_offset(i) + j];
        if (std::abs(raw) < kLogitClamp)
          g[layout.logit_offset(i) + j] += w * (resp[j] - st.weights[j]);
      }
      for (int j = 0; j < K; ++j) {
        const auto& c = st.components[j];
        VectorXd diff = feats.row(t).transpose() - c.mean;
        g.segment(layout.mean_offset(i, j), D) +=
            w * resp[j] * (diff.array() / c.var.array()).matrix();
        for (int d = 0; d < D; ++d) {
          double lv = s[layout.logvar_offset(i, j) + d];
          if (std::abs(lv) < kLogitClamp && std::exp(lv) > kVarianceFloor)
            g[layout.logvar_offset(i, j) + d] +=
                w * resp[j] * 0.5 * (diff[d] * diff[d] / c.var[d] - 1.0);
        }
      }
    }
  }
  return g;
}

}  // namespace detail

// Reparametrized Monte-Carlo estimate of the expected data log-likelihood of
// one unit. state_weights is T x 3 with each entry in [0, 1], the unit's
// share of the per-frame state posterior.
inline double expected_unit_loglik(const MatrixXd& feats,
                                   const MatrixXd& state_weights,
                                   const SubspaceModel& subspace,
                                   const Embedding& emb,
                                   const NoiseBundle& noise) {
  subspace.validate();
  if (state_weights.rows() != feats.rows() ||
      state_weights.cols() != kStatesPerUnit)
    throw Error("expected_unit_loglik: weight shape mismatch");
  MatrixXd W = realize_W(subspace, noise.eps_W);
  VectorXd b = realize_b(subspace, noise.eps_b);
  VectorXd h = sample_reparam(emb.q_h, noise.eps_h);
  UnitParams u = link_forward(W, b, h, subspace.layout);
  KahanSum total;
  for (Eigen::Index t = 0; t < feats.rows(); ++t)
    for (int i = 0; i < kStatesPerUnit; ++i) {
      double w = state_weights(t, i);
      if (w != 0.0)
        total.add(w * state_loglik(feats.row(t).transpose(), u.states[i]));
    }
  return total.value();
}

struct EmbeddingGrad {
  VectorXd d_mean;
  VectorXd d_var;
};

// Gradient of expected_unit_loglik - KL(q_h || N(0, I)) with respect to the
// posterior mean and variance of q_h, at the given fixed noise.
inline EmbeddingGrad grad_embedding(const MatrixXd& feats,
                                    const MatrixXd& state_weights,
                                    const SubspaceModel& subspace,
                                    const Embedding& emb,
                                    const NoiseBundle& noise) {
  subspace.validate();
  MatrixXd W = realize_W(subspace, noise.eps_W);
  VectorXd b = realize_b(subspace, noise.eps_b);
  VectorXd h = sample_reparam(emb.q_h, noise.eps_h);
  VectorXd s = W * h + b;
  VectorXd g_s = detail::supervector_grad(feats, state_weights, s, subspace.layout);
  VectorXd g_h = W.transpose() * g_s;
  EmbeddingGrad g;
  g.d_mean = g_h - emb.q_h.mean;
  g.d_var = (g_h.array() * noise.eps_h.array() * 0.5 /
             emb.q_h.var.array().sqrt()) +
            0.5 * (1.0 / emb.q_h.var.array() - 1.0);
  return g;
}

struct UnitStats {
  const MatrixXd* feats = nullptr;          // T x D
  const MatrixXd* state_weights = nullptr;  // T x 3
  const Embedding* emb = nullptr;
  VectorXd eps_h;  // P
};

struct SubspaceGrad {
  VectorXd dW_mean, dW_var;  // S*P, entry (r, c) at r*P+c
  VectorXd db_mean, db_var;  // S
};

// Gradient of sum_units expected_unit_loglik - KL(q_W) - KL(q_b) with
// respect to the subspace posteriors, at fixed noise.
inline SubspaceGrad grad_subspace(const std::vector<UnitStats>& batch,
                                  const SubspaceModel& subspace,
                                  const MatrixXd& eps_W,
                                  const VectorXd& eps_b) {
  subspace.validate();
  const Eigen::Index S = subspace.S();
  const int P = subspace.P;
  MatrixXd W(S, P);
  for (Eigen::Index r = 0; r < S; ++r)
    for (int c = 0; c < P; ++c) {
      Eigen::Index idx = r * P + c;
      W(r, c) = subspace.q_W.mean[idx] + std::sqrt(subspace.q_W.var[idx]) * eps_W(r, c);
    }
  VectorXd b = sample_reparam(subspace.q_b, eps_b);

  MatrixXd GW = MatrixXd::Zero(S, P);
  VectorXd gb = VectorXd::Zero(S);
  for (const auto& entry : batch) {
    VectorXd h = sample_reparam(entry.emb->q_h, entry.eps_h);
    VectorXd s = W * h + b;
    VectorXd g_s =
        detail::supervector_grad(*entry.feats, *entry.state_weights, s, subspace.layout);
    GW.noalias() += g_s * h.transpose();
    gb += g_s;
  }

  SubspaceGrad g;
  g.dW_mean.resize(S * P);
  g.dW_var.resize(S * P);
  for (Eigen::Index r = 0; r < S; ++r)
    for (int c = 0; c < P; ++c) {
      Eigen::Index idx = r * P + c;
      g.dW_mean[idx] = GW(r, c) - subspace.q_W.mean[idx];
      g.dW_var[idx] = GW(r, c) * eps_W(r, c) * 0.5 / std::sqrt(subspace.q_W.var[idx]) +
                      0.5 * (1.0 / subspace.q_W.var[idx] - 1.0);
    }
  g.db_mean = gb - subspace.q_b.mean;
  g.db_var = (gb.array() * eps_b.array() * 0.5 / subspace.q_b.var.array().sqrt()) +
             0.5 * (1.0 / subspace.q_b.var.array() - 1.0);
  return g;
}

}  // namespace shmm

#endif  // SHMM_SUBSPACE_HPP
