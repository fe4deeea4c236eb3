// Truncated stick-breaking Dirichlet process: expected log unit weights and
// the Beta posterior update from expected unit counts.
#ifndef SHMM_DP_HPP
#define SHMM_DP_HPP

#include <boost/math/special_functions/digamma.hpp>

#include "shmm/common.hpp"

namespace shmm {

struct StickPosterior {
  VectorXd gamma1;
  VectorXd gamma2;
  double concentration = 50.0;

  StickPosterior() = default;
  StickPosterior(VectorXd g1, VectorXd g2, double conc)
      : gamma1(std::move(g1)), gamma2(std::move(g2)), concentration(conc) {
    if (gamma1.size() != gamma2.size()) throw Error("StickPosterior: size mismatch");
    if (gamma1.size() < 1) throw Error("StickPosterior: empty truncation");
    if ((gamma1.array() <= 0).any() || (gamma2.array() <= 0).any() || conc <= 0)
      throw Error("StickPosterior: non-positive parameter");
  }

  static StickPosterior prior(int truncation, double concentration) {
    return StickPosterior(VectorXd::Ones(truncation),
                          VectorXd::Constant(truncation, concentration),
                          concentration);
  }
  int truncation() const { return static_cast<int>(gamma1.size()); }
};

// E[ln pi_t] under independent Beta(gamma1_t, gamma2_t) sticks. The last
// stick takes the whole remainder (v_T = 1), so the weights form a proper
// distribution over exactly T units.
inline VectorXd expected_log_weights(const StickPosterior& sp) {
  using boost::math::digamma;
  const int T = sp.truncation();
  VectorXd out(T);
  double acc = 0.0;  // sum of E[ln(1 - v_s)] for s < t
  for (int t = 0; t < T; ++t) {
    double psi_sum = digamma(sp.gamma1[t] + sp.gamma2[t]);
    double e_ln_v = (t == T - 1) ? 0.0 : digamma(sp.gamma1[t]) - psi_sum;
    out[t] = e_ln_v + acc;
    acc += digamma(sp.gamma2[t]) - psi_sum;
  }
  return out;
}

inline StickPosterior update_sticks(const VectorXd& expected_counts,
                                    double concentration) {
  if ((expected_counts.array() < 0).any())
    throw Error("update_sticks: negative count");
  if (concentration <= 0) throw Error("update_sticks: non-positive concentration");
  const int T = static_cast<int>(expected_counts.size());
  VectorXd g1(T), g2(T);
  double tail = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    g1[t] = 1.0 + expected_counts[t];
    g2[t] = concentration + tail;
    tail += expected_counts[t];
  }
  return StickPosterior(std::move(g1), std::move(g2), concentration);
}

// KL between the stick posterior and its Beta(1, alpha) prior, summed over
// sticks. Used by the ELBO's DP term.
inline double stick_kl_to_prior(const StickPosterior& sp) {
  using boost::math::digamma;
  auto lbeta = [](double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  };
  const double alpha = sp.concentration;
  double kl = 0.0;
  for (int t = 0; t < sp.truncation(); ++t) {
    double a = sp.gamma1[t], b = sp.gamma2[t];
    double psi_ab = digamma(a + b);
    kl += lbeta(1.0, alpha) - lbeta(a, b) +
          (a - 1.0) * (digamma(a) - psi_ab) +
          (b - alpha) * (digamma(b) - psi_ab);
  }
  return kl;
}

}  // namespace shmm

#endif  // SHMM_DP_HPP
