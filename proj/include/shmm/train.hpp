// Two-phase variational training: subspace estimation on labeled source
// corpora (forced alignment) and acoustic unit discovery on the unlabeled
// target with the subspace held fixed. Also owns the optimizer, the ELBO
// assembly and model serialization.
#ifndef SHMM_TRAIN_HPP
#define SHMM_TRAIN_HPP

#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "shmm/dp.hpp"
#include "shmm/feats.hpp"
#include "shmm/inference.hpp"
#include "shmm/subspace.hpp"

namespace shmm {

struct TrainConfig {
  int subspace_dim = 100;
  int gaussians_per_state = 4;
  int truncation = 100;
  double concentration = 50.0;
  int epochs = 50;
  double step_size = 5e-3;
  int mc_samples = 1;
  uint64_t seed = 0;
  double self_loop = 0.5;
  double acoustic_scale = 1.0;

  void validate() const {
    if (subspace_dim < 1 || gaussians_per_state < 1 || truncation < 1 ||
        concentration <= 0 || epochs < 0 || step_size <= 0 || mc_samples < 0 ||
        acoustic_scale <= 0 || !(self_loop > 0 && self_loop < 1))
      throw Error("TrainConfig: invalid parameter");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"subspace_dim", c.subspace_dim},
       {"gaussians_per_state", c.gaussians_per_state},
       {"truncation", c.truncation},
       {"concentration", c.concentration},
       {"epochs", c.epochs},
       {"step_size", c.step_size},
       {"mc_samples", c.mc_samples},
       {"seed", c.seed},
       {"self_loop", c.self_loop},
       {"acoustic_scale", c.acoustic_scale}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.subspace_dim = j.value("subspace_dim", d.subspace_dim);
  c.gaussians_per_state = j.value("gaussians_per_state", d.gaussians_per_state);
  c.truncation = j.value("truncation", d.truncation);
  c.concentration = j.value("concentration", d.concentration);
  c.epochs = j.value("epochs", d.epochs);
  c.step_size = j.value("step_size", d.step_size);
  c.mc_samples = j.value("mc_samples", d.mc_samples);
  c.seed = j.value("seed", d.seed);
  c.self_loop = j.value("self_loop", d.self_loop);
  c.acoustic_scale = j.value("acoustic_scale", d.acoustic_scale);
}

struct Utterance {
  std::string id;
  FeatureMatrix feats;
  std::vector<std::string> transcript;  // empty for unlabeled data
};

struct Corpus {
  std::string language;
  std::vector<Utterance> utterances;
};

struct ModelContainer {
  SubspaceModel subspace;
  std::vector<Embedding> embeddings;
  StickPosterior sticks;
  TrainConfig cfg;
  std::vector<double> elbo_log;

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(embeddings.size());
    for (const auto& e : embeddings) out.push_back(e.label);
    return out;
  }
  // Unit parameters realized at the posterior means.
  std::vector<UnitParams> expected_units() const {
    MatrixXd W = realize_W(subspace, MatrixXd::Zero(subspace.S(), subspace.P));
    VectorXd b = subspace.q_b.mean;
    std::vector<UnitParams> units;
    units.reserve(embeddings.size());
    for (const auto& e : embeddings)
      units.push_back(link_forward(W, b, e.q_h.mean, subspace.layout));
    return units;
  }
};

struct ElboReport {
  double loglik = 0.0;    // sum over utterances of the data term
  double dp_prior = 0.0;  // -KL of the stick posterior (<= 0)
  double kl_h = 0.0;
  double kl_W = 0.0;
  double kl_b = 0.0;
  double total() const { return loglik + dp_prior - kl_h - kl_W - kl_b; }
};

// First/second moment adaptive ascent (decay 0.9 / 0.999).
struct AdamState {
  VectorXd m, v;
  long t = 0;
};

inline void adaptive_step(VectorXd& params, const VectorXd& grad,
                          AdamState& state, double step_size) {
  if (params.size() != grad.size()) throw Error("adaptive_step: shape mismatch");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (state.t == 0) {
    state.m = VectorXd::Zero(params.size());
    state.v = VectorXd::Zero(params.size());
  }
  if (state.m.size() != params.size()) throw Error("adaptive_step: state mismatch");
  ++state.t;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v.array() + (1.0 - b2) * grad.array().square();
  double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  params.array() +=
      step_size * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

namespace detail {

constexpr int kMStepsPerEpoch = 5;
constexpr double kPosteriorWeightFloor = 1e-8;
constexpr double kMinLogVar = -20.0;
constexpr double kMaxLogVar = 5.0;

struct PosteriorOpt {
  AdamState mean_state;
  AdamState logvar_state;
};

// Gradients arrive with respect to (mean, var); the variance moves in
// log-space to stay positive.
inline void apply_posterior_step(GaussianPosterior& q, const VectorXd& d_mean,
                                 const VectorXd& d_var, PosteriorOpt& opt,
                                 double step_size) {
  adaptive_step(q.mean, d_mean, opt.mean_state, step_size);
  VectorXd logvar = q.var.array().log();
  VectorXd d_logvar = d_var.array() * q.var.array();
  adaptive_step(logvar, d_logvar, opt.logvar_state, step_size);
  q.var = logvar.array().min(kMaxLogVar).max(kMinLogVar).exp();
}

inline GaussianPosterior init_posterior(std::mt19937_64& rng, Eigen::Index n,
                                        double mean_sd, double var0) {
  return GaussianPosterior(mean_sd * standard_normal(rng, n),
                           VectorXd::Constant(n, var0));
}

// Frames of one utterance that matter for one unit, compacted to the rows
// with non-negligible posterior mass.
struct UnitFrameStats {
  MatrixXd feats;          // n x D
  MatrixXd state_weights;  // n x 3
};

// Collapse per-graph-state posteriors into per-unit (frame, state) weights.
inline std::vector<UnitFrameStats> collect_unit_stats(
    const DecodeGraph& g, const Posteriorgram& post, const MatrixXd& feats,
    int num_units) {
  const auto T = feats.rows();
  MatrixXd acc = MatrixXd::Zero(T, static_cast<Eigen::Index>(num_units) * 3);
  for (int m = 0; m < g.num_states; ++m) {
    auto [u, s] = g.binding[m];
    acc.col(static_cast<Eigen::Index>(u) * 3 + (s - 1)) += post.col(m);
  }
  std::vector<UnitFrameStats> stats(num_units);
  for (int u = 0; u < num_units; ++u) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index t = 0; t < T; ++t)
      if (acc.row(t).segment(static_cast<Eigen::Index>(u) * 3, 3).sum() >
          kPosteriorWeightFloor)
        rows.push_back(t);
    auto& st = stats[u];
    st.feats.resize(rows.size(), feats.cols());
    st.state_weights.resize(rows.size(), 3);
    for (size_t k = 0; k < rows.size(); ++k) {
      st.feats.row(k) = feats.row(rows[k]);
      st.state_weights.row(k) =
          acc.row(rows[k]).segment(static_cast<Eigen::Index>(u) * 3, 3);
    }
  }
  return stats;
}

inline void append_stats(UnitFrameStats& dst, const UnitFrameStats& src) {
  if (src.feats.rows() == 0) return;
  Eigen::Index n = dst.feats.rows();
  dst.feats.conservativeResize(n + src.feats.rows(), src.feats.cols());
  dst.state_weights.conservativeResize(n + src.feats.rows(), 3);
  dst.feats.bottomRows(src.feats.rows()) = src.feats;
  dst.state_weights.bottomRows(src.feats.rows()) = src.state_weights;
}

}  // namespace detail

// Phase 1: learn q(W), q(b) and per-phone embeddings from transcribed source
// corpora. Phone labels are qualified as "<language>/<phone>" so languages
// share the subspace but keep separate embedding sets.
inline ModelContainer train_subspace(const std::vector<Corpus>& corpora,
                                     const TrainConfig& cfg) {
  cfg.validate();
  if (corpora.empty()) throw Error("train_subspace: empty corpus list");
  Eigen::Index D = -1;
  std::vector<std::string> labels;
  std::map<std::string, int> label_index;
  for (const auto& corpus : corpora) {
    if (corpus.utterances.empty())
      throw Error("train_subspace: corpus '" + corpus.language + "' is empty");
    for (const auto& utt : corpus.utterances) {
      if (utt.transcript.empty())
        throw Error("train_subspace: utterance '" + utt.id + "' has no transcript");
      if (D < 0) D = utt.feats.cols();
      if (utt.feats.cols() != D)
        throw Error("train_subspace: inconsistent feature dims");
      for (const auto& phone : utt.transcript) {
        std::string q = corpus.language + "/" + phone;
        if (label_index.emplace(q, static_cast<int>(labels.size())).second)
          labels.push_back(q);
      }
    }
  }

  const int K = cfg.gaussians_per_state;
  const int P = cfg.subspace_dim;
  Layout layout(K, static_cast<int>(D));
  const Eigen::Index S = layout.S();

  std::mt19937_64 rng(cfg.seed);
  ModelContainer model;
  model.cfg = cfg;
  model.subspace.layout = layout;
  model.subspace.P = P;
  model.subspace.q_W = detail::init_posterior(rng, S * P, 0.1, 1e-2);
  model.subspace.q_b =
      GaussianPosterior(VectorXd::Zero(S), VectorXd::Constant(S, 1e-2));
  for (const auto& l : labels)
    model.embeddings.push_back({detail::init_posterior(rng, P, 0.1, 1e-2), l});
  model.sticks = StickPosterior::prior(cfg.truncation, cfg.concentration);

  const int U = static_cast<int>(labels.size());
  detail::PosteriorOpt opt_W, opt_b;
  std::vector<detail::PosteriorOpt> opt_h(U);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // E-step: forced-alignment posteriors as soft frame-to-state weights.
    std::vector<detail::UnitFrameStats> stats(U);
    for (auto& s : stats) {
      s.feats.resize(0, D);
      s.state_weights.resize(0, 3);
    }
    KahanSum loglik;
    auto units = model.expected_units();
    for (const auto& corpus : corpora)
      for (const auto& utt : corpus.utterances) {
        std::vector<std::string> qualified;
        qualified.reserve(utt.transcript.size());
        for (const auto& phone : utt.transcript)
          qualified.push_back(corpus.language + "/" + phone);
        DecodeGraph g = build_forced_alignment(qualified, labels, cfg.self_loop);
        MatrixXd feats = utt.feats.as_double();
        MatrixXd em = compute_emissions(g, units, feats);
        auto fb = forward_backward(g, em, 1.0);
        loglik.add(fb.log_marginal);
        auto per_unit = detail::collect_unit_stats(g, fb.posteriors, feats, U);
        for (int u = 0; u < U; ++u) detail::append_stats(stats[u], per_unit[u]);
      }

    // M-step: adaptive ascent on q(W), q(b) and every embedding.
    for (int step = 0; step < detail::kMStepsPerEpoch; ++step) {
      bool sample = cfg.mc_samples > 0;
      MatrixXd eps_W = MatrixXd::Zero(S, P);
      VectorXd eps_b = VectorXd::Zero(S);
      if (sample) {
        for (Eigen::Index r = 0; r < S; ++r)
          eps_W.row(r) = standard_normal(rng, P).transpose();
        eps_b = standard_normal(rng, S);
      }
      std::vector<VectorXd> eps_h(U, VectorXd::Zero(P));
      if (sample)
        for (int u = 0; u < U; ++u) eps_h[u] = standard_normal(rng, P);

      std::vector<UnitStats> batch;
      for (int u = 0; u < U; ++u) {
        if (stats[u].feats.rows() == 0) continue;
        batch.push_back({&stats[u].feats, &stats[u].state_weights,
                         &model.embeddings[u], eps_h[u]});
      }
      SubspaceGrad sg = grad_subspace(batch, model.subspace, eps_W, eps_b);
      detail::apply_posterior_step(model.subspace.q_W, sg.dW_mean, sg.dW_var,
                                   opt_W, cfg.step_size);
      detail::apply_posterior_step(model.subspace.q_b, sg.db_mean, sg.db_var,
                                   opt_b, cfg.step_size);
      for (int u = 0; u < U; ++u) {
        NoiseBundle nb{eps_W, eps_b, eps_h[u]};
        EmbeddingGrad eg =
            grad_embedding(stats[u].feats, stats[u].state_weights,
                           model.subspace, model.embeddings[u], nb);
        detail::apply_posterior_step(model.embeddings[u].q_h, eg.d_mean,
                                     eg.d_var, opt_h[u], cfg.step_size);
      }
    }

    double kl_h = 0.0;
    for (const auto& e : model.embeddings) kl_h += kl_to_standard_normal(e.q_h);
    model.elbo_log.push_back(loglik.value() - kl_h -
                             kl_to_standard_normal(model.subspace.q_W) -
                             kl_to_standard_normal(model.subspace.q_b));
    if (!std::isfinite(model.elbo_log.back()))
      throw Error("train_subspace: non-finite ELBO at epoch " +
                  std::to_string(epoch));
  }
  return model;
}

// Phase 2: acoustic unit discovery on the unlabeled target. The subspace
// posteriors are copied from the base model and never touched.
inline ModelContainer discover_units(const Corpus& target,
                                     const ModelContainer& base,
                                     const TrainConfig& cfg) {
  cfg.validate();
  if (base.subspace.P < 1) throw Error("discover_units: base has no subspace");
  if (target.utterances.empty()) throw Error("discover_units: empty target corpus");
  const Eigen::Index D = base.subspace.layout.D;
  for (const auto& utt : target.utterances)
    if (utt.feats.cols() != D)
      throw Error("discover_units: feature dim mismatch for '" + utt.id + "'");

  const int T = cfg.truncation;
  const int P = base.subspace.P;
  std::mt19937_64 rng(cfg.seed);
  ModelContainer model;
  model.cfg = cfg;
  model.subspace = base.subspace;
  model.sticks = StickPosterior::prior(T, cfg.concentration);
  for (int u = 0; u < T; ++u)
    model.embeddings.push_back({detail::init_posterior(rng, P, 0.1, 1e-2),
                                "u" + std::to_string(u + 1)});

  const double expected_duration = 3.0 / (1.0 - cfg.self_loop);
  std::vector<detail::PosteriorOpt> opt_h(T);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    VectorXd logw = expected_log_weights(model.sticks);
    DecodeGraph g = build_phone_loop(logw, cfg.self_loop, model.labels());
    auto units = model.expected_units();

    std::vector<detail::UnitFrameStats> stats(T);
    for (auto& s : stats) {
      s.feats.resize(0, D);
      s.state_weights.resize(0, 3);
    }
    VectorXd counts = VectorXd::Zero(T);
    KahanSum loglik;
    for (const auto& utt : target.utterances) {
      MatrixXd feats = utt.feats.as_double();
      MatrixXd em = compute_emissions(g, units, feats);
      auto fb = forward_backward(g, em, 1.0);
      loglik.add(fb.log_marginal);
      Posteriorgram up = unit_posteriorgram(fb.posteriors, g);
      counts += up.colwise().sum().transpose() / expected_duration;
      auto per_unit = detail::collect_unit_stats(g, fb.posteriors, feats, T);
      for (int u = 0; u < T; ++u) detail::append_stats(stats[u], per_unit[u]);
    }
    model.sticks = update_sticks(counts, cfg.concentration);

    // Embedding updates only; q(W), q(b) are plugged in at their means.
    for (int step = 0; step < detail::kMStepsPerEpoch; ++step) {
      for (int u = 0; u < T; ++u) {
        VectorXd eps_h = cfg.mc_samples > 0 ? standard_normal(rng, P)
                                            : VectorXd::Zero(P);
        NoiseBundle nb{MatrixXd::Zero(model.subspace.S(), P),
                       VectorXd::Zero(model.subspace.S()), eps_h};
        EmbeddingGrad eg =
            grad_embedding(stats[u].feats, stats[u].state_weights,
                           model.subspace, model.embeddings[u], nb);
        detail::apply_posterior_step(model.embeddings[u].q_h, eg.d_mean,
                                     eg.d_var, opt_h[u], cfg.step_size);
      }
    }

    double kl_h = 0.0;
    for (const auto& e : model.embeddings) kl_h += kl_to_standard_normal(e.q_h);
    model.elbo_log.push_back(loglik.value() - stick_kl_to_prior(model.sticks) -
                             kl_h -
                             kl_to_standard_normal(model.subspace.q_W) -
                             kl_to_standard_normal(model.subspace.q_b));
    if (!std::isfinite(model.elbo_log.back()))
      throw Error("discover_units: non-finite ELBO at epoch " +
                  std::to_string(epoch));
  }
  return model;
}

// Assembles the variational objective at acoustic scale 1. With
// cfg.mc_samples > 0 the data term averages seeded posterior samples of the
// embeddings (W, b at their means), giving a Monte-Carlo estimate of the
// expected log-marginal; with 0 it plugs in the posterior means.
inline ElboReport compute_elbo(const ModelContainer& model, const Corpus& corpus) {
  const int n_samples = std::max(0, model.cfg.mc_samples);
  const int U = static_cast<int>(model.embeddings.size());
  const int P = model.subspace.P;
  std::mt19937_64 rng(model.cfg.seed);

  MatrixXd W = realize_W(model.subspace, MatrixXd::Zero(model.subspace.S(), P));
  const VectorXd& b = model.subspace.q_b.mean;
  auto realize_units = [&](bool sample) {
    std::vector<UnitParams> units;
    units.reserve(U);
    for (const auto& e : model.embeddings) {
      VectorXd h = sample ? sample_reparam(e.q_h, standard_normal(rng, P))
                          : e.q_h.mean;
      units.push_back(link_forward(W, b, h, model.subspace.layout));
    }
    return units;
  };

  VectorXd logw = expected_log_weights(model.sticks);
  auto utterance_loglik = [&](const Utterance& utt,
                              const std::vector<UnitParams>& units) {
    DecodeGraph g =
        utt.transcript.empty()
            ? build_phone_loop(logw, model.cfg.self_loop, model.labels())
            : build_forced_alignment(utt.transcript, model.labels(),
                                     model.cfg.self_loop);
    MatrixXd feats = utt.feats.as_double();
    MatrixXd em = compute_emissions(g, units, feats);
    double lm = forward_backward(g, em, 1.0).log_marginal;
    if (!std::isfinite(lm))
      throw Error("compute_elbo: non-finite log-marginal for '" + utt.id + "'");
    return lm;
  };

  ElboReport report;
  KahanSum loglik;
  if (n_samples == 0) {
    auto units = realize_units(false);
    for (const auto& utt : corpus.utterances)
      loglik.add(utterance_loglik(utt, units));
  } else {
    for (const auto& utt : corpus.utterances) {
      KahanSum per_utt;
      std::mt19937_64 utt_rng(model.cfg.seed);
      rng = utt_rng;
      for (int s = 0; s < n_samples; ++s)
        per_utt.add(utterance_loglik(utt, realize_units(true)));
      loglik.add(per_utt.value() / n_samples);
    }
  }
  report.loglik = loglik.value();
  report.dp_prior = -stick_kl_to_prior(model.sticks);
  for (const auto& e : model.embeddings)
    report.kl_h += kl_to_standard_normal(e.q_h);
  report.kl_W = kl_to_standard_normal(model.subspace.q_W);
  report.kl_b = kl_to_standard_normal(model.subspace.q_b);
  return report;
}

// ---------------------------------------------------------------------------
// Model container file: "SHMM" magic, u16 version, length-prefixed JSON
// metadata, f64 little-endian arrays in declared order, u32 CRC of
// everything after the version field.

namespace detail {

inline void append_array(std::string& buf, const VectorXd& v) {
  size_t n = buf.size();
  buf.resize(n + static_cast<size_t>(v.size()) * 8);
  std::memcpy(buf.data() + n, v.data(), static_cast<size_t>(v.size()) * 8);
}

inline VectorXd read_array(const std::string& buf, size_t& pos, Eigen::Index n) {
  if (pos + static_cast<size_t>(n) * 8 > buf.size())
    throw FormatError("load_model: truncated array data");
  VectorXd v(n);
  std::memcpy(v.data(), buf.data() + pos, static_cast<size_t>(n) * 8);
  pos += static_cast<size_t>(n) * 8;
  return v;
}

}  // namespace detail

constexpr uint16_t kModelVersion = 1;

inline void save_model(const ModelContainer& model, const std::string& path) {
  nlohmann::json meta;
  meta["config"] = model.cfg;
  meta["layout"] = {{"K", model.subspace.layout.K}, {"D", model.subspace.layout.D}};
  meta["subspace_dim"] = model.subspace.P;
  meta["labels"] = model.labels();
  meta["elbo_log"] = model.elbo_log;
  meta["stick_truncation"] = model.sticks.truncation();
  meta["stick_concentration"] = model.sticks.concentration;
  std::string json_bytes = meta.dump();

  std::string payload;
  uint32_t json_len = static_cast<uint32_t>(json_bytes.size());
  payload.append(reinterpret_cast<const char*>(&json_len), 4);
  payload += json_bytes;
  detail::append_array(payload, model.subspace.q_W.mean);
  detail::append_array(payload, model.subspace.q_W.var);
  detail::append_array(payload, model.subspace.q_b.mean);
  detail::append_array(payload, model.subspace.q_b.var);
  for (const auto& e : model.embeddings) {
    detail::append_array(payload, e.q_h.mean);
    detail::append_array(payload, e.q_h.var);
  }
  detail::append_array(payload, model.sticks.gamma1);
  detail::append_array(payload, model.sticks.gamma2);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_model: cannot open " + path);
  os.write("SHMM", 4);
  os.write(reinterpret_cast<const char*>(&kModelVersion), 2);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc32(reinterpret_cast<const uint8_t*>(payload.data()), payload.size());
  os.write(reinterpret_cast<const char*>(&crc), 4);
  if (!os) throw Error("save_model: write failed for " + path);
}

inline ModelContainer load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_model: cannot open " + path);
  std::string file((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  if (file.size() < 14) throw FormatError("load_model: file too short");
  if (file.compare(0, 4, "SHMM") != 0)
    throw FormatError("load_model: bad magic in " + path);
  uint16_t version;
  std::memcpy(&version, file.data() + 4, 2);
  if (version != kModelVersion)
    throw FormatError("load_model: unsupported version " + std::to_string(version));
  std::string payload = file.substr(6, file.size() - 10);
  uint32_t stored_crc;
  std::memcpy(&stored_crc, file.data() + file.size() - 4, 4);
  uint32_t crc = crc32(reinterpret_cast<const uint8_t*>(payload.data()), payload.size());
  if (crc != stored_crc) throw FormatError("load_model: checksum mismatch in " + path);

  uint32_t json_len;
  std::memcpy(&json_len, payload.data(), 4);
  if (4 + static_cast<size_t>(json_len) > payload.size())
    throw FormatError("load_model: truncated metadata");
  nlohmann::json meta = nlohmann::json::parse(payload.substr(4, json_len));

  ModelContainer model;
  model.cfg = meta.at("config").get<TrainConfig>();
  Layout layout(meta.at("layout").at("K").get<int>(),
                meta.at("layout").at("D").get<int>());
  model.subspace.layout = layout;
  model.subspace.P = meta.at("subspace_dim").get<int>();
  auto labels = meta.at("labels").get<std::vector<std::string>>();
  model.elbo_log = meta.at("elbo_log").get<std::vector<double>>();
  int trunc = meta.at("stick_truncation").get<int>();
  double conc = meta.at("stick_concentration").get<double>();

  const Eigen::Index S = layout.S();
  const int P = model.subspace.P;
  size_t pos = 4 + json_len;
  VectorXd wm = detail::read_array(payload, pos, S * P);
  VectorXd wv = detail::read_array(payload, pos, S * P);
  model.subspace.q_W = GaussianPosterior(std::move(wm), std::move(wv));
  VectorXd bm = detail::read_array(payload, pos, S);
  VectorXd bv = detail::read_array(payload, pos, S);
  model.subspace.q_b = GaussianPosterior(std::move(bm), std::move(bv));
  for (const auto& l : labels) {
    VectorXd hm = detail::read_array(payload, pos, P);
    VectorXd hv = detail::read_array(payload, pos, P);
    model.embeddings.push_back({GaussianPosterior(std::move(hm), std::move(hv)), l});
  }
  VectorXd g1 = detail::read_array(payload, pos, trunc);
  VectorXd g2 = detail::read_array(payload, pos, trunc);
  model.sticks = StickPosterior(std::move(g1), std::move(g2), conc);
  if (pos != payload.size())
    throw FormatError("load_model: trailing bytes in " + path);
  return model;
}

}  // namespace shmm

#endif  // SHMM_TRAIN_HPP
