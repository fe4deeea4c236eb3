// Manifest parsing and the command-line front end. The CLI is a thin
// wrapper: every subcommand maps directly onto library calls.
#ifndef SHMM_CLI_HPP
#define SHMM_CLI_HPP

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "shmm/eval.hpp"
#include "shmm/train.hpp"

namespace shmm::cli {

struct ManifestRecord {
  std::string id;
  std::string feats;
  double duration_sec = 0.0;
  std::vector<std::string> transcript;
};

inline std::vector<ManifestRecord> parse_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("parse_manifest: cannot open " + path);
  std::vector<ManifestRecord> records;
  std::map<std::string, int> seen;  // id -> line number
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("parse_manifest: " + path + " line " +
                        std::to_string(lineno) + ": " + e.what());
    }
    ManifestRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.feats = j.at("feats").get<std::string>();
      r.duration_sec = j.at("duration_sec").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("parse_manifest: " + path + " line " +
                        std::to_string(lineno) + ": missing field: " + e.what());
    }
    if (j.contains("transcript"))
      r.transcript = j.at("transcript").get<std::vector<std::string>>();
    if (r.duration_sec <= 0)
      throw FormatError("parse_manifest: " + path + " line " +
                        std::to_string(lineno) + ": non-positive duration");
    auto [it, inserted] = seen.emplace(r.id, lineno);
    if (!inserted)
      throw FormatError("parse_manifest: duplicate id '" + r.id + "' on lines " +
                        std::to_string(it->second) + " and " +
                        std::to_string(lineno));
    records.push_back(std::move(r));
  }
  return records;
}

namespace detail {

inline std::string resolve(const std::string& manifest_path, const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(manifest_path).parent_path() / fp).string();
}

inline Corpus load_corpus(const std::string& manifest_path,
                          const std::string& language) {
  Corpus corpus;
  corpus.language = language;
  for (const auto& r : parse_manifest(manifest_path)) {
    Utterance utt;
    utt.id = r.id;
    utt.feats = read_features(resolve(manifest_path, r.feats));
    utt.transcript = r.transcript;
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

inline TrainConfig load_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + path + ": " + std::string(e.what()));
  }
  return j.get<TrainConfig>();
}

struct DecodedUtterance {
  UnitTranscript transcript;
  double duration_sec = 0.0;
  Posteriorgram unit_posteriors;
  float frame_shift = 0.01f;
};

inline nlohmann::json transcript_to_json(const DecodedUtterance& d) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& tok : d.transcript.tokens)
    units.push_back({{"label", tok.label},
                     {"start_frame", tok.start_frame},
                     {"end_frame", tok.end_frame}});
  return {{"id", d.transcript.utterance_id},
          {"units", units},
          {"duration_sec", d.duration_sec}};
}

}  // namespace detail

// Decodes one utterance with the model's phone loop: Viterbi for the token
// sequence, forward-backward for the unit posteriorgram.
inline detail::DecodedUtterance decode_utterance(const ModelContainer& model,
                                                 const std::string& id,
                                                 const FeatureMatrix& feats,
                                                 double acoustic_scale) {
  VectorXd logw = expected_log_weights(model.sticks);
  DecodeGraph g = build_phone_loop(logw, model.cfg.self_loop, model.labels());
  MatrixXd x = feats.as_double();
  MatrixXd em = compute_emissions(g, model.expected_units(), x);
  auto vit = viterbi(g, em, acoustic_scale);
  detail::DecodedUtterance out;
  out.transcript = path_to_units(vit.path, g, id);
  out.frame_shift = feats.frame_shift_sec;
  out.duration_sec = static_cast<double>(feats.rows()) * feats.frame_shift_sec;
  auto fb = forward_backward(g, em, acoustic_scale);
  out.unit_posteriors = unit_posteriorgram(fb.posteriors, g);
  return out;
}

inline int run(const std::vector<std::string>& argv) {
  CLI::App app{"Subspace-HMM acoustic unit discovery toolkit"};
  app.require_subcommand(1);

  // feats extract
  auto* feats_cmd = app.add_subcommand("feats", "Feature operations");
  feats_cmd->require_subcommand(1);
  auto* extract = feats_cmd->add_subcommand("extract", "MFCC+deltas from wav files");
  std::string wav_path, feats_config_path, out_dir;
  extract->add_option("--wav", wav_path, "wav file or directory")->required();
  extract->add_option("--config", feats_config_path, "MFCC config JSON");
  extract->add_option("--out", out_dir, "output directory")->required();

  // train-subspace
  auto* train_cmd = app.add_subcommand("train-subspace",
                                       "Phase 1: subspace from labeled sources");
  std::vector<std::string> source_manifests;
  std::string train_config_path, train_out;
  std::optional<uint64_t> seed_opt;
  train_cmd->add_option("--manifest", source_manifests,
                        "source-language manifest(s), JSON lines")
      ->required();
  train_cmd->add_option("--config", train_config_path, "TrainConfig JSON");
  train_cmd->add_option("--out", train_out, "output model file")->required();
  train_cmd->add_option("--seed", seed_opt, "override config seed");

  // discover
  auto* discover_cmd =
      app.add_subcommand("discover", "Phase 2: unit discovery on the target");
  std::string base_model_path, target_manifest, discover_out, discover_config_path;
  std::optional<int> truncation_opt;
  std::optional<double> concentration_opt;
  std::optional<uint64_t> discover_seed_opt;
  discover_cmd->add_option("--model", base_model_path, "phase-1 model")->required();
  discover_cmd->add_option("--manifest", target_manifest, "target manifest")->required();
  discover_cmd->add_option("--config", discover_config_path, "TrainConfig JSON");
  discover_cmd->add_option("--truncation", truncation_opt, "unit truncation T");
  discover_cmd->add_option("--concentration", concentration_opt, "DP concentration");
  discover_cmd->add_option("--seed", discover_seed_opt, "override config seed");
  discover_cmd->add_option("--out", discover_out, "output model file")->required();

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "Viterbi unit decoding");
  std::string decode_model_path, decode_manifest, decode_out, post_dir;
  double acoustic_scale = 1.0;
  int jobs = 1;
  decode_cmd->add_option("--model", decode_model_path, "AUD model")->required();
  decode_cmd->add_option("--manifest", decode_manifest, "manifest to decode")->required();
  decode_cmd->add_option("--out", decode_out, "decoded JSON lines")->required();
  decode_cmd->add_option("--posteriorgrams", post_dir,
                         "also write unit posteriorgrams here as feature files");
  decode_cmd->add_option("--acoustic-scale", acoustic_scale,
                         "emission log-likelihood scale");
  decode_cmd->add_option("--jobs", jobs, "per-utterance parallelism");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Metrics");
  eval_cmd->require_subcommand(1);
  auto* bitrate_cmd = eval_cmd->add_subcommand("bitrate", "Entropy bitrate");
  std::string decoded_path;
  bitrate_cmd->add_option("--decoded", decoded_path, "decoded JSON lines")->required();
  auto* abx_cmd = eval_cmd->add_subcommand("abx", "ABX error");
  std::string items_path, backend = "levenshtein";
  bool normalize_lev = false;
  abx_cmd->add_option("--items", items_path, "ABX items JSON lines")->required();
  abx_cmd->add_option("--backend", backend, "levenshtein|dtwkl")
      ->check(CLI::IsMember({"levenshtein", "dtwkl"}));
  abx_cmd->add_flag("--length-normalize", normalize_lev,
                    "normalize edit distance by mean sequence length");
  auto* cer_cmd = eval_cmd->add_subcommand("cer", "Character error rate");
  std::string hyp_path, ref_path;
  cer_cmd->add_option("--hyp", hyp_path, "hypothesis text file")->required();
  cer_cmd->add_option("--ref", ref_path, "reference text file")->required();

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Show defaults or a model");
  bool show_defaults = false;
  std::string inspect_model;
  inspect_cmd->add_flag("--defaults", show_defaults, "print default TrainConfig");
  inspect_cmd->add_option("--model", inspect_model, "print model metadata");

  try {
    std::vector<std::string> args(argv.rbegin(), argv.rend());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << std::endl;
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << std::endl;
    return 1;
  }

  try {
    if (extract->parsed()) {
      MfccConfig mcfg;
      if (!feats_config_path.empty()) {
        std::ifstream is(feats_config_path);
        if (!is) throw Error("cannot open config " + feats_config_path);
        nlohmann::json j;
        is >> j;
        mcfg.num_ceps = j.value("num_ceps", mcfg.num_ceps);
        mcfg.window_sec = j.value("window_sec", mcfg.window_sec);
        mcfg.shift_sec = j.value("shift_sec", mcfg.shift_sec);
        mcfg.num_mel_filters = j.value("num_mel_filters", mcfg.num_mel_filters);
        mcfg.fft_size = j.value("fft_size", mcfg.fft_size);
        mcfg.delta_window = j.value("delta_window", mcfg.delta_window);
      }
      std::vector<std::filesystem::path> wavs;
      if (std::filesystem::is_directory(wav_path)) {
        for (const auto& e : std::filesystem::directory_iterator(wav_path))
          if (e.path().extension() == ".wav") wavs.push_back(e.path());
        std::sort(wavs.begin(), wavs.end());
      } else {
        wavs.emplace_back(wav_path);
      }
      std::filesystem::create_directories(out_dir);
      for (const auto& w : wavs) {
        Waveform wave = read_wav(w.string());
        FeatureMatrix f = compute_mfcc(wave, mcfg);
        f = append_deltas(f, mcfg.delta_window);
        f = mean_normalize(f);
        auto out = std::filesystem::path(out_dir) / (w.stem().string() + ".shmf");
        write_features(out.string(), f);
      }
      return 0;
    }

    if (train_cmd->parsed()) {
      TrainConfig cfg = detail::load_config(train_config_path);
      if (seed_opt) cfg.seed = *seed_opt;
      std::vector<Corpus> corpora;
      for (const auto& m : source_manifests)
        corpora.push_back(
            detail::load_corpus(m, std::filesystem::path(m).stem().string()));
      ModelContainer model = train_subspace(corpora, cfg);
      save_model(model, train_out);
      return 0;
    }

    if (discover_cmd->parsed()) {
      ModelContainer base = load_model(base_model_path);
      TrainConfig cfg = discover_config_path.empty()
                            ? base.cfg
                            : detail::load_config(discover_config_path);
      if (truncation_opt) cfg.truncation = *truncation_opt;
      if (concentration_opt) cfg.concentration = *concentration_opt;
      if (discover_seed_opt) cfg.seed = *discover_seed_opt;
      Corpus target = detail::load_corpus(target_manifest, "target");
      ModelContainer model = discover_units(target, base, cfg);
      save_model(model, discover_out);
      return 0;
    }

    if (decode_cmd->parsed()) {
      ModelContainer model = load_model(decode_model_path);
      auto records = parse_manifest(decode_manifest);
      std::vector<detail::DecodedUtterance> decoded(records.size());
      jobs = std::max(1, jobs);
      std::atomic<size_t> next{0};
      auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
          FeatureMatrix f =
              read_features(detail::resolve(decode_manifest, records[i].feats));
          decoded[i] = decode_utterance(model, records[i].id, f, acoustic_scale);
        }
      };
      std::vector<std::future<void>> futures;
      for (int t = 1; t < jobs; ++t)
        futures.push_back(std::async(std::launch::async, worker));
      worker();
      for (auto& f : futures) f.get();

      std::ofstream os(decode_out);
      if (!os) throw Error("cannot open " + decode_out);
      for (const auto& d : decoded)
        os << detail::transcript_to_json(d).dump() << "\n";
      if (!post_dir.empty()) {
        std::filesystem::create_directories(post_dir);
        for (const auto& d : decoded) {
          FeatureMatrix pg;
          pg.data = d.unit_posteriors;
          pg.frame_shift_sec = d.frame_shift;
          auto out = std::filesystem::path(post_dir) /
                     (d.transcript.utterance_id + ".shmf");
          write_features(out.string(), pg);
        }
      }
      return 0;
    }

    if (bitrate_cmd->parsed()) {
      std::ifstream is(decoded_path);
      if (!is) throw Error("cannot open " + decoded_path);
      std::vector<SymbolSequence> seqs;
      std::string line;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        SymbolSequence s;
        s.id = j.at("id").get<std::string>();
        s.duration_sec = j.at("duration_sec").get<double>();
        for (const auto& u : j.at("units"))
          s.symbols.push_back(u.at("label").get<std::string>());
        seqs.push_back(std::move(s));
      }
      nlohmann::json report = {{"bitrate_bps", bitrate(seqs)},
                               {"num_sequences", seqs.size()}};
      std::cout << report.dump() << std::endl;
      return 0;
    }

    if (abx_cmd->parsed()) {
      std::ifstream is(items_path);
      if (!is) throw Error("cannot open " + items_path);
      std::vector<AbxItem> items;
      std::string line;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        AbxItem it;
        it.id = j.at("id").get<std::string>();
        it.category = j.at("category").get<std::string>();
        if (j.contains("symbols"))
          it.symbols.symbols = j.at("symbols").get<std::vector<std::string>>();
        if (j.contains("posteriorgram"))
          it.posteriorgram =
              read_features(detail::resolve(items_path, j.at("posteriorgram")))
                  .data;
        items.push_back(std::move(it));
      }
      std::function<double(const AbxItem&, const AbxItem&)> dist;
      if (backend == "levenshtein") {
        dist = [normalize_lev](const AbxItem& a, const AbxItem& b) {
          double d = levenshtein(a.symbols.symbols, b.symbols.symbols);
          if (normalize_lev) {
            double n = 0.5 * (a.symbols.symbols.size() + b.symbols.symbols.size());
            if (n > 0) d /= n;
          }
          return d;
        };
      } else {
        dist = [](const AbxItem& a, const AbxItem& b) {
          return dtw_kl(a.posteriorgram, b.posteriorgram);
        };
      }
      nlohmann::json report = {{"abx_error", abx_error(items, dist)},
                               {"backend", backend},
                               {"num_items", items.size()}};
      std::cout << report.dump() << std::endl;
      return 0;
    }

    if (cer_cmd->parsed()) {
      auto slurp = [](const std::string& p) {
        std::ifstream is(p);
        if (!is) throw Error("cannot open " + p);
        std::stringstream ss;
        ss << is.rdbuf();
        std::string s = ss.str();
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        return s;
      };
      nlohmann::json report = {{"cer", cer(slurp(hyp_path), slurp(ref_path))}};
      std::cout << report.dump() << std::endl;
      return 0;
    }

    if (inspect_cmd->parsed()) {
      if (show_defaults) {
        nlohmann::json j = TrainConfig{};
        std::cout << j.dump(2) << std::endl;
        return 0;
      }
      if (!inspect_model.empty()) {
        ModelContainer m = load_model(inspect_model);
        nlohmann::json j = {{"config", m.cfg},
                            {"layout", {{"K", m.subspace.layout.K},
                                        {"D", m.subspace.layout.D}}},
                            {"subspace_dim", m.subspace.P},
                            {"num_units", m.embeddings.size()},
                            {"stick_truncation", m.sticks.truncation()},
                            {"elbo_log", m.elbo_log}};
        std::cout << j.dump(2) << std::endl;
        return 0;
      }
      std::cerr << "inspect: need --defaults or --model" << std::endl;
      return 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}

}  // namespace shmm::cli

#endif  // SHMM_CLI_HPP
