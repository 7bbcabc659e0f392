#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glyphnet/checkpoint.hpp"
#include "glyphnet/data.hpp"
#include "glyphnet/metrics.hpp"
#include "glyphnet/model.hpp"
#include "glyphnet/toygen.hpp"
#include "glyphnet/train.hpp"

namespace glyphnet {

/// Shortest round-trip decimal form (for CSV stability across runs).
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

/// Stable 16-hex-digit id derived from the effective configuration, so equal
/// configs yield equal ids and reruns stay byte-identical.
inline std::string run_id_of(const nlohmann::json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (unsigned char c : s) h = mix64(h ^ c);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& m : r.per_class)
    per_class.push_back({{"name", m.name},
                         {"support", m.support},
                         {"tp", m.tp},
                         {"fp", m.fp},
                         {"fn", m.fn},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1}});
  return {{"count", r.count},
          {"top1", r.top1},
          {"top3", r.top3},
          {"loss", r.mean_loss},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"per_class", std::move(per_class)},
          {"confusion", r.confusion}};
}

inline std::string per_class_csv(const MetricsReport& r) {
  std::string out = "class,support,precision,recall,f1\n";
  for (const auto& m : r.per_class) {
    out += m.name;
    out += ',';
    out += std::to_string(m.support);
    out += ',';
    out += format_double(m.precision);
    out += ',';
    out += format_double(m.recall);
    out += ',';
    out += format_double(m.f1);
    out += '\n';
  }
  return out;
}

inline double default_lr0(ModelKind kind) {
  return kind == ModelKind::C ? 0.001 : 0.0005;
}

inline std::string checkpoint_name(ModelKind kind) {
  return std::string("model_") + static_cast<char>(kind_letter(kind) - 'A' + 'a') + ".ckpt";
}

struct TrainRunOptions {
  ModelKind model = ModelKind::A;
  std::string corpus;
  std::string out;
  int epochs = 50;
  int batch_size = 64;
  double lr0 = 0.0;  // <= 0 selects the per-model default
  std::uint64_t seed = 0;
  bool augment = true;
  int image_size = 32;
  double train_frac = 0.8;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainRunResult {
  MetricsReport final_eval;
  std::vector<EpochStats> curves;
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
  nlohmann::json metrics_json;
};

/// The `train` command: load corpus, split, train one model, write the
/// checkpoint plus metrics JSON and per-class CSV into the output directory.
inline TrainRunResult run_train(const TrainRunOptions& opt) {
  TrainConfig cfg;
  cfg.epochs = opt.epochs;
  cfg.batch_size = opt.batch_size;
  cfg.lr0 = opt.lr0 > 0 ? opt.lr0 : default_lr0(opt.model);
  cfg.seed = opt.seed;
  cfg.augment.enabled = opt.augment;
  cfg.validate();
  if (opt.corpus.empty() || opt.out.empty())
    throw std::invalid_argument("train needs --corpus and --out");
  if (!(opt.train_frac > 0 && opt.train_frac < 1))
    throw std::invalid_argument("train fraction must be in (0,1)");
  if (opt.image_size < 1) throw std::invalid_argument("image size must be positive");

  std::vector<std::string> class_names;
  int skipped = 0;
  auto images = load_corpus(opt.corpus, opt.image_size, class_names, &skipped);
  if (skipped > 0)
    std::fprintf(stderr, "warning: skipped %d unreadable files in %s\n", skipped,
                 opt.corpus.c_str());
  auto split = split_dataset(std::move(images), class_names, opt.train_frac, opt.seed);
  const int K = static_cast<int>(split.class_names.size());

  ModelGraph<float> model(opt.model, K, opt.image_size, opt.image_size, opt.seed);
  auto curves = fit(model, split, cfg, opt.on_epoch);

  auto test = to_batch<float>(split.test, 0, split.test.size());
  auto report = evaluate_predictor<float>(
      [&](const Tensor<float>& xb) { return model.predict(xb); }, test.x, test.labels, K,
      split.class_names, cfg.batch_size);

  const nlohmann::json config{{"command", "train"},
                              {"model", std::string(1, kind_letter(opt.model))},
                              {"corpus", opt.corpus},
                              {"out", opt.out},
                              {"epochs", cfg.epochs},
                              {"batch_size", cfg.batch_size},
                              {"lr0", cfg.lr0},
                              {"drop_rate", cfg.drop_rate},
                              {"epoch_drop", cfg.epoch_drop},
                              {"seed", cfg.seed},
                              {"augment", opt.augment},
                              {"rotation_deg", cfg.augment.rotation_deg},
                              {"shear_frac", cfg.augment.shear_frac},
                              {"zoom_frac", cfg.augment.zoom_frac},
                              {"shift_frac", cfg.augment.shift_frac},
                              {"image_size", opt.image_size},
                              {"train_frac", opt.train_frac}};

  nlohmann::json curves_json{{"epoch", nlohmann::json::array()},
                             {"lr", nlohmann::json::array()},
                             {"train_loss", nlohmann::json::array()},
                             {"train_acc", nlohmann::json::array()},
                             {"val_loss", nlohmann::json::array()},
                             {"val_acc", nlohmann::json::array()}};
  for (const auto& st : curves) {
    curves_json["epoch"].push_back(st.epoch);
    curves_json["lr"].push_back(st.lr);
    curves_json["train_loss"].push_back(st.train_loss);
    curves_json["train_acc"].push_back(st.train_acc);
    curves_json["val_loss"].push_back(st.val_loss);
    curves_json["val_acc"].push_back(st.val_acc);
  }

  TrainRunResult result;
  result.final_eval = report;
  result.curves = std::move(curves);
  result.metrics_json = {{"run_id", run_id_of(config)},
                         {"config", config},
                         {"model", std::string(1, kind_letter(opt.model))},
                         {"classes", K},
                         {"curves", std::move(curves_json)},
                         {"metrics", metrics_to_json(report)}};

  std::filesystem::create_directories(opt.out);
  result.checkpoint_path = std::filesystem::path(opt.out) / checkpoint_name(opt.model);
  save_checkpoint(model, Provenance{opt.seed, cfg.epochs, opt.augment},
                  result.checkpoint_path);
  result.metrics_path = std::filesystem::path(opt.out) / "metrics.json";
  write_text_atomic(result.metrics_path, result.metrics_json.dump(2) + "\n");
  write_text_atomic(std::filesystem::path(opt.out) / "per_class.csv", per_class_csv(report));
  return result;
}

struct EvalRunOptions {
  std::vector<std::string> checkpoints;  // one = plain evaluation, several = ensemble
  std::string corpus;
  std::string out;
  std::optional<std::uint64_t> seed;  // defaults to the first member's training seed
  double train_frac = 0.8;
};

struct EvalRunResult {
  MetricsReport report;
  std::filesystem::path metrics_path;
  nlohmann::json metrics_json;
};

/// The `evaluate` command: load one or more checkpoints, rebuild the test
/// split of the corpus (same seed as training by default), and score the
/// model or the softmax-averaged ensemble on it.
inline EvalRunResult run_evaluate(const EvalRunOptions& opt) {
  if (opt.checkpoints.empty()) throw std::invalid_argument("evaluate needs a checkpoint");
  if (opt.corpus.empty() || opt.out.empty())
    throw std::invalid_argument("evaluate needs --corpus and --out");

  std::vector<LoadedCheckpoint> members;
  for (const auto& path : opt.checkpoints) members.push_back(load_checkpoint(path));
  const int K = members[0].model.classes();
  const int size = members[0].model.input_h();
  for (size_t i = 1; i < members.size(); ++i) {
    if (members[i].model.classes() != K)
      throw std::invalid_argument("class-count mismatch between checkpoints '" +
                                  opt.checkpoints[0] + "' (" + std::to_string(K) + ") and '" +
                                  opt.checkpoints[i] + "' (" +
                                  std::to_string(members[i].model.classes()) + ")");
    if (members[i].model.input_h() != size || members[i].model.input_w() != size)
      throw std::invalid_argument("input-size mismatch between checkpoints '" +
                                  opt.checkpoints[0] + "' and '" + opt.checkpoints[i] + "'");
  }
  const std::uint64_t seed = opt.seed.value_or(members[0].provenance.seed);

  std::vector<std::string> class_names;
  int skipped = 0;
  auto images = load_corpus(opt.corpus, size, class_names, &skipped);
  if (skipped > 0)
    std::fprintf(stderr, "warning: skipped %d unreadable files in %s\n", skipped,
                 opt.corpus.c_str());
  if (static_cast<int>(class_names.size()) != K)
    throw std::invalid_argument("corpus has " + std::to_string(class_names.size()) +
                                " classes, checkpoints expect " + std::to_string(K));
  auto split = split_dataset(std::move(images), class_names, opt.train_frac, seed);
  auto test = to_batch<float>(split.test, 0, split.test.size());

  std::vector<const ModelGraph<float>*> graphs;
  for (const auto& m : members) graphs.push_back(&m.model);
  auto report = evaluate_predictor<float>(
      [&](const Tensor<float>& xb) {
        return graphs.size() == 1 ? graphs[0]->predict(xb) : ensemble_predict(graphs, xb);
      },
      test.x, test.labels, K, split.class_names, 64);

  nlohmann::json member_names = nlohmann::json::array();
  for (const auto& p : opt.checkpoints) member_names.push_back(p);
  const nlohmann::json config{{"command", "evaluate"}, {"checkpoints", member_names},
                              {"corpus", opt.corpus},   {"out", opt.out},
                              {"seed", seed},           {"train_frac", opt.train_frac},
                              {"image_size", size}};

  EvalRunResult result;
  result.report = report;
  result.metrics_json = {{"run_id", run_id_of(config)},
                         {"config", config},
                         {"classes", K},
                         {"metrics", metrics_to_json(report)}};
  std::filesystem::create_directories(opt.out);
  result.metrics_path = std::filesystem::path(opt.out) / "metrics.json";
  write_text_atomic(result.metrics_path, result.metrics_json.dump(2) + "\n");
  write_text_atomic(std::filesystem::path(opt.out) / "per_class.csv", per_class_csv(report));
  return result;
}

/// The `inspect` command: verified header as human-readable text.
inline std::string inspect_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json h = read_checkpoint_header(path);
  std::string out;
  out += "arch: model " + h["arch"]["kind"].get<std::string>() + ", " +
         std::to_string(h["arch"]["classes"].get<int>()) + " classes, input " +
         std::to_string(h["arch"]["input_h"].get<int>()) + "x" +
         std::to_string(h["arch"]["input_w"].get<int>()) + "\n";
  const auto& p = h["provenance"];
  out += "provenance: seed " + std::to_string(p["seed"].get<std::uint64_t>()) + ", epochs " +
         std::to_string(p["epochs"].get<std::int64_t>()) + ", augment " +
         (p["augment"].get<bool>() ? std::string("on") : std::string("off")) + "\n";
  out += "payload: " + std::to_string(h["payload_bytes"].get<std::uint64_t>()) + " bytes, crc " +
         std::to_string(h["payload_crc"].get<std::uint64_t>()) + "\n";
  out += "tensors:\n";
  for (const auto& t : h["tensors"]) {
    out += "  " + t["name"].get<std::string>() + "  shape " +
           shape_str(t["shape"].get<Shape>()) + "  offset " +
           std::to_string(t["offset"].get<std::uint64_t>()) + "  count " +
           std::to_string(t["count"].get<std::uint64_t>()) + "\n";
  }
  return out;
}

}  // namespace glyphnet
