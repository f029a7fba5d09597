#pragma once

#include <string>

#include "json.hpp"
#include "voxgen/harness.hpp"

namespace voxgen {

namespace detail {

/// Strict object access: unknown keys are configuration mistakes.
inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <class T>
inline void read_field(const nlohmann::json& j, const char* key, T& out,
                       const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline void apply_dataset_json(const nlohmann::json& j, DatasetSpec& ds) {
  detail::check_keys(j,
                     {"kind", "extent", "rotation", "translation", "thickness",
                      "side", "images", "labels", "paths", "binarize"},
                     "dataset");
  std::string kind = dataset_kind_name(ds.kind);
  detail::read_field(j, "kind", kind, "dataset");
  ds.kind = dataset_kind_from_string(kind);
  detail::read_field(j, "extent", ds.extent, "dataset");
  detail::read_field(j, "rotation", ds.aug.rotation, "dataset");
  detail::read_field(j, "translation", ds.aug.translation, "dataset");
  detail::read_field(j, "binarize", ds.aug.binarize, "dataset");
  detail::read_field(j, "thickness", ds.thickness, "dataset");
  detail::read_field(j, "side", ds.necker_side, "dataset");
  detail::read_field(j, "images", ds.images_path, "dataset");
  detail::read_field(j, "labels", ds.labels_path, "dataset");
  detail::read_field(j, "paths", ds.paths, "dataset");
  if (ds.extent < 2) throw ConfigError("dataset.extent must be >= 2");
}

inline void apply_model_json(const nlohmann::json& j, ModelSpec& ms) {
  detail::check_keys(j,
                     {"z_dim", "hidden", "steps", "write_block", "read_dim",
                      "glimpse", "ctx_dim", "context", "n_classes", "n_views"},
                     "model");
  detail::read_field(j, "z_dim", ms.z_dim, "model");
  detail::read_field(j, "hidden", ms.hidden, "model");
  detail::read_field(j, "steps", ms.steps, "model");
  detail::read_field(j, "write_block", ms.write_block, "model");
  detail::read_field(j, "read_dim", ms.read_dim, "model");
  detail::read_field(j, "glimpse", ms.glimpse, "model");
  detail::read_field(j, "ctx_dim", ms.ctx_dim, "model");
  detail::read_field(j, "n_classes", ms.n_classes, "model");
  detail::read_field(j, "n_views", ms.n_views, "model");
  if (j.contains("context")) {
    std::string kind;
    detail::read_field(j, "context", kind, "model");
    if (kind == "none") {
      ms.context = ContextKind::none;
    } else if (kind == "class_label") {
      ms.context = ContextKind::class_label;
    } else if (kind == "views") {
      ms.context = ContextKind::views;
    } else {
      throw ConfigError("unknown model.context: " + kind);
    }
  }
  if (ms.z_dim == 0 || ms.hidden == 0 || ms.steps == 0)
    throw ConfigError("model dimensions must be positive");
}

inline void apply_train_json(const nlohmann::json& j, TrainConfig& cfg) {
  detail::check_keys(j,
                     {"lr", "batch", "budget", "train_count", "eval_count",
                      "eval_every", "eval_importance"},
                     "train");
  detail::read_field(j, "lr", cfg.lr, "train");
  detail::read_field(j, "batch", cfg.batch, "train");
  detail::read_field(j, "budget", cfg.budget, "train");
  detail::read_field(j, "train_count", cfg.train_count, "train");
  detail::read_field(j, "eval_count", cfg.eval_count, "train");
  detail::read_field(j, "eval_every", cfg.eval_every, "train");
  detail::read_field(j, "eval_importance", cfg.eval_importance, "train");
}

/// Profile defaults overridden by the optional JSON sections.
inline TrainConfig make_train_config(const nlohmann::json& j,
                                     const std::string& profile) {
  TrainConfig cfg;
  if (profile == "toy") {
    cfg = toy_train_config();
  } else if (profile == "paper") {
    cfg = paper_train_config();
  } else {
    throw ConfigError("unknown profile: " + profile);
  }
  if (j.contains("dataset")) apply_dataset_json(j.at("dataset"), cfg.dataset);
  if (j.contains("model")) apply_model_json(j.at("model"), cfg.model);
  if (j.contains("train")) apply_train_json(j.at("train"), cfg);
  cfg.validate();
  return cfg;
}

inline BaselineConfig make_baseline_config(const nlohmann::json& j,
                                           const std::string& profile) {
  TrainConfig base = make_train_config(j, profile);
  BaselineConfig cfg;
  cfg.dataset = base.dataset;
  cfg.lr = base.lr;
  cfg.batch = base.batch;
  cfg.budget = base.budget;
  cfg.train_count = base.train_count;
  cfg.eval_count = base.eval_count;
  if (profile == "paper") cfg.channels = 16;
  if (j.contains("baseline")) {
    const auto& b = j.at("baseline");
    detail::check_keys(b, {"channels", "lr", "budget"}, "baseline");
    detail::read_field(b, "channels", cfg.channels, "baseline");
    detail::read_field(b, "lr", cfg.lr, "baseline");
    detail::read_field(b, "budget", cfg.budget, "baseline");
  }
  if (cfg.channels == 0) throw ConfigError("baseline.channels must be >= 1");
  return cfg;
}

}  // namespace voxgen
