// mcar/config.hpp

// Copyright 2026  The mcar Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration: data, model and training sections, a JSON schema
// derived from the defaults, and key=value overrides.
//
//   {"data": {...}, "model": {...}, "train": {...}, "out_dir": "..."}
//
// Unknown keys are rejected and every value is type-checked against the
// default of the same key.

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mcar/adversary.hpp"
#include "mcar/data.hpp"
#include "mcar/errors.hpp"

namespace mcar {

enum class Variant { full, wo_pr, uadv, uadv_wo_pr, uadv_wo_mp_pr, wo_adv };

inline constexpr std::array<Variant, 6> kAllVariants = {Variant::full,       Variant::wo_pr,
                                                       Variant::uadv,       Variant::uadv_wo_pr,
                                                       Variant::uadv_wo_mp_pr, Variant::wo_adv};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::wo_pr: return "w/o-PR";
    case Variant::uadv: return "uadv";
    case Variant::uadv_wo_pr: return "uadv-w/o-PR";
    case Variant::uadv_wo_mp_pr: return "uadv-w/o-MP-PR";
    case Variant::wo_adv: return "w/o-adv";
  }
  return "full";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  if (s == "MCAR") return Variant::full;
  throw ConfigError("variant: expected one of full|w/o-PR|uadv|uadv-w/o-PR|uadv-w/o-MP-PR|w/o-adv, got '" +
                    s + "'");
}

/// Which graph components and loss terms a variant keeps.
struct VariantFlags {
  bool adversary = true;
  bool conditional = true;
  bool multilabel_head = true;
  bool multilabel_loss = true;
  bool consistency = true;
};

inline VariantFlags flags_for(Variant v) {
  switch (v) {
    case Variant::full: return {true, true, true, true, true};
    case Variant::wo_pr: return {true, true, true, true, false};
    case Variant::uadv: return {true, false, true, true, true};
    case Variant::uadv_wo_pr: return {true, false, true, true, false};
    case Variant::uadv_wo_mp_pr: return {true, false, false, false, false};
    case Variant::wo_adv: return {false, false, true, true, true};
  }
  return {};
}

struct DataConfig {
  std::string root = "data/bench";
  int num_source = 200;
  int num_target = 200;
  int num_test = 200;
  int num_classes = 3;
  ShiftConfig shift{};
  std::uint64_t seed = 1;
};

struct ModelConfig {
  std::vector<int> backbone_channels{16, 32, 64, 64};
  int multilabel_channels = 64;
  int disc_channels = 64;
  int rpn_channels = 64;
  int roi_hidden = 128;
  int roi_pool = 4;
  std::vector<double> anchor_scales{1.25, 2.0, 2.75};
  std::vector<double> anchor_ratios{1.0};
  int train_proposals = 32;
  int test_proposals = 32;
  double score_threshold = 0.01;
  double nms_threshold = 0.5;
  int max_detections = 50;
};

struct TrainConfig {
  double lambda = 0.5;
  double mu = 0.01;
  double epsilon = 0.1;
  double gamma = 5.0;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 25;
  int batch_size = 2;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
  /// p or p_plus_q; the uadv variants override it with an unconditional input.
  Conditioning conditioning = Conditioning::p;
  bool detach_condition = true;
  /// Global gradient-norm clip, 0 disables.
  double grad_clip = 0.0;
  double divergence_threshold = 1e6;
  /// Evaluate on the target test split every N epochs (0: only at the end).
  int eval_every = 0;

  void validate() const {
    for (auto [name, v] : {std::pair{"lambda", lambda}, std::pair{"mu", mu}, std::pair{"epsilon", epsilon},
                           std::pair{"gamma", gamma}, std::pair{"weight_decay", weight_decay},
                           std::pair{"momentum", momentum}, std::pair{"grad_clip", grad_clip}})
      if (!(v >= 0)) throw ConfigError(std::string(name) + ": must be >= 0");
    if (!(lr > 0)) throw ConfigError("lr: must be > 0");
    if (epochs < 0) throw ConfigError("epochs: must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (conditioning == Conditioning::unconditional)
      throw ConfigError("conditioning: use a uadv variant for an unconditional discriminator");
  }

  /// Discriminator input actually used, after applying the variant.
  Conditioning effective_conditioning() const {
    return flags_for(variant).conditional ? conditioning : Conditioning::unconditional;
  }
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::string out_dir = "runs/default";
};

// ---------------------------------------------------------------------------
// JSON mapping

inline void to_json(nlohmann::json& j, const DataConfig& d) {
  j = {{"root", d.root},
       {"num_source", d.num_source},
       {"num_target", d.num_target},
       {"num_test", d.num_test},
       {"num_classes", d.num_classes},
       {"shift_kind", to_string(d.shift.kind)},
       {"severity", d.shift.severity},
       {"shift_seed", d.shift.seed},
       {"seed", d.seed}};
}

inline void from_json(const nlohmann::json& j, DataConfig& d) {
  d.root = j.at("root").get<std::string>();
  d.num_source = j.at("num_source").get<int>();
  d.num_target = j.at("num_target").get<int>();
  d.num_test = j.at("num_test").get<int>();
  d.num_classes = j.at("num_classes").get<int>();
  d.shift.kind = parse_shift_kind(j.at("shift_kind").get<std::string>());
  d.shift.severity = j.at("severity").get<double>();
  d.shift.seed = j.at("shift_seed").get<std::uint64_t>();
  d.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = {{"backbone_channels", m.backbone_channels},
       {"multilabel_channels", m.multilabel_channels},
       {"disc_channels", m.disc_channels},
       {"rpn_channels", m.rpn_channels},
       {"roi_hidden", m.roi_hidden},
       {"roi_pool", m.roi_pool},
       {"anchor_scales", m.anchor_scales},
       {"anchor_ratios", m.anchor_ratios},
       {"train_proposals", m.train_proposals},
       {"test_proposals", m.test_proposals},
       {"score_threshold", m.score_threshold},
       {"nms_threshold", m.nms_threshold},
       {"max_detections", m.max_detections}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  m.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  m.multilabel_channels = j.at("multilabel_channels").get<int>();
  m.disc_channels = j.at("disc_channels").get<int>();
  m.rpn_channels = j.at("rpn_channels").get<int>();
  m.roi_hidden = j.at("roi_hidden").get<int>();
  m.roi_pool = j.at("roi_pool").get<int>();
  m.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  m.anchor_ratios = j.at("anchor_ratios").get<std::vector<double>>();
  m.train_proposals = j.at("train_proposals").get<int>();
  m.test_proposals = j.at("test_proposals").get<int>();
  m.score_threshold = j.at("score_threshold").get<double>();
  m.nms_threshold = j.at("nms_threshold").get<double>();
  m.max_detections = j.at("max_detections").get<int>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = {{"lambda", t.lambda},
       {"mu", t.mu},
       {"epsilon", t.epsilon},
       {"gamma", t.gamma},
       {"lr", t.lr},
       {"momentum", t.momentum},
       {"weight_decay", t.weight_decay},
       {"epochs", t.epochs},
       {"batch_size", t.batch_size},
       {"seed", t.seed},
       {"variant", to_string(t.variant)},
       {"conditioning", to_string(t.conditioning)},
       {"detach_condition", t.detach_condition},
       {"grad_clip", t.grad_clip},
       {"divergence_threshold", t.divergence_threshold},
       {"eval_every", t.eval_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
  t.lambda = j.at("lambda").get<double>();
  t.mu = j.at("mu").get<double>();
  t.epsilon = j.at("epsilon").get<double>();
  t.gamma = j.at("gamma").get<double>();
  t.lr = j.at("lr").get<double>();
  t.momentum = j.at("momentum").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.variant = parse_variant(j.at("variant").get<std::string>());
  t.conditioning = parse_conditioning(j.at("conditioning").get<std::string>());
  t.detach_condition = j.at("detach_condition").get<bool>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.divergence_threshold = j.at("divergence_threshold").get<double>();
  t.eval_every = j.at("eval_every").get<int>();
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"data", c.data}, {"model", c.model}, {"train", c.train}, {"out_dir", c.out_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.data = j.at("data").get<DataConfig>();
  c.model = j.at("model").get<ModelConfig>();
  c.train = j.at("train").get<TrainConfig>();
  c.out_dir = j.at("out_dir").get<std::string>();
}

namespace detail {

inline const char* type_label(const nlohmann::json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

inline bool type_compatible(const nlohmann::json& def, const nlohmann::json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number_float()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : v)
      if (!type_compatible(def.front(), e)) return false;
    return true;
  }
  if (def.is_object()) return v.is_object();
  return false;
}

/// Recursively merges `in` onto `base`, rejecting unknown keys and type changes.
inline void merge_checked(nlohmann::json& base, const nlohmann::json& in, const std::string& path) {
  if (!in.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
      continue;
    }
    if (!type_compatible(slot, it.value()))
      throw ConfigError("config key '" + key + "' expects " + type_label(slot) + ", got " +
                        type_label(it.value()));
    slot = it.value();
  }
}

}  // namespace detail

/// Parses `j` on top of the defaults; throws ConfigError on any violation.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  nlohmann::json base = ExperimentConfig{};
  detail::merge_checked(base, j, "");
  try {
    auto cfg = base.get<ExperimentConfig>();
    cfg.train.validate();
    cfg.data.shift.validate();
    validate_benchmark_args(cfg.data.num_source, cfg.data.num_target, cfg.data.num_classes, cfg.data.shift);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Applies "key=value" overrides. Keys are either "section.field" or a bare
/// field name that is unique across sections. Values are parsed as JSON,
/// falling back to a plain string.
inline ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  nlohmann::json j = cfg;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not key=value");
    std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;
    }
    std::string section, field = key;
    if (const auto dot = key.find('.'); dot != std::string::npos) {
      section = key.substr(0, dot);
      field = key.substr(dot + 1);
    } else if (!j.contains(key)) {
      for (const char* s : {"data", "model", "train"})
        if (j[s].contains(key)) {
          if (!section.empty()) throw ConfigError("override key '" + key + "' is ambiguous; use section.key");
          section = s;
        }
      if (section.empty()) throw ConfigError("unknown config key '" + key + "'");
    }
    nlohmann::json patch;
    if (section.empty()) patch[field] = value;
    else patch[section][field] = value;
    detail::merge_checked(j, patch, "");
  }
  return config_from_json(j);
}

}  // namespace mcar
