// mcar/model.hpp

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

// The full network: backbone F, two-stage detector, multi-label head and
// domain discriminator, plus the versioned checkpoint container.
//
// Each module draws its initial weights from its own RNG stream, so the
// backbone and detector start identical across ablation variants.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcar/adversary.hpp"
#include "mcar/backbone.hpp"
#include "mcar/config.hpp"
#include "mcar/detector.hpp"
#include "mcar/multilabel.hpp"

namespace mcar {

inline DetectorConfig detector_config(const ExperimentConfig& cfg) {
  DetectorConfig d;
  d.num_classes = cfg.data.num_classes;
  d.rpn_channels = cfg.model.rpn_channels;
  d.anchor_scales = cfg.model.anchor_scales;
  d.anchor_ratios = cfg.model.anchor_ratios;
  d.train_proposals = cfg.model.train_proposals;
  d.test_proposals = cfg.model.test_proposals;
  d.roi_pool = cfg.model.roi_pool;
  d.roi_hidden = cfg.model.roi_hidden;
  d.score_threshold = cfg.model.score_threshold;
  d.nms_threshold = cfg.model.nms_threshold;
  d.max_detections = cfg.model.max_detections;
  return d;
}

/// Everything one image contributes to the graph.
template <typename T>
struct ImageForward {
  FeatureMap<T> fmap;
  std::optional<RpnOutput<T>> rpn;
  std::optional<RoiOutput<T>> roi;
  std::optional<Var<T>> p;  // multi-label presence, length K
  std::optional<Var<T>> q;  // detector category vector, absent without proposals
};

/// Which parts of the network a forward pass needs.
struct ForwardParts {
  bool detector = true;
  bool presence = true;
};

template <typename T>
class MCARModel {
 public:
  enum Stream : std::uint64_t { kBackbone = 11, kDetector = 12, kMultiLabel = 13, kDiscriminator = 14 };

  explicit MCARModel(const ExperimentConfig& cfg) : cfg_(cfg) {
    const auto flags = flags_for(cfg.train.variant);
    const int k = cfg.data.num_classes;
    auto rng_b = detail::seeded_rng(cfg.train.seed, kBackbone);
    backbone_ = Backbone<T>(BackboneConfig{cfg.model.backbone_channels}, rng_b);
    const int c = backbone_.out_channels();
    auto rng_d = detail::seeded_rng(cfg.train.seed, kDetector);
    detector_ = Detector<T>(detector_config(cfg), c, rng_d);
    if (flags.multilabel_head) {
      auto rng_m = detail::seeded_rng(cfg.train.seed, kMultiLabel);
      multilabel_.emplace(MultiLabelConfig{k, cfg.model.multilabel_channels}, c, rng_m);
    }
    // Built for every variant so exported embeddings always exist; without
    // the adversarial term its weights simply stay at their initial values.
    conditioning_ = flags.multilabel_head ? cfg.train.effective_conditioning() : Conditioning::unconditional;
    auto rng_a = detail::seeded_rng(cfg.train.seed, kDiscriminator);
    discriminator_ = DomainDiscriminator<T>(c, cfg.model.disc_channels, k, conditioning_, rng_a);
  }

  const ExperimentConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.data.num_classes; }
  Conditioning conditioning() const { return conditioning_; }
  bool has_multilabel_head() const { return multilabel_.has_value(); }

  Backbone<T>& backbone() { return backbone_; }
  Detector<T>& detector() { return detector_; }
  MultiLabelHead<T>& multilabel() { return *multilabel_; }
  DomainDiscriminator<T>& discriminator() { return discriminator_; }

  /// Forward pass of one image. With `gt` the detector attaches its losses
  /// and the ground-truth boxes join the ROI set after the proposals.
  ImageForward<T> forward(Graph<T>& g, const Tensor<T>& image, const GroundTruth* gt, bool training,
                          ForwardParts parts = {}) {
    ImageForward<T> out;
    out.fmap = backbone_.extract_features(g, image);
    const int h = image.dim(1), w = image.dim(2);
    if (parts.detector) {
      const auto& dc = detector_.config();
      out.rpn = detector_.rpn_forward(g, out.fmap, w, h, gt, training ? dc.train_proposals : dc.test_proposals);
      std::vector<Box> rois = out.rpn->proposals.boxes;
      const int n = static_cast<int>(rois.size());
      if (gt) rois.insert(rois.end(), gt->boxes.begin(), gt->boxes.end());
      out.roi = detector_.roi_heads(g, out.fmap, std::move(rois), n, gt);
      if (n > 0) out.q = ops::category_max(g, out.roi->probs, n);
    }
    if (parts.presence && multilabel_) out.p = multilabel_->predict_presence(g, out.fmap);
    return out;
  }

  /// D(GRL(F(x)), c): source probability with reversed gradient into F.
  Var<T> domain_probability(Graph<T>& g, const FeatureMap<T>& fmap, const Var<T>* cond, double lambda) {
    Var<T> rev = ops::gradient_reversal(g, fmap.tensor, static_cast<T>(lambda));
    Var<T> reduced = discriminator_.reduce_features(g, rev);
    return discriminator_.discriminate(g, discriminator_.condition(g, reduced, cond));
  }

  /// Conditioning vector for one image, or nullopt for an unconditional
  /// discriminator.
  std::optional<Var<T>> condition_for(Graph<T>& g, const ImageForward<T>& f) {
    if (conditioning_ == Conditioning::unconditional) return std::nullopt;
    return conditioning_vector(g, conditioning_, *f.p, f.q, cfg_.train.detach_condition);
  }

  std::vector<Detection> detect(const Tensor<T>& image) {
    Graph<T> g;
    auto f = forward(g, image, nullptr, false, {true, false});
    if (f.roi->rois.empty()) return {};
    return detector_.postprocess(*f.roi, image.dim(2), image.dim(1));
  }

  /// Reduced global feature g = f(F(x)), length d.
  std::vector<double> embedding(const Tensor<T>& image) {
    Graph<T> g;
    auto fmap = backbone_.extract_features(g, image);
    auto v = discriminator_.reduce_features(g, fmap.tensor);
    return {v->value.values().begin(), v->value.values().end()};
  }

  std::vector<double> presence(const Tensor<T>& image) {
    if (!multilabel_) throw ConfigError("presence: this variant has no multi-label head");
    Graph<T> g;
    auto fmap = backbone_.extract_features(g, image);
    auto p = multilabel_->predict_presence(g, fmap);
    return {p->value.values().begin(), p->value.values().end()};
  }

  ParameterList<T> parameters() {
    ParameterList<T> out;
    backbone_.collect(out);
    detector_.collect(out);
    if (multilabel_) multilabel_->collect(out);
    discriminator_.collect(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// FNV-1a over names, shapes and values; equal hashes mean equal weights.
  std::uint64_t parameter_hash() {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
    };
    for (auto* p : parameters()) {
      mix(p->name.data(), p->name.size());
      for (int d : p->value.shape()) mix(&d, sizeof d);
      mix(p->value.data(), p->value.size() * sizeof(T));
    }
    return h;
  }

  std::map<std::string, Tensor<double>> state() {
    std::map<std::string, Tensor<double>> s;
    for (auto* p : parameters()) s.emplace(p->name, p->value.template cast<double>());
    return s;
  }

  void load_state(const std::map<std::string, Tensor<double>>& s) {
    auto params = parameters();
    if (s.size() != params.size())
      throw ConfigError("checkpoint has " + std::to_string(s.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
    for (auto* p : params) {
      auto it = s.find(p->name);
      if (it == s.end()) throw ConfigError("checkpoint is missing tensor '" + p->name + "'");
      if (it->second.shape() != p->value.shape())
        throw ConfigError("checkpoint tensor '" + p->name + "' has shape " + it->second.shape_string() +
                          ", model expects " + p->value.shape_string());
      p->value = it->second.template cast<T>();
    }
  }

 private:
  ExperimentConfig cfg_;
  Conditioning conditioning_ = Conditioning::p;
  Backbone<T> backbone_;
  Detector<T> detector_;
  std::optional<MultiLabelHead<T>> multilabel_;
  DomainDiscriminator<T> discriminator_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "MCARCKPT" | u32 version | u64 n | n bytes of config JSON
//   | u32 count | count x (u32 len, name, u32 ndim, ndim x i32, f64 values)

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ExperimentConfig config;
  nlohmann::json extra = nlohmann::json::object();
  std::map<std::string, Tensor<double>> tensors;
};

namespace detail {

template <typename V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V read_pod(std::istream& in, const std::string& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated checkpoint '" + path + "'");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write("MCARCKPT", 8);
    detail::write_pod(out, kCheckpointVersion);
    const std::string meta = nlohmann::json{{"config", ckpt.config}, {"extra", ckpt.extra}}.dump();
    detail::write_pod(out, static_cast<std::uint64_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod(out, static_cast<std::uint32_t>(t.ndim()));
      for (int d : t.shape()) detail::write_pod(out, static_cast<std::int32_t>(d));
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + p + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "MCARCKPT", 8) != 0) throw ConfigError("'" + p + "' is not a checkpoint");
  const auto version = detail::read_pod<std::uint32_t>(in, p);
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint '" + p + "' has version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  const auto meta_len = detail::read_pod<std::uint64_t>(in, p);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw IoError("truncated checkpoint '" + p + "'");
  Checkpoint ckpt;
  const auto j = nlohmann::json::parse(meta);
  ckpt.config = config_from_json(j.at("config"));
  ckpt.extra = j.value("extra", nlohmann::json::object());
  const auto count = detail::read_pod<std::uint32_t>(in, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_pod<std::uint32_t>(in, p);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto ndim = detail::read_pod<std::uint32_t>(in, p);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = detail::read_pod<std::int32_t>(in, p);
    Tensor<double> t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint '" + p + "'");
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

template <typename T>
Checkpoint make_checkpoint(MCARModel<T>& model, nlohmann::json extra = nlohmann::json::object()) {
  return {model.config(), std::move(extra), model.state()};
}

template <typename T>
MCARModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
  MCARModel<T> model(ckpt.config);
  model.load_state(ckpt.tensors);
  return model;
}

}  // namespace mcar
