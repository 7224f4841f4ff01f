// mcar/data.hpp

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

// Two-domain dataset model, its on-disk layout and the synthetic
// shapes benchmark.
//
// On-disk layout of one split directory:
//
//   manifest.json               {K, class_names, n_s, n_t, split,
//                                source_ids, target_ids}
//   images/<image_id>.png       lossless 8-bit RGB
//   annotations/<image_id>.json {image_id, boxes: [[x1,y1,x2,y2],...],
//                                class_ids: [...]}
//
// Target images of a train split carry no annotation file. A test split
// keeps target annotations so target-domain mAP can be measured.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mcar/errors.hpp"
#include "mcar/geometry.hpp"
#include "mcar/png_io.hpp"

namespace mcar {

inline constexpr int kMaxClasses = 8;
inline constexpr int kBenchmarkImageSize = 128;

inline const std::array<const char*, kMaxClasses> kShapeNames = {
    "circle", "triangle", "square", "diamond", "cross", "ring", "hexagon", "star"};

enum class Domain { source, target };

inline std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

struct AnnotatedImage {
  std::string image_id;
  RgbImage image;
  std::vector<Box> boxes;
  std::vector<int> class_ids;

  /// Throws ValidationError naming image_id on the first broken invariant.
  void validate(int num_classes) const {
    if (boxes.size() != class_ids.size()) {
      throw ValidationError(image_id + ": " + std::to_string(boxes.size()) + " boxes but " +
                            std::to_string(class_ids.size()) + " class ids");
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const Box& b = boxes[i];
      if (!(b.x1 < b.x2) || !(b.y1 < b.y2)) {
        throw ValidationError(image_id + ": box " + std::to_string(i) +
                              " is degenerate (requires x1<x2 and y1<y2)");
      }
      if (!b.inside(image.width, image.height)) {
        throw ValidationError(image_id + ": box " + std::to_string(i) + " out of image bounds");
      }
      if (class_ids[i] < 0 || class_ids[i] >= num_classes) {
        throw ValidationError(image_id + ": class id out of range (" +
                              std::to_string(class_ids[i]) + " not in [0, " +
                              std::to_string(num_classes) + "))");
      }
    }
  }
};

struct UnlabeledImage {
  std::string image_id;
  RgbImage image;
};

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("manifest: split must be train|test, got '" + s + "'");
}

struct DatasetManifest {
  int num_classes = 0;
  std::vector<std::string> class_names;
  int n_s = 0;
  int n_t = 0;
  Split split = Split::train;
  std::vector<std::string> source_ids;
  std::vector<std::string> target_ids;

  void validate() const {
    if (num_classes < 1) throw ValidationError("manifest: K must be >= 1");
    if (static_cast<int>(class_names.size()) != num_classes) {
      throw ValidationError("manifest: class_names has " + std::to_string(class_names.size()) +
                            " entries, K = " + std::to_string(num_classes));
    }
    if (std::set<std::string>(class_names.begin(), class_names.end()).size() != class_names.size())
      throw ValidationError("manifest: class_names contains duplicates");
    if (static_cast<int>(source_ids.size()) != n_s || static_cast<int>(target_ids.size()) != n_t)
      throw ValidationError("manifest: n_s/n_t do not match the listed image ids");
  }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = nlohmann::json{{"K", m.num_classes},       {"class_names", m.class_names},
                     {"n_s", m.n_s},             {"n_t", m.n_t},
                     {"split", to_string(m.split)}, {"source_ids", m.source_ids},
                     {"target_ids", m.target_ids}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.num_classes = j.at("K").get<int>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.n_s = j.at("n_s").get<int>();
  m.n_t = j.at("n_t").get<int>();
  m.split = parse_split(j.at("split").get<std::string>());
  m.source_ids = j.at("source_ids").get<std::vector<std::string>>();
  m.target_ids = j.at("target_ids").get<std::vector<std::string>>();
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<AnnotatedImage> source;
  std::vector<UnlabeledImage> target;
  /// Target ground truth; only present for a test split.
  std::optional<std::vector<AnnotatedImage>> target_labels;

  int num_classes() const { return manifest.num_classes; }
};

// ---------------------------------------------------------------------------
// Domain shift

enum class ShiftKind { fog, color_jitter, blur, texture };

inline std::string to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::fog: return "fog";
    case ShiftKind::color_jitter: return "color_jitter";
    case ShiftKind::blur: return "blur";
    case ShiftKind::texture: return "texture";
  }
  return "fog";
}

inline ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "fog") return ShiftKind::fog;
  if (s == "color_jitter") return ShiftKind::color_jitter;
  if (s == "blur") return ShiftKind::blur;
  if (s == "texture") return ShiftKind::texture;
  throw ConfigError("shift_kind: expected fog|color_jitter|blur|texture, got '" + s + "'");
}

struct ShiftConfig {
  ShiftKind kind = ShiftKind::fog;
  double severity = 0.6;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(severity >= 0.0 && severity <= 1.0))
      throw ConfigError("severity: must lie in [0, 1], got " + std::to_string(severity));
  }
};

namespace detail {

inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<double> to_unit(const RgbImage& img) {
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return v;
}

inline RgbImage from_unit(const std::vector<double>& v, int w, int h) {
  RgbImage img(w, h);
  for (std::size_t i = 0; i < v.size(); ++i) img.pixels[i] = quantize_unit(v[i]);
  return img;
}

inline std::vector<double> gaussian_blur(const std::vector<double>& src, int w, int h, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double z = 0;
  for (int i = -radius; i <= radius; ++i) z += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= z;
  std::vector<double> tmp(src.size()), out(src.size());
  auto idx = [w](int x, int y, int c) { return (static_cast<std::size_t>(y) * w + x) * 3 + c; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * src[idx(std::clamp(x + i, 0, w - 1), y, c)];
        tmp[idx(x, y, c)] = s;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[idx(x, std::clamp(y + i, 0, h - 1), c)];
        out[idx(x, y, c)] = s;
      }
  return out;
}

}  // namespace detail

/// Applies the configured style shift to one image. `index` decorrelates the
/// per-image randomness (fog density pattern, jitter gains...).
inline RgbImage apply_shift(const RgbImage& img, const ShiftConfig& shift, std::uint64_t index) {
  shift.validate();
  if (shift.severity == 0.0) return img;
  auto rng = detail::seeded_rng(shift.seed, 0x5f1f7, index);
  const int w = img.width, h = img.height;
  const double s = shift.severity;
  std::vector<double> v = detail::to_unit(img);
  auto idx = [w](int x, int y, int c) { return (static_cast<std::size_t>(y) * w + x) * 3 + c; };

  switch (shift.kind) {
    case ShiftKind::fog: {
      // Spatially varying haze blended towards a bright airlight colour.
      const std::array<double, 3> air{0.82, 0.83, 0.86};
      const double fx = detail::uniform(rng, 0.5, 2.0), fy = detail::uniform(rng, 0.5, 2.0);
      const double px = detail::uniform(rng, 0, 2 * std::numbers::pi);
      const double py = detail::uniform(rng, 0, 2 * std::numbers::pi);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double n = 0.5 + 0.25 * std::sin(2 * std::numbers::pi * fx * x / w + px) +
                           0.25 * std::sin(2 * std::numbers::pi * fy * y / h + py);
          const double t = s * (0.75 + 0.25 * n);
          for (int c = 0; c < 3; ++c) v[idx(x, y, c)] = (1.0 - t) * v[idx(x, y, c)] + t * air[c];
        }
      break;
    }
    case ShiftKind::color_jitter: {
      std::array<double, 3> gain{}, offset{};
      for (int c = 0; c < 3; ++c) {
        gain[c] = 1.0 + s * detail::uniform(rng, -0.6, 0.6);
        offset[c] = s * detail::uniform(rng, -0.3, 0.3);
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) v[idx(x, y, c)] = gain[c] * v[idx(x, y, c)] + offset[c];
      break;
    }
    case ShiftKind::blur:
      v = detail::gaussian_blur(v, w, h, 3.0 * s);
      break;
    case ShiftKind::texture: {
      const double ang = detail::uniform(rng, 0, std::numbers::pi);
      const double freq = detail::uniform(rng, 0.15, 0.35);
      std::normal_distribution<double> noise(0.0, 0.08);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double stripe = std::sin(freq * (std::cos(ang) * x + std::sin(ang) * y));
          for (int c = 0; c < 3; ++c) v[idx(x, y, c)] += s * (0.25 * stripe + noise(rng));
        }
      break;
    }
  }
  return detail::from_unit(v, w, h);
}

// ---------------------------------------------------------------------------
// Synthetic shapes

/// One rendered object: shape class, centre and full extent in pixels.
struct ShapeInstance {
  int class_id = 0;
  double cx = 0, cy = 0, width = 0, height = 0;

  Box analytic_box() const { return {cx - width / 2, cy - height / 2, cx + width / 2, cy + height / 2}; }
};

/// Membership test in the shape's normalized frame; every shape spans exactly
/// [-1, 1] on both axes so its analytic bounding box is the instance extent.
inline bool shape_contains(int class_id, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  if (au > 1.0 || av > 1.0) return false;
  switch (class_id) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return au <= (v + 1.0) / 2.0;  // apex at the top
    case 2: return true;
    case 3: return au + av <= 1.0;
    case 4: return au <= 1.0 / 3.0 || av <= 1.0 / 3.0;
    case 5: { const double r2 = u * u + v * v; return r2 <= 1.0 && r2 >= 0.25; }
    case 6: return au <= 1.0 - av / 2.0;
    case 7: return std::sqrt(au) + std::sqrt(av) <= 1.0;
    default: return false;
  }
}

/// A scene with its object list; the render is derived from it.
struct SceneDescription {
  std::array<double, 3> background{};
  std::vector<ShapeInstance> objects;
  std::vector<std::array<double, 3>> colors;
  std::uint64_t noise_seed = 0;
};

inline SceneDescription sample_scene(std::mt19937_64& rng, int num_classes, int size) {
  SceneDescription scene;
  for (auto& c : scene.background) c = detail::uniform(rng, 0.08, 0.45);
  const double bg_lum = (scene.background[0] + scene.background[1] + scene.background[2]) / 3.0;
  const int count = std::uniform_int_distribution<int>(1, 4)(rng);
  std::vector<Box> placed;
  for (int n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      ShapeInstance s;
      s.class_id = std::uniform_int_distribution<int>(0, num_classes - 1)(rng);
      s.width = detail::uniform(rng, 18.0, 44.0);
      s.height = s.width * detail::uniform(rng, 0.8, 1.25);
      s.height = std::min(s.height, 46.0);
      s.cx = detail::uniform(rng, s.width / 2 + 1, size - s.width / 2 - 1);
      s.cy = detail::uniform(rng, s.height / 2 + 1, size - s.height / 2 - 1);
      const Box b = s.analytic_box();
      if (std::any_of(placed.begin(), placed.end(), [&](const Box& o) { return iou(o, b) > 0.15; }))
        continue;
      std::array<double, 3> col{};
      do {
        for (auto& c : col) c = detail::uniform(rng, 0.35, 1.0);
      } while ((col[0] + col[1] + col[2]) / 3.0 - bg_lum < 0.2);
      placed.push_back(b);
      scene.objects.push_back(s);
      scene.colors.push_back(col);
      break;
    }
  }
  scene.noise_seed = rng();
  return scene;
}

/// 2x2 supersampled render on a lightly noisy flat background.
inline RgbImage render_scene(const SceneDescription& scene, int size) {
  std::vector<double> v(static_cast<std::size_t>(size) * size * 3);
  std::mt19937_64 noise_rng(scene.noise_seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (std::size_t p = 0; p < v.size() / 3; ++p) {
    const double n = noise(noise_rng);
    for (int c = 0; c < 3; ++c) v[p * 3 + c] = scene.background[c] + n;
  }
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const ShapeInstance& s = scene.objects[o];
    const Box b = s.analytic_box();
    const int x0 = std::max(0, static_cast<int>(std::floor(b.x1)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(b.x2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y1)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(b.y2)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        int hits = 0;
        for (double oy : {0.25, 0.75})
          for (double ox : {0.25, 0.75}) {
            const double u = (x + ox - s.cx) / (s.width / 2);
            const double w = (y + oy - s.cy) / (s.height / 2);
            hits += shape_contains(s.class_id, u, w);
          }
        if (!hits) continue;
        const double a = hits / 4.0;
        for (int c = 0; c < 3; ++c) {
          auto& px = v[(static_cast<std::size_t>(y) * size + x) * 3 + c];
          px = (1 - a) * px + a * scene.colors[o][c];
        }
      }
  }
  return detail::from_unit(v, size, size);
}

/// Source images with annotations, and target images drawn from the same
/// geometry distribution with the shift applied. Target annotations are kept
/// for evaluation; training code must only see strip_labels(target).
struct DomainPair {
  std::vector<AnnotatedImage> source;
  std::vector<AnnotatedImage> target;
  std::vector<SceneDescription> source_scenes;
  std::vector<SceneDescription> target_scenes;
};

inline void validate_benchmark_args(int num_source, int num_target, int num_classes,
                                    const ShiftConfig& shift) {
  if (num_source < 1) throw ConfigError("num_source: must be >= 1");
  if (num_target < 1) throw ConfigError("num_target: must be >= 1");
  if (num_classes < 1 || num_classes > kMaxClasses)
    throw ConfigError("K: must lie in [1, 8], got " + std::to_string(num_classes));
  shift.validate();
}

inline DomainPair generate_benchmark(int num_source, int num_target, int num_classes,
                                     const ShiftConfig& shift, std::uint64_t seed,
                                     const std::string& id_prefix = "",
                                     int image_size = kBenchmarkImageSize) {
  validate_benchmark_args(num_source, num_target, num_classes, shift);
  DomainPair out;
  auto make = [&](int n, std::uint64_t stream, char tag, bool shifted, auto& images, auto& scenes) {
    auto rng = detail::seeded_rng(seed, stream);
    for (int i = 0; i < n; ++i) {
      SceneDescription scene = sample_scene(rng, num_classes, image_size);
      AnnotatedImage rec;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%c%05d", tag, i);
      rec.image_id = id_prefix + buf;
      rec.image = render_scene(scene, image_size);
      if (shifted) rec.image = apply_shift(rec.image, shift, static_cast<std::uint64_t>(i));
      for (const auto& s : scene.objects) {
        rec.boxes.push_back(s.analytic_box());
        rec.class_ids.push_back(s.class_id);
      }
      images.push_back(std::move(rec));
      scenes.push_back(std::move(scene));
    }
  };
  make(num_source, 1, 's', false, out.source, out.source_scenes);
  make(num_target, 2, 't', true, out.target, out.target_scenes);
  return out;
}

inline std::vector<UnlabeledImage> strip_labels(const std::vector<AnnotatedImage>& images) {
  std::vector<UnlabeledImage> out;
  out.reserve(images.size());
  for (const auto& a : images) out.push_back({a.image_id, a.image});
  return out;
}

inline std::vector<std::string> default_class_names(int num_classes) {
  return {kShapeNames.begin(), kShapeNames.begin() + num_classes};
}

/// Packs a generated pair into a Dataset of the given split.
inline Dataset make_dataset(const DomainPair& pair, int num_classes, Split split) {
  Dataset ds;
  ds.manifest.num_classes = num_classes;
  ds.manifest.class_names = default_class_names(num_classes);
  ds.manifest.n_s = static_cast<int>(pair.source.size());
  ds.manifest.n_t = static_cast<int>(pair.target.size());
  ds.manifest.split = split;
  for (const auto& a : pair.source) ds.manifest.source_ids.push_back(a.image_id);
  for (const auto& a : pair.target) ds.manifest.target_ids.push_back(a.image_id);
  ds.source = pair.source;
  ds.target = strip_labels(pair.target);
  if (split == Split::test) ds.target_labels = pair.target;
  return ds;
}

/// FNV-1a over pixels, boxes and labels.
inline std::uint64_t content_hash(const std::vector<AnnotatedImage>& images) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& a : images) {
    mix(a.image_id.data(), a.image_id.size());
    mix(a.image.pixels.data(), a.image.pixels.size());
    for (const auto& b : a.boxes) mix(&b, sizeof b);
    mix(a.class_ids.data(), a.class_ids.size() * sizeof(int));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json annotation_json(const AnnotatedImage& a) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : a.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
  return {{"image_id", a.image_id}, {"boxes", boxes}, {"class_ids", a.class_ids}};
}

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& root, const Dataset& ds) {
  namespace fs = std::filesystem;
  ds.manifest.validate();
  fs::create_directories(root / "images");
  fs::create_directories(root / "annotations");
  detail::write_json_file(root / "manifest.json", ds.manifest);
  for (const auto& a : ds.source) {
    write_png((root / "images" / (a.image_id + ".png")).string(), a.image);
    detail::write_json_file(root / "annotations" / (a.image_id + ".json"), annotation_json(a));
  }
  for (const auto& t : ds.target) write_png((root / "images" / (t.image_id + ".png")).string(), t.image);
  if (ds.target_labels) {
    for (const auto& a : *ds.target_labels)
      detail::write_json_file(root / "annotations" / (a.image_id + ".json"), annotation_json(a));
  }
}

inline AnnotatedImage load_annotated(const std::filesystem::path& root, const std::string& id,
                                     int num_classes) {
  AnnotatedImage a;
  a.image_id = id;
  a.image = read_png((root / "images" / (id + ".png")).string());
  const auto j = detail::read_json_file(root / "annotations" / (id + ".json"));
  try {
    if (j.at("image_id").get<std::string>() != id)
      throw ValidationError(id + ": annotation image_id mismatch");
    for (const auto& b : j.at("boxes")) {
      if (b.size() != 4) throw ValidationError(id + ": box must have 4 coordinates");
      a.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
    a.class_ids = j.at("class_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(id + ": malformed annotation: " + e.what());
  }
  a.validate(num_classes);
  return a;
}

inline Dataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) throw ValidationError("missing manifest: " + manifest_path.string());
  Dataset ds;
  try {
    ds.manifest = detail::read_json_file(manifest_path).get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }
  ds.manifest.validate();
  const int k = ds.manifest.num_classes;
  for (const auto& id : ds.manifest.source_ids) ds.source.push_back(load_annotated(root, id, k));
  std::vector<AnnotatedImage> labels;
  for (const auto& id : ds.manifest.target_ids) {
    const bool annotated = fs::exists(root / "annotations" / (id + ".json"));
    if (annotated && ds.manifest.split == Split::train)
      throw ValidationError(id + ": target image of a train split must not carry annotations");
    if (!annotated && ds.manifest.split == Split::test)
      throw ValidationError(id + ": target image of a test split needs annotations");
    if (annotated) {
      labels.push_back(load_annotated(root, id, k));
      ds.target.push_back({id, labels.back().image});
    } else {
      ds.target.push_back({id, read_png((root / "images" / (id + ".png")).string())});
    }
  }
  if (ds.manifest.split == Split::test) ds.target_labels = std::move(labels);
  return ds;
}

// ---------------------------------------------------------------------------
// Paired batches

struct PairedBatch {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
};

/// One source batch and one target batch per step. Each domain follows its
/// own seeded permutation per epoch; the epoch length is set by the larger
/// domain and the smaller one is cycled. A trailing partial batch is kept.
class PairedBatchIterator {
 public:
  PairedBatchIterator(std::size_t num_source, std::size_t num_target, int batch_size,
                      std::uint64_t seed)
      : n_s_(num_source), n_t_(num_target), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (n_s_ == 0 || n_t_ == 0) throw ConfigError("batch iterator needs non-empty source and target");
  }

  std::size_t steps_per_epoch() const {
    const std::size_t longest = std::max(n_s_, n_t_);
    return (longest + batch_size_ - 1) / batch_size_;
  }

  std::vector<PairedBatch> epoch(std::uint64_t epoch_index) const {
    const auto ps = permutation(n_s_, epoch_index, 1);
    const auto pt = permutation(n_t_, epoch_index, 2);
    const std::size_t longest = std::max(n_s_, n_t_);
    std::vector<PairedBatch> out;
    for (std::size_t start = 0; start < longest; start += batch_size_) {
      PairedBatch b;
      for (std::size_t i = start; i < std::min(longest, start + batch_size_); ++i) {
        b.source.push_back(ps[i % n_s_]);
        b.target.push_back(pt[i % n_t_]);
      }
      out.push_back(std::move(b));
    }
    return out;
  }

 private:
  std::vector<std::size_t> permutation(std::size_t n, std::uint64_t epoch_index, std::uint64_t stream) const {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    auto rng = detail::seeded_rng(seed_, stream, epoch_index);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
  }

  std::size_t n_s_, n_t_;
  int batch_size_;
  std::uint64_t seed_;
};

}  // namespace mcar
