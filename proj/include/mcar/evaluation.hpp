// mcar/evaluation.hpp

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

// mAP@0.5 with VOC-style greedy matching and all-points interpolation,
// embedding export and a logistic domain probe.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mcar/data.hpp"
#include "mcar/model.hpp"

namespace mcar {

/// One scored detection of a single class, located by image and rank within
/// that image's output.
struct RankedDetection {
  int image = 0;
  int index = 0;
  Box box;
  double score = 0.0;
};

/// Area under the all-points interpolated precision/recall curve.
/// `gt[i]` lists the ground-truth boxes of the class in image i. Detections
/// are ranked by score, ties by image then index; each goes to its highest-IoU
/// ground truth and counts as a hit if that box is still unmatched and the IoU
/// reaches the threshold. Returns 0 when there is no ground truth.
inline double average_precision(std::vector<RankedDetection> dets, const std::vector<std::vector<Box>>& gt,
                                double iou_threshold = 0.5) {
  std::size_t num_gt = 0;
  for (const auto& g : gt) num_gt += g.size();
  if (num_gt == 0) return 0.0;
  std::stable_sort(dets.begin(), dets.end(), [](const RankedDetection& a, const RankedDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  std::vector<std::vector<bool>> used(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) used[i].assign(gt[i].size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& d : dets) {
    bool hit = false;
    if (d.image >= 0 && static_cast<std::size_t>(d.image) < gt.size()) {
      const auto& boxes = gt[d.image];
      int best = -1;
      double best_iou = -1;
      for (std::size_t j = 0; j < boxes.size(); ++j) {
        const double v = iou(d.box, boxes[j]);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0 && best_iou >= iou_threshold && !used[d.image][best]) {
        used[d.image][best] = true;
        hit = true;
      }
    }
    hit ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }

  // Precision envelope, then sum over recall steps.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

struct EvalResult {
  int num_classes = 0;
  /// Only classes with at least one ground-truth instance.
  std::map<int, double> per_class_ap;
  std::vector<int> excluded_classes;
  std::vector<int> detection_counts;
  std::vector<int> gt_counts;
  double map50 = 0.0;
  double iou_threshold = 0.5;
};

inline nlohmann::json to_json(const EvalResult& r, const std::vector<std::string>& class_names = {}) {
  auto name = [&](int c) {
    return c < static_cast<int>(class_names.size()) ? class_names[c] : std::to_string(c);
  };
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, ap] : r.per_class_ap) per_class[name(c)] = ap;
  nlohmann::json counts = nlohmann::json::object();
  for (int c = 0; c < r.num_classes; ++c)
    counts[name(c)] = {{"detections", r.detection_counts[c]}, {"ground_truth", r.gt_counts[c]}};
  nlohmann::json excluded = nlohmann::json::array();
  for (int c : r.excluded_classes) excluded.push_back(name(c));
  return {{"map50", r.map50},
          {"iou_threshold", r.iou_threshold},
          {"per_class_ap", per_class},
          {"counts", counts},
          {"excluded_classes", excluded}};
}

/// Scores per-image detections against annotated images.
inline EvalResult evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                                      const std::vector<AnnotatedImage>& images, int num_classes,
                                      double iou_threshold = 0.5) {
  if (detections.size() != images.size())
    throw ContractError("evaluate_detections: one detection list per image is required");
  EvalResult r;
  r.num_classes = num_classes;
  r.iou_threshold = iou_threshold;
  r.detection_counts.assign(num_classes, 0);
  r.gt_counts.assign(num_classes, 0);
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::vector<Box>> gt(images.size());
    for (std::size_t i = 0; i < images.size(); ++i)
      for (std::size_t j = 0; j < images[i].boxes.size(); ++j)
        if (images[i].class_ids[j] == c) gt[i].push_back(images[i].boxes[j]);
    std::vector<RankedDetection> dets;
    for (std::size_t i = 0; i < detections.size(); ++i)
      for (std::size_t j = 0; j < detections[i].size(); ++j) {
        const auto& d = detections[i][j];
        if (d.class_id < 0 || d.class_id >= num_classes)
          throw ConfigError("detection class id " + std::to_string(d.class_id) + " outside [0, K)");
        if (d.class_id == c) dets.push_back({static_cast<int>(i), static_cast<int>(j), d.box, d.score});
      }
    for (const auto& g : gt) r.gt_counts[c] += static_cast<int>(g.size());
    r.detection_counts[c] = static_cast<int>(dets.size());
    if (r.gt_counts[c] == 0) {
      r.excluded_classes.push_back(c);
      continue;
    }
    const double ap = average_precision(std::move(dets), gt, iou_threshold);
    r.per_class_ap[c] = ap;
    sum += ap;
  }
  r.map50 = r.per_class_ap.empty() ? 0.0 : sum / static_cast<double>(r.per_class_ap.size());
  return r;
}

template <typename T>
std::vector<std::vector<Detection>> run_detector(MCARModel<T>& model, const std::vector<AnnotatedImage>& images) {
  std::vector<std::vector<Detection>> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(model.detect(img.image.to_tensor<T>()));
  return out;
}

/// Inference + NMS over `images`, then per-class AP and mAP.
template <typename T>
EvalResult evaluate(MCARModel<T>& model, const std::vector<AnnotatedImage>& images, int dataset_classes) {
  if (dataset_classes != model.num_classes())
    throw ConfigError("K mismatch: model has K=" + std::to_string(model.num_classes()) + ", dataset has K=" +
                      std::to_string(dataset_classes));
  return evaluate_detections(run_detector(model, images), images, model.num_classes());
}

inline nlohmann::json detections_json(const std::vector<std::vector<Detection>>& dets,
                                      const std::vector<AnnotatedImage>& images) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (const auto& d : dets[i])
      out.push_back({{"image_id", images[i].image_id},
                     {"class_id", d.class_id},
                     {"score", d.score},
                     {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}});
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingRow {
  std::string image_id;
  Domain domain = Domain::source;
  std::vector<double> g;
};

template <typename T, typename SourceRange, typename TargetRange>
std::vector<EmbeddingRow> export_embeddings(MCARModel<T>& model, const SourceRange& source,
                                            const TargetRange& target) {
  std::vector<EmbeddingRow> rows;
  for (const auto& img : source) rows.push_back({img.image_id, Domain::source, model.embedding(img.image.template to_tensor<T>())});
  for (const auto& img : target) rows.push_back({img.image_id, Domain::target, model.embedding(img.image.template to_tensor<T>())});
  return rows;
}

inline void write_embeddings_csv(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const std::size_t d = rows.empty() ? 0 : rows.front().g.size();
  out << "image_id,domain";
  for (std::size_t j = 0; j < d; ++j) out << ",g_" << j;
  out << '\n';
  out.precision(9);
  for (const auto& r : rows) {
    out << r.image_id << ',' << to_string(r.domain);
    for (double v : r.g) out << ',' << v;
    out << '\n';
  }
}

inline std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<EmbeddingRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      cells.push_back(line.substr(start, pos - start));
    cells.push_back(line.substr(start));
    if (cells.size() < 2) throw InputError("malformed embeddings row: " + line);
    EmbeddingRow r{cells[0], cells[1] == "source" ? Domain::source : Domain::target, {}};
    for (std::size_t j = 2; j < cells.size(); ++j) r.g.push_back(std::stod(cells[j]));
    rows.push_back(std::move(r));
  }
  return rows;
}

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  int train_size = 0;
  int test_size = 0;
};

/// Logistic-regression domain classifier on standardized embeddings. Rows are
/// split per domain into a training half and a held-out half with a seeded
/// shuffle; the reported accuracy is on the held-out half.
inline ProbeResult linear_domain_probe(const std::vector<EmbeddingRow>& rows, std::uint64_t seed = 0,
                                       int iterations = 500, double l2 = 1e-3) {
  if (rows.empty()) throw ContractError("linear_domain_probe: no rows");
  const std::size_t d = rows.front().g.size();
  std::vector<int> src, tgt;
  for (std::size_t i = 0; i < rows.size(); ++i) (rows[i].domain == Domain::source ? src : tgt).push_back(static_cast<int>(i));
  if (src.size() < 2 || tgt.size() < 2) throw ContractError("linear_domain_probe: needs >= 2 rows per domain");
  std::mt19937_64 rng(seed);
  std::shuffle(src.begin(), src.end(), rng);
  std::shuffle(tgt.begin(), tgt.end(), rng);
  std::vector<int> train, test;
  for (const auto* v : {&src, &tgt})
    for (std::size_t i = 0; i < v->size(); ++i) (i < v->size() / 2 ? train : test).push_back((*v)[i]);

  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (int i : train)
    for (std::size_t j = 0; j < d; ++j) mean[j] += rows[i].g[j];
  for (auto& m : mean) m /= static_cast<double>(train.size());
  for (int i : train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (rows[i].g[j] - mean[j]) * (rows[i].g[j] - mean[j]);
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-8;
  auto feature = [&](int i, std::size_t j) { return (rows[i].g[j] - mean[j]) / sd[j]; };

  // Full-batch gradient descent; the loss is convex so a fixed step converges.
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  const double step = 0.5;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (int i : train) {
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * feature(i, j);
      const double y = rows[i].domain == Domain::source ? 1.0 : 0.0;
      const double e = 1.0 / (1.0 + std::exp(-z)) - y;
      for (std::size_t j = 0; j < d; ++j) gw[j] += e * feature(i, j);
      gb += e;
    }
    const double n = static_cast<double>(train.size());
    for (std::size_t j = 0; j < d; ++j) w[j] -= step * (gw[j] / n + l2 * w[j]);
    b -= step * gb / n;
  }
  auto accuracy = [&](const std::vector<int>& idx) {
    int hits = 0;
    for (int i : idx) {
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * feature(i, j);
      hits += (z > 0) == (rows[i].domain == Domain::source);
    }
    return static_cast<double>(hits) / static_cast<double>(idx.size());
  };
  return {accuracy(train), accuracy(test), static_cast<int>(train.size()), static_cast<int>(test.size())};
}

}  // namespace mcar
