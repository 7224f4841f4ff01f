// mcar/geometry.hpp

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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace mcar {

/// Axis-aligned box in pixel coordinates, (x1, y1) top-left, (x2, y2) bottom-right.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const noexcept { return 0.5 * (x1 + x2); }
  double cy() const noexcept { return 0.5 * (y1 + y2); }
  bool valid() const noexcept { return x1 < x2 && y1 < y2; }

  bool inside(double img_w, double img_h) const noexcept {
    return x1 >= 0 && y1 >= 0 && x2 <= img_w && y2 <= img_h;
  }

  Box clipped(double img_w, double img_h) const noexcept {
    return {std::clamp(x1, 0.0, img_w), std::clamp(y1, 0.0, img_h), std::clamp(x2, 0.0, img_w),
            std::clamp(y2, 0.0, img_h)};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection over union; 0 when either box is empty.
inline double iou(const Box& a, const Box& b) noexcept {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Faster R-CNN box parameterization (dx, dy, dw, dh) relative to a reference box.
struct BoxCoder {
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
  double max_log_scale = std::log(1000.0 / 16.0);

  std::array<double, 4> encode(const Box& ref, const Box& target) const noexcept {
    return {weights[0] * (target.cx() - ref.cx()) / ref.width(),
            weights[1] * (target.cy() - ref.cy()) / ref.height(),
            weights[2] * std::log(target.width() / ref.width()),
            weights[3] * std::log(target.height() / ref.height())};
  }

  Box decode(const Box& ref, const std::array<double, 4>& d) const noexcept {
    const double dw = std::min(d[2] / weights[2], max_log_scale);
    const double dh = std::min(d[3] / weights[3], max_log_scale);
    const double cx = ref.cx() + d[0] / weights[0] * ref.width();
    const double cy = ref.cy() + d[1] / weights[1] * ref.height();
    const double w = ref.width() * std::exp(dw);
    const double h = ref.height() * std::exp(dh);
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
};

}  // namespace mcar
