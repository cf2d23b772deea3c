#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "astod/error.hpp"

namespace astod {

/// Axis-aligned box in continuous pixel coordinates, corner form.
/// Edges are not pixel-inclusive: a box from 0 to 2 is 2 pixels wide.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  constexpr double width() const noexcept { return x2 - x1; }
  constexpr double height() const noexcept { return y2 - y1; }
  constexpr double area() const noexcept { return width() * height(); }

  bool valid() const noexcept {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 < x2 && y1 < y2;
  }

  static constexpr Box from_xywh(double x, double y, double w, double h) noexcept {
    return Box{x, y, x + w, y + h};
  }

  constexpr std::array<double, 4> to_xywh() const noexcept {
    return {x1, y1, width(), height()};
  }

  friend constexpr bool operator==(const Box&, const Box&) = default;
};

struct ImageDims {
  double width = 0.0;
  double height = 0.0;

  bool valid() const noexcept { return width > 0.0 && height > 0.0; }
};

inline double intersection_area(const Box& a, const Box& b) noexcept {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const Box& a, const Box& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

/// Clips a box to [0, width] x [0, height]. The result may be degenerate
/// when the box lies entirely outside the image.
inline Box clip(const Box& b, const ImageDims& dims) noexcept {
  return Box{std::clamp(b.x1, 0.0, dims.width), std::clamp(b.y1, 0.0, dims.height),
             std::clamp(b.x2, 0.0, dims.width), std::clamp(b.y2, 0.0, dims.height)};
}

enum class ViewKind { kIdentity, kHFlip, kScale, kHFlipScale };

inline constexpr std::array<ViewKind, 4> kAllViewKinds = {
    ViewKind::kIdentity, ViewKind::kHFlip, ViewKind::kScale, ViewKind::kHFlipScale};

inline constexpr double kDefaultScaleFactor = 2.0;

/// One of the inference views together with its scale factor. The factor is
/// ignored by Identity and HFlip.
struct ViewSpec {
  ViewKind kind = ViewKind::kIdentity;
  double factor = kDefaultScaleFactor;

  constexpr bool flips() const noexcept {
    return kind == ViewKind::kHFlip || kind == ViewKind::kHFlipScale;
  }
  constexpr bool scales() const noexcept {
    return kind == ViewKind::kScale || kind == ViewKind::kHFlipScale;
  }

  static constexpr ViewSpec identity() noexcept { return {ViewKind::kIdentity, 1.0}; }
  static constexpr ViewSpec hflip() noexcept { return {ViewKind::kHFlip, 1.0}; }
  static constexpr ViewSpec scale(double f = kDefaultScaleFactor) noexcept {
    return {ViewKind::kScale, f};
  }
  static constexpr ViewSpec hflip_scale(double f = kDefaultScaleFactor) noexcept {
    return {ViewKind::kHFlipScale, f};
  }

  static ViewSpec of(ViewKind kind, double f = kDefaultScaleFactor) {
    if (!(f > 0.0) || !std::isfinite(f)) {
      throw ConfigError("view scale factor must be positive, got " + std::to_string(f));
    }
    return ViewSpec{kind, f};
  }

  friend constexpr bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

constexpr std::string_view view_tag(ViewKind kind) noexcept {
  switch (kind) {
    case ViewKind::kIdentity: return "identity";
    case ViewKind::kHFlip: return "hflip";
    case ViewKind::kScale: return "scale";
    case ViewKind::kHFlipScale: return "hflip_scale";
  }
  return "identity";
}

inline ViewKind parse_view_tag(std::string_view tag) {
  for (ViewKind k : kAllViewKinds) {
    if (view_tag(k) == tag) return k;
  }
  throw UnknownView(std::string(tag));
}

/// Maps a box from the original image frame into the frame of view `v`.
/// `dims` are always the original image dimensions.
inline Box apply_view(const Box& b, const ViewSpec& v, const ImageDims& dims) noexcept {
  Box out = b;
  if (v.flips()) {
    out.x1 = dims.width - b.x2;
    out.x2 = dims.width - b.x1;
  }
  if (v.scales()) {
    out.x1 *= v.factor;
    out.y1 *= v.factor;
    out.x2 *= v.factor;
    out.y2 *= v.factor;
  }
  return out;
}

/// Inverse of apply_view: maps a box from view `v` back to the original frame.
inline Box invert_view(const Box& b, const ViewSpec& v, const ImageDims& dims) noexcept {
  Box out = b;
  if (v.scales()) {
    out.x1 /= v.factor;
    out.y1 /= v.factor;
    out.x2 /= v.factor;
    out.y2 /= v.factor;
  }
  if (v.flips()) {
    const double x1 = dims.width - out.x2;
    const double x2 = dims.width - out.x1;
    out.x1 = x1;
    out.x2 = x2;
  }
  return out;
}

}  // namespace astod
