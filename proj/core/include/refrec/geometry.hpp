#pragma once

#include <string>

namespace refrec {

/// Axis-aligned box in absolute pixel coordinates (top-left origin, y down).
/// A valid box has finite, non-negative coordinates and strictly positive
/// width and height.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

struct ImageDims {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

enum class BoundsMode {
  kStrict,   // out-of-image boxes are rejected
  kLenient,  // out-of-image boxes are clamped first
};

bool is_valid(const Box& box) noexcept;
bool is_valid(const ImageDims& dims) noexcept;

/// Throws InvalidInput naming the violated invariant.
void validate(const Box& box);
void validate(const ImageDims& dims);

bool contains(const ImageDims& dims, const Box& box) noexcept;

/// Intersection over union of two valid boxes. Symmetric; 0 when disjoint and
/// exactly 1 for identical boxes.
double iou(const Box& a, const Box& b);

/// Fraction of the image covered by `box`, in [0, 1].
double area_ratio(const Box& box, const ImageDims& dims, BoundsMode mode = BoundsMode::kStrict);

std::string to_string(const Box& box);

}  // namespace refrec
