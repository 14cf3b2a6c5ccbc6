#include "refrec/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "refrec/errors.hpp"

namespace refrec {

bool is_valid(const Box& box) noexcept {
  const bool finite = std::isfinite(box.x1) && std::isfinite(box.y1) && std::isfinite(box.x2) &&
                      std::isfinite(box.y2);
  return finite && box.x1 >= 0.0 && box.y1 >= 0.0 && box.x1 < box.x2 && box.y1 < box.y2;
}

bool is_valid(const ImageDims& dims) noexcept { return dims.width >= 1 && dims.height >= 1; }

void validate(const Box& box) {
  if (!std::isfinite(box.x1) || !std::isfinite(box.y1) || !std::isfinite(box.x2) ||
      !std::isfinite(box.y2)) {
    throw InvalidInput("box has non-finite coordinates: " + to_string(box));
  }
  if (box.x1 < 0.0 || box.y1 < 0.0) {
    throw InvalidInput("box has negative coordinates: " + to_string(box));
  }
  if (!(box.x1 < box.x2) || !(box.y1 < box.y2)) {
    throw InvalidInput("box has non-positive width or height: " + to_string(box));
  }
}

void validate(const ImageDims& dims) {
  if (!is_valid(dims)) {
    throw InvalidInput("image dimensions must be positive, got " + std::to_string(dims.width) +
                       "x" + std::to_string(dims.height));
  }
}

bool contains(const ImageDims& dims, const Box& box) noexcept {
  return box.x1 >= 0.0 && box.y1 >= 0.0 && box.x2 <= dims.width && box.y2 <= dims.height;
}

double iou(const Box& a, const Box& b) {
  validate(a);
  validate(b);
  if (a == b) {
    return 1.0;
  }
  // Evaluate min/max in a fixed argument order so iou(a, b) == iou(b, a) bitwise.
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double area_ratio(const Box& box, const ImageDims& dims, BoundsMode mode) {
  validate(dims);
  validate(box);
  Box b = box;
  if (!contains(dims, box)) {
    if (mode == BoundsMode::kStrict) {
      throw InvalidInput("box " + to_string(box) + " exceeds image bounds " +
                         std::to_string(dims.width) + "x" + std::to_string(dims.height));
    }
    b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(dims.width));
    b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(dims.width));
    b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(dims.height));
    b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(dims.height));
    if (b.x2 <= b.x1 || b.y2 <= b.y1) {
      return 0.0;
    }
  }
  const double image_area = static_cast<double>(dims.width) * static_cast<double>(dims.height);
  return std::clamp(b.area() / image_area, 0.0, 1.0);
}

std::string to_string(const Box& box) {
  std::ostringstream os;
  os << '[' << box.x1 << ", " << box.y1 << ", " << box.x2 << ", " << box.y2 << ']';
  return os.str();
}

}  // namespace refrec
