#pragma once

#include <string>

namespace cycleground::metrics {

/// Axis-aligned box in normalized image coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  /// Throws ValidationError unless x1 < x2 and y1 < y2 (all finite).
  void validate() const;
  std::string str() const;

  friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

}  // namespace cycleground::metrics
