#include "cycleground/metrics/box.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cycleground/errors.hpp"

namespace cycleground::metrics {

void Box::validate() const {
  const bool finite = std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2);
  if (!finite || !(x1 < x2) || !(y1 < y2)) {
    throw ValidationError("degenerate box " + str());
  }
}

std::string Box::str() const {
  std::ostringstream os;
  os << "(" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << ")";
  return os.str();
}

double iou(const Box& a, const Box& b) {
  a.validate();
  b.validate();
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace cycleground::metrics
