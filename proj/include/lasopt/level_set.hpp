#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

#include "lasopt/types.hpp"

namespace lasopt {

// Scan region described as the sublevel set {g <= 0} of a C^3 function with
// nonvanishing gradient on {g = 0}. The built-in families satisfy this by
// construction; custom callbacks are accepted as-is.
class LevelSetRegion {
 public:
  using ValueFn = std::function<double(const Vec2&)>;
  using GradFn = std::function<Vec2(const Vec2&)>;
  using HessFn = std::function<Mat2(const Vec2&)>;

  static LevelSetRegion disk(const Vec2& center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("disk radius must be positive");
    LevelSetRegion r;
    r.value_ = [center, radius](const Vec2& x) {
      return (x - center).squaredNorm() - radius * radius;
    };
    r.grad_ = [center](const Vec2& x) { return Vec2(2.0 * (x - center)); };
    r.hess_ = [](const Vec2&) { return Mat2(2.0 * Mat2::Identity()); };
    r.scale_ = radius * radius;
    r.anchor_ = center;
    r.convex_ = true;
    return r;
  }

  // Axis-aligned superellipse ((x-c0)/a)^m + ((y-c1)/b)^m - 1 with even
  // degree m >= 4, which keeps g in C^3.
  static LevelSetRegion superellipse(const Vec2& center, const Vec2& semi_axes,
                                     int degree) {
    if (degree < 4 || degree % 2 != 0)
      throw std::invalid_argument("superellipse degree must be even and >= 4");
    if (!(semi_axes.x() > 0.0) || !(semi_axes.y() > 0.0))
      throw std::invalid_argument("superellipse semi-axes must be positive");
    LevelSetRegion r;
    const double a = semi_axes.x(), b = semi_axes.y();
    const int m = degree;
    r.value_ = [center, a, b, m](const Vec2& x) {
      return std::pow((x.x() - center.x()) / a, m) +
             std::pow((x.y() - center.y()) / b, m) - 1.0;
    };
    r.grad_ = [center, a, b, m](const Vec2& x) {
      Vec2 g;
      g.x() = m / a * std::pow((x.x() - center.x()) / a, m - 1);
      g.y() = m / b * std::pow((x.y() - center.y()) / b, m - 1);
      return g;
    };
    r.hess_ = [center, a, b, m](const Vec2& x) {
      Mat2 h = Mat2::Zero();
      h(0, 0) = m * (m - 1) / (a * a) * std::pow((x.x() - center.x()) / a, m - 2);
      h(1, 1) = m * (m - 1) / (b * b) * std::pow((x.y() - center.y()) / b, m - 2);
      return h;
    };
    r.scale_ = 1.0;
    r.anchor_ = center;
    r.convex_ = true;
    return r;
  }

  static LevelSetRegion custom(ValueFn g, GradFn grad, HessFn hess,
                               const Vec2& interior_anchor, double scale = 1.0) {
    LevelSetRegion r;
    r.value_ = std::move(g);
    r.grad_ = std::move(grad);
    r.hess_ = std::move(hess);
    r.scale_ = scale;
    r.anchor_ = interior_anchor;
    r.convex_ = false;
    return r;
  }

  double value(const Vec2& x) const { return value_(x); }
  Vec2 gradient(const Vec2& x) const { return grad_(x); }
  Mat2 hessian(const Vec2& x) const { return hess_(x); }

  // Characteristic magnitude of g near the boundary; used to set active-set
  // tolerances.
  double scale() const { return scale_; }
  bool convex() const { return convex_; }
  const Vec2& anchor() const { return anchor_; }

  bool contains(const Vec2& x, double slack = 0.0) const {
    return value_(x) <= slack;
  }

  // Retract a point to {g <= -margin} along the segment to the interior
  // anchor. Exact for the anchor itself; bisection otherwise.
  Vec2 project_inside(const Vec2& x, double margin = 0.0) const {
    if (value_(x) <= -margin) return x;
    Vec2 lo = anchor_, hi = x;
    if (value_(lo) > -margin) return lo;  // degenerate anchor, nothing better
    for (int it = 0; it < 80; ++it) {
      Vec2 mid = 0.5 * (lo + hi);
      if (value_(mid) <= -margin)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  }

 private:
  LevelSetRegion() = default;
  ValueFn value_;
  GradFn grad_;
  HessFn hess_;
  double scale_{1.0};
  Vec2 anchor_{Vec2::Zero()};
  bool convex_{false};
};

}  // namespace lasopt
