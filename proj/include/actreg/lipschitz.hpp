#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "actreg/common.hpp"

namespace actreg {

enum class LinkKind { Identity, ReLU, Clip01Ramp, LBSmall, LBLarge, PiecewiseLinear };

// Continuous piecewise-linear link with f(0) = 0 held exactly.  Stored as
// sorted breakpoints t_1 < ... < t_k and k+1 slopes; values are integrals of
// the slope field anchored at the origin.  An optional offset supports links
// registered with f(0) != 0 (see shifted()).
class LipschitzFn {
 public:
  LipschitzFn() : kind_(LinkKind::Identity), breaks_(), slopes_{1.0} { finish(); }

  static LipschitzFn identity() { return LipschitzFn(LinkKind::Identity, {}, {1.0}); }
  static LipschitzFn relu() { return LipschitzFn(LinkKind::ReLU, {0.0}, {0.0, 1.0}); }
  static LipschitzFn clip01_ramp() {
    return LipschitzFn(LinkKind::Clip01Ramp, {0.0, 1.0}, {0.0, 1.0, 0.0});
  }
  // flat at 2 left of -6, slope -1 down to 0 at -4, flat to the origin, then slope 1/2
  static LipschitzFn lb_small() {
    return LipschitzFn(LinkKind::LBSmall, {-6.0, -4.0, 0.0}, {0.0, -1.0, 0.0, 0.5});
  }
  // ramp clamped to [0, 1]
  static LipschitzFn lb_large() {
    return LipschitzFn(LinkKind::LBLarge, {0.0, 1.0}, {0.0, 1.0, 0.0});
  }
  static LipschitzFn piecewise_linear(std::vector<double> breakpoints,
                                      std::vector<double> slopes) {
    if (slopes.size() != breakpoints.size() + 1)
      throw InvalidInput("piecewise_linear: need one more slope than breakpoints");
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end()))
      throw InvalidInput("piecewise_linear: breakpoints must be sorted");
    return LipschitzFn(LinkKind::PiecewiseLinear, std::move(breakpoints), std::move(slopes));
  }

  // the link x -> f(x) - c, recording c so callers can shift b to match
  static LipschitzFn shifted(const LipschitzFn& f, double c) {
    LipschitzFn g = f;
    g.offset_ -= c;
    g.b_shift_ = c;
    return g;
  }

  LinkKind kind() const { return kind_; }
  double lipschitz_constant() const { return L_; }
  double b_shift() const { return b_shift_; }

  double operator()(double x) const { return eval(x); }

  double eval(double x) const {
    if (x == 0.0) return offset_;
    std::size_t seg = segment(x);
    return anchors_[seg] + slopes_[seg] * (x - anchor_x_[seg]) + offset_;
  }

  Vector eval_vec(const Vector& u) const {
    Vector out(u.size());
    for (Index i = 0; i < u.size(); ++i) out[i] = eval(u[i]);
    return out;
  }

  // one-sided slopes averaged at breakpoints
  double subgradient(double x) const {
    for (std::size_t j = 0; j < breaks_.size(); ++j)
      if (x == breaks_[j]) return 0.5 * (slopes_[j] + slopes_[j + 1]);
    return slopes_[segment(x)];
  }

  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& slopes() const { return slopes_; }

  std::string name() const {
    switch (kind_) {
      case LinkKind::Identity: return "identity";
      case LinkKind::ReLU: return "relu";
      case LinkKind::Clip01Ramp: return "clip";
      case LinkKind::LBSmall: return "lb-small";
      case LinkKind::LBLarge: return "lb-large";
      case LinkKind::PiecewiseLinear: return "piecewise";
    }
    return "unknown";
  }

  static LipschitzFn from_name(const std::string& s) {
    if (s == "identity") return identity();
    if (s == "relu") return relu();
    if (s == "clip") return clip01_ramp();
    if (s == "lb-small") return lb_small();
    if (s == "lb-large") return lb_large();
    throw InvalidInput("unknown link function: " + s);
  }

 private:
  LipschitzFn(LinkKind kind, std::vector<double> breaks, std::vector<double> slopes)
      : kind_(kind), breaks_(std::move(breaks)), slopes_(std::move(slopes)) {
    finish();
  }

  // precompute segment anchor points and values so eval is a scan plus one fma
  void finish() {
    L_ = 0.0;
    for (double s : slopes_) L_ = std::max(L_, std::fabs(s));
    std::size_t nseg = slopes_.size();
    anchor_x_.assign(nseg, 0.0);
    anchors_.assign(nseg, 0.0);
    std::size_t seg0 = segment(0.0);
    anchor_x_[seg0] = 0.0;
    anchors_[seg0] = 0.0;
    for (std::size_t j = seg0; j + 1 < nseg; ++j) {
      double t = breaks_[j];
      anchors_[j + 1] = anchors_[j] + slopes_[j] * (t - anchor_x_[j]);
      anchor_x_[j + 1] = t;
    }
    for (std::size_t j = seg0; j > 0; --j) {
      double t = breaks_[j - 1];
      anchors_[j - 1] = anchors_[j] + slopes_[j] * (t - anchor_x_[j]);
      anchor_x_[j - 1] = t;
    }
  }

  // index of the open segment containing x; breakpoints go to the right segment
  std::size_t segment(double x) const {
    std::size_t j = 0;
    while (j < breaks_.size() && x >= breaks_[j]) ++j;
    return j;
  }

  LinkKind kind_;
  std::vector<double> breaks_;
  std::vector<double> slopes_;
  std::vector<double> anchor_x_;
  std::vector<double> anchors_;
  double L_ = 0.0;
  double offset_ = 0.0;
  double b_shift_ = 0.0;
};

}  // namespace actreg
