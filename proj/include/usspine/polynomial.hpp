#pragma once

#include <functional>
#include <vector>

namespace usspine {

/// Dense polynomial with ascending coefficients c0 + c1 x + ...
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coeffs);

  const std::vector<double>& coeffs() const { return c_; }
  /// Index of the highest nonzero coefficient; -1 for the zero polynomial.
  int degree() const;

  double operator()(double x) const;
  Polynomial derivative() const;

  /// q(x) = p(a x + b).
  Polynomial compose_affine(double a, double b) const;

  /// Sorted real roots in [lo, hi]. Sign-changing roots are bracketed on
  /// monotone pieces and bisected to machine precision; even-multiplicity
  /// roots are reported only when they coincide with a critical point at
  /// which the value is zero to working precision.
  std::vector<double> roots_in(double lo, double hi) const;

  /// Sign-changing roots strictly inside (lo, hi).
  std::vector<double> sign_changes_in(double lo, double hi) const;

  /// All real roots, bracketed by the Cauchy bound.
  std::vector<double> real_roots() const;

 private:
  std::vector<double> c_;
};

/// One curve segment between consecutive boundaries and its tangent-angle
/// change in degrees.
struct AngleSegment {
  double start = 0.0;
  double end = 0.0;
  double degrees = 0.0;
};

/// Builds segments over consecutive boundaries. While more than one segment
/// remains and the smallest angle is below merge_below_deg, that segment is
/// merged into its smaller neighbour (edges merge inward).
std::vector<AngleSegment> tangent_angle_segments(std::vector<double> boundaries,
                                                 const std::function<double(double)>& tangent_angle_deg,
                                                 double merge_below_deg);

}  // namespace usspine
