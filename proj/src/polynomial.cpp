#include "usspine/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace usspine {

namespace {

double bisect(const Polynomial& p, double a, double b, double fa) {
  for (int it = 0; it < 2000; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    const double fm = p(m);
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

// Rounding-error bound for Horner evaluation at x.
double eval_tolerance(const std::vector<double>& c, double x) {
  double acc = 0.0, xp = 1.0;
  for (double ck : c) {
    acc += std::abs(ck) * xp;
    xp *= std::abs(x);
  }
  return 64.0 * std::numeric_limits<double>::epsilon() * acc;
}

void sort_unique(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::vector<double> isolate(const Polynomial& p, double lo, double hi, bool include_touching) {
  std::vector<double> roots;
  const int d = p.degree();
  if (d <= 0 || !(lo <= hi)) return roots;
  const auto& c = p.coeffs();
  if (d == 1) {
    const double r = -c[0] / c[1];
    if (r >= lo && r <= hi) roots.push_back(r);
    return roots;
  }
  std::vector<double> crit = isolate(p.derivative(), lo, hi, true);
  std::vector<double> knots;
  knots.push_back(lo);
  for (double x : crit) {
    if (x > lo && x < hi) knots.push_back(x);
  }
  knots.push_back(hi);
  sort_unique(knots);

  for (std::size_t i = 0; i < knots.size(); ++i) {
    const double x = knots[i];
    const double fx = p(x);
    if (fx == 0.0 || (include_touching && i > 0 && i + 1 < knots.size() && std::abs(fx) <= eval_tolerance(c, x))) {
      roots.push_back(x);
    }
  }
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i], b = knots[i + 1];
    const double fa = p(a), fb = p(b);
    if (fa != 0.0 && fb != 0.0 && ((fa < 0.0) != (fb < 0.0))) roots.push_back(bisect(p, a, b, fa));
  }
  sort_unique(roots);
  return roots;
}

}  // namespace

Polynomial::Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) {
  for (double v : c_) {
    if (!std::isfinite(v)) throw std::invalid_argument("Polynomial: non-finite coefficient");
  }
}

int Polynomial::degree() const {
  for (int i = static_cast<int>(c_.size()) - 1; i >= 0; --i) {
    if (c_[static_cast<std::size_t>(i)] != 0.0) return i;
  }
  return -1;
}

double Polynomial::operator()(double x) const {
  double acc = 0.0;
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Polynomial Polynomial::derivative() const {
  if (c_.size() <= 1) return Polynomial({0.0});
  std::vector<double> d(c_.size() - 1);
  for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = static_cast<double>(k) * c_[k];
  return Polynomial(std::move(d));
}

Polynomial Polynomial::compose_affine(double a, double b) const {
  // Horner in polynomial arithmetic: q = (...(c_n)(a x + b) + c_{n-1})...
  std::vector<double> q{0.0};
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) {
    std::vector<double> next(q.size() + 1, 0.0);
    for (std::size_t k = 0; k < q.size(); ++k) {
      next[k] += b * q[k];
      next[k + 1] += a * q[k];
    }
    next[0] += *it;
    q = std::move(next);
  }
  q.resize(std::max<std::size_t>(c_.size(), 1));
  return Polynomial(std::move(q));
}

std::vector<double> Polynomial::roots_in(double lo, double hi) const { return isolate(*this, lo, hi, true); }

std::vector<double> Polynomial::sign_changes_in(double lo, double hi) const {
  std::vector<double> roots;
  for (double r : isolate(*this, lo, hi, false)) {
    if (r <= lo || r >= hi) continue;
    // Exact zeros found at knots may be touching roots; keep sign changes only.
    const double h = 1e-7 * std::max(1.0, std::abs(r));
    const double left = (*this)(std::max(lo, r - h)), right = (*this)(std::min(hi, r + h));
    if (left == 0.0 || right == 0.0 || ((left < 0.0) != (right < 0.0))) roots.push_back(r);
  }
  return roots;
}

std::vector<double> Polynomial::real_roots() const {
  const int d = degree();
  if (d <= 0) return {};
  double bound = 0.0;
  for (int k = 0; k < d; ++k) bound = std::max(bound, std::abs(c_[static_cast<std::size_t>(k)] / c_[static_cast<std::size_t>(d)]));
  bound += 1.0;
  return roots_in(-bound, bound);
}

std::vector<AngleSegment> tangent_angle_segments(std::vector<double> boundaries,
                                                 const std::function<double(double)>& tangent_angle_deg,
                                                 double merge_below_deg) {
  if (boundaries.size() < 2) throw std::invalid_argument("tangent_angle_segments: need at least two boundaries");
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (!(boundaries[i] > boundaries[i - 1])) {
      throw std::invalid_argument("tangent_angle_segments: boundaries must be strictly increasing");
    }
  }
  std::vector<double> angle_at(boundaries.size());
  for (std::size_t i = 0; i < boundaries.size(); ++i) angle_at[i] = tangent_angle_deg(boundaries[i]);

  auto build = [&]() {
    std::vector<AngleSegment> segs;
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
      segs.push_back({boundaries[i], boundaries[i + 1], std::abs(angle_at[i] - angle_at[i + 1])});
    }
    return segs;
  };

  std::vector<AngleSegment> segs = build();
  while (segs.size() > 1) {
    std::size_t m = 0;
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (segs[i].degrees < segs[m].degrees) m = i;
    }
    if (!(segs[m].degrees < merge_below_deg)) break;
    std::size_t drop;  // index into boundaries
    if (m == 0) {
      drop = 1;
    } else if (m + 1 == segs.size()) {
      drop = m;
    } else {
      drop = segs[m - 1].degrees <= segs[m + 1].degrees ? m : m + 1;
    }
    boundaries.erase(boundaries.begin() + static_cast<std::ptrdiff_t>(drop));
    angle_at.erase(angle_at.begin() + static_cast<std::ptrdiff_t>(drop));
    segs = build();
  }
  return segs;
}

}  // namespace usspine
