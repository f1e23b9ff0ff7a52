#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace msmt {

// Node counts are per Gauss-Legendre panel. `inner_nodes` drives cumulative
// hazards, `outer_nodes` the occupancy and length-of-stay integrals.
struct QuadratureConfig {
  int inner_nodes = 30;
  int outer_nodes = 30;
  // Smallest time used where a caller needs to step off t = 0.
  double time_epsilon = 1e-12;
};

class GaussLegendre {
 public:
  explicit GaussLegendre(int n);

  // Shared, lazily built rule; safe to call from concurrent workers.
  static const GaussLegendre& rule(int n);

  int size() const { return static_cast<int>(nodes_.size()); }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }

  // Calls visit(x, w) for each node of the rule mapped onto [a, b].
  template <class V>
  void for_each_node(V&& visit, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < nodes_.size(); ++i) visit(mid + half * nodes_[i], half * weights_[i]);
  }

  template <class F>
  double integrate(F&& f, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      sum += weights_[i] * f(mid + half * nodes_[i]);
    }
    return half * sum;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

// Panel boundaries for a composite rule on [a, b] (0 <= a < b) whose only
// singularity sits at the origin: panels shrink geometrically toward a by
// `kGradingRatio` until they reach a or kGradingDepth * b.
inline constexpr double kGradingRatio = 0.15;
inline constexpr double kGradingDepth = 1e-6;

template <class F>
double integrate_graded(const GaussLegendre& rule, F&& f, double a, double b) {
  if (!(b > a)) return 0.0;
  const double floor = std::max(a, kGradingDepth * b);
  double total = 0.0;
  double hi = b;
  while (true) {
    const double lo = hi * kGradingRatio;
    if (lo <= floor) {
      total += rule.integrate(f, a, hi);
      break;
    }
    total += rule.integrate(f, lo, hi);
    hi = lo;
  }
  return total;
}

// Node-by-node version of integrate_graded, for accumulating several
// integrals of the same panels at once.
template <class V>
void for_each_graded_node(const GaussLegendre& rule, V&& visit, double a, double b) {
  if (!(b > a)) return;
  const double floor = std::max(a, kGradingDepth * b);
  double hi = b;
  while (true) {
    const double lo = hi * kGradingRatio;
    if (lo <= floor) {
      rule.for_each_node(visit, a, hi);
      return;
    }
    rule.for_each_node(visit, lo, hi);
    hi = lo;
  }
}

}  // namespace msmt
