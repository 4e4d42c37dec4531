#pragma once

#include "colf/nn/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace colf::nn {

// Central finite differences of a scalar function over selected coordinates of
// `x`. An empty index list means every coordinate.
inline Vec<double> central_difference(const std::function<double(const Vec<double>&)>& f, Vec<double> x,
                                      double h = 1e-5, const std::vector<Eigen::Index>& indices = {}) {
  Vec<double> g = Vec<double>::Zero(x.size());
  auto probe = [&](Eigen::Index i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    g[i] = (fp - fm) / (2 * h);
  };
  if (indices.empty()) {
    for (Eigen::Index i = 0; i < x.size(); ++i) probe(i);
  } else {
    for (Eigen::Index i : indices) probe(i);
  }
  return g;
}

/**
 * Largest elementwise relative error |a - n| / max(|a|, |n|, atol).
 *
 * `atol` keeps coordinates whose true derivative is ~0 from dividing
 * round-off noise by zero. A negative value selects 1e-4 * max(1, |a|_inf),
 * i.e. coordinates four orders of magnitude below the gradient scale are
 * compared in absolute terms against that scale.
 */
inline double max_relative_error(const Vec<double>& analytic, const Vec<double>& numeric, double atol = -1,
                                 const std::vector<Eigen::Index>& indices = {}) {
  require(analytic.size() == numeric.size(), "max_relative_error: length mismatch");
  if (atol < 0) atol = 1e-4 * std::max(1.0, analytic.size() > 0 ? analytic.cwiseAbs().maxCoeff() : 0.0);
  double worst = 0;
  auto visit = [&](Eigen::Index i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), atol});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  };
  if (indices.empty()) {
    for (Eigen::Index i = 0; i < analytic.size(); ++i) visit(i);
  } else {
    for (Eigen::Index i : indices) visit(i);
  }
  return worst;
}

}  // namespace colf::nn
