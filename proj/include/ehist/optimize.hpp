#pragma once

// Derivative-free minimization (Nelder-Mead) for the small settings problems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace ehist {

struct NelderMeadConfig {
  double tol = 1e-10;          // stop when the simplex value spread falls below this
  std::size_t max_evals = 10000;
  double initial_step = 0.1;
  std::size_t restarts = 3;    // fresh simplices around the incumbent after convergence
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> x0, const NelderMeadConfig& cfg = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  if (n == 0) {
    res.x = x0;
    res.value = f(x0);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    return f(x);
  };

  std::vector<double> best = x0;
  double best_val = eval(best);
  bool converged = false;

  for (std::size_t round = 0; round <= cfg.restarts && res.evaluations < cfg.max_evals; ++round) {
    std::vector<std::vector<double>> simplex(n + 1, best);
    std::vector<double> vals(n + 1, best_val);
    for (std::size_t i = 0; i < n; ++i) {
      simplex[i + 1][i] += cfg.initial_step;
      vals[i + 1] = eval(simplex[i + 1]);
    }
    std::vector<std::size_t> order(n + 1);
    converged = false;
    while (res.evaluations < cfg.max_evals) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
      const std::size_t lo = order.front(), hi = order.back(), second = order[n - 1];
      if (vals[hi] - vals[lo] <= cfg.tol) {
        converged = true;
        break;
      }
      std::vector<double> centroid(n, 0.0);
      for (std::size_t k = 0; k <= n; ++k) {
        if (k == hi) continue;
        for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[k][i] / static_cast<double>(n);
      }
      auto along = [&](double t) {
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = centroid[i] + t * (simplex[hi][i] - centroid[i]);
        return p;
      };
      auto xr = along(-1.0);
      const double fr = eval(xr);
      if (fr < vals[lo]) {
        auto xe = along(-2.0);
        const double fe = eval(xe);
        if (fe < fr) {
          simplex[hi] = std::move(xe);
          vals[hi] = fe;
        } else {
          simplex[hi] = std::move(xr);
          vals[hi] = fr;
        }
      } else if (fr < vals[second]) {
        simplex[hi] = std::move(xr);
        vals[hi] = fr;
      } else {
        const bool outside = fr < vals[hi];
        auto xc = along(outside ? -0.5 : 0.5);
        const double fc = eval(xc);
        if (fc < std::min(fr, vals[hi])) {
          simplex[hi] = std::move(xc);
          vals[hi] = fc;
        } else {
          for (std::size_t k = 0; k <= n; ++k) {
            if (k == lo) continue;
            for (std::size_t i = 0; i < n; ++i) simplex[k][i] = simplex[lo][i] + 0.5 * (simplex[k][i] - simplex[lo][i]);
            vals[k] = eval(simplex[k]);
          }
        }
      }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    const double improvement = best_val - *it;
    if (*it <= best_val) {
      best = simplex[static_cast<std::size_t>(it - vals.begin())];
      best_val = *it;
    }
    if (round > 0 && converged && improvement <= cfg.tol) break;
  }
  res.x = std::move(best);
  res.value = best_val;
  res.converged = converged;
  return res;
}

}  // namespace ehist
