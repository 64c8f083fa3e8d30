#pragma once

// Limited-memory BFGS with a backtracking Armijo line search.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace polarimeter {

struct LbfgsOptions {
  double gradient_tolerance = 1e-7;
  int max_iterations = 10000;
  int history = 8;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f, where f(x, grad) returns the value and writes the gradient.
/// f may return +inf for infeasible points; the line search backs off.
template <class Objective>
LbfgsResult minimize_lbfgs(Objective&& f, Eigen::VectorXd x, const LbfgsOptions& options) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n), g_new(n), x_new(n), d(n);
  double value = f(x, g);
  if (!std::isfinite(value)) return {x, value, std::numeric_limits<double>::infinity(), 0, false};

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y)
  std::deque<double> rho;
  LbfgsResult result;
  int it = 0;
  bool restarted = false;
  for (; it < options.max_iterations; ++it) {
    const double gnorm = g.norm();
    if (gnorm < options.gradient_tolerance) {
      result.converged = true;
      break;
    }

    // two-loop recursion
    d = -g;
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = rho[k] * memory[k].first.dot(d);
      d -= alpha[k] * memory[k].second;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      d *= s.dot(y) / y.squaredNorm();
    } else {
      d *= 1.0 / std::max(gnorm, 1.0);
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = rho[k] * memory[k].second.dot(d);
      d += (alpha[k] - beta) * memory[k].first;
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      memory.clear();
      rho.clear();
      d = -g / std::max(gnorm, 1.0);
      slope = g.dot(d);
    }

    double step = 1.0;
    bool accepted = false;
    double value_new = value;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * d;
      value_new = f(x_new, g_new);
      if (std::isfinite(value_new) && value_new <= value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (memory.empty() || restarted) break;
      memory.clear();
      rho.clear();
      restarted = true;
      continue;
    }
    restarted = false;

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      if (static_cast<int>(memory.size()) == options.history) {
        memory.pop_front();
        rho.pop_front();
      }
      memory.emplace_back(std::move(s), std::move(y));
      rho.push_back(1.0 / sy);
    }
    x = x_new;
    g = g_new;
    value = value_new;
  }
  result.x = std::move(x);
  result.value = value;
  result.gradient_norm = g.norm();
  result.iterations = it;
  if (result.gradient_norm < options.gradient_tolerance) result.converged = true;
  return result;
}

}  // namespace polarimeter
