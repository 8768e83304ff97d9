#pragma once

// Naive scalar integrator used only as ground truth for run_transient.
// Shares no stencil or stepping code with engine.hpp.

#include <cmath>
#include <vector>

#include "cnnforge/engine.hpp"

namespace cnnforge {

namespace reference_detail {

using Grid = std::vector<std::vector<double>>;

inline double saturate(double v) { return 0.5 * (std::fabs(v + 1.0) - std::fabs(v - 1.0)); }

inline double fetch(const Grid& g, int k, int l, Boundary boundary) {
  const int rows = static_cast<int>(g.size());
  const int cols = static_cast<int>(g[0].size());
  if (k < 0 || k >= rows || l < 0 || l >= cols) {
    if (boundary == Boundary::zero) return 0.0;
    if (k < 0) k = 0;
    if (k >= rows) k = rows - 1;
    if (l < 0) l = 0;
    if (l >= cols) l = cols - 1;
  }
  return g[k][l];
}

inline double nonlinear(Nonlinearity n, double z) {
  if (n == Nonlinearity::identity) return z;
  if (n == Nonlinearity::pwl_diff) return saturate(z);
  return z * z * z;
}

inline Grid rate(const Grid& x, const Grid& u, const TemplateSet& t, const IntegrationConfig& cfg) {
  const int rows = static_cast<int>(x.size());
  const int cols = static_cast<int>(x[0].size());
  Grid y(rows, std::vector<double>(cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) y[i][j] = saturate(x[i][j]);

  Grid out(rows, std::vector<double>(cols));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double sum_a = 0, sum_b = 0, sum_c = 0, sum_d = 0;
      for (int k = i - 1; k <= i + 1; ++k) {
        for (int l = j - 1; l <= j + 1; ++l) {
          const int w = (k - i + 1) * 3 + (l - j + 1);
          const double ykl = fetch(y, k, l, cfg.boundary);
          sum_a += t.a[w] * ykl;
          sum_b += t.b[w] * fetch(u, k, l, cfg.boundary);
          sum_c += t.cst[w] * fetch(x, k, l, cfg.boundary);
          sum_d += t.d[w] * nonlinear(t.d_nl, ykl - y[i][j]);
        }
      }
      const double v = (-x[i][j] / cfg.r_x + sum_a + sum_b + sum_c + sum_d + t.bias) / cfg.capacitance;
      if (!std::isfinite(v)) throw DivergenceError("divergent dynamics", 0.0);
      out[i][j] = v;
    }
  }
  return out;
}

inline Grid axpy(const Grid& x, double h, const Grid& k) {
  Grid r = x;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) r[i][j] += h * k[i][j];
  return r;
}

inline Grid to_grid(const CellField& f) {
  Grid g(f.rows(), std::vector<double>(f.cols()));
  for (int i = 0; i < f.rows(); ++i)
    for (int j = 0; j < f.cols(); ++j) g[i][j] = f(i, j);
  return g;
}

inline CellField from_grid(const Grid& g, bool saturated) {
  CellField f(static_cast<int>(g.size()), static_cast<int>(g[0].size()));
  for (int i = 0; i < f.rows(); ++i)
    for (int j = 0; j < f.cols(); ++j) f(i, j) = saturated ? saturate(g[i][j]) : g[i][j];
  return f;
}

}  // namespace reference_detail

/// Loop-per-cell integration of the cell equation. Intended for grids up to
/// 32x32; same contract as run_transient.
inline TransientResult simulate_reference(const CellField& u, const CellField& x0, const TemplateSet& t,
                                          const IntegrationConfig& cfg) {
  using namespace reference_detail;
  if (!u.same_shape(x0)) throw ContractError("input and state dimensions differ");
  if (u.rows() > 32 || u.cols() > 32) throw ContractError("reference simulator limited to 32x32 grids");
  t.validate();
  cfg.validate(t.t_final);

  const Grid ug = to_grid(u);
  Grid x = to_grid(x0);
  TransientResult result;

  std::vector<double> sample_at = cfg.checkpoint_times;
  if (sample_at.empty()) sample_at.push_back(t.t_final);

  double t_prev = 0.0;
  std::vector<double> stops = sample_at;
  if (stops.back() != t.t_final) stops.push_back(t.t_final);
  for (std::size_t s = 0; s < stops.size(); ++s) {
    const double span_len = stops[s] - t_prev;
    long n = static_cast<long>(std::ceil(span_len / cfg.dt - 1e-9));
    if (n < 1) n = 1;
    const double h = span_len / static_cast<double>(n);
    for (long step = 1; step <= n; ++step) {
      const double now = t_prev + static_cast<double>(step) * h;
      try {
        if (cfg.method == Method::euler) {
          x = axpy(x, h, rate(x, ug, t, cfg));
        } else {
          Grid k1 = rate(x, ug, t, cfg);
          Grid k2 = rate(axpy(x, h / 2, k1), ug, t, cfg);
          Grid k3 = rate(axpy(x, h / 2, k2), ug, t, cfg);
          Grid k4 = rate(axpy(x, h, k3), ug, t, cfg);
          for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < x[i].size(); ++j)
              x[i][j] += h / 6.0 * (k1[i][j] + 2 * k2[i][j] + 2 * k3[i][j] + k4[i][j]);
        }
      } catch (const DivergenceError&) {
        throw DivergenceError("divergent dynamics at t=" + std::to_string(now), now);
      }
      for (const auto& row : x)
        for (double v : row)
          if (!(std::fabs(v) <= cfg.blowup_guard))
            throw DivergenceError("divergent dynamics at t=" + std::to_string(now), now);
    }
    t_prev = stops[s];
    if (s < sample_at.size()) result.outputs.push_back({stops[s], from_grid(x, true)});
  }
  result.final_state = from_grid(x, false);
  return result;
}

}  // namespace cnnforge
