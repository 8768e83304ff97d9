#pragma once

// Transient simulation of a 2D cellular nonlinear network with 3x3
// space-invariant cloning templates:
//
//   C dx_ij/dt = -x_ij/R_x + sum A y_kl + sum B u_kl + sum Cst x_kl
//                + sum D_kl phi(y_kl - y_ij) + I
//   y_ij = 0.5 (|x_ij + 1| - |x_ij - 1|)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cnnforge/error.hpp"

namespace cnnforge {

enum class Boundary { zero, replicate };
enum class Method { euler, rk4 };
enum class Nonlinearity { identity, pwl_diff, cubic_diff };

inline const char* to_string(Boundary b) { return b == Boundary::zero ? "zero" : "replicate"; }
inline const char* to_string(Method m) { return m == Method::euler ? "euler" : "rk4"; }
inline const char* to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::identity: return "identity";
    case Nonlinearity::pwl_diff: return "pwl_diff";
    case Nonlinearity::cubic_diff: return "cubic_diff";
  }
  return "?";
}

inline Boundary parse_boundary(const std::string& s) {
  if (s == "zero") return Boundary::zero;
  if (s == "replicate") return Boundary::replicate;
  throw InputError("unknown boundary mode '" + s + "'");
}
inline Method parse_method(const std::string& s) {
  if (s == "euler") return Method::euler;
  if (s == "rk4") return Method::rk4;
  throw InputError("unknown integration method '" + s + "'");
}
inline Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "identity") return Nonlinearity::identity;
  if (s == "pwl_diff") return Nonlinearity::pwl_diff;
  if (s == "cubic_diff") return Nonlinearity::cubic_diff;
  throw InputError("unknown nonlinearity '" + s + "'");
}

struct GridSpec {
  int rows = 1;
  int cols = 1;
  int radius = 1;
  Boundary boundary = Boundary::zero;

  void validate() const {
    if (rows < 1 || cols < 1 || radius < 1) throw ContractError("grid dimensions and radius must be >= 1");
  }
};

/// Row-major real-valued grid (state, input or output layer).
class CellField {
 public:
  CellField() = default;
  CellField(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(checked(rows, cols)), fill) {}
  CellField(int rows, int cols, std::vector<double> values) : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(checked(rows, cols)))
      throw ContractError("cell field value count does not match dimensions");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const CellField& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool operator==(const CellField&) const = default;

 private:
  static long checked(int rows, int cols) {
    if (rows < 1 || cols < 1) throw ContractError("cell field dimensions must be >= 1");
    return static_cast<long>(rows) * cols;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

/// One generative model: 3x3 cloning templates, bias and transient horizon.
/// Stencils are row-major with index (dk + 1) * 3 + (dl + 1).
struct TemplateSet {
  std::string name;
  std::array<double, 9> a{};    // feedback on outputs
  std::array<double, 9> b{};    // feedforward on inputs
  std::array<double, 9> cst{};  // state coupling
  std::array<double, 9> d{};    // nonlinear output-difference weights
  Nonlinearity d_nl = Nonlinearity::identity;
  double bias = 0.0;
  double t_final = 2.5;

  bool operator==(const TemplateSet&) const = default;

  bool classic() const {
    for (int k = 0; k < 9; ++k)
      if (cst[k] != 0.0 || d[k] != 0.0) return false;
    return true;
  }

  void validate() const {
    auto finite = [](const std::array<double, 9>& s) {
      for (double v : s)
        if (!std::isfinite(v)) return false;
      return true;
    };
    if (!finite(a) || !finite(b) || !finite(cst) || !finite(d) || !std::isfinite(bias))
      throw ContractError("template '" + name + "' has non-finite entries");
    if (!(t_final > 0.0) || !std::isfinite(t_final))
      throw ContractError("template '" + name + "' needs a positive finite t_final");
  }
};

struct IntegrationConfig {
  double dt = 0.05;
  Method method = Method::rk4;
  double capacitance = 1.0;
  double r_x = 1.0;
  /// Sampling times in (0, t_final]; empty means {t_final}.
  std::vector<double> checkpoint_times;
  Boundary boundary = Boundary::zero;
  double blowup_guard = 1e6;

  void validate(double t_final) const {
    if (!(dt > 0.0)) throw ContractError("dt must be positive");
    if (dt > t_final) throw ContractError("dt must not exceed t_final");
    if (!(capacitance > 0.0) || !(r_x > 0.0)) throw ContractError("capacitance and R_x must be positive");
    if (!(blowup_guard > 0.0)) throw ContractError("blow-up guard must be positive");
    double prev = 0.0;
    for (double t : checkpoint_times) {
      if (!(t > prev)) throw ContractError("checkpoint times must be strictly increasing and positive");
      if (t > t_final) throw ContractError("checkpoint time beyond t_final");
      prev = t;
    }
  }
};

struct Checkpoint {
  double time = 0.0;
  CellField y;
};

struct TransientResult {
  std::vector<Checkpoint> outputs;
  CellField final_state;
};

inline double pwl_output(double x) {
  if (!std::isfinite(x)) throw ContractError("non-finite activation");
  // same function as 0.5(|x+1| - |x-1|), but exact: the textbook form can
  // round one ulp past the rails
  return x >= 1.0 ? 1.0 : (x <= -1.0 ? -1.0 : x);
}

struct Neighbor {
  int dk = 0;  // row offset k - i
  int dl = 0;  // column offset l - j
  int row = 0;  // resolved grid row (clamped under replicate)
  int col = 0;
  bool virtual_cell = false;  // outside the grid and held at zero
};

/// Chebyshev neighborhood max(|k-i|, |l-j|) <= r of cell (i, j); always
/// (2r+1)^2 logical positions, in row-major offset order.
inline std::vector<Neighbor> neighborhood_offsets(const GridSpec& spec, int i, int j) {
  spec.validate();
  if (i < 0 || i >= spec.rows || j < 0 || j >= spec.cols) throw ContractError("index out of grid");
  std::vector<Neighbor> out;
  out.reserve(static_cast<std::size_t>((2 * spec.radius + 1) * (2 * spec.radius + 1)));
  for (int dk = -spec.radius; dk <= spec.radius; ++dk) {
    for (int dl = -spec.radius; dl <= spec.radius; ++dl) {
      Neighbor n{dk, dl, i + dk, j + dl, false};
      bool inside = n.row >= 0 && n.row < spec.rows && n.col >= 0 && n.col < spec.cols;
      if (!inside) {
        if (spec.boundary == Boundary::zero) {
          n.virtual_cell = true;
        } else {
          n.row = n.row < 0 ? 0 : (n.row >= spec.rows ? spec.rows - 1 : n.row);
          n.col = n.col < 0 ? 0 : (n.col >= spec.cols ? spec.cols - 1 : n.col);
        }
      }
      out.push_back(n);
    }
  }
  return out;
}

/// Bound on |x(t)| for the classic template class (Cst = D = 0), valid for
/// |x0| <= bound and |u| <= 1.
inline double steady_state_bound(const TemplateSet& t, const IntegrationConfig& cfg) {
  if (!t.classic()) throw ContractError("bound undefined for extended templates");
  double s = std::fabs(t.bias);
  for (int k = 0; k < 9; ++k) s += std::fabs(t.a[k]) + std::fabs(t.b[k]);
  return 1.0 + cfg.r_x * s;
}

namespace detail {

inline double apply_phi(Nonlinearity n, double z) {
  switch (n) {
    case Nonlinearity::identity: return z;
    case Nonlinearity::pwl_diff: return z >= 1.0 ? 1.0 : (z <= -1.0 ? -1.0 : z);
    case Nonlinearity::cubic_diff: return z * z * z;
  }
  return z;
}

/// Padded scratch buffers: a one-cell ring around the grid holds the
/// boundary values so the stencil loop needs no bounds checks.
class StencilKernel {
 public:
  StencilKernel(const CellField& u, const TemplateSet& t, const IntegrationConfig& cfg)
      : rows_(u.rows()), cols_(u.cols()), pw_(u.cols() + 2), tpl_(t), cfg_(cfg),
        pu_(padded_size(), 0.0), px_(padded_size(), 0.0), py_(padded_size(), 0.0) {
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) pu_[pidx(i, j)] = u(i, j);
    fill_ring(pu_);
  }

  /// dx/dt for state `x` (row-major, rows*cols) written into `out`.
  void derivative(std::span<const double> x, std::span<double> out) {
    for (int i = 0; i < rows_; ++i) {
      const double* src = x.data() + static_cast<std::size_t>(i) * cols_;
      double* dx = px_.data() + pidx(i, 0);
      double* dy = py_.data() + pidx(i, 0);
      for (int j = 0; j < cols_; ++j) {
        dx[j] = src[j];
        dy[j] = pwl_output(src[j]);
      }
    }
    fill_ring(px_);
    fill_ring(py_);
    switch (tpl_.d_nl) {
      case Nonlinearity::identity: sweep<Nonlinearity::identity>(out); break;
      case Nonlinearity::pwl_diff: sweep<Nonlinearity::pwl_diff>(out); break;
      case Nonlinearity::cubic_diff: sweep<Nonlinearity::cubic_diff>(out); break;
    }
  }

 private:
  std::size_t padded_size() const { return static_cast<std::size_t>(rows_ + 2) * pw_; }
  std::size_t pidx(int i, int j) const { return static_cast<std::size_t>(i + 1) * pw_ + (j + 1); }

  void fill_ring(std::vector<double>& p) const {
    if (cfg_.boundary == Boundary::zero) return;  // ring is never written, stays 0
    for (int i = 0; i < rows_; ++i) {
      p[pidx(i, -1)] = p[pidx(i, 0)];
      p[pidx(i, cols_)] = p[pidx(i, cols_ - 1)];
    }
    for (int j = -1; j <= cols_; ++j) {
      p[pidx(-1, j)] = p[pidx(0, j)];
      p[pidx(rows_, j)] = p[pidx(rows_ - 1, j)];
    }
  }

  template <Nonlinearity N>
  void sweep(std::span<double> out) const {
    const double inv_c = 1.0 / cfg_.capacitance;
    const double inv_r = 1.0 / cfg_.r_x;
    const std::size_t offs[9] = {0, 1, 2, std::size_t(pw_), std::size_t(pw_) + 1, std::size_t(pw_) + 2,
                                 2 * std::size_t(pw_), 2 * std::size_t(pw_) + 1, 2 * std::size_t(pw_) + 2};
    for (int i = 0; i < rows_; ++i) {
      for (int j = 0; j < cols_; ++j) {
        const std::size_t base = static_cast<std::size_t>(i) * pw_ + j;  // top-left of the 3x3 window
        const double yc = py_[base + offs[4]];
        double acc = -px_[base + offs[4]] * inv_r + tpl_.bias;
        for (int k = 0; k < 9; ++k) {
          const std::size_t p = base + offs[k];
          acc += tpl_.a[k] * py_[p] + tpl_.b[k] * pu_[p] + tpl_.cst[k] * px_[p] +
                 tpl_.d[k] * apply_phi(N, py_[p] - yc);
        }
        acc *= inv_c;
        if (!std::isfinite(acc)) throw DivergenceError("divergent dynamics", 0.0);
        out[static_cast<std::size_t>(i) * cols_ + j] = acc;
      }
    }
  }

  int rows_, cols_, pw_;
  const TemplateSet& tpl_;
  const IntegrationConfig& cfg_;
  std::vector<double> pu_, px_, py_;
};

inline void check_inputs(const CellField& u, const CellField& x, const TemplateSet& t) {
  if (u.size() == 0) throw ContractError("empty cell field");
  if (!u.same_shape(x)) throw ContractError("input and state dimensions differ");
  t.validate();
}

}  // namespace detail

inline CellField cell_derivative(const CellField& x, const CellField& u, const TemplateSet& t,
                                 const IntegrationConfig& cfg) {
  detail::check_inputs(u, x, t);
  CellField out(x.rows(), x.cols());
  detail::StencilKernel kernel(u, t, cfg);
  kernel.derivative(x.values(), out.values());
  return out;
}

inline TransientResult run_transient(const CellField& u, const CellField& x0, const TemplateSet& t,
                                     const IntegrationConfig& cfg) {
  detail::check_inputs(u, x0, t);
  cfg.validate(t.t_final);

  std::vector<double> marks = cfg.checkpoint_times;
  if (marks.empty() || marks.back() < t.t_final) marks.push_back(t.t_final);
  const bool implicit_final = cfg.checkpoint_times.empty();

  const std::size_t n = x0.size();
  detail::StencilKernel kernel(u, t, cfg);
  std::vector<double> x(x0.values().begin(), x0.values().end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);

  TransientResult result;
  double seg_start = 0.0;
  for (double mark : marks) {
    const double len = mark - seg_start;
    const long steps = std::max(1L, static_cast<long>(std::ceil(len / cfg.dt - 1e-9)));
    const double h = len / static_cast<double>(steps);
    for (long s = 1; s <= steps; ++s) {
      const double now = seg_start + static_cast<double>(s) * h;
      try {
        kernel.derivative(x, k1);
        if (cfg.method == Method::euler) {
          for (std::size_t q = 0; q < n; ++q) x[q] += h * k1[q];
        } else {
          for (std::size_t q = 0; q < n; ++q) tmp[q] = x[q] + 0.5 * h * k1[q];
          kernel.derivative(tmp, k2);
          for (std::size_t q = 0; q < n; ++q) tmp[q] = x[q] + 0.5 * h * k2[q];
          kernel.derivative(tmp, k3);
          for (std::size_t q = 0; q < n; ++q) tmp[q] = x[q] + h * k3[q];
          kernel.derivative(tmp, k4);
          for (std::size_t q = 0; q < n; ++q) x[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
        }
      } catch (const DivergenceError&) {
        throw DivergenceError("divergent dynamics at t=" + std::to_string(now), now);
      }
      for (double v : x)
        if (!(std::fabs(v) <= cfg.blowup_guard))
          throw DivergenceError("divergent dynamics at t=" + std::to_string(now), now);
    }
    seg_start = mark;
    // trailing segment up to t_final is integrated but not sampled
    if (!implicit_final && mark > cfg.checkpoint_times.back()) break;
    CellField y(x0.rows(), x0.cols());
    for (std::size_t q = 0; q < n; ++q) y.values()[q] = pwl_output(x[q]);
    result.outputs.push_back({mark, std::move(y)});
  }
  result.final_state = CellField(x0.rows(), x0.cols(), std::move(x));
  return result;
}

/// Convenience overload: the state starts from the input image.
inline TransientResult run_transient(const CellField& u, const TemplateSet& t, const IntegrationConfig& cfg) {
  return run_transient(u, u, t, cfg);
}

}  // namespace cnnforge
