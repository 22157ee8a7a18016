#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "conns/decomp.hpp"
#include "conns/errors.hpp"
#include "conns/io.hpp"
#include "conns/linalg.hpp"

namespace conns {

enum class ProjectionMode { none, symmetric, spectral };

inline std::string to_string(ProjectionMode m) {
  switch (m) {
    case ProjectionMode::none: return "none";
    case ProjectionMode::symmetric: return "symmetric";
    case ProjectionMode::spectral: return "spectral";
  }
  return "none";
}

inline ProjectionMode projection_mode_from_string(const std::string& s) {
  if (s == "none") return ProjectionMode::none;
  if (s == "symmetric") return ProjectionMode::symmetric;
  if (s == "spectral") return ProjectionMode::spectral;
  throw ConfigError("unknown projection mode \"" + s + "\"");
}

/// Constraint family and margin: feasible matrices have largest singular
/// value at most 1 - epsilon (the symmetric mode additionally requires
/// symmetry, with eigenvalues clamped to [-(1-eps), 1-eps]).
struct ProjectionSpec {
  ProjectionMode mode = ProjectionMode::spectral;
  double epsilon = 1e-3;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon <= 0.5))
      throw ArgumentError("ProjectionSpec: epsilon must lie in (0, 0.5]");
    if (mode == ProjectionMode::none)
      throw ArgumentError("ProjectionSpec: mode none has no feasible-set projection");
  }
};

/// Frobenius distance of a matrix from its transpose, measured entry-wise on
/// the upper triangle: sqrt(sum_{i<j} (w_ij - w_ji)^2).
inline double symmetry_defect(const Mat& w) {
  if (w.rows() != w.cols()) throw ArgumentError("symmetry_defect: matrix not square");
  double acc = 0.0;
  for (int i = 0; i < w.rows(); ++i)
    for (int j = i + 1; j < w.cols(); ++j) {
      const double d = w(i, j) - w(j, i);
      acc += d * d;
    }
  return std::sqrt(acc);
}

/// Frobenius-nearest matrix with largest singular value <= 1 - eps: singular
/// values above the bound are clipped, feasible inputs pass through intact.
inline Mat project_spectral(const Mat& w, double eps) {
  if (!all_finite(w)) throw NumericError("project_spectral: non-finite entries");
  const double bound = 1.0 - eps;
  SvdResult f = svd(w);
  if (f.sigma.empty() || f.sigma.front() <= bound) return w;
  const int r = static_cast<int>(f.sigma.size());
  Mat out(w.rows(), w.cols());
  for (int k = 0; k < r; ++k) {
    const double s = std::min(f.sigma[static_cast<std::size_t>(k)], bound);
    if (s == 0.0) continue;
    for (int i = 0; i < w.rows(); ++i) {
      const double us = f.u(i, k) * s;
      for (int j = 0; j < w.cols(); ++j) out(i, j) += us * f.v(j, k);
    }
  }
  return out;
}

/// Frobenius-nearest symmetric matrix with spectrum in [-(1-eps), 1-eps]:
/// symmetrize, eigendecompose, clamp, reassemble.
inline Mat project_symmetric(const Mat& w, double eps) {
  if (w.rows() != w.cols()) throw ArgumentError("project_symmetric: matrix not square");
  if (!all_finite(w)) throw NumericError("project_symmetric: non-finite entries");
  const double bound = 1.0 - eps;
  const int n = w.rows();
  Mat sym(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sym(i, j) = 0.5 * (w(i, j) + w(j, i));
  EigResult e = symmetric_eigen(sym);
  const bool already_symmetric = symmetry_defect(w) == 0.0;
  bool inside = true;
  for (double l : e.lambda)
    if (l > bound || l < -bound) inside = false;
  if (already_symmetric && inside) return w;
  Mat out(n, n);
  for (int k = 0; k < n; ++k) {
    const double l = std::clamp(e.lambda[static_cast<std::size_t>(k)], -bound, bound);
    if (l == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      const double vs = e.v(i, k) * l;
      for (int j = 0; j < n; ++j) out(i, j) += vs * e.v(j, k);
    }
  }
  return out;
}

inline Mat project(const Mat& w, const ProjectionSpec& spec) {
  spec.validate();
  return spec.mode == ProjectionMode::spectral ? project_spectral(w, spec.epsilon)
                                               : project_symmetric(w, spec.epsilon);
}

struct FeasibilityCheck {
  bool feasible = false;
  double sigma_max = 0.0;
  double defect = 0.0;  // symmetry defect; only meaningful in symmetric mode
};

/// True iff the mode's constraint holds within 1e-8.
inline FeasibilityCheck verify_feasible(const Mat& w, const ProjectionSpec& spec) {
  spec.validate();
  FeasibilityCheck c;
  c.sigma_max = spectral_norm(w);
  c.feasible = c.sigma_max <= 1.0 - spec.epsilon + 1e-8;
  if (spec.mode == ProjectionMode::symmetric) {
    c.defect = symmetry_defect(w);
    c.feasible = c.feasible && c.defect <= 1e-8;
  }
  return c;
}

/// Minimum eigenvalue of the symmetric block matrix
/// [[I(1-eps~), W], [W^T, I(1-eps~)]]; nonnegative iff sigma_max(W) <= 1-eps~.
inline double schur_block_min_eigenvalue(const Mat& w, double eps_tilde) {
  const int a = w.rows(), b = w.cols();
  Mat block(a + b, a + b);
  for (int i = 0; i < a + b; ++i) block(i, i) = 1.0 - eps_tilde;
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j) {
      block(i, a + j) = w(i, j);
      block(a + j, i) = w(i, j);
    }
  return min_eigenvalue_symmetric(block);
}

// ---- constrained least squares (the data-aware projection) ----

struct ConstrainedLsOptions {
  double update_tol = 1e-9;  // infinity norm of the per-step parameter change
  int max_iter = 10000;
  double ridge = 0.0;
};

/// min over feasible Whats of ||What M - N||_F^2 by accelerated projected
/// gradient (the feasible sets of both modes are convex). Precomputes the
/// small Gram products so each iteration is independent of the data count.
inline Mat constrained_least_squares(const Mat& w_start, const Mat& m, const Mat& n,
                                     const ProjectionSpec& spec,
                                     const ConstrainedLsOptions& opt = {}) {
  spec.validate();
  if (m.rows() != w_start.cols() || n.rows() != w_start.rows() || n.cols() != m.cols())
    throw ArgumentError("constrained_least_squares: shape mismatch");
  const Mat mmt = matmul(m, transpose(m));          // cols(W) x cols(W)
  const Mat nmt = matmul(n, transpose(m));          // rows(W) x cols(W)
  const double lip = 2.0 * spectral_norm(mmt) + 2.0 * opt.ridge;
  Mat w = project(w_start, spec);
  if (lip == 0.0) return w;
  const double step = 1.0 / lip;

  Mat y = w;
  Mat w_prev = w;
  double t_prev = 1.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    Mat grad = matmul(y, mmt) - nmt;
    for (std::size_t i = 0; i < grad.size(); ++i)
      grad.data()[i] = 2.0 * grad.data()[i] + 2.0 * opt.ridge * y.data()[i];
    Mat w_new = project(y - step * grad, spec);
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
    const double beta = (t_prev - 1.0) / t_new;
    Mat diff = w_new - w_prev;
    y = w_new + beta * diff;
    const double change = max_abs(diff);
    w_prev = w_new;
    t_prev = t_new;
    if (change <= opt.update_tol) break;
  }
  return w_prev;
}

/// Data-aware projection of a trained weight matrix: minimizes the layer
/// output discrepancy ||What X - W X||_F over the feasible set. The
/// overdetermined system is first reduced by a thin QR of X^T, which leaves
/// an equivalent square problem in the matrix unknowns.
inline Mat qr_optimal_projection(const Mat& w, const Mat& x, const ProjectionSpec& spec,
                                 const ConstrainedLsOptions& opt_in = {}) {
  spec.validate();
  if (x.rows() != w.cols())
    throw ArgumentError("qr_optimal_projection: X must have one row per W column");
  if (x.cols() < x.rows())
    throw ArgumentError("qr_optimal_projection: need at least as many data columns as rows");
  const Mat b = matmul(w, x);
  QrResult qr = householder_qr(transpose(x));  // X^T = Q R, R square
  ConstrainedLsOptions opt = opt_in;
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < qr.r.rows(); ++i) {
    dmax = std::max(dmax, std::abs(qr.r(i, i)));
    dmin = std::min(dmin, std::abs(qr.r(i, i)));
  }
  if (dmin <= 1e-10 * dmax) {
    std::fprintf(stderr,
                 "qr_optimal_projection: rank-deficient data matrix, solving with ridge 1e-10\n");
    opt.ridge = 1e-10;
  }
  return constrained_least_squares(w, transpose(qr.r), matmul(b, qr.q), spec, opt);
}

// ---- reporting ----

struct ProjectionReport {
  struct Row {
    std::string layer;
    double sv_before = 0.0;
    double sv_after = 0.0;
    double frob_change = 0.0;
  };
  std::vector<Row> rows;

  std::string to_csv() const {
    std::string out = "layer,sv_before,sv_after,frob_change\n";
    for (const Row& r : rows)
      out += r.layer + "," + fmt_g17(r.sv_before) + "," + fmt_g17(r.sv_after) + "," +
             fmt_g17(r.frob_change) + "\n";
    return out;
  }
};

}  // namespace conns
