#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "conns/errors.hpp"
#include "conns/linalg.hpp"

namespace conns {

/// Thin SVD, A = U diag(sigma) V^T with sigma sorted descending.
/// U is rows(A) x r, V is cols(A) x r, r = min(rows, cols).
struct SvdResult {
  Mat u;
  Vec sigma;
  Mat v;
};

namespace detail {

/// One-sided Jacobi on a tall-or-square matrix (rows >= cols): rotates column
/// pairs until they are mutually orthogonal. Chosen over bidiagonalization for
/// its simplicity and high relative accuracy on the small matrices used here.
inline SvdResult jacobi_svd_tall(const Mat& a) {
  const int p = a.rows(), q = a.cols();
  Mat g = a;
  Mat v = Mat::identity(q);
  const double eps = 1e-15;
  const int max_sweeps = 100;
  bool rotated = true;
  for (int sweep = 0; sweep < max_sweeps && rotated; ++sweep) {
    rotated = false;
    for (int i = 0; i < q - 1; ++i) {
      for (int j = i + 1; j < q; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int r = 0; r < p; ++r) {
          const double gi = g(r, i), gj = g(r, j);
          alpha += gi * gi;
          beta += gj * gj;
          gamma += gi * gj;
        }
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int r = 0; r < p; ++r) {
          const double gi = g(r, i), gj = g(r, j);
          g(r, i) = c * gi - s * gj;
          g(r, j) = s * gi + c * gj;
        }
        for (int r = 0; r < q; ++r) {
          const double vi = v(r, i), vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
  }
  if (rotated) throw NumericError("jacobi_svd: no convergence in 100 sweeps");

  Vec sigma(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) {
    double acc = 0.0;
    for (int r = 0; r < p; ++r) acc += g(r, j) * g(r, j);
    sigma[static_cast<std::size_t>(j)] = std::sqrt(acc);
  }
  std::vector<int> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return sigma[static_cast<std::size_t>(x)] > sigma[static_cast<std::size_t>(y)];
  });

  SvdResult out;
  out.u = Mat(p, q);
  out.v = Mat(q, q);
  out.sigma.resize(static_cast<std::size_t>(q));
  for (int jj = 0; jj < q; ++jj) {
    const int j = order[static_cast<std::size_t>(jj)];
    const double s = sigma[static_cast<std::size_t>(j)];
    out.sigma[static_cast<std::size_t>(jj)] = s;
    const double inv = s > 0.0 ? 1.0 / s : 0.0;
    for (int r = 0; r < p; ++r) out.u(r, jj) = g(r, j) * inv;
    for (int r = 0; r < q; ++r) out.v(r, jj) = v(r, j);
  }
  return out;
}

}  // namespace detail

inline SvdResult svd(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) throw ArgumentError("svd: empty matrix");
  if (!all_finite(a)) throw NumericError("svd: non-finite entries");
  if (a.rows() >= a.cols()) return detail::jacobi_svd_tall(a);
  SvdResult t = detail::jacobi_svd_tall(transpose(a));
  return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

inline Vec singular_values(const Mat& a) { return svd(a).sigma; }

/// Largest singular value via the full decomposition.
inline double spectral_norm(const Mat& a) {
  Vec s = singular_values(a);
  return s.empty() ? 0.0 : s.front();
}

/// Largest singular value by power iteration on A^T A. Cheap audit-path
/// alternative to svd(); always a lower bound on the true value.
inline double spectral_norm_power(const Mat& a, double tol = 1e-13, int max_iter = 20000) {
  const int q = a.cols();
  Vec v(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) v[static_cast<std::size_t>(j)] = 1.0 + 1e-3 * j;
  double nv = norm2(v);
  for (double& x : v) x /= nv;
  const Mat at = transpose(a);
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec u = matvec(a, v);
    const double s = norm2(u);
    if (s == 0.0) return 0.0;
    Vec w = matvec(at, u);
    const double nw = norm2(w);
    if (nw == 0.0) return s;
    for (std::size_t k = 0; k < w.size(); ++k) v[k] = w[k] / nw;
    if (std::abs(s - sigma) <= tol * std::max(s, 1e-300)) return s;
    sigma = s;
  }
  return sigma;
}

/// Symmetric eigendecomposition, A = V diag(lambda) V^T, eigenvalues sorted
/// descending. Cyclic two-sided Jacobi; input must be symmetric.
struct EigResult {
  Vec lambda;
  Mat v;
};

inline EigResult symmetric_eigen(const Mat& a_in) {
  const int n = a_in.rows();
  if (a_in.cols() != n) throw ArgumentError("symmetric_eigen: matrix not square");
  if (!all_finite(a_in)) throw NumericError("symmetric_eigen: non-finite entries");
  Mat a = a_in;
  Mat v = Mat::identity(n);
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-15 * std::max(1.0, frobenius_norm(a))) break;
    if (sweep == max_sweeps - 1)
      throw NumericError("symmetric_eigen: no convergence in 100 sweeps");
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  EigResult out;
  out.lambda.resize(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return a(x, x) > a(y, y); });
  out.v = Mat(n, n);
  for (int jj = 0; jj < n; ++jj) {
    const int j = order[static_cast<std::size_t>(jj)];
    out.lambda[static_cast<std::size_t>(jj)] = a(j, j);
    for (int r = 0; r < n; ++r) out.v(r, jj) = v(r, j);
  }
  return out;
}

inline double min_eigenvalue_symmetric(const Mat& a) {
  EigResult e = symmetric_eigen(a);
  return e.lambda.back();
}

/// Reduced Householder QR of a tall matrix (rows >= cols): A = Q R with
/// Q rows x cols (orthonormal columns) and R cols x cols upper triangular.
struct QrResult {
  Mat q;
  Mat r;
};

inline QrResult householder_qr(const Mat& a) {
  const int p = a.rows(), q = a.cols();
  if (p < q) throw ArgumentError("householder_qr: matrix must be tall (rows >= cols)");
  Mat work = a;
  std::vector<Vec> reflectors;
  reflectors.reserve(static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k) {
    double norm_x = 0.0;
    for (int i = k; i < p; ++i) norm_x += work(i, k) * work(i, k);
    norm_x = std::sqrt(norm_x);
    Vec hv(static_cast<std::size_t>(p), 0.0);
    if (norm_x > 0.0) {
      const double alpha = work(k, k) >= 0.0 ? -norm_x : norm_x;
      for (int i = k; i < p; ++i) hv[static_cast<std::size_t>(i)] = work(i, k);
      hv[static_cast<std::size_t>(k)] -= alpha;
      const double hn = norm2(hv);
      if (hn > 0.0)
        for (double& x : hv) x /= hn;
      // apply I - 2 h h^T to the remaining columns
      for (int j = k; j < q; ++j) {
        double proj = 0.0;
        for (int i = k; i < p; ++i) proj += hv[static_cast<std::size_t>(i)] * work(i, j);
        proj *= 2.0;
        for (int i = k; i < p; ++i) work(i, j) -= proj * hv[static_cast<std::size_t>(i)];
      }
    }
    reflectors.push_back(std::move(hv));
  }
  QrResult out;
  out.r = Mat(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = i; j < q; ++j) out.r(i, j) = work(i, j);
  // accumulate Q = H_0 ... H_{q-1} applied to the first q identity columns
  out.q = Mat(p, q);
  for (int j = 0; j < q; ++j) out.q(j, j) = 1.0;
  for (int k = q - 1; k >= 0; --k) {
    const Vec& hv = reflectors[static_cast<std::size_t>(k)];
    for (int j = 0; j < q; ++j) {
      double proj = 0.0;
      for (int i = k; i < p; ++i) proj += hv[static_cast<std::size_t>(i)] * out.q(i, j);
      proj *= 2.0;
      for (int i = k; i < p; ++i) out.q(i, j) -= proj * hv[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

}  // namespace conns
