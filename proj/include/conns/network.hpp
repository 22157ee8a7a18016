#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conns/dataset.hpp"
#include "conns/decomp.hpp"
#include "conns/errors.hpp"
#include "conns/io.hpp"
#include "conns/linalg.hpp"
#include "conns/parallel.hpp"
#include "conns/projection.hpp"
#include "conns/rng.hpp"

namespace conns {

/// Optional affine input standardization, stored with the checkpoint. The
/// k2 block uses per-component shifts with one shared scale so a feasible
/// network keeps its contraction factor in raw k2 coordinates; the frozen x
/// block may scale per component.
struct InputStandardization {
  Vec k2_mean;
  double k2_scale = 1.0;
  Vec x_mean;
  Vec x_scale;

  bool operator==(const InputStandardization&) const = default;
};

/// Checkpoint metadata carried with the weights; the runtime refuses to step
/// a system/dt combination the model was not trained for.
struct NetworkMeta {
  std::string system_name;
  double dt = 0.0;
  ProjectionMode mode = ProjectionMode::none;
  double epsilon = 0.0;
  std::optional<InputStandardization> standardization;

  std::string normalization_name() const { return standardization ? "standard" : "none"; }
};

/// The recurrent solver network
///   Phi(k2, x) = W_h z_{h-1} + b_h,  z_1 = relu(W_1 k2 + U x + b_1),
///   z_i = relu(W_i z_{i-1} + b_i),
/// with h weight layers over hidden width m. The final layer is linear by
/// default (final_linear), optionally ReLU like the hidden ones.
struct NetworkParams {
  int n = 0;  // state dimension
  int m = 0;  // hidden width
  int h = 0;  // weight layer count (= hidden layers + 1)
  bool final_linear = true;
  Mat w1;                   // m x n
  Mat u;                    // m x n
  std::vector<Mat> inner;   // h-2 matrices, m x m
  Mat wh;                   // n x m
  std::vector<Vec> b;       // h biases: b[0..h-2] length m, b[h-1] length n
  NetworkMeta meta;

  int hidden_layers() const { return h - 1; }

  /// Weight matrices in declaration order W1, W2..W_{h-1}, Wh.
  std::vector<const Mat*> weight_list() const {
    std::vector<const Mat*> out;
    out.push_back(&w1);
    for (const Mat& w : inner) out.push_back(&w);
    out.push_back(&wh);
    return out;
  }
  std::vector<Mat*> weight_list() {
    std::vector<Mat*> out;
    out.push_back(&w1);
    for (Mat& w : inner) out.push_back(&w);
    out.push_back(&wh);
    return out;
  }

  /// All trainable tensors as flat spans, in checkpoint order
  /// (W1, U, inner..., Wh, b1..bh). Adam walks this list.
  template <class F>
  void for_each_span(F&& f) {
    f(std::span<double>(w1.data(), w1.size()));
    f(std::span<double>(u.data(), u.size()));
    for (Mat& w : inner) f(std::span<double>(w.data(), w.size()));
    f(std::span<double>(wh.data(), wh.size()));
    for (Vec& bias : b) f(std::span<double>(bias.data(), bias.size()));
  }
  template <class F>
  void for_each_span(F&& f) const {
    f(std::span<const double>(w1.data(), w1.size()));
    f(std::span<const double>(u.data(), u.size()));
    for (const Mat& w : inner) f(std::span<const double>(w.data(), w.size()));
    f(std::span<const double>(wh.data(), wh.size()));
    for (const Vec& bias : b) f(std::span<const double>(bias.data(), bias.size()));
  }

  void validate_shapes() const {
    if (n < 1 || m < 1 || h < 2) throw ArgumentError("network: need n,m >= 1 and h >= 2");
    auto expect = [](const Mat& w, int r, int c, const char* what) {
      if (w.rows() != r || w.cols() != c)
        throw ArgumentError(std::string("network: bad shape for ") + what);
    };
    expect(w1, m, n, "W1");
    expect(u, m, n, "U");
    if (static_cast<int>(inner.size()) != h - 2)
      throw ArgumentError("network: wrong inner layer count");
    for (const Mat& w : inner) expect(w, m, m, "Wi");
    expect(wh, n, m, "Wh");
    if (static_cast<int>(b.size()) != h) throw ArgumentError("network: wrong bias count");
    for (int i = 0; i < h - 1; ++i)
      if (static_cast<int>(b[static_cast<std::size_t>(i)].size()) != m)
        throw ArgumentError("network: bad hidden bias length");
    if (static_cast<int>(b.back().size()) != n)
      throw ArgumentError("network: bad output bias length");
  }
};

struct Arch {
  int m = 40;
  int hidden_layers = 3;
  bool final_linear = true;
};

inline NetworkParams make_network(int n, const Arch& arch) {
  NetworkParams p;
  p.n = n;
  p.m = arch.m;
  p.h = arch.hidden_layers + 1;
  p.final_linear = arch.final_linear;
  p.w1 = Mat(p.m, p.n);
  p.u = Mat(p.m, p.n);
  p.inner.assign(static_cast<std::size_t>(p.h - 2), Mat(p.m, p.m));
  p.wh = Mat(p.n, p.m);
  p.b.assign(static_cast<std::size_t>(p.h), Vec());
  for (int i = 0; i < p.h - 1; ++i) p.b[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(p.m), 0.0);
  p.b.back().assign(static_cast<std::size_t>(p.n), 0.0);
  p.validate_shapes();
  return p;
}

/// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in));
/// biases start at zero.
inline NetworkParams he_init(int n, const Arch& arch, std::uint64_t seed) {
  NetworkParams p = make_network(n, arch);
  Rng rng(seed);
  for (Mat* w : p.weight_list()) {
    const double bound = std::sqrt(1.0 / w->cols());
    for (std::size_t i = 0; i < w->size(); ++i) w->data()[i] = rng.uniform(-bound, bound);
  }
  const double ubound = std::sqrt(1.0 / p.u.cols());
  for (std::size_t i = 0; i < p.u.size(); ++i) p.u.data()[i] = rng.uniform(-ubound, ubound);
  return p;
}

// ---- single-sample forward ----

namespace detail {

/// Raw network pass, ignoring any input standardization in the metadata.
inline StateVector forward_raw(const NetworkParams& p, const StateVector& k2,
                               const StateVector& x);

}  // namespace detail

/// Network evaluation in raw k2/x coordinates; a standardization transform
/// in the metadata is applied around the raw pass.
inline StateVector forward(const NetworkParams& p, const StateVector& k2, const StateVector& x) {
  if (static_cast<int>(k2.size()) != p.n || static_cast<int>(x.size()) != p.n)
    throw ArgumentError("forward: input length does not match network dimension");
  if (!p.meta.standardization) return detail::forward_raw(p, k2, x);
  const InputStandardization& t = *p.meta.standardization;
  StateVector k2s(k2.size()), xs(x.size());
  for (std::size_t i = 0; i < k2.size(); ++i) k2s[i] = (k2[i] - t.k2_mean[i]) / t.k2_scale;
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = (x[i] - t.x_mean[i]) / t.x_scale[i];
  StateVector out = detail::forward_raw(p, k2s, xs);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.k2_mean[i] + t.k2_scale * out[i];
  return out;
}

namespace detail {

inline StateVector forward_raw(const NetworkParams& p, const StateVector& k2,
                               const StateVector& x) {
  Vec z(static_cast<std::size_t>(p.m));
  for (int i = 0; i < p.m; ++i) {
    double acc = p.b[0][static_cast<std::size_t>(i)];
    const double* w1i = p.w1.row(i);
    const double* ui = p.u.row(i);
    for (int j = 0; j < p.n; ++j)
      acc += w1i[j] * k2[static_cast<std::size_t>(j)] + ui[j] * x[static_cast<std::size_t>(j)];
    z[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
  }
  Vec next(static_cast<std::size_t>(p.m));
  for (std::size_t l = 0; l < p.inner.size(); ++l) {
    const Mat& w = p.inner[l];
    const Vec& bias = p.b[l + 1];
    for (int i = 0; i < p.m; ++i) {
      double acc = bias[static_cast<std::size_t>(i)];
      const double* wi = w.row(i);
      for (int j = 0; j < p.m; ++j) acc += wi[j] * z[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
    }
    std::swap(z, next);
  }
  StateVector out(static_cast<std::size_t>(p.n));
  for (int i = 0; i < p.n; ++i) {
    double acc = p.b.back()[static_cast<std::size_t>(i)];
    const double* wi = p.wh.row(i);
    for (int j = 0; j < p.m; ++j) acc += wi[j] * z[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = (!p.final_linear && acc < 0.0) ? 0.0 : acc;
  }
  return out;
}

}  // namespace detail

// ---- batched training path ----

/// Column-per-sample views of a dataset batch: each Mat is dim x N.
struct BatchedSamples {
  Mat k2_in;
  Mat x;
  Mat k2_out;
  int count = 0;
};

inline BatchedSamples batch_samples(std::span<const StepSample> samples) {
  if (samples.empty()) throw ArgumentError("batch_samples: empty batch");
  const int n = static_cast<int>(samples.front().x.size());
  const int count = static_cast<int>(samples.size());
  BatchedSamples b{Mat(n, count), Mat(n, count), Mat(n, count), count};
  for (int c = 0; c < count; ++c) {
    const StepSample& s = samples[static_cast<std::size_t>(c)];
    if (static_cast<int>(s.x.size()) != n || static_cast<int>(s.k2_in.size()) != n ||
        static_cast<int>(s.k2_out.size()) != n)
      throw ArgumentError("batch_samples: inconsistent sample dimensions");
    for (int i = 0; i < n; ++i) {
      b.k2_in(i, c) = s.k2_in[static_cast<std::size_t>(i)];
      b.x(i, c) = s.x[static_cast<std::size_t>(i)];
      b.k2_out(i, c) = s.k2_out[static_cast<std::size_t>(i)];
    }
  }
  return b;
}

/// Fits the affine transform to a dataset: per-component means, one shared
/// scale for the k2 block (root-mean-square deviation), per-component scales
/// for x. Near-constant components keep scale 1 to avoid blowups.
inline InputStandardization compute_standardization(const Dataset& ds) {
  if (ds.samples.empty()) throw ArgumentError("compute_standardization: empty dataset");
  const auto n = static_cast<std::size_t>(ds.dim());
  InputStandardization t;
  t.k2_mean.assign(n, 0.0);
  t.x_mean.assign(n, 0.0);
  t.x_scale.assign(n, 0.0);
  const double inv = 1.0 / static_cast<double>(ds.samples.size());
  for (const StepSample& s : ds.samples)
    for (std::size_t i = 0; i < n; ++i) {
      t.k2_mean[i] += s.k2_in[i];
      t.x_mean[i] += s.x[i];
    }
  for (std::size_t i = 0; i < n; ++i) {
    t.k2_mean[i] *= inv;
    t.x_mean[i] *= inv;
  }
  double k2_var = 0.0;
  for (const StepSample& s : ds.samples)
    for (std::size_t i = 0; i < n; ++i) {
      const double dk = s.k2_in[i] - t.k2_mean[i];
      k2_var += dk * dk;
      const double dx = s.x[i] - t.x_mean[i];
      t.x_scale[i] += dx * dx;
    }
  t.k2_scale = std::sqrt(k2_var * inv / static_cast<double>(n));
  if (t.k2_scale < 1e-12) t.k2_scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    t.x_scale[i] = std::sqrt(t.x_scale[i] * inv);
    if (t.x_scale[i] < 1e-12) t.x_scale[i] = 1.0;
  }
  return t;
}

/// Maps a raw batch into the network's standardized coordinates (inputs and
/// targets), so that training runs on the plain network.
inline BatchedSamples standardize_batch(const BatchedSamples& raw, const InputStandardization& t) {
  BatchedSamples out = raw;
  for (int i = 0; i < out.k2_in.rows(); ++i)
    for (int c = 0; c < out.count; ++c) {
      out.k2_in(i, c) = (raw.k2_in(i, c) - t.k2_mean[static_cast<std::size_t>(i)]) / t.k2_scale;
      out.k2_out(i, c) = (raw.k2_out(i, c) - t.k2_mean[static_cast<std::size_t>(i)]) / t.k2_scale;
      out.x(i, c) = (raw.x(i, c) - t.x_mean[static_cast<std::size_t>(i)]) /
                    t.x_scale[static_cast<std::size_t>(i)];
    }
  return out;
}

struct NetGrads {
  Mat w1, u;
  std::vector<Mat> inner;
  Mat wh;
  std::vector<Vec> b;

  static NetGrads zeros_like(const NetworkParams& p) {
    NetGrads g;
    g.w1 = Mat(p.m, p.n);
    g.u = Mat(p.m, p.n);
    g.inner.assign(p.inner.size(), Mat(p.m, p.m));
    g.wh = Mat(p.n, p.m);
    g.b.resize(p.b.size());
    for (std::size_t i = 0; i < p.b.size(); ++i)
      g.b[i].assign(p.b[i].size(), 0.0);
    return g;
  }

  template <class F>
  void for_each_span(F&& f) {
    f(std::span<double>(w1.data(), w1.size()));
    f(std::span<double>(u.data(), u.size()));
    for (Mat& w : inner) f(std::span<double>(w.data(), w.size()));
    f(std::span<double>(wh.data(), wh.size()));
    for (Vec& bias : b) f(std::span<double>(bias.data(), bias.size()));
  }

  void add_scaled(const NetGrads& o, double s) {
    auto axpy_mat = [s](Mat& dst, const Mat& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
    };
    axpy_mat(w1, o.w1);
    axpy_mat(u, o.u);
    for (std::size_t l = 0; l < inner.size(); ++l) axpy_mat(inner[l], o.inner[l]);
    axpy_mat(wh, o.wh);
    for (std::size_t l = 0; l < b.size(); ++l)
      for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += s * o.b[l][i];
  }
};

namespace detail {

// Row-major (dim x C) kernels; every inner loop runs unit-stride over the
// sample axis.

inline void layer_forward(const Mat& w, const Vec& bias, const double* in, int in_dim, int c,
                          double* out, bool relu) {
  for (int i = 0; i < w.rows(); ++i) {
    double* oi = out + static_cast<std::size_t>(i) * c;
    const double bi = bias[static_cast<std::size_t>(i)];
    for (int s = 0; s < c; ++s) oi[s] = bi;
    const double* wi = w.row(i);
    for (int k = 0; k < in_dim; ++k) {
      const double wik = wi[k];
      if (wik == 0.0) continue;
      const double* ik = in + static_cast<std::size_t>(k) * c;
      for (int s = 0; s < c; ++s) oi[s] += wik * ik[s];
    }
    if (relu)
      for (int s = 0; s < c; ++s) oi[s] = oi[s] > 0.0 ? oi[s] : 0.0;
  }
}

inline void add_matvec_block(const Mat& w, const double* in, int in_dim, int c, double* out) {
  for (int i = 0; i < w.rows(); ++i) {
    double* oi = out + static_cast<std::size_t>(i) * c;
    const double* wi = w.row(i);
    for (int k = 0; k < in_dim; ++k) {
      const double wik = wi[k];
      if (wik == 0.0) continue;
      const double* ik = in + static_cast<std::size_t>(k) * c;
      for (int s = 0; s < c; ++s) oi[s] += wik * ik[s];
    }
  }
}

/// delta_prev = W^T delta. wt is the pre-transposed weight.
inline void backprop_delta(const Mat& wt, const double* delta, int out_dim, int c, double* prev) {
  std::memset(prev, 0, static_cast<std::size_t>(wt.rows()) * c * sizeof(double));
  for (int k = 0; k < wt.rows(); ++k) {
    double* pk = prev + static_cast<std::size_t>(k) * c;
    const double* wtk = wt.row(k);
    for (int i = 0; i < out_dim; ++i) {
      const double wki = wtk[i];
      if (wki == 0.0) continue;
      const double* di = delta + static_cast<std::size_t>(i) * c;
      for (int s = 0; s < c; ++s) pk[s] += wki * di[s];
    }
  }
}

/// dW += delta * act^T, db += rowsum(delta).
inline void accumulate_grads(const double* delta, int out_dim, const double* act, int in_dim,
                             int c, Mat& dw, Vec& db) {
  for (int i = 0; i < out_dim; ++i) {
    const double* di = delta + static_cast<std::size_t>(i) * c;
    double* dwi = dw.row(i);
    for (int k = 0; k < in_dim; ++k) {
      const double* ak = act + static_cast<std::size_t>(k) * c;
      double acc = 0.0;
      for (int s = 0; s < c; ++s) acc += di[s] * ak[s];
      dwi[k] += acc;
    }
    double acc = 0.0;
    for (int s = 0; s < c; ++s) acc += di[s];
    db[static_cast<std::size_t>(i)] += acc;
  }
}

inline void relu_mask(const double* z, double* delta, int dim, int c) {
  for (std::size_t i = 0; i < static_cast<std::size_t>(dim) * c; ++i)
    if (z[i] <= 0.0) delta[i] = 0.0;
}

constexpr int kChunk = 1024;

struct ChunkResult {
  double loss_sum = 0.0;
  NetGrads grads;
};

/// Forward (and optionally backward) over one fixed chunk of columns.
/// Deterministic: the chunk partition and all summation orders are fixed,
/// independent of the worker count.
inline ChunkResult run_chunk(const NetworkParams& p, const std::vector<Mat>& wt,
                             const BatchedSamples& data, int col0, int c, bool want_grads) {
  const int n = p.n, m = p.m;
  const std::size_t cc = static_cast<std::size_t>(c);
  std::vector<Vec> z(static_cast<std::size_t>(p.h - 1), Vec(static_cast<std::size_t>(m) * cc));
  Vec out(static_cast<std::size_t>(n) * cc);

  // strided views of the chunk columns
  Mat k2(n, c), x(n, c), y(n, c);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < c; ++s) {
      k2(i, s) = data.k2_in(i, col0 + s);
      x(i, s) = data.x(i, col0 + s);
      y(i, s) = data.k2_out(i, col0 + s);
    }

  layer_forward(p.w1, p.b[0], k2.data(), n, c, z[0].data(), false);
  add_matvec_block(p.u, x.data(), n, c, z[0].data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(m) * cc; ++i)
    z[0][i] = z[0][i] > 0.0 ? z[0][i] : 0.0;
  for (std::size_t l = 0; l < p.inner.size(); ++l)
    layer_forward(p.inner[l], p.b[l + 1], z[l].data(), m, c, z[l + 1].data(), true);
  layer_forward(p.wh, p.b.back(), z[static_cast<std::size_t>(p.h - 2)].data(), m, c, out.data(),
                !p.final_linear);

  ChunkResult res;
  Vec delta_out(static_cast<std::size_t>(n) * cc);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < c; ++s) {
      const double d = out[static_cast<std::size_t>(i) * cc + s] - y(i, s);
      res.loss_sum += d * d;
      delta_out[static_cast<std::size_t>(i) * cc + s] = 2.0 * d;
    }
  if (!want_grads) return res;

  res.grads = NetGrads::zeros_like(p);
  if (!p.final_linear) relu_mask(out.data(), delta_out.data(), n, c);
  const double* last_z = z[static_cast<std::size_t>(p.h - 2)].data();
  accumulate_grads(delta_out.data(), n, last_z, m, c, res.grads.wh, res.grads.b.back());

  Vec delta(static_cast<std::size_t>(m) * cc);
  backprop_delta(wt.back(), delta_out.data(), n, c, delta.data());
  relu_mask(last_z, delta.data(), m, c);

  Vec delta_prev(static_cast<std::size_t>(m) * cc);
  for (int l = static_cast<int>(p.inner.size()) - 1; l >= 0; --l) {
    const double* zin = z[static_cast<std::size_t>(l)].data();
    accumulate_grads(delta.data(), m, zin, m, c, res.grads.inner[static_cast<std::size_t>(l)],
                     res.grads.b[static_cast<std::size_t>(l) + 1]);
    backprop_delta(wt[static_cast<std::size_t>(l) + 1], delta.data(), m, c, delta_prev.data());
    relu_mask(zin, delta_prev.data(), m, c);
    std::swap(delta, delta_prev);
  }
  accumulate_grads(delta.data(), m, k2.data(), n, c, res.grads.w1, res.grads.b[0]);
  accumulate_grads(delta.data(), m, x.data(), n, c, res.grads.u, res.grads.b[0]);
  // layer-1 bias was accumulated twice (once per input block); halve it
  for (double& v : res.grads.b[0]) v *= 0.5;
  return res;
}

inline std::vector<Mat> transposed_weights(const NetworkParams& p) {
  std::vector<Mat> wt;
  wt.reserve(p.inner.size() + 2);
  wt.push_back(transpose(p.w1));
  for (const Mat& w : p.inner) wt.push_back(transpose(w));
  wt.push_back(transpose(p.wh));
  return wt;
}

inline std::pair<double, NetGrads> loss_and_grad(const NetworkParams& p,
                                                 const BatchedSamples& data, bool want_grads) {
  const int n_chunks = (data.count + kChunk - 1) / kChunk;
  std::vector<ChunkResult> results(static_cast<std::size_t>(n_chunks));
  const std::vector<Mat> wt = want_grads ? transposed_weights(p) : std::vector<Mat>{};
  parallel_for_chunks(n_chunks, [&](int chunk) {
    const int col0 = chunk * kChunk;
    const int c = std::min(kChunk, data.count - col0);
    results[static_cast<std::size_t>(chunk)] = run_chunk(p, wt, data, col0, c, want_grads);
  });
  double loss = 0.0;
  NetGrads total = want_grads ? NetGrads::zeros_like(p) : NetGrads{};
  const double inv_count = 1.0 / data.count;
  for (const ChunkResult& r : results) {
    loss += r.loss_sum;
    if (want_grads) total.add_scaled(r.grads, inv_count);
  }
  return {loss * inv_count, std::move(total)};
}

}  // namespace detail

/// Mean over the batch of ||Phi(k2_in, x) - k2_out||_2^2, in raw k2 units.
/// For standardized checkpoints the batch is transformed first; the uniform
/// output scale makes the raw loss exactly k2_scale^2 times the internal one.
inline double loss_mse(const NetworkParams& p, const BatchedSamples& data) {
  if (data.count == 0) throw ArgumentError("loss_mse: empty batch");
  if (!p.meta.standardization) return detail::loss_and_grad(p, data, false).first;
  const InputStandardization& t = *p.meta.standardization;
  const BatchedSamples std_data = standardize_batch(data, t);
  return t.k2_scale * t.k2_scale * detail::loss_and_grad(p, std_data, false).first;
}

inline double loss_mse(const NetworkParams& p, std::span<const StepSample> batch) {
  return loss_mse(p, batch_samples(batch));
}

/// Exact reverse-mode gradient of loss_mse. The ReLU subgradient at 0 is 0.
inline NetGrads gradient(const NetworkParams& p, std::span<const StepSample> batch) {
  BatchedSamples data = batch_samples(batch);
  if (!p.meta.standardization) return detail::loss_and_grad(p, data, true).second;
  const InputStandardization& t = *p.meta.standardization;
  const BatchedSamples std_data = standardize_batch(data, t);
  NetGrads g = detail::loss_and_grad(p, std_data, true).second;
  NetGrads scaled = NetGrads::zeros_like(p);
  scaled.add_scaled(g, t.k2_scale * t.k2_scale);
  return scaled;
}

// ---- Adam ----

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long long t = 0;
  std::vector<Vec> m;
  std::vector<Vec> v;

  static AdamState zeros_like(NetworkParams& p) {
    AdamState s;
    p.for_each_span([&](std::span<double> span) {
      s.m.emplace_back(span.size(), 0.0);
      s.v.emplace_back(span.size(), 0.0);
    });
    return s;
  }
};

/// Standard Adam update with bias correction, applied in place.
inline void adam_step(AdamState& state, NetworkParams& p, NetGrads& g, double lr,
                      const AdamParams& ap = {}) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(ap.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(ap.beta2, static_cast<double>(state.t));
  std::size_t slot = 0;
  std::vector<std::span<double>> param_spans, grad_spans;
  p.for_each_span([&](std::span<double> s) { param_spans.push_back(s); });
  g.for_each_span([&](std::span<double> s) { grad_spans.push_back(s); });
  for (slot = 0; slot < param_spans.size(); ++slot) {
    Vec& mm = state.m[slot];
    Vec& vv = state.v[slot];
    std::span<double> pp = param_spans[slot];
    std::span<double> gg = grad_spans[slot];
    for (std::size_t i = 0; i < pp.size(); ++i) {
      mm[i] = ap.beta1 * mm[i] + (1.0 - ap.beta1) * gg[i];
      vv[i] = ap.beta2 * vv[i] + (1.0 - ap.beta2) * gg[i] * gg[i];
      const double mhat = mm[i] / bc1;
      const double vhat = vv[i] / bc2;
      pp[i] -= lr * mhat / (std::sqrt(vhat) + ap.eps);
    }
  }
}

// ---- singular value audit ----

struct SvAudit {
  Vec w_max;     // W1, W2.., Wh in order
  double u_max = 0.0;
};

/// Largest singular value of every weight matrix (full decomposition); U is
/// reported separately since the contraction condition never constrains it.
inline SvAudit max_singular_values(const NetworkParams& p) {
  SvAudit a;
  for (const Mat* w : p.weight_list()) a.w_max.push_back(spectral_norm(*w));
  a.u_max = spectral_norm(p.u);
  return a;
}

// ---- training ----

struct TrainingConfig {
  double lr = 1e-4;
  int epochs = 1000;
  AdamParams adam;
  ProjectionMode projection_mode = ProjectionMode::none;
  double epsilon = 1e-3;  // projection margin
  std::uint64_t seed = 0;
  std::optional<double> loss_target;
  bool standardize = false;  // fit an input transform before training

  void validate() const {
    if (lr <= 0.0) throw ArgumentError("TrainingConfig: lr must be > 0");
    if (epochs < 1) throw ArgumentError("TrainingConfig: epochs must be >= 1");
    if (projection_mode != ProjectionMode::none && !(epsilon > 0.0 && epsilon <= 0.5))
      throw ArgumentError("TrainingConfig: epsilon must lie in (0, 0.5]");
  }
};

struct TrainReport {
  Vec loss_history;                 // pre-step loss per epoch actually run
  std::vector<Vec> sv_audit_history;  // per epoch, per weight layer
  double wall_time_seconds = 0.0;
  double final_loss = 0.0;          // loss of the returned parameters
  int epochs_run = 0;
};

/// Full-batch Adam on the Newton-step regression. With a projection mode,
/// every weight matrix is re-projected after every Adam step, so the
/// returned network is feasible at all times; U and biases are never
/// projected. Stops early once loss_target is reached.
inline TrainReport train_in_place(NetworkParams& p, const BatchedSamples& raw_data,
                                  const TrainingConfig& cfg) {
  cfg.validate();
  p.validate_shapes();
  if (raw_data.count == 0) throw ArgumentError("train: empty dataset");
  if (raw_data.k2_in.rows() != p.n) throw ArgumentError("train: dataset dimension != network n");
  const auto t0 = std::chrono::steady_clock::now();

  // the internal loop always runs on the plain network; a standardization in
  // the metadata transforms the data once and rescales the reported losses
  const BatchedSamples data =
      p.meta.standardization ? standardize_batch(raw_data, *p.meta.standardization) : raw_data;
  const double loss_scale =
      p.meta.standardization ? p.meta.standardization->k2_scale * p.meta.standardization->k2_scale
                             : 1.0;

  const ProjectionSpec spec{cfg.projection_mode == ProjectionMode::none
                                ? ProjectionMode::spectral
                                : cfg.projection_mode,
                            cfg.epsilon};
  const bool constrained = cfg.projection_mode != ProjectionMode::none;
  if (constrained)
    for (Mat* w : p.weight_list()) *w = project(*w, spec);

  p.meta.mode = cfg.projection_mode;
  p.meta.epsilon = constrained ? cfg.epsilon : 0.0;

  TrainReport report;
  AdamState adam = AdamState::zeros_like(p);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto [loss, grads] = detail::loss_and_grad(p, data, true);
    loss *= loss_scale;
    if (!std::isfinite(loss))
      throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch));
    report.loss_history.push_back(loss);
    Vec audit;
    for (const Mat* w : p.weight_list()) audit.push_back(spectral_norm_power(*w));
    report.sv_audit_history.push_back(std::move(audit));
    report.epochs_run = epoch + 1;
    if (cfg.loss_target && loss <= *cfg.loss_target) break;

    adam_step(adam, p, grads, cfg.lr, cfg.adam);
    if (constrained)
      for (Mat* w : p.weight_list()) *w = project(*w, spec);
  }
  report.final_loss = loss_scale * detail::loss_and_grad(p, data, false).first;
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline std::pair<NetworkParams, TrainReport> train(const Dataset& ds, const Arch& arch,
                                                   const TrainingConfig& cfg) {
  if (ds.samples.empty()) throw ArgumentError("train: empty dataset");
  NetworkParams p = he_init(ds.dim(), arch, cfg.seed);
  p.meta.system_name = ds.system_name;
  p.meta.dt = ds.dt;
  if (cfg.standardize) p.meta.standardization = compute_standardization(ds);
  BatchedSamples data = batch_samples(ds.samples);
  TrainReport report = train_in_place(p, data, cfg);
  return {std::move(p), std::move(report)};
}

inline std::pair<NetworkParams, TrainReport> train_from(const Dataset& ds, NetworkParams p,
                                                        const TrainingConfig& cfg) {
  if (ds.samples.empty()) throw ArgumentError("train: empty dataset");
  if (p.n != ds.dim()) throw ArgumentError("train_from: network/dataset dimension mismatch");
  BatchedSamples data = batch_samples(ds.samples);
  TrainReport report = train_in_place(p, data, cfg);
  return {std::move(p), std::move(report)};
}

// ---- initialization from an unconstrained solution ----

/// Projects every weight matrix directly (data-agnostic); the cheap but
/// crude way to make an unconstrained network feasible.
inline NetworkParams naive_projection(const NetworkParams& p, const ProjectionSpec& spec) {
  NetworkParams out = p;
  for (Mat* w : out.weight_list()) *w = project(*w, spec);
  out.meta.mode = spec.mode;
  out.meta.epsilon = spec.epsilon;
  return out;
}

/// Data-aware feasible initialization: forward-propagates sampled dataset
/// inputs through the unconstrained network to collect each layer's input
/// matrix, then replaces each weight matrix with its qr_optimal_projection.
/// U and biases are untouched.
inline std::pair<NetworkParams, ProjectionReport> constrained_init(const NetworkParams& p,
                                                                   const Dataset& ds,
                                                                   const ProjectionSpec& spec,
                                                                   int column_cap = 4096) {
  spec.validate();
  p.validate_shapes();
  if (ds.samples.empty()) throw ArgumentError("constrained_init: empty dataset");
  const int total = static_cast<int>(ds.samples.size());
  std::vector<int> chosen;
  if (column_cap > 0 && total > column_cap) {
    std::vector<int> ids(static_cast<std::size_t>(total));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(ds.seed ^ 0x70726f6aULL);
    for (int i = 0; i < column_cap; ++i) {
      const auto j = static_cast<std::size_t>(
          i + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(total - i)));
      std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    chosen.assign(ids.begin(), ids.begin() + column_cap);
  } else {
    chosen.resize(static_cast<std::size_t>(total));
    std::iota(chosen.begin(), chosen.end(), 0);
  }
  const int d = static_cast<int>(chosen.size());
  if (d < p.m)
    throw ArgumentError("constrained_init: need at least m data columns (have " +
                        std::to_string(d) + ", m = " + std::to_string(p.m) + ")");

  Mat k2(p.n, d), x(p.n, d);
  for (int c = 0; c < d; ++c) {
    const StepSample& s = ds.samples[static_cast<std::size_t>(chosen[static_cast<std::size_t>(c)])];
    for (int i = 0; i < p.n; ++i) {
      k2(i, c) = s.k2_in[static_cast<std::size_t>(i)];
      x(i, c) = s.x[static_cast<std::size_t>(i)];
    }
  }
  if (p.meta.standardization) {
    const InputStandardization& t = *p.meta.standardization;
    for (int c = 0; c < d; ++c)
      for (int i = 0; i < p.n; ++i) {
        k2(i, c) = (k2(i, c) - t.k2_mean[static_cast<std::size_t>(i)]) / t.k2_scale;
        x(i, c) = (x(i, c) - t.x_mean[static_cast<std::size_t>(i)]) /
                  t.x_scale[static_cast<std::size_t>(i)];
      }
  }
  // layer input matrices under the unconstrained network
  std::vector<Mat> layer_inputs;
  layer_inputs.push_back(k2);
  Mat z(p.m, d);
  detail::layer_forward(p.w1, p.b[0], k2.data(), p.n, d, z.data(), false);
  detail::add_matvec_block(p.u, x.data(), p.n, d, z.data());
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = std::max(z.data()[i], 0.0);
  for (std::size_t l = 0; l < p.inner.size(); ++l) {
    layer_inputs.push_back(z);
    Mat next(p.m, d);
    detail::layer_forward(p.inner[l], p.b[l + 1], z.data(), p.m, d, next.data(), true);
    z = std::move(next);
  }
  layer_inputs.push_back(z);

  NetworkParams out = p;
  ProjectionReport report;
  std::vector<Mat*> weights = out.weight_list();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Mat& w = *weights[l];
    ProjectionReport::Row row;
    row.layer = l == 0 ? "W1" : (l + 1 == weights.size() ? "Wh" : "W" + std::to_string(l + 1));
    row.sv_before = spectral_norm(w);
    Mat projected = qr_optimal_projection(w, layer_inputs[l], spec);
    row.sv_after = spectral_norm(projected);
    row.frob_change = frobenius_norm(projected - w);
    w = std::move(projected);
    report.rows.push_back(std::move(row));
  }
  out.meta.mode = spec.mode;
  out.meta.epsilon = spec.epsilon;
  return {std::move(out), std::move(report)};
}

// ---- persistence: magic "CNNM", version u16, JSON header, f64 tensors ----

namespace detail {
inline constexpr char kModelMagic[4] = {'C', 'N', 'N', 'M'};
inline constexpr std::uint16_t kModelVersion = 1;
}  // namespace detail

inline void save_model(const NetworkParams& p, const std::string& path) {
  p.validate_shapes();
  detail::BinWriter w(path);
  w.bytes(detail::kModelMagic, 4);
  w.pod(detail::kModelVersion);
  nlohmann::json header{{"n", p.n},
                        {"m", p.m},
                        {"h", p.h},
                        {"final_linear", p.final_linear},
                        {"projection_mode", to_string(p.meta.mode)},
                        {"epsilon", p.meta.epsilon},
                        {"normalization", p.meta.normalization_name()},
                        {"system", p.meta.system_name},
                        {"dt", p.meta.dt}};
  if (p.meta.standardization) {
    const InputStandardization& t = *p.meta.standardization;
    header["standardization"] = {{"k2_mean", t.k2_mean},
                                 {"k2_scale", t.k2_scale},
                                 {"x_mean", t.x_mean},
                                 {"x_scale", t.x_scale}};
  }
  const std::string hs = header.dump();
  w.pod(static_cast<std::uint32_t>(hs.size()));
  w.bytes(hs.data(), hs.size());
  p.for_each_span([&](std::span<const double> s) { w.f64s(s.data(), s.size()); });
  w.close();
}

inline NetworkParams load_model(const std::string& path) {
  detail::BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, detail::kModelMagic, 4) != 0)
    throw FormatError("model file: bad magic", 0);
  const auto version = r.pod<std::uint16_t>();
  if (version != detail::kModelVersion)
    throw FormatError("model file: unsupported version " + std::to_string(version), 4);
  const auto header_len = r.pod<std::uint32_t>();
  std::string hs(header_len, '\0');
  r.bytes(hs.data(), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: bad header: ") + e.what(), 10);
  }
  Arch arch;
  arch.m = header.at("m").get<int>();
  arch.hidden_layers = header.at("h").get<int>() - 1;
  arch.final_linear = header.at("final_linear").get<bool>();
  NetworkParams p = make_network(header.at("n").get<int>(), arch);
  p.meta.mode = projection_mode_from_string(header.at("projection_mode").get<std::string>());
  p.meta.epsilon = header.at("epsilon").get<double>();
  p.meta.system_name = header.at("system").get<std::string>();
  p.meta.dt = header.at("dt").get<double>();
  if (header.value("normalization", "none") == std::string("standard")) {
    const auto& t = header.at("standardization");
    InputStandardization st;
    st.k2_mean = t.at("k2_mean").get<Vec>();
    st.k2_scale = t.at("k2_scale").get<double>();
    st.x_mean = t.at("x_mean").get<Vec>();
    st.x_scale = t.at("x_scale").get<Vec>();
    if (st.k2_mean.size() != static_cast<std::size_t>(p.n) ||
        st.x_mean.size() != static_cast<std::size_t>(p.n) ||
        st.x_scale.size() != static_cast<std::size_t>(p.n))
      throw FormatError("model file: standardization shape mismatch", 10);
    p.meta.standardization = std::move(st);
  }
  p.for_each_span([&](std::span<double> s) { r.f64s(s.data(), s.size()); });
  if (!r.at_eof()) throw FormatError("model file: trailing bytes", r.offset());
  for (const Mat* w : p.weight_list())
    if (!all_finite(*w)) throw FormatError("model file: non-finite weights", r.offset());
  return p;
}

}  // namespace conns
