#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "conns/errors.hpp"
#include "conns/integrator.hpp"
#include "conns/io.hpp"
#include "conns/linalg.hpp"
#include "conns/network.hpp"

namespace conns {

// ---- trajectory error metrics ----

/// Per-state 2-norm of the pointwise difference across the whole trajectory.
/// Grids must match bit-exactly; comparing different grids is a caller bug.
inline Vec trajectory_error(const TrajectoryRecord& reference, const TrajectoryRecord& predicted) {
  if (reference.times != predicted.times)
    throw ArgumentError("trajectory_error: time grids differ");
  if (reference.states.size() != predicted.states.size())
    throw ArgumentError("trajectory_error: state counts differ");
  const std::size_t n = reference.states.empty() ? 0 : reference.states.front().size();
  Vec acc(n, 0.0);
  for (std::size_t t = 0; t < reference.states.size(); ++t) {
    const StateVector& a = reference.states[t];
    const StateVector& b = predicted.states[t];
    if (a.size() != n || b.size() != n)
      throw ArgumentError("trajectory_error: state dimensions differ");
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      acc[i] += d * d;
    }
  }
  for (double& v : acc) v = std::sqrt(v);
  return acc;
}

/// Population statistics of per-trajectory errors and cumulative iteration
/// counts, in the shape of the benchmark tables.
struct MetricsTable {
  std::string method;
  std::string split;  // "Training" or "Test"
  Vec mean_err, sd_err, max_err;  // per state
  double iter_mean = 0.0;
  double iter_sd = 0.0;
  long long iter_max = 0;
  int trajectories = 0;
};

inline MetricsTable summarize(const std::vector<Vec>& errors,
                              const std::vector<long long>& iterations,
                              const std::string& method, const std::string& split) {
  if (errors.empty() || iterations.empty())
    throw ArgumentError("summarize: empty input");
  if (errors.size() != iterations.size())
    throw ArgumentError("summarize: errors/iterations length mismatch");
  const std::size_t n = errors.front().size();
  MetricsTable t;
  t.method = method;
  t.split = split;
  t.trajectories = static_cast<int>(errors.size());
  t.mean_err.assign(n, 0.0);
  t.sd_err.assign(n, 0.0);
  t.max_err.assign(n, 0.0);
  for (const Vec& e : errors) {
    if (e.size() != n) throw ArgumentError("summarize: inconsistent state dimension");
    for (std::size_t i = 0; i < n; ++i) {
      t.mean_err[i] += e[i];
      t.max_err[i] = std::max(t.max_err[i], e[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(errors.size());
  for (double& v : t.mean_err) v *= inv;
  for (const Vec& e : errors)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = e[i] - t.mean_err[i];
      t.sd_err[i] += d * d;
    }
  for (double& v : t.sd_err) v = std::sqrt(v * inv);

  double imean = 0.0;
  for (long long it : iterations) {
    imean += static_cast<double>(it);
    t.iter_max = std::max(t.iter_max, it);
  }
  imean *= inv;
  double ivar = 0.0;
  for (long long it : iterations) {
    const double d = static_cast<double>(it) - imean;
    ivar += d * d;
  }
  t.iter_mean = imean;
  t.iter_sd = std::sqrt(ivar * inv);
  return t;
}

/// Long-form CSV: "method,split,metric,state,value".
inline std::string metrics_to_csv(const std::vector<MetricsTable>& tables) {
  std::string out = "method,split,metric,state,value\n";
  for (const MetricsTable& t : tables) {
    const std::size_t n = t.mean_err.size();
    auto emit = [&](const char* metric, const Vec& v) {
      for (std::size_t i = 0; i < n; ++i)
        out += t.method + "," + t.split + "," + metric + ",x" + std::to_string(i + 1) + "," +
               fmt_g17(v[i]) + "\n";
    };
    emit("mean", t.mean_err);
    emit("sd", t.sd_err);
    emit("max", t.max_err);
    out += t.method + "," + t.split + ",mean,iterations," + fmt_g17(t.iter_mean) + "\n";
    out += t.method + "," + t.split + ",sd,iterations," + fmt_g17(t.iter_sd) + "\n";
    out += t.method + "," + t.split + ",max,iterations," +
           fmt_g17(static_cast<double>(t.iter_max)) + "\n";
  }
  return out;
}

// ---- vector field export ----

struct GridSpec {
  double i_min = -1.0, i_max = 1.0;
  double j_min = -1.0, j_max = 1.0;
  int ni = 20, nj = 20;
};

struct VectorFieldGrid {
  StateVector anchor_x;
  int axis_i = 0, axis_j = 1;
  std::vector<double> ki, kj, dx, dy, mag;  // one entry per grid node
};

/// Displacement field Phi(k2, x) - k2 over a grid in two chosen k2
/// components; the remaining components are held at base_k2 (typically the
/// fixed point).
inline VectorFieldGrid export_vector_field(const NetworkParams& p, const StateVector& x,
                                           int axis_i, int axis_j, const GridSpec& grid,
                                           StateVector base_k2 = {}) {
  if (axis_i == axis_j || axis_i < 0 || axis_j < 0 || axis_i >= p.n || axis_j >= p.n)
    throw ArgumentError("export_vector_field: bad axis pair");
  if (grid.ni < 2 || grid.nj < 2) throw ArgumentError("export_vector_field: grid too small");
  if (base_k2.empty()) base_k2.assign(static_cast<std::size_t>(p.n), 0.0);
  if (static_cast<int>(base_k2.size()) != p.n)
    throw ArgumentError("export_vector_field: base_k2 length mismatch");

  VectorFieldGrid out;
  out.anchor_x = x;
  out.axis_i = axis_i;
  out.axis_j = axis_j;
  for (int a = 0; a < grid.ni; ++a) {
    const double vi = grid.i_min + (grid.i_max - grid.i_min) * a / (grid.ni - 1);
    for (int bnode = 0; bnode < grid.nj; ++bnode) {
      const double vj = grid.j_min + (grid.j_max - grid.j_min) * bnode / (grid.nj - 1);
      StateVector k2 = base_k2;
      k2[static_cast<std::size_t>(axis_i)] = vi;
      k2[static_cast<std::size_t>(axis_j)] = vj;
      const StateVector next = forward(p, k2, x);
      const double ddx = next[static_cast<std::size_t>(axis_i)] - vi;
      const double ddy = next[static_cast<std::size_t>(axis_j)] - vj;
      out.ki.push_back(vi);
      out.kj.push_back(vj);
      out.dx.push_back(ddx);
      out.dy.push_back(ddy);
      out.mag.push_back(std::sqrt(ddx * ddx + ddy * ddy));
    }
  }
  return out;
}

inline std::string vector_field_to_csv(const VectorFieldGrid& g) {
  std::string out = "k2_i,k2_j,dx,dy,mag\n";
  for (std::size_t k = 0; k < g.ki.size(); ++k)
    out += fmt_g17(g.ki[k]) + "," + fmt_g17(g.kj[k]) + "," + fmt_g17(g.dx[k]) + "," +
           fmt_g17(g.dy[k]) + "," + fmt_g17(g.mag[k]) + "\n";
  return out;
}

// ---- singular value spectra ----

struct SvHistogram {
  std::vector<std::string> labels;  // W1, W2.., Wh, U
  std::vector<Vec> spectra;
};

/// Full singular value spectrum of every weight matrix (not just the
/// maxima); U last, reported separately from the constrained stack.
inline SvHistogram export_sv_histogram(const NetworkParams& p) {
  SvHistogram h;
  const auto weights = p.weight_list();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h.labels.push_back(l == 0 ? "W1"
                              : (l + 1 == weights.size() ? "Wh" : "W" + std::to_string(l + 1)));
    h.spectra.push_back(singular_values(*weights[l]));
  }
  h.labels.push_back("U");
  h.spectra.push_back(singular_values(p.u));
  return h;
}

inline std::string sv_histogram_to_csv(const SvHistogram& h) {
  std::string out = "layer,singular_value\n";
  for (std::size_t l = 0; l < h.labels.size(); ++l)
    for (double v : h.spectra[l]) out += h.labels[l] + "," + fmt_g17(v) + "\n";
  return out;
}

// ---- deterministic SVG rendering ----

namespace svgdetail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct Mapper {
  double x0, x1, y0, y1;       // data ranges
  double px0, px1, py0, py1;   // pixel ranges (y flipped)
  double px(double x) const { return px0 + (x - x0) / (x1 - x0 + 1e-300) * (px1 - px0); }
  double py(double y) const { return py0 + (y - y0) / (y1 - y0 + 1e-300) * (py1 - py0); }
};

inline std::string header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string axes(const Mapper& m, const std::string& xlab, const std::string& ylab) {
  std::string s;
  s += "<line x1=\"" + num(m.px0) + "\" y1=\"" + num(m.py0) + "\" x2=\"" + num(m.px1) +
       "\" y2=\"" + num(m.py0) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(m.px0) + "\" y1=\"" + num(m.py0) + "\" x2=\"" + num(m.px0) +
       "\" y2=\"" + num(m.py1) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(m.px0) + "\" y=\"" + num(m.py0 + 28) + "\" font-size=\"11\">" +
       num(m.x0) + "</text>\n";
  s += "<text x=\"" + num(m.px1 - 30) + "\" y=\"" + num(m.py0 + 28) + "\" font-size=\"11\">" +
       num(m.x1) + "</text>\n";
  s += "<text x=\"" + num(m.px0 - 45) + "\" y=\"" + num(m.py0) + "\" font-size=\"11\">" +
       num(m.y0) + "</text>\n";
  s += "<text x=\"" + num(m.px0 - 45) + "\" y=\"" + num(m.py1 + 4) + "\" font-size=\"11\">" +
       num(m.y1) + "</text>\n";
  s += "<text x=\"" + num(0.5 * (m.px0 + m.px1)) + "\" y=\"" + num(m.py0 + 28) +
       "\" font-size=\"12\">" + xlab + "</text>\n";
  s += "<text x=\"10\" y=\"" + num(0.5 * (m.py0 + m.py1)) + "\" font-size=\"12\">" + ylab +
       "</text>\n";
  return s;
}

inline const char* series_color(std::size_t i) {
  static const char* colors[] = {"#000000", "#1f77b4", "#d62728", "#2ca02c",
                                 "#9467bd", "#ff7f0e", "#8c564b", "#7f7f7f"};
  return colors[i % 8];
}

}  // namespace svgdetail

struct OverlaySeries {
  std::string label;
  const TrajectoryRecord* record = nullptr;
};

/// Numeric companion of the overlay figure: one column per series for the
/// chosen state, aligned on the first series' time grid.
inline std::string overlay_to_csv(const std::vector<OverlaySeries>& series, int state_index) {
  std::string out = "t";
  for (const auto& s : series) out += "," + s.label;
  out += "\n";
  if (series.empty() || !series.front().record) return out;
  const TrajectoryRecord& base = *series.front().record;
  for (std::size_t k = 0; k < base.times.size(); ++k) {
    out += fmt_g17(base.times[k]);
    for (const auto& s : series) {
      out += ",";
      if (s.record && k < s.record->states.size())
        out += fmt_g17(s.record->states[k][static_cast<std::size_t>(state_index)]);
    }
    out += "\n";
  }
  return out;
}

/// One state's trajectories from several methods on a shared time axis.
inline std::string render_overlay_svg(const std::vector<OverlaySeries>& series, int state_index,
                                      const std::string& title) {
  const int width = 800, height = 480;
  std::string out = svgdetail::header(width, height);
  double tmin = 0, tmax = 1, vmin = 0, vmax = 1;
  bool have = false;
  for (const auto& s : series) {
    if (!s.record || s.record->times.empty()) continue;
    for (std::size_t k = 0; k < s.record->times.size(); ++k) {
      const double t = s.record->times[k];
      const double v = s.record->states[k][static_cast<std::size_t>(state_index)];
      if (!have) {
        tmin = tmax = t;
        vmin = vmax = v;
        have = true;
      }
      tmin = std::min(tmin, t);
      tmax = std::max(tmax, t);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  if (vmax == vmin) vmax = vmin + 1.0;
  svgdetail::Mapper m{tmin, tmax, vmin, vmax, 70, width - 20.0, height - 40.0, 20};
  out += svgdetail::axes(m, "t", "x" + std::to_string(state_index + 1));
  out += "<text x=\"" + svgdetail::num(width / 2.0 - 100) + "\" y=\"14\" font-size=\"13\">" +
         title + "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (!s.record || s.record->times.empty()) continue;
    std::string pts;
    for (std::size_t k = 0; k < s.record->times.size(); ++k) {
      pts += svgdetail::num(m.px(s.record->times[k])) + "," +
             svgdetail::num(m.py(s.record->states[k][static_cast<std::size_t>(state_index)])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(svgdetail::series_color(si)) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    out += "<text x=\"" + svgdetail::num(width - 170.0) + "\" y=\"" +
           svgdetail::num(30.0 + 16.0 * static_cast<double>(si)) + "\" font-size=\"12\" fill=\"" +
           svgdetail::series_color(si) + "\">" + s.label + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Quiver plot of a displacement field; arrow length is rescaled for
/// readability (rendering only; exported CSV data is never rescaled).
inline std::string render_quiver_svg(const VectorFieldGrid& g, const std::string& title,
                                     double arrow_scale = 0.35) {
  const int width = 640, height = 640;
  std::string out = svgdetail::header(width, height);
  double ximin = g.ki.empty() ? 0 : g.ki.front(), ximax = ximin;
  double xjmin = g.kj.empty() ? 0 : g.kj.front(), xjmax = xjmin;
  double mmax = 0.0;
  for (std::size_t k = 0; k < g.ki.size(); ++k) {
    ximin = std::min(ximin, g.ki[k]);
    ximax = std::max(ximax, g.ki[k]);
    xjmin = std::min(xjmin, g.kj[k]);
    xjmax = std::max(xjmax, g.kj[k]);
    mmax = std::max(mmax, g.mag[k]);
  }
  if (ximax == ximin) ximax = ximin + 1.0;
  if (xjmax == xjmin) xjmax = xjmin + 1.0;
  svgdetail::Mapper m{ximin, ximax, xjmin, xjmax, 60, width - 20.0, height - 40.0, 20};
  out += svgdetail::axes(m, "k2_" + std::to_string(g.axis_i + 1),
                         "k2_" + std::to_string(g.axis_j + 1));
  out += "<text x=\"" + svgdetail::num(width / 2.0 - 100) + "\" y=\"14\" font-size=\"13\">" +
         title + "</text>\n";
  const double cell = (ximax - ximin) * arrow_scale / std::max(1.0, mmax);
  for (std::size_t k = 0; k < g.ki.size(); ++k) {
    const double x0 = m.px(g.ki[k]);
    const double y0 = m.py(g.kj[k]);
    const double x1 = m.px(g.ki[k] + g.dx[k] * cell);
    const double y1 = m.py(g.kj[k] + g.dy[k] * cell);
    const int shade = mmax > 0.0 ? static_cast<int>(200.0 * (1.0 - g.mag[k] / mmax)) : 0;
    out += "<line x1=\"" + svgdetail::num(x0) + "\" y1=\"" + svgdetail::num(y0) + "\" x2=\"" +
           svgdetail::num(x1) + "\" y2=\"" + svgdetail::num(y1) + "\" stroke=\"rgb(" +
           std::to_string(40 + shade / 4) + "," + std::to_string(40 + shade / 4) + "," +
           std::to_string(120 + shade / 2) + ")\" stroke-width=\"1\"/>\n";
    out += "<circle cx=\"" + svgdetail::num(x1) + "\" cy=\"" + svgdetail::num(y1) +
           "\" r=\"1.4\" fill=\"#333333\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Per-layer singular value histogram; bar heights on a log10(1 + count)
/// scale.
inline std::string render_sv_histogram_svg(const SvHistogram& h, const std::string& title) {
  const int width = 800, height = 480;
  const int bins = 40;
  double smax = 1.0;
  for (const Vec& spec : h.spectra)
    for (double v : spec) smax = std::max(smax, v);
  smax *= 1.05;
  std::vector<std::vector<int>> counts(h.spectra.size(), std::vector<int>(bins, 0));
  int cmax = 1;
  for (std::size_t l = 0; l < h.spectra.size(); ++l)
    for (double v : h.spectra[l]) {
      int bin = static_cast<int>(v / smax * bins);
      bin = std::clamp(bin, 0, bins - 1);
      counts[l][static_cast<std::size_t>(bin)] += 1;
      cmax = std::max(cmax, counts[l][static_cast<std::size_t>(bin)]);
    }
  const double hmax = std::log10(1.0 + cmax);
  std::string out = svgdetail::header(width, height);
  svgdetail::Mapper m{0, smax, 0, hmax, 60, width - 20.0, height - 40.0, 20};
  out += svgdetail::axes(m, "singular value", "log10(1+count)");
  out += "<text x=\"" + svgdetail::num(width / 2.0 - 100) + "\" y=\"14\" font-size=\"13\">" +
         title + "</text>\n";
  const double bw = (m.px1 - m.px0) / bins;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    for (int bin = 0; bin < bins; ++bin) {
      const int c = counts[l][static_cast<std::size_t>(bin)];
      if (c == 0) continue;
      const double hh = std::log10(1.0 + c) / hmax * (m.py0 - m.py1);
      out += "<rect x=\"" + svgdetail::num(m.px0 + bin * bw) + "\" y=\"" +
             svgdetail::num(m.py0 - hh) + "\" width=\"" + svgdetail::num(bw) + "\" height=\"" +
             svgdetail::num(hh) + "\" fill=\"" + svgdetail::series_color(l) +
             "\" fill-opacity=\"0.45\"/>\n";
    }
    out += "<text x=\"" + svgdetail::num(width - 120.0) + "\" y=\"" +
           svgdetail::num(30.0 + 16.0 * static_cast<double>(l)) + "\" font-size=\"12\" fill=\"" +
           svgdetail::series_color(l) + "\">" + h.labels[l] + "</text>\n";
  }
  // reference line at 1
  out += "<line x1=\"" + svgdetail::num(m.px(1.0)) + "\" y1=\"" + svgdetail::num(m.py0) +
         "\" x2=\"" + svgdetail::num(m.px(1.0)) + "\" y2=\"" + svgdetail::num(m.py1) +
         "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace conns
