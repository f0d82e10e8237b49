#include "cankd/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace cankd {
namespace oracle {

namespace {

// 1x1 convolution: out[o][p] = sum_i w[o][i] * f[i][p], all explicit loops.
std::vector<double> project(const std::vector<double>& f, int c_in, int n,
                            const std::vector<double>& w, int c_out) {
  std::vector<double> out(static_cast<std::size_t>(c_out) * n, 0.0);
  for (int o = 0; o < c_out; ++o)
    for (int p = 0; p < n; ++p) {
      double s = 0.0;
      for (int i = 0; i < c_in; ++i) s += w[static_cast<std::size_t>(o * c_in + i)] *
                                           f[static_cast<std::size_t>(i * n + p)];
      out[static_cast<std::size_t>(o * n + p)] = s;
    }
  return out;
}

// Window-scan max pool over a c*h*w map; updates h and w in place.
std::vector<double> pool(const std::vector<double>& f, int c, int& h, int& w, int s) {
  if (s == 1) return f;
  const int oh = (h + s - 1) / s;
  const int ow = (w + s - 1) / s;
  std::vector<double> out(static_cast<std::size_t>(c) * oh * ow);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        bool first = true;
        double best = 0.0;
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx) {
            const int y = oy * s + dy;
            const int x = ox * s + dx;
            if (y >= h || x >= w) continue;
            const double v = f[static_cast<std::size_t>((ch * h + y) * w + x)];
            if (first || v > best) {
              best = v;
              first = false;
            }
          }
        out[static_cast<std::size_t>((ch * oh + oy) * ow + ox)] = best;
      }
  h = oh;
  w = ow;
  return out;
}

// Row i of a channel-major c*n map, gathered into a length-c vector.
std::vector<double> row_of(const std::vector<double>& f, int c, int n, int i) {
  std::vector<double> r(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) r[static_cast<std::size_t>(ch)] =
      f[static_cast<std::size_t>(ch * n + i)];
  return r;
}

}  // namespace

std::vector<double> oracle_affinity_row(const std::vector<double>& x_row,
                                        const std::vector<double>& y_rows, int n_t, int d,
                                        OracleAffinity kind) {
  std::vector<double> xi(static_cast<std::size_t>(n_t));
  for (int j = 0; j < n_t; ++j) {
    double dot = 0.0;
    for (int k = 0; k < d; ++k)
      dot += x_row[static_cast<std::size_t>(k)] * y_rows[static_cast<std::size_t>(j * d + k)];
    xi[static_cast<std::size_t>(j)] = dot;
  }
  if (kind == OracleAffinity::Dot) return xi;
  double denom = 0.0;
  for (int j = 0; j < n_t; ++j) {
    xi[static_cast<std::size_t>(j)] = std::exp(xi[static_cast<std::size_t>(j)]);
    denom += xi[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < n_t; ++j) xi[static_cast<std::size_t>(j)] /= denom;
  return xi;
}

std::vector<double> oracle_can(const std::vector<double>& f_s, const std::vector<double>& f_t,
                               int c, int h, int w, const OracleCanParams& p) {
  const int n_s = h * w;
  const bool embedded = p.affinity != OracleAffinity::Gauss;
  const int d = embedded ? p.d : c;

  // Student-side query rows.
  std::vector<double> x_map = embedded ? project(f_s, c, n_s, p.w_theta, d) : f_s;

  // Teacher-side key rows: projected then pooled, or raw pooled for Gauss.
  int ht = h, wt = w;
  std::vector<double> y_map;
  if (embedded) {
    y_map = pool(project(f_t, c, n_s, p.w_phi, d), d, ht, wt, p.pool_scale);
  } else {
    y_map = pool(f_t, c, ht, wt, p.pool_scale);
  }

  // Teacher-side value rows, always projected by w_g then pooled.
  int hg = h, wg = w;
  std::vector<double> g_map = pool(project(f_t, c, n_s, p.w_g, c), c, hg, wg, p.pool_scale);
  const int n_p = hg * wg;

  std::vector<double> z(static_cast<std::size_t>(c) * n_s, 0.0);
  for (int i = 0; i < n_s; ++i) {
    std::vector<double> x_row = row_of(x_map, d, n_s, i);
    std::vector<double> y_rows(static_cast<std::size_t>(n_p) * d);
    for (int j = 0; j < n_p; ++j)
      for (int k = 0; k < d; ++k)
        y_rows[static_cast<std::size_t>(j * d + k)] = y_map[static_cast<std::size_t>(k * n_p + j)];
    std::vector<double> xi = oracle_affinity_row(x_row, y_rows, n_p, d, p.affinity);
    const double prefactor = p.affinity == OracleAffinity::Dot ? 1.0 / n_p : 1.0;
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int j = 0; j < n_p; ++j)
        acc += xi[static_cast<std::size_t>(j)] * g_map[static_cast<std::size_t>(ch * n_p + j)];
      z[static_cast<std::size_t>(ch * n_s + i)] = prefactor * acc;
    }
  }
  return z;
}

std::vector<double> oracle_can_block(const std::vector<double>& f_s,
                                     const std::vector<double>& f_t, int c, int h, int w,
                                     const OracleCanParams& p) {
  const int n = h * w;
  std::vector<double> z = oracle_can(f_s, f_t, c, h, w, p);
  std::vector<double> out = project(z, c, n, p.w_z, c);
  if (p.residual) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += f_s[i];
  }
  return out;
}

std::vector<double> oracle_instance_norm(const std::vector<double>& f, int c, int h, int w,
                                         double eps) {
  const int n = h * w;
  std::vector<double> out(f.size());
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (int p = 0; p < n; ++p) mean += f[static_cast<std::size_t>(ch * n + p)];
    mean /= n;
    double var = 0.0;
    for (int p = 0; p < n; ++p) {
      const double d = f[static_cast<std::size_t>(ch * n + p)] - mean;
      var += d * d;
    }
    var /= n;
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    for (int p = 0; p < n; ++p)
      out[static_cast<std::size_t>(ch * n + p)] =
          (f[static_cast<std::size_t>(ch * n + p)] - mean) * inv_sigma;
  }
  return out;
}

double oracle_feature_loss(const std::vector<double>& f_t, const std::vector<double>& f_s_star,
                           int c, int h, int w, double eps) {
  std::vector<double> a = oracle_instance_norm(f_t, c, h, w, eps);
  std::vector<double> b = oracle_instance_norm(f_s_star, c, h, w, eps);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double oracle_total_loss(double task, const std::vector<double>& feat_losses, double mu) {
  double feat = 0.0;
  for (double f : feat_losses) feat += f;
  return task + mu * feat;
}

double max_abs_dev(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  if (a.size() != b.size()) return 1e300;
  return m;
}

}  // namespace oracle
}  // namespace cankd
