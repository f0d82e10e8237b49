#include "cankd/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cankd/errors.hpp"

namespace cankd {
namespace ops {

namespace {

void check_same_shape(const char* op, DiffTensor a, DiffTensor b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeMismatch(std::string(op) + ": shapes " + a.shape().str() + " and " +
                        b.shape().str() + " differ");
  }
  if (a.tape != b.tape) throw Error(std::string(op) + ": operands from different records");
}

void check_rank(const char* op, DiffTensor x, int rank) {
  if (x.shape().rank() != rank) {
    throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                        x.shape().str());
  }
}

}  // namespace

DiffTensor add(DiffTensor a, DiffTensor b) {
  check_same_shape("add", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->make_node("add", a.shape(), std::move(out), {a, b},
                           [ai, bi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* da = t.adj_of(adj, ai)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*da)[i] += dz[i];
                             }
                             if (auto* db = t.adj_of(adj, bi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*db)[i] += dz[i];
                             }
                           });
}

DiffTensor sub(DiffTensor a, DiffTensor b) {
  check_same_shape("sub", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->make_node("sub", a.shape(), std::move(out), {a, b},
                           [ai, bi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* da = t.adj_of(adj, ai)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*da)[i] += dz[i];
                             }
                             if (auto* db = t.adj_of(adj, bi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*db)[i] -= dz[i];
                             }
                           });
}

DiffTensor mul(DiffTensor a, DiffTensor b) {
  check_same_shape("mul", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->make_node("mul", a.shape(), std::move(out), {a, b},
                           [ai, bi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             const auto& av = t.values(ai);
                             const auto& bv = t.values(bi);
                             if (auto* da = t.adj_of(adj, ai)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*da)[i] += dz[i] * bv[i];
                             }
                             if (auto* db = t.adj_of(adj, bi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*db)[i] += dz[i] * av[i];
                             }
                           });
}

DiffTensor scale(DiffTensor x, double k) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * xv[i];
  const int xi = x.id;
  return x.tape->make_node("scale", x.shape(), std::move(out), {x},
                           [xi, k](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*dx)[i] += k * dz[i];
                             }
                           });
}

DiffTensor exp(DiffTensor x) {
  const auto& xv = x.values();
  auto out = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = std::exp(xv[i]);
  const int xi = x.id;
  return x.tape->make_node("exp", x.shape(), *out, {x},
                           [xi, out](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i)
                                 (*dx)[i] += dz[i] * (*out)[i];
                             }
                           });
}

DiffTensor relu(DiffTensor x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const int xi = x.id;
  return x.tape->make_node("relu", x.shape(), std::move(out), {x},
                           [xi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               const auto& xv = t.values(xi);
                               for (std::size_t i = 0; i < dz.size(); ++i) {
                                 if (xv[i] > 0.0) (*dx)[i] += dz[i];
                               }
                             }
                           });
}

DiffTensor reduce_sum(DiffTensor x) {
  const auto& xv = x.values();
  double s = 0.0;
  for (double v : xv) s += v;
  const int xi = x.id;
  return x.tape->make_node("reduce_sum", Shape{1}, {s}, {x},
                           [xi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (double& g : *dx) g += dz[0];
                             }
                           });
}

DiffTensor reduce_mean(DiffTensor x) {
  const auto& xv = x.values();
  double s = 0.0;
  for (double v : xv) s += v;
  const double inv_n = 1.0 / static_cast<double>(xv.size());
  const int xi = x.id;
  return x.tape->make_node("reduce_mean", Shape{1}, {s * inv_n}, {x},
                           [xi, inv_n](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (double& g : *dx) g += dz[0] * inv_n;
                             }
                           });
}

DiffTensor reshape(DiffTensor x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeMismatch("reshape: " + x.shape().str() + " has " + std::to_string(x.numel()) +
                        " elements, target " + shape.str() + " has " +
                        std::to_string(shape.numel()));
  }
  const int xi = x.id;
  return x.tape->make_node("reshape", std::move(shape), x.values(), {x},
                           [xi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*dx)[i] += dz[i];
                             }
                           });
}

DiffTensor transpose2d(DiffTensor x) {
  check_rank("transpose2d", x, 2);
  const std::int64_t m = x.shape()[0], p = x.shape()[1];
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < p; ++j)
      out[static_cast<std::size_t>(j * m + i)] = xv[static_cast<std::size_t>(i * p + j)];
  const int xi = x.id;
  return x.tape->make_node("transpose2d", Shape{p, m}, std::move(out), {x},
                           [xi, m, p](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (std::int64_t i = 0; i < m; ++i)
                                 for (std::int64_t j = 0; j < p; ++j)
                                   (*dx)[static_cast<std::size_t>(i * p + j)] +=
                                       dz[static_cast<std::size_t>(j * m + i)];
                             }
                           });
}

DiffTensor matmul(DiffTensor a, DiffTensor b) {
  check_rank("matmul", a, 2);
  check_rank("matmul", b, 2);
  if (a.tape != b.tape) throw Error("matmul: operands from different records");
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  const std::int64_t k2 = b.shape()[0], p = b.shape()[1];
  if (k != k2) {
    throw ShapeMismatch("matmul: inner extents differ, " + a.shape().str() + " vs " +
                        b.shape().str());
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(m * p), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = av[static_cast<std::size_t>(i * k + kk)];
      const std::size_t brow = static_cast<std::size_t>(kk * p);
      const std::size_t orow = static_cast<std::size_t>(i * p);
      for (std::int64_t j = 0; j < p; ++j) out[orow + j] += aik * bv[brow + j];
    }
  }
  const int ai = a.id, bi = b.id;
  return a.tape->make_node(
      "matmul", Shape{m, p}, std::move(out), {a, b},
      [ai, bi, m, k, p](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        const auto& av = t.values(ai);
        const auto& bv = t.values(bi);
        if (auto* da = t.adj_of(adj, ai)) {
          // dA = dZ * B^T
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < p; ++j) {
              const double d = dz[static_cast<std::size_t>(i * p + j)];
              for (std::int64_t kk = 0; kk < k; ++kk)
                (*da)[static_cast<std::size_t>(i * k + kk)] +=
                    d * bv[static_cast<std::size_t>(kk * p + j)];
            }
        }
        if (auto* db = t.adj_of(adj, bi)) {
          // dB = A^T * dZ
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t kk = 0; kk < k; ++kk) {
              const double aik = av[static_cast<std::size_t>(i * k + kk)];
              for (std::int64_t j = 0; j < p; ++j)
                (*db)[static_cast<std::size_t>(kk * p + j)] +=
                    aik * dz[static_cast<std::size_t>(i * p + j)];
            }
        }
      });
}

DiffTensor conv1x1(DiffTensor x, DiffTensor w) {
  check_rank("conv1x1", x, 3);
  check_rank("conv1x1", w, 2);
  if (x.tape != w.tape) throw Error("conv1x1: operands from different records");
  const std::int64_t c_in = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const std::int64_t c_out = w.shape()[0];
  if (w.shape()[1] != c_in) {
    throw ShapeMismatch("conv1x1: weight " + w.shape().str() + " does not match input channels " +
                        std::to_string(c_in));
  }
  const std::int64_t n = h * wd;
  const auto& xv = x.values();
  const auto& wv = w.values();
  std::vector<double> out(static_cast<std::size_t>(c_out * n), 0.0);
  for (std::int64_t o = 0; o < c_out; ++o)
    for (std::int64_t i = 0; i < c_in; ++i) {
      const double wi = wv[static_cast<std::size_t>(o * c_in + i)];
      const std::size_t xrow = static_cast<std::size_t>(i * n);
      const std::size_t orow = static_cast<std::size_t>(o * n);
      for (std::int64_t p = 0; p < n; ++p) out[orow + p] += wi * xv[xrow + p];
    }
  const int xi = x.id, wi_id = w.id;
  return x.tape->make_node(
      "conv1x1", Shape{c_out, h, wd}, std::move(out), {x, w},
      [xi, wi_id, c_in, c_out, n](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        const auto& xv = t.values(xi);
        const auto& wv = t.values(wi_id);
        if (auto* dx = t.adj_of(adj, xi)) {
          for (std::int64_t o = 0; o < c_out; ++o)
            for (std::int64_t i = 0; i < c_in; ++i) {
              const double wi = wv[static_cast<std::size_t>(o * c_in + i)];
              for (std::int64_t p = 0; p < n; ++p)
                (*dx)[static_cast<std::size_t>(i * n + p)] +=
                    wi * dz[static_cast<std::size_t>(o * n + p)];
            }
        }
        if (auto* dw = t.adj_of(adj, wi_id)) {
          for (std::int64_t o = 0; o < c_out; ++o)
            for (std::int64_t i = 0; i < c_in; ++i) {
              double s = 0.0;
              for (std::int64_t p = 0; p < n; ++p)
                s += dz[static_cast<std::size_t>(o * n + p)] *
                     xv[static_cast<std::size_t>(i * n + p)];
              (*dw)[static_cast<std::size_t>(o * c_in + i)] += s;
            }
        }
      });
}

DiffTensor maxpool2d(DiffTensor x, int scale) {
  check_rank("maxpool2d", x, 3);
  if (scale != 2 && scale != 4 && scale != 8) {
    throw InvalidScale("maxpool2d: scale must be one of {2,4,8}, got " + std::to_string(scale));
  }
  const std::int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::int64_t oh = (h + scale - 1) / scale;
  const std::int64_t ow = (w + scale - 1) / scale;
  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(c * oh * ow));
  // Saved for backward: flat input index of each window's (first) maximum.
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double best = 0.0;
        std::int64_t best_idx = -1;
        for (std::int64_t dy = 0; dy < scale; ++dy) {
          const std::int64_t y = oy * scale + dy;
          if (y >= h) break;
          for (std::int64_t dx = 0; dx < scale; ++dx) {
            const std::int64_t xx = ox * scale + dx;
            if (xx >= w) break;
            const std::int64_t idx = (ch * h + y) * w + xx;
            const double v = xv[static_cast<std::size_t>(idx)];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        const std::size_t oidx = static_cast<std::size_t>((ch * oh + oy) * ow + ox);
        out[oidx] = best;
        (*argmax)[oidx] = best_idx;
      }
  const int xi = x.id;
  return x.tape->make_node("maxpool2d", Shape{c, oh, ow}, std::move(out), {x},
                           [xi, argmax](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (std::size_t o = 0; o < dz.size(); ++o)
                                 (*dx)[static_cast<std::size_t>((*argmax)[o])] += dz[o];
                             }
                           });
}

DiffTensor softmax_rows(DiffTensor x) {
  check_rank("softmax_rows", x, 2);
  const std::int64_t m = x.shape()[0], p = x.shape()[1];
  const auto& xv = x.values();
  auto out = std::make_shared<std::vector<double>>(xv.size());
  for (std::int64_t i = 0; i < m; ++i) {
    const std::size_t row = static_cast<std::size_t>(i * p);
    double mx = xv[row];
    for (std::int64_t j = 1; j < p; ++j) mx = std::max(mx, xv[row + j]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < p; ++j) {
      (*out)[row + j] = std::exp(xv[row + j] - mx);
      denom += (*out)[row + j];
    }
    for (std::int64_t j = 0; j < p; ++j) (*out)[row + j] /= denom;
  }
  const int xi = x.id;
  return x.tape->make_node(
      "softmax_rows", x.shape(), *out, {x},
      [xi, out, m, p](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        if (auto* dx = t.adj_of(adj, xi)) {
          const auto& yv = *out;
          for (std::int64_t i = 0; i < m; ++i) {
            const std::size_t row = static_cast<std::size_t>(i * p);
            double dot = 0.0;
            for (std::int64_t j = 0; j < p; ++j) dot += dz[row + j] * yv[row + j];
            for (std::int64_t j = 0; j < p; ++j)
              (*dx)[row + j] += yv[row + j] * (dz[row + j] - dot);
          }
        }
      });
}

DiffTensor conv3x3(DiffTensor x, DiffTensor w) {
  check_rank("conv3x3", x, 3);
  check_rank("conv3x3", w, 4);
  if (x.tape != w.tape) throw Error("conv3x3: operands from different records");
  const std::int64_t c_in = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const std::int64_t c_out = w.shape()[0];
  if (w.shape()[1] != c_in || w.shape()[2] != 3 || w.shape()[3] != 3) {
    throw ShapeMismatch("conv3x3: weight " + w.shape().str() + " does not fit input " +
                        x.shape().str());
  }
  const auto& xv = x.values();
  const auto& wv = w.values();
  std::vector<double> out(static_cast<std::size_t>(c_out * h * wd), 0.0);
  for (std::int64_t o = 0; o < c_out; ++o)
    for (std::int64_t i = 0; i < c_in; ++i)
      for (std::int64_t dy = 0; dy < 3; ++dy)
        for (std::int64_t dx = 0; dx < 3; ++dx) {
          const double wk = wv[static_cast<std::size_t>(((o * c_in + i) * 3 + dy) * 3 + dx)];
          if (wk == 0.0) continue;
          for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t sy = y + dy - 1;
            if (sy < 0 || sy >= h) continue;
            for (std::int64_t xx = 0; xx < wd; ++xx) {
              const std::int64_t sx = xx + dx - 1;
              if (sx < 0 || sx >= wd) continue;
              out[static_cast<std::size_t>((o * h + y) * wd + xx)] +=
                  wk * xv[static_cast<std::size_t>((i * h + sy) * wd + sx)];
            }
          }
        }
  const int xi = x.id, wi = w.id;
  return x.tape->make_node(
      "conv3x3", Shape{c_out, h, wd}, std::move(out), {x, w},
      [xi, wi, c_in, c_out, h, wd](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        const auto& xv = t.values(xi);
        const auto& wv = t.values(wi);
        auto* dx = t.adj_of(adj, xi);
        auto* dw = t.adj_of(adj, wi);
        for (std::int64_t o = 0; o < c_out; ++o)
          for (std::int64_t i = 0; i < c_in; ++i)
            for (std::int64_t dy = 0; dy < 3; ++dy)
              for (std::int64_t dxk = 0; dxk < 3; ++dxk) {
                const std::size_t widx =
                    static_cast<std::size_t>(((o * c_in + i) * 3 + dy) * 3 + dxk);
                const double wk = wv[widx];
                double wgrad = 0.0;
                for (std::int64_t y = 0; y < h; ++y) {
                  const std::int64_t sy = y + dy - 1;
                  if (sy < 0 || sy >= h) continue;
                  for (std::int64_t xx = 0; xx < wd; ++xx) {
                    const std::int64_t sx = xx + dxk - 1;
                    if (sx < 0 || sx >= wd) continue;
                    const double d = dz[static_cast<std::size_t>((o * h + y) * wd + xx)];
                    const std::size_t sidx = static_cast<std::size_t>((i * h + sy) * wd + sx);
                    if (dx) (*dx)[sidx] += wk * d;
                    wgrad += xv[sidx] * d;
                  }
                }
                if (dw) (*dw)[widx] += wgrad;
              }
      });
}

DiffTensor add_channel_bias(DiffTensor x, DiffTensor b) {
  check_rank("add_channel_bias", x, 3);
  check_rank("add_channel_bias", b, 1);
  if (x.tape != b.tape) throw Error("add_channel_bias: operands from different records");
  const std::int64_t c = x.shape()[0], n = x.shape()[1] * x.shape()[2];
  if (b.shape()[0] != c) {
    throw ShapeMismatch("add_channel_bias: bias " + b.shape().str() + " vs input " +
                        x.shape().str());
  }
  const auto& xv = x.values();
  const auto& bv = b.values();
  std::vector<double> out(xv.size());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t p = 0; p < n; ++p)
      out[static_cast<std::size_t>(ch * n + p)] =
          xv[static_cast<std::size_t>(ch * n + p)] + bv[static_cast<std::size_t>(ch)];
  const int xi = x.id, bi = b.id;
  return x.tape->make_node("add_channel_bias", x.shape(), std::move(out), {x, b},
                           [xi, bi, c, n](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                             if (auto* dx = t.adj_of(adj, xi)) {
                               for (std::size_t i = 0; i < dz.size(); ++i) (*dx)[i] += dz[i];
                             }
                             if (auto* db = t.adj_of(adj, bi)) {
                               for (std::int64_t ch = 0; ch < c; ++ch) {
                                 double s = 0.0;
                                 for (std::int64_t p = 0; p < n; ++p)
                                   s += dz[static_cast<std::size_t>(ch * n + p)];
                                 (*db)[static_cast<std::size_t>(ch)] += s;
                               }
                             }
                           });
}

DiffTensor upsample_nearest(DiffTensor x, std::int64_t out_h, std::int64_t out_w) {
  check_rank("upsample_nearest", x, 3);
  if (out_h < 1 || out_w < 1) throw ShapeMismatch("upsample_nearest: target extents must be >= 1");
  const std::int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(c * out_h * out_w));
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < out_h; ++y) {
      const std::int64_t sy = y * h / out_h;
      for (std::int64_t xx = 0; xx < out_w; ++xx) {
        const std::int64_t sx = xx * w / out_w;
        out[static_cast<std::size_t>((ch * out_h + y) * out_w + xx)] =
            xv[static_cast<std::size_t>((ch * h + sy) * w + sx)];
      }
    }
  const int xi = x.id;
  return x.tape->make_node(
      "upsample_nearest", Shape{c, out_h, out_w}, std::move(out), {x},
      [xi, c, h, w, out_h, out_w](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
        if (auto* dx = t.adj_of(adj, xi)) {
          for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < out_h; ++y) {
              const std::int64_t sy = y * h / out_h;
              for (std::int64_t xx = 0; xx < out_w; ++xx) {
                const std::int64_t sx = xx * w / out_w;
                (*dx)[static_cast<std::size_t>((ch * h + sy) * w + sx)] +=
                    dz[static_cast<std::size_t>((ch * out_h + y) * out_w + xx)];
              }
            }
        }
      });
}

DiffTensor detach(DiffTensor x) {
  return x.tape->make_node("detach", x.shape(), x.values(), {}, nullptr);
}

}  // namespace ops
}  // namespace cankd
