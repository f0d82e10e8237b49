#include "cankd/can_block.hpp"

#include <cmath>

#include "cankd/errors.hpp"
#include "cankd/ops.hpp"

namespace cankd {

AffinityKind affinity_from_string(std::string_view s) {
  if (s == "dot_product") return AffinityKind::DotProduct;
  if (s == "gaussian") return AffinityKind::Gaussian;
  if (s == "embedded_gaussian") return AffinityKind::EmbeddedGaussian;
  throw ConfigInvalid("unknown affinity '" + std::string(s) +
                      "'; expected dot_product, gaussian or embedded_gaussian");
}

std::string to_string(AffinityKind kind) {
  switch (kind) {
    case AffinityKind::DotProduct: return "dot_product";
    case AffinityKind::Gaussian: return "gaussian";
    case AffinityKind::EmbeddedGaussian: return "embedded_gaussian";
  }
  return "?";
}

CanBlockParams init_can_params(int channels, AffinityKind affinity, int pool_scale, bool residual,
                               int embed_dim, Rng& rng) {
  if (channels < 1) throw ConfigInvalid("can block needs at least one channel");
  if (pool_scale != 1 && pool_scale != 2 && pool_scale != 4 && pool_scale != 8) {
    throw ConfigInvalid("pool_scale must be one of {1,2,4,8}, got " + std::to_string(pool_scale));
  }
  const int d = embed_dim > 0 ? embed_dim : channels;
  const double bound = std::sqrt(1.0 / channels);

  CanBlockParams p;
  p.affinity = affinity;
  p.pool_scale = pool_scale;
  p.residual = residual;
  if (affinity != AffinityKind::Gaussian) {
    p.w_theta = random_uniform(Shape{d, channels}, -bound, bound, rng);
    p.w_phi = random_uniform(Shape{d, channels}, -bound, bound, rng);
  }
  p.w_g = random_uniform(Shape{channels, channels}, -bound, bound, rng);
  p.w_z = Tensor(Shape{channels, channels}, 0.0);
  return p;
}

ParamRefs param_refs(CanBlockParams& params, const std::string& prefix) {
  ParamRefs refs;
  if (params.has_embeddings()) {
    refs.push_back({prefix + ".w_theta", &params.w_theta});
    refs.push_back({prefix + ".w_phi", &params.w_phi});
  }
  refs.push_back({prefix + ".w_g", &params.w_g});
  refs.push_back({prefix + ".w_z", &params.w_z});
  return refs;
}

CanBlockVars stage(Tape& tape, const CanBlockParams& params, bool trainable) {
  CanBlockVars v;
  v.affinity = params.affinity;
  v.pool_scale = params.pool_scale;
  v.residual = params.residual;
  if (params.has_embeddings()) {
    v.w_theta = tape.leaf(params.w_theta, trainable);
    v.w_phi = tape.leaf(params.w_phi, trainable);
  }
  v.w_g = tape.leaf(params.w_g, trainable);
  v.w_z = tape.leaf(params.w_z, trainable);
  return v;
}

AffinityResult affinity_matrix(DiffTensor x_emb, DiffTensor y_emb, AffinityKind kind) {
  if (x_emb.shape().rank() != 2 || y_emb.shape().rank() != 2) {
    throw ShapeMismatch("affinity_matrix expects row matrices, got " + x_emb.shape().str() +
                        " and " + y_emb.shape().str());
  }
  if (x_emb.shape()[1] != y_emb.shape()[1]) {
    if (kind == AffinityKind::Gaussian) {
      throw GaussianChannelMismatch(
          "gaussian affinity works on raw feature rows and needs equal channel counts, got " +
          x_emb.shape().str() + " and " + y_emb.shape().str());
    }
    throw ShapeMismatch("affinity embedding dims differ: " + x_emb.shape().str() + " vs " +
                        y_emb.shape().str());
  }
  DiffTensor dots = ops::matmul(x_emb, ops::transpose2d(y_emb));
  if (kind == AffinityKind::DotProduct) return {dots, false};
  return {ops::softmax_rows(dots), true};
}

namespace {

// [C x H x W] map to [N x C] position rows.
DiffTensor rows_of(DiffTensor map) {
  const std::int64_t c = map.shape()[0];
  const std::int64_t n = map.shape()[1] * map.shape()[2];
  return ops::transpose2d(ops::reshape(map, Shape{c, n}));
}

DiffTensor maybe_pool(DiffTensor map, int scale) {
  return scale == 1 ? map : ops::maxpool2d(map, scale);
}

}  // namespace

DiffTensor can_operation(DiffTensor f_s, DiffTensor f_t, const CanBlockVars& vars) {
  if (f_s.shape().rank() != 3 || f_t.shape().rank() != 3) {
    throw ShapeMismatch("can_operation expects [C x H x W] maps, got " + f_s.shape().str() +
                        " and " + f_t.shape().str());
  }
  if (f_s.shape()[1] != f_t.shape()[1] || f_s.shape()[2] != f_t.shape()[2]) {
    throw SpatialMismatch("student map " + f_s.shape().str() + " and teacher map " +
                          f_t.shape().str() + " differ in H x W");
  }
  if (f_s.shape()[0] != f_t.shape()[0]) {
    throw ShapeMismatch("channel counts differ after alignment: " + f_s.shape().str() + " vs " +
                        f_t.shape().str());
  }
  const std::int64_t c = f_s.shape()[0];
  const std::int64_t h = f_s.shape()[1];
  const std::int64_t w = f_s.shape()[2];

  DiffTensor x_rows, y_rows;
  if (vars.affinity == AffinityKind::Gaussian) {
    x_rows = rows_of(f_s);
    y_rows = rows_of(maybe_pool(f_t, vars.pool_scale));
  } else {
    x_rows = rows_of(ops::conv1x1(f_s, vars.w_theta));
    y_rows = rows_of(maybe_pool(ops::conv1x1(f_t, vars.w_phi), vars.pool_scale));
  }
  DiffTensor g_rows = rows_of(maybe_pool(ops::conv1x1(f_t, vars.w_g), vars.pool_scale));

  AffinityResult aff = affinity_matrix(x_rows, y_rows, vars.affinity);
  DiffTensor z_rows = ops::matmul(aff.attention, g_rows);
  if (!aff.row_normalized) {
    const std::int64_t n_p = y_rows.shape()[0];
    z_rows = ops::scale(z_rows, 1.0 / static_cast<double>(n_p));
  }
  return ops::reshape(ops::transpose2d(z_rows), Shape{c, h, w});
}

DiffTensor can_block(DiffTensor f_s, DiffTensor f_t, const CanBlockVars& vars) {
  DiffTensor z = can_operation(f_s, f_t, vars);
  DiffTensor projected = ops::conv1x1(z, vars.w_z);
  return vars.residual ? ops::add(projected, f_s) : projected;
}

ChannelAligner init_aligner(int c_student, int c_teacher, Rng& rng) {
  if (c_student < 1 || c_teacher < 1) throw ConfigInvalid("aligner needs positive channel counts");
  const double bound = std::sqrt(1.0 / c_student);
  return ChannelAligner{random_uniform(Shape{c_teacher, c_student}, -bound, bound, rng)};
}

DiffTensor align_channels(DiffTensor f_s, DiffTensor w_align) {
  return ops::conv1x1(f_s, w_align);
}

}  // namespace cankd
