#pragma once

#include <string>
#include <string_view>

#include "cankd/rng.hpp"
#include "cankd/tape.hpp"
#include "cankd/tensor.hpp"

namespace cankd {

enum class AffinityKind { DotProduct, Gaussian, EmbeddedGaussian };

AffinityKind affinity_from_string(std::string_view s);
std::string to_string(AffinityKind kind);

// Trainable weights plus the structural choices of one Can block.
// Gaussian affinity works on raw feature rows, so w_theta/w_phi stay empty
// for that kind; w_g and w_z are always present.
struct CanBlockParams {
  Tensor w_theta;  // [D x C], empty for Gaussian
  Tensor w_phi;    // [D x C], empty for Gaussian
  Tensor w_g;      // [C x C]
  Tensor w_z;      // [C x C]
  AffinityKind affinity = AffinityKind::DotProduct;
  int pool_scale = 1;  // 1 = no pooling, else 2/4/8
  bool residual = true;

  bool has_embeddings() const { return affinity != AffinityKind::Gaussian; }
};

// embed_dim = 0 picks D = channels. w_theta/w_phi/w_g are uniform in
// +-sqrt(1/C_in); w_z starts at zero so the block opens as an identity
// when the residual is on.
CanBlockParams init_can_params(int channels, AffinityKind affinity, int pool_scale, bool residual,
                               int embed_dim, Rng& rng);

// Flat ordered view for the optimizer and the checkpoint writer.
ParamRefs param_refs(CanBlockParams& params, const std::string& prefix);

// The same block staged onto a tape for one forward/backward pass.
struct CanBlockVars {
  DiffTensor w_theta;
  DiffTensor w_phi;
  DiffTensor w_g;
  DiffTensor w_z;
  AffinityKind affinity = AffinityKind::DotProduct;
  int pool_scale = 1;
  bool residual = true;
};

CanBlockVars stage(Tape& tape, const CanBlockParams& params, bool trainable = true);

// Pairwise attention between student rows and teacher rows.
struct AffinityResult {
  DiffTensor attention;       // [N_s x N_t]
  bool row_normalized = false;  // true: rows already sum to 1; false: caller
                                // applies the 1/N_t prefactor
};

// x_emb [N_s x D], y_emb [N_t x D]. DotProduct returns raw dot products;
// Gaussian and EmbeddedGaussian return exp(dot) normalized per row. For
// Gaussian the rows are raw (unembedded) features and the channel counts
// must agree.
AffinityResult affinity_matrix(DiffTensor x_emb, DiffTensor y_emb, AffinityKind kind);

// Z: each student position aggregates pooled teacher values weighted by
// affinity. Inputs are [C x H x W] with identical extents.
DiffTensor can_operation(DiffTensor f_s, DiffTensor f_t, const CanBlockVars& vars);

// w_z-projected Z plus the student map when residual is on.
DiffTensor can_block(DiffTensor f_s, DiffTensor f_t, const CanBlockVars& vars);

// Student-to-teacher channel projection applied before distillation when
// widths differ.
struct ChannelAligner {
  Tensor w_align;  // [C_T x C_S]
};

ChannelAligner init_aligner(int c_student, int c_teacher, Rng& rng);

DiffTensor align_channels(DiffTensor f_s, DiffTensor w_align);

}  // namespace cankd
