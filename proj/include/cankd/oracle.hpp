#pragma once

#include <string>
#include <vector>

namespace cankd {
namespace oracle {

// Reference implementations written as explicit nested loops over plain
// float arrays. Nothing here touches the tensor library or the autodiff
// record; agreement with the main modules is what the equivalence tests
// assert. Forward values only.

struct OracleReport {
  std::string case_id;
  double max_abs_dev = 0.0;
  bool pass = false;
};

enum class OracleAffinity { Dot, Gauss, EmbGauss };

struct OracleCanParams {
  std::vector<double> w_theta;  // d*c, empty for Gauss
  std::vector<double> w_phi;    // d*c, empty for Gauss
  std::vector<double> w_g;      // c*c
  std::vector<double> w_z;      // c*c
  int d = 0;
  OracleAffinity affinity = OracleAffinity::Dot;
  int pool_scale = 1;
  bool residual = true;
};

// Attention weights for one student row against all pooled teacher rows.
// Exposed so tests can assert the Gauss row-sum property directly.
std::vector<double> oracle_affinity_row(const std::vector<double>& x_row,
                                        const std::vector<double>& y_rows, int n_t, int d,
                                        OracleAffinity kind);

// Z of the Can operation, shape c*h*w flattened row-major.
std::vector<double> oracle_can(const std::vector<double>& f_s, const std::vector<double>& f_t,
                               int c, int h, int w, const OracleCanParams& p);

// W_Z-projected Z plus optional residual.
std::vector<double> oracle_can_block(const std::vector<double>& f_s,
                                     const std::vector<double>& f_t, int c, int h, int w,
                                     const OracleCanParams& p);

std::vector<double> oracle_instance_norm(const std::vector<double>& f, int c, int h, int w,
                                         double eps);

double oracle_feature_loss(const std::vector<double>& f_t, const std::vector<double>& f_s_star,
                           int c, int h, int w, double eps);

double oracle_total_loss(double task, const std::vector<double>& feat_losses, double mu);

double max_abs_dev(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace oracle
}  // namespace cankd
