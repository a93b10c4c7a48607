#pragma once

// Shared helpers for the test suites: random stack builders and a central
// finite-difference gradient comparison.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "casdet/head.hpp"
#include "casdet/rng.hpp"

namespace casdet::testutil {

inline DenseStack random_dense_stack(BranchTag tag, int layers, int frames, int dim, Rng& rng,
                                     double scale = 1.0) {
  DenseStack s;
  s.tag = tag;
  s.layers.resize(static_cast<size_t>(layers));
  for (auto& m : s.layers) {
    m.resize(frames, dim);
    for (int t = 0; t < frames; ++t) {
      for (int d = 0; d < dim; ++d) m(t, d) = scale * rng.normal();
    }
  }
  return s;
}

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  size_t coords_checked = 0;
};

// Central finite differences against analytic gradients over every tensor.
// Tensors with at most `full_limit` entries are checked exhaustively; larger
// ones on `sample_count` deterministically chosen coordinates. Coordinates
// where both sides sit below the FD noise floor count as agreeing: shift
// invariance of the softmaxes makes the score/attention biases exact zeros,
// where central differences return pure rounding noise.
inline FdReport fd_check(std::vector<NamedTensor>& params_t, std::vector<NamedTensor>& grads_t,
                         const std::function<double()>& loss_fn, double h = 1e-5,
                         Eigen::Index full_limit = 1024, Eigen::Index sample_count = 400,
                         uint64_t pick_seed = 2024) {
  constexpr double kNoiseFloor = 1e-7;
  FdReport rep;
  for (size_t ti = 0; ti < params_t.size(); ++ti) {
    MatrixXd& theta = *params_t[ti].tensor;
    const MatrixXd& ana = *grads_t[ti].tensor;
    const Eigen::Index n = theta.size();
    std::vector<Eigen::Index> coords;
    if (n <= full_limit) {
      coords.resize(static_cast<size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      Rng rng(derive_seed(pick_seed, {ti}));
      std::vector<Eigen::Index> all(static_cast<size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + sample_count);
    }
    for (Eigen::Index flat : coords) {
      double* cell = theta.data() + flat;
      const double saved = *cell;
      *cell = saved + h;
      const double plus = loss_fn();
      *cell = saved - h;
      const double minus = loss_fn();
      *cell = saved;
      const double fd = (plus - minus) / (2.0 * h);
      const double a = ana.data()[flat];
      if (std::abs(a) < kNoiseFloor && std::abs(fd) < kNoiseFloor) {
        ++rep.coords_checked;
        continue;
      }
      const double rel = std::abs(a - fd) / (std::abs(fd) + 1e-8);
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_tensor = params_t[ti].name;
      }
      ++rep.coords_checked;
    }
  }
  return rep;
}

}  // namespace casdet::testutil
