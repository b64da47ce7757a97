#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "carekit/numkit/errors.hpp"
#include "carekit/numkit/tensor.hpp"

namespace carekit {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter, plus the step count.
template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  long step = 0;
};

/// One bias-corrected Adam update over `params` using their accumulated
/// gradients. Parameters that never received a gradient are left untouched.
template <typename Scalar>
void adam_step(std::span<const std::shared_ptr<Tensor<Scalar>>> params, AdamState<Scalar>& state,
               double lr, const AdamOptions& options = {}) {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.m.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  ++state.step;
  const Scalar b1 = Scalar(options.beta1), b2 = Scalar(options.beta2);
  const Scalar c1 = Scalar(1) - Scalar(std::pow(options.beta1, double(state.step)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(options.beta2, double(state.step)));
  const Scalar step_size = Scalar(lr);
  const Scalar eps = Scalar(options.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Scalar>& p = *params[i];
    if (!p.requires_grad() || !p.has_grad()) continue;
    const auto& g = p.grad();
    if (g.rows() != state.m[i].rows() || g.cols() != state.m[i].cols()) {
      throw DimensionError("optimizer state shape mismatch at tensor " + std::to_string(i));
    }
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.data().array() -= step_size * (state.m[i].array() / c1) /
                        ((state.v[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace carekit
