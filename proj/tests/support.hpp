#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "carekit/numkit/graph.hpp"
#include "carekit/numkit/ops.hpp"
#include "carekit/numkit/rng.hpp"

namespace carekit::testing {

inline Matrix<double> random_matrix(Index rows, Index cols, CounterRng& rng, double scale = 1.0) {
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline std::shared_ptr<Tensor<double>> leaf(Matrix<double> m) {
  return std::make_shared<Tensor<double>>(Tensor<double>::from_matrix(std::move(m), true));
}

/// sum(x * W) with W drawn from a fixed seed, so every output entry gets an
/// O(1) weight and no gradient entry is accidentally tiny.
inline Var<double> probe(const Var<double>& x, std::uint64_t seed = 99) {
  CounterRng rng(seed);
  return sum(mul(x, x.graph().constant(random_matrix(x.rows(), x.cols(), rng))));
}

using Builder = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

struct GradReport {
  double max_rel = 0;
  std::string where;
  long entries = 0;
};

/// Central differences over every entry of every tensor in `params`.
/// Relative error |a - n| / max(|a|, |n|, 1e-6).
inline GradReport finite_difference_check(const std::vector<std::shared_ptr<Tensor<double>>>& params,
                                          const Builder& build, double h = 1e-5) {
  auto evaluate = [&]() {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& p : params) vars.push_back(g.input(p));
    return build(g, vars).item();
  };
  for (const auto& p : params) p->clear_grad();
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& p : params) vars.push_back(g.input(p));
    g.backward(build(g, vars));
  }
  GradReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const Matrix<double> analytic =
        p.has_grad() ? Matrix<double>(p.grad()) : Matrix<double>::Zero(p.rows(), p.cols());
    for (Index i = 0; i < p.size(); ++i) {
      const double saved = p.data().data()[i];
      p.data().data()[i] = saved + h;
      const double up = evaluate();
      p.data().data()[i] = saved - h;
      const double down = evaluate();
      p.data().data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++report.entries;
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.where = "tensor " + std::to_string(k) + " entry " + std::to_string(i) +
                       " analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return report;
}

}  // namespace carekit::testing
