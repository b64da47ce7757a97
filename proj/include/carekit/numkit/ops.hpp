#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "carekit/numkit/graph.hpp"

namespace carekit {

namespace detail {

template <typename Scalar>
void require_same_graph(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands live on different graphs");
}

template <typename Scalar>
void require_same_dims(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_graph(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename Scalar>
void require_row(const char* op, const Var<Scalar>& x, const Var<Scalar>& row) {
  require_same_graph(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError(std::string(op) + ": row operand " + shape_string(row.shape()) +
                         " does not match last dim " + std::to_string(x.cols()));
  }
}

inline Shape matrix_shape(Index rows, Index cols) { return {rows, cols}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// a[m x k] * b[k x n].
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_graph(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Matrix<Scalar> out = a.value() * b.value();
  const NodeId ia = a.id(), ib = b.id();
  return a.graph().record(
      "matmul", std::move(out), detail::matrix_shape(a.rows(), b.cols()), {ia, ib},
      [ia, ib](Graph<Scalar>& g, NodeId self) {
        const auto& go = g.grad(self);
        if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib).transpose();
        if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * go;
      });
}

/// a[m x k] * b[n x k]^T without materializing the transpose.
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_graph(a, b);
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  }
  Matrix<Scalar> out = a.value() * b.value().transpose();
  const NodeId ia = a.id(), ib = b.id();
  return a.graph().record(
      "matmul_nt", std::move(out), detail::matrix_shape(a.rows(), b.rows()), {ia, ib},
      [ia, ib](Graph<Scalar>& g, NodeId self) {
        const auto& go = g.grad(self);
        if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib);
        if (g.needs_grad(ib)) g.grad(ib).noalias() += go.transpose() * g.value(ia);
      });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_dims("add", a, b);
  Matrix<Scalar> out = a.value() + b.value();
  const NodeId ia = a.id(), ib = b.id();
  return a.graph().record("add", std::move(out), a.shape(), {ia, ib},
                          [ia, ib](Graph<Scalar>& g, NodeId self) {
                            const auto& go = g.grad(self);
                            if (g.needs_grad(ia)) g.grad(ia) += go;
                            if (g.needs_grad(ib)) g.grad(ib) += go;
                          });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_dims("sub", a, b);
  Matrix<Scalar> out = a.value() - b.value();
  const NodeId ia = a.id(), ib = b.id();
  return a.graph().record("sub", std::move(out), a.shape(), {ia, ib},
                          [ia, ib](Graph<Scalar>& g, NodeId self) {
                            const auto& go = g.grad(self);
                            if (g.needs_grad(ia)) g.grad(ia) += go;
                            if (g.needs_grad(ib)) g.grad(ib) -= go;
                          });
}

/// Hadamard product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_dims("mul", a, b);
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  const NodeId ia = a.id(), ib = b.id();
  return a.graph().record("mul", std::move(out), a.shape(), {ia, ib},
                          [ia, ib](Graph<Scalar>& g, NodeId self) {
                            const auto& go = g.grad(self);
                            if (g.needs_grad(ia)) g.grad(ia) += go.cwiseProduct(g.value(ib));
                            if (g.needs_grad(ib)) g.grad(ib) += go.cwiseProduct(g.value(ia));
                          });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  Matrix<Scalar> out = x.value() * factor;
  const NodeId ix = x.id();
  return x.graph().record("scale", std::move(out), x.shape(), {ix},
                          [ix, factor](Graph<Scalar>& g, NodeId self) {
                            g.grad(ix) += g.grad(self) * factor;
                          });
}

/// x + s where s is a single-element node broadcast over x.
template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& x, const Var<Scalar>& s) {
  detail::require_same_graph(x, s);
  if (s.value().size() != 1) throw DimensionError("add_scalar: operand is not a scalar");
  Matrix<Scalar> out = (x.value().array() + s.item()).matrix();
  const NodeId ix = x.id(), is = s.id();
  return x.graph().record("add_scalar", std::move(out), x.shape(), {ix, is},
                          [ix, is](Graph<Scalar>& g, NodeId self) {
                            const auto& go = g.grad(self);
                            if (g.needs_grad(ix)) g.grad(ix) += go;
                            if (g.needs_grad(is)) g.grad(is)(0, 0) += go.sum();
                          });
}

/// x + row, broadcasting a [1 x n] row over every row of x (last-dim affine).
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& row) {
  detail::require_row("add_row", x, row);
  Matrix<Scalar> out = x.value().rowwise() + row.value().row(0);
  const NodeId ix = x.id(), ir = row.id();
  return x.graph().record("add_row", std::move(out), x.shape(), {ix, ir},
                          [ix, ir](Graph<Scalar>& g, NodeId self) {
                            const auto& go = g.grad(self);
                            if (g.needs_grad(ix)) g.grad(ix) += go;
                            if (g.needs_grad(ir)) g.grad(ir) += go.colwise().sum();
                          });
}

/// x * row elementwise, broadcasting a [1 x n] row over every row of x.
template <typename Scalar>
Var<Scalar> mul_row(const Var<Scalar>& x, const Var<Scalar>& row) {
  detail::require_row("mul_row", x, row);
  Matrix<Scalar> out = (x.value().array().rowwise() * row.value().row(0).array()).matrix();
  const NodeId ix = x.id(), ir = row.id();
  return x.graph().record(
      "mul_row", std::move(out), x.shape(), {ix, ir}, [ix, ir](Graph<Scalar>& g, NodeId self) {
        const auto& go = g.grad(self);
        if (g.needs_grad(ix)) {
          g.grad(ix) += (go.array().rowwise() * g.value(ir).row(0).array()).matrix();
        }
        if (g.needs_grad(ir)) g.grad(ir) += go.cwiseProduct(g.value(ix)).colwise().sum();
      });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) { return scale(a, s); }
template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

/// GELU, tanh approximation (GPT-2 form).
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  static constexpr Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
  static constexpr Scalar c = Scalar(0.044715);
  const auto& xv = x.value().array();
  Matrix<Scalar> inner = (k * (xv + c * xv.cube())).tanh().matrix();
  Matrix<Scalar> out = (Scalar(0.5) * xv * (Scalar(1) + inner.array())).matrix();
  const NodeId ix = x.id();
  return x.graph().record(
      "gelu", std::move(out), x.shape(), {ix},
      [ix, inner = std::move(inner)](Graph<Scalar>& g, NodeId self) {
        const auto xa = g.value(ix).array();
        const auto th = inner.array();
        const auto dinner = k * (Scalar(1) + Scalar(3) * c * xa.square());
        const auto d = Scalar(0.5) * (Scalar(1) + th) +
                       Scalar(0.5) * xa * (Scalar(1) - th.square()) * dinner;
        g.grad(ix) += (g.grad(self).array() * d).matrix();
      });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-x.value().array()).exp())).matrix();
  const NodeId ix = x.id();
  return x.graph().record("sigmoid", std::move(out), x.shape(), {ix},
                          [ix](Graph<Scalar>& g, NodeId self) {
                            const auto y = g.value(self).array();
                            g.grad(ix) += (g.grad(self).array() * y * (Scalar(1) - y)).matrix();
                          });
}

namespace detail {

/// Row softmax restricted to `mask` (all columns when mask is null).
template <typename Scalar>
Matrix<Scalar> masked_softmax_rows(const Matrix<Scalar>& x, const MaskMatrix* mask) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    bool any = false;
    for (Index c = 0; c < x.cols(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      peak = std::max(peak, x(r, c));
      any = true;
    }
    if (!any) throw DimensionError("softmax: row " + std::to_string(r) + " has no visible entry");
    Scalar total = 0;
    for (Index c = 0; c < x.cols(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      const Scalar e = std::exp(x(r, c) - peak);
      out(r, c) = e;
      total += e;
    }
    out.row(r) /= total;
  }
  return out;
}

template <typename Scalar>
void softmax_backward(Graph<Scalar>& g, NodeId in, NodeId self) {
  const auto& y = g.value(self);
  const auto& go = g.grad(self);
  const Matrix<Scalar> dot = go.cwiseProduct(y).rowwise().sum();
  g.grad(in) += (y.array() * (go.colwise() - dot.col(0)).array()).matrix();
}

}  // namespace detail

/// Softmax over the last dimension, max-shifted for stability.
template <typename Scalar>
Var<Scalar> softmax_lastdim(const Var<Scalar>& x) {
  if (x.cols() < 1) throw DimensionError("softmax_lastdim: empty last dimension");
  Matrix<Scalar> out = detail::masked_softmax_rows<Scalar>(x.value(), nullptr);
  const NodeId ix = x.id();
  return x.graph().record("softmax", std::move(out), x.shape(), {ix},
                          [ix](Graph<Scalar>& g, NodeId self) {
                            detail::softmax_backward(g, ix, self);
                          });
}

/// Softmax over the visible entries of each row; hidden entries come out as
/// exact zeros and never influence the normalizer.
template <typename Scalar>
Var<Scalar> masked_softmax_lastdim(const Var<Scalar>& x, const MaskMatrix& visible) {
  if (visible.rows() != x.rows() || visible.cols() != x.cols()) {
    throw DimensionError("masked_softmax: mask shape mismatch");
  }
  Matrix<Scalar> out = detail::masked_softmax_rows<Scalar>(x.value(), &visible);
  const NodeId ix = x.id();
  return x.graph().record("masked_softmax", std::move(out), x.shape(), {ix},
                          [ix](Graph<Scalar>& g, NodeId self) {
                            detail::softmax_backward(g, ix, self);
                          });
}

/// Per-row normalization to zero mean / unit variance, then gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                       Scalar eps) {
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  detail::require_row("layer_norm", x, gain);
  detail::require_row("layer_norm", x, bias);
  const Index n = x.cols();
  const auto& xv = x.value();
  Matrix<Scalar> xhat(xv.rows(), n);
  Matrix<Scalar> rstd(xv.rows(), 1);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mu = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mu).square().sum() / Scalar(n);
    rstd(r, 0) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * rstd(r, 0);
  }
  Matrix<Scalar> out =
      (xhat.array().rowwise() * gain.value().row(0).array()).matrix().rowwise() +
      bias.value().row(0);
  const NodeId ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(
      "layer_norm", std::move(out), x.shape(), {ix, ig, ib},
      [ix, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<Scalar>& g,
                                                                    NodeId self) {
        const auto& go = g.grad(self);
        if (g.needs_grad(ig)) g.grad(ig) += go.cwiseProduct(xhat).colwise().sum();
        if (g.needs_grad(ib)) g.grad(ib) += go.colwise().sum();
        if (g.needs_grad(ix)) {
          const Matrix<Scalar> dxhat =
              (go.array().rowwise() * g.value(ig).row(0).array()).matrix();
          const Scalar inv_n = Scalar(1) / Scalar(xhat.cols());
          auto& gx = g.grad(ix);
          for (Index r = 0; r < xhat.rows(); ++r) {
            const Scalar mean_d = dxhat.row(r).sum() * inv_n;
            const Scalar mean_dx = dxhat.row(r).dot(xhat.row(r)) * inv_n;
            gx.row(r).array() +=
                rstd(r, 0) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  const NodeId ix = x.id();
  return x.graph().record("sum", std::move(out), {}, {ix}, [ix](Graph<Scalar>& g, NodeId self) {
    g.grad(ix).array() += g.grad(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return scale(sum(x), Scalar(1) / Scalar(x.value().size()));
}

/// Sum of absolute values; the subgradient at 0 is taken as 0.
template <typename Scalar>
Var<Scalar> l1_norm(const Var<Scalar>& x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().cwiseAbs().sum();
  const NodeId ix = x.id();
  return x.graph().record("l1_norm", std::move(out), {}, {ix},
                          [ix](Graph<Scalar>& g, NodeId self) {
                            g.grad(ix) += g.value(ix).cwiseSign() * g.grad(self)(0, 0);
                          });
}

/// Mean over mask-true rows of -log softmax(logits)[target].
template <typename Scalar>
Var<Scalar> cross_entropy_masked(const Var<Scalar>& logits, std::span<const std::int32_t> targets,
                                 std::span<const std::uint8_t> mask) {
  const Index rows = logits.rows(), vocab = logits.cols();
  if (static_cast<Index>(targets.size()) != rows || static_cast<Index>(mask.size()) != rows) {
    throw DimensionError("cross_entropy_masked: targets/mask length " +
                         std::to_string(targets.size()) + "/" + std::to_string(mask.size()) +
                         " != rows " + std::to_string(rows));
  }
  Index count = 0;
  for (Index r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (targets[r] < 0 || targets[r] >= vocab) {
      throw DomainError("cross_entropy_masked: target " + std::to_string(targets[r]) +
                        " outside [0," + std::to_string(vocab) + ")");
    }
    ++count;
  }
  if (count == 0) throw EmptyLossError("cross_entropy_masked: every position is masked out");

  const auto& z = logits.value();
  Matrix<Scalar> probs = Matrix<Scalar>::Zero(rows, vocab);
  Scalar total = 0;
  for (Index r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const Scalar peak = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - peak).exp();
    const Scalar norm = probs.row(r).sum();
    probs.row(r) /= norm;
    total += (std::log(norm) + peak) - z(r, targets[r]);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(count);
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  const NodeId il = logits.id();
  return logits.graph().record(
      "cross_entropy_masked", std::move(out), {}, {il},
      [il, count, probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk)](
          Graph<Scalar>& g, NodeId self) {
        const Scalar w = g.grad(self)(0, 0) / Scalar(count);
        auto& gl = g.grad(il);
        for (Index r = 0; r < probs.rows(); ++r) {
          if (!msk[r]) continue;
          gl.row(r) += probs.row(r) * w;
          gl(r, tgt[r]) -= w;
        }
      });
}

/// Elementwise binary entropy -p log p - (1-p) log(1-p), p in (0, 1).
template <typename Scalar>
Var<Scalar> binary_entropy(const Var<Scalar>& p) {
  const auto& pv = p.value().array();
  if ((pv <= Scalar(0)).any() || (pv >= Scalar(1)).any()) {
    throw DomainError("binary_entropy: probabilities must lie strictly inside (0,1)");
  }
  Matrix<Scalar> out = (-pv * pv.log() - (Scalar(1) - pv) * (Scalar(1) - pv).log()).matrix();
  const NodeId ip = p.id();
  return p.graph().record("binary_entropy", std::move(out), p.shape(), {ip},
                          [ip](Graph<Scalar>& g, NodeId self) {
                            const auto pa = g.value(ip).array();
                            g.grad(ip) += (g.grad(self).array() *
                                           ((Scalar(1) - pa) / pa).log())
                                              .matrix();
                          });
}

/// Sum over all entries of -a log a, with 0 log 0 = 0. Used on attention
/// weights, whose hidden entries are exact zeros.
template <typename Scalar>
Var<Scalar> shannon_entropy_sum(const Var<Scalar>& a) {
  const auto& av = a.value();
  Matrix<Scalar> out(1, 1);
  Scalar total = 0;
  for (Index i = 0; i < av.size(); ++i) {
    const Scalar v = av.data()[i];
    if (v < 0) throw DomainError("shannon_entropy_sum: negative probability");
    if (v > 0) total -= v * std::log(v);
  }
  out(0, 0) = total;
  const NodeId ia = a.id();
  return a.graph().record("shannon_entropy_sum", std::move(out), {}, {ia},
                          [ia](Graph<Scalar>& g, NodeId self) {
                            const auto& av = g.value(ia);
                            auto& ga = g.grad(ia);
                            const Scalar go = g.grad(self)(0, 0);
                            for (Index i = 0; i < av.size(); ++i) {
                              const Scalar v = av.data()[i];
                              if (v > 0) ga.data()[i] -= go * (std::log(v) + Scalar(1));
                            }
                          });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

/// Gathers rows of `table` by id (token / position embedding lookup).
template <typename Scalar>
Var<Scalar> embedding(const Var<Scalar>& table, std::span<const std::int32_t> ids) {
  const auto& t = table.value();
  Matrix<Scalar> out(static_cast<Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw VocabError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(t.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = t.row(ids[i]);
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  const NodeId it = table.id();
  return table.graph().record(
      "embedding", std::move(out), {static_cast<Index>(ids.size()), t.cols()}, {it},
      [it, idv = std::move(idv)](Graph<Scalar>& g, NodeId self) {
        const auto& go = g.grad(self);
        auto& gt = g.grad(it);
        for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += go.row(static_cast<Index>(i));
      });
}

/// Rectangular block view [row0, row0+rows) x [col0, col0+cols), copied.
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, Index row0, Index rows, Index col0, Index cols) {
  if (row0 < 0 || col0 < 0 || rows <= 0 || cols <= 0 || row0 + rows > x.rows() ||
      col0 + cols > x.cols()) {
    throw DimensionError("slice: block out of range for " + shape_string(x.shape()));
  }
  Matrix<Scalar> out = x.value().block(row0, col0, rows, cols);
  const NodeId ix = x.id();
  return x.graph().record("slice", std::move(out), {rows, cols}, {ix},
                          [ix, row0, col0, rows, cols](Graph<Scalar>& g, NodeId self) {
                            g.grad(ix).block(row0, col0, rows, cols) += g.grad(self);
                          });
}

/// A block placed at (row, col) inside a larger matrix.
template <typename Scalar>
struct Placement {
  Var<Scalar> part;
  Index row = 0;
  Index col = 0;
};

/// Builds a [rows x cols] matrix from non-overlapping blocks; uncovered
/// entries are zero.
template <typename Scalar>
Var<Scalar> assemble(Graph<Scalar>& graph, Index rows, Index cols,
                     const std::vector<Placement<Scalar>>& parts) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(rows, cols);
  std::vector<NodeId> inputs;
  std::vector<std::array<Index, 4>> boxes;
  for (const auto& p : parts) {
    if (&p.part.graph() != &graph) throw ContractError("assemble: part from another graph");
    if (p.row < 0 || p.col < 0 || p.row + p.part.rows() > rows || p.col + p.part.cols() > cols) {
      throw DimensionError("assemble: block does not fit");
    }
    out.block(p.row, p.col, p.part.rows(), p.part.cols()) = p.part.value();
    inputs.push_back(p.part.id());
    boxes.push_back({p.row, p.col, p.part.rows(), p.part.cols()});
  }
  std::vector<NodeId> ids = inputs;
  return graph.record("assemble", std::move(out), {rows, cols}, std::move(inputs),
                      [ids = std::move(ids), boxes = std::move(boxes)](Graph<Scalar>& g,
                                                                        NodeId self) {
                        const auto& go = g.grad(self);
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                          if (!g.needs_grad(ids[i])) continue;
                          const auto& b = boxes[i];
                          g.grad(ids[i]) += go.block(b[0], b[1], b[2], b[3]);
                        }
                      });
}

}  // namespace carekit
