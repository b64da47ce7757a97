#pragma once

#include <memory>
#include <vector>

#include "carekit/numkit/graph.hpp"

namespace carekit {

/// Attention record for one (batch element, head) of one layer.
///
/// The three stages are kept as graph nodes so losses can differentiate
/// through them: `pre_logits` (before dropout), `post_logits` (after
/// additive dropout) and `weights` (softmax over visible keys). Rows are query
/// steps, columns are keys; only cells marked in `visible` are part of the
/// distribution, and the per-step accessors return exactly those cells.
template <typename Scalar>
struct HeadTrace {
  Index segment = 0;
  int head = 0;
  Var<Scalar> pre_logits;
  Var<Scalar> post_logits;
  Var<Scalar> weights;
  Matrix<Scalar> keep;
  std::shared_ptr<const MaskMatrix> visible;

  Index steps() const { return visible->rows(); }

  /// Number of attended keys at 0-based query step t.
  Index attended(Index t) const { return visible->row(t).count(); }

  std::vector<double> pre_logits_at(Index t) const { return gather(pre_logits.value(), t); }
  std::vector<double> post_logits_at(Index t) const { return gather(post_logits.value(), t); }
  std::vector<double> weights_at(Index t) const { return gather(weights.value(), t); }
  std::vector<double> keep_at(Index t) const { return gather(keep, t); }

 private:
  std::vector<double> gather(const Matrix<Scalar>& m, Index t) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(attended(t)));
    for (Index j = 0; j < m.cols(); ++j) {
      if ((*visible)(t, j)) out.push_back(static_cast<double>(m(t, j)));
    }
    return out;
  }
};

/// All heads of one layer, ordered by (segment, head).
template <typename Scalar>
struct AttentionTrace {
  int layer = 0;
  std::vector<HeadTrace<Scalar>> heads;
};

}  // namespace carekit
