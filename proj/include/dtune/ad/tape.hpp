#ifndef DTUNE_AD_TAPE_HPP_
#define DTUNE_AD_TAPE_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dtune/ad/param_set.hpp"
#include "dtune/rng.hpp"

namespace dtune::ad {

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  double scalar() const;
};

// Records matrix-valued operations for reverse-mode differentiation.
//
// Leaves created with param() route their gradient into the owning
// ParamSet's accumulator on backward(); leaves created with constant() or
// frozen() receive no gradient. Nodes that depend on no trainable leaf are
// skipped during the reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var param(ParamSet& params, std::size_t index);
  Var param(ParamSet& params, std::string_view name);
  // Parameter value used as a constant: gradients stop here.
  Var frozen(const ParamSet& params, std::string_view name);
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() loss w.r.t. v; zero-sized if v does not
  // require a gradient.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Reverse sweep from a 1x1 loss. Parameter gradients are added to the
  // ParamSet accumulators, so repeated calls accumulate.
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Used by op implementations.
  Var record(Matrix value, std::vector<int> parents, BackwardFn fn);
  Matrix& grad_mut(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Matrix& value_of(int id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }
  bool needs_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
    Param* target = nullptr;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

// ---- Elementwise and linear algebra ----
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a (n x m) plus a 1 x m row broadcast down the rows.
Var add_row(Var a, Var row);
// y = x W + b with W (in x out) and b (1 x out).
Var linear(Var x, Var w, Var b);
Var relu(Var a);
Var tanh(Var a);
// Per-column affine map with constant coefficients: y[:, j] = a[:, j]*k[j]+c[j].
Var affine_cols(Var a, const RowVector& k, const RowVector& c);

// Row-wise layer normalization with gain and shift rows (1 x m).
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);

// ---- Shape manipulation ----
Var concat_cols(Var a, Var b);
Var select_rows(Var a, std::vector<int> rows);
// Rows of the output cycle through the parts: out[k*P + p] = parts[p][k].
Var interleave_rows(const std::vector<Var>& parts);
// out[i] = table[indices[i]].
Var gather_rows(Var table, std::vector<int> indices);

// ---- Reductions ----
Var sum(Var a);
// Scalar sum of each row weighted by w (length = rows of a).
Var weighted_row_sum(Var a, const Vector& w);

// ---- Sequence model pieces ----
struct AttentionShape {
  int batch = 1;
  int seq_len = 1;
  int heads = 1;
};

// Causal multi-head attention on packed projections.
//
// qkv holds batch*seq_len rows and 3*d columns laid out [Q | K | V]. Query i
// attends to keys j <= i whose key_valid flag is set; a query always sees
// itself so padded rows stay finite. Returns batch*seq_len x d.
Var causal_attention(Var qkv, const AttentionShape& shape,
                     std::span<const char> key_valid);

// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);

}  // namespace dtune::ad

#endif  // DTUNE_AD_TAPE_HPP_
