#include "dtune/ad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "dtune/errors.hpp"

namespace dtune::ad {

namespace {

void check_same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw StateError("use of an unrecorded Var");
  if (a.tape != b.tape) throw StateError("operands recorded on different tapes");
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

}  // namespace

const Matrix& Var::value() const {
  if (!valid()) throw StateError("use of an unrecorded Var");
  return tape->value(*this);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("scalar() on a non-1x1 node");
  return v(0, 0);
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id < 0 ||
      static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw StateError("Var does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 ||
      static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw StateError("Var does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::record(Matrix value, std::vector<int> parents, BackwardFn fn) {
  bool rg = false;
  for (int p : parents) rg = rg || nodes_[static_cast<std::size_t>(p)].requires_grad;
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(ParamSet& params, std::size_t index) {
  Param& p = params[index];
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.target = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(ParamSet& params, std::string_view name) {
  return param(params, params.index(name));
}

Var Tape::frozen(const ParamSet& params, std::string_view name) {
  return constant(params.at(name).value);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) const { return node(v).grad; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::backward(Var loss) {
  if (nodes_.empty() || !loss.valid()) {
    throw StateError("backward called before any forward pass was recorded");
  }
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw DimensionError("backward requires a 1x1 loss");
  }
  for (std::size_t i = 0; i <= static_cast<std::size_t>(loss.id); ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!root.requires_grad) return;
  root.grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad) continue;
    if (n.target != nullptr) {
      n.target->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(av.cols()) +
                         " and " + std::to_string(bv.rows()));
  }
  Matrix out = av * bv;
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia).noalias() += g * t.value_of(ib).transpose();
    if (t.needs_grad(ib)) t.grad_mut(ib).noalias() += t.value_of(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia) += g;
    if (t.needs_grad(ib)) t.grad_mut(ib) += g;
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia) += g;
    if (t.needs_grad(ib)) t.grad_mut(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia) += g.cwiseProduct(t.value_of(ib));
    if (t.needs_grad(ib)) t.grad_mut(ib) += g.cwiseProduct(t.value_of(ia));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, s](Tape& t, int self) {
    t.grad_mut(ia) += t.grad_mut(self) * s;
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: row must be 1x" + std::to_string(av.cols()));
  }
  Matrix out = av.rowwise() + rv.row(0);
  const int ia = a.id, ir = row.id;
  return a.tape->record(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia) += g;
    if (t.needs_grad(ir)) t.grad_mut(ir) += g.colwise().sum();
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& x = t.value_of(ia);
    t.grad_mut(ia) += (x.array() > 0.0).select(t.grad_mut(self), 0.0).matrix();
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& y = t.value_of(self);
    t.grad_mut(ia) +=
        (t.grad_mut(self).array() * (1.0 - y.array().square())).matrix();
  });
}

Var affine_cols(Var a, const RowVector& k, const RowVector& c) {
  const Matrix& av = a.value();
  if (k.size() != av.cols() || c.size() != av.cols()) {
    throw DimensionError("affine_cols: coefficient length mismatch");
  }
  Matrix out = (av.array().rowwise() * k.array()).rowwise() + c.array();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, k](Tape& t, int self) {
    t.grad_mut(ia) += (t.grad_mut(self).array().rowwise() * k.array()).matrix();
  });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, shift);
  const Matrix& xv = x.value();
  const Matrix& gv = gain.value();
  const Matrix& sv = shift.value();
  const Eigen::Index n = xv.rows(), m = xv.cols();
  if (gv.rows() != 1 || gv.cols() != m || sv.rows() != 1 || sv.cols() != m) {
    throw DimensionError("layer_norm: gain/shift must be 1x" + std::to_string(m));
  }
  auto xhat = std::make_shared<Matrix>(n, m);
  auto rstd = std::make_shared<Vector>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().mean();
    const double r = 1.0 / std::sqrt(var + eps);
    (*rstd)(i) = r;
    xhat->row(i) = (xv.row(i).array() - mean) * r;
  }
  Matrix out = (xhat->array().rowwise() * gv.row(0).array()).rowwise() +
               sv.row(0).array();
  const int ix = x.id, ig = gain.id, is = shift.id;
  return x.tape->record(
      std::move(out), {ix, ig, is}, [ix, ig, is, xhat, rstd](Tape& t, int self) {
        const Matrix& g = t.grad_mut(self);
        if (t.needs_grad(ig)) t.grad_mut(ig) += g.cwiseProduct(*xhat).colwise().sum();
        if (t.needs_grad(is)) t.grad_mut(is) += g.colwise().sum();
        if (t.needs_grad(ix)) {
          const RowVector gain_row = t.value_of(ig).row(0);
          const double m = static_cast<double>(g.cols());
          Matrix& gx = t.grad_mut(ix);
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const RowVector dxhat = g.row(i).cwiseProduct(gain_row);
            const double s1 = dxhat.sum();
            const double s2 = dxhat.dot(xhat->row(i));
            gx.row(i) += ((*rstd)(i) / m) *
                         (m * dxhat.array() - s1 - xhat->row(i).array() * s2)
                             .matrix();
          }
        }
      });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw DimensionError("concat_cols: row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = av.cols(), cb = bv.cols();
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, ca, cb](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia) += g.leftCols(ca);
    if (t.needs_grad(ib)) t.grad_mut(ib) += g.rightCols(cb);
  });
}

Var select_rows(Var a, std::vector<int> rows) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) {
      throw DimensionError("select_rows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, rows = std::move(rows)](Tape& t, int self) {
                          const Matrix& g = t.grad_mut(self);
                          Matrix& ga = t.grad_mut(ia);
                          for (std::size_t i = 0; i < rows.size(); ++i) {
                            ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                          }
                        });
}

Var interleave_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("interleave_rows: no parts");
  const Matrix& first = parts[0].value();
  const Eigen::Index n = first.rows(), m = first.cols();
  const Eigen::Index p = static_cast<Eigen::Index>(parts.size());
  std::vector<int> ids;
  for (const Var& v : parts) {
    check_same_tape(parts[0], v);
    if (v.value().rows() != n || v.value().cols() != m) {
      throw DimensionError("interleave_rows: parts differ in shape");
    }
    ids.push_back(v.id);
  }
  Matrix out(n * p, m);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < p; ++j) {
      out.row(k * p + j) = parts[static_cast<std::size_t>(j)].value().row(k);
    }
  }
  std::vector<int> parents = ids;
  return parts[0].tape->record(
      std::move(out), std::move(parents), [ids, n, p](Tape& t, int self) {
        const Matrix& g = t.grad_mut(self);
        for (Eigen::Index j = 0; j < p; ++j) {
          const int id = ids[static_cast<std::size_t>(j)];
          if (!t.needs_grad(id)) continue;
          Matrix& gp = t.grad_mut(id);
          for (Eigen::Index k = 0; k < n; ++k) gp.row(k) += g.row(k * p + j);
        }
      });
}

Var gather_rows(Var table, std::vector<int> indices) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " outside table of " + std::to_string(tv.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(indices[i]);
  }
  const int it = table.id;
  return table.tape->record(std::move(out), {it},
                            [it, idx = std::move(indices)](Tape& t, int self) {
                              const Matrix& g = t.grad_mut(self);
                              Matrix& gt = t.grad_mut(it);
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                              }
                            });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_mut(ia).array() += t.grad_mut(self)(0, 0);
  });
}

Var weighted_row_sum(Var a, const Vector& w) {
  const Matrix& av = a.value();
  if (w.size() != av.rows()) throw DimensionError("weighted_row_sum: weight length");
  Matrix out(1, 1);
  out(0, 0) = w.dot(av.rowwise().sum());
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, w](Tape& t, int self) {
    const double g = t.grad_mut(self)(0, 0);
    t.grad_mut(ia).colwise() += g * w;
  });
}

Var causal_attention(Var qkv, const AttentionShape& shape,
                     std::span<const char> key_valid) {
  const Matrix& x = qkv.value();
  const int B = shape.batch, N = shape.seq_len, H = shape.heads;
  if (x.rows() != static_cast<Eigen::Index>(B) * N || x.cols() % 3 != 0) {
    throw DimensionError("causal_attention: packed projection has wrong shape");
  }
  const int d = static_cast<int>(x.cols() / 3);
  if (d % H != 0) throw DimensionError("causal_attention: width not divisible by heads");
  if (key_valid.size() != static_cast<std::size_t>(B) * N) {
    throw DimensionError("causal_attention: key mask length");
  }
  const int dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // allowed(i, j) for each batch element
  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(B) * H);
  Matrix out = Matrix::Zero(x.rows(), d);
  for (int b = 0; b < B; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * N;
    for (int h = 0; h < H; ++h) {
      const auto q = x.block(r0, h * dh, N, dh);
      const auto k = x.block(r0, d + h * dh, N, dh);
      const auto v = x.block(r0, 2 * d + h * dh, N, dh);
      Matrix scores = (q * k.transpose()) * inv_sqrt;
      Matrix p = Matrix::Zero(N, N);
      for (int i = 0; i < N; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= i; ++j) {
          if (j == i || key_valid[static_cast<std::size_t>(r0 + j)]) {
            mx = std::max(mx, scores(i, j));
          }
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          if (j == i || key_valid[static_cast<std::size_t>(r0 + j)]) {
            p(i, j) = std::exp(scores(i, j) - mx);
            z += p(i, j);
          }
        }
        p.row(i).head(i + 1) /= z;
      }
      out.block(r0, h * dh, N, dh).noalias() = p * v;
      (*probs)[static_cast<std::size_t>(b * H + h)] = std::move(p);
    }
  }
  const int iq = qkv.id;
  return qkv.tape->record(
      std::move(out), {iq},
      [iq, B, N, H, d, dh, inv_sqrt, probs](Tape& t, int self) {
        const Matrix& g = t.grad_mut(self);
        const Matrix& xv = t.value_of(iq);
        Matrix& gx = t.grad_mut(iq);
        for (int b = 0; b < B; ++b) {
          const Eigen::Index r0 = static_cast<Eigen::Index>(b) * N;
          for (int h = 0; h < H; ++h) {
            const Matrix& p = (*probs)[static_cast<std::size_t>(b * H + h)];
            const auto q = xv.block(r0, h * dh, N, dh);
            const auto k = xv.block(r0, d + h * dh, N, dh);
            const auto v = xv.block(r0, 2 * d + h * dh, N, dh);
            const auto go = g.block(r0, h * dh, N, dh);
            Matrix dp = go * v.transpose();
            gx.block(r0, 2 * d + h * dh, N, dh).noalias() += p.transpose() * go;
            Matrix ds(N, N);
            for (int i = 0; i < N; ++i) {
              const double dot = p.row(i).dot(dp.row(i));
              ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
            }
            ds *= inv_sqrt;
            gx.block(r0, h * dh, N, dh).noalias() += ds * k;
            gx.block(r0, d + h * dh, N, dh).noalias() += ds.transpose() * q;
          }
        }
      });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Matrix& av = a.value();
  Matrix mask(av.rows(), av.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  }
  Matrix out = av.cwiseProduct(mask);
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia},
                        [ia, mask = std::move(mask)](Tape& t, int self) {
                          t.grad_mut(ia) += t.grad_mut(self).cwiseProduct(mask);
                        });
}

}  // namespace dtune::ad
