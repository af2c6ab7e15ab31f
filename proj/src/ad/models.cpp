#include "dtune/ad/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dtune/errors.hpp"

namespace dtune::ad {

namespace {

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, double bound, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, double stddev, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

// Resolves parameter names to tape leaves, trainable or frozen.
class Binder {
 public:
  Binder(Tape& tape, ParamSet& params, Grad grad)
      : tape_(tape), params_(params), grad_(grad) {}

  Var operator()(const std::string& name) const {
    return grad_ == Grad::kTrain ? tape_.param(params_, name)
                                 : tape_.frozen(params_, name);
  }

 private:
  Tape& tape_;
  ParamSet& params_;
  Grad grad_;
};

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "relu";
}

// ---------------------------------------------------------------------------

void MlpConfig::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least 2 widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("mlp widths must be positive");
  }
}

ParamSet make_mlp_params(const MlpConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamSet ps;
  const std::size_t layers = cfg.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = cfg.widths[l], out = cfg.widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const std::string p = "l" + std::to_string(l);
    ps.add(p + ".w", uniform_matrix(in, out, bound, rng));
    ps.add(p + ".b", uniform_matrix(1, out, bound, rng));
    if (cfg.layer_norm && l + 1 < layers) {
      ps.add("ln" + std::to_string(l) + ".g", Matrix::Ones(1, out));
      ps.add("ln" + std::to_string(l) + ".b", Matrix::Zero(1, out));
    }
  }
  return ps;
}

Var mlp_forward(Tape& tape, ParamSet& params, const MlpConfig& cfg, Var input,
                Grad grad) {
  cfg.validate();
  if (input.value().cols() != cfg.input_dim()) {
    throw DimensionError("mlp input has " + std::to_string(input.value().cols()) +
                         " columns, expected " + std::to_string(cfg.input_dim()));
  }
  Binder bind(tape, params, grad);
  const std::size_t layers = cfg.widths.size() - 1;
  Var x = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "l" + std::to_string(l);
    x = linear(x, bind(p + ".w"), bind(p + ".b"));
    if (l + 1 < layers) {
      x = activate(x, cfg.activation);
      if (cfg.layer_norm) {
        const std::string n = "ln" + std::to_string(l);
        x = layer_norm(x, bind(n + ".g"), bind(n + ".b"));
      }
    }
  }
  return x;
}

Vector mlp_forward(const ParamSet& params, const MlpConfig& cfg,
                   const Vector& input) {
  Tape tape;
  Matrix in = input.transpose();
  Var out = mlp_forward(tape, const_cast<ParamSet&>(params), cfg,
                        tape.constant(std::move(in)), Grad::kFrozen);
  return out.value().row(0).transpose();
}

// ---------------------------------------------------------------------------

void TransformerConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || embed_dim <= 0 || context_len <= 0 ||
      state_dim <= 0 || action_dim <= 0 || max_timestep <= 0) {
    throw std::invalid_argument("transformer dimensions must be positive");
  }
  if (embed_dim % n_heads != 0) {
    throw std::invalid_argument("embed_dim must be divisible by n_heads");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  }
  if (action_low.size() != action_dim || action_high.size() != action_dim) {
    throw std::invalid_argument("action bounds must have action_dim entries");
  }
  for (int i = 0; i < action_dim; ++i) {
    if (!(action_low(i) < action_high(i))) {
      throw std::invalid_argument("action_low must be < action_high");
    }
  }
}

ParamSet make_transformer_params(const TransformerConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.embed_dim;
  constexpr double kStd = 0.02;
  ParamSet ps;
  ps.add("embed_rtg.w", normal_matrix(1, d, kStd, rng));
  ps.add("embed_rtg.b", Matrix::Zero(1, d));
  ps.add("embed_state.w", normal_matrix(cfg.state_dim, d, kStd, rng));
  ps.add("embed_state.b", Matrix::Zero(1, d));
  ps.add("embed_action.w", normal_matrix(cfg.action_dim, d, kStd, rng));
  ps.add("embed_action.b", Matrix::Zero(1, d));
  if (cfg.use_positional_embedding) {
    ps.add("embed_time", normal_matrix(cfg.max_timestep, d, kStd, rng));
  }
  ps.add("embed_ln.g", Matrix::Ones(1, d));
  ps.add("embed_ln.b", Matrix::Zero(1, d));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    ps.add(p + "ln1.g", Matrix::Ones(1, d));
    ps.add(p + "ln1.b", Matrix::Zero(1, d));
    ps.add(p + "attn.w", normal_matrix(d, 3 * d, kStd, rng));
    ps.add(p + "attn.b", Matrix::Zero(1, 3 * d));
    ps.add(p + "proj.w", normal_matrix(d, d, kStd, rng));
    ps.add(p + "proj.b", Matrix::Zero(1, d));
    ps.add(p + "ln2.g", Matrix::Ones(1, d));
    ps.add(p + "ln2.b", Matrix::Zero(1, d));
    ps.add(p + "fc.w", normal_matrix(d, 4 * d, kStd, rng));
    ps.add(p + "fc.b", Matrix::Zero(1, 4 * d));
    ps.add(p + "fc_proj.w", normal_matrix(4 * d, d, kStd, rng));
    ps.add(p + "fc_proj.b", Matrix::Zero(1, d));
  }
  ps.add("ln_f.g", Matrix::Ones(1, d));
  ps.add("ln_f.b", Matrix::Zero(1, d));
  ps.add("head.w", normal_matrix(d, cfg.action_dim, kStd, rng));
  ps.add("head.b", Matrix::Zero(1, cfg.action_dim));
  return ps;
}

Var dt_forward(Tape& tape, ParamSet& params, const TransformerConfig& cfg,
               const TokenBatch& tokens, Grad grad, Rng* dropout_rng) {
  cfg.validate();
  if (tokens.batch <= 0 || tokens.seq_len <= 0) {
    throw std::invalid_argument("dt_forward: empty segment");
  }
  if (tokens.seq_len > cfg.context_len) {
    throw DimensionError("dt_forward: segment longer than context_len");
  }
  const int rows = tokens.rows();
  if (tokens.rtg.rows() != rows || tokens.rtg.cols() != 1 ||
      tokens.states.rows() != rows || tokens.states.cols() != cfg.state_dim ||
      tokens.actions.rows() != rows || tokens.actions.cols() != cfg.action_dim ||
      static_cast<int>(tokens.valid.size()) != rows ||
      static_cast<int>(tokens.timesteps.size()) != rows) {
    throw DimensionError("dt_forward: token arrays do not match config");
  }

  Binder bind(tape, params, grad);
  const double p_drop = dropout_rng != nullptr ? cfg.dropout_rate : 0.0;
  auto drop = [&](Var v) {
    return p_drop > 0.0 ? dropout(v, p_drop, *dropout_rng) : v;
  };

  Var e_rtg = linear(tape.constant(tokens.rtg), bind("embed_rtg.w"), bind("embed_rtg.b"));
  Var e_state =
      linear(tape.constant(tokens.states), bind("embed_state.w"), bind("embed_state.b"));
  Var e_action = linear(tape.constant(tokens.actions), bind("embed_action.w"),
                        bind("embed_action.b"));
  if (cfg.use_positional_embedding) {
    std::vector<int> idx(tokens.timesteps);
    for (int& t : idx) t = std::clamp(t, 0, cfg.max_timestep - 1);
    Var e_time = gather_rows(bind("embed_time"), std::move(idx));
    e_rtg = add(e_rtg, e_time);
    e_state = add(e_state, e_time);
    e_action = add(e_action, e_time);
  }

  // (RTG, state, action) per step.
  Var x = interleave_rows({e_rtg, e_state, e_action});
  x = layer_norm(x, bind("embed_ln.g"), bind("embed_ln.b"));
  x = drop(x);

  std::vector<char> token_valid(static_cast<std::size_t>(rows) * 3);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < 3; ++k) token_valid[static_cast<std::size_t>(3 * r + k)] = tokens.valid[static_cast<std::size_t>(r)];
  }
  const AttentionShape shape{tokens.batch, 3 * tokens.seq_len, cfg.n_heads};

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    Var h = layer_norm(x, bind(p + "ln1.g"), bind(p + "ln1.b"));
    h = linear(h, bind(p + "attn.w"), bind(p + "attn.b"));
    h = causal_attention(h, shape, token_valid);
    h = linear(h, bind(p + "proj.w"), bind(p + "proj.b"));
    x = add(x, drop(h));
    Var m = layer_norm(x, bind(p + "ln2.g"), bind(p + "ln2.b"));
    m = relu(linear(m, bind(p + "fc.w"), bind(p + "fc.b")));
    m = linear(m, bind(p + "fc_proj.w"), bind(p + "fc_proj.b"));
    x = add(x, drop(m));
  }
  x = layer_norm(x, bind("ln_f.g"), bind("ln_f.b"));

  std::vector<int> state_rows(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) state_rows[static_cast<std::size_t>(r)] = 3 * r + 1;
  Var s = select_rows(x, std::move(state_rows));
  Var raw = tanh(linear(s, bind("head.w"), bind("head.b")));
  const RowVector half = (cfg.action_high - cfg.action_low) * 0.5;
  const RowVector mid = (cfg.action_high + cfg.action_low) * 0.5;
  return affine_cols(raw, half, mid);
}

Matrix dt_forward(const ParamSet& params, const TransformerConfig& cfg,
                  const TokenBatch& tokens) {
  Tape tape;
  Var out = dt_forward(tape, const_cast<ParamSet&>(params), cfg, tokens,
                       Grad::kFrozen, nullptr);
  return out.value();
}

}  // namespace dtune::ad
