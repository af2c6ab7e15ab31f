#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "dtune/ad/grad_check.hpp"
#include "dtune/ad/models.hpp"
#include "dtune/ad/optimizer.hpp"
#include "dtune/ad/tape.hpp"
#include "dtune/errors.hpp"

using namespace dtune;
using namespace dtune::ad;

namespace {

using Vec = std::vector<double>;

// Straight-line oracles. Deliberately loop-based and independent of Eigen
// expressions used by the library.

Vec naive_linear(const Vec& x, const Matrix& w, const Matrix& b) {
  Vec y(static_cast<std::size_t>(w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    double acc = b(0, j);
    for (Eigen::Index i = 0; i < w.rows(); ++i) acc += x[static_cast<std::size_t>(i)] * w(i, j);
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

Vec naive_layer_norm(const Vec& x, const Matrix& g, const Matrix& b) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * g(0, static_cast<Eigen::Index>(i)) +
           b(0, static_cast<Eigen::Index>(i));
  }
  return y;
}

struct NaiveStep {
  double rtg;
  Vec state;
  Vec action;
  bool valid;
};

// Whole-model forward written token by token with an explicit softmax per
// head and per query.
std::vector<Vec> naive_dt_forward(const ParamSet& ps, const TransformerConfig& cfg,
                                  const std::vector<NaiveStep>& steps) {
  const int d = cfg.embed_dim;
  std::vector<Vec> tok;
  std::vector<bool> valid;
  for (const auto& s : steps) {
    tok.push_back(naive_linear({s.rtg}, ps.at("embed_rtg.w").value, ps.at("embed_rtg.b").value));
    tok.push_back(naive_linear(s.state, ps.at("embed_state.w").value, ps.at("embed_state.b").value));
    tok.push_back(naive_linear(s.action, ps.at("embed_action.w").value, ps.at("embed_action.b").value));
    for (int k = 0; k < 3; ++k) valid.push_back(s.valid);
  }
  for (auto& t : tok) t = naive_layer_norm(t, ps.at("embed_ln.g").value, ps.at("embed_ln.b").value);
  const std::size_t n = tok.size();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    std::vector<Vec> qkv(n);
    for (std::size_t i = 0; i < n; ++i) {
      qkv[i] = naive_linear(naive_layer_norm(tok[i], ps.at(p + "ln1.g").value, ps.at(p + "ln1.b").value),
                            ps.at(p + "attn.w").value, ps.at(p + "attn.b").value);
    }
    const int dh = d / cfg.n_heads;
    std::vector<Vec> att(n, Vec(static_cast<std::size_t>(d), 0.0));
    for (int h = 0; h < cfg.n_heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w;
        std::vector<std::size_t> keys;
        for (std::size_t j = 0; j <= i; ++j) {
          if (!(valid[j] || j == i)) continue;
          double dot = 0.0;
          for (int c = 0; c < dh; ++c) {
            dot += qkv[i][static_cast<std::size_t>(h * dh + c)] *
                   qkv[j][static_cast<std::size_t>(d + h * dh + c)];
          }
          w.push_back(dot / std::sqrt(static_cast<double>(dh)));
          keys.push_back(j);
        }
        double mx = -1e300;
        for (double v : w) mx = std::max(mx, v);
        double z = 0.0;
        for (double& v : w) {
          v = std::exp(v - mx);
          z += v;
        }
        for (std::size_t k = 0; k < keys.size(); ++k) {
          for (int c = 0; c < dh; ++c) {
            att[i][static_cast<std::size_t>(h * dh + c)] +=
                w[k] / z * qkv[keys[k]][static_cast<std::size_t>(2 * d + h * dh + c)];
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      Vec proj = naive_linear(att[i], ps.at(p + "proj.w").value, ps.at(p + "proj.b").value);
      for (int c = 0; c < d; ++c) tok[i][static_cast<std::size_t>(c)] += proj[static_cast<std::size_t>(c)];
      Vec hdn = naive_linear(naive_layer_norm(tok[i], ps.at(p + "ln2.g").value, ps.at(p + "ln2.b").value),
                             ps.at(p + "fc.w").value, ps.at(p + "fc.b").value);
      for (double& v : hdn) v = v > 0.0 ? v : 0.0;
      Vec out = naive_linear(hdn, ps.at(p + "fc_proj.w").value, ps.at(p + "fc_proj.b").value);
      for (int c = 0; c < d; ++c) tok[i][static_cast<std::size_t>(c)] += out[static_cast<std::size_t>(c)];
    }
  }
  std::vector<Vec> actions;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    Vec f = naive_layer_norm(tok[3 * t + 1], ps.at("ln_f.g").value, ps.at("ln_f.b").value);
    Vec raw = naive_linear(f, ps.at("head.w").value, ps.at("head.b").value);
    Vec a(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const double lo = cfg.action_low(static_cast<Eigen::Index>(k));
      const double hi = cfg.action_high(static_cast<Eigen::Index>(k));
      a[k] = (lo + hi) / 2 + (hi - lo) / 2 * std::tanh(raw[k]);
    }
    actions.push_back(a);
  }
  return actions;
}

TransformerConfig small_config() {
  TransformerConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.embed_dim = 8;
  cfg.context_len = 4;
  cfg.state_dim = 3;
  cfg.action_dim = 2;
  cfg.action_low = RowVector::Constant(2, -2.0);
  cfg.action_high = RowVector::Constant(2, 1.0);
  return cfg;
}

TokenBatch random_tokens(const TransformerConfig& cfg, int batch, int len, int n_pad,
                         Rng& rng) {
  TokenBatch tb;
  tb.batch = batch;
  tb.seq_len = len;
  const int rows = batch * len;
  tb.rtg = Matrix(rows, 1);
  tb.states = Matrix(rows, cfg.state_dim);
  tb.actions = Matrix(rows, cfg.action_dim);
  for (int r = 0; r < rows; ++r) {
    const bool v = (r % len) >= n_pad;
    tb.valid.push_back(v ? 1 : 0);
    tb.timesteps.push_back(v ? r % len : 0);
    tb.rtg(r, 0) = v ? rng.normal() : 0.0;
    for (int c = 0; c < cfg.state_dim; ++c) tb.states(r, c) = v ? rng.normal() : 0.0;
    for (int c = 0; c < cfg.action_dim; ++c) tb.actions(r, c) = v ? rng.uniform(-1, 1) : 0.0;
  }
  return tb;
}

}  // namespace

TEST_CASE("param set gives every parameter one gradient slot of its shape") {
  Rng rng(1);
  ParamSet ps = make_transformer_params(small_config(), rng);
  for (const auto& p : ps) {
    CHECK(p.grad.rows() == p.value.rows());
    CHECK(p.grad.cols() == p.value.cols());
  }
  for (auto& p : ps) p.grad.setConstant(3.0);
  ps.zero_grads();
  for (const auto& p : ps) CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(ps.add("head.w", Matrix::Zero(1, 1)), std::invalid_argument);
}

TEST_CASE("mlp_forward: identity layer passes input through") {
  MlpConfig cfg{{2, 2}, Activation::kRelu, false};
  Rng rng(0);
  ParamSet ps = make_mlp_params(cfg, rng);
  ps.at("l0.w").value = Matrix::Identity(2, 2);
  ps.at("l0.b").value.setZero();
  Vector in(2);
  in << 1.0, 2.0;
  Vector out = mlp_forward(ps, cfg, in);
  CHECK(out(0) == 1.0);
  CHECK(out(1) == 2.0);
}

TEST_CASE("mlp_forward: all-zero hidden network yields zeros") {
  MlpConfig cfg{{3, 5, 2}, Activation::kRelu, false};
  Rng rng(0);
  ParamSet ps = make_mlp_params(cfg, rng);
  ps.set_all(0.0);
  Vector in = Vector::Constant(3, 7.5);
  CHECK(mlp_forward(ps, cfg, in).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp_forward: 2x256 ReLU net matches hand-rolled matmul oracle") {
  MlpConfig cfg{{6, 256, 256, 1}, Activation::kRelu, false};
  Rng rng(42);
  ParamSet ps = make_mlp_params(cfg, rng);
  Rng in_rng(7);
  Vector in(6);
  for (int i = 0; i < 6; ++i) in(i) = in_rng.normal();

  Vec x(in.data(), in.data() + in.size());
  for (int l = 0; l < 3; ++l) {
    const std::string p = "l" + std::to_string(l);
    x = naive_linear(x, ps.at(p + ".w").value, ps.at(p + ".b").value);
    if (l < 2) for (double& v : x) v = v > 0.0 ? v : 0.0;
  }
  const Vector out = mlp_forward(ps, cfg, in);
  CHECK(out(0) == doctest::Approx(x[0]).epsilon(1e-12));
}

TEST_CASE("mlp_forward: shape mismatch is a dimension error") {
  MlpConfig cfg{{3, 4, 1}, Activation::kRelu, true};
  Rng rng(0);
  ParamSet ps = make_mlp_params(cfg, rng);
  CHECK_THROWS_AS(mlp_forward(ps, cfg, Vector::Zero(2)), DimensionError);
}

TEST_CASE("mlp layer norm follows each hidden activation") {
  MlpConfig cfg{{2, 4, 4, 1}, Activation::kRelu, true};
  Rng rng(0);
  ParamSet ps = make_mlp_params(cfg, rng);
  CHECK(ps.contains("ln0.g"));
  CHECK(ps.contains("ln1.g"));
  CHECK_FALSE(ps.contains("ln2.g"));
}

TEST_CASE("dt_forward: zero parameters emit the midpoint of the bounds") {
  TransformerConfig cfg = small_config();
  Rng rng(3);
  ParamSet ps = make_transformer_params(cfg, rng);
  ps.set_all(0.0);
  TokenBatch tb = random_tokens(cfg, 2, 3, 1, rng);
  Matrix out = dt_forward(ps, cfg, tb);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    CHECK(out(r, 0) == -0.5);
    CHECK(out(r, 1) == -0.5);
  }
}

TEST_CASE("dt_forward: later tokens and the current action never leak") {
  TransformerConfig cfg = small_config();
  cfg.n_layers = 2;
  Rng rng(5);
  ParamSet ps = make_transformer_params(cfg, rng);
  for (auto& p : ps) p.value.array() += 0.3 * Matrix::Random(p.value.rows(), p.value.cols()).array();
  TokenBatch tb = random_tokens(cfg, 1, 4, 0, rng);
  const Matrix base = dt_forward(ps, cfg, tb);

  for (int t = 0; t < 3; ++t) {
    TokenBatch pert = tb;
    for (int r = t + 1; r < 4; ++r) {
      pert.rtg(r, 0) += 1.7;
      pert.states.row(r).array() -= 0.9;
      pert.actions.row(r).array() += 0.4;
    }
    pert.actions.row(t).array() += 2.5;
    const Matrix out = dt_forward(ps, cfg, pert);
    for (int r = 0; r <= t; ++r) {
      for (int c = 0; c < cfg.action_dim; ++c) CHECK(out(r, c) == base(r, c));
    }
    CHECK(out(t + 1, 0) != base(t + 1, 0));
  }
}

TEST_CASE("dt_forward: matches a step-by-step attention oracle") {
  TransformerConfig cfg = small_config();
  Rng rng(11);
  ParamSet ps = make_transformer_params(cfg, rng);
  for (auto& p : ps) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += 0.2 * rng.normal();
  }
  for (int pad : {0, 1}) {
    TokenBatch tb = random_tokens(cfg, 1, 3, pad, rng);
    std::vector<NaiveStep> steps;
    for (int t = 0; t < 3; ++t) {
      steps.push_back({tb.rtg(t, 0),
                       Vec(tb.states.row(t).data(), tb.states.row(t).data() + cfg.state_dim),
                       Vec(tb.actions.row(t).data(), tb.actions.row(t).data() + cfg.action_dim),
                       tb.valid[static_cast<std::size_t>(t)] != 0});
    }
    const auto expect = naive_dt_forward(ps, cfg, steps);
    const Matrix got = dt_forward(ps, cfg, tb);
    for (int t = 0; t < 3; ++t) {
      for (int c = 0; c < cfg.action_dim; ++c) {
        CHECK(std::abs(got(t, c) - expect[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)]) < 1e-10);
      }
    }
  }
}

TEST_CASE("dt_forward: outputs stay inside the action bounds") {
  TransformerConfig cfg = small_config();
  Rng rng(9);
  ParamSet ps = make_transformer_params(cfg, rng);
  for (auto& p : ps) p.value *= 200.0;
  TokenBatch tb = random_tokens(cfg, 4, 4, 1, rng);
  const Matrix out = dt_forward(ps, cfg, tb);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < cfg.action_dim; ++c) {
      CHECK(out(r, c) >= cfg.action_low(c));
      CHECK(out(r, c) <= cfg.action_high(c));
    }
  }
}

TEST_CASE("dt_forward: empty segment is rejected; deterministic otherwise") {
  TransformerConfig cfg = small_config();
  Rng rng(2);
  ParamSet ps = make_transformer_params(cfg, rng);
  TokenBatch empty;
  CHECK_THROWS_AS(dt_forward(ps, cfg, empty), std::invalid_argument);
  TokenBatch tb = random_tokens(cfg, 3, 4, 2, rng);
  CHECK(dt_forward(ps, cfg, tb) == dt_forward(ps, cfg, tb));
}

TEST_CASE("dt_forward: timestep embedding variant is causal and finite") {
  TransformerConfig cfg = small_config();
  cfg.use_positional_embedding = true;
  cfg.max_timestep = 16;
  Rng rng(4);
  ParamSet ps = make_transformer_params(cfg, rng);
  CHECK(ps.contains("embed_time"));
  TokenBatch tb = random_tokens(cfg, 2, 4, 1, rng);
  const Matrix out = dt_forward(ps, cfg, tb);
  CHECK(out.allFinite());
}

TEST_CASE("transformer config validation") {
  TransformerConfig cfg = small_config();
  cfg.embed_dim = 9;
  CHECK_THROWS(cfg.validate());
  cfg = small_config();
  cfg.action_high(0) = cfg.action_low(0);
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("backward: elementary gradients") {
  ParamSet ps;
  ps.add("w", Matrix::Constant(1, 1, 3.0));
  {
    Tape tape;
    Var w = tape.param(ps, "w");
    tape.backward(sum(w));
  }
  CHECK(ps.at("w").grad(0, 0) == 1.0);
  ps.zero_grads();
  {
    Tape tape;
    Var w = tape.param(ps, "w");
    tape.backward(mul(w, w));
  }
  CHECK(ps.at("w").grad(0, 0) == 6.0);
  // A second backward accumulates.
  {
    Tape tape;
    Var w = tape.param(ps, "w");
    tape.backward(mul(w, w));
  }
  CHECK(ps.at("w").grad(0, 0) == 12.0);
}

TEST_CASE("backward: without a recorded forward is a state error") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(Var{}), StateError);
  ParamSet ps;
  ps.add("w", Matrix::Ones(2, 2));
  Var w = tape.param(ps, "w");
  CHECK_THROWS_AS(tape.backward(w), DimensionError);
}

TEST_CASE("backward: frozen leaves receive no gradient") {
  ParamSet a, b;
  a.add("w", Matrix::Constant(1, 1, 2.0));
  b.add("w", Matrix::Constant(1, 1, 5.0));
  Tape tape;
  Var x = tape.param(a, "w");
  Var y = tape.frozen(b, "w");
  tape.backward(mul(x, y));
  CHECK(a.at("w").grad(0, 0) == 5.0);
  CHECK(b.at("w").grad(0, 0) == 0.0);
}

TEST_CASE("optimizer: zero learning rate leaves parameters unchanged") {
  ParamSet ps;
  ps.add("w", Matrix::Constant(2, 2, 0.7));
  ps.at("w").grad.setConstant(4.0);
  Optimizer opt({OptimizerKind::kAdam, 0.0, 0.9, 0.999, 1e-8, 0.01, 0}, ps);
  opt.step(ps);
  CHECK(ps.at("w").value == Matrix::Constant(2, 2, 0.7));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("optimizer: Adam first step is lr*g/(|g|+eps)") {
  ParamSet ps;
  ps.add("w", Matrix::Zero(1, 1));
  ps.at("w").grad(0, 0) = 1.0;
  Optimizer opt({OptimizerKind::kAdam, 0.1, 0.9, 0.999, 1e-8, 0.0, 0}, ps);
  opt.step(ps);
  // m_hat = g, v_hat = g^2 after bias correction.
  const double expected = -0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(ps.at("w").value(0, 0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::abs(ps.at("w").value(0, 0) + 0.1) < 1e-8);
}

TEST_CASE("optimizer: identical gradients move monotonically against the sign") {
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kLamb}) {
    ParamSet ps;
    ps.add("w", Matrix::Constant(1, 3, 0.5));
    Optimizer opt({kind, 0.01, 0.9, 0.999, 1e-8, 0.0, 0}, ps);
    double prev = 0.5;
    for (int s = 0; s < 2; ++s) {
      ps.at("w").grad.setConstant(-2.0);
      opt.step(ps);
      CHECK(ps.at("w").value(0, 0) > prev);
      prev = ps.at("w").value(0, 0);
    }
  }
}

TEST_CASE("optimizer: warmup scales the learning rate linearly") {
  ParamSet ps;
  ps.add("w", Matrix::Zero(1, 1));
  Optimizer opt({OptimizerKind::kAdam, 1.0, 0.9, 0.999, 1e-8, 0.0, 4}, ps);
  CHECK(opt.current_lr() == doctest::Approx(0.25));
  ps.at("w").grad(0, 0) = 1.0;
  opt.step(ps);
  CHECK(opt.current_lr() == doctest::Approx(0.5));
  for (int i = 0; i < 5; ++i) opt.step(ps);
  CHECK(opt.current_lr() == doctest::Approx(1.0));
}

TEST_CASE("optimizer: NaN gradient names the parameter") {
  ParamSet ps;
  ps.add("good", Matrix::Zero(1, 1));
  ps.add("bad", Matrix::Zero(1, 1));
  ps.at("bad").grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Optimizer opt({}, ps);
  try {
    opt.step(ps);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
}

TEST_CASE("grad_check: linear model with quadratic loss") {
  ParamSet ps;
  Rng rng(1);
  Matrix w(3, 2), b(1, 2);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  ps.add("w", w);
  ps.add("b", b);
  Matrix x(4, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  auto loss = [&](Tape& t) {
    Var y = linear(t.constant(x), t.param(ps, "w"), t.param(ps, "b"));
    return sum(mul(y, y));
  };
  GradCheckReport rep = grad_check(loss, ps, {1e-5, 1e-10, 0.0});
  CHECK(rep.max_rel_error < 1e-10);
  CHECK(rep.checked == 8);
}

TEST_CASE("grad_check: transformer regression loss") {
  TransformerConfig cfg = small_config();
  cfg.use_positional_embedding = true;
  cfg.max_timestep = 8;
  Rng rng(21);
  ParamSet ps = make_transformer_params(cfg, rng);
  for (auto& p : ps) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += 0.3 * rng.normal();
  }
  TokenBatch tb = random_tokens(cfg, 2, 3, 1, rng);
  Vector w(tb.rows());
  for (int r = 0; r < tb.rows(); ++r) w(r) = tb.valid[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
  auto loss = [&](Tape& t) {
    Var a = dt_forward(t, ps, cfg, tb);
    Var diff = sub(a, t.constant(tb.actions));
    return weighted_row_sum(mul(diff, diff), w);
  };
  GradCheckReport rep = grad_check(loss, ps);
  INFO("worst ", rep.worst_param, "[", rep.worst_index, "] rel=", rep.max_rel_error);
  CHECK(rep.passed);
}

TEST_CASE("grad_check: layer-normalized MLP") {
  MlpConfig cfg{{4, 16, 16, 1}, Activation::kRelu, true};
  Rng rng(8);
  ParamSet ps = make_mlp_params(cfg, rng);
  Matrix x(5, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  auto loss = [&](Tape& t) {
    Var q = mlp_forward(t, ps, cfg, t.constant(x));
    return sum(mul(q, q));
  };
  GradCheckReport rep = grad_check(loss, ps);
  INFO("worst ", rep.worst_param, " rel=", rep.max_rel_error);
  CHECK(rep.passed);
}

TEST_CASE("dropout is identity at rate zero and changes outputs otherwise") {
  TransformerConfig cfg = small_config();
  cfg.dropout_rate = 0.5;
  Rng rng(1);
  ParamSet ps = make_transformer_params(cfg, rng);
  TokenBatch tb = random_tokens(cfg, 1, 3, 0, rng);
  Tape t1, t2;
  Rng d1(3);
  Var a = dt_forward(t1, ps, cfg, tb, Grad::kTrain, &d1);
  Var b = dt_forward(t2, ps, cfg, tb, Grad::kTrain, nullptr);
  CHECK(a.value() != b.value());
  CHECK(b.value() == dt_forward(ps, cfg, tb));
}
