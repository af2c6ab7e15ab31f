#include "dtune/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtune/errors.hpp"

namespace dtune::agent {

using nlohmann::json;

NoiseKind parse_noise(const std::string& name) {
  if (name == "gaussian") return NoiseKind::kGaussian;
  if (name == "uniform") return NoiseKind::kUniform;
  throw std::invalid_argument("unknown noise kind: " + name);
}

std::string to_string(NoiseKind k) { return k == NoiseKind::kUniform ? "uniform" : "gaussian"; }

ad::MlpConfig AgentConfig::critic_mlp() const {
  ad::MlpConfig m;
  m.widths.push_back(policy.state_dim + policy.action_dim);
  for (int i = 0; i < critic_layers; ++i) m.widths.push_back(critic_hidden);
  m.widths.push_back(1);
  m.activation = ad::Activation::kRelu;
  m.layer_norm = critic_layer_norm;
  return m;
}

void AgentConfig::validate() const {
  policy.validate();
  if (critic_hidden < 1 || critic_layers < 0) {
    throw std::invalid_argument("critic width must be positive");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  if (!(rtg_scale > 0.0)) throw std::invalid_argument("rtg_scale must be positive");
}

AgentConfig default_agent_config(const envs::EnvSpec& spec) {
  AgentConfig cfg;
  cfg.policy.state_dim = spec.state_dim;
  cfg.policy.action_dim = spec.action_dim;
  cfg.policy.action_low = spec.action_low.transpose();
  cfg.policy.action_high = spec.action_high.transpose();
  cfg.policy.max_timestep = std::max(spec.horizon, 1);
  return cfg;
}

Agent::Agent(const AgentConfig& c, std::uint64_t seed) : cfg(c) {
  cfg.validate();
  Rng policy_rng(derive_seed(seed, kPolicyInit));
  policy = ad::make_transformer_params(cfg.policy, policy_rng);
  target_policy = policy;
  const ad::MlpConfig mlp = cfg.critic_mlp();
  Rng c1(derive_seed(seed, kCritic1Init));
  critic1 = ad::make_mlp_params(mlp, c1);
  target_critic1 = critic1;
  if (cfg.twin_critics) {
    Rng c2(derive_seed(seed, kCritic2Init));
    critic2 = ad::make_mlp_params(mlp, c2);
    target_critic2 = critic2;
  }
  normalizer = data::StateNormalizer::identity(cfg.policy.state_dim);
}

Agent make_policy_only_agent(const AgentConfig& c, std::uint64_t seed) {
  Agent a;
  a.cfg = c;
  a.cfg.validate();
  Rng policy_rng(derive_seed(seed, kPolicyInit));
  a.policy = ad::make_transformer_params(a.cfg.policy, policy_rng);
  a.target_policy = a.policy;
  a.normalizer = data::StateNormalizer::identity(a.cfg.policy.state_dim);
  return a;
}

ad::TokenBatch make_tokens(const Agent& agent, const std::vector<data::Segment>& batch,
                           bool next) {
  if (batch.empty()) throw std::invalid_argument("make_tokens: empty batch");
  const int T = batch.front().length;
  const int sd = agent.cfg.policy.state_dim, ad_ = agent.cfg.policy.action_dim;
  ad::TokenBatch tb;
  tb.batch = static_cast<int>(batch.size());
  tb.seq_len = T;
  const int rows = tb.rows();
  tb.rtg = Matrix::Zero(rows, 1);
  tb.states = Matrix::Zero(rows, sd);
  tb.actions = Matrix::Zero(rows, ad_);
  tb.timesteps.assign(static_cast<std::size_t>(rows), 0);
  tb.valid.assign(static_cast<std::size_t>(rows), 0);
  for (int b = 0; b < tb.batch; ++b) {
    const data::Segment& s = batch[static_cast<std::size_t>(b)];
    if (s.length != T) throw DimensionError("segments in a batch must share a length");
    if (s.states.cols() != sd || s.actions.cols() != ad_) {
      throw DimensionError("segment dims do not match the policy");
    }
    const Matrix& st = next ? s.next_states : s.states;
    const Matrix& ac = next ? s.next_actions : s.actions;
    const auto& rt = next ? s.next_rtgs : s.rtgs;
    const auto& ts = next ? s.next_timesteps : s.timesteps;
    for (int k = 0; k < T; ++k) {
      const int r = b * T + k;
      const auto ku = static_cast<std::size_t>(k);
      if (!s.mask[ku]) continue;
      tb.valid[static_cast<std::size_t>(r)] = 1;
      tb.states.row(r) = agent.normalizer.apply(st.row(k).transpose()).transpose();
      tb.actions.row(r) = ac.row(k);
      tb.rtg(r, 0) = rt[ku] / agent.cfg.rtg_scale;
      tb.timesteps[static_cast<std::size_t>(r)] = ts[ku];
    }
  }
  return tb;
}

Matrix critic_inputs(const Agent& agent, const Matrix& states, const Matrix& actions) {
  Matrix x(states.rows(), states.cols() + actions.cols());
  x.leftCols(states.cols()) = agent.normalizer.apply_rows(states);
  x.rightCols(actions.cols()) = actions;
  return x;
}

Vector eval_critic(const ParamSet& critic, const ad::MlpConfig& cfg, const Matrix& inputs) {
  ad::Tape tape;
  ad::Var out = ad::mlp_forward(tape, const_cast<ParamSet&>(critic), cfg,
                                tape.constant(inputs), ad::Grad::kFrozen);
  return out.value().col(0);
}

// ---------------------------------------------------------------------------

RolloutContext::RolloutContext(int t_eval, double rtg) : t_eval_(t_eval), rtg_(rtg) {
  if (t_eval_ < 1) throw std::invalid_argument("T_eval must be positive");
}

void RolloutContext::push_state(const Vector& state) {
  states_.push_back(state);
  actions_.push_back(Vector());
  rtgs_.push_back(rtg_);
  timesteps_.push_back(step_);
  while (static_cast<int>(states_.size()) > t_eval_) {
    states_.pop_front();
    actions_.pop_front();
    rtgs_.pop_front();
    timesteps_.pop_front();
  }
}

void RolloutContext::set_action(const Vector& action) {
  if (actions_.empty()) throw StateError("set_action before push_state");
  actions_.back() = action;
}

void advance_rtg(RolloutContext& ctx, double reward) {
  ctx.rtg_ -= reward;
  ++ctx.step_;
}

Vector act(const Agent& agent, const RolloutContext& ctx, const NoiseSpec& noise, Rng& rng) {
  const int n = ctx.size();
  if (n == 0) throw StateError("act: context holds no state");
  const auto& pc = agent.cfg.policy;
  ad::TokenBatch tb;
  tb.batch = 1;
  tb.seq_len = n;
  tb.rtg = Matrix::Zero(n, 1);
  tb.states = Matrix::Zero(n, pc.state_dim);
  tb.actions = Matrix::Zero(n, pc.action_dim);
  tb.timesteps.assign(static_cast<std::size_t>(n), 0);
  tb.valid.assign(static_cast<std::size_t>(n), 1);
  for (int k = 0; k < n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    tb.states.row(k) = agent.normalizer.apply(ctx.states()[ku]).transpose();
    if (ctx.actions()[ku].size() > 0) tb.actions.row(k) = ctx.actions()[ku].transpose();
    tb.rtg(k, 0) = ctx.rtgs()[ku] / agent.cfg.rtg_scale;
    tb.timesteps[ku] = ctx.timesteps()[ku];
  }
  const Matrix out = ad::dt_forward(agent.policy, pc, tb);
  Vector a = out.row(n - 1).transpose();
  if (noise.scale > 0.0) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a[i] += noise.kind == NoiseKind::kGaussian ? rng.normal(0.0, noise.scale)
                                                 : rng.uniform(-noise.scale, noise.scale);
    }
    a = a.cwiseMax(pc.action_low.transpose()).cwiseMin(pc.action_high.transpose());
  }
  return a;
}

data::Trajectory collect_episode(const Agent& agent, envs::Env& env, double rtg_rollout,
                                 int t_eval, const NoiseSpec& noise, Rng& rng) {
  const envs::EnvSpec& spec = env.spec();
  RolloutContext ctx(t_eval, rtg_rollout);
  std::vector<Vector> states, actions;
  std::vector<double> rewards;
  std::vector<char> dones;
  Vector s = env.reset(rng);
  for (;;) {
    ctx.push_state(s);
    const Vector a = act(agent, ctx, noise, rng);
    ctx.set_action(a);
    const envs::StepResult r = env.step(a);
    if (!std::isfinite(r.reward)) throw NumericError(spec.name + ": non-finite reward");
    states.push_back(s);
    actions.push_back(a);
    rewards.push_back(r.reward);
    dones.push_back(r.done ? 1 : 0);
    advance_rtg(ctx, r.reward);
    s = r.next_state;
    if (r.done) break;
    if (static_cast<int>(states.size()) >= spec.horizon) break;
  }
  const auto n = static_cast<Eigen::Index>(states.size());
  Matrix sm(n, spec.state_dim), am(n, spec.action_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    sm.row(i) = states[static_cast<std::size_t>(i)].transpose();
    am.row(i) = actions[static_cast<std::size_t>(i)].transpose();
  }
  return data::make_trajectory(std::move(sm), std::move(am), std::move(rewards),
                               std::move(dones));
}

std::vector<data::Trajectory> collect_epoch(const Agent& agent, envs::Env& env, long min_steps,
                                            double rtg_rollout, int t_eval,
                                            const NoiseSpec& noise, Rng& rng) {
  if (min_steps < 1) throw std::invalid_argument("collect_epoch: min_steps must be >= 1");
  std::vector<data::Trajectory> out;
  long steps = 0;
  while (steps < min_steps) {
    out.push_back(collect_episode(agent, env, rtg_rollout, t_eval, noise, rng));
    steps += out.back().length();
  }
  return out;
}

// ---------------------------------------------------------------------------

double td_target(double reward, bool done, double gamma, double q1, double q2, bool twin) {
  const double q = twin ? std::min(q1, q2) : q1;
  return done ? reward : reward + gamma * q;
}

TargetDiagnostics target_q(const Agent& agent, const std::vector<data::Segment>& batch,
                           const TargetConfig& cfg, Rng& rng) {
  if (!agent.has_critics()) throw StateError("target_q: agent has no critics");
  const auto& pc = agent.cfg.policy;
  const ad::TokenBatch next = make_tokens(agent, batch, true);
  const int rows = next.rows();
  const int T = next.seq_len;

  TargetDiagnostics d;
  d.policy_actions = ad::dt_forward(agent.target_policy, pc, next);
  d.noise = Matrix::Zero(rows, pc.action_dim);
  d.target_actions = Matrix::Zero(rows, pc.action_dim);
  Matrix q_states = Matrix::Zero(rows, pc.state_dim);
  for (int r = 0; r < rows; ++r) {
    if (!next.valid[static_cast<std::size_t>(r)]) continue;
    for (int i = 0; i < pc.action_dim; ++i) {
      double eps = 0.0;
      if (cfg.policy_noise > 0.0) {
        eps = std::clamp(rng.normal(0.0, cfg.policy_noise), -cfg.noise_clip, cfg.noise_clip);
      }
      d.noise(r, i) = eps;
      d.target_actions(r, i) =
          std::clamp(d.policy_actions(r, i) + eps, pc.action_low[i], pc.action_high[i]);
    }
    const data::Segment& s = batch[static_cast<std::size_t>(r / T)];
    q_states.row(r) = cfg.target_uses_current_state ? s.states.row(r % T) : s.next_states.row(r % T);
  }
  const ad::MlpConfig mlp = agent.cfg.critic_mlp();
  const Matrix x = critic_inputs(agent, q_states, d.target_actions);
  d.q1 = eval_critic(agent.target_critic1, mlp, x);
  d.used_min = agent.cfg.twin_critics;
  d.q2 = d.used_min ? eval_critic(agent.target_critic2, mlp, x) : d.q1;
  d.targets = Vector::Zero(rows);
  for (int r = 0; r < rows; ++r) {
    if (!next.valid[static_cast<std::size_t>(r)]) continue;
    const data::Segment& s = batch[static_cast<std::size_t>(r / T)];
    const auto k = static_cast<std::size_t>(r % T);
    d.targets[r] = td_target(cfg.reward_scale * s.rewards[k], s.dones[k] != 0, cfg.gamma,
                             d.q1[r], d.q2[r], d.used_min);
  }
  return d;
}

void polyak_update(ParamSet& target, const ParamSet& live, double tau) {
  if (!target.same_layout(live)) throw DimensionError("polyak: target/live layouts differ");
  for (std::size_t i = 0; i < live.size(); ++i) {
    target[i].value = (1.0 - tau) * target[i].value + tau * live[i].value;
  }
}

void polyak_update(Agent& agent) {
  const double tau = agent.cfg.tau;
  polyak_update(agent.target_policy, agent.policy, tau);
  if (agent.has_critics()) {
    polyak_update(agent.target_critic1, agent.critic1, tau);
    if (agent.cfg.twin_critics) polyak_update(agent.target_critic2, agent.critic2, tau);
  }
}

// ---------------------------------------------------------------------------

json params_to_json(const ParamSet& p) {
  json arr = json::array();
  for (const auto& prm : p) {
    std::vector<double> flat(prm.value.data(), prm.value.data() + prm.value.size());
    arr.push_back({{"name", prm.name},
                   {"rows", prm.value.rows()},
                   {"cols", prm.value.cols()},
                   {"data", flat}});
  }
  return arr;
}

ParamSet params_from_json(const json& j) {
  ParamSet p;
  for (const auto& e : j) {
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    const auto flat = e.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
      throw DimensionError("checkpoint: parameter size mismatch for " +
                           e.at("name").get<std::string>());
    }
    Matrix m = Eigen::Map<const Matrix>(flat.data(), rows, cols);
    p.add(e.at("name").get<std::string>(), std::move(m));
  }
  return p;
}

namespace {

void restore(ParamSet& dst, const json& j, const char* what) {
  ParamSet src = params_from_json(j);
  if (!dst.same_layout(src)) {
    throw DimensionError(std::string("checkpoint: layout mismatch in ") + what);
  }
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].value = src[i].value;
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

json agent_to_json(const Agent& a) {
  json j = {{"policy", params_to_json(a.policy)},
            {"target_policy", params_to_json(a.target_policy)},
            {"critic1", params_to_json(a.critic1)},
            {"critic2", params_to_json(a.critic2)},
            {"target_critic1", params_to_json(a.target_critic1)},
            {"target_critic2", params_to_json(a.target_critic2)},
            {"normalizer", {{"mean", to_vec(a.normalizer.mean)}, {"std", to_vec(a.normalizer.std)}}}};
  return j;
}

void agent_from_json(Agent& a, const json& j) {
  restore(a.policy, j.at("policy"), "policy");
  restore(a.target_policy, j.at("target_policy"), "target_policy");
  restore(a.critic1, j.at("critic1"), "critic1");
  restore(a.critic2, j.at("critic2"), "critic2");
  restore(a.target_critic1, j.at("target_critic1"), "target_critic1");
  restore(a.target_critic2, j.at("target_critic2"), "target_critic2");
  const auto mean = j.at("normalizer").at("mean").get<std::vector<double>>();
  const auto sd = j.at("normalizer").at("std").get<std::vector<double>>();
  a.normalizer.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  a.normalizer.std = Eigen::Map<const Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
}

}  // namespace dtune::agent
