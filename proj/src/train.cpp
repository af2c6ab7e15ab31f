#include "dtune/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dtune/errors.hpp"

namespace dtune::train {

using nlohmann::json;

Schedule parse_schedule(const std::string& name) {
  if (name == "fixed") return Schedule::kFixed;
  if (name == "linear") return Schedule::kLinear;
  throw std::invalid_argument("unknown schedule: " + name);
}

std::string to_string(Schedule s) { return s == Schedule::kLinear ? "linear" : "fixed"; }

void TrainConfig::validate() const {
  const auto need = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  need(alpha_pretrain >= 0.0 && alpha_online >= 0.0, "alpha must be >= 0");
  need(sl_coeff >= 0.0, "sl_coeff must be >= 0");
  need(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  need(batch_size > 0, "batch_size must be positive");
  need(critic_updates_per_epoch >= 0 && actor_updates_per_epoch >= 0,
       "update counts must be >= 0");
  need(policy_delay >= 1, "policy_delay must be >= 1");
  need(!use_critic || actor_updates_per_epoch <= critic_updates_per_epoch ||
           critic_updates_per_epoch == 0,
       "actor updates cannot exceed critic updates");
  need(linear_slope >= 0 && linear_intercept >= 0, "linear schedule terms must be >= 0");
  need(t_train > 0 && t_eval > 0, "context lengths must be positive");
  need(actor_opt.lr > 0.0 && critic_opt.lr > 0.0, "learning rates must be positive");
  need(actor_opt.weight_decay >= 0.0 && critic_opt.weight_decay >= 0.0,
       "weight_decay must be >= 0");
  need(policy_noise >= 0.0 && noise_clip >= 0.0 && explore.scale >= 0.0,
       "noise scales must be >= 0");
  need(pretrain_steps >= 0, "pretrain_steps must be >= 0");
  need(online_max_env_steps >= 0, "online_max_env_steps must be >= 0");
  need(min_steps_per_epoch >= 1, "min_steps_per_epoch must be >= 1");
  need(kl_coeff >= 0.0, "kl_coeff must be >= 0");
  need(buffer_capacity > 0, "buffer capacity must be positive");
  need(eval_episodes >= 1, "eval_episodes must be >= 1");
  need(use_critic || (alpha_pretrain == 0.0 && alpha_online == 0.0),
       "alpha > 0 needs a critic");
  need(sl_coeff > 0.0 || use_critic, "sl_coeff = 0 without a critic leaves no actor loss");
}

// ---------------------------------------------------------------------------

namespace {

Vector valid_weights(const std::vector<char>& valid, double scale) {
  double n = 0.0;
  for (char v : valid) n += v ? 1.0 : 0.0;
  if (n == 0.0) throw std::invalid_argument("loss over an all-padded batch");
  Vector w(static_cast<Eigen::Index>(valid.size()));
  for (std::size_t i = 0; i < valid.size(); ++i) w[static_cast<Eigen::Index>(i)] = valid[i] ? scale / n : 0.0;
  return w;
}

Var accumulate(Var acc, Var term) { return acc.valid() ? ad::add(acc, term) : term; }

struct Rows {
  Matrix states, actions;
  std::vector<char> valid;
};

Rows stack_rows(const std::vector<data::Segment>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int T = batch.front().length;
  const auto rows = static_cast<Eigen::Index>(batch.size()) * T;
  Rows r;
  r.states = Matrix::Zero(rows, batch.front().states.cols());
  r.actions = Matrix::Zero(rows, batch.front().actions.cols());
  r.valid.assign(static_cast<std::size_t>(rows), 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto off = static_cast<Eigen::Index>(b) * T;
    r.states.middleRows(off, T) = batch[b].states;
    r.actions.middleRows(off, T) = batch[b].actions;
    for (int k = 0; k < T; ++k) {
      r.valid[static_cast<std::size_t>(off + k)] = batch[b].mask[static_cast<std::size_t>(k)];
    }
  }
  return r;
}

}  // namespace

Var mixed_actor_loss(ad::Tape& tape, agent::Agent& agent, const ad::TokenBatch& tokens,
                     const ActorLossConfig& cfg, Rng* dropout_rng) {
  const auto& pc = agent.cfg.policy;
  Var mu = ad::dt_forward(tape, agent.policy, pc, tokens, ad::Grad::kTrain, dropout_rng);
  const Vector w = valid_weights(tokens.valid, 1.0);
  Var loss;
  if (cfg.sl_coeff != 0.0) {
    Var diff = ad::sub(mu, tape.constant(tokens.actions));
    loss = accumulate(loss, ad::weighted_row_sum(ad::mul(diff, diff), cfg.sl_coeff * w));
  }
  if (cfg.alpha != 0.0) {
    if (!agent.has_critics()) throw StateError("mixed_actor_loss: alpha > 0 needs a critic");
    Var x = ad::concat_cols(tape.constant(tokens.states), mu);
    Var q = ad::mlp_forward(tape, agent.critic1, agent.cfg.critic_mlp(), x, ad::Grad::kFrozen);
    loss = accumulate(loss, ad::weighted_row_sum(q, -cfg.alpha * w));
  }
  if (cfg.kl_coeff != 0.0) {
    if (cfg.old_policy == nullptr) throw StateError("kl_coeff > 0 needs a reference policy");
    Var diff = ad::sub(mu, tape.constant(ad::dt_forward(*cfg.old_policy, pc, tokens)));
    loss = accumulate(loss, ad::weighted_row_sum(ad::mul(diff, diff), cfg.kl_coeff * w));
  }
  if (!loss.valid()) throw std::invalid_argument("actor loss has no active term");
  return loss;
}

Var odt_loss(ad::Tape& tape, agent::Agent& agent, const ad::TokenBatch& tokens,
             Rng* dropout_rng) {
  return mixed_actor_loss(tape, agent, tokens, ActorLossConfig{}, dropout_rng);
}

namespace {

Var critic_loss_impl(ad::Tape& tape, agent::Agent& agent,
                     const std::vector<data::Segment>& batch, const Vector& targets,
                     double* mean_q) {
  if (!agent.has_critics()) throw StateError("critic_loss: agent has no critics");
  const Rows r = stack_rows(batch);
  if (targets.size() != r.states.rows()) throw DimensionError("critic_loss: target count");
  const ad::MlpConfig mlp = agent.cfg.critic_mlp();
  Var x = tape.constant(agent::critic_inputs(agent, r.states, r.actions));
  Var y = tape.constant(targets);
  Vector w(r.states.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w[i] = r.valid[static_cast<std::size_t>(i)] ? 1.0 / static_cast<double>(batch.size()) : 0.0;
  }
  Var q1 = ad::mlp_forward(tape, agent.critic1, mlp, x, ad::Grad::kTrain);
  Var d1 = ad::sub(q1, y);
  Var loss = ad::weighted_row_sum(ad::mul(d1, d1), w);
  if (agent.cfg.twin_critics) {
    Var q2 = ad::mlp_forward(tape, agent.critic2, mlp, x, ad::Grad::kTrain);
    Var d2 = ad::sub(q2, y);
    loss = ad::add(loss, ad::weighted_row_sum(ad::mul(d2, d2), w));
  }
  if (mean_q) {
    double s = 0.0, n = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (r.valid[static_cast<std::size_t>(i)]) {
        s += q1.value()(i, 0);
        n += 1.0;
      }
    }
    *mean_q = s / n;
  }
  return loss;
}

}  // namespace

Var critic_loss(ad::Tape& tape, agent::Agent& agent, const std::vector<data::Segment>& batch,
                const Vector& targets) {
  return critic_loss_impl(tape, agent, batch, targets, nullptr);
}

double odt_loss(const agent::Agent& agent, const std::vector<data::Segment>& batch) {
  ad::Tape tape;
  auto& a = const_cast<agent::Agent&>(agent);
  return odt_loss(tape, a, agent::make_tokens(agent, batch)).scalar();
}

double critic_loss(const agent::Agent& agent, const std::vector<data::Segment>& batch,
                   const agent::TargetConfig& cfg, Rng& rng) {
  const auto d = agent::target_q(agent, batch, cfg, rng);
  ad::Tape tape;
  return critic_loss(tape, const_cast<agent::Agent&>(agent), batch, d.targets).scalar();
}

// ---------------------------------------------------------------------------

EvalResult evaluate(const agent::Agent& agent, const envs::Env& env, int n_episodes,
                    double rtg_eval, int t_eval, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  EvalResult res;
  const agent::NoiseSpec none{};
  for (int i = 0; i < n_episodes; ++i) {
    auto e = env.clone();
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    res.returns.push_back(
        agent::collect_episode(agent, *e, rtg_eval, t_eval, none, rng).episode_return());
  }
  double s = 0.0;
  for (double r : res.returns) s += r;
  res.mean = s / n_episodes;
  double sq = 0.0;
  for (double r : res.returns) sq += (r - res.mean) * (r - res.mean);
  res.std = std::sqrt(sq / n_episodes);
  return res;
}

double normalized_score(double ret, const envs::ReferenceReturns& ref) {
  return 100.0 * (ret - ref.random) / (ref.expert - ref.random);
}

bool actor_step_after(int i, int critic_steps, int actor_steps) {
  const long a = static_cast<long>(i + 1) * actor_steps / critic_steps;
  const long b = static_cast<long>(i) * actor_steps / critic_steps;
  return a > b;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, agent::AgentConfig agent_cfg,
                 std::unique_ptr<envs::Env> env, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      env_(std::move(env)),
      seed_(seed),
      buffer_(cfg_.buffer_capacity, cfg_.eviction),
      sampler_rng_(derive_seed(seed, agent::kSampler)),
      rollout_rng_(derive_seed(seed, agent::kRollout)),
      target_rng_(derive_seed(seed, agent::kTargetNoise)),
      dropout_rng_(derive_seed(seed, agent::kDropout)) {
  cfg_.validate();
  if (!env_) throw std::invalid_argument("Trainer: null env");
  if (cfg_.t_train > agent_cfg.policy.context_len || cfg_.t_eval > agent_cfg.policy.context_len) {
    throw std::invalid_argument("T_train and T_eval must not exceed the policy context length");
  }
  agent_ = cfg_.use_critic ? agent::Agent(agent_cfg, seed)
                           : agent::make_policy_only_agent(agent_cfg, seed);
  actor_opt_ = ad::Optimizer(cfg_.actor_opt, agent_.policy);
  if (cfg_.use_critic) {
    critic1_opt_.emplace(cfg_.critic_opt, agent_.critic1);
    if (agent_.cfg.twin_critics) critic2_opt_.emplace(cfg_.critic_opt, agent_.critic2);
  }
}

void Trainer::load_offline(const envs::OfflineDataset& dataset) {
  if (dataset.trajectories.empty()) throw std::invalid_argument("offline dataset is empty");
  for (const auto& t : dataset.trajectories) buffer_.insert(t);
  agent_.normalizer = data::StateNormalizer::fit(dataset.trajectories);
  rtg_data_ = envs::return_stats(dataset.trajectories).first;
}

double Trainer::current_rtg_rollout() const {
  if (!cfg_.curriculum_rtg) return cfg_.rtg_rollout;
  return cfg_.rtg_eval -
         std::pow(0.99, static_cast<double>(online_episodes_)) * (cfg_.rtg_eval - rtg_data_);
}

std::pair<double, double> Trainer::critic_update(const std::vector<data::Segment>& batch,
                                                 StepStats& stats) {
  agent::TargetConfig tc;
  tc.gamma = cfg_.gamma;
  tc.policy_noise = cfg_.policy_noise;
  tc.noise_clip = cfg_.noise_clip;
  tc.reward_scale = cfg_.reward_scale;
  tc.target_uses_current_state = cfg_.target_uses_current_state;
  const agent::TargetDiagnostics d = agent::target_q(agent_, batch, tc, target_rng_);
  stats.used_min = d.used_min;
  if (d.noise.size() > 0) stats.max_noise = std::max(stats.max_noise, d.noise.cwiseAbs().maxCoeff());

  ad::Tape tape;
  double mean_q = 0.0;
  Var loss = critic_loss_impl(tape, agent_, batch, d.targets, &mean_q);
  const double value = loss.scalar();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite critic_loss at epoch " + std::to_string(epoch_));
  }
  agent_.critic1.zero_grads();
  agent_.critic2.zero_grads();
  tape.backward(loss);
  critic1_opt_->step(agent_.critic1);
  if (critic2_opt_) critic2_opt_->step(agent_.critic2);
  ++critic_steps_;
  return {value, mean_q};
}

double Trainer::actor_update(const std::vector<data::Segment>& batch, double alpha) {
  ActorLossConfig lc;
  lc.alpha = alpha;
  lc.sl_coeff = cfg_.sl_coeff;
  // The KL anchor is the pretrained policy, so it only applies online.
  lc.kl_coeff = old_policy_ ? cfg_.kl_coeff : 0.0;
  lc.old_policy = old_policy_ ? &*old_policy_ : nullptr;
  ad::Tape tape;
  Rng* drop = agent_.cfg.policy.dropout_rate > 0.0 ? &dropout_rng_ : nullptr;
  Var loss = mixed_actor_loss(tape, agent_, agent::make_tokens(agent_, batch), lc, drop);
  const double value = loss.scalar();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite " + std::string(alpha == 0.0 && lc.kl_coeff == 0.0
                                                       ? "odt_loss"
                                                       : "mixed_actor_loss") +
                       " at epoch " + std::to_string(epoch_));
  }
  agent_.policy.zero_grads();
  tape.backward(loss);
  actor_opt_.step(agent_.policy);
  ++actor_steps_;
  return value;
}

void Trainer::run_updates(int critic_iters, int actor_iters, double alpha, StepStats& stats) {
  if (buffer_.empty()) throw StateError("training on an empty buffer");
  double actor_sum = 0.0, critic_sum = 0.0, q_sum = 0.0;
  if (critic_iters == 0) {
    for (int i = 0; i < actor_iters; ++i) {
      const auto batch = data::sample_batch(buffer_, cfg_.t_train, cfg_.batch_size, sampler_rng_);
      actor_sum += actor_update(batch, alpha);
      ++stats.actor_steps;
    }
  } else {
    for (int i = 0; i < critic_iters; ++i) {
      const auto batch = data::sample_batch(buffer_, cfg_.t_train, cfg_.batch_size, sampler_rng_);
      const auto [c, q] = critic_update(batch, stats);
      critic_sum += c;
      q_sum += q;
      ++stats.critic_steps;
      agent::polyak_update(agent_);
      if (actor_step_after(i, critic_iters, actor_iters)) {
        actor_sum += actor_update(batch, alpha);
        ++stats.actor_steps;
      }
    }
  }
  stats.actor_loss = stats.actor_steps ? actor_sum / stats.actor_steps : 0.0;
  stats.critic_loss = stats.critic_steps ? critic_sum / stats.critic_steps : 0.0;
  stats.mean_q = stats.critic_steps ? q_sum / stats.critic_steps : 0.0;
}

void Trainer::iteration_counts(int online_epoch, int& critic_iters, int& actor_iters) const {
  int n_iter;
  if (online_epoch == 0) {
    n_iter = cfg_.pretrain_steps;
  } else if (cfg_.schedule == Schedule::kLinear) {
    n_iter = cfg_.linear_slope * online_epoch + cfg_.linear_intercept;
  } else {
    critic_iters = cfg_.use_critic ? cfg_.critic_updates_per_epoch : 0;
    actor_iters = cfg_.actor_updates_per_epoch;
    return;
  }
  if (cfg_.use_critic) {
    critic_iters = n_iter;
    actor_iters = n_iter / cfg_.policy_delay;
  } else {
    critic_iters = 0;
    actor_iters = n_iter;
  }
}

EpochMetrics Trainer::pretrain() {
  const auto t0 = std::chrono::steady_clock::now();
  int c = 0, a = 0;
  iteration_counts(0, c, a);
  StepStats stats;
  if (c + a > 0) run_updates(c, a, cfg_.alpha_pretrain, stats);
  if (cfg_.kl_coeff > 0.0) old_policy_ = agent_.policy;
  EpochMetrics m;
  m.epoch = 0;
  m.env_steps = env_steps_;
  m.grad_steps = critic_steps_ + actor_steps_;
  m.actor_loss = stats.actor_loss;
  m.critic_loss = stats.critic_loss;
  m.mean_q = stats.mean_q;
  m.critic_steps = stats.critic_steps;
  m.actor_steps = stats.actor_steps;
  m.target_used_min = stats.used_min;
  m.max_abs_target_noise = stats.max_noise;
  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

EpochMetrics Trainer::evaluate_now(int epoch) {
  EpochMetrics m;
  const EvalResult r =
      evaluate(agent_, *env_, cfg_.eval_episodes, cfg_.rtg_eval, cfg_.t_eval,
               derive_seed(derive_seed(seed_, agent::kEval), static_cast<std::uint64_t>(epoch)));
  m.epoch = epoch;
  m.env_steps = env_steps_;
  m.grad_steps = critic_steps_ + actor_steps_;
  m.eval_mean = r.mean;
  m.eval_std = r.std;
  return m;
}

EpochMetrics Trainer::finetune_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  ++epoch_;
  const double rtg_r = current_rtg_rollout();
  const auto trajs = agent::collect_epoch(agent_, *env_, cfg_.min_steps_per_epoch, rtg_r,
                                          cfg_.t_eval, cfg_.explore, rollout_rng_);
  for (const auto& t : trajs) {
    env_steps_ += t.length();
    buffer_.insert(t);
  }
  online_episodes_ += static_cast<long>(trajs.size());

  int c = 0, a = 0;
  iteration_counts(epoch_, c, a);
  StepStats stats;
  run_updates(c, a, cfg_.alpha_online, stats);

  EpochMetrics m = evaluate_now(epoch_);
  m.actor_loss = stats.actor_loss;
  m.critic_loss = stats.critic_loss;
  m.mean_q = stats.mean_q;
  m.critic_steps = stats.critic_steps;
  m.actor_steps = stats.actor_steps;
  m.target_used_min = stats.used_min;
  m.max_abs_target_noise = stats.max_noise;
  m.rtg_rollout = rtg_r;
  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

std::vector<EpochMetrics> Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> out;
  const EpochMetrics pre = pretrain();
  EpochMetrics first = evaluate_now(0);
  first.actor_loss = pre.actor_loss;
  first.critic_loss = pre.critic_loss;
  first.mean_q = pre.mean_q;
  first.critic_steps = pre.critic_steps;
  first.actor_steps = pre.actor_steps;
  first.target_used_min = pre.target_used_min;
  first.max_abs_target_noise = pre.max_abs_target_noise;
  first.wall_seconds = pre.wall_seconds;
  out.push_back(first);
  if (on_epoch) on_epoch(first);
  while (!online_done()) {
    out.push_back(finetune_epoch());
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json opt_to_json(const ad::Optimizer& o) {
  json m = json::array(), v = json::array();
  for (const auto& x : o.first_moments()) m.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  for (const auto& x : o.second_moments()) v.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  return {{"step", o.step_count()}, {"m", m}, {"v", v}};
}

void opt_from_json(ad::Optimizer& o, const json& j) {
  const auto load = [](std::vector<Matrix>& dst, const json& src) {
    if (src.size() != dst.size()) throw DimensionError("checkpoint: optimizer slot count");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const auto flat = src[i].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != dst[i].size()) {
        throw DimensionError("checkpoint: optimizer moment size");
      }
      dst[i] = Eigen::Map<const Matrix>(flat.data(), dst[i].rows(), dst[i].cols());
    }
  };
  load(o.first_moments(), j.at("m"));
  load(o.second_moments(), j.at("v"));
  o.set_step_count(j.at("step").get<long>());
}

json traj_to_json(const data::Trajectory& t) {
  std::vector<double> s(t.states.data(), t.states.data() + t.states.size());
  std::vector<double> a(t.actions.data(), t.actions.data() + t.actions.size());
  std::vector<int> d(t.dones.begin(), t.dones.end());
  return {{"n", t.length()}, {"sd", t.state_dim()}, {"ad", t.action_dim()},
          {"states", s},     {"actions", a},        {"rewards", t.rewards}, {"dones", d}};
}

data::Trajectory traj_from_json(const json& j) {
  const auto n = j.at("n").get<Eigen::Index>();
  const auto sd = j.at("sd").get<Eigen::Index>();
  const auto ad_ = j.at("ad").get<Eigen::Index>();
  const auto s = j.at("states").get<std::vector<double>>();
  const auto a = j.at("actions").get<std::vector<double>>();
  const auto d = j.at("dones").get<std::vector<int>>();
  return data::make_trajectory(Eigen::Map<const Matrix>(s.data(), n, sd),
                               Eigen::Map<const Matrix>(a.data(), n, ad_),
                               j.at("rewards").get<std::vector<double>>(),
                               std::vector<char>(d.begin(), d.end()));
}

constexpr int kCheckpointVersion = 1;

}  // namespace

json Trainer::checkpoint() const {
  json buf = json::array();
  for (const auto& t : buffer_.trajectories()) buf.push_back(traj_to_json(t));
  json j = {{"format", "dtune.checkpoint"},
            {"version", kCheckpointVersion},
            {"seed", seed_},
            {"epoch", epoch_},
            {"env_steps", env_steps_},
            {"critic_steps", critic_steps_},
            {"actor_steps", actor_steps_},
            {"online_episodes", online_episodes_},
            {"rtg_data", rtg_data_},
            {"agent", agent::agent_to_json(agent_)},
            {"actor_opt", opt_to_json(actor_opt_)},
            {"buffer", buf},
            {"rng",
             {{"sampler", sampler_rng_.state()},
              {"rollout", rollout_rng_.state()},
              {"target", target_rng_.state()},
              {"dropout", dropout_rng_.state()}}}};
  if (critic1_opt_) j["critic1_opt"] = opt_to_json(*critic1_opt_);
  if (critic2_opt_) j["critic2_opt"] = opt_to_json(*critic2_opt_);
  if (old_policy_) j["old_policy"] = agent::params_to_json(*old_policy_);
  return j;
}

void Trainer::restore(const json& j) {
  if (j.value("format", "") != "dtune.checkpoint") throw std::runtime_error("not a checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  agent::agent_from_json(agent_, j.at("agent"));
  opt_from_json(actor_opt_, j.at("actor_opt"));
  if (critic1_opt_) opt_from_json(*critic1_opt_, j.at("critic1_opt"));
  if (critic2_opt_) opt_from_json(*critic2_opt_, j.at("critic2_opt"));
  if (j.contains("old_policy")) {
    old_policy_ = agent::params_from_json(j.at("old_policy"));
  } else {
    old_policy_.reset();
  }
  buffer_ = data::ReplayBuffer(cfg_.buffer_capacity, cfg_.eviction);
  for (const auto& t : j.at("buffer")) buffer_.insert(traj_from_json(t));
  seed_ = j.at("seed").get<std::uint64_t>();
  epoch_ = j.at("epoch").get<int>();
  env_steps_ = j.at("env_steps").get<long>();
  critic_steps_ = j.at("critic_steps").get<long>();
  actor_steps_ = j.at("actor_steps").get<long>();
  online_episodes_ = j.at("online_episodes").get<long>();
  rtg_data_ = j.at("rtg_data").get<double>();
  sampler_rng_.set_state(j.at("rng").at("sampler").get<std::string>());
  rollout_rng_.set_state(j.at("rng").at("rollout").get<std::string>());
  target_rng_.set_state(j.at("rng").at("target").get<std::string>());
  dropout_rng_.set_state(j.at("rng").at("dropout").get<std::string>());
}

void Trainer::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os << checkpoint().dump() << '\n';
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  restore(json::parse(is));
}

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv_header() {
  return "epoch,env_steps,grad_steps,eval_mean,eval_std,actor_loss,critic_loss,mean_q,seed";
}

std::string metrics_csv_row(const EpochMetrics& m, std::uint64_t seed) {
  std::ostringstream os;
  os << m.epoch << ',' << m.env_steps << ',' << m.grad_steps << ',' << format_number(m.eval_mean)
     << ',' << format_number(m.eval_std) << ',' << format_number(m.actor_loss) << ','
     << format_number(m.critic_loss) << ',' << format_number(m.mean_q) << ',' << seed;
  return os.str();
}

}  // namespace dtune::train
