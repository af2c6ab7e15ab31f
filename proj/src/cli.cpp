#include "dtune/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dtune/theory.hpp"

namespace dtune::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kOutEnvVar = "DTUNE_OUT";

[[noreturn]] void config_error(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

// ---------------------------------------------------------------------------
// Strict field reader: every key of the object must be consumed.

class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(label() + " must be an object");
  }

  bool has(const char* key) const {
    auto it = j_.find(key);
    return it != j_.end() && !it->is_null();
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    const json& v = *it;
    bool ok;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      ok = v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else {
      ok = true;
    }
    if (!ok) config_error(where(key) + " has the wrong type (" + v.dump() + ")");
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      config_error(where(key) + " has the wrong type (" + v.dump() + ")");
    }
  }

  Fields sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return Fields(empty, where(key));
    return Fields(*it, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) config_error("unknown key " + where(it.key()));
    }
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Presets and algorithm switches.

void merge(json& dst, const json& src) {
  if (!dst.is_object() || !src.is_object()) {
    dst = src;
    return;
  }
  for (auto it = src.begin(); it != src.end(); ++it) {
    if (dst.contains(it.key()) && dst[it.key()].is_object() && it.value().is_object()) {
      merge(dst[it.key()], it.value());
    } else {
      dst[it.key()] = it.value();
    }
  }
}

json base_json() {
  json j = to_json(RunConfig{});
  // Sized from the context lengths unless given.
  j["agent"]["context_len"] = nullptr;
  return j;
}

json preset_json(const std::string& name) {
  if (name == "custom") return json::object();
  if (name == "bandit-fig2") {
    return json::parse(R"({
      "env": "bandit",
      "dataset": {"generator": "bandit-concealed"},
      "seeds": [0, 1, 2, 3, 4],
      "agent": {"embed_dim": 16, "n_heads": 1, "n_layers": 1,
                "critic_hidden": 128, "critic_layers": 2},
      "train": {"batch_size": 32, "schedule": "linear", "t_train": 1, "t_eval": 1,
                "rtg_eval": 1.0, "rtg_rollout": 1.0,
                "actor_opt": {"lr": 1e-3}, "critic_opt": {"lr": 1e-3},
                "explore": {"kind": "uniform", "scale": 0.01},
                "pretrain_steps": 200, "online_max_env_steps": 1024,
                "min_steps_per_epoch": 64, "buffer_capacity": 100000,
                "eval_episodes": 1, "alpha_pretrain": 0.0, "alpha_online": 10.0}
    })");
  }
  if (name == "pointmass") {
    return json::parse(R"({
      "env": "pointmass",
      "dataset": {"generator": "random", "n_steps": 10000},
      "seeds": [0, 1, 2, 3, 4],
      "agent": {"embed_dim": 32, "n_heads": 2, "n_layers": 1,
                "critic_hidden": 64, "critic_layers": 2, "rtg_scale": 100.0},
      "train": {"batch_size": 32, "schedule": "fixed", "t_train": 5, "t_eval": 5,
                "rtg_eval": "oracle", "rtg_rollout": "eval*0.5",
                "actor_opt": {"lr": 1e-4}, "critic_opt": {"lr": 1e-3},
                "critic_updates_per_epoch": 200, "actor_updates_per_epoch": 100,
                "explore": {"kind": "gaussian", "scale": 0.1},
                "pretrain_steps": 2000, "online_max_env_steps": 20000,
                "min_steps_per_epoch": 1000, "buffer_capacity": 1000,
                "eval_episodes": 10, "alpha_pretrain": 0.0, "alpha_online": 0.1}
    })");
  }
  config_error("unknown preset '" + name + "'");
}

json algo_json(const std::string& algo) {
  if (algo == "td3_odt") {
    return json::parse(R"({"agent": {"twin_critics": true},
      "train": {"use_critic": true, "sl_coeff": 1.0, "policy_noise": 0.2, "policy_delay": 2}})");
  }
  if (algo == "ddpg_odt") {
    return json::parse(R"({"agent": {"twin_critics": false},
      "train": {"use_critic": true, "sl_coeff": 1.0, "policy_noise": 0.0, "policy_delay": 1}})");
  }
  if (algo == "ddpg") {
    return json::parse(R"({"agent": {"twin_critics": false},
      "train": {"use_critic": true, "sl_coeff": 0.0, "policy_noise": 0.0, "policy_delay": 1,
                "alpha_pretrain": 1.0, "alpha_online": 1.0}})");
  }
  if (algo == "td3") {
    return json::parse(R"({"agent": {"twin_critics": true},
      "train": {"use_critic": true, "sl_coeff": 0.0, "policy_noise": 0.2, "policy_delay": 2,
                "alpha_pretrain": 1.0, "alpha_online": 1.0}})");
  }
  if (algo == "odt") {
    return json::parse(R"({"train": {"use_critic": false, "sl_coeff": 1.0,
                "alpha_pretrain": 0.0, "alpha_online": 0.0}})");
  }
  config_error("unknown algo '" + algo + "'");
}

const json* find_path(const json& j, const std::string& dotted) {
  const json* cur = &j;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(key);
    if (it == cur->end()) return nullptr;
    cur = &*it;
    if (dot == std::string::npos) return cur;
    pos = dot + 1;
  }
}

void set_path(json& j, const std::string& dotted, const json& value) {
  if (dotted.empty()) config_error("empty key");
  json* cur = &j;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) config_error("malformed key '" + dotted + "'");
    if (!cur->is_object()) config_error("'" + dotted + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    if (cur->is_null()) *cur = json::object();
    pos = dot + 1;
  }
}

// Sweep objects may nest; leaves are arrays of values.
void flatten_sweep(const json& j, const std::string& prefix,
                   std::vector<std::pair<std::string, json>>& out) {
  if (j.is_array()) {
    if (j.empty()) config_error("sweep '" + prefix + "' has no values");
    out.emplace_back(prefix, j);
    return;
  }
  if (!j.is_object()) config_error("sweep '" + prefix + "' must list its values in an array");
  for (auto it = j.begin(); it != j.end(); ++it) {
    flatten_sweep(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  }
}

std::string value_label(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

json resolve_one(const Request& req, const json& layer) {
  std::string preset = "custom";
  if (layer.contains("preset")) {
    if (!layer["preset"].is_string()) config_error("preset must be a string");
    preset = layer["preset"].get<std::string>();
  }
  if (!req.preset.empty()) preset = req.preset;

  json preset_layer = preset_json(preset);
  std::string algo = "td3_odt";
  if (preset_layer.contains("algo")) algo = preset_layer["algo"].get<std::string>();
  if (layer.contains("algo")) {
    if (!layer["algo"].is_string()) config_error("algo must be a string");
    algo = layer["algo"].get<std::string>();
  }

  json j = base_json();
  merge(j, preset_layer);
  merge(j, algo_json(algo));
  merge(j, layer);
  j["preset"] = preset;
  j["algo"] = algo;

  // Without a delay every critic step is followed by an actor step.
  if ((algo == "ddpg" || algo == "ddpg_odt") &&
      !find_path(layer, "train.actor_updates_per_epoch")) {
    j["train"]["actor_updates_per_epoch"] = j["train"]["critic_updates_per_epoch"];
  }

  if (!req.seeds.empty()) j["seeds"] = req.seeds;
  if (!req.out.empty()) {
    j["out"] = req.out;
  } else if (!layer.contains("out")) {
    if (const char* env = std::getenv(kOutEnvVar); env && *env) j["out"] = env;
  }
  return j;
}

// ---------------------------------------------------------------------------

json opt_to_json(const ad::OptimizerConfig& o) {
  return {{"kind", ad::to_string(o.kind)}, {"lr", o.lr},       {"beta1", o.beta1},
          {"beta2", o.beta2},              {"eps", o.eps},     {"weight_decay", o.weight_decay},
          {"warmup_steps", o.warmup_steps}};
}

void opt_from_json(Fields f, ad::OptimizerConfig& o) {
  std::string kind = ad::to_string(o.kind);
  f.get("kind", kind);
  o.kind = ad::parse_optimizer(kind);
  f.get("lr", o.lr);
  f.get("beta1", o.beta1);
  f.get("beta2", o.beta2);
  f.get("eps", o.eps);
  f.get("weight_decay", o.weight_decay);
  f.get("warmup_steps", o.warmup_steps);
  f.finish();
}

// rtg_eval: number or "oracle" (the env's oracle-controller return).
// rtg_rollout: number or "eval*k".
double rtg_value(const json& v, const std::string& key, const envs::Env& env, double eval) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) config_error(key + " must be a number or a string");
  const std::string s = v.get<std::string>();
  if (s == "oracle") return env.reference_returns().expert;
  if (s.rfind("eval*", 0) == 0 && !std::isnan(eval)) {
    try {
      std::size_t used = 0;
      const double k = std::stod(s.substr(5), &used);
      if (used == s.size() - 5) return k * eval;
    } catch (const std::exception&) {
    }
  }
  config_error(key + ": cannot interpret '" + s + "'");
}

std::string mode_name(Mode m) { return m == Mode::kFinetune ? "finetune" : "pretrain-only"; }

Mode parse_mode(const std::string& s) {
  if (s == "finetune") return Mode::kFinetune;
  if (s == "pretrain-only") return Mode::kPretrainOnly;
  config_error("unknown mode '" + s + "'");
}

std::string seed_file(const std::string& dir, const char* stem, std::uint64_t seed,
                      const char* ext) {
  return (fs::path(dir) / (std::string(stem) + "_seed" + std::to_string(seed) + ext)).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::string diagnostics_header() {
  return "epoch,critic_steps,actor_steps,target_used_min,max_abs_target_noise,rtg_rollout";
}

std::string diagnostics_row(const train::EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << ',' << m.critic_steps << ',' << m.actor_steps << ','
     << (m.target_used_min ? 1 : 0) << ',' << train::format_number(m.max_abs_target_noise) << ','
     << train::format_number(m.rtg_rollout);
  return os.str();
}

std::unique_ptr<envs::Env> env_for(const RunConfig& cfg) {
  return envs::make_env(cfg.env, cfg.reward_delay);
}

// Parses and validates every config up front.
std::vector<RunConfig> parse_all(const std::vector<json>& configs) {
  if (configs.empty()) config_error("nothing to run");
  std::vector<RunConfig> out;
  out.reserve(configs.size());
  for (const json& j : configs) out.push_back(from_json(j));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"bandit-fig2", "pointmass", "custom"};
  return names;
}

const std::vector<std::string>& algo_names() {
  static const std::vector<std::string> names{"td3_odt", "ddpg_odt", "ddpg", "td3", "odt"};
  return names;
}

void RunConfig::validate() const {
  auto known = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  if (!known(preset_names(), preset)) config_error("unknown preset '" + preset + "'");
  if (!known(algo_names(), algo)) config_error("unknown algo '" + algo + "'");
  if (seeds.empty()) config_error("seeds must not be empty");
  if (reward_delay < 1) config_error("reward_delay must be >= 1");
  if (env != "bandit" && env != "pointmass") config_error("unknown env '" + env + "'");
  if (dataset.path.empty()) {
    if (dataset.generator == "bandit-concealed") {
      if (env != "bandit") config_error("bandit-concealed data needs env bandit");
    } else {
      envs::parse_behavior(dataset.generator);
      if (dataset.n_steps < 1) config_error("dataset.n_steps must be positive");
    }
  } else if (!fs::exists(dataset.path)) {
    config_error("dataset.path " + dataset.path + " does not exist");
  }
  if (out.empty()) config_error("out must not be empty");
  agent.validate();
  train.validate();
  if (agent.policy.context_len < std::max(train.t_train, train.t_eval)) {
    config_error("agent.context_len is shorter than t_train/t_eval");
  }
}

void apply_override(json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    config_error("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_path(j, key, value);
}

std::vector<json> resolve(const Request& req) {
  if (!req.user.is_object()) config_error("config file must hold an object");
  json layer = req.user;
  for (const auto& o : req.overrides) apply_override(layer, o);

  std::vector<std::pair<std::string, json>> axes;
  if (layer.contains("sweep")) {
    flatten_sweep(layer["sweep"], "", axes);
    layer.erase("sweep");
  }

  std::vector<json> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    json point = layer;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const json& v = axes[a].second[idx[a]];
      set_path(point, axes[a].first, v);
      const std::string& key = axes[a].first;
      const std::size_t dot = key.rfind('.');
      if (!label.empty()) label += "_";
      label += (dot == std::string::npos ? key : key.substr(dot + 1)) + "=" + value_label(v);
    }
    json j = resolve_one(req, point);
    if (!label.empty()) j["label"] = label;
    out.push_back(std::move(j));

    // Odometer; the last axis moves fastest.
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

json to_json(const RunConfig& c) {
  const auto& p = c.agent.policy;
  const auto& t = c.train;
  return {
      {"preset", c.preset},
      {"algo", c.algo},
      {"mode", mode_name(c.mode)},
      {"env", c.env},
      {"reward_delay", c.reward_delay},
      {"dataset",
       {{"generator", c.dataset.generator},
        {"n_steps", c.dataset.n_steps},
        {"path", c.dataset.path},
        {"bandit",
         {{"low_lo", c.dataset.bandit.low_lo},
          {"low_hi", c.dataset.bandit.low_hi},
          {"n_low", c.dataset.bandit.n_low},
          {"high_lo", c.dataset.bandit.high_lo},
          {"high_hi", c.dataset.bandit.high_hi},
          {"n_high", c.dataset.bandit.n_high}}}}},
      {"agent",
       {{"embed_dim", p.embed_dim},
        {"n_layers", p.n_layers},
        {"n_heads", p.n_heads},
        {"dropout", p.dropout_rate},
        {"context_len", p.context_len},
        {"positional_embedding", p.use_positional_embedding},
        {"critic_hidden", c.agent.critic_hidden},
        {"critic_layers", c.agent.critic_layers},
        {"critic_layer_norm", c.agent.critic_layer_norm},
        {"twin_critics", c.agent.twin_critics},
        {"tau", c.agent.tau},
        {"rtg_scale", c.agent.rtg_scale}}},
      {"train",
       {{"alpha_pretrain", t.alpha_pretrain},
        {"alpha_online", t.alpha_online},
        {"sl_coeff", t.sl_coeff},
        {"gamma", t.gamma},
        {"batch_size", t.batch_size},
        {"use_critic", t.use_critic},
        {"schedule", train::to_string(t.schedule)},
        {"critic_updates_per_epoch", t.critic_updates_per_epoch},
        {"actor_updates_per_epoch", t.actor_updates_per_epoch},
        {"policy_delay", t.policy_delay},
        {"linear_slope", t.linear_slope},
        {"linear_intercept", t.linear_intercept},
        {"t_train", t.t_train},
        {"t_eval", t.t_eval},
        {"rtg_eval", t.rtg_eval},
        {"rtg_rollout", t.rtg_rollout},
        {"curriculum_rtg", t.curriculum_rtg},
        {"actor_opt", opt_to_json(t.actor_opt)},
        {"critic_opt", opt_to_json(t.critic_opt)},
        {"policy_noise", t.policy_noise},
        {"noise_clip", t.noise_clip},
        {"explore", {{"kind", agent::to_string(t.explore.kind)}, {"scale", t.explore.scale}}},
        {"reward_scale", t.reward_scale},
        {"target_uses_current_state", t.target_uses_current_state},
        {"pretrain_steps", t.pretrain_steps},
        {"online_max_env_steps", t.online_max_env_steps},
        {"min_steps_per_epoch", t.min_steps_per_epoch},
        {"kl_coeff", t.kl_coeff},
        {"buffer_capacity", t.buffer_capacity},
        {"eviction", data::to_string(t.eviction)},
        {"eval_episodes", t.eval_episodes}}},
      {"seeds", c.seeds},
      {"out", c.out},
      {"save_checkpoints", c.save_checkpoints},
      {"eval_checkpoint", c.eval_checkpoint},
  };
}

RunConfig from_json(const json& resolved) {
  RunConfig c;
  Fields top(resolved, "");
  std::string label;
  top.get("label", label);
  top.get("preset", c.preset);
  top.get("algo", c.algo);
  std::string mode = mode_name(c.mode);
  top.get("mode", mode);
  c.mode = parse_mode(mode);
  top.get("env", c.env);
  top.get("reward_delay", c.reward_delay);
  if (top.has("seeds")) {
    const json& s = top.raw("seeds");
    if (!s.is_array()) config_error("seeds must be an array");
    c.seeds.clear();
    for (const json& v : s) {
      if (!v.is_number_unsigned()) config_error("seeds must be non-negative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  top.get("out", c.out);
  top.get("save_checkpoints", c.save_checkpoints);
  top.get("eval_checkpoint", c.eval_checkpoint);
  if (c.env != "bandit" && c.env != "pointmass") config_error("unknown env '" + c.env + "'");
  if (c.reward_delay < 1) config_error("reward_delay must be >= 1");
  const auto env = env_for(c);

  {
    Fields d = top.sub("dataset");
    d.get("generator", c.dataset.generator);
    d.get("n_steps", c.dataset.n_steps);
    d.get("path", c.dataset.path);
    Fields b = d.sub("bandit");
    b.get("low_lo", c.dataset.bandit.low_lo);
    b.get("low_hi", c.dataset.bandit.low_hi);
    b.get("n_low", c.dataset.bandit.n_low);
    b.get("high_lo", c.dataset.bandit.high_lo);
    b.get("high_hi", c.dataset.bandit.high_hi);
    b.get("n_high", c.dataset.bandit.n_high);
    b.finish();
    d.finish();
  }

  auto& t = c.train;
  {
    Fields f = top.sub("train");
    f.get("alpha_pretrain", t.alpha_pretrain);
    f.get("alpha_online", t.alpha_online);
    f.get("sl_coeff", t.sl_coeff);
    f.get("gamma", t.gamma);
    f.get("batch_size", t.batch_size);
    f.get("use_critic", t.use_critic);
    std::string schedule = train::to_string(t.schedule);
    f.get("schedule", schedule);
    t.schedule = train::parse_schedule(schedule);
    f.get("critic_updates_per_epoch", t.critic_updates_per_epoch);
    f.get("actor_updates_per_epoch", t.actor_updates_per_epoch);
    f.get("policy_delay", t.policy_delay);
    f.get("linear_slope", t.linear_slope);
    f.get("linear_intercept", t.linear_intercept);
    f.get("t_train", t.t_train);
    f.get("t_eval", t.t_eval);
    if (f.has("rtg_eval")) t.rtg_eval = rtg_value(f.raw("rtg_eval"), "train.rtg_eval", *env, NAN);
    if (f.has("rtg_rollout")) {
      t.rtg_rollout = rtg_value(f.raw("rtg_rollout"), "train.rtg_rollout", *env, t.rtg_eval);
    }
    f.get("curriculum_rtg", t.curriculum_rtg);
    opt_from_json(f.sub("actor_opt"), t.actor_opt);
    opt_from_json(f.sub("critic_opt"), t.critic_opt);
    f.get("policy_noise", t.policy_noise);
    f.get("noise_clip", t.noise_clip);
    {
      Fields e = f.sub("explore");
      std::string kind = agent::to_string(t.explore.kind);
      e.get("kind", kind);
      t.explore.kind = agent::parse_noise(kind);
      e.get("scale", t.explore.scale);
      e.finish();
    }
    f.get("reward_scale", t.reward_scale);
    f.get("target_uses_current_state", t.target_uses_current_state);
    f.get("pretrain_steps", t.pretrain_steps);
    f.get("online_max_env_steps", t.online_max_env_steps);
    f.get("min_steps_per_epoch", t.min_steps_per_epoch);
    f.get("kl_coeff", t.kl_coeff);
    f.get("buffer_capacity", t.buffer_capacity);
    std::string eviction = data::to_string(t.eviction);
    f.get("eviction", eviction);
    t.eviction = data::parse_eviction(eviction);
    f.get("eval_episodes", t.eval_episodes);
    f.finish();
  }

  c.agent = agent::default_agent_config(env->spec());
  {
    auto& p = c.agent.policy;
    Fields a = top.sub("agent");
    a.get("embed_dim", p.embed_dim);
    a.get("n_layers", p.n_layers);
    a.get("n_heads", p.n_heads);
    a.get("dropout", p.dropout_rate);
    p.context_len = std::max(t.t_train, t.t_eval);
    a.get("context_len", p.context_len);
    a.get("positional_embedding", p.use_positional_embedding);
    a.get("critic_hidden", c.agent.critic_hidden);
    a.get("critic_layers", c.agent.critic_layers);
    a.get("critic_layer_norm", c.agent.critic_layer_norm);
    a.get("twin_critics", c.agent.twin_critics);
    a.get("tau", c.agent.tau);
    a.get("rtg_scale", c.agent.rtg_scale);
    a.finish();
  }
  top.finish();
  c.validate();
  return c;
}

envs::OfflineDataset make_dataset(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.dataset.path.empty()) return envs::load_dataset(cfg.dataset.path);
  if (cfg.dataset.generator == "bandit-concealed") return envs::bandit_dataset(seed, cfg.dataset.bandit);
  auto env = env_for(cfg);
  return envs::generate_offline(*env, envs::parse_behavior(cfg.dataset.generator),
                                cfg.dataset.n_steps, seed);
}

// ---------------------------------------------------------------------------

std::string SummaryRow::formatted() const {
  // Round first so that tiny negatives print as 0.0, not -0.0.
  auto r1 = [](double v) {
    const double r = std::round(v * 10.0) / 10.0;
    return r == 0.0 ? 0.0 : r;
  };
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f(%+.1f)", r1(final_mean), r1(delta_mean));
  return buf;
}

std::string summary_header() {
  return "label,algo,n_seeds,final_mean,final_std,delta_mean,final(+delta)";
}

std::string summary_line(const SummaryRow& r) {
  std::ostringstream os;
  os << r.label << ',' << r.algo << ',' << r.seeds.size() << ','
     << train::format_number(r.final_mean) << ',' << train::format_number(r.final_std) << ','
     << train::format_number(r.delta_mean) << ',' << r.formatted();
  return os.str();
}

SummaryRow run_experiment(const RunConfig& cfg, const std::string& dir, const std::string& label,
                          std::ostream& log) {
  make_dir(dir);
  {
    auto os = open_out((fs::path(dir) / "config.json").string());
    os << to_json(cfg).dump(2) << '\n';
  }

  SummaryRow row;
  row.label = label;
  row.algo = cfg.algo;
  for (std::uint64_t seed : cfg.seeds) {
    train::Trainer tr(cfg.train, cfg.agent, env_for(cfg), seed);
    tr.load_offline(make_dataset(cfg, seed));

    auto csv = open_out(seed_file(dir, "metrics", seed, ".csv"));
    auto diag = open_out(seed_file(dir, "diagnostics", seed, ".csv"));
    csv << train::metrics_csv_header() << '\n';
    diag << diagnostics_header() << '\n';
    auto emit = [&](const train::EpochMetrics& m) {
      csv << train::metrics_csv_row(m, seed) << '\n';
      diag << diagnostics_row(m) << '\n';
      csv.flush();
      diag.flush();
    };

    std::vector<train::EpochMetrics> rows;
    if (cfg.mode == Mode::kPretrainOnly) {
      const train::EpochMetrics pre = tr.pretrain();
      train::EpochMetrics m = tr.evaluate_now(0);
      m.actor_loss = pre.actor_loss;
      m.critic_loss = pre.critic_loss;
      m.mean_q = pre.mean_q;
      m.critic_steps = pre.critic_steps;
      m.actor_steps = pre.actor_steps;
      m.target_used_min = pre.target_used_min;
      m.max_abs_target_noise = pre.max_abs_target_noise;
      emit(m);
      rows.push_back(m);
    } else {
      rows = tr.run([&](const train::EpochMetrics& m) {
        emit(m);
        log << "  [" << label << " seed " << seed << "] epoch " << m.epoch << " steps "
            << m.env_steps << " return " << train::format_number(m.eval_mean) << '\n';
      });
    }
    if (cfg.save_checkpoints) tr.save_checkpoint(seed_file(dir, "checkpoint", seed, ".json"));

    SeedResult r{seed, rows.front().eval_mean, rows.back().eval_mean};
    row.seeds.push_back(r);
    log << label << " seed " << seed << ": initial " << train::format_number(r.initial)
        << " final " << train::format_number(r.final) << '\n';
  }

  const double n = static_cast<double>(row.seeds.size());
  for (const auto& s : row.seeds) {
    row.final_mean += s.final / n;
    row.delta_mean += (s.final - s.initial) / n;
  }
  double ss = 0.0;
  for (const auto& s : row.seeds) ss += (s.final - row.final_mean) * (s.final - row.final_mean);
  row.final_std = std::sqrt(ss / n);
  return row;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::vector<json>& configs, std::ostream& log) {
  const auto cfgs = parse_all(configs);
  for (const auto& cfg : cfgs) {
    make_dir(cfg.out);
    for (std::uint64_t seed : cfg.seeds) {
      const auto ds = make_dataset(cfg, seed);
      const std::string path = seed_file(cfg.out, "dataset", seed, ".jsonl");
      envs::save_dataset(ds, path);
      log << path << ": " << ds.num_steps() << " steps, " << ds.trajectories.size()
          << " trajectories\n";
    }
  }
  return 0;
}

int cmd_run(const std::vector<json>& configs, std::ostream& log) {
  const auto cfgs = parse_all(configs);
  const bool sweep = configs.size() > 1;
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const std::string label = configs[i].value("label", cfgs[i].algo);
    const std::string dir = sweep ? (fs::path(cfgs[i].out) / label).string() : cfgs[i].out;
    rows.push_back(run_experiment(cfgs[i], dir, label, log));
  }

  // Summary goes last, next to the per-config directories.
  const std::string root = cfgs.front().out;
  make_dir(root);
  auto os = open_out((fs::path(root) / "summary.csv").string());
  os << summary_header() << '\n';
  log << summary_header() << '\n';
  for (const auto& r : rows) {
    os << summary_line(r) << '\n';
    log << summary_line(r) << '\n';
  }
  return 0;
}

int cmd_theory(const std::vector<json>& configs, std::ostream& log) {
  const auto cfgs = parse_all(configs);
  const RunConfig& cfg = cfgs.front();
  theory::TheoryConfig tc;
  tc.seed = cfg.seeds.front();
  for (const auto& traj : envs::bandit_dataset(cfg.seeds.front(), cfg.dataset.bandit).trajectories) {
    tc.bandit_returns.push_back(traj.episode_return());
  }
  const theory::TheoryReport rep = theory::run_theory_report(tc);

  make_dir(cfg.out);
  const std::string path = (fs::path(cfg.out) / "theory_report.csv").string();
  {
    auto os = open_out(path);
    rep.write(os);
  }
  int failed = 0;
  for (const auto& c : rep.checks) failed += c.passed ? 0 : 1;
  log << path << ": " << rep.checks.size() << " checks, " << failed << " failed\n";
  for (const auto& c : rep.checks) {
    if (!c.passed) log << "FAIL " << c.name << '\n';
  }
  return failed == 0 ? 0 : 1;
}

int cmd_eval(const std::vector<json>& configs, std::ostream& log) {
  const auto cfgs = parse_all(configs);
  const RunConfig& cfg = cfgs.front();
  if (cfg.eval_checkpoint.empty()) config_error("eval needs eval_checkpoint");
  if (!fs::exists(cfg.eval_checkpoint)) {
    config_error("eval_checkpoint " + cfg.eval_checkpoint + " does not exist");
  }
  train::Trainer tr(cfg.train, cfg.agent, env_for(cfg), cfg.seeds.front());
  tr.load_checkpoint(cfg.eval_checkpoint);
  const auto env = env_for(cfg);
  const auto ref = env->reference_returns();
  for (std::uint64_t seed : cfg.seeds) {
    const auto r = train::evaluate(tr.agent(), *env, cfg.train.eval_episodes, cfg.train.rtg_eval,
                                   cfg.train.t_eval, seed);
    log << "seed " << seed << ": return " << train::format_number(r.mean) << " +- "
        << train::format_number(r.std) << " normalized "
        << train::format_number(train::normalized_score(r.mean, ref)) << '\n';
  }
  return 0;
}

}  // namespace dtune::cli
