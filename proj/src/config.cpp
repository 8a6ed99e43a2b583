#include "gaitbridge/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gaitbridge/error.hpp"

namespace gaitbridge {

using nlohmann::json;

std::string to_string(sim::ResetMode m) { return m == sim::ResetMode::clip_start ? "clip_start" : "random_frame"; }

json to_json(const TrainConfig& c) {
  const auto& w = c.reward.weights;
  const auto& p = c.ppo;
  const auto& m = c.mapper.update;
  return json{
      {"dataset", c.dataset},
      {"output_dir", c.output_dir},
      {"mode", reward::to_string(c.mode)},
      {"seed", c.seed},
      {"iterations", c.iterations},
      {"checkpoint_every", c.checkpoint_every},
      {"log_steps", c.log_steps},
      {"reset_mode", to_string(c.reset_mode)},
      {"reward",
       {{"w_cpd", w.cpd},
        {"w_root", w.root},
        {"w_tor", w.tor},
        {"w_lim", w.lim},
        {"root_scale", c.reward.root_scale},
        {"torque_mode", reward::to_string(c.reward.torque_mode)}}},
      {"ppo",
       {{"gamma", p.gamma},
        {"lambda", p.lambda},
        {"clip_ratio", p.clip_ratio},
        {"epochs", p.epochs},
        {"minibatches", p.minibatches},
        {"learning_rate", p.learning_rate},
        {"value_learning_rate", p.value_learning_rate},
        {"value_coef", p.value_coef},
        {"entropy_coef", p.entropy_coef},
        {"max_grad_norm", p.max_grad_norm},
        {"num_envs", p.num_envs},
        {"horizon", p.horizon}}},
      {"mapper",
       {{"epochs", m.epochs},
        {"minibatch", m.minibatch},
        {"learning_rate", m.learning_rate},
        {"cycle_weight", m.cycle_weight},
        {"sigma", c.mapper.sigma},
        {"std_floor", c.mapper.std_floor}}},
      {"network",
       {{"policy_hidden", c.network.policy_hidden},
        {"mapper_hidden", c.network.mapper_hidden},
        {"log_std_init", c.network.log_std_init}}},
      {"observation", {{"std_floor", c.observation.std_floor}, {"clip", c.observation.clip}}},
  };
}

namespace {

// Reads the fields of one JSON object, collecting problems instead of stopping at the first.
class Fields {
 public:
  Fields(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {}

  ~Fields() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items())
      if (!seen_.contains(key)) errors_.push_back(path(key) + ": unknown field");
  }

  bool present(const char* key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key);
  }

  void number(const char* key, double& out) {
    if (!present(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number()) return fail(key, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(key, "must be finite");
  }

  void integer(const char* key, int& out) {
    if (!present(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) return fail(key, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) return fail(key, "out of range");
    out = static_cast<int>(x);
  }

  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (!present(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      return fail(key, "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void boolean(const char* key, bool& out) {
    if (!present(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) return fail(key, "expected true or false");
    out = v.get<bool>();
  }

  bool string(const char* key, std::string& out, bool required = false) {
    if (!present(key)) {
      if (required) fail(key, "required field missing");
      return false;
    }
    const json& v = obj_.at(key);
    if (!v.is_string()) {
      fail(key, "expected a string");
      return false;
    }
    out = v.get<std::string>();
    if (required && out.empty()) fail(key, "must not be empty");
    return true;
  }

  void layers(const char* key, std::vector<int>& out) {
    if (!present(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array()) return fail(key, "expected an array of positive integers");
    std::vector<int> sizes;
    for (const json& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() <= 0 || e.get<std::int64_t>() > 1 << 16)
        return fail(key, "expected an array of positive integers");
      sizes.push_back(e.get<int>());
    }
    out = std::move(sizes);
  }

  const json* object(const char* key) {
    if (!present(key)) return nullptr;
    const json& v = obj_.at(key);
    if (!v.is_object()) {
      fail(key, "expected an object");
      return nullptr;
    }
    return &v;
  }

  void fail(const char* key, const std::string& what) { errors_.push_back(path(key) + ": " + what); }

 private:
  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

}  // namespace

TrainConfig config_from_json(const json& doc) {
  std::vector<std::string> errors;
  TrainConfig c;
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object at the top level");

  // Scoped so each Fields reports unknown keys before the range checks below.
  {
    Fields top(doc, "", errors);
    top.string("dataset", c.dataset, true);
    top.string("output_dir", c.output_dir, true);
    std::string text;
    if (top.string("mode", text)) {
      try {
        c.mode = reward::mode_from_string(text);
      } catch (const ConfigError& e) {
        errors.insert(errors.end(), e.items().begin(), e.items().end());
      }
    }
    top.unsigned_integer("seed", c.seed);
    top.integer("iterations", c.iterations);
    top.integer("checkpoint_every", c.checkpoint_every);
    top.boolean("log_steps", c.log_steps);
    if (top.string("reset_mode", text)) {
      if (text == "clip_start")
        c.reset_mode = sim::ResetMode::clip_start;
      else if (text == "random_frame")
        c.reset_mode = sim::ResetMode::random_frame;
      else
        top.fail("reset_mode", "unknown value '" + text + "' (expected clip_start or random_frame)");
    }

    if (const json* r = top.object("reward")) {
      Fields f(*r, "reward", errors);
      f.number("w_cpd", c.reward.weights.cpd);
      f.number("w_root", c.reward.weights.root);
      f.number("w_tor", c.reward.weights.tor);
      f.number("w_lim", c.reward.weights.lim);
      f.number("root_scale", c.reward.root_scale);
      if (f.string("torque_mode", text)) {
        try {
          c.reward.torque_mode = reward::torque_mode_from_string(text);
        } catch (const ConfigError& e) {
          errors.insert(errors.end(), e.items().begin(), e.items().end());
        }
      }
    }
    if (const json* p = top.object("ppo")) {
      Fields f(*p, "ppo", errors);
      f.number("gamma", c.ppo.gamma);
      f.number("lambda", c.ppo.lambda);
      f.number("clip_ratio", c.ppo.clip_ratio);
      f.integer("epochs", c.ppo.epochs);
      f.integer("minibatches", c.ppo.minibatches);
      f.number("learning_rate", c.ppo.learning_rate);
      f.number("value_learning_rate", c.ppo.value_learning_rate);
      f.number("value_coef", c.ppo.value_coef);
      f.number("entropy_coef", c.ppo.entropy_coef);
      f.number("max_grad_norm", c.ppo.max_grad_norm);
      f.integer("num_envs", c.ppo.num_envs);
      f.integer("horizon", c.ppo.horizon);
    }
    if (const json* m = top.object("mapper")) {
      Fields f(*m, "mapper", errors);
      f.integer("epochs", c.mapper.update.epochs);
      f.integer("minibatch", c.mapper.update.minibatch);
      f.number("learning_rate", c.mapper.update.learning_rate);
      f.number("cycle_weight", c.mapper.update.cycle_weight);
      f.number("sigma", c.mapper.sigma);
      f.number("std_floor", c.mapper.std_floor);
    }
    if (const json* n = top.object("network")) {
      Fields f(*n, "network", errors);
      f.layers("policy_hidden", c.network.policy_hidden);
      f.layers("mapper_hidden", c.network.mapper_hidden);
      f.number("log_std_init", c.network.log_std_init);
    }
    if (const json* o = top.object("observation")) {
      Fields f(*o, "observation", errors);
      f.number("std_floor", c.observation.std_floor);
      f.number("clip", c.observation.clip);
    }
  }

  auto check = [&](bool ok, const char* field, const char* what) {
    if (!ok) errors.push_back(std::string(field) + ": " + what);
  };
  check(c.iterations >= 0, "iterations", "must be >= 0");
  check(c.checkpoint_every >= 1, "checkpoint_every", "must be >= 1");
  check(c.reward.root_scale > 0.0, "reward.root_scale", "must be > 0");
  check(c.ppo.gamma >= 0.0 && c.ppo.gamma < 1.0, "ppo.gamma", "must be in [0, 1)");
  check(c.ppo.lambda >= 0.0 && c.ppo.lambda < 1.0, "ppo.lambda", "must be in [0, 1)");
  check(c.ppo.clip_ratio > 0.0, "ppo.clip_ratio", "must be > 0");
  check(c.ppo.epochs >= 1, "ppo.epochs", "must be >= 1");
  check(c.ppo.minibatches >= 1, "ppo.minibatches", "must be >= 1");
  check(c.ppo.learning_rate > 0.0, "ppo.learning_rate", "must be > 0");
  check(c.ppo.value_learning_rate > 0.0, "ppo.value_learning_rate", "must be > 0");
  check(c.ppo.value_coef >= 0.0, "ppo.value_coef", "must be >= 0");
  check(c.ppo.entropy_coef >= 0.0, "ppo.entropy_coef", "must be >= 0");
  check(c.ppo.max_grad_norm > 0.0, "ppo.max_grad_norm", "must be > 0");
  check(c.ppo.num_envs >= 1, "ppo.num_envs", "must be >= 1");
  check(c.ppo.horizon >= 1, "ppo.horizon", "must be >= 1");
  check(static_cast<long long>(c.ppo.num_envs) * c.ppo.horizon >= c.ppo.minibatches, "ppo.minibatches",
        "must not exceed num_envs * horizon");
  check(c.mapper.update.epochs >= 0, "mapper.epochs", "must be >= 0");
  check(c.mapper.update.minibatch >= 1, "mapper.minibatch", "must be >= 1");
  check(c.mapper.update.learning_rate > 0.0, "mapper.learning_rate", "must be > 0");
  check(c.mapper.update.cycle_weight >= 0.0, "mapper.cycle_weight", "must be >= 0");
  check(c.mapper.sigma > 0.0, "mapper.sigma", "must be > 0");
  check(c.mapper.std_floor > 0.0, "mapper.std_floor", "must be > 0");
  check(c.network.log_std_init >= nn::kLogStdMin && c.network.log_std_init <= nn::kLogStdMax,
        "network.log_std_init", "must be in [-10, 1]");
  check(c.observation.std_floor > 0.0, "observation.std_floor", "must be > 0");
  check(c.observation.clip > 0.0, "observation.clip", "must be > 0");

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  json doc;
  try {
    doc = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config: malformed JSON in " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

std::string config_snapshot(const TrainConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace gaitbridge
