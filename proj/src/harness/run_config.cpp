#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "demi/errors.hpp"
#include "demi/harness.hpp"

namespace demi::harness {

std::string default_output_dir() {
  const char* env = std::getenv("DEMI_OUT_DIR");
  return env && *env ? std::string(env) : std::string(".");
}

std::string resolve_output(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path() || p.is_absolute()) return path;
  return (std::filesystem::path(default_output_dir()) / p).string();
}

void RunConfig::validate() const {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  train_config().validate();
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.kind = estimator;
  c.critic = critic;
  c.psi_star = psi_star;
  c.k = k;
  c.batch = batch;
  c.steps = steps;
  c.lr = lr;
  c.seed = seed;
  c.eval_interval = eval_interval;
  c.eval_batches = eval_batches;
  c.eval_rows = eval_rows;
  c.shared_encoder = shared_encoder;
  return c;
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["estimator"] = to_string(estimator);
  j["critic_mode"] = to_string(critic);
  j["psi_star"] = to_string(psi_star);
  j["world"] = world;
  j["target_mi"] = target_mi;
  j["dims"] = dims;
  j["K"] = k;
  j["batch"] = batch;
  j["steps"] = steps;
  j["lr"] = lr;
  j["seed"] = seed;
  j["eval_interval"] = eval_interval;
  j["eval_batches"] = eval_batches;
  j["eval_rows"] = eval_rows;
  j["shared_encoder"] = shared_encoder;
  j["out"] = out;
  return j.dump();
}

RunConfig RunConfig::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw ConfigError("RunConfig: unsupported format_version");
    RunConfig c;
    c.estimator = parse_estimator_kind(j.at("estimator").get<std::string>());
    c.critic = parse_critic_mode(j.at("critic_mode").get<std::string>());
    c.psi_star = parse_psi_star_mode(j.at("psi_star").get<std::string>());
    c.world = j.at("world").get<std::string>();
    c.target_mi = j.at("target_mi").get<double>();
    c.dims = j.at("dims").get<std::size_t>();
    c.k = j.at("K").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_interval = j.at("eval_interval").get<std::size_t>();
    c.eval_batches = j.at("eval_batches").get<std::size_t>();
    c.eval_rows = j.at("eval_rows").get<std::size_t>();
    c.shared_encoder = j.at("shared_encoder").get<bool>();
    c.out = j.at("out").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("RunConfig: ") + e.what());
  }
}

}  // namespace demi::harness
