#include "demi/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "demi/errors.hpp"

namespace demi::nn {

namespace {
constexpr int kFormatVersion = 1;
}

std::string checkpoint_to_json(const std::vector<NamedTensor>& tensors) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  auto list = nlohmann::json::array();
  for (const auto& t : tensors) {
    if (!t.tensor.all_finite()) throw NumericalError("checkpoint: non-finite value in " + t.name);
    list.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"data", t.tensor.data()}});
  }
  j["tensors"] = std::move(list);
  return j.dump() + "\n";
}

std::vector<NamedTensor> checkpoint_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format_version", 0) != kFormatVersion)
    throw ConfigError("checkpoint: unsupported format_version");
  std::vector<NamedTensor> out;
  for (const auto& t : j.at("tensors")) {
    out.push_back({t.at("name").get<std::string>(),
                   Tensor(t.at("shape").get<std::vector<std::size_t>>(),
                          t.at("data").get<std::vector<double>>())});
  }
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out << checkpoint_to_json(tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace demi::nn
