#include "subtune/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "subtune/rng.hpp"

namespace subtune {

std::string to_string(Distribution d) {
  switch (d) {
    case Distribution::kUniform: return "uniform";
    case Distribution::kLogUniform: return "log-uniform";
    case Distribution::kLogRandint: return "log-randint";
  }
  return "uniform";
}

Distribution distribution_from_string(std::string_view s) {
  if (s == "uniform") return Distribution::kUniform;
  if (s == "log-uniform") return Distribution::kLogUniform;
  if (s == "log-randint") return Distribution::kLogRandint;
  throw std::invalid_argument("unknown distribution: " + std::string(s));
}

void ParamSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("parameter name must be non-empty");
  if (!(lower < upper))
    throw std::invalid_argument("parameter '" + name + "': lower must be < upper");
  if (distribution != Distribution::kUniform && !(lower > 0.0))
    throw std::invalid_argument("parameter '" + name + "': log-scaled lower bound must be > 0");
  if (distribution == Distribution::kLogRandint) {
    if (lower != std::floor(lower) || upper != std::floor(upper) || lower < 1.0)
      throw std::invalid_argument("parameter '" + name +
                                  "': log-randint bounds must be integers >= 1");
  }
}

void HyperparamSpace::add(ParamSpec spec) {
  spec.validate();
  if (find(spec.name) != nullptr)
    throw std::invalid_argument("duplicate parameter name: " + spec.name);
  params_.push_back(std::move(spec));
}

const ParamSpec* HyperparamSpace::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

nlohmann::json HyperparamSpace::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params_) {
    arr.push_back({{"name", p.name},
                   {"distribution", to_string(p.distribution)},
                   {"lower", p.lower},
                   {"upper", p.upper}});
  }
  return arr;
}

HyperparamSpace HyperparamSpace::from_json(const nlohmann::json& j) {
  HyperparamSpace space;
  for (const auto& item : j) {
    ParamSpec spec;
    spec.name = item.at("name").get<std::string>();
    spec.distribution = distribution_from_string(item.at("distribution").get<std::string>());
    spec.lower = item.at("lower").get<double>();
    spec.upper = item.at("upper").get<double>();
    space.add(std::move(spec));
  }
  return space;
}

double Configuration::at(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw std::out_of_range("configuration has no value for '" + name + "'");
  return it->second;
}

nlohmann::json Configuration::to_json() const {
  nlohmann::json obj = nlohmann::json::object();
  for (const auto& [name, value] : values) obj[name] = value;
  return obj;
}

Configuration Configuration::from_json(const nlohmann::json& j) {
  Configuration c;
  for (auto it = j.begin(); it != j.end(); ++it) c.values[it.key()] = it.value().get<double>();
  return c;
}

std::string Configuration::key() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [name, value] : values) os << name << '=' << value << ';';
  return os.str();
}

HyperparamSpace default_xgboost_space() {
  HyperparamSpace space;
  space.add({"eta", Distribution::kLogUniform, 1e-3, 1.0});
  space.add({"alpha", Distribution::kLogUniform, 1e-6, 2.0});
  space.add({"lambda", Distribution::kLogUniform, 1e-6, 2.0});
  space.add({"gamma", Distribution::kLogUniform, 1e-6, 64.0});
  space.add({"subsample", Distribution::kUniform, 0.5, 1.0});
  space.add({"col_subsample", Distribution::kUniform, 0.3, 1.0});
  space.add({"max_depth", Distribution::kLogRandint, 2, 8});
  space.add({"num_round", Distribution::kLogRandint, 2, 1024});
  return space;
}

namespace {

double sample_param(const ParamSpec& spec, Rng& rng) {
  switch (spec.distribution) {
    case Distribution::kUniform:
      return rng.uniform(spec.lower, spec.upper);
    case Distribution::kLogUniform:
      return std::exp(rng.uniform(std::log(spec.lower), std::log(spec.upper)));
    case Distribution::kLogRandint: {
      const double raw = std::exp(rng.uniform(std::log(spec.lower), std::log(spec.upper)));
      double v = std::llround(raw);
      return std::clamp(v, spec.lower, spec.upper);
    }
  }
  return spec.lower;
}

}  // namespace

Configuration sample_config(const HyperparamSpace& space, std::uint64_t seed) {
  Rng rng(seed);
  Configuration config;
  for (const auto& spec : space.params()) config.values[spec.name] = sample_param(spec, rng);
  return config;
}

ValidationResult validate_config(const HyperparamSpace& space, const Configuration& config) {
  ValidationResult result;
  for (const auto& spec : space.params()) {
    auto it = config.values.find(spec.name);
    if (it == config.values.end()) {
      result.violations.push_back(spec.name);
      continue;
    }
    const double v = it->second;
    if (!std::isfinite(v) || v < spec.lower || v > spec.upper ||
        (spec.is_integer() && v != std::floor(v))) {
      result.violations.push_back(spec.name);
    }
  }
  // Values with no matching spec violate "exactly one value per ParamSpec".
  for (const auto& [name, value] : config.values) {
    (void)value;
    if (space.find(name) == nullptr) result.violations.push_back(name);
  }
  return result;
}

std::vector<double> to_unit_cube(const HyperparamSpace& space, const Configuration& config) {
  std::vector<double> z;
  z.reserve(space.size());
  for (const auto& spec : space.params()) {
    const double v = config.at(spec.name);
    double t;
    if (spec.distribution == Distribution::kUniform) {
      t = (v - spec.lower) / (spec.upper - spec.lower);
    } else {
      t = (std::log(v) - std::log(spec.lower)) / (std::log(spec.upper) - std::log(spec.lower));
    }
    z.push_back(std::clamp(t, 0.0, 1.0));
  }
  return z;
}

Configuration from_unit_cube(const HyperparamSpace& space, const std::vector<double>& z) {
  if (z.size() != space.size())
    throw std::invalid_argument("unit-cube point dimension does not match space");
  Configuration config;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto& spec = space.params()[i];
    const double t = std::clamp(z[i], 0.0, 1.0);
    double v;
    if (spec.distribution == Distribution::kUniform) {
      v = spec.lower + t * (spec.upper - spec.lower);
    } else {
      v = std::exp(std::log(spec.lower) +
                   t * (std::log(spec.upper) - std::log(spec.lower)));
      if (spec.is_integer()) v = std::clamp<double>(std::llround(v), spec.lower, spec.upper);
    }
    config.values[spec.name] = v;
  }
  return config;
}

}  // namespace subtune
