#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace subtune {

enum class Distribution { kUniform, kLogUniform, kLogRandint };

std::string to_string(Distribution d);
Distribution distribution_from_string(std::string_view s);

struct ParamSpec {
  std::string name;
  Distribution distribution = Distribution::kUniform;
  double lower = 0.0;
  double upper = 0.0;

  bool is_integer() const { return distribution == Distribution::kLogRandint; }
  // Throws std::invalid_argument when bounds violate the distribution's domain.
  void validate() const;
};

// Ordered, immutable-after-build list of parameter specs. Iteration order is
// the insertion order and is the canonical order for sampling and for the
// unit-cube encoding used by the surrogate model.
class HyperparamSpace {
 public:
  HyperparamSpace() = default;

  void add(ParamSpec spec);

  const std::vector<ParamSpec>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  const ParamSpec* find(std::string_view name) const;

  nlohmann::json to_json() const;
  static HyperparamSpace from_json(const nlohmann::json& j);

 private:
  std::vector<ParamSpec> params_;
};

// One sampled point of the search space. Values are 64-bit reals; integer
// parameters hold exactly-representable whole numbers.
struct Configuration {
  std::map<std::string, double> values;

  bool operator==(const Configuration& other) const { return values == other.values; }

  double at(const std::string& name) const;

  nlohmann::json to_json() const;
  static Configuration from_json(const nlohmann::json& j);
  // Canonical "name=value;..." key, used to group trial records by configuration.
  std::string key() const;
};

// The eight-parameter XGBoost domain used throughout the project.
HyperparamSpace default_xgboost_space();

// Draws each parameter independently. Pure function of (space, seed).
Configuration sample_config(const HyperparamSpace& space, std::uint64_t seed);

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationResult validate_config(const HyperparamSpace& space, const Configuration& config);

// Maps a configuration to [0,1]^d, log-scaled dimensions in log space.
std::vector<double> to_unit_cube(const HyperparamSpace& space, const Configuration& config);
// Inverse map; log-randint dimensions round to the nearest integer.
Configuration from_unit_cube(const HyperparamSpace& space, const std::vector<double>& z);

}  // namespace subtune
