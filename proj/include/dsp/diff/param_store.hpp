#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dsp/diff/tape.hpp"

namespace dsp::diff {

enum class Init { Zeros, Ones, UniformFanIn };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named parameters with deterministic initialization and Adam state.
/// Each tensor's initial values depend only on (init_seed, name).
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t init_seed = 0) : init_seed_(init_seed) {}

  /// Creates the parameter on first use; later calls return the existing one
  /// (ShapeMismatch if the shape differs). `fan_in` defaults to `rows`.
  Parameter& get(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init, Eigen::Index fan_in = 0);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  /// One bias-corrected Adam step over every parameter, then zeroes grads.
  /// Throws MissingGrad if no parameter received a gradient since the last step.
  void optimizer_step(double lr, const AdamConfig& hyper = {});

  std::size_t num_scalars() const;
  std::uint64_t init_seed() const { return init_seed_; }
  std::int64_t step() const { return step_; }
  const std::map<std::string, Parameter>& params() const { return params_; }
  std::map<std::string, Parameter>& params() { return params_; }

  /// Binary checkpoint: magic, JSON header (schema, seed, step, shapes,
  /// extra metadata, checksum), then raw value/m/v arrays.
  void save(const std::string& path, const std::string& metadata_json = "{}") const;
  /// Replaces the contents of the store. Throws ChecksumMismatch on corruption.
  static ParamStore load(const std::string& path, std::string* metadata_json = nullptr);

  bool operator==(const ParamStore& other) const;

 private:
  std::uint64_t init_seed_;
  std::int64_t step_ = 0;
  std::map<std::string, Parameter> params_;
};

inline constexpr int kCheckpointSchemaVersion = 1;

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace dsp::diff
