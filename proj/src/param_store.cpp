#include "dsp/diff/param_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dsp/error.hpp"

namespace dsp::diff {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'P', 'C', 'K', 'P', 'T', '1'};

std::uint64_t hash_matrix(const Matrix& m, std::uint64_t h) {
  return fnv1a64(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Parameter& ParamStore::get(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                           Eigen::Index fan_in) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    const Parameter& p = it->second;
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + name + "' exists with shape (" +
                                                std::to_string(p.value.rows()) + ", " + std::to_string(p.value.cols()) +
                                                "), requested (" + std::to_string(rows) + ", " + std::to_string(cols) + ")");
    }
    return it->second;
  }
  Parameter p;
  p.name = name;
  switch (init) {
    case Init::Zeros: p.value = Matrix::Zero(rows, cols); break;
    case Init::Ones: p.value = Matrix::Ones(rows, cols); break;
    case Init::UniformFanIn: {
      std::mt19937_64 rng(init_seed_ ^ fnv1a64(name.data(), name.size()));
      const double a = std::sqrt(1.0 / static_cast<double>(std::max<Eigen::Index>(fan_in > 0 ? fan_in : rows, 1)));
      std::uniform_real_distribution<double> u(-a, a);
      p.value.resize(rows, cols);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
      break;
    }
  }
  p.grad = Matrix::Zero(rows, cols);
  p.m = Matrix::Zero(rows, cols);
  p.v = Matrix::Zero(rows, cols);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidConfig, "unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidConfig, "unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) {
    p.grad.setZero();
    p.has_grad = false;
  }
}

void ParamStore::optimizer_step(double lr, const AdamConfig& hyper) {
  bool any = false;
  for (const auto& [name, p] : params_) any = any || p.has_grad;
  if (!any) throw Error(ErrorCode::MissingGrad, "optimizer step without any populated gradient");
  ++step_;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params_) {
    // Parameters untouched by this step keep their moments (as if absent from the graph).
    if (!p.has_grad) continue;
    if (!p.grad.allFinite()) throw Error(ErrorCode::NonFiniteValue, "gradient of '" + name + "' is not finite");
    p.m = hyper.beta1 * p.m + (1.0 - hyper.beta1) * p.grad;
    p.v = hyper.beta2 * p.v + (1.0 - hyper.beta2) * p.grad.cwiseAbs2();
    const auto mhat = p.m.array() / c1;
    const auto vhat = p.v.array() / c2;
    p.value.array() -= lr * mhat / (vhat.sqrt() + hyper.eps);
  }
  zero_grad();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (init_seed_ != other.init_seed_ || step_ != other.step_ || params_.size() != other.params_.size()) return false;
  for (auto a = params_.begin(), b = other.params_.begin(); a != params_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.value != b->second.value || a->second.m != b->second.m || a->second.v != b->second.v) return false;
  }
  return true;
}

void ParamStore::save(const std::string& path, const std::string& metadata_json) const {
  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  nlohmann::ordered_json header;
  header["schema_version"] = kCheckpointSchemaVersion;
  header["init_seed"] = init_seed_;
  header["step"] = step_;
  auto list = nlohmann::ordered_json::array();
  for (const auto& [name, p] : params_) {
    list.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    checksum = hash_matrix(p.value, checksum);
    checksum = hash_matrix(p.m, checksum);
    checksum = hash_matrix(p.v, checksum);
  }
  header["params"] = std::move(list);
  header["metadata"] = nlohmann::ordered_json::parse(metadata_json);
  header["checksum"] = checksum;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, p] : params_) {
    for (const Matrix* m : {&p.value, &p.m, &p.v}) {
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing checkpoint '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path, std::string* metadata_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint '" + path + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::ChecksumMismatch, "'" + path + "' is not a checkpoint file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 30)) throw Error(ErrorCode::ChecksumMismatch, "'" + path + "': corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ChecksumMismatch, "'" + path + "': corrupt header: " + e.what());
  }
  if (header.value("schema_version", -1) != kCheckpointSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "'" + path + "': checkpoint schema_version " +
                                                      header.value("schema_version", nlohmann::json(nullptr)).dump() +
                                                      ", expected " + std::to_string(kCheckpointSchemaVersion));
  }
  ParamStore store(header.at("init_seed").get<std::uint64_t>());
  store.step_ = header.at("step").get<std::int64_t>();
  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  for (const auto& entry : header.at("params")) {
    Parameter p;
    p.name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    for (Matrix* m : {&p.value, &p.m, &p.v}) {
      m->resize(rows, cols);
      in.read(reinterpret_cast<char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
      if (!in) throw Error(ErrorCode::ChecksumMismatch, "'" + path + "': truncated data for '" + p.name + "'");
      checksum = hash_matrix(*m, checksum);
    }
    p.grad = Matrix::Zero(rows, cols);
    store.params_.emplace(p.name, std::move(p));
  }
  in.peek();
  if (!in.eof()) throw Error(ErrorCode::ChecksumMismatch, "'" + path + "': trailing bytes");
  if (checksum != header.at("checksum").get<std::uint64_t>()) {
    throw Error(ErrorCode::ChecksumMismatch, "'" + path + "': parameter data does not match the stored checksum");
  }
  if (metadata_json) *metadata_json = header.contains("metadata") ? header["metadata"].dump() : "{}";
  return store;
}

}  // namespace dsp::diff
