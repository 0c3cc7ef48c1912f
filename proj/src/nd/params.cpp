#include "disputelab/nd/params.hpp"

#include <cmath>

namespace disputelab::nd {

namespace {
constexpr const char* kFormat = "disputelab.params";
constexpr int kVersion = 1;
}  // namespace

Tensor& Parameters::add(const std::string& name, Tensor value) {
  auto [it, inserted] = tensors_.emplace(name, std::move(value));
  if (!inserted) throw Error("parameter " + name + " already exists");
  return it->second;
}

Tensor& Parameters::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LookupError("no parameter named " + name);
  return it->second;
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LookupError("no parameter named " + name);
  return it->second;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.data.size();
  return n;
}

Gradients zero_gradients(const Parameters& params) {
  Gradients g;
  for (const auto& [name, t] : params) g.emplace(name, Tensor(t.rows, t.cols, 0.0));
  return g;
}

void accumulate(Gradients& into, const Gradients& from) {
  for (const auto& [name, t] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, t);
      continue;
    }
    if (it->second.rows != t.rows || it->second.cols != t.cols) {
      throw Error("accumulate: shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < t.data.size(); ++i) it->second.data[i] += t.data[i];
  }
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& [name, t] : grads)
    for (double v : t.data) sq += v * v;
  return std::sqrt(sq);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (auto& [name, t] : grads)
      for (double& v : t.data) v *= k;
  }
  return norm;
}

void adam_step(Parameters& params, const Gradients& grads, AdamState& state) {
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (g.rows != p.rows || g.cols != p.cols) throw Error("adam_step: gradient shape mismatch for " + name);
    Tensor& m = state.m.try_emplace(name, p.rows, p.cols, 0.0).first->second;
    Tensor& v = state.v.try_emplace(name, p.rows, p.cols, 0.0).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g.data[i];
      v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g.data[i] * g.data[i];
      const double mh = m.data[i] / bc1;
      const double vh = v.data[i] / bc2;
      p.data[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
    }
  }
}

nlohmann::json to_json(const Parameters& params) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    tensors[name] = {{"shape", {t.rows, t.cols}}, {"values", t.data}};
  }
  return {{"format", kFormat}, {"version", kVersion}, {"tensors", std::move(tensors)}};
}

Parameters parameters_from_json(const nlohmann::json& j, const Parameters* expected) {
  if (!j.is_object() || j.value("format", "") != kFormat) throw Error("not a parameter checkpoint");
  if (j.value("version", 0) != kVersion) {
    throw Error("unsupported parameter checkpoint version " + j.value("version", nlohmann::json()).dump());
  }
  Parameters out;
  try {
    for (const auto& [name, entry] : j.at("tensors").items()) {
      const auto& shape = entry.at("shape");
      if (!shape.is_array() || shape.size() != 2) throw Error("parameter " + name + ": shape must have 2 entries");
      Tensor t(shape[0].get<std::size_t>(), shape[1].get<std::size_t>());
      const auto values = entry.at("values").get<std::vector<double>>();
      if (values.size() != t.data.size()) {
        throw Error("parameter " + name + ": " + std::to_string(values.size()) + " values for shape " +
                    shape_string(t));
      }
      t.data = values;
      out.add(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed parameter checkpoint: ") + e.what());
  }
  if (expected) {
    for (const auto& [name, t] : *expected) {
      if (!out.contains(name)) throw Error("checkpoint is missing parameter " + name);
      const Tensor& got = out.at(name);
      if (got.rows != t.rows || got.cols != t.cols) {
        throw Error("parameter " + name + " has shape " + shape_string(got) + ", expected " + shape_string(t));
      }
    }
    if (out.size() != expected->size()) throw Error("checkpoint has unexpected extra parameters");
  }
  return out;
}

}  // namespace disputelab::nd
