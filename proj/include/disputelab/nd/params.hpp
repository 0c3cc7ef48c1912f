#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "disputelab/nd/graph.hpp"

namespace disputelab::nd {

// Named parameter tree. Names use dots for nesting ("word.fwd.w").
// std::map keeps iteration order stable, which the optimizer and the
// checkpoint writer rely on.
class Parameters {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::map<std::string, Tensor> tensors_;
};

using Gradients = std::map<std::string, Tensor>;

// Zero-filled gradients shaped like `params`.
Gradients zero_gradients(const Parameters& params);
void accumulate(Gradients& into, const Gradients& from);
double global_norm(const Gradients& grads);
// Rescales so the global L2 norm is at most max_norm. Returns the norm
// before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One bias-corrected Adam update. Parameters without a gradient entry are
// left alone.
void adam_step(Parameters& params, const Gradients& grads, AdamState& state);

// Checkpoint form: {"format","version","tensors":{name:{"shape":[r,c],"values":[...]}}}.
nlohmann::json to_json(const Parameters& params);
// When `expected` is given, the names and shapes must match it exactly.
Parameters parameters_from_json(const nlohmann::json& j, const Parameters* expected = nullptr);

}  // namespace disputelab::nd
