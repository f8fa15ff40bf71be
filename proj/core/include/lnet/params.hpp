#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lnet/autograd.hpp"
#include "lnet/tensor.hpp"

namespace lnet {

/// Ordered collection of named parameter arrays. Names are hierarchical
/// ("stage1.conv_a.weight") and insertion order is stable.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor& value(std::size_t i) { return entries_[i].second; }
  const Tensor& value(std::size_t i) const { return entries_[i].second; }

  /// Total number of trainable scalars.
  std::size_t scalar_count() const;
  /// Zero-filled set with identical names and shapes.
  ParamSet zeros_like() const;
  /// FNV-1a over names, shapes and raw values.
  std::uint64_t checksum() const;
  /// Copies entries from `other` under `prefix` + name.
  void merge(const ParamSet& other, const std::string& prefix = "");
  /// Entries whose names start with `prefix`, with the prefix removed.
  ParamSet extract(std::string_view prefix) const;

  bool operator==(const ParamSet& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// ParamSet exposed as graph leaves for one forward pass.
class BoundParams {
 public:
  BoundParams(const ParamSet& params, bool requires_grad);
  const Var& operator[](std::string_view name) const;
  /// Gradients accumulated into the leaves after backward(); zeros where untouched.
  ParamSet gradients() const;

 private:
  const ParamSet* params_;
  std::unordered_map<std::string, Var> leaves_;
};

template <typename Model>
std::size_t param_count(const Model& model) {
  return model.params().scalar_count();
}
inline std::size_t param_count(const ParamSet& params) { return params.scalar_count(); }

using Rng = std::mt19937_64;

/// Square convolution layer descriptor; parameters live in a ParamSet.
struct Conv2d {
  std::string name;
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  bool bias = true;

  /// He-normal weights, zero bias. A null rng leaves everything zero.
  void register_params(ParamSet& params, Rng* rng) const;
  Var operator()(const BoundParams& p, const Var& x) const;
};

/// Fully connected layer on (n,1,1,in) inputs.
struct Linear {
  std::string name;
  int in = 0;
  int out = 0;

  void register_params(ParamSet& params, Rng* rng) const;
  Var operator()(const BoundParams& p, const Var& x) const;
};

/// Parameter-free bilinear enlargement.
struct BilinearUpsample {
  int factor = 2;
  void register_params(ParamSet&, Rng*) const {}
  Var operator()(const Var& x) const;
};

/// Draws a standard normal value portably (Box-Muller over 53-bit uniforms).
double normal_draw(Rng& rng);

}  // namespace lnet
