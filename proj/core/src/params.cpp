#include "lnet/params.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "lnet/errors.hpp"
#include "lnet/ops.hpp"

namespace lnet {

void ParamSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

Tensor& ParamSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

const Tensor& ParamSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : entries_) total += t.size();
  return total;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor(t.shape()));
  return out;
}

std::uint64_t ParamSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : entries_) {
    mix(name.data(), name.size());
    const Shape s = t.shape();
    mix(&s, sizeof s);
    mix(t.data(), t.size() * sizeof(double));
  }
  return h;
}

void ParamSet::merge(const ParamSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other.entries_) add(prefix + name, t);
}

ParamSet ParamSet::extract(std::string_view prefix) const {
  ParamSet out;
  for (const auto& [name, t] : entries_) {
    if (name.starts_with(prefix)) out.add(name.substr(prefix.size()), t);
  }
  return out;
}

BoundParams::BoundParams(const ParamSet& params, bool requires_grad) : params_(&params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    leaves_.emplace(params.name(i), variable(params.value(i), requires_grad));
  }
}

const Var& BoundParams::operator[](std::string_view name) const {
  auto it = leaves_.find(std::string(name));
  if (it == leaves_.end()) throw ConfigError("unbound parameter " + std::string(name));
  return it->second;
}

ParamSet BoundParams::gradients() const {
  ParamSet out;
  for (std::size_t i = 0; i < params_->size(); ++i) {
    const Var& leaf = leaves_.at(params_->name(i));
    out.add(params_->name(i), leaf->grad.empty() ? Tensor(leaf->value.shape()) : leaf->grad);
  }
  return out;
}

double normal_draw(Rng& rng) {
  auto u = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  const double u1 = u(), u2 = u();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Conv2d::register_params(ParamSet& params, Rng* rng) const {
  if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0) throw ConfigError("invalid conv layer " + name);
  Tensor w({kernel, kernel, in, out});
  if (rng) {
    const double scale = std::sqrt(2.0 / (kernel * kernel * in));
    for (double& v : w.values()) v = scale * normal_draw(*rng);
  }
  params.add(name + ".weight", std::move(w));
  if (bias) params.add(name + ".bias", Tensor({1, 1, 1, out}));
}

Var Conv2d::operator()(const BoundParams& p, const Var& x) const {
  return ops::conv2d(x, p[name + ".weight"], bias ? p[name + ".bias"] : Var{}, stride, kernel / 2);
}

void Linear::register_params(ParamSet& params, Rng* rng) const {
  if (in <= 0 || out <= 0) throw ConfigError("invalid linear layer " + name);
  Tensor w({1, 1, in, out});
  if (rng) {
    const double scale = std::sqrt(1.0 / in);
    for (double& v : w.values()) v = scale * normal_draw(*rng);
  }
  params.add(name + ".weight", std::move(w));
  params.add(name + ".bias", Tensor({1, 1, 1, out}));
}

Var Linear::operator()(const BoundParams& p, const Var& x) const {
  return ops::linear(x, p[name + ".weight"], p[name + ".bias"]);
}

Var BilinearUpsample::operator()(const Var& x) const { return ops::upsample_bilinear(x, factor); }

}  // namespace lnet
