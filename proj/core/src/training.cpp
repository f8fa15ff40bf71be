#include "lnet/training.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>

#include "lnet/errors.hpp"
#include "lnet/losses.hpp"

namespace lnet {

std::string_view to_string(SegLossKind kind) {
  switch (kind) {
    case SegLossKind::dice: return "dice";
    case SegLossKind::dual: return "dual";
    case SegLossKind::wce: return "wce";
    case SegLossKind::focal: return "focal";
  }
  return "unknown";
}

SegLossKind seg_loss_from_string(std::string_view name) {
  for (SegLossKind k : {SegLossKind::dice, SegLossKind::dual, SegLossKind::wce, SegLossKind::focal}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (validate_every <= 0) throw ConfigError("validate_every must be positive");
  if (lr_patience <= 0 || stop_patience <= 0) throw ConfigError("patience values must be positive");
  if (!(lr_factor > 1.0)) throw ConfigError("lr_factor must exceed 1");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  if (max_batches < 0) throw ConfigError("max_batches must be non-negative");
  augment.validate();
}

ScheduleState ScheduleState::initial(const TrainConfig& config) {
  ScheduleState s;
  s.lr = config.lr0;
  return s;
}

ScheduleState schedule_update(ScheduleState state, double val_score, const TrainConfig& config) {
  if (state.stopped) return state;
  if (!std::isfinite(val_score)) throw InvalidInput("validation score must be finite");
  if (val_score > state.best_score) {
    state.best_score = val_score;
    state.non_improve_count = 0;
    state.since_reduction = 0;
    return state;
  }
  ++state.non_improve_count;
  ++state.since_reduction;
  if (state.non_improve_count >= config.stop_patience) {
    state.stopped = true;
    return state;
  }
  if (state.since_reduction >= config.lr_patience) {
    state.lr /= config.lr_factor;
    ++state.lr_reductions;
    state.since_reduction = 0;
    state.using_dual = true;
  }
  return state;
}

void sgd_step(ParamSet& params, const ParamSet& grads, SgdState& state, double lr, double momentum,
              double weight_decay) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient set does not match parameters");
  if (state.velocity.size() == 0) state.velocity = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads.at(params.name(i));
    Tensor& v = state.velocity.value(i);
    require_same_shape(p, g, "sgd_step");
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!std::isfinite(g[k])) {
        throw TrainingAborted("non-finite gradient in " + params.name(i) + " at element " + std::to_string(k));
      }
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] + g[k] + weight_decay * p[k];
      p[k] -= lr * v[k];
    }
  }
}

std::size_t TrainLog::count(std::string_view event) const {
  return static_cast<std::size_t>(
      std::count_if(events_.begin(), events_.end(), [&](const LogEvent& e) { return e.event == event; }));
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const LogEvent& e : events_) {
    nlohmann::ordered_json j{{"event", e.event},   {"batch", e.batch},           {"value", e.value},
                     {"lr", e.lr},         {"using_dual", e.using_dual}, {"train_loss", e.train_loss}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void TrainLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write log " + path.string());
  out << to_jsonl();
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>((rng() >> 11) * 0x1.0p-53 * static_cast<double>(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

struct Batch {
  Tensor images;
  Tensor masks;
  std::vector<int> grades;
  std::vector<std::size_t> indices;
};

Batch assemble(std::span<const Sample> samples, std::span<const std::size_t> indices, const TrainConfig& config,
               long epoch) {
  std::vector<Tensor> images, masks;
  Batch b;
  for (std::size_t idx : indices) {
    const Sample& s = samples[idx];
    if (config.augment.enabled) {
      Rng rng(mix(mix(config.seed, static_cast<std::uint64_t>(epoch)), idx));
      auto [img, m] = augment(s.image, s.masks, rng, config.augment);
      images.push_back(img.pixels());
      masks.push_back(m.to_tensor());
    } else {
      images.push_back(s.image.pixels());
      masks.push_back(s.masks.to_tensor());
    }
    b.grades.push_back(to_int(s.grade));
    b.indices.push_back(idx);
  }
  b.images = Tensor::stack(images);
  b.masks = Tensor::stack(masks);
  return b;
}

void require_split(std::span<const Sample> split, const char* name) {
  if (split.empty()) throw InvalidInput(std::string("empty ") + name + " split");
}

void check_finite(double loss, long batch) {
  if (!std::isfinite(loss)) throw TrainingAborted("non-finite loss at batch " + std::to_string(batch));
}

// Shared epoch/validation/schedule driver. `step` runs one optimizer update
// and returns the batch loss; `validate` scores the current parameters;
// `on_best` snapshots them.
template <typename Step, typename Validate, typename OnBest>
long run_schedule(std::span<const Sample> train, const TrainConfig& config, const TrainHooks& hooks, TrainLog& log,
                  double& best_score, Step step, Validate validate, OnBest on_best) {
  ScheduleState state = ScheduleState::initial(config);
  Rng order_rng(mix(config.seed, 0x5eedULL));
  long batch = 0;
  long epoch = 0;
  double loss_sum = 0.0;
  long loss_count = 0;
  auto emit = [&](LogEvent e) {
    if (hooks.on_event) hooks.on_event(e);
    log.add(std::move(e));
  };
  const auto at_cap = [&] { return config.max_batches > 0 && batch >= config.max_batches; };

  while (!state.stopped && !at_cap()) {
    const std::vector<std::size_t> order = permutation(train.size(), order_rng);
    for (std::size_t start = 0; start < order.size() && !state.stopped && !at_cap(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Batch b = assemble(train, std::span(order).subspan(start, end - start), config, epoch);
      const double loss = step(b, state);
      check_finite(loss, batch);
      loss_sum += loss;
      ++loss_count;
      ++batch;
      if (batch % config.validate_every != 0) continue;

      const double score = validate();
      const ScheduleState before = state;
      state = schedule_update(state, score, config);
      emit({"validation", batch, score, state.lr, state.using_dual, loss_sum / static_cast<double>(loss_count)});
      loss_sum = 0.0;
      loss_count = 0;
      if (score > before.best_score) {
        best_score = score;
        on_best();
        emit({"best_checkpoint", batch, score, state.lr, state.using_dual, 0.0});
      }
      if (state.lr_reductions > before.lr_reductions) {
        emit({"lr_reduced", batch, state.lr, state.lr, state.using_dual, 0.0});
      }
      if (state.using_dual && !before.using_dual) emit({"loss_switch", batch, 0.0, state.lr, true, 0.0});
      if (state.stopped) emit({"early_stop", batch, state.best_score, state.lr, state.using_dual, 0.0});
    }
    ++epoch;
  }
  emit({"done", batch, best_score, state.lr, state.using_dual, 0.0});
  return batch;
}

}  // namespace

SegmentationEvaluation evaluate_segmentation(const LesionNet& net, std::span<const Sample> samples, int batch_size) {
  std::vector<ConfusionCounts> pixel, image;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Tensor> images, masks;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(samples[i].image.pixels());
      masks.push_back(samples[i].masks.to_tensor());
    }
    const Tensor probs = net.predict(Tensor::stack(images));
    const Tensor truth = Tensor::stack(masks);
    accumulate_counts(threshold(probs), truth, pixel);
    accumulate_counts(threshold(presence_from_maps(probs)), presence_from_maps(truth), image);
  }
  if (pixel.empty()) {
    pixel.resize(static_cast<std::size_t>(net.config().m));
    image.resize(static_cast<std::size_t>(net.config().m));
  }
  return {finalize_f1(std::move(pixel)), finalize_f1(std::move(image))};
}

GradingEvaluation evaluate_grading(const MultiTaskNet& net, std::span<const Sample> samples, int batch_size) {
  GradingEvaluation ev;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Tensor> images;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(samples[i].image.pixels());
      ev.truth.push_back(to_int(samples[i].grade));
    }
    const Tensor probs = net.grade_probabilities(Tensor::stack(images));
    for (int b = 0; b < probs.n(); ++b) {
      ev.predicted.push_back(to_int(predict_grade(std::span(probs.data() + b * kNumGrades, kNumGrades))));
    }
  }
  if (!ev.truth.empty()) ev.kappa = quadratic_weighted_kappa(ev.truth, ev.predicted);
  return ev;
}

SegmentationResult train_segmentation(std::span<const Sample> train, std::span<const Sample> val,
                                      const LesionNetConfig& net_config, const TrainConfig& config,
                                      const TrainHooks& hooks) {
  config.validate();
  require_split(train, "train");
  require_split(val, "val");
  SegmentationResult result;
  LesionNet net = build_lesion_net(net_config, mix(config.seed, 0x1e51011ULL));
  result.best = net;
  SgdState sgd;
  const DualLossConfig dual{config.lambda, kDiceSmoothing};
  std::vector<double> wce_weights;
  if (config.loss == SegLossKind::wce) {
    std::vector<LesionMaskStack> masks;
    for (const Sample& s : train) masks.push_back(s.masks);
    wce_weights = inverse_frequency_weights(masks);
  }

  auto step = [&](const Batch& b, const ScheduleState& state) {
    const BoundParams bound(net.params(), true);
    const Var p = net.forward(bound, constant(b.images));
    Var loss;
    const bool use_dual =
        config.loss == SegLossKind::dual || (config.loss == SegLossKind::dice && config.switch_to_dual && state.using_dual);
    if (use_dual) {
      loss = dual_loss(p, b.masks, dual);
    } else if (config.loss == SegLossKind::wce) {
      loss = weighted_cross_entropy(p, b.masks, wce_weights);
    } else if (config.loss == SegLossKind::focal) {
      loss = focal_loss(p, b.masks, config.focal_alpha, config.focal_gamma);
    } else {
      loss = dice_seg_loss(p, b.masks);
    }
    const double value = loss->value[0];
    if (std::isfinite(value)) {
      backward(loss);
      sgd_step(net.params(), bound.gradients(), sgd, state.lr, config.momentum, config.weight_decay);
    }
    return value;
  };
  auto validate = [&] { return evaluate_segmentation(net, val, config.batch_size).pixel.mean; };
  auto on_best = [&] {
    result.best = net;
    if (hooks.on_best_segmentation) hooks.on_best_segmentation(net);
  };
  result.batches = run_schedule(train, config, hooks, result.log, result.best_score, step, validate, on_best);
  result.last = std::move(net);
  return result;
}

GradingResult train_grading(std::span<const Sample> train, std::span<const Sample> val, const LesionNet& side,
                            const MultiTaskConfig& net_config, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  require_split(train, "train");
  require_split(val, "val");
  GradingResult result;
  MultiTaskNet net = build_multitask_net(net_config, side, mix(config.seed, 0x96ad1ULL));
  if (config.warm_start_main) {
    if (!(side.config().backbone == net_config.backbone)) {
      throw ConfigError("warm_start_main needs the side and main backbones to match");
    }
    const ParamSet trained = side.params().extract("backbone.");
    for (std::size_t i = 0; i < trained.size(); ++i) net.params().at("main." + trained.name(i)) = trained.value(i);
  }
  result.best = net;
  SgdState sgd;
  const bool needs_maps = net_config.mode != GradingMode::plain;
  // Frozen side-branch maps are reusable across epochs when images are not augmented.
  std::vector<std::optional<Tensor>> cache(config.augment.enabled ? 0 : train.size());

  auto step = [&](const Batch& b, const ScheduleState& state) {
    Tensor maps;
    if (needs_maps) {
      if (cache.empty()) {
        maps = net.side_maps(b.images);
      } else {
        std::vector<Tensor> parts;
        for (std::size_t k = 0; k < b.indices.size(); ++k) {
          std::optional<Tensor>& slot = cache[b.indices[k]];
          if (!slot) slot = net.side_maps(train[b.indices[k]].image.pixels());
          parts.push_back(*slot);
        }
        maps = Tensor::stack(parts);
      }
    }
    const BoundParams bound(net.params(), true);
    const Var loss = cross_entropy_grading(net.grade(bound, constant(b.images), maps), b.grades);
    const double value = loss->value[0];
    if (std::isfinite(value)) {
      backward(loss);
      sgd_step(net.params(), bound.gradients(), sgd, state.lr, config.momentum, config.weight_decay);
    }
    return value;
  };
  auto validate = [&] { return evaluate_grading(net, val, config.batch_size).kappa; };
  auto on_best = [&] {
    result.best = net;
    if (hooks.on_best_grading) hooks.on_best_grading(net);
  };
  result.batches = run_schedule(train, config, hooks, result.log, result.best_score, step, validate, on_best);
  result.last = std::move(net);
  return result;
}

}  // namespace lnet
