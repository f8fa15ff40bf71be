#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lnet/augment.hpp"
#include "lnet/ingestion.hpp"
#include "lnet/lesion_net.hpp"
#include "lnet/metrics.hpp"
#include "lnet/multitask.hpp"

namespace lnet {

enum class SegLossKind { dice, dual, wce, focal };

std::string_view to_string(SegLossKind kind);
SegLossKind seg_loss_from_string(std::string_view name);

struct TrainConfig {
  double lr0 = 0.001;
  double momentum = 0.95;
  double weight_decay = 0.0001;
  int validate_every = 1000;  // batches
  int lr_patience = 4;
  int stop_patience = 10;
  double lr_factor = 10.0;
  int batch_size = 8;
  double lambda = 0.8;
  std::uint64_t seed = 0;
  /// Hard cap on optimizer steps; 0 runs until early stopping.
  long max_batches = 0;
  /// Segmentation loss. With `dice` and `switch_to_dual`, the dual loss takes
  /// over at the first learning-rate reduction.
  SegLossKind loss = SegLossKind::dice;
  bool switch_to_dual = true;
  /// Grading only: start the main branch from the side branch's trained
  /// backbone instead of a random draw. Needs identical backbone configs.
  bool warm_start_main = false;
  double focal_alpha = 0.8;
  double focal_gamma = 2.0;
  AugmentConfig augment{};

  void validate() const;
};

struct ScheduleState {
  double best_score = -std::numeric_limits<double>::infinity();
  int non_improve_count = 0;
  int since_reduction = 0;
  int lr_reductions = 0;
  double lr = 0.0;
  bool using_dual = false;
  bool stopped = false;

  static ScheduleState initial(const TrainConfig& config);
};

/// Strict improvement resets both counters. Otherwise the lr is divided by
/// lr_factor after every lr_patience non-improvements since the last
/// reduction (the first reduction also switches to the dual loss), and the
/// run stops after stop_patience consecutive non-improvements.
ScheduleState schedule_update(ScheduleState state, double val_score, const TrainConfig& config);

struct SgdState {
  ParamSet velocity;
};

/// velocity = momentum * velocity + grad + weight_decay * param; param -= lr * velocity.
/// Throws TrainingAborted naming the parameter on a non-finite gradient.
void sgd_step(ParamSet& params, const ParamSet& grads, SgdState& state, double lr, double momentum,
              double weight_decay);

struct LogEvent {
  std::string event;  // validation | lr_reduced | loss_switch | best_checkpoint | early_stop | done
  long batch = 0;
  double value = 0.0;  // score for validation/best, lr for lr_reduced
  double lr = 0.0;
  bool using_dual = false;
  double train_loss = 0.0;
};

class TrainLog {
 public:
  void add(LogEvent e) { events_.push_back(std::move(e)); }
  const std::vector<LogEvent>& events() const { return events_; }
  std::size_t count(std::string_view event) const;
  std::string to_jsonl() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<LogEvent> events_;
};

struct TrainHooks {
  std::function<void(const LogEvent&)> on_event;
  std::function<void(const LesionNet&)> on_best_segmentation;
  std::function<void(const MultiTaskNet&)> on_best_grading;
};

struct SegmentationResult {
  LesionNet best;
  LesionNet last;
  TrainLog log;
  double best_score = 0.0;
  long batches = 0;
};

struct GradingResult {
  MultiTaskNet best;
  MultiTaskNet last;
  TrainLog log;
  double best_score = 0.0;
  long batches = 0;
};

/// Validation score is the mean per-lesion pixel F1 at threshold 0.5.
/// Throws InvalidInput on an empty split.
SegmentationResult train_segmentation(std::span<const Sample> train, std::span<const Sample> val,
                                      const LesionNetConfig& net_config, const TrainConfig& config,
                                      const TrainHooks& hooks = {});

/// Trains the grading branch with cross-entropy; `side` stays frozen.
/// Validation score is quadratic weighted kappa.
GradingResult train_grading(std::span<const Sample> train, std::span<const Sample> val, const LesionNet& side,
                            const MultiTaskConfig& net_config, const TrainConfig& config,
                            const TrainHooks& hooks = {});

struct SegmentationEvaluation {
  LesionF1Report pixel;
  LesionF1Report image;
};

SegmentationEvaluation evaluate_segmentation(const LesionNet& net, std::span<const Sample> samples,
                                             int batch_size = 8);

struct GradingEvaluation {
  double kappa = 0.0;
  std::vector<int> truth;
  std::vector<int> predicted;
};

GradingEvaluation evaluate_grading(const MultiTaskNet& net, std::span<const Sample> samples, int batch_size = 8);

}  // namespace lnet
