#include "lnet/cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "lnet/checkpoint.hpp"
#include "lnet/cli/overlay.hpp"
#include "lnet/cli/run_config.hpp"
#include "lnet/errors.hpp"
#include "lnet/image_io.hpp"
#include "lnet/metrics.hpp"
#include "lnet/synth.hpp"
#include "lnet/training.hpp"

namespace lnet::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Usage-class failures exit with 2, everything else with 1.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DuplicateError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json per_lesion(const std::vector<double>& values) {
  json j = json::object();
  for (std::size_t i = 0; i < values.size(); ++i) j[std::string(lesion_name(static_cast<int>(i)))] = values[i];
  return j;
}

json counts_json(const std::vector<ConfusionCounts>& counts) {
  json j = json::object();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const ConfusionCounts& c = counts[i];
    j[std::string(lesion_name(static_cast<int>(i)))] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
  }
  return j;
}

Checkpoint load_checkpoint_or_usage(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("checkpoint not found: " + path.string());
  try {
    return load_checkpoint(path);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

std::vector<std::string> assign_splits(const std::vector<std::string>& image_ids, std::uint64_t seed) {
  const std::size_t n = image_ids.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const std::uint64_t ha = fnv1a(image_ids[a], seed), hb = fnv1a(image_ids[b], seed);
    return ha != hb ? ha < hb : image_ids[a] < image_ids[b];
  });
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
  std::vector<std::string> split(n);
  for (std::size_t r = 0; r < n; ++r) split[order[r]] = r < n_train ? "train" : r < n_train + n_val ? "val" : "test";
  return split;
}

std::vector<Sample> load_split(const std::vector<DatasetRecord>& records, const std::string& split) {
  std::vector<Sample> samples;
  for (const DatasetRecord& r : records) {
    if (r.split == split) samples.push_back(load_sample(r));
  }
  return samples;
}

int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.n < 0) throw UsageError("--n must be non-negative");
    SynthConfig config = opt.config ? parse_synth_config(*opt.config) : SynthConfig::defaults(128);
    if (opt.seed) config.seed = *opt.seed;
    config.validate();
    if (fs::exists(opt.out)) {
      if (!fs::is_directory(opt.out)) throw UsageError("output path is not a directory: " + opt.out.string());
      if (!fs::is_empty(opt.out)) {
        if (!opt.force) throw UsageError("output directory is not empty (use --force): " + opt.out.string());
        fs::remove_all(opt.out);
      }
    }
    const fs::path images = opt.out / "images";
    const fs::path masks = opt.out / "masks";
    fs::create_directories(images);
    fs::create_directories(masks);

    std::vector<DatasetRecord> records;
    std::vector<std::string> ids;
    for (int i = 0; i < opt.n; ++i) {
      const SynthSample s = synth_sample(config, i);
      const fs::path image_path = images / (s.image_id + ".png");
      io::write_png(image_path, io::to_raster(s.image.pixels(), 8));
      write_masks(s.masks, masks, s.image_id);
      DatasetRecord r;
      r.image_id = s.image_id;
      r.image_path = image_path;
      r.masks_dir = masks;
      r.grade = to_int(s.grade);
      r.ihe_blobs = s.ihe_blobs;
      records.push_back(std::move(r));
      ids.push_back(s.image_id);
    }
    const std::vector<std::string> split = assign_splits(ids, config.seed);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].split = split[i];
    write_manifest(opt.out / "manifest.jsonl", records);
    out << "wrote " << opt.n << " images to " << opt.out.string() << '\n';
    return kExitOk;
  });
}

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = parse_run_config(opt.config);
    const std::vector<DatasetRecord> records = parse_manifest(config.manifest);
    const std::vector<Sample> train = load_split(records, "train");
    const std::vector<Sample> val = load_split(records, "val");
    if (train.empty() || val.empty()) throw UsageError("manifest needs non-empty train and val splits");
    fs::create_directories(config.output_dir);
    const fs::path best_path = config.output_dir / "best.ckpt";
    const fs::path final_path = config.output_dir / "final.ckpt";
    const fs::path log_path = config.output_dir / "train_log.jsonl";

    TrainHooks hooks;
    hooks.on_event = [&](const LogEvent& e) {
      if (e.event == "validation") {
        out << "batch " << e.batch << " score " << e.value << " lr " << e.lr << '\n';
      } else if (e.event != "best_checkpoint") {
        out << e.event << " at batch " << e.batch << '\n';
      }
    };
    if (config.task == Task::segment) {
      hooks.on_best_segmentation = [&](const LesionNet& net) { save_checkpoint(best_path, to_checkpoint(net)); };
      const SegmentationResult r = train_segmentation(train, val, config.lesion_net, config.train, hooks);
      if (!fs::exists(best_path)) save_checkpoint(best_path, to_checkpoint(r.best));
      save_checkpoint(final_path, to_checkpoint(r.last));
      r.log.write(log_path);
    } else {
      if (!config.side_checkpoint) throw ConfigError("grade task needs 'side_checkpoint'");
      const LesionNet side = lesion_net_from_checkpoint(load_checkpoint_or_usage(*config.side_checkpoint));
      hooks.on_best_grading = [&](const MultiTaskNet& net) { save_checkpoint(best_path, to_checkpoint(net)); };
      const GradingResult r = train_grading(train, val, side, config.multitask, config.train, hooks);
      if (!fs::exists(best_path)) save_checkpoint(best_path, to_checkpoint(r.best));
      save_checkpoint(final_path, to_checkpoint(r.last));
      r.log.write(log_path);
    }
    out << "checkpoints written to " << config.output_dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.split != "train" && opt.split != "val" && opt.split != "test") {
      throw UsageError("--split must be train, val or test");
    }
    const RunConfig config = parse_run_config(opt.config);
    const std::vector<Sample> samples = load_split(parse_manifest(config.manifest), opt.split);
    if (samples.empty()) throw UsageError("split '" + opt.split + "' is empty");

    std::optional<LesionNet> seg;
    std::optional<MultiTaskNet> grader;
    if (!opt.oracle) {
      if (!opt.checkpoint) throw UsageError("--checkpoint is required unless --oracle is given");
      const Checkpoint ckpt = load_checkpoint_or_usage(*opt.checkpoint);
      if (config.task == Task::grade) {
        if (ckpt.kind != "multitask") throw UsageError("grade task needs a multitask checkpoint");
        grader = multitask_from_checkpoint(ckpt);
        if (!(grader->config() == config.multitask)) throw UsageError("checkpoint does not match the run config");
        seg = grader->side();
      } else {
        seg = lesion_net_from_checkpoint(ckpt);
        if (!(seg->config() == config.lesion_net)) throw UsageError("checkpoint does not match the run config");
      }
    }

    std::vector<ConfusionCounts> pixel, image;
    std::vector<int> truth_grades, pred_grades;
    for (const Sample& s : samples) {
      const Tensor truth = s.masks.to_tensor();
      Tensor probs = truth;
      if (seg) probs = seg->predict(s.image.pixels());
      accumulate_counts(threshold(probs), truth, pixel);
      accumulate_counts(threshold(presence_from_maps(probs)), presence_from_maps(truth), image);
      truth_grades.push_back(to_int(s.grade));
      if (grader) {
        const Tensor p = grader->grade_probabilities(s.image.pixels());
        pred_grades.push_back(to_int(predict_grade(p.values())));
      } else {
        pred_grades.push_back(to_int(s.grade));
      }
    }
    const LesionF1Report px = finalize_f1(pixel);
    const LesionF1Report im = finalize_f1(image);
    json report{{"split", opt.split},
                {"images", samples.size()},
                {"oracle", opt.oracle},
                {"pixel_f1", per_lesion(px.f1)},
                {"image_f1", per_lesion(im.f1)},
                {"pixel_f1_mean", px.mean},
                {"image_f1_mean", im.mean},
                {"pixel_counts", counts_json(px.counts)},
                {"image_counts", counts_json(im.counts)}};
    out << "pixel F1 mean " << px.mean << "\nimage F1 mean " << im.mean << '\n';
    if (config.task == Task::grade || opt.oracle) {
      const double kappa = quadratic_weighted_kappa(truth_grades, pred_grades);
      report["kappa"] = kappa;
      out << "kappa " << kappa << '\n';
    }
    fs::path report_path;
    if (opt.report) {
      report_path = *opt.report;
    } else {
      fs::create_directories(config.output_dir);
      report_path = config.output_dir / ("metrics_" + opt.split + ".json");
    }
    write_json(report_path, report);
    out << "report written to " << report_path.string() << '\n';
    return kExitOk;
  });
}

int cmd_predict(const PredictOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ckpt = load_checkpoint_or_usage(opt.checkpoint);
    Tensor pixels;
    try {
      pixels = io::to_tensor(io::read_png(opt.image));
    } catch (const IoError& e) {
      throw UsageError(std::string("unreadable image: ") + e.what());
    }
    if (pixels.c() == 1) {
      Tensor rgb(Shape{1, pixels.h(), pixels.w(), 3});
      for (int y = 0; y < pixels.h(); ++y) {
        for (int x = 0; x < pixels.w(); ++x) {
          for (int k = 0; k < 3; ++k) rgb(0, y, x, k) = pixels(0, y, x, 0);
        }
      }
      pixels = std::move(rgb);
    }
    const int h = pixels.h(), w = pixels.w();
    int side = h;
    if (h != w || h % 32 != 0) {
      if (!opt.pad) throw UsageError("image must be square with a side divisible by 32 (use --pad)");
      side = (std::max(h, w) + 31) / 32 * 32;
    }
    // Zero padding at the bottom and right; the pad region is cropped away again.
    Tensor input(Shape{1, side, side, 3});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int k = 0; k < 3; ++k) input(0, y, x, k) = pixels(0, y, x, k);
      }
    }

    std::optional<MultiTaskNet> grader;
    LesionNet seg;
    if (ckpt.kind == "multitask") {
      grader = multitask_from_checkpoint(ckpt);
      seg = grader->side();
    } else {
      seg = lesion_net_from_checkpoint(ckpt);
    }
    const Tensor full = seg.predict(input);
    const int m = full.c();
    // Maps are stored at 16 bits; the report is computed from the stored values
    // so that it reproduces exactly from the files.
    Tensor maps(Shape{1, h, w, m});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int j = 0; j < m; ++j) maps(0, y, x, j) = std::round(full(0, y, x, j) * 65535.0) / 65535.0;
      }
    }
    const Tensor masks = threshold(maps);

    fs::create_directories(opt.out);
    for (int j = 0; j < m; ++j) {
      io::Raster prob{h, w, 1, 16, {}}, mask{h, w, 1, 8, {}};
      prob.samples.resize(static_cast<std::size_t>(h) * w);
      mask.samples.resize(prob.samples.size());
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t at = static_cast<std::size_t>(y) * w + x;
          prob.samples[at] = static_cast<std::uint16_t>(std::lround(maps(0, y, x, j) * 65535.0));
          mask.samples[at] = masks(0, y, x, j) > 0.5 ? 255 : 0;
        }
      }
      const std::string name(lesion_name(j));
      io::write_png(opt.out / ("prob_" + name + ".png"), prob);
      io::write_png(opt.out / ("mask_" + name + ".png"), mask);
    }
    io::write_png(opt.out / "overlay.png", render_overlay(pixels, masks));

    const Tensor presence = presence_from_maps(maps);
    std::vector<double> pj(presence.values().begin(), presence.values().end());
    std::vector<double> positive;
    for (double p : pj) positive.push_back(p >= 0.5 ? 1.0 : 0.0);
    json report{{"image", opt.image.generic_string()},
                {"height", h},
                {"width", w},
                {"padded_side", side},
                {"threshold", 0.5},
                {"presence", per_lesion(pj)},
                {"present", per_lesion(positive)}};
    if (grader) {
      const Tensor probs = grader->grade_probabilities(input);
      report["grade_probabilities"] = std::vector<double>(probs.values().begin(), probs.values().end());
      report["grade"] = to_int(predict_grade(probs.values()));
      out << "grade DR" << report["grade"].get<int>() << '\n';
    }
    write_json(opt.out / "report.json", report);
    for (int j = 0; j < m; ++j) out << lesion_name(j) << ' ' << pj[j] << '\n';
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lesion-Net retinal lesion segmentation and DR grading"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::string synth_config;
  std::uint64_t synth_seed = 0;
  auto* s = app.add_subcommand("synth", "Generate a synthetic fundus dataset");
  s->add_option("--config", synth_config, "Synthetic generator config (JSON)");
  s->add_option("--n", synth.n, "Number of images")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  auto* seed_opt = s->add_option("--seed", synth_seed, "Override the generator seed");
  s->add_flag("--force", synth.force, "Replace a non-empty output directory");

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a segmentation or grading network");
  t->add_option("--config", train.config, "Run config (JSON)")->required();

  EvalOptions eval;
  std::string eval_ckpt, eval_report;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  e->add_option("--config", eval.config, "Run config (JSON)")->required();
  e->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate");
  e->add_option("--split", eval.split, "train, val or test");
  e->add_flag("--oracle", eval.oracle, "Score the ground truth against itself");
  e->add_option("--report", eval_report, "Report path (default: <output_dir>/metrics_<split>.json)");

  PredictOptions predict;
  auto* p = app.add_subcommand("predict", "Predict lesion maps and grade for one image");
  p->add_option("--checkpoint", predict.checkpoint, "Checkpoint")->required();
  p->add_option("--image", predict.image, "Input PNG")->required();
  p->add_option("--out", predict.out, "Output directory")->required();
  p->add_flag("--pad", predict.pad, "Pad to a square multiple of 32");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }

  if (*s) {
    if (!synth_config.empty()) synth.config = synth_config;
    if (*seed_opt) synth.seed = synth_seed;
    return cmd_synth(synth, out, err);
  }
  if (*t) return cmd_train(train, out, err);
  if (*e) {
    if (!eval_ckpt.empty()) eval.checkpoint = eval_ckpt;
    if (!eval_report.empty()) eval.report = eval_report;
    return cmd_eval(eval, out, err);
  }
  return cmd_predict(predict, out, err);
}

}  // namespace lnet::cli
