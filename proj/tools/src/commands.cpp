#include "sscale_cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "sscale/analysis.hpp"
#include "sscale/errors.hpp"
#include "sscale/model.hpp"
#include "sscale/rng.hpp"
#include "sscale/selftest.hpp"
#include "sscale/trainer.hpp"

namespace sscale::cli {
namespace {

constexpr const char* kMeanEntry = "data.mean";
constexpr const char* kStdEntry = "data.std";

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnsupportedArchitecture& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("checkpoint file '" + path.string() + "' does not exist");
  }
  return load_checkpoint(path);
}

template <typename S>
Model<S> model_from_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ckpt) {
  Model<S> model = Model<S>::build(cfg.model, cfg.train.seed);
  model.load_checkpoint(ckpt);
  return model;
}

// Evaluation data for the checkpoint commands: the held-out set, or the training set without one.
Dataset evaluation_set(const ExperimentConfig& cfg, const Checkpoint& ckpt) {
  auto [train, test] = load_datasets(cfg, stored_normalization(ckpt));
  return test.empty() ? std::move(train) : std::move(test);
}

template <typename S>
int train_impl(const ExperimentConfig& cfg, const KeyValues& raw, const CommonOptions& options,
               std::ostream& out) {
  auto [train_set, test_set] = load_datasets(cfg);
  prepare_out_dir(options.out);
  {
    auto conf = open_output(options.out / "config.txt");
    write_config(conf, raw);
  }
  Model<S> model = Model<S>::build(cfg.model, cfg.train.seed);
  out << "training " << to_string(cfg.model.kind) << '-' << cfg.model.depth << " on "
      << train_set.size() << " images, " << cfg.train.epochs << " epochs, reg "
      << to_string(cfg.reg.method) << '\n';
  auto result = train(model, train_set, test_set, cfg.train, cfg.reg, [&](const MetricsRow& r) {
    out << "epoch " << r.epoch << ' ' << r.split << " loss " << fmt(r.loss) << " error "
        << fmt(r.error) << " lr " << fmt(r.lr) << '\n';
  });
  store_normalization(result.checkpoint, train_set.normalization);
  {
    auto csv = open_output(options.out / "metrics.csv");
    write_metrics_csv(csv, result.metrics);
  }
  save_checkpoint(options.out / "checkpoint.ssck", result.checkpoint);
  out << "wrote " << (options.out / "metrics.csv").string() << " and "
      << (options.out / "checkpoint.ssck").string() << '\n';
  return kExitOk;
}

template <typename S>
int eval_impl(const ExperimentConfig& cfg, const Checkpoint& ckpt, std::ostream& out) {
  Model<S> model = model_from_checkpoint<S>(cfg, ckpt);
  const Dataset data = evaluation_set(cfg, ckpt);
  const EvalResult r = evaluate(model, data, cfg.train.batch_size);
  char buf[96];
  std::snprintf(buf, sizeof buf, "error %.9g loss %.9g count %zu", r.error, r.loss, r.count);
  out << buf << '\n';
  return kExitOk;
}

template <typename S>
int ablate_impl(const ExperimentConfig& cfg, const Checkpoint& ckpt, const AblateOptions& a,
                const CommonOptions& options, std::ostream& out) {
  Model<S> model = model_from_checkpoint<S>(cfg, ckpt);
  const Dataset data = evaluation_set(cfg, ckpt);
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) seeds.push_back(cfg.train.seed);

  std::vector<AblationCurve> curves, means;
  for (const auto& name : a.methods) {
    std::vector<AblationCurve> per_seed;
    for (std::uint64_t seed : seeds) {
      AblationOptions o;
      o.method = parse_method(name);
      o.rates = a.rates;
      o.seed = seed;
      o.rescale = a.rescale;
      o.top_rate = a.top_rate;
      o.score_mode = cfg.reg.score_mode;
      o.placement = cfg.reg.placement;
      o.batch_size = cfg.train.batch_size;
      per_seed.push_back(ablate(model, data, o));
      for (const auto& p : per_seed.back().points) {
        out << name << " seed " << seed << " rate " << fmt(p.rate) << " error " << fmt(p.error)
            << '\n';
      }
    }
    curves.insert(curves.end(), per_seed.begin(), per_seed.end());
    means.push_back(average_curves(per_seed));
  }
  prepare_out_dir(options.out);
  {
    auto csv = open_output(options.out / "ablation.csv");
    write_ablation_csv(csv, curves);
  }
  if (seeds.size() > 1) {
    auto csv = open_output(options.out / "ablation_mean.csv");
    write_ablation_csv(csv, means);
  }
  out << "wrote " << (options.out / "ablation.csv").string() << '\n';
  return kExitOk;
}

template <typename S>
int cam_impl(const ExperimentConfig& cfg, const Checkpoint& ckpt, const CamOptions& c,
             const CommonOptions& options, std::ostream& out) {
  Model<S> model = model_from_checkpoint<S>(cfg, ckpt);
  const Dataset data = evaluation_set(cfg, ckpt);
  if (c.index >= data.size()) {
    throw ConfigError("--index " + std::to_string(c.index) + " is out of range for " +
                      std::to_string(data.size()) + " images");
  }
  const LabeledImage& image = data.images[c.index];
  const std::size_t cls = c.class_index.value_or(static_cast<std::size_t>(image.label));
  const HeatMap map = cam(model, image.pixels, cls);
  prepare_out_dir(options.out);
  {
    auto pgm = open_output(options.out / "cam.pgm");
    write_pgm(pgm, map);
  }
  {
    auto csv = open_output(options.out / "cam.csv");
    write_heatmap_csv(csv, map);
  }
  out << "cam of image " << c.index << " (label " << image.label << ") for class " << cls
      << " from " << map.layer << ": " << (options.out / "cam.pgm").string() << '\n';
  return kExitOk;
}

}  // namespace

ExperimentConfig load_config(const CommonOptions& options, KeyValues* raw) {
  KeyValues kv;
  if (options.config) {
    if (!std::filesystem::exists(*options.config)) {
      throw ConfigError("config file '" + options.config->string() + "' does not exist");
    }
    kv = KeyValues::load(*options.config);
  }
  for (const auto& o : options.overrides) kv.set(o);
  if (options.seed) kv.set("train.seed", std::to_string(*options.seed));
  ExperimentConfig cfg = resolve(kv);
  if (raw) *raw = kv;
  return cfg;
}

std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& config,
                                          const std::optional<Normalization>& norm) {
  const DataConfig& d = config.data;
  const std::optional<Normalization> fixed = norm ? norm : d.normalization;
  std::pair<Dataset, Dataset> sets;
  if (d.kind == DataKind::Synthetic) {
    sets.first = synthesize_dataset(config.model.num_classes, d.train_size, d.seed,
                                    config.model.height, fixed);
    if (d.test_size > 0) {
      sets.second = synthesize_dataset(config.model.num_classes, d.test_size,
                                       derive_key({d.seed, 0x74657374}), config.model.height,
                                       sets.first.normalization);
    }
  } else {
    sets.first = load_cifar_binary(d.path, d.limit, fixed, config.model.num_classes);
    if (!d.test_path.empty()) {
      sets.second = load_cifar_binary(d.test_path, d.test_limit, sets.first.normalization,
                                      config.model.num_classes);
    }
  }
  return sets;
}

std::optional<Normalization> stored_normalization(const Checkpoint& ckpt) {
  const CheckpointEntry* mean = ckpt.find(kMeanEntry);
  const CheckpointEntry* stddev = ckpt.find(kStdEntry);
  if (!mean || !stddev) return std::nullopt;
  Normalization n;
  n.mean.assign(mean->values.data().begin(), mean->values.data().end());
  n.stddev.assign(stddev->values.data().begin(), stddev->values.data().end());
  return n;
}

void store_normalization(Checkpoint& ckpt, const Normalization& norm) {
  ckpt.add(kMeanEntry, DType::Float64, Tensor<double>({norm.mean.size()}, norm.mean));
  ckpt.add(kStdEntry, DType::Float64, Tensor<double>({norm.stddev.size()}, norm.stddev));
}

int cmd_train(const CommonOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    KeyValues raw;
    const ExperimentConfig cfg = load_config(options, &raw);
    return cfg.precision == Precision::Float64 ? train_impl<double>(cfg, raw, options, out)
                                               : train_impl<float>(cfg, raw, options, out);
  });
}

int cmd_eval(const CommonOptions& options, const std::filesystem::path& checkpoint,
             std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(options);
    const Checkpoint ckpt = read_checkpoint_file(checkpoint);
    return cfg.precision == Precision::Float64 ? eval_impl<double>(cfg, ckpt, out)
                                               : eval_impl<float>(cfg, ckpt, out);
  });
}

int cmd_ablate(const CommonOptions& options, const AblateOptions& ablate, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(options);
    const Checkpoint ckpt = read_checkpoint_file(ablate.checkpoint);
    return cfg.precision == Precision::Float64
               ? ablate_impl<double>(cfg, ckpt, ablate, options, out)
               : ablate_impl<float>(cfg, ckpt, ablate, options, out);
  });
}

int cmd_cam(const CommonOptions& options, const CamOptions& cam, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(options);
    const Checkpoint ckpt = read_checkpoint_file(cam.checkpoint);
    return cfg.precision == Precision::Float64 ? cam_impl<double>(cfg, ckpt, cam, options, out)
                                               : cam_impl<float>(cfg, ckpt, cam, options, out);
  });
}

int cmd_selftest(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SelftestReport report = run_selftest(seed);
    report.print(out);
    out << (report.ok() ? "selftest passed" : "selftest FAILED") << '\n';
    return report.ok() ? kExitOk : kExitRuntime;
  });
}

}  // namespace sscale::cli
