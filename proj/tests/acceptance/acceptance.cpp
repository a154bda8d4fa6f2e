// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
//   sscale_acceptance <path-to-sscale> <work-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sscale/analysis.hpp"
#include "sscale/kernels.hpp"
#include "sscale/regularizers.hpp"
#include "sscale/selftest.hpp"
#include "sscale/trainer.hpp"
#include "sscale_cli/commands.hpp"
#include "sscale_cli/config.hpp"

using namespace sscale;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (passed) detail = what;
      passed = false;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void report(int id, const std::string& title, const Outcome& o, const std::string& summary) {
  std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " ["
            << (o.passed ? summary : o.detail) << "]" << std::endl;
  if (!o.passed) ++failures;
}

std::vector<double> as_vector(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

// 1. Finite-difference gradient checks of every layer.
void criterion_gradients() {
  const auto start = Clock::now();
  Outcome o;
  const SelftestReport suite = gradient_suite(20, 1);
  for (const auto& c : suite.checks) o.require(c.passed, c.name + " " + c.detail);

  // Convolution once more with an independent forward and independent differencing.
  RngStream rng(2024);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const kernels::Conv2dParams p{1 + rng.index(2), rng.index(2)};
    const std::size_t n = 1 + rng.index(2), c = 1 + rng.index(3), k = 1 + rng.index(3);
    const std::size_t h = 4 + rng.index(3), w = 4 + rng.index(3);
    Tensor<double> x({n, c, h, w}), wt({k, c, 3, 3}), b({k});
    for (auto* t : {&x, &wt, &b})
      for (auto& v : t->data()) v = rng.normal();
    const auto y = kernels::conv2d_forward(x, wt, b, p);
    Tensor<double> proj(y.shape());
    for (auto& v : proj.data()) v = rng.normal();
    const auto g = kernels::conv2d_backward(proj, x, wt, p, true);
    const auto xv = as_vector(x), wv = as_vector(wt), bv = as_vector(b);
    auto loss = [&](const std::vector<double>& xi, const std::vector<double>& wi,
                    const std::vector<double>& bi) {
      const auto out = oracle::conv2d(xi, {n, c, h, w}, wi, {k, c, 3, 3}, bi, p.stride, p.pad);
      double s = 0;
      for (std::size_t j = 0; j < out.size(); ++j) s += out[j] * proj[j];
      return s;
    };
    worst = std::max({worst,
                      oracle::max_relative_error(
                          g.input.data(),
                          oracle::numeric_gradient([&](const auto& v) { return loss(v, wv, bv); }, xv)),
                      oracle::max_relative_error(
                          g.weight.data(),
                          oracle::numeric_gradient([&](const auto& v) { return loss(xv, v, bv); }, wv)),
                      oracle::max_relative_error(
                          g.bias.data(),
                          oracle::numeric_gradient([&](const auto& v) { return loss(xv, wv, v); }, bv))});
  }
  o.require(worst < 1e-5, "conv2d vs reference forward: " + fmt("%.3g", worst));
  const double secs = seconds_since(start);
  o.require(secs < 60, "runtime " + fmt("%.1f", secs) + " s");
  report(1, "gradient checks", o,
         std::to_string(suite.checks.size()) + " layers x 20 instances, reference conv max rel err " +
             fmt("%.2g", worst) + ", " + fmt("%.1f", secs) + " s");
}

// 2. Monte-Carlo mask statistics.
void criterion_masks() {
  const auto start = Clock::now();
  Outcome o;
  const SelftestReport suite = mask_statistics_suite(1);
  std::string details;
  for (const auto& c : suite.checks) {
    o.require(c.passed, c.name + " " + c.detail);
    details += c.name + " " + c.detail + "; ";
  }
  const double secs = seconds_since(start);
  o.require(secs < 10, "runtime " + fmt("%.1f", secs) + " s");
  report(2, "mask statistics", o, details + fmt("%.1f", secs) + " s");
}

// 3. Selecting function against the brute-force oracle.
void criterion_select() {
  Outcome o;
  RngStream gen(3);
  std::size_t compared = 0;
  while (compared < 1000) {
    const std::size_t c = 1 + gen.index(96);
    std::vector<double> scores(c);
    const bool ties = gen.uniform() < 0.3;
    for (auto& s : scores) s = ties ? static_cast<double>(gen.index(4)) : gen.normal();
    const double t = gen.uniform();
    const double p = gen.uniform();
    if (drop_count(c, p) > candidate_count(c, t)) continue;
    const std::uint64_t seed = gen.next_u64();
    RngStream a(seed);
    const auto got = select(ScoreVector{scores}, t, p, a);
    const auto want = oracle::select(scores, t, p, RngStream(seed));
    o.require(got == want, "mismatch at c=" + std::to_string(c) + " t=" + fmt("%.4f", t) +
                               " p=" + fmt("%.4f", p));
    ++compared;
  }

  for (std::size_t c : {10u, 20u, 64u}) {
    const std::size_t pool = static_cast<std::size_t>(std::lround(0.2 * c));
    const std::size_t drop = static_cast<std::size_t>(std::lround(0.1 * c));
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      RngStream rng(seed);
      std::vector<double> scores(c);
      for (auto& s : scores) s = rng.normal();
      std::vector<std::size_t> order(c);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });
      const auto mask = select(ScoreVector{scores}, 0.2, 0.9, rng);
      std::size_t dropped = 0, dropped_in_pool = 0;
      for (std::size_t r = 0; r < c; ++r) {
        if (mask[order[r]] == 0) {
          ++dropped;
          if (r < pool) ++dropped_in_pool;
        }
      }
      o.require(dropped == drop && dropped_in_pool == drop,
                "c=" + std::to_string(c) + " dropped " + std::to_string(dropped));
    }
  }
  report(3, "selecting function", o,
         "1000 random instances identical to the oracle; t=0.2 p=0.9 drops 1/2/6 of the top 2/4/13 "
         "maps for c=10/20/64");
}

// 4. SelectScale contract and evaluation-mode identity.
void criterion_select_scale() {
  Outcome o;
  RngStream gen(4);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t c = 1 + gen.index(64), h = 1 + gen.index(6), w = 1 + gen.index(6);
    const double t = 0.05 + 0.95 * gen.uniform();
    const double q = gen.uniform();
    Tensor<double> y({1, c, h, w});
    for (auto& v : y.data()) v = gen.normal();
    const auto streams = SampleStreams::for_batch(gen.next_u64(), 0, 0, 0, 1);
    const auto out = apply_select_scale(y, t, q, streams, true);

    const auto scores = oracle::scores(as_vector(y), c, h, w, oracle::Score::MaxAbs);
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const std::size_t pool = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(t * c)));
    for (std::size_t r = 0; r < c; ++r) {
      const std::size_t m = order[r];
      const std::size_t base = m * h * w;
      if (r >= pool) {
        bool same = true;
        for (std::size_t j = 0; j < h * w; ++j) same = same && out[base + j] == y[base + j];
        o.require(same, "non-candidate map changed");
        continue;
      }
      std::size_t ref = base;
      for (std::size_t j = 0; j < h * w; ++j)
        if (std::abs(y[base + j]) > std::abs(y[ref])) ref = base + j;
      const double factor = out[ref] / y[ref];
      o.require(factor >= 1 - q - 1e-12 && factor <= 1 + q + 1e-12,
                "factor " + fmt("%.6f", factor) + " outside [1-q, 1+q], q=" + fmt("%.4f", q));
      for (std::size_t j = 0; j < h * w; ++j) {
        o.require(std::abs(out[base + j] - factor * y[base + j]) <= 1e-12 * (1 + std::abs(y[base + j])),
                  "candidate map not uniformly scaled");
      }
    }
  }

  Tensor<double> y({4, 16, 5, 5});
  for (auto& v : y.data()) v = gen.normal();
  const auto streams = SampleStreams::for_batch(9, 1, 2, 3, 4);
  for (Method m : {Method::Dropout, Method::SpatialDropout, Method::SpatialScale, Method::Selectout,
                   Method::SelectScale}) {
    TransformSettings s;
    s.method = m;
    s.top_rate = 0.5;
    s.retain_rate = 0.7;
    s.half_width = 0.4;
    o.require(apply_transform(y, s, streams, false) == y,
              std::string(to_string(m)) + " changes its input in eval mode");
  }
  report(4, "select-scale contract", o,
         "1000 activations: non-candidates bit-identical, candidate factors in [1-q, 1+q]; eval "
         "identity for 5 methods");
}

cli::ExperimentConfig desk_config(const std::vector<std::string>& overrides) {
  cli::CommonOptions o;
  o.overrides = overrides;
  return cli::load_config(o);
}

// 5. Desk-scale convergence. Returns the unregularized model for criterion 6.
Model<float> criterion_convergence(Dataset& test_out) {
  Outcome o;
  std::string summary;
  std::optional<Model<float>> plain;
  for (const bool regularized : {false, true}) {
    const auto start = Clock::now();
    const auto cfg = regularized
                         ? desk_config({"reg.method=select_scale", "reg.t=0.2", "reg.q=0.4"})
                         : desk_config({});
    auto [train_set, test_set] = cli::load_datasets(cfg);
    auto model = Model<float>::build(cfg.model, cfg.train.seed);
    const auto result = train(model, train_set, test_set, cfg.train, cfg.reg);
    model.detach_regularizer();
    double running = 1.0;
    for (const auto& r : result.metrics)
      if (r.split == "train") running = r.error;
    const double clean = evaluate(model, train_set, cfg.train.batch_size).error;
    const double test = evaluate(model, test_set, cfg.train.batch_size).error;
    const double secs = seconds_since(start);
    const double limit = regularized ? 0.10 : 0.05;
    const std::string name = regularized ? "select_scale" : "unregularized";
    o.require(running < limit, name + " train error " + fmt("%.4f", running));
    o.require(secs < 600, name + " runtime " + fmt("%.0f", secs) + " s");
    summary += name + " train error " + fmt("%.4f", running) + " (clean " + fmt("%.4f", clean) +
               ", test " + fmt("%.4f", test) + ") in " + fmt("%.0f", secs) + " s; ";
    if (!regularized) {
      plain.emplace(std::move(model));
      test_out = std::move(test_set);
    }
  }
  report(5, "convergence", o, summary);
  return std::move(*plain);
}

// 6. Inference-time ablation ordering on the unregularized network.
void criterion_ablation(Model<float>& model, const Dataset& test) {
  const auto start = Clock::now();
  Outcome o;
  const std::vector<double> rates{1.0, 0.98, 0.96, 0.94, 0.92, 0.9};
  std::vector<AblationCurve> drop, sel;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    AblationOptions a;
    a.rates = rates;
    a.seed = seed;
    a.batch_size = 100;
    a.method = Method::SpatialDropout;
    drop.push_back(ablate(model, test, a));
    a.method = Method::Selectout;
    sel.push_back(ablate(model, test, a));
    for (std::size_t i = 1; i < rates.size(); ++i) {
      const double d = drop.back().points[i].error, s = sel.back().points[i].error;
      o.require(s >= d, "seed " + std::to_string(seed) + " rate " + fmt("%.2f", rates[i]) +
                            ": selectout " + fmt("%.4f", s) + " < spatial dropout " + fmt("%.4f", d));
      if (rates[i] == 0.94) {
        o.require(s > d, "seed " + std::to_string(seed) + " rate 0.94 not strictly worse");
      }
    }
  }
  const auto md = average_curves(drop), ms = average_curves(sel);
  const double d94 = md.points[3].error, s94 = ms.points[3].error;
  const double secs = seconds_since(start);
  o.require(secs < 300, "runtime " + fmt("%.0f", secs) + " s");
  std::string curve;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    curve += fmt("%.2f", rates[i]) + ":" + fmt("%.3f", md.points[i].error) + "/" +
             fmt("%.3f", ms.points[i].error) + " ";
  }
  report(6, "ablation ordering", o,
         "mean error spatial_dropout/selectout " + curve + "; at 0.94 selectout/spatial_dropout = " +
             (d94 > 0 ? fmt("%.1f", s94 / d94) : std::string("inf")) + "x; " + fmt("%.0f", secs) + " s");
}

// 7. Learning-rate schedules and curriculum endpoints.
void criterion_schedules() {
  Outcome o;
  TrainConfig c;
  c.epochs = 200;
  c.lr_init = 0.1;
  c.milestones = {60, 120, 160};
  c.step_factor = 0.2;
  const std::vector<std::pair<std::size_t, double>> want{
      {0, 0.1}, {59, 0.1}, {60, 0.02}, {119, 0.02}, {120, 0.004}, {159, 0.004}, {160, 0.0008}, {199, 0.0008}};
  for (auto [epoch, lr] : want) {
    o.require(lr_at(epoch, c) == lr, "step lr at epoch " + std::to_string(epoch) + " = " +
                                         fmt("%.17g", lr_at(epoch, c)));
  }
  c.schedule = LrSchedule::Cosine;
  o.require(lr_at(100, c) == 0.05, "cosine midpoint " + fmt("%.17g", lr_at(100, c)));
  o.require(lr_at(0, c) == 0.1, "cosine start");
  o.require(curriculum_rate(0, 30, 1.0, 0.8) == 1.0, "curriculum start");
  o.require(curriculum_rate(30, 30, 1.0, 0.8) == 0.8, "curriculum end");
  o.require(curriculum_rate(0, 30, 0.0, 0.4) == 0.0 && curriculum_rate(30, 30, 0.0, 0.4) == 0.4,
            "curriculum endpoints for q");
  report(7, "schedules", o,
         "step 0.1/0.02/0.004/0.0008 exact, cosine midpoint 0.05, curriculum endpoints exact");
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 8. Two command-line training runs produce identical bytes.
void criterion_determinism(const std::string& exe, const fs::path& work) {
  Outcome o;
  const auto conf = work / "determinism.conf";
  std::ofstream(conf) << "reg.method = select_scale\nreg.t = 0.2\nreg.q = 0.4\n";
  std::vector<fs::path> dirs{work / "run_a", work / "run_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    const std::string cmd = "\"" + exe + "\" train --config \"" + conf.string() + "\" --out \"" +
                            d.string() + "\" > \"" + (work / "train.log").string() + "\" 2>&1";
    o.require(std::system(cmd.c_str()) == 0, "train exited non-zero: " + cmd);
  }
  for (const char* f : {"metrics.csv", "checkpoint.ssck"}) {
    const auto a = read_bytes(dirs[0] / f), b = read_bytes(dirs[1] / f);
    o.require(!a.empty() && a == b, std::string(f) + " differs between runs");
  }
  report(8, "determinism", o,
         "metrics.csv (" + std::to_string(fs::file_size(dirs[0] / "metrics.csv")) +
             " bytes) and checkpoint.ssck (" +
             std::to_string(fs::file_size(dirs[0] / "checkpoint.ssck")) + " bytes) identical");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: sscale_acceptance <sscale-executable> <work-dir>\n";
    return 2;
  }
  const fs::path work = argv[2];
  fs::create_directories(work);
  try {
    criterion_gradients();
    criterion_masks();
    criterion_select();
    criterion_select_scale();
    Dataset test;
    Model<float> plain = criterion_convergence(test);
    criterion_ablation(plain, test);
    criterion_schedules();
    criterion_determinism(argv[1], work);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
