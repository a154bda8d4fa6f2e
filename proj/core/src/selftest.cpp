#include "sscale/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "sscale/gradcheck.hpp"
#include "sscale/ops.hpp"
#include "sscale/regularizers.hpp"
#include "sscale/rng.hpp"

namespace sscale {

bool SelftestReport::ok() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const SelfCheck& c) { return c.passed; });
}

void SelftestReport::print(std::ostream& out) const {
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << "  " << c.detail;
    out << '\n';
  }
}

namespace {

using T = Tensor<double>;
using V = Var<double>;
using LossFn = std::function<V(GradTape*)>;

constexpr double kGradTolerance = 1e-5;

T random_tensor(const Shape& shape, RngStream& rng, double scale = 1.0) {
  T t(shape);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Keeps values clear of the ReLU kink so central differences stay one-sided-free.
T away_from_zero(const Shape& shape, RngStream& rng) {
  T t(shape);
  for (auto& v : t.data()) {
    const double x = rng.normal();
    v = x >= 0 ? x + 0.05 : x - 0.05;
  }
  return t;
}

// Distinct values with gaps far wider than the difference step, in random order.
T distinct_values(const Shape& shape, RngStream& rng) {
  T t(shape);
  const auto order = permutation(t.size(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * static_cast<double>(order[i]) - 1.0;
  return t;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, RngStream& rng) {
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.index(classes));
  return labels;
}

struct Instance {
  LossFn loss;
  std::vector<V> inputs;
};

using InstanceFactory = std::function<Instance(RngStream&)>;

// Projects an op's output to a scalar through fixed random weights.
LossFn projected(std::function<V(GradTape*)> op, T weights) {
  auto w = std::make_shared<T>(std::move(weights));
  return [op = std::move(op), w](GradTape* tape) { return ops::dot(tape, op(tape), *w); };
}

std::vector<std::pair<std::string, InstanceFactory>> gradient_cases() {
  std::vector<std::pair<std::string, InstanceFactory>> cases;

  cases.emplace_back("conv2d", [](RngStream& rng) {
    kernels::Conv2dParams p;
    p.stride = 1 + rng.index(2);
    p.pad = rng.index(2);
    V x(random_tensor({2, 3, 5, 5}, rng), true);
    V w(random_tensor({4, 3, 3, 3}, rng), true);
    V b(random_tensor({4}, rng), true);
    const Shape out{2, 4, (5 + 2 * p.pad - 3) / p.stride + 1, (5 + 2 * p.pad - 3) / p.stride + 1};
    return Instance{projected([=](GradTape* t) { return ops::conv2d(t, x, w, b, p); },
                              random_tensor(out, rng)),
                    {x, w, b}};
  });

  cases.emplace_back("relu", [](RngStream& rng) {
    V x(away_from_zero({2, 3, 4, 4}, rng), true);
    return Instance{projected([=](GradTape* t) { return ops::relu(t, x); },
                              random_tensor({2, 3, 4, 4}, rng)),
                    {x}};
  });

  cases.emplace_back("max_pool2d", [](RngStream& rng) {
    const bool overlap = rng.index(2) == 1;
    const std::size_t window = overlap ? 3 : 2, stride = overlap ? 1 : 2;
    V x(distinct_values({2, 2, 4, 4}, rng), true);
    const std::size_t o = (4 - window) / stride + 1;
    return Instance{projected([=](GradTape* t) { return ops::max_pool2d(t, x, window, stride); },
                              random_tensor({2, 2, o, o}, rng)),
                    {x}};
  });

  cases.emplace_back("global_avg_pool", [](RngStream& rng) {
    V x(random_tensor({2, 3, 3, 4}, rng), true);
    return Instance{projected([=](GradTape* t) { return ops::global_avg_pool(t, x); },
                              random_tensor({2, 3}, rng)),
                    {x}};
  });

  cases.emplace_back("linear", [](RngStream& rng) {
    V x(random_tensor({3, 6}, rng), true);
    V w(random_tensor({4, 6}, rng), true);
    V b(random_tensor({4}, rng), true);
    return Instance{projected([=](GradTape* t) { return ops::linear(t, x, w, b); },
                              random_tensor({3, 4}, rng)),
                    {x, w, b}};
  });

  cases.emplace_back("batchnorm2d_train", [](RngStream& rng) {
    V x(random_tensor({3, 2, 3, 3}, rng), true);
    V g(random_tensor({2}, rng), true);
    V b(random_tensor({2}, rng), true);
    auto op = [=](GradTape* t) {
      ops::BatchNormState<double> state(2);
      return ops::batchnorm2d(t, x, g, b, state, true);
    };
    return Instance{projected(op, random_tensor({3, 2, 3, 3}, rng)), {x, g, b}};
  });

  cases.emplace_back("batchnorm2d_eval", [](RngStream& rng) {
    V x(random_tensor({2, 2, 3, 3}, rng), true);
    V g(random_tensor({2}, rng), true);
    V b(random_tensor({2}, rng), true);
    ops::BatchNormState<double> state(2);
    for (std::size_t c = 0; c < 2; ++c) {
      state.running_mean[c] = rng.normal();
      state.running_var[c] = 0.5 + rng.uniform();
    }
    auto op = [=](GradTape* t) mutable { return ops::batchnorm2d(t, x, g, b, state, false); };
    return Instance{projected(op, random_tensor({2, 2, 3, 3}, rng)), {x, g, b}};
  });

  cases.emplace_back("softmax_cross_entropy", [](RngStream& rng) {
    V x(random_tensor({4, 5}, rng, 2.0), true);
    auto labels = std::make_shared<std::vector<int>>(random_labels(4, 5, rng));
    return Instance{[=](GradTape* t) { return ops::softmax_cross_entropy(t, x, *labels); }, {x}};
  });

  cases.emplace_back("add", [](RngStream& rng) {
    V a(random_tensor({2, 3, 2, 2}, rng), true);
    V b(random_tensor({2, 3, 2, 2}, rng), true);
    return Instance{projected([=](GradTape* t) { return ops::add(t, a, b); },
                              random_tensor({2, 3, 2, 2}, rng)),
                    {a, b}};
  });

  cases.emplace_back("flatten", [](RngStream& rng) {
    V x(random_tensor({2, 3, 2, 2}, rng), true);
    return Instance{projected([=](GradTape* t) { return ops::flatten(t, x); },
                              random_tensor({2, 12}, rng)),
                    {x}};
  });

  cases.emplace_back("scale_channels", [](RngStream& rng) {
    V x(random_tensor({2, 3, 3, 3}, rng), true);
    std::vector<double> f(6);
    for (auto& v : f) v = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.6, 1.4);
    return Instance{projected([=](GradTape* t) { return ops::scale_channels(t, x, f); },
                              random_tensor({2, 3, 3, 3}, rng)),
                    {x}};
  });

  cases.emplace_back("scale_elements", [](RngStream& rng) {
    V x(random_tensor({2, 2, 3, 3}, rng), true);
    T mask({2, 2, 3, 3});
    for (auto& v : mask.data()) v = rng.bernoulli(0.1) ? 0.0 : 1.0 / 0.9;
    return Instance{projected([=](GradTape* t) { return ops::scale_elements(t, x, mask); },
                              random_tensor({2, 2, 3, 3}, rng)),
                    {x}};
  });

  // conv -> BN -> residual add -> pool -> classifier -> loss, all smooth.
  cases.emplace_back("composite", [](RngStream& rng) {
    V x(random_tensor({2, 2, 4, 4}, rng), true);
    V w(random_tensor({2, 2, 3, 3}, rng, 0.5), true);
    V g(random_tensor({2}, rng), true);
    V be(random_tensor({2}, rng), true);
    V fw(random_tensor({3, 2}, rng), true);
    V fb(random_tensor({3}, rng), true);
    auto labels = std::make_shared<std::vector<int>>(random_labels(2, 3, rng));
    kernels::Conv2dParams p;
    p.pad = 1;
    auto loss = [=](GradTape* t) {
      ops::BatchNormState<double> state(2);
      V y = ops::conv2d(t, x, w, V{}, p);
      y = ops::batchnorm2d(t, y, g, be, state, true);
      y = ops::add(t, y, x);
      y = ops::global_avg_pool(t, y);
      y = ops::linear(t, y, fw, fb);
      return ops::softmax_cross_entropy(t, y, *labels);
    };
    return Instance{loss, {x, w, g, be, fw, fb}};
  });

  return cases;
}

std::string format_number(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

SelftestReport gradient_suite(std::size_t instances, std::uint64_t seed) {
  SelftestReport report;
  std::uint64_t op_index = 0;
  for (auto& [name, factory] : gradient_cases()) {
    double worst = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      RngStream rng(derive_key({seed, 0x67726164, op_index, i}));
      Instance inst = factory(rng);
      worst = std::max(worst, gradient_check(inst.loss, inst.inputs).max_rel_error);
    }
    report.checks.push_back({"grad " + name, worst < kGradTolerance,
                             "max rel error " + format_number("%.3g", worst)});
    ++op_index;
  }
  return report;
}

SelftestReport mask_statistics_suite(std::uint64_t seed) {
  SelftestReport report;
  constexpr double p = 0.9, q = 0.4;

  {
    // 10^5 units: 1000 samples of 100 elements.
    const SampleStreams streams = SampleStreams::for_batch(seed, 1, 0, 0, 1000);
    T y({1000, 4, 5, 5}, 1.0);
    const T out = apply_dropout(y, p, streams, true);
    const double dropped =
        static_cast<double>(std::count(out.data().begin(), out.data().end(), 0.0)) /
        static_cast<double>(out.size());
    report.checks.push_back({"dropout drop fraction", std::abs(dropped - 0.1) <= 0.01,
                             format_number("%.5f", dropped)});
  }
  {
    // 10^5 maps: 1563 samples of 64 maps.
    const std::size_t n = 1563, c = 64;
    const SampleStreams streams = SampleStreams::for_batch(seed, 2, 0, 0, n);
    T y({n, c, 1, 1}, 1.0);
    const T out = apply_spatial_dropout(y, p, streams, true);
    const double dropped =
        static_cast<double>(std::count(out.data().begin(), out.data().end(), 0.0)) /
        static_cast<double>(out.size());
    report.checks.push_back({"spatial_dropout drop fraction", std::abs(dropped - 0.1) <= 0.01,
                             format_number("%.5f", dropped)});
  }

  auto factor_stats = [&](Method method, std::uint64_t layer) {
    TransformSettings s;
    s.method = method;
    s.half_width = q;
    s.top_rate = 0.2;
    const std::size_t c = 64;
    std::vector<double> factors;
    std::vector<double> sample(c);
    for (std::uint64_t n = 0; factors.size() < 100000; ++n) {
      RngStream rng(derive_key({seed, layer, n}));
      for (auto& v : sample) v = rng.normal();
      RngStream mask_rng(derive_key({seed, layer, n, 1}));
      const DropMask m = draw_map_mask<double>(s, sample, c, 1, 1, mask_rng);
      for (std::size_t i = 0; i < c; ++i) {
        if (method == Method::SpatialScale || m.selection[i] == 0) factors.push_back(m.factors[i]);
      }
    }
    double sum = 0;
    for (double f : factors) sum += f;
    const double mean = sum / static_cast<double>(factors.size());
    const auto [lo, hi] = std::minmax_element(factors.begin(), factors.end());
    const bool ok = std::abs(mean - 1.0) <= 0.005 && *lo >= 1 - q && *hi <= 1 + q;
    report.checks.push_back({std::string(to_string(method)) + " factor statistics", ok,
                             "mean " + format_number("%.5f", mean) + " min " +
                                 format_number("%.4f", *lo) + " max " +
                                 format_number("%.4f", *hi)});
  };
  factor_stats(Method::SpatialScale, 3);
  factor_stats(Method::SelectScale, 4);
  return report;
}

SelftestReport run_selftest(std::uint64_t seed) {
  SelftestReport report = gradient_suite(20, seed);
  SelftestReport masks = mask_statistics_suite(seed);
  report.checks.insert(report.checks.end(), masks.checks.begin(), masks.checks.end());
  return report;
}

}  // namespace sscale
