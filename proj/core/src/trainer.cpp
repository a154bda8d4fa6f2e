#include "sscale/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "sscale/errors.hpp"

namespace sscale {

std::string_view to_string(LrSchedule s) noexcept {
  return s == LrSchedule::Step ? "step" : "cosine";
}

LrSchedule parse_lr_schedule(std::string_view s) {
  if (s == "step") return LrSchedule::Step;
  if (s == "cosine") return LrSchedule::Cosine;
  throw ConfigError("unknown learning-rate schedule '" + std::string(s) +
                    "' (expected step, cosine)");
}

void TrainConfig::validate() const {
  if (!(lr_init > 0)) throw ConfigError("train.lr must be > 0");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw ConfigError("train.milestones must be strictly increasing");
    }
    if (epochs > 0 && milestones[i] >= epochs) {
      throw ConfigError("train.milestones entry " + std::to_string(milestones[i]) +
                        " is not below train.epochs = " + std::to_string(epochs));
    }
  }
  if (!(step_factor > 0) || step_factor > 1) throw ConfigError("train.factor must be in (0, 1]");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.wd must be >= 0");
  if (lr_min < 0 || lr_min > lr_init) throw ConfigError("cosine lr floor must be in [0, lr]");
  if (batch_size == 0) throw ConfigError("data.batch_size must be positive");
  if (eval_every == 0) throw ConfigError("eval interval must be positive");
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  if (config.schedule == LrSchedule::Cosine) {
    if (config.epochs == 0) return config.lr_init;
    const double phase =
        std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(config.epochs);
    return config.lr_min + 0.5 * (config.lr_init - config.lr_min) * (1.0 + std::cos(phase));
  }
  const auto passed = static_cast<double>(
      std::count_if(config.milestones.begin(), config.milestones.end(),
                    [&](std::size_t m) { return m <= epoch; }));
  // Dividing by the inverse factor keeps decimal schedules such as 0.1 / 5^k
  // correctly rounded; repeated multiplication by 0.2 drifts in the last ulp.
  return config.lr_init / std::pow(1.0 / config.step_factor, passed);
}

template <typename S>
void sgd_step(std::span<typename Model<S>::Parameter> params, double lr, double momentum,
              double weight_decay, SgdState<S>& state) {
  if (state.velocity.size() < params.size()) state.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    Tensor<S>& value = p.var.mutable_value();
    Tensor<S>& v = state.velocity[i];
    if (v.empty()) v = Tensor<S>::zeros_like(value);
    const bool has_grad = p.var.has_grad();
    if (has_grad && !p.var.grad().all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
    const S wd = p.decay ? static_cast<S>(weight_decay) : S{0};
    const auto mom = static_cast<S>(momentum);
    const auto rate = static_cast<S>(lr);
    for (std::size_t j = 0; j < value.size(); ++j) {
      const S g = has_grad ? p.var.grad()[j] : S{0};
      v[j] = mom * v[j] + g + wd * value[j];
      value[j] -= rate * v[j];
    }
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

template <typename S>
std::size_t count_errors(const Tensor<S>& logits, std::span<const int> labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = logits.raw() + i * k;
    const auto pred = static_cast<int>(std::max_element(row, row + k) - row);
    if (pred != labels[i]) ++wrong;
  }
  return wrong;
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.split << ',' << fmt_double(r.loss) << ',' << fmt_double(r.error)
        << ',' << fmt_double(r.lr) << ',' << fmt_double(r.effective_rate) << '\n';
  }
}

template <typename S>
EvalResult evaluate(Model<S>& model, const Dataset& data, std::size_t batch_size,
                    bool force_regularizers) {
  EvalResult r;
  if (data.empty()) return r;
  if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double loss_sum = 0;
  std::size_t wrong = 0;
  const AugmentOptions no_aug{false, 0, 0.0};
  for (std::size_t start = 0, b = 0; start < data.size(); start += batch_size, ++b) {
    const std::size_t end = std::min(start + batch_size, data.size());
    std::span<const std::size_t> ids(idx.data() + start, end - start);
    const Batch<S> batch = make_batch<S>(data, ids, no_aug, 0, 0);
    typename Model<S>::ForwardOptions o;
    o.training = false;
    o.force_regularizers = force_regularizers;
    o.batch = b;
    auto out = model.forward(batch.images, o);
    const auto ce = kernels::softmax_cross_entropy_forward(out.logits.value(), batch.labels);
    loss_sum += static_cast<double>(ce.loss) * static_cast<double>(ids.size());
    wrong += count_errors(out.logits.value(), batch.labels);
  }
  r.count = data.size();
  r.loss = loss_sum / static_cast<double>(r.count);
  r.error = static_cast<double>(wrong) / static_cast<double>(r.count);
  return r;
}

template <typename S>
TrainResult<S> train(Model<S>& model, const Dataset& train_data, const Dataset& test,
                     const TrainConfig& config, const RegularizerConfig& reg,
                     const EpochCallback& on_row) {
  config.validate();
  reg.validate();
  if (reg.method != Method::None) {
    model.attach_regularizer(reg, config.seed);
  } else {
    model.detach_regularizer();
  }

  TrainResult<S> result;
  if (config.epochs > 0 && train_data.empty()) throw ConfigError("training set is empty");
  SgdState<S> sgd;
  auto& params = model.parameters();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    const double rate = reg.effective_rate(epoch, config.epochs);
    model.set_regularizer_epoch(epoch, config.epochs);
    const std::vector<std::size_t> order = epoch_order(train_data.size(), config.seed, epoch);

    double loss_sum = 0;
    std::size_t wrong = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      std::span<const std::size_t> ids(order.data() + start, end - start);
      const Batch<S> batch = make_batch<S>(train_data, ids, config.augment, config.seed, epoch);

      GradTape tape;
      typename Model<S>::ForwardOptions o;
      o.tape = &tape;
      o.training = true;
      o.epoch = epoch;
      o.batch = b;
      auto out = model.forward(batch.images, o);
      Var<S> loss = ops::softmax_cross_entropy(&tape, out.logits, batch.labels);
      const double loss_value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(loss_value)) {
        throw NumericError("loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      for (auto& p : params) p.var.zero_grad();
      tape.backward(loss);
      sgd_step<S>(params, lr, config.momentum, config.weight_decay, sgd);

      loss_sum += loss_value * static_cast<double>(ids.size());
      wrong += count_errors(out.logits.value(), batch.labels);
    }

    MetricsRow row{epoch, "train", loss_sum / static_cast<double>(order.size()),
                   static_cast<double>(wrong) / static_cast<double>(order.size()), lr, rate};
    result.metrics.push_back(row);
    if (on_row) on_row(row);

    const bool eval_now = (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
    if (!test.empty() && eval_now) {
      const EvalResult ev = evaluate(model, test, config.batch_size);
      MetricsRow test_row{epoch, "test", ev.loss, ev.error, lr, rate};
      result.metrics.push_back(test_row);
      if (on_row) on_row(test_row);
    }
  }
  result.checkpoint = model.to_checkpoint();
  return result;
}

#define SSCALE_INSTANTIATE_TRAINER(S)                                                            \
  template void sgd_step<S>(std::span<typename Model<S>::Parameter>, double, double, double,    \
                            SgdState<S>&);                                                       \
  template EvalResult evaluate(Model<S>&, const Dataset&, std::size_t, bool);                   \
  template TrainResult<S> train(Model<S>&, const Dataset&, const Dataset&, const TrainConfig&,  \
                                const RegularizerConfig&, const EpochCallback&);

SSCALE_INSTANTIATE_TRAINER(float)
SSCALE_INSTANTIATE_TRAINER(double)

#undef SSCALE_INSTANTIATE_TRAINER

}  // namespace sscale
