#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sscale/checkpoint.hpp"
#include "sscale/data.hpp"
#include "sscale/model.hpp"
#include "sscale/regularizers.hpp"

namespace sscale {

enum class LrSchedule { Step, Cosine };

std::string_view to_string(LrSchedule s) noexcept;
LrSchedule parse_lr_schedule(std::string_view s);

struct TrainConfig {
  std::size_t epochs = 30;
  double lr_init = 0.1;
  LrSchedule schedule = LrSchedule::Step;
  std::vector<std::size_t> milestones = {9, 18, 24};
  double step_factor = 0.2;
  double lr_min = 0.0;  // cosine floor
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  std::size_t eval_every = 1;
  std::size_t batch_size = 128;
  AugmentOptions augment{};

  void validate() const;
};

/// Learning rate for a (0-based) epoch.
///   step:   lr_init / (1/factor)^k, k = number of milestones <= epoch
///   cosine: lr_min + (lr_init - lr_min) * (1 + cos(pi * epoch / epochs)) / 2
double lr_at(std::size_t epoch, const TrainConfig& config);

/// Momentum buffers, one per parameter, allocated on first use.
template <typename Scalar>
struct SgdState {
  std::vector<Tensor<Scalar>> velocity;
};

/// v <- momentum * v + grad + wd * param  (wd only where param.decay)
/// param <- param - lr * v
/// Throws NumericError naming the parameter if its gradient is not finite.
/// Parameters without a gradient are treated as having a zero gradient.
template <typename Scalar>
void sgd_step(std::span<typename Model<Scalar>::Parameter> params, double lr, double momentum,
              double weight_decay, SgdState<Scalar>& state);

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0;
  double error = 0;
  double lr = 0;
  double effective_rate = 1;
};

inline constexpr std::string_view kMetricsHeader = "epoch,split,loss,error,lr,effective_rate";

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

struct EvalResult {
  double loss = 0;
  double error = 0;
  std::size_t count = 0;
};

/// Inference-mode loss and error over a dataset.
template <typename Scalar>
EvalResult evaluate(Model<Scalar>& model, const Dataset& data, std::size_t batch_size,
                    bool force_regularizers = false);

template <typename Scalar>
struct TrainResult {
  std::vector<MetricsRow> metrics;
  Checkpoint checkpoint;
};

using EpochCallback = std::function<void(const MetricsRow&)>;

/// Shuffled minibatch SGD. Attaches `reg` to the model (when not none), moves
/// the curriculum each epoch, appends a train row per epoch and a test row
/// every eval_every epochs when `test` is non-empty. Throws NumericError with
/// epoch/batch coordinates if the loss goes non-finite.
template <typename Scalar>
TrainResult<Scalar> train(Model<Scalar>& model, const Dataset& train_data, const Dataset& test,
                          const TrainConfig& config, const RegularizerConfig& reg,
                          const EpochCallback& on_row = {});

}  // namespace sscale
