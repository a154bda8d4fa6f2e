#include <iostream>

#include "CLI11.hpp"
#include "sscale_cli/commands.hpp"

using namespace sscale::cli;

namespace {

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config file (key = value lines)");
  cmd->add_option("--set", o.overrides, "Override one key, e.g. --set reg.method=none")
      ->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "Replaces train.seed");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sscale: feature-map drop and scale regularizers for small CNNs"};
  app.require_subcommand(1);

  CommonOptions common;
  std::filesystem::path checkpoint;
  AblateOptions ablate;
  CamOptions cam;
  bool raw = false;

  auto* train = app.add_subcommand("train", "Train a model; writes metrics.csv and checkpoint.ssck");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "Print the clean error of a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "SSCK checkpoint")->required();

  auto* abl = app.add_subcommand("ablate", "Inference-time drop ablation; writes ablation.csv");
  add_common(abl, common);
  abl->add_option("--checkpoint", ablate.checkpoint, "SSCK checkpoint")->required();
  abl->add_option("--method", ablate.methods, "spatial_dropout and/or selectout")
      ->delimiter(',')
      ->capture_default_str();
  abl->add_option("--rates", ablate.rates, "Retaining rates in (0, 1]")
      ->delimiter(',')
      ->capture_default_str();
  abl->add_option("--seeds", ablate.seeds, "Mask seeds; several seeds also write ablation_mean.csv")
      ->delimiter(',');
  abl->add_option("--top-rate", ablate.top_rate,
                 "Selectout candidate pool t (default: 1 - rate, dropping the top maps)");
  abl->add_flag("--raw", raw, "Zero dropped maps without the 1/p rescale");

  auto* cam_cmd = app.add_subcommand("cam", "Class activation map; writes cam.pgm and cam.csv");
  add_common(cam_cmd, common);
  cam_cmd->add_option("--checkpoint", cam.checkpoint, "SSCK checkpoint")->required();
  cam_cmd->add_option("--index", cam.index, "Image index in the evaluation set")->capture_default_str();
  cam_cmd->add_option("--class", cam.class_index, "Class to explain (default: the image label)");

  auto* self = app.add_subcommand("selftest", "Gradient checks and mask statistics");
  std::uint64_t self_seed = 1;
  self->add_option("--seed", self_seed, "Seed for the random instances")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*train) return cmd_train(common, std::cout, std::cerr);
  if (*eval) return cmd_eval(common, checkpoint, std::cout, std::cerr);
  if (*abl) {
    ablate.rescale = !raw;
    return cmd_ablate(common, ablate, std::cout, std::cerr);
  }
  if (*cam_cmd) return cmd_cam(common, cam, std::cout, std::cerr);
  return cmd_selftest(self_seed, std::cout, std::cerr);
}
