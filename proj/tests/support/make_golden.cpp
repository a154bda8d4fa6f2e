// Regenerates tests/data/tiny.ssck and tiny_cam.pgm from tests/data/tiny.conf.
// The heat map is computed with the reference CAM, not the library one.
//   sscale_make_golden <tests/data>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "oracles.hpp"
#include "sscale/model.hpp"
#include "sscale_cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace sscale;
  if (argc != 2) {
    std::cerr << "usage: sscale_make_golden <data-dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  const auto work = std::filesystem::temp_directory_path() / "sscale_golden";
  cli::CommonOptions o;
  o.config = dir / "tiny.conf";
  o.out = work;
  if (cli::cmd_train(o, std::cout, std::cerr) != 0) return 1;
  std::filesystem::copy_file(work / "checkpoint.ssck", dir / "tiny.ssck",
                             std::filesystem::copy_options::overwrite_existing);

  const auto cfg = cli::load_config(o);
  std::ifstream in(dir / "tiny.ssck", std::ios::binary);
  const Checkpoint ckpt = read_checkpoint(in);
  auto model = Model<float>::build(cfg.model, cfg.train.seed);
  model.load_checkpoint(ckpt);
  const auto test = cli::load_datasets(cfg, cli::stored_normalization(ckpt)).second;
  const auto& image = test.images.at(2);

  Tensor<float> x({1, image.pixels.shape()[0], image.pixels.shape()[1], image.pixels.shape()[2]});
  std::copy(image.pixels.data().begin(), image.pixels.data().end(), x.data().begin());
  const auto f = model.forward(x, {}).features.value();
  const auto& w = model.classifier_weight();
  const auto ref = oracle::cam(std::vector<double>(f.data().begin(), f.data().end()), f.shape()[1],
                               f.shape()[2], f.shape()[3],
                               std::vector<double>(w.data().begin(), w.data().end()),
                               static_cast<std::size_t>(image.label));
  const auto bytes = oracle::pgm_bytes(ref.normalized, f.shape()[2], f.shape()[3]);
  std::ofstream(dir / "tiny_cam.pgm", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::cout << "wrote " << (dir / "tiny.ssck").string() << " and tiny_cam.pgm\n";
  return 0;
}
