#include "sscale_cli/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "sscale/errors.hpp"

namespace sscale::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    std::string item = trim(std::string_view(s).substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(key + ": invalid value '" + value + "' (expected " + expected + ")");
}

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {
    for (const auto& [key, value] : kv.values()) {
      if (!default_values().count(key)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  }

  const std::string& raw(const std::string& key) const {
    auto it = kv_.values().find(key);
    return it != kv_.values().end() ? it->second : default_values().at(key);
  }

  double real(const std::string& key) const {
    const std::string& v = raw(key);
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
    return out;
  }

  std::uint64_t integer(const std::string& key) const { return parse_integer(key, raw(key)); }

  std::optional<std::size_t> optional_count(const std::string& key) const {
    const std::string& v = raw(key);
    if (v.empty() || v == "none") return std::nullopt;
    return static_cast<std::size_t>(parse_integer(key, v));
  }

  bool flag(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    bad_value(key, v, "on or off");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(raw(key))) {
      double d = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), d);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        bad_value(key, raw(key), "a comma-separated list of numbers");
      }
      out.push_back(d);
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(raw(key))) {
      out.push_back(static_cast<std::size_t>(parse_integer(key, item)));
    }
    return out;
  }

  // Re-throws a core parse error with the key prefixed.
  template <typename Fn>
  auto with_key(const std::string& key, Fn&& fn) const {
    try {
      return fn(raw(key));
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }

 private:
  static std::uint64_t parse_integer(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      bad_value(key, v, "a non-negative integer");
    }
    return out;
  }

  const KeyValues& kv_;
};

}  // namespace

KeyValues KeyValues::parse(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    kv.values_[key] = trim(std::string_view(text).substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  return parse(in, path.string());
}

void KeyValues::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has no key");
  values_[key] = trim(assignment.substr(eq + 1));
}

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"model.kind", "resnet"},
      {"model.depth", "8"},
      {"model.width", "1"},
      {"model.classes", "3"},
      {"model.head", "gap"},
      {"model.hook_position", "post_relu"},
      {"model.precision", "f32"},
      {"data.kind", "synthetic"},
      {"data.path", ""},
      {"data.test_path", ""},
      {"data.limit", ""},
      {"data.test_limit", ""},
      {"data.size", "16"},
      {"data.train_size", "600"},
      {"data.test_size", "300"},
      {"data.seed", "1"},
      {"data.batch_size", "64"},
      {"data.augment", "on"},
      {"data.mean", ""},
      {"data.std", ""},
      {"train.epochs", "30"},
      {"train.lr", "0.1"},
      {"train.schedule", "step"},
      {"train.milestones", "9,18,24"},
      {"train.factor", "0.2"},
      {"train.lr_min", "0"},
      {"train.momentum", "0.9"},
      {"train.wd", "0.0005"},
      {"train.seed", "1"},
      {"train.eval_every", "1"},
      {"reg.method", "none"},
      {"reg.t", "0.2"},
      {"reg.p", "0.9"},
      {"reg.q", "0.4"},
      {"reg.score_mode", "auto"},
      {"reg.placement", "all"},
      {"reg.curriculum_start", ""},
      {"reg.curriculum_end", ""},
  };
  return defaults;
}

ExperimentConfig resolve(const KeyValues& kv) {
  const Reader r(kv);
  ExperimentConfig c;

  c.model.kind = r.with_key("model.kind", [](const std::string& v) { return parse_model_kind(v); });
  c.model.depth = r.integer("model.depth");
  c.model.width = r.integer("model.width");
  c.model.num_classes = r.integer("model.classes");
  const std::string& head = r.raw("model.head");
  if (head == "gap") {
    c.model.head = HeadKind::GlobalAvgPool;
  } else if (head == "flatten") {
    c.model.head = HeadKind::Flatten;
  } else {
    bad_value("model.head", head, "gap or flatten");
  }
  c.model.hook_position = r.with_key(
      "model.hook_position", [](const std::string& v) { return parse_hook_position(v); });
  const std::string& precision = r.raw("model.precision");
  if (precision == "f32") {
    c.precision = Precision::Float32;
  } else if (precision == "f64") {
    c.precision = Precision::Float64;
  } else {
    bad_value("model.precision", precision, "f32 or f64");
  }

  const std::string& kind = r.raw("data.kind");
  if (kind == "synthetic") {
    c.data.kind = DataKind::Synthetic;
  } else if (kind == "cifar_binary") {
    c.data.kind = DataKind::CifarBinary;
  } else {
    bad_value("data.kind", kind, "synthetic or cifar_binary");
  }
  c.data.path = r.raw("data.path");
  c.data.test_path = r.raw("data.test_path");
  c.data.limit = r.optional_count("data.limit");
  c.data.test_limit = r.optional_count("data.test_limit");
  c.data.train_size = r.integer("data.train_size");
  c.data.test_size = r.integer("data.test_size");
  c.data.seed = r.integer("data.seed");
  const std::size_t size = r.integer("data.size");
  c.model.height = c.model.width_px = size;
  c.model.in_channels = 3;
  if (c.data.kind == DataKind::CifarBinary) {
    if (c.data.path.empty()) throw ConfigError("data.path: required for data.kind = cifar_binary");
    if (size != 32) throw ConfigError("data.size: CIFAR images are 32x32, got " + std::to_string(size));
  }
  const auto mean = r.reals("data.mean");
  const auto stddev = r.reals("data.std");
  if (mean.size() != stddev.size()) {
    throw ConfigError("data.mean and data.std must have the same number of entries");
  }
  if (!mean.empty()) {
    if (mean.size() != 3) throw ConfigError("data.mean: expected 3 per-channel values");
    for (double s : stddev) {
      if (!(s > 0)) throw ConfigError("data.std: entries must be positive");
    }
    c.data.normalization = Normalization{mean, stddev};
  }

  c.train.epochs = r.integer("train.epochs");
  c.train.lr_init = r.real("train.lr");
  c.train.schedule =
      r.with_key("train.schedule", [](const std::string& v) { return parse_lr_schedule(v); });
  c.train.milestones = r.counts("train.milestones");
  c.train.step_factor = r.real("train.factor");
  c.train.lr_min = r.real("train.lr_min");
  c.train.momentum = r.real("train.momentum");
  c.train.weight_decay = r.real("train.wd");
  c.train.seed = r.integer("train.seed");
  c.train.eval_every = r.integer("train.eval_every");
  c.train.batch_size = r.integer("data.batch_size");
  c.train.augment.enabled = r.flag("data.augment");

  c.reg.method = r.with_key("reg.method", [](const std::string& v) { return parse_method(v); });
  c.reg.top_rate = r.real("reg.t");
  c.reg.retain_rate = r.real("reg.p");
  c.reg.half_width = r.real("reg.q");
  const std::string& score = r.raw("reg.score_mode");
  if (score != "auto") {
    c.reg.score_mode =
        r.with_key("reg.score_mode", [](const std::string& v) { return parse_score_mode(v); });
  }
  c.reg.placement = split_list(r.raw("reg.placement"));
  const bool has_start = !r.raw("reg.curriculum_start").empty();
  const bool has_end = !r.raw("reg.curriculum_end").empty();
  if (has_start != has_end) {
    throw ConfigError("reg.curriculum_start and reg.curriculum_end must be set together");
  }
  if (has_start) c.reg.curriculum = Curriculum{r.real("reg.curriculum_start"), r.real("reg.curriculum_end")};

  c.model.validate();
  c.train.validate();
  try {
    c.reg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("reg: ") + e.what());
  }
  return c;
}

void write_config(std::ostream& out, const KeyValues& kv) {
  for (const auto& [key, def] : default_values()) {
    auto it = kv.values().find(key);
    out << key << " = " << (it != kv.values().end() ? it->second : def) << '\n';
  }
}

}  // namespace sscale::cli
