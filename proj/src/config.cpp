#include "divco/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "divco/error.hpp"

namespace divco {

using nlohmann::json;

std::string to_string(OptTask task) { return task == OptTask::kPaired ? "paired" : "none"; }

namespace {

OptTask opt_task_from_string(const std::string& s) {
  if (s == "none") return OptTask::kNone;
  if (s == "paired") return OptTask::kPaired;
  throw ConfigError("unknown opt_task '" + s + "' (expected none or paired)");
}

std::string to_string(ColorBy c) { return c == ColorBy::kMode ? "mode" : "class"; }

ColorBy color_by_from_string(const std::string& s) {
  if (s == "class") return ColorBy::kClass;
  if (s == "mode") return ColorBy::kMode;
  throw ConfigError("unknown color_by '" + s + "' (expected class or mode)");
}

// Walks one JSON object, consuming known keys and rejecting the rest.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(fmt::format("{}: expected an object", label()));
  }

  // Rejects keys that no get()/child() call asked for.
  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError(fmt::format("unknown key '{}{}'", prefix(), key));
      }
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = read<T>(*it, key);
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("'{}{}': {}", prefix(), key, e.what()));
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  template <typename T>
  T read(const json& v, const char* key) {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(fmt::format("'{}{}' must be a number", prefix(), key));
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(fmt::format("'{}{}' must be a non-negative integer", prefix(), key));
      }
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(fmt::format("'{}{}' must be true or false", prefix(), key));
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(fmt::format("'{}{}' must be a string", prefix(), key));
      return v.get<std::string>();
    } else {
      return v.get<T>();
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
std::vector<T> read_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(fmt::format("'{}' must be a list", path));
  std::vector<T> out;
  for (const auto& e : v) {
    if constexpr (std::is_same_v<T, double>) {
      if (!e.is_number()) throw ConfigError(fmt::format("'{}' must contain numbers", path));
    } else {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
        throw ConfigError(fmt::format("'{}' must contain non-negative integers", path));
      }
    }
    out.push_back(e.get<T>());
  }
  return out;
}

void train_from_json(const json& j, TrainConfig& c) {
  Section s(j, "train");
  std::string mode = losses::to_string(c.mode);
  std::string gen_loss = losses::to_string(c.generator_loss);
  std::string act = models::to_string(c.hidden_activation);
  std::string opt = to_string(c.opt_task);
  s.get("mode", mode);
  s.get("lambda_contra", c.lambda_contra);
  s.get("lambda_opt", c.lambda_opt);
  s.get("tau", c.tau);
  s.get("radius", c.radius);
  s.get("num_negatives", c.num_negatives);
  s.get("latent_dim", c.latent_dim);
  s.get("batch_size", c.batch_size);
  s.get("d_steps_per_g_step", c.d_steps_per_g_step);
  s.get("total_iters", c.total_iters);
  s.get("lr", c.adam.lr);
  s.get("beta1", c.adam.beta1);
  s.get("beta2", c.adam.beta2);
  s.get("adam_eps", c.adam.eps);
  s.get("seed", c.seed);
  s.get("snapshot_every", c.snapshot_every);
  s.get("generator_loss", gen_loss);
  s.get("contra_updates_encoder", c.contra_updates_encoder);
  if (const json* g = s.child("g_hidden")) c.g_hidden = read_list<std::size_t>(*g, "train.g_hidden");
  if (const json* d = s.child("d_hidden")) c.d_hidden = read_list<std::size_t>(*d, "train.d_hidden");
  s.get("hidden_activation", act);
  s.get("max_retries", c.max_retries);
  s.get("mode_seeking_eps", c.mode_seeking_eps);
  s.get("opt_task", opt);
  s.finish();
  c.mode = losses::loss_mode_from_string(mode);
  c.generator_loss = losses::generator_loss_from_string(gen_loss);
  c.hidden_activation = models::activation_from_string(act);
  c.opt_task = opt_task_from_string(opt);
}

void eval_from_json(const json& j, EvalSettings& e) {
  Section s(j, "eval");
  s.get("bins", e.bins);
  s.get("alpha", e.alpha);
  s.get("coverage_threshold", e.coverage_threshold);
  s.get("samples_per_class", e.samples_per_class);
  s.get("real_samples_per_class", e.real_samples_per_class);
  s.get("kmeans_iters", e.kmeans_iters);
  if (const json* seed = s.child("seed")) {
    if (seed->is_null()) {
      e.seed.reset();
    } else if (seed->is_number_integer() && seed->get<std::int64_t>() >= 0) {
      e.seed = seed->get<std::uint64_t>();
    } else {
      throw ConfigError("'eval.seed' must be a non-negative integer or null");
    }
  }
  s.finish();
}

void sweep_from_json(const json& j, SweepAxes& a) {
  Section s(j, "sweep");
  if (const json* v = s.child("lambda_contra")) a.lambda_contra = read_list<double>(*v, "sweep.lambda_contra");
  if (const json* v = s.child("tau")) a.tau = read_list<double>(*v, "sweep.tau");
  if (const json* v = s.child("radius")) a.radius = read_list<double>(*v, "sweep.radius");
  s.finish();
}

void figure_from_json(const json& j, FigureSettings& f) {
  Section s(j, "figure");
  std::string color = to_string(f.color_by);
  s.get("points_per_panel", f.points_per_panel);
  s.get("color_by", color);
  s.finish();
  f.color_by = color_by_from_string(color);
}

}  // namespace

void TrainConfig::validate() const {
  weights().validate();
  adam.validate();
  if (total_iters < 1) throw ConfigError("train.total_iters must be >= 1");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (d_steps_per_g_step < 1) throw ConfigError("train.d_steps_per_g_step must be >= 1");
  if (num_negatives < 1) throw ConfigError("train.num_negatives must be >= 1");
  if (latent_dim < 1) throw ConfigError("train.latent_dim must be >= 1");
  if (snapshot_every < 1) throw ConfigError("train.snapshot_every must be >= 1");
  if (max_retries < 1) throw ConfigError("train.max_retries must be >= 1");
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw ConfigError("train.radius must be >= 0");
  if (!(mode_seeking_eps > 0.0)) throw ConfigError("train.mode_seeking_eps must be > 0");
  if (g_hidden.empty()) throw ConfigError("train.g_hidden needs at least one width");
  if (d_hidden.size() < 2) throw ConfigError("train.d_hidden needs at least two widths");
  if (lambda_opt > 0.0 && opt_task == OptTask::kNone) {
    throw ConfigError("train.lambda_opt > 0 requires train.opt_task = paired");
  }
}

losses::LossWeights TrainConfig::weights() const {
  return {lambda_contra, lambda_opt, tau, mode};
}

void EvalSettings::validate() const {
  if (bins < 2) throw ConfigError("eval.bins must be >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("eval.alpha must be in (0, 1)");
  if (!(coverage_threshold >= 0.0 && coverage_threshold <= 1.0)) {
    throw ConfigError("eval.coverage_threshold must be in [0, 1]");
  }
  if (samples_per_class < 1) throw ConfigError("eval.samples_per_class must be >= 1");
  if (real_samples_per_class < 1) throw ConfigError("eval.real_samples_per_class must be >= 1");
  if (kmeans_iters < 1) throw ConfigError("eval.kmeans_iters must be >= 1");
}

void ExperimentConfig::validate() const {
  train.validate();
  gmm.validate();
  eval.validate();
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (figure.points_per_panel < 1) throw ConfigError("figure.points_per_panel must be >= 1");
  if (eval.bins > eval.real_samples_per_class * gmm.num_classes()) {
    throw ConfigError("eval.bins exceeds the number of real evaluation samples");
  }
}

json to_json(const TrainConfig& c) {
  return json{
      {"mode", losses::to_string(c.mode)},
      {"lambda_contra", c.lambda_contra},
      {"lambda_opt", c.lambda_opt},
      {"tau", c.tau},
      {"radius", c.radius},
      {"num_negatives", c.num_negatives},
      {"latent_dim", c.latent_dim},
      {"batch_size", c.batch_size},
      {"d_steps_per_g_step", c.d_steps_per_g_step},
      {"total_iters", c.total_iters},
      {"lr", c.adam.lr},
      {"beta1", c.adam.beta1},
      {"beta2", c.adam.beta2},
      {"adam_eps", c.adam.eps},
      {"seed", c.seed},
      {"snapshot_every", c.snapshot_every},
      {"generator_loss", losses::to_string(c.generator_loss)},
      {"contra_updates_encoder", c.contra_updates_encoder},
      {"g_hidden", c.g_hidden},
      {"d_hidden", c.d_hidden},
      {"hidden_activation", models::to_string(c.hidden_activation)},
      {"max_retries", c.max_retries},
      {"mode_seeking_eps", c.mode_seeking_eps},
      {"opt_task", to_string(c.opt_task)},
  };
}

json to_json(const EvalSettings& e) {
  json j{
      {"bins", e.bins},
      {"alpha", e.alpha},
      {"coverage_threshold", e.coverage_threshold},
      {"samples_per_class", e.samples_per_class},
      {"real_samples_per_class", e.real_samples_per_class},
      {"kmeans_iters", e.kmeans_iters},
  };
  j["seed"] = e.seed ? json(*e.seed) : json(nullptr);
  return j;
}

json to_json(const synth::GmmSpec& g) {
  json classes = json::array();
  for (const auto& modes : g.classes) {
    json list = json::array();
    for (const auto& m : modes) {
      list.push_back({{"mean", {m.mean[0], m.mean[1]}}, {"stddev", m.stddev}, {"weight", m.weight}});
    }
    classes.push_back(list);
  }
  return json{{"classes", classes}};
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"train", to_json(c.train)},
      {"gmm", to_json(c.gmm)},
      {"eval", to_json(c.eval)},
      {"sweep",
       {{"lambda_contra", c.sweep.lambda_contra}, {"tau", c.sweep.tau}, {"radius", c.sweep.radius}}},
      {"figure",
       {{"points_per_panel", c.figure.points_per_panel}, {"color_by", to_string(c.figure.color_by)}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
  };
}

synth::GmmSpec gmm_from_json(const json& doc) {
  if (doc.is_string()) {
    if (doc.get<std::string>() == "default") return synth::default_toy_spec();
    throw ConfigError("'gmm' must be \"default\" or an object with 'classes'");
  }
  Section s(doc, "gmm");
  const json* classes = s.child("classes");
  if (classes == nullptr || !classes->is_array()) throw ConfigError("'gmm.classes' must be a list");
  synth::GmmSpec spec;
  for (std::size_t c = 0; c < classes->size(); ++c) {
    const json& modes = (*classes)[c];
    if (!modes.is_array()) throw ConfigError(fmt::format("'gmm.classes[{}]' must be a list", c));
    std::vector<synth::GaussianMode> list;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      Section ms(modes[m], fmt::format("gmm.classes[{}][{}]", c, m));
      synth::GaussianMode mode;
      std::vector<double> mean{0.0, 0.0};
      if (const json* mj = ms.child("mean")) mean = read_list<double>(*mj, ms.prefix() + "mean");
      if (mean.size() != 2) throw ConfigError(fmt::format("'{}mean' must have 2 entries", ms.prefix()));
      mode.mean = {mean[0], mean[1]};
      ms.get("stddev", mode.stddev);
      ms.get("weight", mode.weight);
      ms.finish();
      list.push_back(mode);
    }
    spec.classes.push_back(std::move(list));
  }
  return spec;
}

ExperimentConfig experiment_from_json(const json& doc) {
  ExperimentConfig c;
  {
    Section s(doc, "");
    if (const json* t = s.child("train")) train_from_json(*t, c.train);
    if (const json* g = s.child("gmm")) c.gmm = gmm_from_json(*g);
    if (const json* e = s.child("eval")) eval_from_json(*e, c.eval);
    if (const json* w = s.child("sweep")) sweep_from_json(*w, c.sweep);
    if (const json* f = s.child("figure")) figure_from_json(*f, c.figure);
    if (const json* seeds = s.child("seeds")) c.seeds = read_list<std::uint64_t>(*seeds, "seeds");
    s.get("output_dir", c.output_dir);
    s.finish();
  }
  c.validate();
  return c;
}

json parse_config_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    // Recover line/column from the byte offset.
    std::size_t line = 1, column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(fmt::format("{}:{}:{}: parse error: {}", source, line, column, e.what()));
  }
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(fmt::format("override '{}' is not of the form key=value", assignment));
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }

  std::vector<std::string> path;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    path.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  static const std::set<std::string> kTopLevel{"train", "gmm", "eval", "sweep",
                                               "figure", "seeds", "output_dir"};
  if (path.size() == 1 && !kTopLevel.contains(path[0])) path.insert(path.begin(), "train");

  json* node = &doc;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw ConfigError(fmt::format("override '{}': '{}' is not a section", key, path[i]));
    node = &(*node)[path[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError(fmt::format("override '{}' does not name a key", key));
  (*node)[path.back()] = value;
}

ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = read_config_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return experiment_from_json(doc);
}

}  // namespace divco
