#include "semkd/config.hpp"

#include <cstdio>

#include "semkd/rng.hpp"
#include "semkd/toml.hpp"

namespace semkd {

using nlohmann::json;

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out = "invalid configuration:";
  for (const auto& l : lines) out += "\n  - " + l;
  return out;
}

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<std::string> diagnostics)
    : ConfigError(join_lines(diagnostics)), diagnostics_(std::move(diagnostics)) {}

json default_config() {
  return json{
      {"seed", 0},
      {"output_dir", "runs/default"},
      {"dataset",
       {{"kind", "synthetic"},
        {"num_base_classes", 20},
        {"num_sessions", 5},
        {"way", 5},
        {"shot", 5},
        {"feature_dim", 16},
        {"samples_per_base_class", 50},
        {"test_per_class", 20},
        {"blob_spread", 1.0},
        {"class_separation", 4.0},
        {"num_groups", 4},
        {"group_spread", 0.5},
        {"semantic_noise", 0.1},
        {"novel_pool_classes", 20},
        {"novel_pool_train_per_class", 20},
        {"root", ""},
        {"split_spec", ""},
        {"semantics_file", ""},
        {"semantic_dim", 0},
        {"image_size", 32},
        {"channel_mean", {0.5, 0.5, 0.5}},
        {"channel_std", {0.25, 0.25, 0.25}},
        {"test_fraction", 0.2}}},
      {"model",
       {{"backbone", "mlp"},
        {"u", 32},
        {"num_superclasses", 3},
        {"attention_hidden", 64},
        {"mapping_hidden", {512, 728}},
        {"backbone_hidden", {64}},
        {"conv_channels", {8, 16, 32}}}},
      {"train",
       {{"learning_rate", 0.001},
        {"batch_size", 128},
        {"optimizer", "adam"},
        {"grad_clip", 0.0},
        {"attention_loss_form", "nll"},
        {"kmeans_max_iter", 100},
        {"kmeans_tol", 1e-9},
        {"epochs_per_phase", {{"backbone", 100}, {"embeddings", 50}, {"base", 50}, {"novel", 40}}},
        {"loss", {{"lambda1", 0.7}, {"lambda2", 1.1}, {"lambda3", 0.6}, {"tau", 2.0}}}}},
      {"eval", {{"protocol", "fscil"}, {"episodes", 600}, {"queries_per_class", 15}}},
      // Informational: recomputed from `seed` on every resolve.
      {"derived_seeds", json::object()}};
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigValidationError({"override '" + assignment + "' is not of the form key=value"});
  }
  const std::string key = assignment.substr(0, eq);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigValidationError({"override key '" + key + "' has an empty part"});
    if (dot == std::string::npos) {
      (*node)[part] = toml::parse_value(assignment.substr(eq + 1));
      return;
    }
    auto& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigValidationError({"override key '" + key + "' crosses a value"});
    node = &next;
    start = dot + 1;
  }
}

namespace {

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number_float()) return "float";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "table";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_number_float()) return v.is_number();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& x : v) {
      if (!compatible(def.front(), x)) return false;
    }
    return true;
  }
  return std::string(type_name(def)) == type_name(v);
}

void merge(json& target, const json& user, const std::string& prefix,
           std::vector<std::string>& diag) {
  if (!user.is_object()) {
    diag.push_back((prefix.empty() ? "document" : prefix) + ": expected a table");
    return;
  }
  for (const auto& [k, v] : user.items()) {
    const auto path = prefix.empty() ? k : prefix + "." + k;
    if (!target.contains(k)) {
      diag.push_back(path + ": unknown key");
      continue;
    }
    auto& slot = target[k];
    if (k == "derived_seeds" && prefix.empty()) continue;
    if (slot.is_object()) {
      merge(slot, v, path, diag);
    } else if (!compatible(slot, v)) {
      diag.push_back(path + ": expected " + type_name(slot) + ", got " + type_name(v));
    } else {
      slot = slot.is_number_float() ? json(v.get<double>()) : v;
    }
  }
}

struct Checker {
  const json& doc;
  std::vector<std::string>& diag;

  const json& at(const std::string& dotted) const {
    const json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = dotted.find('.', start);
      node = &node->at(dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
      if (dot == std::string::npos) return *node;
      start = dot + 1;
    }
  }

  std::size_t positive(const std::string& key) const {
    const auto v = at(key).get<std::int64_t>();
    if (v <= 0) diag.push_back(key + ": must be positive");
    return v > 0 ? static_cast<std::size_t>(v) : 1;
  }

  std::size_t non_negative(const std::string& key) const {
    const auto v = at(key).get<std::int64_t>();
    if (v < 0) diag.push_back(key + ": must be non-negative");
    return v > 0 ? static_cast<std::size_t>(v) : 0;
  }

  double real(const std::string& key, double lo, bool lo_open) const {
    const auto v = at(key).get<double>();
    if (lo_open ? !(v > lo) : !(v >= lo)) {
      diag.push_back(key + ": must be " + (lo_open ? "> " : ">= ") + std::to_string(lo));
    }
    return v;
  }

  std::vector<std::size_t> widths(const std::string& key, bool allow_empty) const {
    std::vector<std::size_t> out;
    for (const auto& x : at(key)) {
      const auto v = x.get<std::int64_t>();
      if (v <= 0) diag.push_back(key + ": widths must be positive");
      out.push_back(v > 0 ? static_cast<std::size_t>(v) : 1);
    }
    if (!allow_empty && out.empty()) diag.push_back(key + ": must not be empty");
    return out;
  }

  template <class Parse>
  auto choice(const std::string& key, Parse parse) const -> decltype(parse(std::string{})) {
    try {
      return parse(at(key).get<std::string>());
    } catch (const ConfigError& e) {
      diag.push_back(key + ": " + e.what());
      return decltype(parse(std::string{})){};
    }
  }
};

}  // namespace

ExperimentConfig resolve_config(const json& user) {
  std::vector<std::string> diag;
  json doc = default_config();
  merge(doc, user, "", diag);
  if (!diag.empty()) throw ConfigValidationError(diag);

  Checker c{doc, diag};
  ExperimentConfig cfg;
  const auto seed = doc.at("seed").get<std::int64_t>();
  if (seed < 0) diag.push_back("seed: must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.output_dir = doc.at("output_dir").get<std::string>();
  if (cfg.output_dir.empty()) diag.push_back("output_dir: must not be empty");

  const auto kind = doc.at("dataset").at("kind").get<std::string>();
  if (kind == "synthetic") {
    cfg.dataset = DatasetKind::synthetic;
  } else if (kind == "image") {
    cfg.dataset = DatasetKind::image;
  } else {
    diag.push_back("dataset.kind: expected synthetic or image, got '" + kind + "'");
  }
  cfg.protocol = c.choice("eval.protocol", protocol_from_string);

  const std::uint64_t data_seed = derive_seed(cfg.seed, "dataset");
  const std::uint64_t train_seed = derive_seed(cfg.seed, "train");

  auto& s = cfg.synthetic;
  s.num_base_classes = c.positive("dataset.num_base_classes");
  s.num_sessions = c.positive("dataset.num_sessions");
  s.way = c.positive("dataset.way");
  s.shot = c.positive("dataset.shot");
  s.feature_dim = c.positive("dataset.feature_dim");
  s.samples_per_base_class = c.positive("dataset.samples_per_base_class");
  s.test_per_class = c.positive("dataset.test_per_class");
  s.blob_spread = c.real("dataset.blob_spread", 0.0, false);
  s.class_separation = c.real("dataset.class_separation", 0.0, true);
  s.num_groups = c.positive("dataset.num_groups");
  s.group_spread = c.real("dataset.group_spread", 0.0, false);
  s.semantic_noise = c.real("dataset.semantic_noise", 0.0, false);
  s.novel_pool_classes = c.positive("dataset.novel_pool_classes");
  s.novel_pool_train_per_class = c.positive("dataset.novel_pool_train_per_class");
  s.protocol = cfg.protocol;
  s.seed = data_seed;

  auto& im = cfg.image;
  im.root = doc.at("dataset").at("root").get<std::string>();
  im.split_spec = doc.at("dataset").at("split_spec").get<std::string>();
  im.semantics_file = doc.at("dataset").at("semantics_file").get<std::string>();
  im.semantic_dim = c.non_negative("dataset.semantic_dim");
  im.way = s.way;
  im.shot = s.shot;
  im.seed = data_seed;
  im.image.image_size = c.positive("dataset.image_size");
  im.image.channel_mean = doc.at("dataset").at("channel_mean").get<std::vector<double>>();
  im.image.channel_std = doc.at("dataset").at("channel_std").get<std::vector<double>>();
  im.image.test_fraction = c.real("dataset.test_fraction", 0.0, false);
  if (im.image.test_fraction >= 1.0) diag.push_back("dataset.test_fraction: must be < 1");
  if (im.image.channel_mean.size() != 3) diag.push_back("dataset.channel_mean: needs 3 values");
  if (im.image.channel_std.size() != 3) diag.push_back("dataset.channel_std: needs 3 values");
  for (double v : im.image.channel_std) {
    if (!(v > 0.0)) diag.push_back("dataset.channel_std: values must be positive");
  }
  if (cfg.dataset == DatasetKind::image) {
    if (cfg.protocol == Protocol::dfsl) diag.push_back("eval.protocol: dfsl needs a synthetic dataset");
    if (im.root.empty() || !std::filesystem::is_directory(im.root)) {
      diag.push_back("dataset.root: directory '" + im.root.string() + "' does not exist");
    }
    if (im.split_spec.empty() || !std::filesystem::is_regular_file(im.split_spec)) {
      diag.push_back("dataset.split_spec: file '" + im.split_spec.string() + "' does not exist");
    }
    const auto sem = im.semantics_file.empty() ? im.root / "semantics.txt" : im.semantics_file;
    if (!std::filesystem::is_regular_file(sem)) {
      diag.push_back("dataset.semantics_file: file '" + sem.string() + "' does not exist");
    }
  }
  if (cfg.protocol == Protocol::dfsl && s.num_sessions != 2) {
    diag.push_back("dataset.num_sessions: dfsl uses exactly 2 tasks");
  }

  auto& m = cfg.model;
  m.backbone = c.choice("model.backbone", backbone_kind_from_string);
  m.u = c.positive("model.u");
  m.num_superclasses = c.positive("model.num_superclasses");
  m.attention_hidden = c.positive("model.attention_hidden");
  m.mapping_hidden = c.widths("model.mapping_hidden", true);
  m.backbone_hidden = c.widths("model.backbone_hidden", true);
  m.conv_channels = c.widths("model.conv_channels", false);
  if (m.backbone == BackboneKind::cnn && cfg.dataset != DatasetKind::image) {
    diag.push_back("model.backbone: cnn needs an image dataset");
  }
  if (m.backbone == BackboneKind::mlp && cfg.dataset == DatasetKind::image) {
    diag.push_back("model.backbone: image datasets need the cnn backbone");
  }
  if (m.backbone == BackboneKind::cnn && m.conv_channels.size() != 3) {
    diag.push_back("model.conv_channels: cnn uses exactly 3 blocks");
  }
  if (cfg.dataset == DatasetKind::synthetic && m.num_superclasses > s.num_base_classes) {
    diag.push_back("model.num_superclasses: exceeds dataset.num_base_classes");
  }

  auto& t = cfg.train;
  t.learning_rate = c.real("train.learning_rate", 0.0, true);
  t.batch_size = c.positive("train.batch_size");
  t.optimizer = c.choice("train.optimizer", optimizer_kind_from_string);
  t.grad_clip = c.real("train.grad_clip", 0.0, false);
  t.loss.attention_form = c.choice("train.attention_loss_form", attention_loss_form_from_string);
  t.kmeans_max_iter = c.positive("train.kmeans_max_iter");
  t.kmeans_tol = c.real("train.kmeans_tol", 0.0, false);
  t.epochs.backbone = c.non_negative("train.epochs_per_phase.backbone");
  t.epochs.embeddings = c.non_negative("train.epochs_per_phase.embeddings");
  t.epochs.base = c.non_negative("train.epochs_per_phase.base");
  t.epochs.novel = c.non_negative("train.epochs_per_phase.novel");
  t.loss.lambda1 = c.real("train.loss.lambda1", 0.0, false);
  t.loss.lambda2 = c.real("train.loss.lambda2", 0.0, false);
  t.loss.lambda3 = c.real("train.loss.lambda3", 0.0, false);
  t.loss.tau = c.real("train.loss.tau", 0.0, true);
  if (t.loss.lambda1 == 0.0 && t.loss.lambda2 == 0.0 && t.loss.lambda3 == 0.0) {
    diag.push_back("train.loss: at least one lambda must be positive");
  }
  t.seed = train_seed;

  cfg.dfsl.episodes = c.positive("eval.episodes");
  cfg.dfsl.queries_per_class = c.positive("eval.queries_per_class");
  cfg.dfsl.way = s.way;
  cfg.dfsl.shot = s.shot;
  if (cfg.protocol == Protocol::dfsl && s.novel_pool_classes < s.way) {
    diag.push_back("dataset.novel_pool_classes: smaller than way");
  }

  if (!diag.empty()) throw ConfigValidationError(diag);

  doc["derived_seeds"] = {{"dataset", data_seed}, {"train", train_seed}};
  cfg.resolved = doc;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigValidationError({"config file '" + path.string() + "' does not exist"});
  }
  json doc;
  try {
    doc = toml::parse_file(path);
  } catch (const ParseError& e) {
    throw ConfigValidationError({e.what()});
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return resolve_config(doc);
}

std::string run_id(const json& resolved) {
  const auto text = resolved.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

SessionStream build_stream(const ExperimentConfig& cfg) {
  if (cfg.dataset == DatasetKind::synthetic) return build_synthetic_stream(cfg.synthetic);
  return build_image_stream(cfg.image);
}

}  // namespace semkd
