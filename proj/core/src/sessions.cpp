#include "semkd/sessions.hpp"

#include <sstream>
#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "semkd/errors.hpp"
#include "semkd/rng.hpp"

namespace semkd {

const char* to_string(Protocol p) { return p == Protocol::fscil ? "fscil" : "dfsl"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "fscil") return Protocol::fscil;
  if (s == "dfsl") return Protocol::dfsl;
  throw ConfigError("unknown protocol '" + s + "' (expected fscil or dfsl)");
}

const TaskSpec& SessionStream::task(std::size_t t) const {
  if (t < 1 || t > tasks.size()) {
    throw IndexError("task index " + std::to_string(t) + " outside [1, " +
                     std::to_string(tasks.size()) + "]");
  }
  return tasks[t - 1];
}

namespace {

ClassId synthetic_name(std::size_t c) {
  std::string digits = std::to_string(c);
  return ClassId{"class_" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits};
}

Vec gaussian(Eigen::Index dim, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  for (Eigen::Index k = 0; k < dim; ++k) v[k] = scale * normal(rng);
  return v;
}

std::vector<Sample> draw_samples(const Vec& mean, const ClassId& label, std::size_t count,
                                 double spread, std::size_t task_index, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(Sample{mean + gaussian(mean.size(), spread, rng), label, task_index});
  }
  return out;
}

void append(std::vector<Sample>& dst, std::vector<Sample>&& src) {
  dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
}

}  // namespace

SessionStream build_synthetic_stream(const SyntheticStreamConfig& cfg) {
  if (cfg.num_base_classes == 0 || cfg.num_sessions == 0 || cfg.feature_dim == 0 ||
      cfg.samples_per_base_class == 0 || cfg.test_per_class == 0) {
    throw ConfigError("synthetic stream counts must be positive");
  }
  if (cfg.num_sessions > 1 && (cfg.way == 0 || cfg.shot == 0)) {
    throw ConfigError("way and shot must be positive when novel sessions exist");
  }
  if (cfg.num_groups == 0) throw ConfigError("num_groups must be positive");
  if (cfg.blob_spread < 0.0 || cfg.semantic_noise < 0.0) {
    throw ConfigError("spreads must be non-negative");
  }
  if (cfg.protocol == Protocol::dfsl) {
    if (cfg.num_sessions != 2) throw ConfigError("DFSL streams have exactly two tasks");
    if (cfg.novel_pool_classes < cfg.way) {
      throw ConfigError("DFSL novel pool smaller than the episode way");
    }
    if (cfg.novel_pool_train_per_class < cfg.shot) {
      throw ConfigError("DFSL novel pool has fewer train samples than shot");
    }
  }

  const std::size_t novel_classes = cfg.protocol == Protocol::dfsl
                                        ? cfg.novel_pool_classes
                                        : cfg.way * (cfg.num_sessions - 1);
  const std::size_t total = cfg.num_base_classes + novel_classes;
  const auto dim = static_cast<Eigen::Index>(cfg.feature_dim);

  Rng mean_rng(derive_seed(cfg.seed, "synthetic.means"));
  std::vector<Vec> groups;
  for (std::size_t g = 0; g < cfg.num_groups; ++g) {
    groups.push_back(gaussian(dim, cfg.class_separation, mean_rng));
  }
  std::vector<Vec> means;
  std::vector<ClassId> names;
  for (std::size_t c = 0; c < total; ++c) {
    means.push_back(groups[c % cfg.num_groups] +
                    gaussian(dim, cfg.group_spread * cfg.class_separation, mean_rng));
    names.push_back(synthetic_name(c));
  }

  SessionStream stream{
      .tasks = {},
      .semantics = synthesize_semantics(means, cfg.semantic_noise,
                                        derive_seed(cfg.seed, "synthetic.semantics"), names),
      .protocol = cfg.protocol,
      .input_shape = InputShape{cfg.feature_dim, 1, 1},
      .novel_pool = std::nullopt};

  Rng sample_rng(derive_seed(cfg.seed, "synthetic.samples"));
  TaskSpec base;
  base.index = 1;
  base.way = cfg.num_base_classes;
  base.shot = cfg.samples_per_base_class;
  for (std::size_t c = 0; c < cfg.num_base_classes; ++c) {
    base.classes.push_back(names[c]);
    append(base.train, draw_samples(means[c], names[c], cfg.samples_per_base_class,
                                    cfg.blob_spread, 1, sample_rng));
    append(base.test,
           draw_samples(means[c], names[c], cfg.test_per_class, cfg.blob_spread, 1, sample_rng));
  }
  stream.tasks.push_back(std::move(base));

  if (cfg.protocol == Protocol::dfsl) {
    SessionStream::NovelPool pool;
    for (std::size_t c = cfg.num_base_classes; c < total; ++c) {
      pool.classes.push_back(names[c]);
      append(pool.train, draw_samples(means[c], names[c], cfg.novel_pool_train_per_class,
                                      cfg.blob_spread, 2, sample_rng));
      append(pool.test, draw_samples(means[c], names[c], cfg.test_per_class, cfg.blob_spread, 2,
                                     sample_rng));
    }
    stream.novel_pool = std::move(pool);
    return stream;
  }

  std::size_t next = cfg.num_base_classes;
  for (std::size_t t = 2; t <= cfg.num_sessions; ++t) {
    TaskSpec task;
    task.index = t;
    task.way = cfg.way;
    task.shot = cfg.shot;
    for (std::size_t w = 0; w < cfg.way; ++w, ++next) {
      task.classes.push_back(names[next]);
      append(task.train,
             draw_samples(means[next], names[next], cfg.shot, cfg.blob_spread, t, sample_rng));
      append(task.test, draw_samples(means[next], names[next], cfg.test_per_class,
                                     cfg.blob_spread, t, sample_rng));
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

namespace {

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DatasetError("missing class folder " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Vec load_image(const std::filesystem::path& path, const ImageOptions& opt) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DatasetError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  const int side = static_cast<int>(opt.image_size);
  cv::Mat resized;
  cv::resize(rgb, resized, cv::Size(side, side), 0, 0, cv::INTER_AREA);

  const std::size_t hw = opt.image_size * opt.image_size;
  Vec out(static_cast<Eigen::Index>(3 * hw));
  for (int y = 0; y < side; ++y) {
    const auto* row = resized.ptr<cv::Vec3b>(y);
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = row[x][c] / 255.0;
        out[static_cast<Eigen::Index>(c * hw + static_cast<std::size_t>(y) * opt.image_size +
                                      static_cast<std::size_t>(x))] =
            (v - opt.channel_mean[c]) / opt.channel_std[c];
      }
    }
  }
  return out;
}

std::size_t infer_semantic_dim(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open semantic file " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream tokens(line);
    std::string tok;
    std::size_t count = 0;
    while (tokens >> tok) {
      if (count == 0 && tok.front() == '#') break;
      ++count;
    }
    if (count > 1) return count - 1;
  }
  throw ParseError("semantic file " + path.string() + " has no records");
}

}  // namespace

SessionStream build_image_stream(const ImageStreamConfig& cfg) {
  if (cfg.image.channel_mean.size() != 3 || cfg.image.channel_std.size() != 3) {
    throw ConfigError("image normalization needs three channel constants");
  }
  if (cfg.image.image_size < 8) throw ConfigError("image_size must be at least 8");
  if (cfg.shot == 0 || cfg.way == 0) throw ConfigError("way and shot must be positive");

  nlohmann::json split;
  {
    std::ifstream in(cfg.split_spec);
    if (!in) throw DatasetError("cannot open split spec " + cfg.split_spec.string());
    try {
      in >> split;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("split spec " + cfg.split_spec.string() + ": " + e.what());
    }
  }
  std::vector<std::string> base_names;
  std::vector<std::vector<std::string>> session_names;
  try {
    base_names = split.at("base").get<std::vector<std::string>>();
    if (split.contains("sessions")) {
      session_names = split.at("sessions").get<std::vector<std::vector<std::string>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("split spec " + cfg.split_spec.string() + ": " + e.what());
  }
  if (base_names.empty()) throw DatasetError("split spec lists no base classes");
  for (const auto& s : session_names) {
    if (s.size() != cfg.way) {
      throw ConfigError("split session has " + std::to_string(s.size()) + " classes, way is " +
                        std::to_string(cfg.way));
    }
  }

  const auto sem_path =
      cfg.semantics_file.empty() ? cfg.root / "semantics.txt" : cfg.semantics_file;
  const std::size_t sem_dim =
      cfg.semantic_dim > 0 ? cfg.semantic_dim : infer_semantic_dim(sem_path);

  SessionStream stream{.tasks = {},
                       .semantics = load_semantics(sem_path, sem_dim),
                       .protocol = Protocol::fscil,
                       .input_shape = InputShape{3, cfg.image.image_size, cfg.image.image_size},
                       .novel_pool = std::nullopt};

  Rng rng(derive_seed(cfg.seed, "image.split"));

  auto load_class = [&](const std::string& name, std::size_t task_index, std::size_t shot,
                        TaskSpec& task) {
    auto files = list_images(cfg.root / name);
    std::shuffle(files.begin(), files.end(), rng);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(files.size()) *
                                                 cfg.image.test_fraction);
    const std::size_t n_train_avail = files.size() - n_test;
    if (shot > 0 && n_train_avail < shot) {
      throw DatasetError("class '" + name + "' has " + std::to_string(n_train_avail) +
                         " training images, fewer than shot=" + std::to_string(shot));
    }
    if (n_train_avail == 0) throw DatasetError("class '" + name + "' has no training images");
    const std::size_t n_train = shot > 0 ? shot : n_train_avail;
    ClassId id{name};
    for (std::size_t i = 0; i < n_train; ++i) {
      task.train.push_back(Sample{load_image(files[i], cfg.image), id, task_index});
    }
    for (std::size_t i = n_train_avail; i < files.size(); ++i) {
      task.test.push_back(Sample{load_image(files[i], cfg.image), id, task_index});
    }
    task.classes.push_back(std::move(id));
  };

  TaskSpec base;
  base.index = 1;
  base.way = base_names.size();
  for (const auto& name : base_names) load_class(name, 1, 0, base);
  stream.tasks.push_back(std::move(base));

  for (std::size_t s = 0; s < session_names.size(); ++s) {
    TaskSpec task;
    task.index = s + 2;
    task.way = cfg.way;
    task.shot = cfg.shot;
    for (const auto& name : session_names[s]) load_class(name, task.index, cfg.shot, task);
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

std::vector<Sample> joint_test_set(const SessionStream& stream, std::size_t upto) {
  if (upto < 1 || upto > stream.tasks.size()) {
    throw IndexError("session " + std::to_string(upto) + " outside [1, " +
                     std::to_string(stream.tasks.size()) + "]");
  }
  std::vector<Sample> out;
  for (std::size_t t = 0; t < upto; ++t) {
    out.insert(out.end(), stream.tasks[t].test.begin(), stream.tasks[t].test.end());
  }
  return out;
}

TaskSpec sample_dfsl_episode(const SessionStream& stream, std::size_t way, std::size_t shot,
                             std::size_t queries_per_class, std::uint64_t seed) {
  if (stream.protocol != Protocol::dfsl || !stream.novel_pool) {
    throw ProtocolError("DFSL episodes need a DFSL stream with a novel pool");
  }
  const auto& pool = *stream.novel_pool;
  if (way == 0 || shot == 0 || way > pool.classes.size()) {
    throw ConfigError("invalid DFSL episode way/shot");
  }
  Rng rng(seed);
  std::vector<std::size_t> order(pool.classes.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(way);
  std::sort(order.begin(), order.end());

  TaskSpec task;
  task.index = 2;
  task.way = way;
  task.shot = shot;
  for (auto idx : order) {
    const auto& id = pool.classes[idx];
    task.classes.push_back(id);

    auto pick = [&](const std::vector<Sample>& from, std::size_t count, std::vector<Sample>& to,
                    const char* what) {
      std::vector<const Sample*> candidates;
      for (const auto& s : from) {
        if (s.label == id) candidates.push_back(&s);
      }
      if (candidates.size() < count) {
        throw DatasetError("novel class '" + id.name() + "' has too few " + what + " samples");
      }
      std::shuffle(candidates.begin(), candidates.end(), rng);
      for (std::size_t i = 0; i < count; ++i) {
        Sample s = *candidates[i];
        s.task_index = 2;
        to.push_back(std::move(s));
      }
    };
    pick(pool.train, shot, task.train, "train");
    pick(pool.test, queries_per_class, task.test, "query");
  }
  return task;
}

void validate_stream(const SessionStream& stream) {
  std::unordered_set<ClassId> seen;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const auto& task = stream.tasks[t];
    if (task.index != t + 1) throw ProtocolError("task indices must be consecutive from 1");
    std::unordered_set<ClassId> own(task.classes.begin(), task.classes.end());
    for (const auto& c : task.classes) {
      if (!seen.insert(c).second) {
        throw DatasetError("class '" + c.name() + "' appears in more than one task");
      }
      if (!stream.semantics.contains(c)) {
        throw DatasetError("class '" + c.name() + "' has no semantic vector");
      }
    }
    if (task.index > 1 && task.train.size() != task.way * task.shot) {
      throw DatasetError("novel task " + std::to_string(task.index) + " must have way*shot samples");
    }
    for (const auto* set : {&task.train, &task.test}) {
      for (const auto& s : *set) {
        if (!own.contains(s.label) || s.task_index != task.index) {
          throw DatasetError("sample label outside its task's class set");
        }
        if (static_cast<std::size_t>(s.input.size()) != stream.input_shape.size()) {
          throw ShapeError("sample input does not match stream input shape");
        }
      }
    }
  }
}

}  // namespace semkd
