#include "semkd/trainer.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>

#include "semkd/errors.hpp"
#include "semkd/rng.hpp"

namespace semkd {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
  if (kmeans_max_iter == 0) throw ConfigError("kmeans_max_iter must be positive");
  loss.validate();
}

std::vector<Vec> extract_features(const ModelState& model, std::span<const Sample> samples) {
  std::vector<Vec> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(backbone_forward(model, s.input));
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

std::vector<std::span<double>> trainable_views(HeadParams& p, const FrozenFlags& frozen) {
  std::vector<std::span<double>> out;
  visit_params(p, [&](Component c, std::span<double> s) {
    if (!frozen.is_frozen(c)) out.push_back(s);
  });
  return out;
}

void zero(HeadParams& p) {
  visit_params(p, [](Component, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
}

/// Softmax cross-entropy of a linear classifier on top of `features`,
/// returning dL/dlogits per sample and the mean loss.
double softmax_ce(const Dense& classifier, const Vec& feature, std::size_t label, Vec* grad_logits) {
  const Vec logits = classifier.apply(feature);
  const double loss = log_sum_exp(logits) - logits[static_cast<Eigen::Index>(label)];
  if (grad_logits) {
    *grad_logits = softmax(logits);
    (*grad_logits)[static_cast<Eigen::Index>(label)] -= 1.0;
  }
  return loss;
}

void train_backbone(RunState& state, const TaskSpec& base, const TrainConfig& cfg,
                    const LossLogger& log) {
  if (cfg.epochs.backbone == 0) return;
  std::map<ClassId, std::size_t> label_of;
  for (std::size_t i = 0; i < base.classes.size(); ++i) label_of[base.classes[i]] = i;

  Rng rng(derive_seed(cfg.seed, "train.backbone"));
  Dense classifier = make_dense(static_cast<Eigen::Index>(state.model.dims.u),
                                static_cast<Eigen::Index>(base.classes.size()), rng);

  Backbone grads = zeros_like(state.model.backbone);
  Dense classifier_grads = zeros_like(classifier);
  std::vector<std::span<double>> params, grad_views;
  visit_params(state.model.backbone, [&](std::span<double> s) { params.push_back(s); });
  visit_params(classifier, [&](std::span<double> s) { params.push_back(s); });
  visit_params(grads, [&](std::span<double> s) { grad_views.push_back(s); });
  visit_params(classifier_grads, [&](std::span<double> s) { grad_views.push_back(s); });
  Optimizer opt(cfg.optimizer, params, cfg.learning_rate, cfg.grad_clip);

  for (std::size_t epoch = 1; epoch <= cfg.epochs.backbone; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch : shuffled_batches(base.train.size(), cfg.batch_size, rng)) {
      for (auto s : grad_views) std::fill(s.begin(), s.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (auto i : batch) {
        const auto& sample = base.train[i];
        std::visit(
            [&](const auto& bb) {
              using T = std::decay_t<decltype(bb)>;
              typename T::Trace trace;
              const Vec g = bb.forward(sample.input, &trace);
              Vec d_logits;
              epoch_loss += softmax_ce(classifier, g, label_of.at(sample.label), &d_logits) /
                            static_cast<double>(base.train.size());
              d_logits *= inv;
              classifier_grads.weight.noalias() += d_logits * g.transpose();
              classifier_grads.bias += d_logits;
              const Vec d_g = classifier.weight.transpose() * d_logits;
              bb.backward(trace, d_g, std::get<T>(grads));
            },
            state.model.backbone);
      }
      opt.step(grad_views);
    }
    if (log) log({"backbone", 1, epoch, epoch_loss, 0.0, 0.0, epoch_loss});
  }
}

/// Each embedding module learns to separate the classes of its own superclass
/// from the frozen global features of that superclass's samples.
void pretrain_embeddings(RunState& state, const TaskSpec& base, std::span<const Vec> features,
                         const TrainConfig& cfg, const LossLogger& log) {
  if (cfg.epochs.embeddings == 0) return;
  const std::size_t n_super = state.model.dims.num_superclasses;
  const auto u = static_cast<Eigen::Index>(state.model.dims.u);

  struct Group {
    std::vector<std::size_t> rows;
    std::map<ClassId, std::size_t> local;
    Dense classifier;
    Dense classifier_grads;
    Dense module_grads;
    std::unique_ptr<Optimizer> opt;
  };
  std::vector<Group> groups(n_super);
  Rng rng(derive_seed(cfg.seed, "train.embeddings"));
  for (const auto& c : base.classes) {
    auto& grp = groups[state.superclasses.at(c)];
    grp.local.emplace(c, grp.local.size());
  }
  for (std::size_t i = 0; i < base.train.size(); ++i) {
    groups[state.superclasses.at(base.train[i].label)].rows.push_back(i);
  }
  for (std::size_t k = 0; k < n_super; ++k) {
    auto& grp = groups[k];
    if (grp.local.size() < 2) continue;  // nothing to discriminate
    grp.classifier = make_dense(u, static_cast<Eigen::Index>(grp.local.size()), rng);
    grp.classifier_grads = zeros_like(grp.classifier);
    grp.module_grads = zeros_like(state.model.head.embeddings[k]);
    std::vector<std::span<double>> params;
    visit_params(state.model.head.embeddings[k], [&](std::span<double> s) { params.push_back(s); });
    visit_params(grp.classifier, [&](std::span<double> s) { params.push_back(s); });
    grp.opt = std::make_unique<Optimizer>(cfg.optimizer, params, cfg.learning_rate, cfg.grad_clip);
  }

  for (std::size_t epoch = 1; epoch <= cfg.epochs.embeddings; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < n_super; ++k) {
      auto& grp = groups[k];
      if (!grp.opt) continue;
      auto& module = state.model.head.embeddings[k];
      for (const auto& batch : shuffled_batches(grp.rows.size(), cfg.batch_size, rng)) {
        grp.classifier_grads = zeros_like(grp.classifier);
        grp.module_grads = zeros_like(module);
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (auto b : batch) {
          const auto row = grp.rows[b];
          const Vec& g = features[row];
          const Vec e = module.apply(g).array().tanh().matrix();
          Vec d_logits;
          epoch_loss += softmax_ce(grp.classifier, e, grp.local.at(base.train[row].label), &d_logits);
          ++counted;
          d_logits *= inv;
          grp.classifier_grads.weight.noalias() += d_logits * e.transpose();
          grp.classifier_grads.bias += d_logits;
          const Vec d_pre = (grp.classifier.weight.transpose() * d_logits)
                                .cwiseProduct((1.0 - e.array().square()).matrix());
          grp.module_grads.weight.noalias() += d_pre * g.transpose();
          grp.module_grads.bias += d_pre;
        }
        std::vector<std::span<double>> grads;
        visit_params(grp.module_grads, [&](std::span<double> s) { grads.push_back(s); });
        visit_params(grp.classifier_grads, [&](std::span<double> s) { grads.push_back(s); });
        grp.opt->step(grads);
      }
    }
    if (log && counted > 0) {
      const double mean = epoch_loss / static_cast<double>(counted);
      log({"embeddings", 1, epoch, mean, 0.0, 0.0, mean});
    }
  }
}

/// Minibatch descent of the composite objective over `items`.
void fit_head(RunState& state, std::vector<TrainItem>& items, std::size_t num_old, Phase phase,
              std::size_t epochs, const TrainConfig& cfg, std::uint64_t seed,
              const std::string& phase_name, std::size_t session, const LossLogger& log) {
  if (epochs == 0 || items.empty()) return;
  HeadParams grads = zeros_like(state.model.head);
  Optimizer opt(cfg.optimizer, trainable_views(state.model.head, state.model.frozen),
                cfg.learning_rate, cfg.grad_clip);
  const auto grad_views = trainable_views(grads, state.model.frozen);
  Rng rng(seed);

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    ObjectiveTerms mean;
    for (const auto& batch_rows : shuffled_batches(items.size(), cfg.batch_size, rng)) {
      std::vector<TrainItem> batch;
      batch.reserve(batch_rows.size());
      for (auto r : batch_rows) batch.push_back(items[r]);
      zero(grads);
      const auto terms = evaluate_objective(state.model.head, state.head, batch, num_old, cfg.loss,
                                            phase, &grads);
      opt.step(grad_views);
      ++state.session_updates;
      const double w = static_cast<double>(batch.size()) / static_cast<double>(items.size());
      mean.lc += w * terms.lc;
      mean.ld += w * terms.ld;
      mean.la += w * terms.la;
      mean.total += w * terms.total;
    }
    if (log) log({phase_name, session, epoch, mean.lc, mean.ld, mean.la, mean.total});
  }
}

std::map<ClassId, std::vector<Vec>> group_features(std::span<const Sample> samples,
                                                   std::span<const Vec> features) {
  std::map<ClassId, std::vector<Vec>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].label].push_back(features[i]);
  return out;
}

constexpr FrozenFlags kNovelFlags{.backbone = true, .embeddings = false, .attention = false, .mapping = false};

}  // namespace

RunState train_base(const SessionStream& stream, const ModelConfig& model_cfg,
                    const TrainConfig& cfg, const LossLogger& log) {
  cfg.validate();
  if (stream.tasks.empty()) throw ConfigError("stream has no tasks");
  const auto& base = stream.tasks.front();
  if (model_cfg.num_superclasses > base.classes.size()) {
    throw ConfigError("number of superclasses (" + std::to_string(model_cfg.num_superclasses) +
                      ") exceeds base classes (" + std::to_string(base.classes.size()) + ")");
  }

  RunState state{.model = init_model(model_cfg, stream.input_shape, stream.semantics.dim(),
                                     derive_seed(cfg.seed, "model.init")),
                 .head = {},
                 .memory = PrototypeMemory(model_cfg.u),
                 .superclasses = {},
                 .session_index = 0,
                 .rng_seed = cfg.seed,
                 .session_updates = 0};

  state.model.frozen = FrozenFlags{.backbone = false, .embeddings = true, .attention = true, .mapping = true};
  train_backbone(state, base, cfg, log);
  state.model.frozen.backbone = true;

  auto km = cluster_base_classes(stream.semantics, base.classes,
                                 KMeansOptions{.num_clusters = model_cfg.num_superclasses,
                                               .seed = derive_seed(cfg.seed, "kmeans"),
                                               .max_iter = cfg.kmeans_max_iter,
                                               .tol = cfg.kmeans_tol});
  state.superclasses = std::move(km.map);

  const auto features = extract_features(state.model, base.train);
  state.model.frozen = FrozenFlags{.backbone = true, .embeddings = false, .attention = true, .mapping = true};
  pretrain_embeddings(state, base, features, cfg, log);

  register_session_classes(state.head, stream.semantics, base.classes);
  std::vector<TrainItem> items;
  items.reserve(base.train.size());
  for (std::size_t i = 0; i < base.train.size(); ++i) {
    const auto& label = base.train[i].label;
    items.push_back(TrainItem{features[i], state.head.index_of(label), state.superclasses.at(label),
                              true, std::nullopt});
  }
  state.model.frozen = FrozenFlags{.backbone = true, .embeddings = true, .attention = false, .mapping = false};
  fit_head(state, items, 0, Phase::base, cfg.epochs.base, cfg, derive_seed(cfg.seed, "train.base"),
           "base", 1, log);

  state.memory = update_memory(state.memory, base, group_features(base.train, features));
  state.model.frozen = kNovelFlags;
  state.session_index = 1;
  state.session_updates = 0;
  return state;
}

DistillationContext snapshot_old_scores(const RunState& state, std::span<const Vec> features) {
  if (state.session_updates > 0) {
    throw ProtocolError("old scores must be captured before the session's first update");
  }
  if (state.head.empty()) throw ProtocolError("no old classes to distill from");
  DistillationContext ctx;
  ctx.num_old = state.head.size();
  ctx.old_scores.reserve(features.size());
  for (const auto& g : features) {
    ctx.old_scores.push_back(state.head.score(head_forward(state.model.head, g).y));
  }
  return ctx;
}

RunState train_novel_session(RunState state, const TaskSpec& task, const SemanticTable& semantics,
                             const TrainConfig& cfg, const LossLogger& log) {
  cfg.validate();
  if (state.session_index + 1 != task.index) {
    throw ProtocolError("session " + std::to_string(task.index) + " follows session " +
                        std::to_string(state.session_index));
  }
  for (const auto& c : task.classes) {
    if (state.head.contains(c)) throw DuplicateError("class '" + c.name() + "' already in head");
  }
  state.session_updates = 0;
  state.model.frozen = kNovelFlags;

  const auto features = extract_features(state.model, task.train);
  const auto replay = replay_batch(state.memory);

  std::vector<Vec> pool_features(features.begin(), features.end());
  for (const auto& [proto, _] : replay) pool_features.push_back(proto);
  const auto ctx = snapshot_old_scores(state, pool_features);

  for (const auto& c : task.classes) {
    state.superclasses.assign(c, assign_novel_class(state.superclasses, semantics, c));
  }
  register_session_classes(state.head, semantics, task.classes);

  std::vector<TrainItem> items;
  items.reserve(pool_features.size());
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    const auto& label = task.train[i].label;
    items.push_back(TrainItem{features[i], state.head.index_of(label), state.superclasses.at(label),
                              true, ctx.old_scores[i]});
  }
  for (std::size_t j = 0; j < replay.size(); ++j) {
    const auto& label = replay[j].second;
    items.push_back(TrainItem{replay[j].first, state.head.index_of(label),
                              state.superclasses.at(label), false,
                              ctx.old_scores[task.train.size() + j]});
  }
  fit_head(state, items, ctx.num_old, Phase::novel, cfg.epochs.novel, cfg,
           derive_seed(cfg.seed, "train.novel", task.index), "novel", task.index, log);

  state.memory = update_memory(state.memory, task, group_features(task.train, features));
  state.session_index = task.index;
  state.session_updates = 0;
  return state;
}

std::vector<SessionReport> run_fscil(const SessionStream& stream, const ModelConfig& model_cfg,
                                     const TrainConfig& cfg, const RunHooks& hooks) {
  if (stream.protocol != Protocol::fscil) throw ProtocolError("run_fscil needs an FSCIL stream");
  validate_stream(stream);
  std::vector<SessionReport> reports;
  RunState state = train_base(stream, model_cfg, cfg, hooks.log);
  reports.push_back(evaluate_session(state.model, state.head, stream, 1));
  if (hooks.on_session) hooks.on_session(state, reports.back());

  for (std::size_t t = 2; t <= stream.num_tasks(); ++t) {
    state = train_novel_session(std::move(state), stream.task(t), stream.semantics, cfg, hooks.log);
    reports.push_back(evaluate_session(state.model, state.head, stream, t));
    if (hooks.on_session) hooks.on_session(state, reports.back());
  }
  return reports;
}

DfslRun run_dfsl(const SessionStream& stream, const ModelConfig& model_cfg, const TrainConfig& cfg,
                 const DfslOptions& options, const RunHooks& hooks) {
  if (stream.protocol != Protocol::dfsl || !stream.novel_pool || stream.num_tasks() != 1) {
    throw ProtocolError("run_dfsl needs a DFSL stream (base task plus novel pool)");
  }
  if (options.episodes == 0) throw ConfigError("DFSL needs at least one episode");
  validate_stream(stream);
  const RunState base = train_base(stream, model_cfg, cfg, hooks.log);
  const auto& base_test = stream.tasks.front().test;

  DfslRun run;
  for (std::size_t e = 0; e < options.episodes; ++e) {
    const auto episode = sample_dfsl_episode(stream, options.way, options.shot,
                                             options.queries_per_class,
                                             derive_seed(cfg.seed, "dfsl.episode", e));
    // Episodes are independent; per-epoch logging would swamp the log.
    RunState state = train_novel_session(base, episode, stream.semantics, cfg);
    run.episodes.push_back(
        evaluate_dfsl_episode(state.model, state.head, base.head.size(), base_test, episode.test));
  }
  run.report = aggregate_dfsl(run.episodes);
  return run;
}

}  // namespace semkd
