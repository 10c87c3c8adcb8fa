// Acceptance suite: one PASS/FAIL line per criterion.
//   semkd_acceptance            run all
//   semkd_acceptance 1 4 7      run a subset
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "semkd/config.hpp"
#include "semkd/evalsuite.hpp"
#include "semkd/experiment.hpp"
#include "semkd/gradcheck.hpp"
#include "semkd/losses.hpp"
#include "semkd/report_io.hpp"
#include "semkd/trainer.hpp"
#include "test_support.hpp"

namespace {

using namespace semkd;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

oracle::Row row(const Vec& v) { return {v.data(), v.data() + v.size()}; }

// 1 ------------------------------------------------------------------------
Outcome loss_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> pick_n(1, 3), pick_m(0, 2), pick_d(2, 4), pick_b(1, 4), pick_N(1, 3);
  std::uniform_real_distribution<double> tau_dist(0.5, 4.0);
  double worst = 0.0;
  const int instances = 40;
  for (int it = 0; it < instances; ++it) {
    const int n = pick_n(rng), m = pick_m(rng), d = pick_d(rng), B = pick_b(rng), N = pick_N(rng);
    const double tau = it % 2 ? 2.0 : tau_dist(rng);
    ClassifierHead head;
    std::vector<std::pair<ClassId, Vec>> classes;
    for (int k = 0; k < n + m; ++k) classes.emplace_back(ClassId("c" + std::to_string(k)), testing::random_vec(rng, d));
    head.register_classes(classes);

    std::vector<Vec> dist, old;
    std::vector<oracle::Row> o_dist, o_old;
    std::vector<std::size_t> labels;
    for (int i = 0; i < B; ++i) {
      const Vec y = testing::random_vec(rng, d), y_old = testing::random_vec(rng, d);
      dist.push_back(head.score(y));
      old.push_back(head.score(y_old).head(n));
      oracle::Row od, oo;
      for (int k = 0; k < n + m; ++k) {
        od.push_back(oracle::cos_dist(row(classes[k].second), row(y)));
        if (k < n) oo.push_back(oracle::cos_dist(row(classes[k].second), row(y_old)));
      }
      o_dist.push_back(od);
      o_old.push_back(oo);
      labels.push_back(static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n + m)));
    }
    worst = std::max(worst, std::abs(classification_loss(dist, labels) - oracle::classification(o_dist, labels)));
    DistillationContext ctx{old, static_cast<std::size_t>(n)};
    worst = std::max(worst, std::abs(distillation_loss(dist, ctx, tau) -
                                     oracle::distillation(o_dist, o_old, static_cast<std::size_t>(n), tau)));

    const int u = d + 1;
    std::vector<Vec> fused;
    std::vector<std::vector<Vec>> modules(static_cast<std::size_t>(B));
    std::vector<oracle::Row> o_fused;
    std::vector<std::vector<oracle::Row>> o_modules(static_cast<std::size_t>(B));
    std::vector<std::size_t> supers;
    for (int i = 0; i < B; ++i) {
      fused.push_back(testing::random_vec(rng, u));
      o_fused.push_back(row(fused.back()));
      for (int j = 0; j < N; ++j) {
        modules[i].push_back(testing::random_vec(rng, u));
        o_modules[i].push_back(row(modules[i].back()));
      }
      supers.push_back(static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(N)));
    }
    worst = std::max(worst, std::abs(attention_loss(fused, modules, supers) -
                                     oracle::attention(o_fused, o_modules, supers)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 5.0, std::to_string(instances) + " instances, max abs diff " + fmt(worst) +
                                           ", " + fmt(secs, 3) + " s"};
}

// 2 ------------------------------------------------------------------------
Outcome gradients() {
  const auto t0 = Clock::now();
  GradCheckInstanceSpec spec;  // u=8, d=6, N=3
  spec.seed = 7;
  const auto inst = make_gradcheck_instance(spec);
  GradCheckOptions opt;
  opt.epsilon = 1e-4;
  const auto r = check_head_gradients(inst.model, inst.head, inst.batch, inst.num_old, LossConfig{}, Phase::novel, opt);
  const double secs = seconds_since(t0);
  const bool covers = r.checked == count_params(inst.model, Component::embeddings) +
                                       count_params(inst.model, Component::attention) +
                                       count_params(inst.model, Component::mapping);
  return {covers && r.max_rel_error < 1e-3 && secs < 60.0,
          "u=8 d=6 N=3, " + std::to_string(r.checked) + " params, max rel err " + fmt(r.max_rel_error) + " (E " +
              fmt(r.embeddings) + ", A " + fmt(r.attention) + ", M " + fmt(r.mapping) + "), " + fmt(secs, 3) + " s"};
}

// 3 ------------------------------------------------------------------------
Outcome structure() {
  std::mt19937_64 rng(3);
  ModelConfig mc;
  mc.u = 8;
  mc.num_superclasses = 3;
  mc.attention_hidden = 6;
  mc.mapping_hidden = {16};
  mc.backbone_hidden = {12};
  const auto model = init_model(mc, InputShape{6, 1, 1}, 5, 1);
  double sum_err = 0.0, min_alpha = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const auto f = attention_fuse(model, testing::random_vec(rng, 8, 1.0 + i % 7));
    sum_err = std::max(sum_err, std::abs(f.alphas.sum() - 1.0));
    min_alpha = std::min(min_alpha, f.alphas.minCoeff());
  }
  double dmin = 2.0, dmax = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double d = cosine_distance(testing::random_vec(rng, 5), testing::random_vec(rng, 5));
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  const double parallel = cosine_distance(Vec::Ones(5), 3.0 * Vec::Ones(5));
  const double opposite = cosine_distance(Vec::Ones(5), -2.0 * Vec::Ones(5));
  dmin = std::min(dmin, parallel);
  dmax = std::max(dmax, opposite);

  auto sc = testing::tiny_stream_config(5);
  sc.num_sessions = 6;  // base + 5 incremental sessions
  const auto stream = build_synthetic_stream(sc);
  TrainConfig tc;
  tc.epochs = {5, 3, 3, 3};
  tc.batch_size = 16;
  mc.num_superclasses = 2;
  auto state = train_base(stream, mc, tc);
  const auto trainable = count_trainable(state.model);
  std::size_t cumulative = state.head.size();
  bool counts_ok = state.memory.size() == cumulative, params_ok = true;
  for (std::size_t t = 2; t <= stream.num_tasks(); ++t) {
    state = train_novel_session(std::move(state), stream.task(t), stream.semantics, tc);
    cumulative += stream.task(t).classes.size();
    params_ok &= count_trainable(state.model) == trainable;
    counts_ok &= state.memory.size() == cumulative;
  }
  const bool pass = sum_err <= 1e-6 && min_alpha >= 0.0 && dmin >= 0.0 && dmax <= 2.0 && params_ok && counts_ok;
  return {pass, "alpha sum err " + fmt(sum_err) + ", min alpha " + fmt(min_alpha) + ", d in [" + fmt(dmin) + ", " +
                    fmt(dmax) + "], params constant over 5 sessions: " + (params_ok ? "yes" : "no") +
                    ", memory = " + std::to_string(state.memory.size()) + "/" + std::to_string(cumulative)};
}

// 4 ------------------------------------------------------------------------
Outcome distillation_kl() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  double min_gap = 1e9;
  for (int b = 0; b < 500; ++b) {
    const Eigen::Index n = 1 + b % 6, m = b % 4;
    DistillationContext ctx;
    ctx.num_old = static_cast<std::size_t>(n);
    std::vector<Vec> d;
    std::vector<oracle::Row> o_old;
    for (int i = 0; i < 1 + b % 8; ++i) {
      ctx.old_scores.push_back(Vec::NullaryExpr(n, [&] { return u(rng); }));
      o_old.push_back(row(ctx.old_scores.back()));
      d.push_back(Vec::NullaryExpr(n + m, [&] { return u(rng); }));
    }
    const double tau = 0.25 * (1 + b % 12);
    min_gap = std::min(min_gap, distillation_loss(d, ctx, tau) - oracle::entropy_old(o_old, ctx.num_old, tau));
  }

  // Only Ld, frozen targets from a perturbed teacher.
  GradCheckInstanceSpec spec;
  spec.seed = 21;
  spec.num_old = 4;
  spec.batch = 6;
  auto inst = make_gradcheck_instance(spec);
  // Teacher: an independently initialized head of the same shape, so the
  // targets are reachable but start far from the student's output.
  auto teacher_spec = spec;
  teacher_spec.seed = 99;
  const auto teacher = make_gradcheck_instance(teacher_spec);
  for (auto& item : inst.batch) {
    item.old_scores = inst.head.score(head_forward(teacher.model.head, item.feature).y).head(inst.num_old);
  }
  const LossConfig only_ld{0.0, 1.0, 0.0, 2.0, AttentionLossForm::nll};
  const double tau = only_ld.tau;
  auto gap_now = [&] {
    double g = 0.0;
    for (const auto& item : inst.batch) {
      const auto trace = head_forward(inst.model.head, item.feature);
      const Vec q = old_class_distribution(inst.head.score(trace.y), inst.num_old, tau);
      const Vec p = old_class_distribution(*item.old_scores, inst.num_old, tau);
      g = std::max(g, (q - p).cwiseAbs().maxCoeff());
    }
    return g;
  };
  const double start = gap_now();
  std::vector<std::span<double>> params;
  visit_params(inst.model.head, [&](Component, std::span<double> s) { params.push_back(s); });
  Optimizer opt(OptimizerKind::adam, params, 1e-2);
  std::size_t steps = 0;
  double gap = start;
  while (steps < 500 && gap >= 1e-2) {
    HeadParams grads = zeros_like(inst.model.head);
    evaluate_objective(inst.model.head, inst.head, inst.batch, inst.num_old, only_ld, Phase::novel, &grads);
    std::vector<std::span<double>> g;
    visit_params(grads, [&](Component, std::span<double> s) { g.push_back(s); });
    opt.step(g);
    ++steps;
    gap = gap_now();
  }
  return {min_gap >= -1e-9 && gap < 1e-2,
          "min(Ld - H(p)) over 500 batches " + fmt(min_gap) + "; max|q-p| " + fmt(start) + " -> " + fmt(gap) +
              " after " + std::to_string(steps) + " steps"};
}

// 5 ------------------------------------------------------------------------
double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

Outcome fscil_ablation() {
  struct Variant {
    std::string name;
    std::vector<std::string> overrides;
  };
  const std::vector<Variant> variants = {
      {"full", {}}, {"no-distill", {"train.loss.lambda2=0"}}, {"single-embedding", {"model.num_superclasses=1"}}};
  testing::TempDir dir("accept5");
  std::map<std::string, std::vector<double>> joint, base;
  double slowest = 0.0;
  for (const auto& v : variants) {
    for (int seed = 1; seed <= 5; ++seed) {
      auto overrides = v.overrides;
      overrides.push_back("seed=" + std::to_string(seed));
      overrides.push_back("output_dir=\"" + (dir.path() / v.name).string() + "\"");
      const auto cfg = load_experiment_config(SEMKD_ACCEPT_FIXTURES "/desk.toml", overrides);
      const auto t0 = Clock::now();
      const auto out = execute_run(cfg);
      slowest = std::max(slowest, seconds_since(t0));
      joint[v.name].push_back(out.sessions.back().joint_acc);
      base[v.name].push_back(out.sessions.back().acc_base);
    }
  }
  const double jf = median(joint["full"]), jd = median(joint["no-distill"]), j1 = median(joint["single-embedding"]);
  const double bf = median(base["full"]), bd = median(base["no-distill"]);
  const bool pass = jf > jd && jf > j1 && bf - bd >= 0.05 && slowest < 300.0;
  return {pass, "median last-session joint: full " + fmt(jf) + ", no-distill " + fmt(jd) + ", single-embedding " +
                    fmt(j1) + "; Acc_b full " + fmt(bf) + " vs no-distill " + fmt(bd) + " (gap " + fmt(bf - bd) +
                    ", need >= 0.05); slowest run " + fmt(slowest, 3) + " s"};
}

// 6 ------------------------------------------------------------------------
Outcome determinism() {
  setenv("SEMKD_DETERMINISTIC", "1", 1);
  testing::TempDir a("accept6a"), b("accept6b");
  auto run = [&](const testing::TempDir& d) {
    auto cfg = load_experiment_config(SEMKD_ACCEPT_FIXTURES "/tiny.toml",
                                      {"output_dir=\"" + d.path().string() + "\"", "seed=42"});
    const auto out = execute_run(cfg);
    return read_json(out.directory / "reports.json");
  };
  const auto ra = run(a), rb = run(b);
  return {ra == rb && !ra.at("sessions").empty(),
          std::string("two runs, ") + std::to_string(ra.at("sessions").size()) + " sessions, reports " +
              (ra == rb ? "identical" : "differ")};
}

// 7 ------------------------------------------------------------------------
Outcome superclasses() {
  const double pts[4][2] = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  std::vector<Vec> points;
  for (const auto& p : pts) points.push_back((Vec(2) << p[0], p[1]).finished());

  // Oracle: enumerate every 2-partition, keep the lowest within-cluster SSE.
  double best = 1e300;
  int best_mask = 0;
  for (int mask = 1; mask < 15; ++mask) {
    double sse = 0.0;
    for (int side = 0; side < 2; ++side) {
      double cx = 0, cy = 0;
      int cnt = 0;
      for (int i = 0; i < 4; ++i) {
        if (((mask >> i) & 1) == side) {
          cx += pts[i][0];
          cy += pts[i][1];
          ++cnt;
        }
      }
      cx /= cnt;
      cy /= cnt;
      for (int i = 0; i < 4; ++i) {
        if (((mask >> i) & 1) == side) sse += (pts[i][0] - cx) * (pts[i][0] - cx) + (pts[i][1] - cy) * (pts[i][1] - cy);
      }
    }
    if (sse < best) {
      best = sse;
      best_mask = mask;
    }
  }
  bool match = true;
  std::size_t seeds_checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed, ++seeds_checked) {
    KMeansOptions opt;
    opt.num_clusters = 2;
    opt.seed = seed;
    const auto res = kmeans(points, opt);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const bool same_oracle = ((best_mask >> i) & 1) == ((best_mask >> j) & 1);
        match &= same_oracle == (res.labels[i] == res.labels[j]);
      }
    }
    match &= std::abs(res.sse_trace.back() - best) < 1e-9;
  }

  // assign_novel_class on every center, for a few random clusterings as well
  bool centers_ok = true;
  std::size_t centers_checked = 0;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    SemanticTable big(4, SemanticSource::synthetic);
    std::vector<ClassId> names;
    for (int i = 0; i < 15; ++i) {
      names.emplace_back("k" + std::to_string(i));
      big.insert(names.back(), testing::random_vec(rng, 4));
    }
    KMeansOptions opt;
    opt.num_clusters = 2 + trial;
    const auto res = cluster_base_classes(big, names, opt);
    for (std::size_t j = 0; j < res.map.centers.size(); ++j) {
      ClassId probe("center" + std::to_string(j));
      big.insert(probe, res.map.centers[j]);
      centers_ok &= assign_novel_class(res.map, big, probe) == j;
      ++centers_checked;
    }
  }
  return {match && centers_ok, "partition matches oracle (SSE " + fmt(best) + ") for " +
                                   std::to_string(seeds_checked) + " seeds: " + (match ? "yes" : "no") +
                                   "; assign_novel_class(center j) = j for " + std::to_string(centers_checked) +
                                   " centers: " + (centers_ok ? "yes" : "no")};
}

// 8 ------------------------------------------------------------------------
Outcome dfsl_arithmetic() {
  // 3 base classes (0..2), 2 novel (3, 4). Rows are distances; lowest wins.
  DfslEpisodeScores s;
  s.num_base = 3;
  auto r = [](std::initializer_list<double> v) {
    Vec out(5);
    int i = 0;
    for (double x : v) out[i++] = x;
    return out;
  };
  s.distances = {
      r({0.1, 0.5, 0.6, 0.9, 0.8}),  // base 0: joint ok, base-only ok
      r({0.4, 0.2, 0.6, 0.1, 0.8}),  // base 1: joint -> 3 wrong, base-only ok
      r({0.3, 0.5, 0.4, 0.9, 0.8}),  // base 2: joint -> 0 wrong, base-only -> 0 wrong
      r({0.5, 0.3, 0.1, 0.9, 0.2}),  // base 2: joint ok, base-only ok
      r({0.9, 0.8, 0.7, 0.1, 0.3}),  // novel 3: joint ok, novel-only ok
      r({0.2, 0.8, 0.7, 0.4, 0.3}),  // novel 4: joint -> 0 wrong, novel-only ok
      r({0.9, 0.1, 0.7, 0.4, 0.6}),  // novel 4: joint -> 1 wrong, novel-only -> 3 wrong
  };
  s.labels = {0, 1, 2, 2, 3, 4, 4};
  // by hand: joint base 2/4, base-only 3/4 -> delta_b = -1/4
  //          joint novel 1/3, novel-only 2/3 -> delta_n = -1/3
  const double db = 2.0 / 4 - 3.0 / 4, dn = 1.0 / 3 - 2.0 / 3, d = (db + dn) / 2;
  const auto e = dfsl_episode_metrics(s);
  const double err = std::max({std::abs(e.delta_b - db), std::abs(e.delta_n - dn), std::abs(e.delta - d),
                               std::abs(e.joint_acc - 3.0 / 7)});
  // aggregation over episodes keeps delta = mean(delta_b, delta_n)
  std::vector<DfslEpisodeResult> eps = {e, e};
  eps[1].delta_b = -0.10;
  eps[1].delta_n = -0.06;
  eps[1].delta = -0.08;
  const auto agg = aggregate_dfsl(eps);
  const double agg_err = std::abs(agg.delta - ((db - 0.10) / 2 + (dn - 0.06) / 2) / 2);
  return {err <= 1e-12 && agg_err <= 1e-12, "delta_b " + fmt(e.delta_b, 12) + ", delta_n " + fmt(e.delta_n, 12) +
                                                 ", delta " + fmt(e.delta, 12) + ", max err " + fmt(std::max(err, agg_err))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss oracles (Lc, Ld, La vs scalar brute force, 1e-6, < 5 s)", loss_oracles},
      {"gradient check (u=8 d=6 N=3, rel err < 1e-3, < 60 s)", gradients},
      {"structural invariants", structure},
      {"distillation KL property and Ld-only convergence", distillation_kl},
      {"desk-scale FSCIL ablation (5 seeds)", fscil_ablation},
      {"determinism of the report JSON", determinism},
      {"superclass pipeline (4-point k-means, center assignment)", superclasses},
      {"DFSL metric arithmetic (1e-12)", dfsl_arithmetic},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::atoi(argv[i])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
