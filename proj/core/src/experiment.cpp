#include "semkd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include <Eigen/Core>

#include "semkd/checkpoint.hpp"
#include "semkd/gradcheck.hpp"
#include "semkd/plot.hpp"
#include "semkd/report_io.hpp"
#include "semkd/toml.hpp"

namespace semkd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool deterministic_requested() {
  const char* v = std::getenv("SEMKD_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

std::string session_tag(std::size_t t) {
  std::string s = std::to_string(t);
  return "session_" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

/// Records which stage failed so runtime errors can name it.
struct Stage {
  std::string name = "startup";
};

}  // namespace

std::string experiment_run_id(const ExperimentConfig& cfg) {
  json key = cfg.resolved;
  key.erase("output_dir");
  return run_id(key);
}

RunOutcome execute_run(const ExperimentConfig& cfg) {
  if (deterministic_requested()) Eigen::setNbThreads(1);
  const auto started = std::chrono::steady_clock::now();

  RunOutcome outcome;
  outcome.run_id = experiment_run_id(cfg);
  outcome.directory = cfg.output_dir / outcome.run_id;
  fs::create_directories(outcome.directory / "checkpoints");
  {
    std::ofstream out(outcome.directory / "resolved_config.toml", std::ios::trunc);
    out << "# run " << outcome.run_id << "\n" << toml::dump(cfg.resolved);
  }

  const auto stream = build_stream(cfg);
  LossCsv losses(outcome.directory / "losses.csv");
  RunHooks hooks;
  hooks.log = losses.logger();
  hooks.on_session = [&](const RunState& state, const SessionReport& report) {
    save_checkpoint(outcome.directory / "checkpoints" / (session_tag(report.session) + ".semkd"), state);
  };

  if (cfg.protocol == Protocol::fscil) {
    outcome.sessions = run_fscil(stream, cfg.model, cfg.train, hooks);
    write_json(outcome.directory / "reports.json", fscil_reports_json(outcome.run_id, outcome.sessions));
    std::ofstream csv(outcome.directory / "sessions.csv", std::ios::trunc);
    write_sessions_csv(csv, outcome.sessions);

    PlotSeries joint{"joint", {}, {}, {}, {}}, base{"base (Acc_b)", {}, {}, {}, {}},
        novel{"novel (Acc_n)", {}, {}, {}, {}};
    for (const auto& r : outcome.sessions) {
      const auto x = static_cast<double>(r.session);
      joint.x.push_back(x);
      joint.y.push_back(r.joint_acc);
      base.x.push_back(x);
      base.y.push_back(r.acc_base);
      if (r.acc_novel) {
        novel.x.push_back(x);
        novel.y.push_back(*r.acc_novel);
      }
    }
    plot_accuracy_curves(outcome.directory / "accuracy.png", "accuracy per session (" + outcome.run_id + ")",
                         "session", {joint, base, novel});
  } else {
    RunHooks dfsl_hooks{hooks.log, {}};
    outcome.dfsl = run_dfsl(stream, cfg.model, cfg.train, cfg.dfsl, dfsl_hooks);
    write_json(outcome.directory / "reports.json", dfsl_report_json(outcome.run_id, *outcome.dfsl));
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_json(outcome.directory / "run_meta.json",
             {{"run_id", outcome.run_id},
              {"wall_seconds", seconds},
              {"deterministic", deterministic_requested()}});
  return outcome;
}

AblationSwitch ablation_switch_from_string(const std::string& s) {
  if (s == "no-distill") return AblationSwitch::no_distill;
  if (s == "no-attn-loss") return AblationSwitch::no_attn_loss;
  if (s == "single-embedding") return AblationSwitch::single_embedding;
  throw ConfigValidationError(
      {"unknown ablation switch '" + s + "' (expected no-distill, no-attn-loss, single-embedding)"});
}

const char* to_string(AblationSwitch s) {
  switch (s) {
    case AblationSwitch::no_distill: return "no-distill";
    case AblationSwitch::no_attn_loss: return "no-attn-loss";
    case AblationSwitch::single_embedding: return "single-embedding";
  }
  return "?";
}

ExperimentConfig apply_switches(const ExperimentConfig& cfg, std::span<const AblationSwitch> on) {
  json doc = cfg.resolved;
  for (auto s : on) {
    switch (s) {
      case AblationSwitch::no_distill: doc["train"]["loss"]["lambda2"] = 0.0; break;
      case AblationSwitch::no_attn_loss: doc["train"]["loss"]["lambda3"] = 0.0; break;
      case AblationSwitch::single_embedding: doc["model"]["num_superclasses"] = 1; break;
    }
  }
  return resolve_config(doc);
}

std::vector<std::vector<AblationSwitch>> ablation_matrix(std::span<const AblationSwitch> switches) {
  std::vector<AblationSwitch> unique;
  for (auto s : switches) {
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(s);
  }
  std::vector<std::vector<AblationSwitch>> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << unique.size()); ++mask) {
    std::vector<AblationSwitch> row;
    for (std::size_t i = 0; i < unique.size(); ++i) {
      if (mask & (std::size_t{1} << i)) row.push_back(unique[i]);
    }
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

std::string variant_name(const std::vector<AblationSwitch>& row) {
  if (row.empty()) return "full";
  std::string name;
  for (auto s : row) name += (name.empty() ? "" : "+") + std::string(to_string(s));
  return name;
}

void print_diagnostics(const ConfigValidationError& e, std::ostream& err) {
  err << "invalid configuration:\n";
  for (const auto& d : e.diagnostics()) err << "  - " << d << '\n';
}

template <class Body>
int guarded(std::ostream& err, Stage& stage, Body body) {
  try {
    return body();
  } catch (const ConfigValidationError& e) {
    print_diagnostics(e, err);
    return 2;
  } catch (const ConfigError& e) {
    err << "configuration error in stage '" << stage.name << "': " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error in stage '" << stage.name << "': " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int cli_run(const fs::path& config, const std::vector<std::string>& overrides, std::ostream& out,
            std::ostream& err) {
  Stage stage{"config"};
  return guarded(err, stage, [&] {
    const auto cfg = load_experiment_config(config, overrides);
    stage.name = "run";
    const auto outcome = execute_run(cfg);
    out << "run " << outcome.run_id << " -> " << outcome.directory.string() << '\n';
    if (outcome.dfsl) {
      const auto& r = outcome.dfsl->report;
      out << "dfsl joint " << format_number(r.joint_acc) << " +/- "
          << format_number(r.joint_acc_half_width) << ", delta " << format_number(r.delta) << '\n';
    }
    for (const auto& r : outcome.sessions) {
      out << "session " << r.session << ": joint " << format_number(r.joint_acc) << ", base "
          << format_number(r.acc_base);
      if (r.acc_novel) out << ", novel " << format_number(*r.acc_novel) << ", hm " << format_number(r.hm);
      out << '\n';
    }
    return 0;
  });
}

int cli_ablate(const fs::path& config, const std::vector<std::string>& switches,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
  Stage stage{"config"};
  return guarded(err, stage, [&] {
    const auto base = load_experiment_config(config, overrides);
    std::vector<AblationSwitch> parsed;
    for (const auto& s : switches) parsed.push_back(ablation_switch_from_string(s));
    const auto matrix = ablation_matrix(parsed);

    const fs::path dir = base.output_dir / ("ablation_" + experiment_run_id(base));
    fs::create_directories(dir);
    std::ofstream table(dir / "ablation.csv", std::ios::trunc);
    table << "variant,no_distill,no_attn_loss,single_embedding,run_id,last_session,joint_acc,acc_base,acc_novel,hm\n";
    std::vector<PlotSeries> curves;

    for (const auto& row : matrix) {
      const auto name = variant_name(row);
      stage.name = "ablate:" + name;
      auto cfg = apply_switches(base, row);
      cfg.output_dir = dir / name;
      cfg.resolved["output_dir"] = cfg.output_dir.string();
      const auto outcome = execute_run(cfg);

      auto has = [&](AblationSwitch s) { return std::find(row.begin(), row.end(), s) != row.end(); };
      table << name << ',' << has(AblationSwitch::no_distill) << ',' << has(AblationSwitch::no_attn_loss)
            << ',' << has(AblationSwitch::single_embedding) << ',' << outcome.run_id << ',';
      if (outcome.dfsl) {
        const auto& r = outcome.dfsl->report;
        table << "2," << format_number(r.joint_acc) << ",,,\n";
      } else {
        const auto& last = outcome.sessions.back();
        table << last.session << ',' << format_number(last.joint_acc) << ',' << format_number(last.acc_base)
              << ',' << (last.acc_novel ? format_number(*last.acc_novel) : "") << ','
              << (last.acc_novel ? format_number(last.hm) : "") << '\n';
        PlotSeries s{name, {}, {}, {}, {}};
        for (const auto& r : outcome.sessions) {
          s.x.push_back(static_cast<double>(r.session));
          s.y.push_back(r.joint_acc);
        }
        curves.push_back(std::move(s));
      }
      out << name << ": " << outcome.directory.string() << '\n';
    }
    table.close();
    stage.name = "plot";
    if (!curves.empty()) plot_accuracy_curves(dir / "ablation.png", "ablation: joint accuracy", "session", curves);
    out << "ablation table: " << (dir / "ablation.csv").string() << '\n';
    return 0;
  });
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct FoundRun {
  fs::path dir;
  json reports;
  std::string group;
};

std::string group_key(const fs::path& run_dir) {
  const auto cfg_path = run_dir / "resolved_config.toml";
  if (!fs::is_regular_file(cfg_path)) return "ungrouped";
  json cfg = toml::parse_file(cfg_path);
  for (const char* k : {"seed", "derived_seeds", "output_dir"}) cfg.erase(k);
  return run_id(cfg);
}

}  // namespace

int cli_report(const fs::path& results_dir, std::ostream& out, std::ostream& err) {
  Stage stage{"scan"};
  return guarded(err, stage, [&]() -> int {
    if (!fs::is_directory(results_dir)) {
      err << "results directory '" << results_dir.string() << "' does not exist\n";
      return 2;
    }
    std::vector<fs::path> found;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "reports.json") found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) {
      err << "no reports.json under '" << results_dir.string() << "'\n";
      return 2;
    }

    std::map<std::string, std::map<std::string, std::vector<FoundRun>>> by_protocol;
    for (const auto& path : found) {
      stage.name = "read:" + path.string();
      FoundRun run{path.parent_path(), read_json(path), group_key(path.parent_path())};
      const auto protocol = run.reports.at("protocol").get<std::string>();
      by_protocol[protocol][run.group].push_back(std::move(run));
    }

    stage.name = "aggregate";
    if (by_protocol.contains("fscil")) {
      std::ofstream csv(results_dir / "aggregate_fscil.csv", std::ios::trunc);
      csv << "group,session,runs,joint_median,joint_min,joint_max,acc_base_median,acc_novel_median,hm_median\n";
      for (const auto& [group, runs] : by_protocol["fscil"]) {
        std::map<std::size_t, std::vector<SessionReport>> per_session;
        for (const auto& run : runs) {
          for (const auto& s : run.reports.at("sessions")) {
            auto r = session_report_from_json(s);
            per_session[r.session].push_back(std::move(r));
          }
        }
        PlotSeries curve{group + " (n=" + std::to_string(runs.size()) + ")", {}, {}, {}, {}};
        for (const auto& [session, reports] : per_session) {
          std::vector<double> joint, base, novel, hm;
          for (const auto& r : reports) {
            joint.push_back(r.joint_acc);
            base.push_back(r.acc_base);
            if (r.acc_novel) {
              novel.push_back(*r.acc_novel);
              hm.push_back(r.hm);
            }
          }
          const double lo = *std::min_element(joint.begin(), joint.end());
          const double hi = *std::max_element(joint.begin(), joint.end());
          csv << group << ',' << session << ',' << reports.size() << ',' << format_number(median(joint)) << ','
              << format_number(lo) << ',' << format_number(hi) << ',' << format_number(median(base)) << ','
              << (novel.empty() ? "" : format_number(median(novel))) << ','
              << (hm.empty() ? "" : format_number(median(hm))) << '\n';
          curve.x.push_back(static_cast<double>(session));
          curve.y.push_back(median(joint));
          if (runs.size() > 1) {
            curve.lower.push_back(lo);
            curve.upper.push_back(hi);
          }
        }
        stage.name = "plot:" + group;
        plot_accuracy_curves(results_dir / ("accuracy_fscil_" + group + ".png"),
                             "joint accuracy per session (median, min-max)", "session", {curve});
        out << "fscil group " << group << ": " << runs.size() << " run(s)\n";
      }
    }
    if (by_protocol.contains("dfsl")) {
      std::ofstream csv(results_dir / "aggregate_dfsl.csv", std::ios::trunc);
      csv << "group,runs,joint_median,joint_min,joint_max,delta_median\n";
      for (const auto& [group, runs] : by_protocol["dfsl"]) {
        std::vector<double> joint, delta;
        for (const auto& run : runs) {
          joint.push_back(run.reports.at("report").at("joint_acc").get<double>());
          delta.push_back(run.reports.at("report").at("delta").get<double>());
        }
        csv << group << ',' << runs.size() << ',' << format_number(median(joint)) << ','
            << format_number(*std::min_element(joint.begin(), joint.end())) << ','
            << format_number(*std::max_element(joint.begin(), joint.end())) << ','
            << format_number(median(delta)) << '\n';
        out << "dfsl group " << group << ": " << runs.size() << " run(s)\n";
      }
    }
    return 0;
  });
}

int cli_check_grads(std::uint64_t seed, std::size_t trials, std::ostream& out, std::ostream& err) {
  Stage stage{"check-grads"};
  return guarded(err, stage, [&] {
    constexpr double tolerance = 1e-3;
    double worst = 0.0;
    for (std::size_t t = 0; t < std::max<std::size_t>(trials, 1); ++t) {
      GradCheckInstanceSpec spec;
      spec.seed = seed + t;
      const auto inst = make_gradcheck_instance(spec);
      const auto r = check_head_gradients(inst.model, inst.head, inst.batch, inst.num_old, LossConfig{},
                                          Phase::novel);
      out << "trial " << t << ": checked " << r.checked << " entries, max rel error "
          << format_number(r.max_rel_error) << " (E " << format_number(r.embeddings) << ", A "
          << format_number(r.attention) << ", M " << format_number(r.mapping) << ")\n";
      worst = std::max(worst, r.max_rel_error);
    }
    out << "max relative error " << format_number(worst) << (worst < tolerance ? " (ok)" : " (FAIL)") << '\n';
    return worst < tolerance ? 0 : 1;
  });
}

}  // namespace semkd
