#include "semkd/evalsuite.hpp"

#include <cmath>

#include "semkd/errors.hpp"

namespace semkd {

double accuracy(std::span<const ClassId> predictions, std::span<const ClassId> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  if (predictions.empty()) throw EmptyInputError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double harmonic_mean(double a, double b) {
  const double s = a + b;
  return s > 0.0 ? 2.0 * a * b / s : 0.0;
}

SessionReport session_report_from_predictions(std::size_t session,
                                              std::span<const ClassId> predictions,
                                              std::span<const Sample> test_samples) {
  if (predictions.size() != test_samples.size()) {
    throw ShapeError("one prediction per test sample expected");
  }
  if (test_samples.empty()) throw EmptyInputError("no test samples");

  SessionReport r;
  r.session = session;
  std::size_t hits = 0, base_n = 0, base_hits = 0, novel_n = 0, novel_hits = 0;
  std::map<ClassId, std::pair<std::size_t, std::size_t>> per_class;
  for (std::size_t i = 0; i < test_samples.size(); ++i) {
    const auto& s = test_samples[i];
    const bool ok = predictions[i] == s.label;
    hits += ok;
    auto& pc = per_class[s.label];
    pc.first += ok;
    ++pc.second;
    if (s.task_index == 1) {
      ++base_n;
      base_hits += ok;
    } else {
      ++novel_n;
      novel_hits += ok;
    }
  }
  r.num_test_samples = test_samples.size();
  r.num_classes = per_class.size();
  r.joint_acc = static_cast<double>(hits) / static_cast<double>(test_samples.size());
  r.acc_base = base_n ? static_cast<double>(base_hits) / static_cast<double>(base_n) : 0.0;
  if (novel_n > 0) {
    r.acc_novel = static_cast<double>(novel_hits) / static_cast<double>(novel_n);
    r.hm = harmonic_mean(r.acc_base, *r.acc_novel);
  }
  for (const auto& [id, c] : per_class) {
    r.per_class_acc[id] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return r;
}

SessionReport evaluate_session(const ModelState& model, const ClassifierHead& head,
                               const SessionStream& stream, std::size_t t) {
  const auto test = joint_test_set(stream, t);
  std::vector<ClassId> predictions;
  predictions.reserve(test.size());
  for (const auto& s : test) predictions.push_back(predict(model, head, s.input));
  auto r = session_report_from_predictions(t, predictions, test);
  r.num_classes = head.size();
  return r;
}

DfslEpisodeResult dfsl_episode_metrics(const DfslEpisodeScores& scores) {
  if (scores.distances.size() != scores.labels.size()) throw ShapeError("one label per query expected");
  if (scores.distances.empty()) throw EmptyInputError("episode has no queries");
  const std::size_t total = static_cast<std::size_t>(scores.distances.front().size());
  if (scores.num_base == 0 || scores.num_base >= total) {
    throw ProtocolError("DFSL episode needs both base and novel classes");
  }
  std::vector<std::size_t> base_ids, novel_ids;
  for (std::size_t k = 0; k < total; ++k) (k < scores.num_base ? base_ids : novel_ids).push_back(k);

  std::size_t joint = 0, joint_base = 0, joint_novel = 0, ind_base = 0, ind_novel = 0;
  std::size_t n_base = 0, n_novel = 0;
  for (std::size_t i = 0; i < scores.distances.size(); ++i) {
    const auto& d = scores.distances[i];
    if (static_cast<std::size_t>(d.size()) != total) throw ShapeError("ragged episode scores");
    const auto label = scores.labels[i];
    if (label >= total) throw IndexError("query label outside the head");
    const bool ok = argmin_index(d) == label;
    joint += ok;
    if (label < scores.num_base) {
      ++n_base;
      joint_base += ok;
      ind_base += argmin_index(d, base_ids) == label;
    } else {
      ++n_novel;
      joint_novel += ok;
      ind_novel += argmin_index(d, novel_ids) == label;
    }
  }
  if (n_base == 0 || n_novel == 0) throw ProtocolError("DFSL episode needs base and novel queries");

  auto frac = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
  DfslEpisodeResult r;
  r.joint_acc = frac(joint, scores.distances.size());
  r.joint_base_acc = frac(joint_base, n_base);
  r.joint_novel_acc = frac(joint_novel, n_novel);
  r.base_individual = frac(ind_base, n_base);
  r.novel_individual = frac(ind_novel, n_novel);
  r.delta_b = r.joint_base_acc - r.base_individual;
  r.delta_n = r.joint_novel_acc - r.novel_individual;
  r.delta = (r.delta_b + r.delta_n) / 2.0;
  return r;
}

DfslReport aggregate_dfsl(std::span<const DfslEpisodeResult> episodes, double z) {
  if (episodes.empty()) throw EmptyInputError("no DFSL episodes to aggregate");
  DfslReport r;
  r.episodes = episodes.size();
  const double n = static_cast<double>(episodes.size());
  for (const auto& e : episodes) {
    r.joint_acc += e.joint_acc / n;
    r.base_individual += e.base_individual / n;
    r.novel_individual += e.novel_individual / n;
    r.delta_b += e.delta_b / n;
    r.delta_n += e.delta_n / n;
  }
  r.delta = (r.delta_b + r.delta_n) / 2.0;
  if (episodes.size() > 1) {
    double var = 0.0;
    for (const auto& e : episodes) var += (e.joint_acc - r.joint_acc) * (e.joint_acc - r.joint_acc);
    var /= n - 1.0;
    r.joint_acc_half_width = z * std::sqrt(var / n);
  }
  return r;
}

DfslEpisodeResult evaluate_dfsl_episode(const ModelState& model, const ClassifierHead& head,
                                        std::size_t num_base, std::span<const Sample> base_test,
                                        std::span<const Sample> novel_queries) {
  DfslEpisodeScores scores;
  scores.num_base = num_base;
  for (const auto* set : {&base_test, &novel_queries}) {
    for (const auto& s : *set) {
      const Vec g = backbone_forward(model, s.input);
      scores.distances.push_back(head.score(head_forward(model.head, g).y));
      scores.labels.push_back(head.index_of(s.label));
    }
  }
  return dfsl_episode_metrics(scores);
}

nlohmann::json to_json(const SessionReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [id, acc] : r.per_class_acc) per_class[id.name()] = acc;
  return {{"session", r.session},
          {"joint_acc", r.joint_acc},
          {"acc_base", r.acc_base},
          {"acc_novel", r.acc_novel ? nlohmann::json(*r.acc_novel) : nlohmann::json(nullptr)},
          {"hm", r.acc_novel ? nlohmann::json(r.hm) : nlohmann::json(nullptr)},
          {"num_classes", r.num_classes},
          {"num_test_samples", r.num_test_samples},
          {"per_class_acc", per_class}};
}

SessionReport session_report_from_json(const nlohmann::json& j) {
  SessionReport r;
  try {
    r.session = j.at("session").get<std::size_t>();
    r.joint_acc = j.at("joint_acc").get<double>();
    r.acc_base = j.at("acc_base").get<double>();
    if (!j.at("acc_novel").is_null()) r.acc_novel = j.at("acc_novel").get<double>();
    if (!j.at("hm").is_null()) r.hm = j.at("hm").get<double>();
    r.num_classes = j.value("num_classes", std::size_t{0});
    r.num_test_samples = j.value("num_test_samples", std::size_t{0});
    if (j.contains("per_class_acc")) {
      for (const auto& [name, acc] : j.at("per_class_acc").items()) {
        r.per_class_acc[ClassId{name}] = acc.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed session report: ") + e.what());
  }
  return r;
}

nlohmann::json to_json(const DfslReport& r) {
  return {{"episodes", r.episodes},
          {"joint_acc", r.joint_acc},
          {"joint_acc_half_width", r.joint_acc_half_width},
          {"base_individual", r.base_individual},
          {"novel_individual", r.novel_individual},
          {"delta_b", r.delta_b},
          {"delta_n", r.delta_n},
          {"delta", r.delta}};
}

nlohmann::json to_json(const DfslEpisodeResult& r) {
  return {{"joint_acc", r.joint_acc},         {"joint_base_acc", r.joint_base_acc},
          {"joint_novel_acc", r.joint_novel_acc}, {"base_individual", r.base_individual},
          {"novel_individual", r.novel_individual}, {"delta_b", r.delta_b},
          {"delta_n", r.delta_n},             {"delta", r.delta}};
}

}  // namespace semkd
