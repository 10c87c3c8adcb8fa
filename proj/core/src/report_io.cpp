#include "semkd/report_io.hpp"

#include <fstream>
#include <sstream>

#include "semkd/errors.hpp"

namespace semkd {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

nlohmann::json fscil_reports_json(const std::string& run_id, const std::vector<SessionReport>& reports) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& r : reports) sessions.push_back(to_json(r));
  return {{"protocol", "fscil"}, {"run_id", run_id}, {"sessions", sessions}};
}

nlohmann::json dfsl_report_json(const std::string& run_id, const DfslRun& run) {
  nlohmann::json episodes = nlohmann::json::array();
  for (const auto& e : run.episodes) episodes.push_back(to_json(e));
  return {{"protocol", "dfsl"}, {"run_id", run_id}, {"report", to_json(run.report)},
          {"episodes", episodes}};
}

void write_sessions_csv(std::ostream& out, const std::vector<SessionReport>& reports) {
  out << "session,joint_acc,acc_base,acc_novel,hm\n";
  for (const auto& r : reports) {
    out << r.session << ',' << format_number(r.joint_acc) << ',' << format_number(r.acc_base) << ','
        << (r.acc_novel ? format_number(*r.acc_novel) : "") << ','
        << (r.acc_novel ? format_number(r.hm) : "") << '\n';
  }
}

LossCsv::LossCsv(const std::filesystem::path& path)
    : out_(std::make_shared<std::ofstream>(path, std::ios::trunc)) {
  if (!*out_) throw Error("cannot write " + path.string());
  *out_ << "epoch,phase,session,lc,ld,la,total\n";
}

namespace {

void write_loss_row(std::ostream& out, const LossLogRow& row) {
  out << row.epoch << ',' << row.phase << ',' << row.session << ',' << format_number(row.lc) << ','
        << format_number(row.ld) << ',' << format_number(row.la) << ',' << format_number(row.total)
        << '\n';
}

}  // namespace

void LossCsv::write(const LossLogRow& row) { write_loss_row(*out_, row); }

LossLogger LossCsv::logger() {
  auto out = out_;
  return [out](const LossLogRow& row) { write_loss_row(*out, row); };
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace semkd
