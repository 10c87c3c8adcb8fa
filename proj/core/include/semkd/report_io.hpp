#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semkd/evalsuite.hpp"
#include "semkd/trainer.hpp"

namespace semkd {

/// {"protocol": "fscil", "run_id": ..., "sessions": [...]}
nlohmann::json fscil_reports_json(const std::string& run_id, const std::vector<SessionReport>& reports);
nlohmann::json dfsl_report_json(const std::string& run_id, const DfslRun& run);

/// One row per session: session,joint_acc,acc_base,acc_novel,hm.
void write_sessions_csv(std::ostream& out, const std::vector<SessionReport>& reports);

/// Header epoch,phase,session,lc,ld,la,total.
class LossCsv {
 public:
  explicit LossCsv(const std::filesystem::path& path);
  void write(const LossLogRow& row);
  LossLogger logger();

 private:
  std::shared_ptr<std::ofstream> out_;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);
std::string format_number(double v);

}  // namespace semkd
