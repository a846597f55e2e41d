#include "lit/training_log.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lit/error.hpp"

namespace lit {

std::string training_log_header() { return "step,l_simple,l_noise,l_var,total,lr,wall_time"; }

std::string format_record(const TrainingRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.step), r.l_simple, r.l_noise, r.l_var, r.total, r.lr,
                r.wall_time);
  return buf;
}

void training_log_append(const std::string& path, const TrainingRecord& record) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open training log " + path);
  if (fresh) out << training_log_header() << "\n";
  out << format_record(record) << "\n";
  out.flush();
  if (!out) throw Error("write failed for training log " + path);
}

std::vector<TrainingRecord> read_training_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open training log " + path);
  std::string line;
  if (!std::getline(in, line) || line != training_log_header()) {
    throw Error(path + " does not start with the training log header");
  }
  std::vector<TrainingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrainingRecord r;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf,%lf", &step, &r.l_simple, &r.l_noise,
                    &r.l_var, &r.total, &r.lr, &r.wall_time) != 7) {
      throw Error("malformed training log row: " + line);
    }
    r.step = step;
    out.push_back(r);
  }
  return out;
}

}  // namespace lit
