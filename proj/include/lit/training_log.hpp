#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lit {

struct TrainingRecord {
  std::int64_t step = 0;
  double l_simple = 0.0;
  double l_noise = 0.0;
  double l_var = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;
};

std::string training_log_header();  // step,l_simple,l_noise,l_var,total,lr,wall_time
// Numbers use 9 significant digits.
std::string format_record(const TrainingRecord& record);

// Appends one row, writing the header first when the file is new or empty.
// Throws lit::Error on I/O failure.
void training_log_append(const std::string& path, const TrainingRecord& record);

std::vector<TrainingRecord> read_training_log(const std::string& path);

}  // namespace lit
