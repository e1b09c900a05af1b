#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <filesystem>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace obsel {

/// Round-trip decimal form with 17 significant digits; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double v);

/// Space separated ids, e.g. "3 17 42".
std::string format_ids(const std::vector<int>& ids);

/// Semicolon separated table with LF line endings, written on flush.
class CsvWriter {
 public:
  CsvWriter(std::filesystem::path path, const std::vector<std::string>& header);
  ~CsvWriter() noexcept(false);
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  CsvWriter& cell(const std::string& s);
  CsvWriter& cell(double v) { return cell(format_double(v)); }
  CsvWriter& cell(int v) { return cell(std::to_string(v)); }
  CsvWriter& cell(long v) { return cell(std::to_string(v)); }
  CsvWriter& cell(long long v) { return cell(std::to_string(v)); }
  void end_row();
  void flush();

 private:
  std::filesystem::path path_;
  std::ostringstream buffer_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
  bool flushed_ = false;
};

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

nlohmann::ordered_json to_json(const Eigen::VectorXd& v);

void write_library_csv(const std::filesystem::path& path, const SensorLibrary& library);
/// node;x1;x2;x3;value
void write_state_csv(const std::filesystem::path& path, const AffineModel& model,
                     const Eigen::VectorXd& state);
/// Dense noise covariance of the listed sensors, one row per sensor.
void write_covariance_csv(const std::filesystem::path& path, const NoiseCovariance& cov,
                          const std::vector<int>& ids);

}  // namespace obsel
