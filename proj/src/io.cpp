#include "obsel/io.hpp"

#include "obsel/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace obsel {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

CsvWriter::CsvWriter(std::filesystem::path path, const std::vector<std::string>& header)
    : path_(std::move(path)), columns_(header.size()) {
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter::~CsvWriter() noexcept(false) {
  if (!flushed_ && std::uncaught_exceptions() == 0) flush();
}

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (in_row_) buffer_ << ';';
  buffer_ << s;
  ++in_row_;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw InvariantViolation("CSV row with " + std::to_string(in_row_) + " cells, header has " +
                             std::to_string(columns_));
  buffer_ << '\n';
  in_row_ = 0;
}

void CsvWriter::flush() {
  write_text(path_, buffer_.str());
  flushed_ = true;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw ConfigInvalid("cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

nlohmann::ordered_json to_json(const Eigen::VectorXd& v) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

void write_library_csv(const std::filesystem::path& path, const SensorLibrary& library) {
  CsvWriter csv(path, {"id", "site", "x1", "x2", "x3"});
  for (const auto& s : library) {
    csv.cell(s.id).cell(s.site_id);
    for (int a = 0; a < 3; ++a) csv.cell(s.location(a));
    csv.end_row();
  }
  csv.flush();
}

void write_state_csv(const std::filesystem::path& path, const AffineModel& model,
                     const Eigen::VectorXd& state) {
  if (state.size() != model.dim_state()) throw DimensionMismatch("state length differs from the grid");
  CsvWriter csv(path, {"node", "x1", "x2", "x3", "value"});
  for (Eigen::Index n = 0; n < state.size(); ++n) {
    const Eigen::Vector3d p = model.grid.point(n);
    csv.cell(static_cast<long long>(n)).cell(p(0)).cell(p(1)).cell(p(2)).cell(state(n));
    csv.end_row();
  }
  csv.flush();
}

void write_covariance_csv(const std::filesystem::path& path, const NoiseCovariance& cov,
                          const std::vector<int>& ids) {
  std::vector<std::string> header{"id"};
  for (int id : ids) header.push_back(std::to_string(id));
  CsvWriter csv(path, header);
  for (int i : ids) {
    csv.cell(i);
    for (int j : ids) csv.cell(cov(i, j));
    csv.end_row();
  }
  csv.flush();
}

}  // namespace obsel
