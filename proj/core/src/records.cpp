#include "dust/records.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dust/errors.hpp"

namespace dust {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_number(v(i));
}

}  // namespace

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InvalidArgument("csv: missing column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("csv: cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) return t;
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw InvalidArgument("csv: ragged row in '" + path.string() + "'");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_trajectory_csv(std::ostream& out, const EpisodeRecord& rec,
                          const std::vector<std::string>& state_names,
                          const std::vector<std::string>& control_names) {
  out << "step";
  for (const auto& n : state_names) out << ',' << n;
  for (const auto& n : control_names) out << ',' << n;
  out << ",instant_cost,crashed\n";
  for (const auto& r : rec.rows) {
    out << r.step;
    write_vector(out, r.state);
    write_vector(out, r.control);
    out << ',' << format_number(r.instant_cost) << ',' << (r.crashed ? 1 : 0) << '\n';
  }
}

void write_posterior_csv(std::ostream& out, const EpisodeRecord& rec,
                         const std::vector<std::string>& param_names) {
  out << "step,particle";
  for (const auto& n : param_names) out << ',' << n;
  out << '\n';
  for (const auto& snap : rec.posterior) {
    for (Eigen::Index i = 0; i < snap.particles.rows(); ++i) {
      out << snap.step << ',' << i;
      write_vector(out, snap.particles.row(i).transpose());
      out << '\n';
    }
  }
}

void write_policy_csv(std::ostream& out, const EpisodeRecord& rec,
                      const std::vector<std::string>& control_names) {
  const Eigen::Index m = rec.policy_rows.empty() ? 0 : rec.policy_rows.front().weights.size();
  out << "step,chosen";
  for (Eigen::Index i = 0; i < m; ++i) out << ",weight_" << i;
  for (Eigen::Index i = 0; i < m; ++i) out << ",log_lik_" << i;
  for (const auto& n : control_names) out << ',' << n;
  out << '\n';
  for (const auto& r : rec.policy_rows) {
    out << r.step << ',' << r.chosen;
    write_vector(out, r.weights);
    write_vector(out, r.log_likelihoods);
    write_vector(out, r.control);
    out << '\n';
  }
}

std::vector<Eigen::VectorXd> read_trajectory_controls(const std::filesystem::path& path,
                                                      const std::vector<std::string>& control_names) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> cols;
  for (const auto& n : control_names) cols.push_back(t.column(n));
  std::vector<Eigen::VectorXd> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::string& cell = row[cols[k]];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw InvalidArgument("csv: bad control value '" + cell + "'");
      }
      u(static_cast<Eigen::Index>(k)) = v;
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace dust
