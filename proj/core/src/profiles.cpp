#include "etmg/profiles.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

namespace {

double gaussian_sum(double t_h, double base, const std::vector<ProfilePeak>& peaks) {
  double value = base;
  for (const ProfilePeak& p : peaks) {
    // Periodic over 24 h; neighbouring days keep the curve smooth at midnight.
    for (double shift : {-24.0, 0.0, 24.0}) {
      const double d = t_h - p.center_h + shift;
      value += p.amplitude_mw * std::exp(-d * d / (2.0 * p.sigma_h * p.sigma_h));
    }
  }
  return value;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& token, const std::string& context) {
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw ConfigError(context + ": cannot parse '" + token + "' as a number");
  }
  return value;
}

}  // namespace

ProfileSet synthesize_profiles(const ProfileParams& params) {
  if (params.steps < 1) throw ConfigError("profile synthesis needs at least one step");
  if (params.dt_minutes <= 0.0) throw ConfigError("profile timestep must be positive");
  if (params.solar_peak_mw < 0.0 || params.load_base_mw < 0.0 || params.heat_base_mw < 0.0) {
    throw ConfigError("profile levels must be nonnegative");
  }
  for (const auto& peaks : {params.load_peaks, params.heat_peaks}) {
    for (const ProfilePeak& p : peaks) {
      if (p.amplitude_mw < 0.0) throw ConfigError("profile peak heights must be nonnegative");
      if (p.sigma_h <= 0.0) throw ConfigError("profile peak widths must be positive");
    }
  }
  if (params.solar_halfwidth_h <= 0.0) throw ConfigError("solar half-width must be positive");

  ProfileSet out;
  out.res_mw.resize(params.steps, 1);
  out.load_mw.resize(params.steps, 1);
  out.heat_mw.resize(params.steps, 1);
  const double dt_h = params.dt_minutes / 60.0;
  for (int k = 0; k < params.steps; ++k) {
    const double t = std::fmod(k * dt_h, 24.0);
    double solar = 0.0;
    double d = std::abs(t - params.solar_center_h);
    d = std::min(d, 24.0 - d);
    if (d < params.solar_halfwidth_h) {
      solar = params.solar_peak_mw *
              std::cos(std::numbers::pi * d / (2.0 * params.solar_halfwidth_h));
    }
    out.res_mw(k, 0) = solar;
    out.load_mw(k, 0) = gaussian_sum(t, params.load_base_mw, params.load_peaks);
    out.heat_mw(k, 0) = gaussian_sum(t, params.heat_base_mw, params.heat_peaks);
  }
  return out;
}

Forecast to_forecast(const ProfileSet& profiles, double default_ambient_c) {
  const int steps = profiles.steps();
  if (profiles.load_mw.rows() != steps || profiles.heat_mw.rows() != steps ||
      (profiles.has_ambient() && profiles.ambient_c.size() != steps)) {
    throw ConfigError("profile columns have unequal lengths");
  }
  Forecast fc;
  fc.thermal.resize(steps, profiles.heat_mw.cols() + 1);
  fc.thermal.leftCols(profiles.heat_mw.cols()) = -profiles.heat_mw;
  if (profiles.has_ambient()) {
    fc.thermal.rightCols(1) = profiles.ambient_c;
  } else {
    fc.thermal.rightCols(1).setConstant(default_ambient_c);
  }
  fc.electrical.resize(steps, profiles.res_mw.cols() + profiles.load_mw.cols());
  fc.electrical.leftCols(profiles.res_mw.cols()) = profiles.res_mw;
  fc.electrical.rightCols(profiles.load_mw.cols()) = -profiles.load_mw;
  return fc;
}

namespace {

void emit_group(std::string& header, const char* name, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) {
    header += ',';
    header += name;
    if (count > 1) header += std::to_string(i + 1);
  }
}

}  // namespace

void write_profiles(const ProfileSet& profiles, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  std::string header = "k";
  emit_group(header, "d_er", profiles.res_mw.cols());
  emit_group(header, "d_ed", profiles.load_mw.cols());
  emit_group(header, "Q_d", profiles.heat_mw.cols());
  if (profiles.has_ambient()) header += ",T_amb";
  out << header << "\n";
  for (int k = 0; k < profiles.steps(); ++k) {
    out << k;
    for (Eigen::Index c = 0; c < profiles.res_mw.cols(); ++c) {
      out << ',' << format_value(profiles.res_mw(k, c));
    }
    for (Eigen::Index c = 0; c < profiles.load_mw.cols(); ++c) {
      out << ',' << format_value(profiles.load_mw(k, c));
    }
    for (Eigen::Index c = 0; c < profiles.heat_mw.cols(); ++c) {
      out << ',' << format_value(profiles.heat_mw(k, c));
    }
    if (profiles.has_ambient()) out << ',' << format_value(profiles.ambient_c[k]);
    out << "\n";
  }
}

ProfileSet load_profiles(const std::filesystem::path& path) {
  const CsvTable table = read_csv_table(path);
  int n_res = 0, n_load = 0, n_heat = 0, n_amb = 0;
  if (table.header.empty() || table.header[0] != "k") {
    throw ConfigError(path.string() + ": first profile column must be 'k'");
  }
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    auto matches = [&name](const char* prefix) {
      const std::string p(prefix);
      if (name == p) return true;
      if (name.size() <= p.size() || name.compare(0, p.size(), p) != 0) return false;
      return name.find_first_not_of("0123456789", p.size()) == std::string::npos;
    };
    if (matches("d_er")) {
      ++n_res;
    } else if (matches("d_ed")) {
      ++n_load;
    } else if (matches("Q_d")) {
      ++n_heat;
    } else if (name == "T_amb") {
      ++n_amb;
    } else {
      throw ConfigError(path.string() + ": unknown profile column '" + name + "'");
    }
  }
  if (n_res == 0 || n_load == 0 || n_heat == 0) {
    throw ConfigError(path.string() + ": profiles need d_er, d_ed and Q_d columns");
  }

  const int steps = static_cast<int>(table.values.rows());
  ProfileSet out;
  out.res_mw.resize(steps, n_res);
  out.load_mw.resize(steps, n_load);
  out.heat_mw.resize(steps, n_heat);
  if (n_amb) out.ambient_c.resize(steps);
  for (int k = 0; k < steps; ++k) {
    if (table.values(k, 0) != static_cast<double>(k)) {
      std::ostringstream msg;
      msg << path.string() << " row " << k + 2 << ": expected step index " << k;
      throw ConfigError(msg.str());
    }
    int c = 1;
    for (int i = 0; i < n_res; ++i) out.res_mw(k, i) = table.values(k, c++);
    for (int i = 0; i < n_load; ++i) out.load_mw(k, i) = table.values(k, c++);
    for (int i = 0; i < n_heat; ++i) out.heat_mw(k, i) = table.values(k, c++);
    if (n_amb) out.ambient_c[k] = table.values(k, c++);
  }
  if ((out.res_mw.array() < 0.0).any() || (out.load_mw.array() < 0.0).any() ||
      (out.heat_mw.array() < 0.0).any()) {
    throw ConfigError(path.string() + ": profile magnitudes must be nonnegative");
  }
  return out;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_line(line);

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path.string() << " row " << line_no << ": expected " << table.header.size()
          << " fields, found " << fields.size();
      throw ConfigError(msg.str());
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      std::ostringstream ctx;
      ctx << path.string() << " row " << line_no;
      row[c] = parse_number(fields[c], ctx.str());
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<int>(rows.size()), static_cast<int>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      table.values(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    }
  }
  return table;
}

}  // namespace etmg
