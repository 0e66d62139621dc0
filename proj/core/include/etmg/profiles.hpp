#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "etmg/mpc.hpp"

namespace etmg {

struct ProfilePeak {
  double amplitude_mw = 0.0;
  double center_h = 0.0;
  double sigma_h = 1.0;
};

/// Parameters of the deterministic profile synthesizer: a truncated-cosine
/// solar bell plus double-Gaussian household curves for electrical load and
/// heat demand, periodic over 24 h.
struct ProfileParams {
  int steps = 96;
  double dt_minutes = 15.0;
  double solar_peak_mw = 2.0;
  double solar_center_h = 12.5;
  double solar_halfwidth_h = 3.5;
  double load_base_mw = 0.45;
  std::vector<ProfilePeak> load_peaks;
  double heat_base_mw = 0.9;
  std::vector<ProfilePeak> heat_peaks;
};

/// Time-indexed demand and infeed magnitudes, all nonnegative. Loads and
/// heat demands are stored as consumption magnitudes; signs are applied when
/// the columns enter the model (see to_forecast).
struct ProfileSet {
  Eigen::MatrixXd res_mw;     // renewable infeed per unit
  Eigen::MatrixXd load_mw;    // electrical demand per unit
  Eigen::MatrixXd heat_mw;    // heat demand per consumer edge
  Eigen::VectorXd ambient_c;  // optional, empty means scenario ambient

  int steps() const { return static_cast<int>(res_mw.rows()); }
  bool has_ambient() const { return ambient_c.size() > 0; }
};

ProfileSet synthesize_profiles(const ProfileParams& params);

/// CSV exchange format: header `k,d_er,d_ed,Q_d[,T_amb]`, one row per step.
/// Columns are numbered (`d_er1,d_er2,...`) when a quantity has more than
/// one unit. Values are consumption/infeed magnitudes.
ProfileSet load_profiles(const std::filesystem::path& path);
void write_profiles(const ProfileSet& profiles, const std::filesystem::path& path);

/// Model-facing disturbance matrices: heat demand enters negated (extraction)
/// with the ambient temperature appended; loads enter negated as injections.
Forecast to_forecast(const ProfileSet& profiles, double default_ambient_c);

/// Small helper for reading back numeric CSV files (traces, profiles).
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

CsvTable read_csv_table(const std::filesystem::path& path);

}  // namespace etmg
