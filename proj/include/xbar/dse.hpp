#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xbar/circuit.hpp"
#include "xbar/surrogate.hpp"

namespace xbar {

struct DseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Walden-style conversion energy E(bits) = fom * 2^bits, anchored at a single
// published (bits, energy) point.
struct AdcEnergyModel {
  double fom = 0.0;  // energy per conversion step [J]

  static AdcEnergyModel from_anchor(int bits, double energy) {
    if (bits < 1 || energy <= 0.0)
      throw DseError("AdcEnergyModel: anchor must have bits >= 1 and positive energy");
    return AdcEnergyModel{energy / std::exp2(bits)};
  }
  double energy(double bits) const { return fom * std::exp2(bits); }
};

struct DesignPoint {
  int n = 1;
  double f = 0.0;  // [Hz]
  int bits = 1;
};

struct PowerBreakdown {
  double array = 0.0;  // sum_g * v^2 [W]
  double adc = 0.0;    // n * E(bits) * f [W]
  double dac = 0.0;    // n * per-row hook [W]
  double total() const { return array + adc + dac; }
};

inline PowerBreakdown total_power(const SurrogateModel& surrogate,
                                  const AdcEnergyModel& adc, const DesignPoint& p,
                                  double v, double dac_power_per_row = 0.0) {
  PowerBreakdown pb;
  pb.array = surrogate.predict_sum_g(p.n) * v * v;
  pb.adc = p.n * adc.energy(p.bits) * p.f;
  pb.dac = p.n * dac_power_per_row;
  return pb;
}

// One full-array MVM per conversion cycle; ops_per_mac is a convention knob.
inline double throughput(const DesignPoint& p, double ops_per_mac) {
  return ops_per_mac * static_cast<double>(p.n) * p.n * p.f;
}

inline double energy_efficiency(const SurrogateModel& surrogate, const AdcEnergyModel& adc,
                                const DesignPoint& p, double v, double ops_per_mac,
                                double dac_power_per_row = 0.0) {
  double power = total_power(surrogate, adc, p, v, dac_power_per_row).total();
  if (power <= 0.0) throw DseError("energy_efficiency: total power must be positive");
  return throughput(p, ops_per_mac) / power / 1e12;  // TOPs/s/W
}

struct ExplorationGrid {
  std::vector<int> n_values;
  std::vector<double> f_values;
  std::vector<int> bits_values;

  static std::vector<int> int_range(int lo, int hi, int step = 1) {
    std::vector<int> v;
    for (int x = lo; x <= hi; x += step) v.push_back(x);
    return v;
  }
  static std::vector<double> f_range(double lo, double hi, double step) {
    std::vector<double> v;
    for (double x = lo; x <= hi * (1.0 + 1e-12); x += step) v.push_back(x);
    return v;
  }
};

struct Constraints {
  std::optional<double> max_power;  // [W]
  std::optional<double> max_rmse;   // normalized
  bool limit_f_by_elmore = false;
  double r_seg = 0.0, c_seg = 0.0, k_settle = 7.0;  // for the Elmore cap
  Termination termination = Termination::single_sided;
};

struct DseSettings {
  double v_drive = 0.2;       // [V]
  double ops_per_mac = 1.0;
  double dac_power_per_row = 0.0;  // [W]
};

struct EvaluatedPoint {
  DesignPoint point;
  PowerBreakdown power;
  double throughput_ops = 0.0;
  double efficiency = 0.0;  // TOPs/s/W
  double rmse = std::numeric_limits<double>::quiet_NaN();  // normalized
  double f_cap = std::numeric_limits<double>::infinity();  // Elmore limit [Hz]
  bool feasible = true;
  double violation = 0.0;  // max relative constraint excess
};

struct ExplorationResult {
  ExplorationGrid grid;
  Constraints constraints;
  DseSettings settings;
  std::vector<EvaluatedPoint> points;  // lexicographic (n, f, bits)
  std::optional<EvaluatedPoint> optimum;
  std::optional<EvaluatedPoint> least_violating;

  const EvaluatedPoint& at(size_t ni, size_t fi, size_t bi) const {
    return points[(ni * grid.f_values.size() + fi) * grid.bits_values.size() + bi];
  }
};

// Exhaustive evaluation of the grid against all supplied constraints.
// Tie-breaking is lexicographic smallest (n, f, bits), so the reduction is
// order-independent.
inline ExplorationResult explore(const SurrogateModel& surrogate, const AdcEnergyModel& adc,
                                 const ExplorationGrid& grid, const Constraints& constraints,
                                 const DseSettings& settings) {
  if (grid.n_values.empty() || grid.f_values.empty() || grid.bits_values.empty())
    throw DseError("explore: empty grid");
  ExplorationResult result;
  result.grid = grid;
  result.constraints = constraints;
  result.settings = settings;
  result.points.reserve(grid.n_values.size() * grid.f_values.size() *
                        grid.bits_values.size());

  for (int n : grid.n_values) {
    double f_cap = std::numeric_limits<double>::infinity();
    if (constraints.limit_f_by_elmore) {
      CrossbarConfig wire;
      wire.n = n;
      wire.r_seg = constraints.r_seg;
      wire.c_seg = constraints.c_seg;
      wire.termination = constraints.termination;
      f_cap = max_frequency(wire, constraints.k_settle);
    }
    for (double f : grid.f_values) {
      for (int bits : grid.bits_values) {
        EvaluatedPoint ep;
        ep.point = DesignPoint{n, f, bits};
        ep.power = total_power(surrogate, adc, ep.point, settings.v_drive,
                               settings.dac_power_per_row);
        ep.throughput_ops = throughput(ep.point, settings.ops_per_mac);
        double ptot = ep.power.total();
        ep.efficiency = ptot > 0.0 ? ep.throughput_ops / ptot / 1e12 : 0.0;
        ep.f_cap = f_cap;
        if (constraints.max_rmse) {
          ep.rmse = surrogate.predict_rmse_max(n, bits);
        } else {
          try {
            ep.rmse = surrogate.predict_rmse_max(n, bits);
          } catch (const OutOfRange&) {
            // RMSE not evaluable and not constrained; leave NaN
          }
        }
        double viol = 0.0;
        if (constraints.max_power && ptot > *constraints.max_power)
          viol = std::max(viol, ptot / *constraints.max_power - 1.0);
        if (constraints.max_rmse && ep.rmse > *constraints.max_rmse)
          viol = std::max(viol, ep.rmse / *constraints.max_rmse - 1.0);
        if (constraints.limit_f_by_elmore && f > f_cap)
          viol = std::max(viol, f / f_cap - 1.0);
        ep.violation = viol;
        ep.feasible = viol == 0.0;
        result.points.push_back(ep);
      }
    }
  }

  for (const auto& ep : result.points) {
    if (ep.feasible) {
      if (!result.optimum || ep.efficiency > result.optimum->efficiency)
        result.optimum = ep;
    }
    if (!result.least_violating || ep.violation < result.least_violating->violation)
      result.least_violating = ep;
  }
  return result;
}

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_heatmap(const std::filesystem::path& path,
                          const std::vector<double>& row_axis,
                          const std::vector<double>& col_axis,
                          const std::function<double(size_t, size_t)>& value) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DseError("export_heatmaps: cannot open " + path.string());
  for (double c : col_axis) os << ',' << g17(c);
  os << '\n';
  for (size_t r = 0; r < row_axis.size(); ++r) {
    os << g17(row_axis[r]);
    for (size_t c = 0; c < col_axis.size(); ++c) os << ',' << g17(value(r, c));
    os << '\n';
  }
  if (!os) throw DseError("export_heatmaps: write failed for " + path.string());
}

}  // namespace detail

// CSV heatmaps (power, efficiency, RMSE, feasibility) over the two
// non-singleton axes; with both f and bits swept, one slice per bits value.
// First row = column axis, first column = row axis (rows are always N).
inline std::vector<std::filesystem::path> export_heatmaps(
    const ExplorationResult& result, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (result.points.empty()) throw DseError("export_heatmaps: empty result");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  std::vector<double> n_axis;
  for (int n : result.grid.n_values) n_axis.push_back(n);

  auto emit_slice = [&](const std::string& suffix, bool bits_as_cols, size_t fixed_idx) {
    std::vector<double> col_axis;
    if (bits_as_cols)
      for (int b : result.grid.bits_values) col_axis.push_back(b);
    else
      col_axis = result.grid.f_values;
    auto point = [&](size_t r, size_t c) -> const EvaluatedPoint& {
      return bits_as_cols ? result.at(r, fixed_idx, c) : result.at(r, c, fixed_idx);
    };
    struct Metric {
      const char* name;
      std::function<double(const EvaluatedPoint&)> get;
    };
    const Metric metrics[] = {
        {"power", [](const EvaluatedPoint& p) { return p.power.total(); }},
        {"efficiency", [](const EvaluatedPoint& p) { return p.efficiency; }},
        {"rmse", [](const EvaluatedPoint& p) { return p.rmse; }},
        {"feasible", [](const EvaluatedPoint& p) { return p.feasible ? 1.0 : 0.0; }},
    };
    for (const auto& metric : metrics) {
      fs::path path = out_dir / (std::string(metric.name) + suffix + ".csv");
      detail::write_heatmap(path, n_axis, col_axis, [&](size_t r, size_t c) {
        return metric.get(point(r, c));
      });
      written.push_back(path);
    }
  };

  if (result.grid.bits_values.size() == 1) {
    emit_slice("", false, 0);
  } else if (result.grid.f_values.size() == 1) {
    emit_slice("", true, 0);
  } else {
    for (size_t bi = 0; bi < result.grid.bits_values.size(); ++bi) {
      std::ostringstream suffix;
      suffix << "_b" << result.grid.bits_values[bi];
      emit_slice(suffix.str(), false, bi);
    }
  }
  return written;
}

}  // namespace xbar
