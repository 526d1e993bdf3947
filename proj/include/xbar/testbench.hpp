#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "xbar/circuit.hpp"
#include "xbar/device.hpp"

namespace xbar {

struct TestbenchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One period of the unipolar triangle: 0 -> v_peak -> 0, k points. For odd k
// the down-ramp revisits the up-ramp voltages exactly; for even k the peak
// sample is held twice so the maximum is still v_peak.
inline std::vector<double> triangle_samples(double v_peak, int k) {
  if (k < 3) throw TestbenchError("triangle_samples: need at least 3 samples");
  if (v_peak <= 0.0) throw TestbenchError("triangle_samples: v_peak must be positive");
  std::vector<double> v(static_cast<size_t>(k));
  int up = (k + 1) / 2;
  for (int m = 0; m < up; ++m) v[m] = v_peak * m / (up - 1);
  for (int m = up; m < k; ++m) v[m] = v[k - 1 - m];
  return v;
}

enum class FullScaleMode { scaled_by_n, fixed };

inline const char* to_string(FullScaleMode m) {
  return m == FullScaleMode::scaled_by_n ? "scaled_by_n" : "fixed";
}

// Mid-tread uniform quantizer clamped to [0, full_scale].
struct AdcQuantizer {
  int bits = 8;
  double full_scale_current = 0.0;  // [A]

  double lsb() const { return full_scale_current / std::exp2(bits); }

  double quantize(double i, std::uint64_t* clamp_count = nullptr) const {
    if (full_scale_current <= 0.0)
      throw TestbenchError("AdcQuantizer: full-scale current must be positive");
    double clamped = i;
    if (clamped < 0.0) clamped = 0.0;
    if (clamped > full_scale_current) clamped = full_scale_current;
    if (clamp_count && clamped != i) ++*clamp_count;
    double step = lsb();
    double q = std::round(clamped / step) * step;
    return q > full_scale_current ? full_scale_current : q;
  }
};

struct TestbenchConfig {
  int samples_per_segment = 35;
  double v_peak = 0.0;  // 0 -> use device v_read
  CellState error_state = CellState::lrs;
  CellState power_state = CellState::lrs;
  FullScaleMode full_scale_mode = FullScaleMode::scaled_by_n;
  double fixed_full_scale = 0.0;  // [A], only for FullScaleMode::fixed

  double peak(const DeviceParams& device) const {
    return v_peak > 0.0 ? v_peak : device.v_read;
  }

  AdcQuantizer quantizer(int bits, int n, const DeviceParams& device) const {
    double fs = full_scale_mode == FullScaleMode::scaled_by_n
                    ? n * cell_current(device.lrs, peak(device))
                    : fixed_full_scale;
    return AdcQuantizer{bits, fs};
  }
};

// Isolated, parasitic-free cell driven with the same input.
inline Eigen::VectorXd reference_current(const SinhCell& cell,
                                         const std::vector<double>& v_samples) {
  Eigen::VectorXd ref(static_cast<Eigen::Index>(v_samples.size()));
  for (size_t m = 0; m < v_samples.size(); ++m)
    ref[static_cast<Eigen::Index>(m)] = cell_current(cell, v_samples[m]);
  return ref;
}

// Drives one row with the sample train while the others stay grounded;
// returns the n x k matrix of column currents. Repeated sample voltages
// (the triangle down-ramp) reuse the already-solved operating point.
inline Eigen::MatrixXd run_segment(NodalSystem& system, int active_row,
                                   const std::vector<double>& v_samples,
                                   const SolverOptions& opts = {}) {
  const int n = system.n();
  if (active_row < 0 || active_row >= n)
    throw TestbenchError("run_segment: active row out of range");
  Eigen::MatrixXd currents(n, static_cast<Eigen::Index>(v_samples.size()));
  std::map<double, Eigen::VectorXd> solved;
  double v_prev = 0.0;
  Eigen::VectorXd guess;
  for (size_t m = 0; m < v_samples.size(); ++m) {
    double v = v_samples[m];
    auto hit = solved.find(v);
    if (hit != solved.end()) {
      currents.col(static_cast<Eigen::Index>(m)) = hit->second;
      continue;
    }
    Eigen::VectorXd rv = Eigen::VectorXd::Zero(n);
    rv[active_row] = v;
    try {
      const Eigen::VectorXd* x0 = nullptr;
      if (guess.size() == system.unknowns() && v_prev != 0.0) {
        guess *= v / v_prev;  // near-linear sweep: scaled previous solution
        x0 = &guess;
      }
      DcSolution sol = system.solve_dc(rv, opts, x0);
      guess = system.last_state();
      v_prev = v;
      solved.emplace(v, sol.column_currents);
      currents.col(static_cast<Eigen::Index>(m)) = sol.column_currents;
    } catch (const SolverError& e) {
      std::ostringstream msg;
      msg << "run_segment: row " << active_row << ", sample " << m << " (v=" << v
          << " V): " << e.what();
      throw TestbenchError(msg.str());
    }
  }
  return currents;
}

namespace detail {

// Runs fn(segment, system) for every segment, each worker on its own
// NodalSystem. Output ordering is the caller's responsibility (index by
// segment), so the result is independent of worker count.
inline void for_each_segment(int n, int workers,
                             const std::function<NodalSystem()>& make_system,
                             const std::function<void(int, NodalSystem&)>& fn) {
  if (workers < 1) workers = 1;
  if (workers > n) workers = n;
  if (workers == 1) {
    NodalSystem system = make_system();
    for (int i = 0; i < n; ++i) fn(i, system);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::vector<std::string> errors;
  auto body = [&] {
    NodalSystem system = make_system();
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i, system);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.emplace_back(e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << errors.size() << " segment(s) failed:";
    for (const auto& e : errors) msg << "\n  " << e;
    throw TestbenchError(msg.str());
  }
}

}  // namespace detail

// Full segment sweep for a uniform cell state: currents[i] is the n x k
// column-current matrix for segment i.
inline std::vector<Eigen::MatrixXd> sweep_segments(
    const CrossbarConfig& cfg, const DeviceParams& device, CellState state,
    const std::vector<double>& v_samples, int workers = 1,
    const std::function<void(int)>& progress = {}) {
  const int n = cfg.n;
  std::vector<Eigen::MatrixXd> currents(static_cast<size_t>(n));
  std::mutex progress_mutex;
  detail::for_each_segment(
      n, workers,
      [&] { return NodalSystem(cfg, CellStateMatrix::uniform(n, state), device); },
      [&](int i, NodalSystem& system) {
        system.reset_warm_start();
        currents[static_cast<size_t>(i)] = run_segment(system, i, v_samples);
        if (progress) {
          std::lock_guard<std::mutex> lock(progress_mutex);
          progress(i);
        }
      });
  return currents;
}

// RMSE[i][j] over the sample train between (optionally quantized) column-j
// current during segment i and the never-quantized isolated reference.
inline Eigen::MatrixXd rmse_from_currents(const std::vector<Eigen::MatrixXd>& currents,
                                          const Eigen::VectorXd& reference,
                                          const AdcQuantizer* adc = nullptr) {
  const int n = static_cast<int>(currents.size());
  const Eigen::Index k = reference.size();
  Eigen::MatrixXd rmse(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index m = 0; m < k; ++m) {
        double ij = currents[static_cast<size_t>(i)](j, m);
        if (adc) ij = adc->quantize(ij);
        double d = ij - reference[m];
        acc += d * d;
      }
      rmse(i, j) = std::sqrt(acc / static_cast<double>(k));
    }
  }
  return rmse;
}

inline Eigen::MatrixXd per_cell_rmse(const CrossbarConfig& cfg, const DeviceParams& device,
                                     const TestbenchConfig& tb,
                                     std::optional<int> bits = std::nullopt,
                                     int workers = 1) {
  auto samples = triangle_samples(tb.peak(device), tb.samples_per_segment);
  auto currents = sweep_segments(cfg, device, tb.error_state, samples, workers);
  Eigen::VectorXd ref = reference_current(device.cell(tb.error_state), samples);
  if (!bits) return rmse_from_currents(currents, ref);
  AdcQuantizer adc = tb.quantizer(*bits, cfg.n, device);
  return rmse_from_currents(currents, ref, &adc);
}

// G_eff[i][j] = column-j current during segment i / drive voltage. Worst-case
// power characterization drives the all-LRS array.
inline Eigen::MatrixXd extract_geff(const CrossbarConfig& cfg, const DeviceParams& device,
                                    double v, int workers = 1,
                                    CellState state = CellState::lrs) {
  if (v <= 0.0) throw TestbenchError("extract_geff: drive voltage must be positive");
  const int n = cfg.n;
  Eigen::MatrixXd geff(n, n);
  detail::for_each_segment(
      n, workers,
      [&] { return NodalSystem(cfg, CellStateMatrix::uniform(n, state), device); },
      [&](int i, NodalSystem& system) {
        Eigen::VectorXd rv = Eigen::VectorXd::Zero(n);
        rv[i] = v;
        DcSolution sol = system.solve_dc(rv);
        geff.row(i) = sol.column_currents.transpose() / v;
      });
  return geff;
}

// Eq.-style worst-case power P = V^2 * sum(G_eff); the two factors are kept
// separate so drive and architecture contributions stay visible.
struct PowerEstimate {
  double sum_g = 0.0;  // architecture term [S]
  double v = 0.0;      // driver term sqrt [V]
  double power() const { return v * v * sum_g; }
};

inline PowerEstimate worst_case_array_power(const Eigen::MatrixXd& geff, double v) {
  if (v <= 0.0) throw TestbenchError("worst_case_array_power: v must be positive");
  return PowerEstimate{geff.sum(), v};
}

struct CharacterizationResult {
  int n = 0;
  Eigen::MatrixXd geff;                 // [S], all-LRS
  double cumulative_conductance = 0.0;  // sum over geff [S]
  Eigen::MatrixXd rmse_analog;          // [A], no ADC
  std::map<int, Eigen::MatrixXd> rmse_bits;  // bits -> [A]
  double i_ref_peak = 0.0;  // reference current at v_peak for the error state [A]
  double v_peak = 0.0;
  std::string fingerprint;  // device/wire/testbench config hash
};

// Runs the N segment sweeps once, then derives geff, the analog RMSE map and
// one quantized RMSE map per requested resolution from the stored currents.
inline CharacterizationResult characterize(const CrossbarConfig& cfg,
                                           const DeviceParams& device,
                                           const TestbenchConfig& tb,
                                           const std::vector<int>& bits_list,
                                           const std::string& fingerprint = "",
                                           int workers = 1,
                                           const std::function<void(int)>& progress = {}) {
  const int n = cfg.n;
  const double vp = tb.peak(device);
  auto samples = triangle_samples(vp, tb.samples_per_segment);

  auto currents = sweep_segments(cfg, device, tb.error_state, samples, workers, progress);
  Eigen::VectorXd ref = reference_current(device.cell(tb.error_state), samples);

  CharacterizationResult result;
  result.n = n;
  result.v_peak = vp;
  result.fingerprint = fingerprint;
  result.i_ref_peak = cell_current(device.cell(tb.error_state), vp);
  result.rmse_analog = rmse_from_currents(currents, ref);
  for (int bits : bits_list) {
    AdcQuantizer adc = tb.quantizer(bits, n, device);
    result.rmse_bits.emplace(bits, rmse_from_currents(currents, ref, &adc));
  }

  // The peak triangle sample doubles as the G_eff measurement when the error
  // sweep already runs all-LRS; otherwise a dedicated single-point sweep.
  int peak_index = (tb.samples_per_segment + 1) / 2 - 1;
  if (tb.power_state == tb.error_state) {
    result.geff.resize(n, n);
    for (int i = 0; i < n; ++i)
      result.geff.row(i) =
          currents[static_cast<size_t>(i)].col(peak_index).transpose() / vp;
  } else {
    result.geff = extract_geff(cfg, device, vp, workers, tb.power_state);
  }
  result.cumulative_conductance = result.geff.sum();
  return result;
}

}  // namespace xbar
