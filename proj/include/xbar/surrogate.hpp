#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xbar/testbench.hpp"

namespace xbar {

struct SurrogateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutOfRange : SurrogateError {
  using SurrogateError::SurrogateError;
};
struct FingerprintMismatch : SurrogateError {
  using SurrogateError::SurrogateError;
};
struct InsufficientSizes : SurrogateError {
  using SurrogateError::SurrogateError;
};

// Diagonal RMSE curve with abscissa and ordinate normalized to [0, 1].
struct NormalizedProfile {
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

// Piecewise-linear interpolation of y over strictly increasing x.
inline double pw_linear(const std::vector<double>& xs, const std::vector<double>& ys,
                        double x) {
  auto hi = std::upper_bound(xs.begin(), xs.end(), x);
  if (hi == xs.begin()) return ys.front();
  if (hi == xs.end()) return ys.back();
  size_t i = static_cast<size_t>(hi - xs.begin());
  double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

}  // namespace detail

// Interpolated predictors extracted from a handful of characterization runs:
// RMSE_max(N, bits), cumulative conductance S(N) from per-size direct
// simulations (never sub-array sums), and the normalized diagonal profile.
// Values are interpolated in log space over log(N) -- the underlying trends
// are close to power laws -- and linearly over the bits axis.
struct SurrogateModel {
  std::vector<int> sizes;                       // strictly increasing
  std::vector<int> bits;                        // strictly increasing
  std::vector<std::vector<double>> rmse_max;    // [size][bits], normalized by i_ref_peak
  std::vector<double> rmse_max_analog;          // per size, no ADC
  std::vector<double> sum_g;                    // per size [S]
  std::vector<NormalizedProfile> profiles;      // per size
  std::string fingerprint;
  std::vector<std::string> warnings;

  double min_size() const { return sizes.front(); }
  double max_size() const { return sizes.back(); }

  double predict_sum_g(double n) const {
    check_size_range(n, "predict_sum_g");
    std::vector<double> lx(sizes.size()), ly(sizes.size());
    for (size_t i = 0; i < sizes.size(); ++i) {
      lx[i] = std::log(static_cast<double>(sizes[i]));
      ly[i] = std::log(sum_g[i]);
    }
    return std::exp(detail::pw_linear(lx, ly, std::log(n)));
  }

  double predict_rmse_max(double n, double b) const {
    check_size_range(n, "predict_rmse_max");
    if (b < bits.front() || b > bits.back())
      throw OutOfRange("predict_rmse_max: bits " + std::to_string(b) +
                       " outside characterized range [" + std::to_string(bits.front()) +
                       ", " + std::to_string(bits.back()) + "]");
    bool log_values = true;
    for (const auto& row : rmse_max)
      for (double v : row)
        if (v <= 0.0) log_values = false;
    std::vector<double> lx(sizes.size());
    for (size_t i = 0; i < sizes.size(); ++i)
      lx[i] = std::log(static_cast<double>(sizes[i]));
    std::vector<double> bx(bits.begin(), bits.end());
    // interpolate along N at each bits knot, then along bits
    std::vector<double> at_bits(bits.size());
    for (size_t k = 0; k < bits.size(); ++k) {
      std::vector<double> col(sizes.size());
      for (size_t i = 0; i < sizes.size(); ++i)
        col[i] = log_values ? std::log(rmse_max[i][k]) : rmse_max[i][k];
      at_bits[k] = detail::pw_linear(lx, col, std::log(n));
    }
    double v = detail::pw_linear(bx, at_bits, b);
    return log_values ? std::exp(v) : v;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["sizes"] = sizes;
    j["bits"] = bits;
    j["rmse_max"] = rmse_max;
    j["rmse_max_analog"] = rmse_max_analog;
    j["sum_g"] = sum_g;
    j["fingerprint"] = fingerprint;
    j["warnings"] = warnings;
    nlohmann::json profs = nlohmann::json::array();
    for (const auto& p : profiles) profs.push_back({{"x", p.x}, {"y", p.y}});
    j["profiles"] = profs;
    return j;
  }

  static SurrogateModel from_json(const nlohmann::json& j) {
    SurrogateModel m;
    m.sizes = j.at("sizes").get<std::vector<int>>();
    m.bits = j.at("bits").get<std::vector<int>>();
    m.rmse_max = j.at("rmse_max").get<std::vector<std::vector<double>>>();
    m.rmse_max_analog = j.at("rmse_max_analog").get<std::vector<double>>();
    m.sum_g = j.at("sum_g").get<std::vector<double>>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& p : j.at("profiles"))
      m.profiles.push_back(NormalizedProfile{p.at("x").get<std::vector<double>>(),
                                             p.at("y").get<std::vector<double>>()});
    return m;
  }

 private:
  void check_size_range(double n, const char* who) const {
    if (n < sizes.front() || n > sizes.back())
      throw OutOfRange(std::string(who) + ": size " + std::to_string(n) +
                       " outside characterized range [" + std::to_string(sizes.front()) +
                       ", " + std::to_string(sizes.back()) + "]");
  }
};

inline NormalizedProfile diagonal_profile(const Eigen::MatrixXd& rmse) {
  const int n = static_cast<int>(rmse.rows());
  NormalizedProfile p;
  p.x.resize(static_cast<size_t>(n));
  p.y.resize(static_cast<size_t>(n));
  double peak = 0.0;
  for (int i = 0; i < n; ++i) peak = std::max(peak, rmse(i, i));
  for (int i = 0; i < n; ++i) {
    p.x[static_cast<size_t>(i)] = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    p.y[static_cast<size_t>(i)] = peak > 0.0 ? rmse(i, i) / peak : 0.0;
  }
  return p;
}

inline SurrogateModel build_surrogate(const std::vector<CharacterizationResult>& results,
                                      const std::vector<int>& bits_list) {
  if (results.size() < 2)
    throw InsufficientSizes("build_surrogate: need characterizations of at least 2 sizes");
  std::vector<const CharacterizationResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->n < b->n; });
  for (size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->n == sorted[i - 1]->n)
      throw SurrogateError("build_surrogate: duplicate size " + std::to_string(sorted[i]->n));
    if (sorted[i]->fingerprint != sorted[0]->fingerprint)
      throw FingerprintMismatch(
          "build_surrogate: result for size " + std::to_string(sorted[i]->n) +
          " has fingerprint " + sorted[i]->fingerprint + ", expected " +
          sorted[0]->fingerprint);
  }

  SurrogateModel m;
  m.fingerprint = sorted[0]->fingerprint;
  std::vector<int> bits = bits_list;
  std::sort(bits.begin(), bits.end());
  m.bits = bits;
  for (const auto* r : sorted) {
    m.sizes.push_back(r->n);
    if (r->i_ref_peak <= 0.0)
      throw SurrogateError("build_surrogate: result lacks reference peak current");
    std::vector<double> row;
    for (int b : bits) {
      auto it = r->rmse_bits.find(b);
      if (it == r->rmse_bits.end())
        throw SurrogateError("build_surrogate: size " + std::to_string(r->n) +
                             " lacks an RMSE map for " + std::to_string(b) + " bits");
      row.push_back(it->second.maxCoeff() / r->i_ref_peak);
    }
    m.rmse_max.push_back(row);
    m.rmse_max_analog.push_back(r->rmse_analog.maxCoeff() / r->i_ref_peak);
    m.sum_g.push_back(r->cumulative_conductance);
    m.profiles.push_back(diagonal_profile(r->rmse_analog));
  }

  // validate monotone trends; violations are reported, not fatal
  auto warn = [&](std::ostringstream& os) { m.warnings.push_back(os.str()); };
  for (size_t i = 1; i < m.sizes.size(); ++i) {
    if (m.sum_g[i] <= m.sum_g[i - 1]) {
      std::ostringstream os;
      os << "sum_g not increasing between N=" << m.sizes[i - 1] << " and N=" << m.sizes[i]
         << " (" << m.sum_g[i - 1] << " -> " << m.sum_g[i] << ")";
      warn(os);
    }
    for (size_t k = 0; k < bits.size(); ++k)
      if (m.rmse_max[i][k] < m.rmse_max[i - 1][k]) {
        std::ostringstream os;
        os << "rmse_max decreasing in size at " << bits[k] << " bits: N=" << m.sizes[i - 1]
           << " -> N=" << m.sizes[i] << " (" << m.rmse_max[i - 1][k] << " -> "
           << m.rmse_max[i][k] << ")";
        warn(os);
      }
  }
  for (size_t i = 0; i < m.sizes.size(); ++i)
    for (size_t k = 1; k < bits.size(); ++k)
      if (m.rmse_max[i][k] > m.rmse_max[i][k - 1]) {
        std::ostringstream os;
        os << "rmse_max increasing in bits at N=" << m.sizes[i] << ": " << bits[k - 1]
           << "b -> " << bits[k] << "b (" << m.rmse_max[i][k - 1] << " -> "
           << m.rmse_max[i][k] << ")";
        warn(os);
      }
  return m;
}

inline std::vector<double> resample_profile(const NormalizedProfile& p,
                                            const std::vector<double>& grid) {
  std::vector<double> out(grid.size());
  for (size_t i = 0; i < grid.size(); ++i)
    out[i] = detail::pw_linear(p.x, p.y, grid[i]);
  return out;
}

struct CollapseReport {
  struct Pair {
    int size_a, size_b;
    double max_deviation;
  };
  std::vector<Pair> pairs;
  double max_deviation = 0.0;
};

// Resamples every normalized diagonal profile onto a common abscissa and
// reports pairwise max absolute deviation; a validation gate for the
// size-independence of the error distribution.
inline CollapseReport normalized_profile_collapse(const SurrogateModel& m,
                                                  int grid_points = 101) {
  if (m.profiles.size() < 2)
    throw InsufficientSizes("normalized_profile_collapse: need at least 2 profiles");
  std::vector<double> grid(static_cast<size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    grid[static_cast<size_t>(i)] = static_cast<double>(i) / (grid_points - 1);
  std::vector<std::vector<double>> resampled;
  for (const auto& p : m.profiles) resampled.push_back(resample_profile(p, grid));
  CollapseReport report;
  for (size_t a = 0; a < resampled.size(); ++a)
    for (size_t b = a + 1; b < resampled.size(); ++b) {
      double dev = 0.0;
      for (size_t i = 0; i < grid.size(); ++i)
        dev = std::max(dev, std::abs(resampled[a][i] - resampled[b][i]));
      report.pairs.push_back({m.sizes[a], m.sizes[b], dev});
      report.max_deviation = std::max(report.max_deviation, dev);
    }
  return report;
}

// Full-scale reconstruction of the diagonal RMSE curve for any size in
// range: mean collapsed profile times the predicted RMSE_max.
inline std::vector<double> reconstruct_diagonal(const SurrogateModel& m, double n,
                                                double bits, int grid_points = 101) {
  std::vector<double> grid(static_cast<size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    grid[static_cast<size_t>(i)] = static_cast<double>(i) / (grid_points - 1);
  std::vector<double> mean(grid.size(), 0.0);
  for (const auto& p : m.profiles) {
    auto r = resample_profile(p, grid);
    for (size_t i = 0; i < grid.size(); ++i) mean[i] += r[i];
  }
  double scale = m.predict_rmse_max(n, bits) / static_cast<double>(m.profiles.size());
  for (auto& v : mean) v *= scale;
  return mean;
}

}  // namespace xbar
