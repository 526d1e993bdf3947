#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xbar/config.hpp"
#include "xbar/dse.hpp"
#include "xbar/surrogate.hpp"
#include "xbar/testbench.hpp"

namespace xbar {

struct WorkspaceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a_hex(const std::string& s) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw WorkspaceError("cannot write " + path.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << g17(m(r, c));
    }
    os << '\n';
  }
  if (!os) throw WorkspaceError("write failed for " + path.string());
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw WorkspaceError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw WorkspaceError("malformed number \"" + cell + "\" in " + path.string());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw WorkspaceError("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw WorkspaceError("empty matrix in " + path.string());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows.front().size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace detail

// Layout: <workspace>/characterize/N<size>/ holds meta.json, geff.csv,
// rmse_analog.csv and one rmse_b<bits>.csv per resolution. The surrogate
// lives at <workspace>/surrogate.model, exploration runs under
// <workspace>/explore/<run-id>/.
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path characterize_dir(int size) const {
    return root_ / "characterize" / ("N" + std::to_string(size));
  }
  std::filesystem::path surrogate_path() const { return root_ / "surrogate.model"; }
  std::filesystem::path explore_dir(const std::string& run_id) const {
    return root_ / "explore" / run_id;
  }

  void save_characterization(const CharacterizationResult& result) const {
    namespace fs = std::filesystem;
    fs::path dir = characterize_dir(result.n);
    fs::create_directories(dir);
    detail::write_matrix_csv(dir / "geff.csv", result.geff);
    detail::write_matrix_csv(dir / "rmse_analog.csv", result.rmse_analog);
    std::vector<int> bits;
    for (const auto& [b, m] : result.rmse_bits) {
      detail::write_matrix_csv(dir / ("rmse_b" + std::to_string(b) + ".csv"), m);
      bits.push_back(b);
    }
    nlohmann::json meta{{"n", result.n},
                        {"cumulative_conductance", result.cumulative_conductance},
                        {"i_ref_peak", result.i_ref_peak},
                        {"v_peak", result.v_peak},
                        {"fingerprint", result.fingerprint},
                        {"bits", bits}};
    std::ofstream os(dir / "meta.json", std::ios::binary);
    if (!os) throw WorkspaceError("cannot write " + (dir / "meta.json").string());
    os << meta.dump(2) << '\n';
  }

  CharacterizationResult load_characterization(int size) const {
    namespace fs = std::filesystem;
    fs::path dir = characterize_dir(size);
    std::ifstream is(dir / "meta.json");
    if (!is) throw WorkspaceError("no characterization at " + dir.string());
    nlohmann::json meta;
    try {
      is >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw WorkspaceError("corrupt meta.json in " + dir.string() + ": " + e.what());
    }
    CharacterizationResult result;
    result.n = meta.at("n").get<int>();
    if (result.n != size)
      throw WorkspaceError("meta.json size mismatch in " + dir.string());
    result.cumulative_conductance = meta.at("cumulative_conductance").get<double>();
    result.i_ref_peak = meta.at("i_ref_peak").get<double>();
    result.v_peak = meta.at("v_peak").get<double>();
    result.fingerprint = meta.at("fingerprint").get<std::string>();
    result.geff = detail::read_matrix_csv(dir / "geff.csv");
    result.rmse_analog = detail::read_matrix_csv(dir / "rmse_analog.csv");
    for (int b : meta.at("bits").get<std::vector<int>>())
      result.rmse_bits.emplace(
          b, detail::read_matrix_csv(dir / ("rmse_b" + std::to_string(b) + ".csv")));
    return result;
  }

  // true when a stored result matches the fingerprint and covers all bits
  bool has_characterization(int size, const std::string& fingerprint,
                            const std::vector<int>& bits) const {
    std::ifstream is(characterize_dir(size) / "meta.json");
    if (!is) return false;
    nlohmann::json meta;
    try {
      is >> meta;
    } catch (const nlohmann::json::exception&) {
      return false;
    }
    if (meta.value("fingerprint", std::string()) != fingerprint) return false;
    auto stored = meta.value("bits", std::vector<int>());
    for (int b : bits)
      if (std::find(stored.begin(), stored.end(), b) == stored.end()) return false;
    return true;
  }

  // Cached characterization: reuse when the stored fingerprint and bits list
  // match, otherwise simulate and persist. A solver failure leaves error.txt
  // in the size directory.
  CharacterizationResult characterize_cached(
      const ToolkitConfig& config, int size, int workers = 1,
      const std::function<void(int)>& progress = {}) const {
    const std::string fp = config.fingerprint();
    if (has_characterization(size, fp, config.surrogate.bits))
      return load_characterization(size);
    namespace fs = std::filesystem;
    fs::create_directories(characterize_dir(size));
    try {
      CharacterizationResult result =
          characterize(config.crossbar_config(size), config.device_params(),
                       config.testbench_config(), config.surrogate.bits, fp, workers,
                       progress);
      save_characterization(result);
      std::error_code ec;
      fs::remove(characterize_dir(size) / "error.txt", ec);
      return result;
    } catch (const std::exception& e) {
      std::ofstream os(characterize_dir(size) / "error.txt", std::ios::binary);
      os << e.what() << '\n';
      throw;
    }
  }

  void save_surrogate(const SurrogateModel& model) const {
    std::filesystem::create_directories(root_);
    std::ofstream os(surrogate_path(), std::ios::binary);
    if (!os) throw WorkspaceError("cannot write " + surrogate_path().string());
    os << model.to_json().dump(2) << '\n';
  }

  SurrogateModel load_surrogate() const {
    std::ifstream is(surrogate_path());
    if (!is)
      throw WorkspaceError("no surrogate at " + surrogate_path().string() +
                           " (run the surrogate command first)");
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw WorkspaceError("corrupt surrogate file: " + std::string(e.what()));
    }
    return SurrogateModel::from_json(j);
  }

  // Deterministic run id: hash of the surrogate fingerprint plus every grid,
  // constraint and settings value, so identical runs share a directory.
  static std::string explore_run_id(const std::string& fingerprint,
                                    const ExplorationGrid& grid,
                                    const Constraints& constraints,
                                    const DseSettings& settings) {
    std::ostringstream os;
    os << fingerprint << '|';
    for (int n : grid.n_values) os << n << ',';
    os << '|';
    for (double f : grid.f_values) os << detail::g17(f) << ',';
    os << '|';
    for (int b : grid.bits_values) os << b << ',';
    os << '|';
    if (constraints.max_power) os << detail::g17(*constraints.max_power);
    os << '|';
    if (constraints.max_rmse) os << detail::g17(*constraints.max_rmse);
    os << '|' << constraints.limit_f_by_elmore << '|' << detail::g17(constraints.r_seg)
       << '|' << detail::g17(constraints.c_seg) << '|'
       << detail::g17(constraints.k_settle) << '|'
       << (constraints.termination == Termination::double_sided ? "d" : "s") << '|'
       << detail::g17(settings.v_drive) << '|' << detail::g17(settings.ops_per_mac)
       << '|' << detail::g17(settings.dac_power_per_row);
    return detail::fnv1a_hex(os.str());
  }

 private:
  std::filesystem::path root_;
};

}  // namespace xbar
