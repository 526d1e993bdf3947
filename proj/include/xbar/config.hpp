#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xbar/circuit.hpp"
#include "xbar/device.hpp"
#include "xbar/testbench.hpp"

namespace xbar {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Toolkit-wide configuration. Parsing is strict: unknown keys are rejected so
// a typo in a physical parameter cannot silently fall back to a default.
struct ToolkitConfig {
  struct DeviceSection {
    double g_lrs = 48e-6;      // [S], pending calibration
    double hrs_ratio = 100.0;  // g_lrs / g_hrs
    double shape_b = 2.0;      // [1/V]
    double v_read = 0.2;       // [V]
  } device;

  struct WireSection {
    double r_seg = 1.0;        // [ohm], pending calibration
    double c_seg = 0.5e-15;    // [F]
    std::string termination = "single_sided";
    double k_settle = 7.0;     // settling periods per Elmore delay
  } wire;

  struct TestbenchSection {
    int samples_per_segment = 35;
    std::string full_scale_mode = "scaled_by_n";
    double fixed_full_scale = 0.0;  // [A]
    std::string error_state = "lrs";
  } testbench;

  struct SurrogateSection {
    std::vector<int> sizes = {32, 64, 128, 192, 256};
    std::vector<int> bits = {8, 10, 11};
    double collapse_gate = 0.1;
  } surrogate;

  struct DseSection {
    double ops_per_mac = 1.0;
    double dac_power_per_row = 0.0;  // [W]
    double v_drive = 0.70;           // [V], drive amplitude assumed during exploration
    int adc_anchor_bits = 14;
    double adc_anchor_energy = 39.19e-12;  // [J]
  } dse;

  struct PathsSection {
    std::string workspace = "workspace";
  } paths;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(device.g_lrs, "device.g_lrs");
    positive(device.hrs_ratio, "device.hrs_ratio");
    if (device.hrs_ratio <= 1.0) throw ConfigError("config: device.hrs_ratio must exceed 1");
    positive(device.shape_b, "device.shape_b");
    positive(device.v_read, "device.v_read");
    if (wire.r_seg < 0.0 || wire.c_seg < 0.0)
      throw ConfigError("config: wire parasitics must be non-negative");
    positive(wire.k_settle, "wire.k_settle");
    if (wire.termination != "single_sided" && wire.termination != "double_sided")
      throw ConfigError("config: wire.termination must be single_sided or double_sided");
    if (testbench.samples_per_segment < 3)
      throw ConfigError("config: testbench.samples_per_segment must be >= 3");
    if (testbench.full_scale_mode != "scaled_by_n" && testbench.full_scale_mode != "fixed")
      throw ConfigError("config: testbench.full_scale_mode must be scaled_by_n or fixed");
    if (testbench.error_state != "lrs" && testbench.error_state != "hrs")
      throw ConfigError("config: testbench.error_state must be lrs or hrs");
    if (surrogate.sizes.size() < 2)
      throw ConfigError("config: surrogate.sizes needs at least 2 entries");
    positive(dse.ops_per_mac, "dse.ops_per_mac");
    positive(dse.v_drive, "dse.v_drive");
    positive(dse.adc_anchor_energy, "dse.adc_anchor_energy");
    if (dse.adc_anchor_bits < 1) throw ConfigError("config: dse.adc_anchor_bits must be >= 1");
    if (dse.dac_power_per_row < 0.0)
      throw ConfigError("config: dse.dac_power_per_row must be non-negative");
  }

  DeviceParams device_params() const {
    return DeviceParams::fit(device.g_lrs, device.g_lrs / device.hrs_ratio, device.shape_b,
                             device.v_read);
  }

  CrossbarConfig crossbar_config(int n) const {
    CrossbarConfig cfg;
    cfg.n = n;
    cfg.r_seg = wire.r_seg;
    cfg.c_seg = wire.c_seg;
    cfg.termination = wire.termination == "double_sided" ? Termination::double_sided
                                                         : Termination::single_sided;
    cfg.v_drive = device.v_read;
    return cfg;
  }

  TestbenchConfig testbench_config() const {
    TestbenchConfig tb;
    tb.samples_per_segment = testbench.samples_per_segment;
    tb.v_peak = device.v_read;
    tb.error_state = testbench.error_state == "hrs" ? CellState::hrs : CellState::lrs;
    tb.power_state = CellState::lrs;
    tb.full_scale_mode = testbench.full_scale_mode == "fixed" ? FullScaleMode::fixed
                                                              : FullScaleMode::scaled_by_n;
    tb.fixed_full_scale = testbench.fixed_full_scale;
    return tb;
  }

  // Stable hash of the physical sections; embedded in every artifact so stale
  // results from a different configuration are never reused.
  std::string fingerprint() const {
    std::ostringstream os;
    auto num = [&](double v) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf << ';';
    };
    num(device.g_lrs);
    num(device.hrs_ratio);
    num(device.shape_b);
    num(device.v_read);
    num(wire.r_seg);
    num(wire.c_seg);
    os << wire.termination << ';';
    num(wire.k_settle);
    os << testbench.samples_per_segment << ';' << testbench.full_scale_mode << ';';
    num(testbench.fixed_full_scale);
    os << testbench.error_state << ';';
    std::string s = os.str();
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  nlohmann::json to_json() const;
  static ToolkitConfig from_json(const nlohmann::json& j);
  static ToolkitConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& section,
                                std::initializer_list<const char*> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw ConfigError("config: unknown key \"" + section + key + "\"");
  }
}

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json ToolkitConfig::to_json() const {
  return nlohmann::json{
      {"device",
       {{"g_lrs", device.g_lrs},
        {"hrs_ratio", device.hrs_ratio},
        {"shape_b", device.shape_b},
        {"v_read", device.v_read}}},
      {"wire",
       {{"r_seg", wire.r_seg},
        {"c_seg", wire.c_seg},
        {"termination", wire.termination},
        {"k_settle", wire.k_settle}}},
      {"testbench",
       {{"samples_per_segment", testbench.samples_per_segment},
        {"full_scale_mode", testbench.full_scale_mode},
        {"fixed_full_scale", testbench.fixed_full_scale},
        {"error_state", testbench.error_state}}},
      {"surrogate",
       {{"sizes", surrogate.sizes},
        {"bits", surrogate.bits},
        {"collapse_gate", surrogate.collapse_gate}}},
      {"dse",
       {{"ops_per_mac", dse.ops_per_mac},
        {"dac_power_per_row", dse.dac_power_per_row},
        {"v_drive", dse.v_drive},
        {"adc_anchor_bits", dse.adc_anchor_bits},
        {"adc_anchor_energy", dse.adc_anchor_energy}}},
      {"paths", {{"workspace", paths.workspace}}}};
}

inline ToolkitConfig ToolkitConfig::from_json(const nlohmann::json& j) {
  using detail::get_if_present;
  using detail::reject_unknown_keys;
  ToolkitConfig cfg;
  reject_unknown_keys(j, "", {"device", "wire", "testbench", "surrogate", "dse", "paths"});
  if (j.contains("device")) {
    const auto& d = j.at("device");
    reject_unknown_keys(d, "device.", {"g_lrs", "hrs_ratio", "shape_b", "v_read"});
    get_if_present(d, "g_lrs", cfg.device.g_lrs);
    get_if_present(d, "hrs_ratio", cfg.device.hrs_ratio);
    get_if_present(d, "shape_b", cfg.device.shape_b);
    get_if_present(d, "v_read", cfg.device.v_read);
  }
  if (j.contains("wire")) {
    const auto& w = j.at("wire");
    reject_unknown_keys(w, "wire.", {"r_seg", "c_seg", "termination", "k_settle"});
    get_if_present(w, "r_seg", cfg.wire.r_seg);
    get_if_present(w, "c_seg", cfg.wire.c_seg);
    get_if_present(w, "termination", cfg.wire.termination);
    get_if_present(w, "k_settle", cfg.wire.k_settle);
  }
  if (j.contains("testbench")) {
    const auto& t = j.at("testbench");
    reject_unknown_keys(t, "testbench.",
                        {"samples_per_segment", "full_scale_mode", "fixed_full_scale",
                         "error_state"});
    get_if_present(t, "samples_per_segment", cfg.testbench.samples_per_segment);
    get_if_present(t, "full_scale_mode", cfg.testbench.full_scale_mode);
    get_if_present(t, "fixed_full_scale", cfg.testbench.fixed_full_scale);
    get_if_present(t, "error_state", cfg.testbench.error_state);
  }
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    reject_unknown_keys(s, "surrogate.", {"sizes", "bits", "collapse_gate"});
    get_if_present(s, "sizes", cfg.surrogate.sizes);
    get_if_present(s, "bits", cfg.surrogate.bits);
    get_if_present(s, "collapse_gate", cfg.surrogate.collapse_gate);
  }
  if (j.contains("dse")) {
    const auto& d = j.at("dse");
    reject_unknown_keys(d, "dse.",
                        {"ops_per_mac", "dac_power_per_row", "v_drive", "adc_anchor_bits",
                         "adc_anchor_energy"});
    get_if_present(d, "ops_per_mac", cfg.dse.ops_per_mac);
    get_if_present(d, "dac_power_per_row", cfg.dse.dac_power_per_row);
    get_if_present(d, "v_drive", cfg.dse.v_drive);
    get_if_present(d, "adc_anchor_bits", cfg.dse.adc_anchor_bits);
    get_if_present(d, "adc_anchor_energy", cfg.dse.adc_anchor_energy);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown_keys(p, "paths.", {"workspace"});
    get_if_present(p, "workspace", cfg.paths.workspace);
  }
  cfg.validate();
  return cfg;
}

inline ToolkitConfig ToolkitConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

inline void ToolkitConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("config: cannot write " + path.string());
  os << to_json().dump(2) << '\n';
}

}  // namespace xbar
