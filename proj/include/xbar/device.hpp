#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace xbar {

struct DeviceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CellState { lrs, hrs };

inline const char* to_string(CellState s) {
  return s == CellState::lrs ? "lrs" : "hrs";
}

// One resistance state of a cell: I(V) = a * sinh(b * V).
struct SinhCell {
  double a = 0.0;  // current scale [A]
  double b = 0.0;  // voltage shape [1/V]
};

inline double cell_current(const SinhCell& c, double v) {
  return c.a * std::sinh(c.b * v);
}

// dI/dV = a*b*cosh(b*v); exact Newton Jacobian entry.
inline double cell_small_signal_conductance(const SinhCell& c, double v) {
  return c.a * c.b * std::cosh(c.b * v);
}

// Chord conductance I(v)/v, continuous at v = 0.
inline double cell_chord_conductance(const SinhCell& c, double v) {
  if (v == 0.0) return c.a * c.b;
  return cell_current(c, v) / v;
}

// Choose a so that the chord conductance at v_read equals g_target exactly.
inline SinhCell fit_sinh_params(double g_target, double v_read, double shape_b) {
  if (g_target <= 0.0 || v_read <= 0.0 || shape_b <= 0.0)
    throw DeviceError("fit_sinh_params: g_target, v_read and shape_b must be positive");
  return SinhCell{g_target * v_read / std::sinh(shape_b * v_read), shape_b};
}

// Cell coefficients for both states plus the conductance targets they
// were fitted against.
struct DeviceParams {
  SinhCell lrs;
  SinhCell hrs;
  double g_lrs_nominal = 0.0;  // chord conductance target at v_read [S]
  double g_hrs_nominal = 0.0;
  double v_read = 0.0;         // nominal read voltage [V]

  const SinhCell& cell(CellState s) const { return s == CellState::lrs ? lrs : hrs; }

  static DeviceParams fit(double g_lrs, double g_hrs, double shape_b, double v_read) {
    if (g_lrs <= g_hrs || g_hrs <= 0.0)
      throw DeviceError("DeviceParams: need g_lrs > g_hrs > 0");
    DeviceParams p;
    p.lrs = fit_sinh_params(g_lrs, v_read, shape_b);
    p.hrs = fit_sinh_params(g_hrs, v_read, shape_b);
    p.g_lrs_nominal = g_lrs;
    p.g_hrs_nominal = g_hrs;
    p.v_read = v_read;
    p.validate();
    return p;
  }

  void validate() const {
    if (lrs.a <= 0.0 || lrs.b <= 0.0 || hrs.a <= 0.0 || hrs.b <= 0.0)
      throw DeviceError("DeviceParams: cell coefficients must be positive");
    if (g_lrs_nominal <= g_hrs_nominal || g_hrs_nominal <= 0.0)
      throw DeviceError("DeviceParams: need g_lrs > g_hrs > 0");
    if (v_read <= 0.0) throw DeviceError("DeviceParams: v_read must be positive");
    auto chord_ok = [&](const SinhCell& c, double g) {
      double chord = cell_chord_conductance(c, v_read);
      return std::abs(chord - g) <= 1e-9 * g;
    };
    if (!chord_ok(lrs, g_lrs_nominal) || !chord_ok(hrs, g_hrs_nominal))
      throw DeviceError("DeviceParams: chord conductance at v_read does not match nominal");
  }
};

}  // namespace xbar
