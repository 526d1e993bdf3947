#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xbar/device.hpp"

namespace xbar {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonConvergence : SolverError {
  double last_residual;
  NonConvergence(const std::string& msg, double residual)
      : SolverError(msg + " (last residual " + std::to_string(residual) + " A)"),
        last_residual(residual) {}
};
struct SingularSystem : SolverError {
  using SolverError::SolverError;
};

enum class Termination { single_sided, double_sided };

inline const char* to_string(Termination t) {
  return t == Termination::single_sided ? "single_sided" : "double_sided";
}

struct CrossbarConfig {
  int n = 1;             // rows = columns
  double r_seg = 1.0;    // wire resistance per segment [ohm]
  double c_seg = 0.5e-15;  // wire capacitance per segment [F], delay model only
  Termination termination = Termination::single_sided;
  double v_drive = 0.2;  // input amplitude [V]

  void validate() const {
    if (n < 1) throw SolverError("CrossbarConfig: n must be >= 1");
    if (r_seg < 0.0 || c_seg < 0.0) throw SolverError("CrossbarConfig: negative parasitics");
    if (v_drive <= 0.0) throw SolverError("CrossbarConfig: v_drive must be positive");
  }
};

struct CellStateMatrix {
  int n = 0;
  std::vector<CellState> states;  // row-major

  static CellStateMatrix uniform(int n, CellState s) {
    return CellStateMatrix{n, std::vector<CellState>(static_cast<size_t>(n) * n, s)};
  }
  CellState at(int i, int j) const { return states[static_cast<size_t>(i) * n + j]; }
  CellState& at(int i, int j) { return states[static_cast<size_t>(i) * n + j]; }
};

struct SolverOptions {
  double tolerance = 1e-12;  // max |KCL residual| [A]
  int max_iterations = 50;
};

struct DcSolution {
  Eigen::MatrixXd v_wordline;       // n x n node voltages [V]
  Eigen::MatrixXd v_bitline;        // n x n node voltages [V]
  Eigen::VectorXd column_currents;  // current into each virtual-ground terminal [A]
  int newton_iterations = 0;
  double kcl_residual = 0.0;        // max |node current residual| [A]
};

// Worst-case signal path is a 2N-segment RC ladder (N wordline + N bitline);
// double-sided termination halves it.
inline double elmore_delay(const CrossbarConfig& cfg) {
  cfg.validate();
  double segments = cfg.termination == Termination::single_sided ? 2.0 * cfg.n : cfg.n;
  return cfg.r_seg * cfg.c_seg * segments * (segments + 1.0) / 2.0;
}

// Settling-limited clock: f_max = 1 / (k_settle * elmore_delay).
inline double max_frequency(const CrossbarConfig& cfg, double k_settle) {
  if (k_settle <= 0.0) throw SolverError("max_frequency: k_settle must be positive");
  double delay = elmore_delay(cfg);
  if (delay <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (k_settle * delay);
}

// N x N crossbar with per-segment wire resistance as a nonlinear nodal
// system. Unknowns: one wordline and one bitline node per cell (2N^2).
// Wordline node (i,j) = i*n+j, bitline node (i,j) = n^2 + i*n+j.
// Row i is driven through a driver segment into (i,0); bitline (n-1,j)
// reaches the column's virtual ground through a terminal segment.
class NodalSystem {
 public:
  NodalSystem(const CrossbarConfig& cfg, const CellStateMatrix& states,
              const DeviceParams& device)
      : cfg_(cfg), states_(states), device_(device) {
    cfg_.validate();
    if (states_.n != cfg_.n || states_.states.size() != static_cast<size_t>(cfg_.n) * cfg_.n)
      throw SolverError("NodalSystem: cell state matrix does not match array size");
    if (cfg_.r_seg > 0.0) assemble_wire_part();
  }

  int n() const { return cfg_.n; }
  int unknowns() const { return 2 * cfg_.n * cfg_.n; }
  const CrossbarConfig& config() const { return cfg_; }

  // DC operating point for the given per-row driver voltages. Newton with
  // the exact sinh Jacobian and a damped step; the factorization is reused
  // across iterations and calls while it keeps contracting the residual.
  DcSolution solve_dc(const Eigen::VectorXd& row_voltages,
                      const SolverOptions& opts = {},
                      const Eigen::VectorXd* initial_guess = nullptr) {
    const int n = cfg_.n;
    if (row_voltages.size() != n)
      throw SolverError("solve_dc: row voltage vector does not match array size");

    if (cfg_.r_seg == 0.0) return solve_parasitic_free(row_voltages);
    if (row_voltages.isZero(0.0)) {
      x_last_ = Eigen::VectorXd::Zero(unknowns());
      return pack_solution(x_last_, 0, 0.0);
    }

    Eigen::VectorXd rhs = build_rhs(row_voltages);
    Eigen::VectorXd x;
    if (initial_guess && initial_guess->size() == unknowns())
      x = *initial_guess;
    else if (x_last_.size() == unknowns())
      x = x_last_;
    else
      x = Eigen::VectorXd::Zero(unknowns());

    Eigen::VectorXd f = residual(x, rhs);
    double fnorm = f.norm();
    double finf = f.lpNorm<Eigen::Infinity>();
    // Rounding floor: KCL sums of currents ~ gw * |v| cannot cancel below a
    // few ulps of that scale, so an absolute tolerance beneath it is treated
    // as met once the iteration stalls there.
    const double floor_resid = 64.0 * std::numeric_limits<double>::epsilon() *
                               rhs.lpNorm<Eigen::Infinity>();
    bool fresh = false;
    if (!factorized_) {
      refactorize(x);
      fresh = true;
    }
    int iter = 0;
    while (finf > opts.tolerance && finf > floor_resid) {
      if (iter >= opts.max_iterations)
        throw NonConvergence("solve_dc: iteration budget exhausted", finf);
      Eigen::VectorXd dx = ldlt_.solve(-f);
      double step = 1.0;
      Eigen::VectorXd xn, fn;
      double fnnorm = 0.0;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls) {
        xn = x + step * dx;
        fn = residual(xn, rhs);
        fnnorm = fn.norm();
        if (fnnorm < fnorm || fn.lpNorm<Eigen::Infinity>() <= opts.tolerance) {
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) {
        if (!fresh) {
          refactorize(x);
          fresh = true;
          continue;
        }
        if (finf <= floor_resid) break;  // stalled at rounding accuracy
        throw NonConvergence("solve_dc: damped step failed to reduce residual", finf);
      }
      double rate = fnorm > 0.0 ? fnnorm / fnorm : 0.0;
      x = xn;
      f = fn;
      fnorm = fnnorm;
      finf = f.lpNorm<Eigen::Infinity>();
      ++iter;
      if (finf > opts.tolerance && rate > 0.2) {
        refactorize(x);
        fresh = true;
      } else {
        fresh = false;
      }
    }
    x_last_ = x;
    return pack_solution(x, iter, finf);
  }

  const Eigen::VectorXd& last_state() const { return x_last_; }
  void reset_warm_start() { x_last_.resize(0); }

  // Plain-text (row, col, value) dump of the Jacobian at state x (zeros if
  // omitted) for external verification.
  void dump_triplets(std::ostream& os, const Eigen::VectorXd* x = nullptr) const {
    if (cfg_.r_seg == 0.0) return;
    Eigen::VectorXd state =
        x && x->size() == unknowns() ? *x : Eigen::VectorXd::Zero(unknowns());
    Eigen::SparseMatrix<double> jac = jacobian(state);
    for (int k = 0; k < jac.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(jac, k); it; ++it)
        os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  }

 private:
  int widx(int i, int j) const { return i * cfg_.n + j; }
  int bidx(int i, int j) const { return cfg_.n * cfg_.n + i * cfg_.n + j; }

  const SinhCell& cell(int i, int j) const { return device_.cell(states_.at(i, j)); }

  void assemble_wire_part() {
    const int n = cfg_.n;
    const double gw = 1.0 / cfg_.r_seg;
    const bool dbl = cfg_.termination == Termination::double_sided;
    wire_triplets_.clear();
    auto add = [&](int r, int c, double v) { wire_triplets_.emplace_back(r, c, v); };
    auto stamp = [&](int a, int b) {
      add(a, a, gw);
      add(b, b, gw);
      add(a, b, -gw);
      add(b, a, -gw);
    };
    for (int i = 0; i < n; ++i) {
      add(widx(i, 0), widx(i, 0), gw);  // driver segment
      if (dbl) add(widx(i, n - 1), widx(i, n - 1), gw);
      for (int j = 0; j + 1 < n; ++j) stamp(widx(i, j), widx(i, j + 1));
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i + 1 < n; ++i) stamp(bidx(i, j), bidx(i + 1, j));
      add(bidx(n - 1, j), bidx(n - 1, j), gw);  // terminal segment to virtual ground
      if (dbl) add(bidx(0, j), bidx(0, j), gw);
    }
    wire_matrix_.resize(unknowns(), unknowns());
    wire_matrix_.setFromTriplets(wire_triplets_.begin(), wire_triplets_.end());
  }

  Eigen::VectorXd build_rhs(const Eigen::VectorXd& row_voltages) const {
    const int n = cfg_.n;
    const double gw = 1.0 / cfg_.r_seg;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns());
    for (int i = 0; i < n; ++i) {
      rhs[widx(i, 0)] += gw * row_voltages[i];
      if (cfg_.termination == Termination::double_sided)
        rhs[widx(i, n - 1)] += gw * row_voltages[i];
    }
    return rhs;
  }

  // F(x) = A_wire x + I_cells(x) - rhs; zero at a KCL-consistent point.
  Eigen::VectorXd residual(const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) const {
    const int n = cfg_.n;
    Eigen::VectorXd f = wire_matrix_ * x - rhs;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double icell = cell_current(cell(i, j), x[widx(i, j)] - x[bidx(i, j)]);
        f[widx(i, j)] += icell;
        f[bidx(i, j)] -= icell;
      }
    return f;
  }

  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& x) const {
    const int n = cfg_.n;
    std::vector<Eigen::Triplet<double>> trips = wire_triplets_;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        int w = widx(i, j), b = bidx(i, j);
        double g = cell_small_signal_conductance(cell(i, j), x[w] - x[b]);
        trips.emplace_back(w, w, g);
        trips.emplace_back(b, b, g);
        trips.emplace_back(w, b, -g);
        trips.emplace_back(b, w, -g);
      }
    Eigen::SparseMatrix<double> jac(unknowns(), unknowns());
    jac.setFromTriplets(trips.begin(), trips.end());
    return jac;
  }

  void refactorize(const Eigen::VectorXd& x) {
    Eigen::SparseMatrix<double> jac = jacobian(x);
    if (!pattern_analyzed_) {
      ldlt_.analyzePattern(jac);
      pattern_analyzed_ = true;
    }
    ldlt_.factorize(jac);
    if (ldlt_.info() != Eigen::Success)
      throw SingularSystem("solve_dc: nodal matrix factorization failed");
    factorized_ = true;
  }

  DcSolution pack_solution(const Eigen::VectorXd& x, int iters, double res) const {
    const int n = cfg_.n;
    const double gw = 1.0 / cfg_.r_seg;
    DcSolution sol;
    sol.v_wordline.resize(n, n);
    sol.v_bitline.resize(n, n);
    sol.column_currents.resize(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        sol.v_wordline(i, j) = x[widx(i, j)];
        sol.v_bitline(i, j) = x[bidx(i, j)];
      }
    for (int j = 0; j < n; ++j) {
      double ij = gw * x[bidx(n - 1, j)];
      if (cfg_.termination == Termination::double_sided) ij += gw * x[bidx(0, j)];
      sol.column_currents[j] = ij;
    }
    sol.newton_iterations = iters;
    sol.kcl_residual = res;
    return sol;
  }

  // r_seg = 0: every cell sits directly between its driver and virtual ground.
  DcSolution solve_parasitic_free(const Eigen::VectorXd& row_voltages) const {
    const int n = cfg_.n;
    DcSolution sol;
    sol.v_wordline.resize(n, n);
    sol.v_bitline = Eigen::MatrixXd::Zero(n, n);
    sol.column_currents = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        sol.v_wordline(i, j) = row_voltages[i];
        sol.column_currents[j] += cell_current(cell(i, j), row_voltages[i]);
      }
    return sol;
  }

  CrossbarConfig cfg_;
  CellStateMatrix states_;
  DeviceParams device_;
  std::vector<Eigen::Triplet<double>> wire_triplets_;
  Eigen::SparseMatrix<double> wire_matrix_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool pattern_analyzed_ = false;
  bool factorized_ = false;
  Eigen::VectorXd x_last_;
};

}  // namespace xbar
