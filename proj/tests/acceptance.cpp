// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line. Heavy intermediates (calibration, per-size sweeps) are
// cached in ./acceptance_ws so criteria sharing them never recompute.

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "dense_oracle.hpp"
#include "xbar/xbar.hpp"

using namespace xbar;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

struct Criterion {
  int id;
  std::string title;
  struct Item {
    std::string what;
    bool ok;
  };
  std::vector<Item> items;

  void expect(const std::string& what, bool ok) { items.push_back({what, ok}); }

  void finish() {
    bool pass = true;
    for (const auto& i : items) pass = pass && i.ok;
    std::printf("[acceptance] criterion %d (%s): %s\n", id, title.c_str(),
                pass ? "PASS" : "FAIL");
    for (const auto& i : items)
      if (!i.ok) std::printf("  failed: %s\n", i.what.c_str());
    std::fflush(stdout);
    for (const auto& i : items) {
      INFO(i.what);
      CHECK(i.ok);
    }
  }
};

// Calibration targets shipped with the toolkit: direct 128x128 sum and the
// 128-sub-block sum of the 256x256 array.
const std::vector<AnchorPoint> kAnchors{{128, 128, 0.790}, {256, 128, 0.630}};

// Calibrated config plus the characterization campaign, computed once and
// cached on disk across processes.
struct Campaign {
  ToolkitConfig config;  // calibrated
  Workspace ws{"acceptance_ws"};
  CalibrationResult cal;
  std::map<int, CharacterizationResult> results;
  SurrogateModel model;

  static Campaign& instance() {
    static Campaign c = make();
    return c;
  }

  const CharacterizationResult& at(int n) const { return results.at(n); }

 private:
  static Campaign make() {
    Campaign c;
    ToolkitConfig base;  // uncalibrated defaults
    fs::create_directories(c.ws.root());
    fs::path cal_file = c.ws.root() / "calibration.json";
    bool cached = false;
    if (fs::exists(cal_file)) {
      nlohmann::json j;
      std::ifstream(cal_file) >> j;
      if (j.value("base_fingerprint", std::string()) == base.fingerprint()) {
        c.cal.g_lrs = j.at("g_lrs").get<double>();
        c.cal.r_seg = j.at("r_seg").get<double>();
        c.cal.residuals = j.at("residuals").get<std::vector<double>>();
        c.cal.evaluations = j.at("evaluations").get<int>();
        cached = true;
      }
    }
    if (!cached) {
      CalibrationOptions opts;
      opts.rho_min = 1e-7;
      opts.rho_max = 1e-4;
      c.cal = calibrate_to_anchors(kAnchors, base.device_params(),
                                   base.crossbar_config(1), opts);
      nlohmann::json j{{"base_fingerprint", base.fingerprint()},
                       {"g_lrs", c.cal.g_lrs},
                       {"r_seg", c.cal.r_seg},
                       {"residuals", c.cal.residuals},
                       {"evaluations", c.cal.evaluations}};
      std::ofstream(cal_file) << j.dump(2) << '\n';
    }
    c.config = base;
    c.config.device.g_lrs = c.cal.g_lrs;
    c.config.wire.r_seg = c.cal.r_seg;
    for (int n : c.config.surrogate.sizes) {
      std::printf("[acceptance] characterize N=%d%s\n", n,
                  c.ws.has_characterization(n, c.config.fingerprint(),
                                            c.config.surrogate.bits)
                      ? " (cached)"
                      : "");
      std::fflush(stdout);
      c.results.emplace(n, c.ws.characterize_cached(c.config, n, 1));
    }
    std::vector<CharacterizationResult> all;
    for (const auto& [n, r] : c.results) all.push_back(r);
    c.model = build_surrogate(all, c.config.surrogate.bits);
    c.ws.save_surrogate(c.model);
    return c;
  }
};

AdcEnergyModel default_adc() { return AdcEnergyModel::from_anchor(14, 39.19e-12); }

DseSettings default_settings(const ToolkitConfig& config) {
  DseSettings s;
  s.v_drive = config.dse.v_drive;
  s.ops_per_mac = config.dse.ops_per_mac;
  s.dac_power_per_row = config.dse.dac_power_per_row;
  return s;
}

}  // namespace

TEST_CASE("oracle equivalence", "[c1]") {
  Criterion c{1, "sparse solver vs dense oracle"};
  std::mt19937 rng(424242);
  std::uniform_real_distribution<double> cond(5e-6, 2e-4), ratio(5.0, 200.0),
      res(0.01, 10.0), volt(-1.0, 1.0);
  std::uniform_int_distribution<int> size(1, 4);
  std::bernoulli_distribution coin(0.5);
  int worst_ok = true;
  double worst = 0.0;
  for (int inst = 0; inst < 250; ++inst) {
    int n = size(rng);
    CrossbarConfig cfg;
    cfg.n = n;
    cfg.r_seg = res(rng);
    cfg.termination =
        inst % 3 == 0 ? Termination::double_sided : Termination::single_sided;
    double g_lrs = cond(rng);
    DeviceParams device = DeviceParams::fit(g_lrs, g_lrs / ratio(rng), 1e-6, 0.2);
    CellStateMatrix st = CellStateMatrix::uniform(n, CellState::lrs);
    for (auto& s : st.states) s = coin(rng) ? CellState::lrs : CellState::hrs;
    Eigen::VectorXd rv(n);
    for (int i = 0; i < n; ++i) rv[i] = volt(rng);

    NodalSystem system(cfg, st, device);
    DcSolution sol = system.solve_dc(rv);
    oracle::DenseSolution ref = oracle::solve_linear(cfg, st, device, rv);
    double vs = std::max(ref.x.lpNorm<Eigen::Infinity>(), 1e-9);
    double is = std::max(ref.column_currents.lpNorm<Eigen::Infinity>(), 1e-15);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        worst = std::max(worst,
                         std::abs(sol.v_wordline(i, j) - ref.x[i * n + j]) / vs);
        worst = std::max(
            worst, std::abs(sol.v_bitline(i, j) - ref.x[n * n + i * n + j]) / vs);
      }
    for (int j = 0; j < n; ++j)
      worst = std::max(
          worst, std::abs(sol.column_currents[j] - ref.column_currents[j]) / is);
    if (worst > 1e-9) worst_ok = false;
  }
  c.expect(fmt("250 random instances, worst relative deviation %.3g <= 1e-9", worst),
           worst_ok);
  c.finish();
}

TEST_CASE("parasitic-free degeneracy", "[c2]") {
  Criterion c{2, "r_seg = 0 degeneracy"};
  DeviceParams device = DeviceParams::fit(48e-6, 0.48e-6, 2.0, 0.2);
  for (int n : {8, 32}) {
    CrossbarConfig cfg;
    cfg.n = n;
    cfg.r_seg = 0.0;
    TestbenchConfig tb;
    Eigen::MatrixXd rmse = per_cell_rmse(cfg, device, tb);
    c.expect(fmt("N=%.0f rmse max %.3g <= 1e-15", n, rmse.maxCoeff()),
             rmse.maxCoeff() <= 1e-15);
    Eigen::MatrixXd geff = extract_geff(cfg, device, 0.2);
    double dev = (geff.array() - 48e-6).abs().maxCoeff();
    c.expect(fmt("N=%.0f geff deviation from chord %.3g <= 1e-15", n, dev),
             dev <= 1e-15);
  }
  c.finish();
}

TEST_CASE("elmore scaling", "[c3]") {
  Criterion c{3, "delay quadruples with array size"};
  for (int n : {64, 128}) {
    CrossbarConfig a, b;
    a.n = n;
    b.n = 2 * n;
    double ratio = elmore_delay(b) / elmore_delay(a);
    c.expect(fmt("N=%.0f -> 2N ratio %.4f in [3.9, 4.1]", n, ratio),
             ratio > 3.9 && ratio < 4.1);
  }
  c.finish();
}

TEST_CASE("conductance anchor calibration", "[c4]") {
  Criterion c{4, "cumulative-conductance anchors"};
  auto& campaign = Campaign::instance();
  double direct128 = campaign.at(128).cumulative_conductance;
  c.expect(fmt("direct 128 sum %.4f S within 5%% of 0.790", direct128),
           std::abs(direct128 / 0.790 - 1.0) <= 0.05);
  double sub = campaign.at(256).geff.topLeftCorner(128, 128).sum();
  double gap = 1.0 - sub / direct128;
  c.expect(fmt("128-sub-of-256 sum %.4f S, gap %.1f%% in [15, 25]", sub, gap * 100),
           gap >= 0.15 && gap <= 0.25);
  for (double r : campaign.cal.residuals)
    c.expect(fmt("calibration residual %.2f%% within 5%%", r * 100),
             std::abs(r) <= 0.05);
  c.finish();
}

TEST_CASE("normalized-rmse collapse", "[c5]") {
  Criterion c{5, "diagonal profile collapse"};
  auto& campaign = Campaign::instance();
  std::vector<CharacterizationResult> three{campaign.at(64), campaign.at(128),
                                            campaign.at(256)};
  auto model = build_surrogate(three, campaign.config.surrogate.bits);
  auto report = normalized_profile_collapse(model);
  for (const auto& p : report.pairs)
    c.expect(fmt("N=%.0f vs N=%.0f deviation %.4f <= 0.1", p.size_a, p.size_b,
                 p.max_deviation),
             p.max_deviation <= 0.1);
  c.finish();
}

TEST_CASE("surrogate fidelity", "[c6]") {
  Criterion c{6, "leave-one-out prediction at N=128"};
  auto& campaign = Campaign::instance();
  std::vector<CharacterizationResult> knots{campaign.at(64), campaign.at(192)};
  auto loo = build_surrogate(knots, campaign.config.surrogate.bits);
  const auto& direct = campaign.at(128);
  double sg = loo.predict_sum_g(128);
  double sg_rel = sg / direct.cumulative_conductance - 1.0;
  c.expect(fmt("sum_g: predicted %.4f vs direct %.4f (%.2f%%)", sg,
               direct.cumulative_conductance, 0.0) +
               fmt(" rel %.2f%% within 15%%", sg_rel * 100),
           std::abs(sg_rel) <= 0.15);
  for (int b : campaign.config.surrogate.bits) {
    double pred = loo.predict_rmse_max(128, b);
    double truth = direct.rmse_bits.at(b).maxCoeff() / direct.i_ref_peak;
    double rel = pred / truth - 1.0;
    c.expect(fmt("rmse_max at %.0f bits: rel %.2f%% within 15%%", b, rel * 100),
             std::abs(rel) <= 0.15);
  }
  c.finish();
}

TEST_CASE("power-capped case study", "[c7]") {
  Criterion c{7, "14-bit exploration under a 1.2 W budget"};
  auto& campaign = Campaign::instance();
  ExplorationGrid grid;
  grid.n_values = ExplorationGrid::int_range(campaign.model.sizes.front(),
                                             campaign.model.sizes.back(), 1);
  grid.f_values = ExplorationGrid::f_range(10e6, 500e6, 1e6);
  grid.bits_values = {14};
  Constraints cons;
  cons.max_power = 1.2;
  auto res = explore(campaign.model, default_adc(), grid, cons,
                     default_settings(campaign.config));
  REQUIRE(res.optimum);
  const auto& opt = *res.optimum;
  c.expect(fmt("optimum N=%.0f in [120, 200]", opt.point.n),
           opt.point.n >= 120 && opt.point.n <= 200);
  c.expect(fmt("optimum f=%.0f MHz in [70, 170]", opt.point.f / 1e6),
           opt.point.f >= 70e6 && opt.point.f <= 170e6);
  c.expect(fmt("efficiency %.3f within 2x of 2.27", opt.efficiency),
           opt.efficiency >= 2.27 / 2 && opt.efficiency <= 2.27 * 2);

  // boundary binding: one frequency step further breaks the budget
  size_t ni = 0, fi = 0;
  for (size_t i = 0; i < grid.n_values.size(); ++i)
    if (grid.n_values[i] == opt.point.n) ni = i;
  for (size_t i = 0; i < grid.f_values.size(); ++i)
    if (grid.f_values[i] == opt.point.f) fi = i;
  bool binding = fi + 1 >= grid.f_values.size() ||
                 res.at(ni, fi + 1, 0).power.total() > 1.2;
  c.expect(fmt("power %.4f W, next f step exceeds the budget", opt.power.total()),
           binding);

  // feasibility boundary f_max(N) has negative slope
  std::vector<double> boundary(grid.n_values.size(), -1.0);
  for (size_t i = 0; i < grid.n_values.size(); ++i)
    for (size_t f = 0; f < grid.f_values.size(); ++f)
      if (res.at(i, f, 0).feasible) boundary[i] = grid.f_values[f];
  bool monotone = true;
  for (size_t i = 1; i < boundary.size(); ++i)
    if (boundary[i] > boundary[i - 1]) monotone = false;
  c.expect(fmt("feasible-f boundary non-increasing, %.0f -> %.0f MHz",
               boundary.front() / 1e6, boundary.back() / 1e6),
           monotone && boundary.front() > boundary.back());

  // the optimum beats its boundary neighbors
  bool beats = true;
  for (int dn : {-1, 1}) {
    size_t nj = ni + dn;
    if (nj >= grid.n_values.size() || boundary[nj] < 0) continue;
    for (size_t f = 0; f < grid.f_values.size(); ++f)
      if (grid.f_values[f] == boundary[nj] &&
          res.at(nj, f, 0).efficiency >= opt.efficiency)
        beats = false;
  }
  c.expect("optimum efficiency exceeds both boundary neighbors", beats);
  c.finish();
}

TEST_CASE("rmse-capped case study", "[c8]") {
  Criterion c{8, "fixed 300 MHz exploration under an error budget"};
  auto& campaign = Campaign::instance();
  ExplorationGrid grid;
  grid.n_values = ExplorationGrid::int_range(campaign.model.sizes.front(),
                                             campaign.model.sizes.back(), 1);
  grid.f_values = {300e6};
  grid.bits_values = ExplorationGrid::int_range(campaign.model.bits.front(),
                                                campaign.model.bits.back(), 1);
  Constraints cons;
  cons.max_rmse = 0.15;
  auto res = explore(campaign.model, default_adc(), grid, cons,
                     default_settings(campaign.config));
  REQUIRE(res.optimum);
  const auto& opt = *res.optimum;
  c.expect(fmt("optimum bits=%.0f in [7, 10]", opt.point.bits),
           opt.point.bits >= 7 && opt.point.bits <= 10);

  // boundary optimum: growing the array or coarsening the ADC breaks the cap
  size_t ni = 0, bi = 0;
  for (size_t i = 0; i < grid.n_values.size(); ++i)
    if (grid.n_values[i] == opt.point.n) ni = i;
  for (size_t i = 0; i < grid.bits_values.size(); ++i)
    if (grid.bits_values[i] == opt.point.bits) bi = i;
  bool binding = (ni + 1 >= grid.n_values.size() ||
                  res.at(ni + 1, 0, bi).rmse > *cons.max_rmse) ||
                 (bi == 0 || res.at(ni, 0, bi - 1).rmse > *cons.max_rmse);
  c.expect(fmt("rmse %.4f at the constraint boundary", opt.rmse), binding);

  // contour orientation: near-vertical (size-driven) error contours at large
  // N; resolution carries more relative weight at small N than at large N
  auto dn = [&](int n, int b) {
    return std::abs(campaign.model.predict_rmse_max(n + 16, b) -
                    campaign.model.predict_rmse_max(n, b));
  };
  auto db = [&](int n, int b) {
    return std::abs(campaign.model.predict_rmse_max(n, b + 1) -
                    campaign.model.predict_rmse_max(n, b));
  };
  int n_small = campaign.model.sizes.front() + 8;
  int n_large = campaign.model.sizes.back() - 32;
  int b_mid = campaign.model.bits[campaign.model.bits.size() / 2];
  if (b_mid + 1 > campaign.model.bits.back())
    b_mid = campaign.model.bits.back() - 1;
  double ratio_small = db(n_small, b_mid) / dn(n_small, b_mid);
  double ratio_large = db(n_large, b_mid) / dn(n_large, b_mid);
  c.expect(fmt("large N=%.0f: size step dominates (dN %.3g > dbits %.3g)", n_large,
               dn(n_large, b_mid), db(n_large, b_mid)),
           dn(n_large, b_mid) > db(n_large, b_mid));
  c.expect(fmt("resolution weight falls with size (dbits/dN %.3f small-N > %.3f "
               "large-N)",
               ratio_small, ratio_large),
           ratio_small > ratio_large);

  c.expect(fmt("efficiency %.3f within 2x of 1.18", opt.efficiency),
           opt.efficiency >= 1.18 / 2 && opt.efficiency <= 1.18 * 2);
  c.finish();
}

TEST_CASE("monotone property suites", "[c9]") {
  Criterion c{9, "grid monotonicity and passivity"};
  auto& campaign = Campaign::instance();
  const auto& m = campaign.model;
  bool rmse_up_in_n = true, rmse_down_in_bits = true;
  for (size_t k = 0; k < m.bits.size(); ++k)
    for (size_t i = 1; i < m.sizes.size(); ++i)
      if (m.rmse_max[i][k] < m.rmse_max[i - 1][k]) rmse_up_in_n = false;
  for (size_t i = 0; i < m.sizes.size(); ++i)
    for (size_t k = 1; k < m.bits.size(); ++k)
      if (m.rmse_max[i][k] > m.rmse_max[i][k - 1]) rmse_down_in_bits = false;
  c.expect("rmse_max non-decreasing in N at every characterized resolution",
           rmse_up_in_n);
  c.expect("rmse_max non-increasing in bits at every characterized size",
           rmse_down_in_bits);

  auto adc = default_adc();
  auto set = default_settings(campaign.config);
  bool power_monotone = true;
  for (int n = m.sizes.front(); n + 16 <= m.sizes.back(); n += 16)
    for (double f : {50e6, 150e6, 400e6})
      for (int b : {6, 10, 14}) {
        double base = total_power(m, adc, {n, f, b}, set.v_drive).total();
        if (total_power(m, adc, {n + 16, f, b}, set.v_drive).total() <= base ||
            total_power(m, adc, {n, f + 25e6, b}, set.v_drive).total() <= base ||
            total_power(m, adc, {n, f, b + 1}, set.v_drive).total() <= base)
          power_monotone = false;
      }
  c.expect("total power strictly increasing in n, f and bits", power_monotone);

  bool passive = true;
  double g = campaign.config.device.g_lrs;
  for (const auto& [n, r] : campaign.results)
    if (r.geff.maxCoeff() > g * (1.0 + 1e-9)) passive = false;
  c.expect(fmt("geff <= isolated chord conductance %.3g S everywhere", g), passive);
  c.finish();
}

TEST_CASE("determinism", "[c10]") {
  Criterion c{10, "byte-identical artifacts across worker counts"};
  ToolkitConfig config;
  config.surrogate.sizes = {16, 32};
  config.surrogate.bits = {6, 8};
  auto slurp = [](const fs::path& p) {
    std::ostringstream os;
    os << std::ifstream(p, std::ios::binary).rdbuf();
    return os.str();
  };
  std::vector<std::string> artifacts;
  for (int workers : {1, 4}) {
    fs::path root = fs::path("determinism_ws") / std::to_string(workers);
    fs::remove_all(root);
    Workspace ws{root};
    std::vector<CharacterizationResult> results;
    for (int n : config.surrogate.sizes)
      results.push_back(ws.characterize_cached(config, n, workers));
    auto model = build_surrogate(results, config.surrogate.bits);
    ws.save_surrogate(model);
    ExplorationGrid grid;
    grid.n_values = ExplorationGrid::int_range(16, 32, 4);
    grid.f_values = ExplorationGrid::f_range(50e6, 200e6, 50e6);
    grid.bits_values = {6, 8};
    Constraints cons;
    cons.max_power = 0.5;
    auto res = explore(model, default_adc(), grid, cons, default_settings(config));
    export_heatmaps(res, root / "explore");
    std::string all;
    for (int n : config.surrogate.sizes) {
      fs::path dir = ws.characterize_dir(n);
      for (const char* f : {"geff.csv", "rmse_analog.csv", "rmse_b6.csv",
                            "rmse_b8.csv", "meta.json"})
        all += slurp(dir / f);
    }
    all += slurp(ws.surrogate_path());
    for (const char* f : {"power_b6.csv", "efficiency_b8.csv", "rmse_b6.csv",
                          "feasible_b8.csv"})
      all += slurp(root / "explore" / f);
    artifacts.push_back(all);
  }
  c.expect(fmt("workers 1 vs 4: %.0f bytes of artifacts identical",
               static_cast<double>(artifacts[0].size())),
           !artifacts[0].empty() && artifacts[0] == artifacts[1]);
  c.finish();
}
