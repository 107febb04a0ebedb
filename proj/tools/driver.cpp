#include "driver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "orbitlab/calibration.hpp"
#include "orbitlab/equidist.hpp"
#include "orbitlab/margulis.hpp"
#include "orbitlab/parallel.hpp"
#include "orbitlab/projection.hpp"
#include "orbitlab/rng.hpp"

namespace orbitlab {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string header() {
  auto now = std::chrono::system_clock::now().time_since_epoch();
  long long ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  return "# generated_at=" + std::to_string(ms) + "\n";
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

LatticeId lattice_from_name(const std::string& n, bool* ok) {
  *ok = true;
  if (n == "SL2_GaussianIntegers") return LatticeId::SL2_GaussianIntegers;
  if (n == "SL2Z_x_SL2Z") return LatticeId::SL2Z_x_SL2Z;
  if (n == "SL2_ZSqrt2") return LatticeId::SL2_ZSqrt2;
  *ok = false;
  return LatticeId::SL2_GaussianIntegers;
}

std::string cache_dir_of(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("ORBITLAB_CACHE_DIR")) return env;
  if (!cfg.cache_dir.empty()) return cfg.cache_dir;
  return cfg.out_dir + "/cache";
}

// the standing generic base point of the experiments: bounded transcendental
// entries, far from the periodic H-orbits the detector knows about
QuotientPoint generic_point(LatticeId lat) {
  AmbientGroup g = lattice_group(lat);
  Mat2 mh;
  mh << 0.11, 0.23, 0.07, -0.11;
  return reduce_point(mul(exp_g(lie_h(g, mh)), exp_g(lie_r3(g, 0.03, -0.02, 0.05))), lat);
}

QuotientPoint bump_point(LatticeId lat) {
  AmbientGroup g = lattice_group(lat);
  Mat2 mh;
  mh << 0.21, 0.13, -0.17, -0.21;
  return reduce_point(mul(exp_g(lie_h(g, mh)), exp_g(lie_r3(g, 0.04, 0.02, -0.03))), lat);
}

std::vector<RVec> cantor_product(double scale, bool centered) {
  std::vector<double> one;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d)
          one.push_back(3 * a / 4.0 + 3 * b / 16.0 + 3 * c / 64.0 + 3 * d / 256.0);
  std::vector<RVec> out;
  double shift = centered ? 0.5 : 0.0;
  for (double x : one)
    for (double y : one)
      for (double z : one) out.push_back(scale * RVec(x - shift, y - shift, z - shift));
  return out;
}

// ----- subcommand suites ----------------------------------------------------

RunResult run_contraction(const ExperimentConfig& cfg) {
  RunResult res;
  MAlphaResult ma = solve_m_alpha(cfg.alpha, 64, cfg.seed);
  std::ostringstream js;
  bool pass = ma.ok;
  double worst = 0;
  int checked = 0;
  if (ma.ok) {
    Rng rng = Rng::stream(cfg.seed, 0xF00D);
    int n = std::max(50, cfg.samples / 50);
    for (int i = 0; i < n; ++i) {
      LieVector w = lie_r3(AmbientGroup::SL2C, rng.sym(1), rng.sym(1), rng.sym(1));
      if (lie_norm(w) < 0.1) continue;
      ContractionCheck c = contraction_check(w, cfg.alpha, ma.m);
      pass = pass && c.ok && c.pass;
      worst = std::max(worst, c.lhs / (std::exp(-1.0) * std::pow(lie_norm(w), -cfg.alpha)));
      ++checked;
    }
  }
  js << "{\"alpha\":" << fmt(cfg.alpha) << ",\"m_alpha\":" << ma.m
     << ",\"checked\":" << checked << ",\"worst_ratio\":" << fmt(worst)
     << ",\"seed\":" << cfg.seed << ",\"pass\":" << (pass ? "true" : "false") << "}\n";
  res.artifacts.push_back({"contraction.json", header() + js.str()});
  res.summary = "contraction: m_alpha=" + std::to_string(ma.m) +
                " worst_ratio=" + fmt(worst);
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_regularize(const ExperimentConfig& cfg) {
  RunResult res;
  const double a = 0.6, e = 0.02;
  double lo = std::pow(4096.0, -(3 - a + 5 * e) / (3 - a + 20 * e));
  double hi = std::pow(4096.0, -e);
  std::vector<std::pair<std::string, std::vector<RVec>>> suites;
  std::vector<RVec> grid;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j)
      for (int k = 0; k < 16; ++k) grid.push_back(RVec(i / 16.0, j / 16.0, k / 16.0));
  suites.push_back({"uniform_grid", grid});
  std::vector<RVec> seg;
  RVec dir(1.0, 0.71, 0.333);
  dir /= rvec_norm(dir);
  for (int i = 0; i < 4096; ++i) seg.push_back((i / 4096.0) * dir);
  suites.push_back({"segment", seg});
  suites.push_back({"cantor_product", cantor_product(1.0, false)});

  std::ostringstream js;
  bool pass = true;
  for (auto& [name, pts] : suites) {
    RegularizeResult r = dyadic_regularize(pts, a, e);
    bool ok = r.ok && r.b1 >= lo && r.b1 <= hi && r.cert.pass;
    pass = pass && ok;
    js << "{\"suite\":\"" << name << "\",\"b1\":" << fmt(r.b1) << ",\"window\":[" << fmt(lo)
       << "," << fmt(hi) << "],\"k1\":" << r.k1 << ",\"k2\":" << r.k2
       << ",\"cert_constant\":" << fmt(r.cert.fitted_constant)
       << ",\"energy_D\":" << fmt(r.energy_D) << ",\"pass\":" << (ok ? "true" : "false")
       << "}\n";
  }
  res.artifacts.push_back({"regularize.jsonl", header() + js.str()});
  res.summary = "regularize: three synthetic suites";
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_projection_verify(const ExperimentConfig& cfg) {
  RunResult res;
  PointSetMeasure E;
  E.pts = cantor_product(1.0, true);
  E.b0 = 1.0 / 256.0;
  E.b1 = 1.0;
  E.alpha = 1.5;
  RegularityCertificate cert = verify_regularity(E.pts, E.b0, E.b1, E.alpha, 1e9);
  E.upsilon = cert.fitted_constant;
  E.certified = true;
  ProjectionReport rep = verify_projection_theorem(E, cfg.kappa, 0.0, 1.0, 100, 9);
  rep.seed = cfg.seed;
  bool pass = rep.pass && rep.fitted_c <= 2.0 * calib::kProjectionCKappaFixture;
  res.artifacts.push_back({"projection_report.json", header() + projection_report_json(rep) + "\n"});
  res.summary = "projection-verify: C_kappa=" + fmt(rep.fitted_c);
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_pipeline(const ExperimentConfig& cfg) {
  RunResult res;
  LatticeCache cache = cached_lattice(cfg.lattice, cfg.cache_depth, cache_dir_of(cfg));
  QuotientPoint x1 = generic_point(cfg.lattice);
  PipelineConfig pcfg;
  pcfg.eta = cfg.eta;
  pcfg.seed = cfg.seed;
  pcfg.beta0 = cfg.beta0;
  pcfg.localization_divisor = 3.0;
  std::vector<RVec> F = cantor_product(cfg.eta * cfg.eta, true);
  PipelineResult r = project_pipeline(F, x1, 0.6, 0.02, pcfg, cache);
  std::ostringstream js;
  double lo = std::pow(4096.0, -(3 - 0.6 + 5 * 0.02) / (3 - 0.6 + 20 * 0.02));
  double hi = std::pow(4096.0, -0.02);
  bool pass = r.ok && r.b1_norm >= lo && r.b1_norm <= hi && r.report.pass && r.rho_pass &&
              r.membership_c <= 4.0;
  js << "{\"ok\":" << (r.ok ? "true" : "false") << ",\"error\":\"" << r.error << "\""
     << ",\"b1_norm\":" << fmt(r.b1_norm) << ",\"b1_abs\":" << fmt(r.b1_abs)
     << ",\"t\":" << fmt(r.t) << ",\"r_star\":" << fmt(r.r_star) << ",\"r0\":" << fmt(r.r0)
     << ",\"support\":" << r.I.size() << ",\"rho_C\":" << fmt(r.rho_fitted_c)
     << ",\"membership_C\":" << fmt(r.membership_c) << ",\"energy_D\":" << fmt(r.energy_D)
     << ",\"seed\":" << cfg.seed << ",\"pass\":" << (pass ? "true" : "false") << "}\n";
  res.artifacts.push_back({"pipeline.json", header() + js.str()});
  res.summary = "pipeline: |I|=" + std::to_string(r.I.size());
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_bootstrap(const ExperimentConfig& cfg) {
  RunResult res;
  LatticeCache cache = cached_lattice(cfg.lattice, cfg.cache_depth, cache_dir_of(cfg));
  QuotientPoint x0 = generic_point(cfg.lattice);
  BootstrapConfig bcfg;
  bcfg.alpha = cfg.alpha;
  bcfg.epsilon = std::max(cfg.epsilon, 0.01);
  bcfg.eta = std::min(cfg.eta, 0.004);
  bcfg.seed = cfg.seed;
  bcfg.r_samples = std::min(cfg.samples, 300);
  BootstrapResult r = bootstrap_run(x0, 2.0, bcfg, cache);
  std::ostringstream js;
  for (const BootstrapIterationRecord& it : r.trace)
    js << "{\"iter\":" << it.iter << ",\"num_sheets\":" << it.num_sheets
       << ",\"beta\":" << fmt(it.beta) << ",\"max_f\":" << fmt(it.max_f) << ",\"branch\":\""
       << it.branch << "\",\"seed\":" << it.seed << "}\n";
  if (r.periodic_detected)
    js << "{\"branch\":\"closing-lemma\",\"periodic\":true,\"seed\":" << cfg.seed << "}\n";
  res.artifacts.push_back({"bootstrap_trace.jsonl", header() + js.str()});
  res.summary = "bootstrap: " + std::to_string(r.trace.size()) + " iterations";
  res.exit_code = r.ok ? 0 : 1;
  return res;
}

RunResult run_recurrence(const ExperimentConfig& cfg) {
  RunResult res;
  LatticeCache cache = cached_lattice(cfg.lattice, std::max(cfg.cache_depth, 8),
                                      cache_dir_of(cfg));
  QuotientPoint x0 = reduce_point(identity(lattice_group(cfg.lattice)), cfg.lattice);
  const std::vector<double> eps{0.02, 0.05, 0.1, 0.2};
  std::vector<double> fracs(eps.size());
  parallel_tasks(static_cast<int>(eps.size()), cfg.threads, [&](int i) {
    fracs[i] = recurrence_fraction(x0, cfg.t, 0.0, 1.0, eps[i], cfg.samples,
                                   cfg.seed + 11 * i, cache);
  });
  double slope = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) slope = std::max(slope, fracs[i] / eps[i]);
  bool pass = slope <= 2.0 * calib::kRecurrenceSlope &&
              fracs[0] / eps[0] < slope + 1e-12;  // no blow-up toward small eps
  for (std::size_t i = 0; i + 1 < eps.size(); ++i)
    pass = pass && fracs[i] <= fracs[i + 1] + 1e-12;
  std::ostringstream csv;
  csv << "eps,fraction,fitted_slope,seed\n";
  for (std::size_t i = 0; i < eps.size(); ++i)
    csv << fmt(eps[i]) << "," << fmt(fracs[i]) << "," << fmt(slope) << "," << cfg.seed << "\n";
  res.artifacts.push_back({"recurrence.csv", header() + csv.str()});
  res.summary = "recurrence: fitted slope " + fmt(slope);
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_equidist(const ExperimentConfig& cfg) {
  RunResult res;
  LatticeCache small = cached_lattice(cfg.lattice, 4, cache_dir_of(cfg));
  LatticeCache cache = cached_lattice(cfg.lattice, cfg.cache_depth, cache_dir_of(cfg));
  QuotientPoint x1 = generic_point(cfg.lattice);
  TestFunction f{bump_point(cfg.lattice), cfg.radius, ProfileKind::Bump, 1.0};

  PipelineConfig pcfg;
  pcfg.eta = cfg.eta;
  pcfg.seed = cfg.seed;
  pcfg.beta0 = cfg.beta0;
  pcfg.localization_divisor = 3.0;
  PipelineResult pr = project_pipeline(cantor_product(cfg.eta * cfg.eta, true), x1, 0.6, 0.02,
                                       pcfg, cache);
  if (!pr.ok) {
    res.summary = "equidist: pipeline failed: " + pr.error;
    return res;
  }
  SparseMeasure rho;
  rho.support = pr.I;
  rho.weights = pr.weights;
  rho.scale_b = 1.0 / 256.0;
  rho.record = {0.6 - 30 * 0.02, pr.rho_fitted_c, 1.0 / 256.0};
  SparseMeasure dirac = dirac_sparse(pr.I[pr.I.size() / 2]);

  AverageResult haar = horospherical_average(f, x1, 10.0, 12 * cfg.samples, cfg.seed, small);
  const std::vector<double> ts{1.4, 2.05, 2.7};
  struct Cell {
    double rho_disc, rho_err, dirac_disc, dirac_err;
  };
  std::vector<Cell> cells(ts.size());
  parallel_tasks(static_cast<int>(ts.size()), cfg.threads, [&](int i) {
    SparseAverageResult a = sparse_average(f, x1, ts[i], rho, cfg.samples / 2,
                                           cfg.seed + 3 * i, small);
    SparseAverageResult d = sparse_average(f, x1, ts[i], dirac, cfg.samples / 2,
                                           cfg.seed + 3 * i + 1, small);
    cells[i] = {std::abs(a.value - haar.value), a.mc_error, std::abs(d.value - haar.value),
                d.mc_error};
  });
  std::ostringstream csv;
  csv << "t,b,measure,discrepancy,mc_error,seed\n";
  for (std::size_t i = 0; i < ts.size(); ++i) {
    csv << fmt(ts[i]) << "," << fmt(rho.scale_b) << ",rho," << fmt(cells[i].rho_disc) << ","
        << fmt(cells[i].rho_err) << "," << cfg.seed << "\n";
    csv << fmt(ts[i]) << "," << fmt(rho.scale_b) << ",dirac," << fmt(cells[i].dirac_disc) << ","
        << fmt(cells[i].dirac_err) << "," << cfg.seed << "\n";
  }
  bool rho_decays = cells.back().rho_disc <
                    cells.front().rho_disc - 3.0 * (cells.back().rho_err + cells.front().rho_err);
  bool dirac_stalls = cells.back().dirac_disc >= cells.front().dirac_disc - 0.02;
  RhoCheckResult neg = rho_regularity_check(dirac, 1.0 - cfg.epsilon, 1.0 / 256.0);
  bool pass = rho_decays && dirac_stalls && !neg.pass;
  res.artifacts.push_back({"equidist.csv", header() + csv.str()});
  res.summary = "equidist: rho " + fmt(cells.front().rho_disc) + " -> " +
                fmt(cells.back().rho_disc) + ", dirac " + fmt(cells.back().dirac_disc);
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_density(const ExperimentConfig& cfg) {
  RunResult res;
  LatticeCache small = cached_lattice(cfg.lattice, 4, cache_dir_of(cfg));
  LatticeCache cache = cached_lattice(cfg.lattice, cfg.cache_depth, cache_dir_of(cfg));
  std::vector<QuotientPoint> grid = test_grid(cfg.lattice, cfg.eta, 24, cache);
  QuotientPoint x0 = generic_point(cfg.lattice);
  QuotientPoint e = reduce_point(identity(lattice_group(cfg.lattice)), cfg.lattice);
  const std::vector<double> T{100.0, 1000.0, 10000.0};
  std::vector<DensityRow> gen, per;
  parallel_tasks(2, cfg.threads, [&](int i) {
    if (i == 0) gen = density_scan(x0, T, grid, cfg.samples / 8, cfg.seed, small);
    else per = density_scan(e, T, grid, cfg.samples / 8, cfg.seed, small);
  });
  StabilizerReport stab = near_stabilizer_search(e, 1e-8, cache);
  double excursion = cloud_orbit_excursion(e, T.back(), 300, cfg.seed, cache);

  std::ostringstream csv;
  csv << "point,T,covering_radius,n_samples,seed\n";
  for (const DensityRow& r : gen)
    csv << "generic," << fmt(r.T) << "," << fmt(r.covering_radius) << "," << r.n_samples << ","
        << r.seed << "\n";
  for (const DensityRow& r : per)
    csv << "periodic," << fmt(r.T) << "," << fmt(r.covering_radius) << "," << r.n_samples << ","
        << r.seed << "\n";
  bool pass = gen.size() == 3 && gen[0].covering_radius > gen[1].covering_radius &&
              gen[1].covering_radius > gen[2].covering_radius &&
              per[2].covering_radius >= 0.8 * per[0].covering_radius && stab.periodic_flag &&
              excursion <= 1e-3;
  res.artifacts.push_back({"density.csv", header() + csv.str()});
  res.summary = "density: generic " + fmt(gen.empty() ? 0 : gen[0].covering_radius) + " -> " +
                fmt(gen.empty() ? 0 : gen[2].covering_radius);
  res.exit_code = pass ? 0 : 1;
  return res;
}

RunResult run_periodic_f(const ExperimentConfig& cfg) {
  RunResult res;
  LatticeCache cache = cached_lattice(cfg.lattice, cfg.cache_depth, cache_dir_of(cfg));
  int n = std::max(200, cfg.samples / 10);
  auto ys1 = sample_periodic_orbit(cfg.lattice, n, 50, 2, cfg.seed);
  auto ys2 = sample_periodic_orbit(cfg.lattice, n, 50, 2, cfg.seed + 101);
  PeriodicOrbitStats s1 = periodic_orbit_f(ys1, cfg.alpha, 0.25, cache);
  PeriodicOrbitStats s2 = periodic_orbit_f(ys2, cfg.alpha, 0.25, cache);
  double ratio = s2.mean_f > 0 ? s1.mean_f / s2.mean_f : 0;
  bool pass = std::isfinite(s1.mean_f) && s1.mean_f > 0 && ratio >= 0.8 && ratio <= 1.25 &&
              s1.max_count <= calib::kC16 * std::max(1.0, s1.volume_proxy);
  std::ostringstream js;
  js << "{\"samples\":" << s1.samples << ",\"mean_f\":" << fmt(s1.mean_f)
     << ",\"max_f\":" << fmt(s1.max_f) << ",\"max_count\":" << s1.max_count
     << ",\"volume_proxy\":" << fmt(s1.volume_proxy) << ",\"two_seed_ratio\":" << fmt(ratio)
     << ",\"seed\":" << cfg.seed << ",\"pass\":" << (pass ? "true" : "false") << "}\n";
  res.artifacts.push_back({"periodic_f.json", header() + js.str()});
  res.summary = "periodic-f: mean " + fmt(s1.mean_f) + " ratio " + fmt(ratio);
  res.exit_code = pass ? 0 : 1;
  return res;
}

}  // namespace

bool apply_config_line(const std::string& line, ExperimentConfig& cfg) {
  std::string t = trim(line);
  if (t.empty() || t[0] == '#') return true;
  std::size_t eq = t.find('=');
  if (eq == std::string::npos) return false;
  std::string key = trim(t.substr(0, eq));
  std::string val = trim(t.substr(eq + 1));
  bool ok = true;
  if (key == "lattice") cfg.lattice = lattice_from_name(val, &ok);
  else if (key == "seed") cfg.seed = std::strtoull(val.c_str(), nullptr, 10);
  else if (key == "out") cfg.out_dir = val;
  else if (key == "cache_dir") cfg.cache_dir = val;
  else if (key == "threads") cfg.threads = std::atoi(val.c_str());
  else if (key == "alpha") cfg.alpha = std::atof(val.c_str());
  else if (key == "epsilon") cfg.epsilon = std::atof(val.c_str());
  else if (key == "kappa") cfg.kappa = std::atof(val.c_str());
  else if (key == "beta0") cfg.beta0 = std::atof(val.c_str());
  else if (key == "eta") cfg.eta = std::atof(val.c_str());
  else if (key == "cache_depth") cfg.cache_depth = std::atoi(val.c_str());
  else if (key == "samples") cfg.samples = std::atoi(val.c_str());
  else if (key == "t") cfg.t = std::atof(val.c_str());
  else if (key == "radius") cfg.radius = std::atof(val.c_str());
  else cfg.extra[key] = val;
  return ok;
}

bool parse_config_file(const std::string& path, ExperimentConfig& cfg, std::string* err) {
  std::ifstream f(path);
  if (!f) {
    if (err) *err = "cannot open config file: " + path;
    return false;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!apply_config_line(line, cfg)) {
      if (err) *err = "bad config line " + std::to_string(lineno) + ": " + line;
      return false;
    }
  }
  return true;
}

std::vector<std::string> subcommand_names() {
  return {"contraction", "regularize", "projection-verify", "pipeline", "bootstrap",
          "recurrence", "equidist", "density", "periodic-f"};
}

RunResult run_subcommand(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "contraction") return run_contraction(cfg);
  if (name == "regularize") return run_regularize(cfg);
  if (name == "projection-verify") return run_projection_verify(cfg);
  if (name == "pipeline") return run_pipeline(cfg);
  if (name == "bootstrap") return run_bootstrap(cfg);
  if (name == "recurrence") return run_recurrence(cfg);
  if (name == "equidist") return run_equidist(cfg);
  if (name == "density") return run_density(cfg);
  if (name == "periodic-f") return run_periodic_f(cfg);
  RunResult res;
  res.exit_code = 2;
  res.summary = "unknown subcommand: " + name;
  return res;
}

bool write_artifacts(const RunResult& result, const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  for (const auto& [name, content] : result.artifacts) {
    std::ofstream f(cfg.out_dir + "/" + name, std::ios::binary);
    if (!f) return false;
    f << content;
    if (!f) return false;
  }
  return true;
}

std::string strip_timestamp_header(const std::string& artifact) {
  std::size_t nl = artifact.find('\n');
  if (nl == std::string::npos) return artifact;
  if (artifact.rfind("# generated_at=", 0) == 0) return artifact.substr(nl + 1);
  return artifact;
}

}  // namespace orbitlab
