#pragma once

// Batch front end. Every command writes into --out; JSON outputs embed the run
// configuration under "config", every other file gets a `<name>.json` sidecar
// holding it. Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bifscope/bifscope.hpp"

namespace bifscope::cli {

inline constexpr const char* kVersion = "1.0";

enum ExitCode { kOk = 0, kConfigError = 2, kNumericFailure = 3 };

struct RunConfig {
  std::string command;
  std::string map;
  std::string marked;
  std::string family_file;
  std::string label;
  Window window{};
  bool window_given = false;
  int res = 0;
  double tol = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out = "out";

  // Command-specific.
  cd lambda{0.0, 0.0};
  std::string mapping = "log";
  int flux_points = 0;
  int n = 1, p = 1, n_max = 4, p_max = 3, grid = 20;
  int depth = 4, boxes = 10;
  int jstab_res = 9;
  std::size_t jstab_samples = 20000;
  int lattes_lambdas = 5;
};

inline nlohmann::json window_json(const Window& w) {
  return {{"re_min", w.re_min}, {"re_max", w.re_max}, {"im_min", w.im_min}, {"im_max", w.im_max}};
}

inline nlohmann::json complex_json(cd z) { return {z.real(), z.imag()}; }

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {{"bifscope_version", kVersion},
                      {"command", c.command},
                      {"family", {{"map", c.map}, {"marked", c.marked}, {"label", c.label}, {"file", c.family_file}}},
                      {"window", window_json(c.window)},
                      {"res", c.res},
                      {"tol", c.tol},
                      {"samples", c.samples},
                      {"seed", c.seed},
                      {"threads", c.threads},
                      {"out", c.out}};
  nlohmann::json o;
  if (c.command == "bifmeasure") o = {{"mapping", c.mapping}, {"flux_points", c.flux_points}};
  else if (c.command == "julia" || c.command == "lyapunov") o = {{"lambda", complex_json(c.lambda)}};
  else if (c.command == "misiurewicz") o = {{"n_max", c.n_max}, {"p_max", c.p_max}, {"grid", c.grid}};
  else if (c.command == "similarity")
    o = {{"lambda", complex_json(c.lambda)}, {"n", c.n}, {"p", c.p}, {"depth", c.depth}, {"boxes", c.boxes}};
  else if (c.command == "classify")
    o = {{"jstab_res", c.jstab_res}, {"jstab_samples", c.jstab_samples}, {"lattes_lambdas", c.lattes_lambdas}};
  j["options"] = o.is_null() ? nlohmann::json::object() : o;
  return j;
}

// ---------------------------------------------------------------------------
// Parsing helpers

inline std::vector<double> parse_numbers(const std::string& s, std::size_t count, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
    if (tok.empty() || used != tok.size() || !std::isfinite(x))
      throw Error(ErrorKind::InvalidArgument, std::string("bad number '") + tok + "' in " + what);
    v.push_back(x);
  }
  if (v.size() != count)
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + " needs " + std::to_string(count) + " comma-separated numbers, got '" + s + "'");
  return v;
}

inline Window parse_window(const std::string& s) {
  const auto v = parse_numbers(s, 4, "--window");
  const Window w{v[0], v[1], v[2], v[3]};
  if (!w.valid()) throw Error(ErrorKind::InvalidArgument, "--window needs re_min < re_max and im_min < im_max");
  return w;
}

inline cd parse_complex(const std::string& s) {
  const auto v = parse_numbers(s, 2, "--lambda");
  return {v[0], v[1]};
}

/// Reads {map, marked, domain {re_min, re_max, im_min, im_max}, label} into cfg.
inline void load_family_file(RunConfig& cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(cfg.family_file));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "family file " + cfg.family_file + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidArgument, e.what());
  }
  try {
    cfg.map = j.at("map").get<std::string>();
    cfg.marked = j.at("marked").get<std::string>();
    if (j.contains("label")) cfg.label = j["label"].get<std::string>();
    if (j.contains("domain") && !cfg.window_given) {
      const auto& d = j["domain"];
      const Window w{d.at("re_min").get<double>(), d.at("re_max").get<double>(), d.at("im_min").get<double>(),
                     d.at("im_max").get<double>()};
      if (!w.valid()) throw Error(ErrorKind::InvalidArgument, "family file domain is empty");
      cfg.window = w;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "family file " + cfg.family_file + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Output

class OutputDir {
 public:
  OutputDir(const RunConfig& cfg, std::ostream& log) : dir_(cfg.out), config_(to_json(cfg)), log_(log) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create output directory " + cfg.out + ": " + ec.message());
  }

  void json(const std::string& name, nlohmann::json body) {
    body["config"] = config_;
    raw(name, body.dump(2) + "\n");
  }

  /// Writes a non-JSON file and its sidecar.
  void file(const std::string& name, const std::string& bytes, const std::string& format, nlohmann::json meta = {}) {
    raw(name, bytes);
    nlohmann::json side = {{"file", name}, {"format", format}};
    if (!meta.is_null()) side["meta"] = std::move(meta);
    side["config"] = config_;
    raw(name + ".json", side.dump(2) + "\n");
  }

  const std::vector<std::string>& written() const { return files_; }

 private:
  void raw(const std::string& name, const std::string& bytes) {
    const auto path = dir_ / name;
    io::write_file(path.string(), bytes);
    files_.push_back(name);
    log_ << "wrote " << path.string() << "\n";
  }

  std::filesystem::path dir_;
  nlohmann::json config_;
  std::ostream& log_;
  std::vector<std::string> files_;
};

inline const char* kGridFormat = "little-endian: magic[4], u32 nx, u32 ny, u32 version=1, f32 window[4], f64 values row-major (Im increasing)";

inline void write_pgm(OutputDir& od, const std::string& name, const Grid<double>& g, io::GrayMapping mapping) {
  const io::PgmImage img = io::encode_pgm(g, mapping);
  od.file(name, img.bytes, "pgm", img.mapping);
}

inline io::GrayMapping gray_mapping(const std::string& s) {
  return s == "affine" ? io::GrayMapping::Affine : io::GrayMapping::Log;
}

inline SamplerOptions sampler(const RunConfig& cfg) {
  SamplerOptions so;
  so.seed = cfg.seed;
  so.threads = cfg.threads;
  return so;
}

inline GreenOptions green(const RunConfig& cfg) {
  GreenOptions g;
  g.tol = cfg.tol;
  return g;
}

inline std::optional<double> correlation_or_null(const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return compare_measures(a, b).correlation;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ZeroMassVector) throw;
    return std::nullopt;
  }
}

inline nlohmann::json opt_json(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_bifmeasure(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  const GreenOptions g = green(cfg);
  const Grid<double> pot = bif_potential_grid(pr.family, pr.marked, cfg.window, cfg.res, cfg.res, g, cfg.threads);
  LaplacianOptions lap;
  lap.threads = cfg.threads;
  const GridMeasure m = measure_from_potential(pot, lap);
  const double flux = cfg.flux_points > 0 ? boundary_flux_mass(pr.family, pr.marked, cfg.window, cfg.flux_points, 1e-5, g)
                                          : std::numeric_limits<double>::quiet_NaN();
  const SupportFloor floor;
  od.file("potential.bifg", io::encode_grid(pot, "BIFG"), kGridFormat);
  od.file("measure.bifm", io::encode_grid(m.cell_mass, "BIFM"), kGridFormat);
  write_pgm(od, "measure.pgm", m.cell_mass, gray_mapping(cfg.mapping));
  od.json("stats.json", {{"total_mass", m.total_mass},
                         {"flux_mass", opt_json(flux)},
                         {"negative_raw", m.negative_raw},
                         {"negative_clip", m.negative_clip},
                         {"nonfinite_cells", m.nonfinite_cells},
                         {"support_fraction", m.total_mass > 0.0 ? support_fraction(m, floor) : 0.0},
                         {"support_floor", m.total_mass > 0.0 ? floor.value(m) : floor.absolute},
                         {"interior_cells", m.interior_cells()},
                         {"excluded_scan_cells", pr.family.excluded().size()}});
  out << "total_mass " << m.total_mass << "\n";
  return kOk;
}

inline int cmd_julia(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  const MeasureSample s = mes_sample(pr.family, cfg.lambda, cfg.samples, sampler(cfg));
  Grid<double> density(cfg.window, cfg.res, cfg.res, 0.0);
  std::size_t inside = 0, at_infinity = 0;
  const double w = 1.0 / static_cast<double>(s.points.size());
  for (const auto& pt : s.points) {
    if (pt.is_infinity()) {
      ++at_infinity;
      continue;
    }
    const cd z = pt.affine();
    if (!cfg.window.contains(z)) continue;
    const int i = static_cast<int>(std::lround((z.real() - cfg.window.re_min) / density.hx()));
    const int j = static_cast<int>(std::lround((z.imag() - cfg.window.im_min) / density.hy()));
    density(i, j) += w;
    ++inside;
  }
  od.file("samples.csv", io::samples_csv(s), "csv re,im; inf,0 marks the point at infinity");
  write_pgm(od, "julia.pgm", density, gray_mapping(cfg.mapping));
  od.json("julia.json", {{"lambda", complex_json(cfg.lambda)},
                         {"samples", s.points.size()},
                         {"in_window", inside},
                         {"at_infinity", at_infinity},
                         {"seed", s.seed},
                         {"burn_in", s.burn_in},
                         {"chain_length", s.chain_length},
                         {"solver_retries", s.solver_retries}});
  out << "samples " << s.points.size() << "\n";
  return kOk;
}

inline int cmd_lyapunov(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  const LattesResult r = lattes_test(pr.family, cfg.lambda, cfg.samples, sampler(cfg));
  nlohmann::json j = bifscope::to_json(r.estimate);
  j["degree"] = pr.family.degree();
  j["half_log_degree"] = 0.5 * std::log(static_cast<double>(pr.family.degree()));
  j["gap"] = r.gap;
  j["is_lattes_consistent"] = r.is_lattes_consistent;
  od.json("lyapunov.json", j);
  out << "L " << r.estimate.L << " +- " << r.estimate.std_err << "\n";
  return kOk;
}

inline int cmd_misiurewicz(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  MisiurewiczOptions mo;
  mo.residual_max = cfg.tol;
  const ScanReport rep =
      misiurewicz_scan(pr.family, pr.marked, cfg.window, cfg.n_max, cfg.p_max, cfg.grid, cfg.threads, mo);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& mp : rep.params) params.push_back(bifscope::to_json(mp));
  od.json("misiurewicz.json",
          {{"count", rep.params.size()}, {"attempts", rep.attempts}, {"failures", rep.failures}, {"params", params}});
  out << "certified " << rep.params.size() << "\n";
  return kOk;
}

inline int cmd_similarity(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  const MisiurewiczParam mp = solve_misiurewicz(pr.family, pr.marked, cfg.lambda, cfg.n, cfg.p);
  const RenormSequence seq =
      renorm_sequence(pr.family, pr.marked, mp, cfg.depth, cfg.window, cfg.res, green(cfg), cfg.threads);
  const auto boxes = box_tiling(cfg.window, cfg.boxes, cfg.boxes);

  std::optional<PullbackOracle> oracle;
  if (cfg.samples > 0) oracle = koenigs_pullback_oracle(pr.family, seq.chart, boxes, cfg.samples, sampler(cfg));

  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t k = 0; k < seq.levels.size(); ++k) {
    const RenormLevel& lv = seq.levels[k];
    nlohmann::json e = {{"depth", lv.depth},
                        {"ok", lv.ok},
                        {"note", lv.note},
                        {"scale", lv.scale},
                        {"total_mass", lv.nu.total_mass},
                        {"negative_clip", lv.nu.negative_clip}};
    e["correlation_with_previous"] =
        k == 0 ? nlohmann::json(nullptr)
               : opt_json(correlation_or_null(seq.levels[k - 1].nu.cell_mass.data(), lv.nu.cell_mass.data()));
    if (oracle) e["correlation_with_oracle"] = opt_json(correlation_or_null(box_masses(lv.nu, boxes), oracle->masses));
    levels.push_back(std::move(e));
  }
  nlohmann::json body = {{"param", bifscope::to_json(mp)},
                         {"rho", complex_json(seq.chart.rho)},
                         {"koenigs", {{"depth", seq.chart.depth}, {"r_lin", seq.chart.r_lin}, {"defect", seq.chart.defect}}},
                         {"omega", window_json(cfg.window)},
                         {"levels", levels}};
  if (oracle) {
    double mass = 0.0;
    for (double v : oracle->masses) mass += v;
    body["oracle"] = {{"samples", cfg.samples}, {"rejected", oracle->rejected}, {"mass_in_boxes", mass},
                      {"boxes", {cfg.boxes, cfg.boxes}}, {"masses", oracle->masses}};
  }

  // Panels left to right by depth, each normalized to unit mass.
  const int panels = static_cast<int>(seq.levels.size());
  const Window& om = cfg.window;
  Grid<double> strip(Window{om.re_min, om.re_min + panels * om.width(), om.im_min, om.im_max}, panels * cfg.res, cfg.res,
                     0.0);
  for (int k = 0; k < panels; ++k) {
    const GridMeasure& nu = seq.levels[k].nu;
    const double t = nu.total_mass > 0.0 ? nu.total_mass : 1.0;
    for (int j = 0; j < cfg.res; ++j)
      for (int i = 0; i < cfg.res; ++i) strip(k * cfg.res + i, j) = nu.cell_mass(i, j) / t;
  }
  od.json("similarity.json", body);
  write_pgm(od, "similarity.pgm", strip, io::GrayMapping::Log);
  out << "levels " << panels << "\n";
  return kOk;
}

inline int cmd_jstability(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  SamplerOptions a = sampler(cfg), b = a;
  b.seed = mix_key(cfg.seed, 0x5eedULL);
  const JStabilityScan s = jstability_scan(pr.family, cfg.window, cfg.res, cfg.samples, a);
  const JStabilityScan t = jstability_scan(pr.family, cfg.window, cfg.res, cfg.samples, b);
  std::optional<double> floor;
  try {
    floor = noise_floor(s, t);
  } catch (const Error&) {
  }
  double worst = 0.0;
  for (double v : s.defect.data())
    if (std::isfinite(v)) worst = std::max(worst, v);
  Grid<double> shown = s.defect;
  for (double& v : shown.data())
    if (!std::isfinite(v)) v = 0.0;
  od.file("defect.jstb", io::encode_grid(s.defect, "JSTB"), kGridFormat);
  write_pgm(od, "defect.pgm", shown, io::GrayMapping::Affine);
  od.json("jstability.json", {{"resolution", cfg.res},
                              {"samples", cfg.samples},
                              {"seeds", {{"base", cfg.seed}, {"noise_floor", b.seed}}},
                              {"L", grid_rows(s.L)},
                              {"std_err", grid_rows(s.std_err)},
                              {"laplacian", grid_rows(s.laplacian)},
                              {"defect", grid_rows(s.defect)},
                              {"max_defect", worst},
                              {"noise_floor", opt_json(floor)},
                              {"flagged", s.flagged},
                              {"notes", s.notes}});
  out << "max_defect " << worst << "\n";
  return kOk;
}

inline int cmd_classify(const RunConfig& cfg, const DynamicalPair& pr, OutputDir& od, std::ostream& out) {
  DiagnosisBudget budget;
  budget.resolution = cfg.res;
  budget.lyapunov_samples = cfg.samples;
  budget.jstab_resolution = cfg.jstab_res;
  budget.jstab_samples = cfg.jstab_samples;
  budget.lattes_lambdas = cfg.lattes_lambdas;
  budget.seed = cfg.seed;
  budget.threads = cfg.threads;
  const FamilyDiagnosis dx = diagnose_family(pr.family, pr.marked, cfg.window, budget);
  nlohmann::json j = bifscope::to_json(dx);
  j["label"] = cfg.label;
  od.json("classify.json", j);
  out << "verdict " << to_string(dx.verdict) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Front end

namespace detail {

struct Defaults {
  int res;
  std::size_t samples;
  double tol;
  Window window;
};

inline Defaults defaults_for(const std::string& cmd) {
  const Window plane{-2.5, 1.5, -2.0, 2.0};
  if (cmd == "bifmeasure") return {256, 0, 1e-9, plane};
  if (cmd == "julia") return {512, 100000, 0.0, plane};
  if (cmd == "lyapunov") return {0, 100000, 0.0, plane};
  if (cmd == "misiurewicz") return {0, 0, 1e-10, plane};
  if (cmd == "similarity") return {64, 100000, 1e-9, Window{-9.0, 1.0, -5.0, 5.0}};
  if (cmd == "jstability") return {9, 20000, 0.0, plane};
  return {256, 100000, 0.0, plane};  // classify
}

/// "--window -2,2,-1,1" would read as an unknown short option; glue such values
/// to their flag.
inline std::vector<std::string> glue_negative_values(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < args.size(); ++k) {
    const std::string& a = args[k];
    if (a.rfind("--", 0) == 0 && a.find('=') == std::string::npos && k + 1 < args.size()) {
      const std::string& v = args[k + 1];
      if (v.size() > 1 && v[0] == '-' && (std::isdigit(static_cast<unsigned char>(v[1])) || v[1] == '.')) {
        out.push_back(a + "=" + v);
        ++k;
        continue;
      }
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace detail

inline const char* kExamples = R"(Examples:
  bifscope bifmeasure --map "z^2+c" --marked "c" --window -2.5,1.5,-2,2 --res 512 --out runs/quad
  bifscope julia --map "z^2+c" --marked "c" --lambda -1,0 --samples 100000 --out runs/basilica
  bifscope lyapunov --family-file demo/families/lattes.json --lambda 0.3,0.1 --samples 100000
  bifscope misiurewicz --map "z^2+c" --marked "c" --window -2.2,0.6,-1.4,1.4 --grid 20 --n-max 4 --p-max 3
  bifscope similarity --map "z^2+c" --marked "c" --lambda -1.8,0 --n 1 --p 1 --depth 4 --res 64
  bifscope jstability --map "z^2+c" --marked "c" --window -1.75,0.25,-1,1 --res 9 --samples 20000
  bifscope classify --family-file demo/families/quadratic.json --threads 8

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
)";

/// Runs the CLI on argv-style arguments (without the program name).
inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"bifscope: bifurcation measures of one-parameter rational families", "bifscope"};
  app.footer(kExamples);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunConfig cfg;
  std::string window_s, lambda_s;
  std::optional<int> res;
  std::optional<double> tol;
  std::optional<std::size_t> samples;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"bifmeasure", "bifurcation measure on a parameter window: BIFG potential, BIFM masses, PGM, stats JSON"},
      {"julia", "samples of the maximal-entropy measure of f_lambda: CSV, density PGM, JSON"},
      {"lyapunov", "Lyapunov exponent of f_lambda with the Lattes test"},
      {"misiurewicz", "certified Misiurewicz parameters from a grid of Newton seeds"},
      {"similarity", "renormalized bifurcation measures at a Misiurewicz parameter, with the Koenigs pullback oracle"},
      {"jstability", "harmonicity defect of the Lyapunov function on a parameter grid"},
      {"classify", "family diagnosis: Lattes, isotrivial, generic or stable on the window"},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    CLI::App* c = app.add_subcommand(s.name, s.help);
    c->footer(kExamples);
    auto* file = c->add_option("--family-file", cfg.family_file, "JSON family spec {map, marked, domain, label}");
    c->add_option("--map", cfg.map, "f(z, c) as an expression in z and the parameter c")->excludes(file);
    c->add_option("--marked", cfg.marked, "marked point a(c)")->excludes(file);
    c->add_option("--window", window_s, "re_min,re_max,im_min,im_max");
    c->add_option("--res", res, "grid nodes per side");
    c->add_option("--tol", tol, "Green truncation tolerance (misiurewicz: residual bound)");
    c->add_option("--samples", samples, "Monte Carlo samples");
    c->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    c->add_option("--threads", cfg.threads, "worker threads, 0 = hardware parallelism")->capture_default_str();
    c->add_option("--out", cfg.out, "output directory")->capture_default_str();
    cmds.push_back(c);
  }
  auto sub = [&](const char* n) { return app.get_subcommand(n); };
  sub("bifmeasure")->add_option("--mapping", cfg.mapping, "PGM gray mapping")->check(CLI::IsMember({"affine", "log"}))->capture_default_str();
  sub("bifmeasure")->add_option("--flux-points", cfg.flux_points, "boundary-flux oracle points per edge, 0 = 4*res");
  sub("julia")->add_option("--mapping", cfg.mapping, "PGM gray mapping")->check(CLI::IsMember({"affine", "log"}))->capture_default_str();
  for (const char* n : {"julia", "lyapunov"}) sub(n)->add_option("--lambda", lambda_s, "parameter re,im")->required();
  sub("similarity")->add_option("--lambda", lambda_s, "Newton seed re,im for the Misiurewicz parameter")->required();
  sub("similarity")->add_option("--n", cfg.n, "preperiod")->capture_default_str();
  sub("similarity")->add_option("--p", cfg.p, "period")->capture_default_str();
  sub("similarity")->add_option("--depth", cfg.depth, "deepest renormalization level")->capture_default_str();
  sub("similarity")->add_option("--boxes", cfg.boxes, "oracle boxes per side")->capture_default_str();
  sub("misiurewicz")->add_option("--n-max", cfg.n_max, "largest preperiod")->capture_default_str();
  sub("misiurewicz")->add_option("--p-max", cfg.p_max, "largest period")->capture_default_str();
  sub("misiurewicz")->add_option("--grid", cfg.grid, "seeds per side")->capture_default_str();
  sub("classify")->add_option("--jstab-res", cfg.jstab_res, "J-stability grid nodes per side")->capture_default_str();
  sub("classify")->add_option("--jstab-samples", cfg.jstab_samples, "samples per J-stability node")->capture_default_str();
  sub("classify")->add_option("--lattes-lambdas", cfg.lattes_lambdas, "parameters for the Lattes test")->capture_default_str();

  std::vector<std::string> args = detail::glue_negative_values(raw_args);
  std::reverse(args.begin(), args.end());
  CLI::App* active = nullptr;
  try {
    app.parse(args);
    for (CLI::App* c : cmds)
      if (c->parsed()) active = c;
    cfg.command = active->get_name();

    const detail::Defaults def = detail::defaults_for(cfg.command);
    cfg.window = def.window;
    if (!window_s.empty()) {
      cfg.window = parse_window(window_s);
      cfg.window_given = true;
    }
    if (!cfg.family_file.empty()) load_family_file(cfg);
    if (cfg.map.empty()) throw CLI::RequiredError("--map (or --family-file)");
    if (cfg.marked.empty()) throw CLI::RequiredError("--marked (or --family-file)");
    if (!lambda_s.empty()) cfg.lambda = parse_complex(lambda_s);
    cfg.res = res.value_or(def.res);
    cfg.tol = tol.value_or(def.tol);
    cfg.samples = samples.value_or(def.samples);
    cfg.threads = cfg.threads > 0 ? cfg.threads : default_thread_count();
    if (cfg.command == "bifmeasure" && cfg.flux_points <= 0) cfg.flux_points = 4 * cfg.res;

    const bool needs_res = cfg.command != "lyapunov" && cfg.command != "misiurewicz";
    if (needs_res && cfg.res < 3) throw Error(ErrorKind::InvalidArgument, "--res must be >= 3");
    if (cfg.tol < 0.0 || ((cfg.command == "bifmeasure" || cfg.command == "similarity" || cfg.command == "misiurewicz") &&
                          !(cfg.tol > 0.0)))
      throw Error(ErrorKind::InvalidArgument, "--tol must be positive");
    if ((cfg.command == "julia" || cfg.command == "lyapunov" || cfg.command == "jstability" ||
         cfg.command == "classify") &&
        cfg.samples == 0)
      throw Error(ErrorKind::InvalidArgument, "--samples must be positive");
    if (cfg.n < 0 || cfg.p < 1 || cfg.n_max < 0 || cfg.p_max < 1 || cfg.grid < 1 || cfg.depth < 0 || cfg.boxes < 1 ||
        cfg.jstab_res < 3 || cfg.lattes_lambdas < 1)
      throw Error(ErrorKind::InvalidArgument, "integer option out of range");
  } catch (const CLI::CallForHelp&) {
    CLI::App* shown = &app;
    for (CLI::App* c : cmds)
      if (c->parsed()) shown = c;
    out << shown->help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    CLI::App* shown = &app;
    for (CLI::App* c : cmds)
      if (c->parsed()) shown = c;
    err << "error: " << e.what() << "\n\n" << shown->help();
    return kConfigError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    const DynamicalPair pr = build_family(cfg.map, cfg.marked, cfg.window);
    OutputDir od(cfg, out);
    if (cfg.command == "bifmeasure") return cmd_bifmeasure(cfg, pr, od, out);
    if (cfg.command == "julia") return cmd_julia(cfg, pr, od, out);
    if (cfg.command == "lyapunov") return cmd_lyapunov(cfg, pr, od, out);
    if (cfg.command == "misiurewicz") return cmd_misiurewicz(cfg, pr, od, out);
    if (cfg.command == "similarity") return cmd_similarity(cfg, pr, od, out);
    if (cfg.command == "jstability") return cmd_jstability(cfg, pr, od, out);
    return cmd_classify(cfg, pr, od, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.is_config_error() || e.kind() == ErrorKind::DegenerateEverywhere || e.kind() == ErrorKind::IoError
               ? kConfigError
               : kNumericFailure;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, out, err);
}

}  // namespace bifscope::cli
