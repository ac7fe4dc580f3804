#pragma once

// Lyapunov exponents of maximal-entropy measures, the Lattes test, the
// harmonicity (J-stability) scan, and whole-family diagnosis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bifscope/error.hpp"
#include "bifscope/family.hpp"
#include "bifscope/grid.hpp"
#include "bifscope/measure.hpp"
#include "bifscope/parallel.hpp"
#include "bifscope/rng.hpp"

namespace bifscope {

struct LyapunovEstimate {
  cd lambda{};
  double L = 0.0;
  double std_err = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  int critical_hits = 0;  // samples on a critical point, replaced by a further preimage
  int solver_retries = 0;
};

namespace detail {

// Neumaier-compensated mean and batch-means standard error of per-chain blocks.
struct BatchStats {
  double mean;
  double std_err;
};

inline BatchStats batch_stats(const std::vector<double>& x, std::size_t block) {
  const std::size_t n = x.size();
  double s = 0.0, c = 0.0, abs_sum = 0.0;
  for (double v : x) {
    const double u = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - u) + v : (v - u) + s;
    s = u;
    abs_sum += std::abs(v);
  }
  const double mean = (s + c) / static_cast<double>(n);
  // Batch means over complete blocks; samples inside a chain are correlated.
  block = std::max<std::size_t>(block, 1);
  const std::size_t nb = n / block;
  double var_mean;
  if (nb >= 2) {
    double acc = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      double bm = 0.0;
      for (std::size_t k = b * block; k < (b + 1) * block; ++k) bm += x[k];
      bm /= static_cast<double>(block);
      acc += (bm - mean) * (bm - mean);
    }
    var_mean = acc / static_cast<double>(nb - 1) / static_cast<double>(nb);
  } else if (n >= 2) {
    double acc = 0.0;
    for (double v : x) acc += (v - mean) * (v - mean);
    var_mean = acc / static_cast<double>(n - 1) / static_cast<double>(n);
  } else {
    var_mean = std::numeric_limits<double>::infinity();
  }
  // Floating-point floor: per-term evaluation error of a few ulps of |log|.
  const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + abs_sum / static_cast<double>(n));
  return {mean, std::max(std::sqrt(var_mean), roundoff)};
}

}  // namespace detail

/// L(f_lambda) = integral of log |f'|_sigma against mu_{f_lambda}, as the mean
/// over inverse-iteration samples.
inline LyapunovEstimate lyapunov(const FiberMap& f, cd lambda, std::size_t samples, const SamplerOptions& opt = {}) {
  const MeasureSample s = mes_sample(f, lambda, samples, opt);
  std::vector<double> logs(s.points.size());
  std::vector<int> hits(s.points.size(), 0);
  int retries = s.solver_retries;
  std::vector<int> extra_retries(s.points.size(), 0);
  parallel_for(
      s.points.size(),
      [&](std::size_t i) {
        SpherePoint p = s.points[i];
        double sd = spherical_derivative(f, p);
        if (sd < 1e-300) {
          // Critical point: replace by one of its preimages, keyed by the sample index.
          CounterRng rng(opt.seed ^ 0x5bd1e995ULL, i);
          for (int k = 0; k < 16 && sd < 1e-300; ++k) {
            ++hits[i];
            p = detail::preimage_branch(f, p, rng.below(f.d), extra_retries[i]);
            sd = spherical_derivative(f, p);
          }
        }
        logs[i] = std::log(sd);
      },
      256, opt.threads);
  LyapunovEstimate est;
  est.lambda = lambda;
  est.samples = s.points.size();
  est.seed = opt.seed;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    est.critical_hits += hits[i];
    retries += extra_retries[i];
  }
  est.solver_retries = retries;
  const auto st = detail::batch_stats(logs, static_cast<std::size_t>(opt.chain_length));
  est.L = st.mean;
  est.std_err = st.std_err;
  return est;
}

inline LyapunovEstimate lyapunov(const RationalFamily& fam, cd lambda, std::size_t samples, const SamplerOptions& opt = {}) {
  return lyapunov(fam.fiber(lambda), lambda, samples, opt);
}

struct LattesThresholds {
  double gap = 5e-3;     // |L - (1/2) log d| below this is consistent with Lattes
  double sigmas = 4.0;   // ... or below this many standard errors
};

struct LattesResult {
  bool is_lattes_consistent;
  double gap;  // L - (1/2) log d
  LyapunovEstimate estimate;
};

inline LattesResult lattes_test(const RationalFamily& fam, cd lambda, std::size_t samples, const SamplerOptions& opt = {},
                                const LattesThresholds& th = {}) {
  const LyapunovEstimate est = lyapunov(fam, lambda, samples, opt);
  const double gap = est.L - 0.5 * std::log(static_cast<double>(fam.degree()));
  return {std::abs(gap) < std::max(th.gap, th.sigmas * est.std_err), gap, est};
}

// ---------------------------------------------------------------------------
// Harmonicity of lambda -> L(f_lambda)

struct JStabilityScan {
  Grid<double> L;          // NaN at degenerate nodes
  Grid<double> std_err;
  Grid<double> laplacian;  // signed discrete dd^c of L per interior cell; NaN where undefined
  Grid<double> defect;     // |laplacian|
  std::uint64_t seed = 1;
  std::size_t samples = 0;
  int flagged = 0;         // nodes or cells without a value
  std::vector<std::string> notes;
};

/// Seed of grid node k: a pure function of (seed, k).
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t k) { return mix_key(seed, k); }

inline JStabilityScan jstability_scan(const RationalFamily& fam, const Window& window, int res, std::size_t samples,
                                      const SamplerOptions& opt = {}) {
  JStabilityScan out;
  out.L = Grid<double>(window, res, res, std::numeric_limits<double>::quiet_NaN());
  out.std_err = out.L;
  out.laplacian = out.L;
  out.defect = out.L;
  out.seed = opt.seed;
  out.samples = samples;
  std::vector<std::string> node_note(out.L.size());
  parallel_for(
      out.L.size(),
      [&](std::size_t k) {
        const int i = static_cast<int>(k % res), j = static_cast<int>(k / res);
        const cd lam = out.L.node(i, j);
        SamplerOptions o = opt;
        o.seed = cell_seed(opt.seed, k);
        o.threads = 1;
        try {
          const LyapunovEstimate e = lyapunov(fam, lam, samples, o);
          out.L(i, j) = e.L;
          out.std_err(i, j) = e.std_err;
        } catch (const Error& e) {
          node_note[k] = std::string(to_string(e.kind())) + " at node (" + std::to_string(i) + ", " + std::to_string(j) + ")";
        }
      },
      1, opt.threads);
  for (const auto& n : node_note)
    if (!n.empty()) {
      ++out.flagged;
      out.notes.push_back(n);
    }
  for (int j = 1; j < res - 1; ++j)
    for (int i = 1; i < res - 1; ++i) {
      try {
        const double lap = laplacian_cell_mass(out.L, i, j);
        out.laplacian(i, j) = lap;
        out.defect(i, j) = std::abs(lap);
      } catch (const Error&) {
        ++out.flagged;
      }
    }
  return out;
}

/// Monte-Carlo noise of the cell Laplacian: RMS of (lap_a - lap_b)/sqrt(2) over
/// interior cells of two scans that differ only in the seed.
inline double noise_floor(const JStabilityScan& a, const JStabilityScan& b) {
  if (a.L.nx() != b.L.nx() || a.L.ny() != b.L.ny() || !(a.L.window() == b.L.window())) {
    throw Error(ErrorKind::InvalidArgument, "noise floor needs scans on the same grid");
  }
  double acc = 0.0;
  std::size_t n = 0;
  for (int j = 1; j < a.L.ny() - 1; ++j)
    for (int i = 1; i < a.L.nx() - 1; ++i) {
      const double d = a.laplacian(i, j) - b.laplacian(i, j);
      if (!std::isfinite(d)) continue;
      acc += 0.5 * d * d;
      ++n;
    }
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "no comparable cells");
  return std::sqrt(acc / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Absolute-continuity indicator

/// Slope of sum_B p_B log p_B against log(box area) over b x b cell blocks. Mass
/// proportional to area gives 1; a measure of dimension D gives D/2.
inline double mass_area_slope(const GridMeasure& m, const std::vector<int>& blocks = {1, 2, 4, 8, 16}) {
  if (!(m.total_mass > 0.0)) throw Error(ErrorKind::ZeroMassVector, "measure has no mass");
  const Grid<double>& g = m.cell_mass;
  const int nx = g.nx() - 2, ny = g.ny() - 2;
  std::vector<double> xs, ys;
  for (int b : blocks) {
    if (b < 1 || b > nx || b > ny) continue;
    const int bx = nx / b, by = ny / b;
    std::vector<double> mass(static_cast<std::size_t>(bx) * by, 0.0);
    double total = 0.0;
    for (int j = 0; j < by * b; ++j)
      for (int i = 0; i < bx * b; ++i) {
        const double v = std::max(0.0, g(i + 1, j + 1));
        mass[static_cast<std::size_t>(j / b) * bx + i / b] += v;
        total += v;
      }
    if (!(total > 0.0)) continue;
    double info = 0.0;
    for (double v : mass)
      if (v > 0.0) info += (v / total) * std::log(v / total);
    xs.push_back(std::log(b * b * g.hx() * g.hy()));
    ys.push_back(info);
  }
  if (xs.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two block sizes");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Family diagnosis

enum class Verdict { LattesFamily, IsotrivialSuspect, GenericUnstable, StableOnWindow };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::LattesFamily: return "LATTES_FAMILY";
    case Verdict::IsotrivialSuspect: return "ISOTRIVIAL_SUSPECT";
    case Verdict::GenericUnstable: return "GENERIC_UNSTABLE";
    case Verdict::StableOnWindow: return "STABLE_ON_WINDOW";
  }
  return "?";
}

struct DiagnosisBudget {
  int resolution = 256;                  // bif_measure grid
  int lattes_lambdas = 5;
  std::size_t lyapunov_samples = 100000;
  int jstab_resolution = 9;
  std::size_t jstab_samples = 20000;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct DiagnosisThresholds {
  double support_fraction = 0.95;
  SupportFloor floor{};
  LattesThresholds lattes{};
  double stable_mass = 1e-6;
  double constant_abs = 5e-3;      // L counts as constant if every value is within
  double constant_sigmas = 5.0;    // max(constant_abs, constant_sigmas * std_err) of the mean
};

struct FamilyDiagnosis {
  Verdict verdict = Verdict::GenericUnstable;
  double support_fraction = 0.0;
  double total_mass = 0.0;
  double negative_clip = 0.0;
  double mass_area_slope = std::numeric_limits<double>::quiet_NaN();
  std::vector<LattesResult> lattes;
  bool all_lattes_pass = false;
  bool L_constant = false;
  JStabilityScan jstab;
  double jstab_noise_floor = std::numeric_limits<double>::quiet_NaN();
  DiagnosisBudget budget;
  DiagnosisThresholds thresholds;
  Window window;
  std::vector<std::string> notes;
};

namespace detail {

inline std::vector<cd> sample_parameters(const RationalFamily& fam, const Window& w, int count, std::uint64_t seed) {
  std::vector<cd> out;
  CounterRng rng(seed, 0x1a77e5ULL);
  for (int tries = 0; static_cast<int>(out.size()) < count && tries < 100 * count; ++tries) {
    const cd lam(w.re_min + (0.05 + 0.9 * rng.uniform()) * w.width(), w.im_min + (0.05 + 0.9 * rng.uniform()) * w.height());
    if (!fam.degenerate_at(lam)) out.push_back(lam);
  }
  return out;
}

}  // namespace detail

inline FamilyDiagnosis diagnose_family(const RationalFamily& fam, const MarkedPoint& marked, const Window& window,
                                       const DiagnosisBudget& budget = {}, const DiagnosisThresholds& th = {}) {
  FamilyDiagnosis dx;
  dx.budget = budget;
  dx.thresholds = th;
  dx.window = window;

  MeasureOptions mo;
  mo.threads = budget.threads;
  mo.laplacian.threads = budget.threads;
  const GridMeasure m = bif_measure(fam, marked, window, budget.resolution, mo);
  dx.total_mass = m.total_mass;
  dx.negative_clip = m.negative_clip;
  dx.support_fraction = m.total_mass > 0.0 ? support_fraction(m, th.floor) : 0.0;
  if (m.nonfinite_cells > 0) dx.notes.push_back(std::to_string(m.nonfinite_cells) + " cells with non-finite potential");
  if (m.total_mass > 0.0) {
    try {
      dx.mass_area_slope = mass_area_slope(m);
    } catch (const Error& e) {
      dx.notes.push_back(std::string("mass-area slope: ") + e.what());
    }
  }

  SamplerOptions so;
  so.seed = budget.seed;
  so.threads = budget.threads;
  dx.all_lattes_pass = true;
  std::vector<double> Ls, ses;
  for (const cd lam : detail::sample_parameters(fam, window, budget.lattes_lambdas, budget.seed)) {
    try {
      const LattesResult r = lattes_test(fam, lam, budget.lyapunov_samples, so, th.lattes);
      dx.lattes.push_back(r);
      dx.all_lattes_pass = dx.all_lattes_pass && r.is_lattes_consistent;
      Ls.push_back(r.estimate.L);
      ses.push_back(r.estimate.std_err);
    } catch (const Error& e) {
      dx.all_lattes_pass = false;
      dx.notes.push_back(std::string("lattes_test: ") + e.what());
    }
  }
  if (dx.lattes.empty()) dx.all_lattes_pass = false;

  SamplerOptions js = so;
  dx.jstab = jstability_scan(fam, window, budget.jstab_resolution, budget.jstab_samples, js);
  js.seed = mix_key(budget.seed, 0x5eedULL);
  try {
    dx.jstab_noise_floor = noise_floor(dx.jstab, jstability_scan(fam, window, budget.jstab_resolution, budget.jstab_samples, js));
  } catch (const Error& e) {
    dx.notes.push_back(std::string("noise floor: ") + e.what());
  }
  for (std::size_t k = 0; k < dx.jstab.L.size(); ++k) {
    if (std::isfinite(dx.jstab.L.data()[k])) {
      Ls.push_back(dx.jstab.L.data()[k]);
      ses.push_back(dx.jstab.std_err.data()[k]);
    }
  }
  if (!Ls.empty()) {
    double mean = 0.0;
    for (double v : Ls) mean += v;
    mean /= static_cast<double>(Ls.size());
    dx.L_constant = true;
    for (std::size_t k = 0; k < Ls.size(); ++k)
      dx.L_constant = dx.L_constant && std::abs(Ls[k] - mean) <= std::max(th.constant_abs, th.constant_sigmas * ses[k]);
  }

  if (dx.support_fraction > th.support_fraction && dx.all_lattes_pass) dx.verdict = Verdict::LattesFamily;
  else if (dx.total_mass < th.stable_mass) dx.verdict = Verdict::StableOnWindow;
  else if (dx.L_constant && !dx.all_lattes_pass) dx.verdict = Verdict::IsotrivialSuspect;
  else dx.verdict = Verdict::GenericUnstable;
  return dx;
}

inline nlohmann::json to_json(const LyapunovEstimate& e) {
  return {{"lambda", {e.lambda.real(), e.lambda.imag()}},
          {"L", e.L},
          {"std_err", e.std_err},
          {"samples", e.samples},
          {"seed", e.seed},
          {"critical_hits", e.critical_hits},
          {"solver_retries", e.solver_retries}};
}

inline nlohmann::json grid_rows(const Grid<double>& g) {
  nlohmann::json rows = nlohmann::json::array();
  for (int j = 0; j < g.ny(); ++j) {
    nlohmann::json row = nlohmann::json::array();
    for (int i = 0; i < g.nx(); ++i) {
      const double v = g(i, j);
      if (std::isfinite(v)) row.push_back(v);
      else row.push_back(nullptr);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const FamilyDiagnosis& dx) {
  nlohmann::json lat = nlohmann::json::array();
  for (const auto& r : dx.lattes) {
    nlohmann::json e = to_json(r.estimate);
    e["gap"] = r.gap;
    e["is_lattes_consistent"] = r.is_lattes_consistent;
    lat.push_back(std::move(e));
  }
  auto finite_or_null = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  const Window& w = dx.window;
  return {
      {"verdict", to_string(dx.verdict)},
      {"window", {{"re_min", w.re_min}, {"re_max", w.re_max}, {"im_min", w.im_min}, {"im_max", w.im_max}}},
      {"evidence",
       {{"support_fraction", dx.support_fraction},
        {"total_mass", dx.total_mass},
        {"negative_clip", dx.negative_clip},
        {"mass_area_slope", finite_or_null(dx.mass_area_slope)},
        {"lattes_tests", lat},
        {"all_lattes_pass", dx.all_lattes_pass},
        {"L_constant", dx.L_constant},
        {"jstability",
         {{"resolution", dx.jstab.L.nx()},
          {"samples", dx.jstab.samples},
          {"L", grid_rows(dx.jstab.L)},
          {"defect", grid_rows(dx.jstab.defect)},
          {"noise_floor", finite_or_null(dx.jstab_noise_floor)},
          {"flagged", dx.jstab.flagged}}}}},
      {"thresholds",
       {{"support_fraction", dx.thresholds.support_fraction},
        {"support_floor_absolute", dx.thresholds.floor.absolute},
        {"support_floor_relative", dx.thresholds.floor.relative},
        {"lattes_gap", dx.thresholds.lattes.gap},
        {"lattes_sigmas", dx.thresholds.lattes.sigmas},
        {"stable_mass", dx.thresholds.stable_mass},
        {"constant_abs", dx.thresholds.constant_abs},
        {"constant_sigmas", dx.thresholds.constant_sigmas}}},
      {"budget",
       {{"resolution", dx.budget.resolution},
        {"lattes_lambdas", dx.budget.lattes_lambdas},
        {"lyapunov_samples", dx.budget.lyapunov_samples},
        {"jstab_resolution", dx.budget.jstab_resolution},
        {"jstab_samples", dx.budget.jstab_samples}}},
      {"seeds", {{"base", dx.budget.seed}, {"noise_floor", mix_key(dx.budget.seed, 0x5eedULL)}}},
      {"notes", dx.notes},
  };
}

}  // namespace bifscope
