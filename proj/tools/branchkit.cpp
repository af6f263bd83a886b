// branchkit: model inspection, limit-density construction, coalescence-time
// estimation and bounds for finite-type supercritical branching processes.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "branchkit/cf_density.hpp"
#include "branchkit/coalescence.hpp"
#include "branchkit/hs_transform.hpp"
#include "branchkit/model.hpp"
#include "branchkit/model_io.hpp"
#include "branchkit/simulate.hpp"
#include "branchkit/wmoments.hpp"

namespace {

using nlohmann::json;
using namespace branchkit;

constexpr std::uint64_t kDefaultSeed = 123456789ULL;
constexpr int kSchemaVersion = 1;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BRANCHKIT_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::runtime_error("BRANCHKIT_SEED must be an unsigned integer");
    }
  }
  return kDefaultSeed;
}

struct CommonOpts {
  std::string model_path;
  std::string out_prefix;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
  bool allow_degenerate = false;
};

void add_common(CLI::App* cmd, CommonOpts* opts, const std::string& default_prefix) {
  opts->seed = default_seed();
  opts->out_prefix = default_prefix;
  cmd->add_option("--model", opts->model_path, "Model JSON file")->required();
  cmd->add_option("--out", opts->out_prefix, "Output path prefix")->capture_default_str();
  cmd->add_option("--seed", opts->seed, "Master seed (env BRANCHKIT_SEED overrides the default)")
      ->capture_default_str();
  cmd->add_option("--threads", opts->threads, "Worker count (results are independent of it)")
      ->capture_default_str();
  cmd->add_flag("--allow-degenerate", opts->allow_degenerate,
                "Skip the irreducibility/supercriticality gate");
}

ModelSpec load_checked(const CommonOpts& opts) {
  ModelSpec model = load_model(opts.model_path);
  if (!opts.allow_degenerate) {
    const Classification c = classify(model);
    if (!c.irreducible)
      throw std::runtime_error(
          "model rejected: mean matrix is not irreducible (use --allow-degenerate to override)");
    if (!c.supercritical)
      throw std::runtime_error(
          "model rejected: process is not supercritical, leading eigenvalue must exceed 1 "
          "(use --allow-degenerate to override)");
  }
  return model;
}

void set_number(json& j, const std::string& key, double v) {
  if (!std::isfinite(v)) throw std::runtime_error("refusing to emit non-finite '" + key + "'");
  j[key] = v;
}

json finite_array(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::runtime_error("refusing to emit non-finite array entry");
  return json(v);
}

void write_json(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

struct TRange {
  int lo = 1;
  int hi = 0;  // empty when hi < lo
};

TRange parse_t_range(const std::string& text) {
  TRange r;
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      r.lo = r.hi = std::stoi(text);
    } else {
      r.lo = std::stoi(text.substr(0, dots));
      r.hi = std::stoi(text.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw std::runtime_error("cannot parse t range '" + text + "' (expected e.g. 1..10)");
  }
  return r;
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_spectral(const CommonOpts& opts) {
  const ModelSpec model = load_checked(opts);
  const SpectralData spec = spectral(mean_matrix(model));
  json j;
  j["schema_version"] = kSchemaVersion;
  set_number(j, "lambda", spec.lambda);
  j["u"] = finite_array(spec.u);
  j["nu"] = finite_array(spec.nu);
  write_json(opts.out_prefix + ".json", j);
  std::cout << "spectral: lambda=" << format_sig12(spec.lambda) << " d=" << model.dimension()
            << " -> " << opts.out_prefix << ".json\n";
  return 0;
}

int run_extinction(const CommonOpts& opts, double tol, long max_iter) {
  const ModelSpec model = load_checked(opts);
  const ExtinctionVector q = extinction(model, tol, max_iter);
  double residual = 0.0;
  for (int i = 0; i < model.dimension(); ++i)
    residual = std::max(residual, std::abs(q.q[static_cast<std::size_t>(i)] -
                                           pgf_eval(model, i, std::span<const double>(q.q))));
  json j;
  j["schema_version"] = kSchemaVersion;
  j["q"] = finite_array(q.q);
  set_number(j, "fixed_point_residual", residual);
  j["near_one_warning"] = q.near_one;
  write_json(opts.out_prefix + ".json", j);
  std::cout << "extinction: q=[";
  for (std::size_t i = 0; i < q.q.size(); ++i)
    std::cout << (i ? "," : "") << format_sig12(q.q[i]);
  std::cout << "]" << (q.near_one ? " (warning: some entries are within 1e-9 of 1)" : "")
            << " -> " << opts.out_prefix << ".json\n";
  return 0;
}

int run_wmoments(const CommonOpts& opts, int order) {
  const ModelSpec model = load_checked(opts);
  const SpectralData spec = spectral(mean_matrix(model));
  const WMomentTable table = w_moments(model, spec, order);
  CsvTable csv;
  csv.header = {"type", "n", "moment"};
  for (int i = 0; i < table.d; ++i)
    for (int n = 0; n <= table.max_order; ++n)
      csv.rows.push_back({static_cast<double>(i + 1), static_cast<double>(n), table.moment(i, n)});
  write_text_file(opts.out_prefix + ".csv", format_csv(csv));
  std::cout << "wmoments: " << table.d << " types through order " << table.max_order << " -> "
            << opts.out_prefix << ".csv\n";
  return 0;
}

int run_density(const CommonOpts& opts, int type_1based, const DensityOptions& dopts, int order) {
  const ModelSpec model = load_checked(opts);
  if (type_1based < 1 || type_1based > model.dimension())
    throw std::runtime_error("--type out of range");
  const SpectralData spec = spectral(mean_matrix(model));
  const ExtinctionVector q = extinction(model);
  const WMomentTable table = w_moments(model, spec, order);
  const DensityGrid density = build_density(model, spec, table, q, type_1based - 1, dopts);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["type"] = type_1based;
  set_number(j, "atom", density.atom);
  set_number(j, "mass", density.mass());
  set_number(j, "mean", density.mean());
  set_number(j, "clipped_mass", density.clipped_mass);
  set_number(j, "dx", density.dx);
  j["grid_points"] = static_cast<long long>(density.values.size());
  write_json(opts.out_prefix + ".json", j);

  // Trailing all-zero tail is dropped from the CSV; the JSON header keeps
  // the full-grid diagnostics.
  std::size_t last = density.values.size();
  while (last > 1 && density.values[last - 1] == 0.0) --last;
  CsvTable csv;
  csv.header = {"x", "density"};
  for (std::size_t m = 0; m < last; ++m)
    csv.rows.push_back({density.x0 + density.dx * static_cast<double>(m), density.values[m]});
  write_text_file(opts.out_prefix + ".csv", format_csv(csv));
  std::cout << "density: type " << type_1based << " mass=" << format_sig12(density.mass())
            << " mean=" << format_sig12(density.mean()) << " -> " << opts.out_prefix
            << ".{csv,json}\n";
  return 0;
}

int run_bounds(const CommonOpts& opts, int k, const std::string& epsilon_text, int t_max,
               long long reps) {
  const ModelSpec model = load_checked(opts);
  const SpectralData spec = spectral(mean_matrix(model));
  const ExtinctionVector q = extinction(model);
  const WMomentTable table = w_moments(model, spec, 2 * k);
  double epsilon;
  if (epsilon_text == "AUTO")
    epsilon = 0.5 * admissible_epsilon_sup(table, k);
  else
    epsilon = std::stod(epsilon_text);
  const BoundConstants constants = bound_constants(table, q, epsilon, k);
  const HSBoundInputs inputs = estimate_sup_moments(model, q, reps, opts.seed);
  const BoundCurve curve = corollary_bounds(constants, inputs, 1, t_max);

  CsvTable csv;
  csv.header = {"t", "lower", "upper"};
  for (std::size_t i = 0; i < curve.t.size(); ++i)
    csv.rows.push_back({static_cast<double>(curve.t[i]), clamp01(curve.lower[i]),
                        clamp01(curve.upper[i])});
  write_text_file(opts.out_prefix + ".csv", format_csv(csv));

  json j;
  j["schema_version"] = kSchemaVersion;
  j["k"] = k;
  set_number(j, "epsilon", constants.epsilon);
  json c;
  set_number(c, "c1", constants.c1);
  set_number(c, "c2", constants.c2);
  set_number(c, "c3", constants.c3);
  set_number(c, "c4", constants.c4);
  set_number(c, "c5", constants.c5);
  set_number(c, "c6", constants.c6);
  j["constants"] = c;
  json in;
  set_number(in, "sup_q", inputs.sup_q);
  set_number(in, "e_sup_y", inputs.e_sup_y);
  set_number(in, "se_sup_y", inputs.se_sup_y);
  set_number(in, "e_sup_inv_y", inputs.e_sup_inv_y);
  set_number(in, "se_sup_inv_y", inputs.se_sup_inv_y);
  in["replicates"] = inputs.replicates;
  j["inputs"] = in;
  j["lower_raw"] = finite_array(curve.lower);
  j["upper_raw"] = finite_array(curve.upper);
  write_json(opts.out_prefix + ".json", j);
  std::cout << "bounds: k=" << k << " epsilon=" << format_sig12(epsilon) << " t=1.." << t_max
            << " -> " << opts.out_prefix << ".{csv,json}\n";
  return 0;
}

int run_simulate(const CommonOpts& opts, int horizon) {
  const ModelSpec model = load_checked(opts);
  bool capped = false;
  const auto trajectory = run_population(model, horizon, StreamFactory(opts.seed, 0), &capped);
  CsvTable csv;
  csv.header = {"generation"};
  for (int j = 1; j <= model.dimension(); ++j) csv.header.push_back("count_" + std::to_string(j));
  csv.header.push_back("total");
  for (const auto& state : trajectory) {
    std::vector<std::optional<double>> row;
    row.push_back(static_cast<double>(state.generation));
    for (long long c : state.counts) row.push_back(static_cast<double>(c));
    row.push_back(static_cast<double>(state.total()));
    csv.rows.push_back(std::move(row));
  }
  write_text_file(opts.out_prefix + ".csv", format_csv(csv));
  std::cout << "simulate: " << trajectory.size() - 1 << " generations, final total "
            << trajectory.back().total() << (capped ? " (capped)" : "") << " -> "
            << opts.out_prefix << ".csv\n";
  return 0;
}

int run_genealogy(const CommonOpts& opts, int t, int horizon, int k, long long reps) {
  const ModelSpec model = load_checked(opts);
  const auto start = std::chrono::steady_clock::now();
  const MrcaEstimate est =
      mrca_direct_estimate(model, t, horizon, k, reps, opts.seed, opts.threads);
  const double wall = seconds_since(start);
  json j;
  j["schema_version"] = kSchemaVersion;
  j["t"] = t;
  j["horizon"] = horizon;
  j["k"] = k;
  set_number(j, "p_hat", est.p_hat);
  set_number(j, "std_err", est.std_err);
  j["n_effective"] = est.n_effective;
  j["n_capped"] = est.n_capped;
  set_number(j, "wall_time", wall);
  write_json(opts.out_prefix + ".json", j);
  std::cout << "genealogy: p_hat=" << format_sig12(est.p_hat) << " +/- "
            << format_sig12(est.std_err) << " (n_eff=" << est.n_effective << ") -> "
            << opts.out_prefix << ".json\n";
  return 0;
}

int run_coalesce(const CommonOpts& opts, int k, const std::string& t_range_text, long long reps,
                 bool with_bounds, int oracle_horizon, long long bound_reps,
                 const std::string& epsilon_text) {
  const ModelSpec model = load_checked(opts);
  const TRange trange = parse_t_range(t_range_text);

  json timing;
  timing["schema_version"] = kSchemaVersion;

  auto start = std::chrono::steady_clock::now();
  const SpectralData spec = spectral(mean_matrix(model));
  const ExtinctionVector q = extinction(model);
  const WMomentTable table = w_moments(model, spec, 2 * k);
  set_number(timing, "w_moments_seconds", seconds_since(start));

  start = std::chrono::steady_clock::now();
  const std::vector<DensityGrid> densities = build_densities(model, spec, table, q);
  set_number(timing, "density_inversion_seconds", seconds_since(start));

  std::vector<WSampler> samplers;
  for (const auto& g : densities) samplers.emplace_back(g);

  start = std::chrono::steady_clock::now();
  std::vector<CoalescenceEstimate> estimates;
  for (int t = trange.lo; t <= trange.hi; ++t)
    estimates.push_back(theorem_estimate(model, std::span<const WSampler>(samplers), t, k, reps,
                                         opts.seed, opts.threads));
  set_number(timing, "theorem_estimation_seconds", seconds_since(start));

  std::optional<BoundCurve> corollary;
  std::optional<BoundCurve> harmonic;
  if (with_bounds && trange.hi >= trange.lo) {
    double epsilon;
    if (epsilon_text == "AUTO")
      epsilon = 0.5 * admissible_epsilon_sup(table, k);
    else
      epsilon = std::stod(epsilon_text);
    const BoundConstants constants = bound_constants(table, q, epsilon, k);
    const HSBoundInputs inputs = estimate_sup_moments(model, q, bound_reps, opts.seed);
    corollary = corollary_bounds(constants, inputs, trange.lo, trange.hi);
    harmonic = harmonic_bound_curve(model, constants, inputs.sup_q, trange.lo, trange.hi);
  }

  std::vector<std::optional<MrcaEstimate>> oracle(estimates.size());
  if (oracle_horizon > 0) {
    start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      const int t = estimates[i].t;
      oracle[i] = mrca_direct_estimate(model, t, t + oracle_horizon, k, reps, opts.seed,
                                       opts.threads);
    }
    set_number(timing, "direct_simulation_seconds", seconds_since(start));
  } else {
    timing["direct_simulation_seconds"] = nullptr;
  }

  CsvTable csv;
  csv.header = {"t",
                "p_hat",
                "std_err",
                "lower_corollary",
                "upper_corollary",
                "lower_harmonic",
                "upper_harmonic",
                "oracle_p_hat",
                "oracle_se"};
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    std::vector<std::optional<double>> row;
    row.push_back(static_cast<double>(estimates[i].t));
    row.push_back(estimates[i].p_hat);
    row.push_back(estimates[i].std_err);
    if (corollary) {
      row.push_back(clamp01(corollary->lower[i]));
      row.push_back(clamp01(corollary->upper[i]));
      row.push_back(clamp01(harmonic->lower[i]));
      row.push_back(clamp01(harmonic->upper[i]));
    } else {
      row.insert(row.end(), 4, std::nullopt);
    }
    if (oracle[i]) {
      row.push_back(oracle[i]->p_hat);
      row.push_back(oracle[i]->std_err);
    } else {
      row.insert(row.end(), 2, std::nullopt);
    }
    csv.rows.push_back(std::move(row));
  }
  write_text_file(opts.out_prefix + ".csv", format_csv(csv));
  write_json(opts.out_prefix + ".timing.json", timing);
  std::cout << "coalesce: k=" << k << " t=" << t_range_text << " reps=" << reps << " -> "
            << opts.out_prefix << ".{csv,timing.json}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-type supercritical branching processes: limit densities, "
               "coalescence-time estimation, and decay bounds"};
  app.require_subcommand(1);

  try {
    CommonOpts spectral_opts;
    auto* cmd_spectral = app.add_subcommand("spectral", "Perron root and eigenvectors");
    add_common(cmd_spectral, &spectral_opts, "spectral");

    CommonOpts ext_opts;
    double ext_tol = 1e-12;
    long ext_max_iter = 1'000'000;
    auto* cmd_ext = app.add_subcommand("extinction", "Extinction probabilities q = f(q)");
    add_common(cmd_ext, &ext_opts, "extinction");
    cmd_ext->add_option("--tol", ext_tol, "Fixed-point tolerance")->capture_default_str();
    cmd_ext->add_option("--max-iter", ext_max_iter, "Iteration cap")->capture_default_str();

    CommonOpts wm_opts;
    int wm_order = 4;
    auto* cmd_wm = app.add_subcommand("wmoments", "Limit-variable moments per type");
    add_common(cmd_wm, &wm_opts, "wmoments");
    cmd_wm->add_option("--order", wm_order, "Highest moment order")->capture_default_str();

    CommonOpts den_opts;
    int den_type = 1;
    int den_order = 4;
    DensityOptions dopts;
    auto* cmd_den = app.add_subcommand("density", "Limit density of one type");
    add_common(cmd_den, &den_opts, "density");
    cmd_den->add_option("--type", den_type, "Type index (1-based)")->capture_default_str();
    cmd_den->add_option("--z", dopts.z, "Base abscissa of the seed ring")->capture_default_str();
    cmd_den->add_option("--rings", dopts.rings, "Ring count (0 = automatic)")
        ->capture_default_str();
    cmd_den->add_option("--points-per-ring", dopts.per_ring, "Points per ring per sign")
        ->capture_default_str();
    cmd_den->add_option("--grid-size", dopts.grid_points, "Inversion grid size (power of two)")
        ->capture_default_str();
    cmd_den->add_option("--order", den_order, "Moment order for the seed")->capture_default_str();

    CommonOpts bounds_opts;
    int bounds_k = 2;
    std::string bounds_eps = "AUTO";
    int bounds_tmax = 20;
    long long bounds_reps = 100'000;
    auto* cmd_bounds = app.add_subcommand("bounds", "Decay bounds from the immortal skeleton");
    add_common(cmd_bounds, &bounds_opts, "bounds");
    cmd_bounds->add_option("--k", bounds_k, "Sample size")->capture_default_str();
    cmd_bounds->add_option("--epsilon", bounds_eps, "Slack parameter or AUTO")
        ->capture_default_str();
    cmd_bounds->add_option("--t-max", bounds_tmax, "Largest generation")->capture_default_str();
    cmd_bounds->add_option("--reps", bounds_reps, "Monte Carlo replicates")->capture_default_str();

    CommonOpts sim_opts;
    int sim_horizon = 10;
    auto* cmd_sim = app.add_subcommand("simulate", "Population trajectory CSV");
    add_common(cmd_sim, &sim_opts, "simulate");
    cmd_sim->add_option("--horizon", sim_horizon, "Number of generations")->capture_default_str();

    CommonOpts gen_opts;
    int gen_t = 3;
    int gen_horizon = 10;
    int gen_k = 2;
    long long gen_reps = 1000;
    auto* cmd_gen = app.add_subcommand("genealogy", "Direct ancestor-tracking estimator");
    add_common(cmd_gen, &gen_opts, "genealogy");
    cmd_gen->add_option("--t", gen_t, "Anchor generation")->capture_default_str();
    cmd_gen->add_option("--horizon", gen_horizon, "Sampling generation T")->capture_default_str();
    cmd_gen->add_option("--k", gen_k, "Sample size")->capture_default_str();
    cmd_gen->add_option("--reps", gen_reps, "Replicates")->capture_default_str();

    CommonOpts co_opts;
    int co_k = 2;
    std::string co_t = "1..10";
    long long co_reps = 1000;
    bool co_with_bounds = false;
    int co_oracle = 0;
    long long co_bound_reps = 100'000;
    std::string co_eps = "AUTO";
    auto* cmd_co = app.add_subcommand("coalesce", "Limit-formula coalescence estimator");
    add_common(cmd_co, &co_opts, "coalesce");
    cmd_co->add_option("--k", co_k, "Sample size")->capture_default_str();
    cmd_co->add_option("--t", co_t, "Generation range, e.g. 1..10")->capture_default_str();
    cmd_co->add_option("--reps", co_reps, "Accepted replicates per t")->capture_default_str();
    cmd_co->add_flag("--with-bounds", co_with_bounds, "Also emit bound curves");
    cmd_co->add_option("--with-oracle", co_oracle,
                       "Also run the direct estimator with T = t + HORIZON");
    cmd_co->add_option("--bound-reps", co_bound_reps, "Replicates for bound inputs")
        ->capture_default_str();
    cmd_co->add_option("--epsilon", co_eps, "Slack parameter or AUTO")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (cmd_spectral->parsed()) return run_spectral(spectral_opts);
    if (cmd_ext->parsed()) return run_extinction(ext_opts, ext_tol, ext_max_iter);
    if (cmd_wm->parsed()) return run_wmoments(wm_opts, wm_order);
    if (cmd_den->parsed()) return run_density(den_opts, den_type, dopts, den_order);
    if (cmd_bounds->parsed())
      return run_bounds(bounds_opts, bounds_k, bounds_eps, bounds_tmax, bounds_reps);
    if (cmd_sim->parsed()) return run_simulate(sim_opts, sim_horizon);
    if (cmd_gen->parsed()) return run_genealogy(gen_opts, gen_t, gen_horizon, gen_k, gen_reps);
    if (cmd_co->parsed())
      return run_coalesce(co_opts, co_k, co_t, co_reps, co_with_bounds, co_oracle, co_bound_reps,
                          co_eps);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
