#include "spdesmc/commands.hpp"

#include <filesystem>
#include <fstream>

#include "spdesmc/heatmap.hpp"
#include "spdesmc/io.hpp"
#include "spdesmc/observation.hpp"
#include "spdesmc/particle_filter.hpp"
#include "spdesmc/smoother.hpp"
#include "spdesmc/ukf.hpp"

namespace spdesmc {

using nlohmann::json;

namespace {

void validate_model_block(const json& m) {
  check_known_keys(m, "model",
                   {"domain_length", "M", "dt", "scaled_frequencies", "matern", "amari"});
  if (m.contains("matern"))
    check_known_keys(m.at("matern"), "model.matern", {"sigma0", "rho0", "eta0"});
  if (m.contains("amari"))
    check_known_keys(m.at("amari"), "model.amari", {"amp", "B", "eta", "zeta", "delta"});
}

void validate_observation_block(const json& o) {
  check_known_keys(o, "observation",
                   {"times", "m", "cell_width", "sigma_scale", "downsample"});
  if (o.contains("times") && o.at("times").is_object())
    check_known_keys(o.at("times"), "observation.times", {"start", "step", "count"});
}

void validate_method_block(const json& m) {
  check_known_keys(m, "method",
                   {"flavor", "flavors", "J", "alpha", "n_move", "beta", "tempering", "workers",
                    "iters", "burnin", "beta0", "thinning", "s0", "guide", "rk4_step",
                    "sample_x0", "theta_init", "final_mean_window", "ukf_alpha", "ukf_beta",
                    "ukf_kappa"});
}

void validate_output_block(const json& o) {
  check_known_keys(o, "output",
                   {"heatmap", "heatmap_upscale", "csv_header", "dump_guide", "loc_components"});
}

GenerateConfig generate_config_from(const json& cfg) {
  GenerateConfig g;
  const json model = cfg.value("model", json::object());
  g.domain_length = model.value("domain_length", 20.0 * M_PI);
  g.M = model.value("M", 256);
  g.dt = model.value("dt", 0.02);
  g.scaled_frequencies = model.value("scaled_frequencies", false);
  const json matern = model.value("matern", json::object());
  g.sigma0 = matern.value("sigma0", 3e5);
  g.rho0 = matern.value("rho0", 5e-5);
  g.eta0 = matern.value("eta0", 1.0);
  const json amari = model.value("amari", json::object());
  g.theta.amp = amari.value("amp", 4.0);
  g.theta.B = amari.value("B", 1.5);
  g.theta.eta = amari.value("eta", 10.0);
  g.theta.zeta = amari.value("zeta", 0.5);
  g.theta.delta = amari.value("delta", 0.0);

  const json obs = cfg.value("observation", json::object());
  g.m_cells = obs.value("m", 15);
  g.cell_width = obs.value("cell_width", 1.0);
  g.sigma_scale = obs.value("sigma_scale", 0.01);
  if (obs.contains("times")) {
    const json& t = obs.at("times");
    if (t.is_array()) {
      g.times = t.get<std::vector<double>>();
    } else {
      const double start = t.value("start", 1.0);
      const double step = t.value("step", 1.0);
      const int count = t.value("count", 20);
      for (int i = 0; i < count; ++i) g.times.push_back(start + i * step);
    }
  }
  g.seed = cfg.value("seed", 0);
  return g;
}

struct LoadedModel {
  Dataset ds;
  SpectralGrid grid;
  LinearDynamics dyn;
  Drift drift;
  AmariParams theta;
};

LoadedModel load_model(const json& cfg, const std::string& data_path) {
  Dataset ds = Dataset::load(data_path);
  const json obs = cfg.value("observation", json::object());
  const int factor = obs.value("downsample", 1);
  if (factor > 1) ds = ds.downsample(factor);

  SpectralGrid grid = SpectralGrid::build(ds.domain_length, ds.M);
  GenerateConfig g = generate_config_from(cfg);
  LinearDynamics dyn = LinearDynamics::constant_a(
      1.0, matern_spectrum(g.sigma0, g.rho0, g.eta0, 1.0, grid, g.scaled_frequencies));

  AmariParams theta = ds.theta_true;
  const json model = cfg.value("model", json::object());
  if (model.contains("amari")) {
    const json& amari = model.at("amari");
    theta.amp = amari.value("amp", theta.amp);
    theta.B = amari.value("B", theta.B);
    theta.eta = amari.value("eta", theta.eta);
    theta.zeta = amari.value("zeta", theta.zeta);
    theta.delta = amari.value("delta", theta.delta);
  }
  Drift drift = Drift::amari(theta, grid);
  return LoadedModel{std::move(ds), std::move(grid), std::move(dyn), std::move(drift), theta};
}

MatrixXd modes_to_field_rows(const SpectralGrid& grid, const MatrixXd& modes_rows) {
  MatrixXd out(modes_rows.rows(), modes_rows.cols());
  for (Eigen::Index r = 0; r < modes_rows.rows(); ++r)
    out.row(r) = grid.to_field(modes_rows.row(r).transpose().array()).matrix().transpose();
  return out;
}

std::filesystem::path ensure_out_dir(const std::string& out_dir) {
  std::filesystem::path p(out_dir);
  std::filesystem::create_directories(p);
  return p;
}

FilterConfig filter_config_from(const json& cfg, const CliOverrides& ovr) {
  const json method = cfg.value("method", json::object());
  FilterConfig fc;
  std::string flavor = method.value("flavor", std::string("gpf1"));
  if (!ovr.flavor.empty()) flavor = ovr.flavor;
  fc.flavor = pf_flavor_from_string(flavor);
  fc.J = method.value("J", 100);
  fc.alpha = method.value("alpha", 0.75);
  fc.n_move = method.value("n_move", 30);
  fc.beta = method.value("beta", 0.1);
  fc.tempering = method.value("tempering", true);
  fc.seed = ovr.seed ? *ovr.seed : cfg.value("seed", 0);
  fc.workers = ovr.workers > 0 ? ovr.workers : method.value("workers", 1);
  return fc;
}

void write_filter_outputs(const std::filesystem::path& dir, const std::string& name,
                          const SpectralGrid& grid, const Dataset& ds, const FilterResult& fr,
                          const json& output_cfg) {
  write_json_file((dir / ("result_" + name + ".json")).string(), fr.to_json());
  MatrixXd err(fr.rel_errors.size(), 2);
  for (size_t i = 0; i < fr.rel_errors.size(); ++i) {
    err(i, 0) = ds.times[i];
    err(i, 1) = fr.rel_errors[i];
  }
  write_csv_file((dir / ("errors_" + name + ".csv")).string(), err,
                 output_cfg.value("csv_header", false)
                     ? std::vector<std::string>{"t", "rel_error"}
                     : std::vector<std::string>{});
  write_csv_file((dir / ("means_" + name + ".csv")).string(), fr.mean_modes);
  if (output_cfg.value("heatmap", true)) {
    render_heatmap(modes_to_field_rows(grid, fr.mean_modes),
                   (dir / ("recon_" + name + ".png")).string(),
                   output_cfg.value("heatmap_upscale", 1));
  }
}

}  // namespace

void validate_run_config(const json& cfg) {
  check_known_keys(cfg, "config", {"model", "observation", "method", "output", "seed"});
  if (cfg.contains("model")) validate_model_block(cfg.at("model"));
  if (cfg.contains("observation")) validate_observation_block(cfg.at("observation"));
  if (cfg.contains("method")) validate_method_block(cfg.at("method"));
  if (cfg.contains("output")) validate_output_block(cfg.at("output"));
  if (cfg.contains("seed") && !cfg.at("seed").is_number())
    throw SchemaError("config: seed must be a number");
}

json load_run_config(const std::string& path) {
  json cfg = read_json_file(path);
  validate_run_config(cfg);
  return cfg;
}

int cmd_simulate(const json& cfg, const std::string& out_dir, const CliOverrides& ovr) {
  GenerateConfig g = generate_config_from(cfg);
  if (ovr.seed) g.seed = *ovr.seed;
  const auto dir = ensure_out_dir(out_dir);
  MatrixXd full_path;
  const Dataset ds = generate_dataset(g, &full_path);
  ds.save((dir / "dataset.json").string());
  const json output_cfg = cfg.value("output", json::object());
  write_y_csv(ds, (dir / "y.csv").string(), output_cfg.value("csv_header", false));

  const SpectralGrid grid = SpectralGrid::build(g.domain_length, g.M);
  json meta;
  meta["dt"] = g.dt;
  meta["domain_length"] = g.domain_length;
  write_binary_dump((dir / "truth_path.bin").string(), full_path, meta);
  if (output_cfg.value("heatmap", true))
    render_heatmap(modes_to_field_rows(grid, full_path), (dir / "truth_heatmap.png").string(),
                   output_cfg.value("heatmap_upscale", 1));
  return 0;
}

int cmd_filter(const json& cfg, const std::string& data_path, const std::string& out_dir,
               const CliOverrides& ovr) {
  const json method = cfg.value("method", json::object());
  std::string flavor = method.value("flavor", std::string("gpf1"));
  if (!ovr.flavor.empty()) flavor = ovr.flavor;

  LoadedModel m = load_model(cfg, data_path);
  const auto dir = ensure_out_dir(out_dir);
  const json output_cfg = cfg.value("output", json::object());

  if (flavor == "ukf") {
    UkfConfig uc;
    uc.alpha_u = method.value("ukf_alpha", 1e-3);
    uc.beta_u = method.value("ukf_beta", 2.0);
    uc.kappa_u = method.value("ukf_kappa", 0.0);
    const UkfResult ur = run_ukf(m.ds, m.grid, m.dyn, m.drift, uc);
    write_filter_outputs(dir, "ukf", m.grid, m.ds, ur.filter, output_cfg);
    return 0;
  }
  const FilterConfig fc = filter_config_from(cfg, ovr);
  const FilterResult fr = run_filter(m.ds, m.grid, m.dyn, m.drift, fc);
  write_filter_outputs(dir, fr.method, m.grid, m.ds, fr, output_cfg);
  return 0;
}

int cmd_smooth(const json& cfg, const std::string& data_path, const std::string& out_dir,
               const CliOverrides& ovr, bool sample_theta) {
  LoadedModel m = load_model(cfg, data_path);
  const auto dir = ensure_out_dir(out_dir);
  const json method = cfg.value("method", json::object());
  const json output_cfg = cfg.value("output", json::object());

  SmootherConfig sc;
  sc.iters = method.value("iters", 15000);
  sc.burnin = method.value("burnin", 5000);
  sc.beta = method.value("beta", 0.1);
  sc.beta0 = method.value("beta0", 0.1);
  sc.sample_x0 = method.value("sample_x0", false);
  sc.sample_theta = sample_theta;
  sc.thinning = method.value("thinning", 100);
  sc.s0 = method.value("s0", 1.0);
  sc.seed = ovr.seed ? *ovr.seed : cfg.value("seed", 0);
  sc.guide = method.value("guide", std::string("direct")) == "riccati" ? GuideKind::Riccati
                                                                       : GuideKind::Direct;
  sc.rk4_step = method.value("rk4_step", 1e-3);
  sc.final_mean_window = method.value("final_mean_window", 1000);
  if (method.contains("theta_init")) {
    const auto v = method.at("theta_init").get<std::vector<double>>();
    if (v.size() != 4) throw SchemaError("method.theta_init must have 4 entries");
    for (int c = 0; c < 4; ++c) sc.theta_init[c] = v[c];
  } else {
    sc.theta_init = {m.theta.eta, m.theta.zeta, m.theta.amp, m.theta.delta};
  }

  const SmootherResult res = run_smoother(m.ds, m.grid, m.dyn, sc);

  // trace CSV
  MatrixXd trace(sc.iters, 12);
  for (int it = 0; it < sc.iters; ++it) {
    trace(it, 0) = it + 1;
    for (int c = 0; c < 4; ++c) trace(it, 1 + c) = res.theta_trace(it, c);
    trace(it, 5) = res.log_psi_trace[it];
    for (int c = 0; c < 6; ++c) trace(it, 6 + c) = res.accept_flags(it, c);
  }
  write_csv_file((dir / "trace.csv").string(), trace,
                 {"iter", "eta", "zeta", "amp", "delta", "log_psi", "accept_path", "accept_x0",
                  "accept_eta", "accept_zeta", "accept_amp", "accept_delta"});

  // posterior summary
  json summary;
  const char* names[4] = {"eta", "zeta", "amp", "delta"};
  for (int c = 0; c < 4; ++c) {
    summary["theta"][names[c]] = {{"mean", res.post_mean[c]},
                                  {"std", res.post_std[c]},
                                  {"acceptance", res.theta_accept_rate[c]}};
  }
  summary["path_acceptance"] = res.path_accept_rate;
  summary["x0_acceptance"] = res.x0_accept_rate;
  summary["iters"] = sc.iters;
  summary["burnin"] = sc.burnin;
  summary["seed"] = sc.seed;
  write_json_file((dir / "posterior_summary.json").string(), summary);

  // mean path + thinned paths
  json meta;
  meta["times"] = res.grid_times;
  write_binary_dump((dir / "mean_path.bin").string(), res.mean_path, meta);
  if (output_cfg.value("heatmap", true))
    render_heatmap(modes_to_field_rows(m.grid, res.mean_path), (dir / "mean_path.png").string(),
                   output_cfg.value("heatmap_upscale", 1));
  if (!res.thinned_paths.empty()) {
    MatrixXd stacked(res.thinned_paths.size() * res.mean_path.rows(), m.grid.size());
    for (size_t s = 0; s < res.thinned_paths.size(); ++s)
      stacked.middleRows(s * res.mean_path.rows(), res.mean_path.rows()) = res.thinned_paths[s];
    json pmeta;
    pmeta["n_samples"] = res.thinned_paths.size();
    pmeta["steps"] = res.mean_path.rows();
    pmeta["iters"] = res.thinned_iters;
    write_binary_dump((dir / "paths.bin").string(), stacked, pmeta);
  }

  // spatially localized paths: observation operator applied to thinned samples
  std::vector<int> components = output_cfg.value("loc_components", std::vector<int>{1, 8});
  const ObservationScheme scheme = m.ds.scheme(m.grid);
  for (int comp : components) {
    if (comp < 1 || comp > scheme.m()) continue;
    MatrixXd loc(res.mean_path.rows(), 1 + res.thinned_paths.size());
    for (Eigen::Index r = 0; r < res.mean_path.rows(); ++r) loc(r, 0) = res.grid_times[r];
    for (size_t s = 0; s < res.thinned_paths.size(); ++s)
      loc.col(1 + s) = res.thinned_paths[s] * scheme.L.row(comp - 1).transpose();
    write_csv_file((dir / ("loc_path_c" + std::to_string(comp) + ".csv")).string(), loc);
  }
  return 0;
}

int cmd_infer(const json& cfg, const std::string& data_path, const std::string& out_dir,
              const CliOverrides& ovr) {
  return cmd_smooth(cfg, data_path, out_dir, ovr, /*sample_theta=*/true);
}

int cmd_compare(const json& cfg, const std::string& data_path, const std::string& out_dir,
                const CliOverrides& ovr) {
  const json method = cfg.value("method", json::object());
  const std::vector<std::string> flavors = method.value(
      "flavors", std::vector<std::string>{"gpf1", "gpf2", "bootstrap", "ukf"});
  LoadedModel m = load_model(cfg, data_path);
  const auto dir = ensure_out_dir(out_dir);
  const json output_cfg = cfg.value("output", json::object());

  MatrixXd table(m.ds.times.size(), 1 + flavors.size());
  for (size_t i = 0; i < m.ds.times.size(); ++i) table(i, 0) = m.ds.times[i];
  std::vector<std::string> header{"t"};
  json combined;
  for (size_t f = 0; f < flavors.size(); ++f) {
    FilterResult fr;
    if (flavors[f] == "ukf") {
      UkfConfig uc;
      fr = run_ukf(m.ds, m.grid, m.dyn, m.drift, uc).filter;
    } else {
      CliOverrides o = ovr;
      o.flavor = flavors[f];
      fr = run_filter(m.ds, m.grid, m.dyn, m.drift, filter_config_from(cfg, o));
    }
    write_filter_outputs(dir, flavors[f], m.grid, m.ds, fr, output_cfg);
    combined[flavors[f]] = fr.to_json();
    header.push_back(flavors[f]);
    for (size_t i = 0; i < fr.rel_errors.size(); ++i) table(i, 1 + f) = fr.rel_errors[i];
  }
  write_csv_file((dir / "compare_errors.csv").string(), table, header);
  write_json_file((dir / "compare.json").string(), combined);
  return 0;
}

}  // namespace spdesmc
