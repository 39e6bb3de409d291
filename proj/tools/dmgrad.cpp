// Command-line harness: grad-bench, pack, tomo, dmap.
//
// Exit codes: 0 success, 1 run failure or acceptance miss under --strict,
// 2 usage or configuration error.

#include "dmgrad/diffusion_map.hpp"
#include "dmgrad/gradient_benchmark.hpp"
#include "dmgrad/io.hpp"
#include "dmgrad/lattice.hpp"
#include "dmgrad/tomography.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dmgrad;

namespace {

constexpr int kOk = 0;
constexpr int kMiss = 1;
constexpr int kUsage = 2;

struct Global
{
  std::uint64_t seed = 0;
  std::string out = "out";
  bool strict = false;
};

double median(std::vector<double> v) { return detail::quantile(std::move(v), 0.5); }

// ---------------------------------------------------------------------------

struct GradBenchArgs
{
  std::vector<double> t_list{1.0, 0.5, 0.1, 0.05};
  std::vector<int> m_list{100, 200, 300, 400};
  int trials = 5;
  double delta = 0.9;
};

int cmd_grad_bench(const Global& g, const GradBenchArgs& a)
{
  for (double t : a.t_list)
    if (!(t > 0.0)) throw std::invalid_argument("grad-bench: every t must be positive");
  for (int m : a.m_list)
    if (m < 2) throw std::invalid_argument("grad-bench: every m must be at least 2");
  if (a.trials < 1) throw std::invalid_argument("grad-bench: trials must be positive");

  const fs::path out(g.out);
  io::CsvWriter table(out / "grad_bench.csv", {"t", "m", "mse_proposed", "mse_learning", "seed"});
  io::CsvWriter trials(out / "grad_bench_trials.csv", {"t", "m", "mse_proposed", "mse_learning", "seed"});
  std::printf("%8s %6s %14s %14s  %s\n", "t", "m", "log10 proposed", "log10 learning", "lower");
  int wins = 0;
  int cells = 0;
  std::uint64_t cell = 0;
  for (double t : a.t_list) {
    for (int m : a.m_list) {
      std::vector<double> prop;
      std::vector<double> learn;
      for (int k = 0; k < a.trials; ++k) {
        const std::uint64_t seed = derive_seed(g.seed, cell * static_cast<std::uint64_t>(a.trials) + k);
        const auto rec = mse_benchmark(t, m, seed, a.delta);
        if (!std::isfinite(rec.mse_proposed) || !std::isfinite(rec.mse_learning))
          throw NumericalError("grad-bench: non-finite MSE in cell t=" + io::fmt(t) + " m=" + std::to_string(m));
        trials.row({io::fmt(t), std::to_string(m), io::fmt(rec.mse_proposed), io::fmt(rec.mse_learning), std::to_string(seed)});
        prop.push_back(rec.mse_proposed);
        learn.push_back(rec.mse_learning);
      }
      const double mp = median(prop);
      const double ml = median(learn);
      table.row({io::fmt(t), std::to_string(m), io::fmt(mp), io::fmt(ml), std::to_string(g.seed)});
      const bool win = mp < ml;
      wins += win;
      ++cells;
      ++cell;
      std::printf("%8g %6d %14.4f %14.4f  %s\n", t, m, std::log10(mp), std::log10(ml), win ? "proposed" : "learning");
    }
  }
  std::printf("proposed lower in %d of %d cells\n", wins, cells);
  if (g.strict && 16 * wins < 14 * cells) return kMiss;
  return kOk;
}

// ---------------------------------------------------------------------------

struct PackArgs
{
  int n = 2;
  double sigma = 0.02;
  int samples = 20;
  long iters = 0;
  double lambda0 = 0.1;
  int l = 10;
  double epsilon = 1e-10;
  double s_f = 1.1;
  double delta = 0.99;
  double t = 1e-5;
  std::string coupling = "sigma";
  int executions = 1;
  double scatter_radius = 3.0;
};

double reference_density(int n)
{
  switch (n) {
    case 2: return std::numbers::pi / (2.0 * std::sqrt(3.0));
    case 3: return std::numbers::pi / (3.0 * std::sqrt(2.0));
    case 4: return 0.6168502750680849;
    case 5: return 0.4652576133092586;
    default: return 0.0;
  }
}

long default_budget(int n) { return n == 2 ? 2000 : n == 3 ? 5000 : 20000; }

void write_pack_outputs(const fs::path& dir, const PackResult& r, double radius)
{
  {
    io::CsvWriter trace(dir / "trace.csv", {"iter", "g", "density", "lambda"});
    for (const auto& row : r.rows)
      trace.row({std::to_string(row.iter), io::fmt(row.g), io::fmt(row.density), io::fmt(row.lambda)});
  }
  const auto sv = shortest_vector(r.best_basis);
  nlohmann::ordered_json basis;
  basis["n"] = r.best_basis.n();
  basis["columns"] = io::matrix_json(r.best_basis.columns());
  basis["determinant"] = r.best_basis.columns().determinant();
  basis["g"] = sv.length;
  basis["shortest_coeffs"] = std::vector<long>(sv.coeffs.begin(), sv.coeffs.end());
  basis["density"] = r.best_density;
  basis["iterations"] = r.trace.iterates.size() - 1;
  basis["stop_reason"] = r.trace.stop_reason == StopReason::tolerance ? "tolerance" : "max_iters";
  io::write_json(dir / "basis.json", basis);

  const auto [pts, coeffs] = lattice_points(r.best_basis, radius);
  std::vector<std::string> header;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) header.push_back("x" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < pts.cols(); ++i) header.push_back("z" + std::to_string(i + 1));
  io::CsvWriter scatter(dir / "lattice_points.csv", header);
  for (Eigen::Index p = 0; p < pts.rows(); ++p) {
    std::vector<std::string> cells;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) cells.push_back(io::fmt(pts(p, i)));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) cells.push_back(std::to_string(coeffs[static_cast<std::size_t>(p)](i)));
    scatter.row(cells);
  }
}

int cmd_pack(const Global& g, const PackArgs& a)
{
  if (a.n < 2 || a.n > 5) throw std::invalid_argument("pack: n must lie in {2, 3, 4, 5}");
  if (a.executions < 1) throw std::invalid_argument("pack: executions must be positive");
  if (a.coupling != "sigma" && a.coupling != "raw") throw std::invalid_argument("pack: coupling is 'sigma' or 'raw'");

  OptimizerParams params;
  params.lambda0 = a.lambda0;
  params.l = a.l;
  params.epsilon = a.epsilon;
  params.s_f = a.s_f;
  params.max_iters = a.iters > 0 ? a.iters : default_budget(a.n);
  params.kernel = KernelParams(a.t, a.delta, static_cast<std::size_t>(a.samples));

  const double ref = reference_density(a.n);
  const double threshold = a.n == 2 ? 0.90 : a.n == 3 ? 0.70 : 0.0;
  int passed = 0;
  for (int e = 0; e < a.executions; ++e) {
    PackOptions opt;
    opt.n = a.n;
    opt.sigma = a.sigma;
    opt.samples = a.samples;
    opt.coupling = a.coupling == "sigma" ? PackCoupling::bandwidth_is_sigma : PackCoupling::raw_v;
    opt.seed = derive_seed(g.seed, static_cast<std::uint64_t>(e));
    const auto r = pack(opt, params);
    const fs::path dir = a.executions > 1 ? fs::path(g.out) / ("run_" + std::to_string(e)) : fs::path(g.out);
    write_pack_outputs(dir, r, a.scatter_radius);
    const bool minkowski = r.max_g_seen <= std::sqrt(static_cast<double>(a.n)) + 1e-9;
    passed += r.best_density >= threshold && minkowski;
    std::printf("run %d: best density %.15f, reference %.15f, gap %.3e, iterations %zu, max g %.6f%s\n", e,
                r.best_density, ref, ref - r.best_density, r.trace.iterates.size() - 1, r.max_g_seen,
                minkowski ? "" : " (Minkowski bound violated)");
  }
  if (threshold > 0.0) {
    const double share = a.n == 2 ? 0.8 : 0.6;
    const int needed = static_cast<int>(std::ceil(share * a.executions - 1e-9));
    std::printf("runs at density >= %.2f: %d of %d (need %d)\n", threshold, passed, a.executions, needed);
    if (g.strict && passed < needed) return kMiss;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TomoArgs
{
  int n = 128;
  int k = 2000;
  int s = 20;
  int m = 10;
  int detectors = 0;
  std::vector<double> eta{0.0};
  std::string bandwidth_rule = "rms";
  double diffusion_time = 1.0;
  bool emit_embeddings = false;
};

void write_tomo_outputs(const fs::path& dir, const tomo::TomoResult& r, bool emit_embeddings)
{
  const auto& data = r.data;
  {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < data.rows.cols(); ++j) header.push_back("d" + std::to_string(j));
    io::CsvWriter sino(dir / "sinogram.csv", header);
    for (Eigen::Index i = 0; i < data.rows.rows(); ++i) {
      std::vector<std::string> cells;
      for (Eigen::Index j = 0; j < data.rows.cols(); ++j) cells.push_back(io::fmt(data.rows(i, j)));
      sino.row(cells);
    }
  }
  nlohmann::ordered_json header;
  header["h"] = data.h;
  header["detectors"] = std::vector<double>(data.detectors.begin(), data.detectors.end());
  header["k"] = data.count();
  if (data.true_angles) header["truth"] = *data.true_angles;
  io::write_json(dir / "sinogram.json", header);

  {
    const auto& rec = r.recovery;
    io::CsvWriter angles(dir / "angles.csv", {"index", "unsigned", "sign", "final"});
    for (std::size_t i = 0; i < rec.angles.size(); ++i)
      angles.row({std::to_string(i), io::fmt(rec.unsigned_angles[i]), std::to_string(rec.signs[i] < 0 ? -1 : 1),
                  io::fmt(rec.angles[i])});
  }
  const double white = r.phantom.pixels.maxCoeff();
  io::write_pgm(dir / "phantom.pgm", r.phantom.pixels, white);
  io::write_pgm(dir / "recon_signed.pgm", r.recon_signed.pixels, white);
  io::write_pgm(dir / "recon_unsigned.pgm", r.recon_unsigned.pixels, white);

  if (emit_embeddings) {
    const auto& st = r.recovery.state;
    for (std::size_t w = 0; w < st.embeddings.size(); ++w) {
      io::CsvWriter emb(dir / "embeddings" / ("window_" + std::to_string(w) + ".csv"),
                        {"row", "y1", "y2", "sign", "unsigned"});
      for (std::size_t i = 0; i < st.embedded_rows[w].size(); ++i) {
        const auto row = st.embedded_rows[w][i];
        const auto ri = static_cast<std::size_t>(row);
        emb.row({std::to_string(row), io::fmt(st.embeddings[w](static_cast<Eigen::Index>(i), 0)),
                 io::fmt(st.embeddings[w](static_cast<Eigen::Index>(i), 1)), std::to_string(r.recovery.signs[ri]),
                 io::fmt(r.recovery.unsigned_angles[ri])});
      }
    }
  }
}

int cmd_tomo(const Global& g, const TomoArgs& a)
{
  if (a.n < 32) throw std::invalid_argument("tomo: n must be at least 32");
  if (a.k < 1 || a.s < 1 || a.s > a.k) throw std::invalid_argument("tomo: need 1 <= s <= k");
  if (a.m < 1) throw std::invalid_argument("tomo: m must be positive");
  if (a.bandwidth_rule != "rms" && a.bandwidth_rule != "median")
    throw std::invalid_argument("tomo: bandwidth-rule is 'rms' or 'median'");
  for (double e : a.eta)
    if (!(e >= 0.0)) throw std::invalid_argument("tomo: eta must be non-negative");

  const fs::path out(g.out);
  io::CsvWriter errors(out / "errors.csv",
                       {"eta", "error_signed", "error_unsigned", "sign_accuracy", "reflected", "clamped", "eigensolves"});
  bool ordered = true;
  std::printf("%6s %14s %16s %14s\n", "eta", "error signed", "error unsigned", "sign accuracy");
  for (std::size_t i = 0; i < a.eta.size(); ++i) {
    tomo::TomoConfig cfg;
    cfg.n = a.n;
    cfg.k = a.k;
    cfg.s = a.s;
    cfg.detectors = a.detectors;
    cfg.eta = a.eta[i];
    cfg.seed = g.seed;
    cfg.embed.neighbors = a.m;
    cfg.embed.diffusion_time = a.diffusion_time;
    cfg.embed.rule = a.bandwidth_rule == "rms" ? tomo::BandwidthRule::rms : tomo::BandwidthRule::median;
    tomo::TomoResult r;
    try {
      r = tomo::run_tomography(cfg);
    } catch (const NumericalError& e) {
      std::fprintf(stderr, "tomo: %s\n", e.what());
      return kMiss;
    }
    write_tomo_outputs(out / ("eta_" + std::to_string(i)), r, a.emit_embeddings);
    errors.row({io::fmt(cfg.eta), io::fmt(r.error_signed), io::fmt(r.error_unsigned), io::fmt(r.sign_accuracy),
                r.recovery.reflected ? "1" : "0", std::to_string(r.recovery.clamped),
                std::to_string(r.recovery.eigensolves)});
    std::printf("%6g %14.4f %16.4f %14.4f\n", cfg.eta, r.error_signed, r.error_unsigned, r.sign_accuracy);
    ordered = ordered && r.error_signed < r.error_unsigned;
  }
  if (g.strict && !ordered) return kMiss;
  return kOk;
}

// ---------------------------------------------------------------------------

struct DmapArgs
{
  std::string input;
  int dim = 2;
  double time = 1.0;
  double bandwidth = 0.0;
};

int cmd_dmap(const Global& g, const DmapArgs& a)
{
  const Matrix points = io::read_points_csv(a.input);
  if (a.dim < 1 || a.dim >= points.rows())
    throw std::invalid_argument("dmap: dim must lie in [1, k-1] for k = " + std::to_string(points.rows()) + " points");
  const double eps = a.bandwidth > 0.0 ? a.bandwidth : auto_bandwidth(points);
  const auto emb = diffusion_map(points, a.dim, a.time, eps);

  const fs::path out(g.out);
  std::vector<std::string> header{"index"};
  for (int j = 0; j < a.dim; ++j) header.push_back("y" + std::to_string(j + 1));
  io::CsvWriter csv(out / "embedding.csv", header);
  for (Eigen::Index i = 0; i < emb.coordinates.rows(); ++i) {
    std::vector<std::string> cells{std::to_string(i)};
    for (int j = 0; j < a.dim; ++j) cells.push_back(io::fmt(emb.coordinates(i, j)));
    csv.row(cells);
  }
  nlohmann::ordered_json meta;
  meta["eigenvalues"] = std::vector<double>(emb.eigenvalues.begin(), emb.eigenvalues.end());
  meta["trivial_eigenvalue"] = emb.trivial_eigenvalue;
  meta["bandwidth"] = eps;
  meta["diffusion_time"] = emb.diffusion_time;
  io::write_json(out / "eigenvalues.json", meta);
  std::printf("embedded %ld points into %d dimensions (bandwidth %.6g)\n", static_cast<long>(points.rows()), a.dim, eps);
  return kOk;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Derivative-free gradient estimation experiments"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file (sections or dotted keys per subcommand)");

  Global g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("--strict", g.strict, "exit 1 when the acceptance threshold is missed");

  GradBenchArgs gb;
  auto* grad = app.add_subcommand("grad-bench", "kernel estimator vs learning gradient on the R^9 curve");
  grad->add_option("--t-list", gb.t_list, "bandwidths")->delimiter(',')->capture_default_str();
  grad->add_option("--m-list", gb.m_list, "sample counts")->delimiter(',')->capture_default_str();
  grad->add_option("--trials", gb.trials, "seeds per cell (median reported)")->capture_default_str();
  grad->add_option("--delta", gb.delta, "ball exponent")->capture_default_str();

  PackArgs pk;
  auto* pack_cmd = app.add_subcommand("pack", "lattice packing over SL(n)");
  pack_cmd->add_option("--n", pk.n, "dimension")->capture_default_str();
  pack_cmd->add_option("--sigma", pk.sigma, "perturbation scale")->capture_default_str();
  pack_cmd->add_option("--samples", pk.samples, "neighbors per step")->capture_default_str();
  pack_cmd->add_option("--iters", pk.iters, "iteration budget (0: 2000 for n=2, 5000 for n=3, 20000 otherwise)")->capture_default_str();
  pack_cmd->add_option("--lambda0", pk.lambda0, "initial step")->capture_default_str();
  pack_cmd->add_option("--l", pk.l, "sub-iteration control number")->capture_default_str();
  pack_cmd->add_option("--epsilon", pk.epsilon, "termination tolerance")->capture_default_str();
  pack_cmd->add_option("--sf", pk.s_f, "step-scale factor")->capture_default_str();
  pack_cmd->add_option("--delta", pk.delta, "ball exponent")->capture_default_str();
  pack_cmd->add_option("--t", pk.t, "kernel bandwidth in raw coupling")->capture_default_str();
  pack_cmd->add_option("--coupling", pk.coupling, "sigma: t = sigma and raw_v / t^2; raw: undivided raw_v")->capture_default_str();
  pack_cmd->add_option("--executions", pk.executions, "independent seeded runs")->capture_default_str();
  pack_cmd->add_option("--scatter-radius", pk.scatter_radius, "radius of the lattice point scatter")->capture_default_str();

  TomoArgs tm;
  auto* tomo_cmd = app.add_subcommand("tomo", "tomography from unknown angles");
  tomo_cmd->add_option("--n", tm.n, "image grid size")->capture_default_str();
  tomo_cmd->add_option("--k", tm.k, "number of projections")->capture_default_str();
  tomo_cmd->add_option("--s", tm.s, "window size")->capture_default_str();
  tomo_cmd->add_option("--m", tm.m, "nearest neighbors for the sign gradients")->capture_default_str();
  tomo_cmd->add_option("--detectors", tm.detectors, "detector count (0: n)")->capture_default_str();
  tomo_cmd->add_option("--eta", tm.eta, "noise levels")->delimiter(',')->capture_default_str();
  tomo_cmd->add_option("--bandwidth-rule", tm.bandwidth_rule, "rms or median")->capture_default_str();
  tomo_cmd->add_option("--diffusion-time", tm.diffusion_time, "diffusion time")->capture_default_str();
  tomo_cmd->add_flag("--emit-embeddings", tm.emit_embeddings, "write per-window 2-D embeddings");

  DmapArgs dm;
  auto* dmap_cmd = app.add_subcommand("dmap", "diffusion-map embedding of a point CSV");
  dmap_cmd->add_option("--input", dm.input, "points, one per row")->required();
  dmap_cmd->add_option("--dim", dm.dim, "embedding dimension")->capture_default_str();
  dmap_cmd->add_option("--time", dm.time, "diffusion time")->capture_default_str();
  dmap_cmd->add_option("--bandwidth", dm.bandwidth, "kernel bandwidth (0: median rule)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    auto echo = io::open_out(fs::path(g.out) / "config.ini");
    echo << app.config_to_str(true, false);
    echo.close();

    if (grad->parsed()) return cmd_grad_bench(g, gb);
    if (pack_cmd->parsed()) return cmd_pack(g, pk);
    if (tomo_cmd->parsed()) return cmd_tomo(g, tm);
    return cmd_dmap(g, dm);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMiss;
  }
}
