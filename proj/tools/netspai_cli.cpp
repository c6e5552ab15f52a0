// netspai command-line front end.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "netspai/errors.hpp"
#include "netspai/estimator.hpp"
#include "netspai/harness.hpp"
#include "netspai/io.hpp"
#include "netspai/kernels.hpp"
#include "netspai/models.hpp"
#include "netspai/spai.hpp"
#include "netspai/statespace.hpp"

namespace {

using namespace netspai;
using io::Json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

/// Raised when an iteration fails to converge; maps to exit code 1.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  int threads = 1;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
};

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return fallback;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw ValidationError(std::string(name) + " must be an integer, got '" + v + "'");
  }
}

std::string env_str(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return (v == nullptr || *v == '\0') ? fallback : std::string(v);
}

/// RunConfig: command, parameters, environment-derived settings and the
/// hashes of every input file.
Json run_config(const std::string& command, const Common& c, Json params,
                const std::vector<fs::path>& inputs = {}) {
  Json j;
  j["tool"] = "netspai";
  j["version"] = kVersion;
  j["command"] = command;
  j["params"] = std::move(params);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  Json in = Json::object();
  for (const auto& p : inputs) in[p.string()] = io::content_hash({p});
  j["inputs"] = std::move(in);
  j["input_hash"] = io::content_hash(inputs);
  return j;
}

fs::path out_path(const Common& c, const std::string& given, const std::string& fallback) {
  return given.empty() ? fs::path(c.out_dir) / fallback : fs::path(given);
}

fs::path require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string(what) + " is required");
  if (!fs::exists(path)) throw ValidationError(std::string(what) + " '" + path + "' does not exist");
  return fs::path(path);
}

Json interval_json(const SingularInterval& sv) {
  return Json{{"a", sv.a}, {"b", sv.b}, {"kappa", sv.kappa}, {"converged", sv.converged_a && sv.converged_b}};
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  HeatModelSpec heat;
  Index N = 10, n = 2;
  double coupling = 0.3, rho = 0.9;
  RandomModelSpec random;
  std::string output;
};

void write_system(const Common& c, const GenerateArgs& a, const InterconnectedSystem& sys,
                  Json params) {
  const fs::path path = out_path(c, a.output, "system.json");
  io::save_system(path, sys, run_config("generate", c, std::move(params)));
  std::cout << "wrote " << path.string() << " (N=" << sys.N << ", n=" << sys.n << ", m=" << sys.m
            << ", r=" << sys.r << ", edges=" << sys.edges.size() << ")\n";
}

void cmd_generate_heat(const Common& c, const GenerateArgs& a) {
  const InterconnectedSystem sys = generate_heat3d(a.heat);
  write_system(c, a, sys,
               Json{{"model", "heat3d"}, {"gx", a.heat.gx}, {"gy", a.heat.gy}, {"gz", a.heat.gz},
                    {"alpha", a.heat.alpha}, {"h", a.heat.h}, {"dt", a.heat.dt},
                    {"dt_max", heat_max_dt(a.heat)}});
}

void cmd_generate_chain(const Common& c, const GenerateArgs& a) {
  const InterconnectedSystem sys = generate_banded_chain(a.N, a.n, a.coupling, a.rho);
  write_system(c, a, sys,
               Json{{"model", "chain"}, {"N", a.N}, {"n", a.n}, {"coupling", a.coupling}, {"rho", a.rho}});
}

void cmd_generate_random(const Common& c, GenerateArgs a) {
  a.random.seed = c.seed;
  const InterconnectedSystem sys = generate_random(a.random);
  const auto& s = a.random;
  write_system(c, a, sys,
               Json{{"model", "random"}, {"N", s.N}, {"n", s.n}, {"m", s.m}, {"r", s.r},
                    {"mean_degree", s.mean_degree}, {"rho", s.rho}, {"positive", s.positive}});
}

// ----------------------------------------------------------------- gramian

struct GramianArgs {
  std::string system;
  int p = 4;
  double mu = 0.0;
  std::string kind = "obs";
  std::string output;
};

void cmd_gramian(const Common& c, const GramianArgs& a) {
  const fs::path sys_path = require_file(a.system, "system file");
  const Json sys_json = io::read_json(sys_path);
  const InterconnectedSystem sys = io::system_from_json(sys_json);
  if (a.p < 1) throw ValidationError("--p must be >= 1");
  if (a.mu < 0.0) throw ValidationError("--mu must be nonnegative");
  const LiftedModel lifted = lift(sys, a.p, c.threads);
  Gramian w;
  if (a.kind == "obs") {
    w = obs_gramian(lifted, a.mu, c.threads);
  } else if (a.kind == "ctrl") {
    w = ctrl_gramian(lifted, a.mu, c.threads);
  } else {
    throw ValidationError("--kind must be obs or ctrl");
  }
  const SingularInterval sv = extreme_singular_values(w.matrix);
  if (!sv.kappa_defined || sv.a <= 1e-12 * sv.b) {
    throw NumericalError("the " + a.kind + " Gramian is singular (smallest eigenvalue " +
                         std::to_string(sv.a) + "); p is below the " +
                         (a.kind == "obs" ? "observability" : "controllability") +
                         " index, use --mu > 0");
  }
  Json header = run_config("gramian", c, Json{{"p", a.p}, {"mu", a.mu}, {"kind", a.kind}}, {sys_path});
  header["interval"] = interval_json(sv);
  header["nnz_blocks"] = w.matrix.nnz_blocks();
  const fs::path path = out_path(c, a.output, "gramian.mtx");
  io::write_matrix(path, w.matrix, header);
  std::cout << "wrote " << path.string() << " (" << w.matrix.rows() << "x" << w.matrix.cols()
            << ", " << w.matrix.nnz_blocks() << " blocks)\n";
  std::cout << "kappa = " << sv.kappa << "  [a = " << sv.a << ", b = " << sv.b << "]\n";
  if (sys_json.contains("header") && sys_json["header"]["params"].value("model", "") == "heat3d") {
    std::cout << "reference: kappa = " << HeatReproResult::kappa_reference
              << " reported for the 30x30x3 heat network (p = 4, mu = 0.001)\n";
  }
}

// ------------------------------------------------------------------ invert

struct InvertArgs {
  std::string gramian, config, output;
  std::string method;
  Index beta = -1;
  int neumann = -1;
  std::string pattern_file;
  double phi = -1.0, mu = -1.0, tol = -1.0;
  int max_iter = -1;
  bool dense = false;
};

PatternMatrix resolve_pattern(const io::SpaiConfig& cfg, const BlockSparseMatrix& w) {
  switch (cfg.pattern) {
    case io::PatternKind::band: return banded_pattern(w.row_block_sizes(), cfg.beta);
    case io::PatternKind::neumann: return predict_pattern_neumann(w, cfg.s);
    case io::PatternKind::file: {
      PatternMatrix p = io::read_pattern(require_file(cfg.path, "pattern file"));
      if (p.dimension() != w.block_rows()) {
        throw DimensionError("pattern file has dimension " + std::to_string(p.dimension()) +
                             ", Gramian has " + std::to_string(w.block_rows()) + " block rows");
      }
      return p;
    }
    case io::PatternKind::none: break;
  }
  throw ValidationError("no pattern configured");
}

void cmd_invert(const Common& c, const InvertArgs& a) {
  const fs::path w_path = require_file(a.gramian, "Gramian file");
  std::vector<fs::path> inputs{w_path};
  io::SpaiConfig cfg;
  if (!a.config.empty()) {
    inputs.push_back(require_file(a.config, "config file"));
    cfg = io::spai_config_from_json(io::read_json(a.config));
  }
  if (!a.method.empty()) cfg = io::spai_config_from_json([&] {
    Json j = io::to_json(cfg);
    j["method"] = a.method;
    return j;
  }());
  if (a.beta >= 0) {
    cfg.pattern = io::PatternKind::band;
    cfg.beta = a.beta;
  }
  if (a.neumann >= 0) {
    cfg.pattern = io::PatternKind::neumann;
    cfg.s = a.neumann;
  }
  if (!a.pattern_file.empty()) {
    cfg.pattern = io::PatternKind::file;
    cfg.path = a.pattern_file;
  }
  if (a.phi >= 0.0) cfg.phi = a.phi;
  if (a.mu >= 0.0) cfg.mu = a.mu;
  if (a.tol > 0.0) cfg.tol = a.tol;
  if (a.max_iter > 0) cfg.max_iter = a.max_iter;
  if (a.dense) cfg.dense = true;
  if (cfg.pattern == io::PatternKind::file) inputs.push_back(require_file(cfg.path, "pattern file"));

  const BlockSparseMatrix w = io::read_matrix(w_path);
  ApproxInverse x;
  if (cfg.method == SpaiMethod::frobenius) {
    if (cfg.pattern == io::PatternKind::none) {
      throw ValidationError("the Frobenius method needs a pattern (--beta, --neumann or --pattern)");
    }
    const BlockSparseMatrix wr = cfg.mu > 0.0 ? add_identity(w, cfg.mu) : w;
    x = frobenius_spai(wr, resolve_pattern(cfg, wr), c.threads);
    x.report.mu = cfg.mu;
  } else {
    NewtonSchulzConfig ns;
    ns.dense_mode = cfg.dense;
    if (cfg.pattern != io::PatternKind::none) ns.pattern = resolve_pattern(cfg, w);
    ns.phi = cfg.phi;
    ns.tol = cfg.tol;
    ns.max_iter = cfg.max_iter;
    ns.threads = c.threads;
    x = regularize_and_invert(w, cfg.mu, ns);
  }

  const fs::path dir(c.out_dir);
  const fs::path x_path = a.output.empty() ? dir / "X.mtx" : fs::path(a.output);
  const fs::path base = x_path.parent_path();
  Json header = run_config("invert", c, io::to_json(cfg), inputs);
  Json summary = io::report_summary(x.report);
  summary.erase("total_seconds");
  header["report"] = summary;
  io::write_matrix(x_path, x.X, header);
  Json full = header;
  full["report"] = io::report_summary(x.report);
  io::write_json(base / "report.json", full);
  std::cout << "wrote " << x_path.string() << " (" << x.X.nnz_blocks() << " blocks)\n";
  if (cfg.method == SpaiMethod::frobenius) {
    io::write_column_residuals_csv(base / "residuals.csv", x.report);
    std::cout << "||I - W X||_F = " << x.report.frobenius_objective << ", empty columns: "
              << x.report.empty_columns.size() << "\n";
    return;
  }
  io::write_report_csv(base / "report.csv", x.report);
  std::cout << "status " << to_string(x.report.status) << " after "
            << x.report.iterations.back().k << " iterations, best k = " << x.report.best_k
            << ", epsilon = " << x.report.final_epsilon() << ", kappa = " << x.report.kappa << "\n";
  if (x.report.status == SpaiStatus::diverged || x.report.status == SpaiStatus::max_iter) {
    throw NonConvergence("Newton-Schulz " + to_string(x.report.status) + " (see " +
                         (base / "report.csv").string() + ")");
  }
}

// --------------------------------------------------------------- estimator

struct EstimatorArgs {
  std::string system, x, output;
  int p = 4;
  double mu = 0.0;
  bool exact = false;
  int s = -1;
};

BlockSparseMatrix dense_inverse(const BlockSparseMatrix& w) {
  const Eigen::MatrixXd wd = w.to_dense();
  Eigen::LLT<Eigen::MatrixXd> llt(wd);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
    throw NumericalError("the Gramian is singular or indefinite; use --mu > 0");
  }
  return BlockSparseMatrix::from_dense(llt.solve(Eigen::MatrixXd::Identity(wd.rows(), wd.cols())),
                                       w.row_block_sizes(), w.col_block_sizes());
}

void cmd_estimator(const Common& c, const EstimatorArgs& a) {
  const fs::path sys_path = require_file(a.system, "system file");
  std::vector<fs::path> inputs{sys_path};
  const InterconnectedSystem sys = io::load_system(sys_path);
  const LiftedModel lifted = lift(sys, a.p, c.threads);
  BlockSparseMatrix x;
  if (a.exact) {
    x = dense_inverse(obs_gramian(lifted, a.mu, c.threads).matrix);
  } else {
    const fs::path x_path = require_file(a.x, "X file (or --exact)");
    inputs.push_back(x_path);
    x = io::read_matrix(x_path);
  }
  const DistributedEstimator est = build_estimator(x, lifted, c.threads);
  const CommunicationGraph graph = communication_graph(est);

  const PatternMatrix a_bar = binarize(lifted.global.A);
  const PatternMatrix w_bar = predict_gramian_pattern(a_bar, a.p);
  const PatternMatrix x_bar_actual = binarize(x);
  int s = a.s;
  if (s < 0) {
    // Smallest Neumann depth whose predicted support covers X.
    s = 0;
    while (!x_bar_actual.is_subset_of(pattern_power_sum(w_bar, s)) && s < sys.N) ++s;
  }
  const EstimatorPatterns pred = predict_estimator_patterns(a_bar, a.p, s);
  const bool l_ok = graph.L_bar.is_subset_of(pred.L_bar);
  const bool q_ok = graph.Q_bar.is_subset_of(pred.Q_bar);

  Json params{{"p", a.p}, {"mu", a.mu}, {"exact", a.exact}, {"s", s}};
  Json header = run_config("estimator", c, params, inputs);
  const fs::path dir = a.output.empty() ? fs::path(c.out_dir) : fs::path(a.output);
  io::write_estimator(dir, est, header);
  io::write_communication_csv(dir / "communication.csv", graph);
  Json pat = header;
  pat["L"] = {{"actual_nnz", graph.L_bar.nnz()}, {"predicted_nnz", pred.L_bar.nnz()},
              {"contained", l_ok}, {"mean_degree", graph.mean_degree_L}, {"max_degree", graph.max_degree_L}};
  pat["Q"] = {{"actual_nnz", graph.Q_bar.nnz()}, {"predicted_nnz", pred.Q_bar.nnz()},
              {"contained", q_ok}, {"mean_degree", graph.mean_degree_Q}, {"max_degree", graph.max_degree_Q}};
  pat["X"] = {{"actual_nnz", x_bar_actual.nnz()}, {"predicted_nnz", pred.X_bar.nnz()}};
  io::write_json(dir / "patterns.json", pat);
  std::cout << "wrote " << (dir / "L.mtx").string() << ", " << (dir / "Q.mtx").string() << "\n";
  std::cout << "L: mean degree " << graph.mean_degree_L << ", max " << graph.max_degree_L
            << "; Q: mean degree " << graph.mean_degree_Q << ", max " << graph.max_degree_Q << "\n";
  std::cout << "actual ⊆ predicted: " << ((l_ok && q_ok) ? "true" : "false") << " (s = " << s << ")\n";
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string system, estimator, signals, x, output;
  bool simulate = false;
  Index k = -1;
  double noise = 0.0;
  double mu = -1.0;
};

void cmd_estimate(const Common& c, const EstimateArgs& a) {
  const fs::path sys_path = require_file(a.system, "system file");
  const fs::path est_dir = require_file(a.estimator, "estimator directory");
  std::vector<fs::path> inputs{sys_path, est_dir / "L.mtx", est_dir / "Q.mtx"};
  const InterconnectedSystem sys = io::load_system(sys_path);
  const DistributedEstimator est = io::read_estimator(est_dir);
  const LiftedModel lifted = lift(sys, est.p, c.threads);

  LiftedSignals sig;
  std::optional<Eigen::VectorXd> x_true;
  if (a.simulate) {
    const Index k = a.k >= 0 ? a.k : est.p;
    if (k < est.p) throw ValidationError("--k must be >= p");
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x0(sys.N * sys.n);
    for (Index i = 0; i < x0.size(); ++i) x0(i) = nd(rng);
    const auto inputs_u = random_inputs(sys.N * sys.m, k + 1, c.seed + 1);
    const Trajectory traj = simulate(lifted.global, x0, inputs_u, a.noise, c.seed + 2);
    sig = lift_signals(lifted, traj, k);
    x_true = traj.x[static_cast<std::size_t>(k - est.p)];
  } else {
    const fs::path s_path = require_file(a.signals, "signals file (or --simulate)");
    inputs.push_back(s_path);
    const Json j = io::read_json(s_path);
    if (!j.contains("Y") || !j.contains("U")) throw ValidationError("signals file needs Y and U");
    sig.Y = io::vector_from_json(j["Y"]);
    sig.U = io::vector_from_json(j["U"]);
    if (j.contains("x_true")) x_true = io::vector_from_json(j["x_true"]);
  }
  if (sig.Y.size() != lifted.cal_O.rows() || sig.U.size() != lifted.cal_G.cols()) {
    throw DimensionError("signal lengths (" + std::to_string(sig.Y.size()) + ", " +
                         std::to_string(sig.U.size()) + ") do not match the lifted model (" +
                         std::to_string(lifted.cal_O.rows()) + ", " +
                         std::to_string(lifted.cal_G.cols()) + ")");
  }

  SignalProvider provider(sig, sys.N);
  const Eigen::VectorXd x_hat = distributed_estimate(est, provider);

  Json params{{"simulate", a.simulate}, {"k", a.k}, {"noise", a.noise}, {"mu", a.mu}};
  Json out = run_config("estimate", c, params, inputs);
  out["x_hat"] = io::vector_to_json(x_hat);
  out["fetches"] = {{"outputs", provider.output_fetches()}, {"inputs", provider.input_fetches()}};
  std::cout << "estimated x(k-p) for " << sys.N << " subsystems with " << provider.output_fetches()
            << " output and " << provider.input_fetches() << " input fetches\n";
  if (x_true) {
    const double err = (x_hat - *x_true).norm();
    out["x_true"] = io::vector_to_json(*x_true);
    out["state_error"] = err;
    std::cout << "||x_hat - x_true||_2 = " << err << "\n";
  }
  if (a.mu >= 0.0) {
    const Gramian w = obs_gramian(lifted, a.mu, c.threads);
    const Eigen::VectorXd x_c = centralized_estimate(lifted, w, sig);
    const Eigen::VectorXd r = lifted.cal_O.multiply_transpose(sig.Y - lifted.cal_G.multiply(sig.U));
    const BlockSparseMatrix w_inv = dense_inverse(w.matrix);
    double e = 0.0;
    if (!a.x.empty()) {
      const fs::path x_path = require_file(a.x, "X file");
      e = two_norm_error(w_inv, io::read_matrix(x_path));
    }
    const double gap = (x_hat - x_c).norm();
    const double bound = e * r.norm();
    out["centralized"] = io::vector_to_json(x_c);
    out["distance_to_centralized"] = gap;
    out["e"] = e;
    out["bound"] = bound;
    out["bound_holds"] = gap <= bound * (1.0 + 1e-8) + 1e-10 * std::max(1.0, x_c.norm());
    std::cout << "||x_hat - x_centralized||_2 = " << gap << ", bound e*||O^T r||_2 = " << bound
              << (out["bound_holds"].get<bool>() ? " (holds)" : " (VIOLATED)") << "\n";
  }
  const fs::path path = out_path(c, a.output, "estimate.json");
  io::write_json(path, out);
  std::cout << "wrote " << path.string() << "\n";
}

// ----------------------------------------------------------------- control

struct ControlArgs {
  std::string system, x, target, start, y_desired, output;
  std::string mode = "least-norm";
  int p = 4;
  double mu = 0.0;
};

Eigen::VectorXd load_vector(const std::string& path, const char* key, std::vector<fs::path>& inputs) {
  const fs::path p = require_file(path, key);
  inputs.push_back(p);
  const Json j = io::read_json(p);
  return io::vector_from_json(j.is_object() ? j.at(key) : j);
}

void cmd_control(const Common& c, const ControlArgs& a) {
  const fs::path sys_path = require_file(a.system, "system file");
  std::vector<fs::path> inputs{sys_path};
  const InterconnectedSystem sys = io::load_system(sys_path);
  const LiftedModel lifted = lift(sys, a.p, c.threads);
  std::optional<ApproxInverse> x;
  if (!a.x.empty()) {
    const fs::path x_path = require_file(a.x, "X file");
    inputs.push_back(x_path);
    x = ApproxInverse{io::read_matrix(x_path), {}, SpaiMethod::newton_schulz};
  }
  const Json params{{"mode", a.mode}, {"p", a.p}, {"mu", a.mu}};
  Json out;
  const Index nx = sys.N * sys.n;
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> nd;
  auto random_vec = [&](Index size) {
    Eigen::VectorXd v(size);
    for (Index i = 0; i < size; ++i) v(i) = nd(rng);
    return v;
  };

  if (a.mode == "least-norm") {
    const Eigen::VectorXd target = a.target.empty() ? random_vec(nx) : load_vector(a.target, "x_target", inputs);
    const Eigen::VectorXd start = a.start.empty() ? Eigen::VectorXd::Zero(nx) : load_vector(a.start, "x_start", inputs);
    out = run_config("control", c, params, inputs);
    const Gramian q = ctrl_gramian(lifted, a.mu, c.threads);
    const ControlResult res = least_norm_control(lifted, q, target, start, x ? &*x : nullptr);
    out["U"] = io::vector_to_json(res.U);
    out["x_target"] = io::vector_to_json(target);
    out["residual"] = res.residual;
    out["target_norm"] = res.target_norm;
    out["inverse_residual"] = res.inverse_residual;
    out["residual_bound"] = res.residual_bound;
    std::cout << "||x_target - A^p x_start - R U||_2 = " << res.residual << " (target norm "
              << res.target_norm << ")";
    if (x) std::cout << ", bound " << res.residual_bound;
    std::cout << "\n||U||_2 = " << res.U.norm() << "\n";
  } else if (a.mode == "impulse") {
    const Eigen::VectorXd y = a.y_desired.empty() ? random_vec(lifted.cal_G.rows())
                                                  : load_vector(a.y_desired, "Y", inputs);
    out = run_config("control", c, params, inputs);
    const Eigen::VectorXd u = impulse_response_solve(lifted, y, x ? &*x : nullptr);
    const double residual = (y - lifted.cal_G.multiply(u)).norm();
    out["U"] = io::vector_to_json(u);
    out["residual"] = residual;
    std::cout << "||Y - G U||_2 = " << residual << ", ||U||_2 = " << u.norm() << "\n";
  } else {
    throw ValidationError("--mode must be least-norm or impulse");
  }
  const fs::path path = out_path(c, a.output, "control.json");
  io::write_json(path, out);
  std::cout << "wrote " << path.string() << "\n";
}

// --------------------------------------------------------------- benchmark

void write_records_csv(const fs::path& path, const std::vector<BenchmarkRecord>& recs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out.precision(17);
  out << "N,dimension,method,beta,phi,mu,kappa,final_error,iterations,seconds,peak_blocks,status\n";
  for (const auto& r : recs) {
    out << r.N << ',' << r.dimension << ',' << r.method << ',' << r.beta << ',' << r.phi << ','
        << r.mu << ',' << r.kappa << ',' << r.final_error << ',' << r.iterations << ',' << r.seconds
        << ',' << r.peak_blocks << ',' << r.status << '\n';
  }
}

void cmd_benchmark(const Common& c, ScalingConfig cfg) {
  cfg.threads = c.threads;
  const ScalingResult res = benchmark_scaling(cfg);
  Json params{{"sizes", cfg.sizes}, {"gy", cfg.gy}, {"gz", cfg.gz}, {"p", cfg.p}, {"mu", cfg.mu},
              {"beta", cfg.beta}, {"phi", cfg.phi}, {"max_iter", cfg.max_iter},
              {"dense_baseline", cfg.dense_baseline}, {"spectral_tol", cfg.spectral_tol}};
  Json out = run_config("benchmark-scaling", c, params);
  out["slope_ns"] = res.slope_ns ? Json(*res.slope_ns) : Json(nullptr);
  out["slope_dense"] = res.slope_dense ? Json(*res.slope_dense) : Json(nullptr);
  const fs::path dir(c.out_dir);
  write_records_csv(dir / "benchmark.csv", res.records);
  io::write_json(dir / "benchmark.json", out);
  for (const auto& r : res.records) {
    std::cout << "N=" << r.N << " " << r.method << " " << r.seconds << " s, " << r.status
              << (r.status == "diverged" ? "  [DIVERGED]" : "") << "\n";
  }
  auto show = [](const std::optional<double>& s) {
    return s ? std::to_string(*s) : std::string("undefined");
  };
  std::cout << "log-log slope: newton-schulz " << show(res.slope_ns);
  if (cfg.dense_baseline) std::cout << ", dense baseline " << show(res.slope_dense);
  std::cout << "\nwrote " << (dir / "benchmark.csv").string() << "\n";
}

void cmd_reproduce_heat(const Common& c, HeatReproConfig cfg) {
  cfg.threads = c.threads;
  const HeatReproResult res = reproduce_heat(cfg);
  Json params{{"gx", cfg.model.gx}, {"gy", cfg.model.gy}, {"gz", cfg.model.gz},
              {"alpha", cfg.model.alpha}, {"h", cfg.model.h}, {"dt", cfg.model.dt},
              {"p", cfg.p}, {"mu", cfg.mu}, {"betas", cfg.betas}, {"phi", cfg.phi},
              {"max_iter", cfg.max_iter}, {"dense_oracle", cfg.dense_oracle}};
  Json out = run_config("reproduce-heat", c, params);
  out["N"] = res.N;
  out["states"] = res.states;
  out["gramian_nnz_blocks"] = res.gramian_nnz_blocks;
  out["interval"] = interval_json(res.interval);
  out["kappa"] = res.kappa;
  out["kappa_reference"] = HeatReproResult::kappa_reference;
  out["kappa_ratio"] = res.kappa / HeatReproResult::kappa_reference;
  out["inverse_norm"] = res.inverse_norm;
  const fs::path dir(c.out_dir);
  Json runs = Json::array();
  std::vector<BenchmarkRecord> recs;
  for (const auto& r : res.runs) {
    Json j = io::report_summary(r.report);
    j["beta"] = r.beta;
    j["e"] = r.e;
    j["e_relative"] = r.e_relative;
    j["seconds"] = r.seconds;
    j["nnz_blocks"] = r.nnz_blocks;
    runs.push_back(j);
    io::write_report_csv(dir / ("heat_beta" + std::to_string(r.beta) + ".csv"), r.report);
    BenchmarkRecord b;
    b.N = res.N;
    b.dimension = res.states;
    b.method = "ns";
    b.beta = r.beta;
    b.phi = cfg.phi;
    b.mu = cfg.mu;
    b.kappa = res.kappa;
    b.final_error = r.e;
    b.iterations = r.report.iterations.back().k;
    b.seconds = r.seconds;
    for (const auto& it : r.report.iterations) b.peak_blocks = std::max(b.peak_blocks, it.nnz_blocks);
    b.status = to_string(r.report.status);
    recs.push_back(b);
  }
  out["runs"] = std::move(runs);
  out["e_monotone"] = res.e_monotone();
  out["total_seconds"] = res.total_seconds;
  io::write_json(dir / "heat.json", out);
  write_records_csv(dir / "heat_runs.csv", recs);

  std::cout << "heat network: N = " << res.N << ", " << res.states << " states, W_r has "
            << res.gramian_nnz_blocks << " blocks\n";
  std::cout << "kappa(W_r) = " << res.kappa << " (reference " << HeatReproResult::kappa_reference
            << ", ratio " << res.kappa / HeatReproResult::kappa_reference << ")\n";
  for (const auto& r : res.runs) {
    std::cout << "beta = " << r.beta << ": e = " << r.e << " (relative " << r.e_relative << "), "
              << to_string(r.report.status) << " at k = " << r.report.best_k << ", "
              << r.nnz_blocks << " blocks, " << r.seconds << " s\n";
  }
  std::cout << "e non-increasing in beta: " << (res.e_monotone() ? "yes" : "no") << "\n";
  std::cout << "total " << res.total_seconds << " s; wrote " << (dir / "heat.json").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse approximate inverses for distributed estimation and control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  try {
    common.threads = env_int("NETSPAI_THREADS", 1);
    common.out_dir = env_str("NETSPAI_OUTPUT_DIR", ".");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  app.add_option("--threads", common.threads, "Worker threads (env NETSPAI_THREADS)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", common.out_dir, "Output directory (env NETSPAI_OUTPUT_DIR)");
  app.add_option("--seed", common.seed, "Random seed");

  // generate
  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a benchmark system as JSON");
  generate->require_subcommand(1);
  generate->add_option("-o,--output", gen.output, "Output file (default <out>/system.json)");
  auto* heat = generate->add_subcommand("heat3d", "3D heat-equation network");
  heat->fallthrough();
  heat->add_option("--gx", gen.heat.gx);
  heat->add_option("--gy", gen.heat.gy);
  heat->add_option("--gz", gen.heat.gz);
  heat->add_option("--alpha", gen.heat.alpha);
  heat->add_option("--mesh", gen.heat.h, "Mesh step h");
  heat->add_option("--dt", gen.heat.dt);
  auto* chain = generate->add_subcommand("chain", "Banded chain");
  chain->fallthrough();
  chain->add_option("--N", gen.N);
  chain->add_option("--n", gen.n);
  chain->add_option("--coupling", gen.coupling);
  chain->add_option("--rho", gen.rho);
  auto* rnd = generate->add_subcommand("random", "Random sparse-graph system");
  rnd->fallthrough();
  rnd->add_option("--N", gen.random.N);
  rnd->add_option("--n", gen.random.n);
  rnd->add_option("--m", gen.random.m);
  rnd->add_option("--r", gen.random.r);
  rnd->add_option("--degree", gen.random.mean_degree, "Target mean out-degree");
  rnd->add_option("--rho", gen.random.rho, "Spectral radius target");
  rnd->add_flag("--positive", gen.random.positive, "Entries in [0.1, 1)");

  GramianArgs gra;
  auto* gramian = app.add_subcommand("gramian", "Observability or controllability Gramian");
  gramian->add_option("system", gra.system)->required();
  gramian->add_option("--p", gra.p);
  gramian->add_option("--mu", gra.mu);
  gramian->add_option("--kind", gra.kind)->check(CLI::IsMember({"obs", "ctrl"}));
  gramian->add_option("-o,--output", gra.output);

  InvertArgs inv;
  auto* invert = app.add_subcommand("invert", "Sparse approximate inverse of a Gramian");
  invert->add_option("gramian", inv.gramian)->required();
  invert->add_option("--config", inv.config, "SPAI config JSON");
  invert->add_option("--method", inv.method)->check(CLI::IsMember({"ns", "newton_schulz", "newton-schulz", "frob", "frobenius"}));
  invert->add_option("--beta", inv.beta, "Scalar band half-width");
  invert->add_option("--neumann", inv.neumann, "Neumann pattern depth s");
  invert->add_option("--pattern", inv.pattern_file, "Pattern Matrix Market file");
  invert->add_option("--phi", inv.phi, "Dropping threshold");
  invert->add_option("--mu", inv.mu, "Extra regularization");
  invert->add_option("--tol", inv.tol);
  invert->add_option("--max-iter", inv.max_iter);
  invert->add_flag("--dense", inv.dense, "Exact products, no sparsification");
  invert->add_option("-o,--output", inv.output, "X file (default <out>/X.mtx)");

  EstimatorArgs esa;
  auto* estimator = app.add_subcommand("estimator", "Distributed estimator from an approximate inverse");
  estimator->add_option("system", esa.system)->required();
  estimator->add_option("--X", esa.x, "Approximate inverse file");
  estimator->add_flag("--exact", esa.exact, "Use the dense inverse of the Gramian");
  estimator->add_option("--p", esa.p);
  estimator->add_option("--mu", esa.mu);
  estimator->add_option("--s", esa.s, "Neumann depth for the predicted pattern");
  estimator->add_option("-o,--output", esa.output, "Output directory");

  EstimateArgs eta;
  auto* estimate = app.add_subcommand("estimate", "Run the distributed estimator");
  estimate->add_option("system", eta.system)->required();
  estimate->add_option("--estimator", eta.estimator)->required();
  estimate->add_option("--signals", eta.signals, "JSON with Y, U (subsystem-major)");
  estimate->add_flag("--simulate", eta.simulate, "Simulate a trajectory instead");
  estimate->add_option("--k", eta.k, "Time index of the simulated window end");
  estimate->add_option("--noise", eta.noise);
  estimate->add_option("--mu", eta.mu, "Compare with the centralized estimate using this mu");
  estimate->add_option("--X", eta.x, "Approximate inverse used for the estimator (bound check)");
  estimate->add_option("-o,--output", eta.output);

  ControlArgs cta;
  auto* control = app.add_subcommand("control", "Least-norm or impulse-response input");
  control->add_option("system", cta.system)->required();
  control->add_option("--mode", cta.mode)->check(CLI::IsMember({"least-norm", "impulse"}));
  control->add_option("--p", cta.p);
  control->add_option("--mu", cta.mu);
  control->add_option("--X", cta.x, "Approximate inverse of the inner Gramian");
  control->add_option("--target", cta.target, "JSON with x_target");
  control->add_option("--start", cta.start, "JSON with x_start");
  control->add_option("--y-desired", cta.y_desired, "JSON with Y");
  control->add_option("-o,--output", cta.output);

  ScalingConfig sc;
  auto* bench = app.add_subcommand("benchmark-scaling", "Newton-Schulz time against network size");
  bench->add_option("--sizes", sc.sizes)->delimiter(',');
  bench->add_option("--gy", sc.gy);
  bench->add_option("--gz", sc.gz);
  bench->add_option("--p", sc.p);
  bench->add_option("--mu", sc.mu);
  bench->add_option("--beta", sc.beta);
  bench->add_option("--phi", sc.phi);
  bench->add_option("--max-iter", sc.max_iter);
  bool no_dense = false;
  bench->add_flag("--no-dense", no_dense, "Skip the dense-inverse baseline");

  HeatReproConfig hc;
  auto* repro = app.add_subcommand("reproduce-heat", "Heat-network pipeline end to end");
  repro->add_option("--gx", hc.model.gx);
  repro->add_option("--gy", hc.model.gy);
  repro->add_option("--gz", hc.model.gz);
  repro->add_option("--p", hc.p);
  repro->add_option("--mu", hc.mu);
  repro->add_option("--betas", hc.betas)->delimiter(',');
  repro->add_option("--phi", hc.phi);
  repro->add_option("--max-iter", hc.max_iter);
  bool no_oracle = false;
  repro->add_flag("--no-oracle", no_oracle, "Skip the dense-inverse comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) {
      if (heat->parsed()) cmd_generate_heat(common, gen);
      if (chain->parsed()) cmd_generate_chain(common, gen);
      if (rnd->parsed()) cmd_generate_random(common, gen);
    } else if (gramian->parsed()) {
      cmd_gramian(common, gra);
    } else if (invert->parsed()) {
      cmd_invert(common, inv);
    } else if (estimator->parsed()) {
      cmd_estimator(common, esa);
    } else if (estimate->parsed()) {
      cmd_estimate(common, eta);
    } else if (control->parsed()) {
      cmd_control(common, cta);
    } else if (bench->parsed()) {
      sc.dense_baseline = !no_dense;
      cmd_benchmark(common, sc);
    } else if (repro->parsed()) {
      hc.dense_oracle = !no_oracle;
      cmd_reproduce_heat(common, hc);
    }
  } catch (const NonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
