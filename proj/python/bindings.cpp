#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "netspai/errors.hpp"
#include "netspai/estimator.hpp"
#include "netspai/io.hpp"
#include "netspai/kernels.hpp"
#include "netspai/models.hpp"
#include "netspai/pattern.hpp"
#include "netspai/spai.hpp"
#include "netspai/spectral.hpp"
#include "netspai/statespace.hpp"

namespace py = pybind11;
using namespace netspai;

namespace {

// Triplet form of the stored entries, zeros inside stored blocks included.
py::tuple to_coo(const BlockSparseMatrix& a) {
  std::vector<Index> rows, cols;
  std::vector<double> vals;
  rows.reserve(a.nnz());
  cols.reserve(a.nnz());
  vals.reserve(a.nnz());
  for (Index i = 0; i < a.block_rows(); ++i) {
    for (std::size_t pos = a.row_begin(i); pos < a.row_end(i); ++pos) {
      const Index j = a.block_col(pos);
      const auto blk = a.block(pos, i);
      for (Index c = 0; c < blk.cols(); ++c) {
        for (Index r = 0; r < blk.rows(); ++r) {
          rows.push_back(a.row_offset(i) + r);
          cols.push_back(a.col_offset(j) + c);
          vals.push_back(blk(r, c));
        }
      }
    }
  }
  return py::make_tuple(py::array(py::cast(rows)), py::array(py::cast(cols)),
                        py::array(py::cast(vals)));
}

std::vector<Index> row_of(const PatternMatrix& p, Index i) {
  if (i < 0 || i >= p.dimension()) throw py::index_error("pattern row out of range");
  const auto r = p.row(i);
  return {r.begin(), r.end()};
}

Eigen::VectorXd estimate_distributed(const DistributedEstimator& est, const LiftedSignals& s) {
  return distributed_estimate(est, SignalProvider(s, est.N));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sparse approximate inverses for distributed estimation and control";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  // Sparse core.
  py::class_<BlockSparseMatrix>(m, "BlockSparseMatrix")
      .def(py::init<std::vector<Index>, std::vector<Index>>(), py::arg("row_block_sizes"),
           py::arg("col_block_sizes"))
      .def_static("from_dense", &BlockSparseMatrix::from_dense, py::arg("dense"),
                  py::arg("row_block_sizes"), py::arg("col_block_sizes"))
      .def_static("identity", &BlockSparseMatrix::identity, py::arg("block_sizes"))
      .def_property_readonly("shape", [](const BlockSparseMatrix& a) { return py::make_tuple(a.rows(), a.cols()); })
      .def_property_readonly("block_shape",
                             [](const BlockSparseMatrix& a) { return py::make_tuple(a.block_rows(), a.block_cols()); })
      .def_property_readonly("row_block_sizes", &BlockSparseMatrix::row_block_sizes)
      .def_property_readonly("col_block_sizes", &BlockSparseMatrix::col_block_sizes)
      .def_property_readonly("nnz_blocks", &BlockSparseMatrix::nnz_blocks)
      .def_property_readonly("nnz", &BlockSparseMatrix::nnz)
      .def("block", [](const BlockSparseMatrix& a, Index i, Index j) -> py::object {
             if (i < 0 || i >= a.block_rows() || j < 0 || j >= a.block_cols()) {
               throw py::index_error("block index out of range");
             }
             const auto pos = a.find(i, j);
             if (!pos) return py::none();
             return py::cast(Eigen::MatrixXd(a.block(*pos, i)));
           }, py::arg("i"), py::arg("j"), "Stored block (i, j), or None when it is a structural zero.")
      .def("to_dense", &BlockSparseMatrix::to_dense)
      .def("to_coo", &to_coo)
      .def("multiply", &BlockSparseMatrix::multiply, py::arg("x"))
      .def("multiply_transpose", &BlockSparseMatrix::multiply_transpose, py::arg("x"))
      .def("frobenius_norm", &BlockSparseMatrix::frobenius_norm)
      .def("transpose", [](const BlockSparseMatrix& a) { return transpose(a); })
      .def("__matmul__", [](const BlockSparseMatrix& a, const BlockSparseMatrix& b) { return spgemm(a, b); })
      .def("__add__", [](const BlockSparseMatrix& a, const BlockSparseMatrix& b) { return sp_add(a, b, 1.0, 1.0); })
      .def("__sub__", [](const BlockSparseMatrix& a, const BlockSparseMatrix& b) { return sp_add(a, b, 1.0, -1.0); })
      .def("__mul__", [](const BlockSparseMatrix& a, double s) { return scale(a, s); })
      .def("__rmul__", [](const BlockSparseMatrix& a, double s) { return scale(a, s); })
      .def("__repr__", [](const BlockSparseMatrix& a) {
        return "<BlockSparseMatrix " + a.shape_string() + ", " + std::to_string(a.nnz_blocks()) + " blocks>";
      });

  m.def("spgemm", &spgemm, py::arg("a"), py::arg("b"), py::arg("threads") = 1);
  m.def("spgemm_masked", &spgemm_masked, py::arg("a"), py::arg("b"), py::arg("mask"),
        py::arg("threads") = 1);
  m.def("sp_add", &sp_add, py::arg("a"), py::arg("b"), py::arg("alpha") = 1.0, py::arg("beta") = 1.0);
  m.def("mask_to_pattern", &mask_to_pattern, py::arg("a"), py::arg("pattern"));
  m.def("drop_small", &drop_small, py::arg("a"), py::arg("phi"));
  m.def("symmetrize", &symmetrize, py::arg("a"));

  py::class_<PatternMatrix>(m, "PatternMatrix")
      .def(py::init<Index>(), py::arg("dimension"))
      .def(py::init<Index, std::vector<std::pair<Index, Index>>>(), py::arg("dimension"), py::arg("entries"))
      .def_static("identity", &PatternMatrix::identity, py::arg("dimension"))
      .def_static("full", &PatternMatrix::full, py::arg("dimension"))
      .def_property_readonly("dimension", &PatternMatrix::dimension)
      .def_property_readonly("nnz", &PatternMatrix::nnz)
      .def("row", &row_of, py::arg("i"))
      .def("entries", &PatternMatrix::entries)
      .def("__contains__", [](const PatternMatrix& p, std::pair<Index, Index> e) {
        return e.first >= 0 && e.first < p.dimension() && e.second >= 0 &&
               e.second < p.dimension() && p.contains(e.first, e.second);
      })
      .def("is_subset_of", &PatternMatrix::is_subset_of, py::arg("other"))
      .def("is_symmetric", &PatternMatrix::is_symmetric)
      .def("difference", &PatternMatrix::difference, py::arg("other"))
      .def(py::self == py::self)
      .def("__repr__", [](const PatternMatrix& p) {
        return "<PatternMatrix " + std::to_string(p.dimension()) + "x" + std::to_string(p.dimension()) +
               ", " + std::to_string(p.nnz()) + " entries>";
      });

  m.def("binarize", &binarize, py::arg("a"));
  m.def("pattern_transpose", &pattern_transpose, py::arg("p"));
  m.def("pattern_union", &pattern_union, py::arg("a"), py::arg("b"));
  m.def("pattern_product", &pattern_product, py::arg("a"), py::arg("b"));
  m.def("pattern_power_sum", &pattern_power_sum, py::arg("p"), py::arg("s"));
  m.def("pattern_power", &pattern_power, py::arg("p"), py::arg("s"));

  // Spectral estimates.
  py::class_<SingularInterval>(m, "SingularInterval")
      .def(py::init<>())
      .def_readwrite("a", &SingularInterval::a)
      .def_readwrite("b", &SingularInterval::b)
      .def_readwrite("kappa", &SingularInterval::kappa)
      .def_readwrite("kappa_defined", &SingularInterval::kappa_defined)
      .def_readonly("converged_a", &SingularInterval::converged_a)
      .def_readonly("converged_b", &SingularInterval::converged_b)
      .def("widened", &SingularInterval::widened, py::arg("margin"));
  m.def("extreme_singular_values",
        [](const BlockSparseMatrix& w, double tol, int max_iter, std::uint64_t seed) {
          PowerOptions o;
          o.tol = tol;
          o.max_iter = max_iter;
          o.seed = seed;
          return extreme_singular_values(w, o);
        },
        py::arg("w"), py::arg("tol") = 1e-10, py::arg("max_iter") = 20000, py::arg("seed") = 20140917);
  m.def("spectral_radius", &spectral_radius, py::arg("a"), py::arg("seed") = 1, py::arg("tol") = 1e-12,
        py::arg("max_iter") = 5000);

  // Models and state space.
  py::class_<InterconnectedSystem>(m, "InterconnectedSystem")
      .def_readonly("N", &InterconnectedSystem::N)
      .def_readonly("n", &InterconnectedSystem::n)
      .def_readonly("m", &InterconnectedSystem::m)
      .def_readonly("r", &InterconnectedSystem::r)
      .def_readonly("diag", &InterconnectedSystem::diag)
      .def_readonly("B", &InterconnectedSystem::B)
      .def_readonly("C", &InterconnectedSystem::C)
      .def_readonly("D", &InterconnectedSystem::D)
      .def_property_readonly("edges", [](const InterconnectedSystem& s) {
        py::list out;
        for (const auto& e : s.edges) out.append(py::make_tuple(e.i, e.j, e.A));
        return out;
      })
      .def("neighbors", &InterconnectedSystem::neighbors)
      .def("validate", &InterconnectedSystem::validate)
      .def("to_json", [](const InterconnectedSystem& s) { return io::system_to_json(s).dump(); })
      .def_static("from_json", [](const std::string& text) {
        return io::system_from_json(io::Json::parse(text));
      }, py::arg("text"));

  py::class_<HeatModelSpec>(m, "HeatModelSpec")
      .def(py::init<>())
      .def_readwrite("gx", &HeatModelSpec::gx)
      .def_readwrite("gy", &HeatModelSpec::gy)
      .def_readwrite("gz", &HeatModelSpec::gz)
      .def_readwrite("alpha", &HeatModelSpec::alpha)
      .def_readwrite("h", &HeatModelSpec::h)
      .def_readwrite("dt", &HeatModelSpec::dt);
  py::class_<RandomModelSpec>(m, "RandomModelSpec")
      .def(py::init<>())
      .def_readwrite("N", &RandomModelSpec::N)
      .def_readwrite("n", &RandomModelSpec::n)
      .def_readwrite("m", &RandomModelSpec::m)
      .def_readwrite("r", &RandomModelSpec::r)
      .def_readwrite("mean_degree", &RandomModelSpec::mean_degree)
      .def_readwrite("rho", &RandomModelSpec::rho)
      .def_readwrite("positive", &RandomModelSpec::positive)
      .def_readwrite("seed", &RandomModelSpec::seed);

  m.def("generate_heat3d", &generate_heat3d, py::arg("spec") = HeatModelSpec{});
  m.def("heat_max_dt", &heat_max_dt, py::arg("spec"));
  m.def("generate_banded_chain", &generate_banded_chain, py::arg("N"), py::arg("n") = 2,
        py::arg("coupling") = 0.3, py::arg("rho") = 0.9);
  m.def("generate_random", &generate_random, py::arg("spec") = RandomModelSpec{});
  m.def("load_system", &io::load_system, py::arg("path"));
  m.def("save_system", [](const std::filesystem::path& path, const InterconnectedSystem& s) {
    io::save_system(path, s);
  }, py::arg("path"), py::arg("system"));

  py::class_<GlobalMatrices>(m, "GlobalMatrices")
      .def_readonly("A", &GlobalMatrices::A)
      .def_readonly("B", &GlobalMatrices::B)
      .def_readonly("C", &GlobalMatrices::C)
      .def_readonly("D", &GlobalMatrices::D);
  m.def("assemble_global", &assemble_global, py::arg("system"));

  py::class_<LiftedModel>(m, "LiftedModel")
      .def_readonly("p", &LiftedModel::p)
      .def_readonly("N", &LiftedModel::N)
      .def_readonly("n", &LiftedModel::n)
      .def_readonly("m", &LiftedModel::m)
      .def_readonly("r", &LiftedModel::r)
      .def_readonly("global_matrices", &LiftedModel::global)
      .def_readonly("O_p", &LiftedModel::O_p)
      .def_readonly("Gamma_p", &LiftedModel::Gamma_p)
      .def_readonly("R_p", &LiftedModel::R_p)
      .def_readonly("cal_O", &LiftedModel::cal_O)
      .def_readonly("cal_G", &LiftedModel::cal_G)
      .def_readonly("cal_R", &LiftedModel::cal_R)
      .def_readonly("A_pow_p", &LiftedModel::A_pow_p)
      .def_readonly("perm_Y", &LiftedModel::perm_Y)
      .def_readonly("perm_U", &LiftedModel::perm_U)
      .def_readonly("truncation_bound", &LiftedModel::truncation_bound);
  m.def("lift", &lift, py::arg("system"), py::arg("p"), py::arg("threads") = 1);
  m.def("truncate_stable_powers", &truncate_stable_powers, py::arg("lifted"), py::arg("s"),
        py::arg("eta"), py::arg("threads") = 1);
  m.def("permute", &permute, py::arg("perm"), py::arg("v"));
  m.def("permute_inverse", &permute_inverse, py::arg("perm"), py::arg("v"));

  py::class_<Gramian>(m, "Gramian")
      .def_readonly("matrix", &Gramian::matrix)
      .def_readonly("p", &Gramian::p)
      .def_readonly("mu", &Gramian::mu)
      .def_readonly("max_power", &Gramian::max_power)
      .def_property_readonly("kind", [](const Gramian& g) {
        return g.kind == GramianKind::observability ? "obs" : "ctrl";
      });
  m.def("obs_gramian", &obs_gramian, py::arg("lifted"), py::arg("mu") = 0.0, py::arg("threads") = 1);
  m.def("ctrl_gramian", &ctrl_gramian, py::arg("lifted"), py::arg("mu") = 0.0, py::arg("threads") = 1);
  m.def("observability_index", &observability_index, py::arg("system"), py::arg("p_max"));
  m.def("controllability_index", &controllability_index, py::arg("system"), py::arg("p_max"));

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("x", &Trajectory::x)
      .def_readonly("u", &Trajectory::u)
      .def_readonly("y", &Trajectory::y);
  m.def("simulate", &simulate, py::arg("global_matrices"), py::arg("x0"), py::arg("inputs"),
        py::arg("noise_std") = 0.0, py::arg("seed") = 1);
  m.def("random_inputs", &random_inputs, py::arg("size"), py::arg("steps"), py::arg("seed"));
  py::class_<LiftedSignals>(m, "LiftedSignals")
      .def(py::init<>())
      .def_readwrite("Y", &LiftedSignals::Y)
      .def_readwrite("U", &LiftedSignals::U);
  m.def("lift_signals", &lift_signals, py::arg("lifted"), py::arg("trajectory"), py::arg("k"));

  // Approximate inverses.
  py::class_<NewtonSchulzConfig>(m, "NewtonSchulzConfig")
      .def(py::init<>())
      .def_readwrite("pattern", &NewtonSchulzConfig::pattern)
      .def_readwrite("phi", &NewtonSchulzConfig::phi)
      .def_readwrite("dense_mode", &NewtonSchulzConfig::dense_mode)
      .def_readwrite("tol", &NewtonSchulzConfig::tol)
      .def_readwrite("max_iter", &NewtonSchulzConfig::max_iter)
      .def_readwrite("divergence_factor", &NewtonSchulzConfig::divergence_factor)
      .def_readwrite("stall_window", &NewtonSchulzConfig::stall_window)
      .def_readwrite("stall_tol", &NewtonSchulzConfig::stall_tol)
      .def_readwrite("interval_margin", &NewtonSchulzConfig::interval_margin)
      .def_readwrite("interval", &NewtonSchulzConfig::interval)
      .def_readwrite("threads", &NewtonSchulzConfig::threads)
      .def_readwrite("dense_residual_max", &NewtonSchulzConfig::dense_residual_max)
      .def("validate", &NewtonSchulzConfig::validate);

  py::class_<IterationRecord>(m, "IterationRecord")
      .def_readonly("k", &IterationRecord::k)
      .def_readonly("epsilon", &IterationRecord::epsilon)
      .def_readonly("bound", &IterationRecord::bound)
      .def_readonly("nnz_blocks", &IterationRecord::nnz_blocks)
      .def_readonly("seconds", &IterationRecord::seconds);
  py::class_<SpaiReport>(m, "SpaiReport")
      .def_readonly("iterations", &SpaiReport::iterations)
      .def_property_readonly("status", [](const SpaiReport& r) { return to_string(r.status); })
      .def_property_readonly("method", [](const SpaiReport& r) { return to_string(r.method); })
      .def_readonly("interval", &SpaiReport::interval)
      .def_readonly("kappa", &SpaiReport::kappa)
      .def_readonly("kappa_used", &SpaiReport::kappa_used)
      .def_readonly("best_k", &SpaiReport::best_k)
      .def_readonly("total_seconds", &SpaiReport::total_seconds)
      .def_readonly("mu", &SpaiReport::mu)
      .def_readonly("kappa_unregularized", &SpaiReport::kappa_unregularized)
      .def_readonly("column_residuals", &SpaiReport::column_residuals)
      .def_readonly("empty_columns", &SpaiReport::empty_columns)
      .def_readonly("frobenius_objective", &SpaiReport::frobenius_objective)
      .def_property_readonly("final_epsilon", &SpaiReport::final_epsilon);
  py::class_<ApproxInverse>(m, "ApproxInverse")
      .def_readonly("X", &ApproxInverse::X)
      .def_readonly("report", &ApproxInverse::report);

  m.def("error_bound", &error_bound, py::arg("kappa"), py::arg("k"));
  m.def("initial_guess", &initial_guess, py::arg("w"), py::arg("interval"));
  m.def("newton_schulz", py::overload_cast<const BlockSparseMatrix&, const NewtonSchulzConfig&>(&newton_schulz),
        py::arg("w"), py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("newton_schulz", py::overload_cast<const Gramian&, const NewtonSchulzConfig&>(&newton_schulz),
        py::arg("w"), py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("frobenius_spai",
        py::overload_cast<const BlockSparseMatrix&, const PatternMatrix&, int>(&frobenius_spai),
        py::arg("w"), py::arg("pattern"), py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("frobenius_spai", py::overload_cast<const Gramian&, const PatternMatrix&, int>(&frobenius_spai),
        py::arg("w"), py::arg("pattern"), py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("regularize_and_invert",
        py::overload_cast<const BlockSparseMatrix&, double, const NewtonSchulzConfig&>(&regularize_and_invert),
        py::arg("w"), py::arg("mu"), py::arg("config"));
  m.def("regularize_and_invert",
        py::overload_cast<const Gramian&, double, const NewtonSchulzConfig&>(&regularize_and_invert),
        py::arg("w"), py::arg("mu"), py::arg("config"));
  m.def("banded_pattern", py::overload_cast<const std::vector<Index>&, Index>(&banded_pattern),
        py::arg("block_sizes"), py::arg("beta"));
  m.def("predict_pattern_neumann", py::overload_cast<const BlockSparseMatrix&, int>(&predict_pattern_neumann),
        py::arg("w"), py::arg("s"));

  // Estimation and control.
  py::class_<DistributedEstimator>(m, "DistributedEstimator")
      .def_readonly("p", &DistributedEstimator::p)
      .def_readonly("N", &DistributedEstimator::N)
      .def_readonly("L", &DistributedEstimator::L)
      .def_readonly("Q", &DistributedEstimator::Q)
      .def_readonly("neighbors_L", &DistributedEstimator::neighbors_L)
      .def_readonly("neighbors_Q", &DistributedEstimator::neighbors_Q);
  py::class_<CommunicationGraph>(m, "CommunicationGraph")
      .def_readonly("L_bar", &CommunicationGraph::L_bar)
      .def_readonly("Q_bar", &CommunicationGraph::Q_bar)
      .def_readonly("degree_L", &CommunicationGraph::degree_L)
      .def_readonly("degree_Q", &CommunicationGraph::degree_Q)
      .def_readonly("mean_degree_L", &CommunicationGraph::mean_degree_L)
      .def_readonly("mean_degree_Q", &CommunicationGraph::mean_degree_Q)
      .def_readonly("max_degree_L", &CommunicationGraph::max_degree_L)
      .def_readonly("max_degree_Q", &CommunicationGraph::max_degree_Q);
  m.def("build_estimator",
        py::overload_cast<const BlockSparseMatrix&, const LiftedModel&, int>(&build_estimator),
        py::arg("X"), py::arg("lifted"), py::arg("threads") = 1);
  m.def("build_estimator", py::overload_cast<const ApproxInverse&, const LiftedModel&, int>(&build_estimator),
        py::arg("X"), py::arg("lifted"), py::arg("threads") = 1);
  m.def("communication_graph", &communication_graph, py::arg("estimator"));
  m.def("distributed_estimate", &estimate_distributed, py::arg("estimator"), py::arg("signals"));
  m.def("centralized_estimate", &centralized_estimate, py::arg("lifted"), py::arg("gramian"),
        py::arg("signals"));

  py::class_<ControlResult>(m, "ControlResult")
      .def_readonly("U", &ControlResult::U)
      .def_readonly("residual", &ControlResult::residual)
      .def_readonly("target_norm", &ControlResult::target_norm)
      .def_readonly("inverse_residual", &ControlResult::inverse_residual)
      .def_readonly("residual_bound", &ControlResult::residual_bound);
  m.def("least_norm_control",
        [](const LiftedModel& lm, const Gramian& q, const Eigen::VectorXd& target,
           const Eigen::VectorXd& start, const ApproxInverse* x) {
          return least_norm_control(lm, q, target, start, x);
        },
        py::arg("lifted"), py::arg("gramian"), py::arg("x_target"), py::arg("x_start"),
        py::arg("X") = nullptr);
  m.def("impulse_response_solve",
        [](const LiftedModel& lm, const Eigen::VectorXd& y, const ApproxInverse* x) {
          return impulse_response_solve(lm, y, x);
        },
        py::arg("lifted"), py::arg("y_desired"), py::arg("X") = nullptr);

  py::class_<EstimatorPatterns>(m, "EstimatorPatterns")
      .def_readonly("O_bar", &EstimatorPatterns::O_bar)
      .def_readonly("W_bar", &EstimatorPatterns::W_bar)
      .def_readonly("X_bar", &EstimatorPatterns::X_bar)
      .def_readonly("G_bar", &EstimatorPatterns::G_bar)
      .def_readonly("L_bar", &EstimatorPatterns::L_bar)
      .def_readonly("Q_bar", &EstimatorPatterns::Q_bar);
  m.def("predict_obs_pattern", &predict_obs_pattern, py::arg("a_bar"), py::arg("p"));
  m.def("predict_gramian_pattern", &predict_gramian_pattern, py::arg("a_bar"), py::arg("p"));
  m.def("predict_impulse_pattern", &predict_impulse_pattern, py::arg("a_bar"), py::arg("p"));
  m.def("predict_estimator_patterns", &predict_estimator_patterns, py::arg("a_bar"), py::arg("p"),
        py::arg("s"));

  // Files.
  m.def("write_matrix", [](const std::filesystem::path& path, const BlockSparseMatrix& a) {
    io::write_matrix(path, a);
  }, py::arg("path"), py::arg("matrix"));
  m.def("read_matrix", &io::read_matrix, py::arg("path"));
}
