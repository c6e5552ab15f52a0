#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "netspai/block_sparse.hpp"
#include "netspai/estimator.hpp"
#include "netspai/pattern.hpp"
#include "netspai/spai.hpp"
#include "netspai/statespace.hpp"

namespace netspai::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Scalar-level Matrix Market (coordinate real general) plus a sidecar
/// `<path>.json` holding the block-size vectors and an optional header.
/// Explicit zeros inside stored blocks are not written.
void write_matrix(const fs::path& path, const BlockSparseMatrix& m, const Json& header = Json::object());
/// Reads a matrix written by write_matrix. Without a sidecar every scalar
/// becomes its own 1 x 1 block. `symmetric` files are expanded.
BlockSparseMatrix read_matrix(const fs::path& path);
/// Header stored next to a matrix or pattern; empty object when absent.
Json read_sidecar(const fs::path& path);
fs::path sidecar_path(const fs::path& path);

/// Pattern-type Matrix Market, 1-based block indices.
void write_pattern(const fs::path& path, const PatternMatrix& p, const Json& header = Json::object());
PatternMatrix read_pattern(const fs::path& path);

/// {N, n, m, r, edges: [{i, j, A_ij}], diag, B, C, D}; indices are 0-based,
/// blocks are row-major float arrays.
Json system_to_json(const InterconnectedSystem& sys);
InterconnectedSystem system_from_json(const Json& j);
void save_system(const fs::path& path, const InterconnectedSystem& sys, const Json& header = Json::object());
InterconnectedSystem load_system(const fs::path& path);

enum class PatternKind { band, neumann, file, none };

struct SpaiConfig {
  SpaiMethod method = SpaiMethod::newton_schulz;
  PatternKind pattern = PatternKind::none;
  Index beta = 0;
  int s = 1;
  std::string path;
  std::optional<double> phi;
  double mu = 0.0;
  double tol = 1e-10;
  int max_iter = 60;
  bool dense = false;
};
SpaiConfig spai_config_from_json(const Json& j);
Json to_json(const SpaiConfig& c);

/// k, epsilon, bound, nnz_blocks, seconds.
void write_report_csv(const fs::path& path, const SpaiReport& rep);
Json report_summary(const SpaiReport& rep);
/// j, residual, empty (Frobenius method only).
void write_column_residuals_csv(const fs::path& path, const SpaiReport& rep);

/// `<prefix>L.mtx`, `<prefix>Q.mtx` and `<prefix>estimator.json` with
/// (n, m, r, p, N) plus `header`.
void write_estimator(const fs::path& dir, const DistributedEstimator& est, const Json& header = Json::object());
DistributedEstimator read_estimator(const fs::path& dir);
/// Edge list i, j, role with role in {L, Q}; an edge (i, j) means subsystem
/// i reads the signals of subsystem j.
void write_communication_csv(const fs::path& path, const CommunicationGraph& g);

Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

void write_json(const fs::path& path, const Json& j);
Json read_json(const fs::path& path);
std::string read_file(const fs::path& path);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);
/// SHA-256 over the contents of the given files (and their sidecars), in
/// order, each prefixed by its size.
std::string content_hash(const std::vector<fs::path>& paths);

}  // namespace netspai::io
