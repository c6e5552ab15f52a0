#include "netspai/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "netspai/errors.hpp"

namespace netspai::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json arr = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  }
  return arr;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Index rows, Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows * cols) {
    throw ValidationError(what + ": expected a row-major array of " + std::to_string(rows * cols) +
                          " numbers");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) {
      const Json& v = j[static_cast<std::size_t>(i * cols + c)];
      if (!v.is_number()) throw ValidationError(what + ": non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

std::vector<Index> sizes_from_json(const Json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw ValidationError(path.string() + ": sidecar lacks '" + key + "'");
  }
  std::vector<Index> out;
  for (const auto& v : j[key]) {
    const auto s = v.get<Index>();
    if (s <= 0) throw ValidationError(path.string() + ": block sizes must be positive");
    out.push_back(s);
  }
  return out;
}

struct MmHeader {
  std::string field, symmetry;
  Index rows = 0, cols = 0, entries = 0;
};

// Reads the banner and size line; leaves the stream at the first entry.
MmHeader read_mm_header(std::istream& in, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  std::istringstream banner(line);
  std::string tag, object, format;
  MmHeader h;
  banner >> tag >> object >> format >> h.field >> h.symmetry;
  std::transform(format.begin(), format.end(), format.begin(), ::tolower);
  std::transform(h.field.begin(), h.field.end(), h.field.begin(), ::tolower);
  std::transform(h.symmetry.begin(), h.symmetry.end(), h.symmetry.begin(), ::tolower);
  if (tag != "%%MatrixMarket" || format != "coordinate") {
    throw ValidationError(path.string() + ": not a coordinate Matrix Market file");
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream size(line);
    if (!(size >> h.rows >> h.cols >> h.entries)) {
      throw ValidationError(path.string() + ": malformed size line");
    }
    return h;
  }
  throw ValidationError(path.string() + ": missing size line");
}

}  // namespace

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

Json read_sidecar(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  if (!fs::exists(side)) return Json::object();
  return read_json(side);
}

void write_matrix(const fs::path& path, const BlockSparseMatrix& m, const Json& header) {
  std::vector<std::tuple<Index, Index, double>> entries;
  for (Index i = 0; i < m.block_rows(); ++i) {
    for (std::size_t pos = m.row_begin(i); pos < m.row_end(i); ++pos) {
      const Index j = m.block_col(pos);
      const auto blk = m.block(pos, i);
      for (Index r = 0; r < blk.rows(); ++r) {
        for (Index c = 0; c < blk.cols(); ++c) {
          if (blk(r, c) != 0.0) entries.emplace_back(m.row_offset(i) + r, m.col_offset(j) + c, blk(r, c));
        }
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::pair(std::get<0>(a), std::get<1>(a)) < std::pair(std::get<0>(b), std::get<1>(b));
  });
  {
    auto out = open_out(path);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << ' ' << m.cols() << ' ' << entries.size() << '\n';
    for (const auto& [r, c, v] : entries) out << r + 1 << ' ' << c + 1 << ' ' << fmt(v) << '\n';
  }
  Json side = header.is_object() ? header : Json::object();
  side["row_block_sizes"] = m.row_block_sizes();
  side["col_block_sizes"] = m.col_block_sizes();
  write_json(sidecar_path(path), side);
}

BlockSparseMatrix read_matrix(const fs::path& path) {
  auto in = open_in(path);
  const MmHeader h = read_mm_header(in, path);
  if (h.field == "pattern" || h.field == "complex") {
    throw ValidationError(path.string() + ": expected a real or integer matrix");
  }
  const bool symmetric = h.symmetry == "symmetric";
  if (!symmetric && h.symmetry != "general") {
    throw ValidationError(path.string() + ": unsupported symmetry '" + h.symmetry + "'");
  }

  const Json side = read_sidecar(path);
  std::vector<Index> rs, cs;
  if (side.contains("row_block_sizes")) {
    rs = sizes_from_json(side, "row_block_sizes", path);
    cs = sizes_from_json(side, "col_block_sizes", path);
  } else {
    rs.assign(static_cast<std::size_t>(h.rows), 1);
    cs.assign(static_cast<std::size_t>(h.cols), 1);
  }
  BlockSparseMatrix shape(rs, cs);
  if (shape.rows() != h.rows || shape.cols() != h.cols) {
    throw DimensionError(path.string() + ": block sizes describe " + shape.shape_string() +
                         " but the file is " + std::to_string(h.rows) + "x" + std::to_string(h.cols));
  }
  std::vector<Index> row_off(rs.size() + 1, 0), col_off(cs.size() + 1, 0);
  for (std::size_t i = 0; i < rs.size(); ++i) row_off[i + 1] = row_off[i] + rs[i];
  for (std::size_t j = 0; j < cs.size(); ++j) col_off[j + 1] = col_off[j] + cs[j];
  auto locate = [](const std::vector<Index>& off, Index x) {
    return static_cast<Index>(std::upper_bound(off.begin(), off.end(), x) - off.begin()) - 1;
  };

  std::map<std::pair<Index, Index>, Eigen::MatrixXd> blocks;
  auto add = [&](Index r, Index c, double v) {
    const Index bi = locate(row_off, r), bj = locate(col_off, c);
    auto [it, fresh] = blocks.try_emplace({bi, bj});
    if (fresh) it->second = Eigen::MatrixXd::Zero(rs[static_cast<std::size_t>(bi)], cs[static_cast<std::size_t>(bj)]);
    it->second(r - row_off[static_cast<std::size_t>(bi)], c - col_off[static_cast<std::size_t>(bj)]) += v;
  };
  for (Index e = 0; e < h.entries; ++e) {
    Index r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v)) throw ValidationError(path.string() + ": truncated entry list");
    if (r < 1 || r > h.rows || c < 1 || c > h.cols) {
      throw ValidationError(path.string() + ": entry index out of range");
    }
    add(r - 1, c - 1, v);
    if (symmetric && r != c) add(c - 1, r - 1, v);
  }
  std::vector<BlockEntry> list;
  list.reserve(blocks.size());
  for (auto& [key, val] : blocks) list.push_back({key.first, key.second, std::move(val)});
  return BlockSparseMatrix::from_blocks(std::move(rs), std::move(cs), std::move(list));
}

void write_pattern(const fs::path& path, const PatternMatrix& p, const Json& header) {
  {
    auto out = open_out(path);
    out << "%%MatrixMarket matrix coordinate pattern general\n";
    out << p.dimension() << ' ' << p.dimension() << ' ' << p.nnz() << '\n';
    for (Index i = 0; i < p.dimension(); ++i) {
      for (Index j : p.row(i)) out << i + 1 << ' ' << j + 1 << '\n';
    }
  }
  if (!header.empty()) write_json(sidecar_path(path), header);
}

PatternMatrix read_pattern(const fs::path& path) {
  auto in = open_in(path);
  const MmHeader h = read_mm_header(in, path);
  if (h.rows != h.cols) throw DimensionError(path.string() + ": pattern must be square");
  const bool has_value = h.field != "pattern";
  std::vector<std::pair<Index, Index>> entries;
  std::string line;
  for (Index e = 0; e < h.entries; ++e) {
    Index r = 0, c = 0;
    if (!(in >> r >> c)) throw ValidationError(path.string() + ": truncated entry list");
    if (has_value) {
      double v = 0.0;
      in >> v;
      if (v == 0.0) continue;
    }
    if (r < 1 || r > h.rows || c < 1 || c > h.cols) {
      throw ValidationError(path.string() + ": entry index out of range");
    }
    entries.emplace_back(r - 1, c - 1);
    if (h.symmetry == "symmetric" && r != c) entries.emplace_back(c - 1, r - 1);
  }
  return PatternMatrix(h.rows, std::move(entries));
}

Json system_to_json(const InterconnectedSystem& sys) {
  Json j;
  j["N"] = sys.N;
  j["n"] = sys.n;
  j["m"] = sys.m;
  j["r"] = sys.r;
  Json edges = Json::array();
  for (const auto& e : sys.edges) {
    Json ej;
    ej["i"] = e.i;
    ej["j"] = e.j;
    ej["A_ij"] = matrix_to_json(e.A);
    edges.push_back(std::move(ej));
  }
  j["edges"] = std::move(edges);
  auto list = [](const std::vector<Eigen::MatrixXd>& v) {
    Json arr = Json::array();
    for (const auto& m : v) arr.push_back(matrix_to_json(m));
    return arr;
  };
  j["diag"] = list(sys.diag);
  j["B"] = list(sys.B);
  j["C"] = list(sys.C);
  j["D"] = list(sys.D);
  return j;
}

InterconnectedSystem system_from_json(const Json& j) {
  InterconnectedSystem sys;
  for (const char* key : {"N", "n", "m", "r", "edges", "diag", "B", "C", "D"}) {
    if (!j.contains(key)) throw ValidationError(std::string("system JSON lacks '") + key + "'");
  }
  try {
    sys.N = j["N"].get<Index>();
    sys.n = j["n"].get<Index>();
    sys.m = j["m"].get<Index>();
    sys.r = j["r"].get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("system JSON: ") + e.what());
  }
  if (sys.N < 1 || sys.n < 1 || sys.m < 0 || sys.r < 0) {
    throw ValidationError("system JSON: need N, n >= 1 and m, r >= 0");
  }
  auto list = [&](const char* key, Index rows, Index cols) {
    const Json& arr = j[key];
    if (!arr.is_array() || static_cast<Index>(arr.size()) != sys.N) {
      throw ValidationError(std::string("system JSON: '") + key + "' must hold N blocks");
    }
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(matrix_from_json(arr[i], rows, cols, std::string(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
  };
  sys.diag = list("diag", sys.n, sys.n);
  sys.B = list("B", sys.n, sys.m);
  sys.C = list("C", sys.r, sys.n);
  sys.D = list("D", sys.r, sys.m);
  if (!j["edges"].is_array()) throw ValidationError("system JSON: 'edges' must be an array");
  for (const auto& e : j["edges"]) {
    if (!e.contains("i") || !e.contains("j") || !e.contains("A_ij")) {
      throw ValidationError("system JSON: every edge needs i, j and A_ij");
    }
    InterconnectedSystem::Edge edge;
    edge.i = e["i"].get<Index>();
    edge.j = e["j"].get<Index>();
    edge.A = matrix_from_json(e["A_ij"], sys.n, sys.n,
                              "edge (" + std::to_string(edge.i) + ", " + std::to_string(edge.j) + ")");
    sys.edges.push_back(std::move(edge));
  }
  sys.validate();
  return sys;
}

void save_system(const fs::path& path, const InterconnectedSystem& sys, const Json& header) {
  Json j = system_to_json(sys);
  if (!header.empty()) j["header"] = header;
  write_json(path, j);
}

InterconnectedSystem load_system(const fs::path& path) { return system_from_json(read_json(path)); }

SpaiConfig spai_config_from_json(const Json& j) {
  SpaiConfig c;
  try {
    if (j.contains("method")) {
      const auto m = j["method"].get<std::string>();
      if (m == "ns" || m == "newton_schulz" || m == "newton-schulz") {
        c.method = SpaiMethod::newton_schulz;
      } else if (m == "frob" || m == "frobenius") {
        c.method = SpaiMethod::frobenius;
      } else {
        throw ValidationError("SPAI config: unknown method '" + m + "'");
      }
    }
    if (j.contains("pattern") && !j["pattern"].is_null()) {
      const Json& p = j["pattern"];
      const auto kind = p.at("kind").get<std::string>();
      if (kind == "band") {
        c.pattern = PatternKind::band;
        c.beta = p.at("beta").get<Index>();
      } else if (kind == "neumann") {
        c.pattern = PatternKind::neumann;
        c.s = p.at("s").get<int>();
      } else if (kind == "file") {
        c.pattern = PatternKind::file;
        c.path = p.at("path").get<std::string>();
      } else {
        throw ValidationError("SPAI config: unknown pattern kind '" + kind + "'");
      }
    }
    if (j.contains("phi") && !j["phi"].is_null()) c.phi = j["phi"].get<double>();
    if (j.contains("mu")) c.mu = j["mu"].get<double>();
    if (j.contains("tol")) c.tol = j["tol"].get<double>();
    if (j.contains("max_iter")) c.max_iter = j["max_iter"].get<int>();
    if (j.contains("dense")) c.dense = j["dense"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("SPAI config: ") + e.what());
  }
  if (c.beta < 0 || c.s < 0 || c.mu < 0.0 || c.max_iter < 0 || !(c.tol > 0.0)) {
    throw ValidationError("SPAI config: beta, s, mu, max_iter must be nonnegative and tol positive");
  }
  return c;
}

Json to_json(const SpaiConfig& c) {
  Json j;
  j["method"] = to_string(c.method);
  switch (c.pattern) {
    case PatternKind::band: j["pattern"] = {{"kind", "band"}, {"beta", c.beta}}; break;
    case PatternKind::neumann: j["pattern"] = {{"kind", "neumann"}, {"s", c.s}}; break;
    case PatternKind::file: j["pattern"] = {{"kind", "file"}, {"path", c.path}}; break;
    case PatternKind::none: j["pattern"] = nullptr; break;
  }
  j["phi"] = c.phi ? Json(*c.phi) : Json(nullptr);
  j["mu"] = c.mu;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["dense"] = c.dense;
  return j;
}

void write_report_csv(const fs::path& path, const SpaiReport& rep) {
  auto out = open_out(path);
  out << "k,epsilon,bound,nnz_blocks,seconds\n";
  for (const auto& it : rep.iterations) {
    out << it.k << ',' << fmt(it.epsilon) << ',' << fmt(it.bound) << ',' << it.nnz_blocks << ','
        << fmt(it.seconds) << '\n';
  }
}

void write_column_residuals_csv(const fs::path& path, const SpaiReport& rep) {
  auto out = open_out(path);
  out << "j,residual,empty\n";
  for (std::size_t j = 0; j < rep.column_residuals.size(); ++j) {
    const bool empty = std::find(rep.empty_columns.begin(), rep.empty_columns.end(),
                                 static_cast<Index>(j)) != rep.empty_columns.end();
    out << j << ',' << fmt(rep.column_residuals[j]) << ',' << (empty ? 1 : 0) << '\n';
  }
}

Json report_summary(const SpaiReport& rep) {
  Json j;
  j["method"] = to_string(rep.method);
  j["status"] = to_string(rep.status);
  j["iterations"] = rep.iterations.empty() ? 0 : rep.iterations.back().k;
  j["best_k"] = rep.best_k;
  j["final_epsilon"] = rep.final_epsilon();
  j["a"] = rep.interval.a;
  j["b"] = rep.interval.b;
  j["kappa"] = rep.kappa;
  j["kappa_used"] = rep.kappa_used;
  j["a_used"] = rep.a_used;
  j["b_used"] = rep.b_used;
  j["mu"] = rep.mu;
  j["kappa_unregularized"] = rep.kappa_unregularized;
  j["nnz_blocks"] = rep.iterations.empty() ? 0 : rep.iterations[static_cast<std::size_t>(rep.best_k)].nnz_blocks;
  if (rep.method == SpaiMethod::frobenius) {
    j["frobenius_objective"] = rep.frobenius_objective;
    j["empty_columns"] = rep.empty_columns;
  }
  j["total_seconds"] = rep.total_seconds;
  return j;
}

void write_estimator(const fs::path& dir, const DistributedEstimator& est, const Json& header) {
  fs::create_directories(dir);
  Json h = header.is_object() ? header : Json::object();
  h["n"] = est.n;
  h["m"] = est.m;
  h["r"] = est.r;
  h["p"] = est.p;
  h["N"] = est.N;
  write_matrix(dir / "L.mtx", est.L, h);
  write_matrix(dir / "Q.mtx", est.Q, h);
  write_json(dir / "estimator.json", h);
}

DistributedEstimator read_estimator(const fs::path& dir) {
  const Json h = read_json(dir / "estimator.json");
  DistributedEstimator est;
  try {
    est.n = h.at("n").get<Index>();
    est.m = h.at("m").get<Index>();
    est.r = h.at("r").get<Index>();
    est.p = h.at("p").get<int>();
    est.N = h.at("N").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("estimator header: ") + e.what());
  }
  est.L = read_matrix(dir / "L.mtx");
  est.Q = read_matrix(dir / "Q.mtx");
  if (est.L.block_rows() != est.N || est.Q.block_rows() != est.N || est.L.rows() != est.N * est.n) {
    throw DimensionError("estimator files do not match their header");
  }
  auto supports = [](const BlockSparseMatrix& m) {
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(m.block_rows()));
    for (Index i = 0; i < m.block_rows(); ++i) {
      for (std::size_t pos = m.row_begin(i); pos < m.row_end(i); ++pos) {
        out[static_cast<std::size_t>(i)].push_back(m.block_col(pos));
      }
    }
    return out;
  };
  est.neighbors_L = supports(est.L);
  est.neighbors_Q = supports(est.Q);
  return est;
}

void write_communication_csv(const fs::path& path, const CommunicationGraph& g) {
  auto out = open_out(path);
  out << "i,j,role\n";
  for (Index i = 0; i < g.L_bar.dimension(); ++i) {
    for (Index j : g.L_bar.row(i)) out << i << ',' << j << ",L\n";
  }
  for (Index i = 0; i < g.Q_bar.dimension(); ++i) {
    for (Index j : g.Q_bar.row(i)) out << i << ',' << j << ",Q\n";
  }
}

Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("expected a numeric array");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("expected a numeric array");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(1) << '\n';
}

Json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string content_hash(const std::vector<fs::path>& paths) {
  std::string all;
  for (const auto& p : paths) {
    for (const fs::path& f : {p, sidecar_path(p)}) {
      if (f != p && !fs::exists(f)) continue;
      const std::string data = read_file(f);
      all += std::to_string(data.size()) + ":" + data;
    }
  }
  return sha256_hex(all);
}

}  // namespace netspai::io
