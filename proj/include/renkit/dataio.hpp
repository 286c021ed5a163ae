#pragma once

// File formats: CSV time series, JSON model files with
// certificate re-verification on load, JSON feedforward weight files,
// and the synthetic benchmark generator. All numeric output is decimal
// text that round-trips doubles exactly, and key order is fixed, so
// saved artifacts are diffable and bit-reproducible.

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "renkit/common.hpp"
#include "renkit/eqnet.hpp"
#include "renkit/lti.hpp"
#include "renkit/ren.hpp"
#include "renkit/rng.hpp"
#include "renkit/rnn.hpp"
#include "renkit/simfit.hpp"

namespace renkit {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Matrix matrix_from_json(const Json& j, Index rows, Index cols, const std::string& name) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw IoError("model file: matrix '" + name + "' must have " + std::to_string(rows) +
                  " rows");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j[i];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw IoError("model file: matrix '" + name + "' row " + std::to_string(i) +
                    " must have " + std::to_string(cols) + " entries");
    for (Index k = 0; k < cols; ++k) {
      if (!row[k].is_number()) throw IoError("model file: non-numeric entry in '" + name + "'");
      m(i, k) = row[k].get<double>();
    }
  }
  if (!all_finite(m)) throw IoError("model file: non-finite entry in '" + name + "'");
  return m;
}

inline Vector vector_from_json(const Json& j, Index size, const std::string& name) {
  if (!j.is_array() || static_cast<Index>(j.size()) != size)
    throw IoError("model file: vector '" + name + "' must have " + std::to_string(size) +
                  " entries");
  Vector v(size);
  for (Index i = 0; i < size; ++i) {
    if (!j[i].is_number()) throw IoError("model file: non-numeric entry in '" + name + "'");
    v(i) = j[i].get<double>();
  }
  if (!v.allFinite()) throw IoError("model file: non-finite entry in '" + name + "'");
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Time series CSV: header "t,u_1,...,u_m,y_1,...,y_p", t = 0, 1, ...

inline void save_timeseries(const TimeSeriesDataset& data, const std::string& path) {
  data.validate();
  const Index m = data.u.cols(), p = data.y.cols();
  std::ostringstream out;
  out << "t";
  for (Index j = 0; j < m; ++j) out << ",u_" << (j + 1);
  for (Index j = 0; j < p; ++j) out << ",y_" << (j + 1);
  out << "\n";
  for (Index t = 0; t < data.T(); ++t) {
    out << t;
    for (Index j = 0; j < m; ++j) out << "," << detail::format_double(data.u(t, j));
    for (Index j = 0; j < p; ++j) out << "," << detail::format_double(data.y(t, j));
    out << "\n";
  }
  detail::write_file(path, out.str());
}

inline TimeSeriesDataset load_timeseries(const std::string& path) {
  const std::string content = detail::read_file(path);
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };

  const auto header = split(line);
  if (header.empty() || header[0] != "t") throw IoError(path + ": header must start with 't'");
  Index m = 0, p = 0;
  std::size_t idx = 1;
  while (idx < header.size() && header[idx] == "u_" + std::to_string(m + 1)) {
    ++m;
    ++idx;
  }
  while (idx < header.size() && header[idx] == "y_" + std::to_string(p + 1)) {
    ++p;
    ++idx;
  }
  if (idx != header.size() || m < 1 || p < 1)
    throw IoError(path + ": malformed header, expected t,u_1..u_m,y_1..y_p");

  std::vector<std::vector<double>> rows;
  Index row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<Index>(cells.size()) != 1 + m + p)
      throw IoError(path + ": row " + std::to_string(row_index) + " has " +
                    std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(1 + m + p));
    std::vector<double> values;
    values.reserve(m + p);
    try {
      std::size_t pos = 0;
      const long t_val = std::stol(cells[0], &pos);
      if (pos != cells[0].size() || t_val != row_index)
        throw IoError(path + ": row " + std::to_string(row_index) +
                      " must carry t = " + std::to_string(row_index));
      for (std::size_t j = 1; j < cells.size(); ++j) {
        const double v = std::stod(cells[j], &pos);
        if (pos != cells[j].size()) throw std::invalid_argument(cells[j]);
        values.push_back(v);
      }
    } catch (const IoError&) {
      throw;
    } catch (const std::exception&) {
      throw IoError(path + ": row " + std::to_string(row_index) + " has a malformed cell");
    }
    for (double v : values)
      if (!std::isfinite(v))
        throw IoError(path + ": row " + std::to_string(row_index) + " has a non-finite value");
    rows.push_back(std::move(values));
    ++row_index;
  }
  if (rows.empty()) throw IoError(path + ": no data rows");

  TimeSeriesDataset data;
  data.u.resize(static_cast<Index>(rows.size()), m);
  data.y.resize(static_cast<Index>(rows.size()), p);
  for (Index t = 0; t < static_cast<Index>(rows.size()); ++t) {
    for (Index j = 0; j < m; ++j) data.u(t, j) = rows[t][j];
    for (Index j = 0; j < p; ++j) data.y(t, j) = rows[t][m + j];
  }
  return data;
}

// ---------------------------------------------------------------------------
// Model files.

enum class FileFamily { explicit_lti, implicit_lti, robust_rnn, eqnet, ren };

inline std::string family_name(FileFamily f) {
  switch (f) {
    case FileFamily::explicit_lti: return "explicit_lti";
    case FileFamily::implicit_lti: return "implicit_lti";
    case FileFamily::robust_rnn: return "robust_rnn";
    case FileFamily::eqnet: return "eqnet";
    case FileFamily::ren: return "ren";
  }
  throw InvariantError("family_name: unknown family");
}

inline FileFamily family_from_name(const std::string& name) {
  if (name == "explicit_lti") return FileFamily::explicit_lti;
  if (name == "implicit_lti") return FileFamily::implicit_lti;
  if (name == "robust_rnn") return FileFamily::robust_rnn;
  if (name == "eqnet") return FileFamily::eqnet;
  if (name == "ren") return FileFamily::ren;
  throw IoError("model file: unknown family '" + name + "'");
}

/// In-memory view of a model file. `margin` present means the family's
/// stability/well-posedness certificate is claimed (and re-verified on
/// load); `gamma` present additionally claims the Lipschitz bound.
struct ModelFileData {
  std::variant<ExplicitLti, ImplicitLti, RobustRnn, EquilibriumNetwork, Ren> model;
  std::optional<Matrix> explicit_P;  // Lyapunov certificate for explicit_lti
  std::optional<double> margin;
  std::optional<double> gamma;
  std::map<std::string, std::string> metadata;

  FileFamily family() const {
    return static_cast<FileFamily>(model.index());
  }
};

namespace detail {

/// Stability / well-posedness check for the stored family at `margin`.
inline SymCheckReport family_stability_check(const ModelFileData& data, double margin) {
  switch (data.family()) {
    case FileFamily::explicit_lti: {
      const auto& m = std::get<ExplicitLti>(data.model);
      if (!data.explicit_P)
        throw IoError("model file: explicit_lti margin certificate requires P");
      return check_lyapunov_explicit(m.A, *data.explicit_P, margin);
    }
    case FileFamily::implicit_lti:
      return check_stable_lmi(std::get<ImplicitLti>(data.model), margin);
    case FileFamily::robust_rnn:
      return check_contraction_rnn(std::get<RobustRnn>(data.model), margin);
    case FileFamily::eqnet:
      return check_wellposed(std::get<EquilibriumNetwork>(data.model), margin);
    case FileFamily::ren:
      return check_contracting_ren(std::get<Ren>(data.model), margin);
  }
  throw InvariantError("family_stability_check: unknown family");
}

inline SymCheckReport family_lipschitz_check(const ModelFileData& data, double gamma,
                                             double margin) {
  switch (data.family()) {
    case FileFamily::explicit_lti:
      throw IoError("model file: gamma certificate unsupported for explicit_lti");
    case FileFamily::implicit_lti:
      return check_lipschitz_ren(ren_from_lti(std::get<ImplicitLti>(data.model)), gamma, margin);
    case FileFamily::robust_rnn:
      return check_lipschitz_rnn(std::get<RobustRnn>(data.model), gamma, margin);
    case FileFamily::eqnet:
      return check_lipschitz_eqnet(std::get<EquilibriumNetwork>(data.model), gamma, margin);
    case FileFamily::ren:
      return check_lipschitz_ren(std::get<Ren>(data.model), gamma, margin);
  }
  throw InvariantError("family_lipschitz_check: unknown family");
}

inline void reverify_certificates(const ModelFileData& data, const std::string& path) {
  if (data.margin) {
    const auto report = family_stability_check(data, *data.margin);
    if (!report.feasible)
      throw IoError(path + ": certificate re-verification failed (min eigenvalue " +
                    format_double(report.min_eigenvalue) + " at margin " +
                    format_double(*data.margin) + ")");
  }
  if (data.gamma) {
    const auto report = family_lipschitz_check(data, *data.gamma, data.margin.value_or(0.0));
    if (!report.feasible)
      throw IoError(path + ": Lipschitz certificate re-verification failed (min eigenvalue " +
                    format_double(report.min_eigenvalue) + " at gamma " +
                    format_double(*data.gamma) + ")");
  }
}

}  // namespace detail

inline void save_model(const ModelFileData& data, const std::string& path) {
  Json j;
  j["schema_version"] = "1";
  j["family"] = family_name(data.family());

  Json dims, matrices, certs;
  Activation act = Activation::identity;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExplicitLti>) {
          dims = {{"n", m.n()}, {"m", m.m()}, {"p", m.p()}, {"q", 0}};
          matrices["A"] = detail::matrix_to_json(m.A);
          matrices["B"] = detail::matrix_to_json(m.B);
          matrices["C"] = detail::matrix_to_json(m.C);
          matrices["D"] = detail::matrix_to_json(m.D);
          if (data.explicit_P) certs["P"] = detail::matrix_to_json(*data.explicit_P);
        } else if constexpr (std::is_same_v<T, ImplicitLti>) {
          dims = {{"n", m.n()}, {"m", m.m()}, {"p", m.p()}, {"q", 0}};
          matrices["E"] = detail::matrix_to_json(m.E);
          matrices["F"] = detail::matrix_to_json(m.F);
          matrices["K"] = detail::matrix_to_json(m.K);
          matrices["C"] = detail::matrix_to_json(m.C);
          matrices["D"] = detail::matrix_to_json(m.D);
          certs["P"] = detail::matrix_to_json(m.P);
        } else if constexpr (std::is_same_v<T, RobustRnn>) {
          dims = {{"n", m.n()}, {"m", m.m()}, {"p", m.p()}, {"q", m.q()}};
          act = m.act;
          matrices["E"] = detail::matrix_to_json(m.E);
          matrices["F"] = detail::matrix_to_json(m.F);
          matrices["B1"] = detail::matrix_to_json(m.B1);
          matrices["B2"] = detail::matrix_to_json(m.B2);
          matrices["Ctilde"] = detail::matrix_to_json(m.Ctilde);
          matrices["C2"] = detail::matrix_to_json(m.C2);
          matrices["D12"] = detail::matrix_to_json(m.D12);
          matrices["D21"] = detail::matrix_to_json(m.D21);
          matrices["D22"] = detail::matrix_to_json(m.D22);
          certs["P"] = detail::matrix_to_json(m.P);
          certs["Lambda"] = detail::vector_to_json(m.Lambda);
        } else if constexpr (std::is_same_v<T, EquilibriumNetwork>) {
          dims = {{"n", 0}, {"m", m.m()}, {"p", m.p()}, {"q", m.q()}};
          act = m.act;
          matrices["D11"] = detail::matrix_to_json(m.D11);
          matrices["D12"] = detail::matrix_to_json(m.D12);
          matrices["D21"] = detail::matrix_to_json(m.D21);
          matrices["b_w"] = detail::vector_to_json(m.b_w);
          matrices["b_y"] = detail::vector_to_json(m.b_y);
          certs["Lambda"] = detail::vector_to_json(m.Lambda);
        } else if constexpr (std::is_same_v<T, Ren>) {
          dims = {{"n", m.n()}, {"m", m.m()}, {"p", m.p()}, {"q", m.q()}};
          act = m.act;
          matrices["E"] = detail::matrix_to_json(m.E);
          matrices["F"] = detail::matrix_to_json(m.F);
          matrices["B1"] = detail::matrix_to_json(m.B1);
          matrices["B2"] = detail::matrix_to_json(m.B2);
          matrices["Ctilde"] = detail::matrix_to_json(m.Ctilde);
          matrices["D11tilde"] = detail::matrix_to_json(m.D11tilde);
          matrices["D12"] = detail::matrix_to_json(m.D12);
          matrices["C2"] = detail::matrix_to_json(m.C2);
          matrices["D21"] = detail::matrix_to_json(m.D21);
          matrices["D22"] = detail::matrix_to_json(m.D22);
          matrices["b_x"] = detail::vector_to_json(m.b_x);
          matrices["b_v"] = detail::vector_to_json(m.b_v);
          matrices["b_y"] = detail::vector_to_json(m.b_y);
          certs["P"] = detail::matrix_to_json(m.P);
          certs["Lambda"] = detail::vector_to_json(m.Lambda);
        }
      },
      data.model);

  j["dims"] = std::move(dims);
  j["activation"] = activation_name(act);
  j["matrices"] = std::move(matrices);
  if (data.margin) certs["margin"] = *data.margin;
  if (data.gamma) certs["gamma"] = *data.gamma;
  if (!certs.is_null()) j["certificates"] = std::move(certs);
  if (!data.metadata.empty()) {
    Json meta;
    for (const auto& [k, v] : data.metadata) meta[k] = v;
    j["metadata"] = std::move(meta);
  }
  detail::write_file(path, j.dump(2) + "\n");
}

inline ModelFileData load_model(const std::string& path) {
  Json j;
  try {
    j = Json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": JSON parse error: " + e.what());
  }
  auto need = [&](const char* key) -> const Json& {
    if (!j.contains(key)) throw IoError(path + ": missing required key '" + std::string(key) + "'");
    return j.at(key);
  };
  if (need("schema_version").get<std::string>() != "1")
    throw IoError(path + ": unsupported schema_version");
  const FileFamily family = family_from_name(need("family").get<std::string>());
  const Json& dims = need("dims");
  auto dim_of = [&](const char* key) -> Index {
    if (!dims.contains(key) || !dims.at(key).is_number_integer())
      throw IoError(path + ": dims." + std::string(key) + " missing or not an integer");
    const auto v = dims.at(key).get<long long>();
    if (v < 0) throw IoError(path + ": negative dimension");
    return static_cast<Index>(v);
  };
  const Index n = dim_of("n"), m_in = dim_of("m"), p_out = dim_of("p"), q = dim_of("q");
  const Activation act = activation_from_name(need("activation").get<std::string>());
  const Json& mats = need("matrices");
  const Json certs = j.contains("certificates") ? j.at("certificates") : Json::object();

  auto mat = [&](const char* key, Index rows, Index cols) {
    if (!mats.contains(key)) throw IoError(path + ": missing matrix '" + std::string(key) + "'");
    return detail::matrix_from_json(mats.at(key), rows, cols, key);
  };
  auto vec = [&](const char* key, Index size) {
    if (!mats.contains(key)) throw IoError(path + ": missing vector '" + std::string(key) + "'");
    return detail::vector_from_json(mats.at(key), size, key);
  };
  auto cert_mat = [&](const char* key, Index rows, Index cols) -> std::optional<Matrix> {
    if (!certs.contains(key)) return std::nullopt;
    return detail::matrix_from_json(certs.at(key), rows, cols, key);
  };
  auto cert_vec = [&](const char* key, Index size) -> std::optional<Vector> {
    if (!certs.contains(key)) return std::nullopt;
    return detail::vector_from_json(certs.at(key), size, key);
  };

  ModelFileData data;
  switch (family) {
    case FileFamily::explicit_lti: {
      ExplicitLti m;
      m.A = mat("A", n, n);
      m.B = mat("B", n, m_in);
      m.C = mat("C", p_out, n);
      m.D = mat("D", p_out, m_in);
      data.model = std::move(m);
      data.explicit_P = cert_mat("P", n, n);
      break;
    }
    case FileFamily::implicit_lti: {
      ImplicitLti m;
      m.E = mat("E", n, n);
      m.F = mat("F", n, n);
      m.K = mat("K", n, m_in);
      m.C = mat("C", p_out, n);
      m.D = mat("D", p_out, m_in);
      auto p_cert = cert_mat("P", n, n);
      if (!p_cert) throw IoError(path + ": implicit_lti requires certificates.P");
      m.P = std::move(*p_cert);
      data.model = std::move(m);
      break;
    }
    case FileFamily::robust_rnn: {
      RobustRnn m;
      m.E = mat("E", n, n);
      m.F = mat("F", n, n);
      m.B1 = mat("B1", n, q);
      m.B2 = mat("B2", n, m_in);
      m.Ctilde = mat("Ctilde", q, n);
      m.C2 = mat("C2", p_out, n);
      m.D12 = mat("D12", q, m_in);
      m.D21 = mat("D21", p_out, q);
      m.D22 = mat("D22", p_out, m_in);
      auto p_cert = cert_mat("P", n, n);
      auto lambda = cert_vec("Lambda", q);
      if (!p_cert || !lambda)
        throw IoError(path + ": robust_rnn requires certificates.P and certificates.Lambda");
      m.P = std::move(*p_cert);
      m.Lambda = std::move(*lambda);
      m.act = act;
      data.model = std::move(m);
      break;
    }
    case FileFamily::eqnet: {
      EquilibriumNetwork m;
      m.D11 = mat("D11", q, q);
      m.D12 = mat("D12", q, m_in);
      m.D21 = mat("D21", p_out, q);
      m.b_w = vec("b_w", q);
      m.b_y = vec("b_y", p_out);
      auto lambda = cert_vec("Lambda", q);
      if (!lambda) throw IoError(path + ": eqnet requires certificates.Lambda");
      m.Lambda = std::move(*lambda);
      m.act = act;
      data.model = std::move(m);
      break;
    }
    case FileFamily::ren: {
      Ren m;
      m.E = mat("E", n, n);
      m.F = mat("F", n, n);
      m.B1 = mat("B1", n, q);
      m.B2 = mat("B2", n, m_in);
      m.Ctilde = mat("Ctilde", q, n);
      m.D11tilde = mat("D11tilde", q, q);
      m.D12 = mat("D12", q, m_in);
      m.C2 = mat("C2", p_out, n);
      m.D21 = mat("D21", p_out, q);
      m.D22 = mat("D22", p_out, m_in);
      m.b_x = vec("b_x", n);
      m.b_v = vec("b_v", q);
      m.b_y = vec("b_y", p_out);
      auto p_cert = cert_mat("P", n, n);
      auto lambda = cert_vec("Lambda", q);
      if (!p_cert || !lambda)
        throw IoError(path + ": ren requires certificates.P and certificates.Lambda");
      m.P = std::move(*p_cert);
      m.Lambda = std::move(*lambda);
      m.act = act;
      data.model = std::move(m);
      break;
    }
  }
  if (certs.contains("margin")) data.margin = certs.at("margin").get<double>();
  if (certs.contains("gamma")) data.gamma = certs.at("gamma").get<double>();
  if (j.contains("metadata"))
    for (const auto& [k, v] : j.at("metadata").items())
      data.metadata[k] = v.get<std::string>();

  // Gamma annotations on the typed models mirror the file-level claim.
  if (data.gamma) {
    std::visit(
        [&](auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, RobustRnn> || std::is_same_v<T, EquilibriumNetwork> ||
                        std::is_same_v<T, Ren>)
            m.gamma = *data.gamma;
        },
        data.model);
  }

  detail::reverify_certificates(data, path);
  return data;
}

// ---------------------------------------------------------------------------
// Feedforward weight files (input to the equilibrium-network converter).

inline void save_feedforward(const FeedforwardSpec& spec, const std::string& path) {
  spec.validate_dims();
  Json j;
  j["schema_version"] = "1";
  j["kind"] = "feedforward";
  j["activation"] = activation_name(spec.act);
  Json layers = Json::array();
  for (const auto& layer : spec.layers) {
    Json entry;
    entry["W"] = detail::matrix_to_json(layer.W);
    entry["b"] = detail::vector_to_json(layer.b);
    layers.push_back(std::move(entry));
  }
  j["layers"] = std::move(layers);
  detail::write_file(path, j.dump(2) + "\n");
}

inline FeedforwardSpec load_feedforward(const std::string& path) {
  Json j;
  try {
    j = Json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": JSON parse error: " + e.what());
  }
  if (!j.contains("kind") || j.at("kind").get<std::string>() != "feedforward")
    throw IoError(path + ": expected kind == 'feedforward'");
  if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").size() < 2)
    throw IoError(path + ": need at least one hidden layer plus the linear readout");
  FeedforwardSpec spec;
  spec.act = activation_from_name(j.at("activation").get<std::string>());
  for (const auto& entry : j.at("layers")) {
    if (!entry.contains("W") || !entry.at("W").is_array() || entry.at("W").empty())
      throw IoError(path + ": each layer needs a non-empty W");
    const Index rows = static_cast<Index>(entry.at("W").size());
    const Index cols = static_cast<Index>(entry.at("W")[0].size());
    FeedforwardLayer layer;
    layer.W = detail::matrix_from_json(entry.at("W"), rows, cols, "W");
    layer.b = detail::vector_from_json(entry.at("b"), rows, "b");
    spec.layers.push_back(std::move(layer));
  }
  try {
    spec.validate_dims();
  } catch (const InvariantError& e) {
    throw IoError(path + ": " + e.what());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark generation.

enum class SyntheticKind { stable_lti, lti_plus_static_nonlinearity };
enum class InputKind { white_noise, multisine };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::stable_lti;
  Index n = 2, m = 1, p = 1;
  Index T = 500;
  InputKind input = InputKind::white_noise;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(n >= 1 && m >= 1 && p >= 1, "SyntheticSpec: dims must be positive");
    require(T >= 1, "SyntheticSpec: T must be >= 1");
    require(std::isfinite(noise_std) && noise_std >= 0.0,
            "SyntheticSpec: noise_std must be finite and >= 0");
  }
};

/// Draws a certified stable LTI generator, simulates it from the
/// origin under the requested input, optionally squashes the output
/// through tanh, and adds Gaussian noise. Fully determined by the seed.
inline std::pair<TimeSeriesDataset, ImplicitLti> generate_synthetic_with_model(
    const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  DirectFactor factor = DirectFactor::random(2 * spec.n, 0.05, rng);
  ImplicitLti gen = direct_parameterize_lti(factor, rng.gaussian(spec.n, spec.m, 0.7),
                                            rng.gaussian(spec.p, spec.n, 0.7),
                                            rng.gaussian(spec.p, spec.m, 0.3));

  Matrix u(spec.T, spec.m);
  if (spec.input == InputKind::white_noise) {
    u = rng.gaussian(spec.T, spec.m);
  } else {
    const int tones = 8;
    Matrix amp(tones, spec.m), phase(tones, spec.m);
    for (int k = 0; k < tones; ++k)
      for (Index j = 0; j < spec.m; ++j) {
        amp(k, j) = 1.0 / std::sqrt(static_cast<double>(tones));
        phase(k, j) = 2.0 * std::numbers::pi * rng.uniform();
      }
    for (Index t = 0; t < spec.T; ++t)
      for (Index j = 0; j < spec.m; ++j) {
        double s = 0.0;
        for (int k = 0; k < tones; ++k)
          s += amp(k, j) *
               std::sin(2.0 * std::numbers::pi * (k + 1) * t / static_cast<double>(spec.T) +
                        phase(k, j));
        u(t, j) = s;
      }
  }

  SimResult sim = simulate(gen, u, Vector::Zero(spec.n));
  // Normalize output channels to unit scale so datasets are comparable
  // across seeds; the returned generator is rescaled consistently.
  for (Index j = 0; j < spec.p; ++j) {
    const double mean = sim.y.col(j).mean();
    const double sd = std::sqrt((sim.y.col(j).array() - mean).square().mean());
    if (sd > 1e-9) {
      gen.C.row(j) /= sd;
      gen.D.row(j) /= sd;
      sim.y.col(j) /= sd;
    }
  }

  TimeSeriesDataset data;
  data.u = std::move(u);
  data.y = std::move(sim.y);
  if (spec.kind == SyntheticKind::lti_plus_static_nonlinearity)
    data.y = data.y.array().tanh().matrix();
  if (spec.noise_std > 0.0) data.y += rng.gaussian(spec.T, spec.p, spec.noise_std);
  return {std::move(data), std::move(gen)};
}

inline TimeSeriesDataset generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic_with_model(spec).first;
}

}  // namespace renkit
