#include "spdesmc/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spdesmc {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary dumps assume a little-endian host");

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

std::vector<std::vector<double>> matrix_to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows[i].resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
  }
  return rows;
}

Eigen::MatrixXd rows_to_matrix(const json& rows) {
  if (!rows.is_array()) throw std::runtime_error("expected an array of rows");
  const size_t n = rows.size();
  if (n == 0) return {};
  const size_t m = rows[0].size();
  Eigen::MatrixXd out(n, m);
  for (size_t i = 0; i < n; ++i) {
    if (rows[i].size() != m) throw std::runtime_error("ragged row array");
    for (size_t j = 0; j < m; ++j) out(i, j) = rows[i][j].get<double>();
  }
  return out;
}

namespace {

void append_double(std::string& s, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  s.append(buf, res.ptr);
}

}  // namespace

void write_csv_rows(std::ostream& out, const Eigen::MatrixXd& m) {
  std::string line;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) line.push_back(',');
      append_double(line, m(i, j));
    }
    line.push_back('\n');
    out << line;
  }
}

void write_csv_file(const std::string& path, const Eigen::MatrixXd& m,
                    const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  if (!header.empty()) {
    for (size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << "\n";
  }
  write_csv_rows(out, m);
}

void write_binary_dump(const std::string& path, const Eigen::MatrixXd& m,
                       const json& extra_meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  json meta;
  meta["dtype"] = "float64";
  meta["byte_order"] = "little";
  meta["order"] = "row-major";
  meta["shape"] = {m.rows(), m.cols()};
  if (!extra_meta.is_null())
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
  write_json_file(path + ".json", meta);
}

Eigen::MatrixXd read_binary_dump(const std::string& path) {
  const json meta = read_json_file(path + ".json");
  const Eigen::Index rows = meta.at("shape")[0].get<Eigen::Index>();
  const Eigen::Index cols = meta.at("shape")[1].get<Eigen::Index>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      m(i, j) = v;
    }
  if (!in) throw std::runtime_error("binary dump shorter than its sidecar shape");
  return m;
}

void check_known_keys(const json& obj, const std::string& where,
                      const std::vector<std::string>& allowed) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw SchemaError(where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace spdesmc
