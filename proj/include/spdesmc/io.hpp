#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace spdesmc {

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

std::vector<std::vector<double>> matrix_to_rows(const Eigen::MatrixXd& m);
Eigen::MatrixXd rows_to_matrix(const nlohmann::json& rows);

// rows of doubles, '.' decimal separator, round-trip precision
void write_csv_rows(std::ostream& out, const Eigen::MatrixXd& m);
void write_csv_file(const std::string& path, const Eigen::MatrixXd& m,
                    const std::vector<std::string>& header = {});

// flat little-endian float64 dump with a JSON sidecar (path + ".json")
// describing the row-major shape
void write_binary_dump(const std::string& path, const Eigen::MatrixXd& m,
                       const nlohmann::json& extra_meta = {});
Eigen::MatrixXd read_binary_dump(const std::string& path);

// Validates a config object against a nested schema of known keys, rejecting
// unknown keys with a descriptive error. Throws SchemaError.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_known_keys(const nlohmann::json& obj, const std::string& where,
                      const std::vector<std::string>& allowed);

}  // namespace spdesmc
