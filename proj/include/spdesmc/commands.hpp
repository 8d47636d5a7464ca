#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace spdesmc {

// Overrides taken from the command line; unset fields defer to the config.
struct CliOverrides {
  std::string flavor;
  std::optional<std::uint64_t> seed;
  int workers = 0;
};

// Loads and schema-checks a run configuration; unknown keys are rejected.
nlohmann::json load_run_config(const std::string& path);
void validate_run_config(const nlohmann::json& cfg);

int cmd_simulate(const nlohmann::json& cfg, const std::string& out_dir,
                 const CliOverrides& ovr = {});
int cmd_filter(const nlohmann::json& cfg, const std::string& data_path,
               const std::string& out_dir, const CliOverrides& ovr = {});
int cmd_smooth(const nlohmann::json& cfg, const std::string& data_path,
               const std::string& out_dir, const CliOverrides& ovr = {},
               bool sample_theta = false);
int cmd_infer(const nlohmann::json& cfg, const std::string& data_path,
              const std::string& out_dir, const CliOverrides& ovr = {});
int cmd_compare(const nlohmann::json& cfg, const std::string& data_path,
                const std::string& out_dir, const CliOverrides& ovr = {});

}  // namespace spdesmc
