#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fpdrl::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

inline constexpr const char* kRunRootEnv = "FPDRL_RUN_ROOT";
inline constexpr const char* kDefaultRunRoot = "runs";

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// $FPDRL_RUN_ROOT, or ./runs.
std::filesystem::path run_root();

std::string version();
std::string utc_timestamp();

struct RunManifest {
    std::string run_id;
    std::string config_hash;
    std::string version;
    std::string started_at;
    std::optional<std::string> finished_at;
    std::string status;  // running | completed | diverged | failed
    std::vector<std::uint64_t> seeds;
    std::filesystem::path run_dir;
    std::optional<std::uint64_t> resumed_from_step;
    std::optional<double> wall_clock_seconds;

    nlohmann::json to_json() const;
    void write() const;  // <run_dir>/manifest.json, replaced atomically
};

/// Raised when runs passed to plotdata do not share an eval schedule.
class AlignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SeriesTable {
    std::string metric;
    std::vector<std::string> runs;
    std::vector<std::uint64_t> steps;
    std::vector<std::vector<double>> values;  // [row][run]
    std::vector<double> mean;
    std::vector<double> sem;  // sample std / sqrt(n); 0 for a single run

    std::string to_text() const;
};

std::vector<std::string> plot_metrics();
SeriesTable aligned_series(const std::vector<std::filesystem::path>& run_dirs, const std::string& metric);

/// Ablation axes and their default grids.
std::vector<std::string> ablation_axes();
std::string axis_config_key(const std::string& axis);
std::vector<std::string> default_axis_values(const std::string& axis);

struct AblationRow {
    std::string value;
    std::vector<double> per_seed;  // best-last-10% returns
    double mean = 0.0;
    double std = 0.0;
};

std::string format_ablation_table(const std::string& axis, const std::vector<std::uint64_t>& seeds,
                                  const std::vector<AblationRow>& rows);

}  // namespace fpdrl::cli
