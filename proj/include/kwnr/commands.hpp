#pragma once

#include "kwnr/config.hpp"
#include "kwnr/sim.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kwnr {

struct SimulateRequest {
    RunConfig config;
    std::filesystem::path out_dir;
    bool write_replicates = false;
};

struct WeightRequest {
    RunConfig config;
    std::filesystem::path reference;
    std::filesystem::path cohort;
    std::filesystem::path out_dir;
};

struct EstimateRequest {
    RunConfig config;
    std::filesystem::path cohort;
    /// File holding the kw weight column, row-aligned with the cohort.
    std::optional<std::filesystem::path> weights_from;
    std::filesystem::path out_dir;
};

/// Writes table1.csv, table2.csv, metrics.json and optionally replicates.csv.
/// Throws on failure-rate abort or configuration problems.
void cmd_simulate(const SimulateRequest &request, std::ostream &out, std::ostream &log);

/// Writes cohort_weighted.csv and weights_summary.json.
void cmd_weight(const WeightRequest &request, std::ostream &out, std::ostream &log);

/// Writes estimates.csv: the overall row, then one row per subgroup level.
void cmd_estimate(const EstimateRequest &request, std::ostream &out, std::ostream &log);

/// Full command line entry point. Returns the process exit status; errors are
/// reported on `err`.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace kwnr
