#pragma once

#include "kwnr/data.hpp"
#include "kwnr/glm.hpp"
#include "kwnr/kw.hpp"
#include "kwnr/nr.hpp"
#include "kwnr/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kwnr {

inline constexpr const char *kVersion = "0.1.0";

/// Environment variable that overrides the configured output directory.
inline constexpr const char *kOutDirEnv = "KWNR_OUT_DIR";

/// Column names added by `kwnr weight` and read back by `kwnr estimate`.
struct WeightColumns {
    std::string kw = "kw_weight";
    std::string r_hat = "r_hat";
    std::string kwnr = "kwnr_weight";
};

/// Everything a run reads from its JSON config file.
///
/// Grammar (all keys optional unless the command needs them; unknown keys are errors):
///
///     {
///       "seed": 20240531, "reps": 2000, "threads": 1, "out_dir": "results",
///       "population": {"size": 200000, "beta_y": [-0.5, 0.5], "beta_r": [0.2, 0.5]},
///       "cohort_size": 8000, "reference_size": 2000,
///       "beta_c": [[-1, 0.5], [-1, 1.5]],          // or a single pair [-1, 0.5]
///       "pps": {"method": "successive", "overflow": "allow"},
///       "fixed_population": false,
///       "kernel": {"type": "gaussian", "bandwidth": 0.05},
///       "nr": {"base_weights": "kw", "propensity_floor": 0.01},
///       "design": {"degree": 1, "interactions": false},
///       "reference": {"weight": "d", "covariates": ["x"]},
///       "cohort": {"respond": "respond", "outcome": "y", "x": ["x"], "z": ["x"], "subgroup": "group"},
///       "weight_columns": {"kw": "kw_weight", "r_hat": "r_hat", "kwnr": "kwnr_weight"}
///     }
struct RunConfig {
    std::optional<std::uint64_t> seed;
    std::size_t reps = 2000;
    unsigned threads = 1;
    std::optional<std::filesystem::path> out_dir;
    /// One scenario per beta_c cell; the seed and reps fields are applied by the simulate command.
    std::vector<sim::SimScenario> cells;
    KernelSpec kernel;
    NrConfig nr;
    DesignSpec design;
    ReferenceSchema reference{"d", {"x"}};
    CohortSchema cohort{"respond", std::string{"y"}, {"x"}, {}, std::nullopt};
    WeightColumns weight_columns;
    int verbosity = 0;

    /// Canonical JSON of the effective configuration (after command-line overrides).
    std::string canonical() const;
    /// 16 hex digits identifying canonical().
    std::string hash() const;
};

/// Parses config text. ConfigError messages carry the line and column of
/// syntax errors and the JSON path of bad or unknown fields.
RunConfig parse_config(const std::string &text, const std::string &source = "<config>");
RunConfig load_config(const std::filesystem::path &path);

/// Output directory: `flag` when given, else $KWNR_OUT_DIR, else the config's
/// out_dir, else the current directory.
std::filesystem::path resolve_out_dir(const std::optional<std::filesystem::path> &flag, const RunConfig &config);

} // namespace kwnr
