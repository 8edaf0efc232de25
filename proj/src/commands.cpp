#include "kwnr/commands.hpp"

#include "kwnr/csv.hpp"
#include "kwnr/error.hpp"
#include "kwnr/estimate.hpp"
#include "kwnr/glm.hpp"
#include "kwnr/kw.hpp"
#include "kwnr/nr.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

namespace kwnr {

namespace {

using nlohmann::json;

std::string num(double value) {
    return csv::format_number(value);
}

std::string short_num(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", value);
    return buf;
}

std::string pad(std::string text, std::size_t width) {
    if (text.size() < width) {
        text.append(width - text.size(), ' ');
    }
    return text;
}

class CsvFile {
public:
    CsvFile(const std::filesystem::path &path, const RunConfig &config) : path_(path), out_(path, std::ios::binary) {
        if (!out_) {
            throw Error("cannot write '" + path.string() + "'");
        }
        out_ << "# config_hash=" << config.hash() << " version=" << kVersion << "\n";
    }

    void row(const std::vector<std::string> &fields) { csv::write_row(out_, fields); }

    void close() {
        out_.close();
        if (!out_) {
            throw Error("failed writing '" + path_.string() + "'");
        }
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

void write_json(const std::filesystem::path &path, const json &doc) {
    std::ofstream out(path, std::ios::binary);
    out << doc.dump(2) << "\n";
    out.close();
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

void prepare_dir(const std::filesystem::path &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
}

json fit_json(const PropensityFit &fit) {
    json coef = json::object();
    for (std::size_t k = 0; k < fit.labels.size(); ++k) {
        coef[fit.labels[k]] = fit.coefficients(static_cast<Eigen::Index>(k));
    }
    return {{"coefficients", coef},
            {"converged", fit.converged},
            {"iterations", fit.iterations},
            {"max_score_norm", fit.max_score_norm},
            {"log_likelihood", fit.log_likelihood}};
}

std::vector<double> numeric_column(const csv::Table &table, const std::string &name) {
    const std::size_t col = table.require(name);
    std::vector<double> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        auto v = csv::parse_number(table.rows[r][col]);
        if (!v || !std::isfinite(*v)) {
            throw DataError("expected a finite number", r + 1, name);
        }
        out.push_back(*v);
    }
    return out;
}

// Replaces the named column or appends it.
void set_column(csv::Table &table, const std::string &name, const std::vector<double> &values) {
    std::size_t col;
    if (auto found = table.find(name)) {
        col = *found;
    } else {
        col = table.header.size();
        table.header.push_back(name);
        for (auto &row : table.rows) {
            row.emplace_back();
        }
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        table.rows[r][col] = num(values[r]);
    }
}

std::uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

} // namespace

void cmd_simulate(const SimulateRequest &request, std::ostream &out, std::ostream &log) {
    RunConfig cfg = request.config;
    if (!cfg.seed) {
        cfg.seed = entropy_seed();
    }
    out << "seed: " << *cfg.seed << "\n";
    if (cfg.cells.empty()) {
        throw ConfigError("no simulation cells configured");
    }
    for (auto &scn : cfg.cells) {
        scn.master_seed = *cfg.seed;
        scn.reps = cfg.reps;
        scn.nr = cfg.nr;
        scn.kernel = cfg.kernel;
        scn.design = cfg.design;
        scn.validate();
    }
    prepare_dir(request.out_dir);

    std::vector<sim::MonteCarloResult> results;
    for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
        sim::ProgressFn progress;
        if (cfg.verbosity > 0) {
            progress = [&log, c](std::size_t done, std::size_t total) {
                if (done == total || done % 50 == 0) {
                    log << "cell " << c + 1 << ": " << done << "/" << total << " replicates\n";
                }
            };
        }
        results.push_back(sim::run_monte_carlo(cfg.cells[c], cfg.threads, progress));
    }

    const auto dir = request.out_dir;
    {
        CsvFile t1(dir / "table1.csv", cfg);
        std::vector<std::string> header{"estimator", "label"};
        for (std::size_t c = 1; c <= results.size(); ++c) {
            const auto k = std::to_string(c);
            header.push_back("rb_x100_c" + k);
            header.push_back("emp_var_x1e4_c" + k);
            header.push_back("mse_x1e4_c" + k);
        }
        t1.row(header);
        for (auto e : sim::kEstimators) {
            std::vector<std::string> row{sim::estimator_name(e), sim::estimator_label(e)};
            for (const auto &res : results) {
                const auto &em = res.metrics[e];
                row.push_back(num(em.rb_pct));
                row.push_back(num(em.emp_var * 1e4));
                row.push_back(num(em.mse * 1e4));
            }
            t1.row(row);
        }
        t1.close();
    }
    {
        CsvFile t2(dir / "table2.csv", cfg);
        t2.row({"cell", "beta_c0", "beta_c1", "beta_y0", "beta_y1", "beta_r0", "beta_r1", "reps", "failures",
                "mean_outcome", "response_rate", "cv_true", "cv_kw", "cv_kwnr", "vr", "mean_var_tl", "mean_var1",
                "mean_var2", "emp_var_kwnr"});
        for (std::size_t c = 0; c < results.size(); ++c) {
            const auto &scn = cfg.cells[c];
            const auto &m = results[c].metrics;
            t2.row({std::to_string(c + 1), num(scn.beta_c[0]), num(scn.beta_c[1]), num(scn.beta_y[0]),
                    num(scn.beta_y[1]), num(scn.beta_r[0]), num(scn.beta_r[1]), std::to_string(m.reps),
                    std::to_string(m.failures), num(m.mean_truth), num(m.mean_response_rate), num(m.mean_cv_true),
                    num(m.mean_cv_kw), num(m.mean_cv_kwnr), num(m.vr), num(m.mean_var_tl), num(m.mean_var1),
                    num(m.mean_var2), num(m[sim::Estimator::KwnrR].emp_var)});
        }
        t2.close();
    }
    {
        json doc;
        doc["version"] = kVersion;
        doc["config_hash"] = cfg.hash();
        doc["seed"] = *cfg.seed;
        doc["reps"] = cfg.reps;
        doc["cells"] = json::array();
        for (std::size_t c = 0; c < results.size(); ++c) {
            const auto &scn = cfg.cells[c];
            const auto &m = results[c].metrics;
            json est = json::object();
            for (auto e : sim::kEstimators) {
                const auto &em = m[e];
                est[sim::estimator_name(e)] = {{"mean_estimate", em.mean_estimate}, {"bias", em.bias},
                                               {"rb_pct", em.rb_pct},           {"emp_var", em.emp_var},
                                               {"mse", em.mse}};
            }
            doc["cells"].push_back({{"beta_c", scn.beta_c},
                                    {"beta_y", scn.beta_y},
                                    {"beta_r", scn.beta_r},
                                    {"reps_used", m.reps},
                                    {"failures", m.failures},
                                    {"failure_messages", m.failure_messages},
                                    {"mean_outcome", m.mean_truth},
                                    {"response_rate", m.mean_response_rate},
                                    {"mean_cv_true", m.mean_cv_true},
                                    {"mean_cv_kw", m.mean_cv_kw},
                                    {"mean_cv_kwnr", m.mean_cv_kwnr},
                                    {"vr", m.vr},
                                    {"mean_var_tl", m.mean_var_tl},
                                    {"mean_var1", m.mean_var1},
                                    {"mean_var2", m.mean_var2},
                                    {"estimators", est}});
        }
        write_json(dir / "metrics.json", doc);
    }
    if (request.write_replicates) {
        CsvFile reps(dir / "replicates.csv", cfg);
        std::vector<std::string> header{"cell", "rep", "ok", "error", "truth"};
        for (auto e : sim::kEstimators) {
            header.push_back(sim::estimator_name(e));
        }
        for (const char *name : {"var_tl", "var1", "var2", "cv_true", "cv_kw", "cv_kwnr", "respondents", "floored",
                                 "certainty_units", "bandwidth"}) {
            header.emplace_back(name);
        }
        reps.row(header);
        for (std::size_t c = 0; c < results.size(); ++c) {
            for (const auto &rec : results[c].records) {
                std::vector<std::string> row{std::to_string(c + 1), std::to_string(rec.rep), rec.ok ? "1" : "0",
                                             rec.error, num(rec.truth)};
                for (double v : rec.estimates) {
                    row.push_back(num(v));
                }
                for (double v : {rec.var_tl, rec.var1, rec.var2, rec.cv_true, rec.cv_kw, rec.cv_kwnr}) {
                    row.push_back(num(v));
                }
                row.push_back(std::to_string(rec.respondents));
                row.push_back(std::to_string(rec.floored));
                row.push_back(std::to_string(rec.certainty_units));
                row.push_back(num(rec.bandwidth));
                reps.row(row);
            }
        }
        reps.close();
    }

    for (std::size_t c = 0; c < results.size(); ++c) {
        const auto &scn = cfg.cells[c];
        const auto &m = results[c].metrics;
        out << "\ncell " << c + 1 << "  beta_c=(" << short_num(scn.beta_c[0]) << ", " << short_num(scn.beta_c[1])
            << ")  reps=" << m.reps << "  CV(true)=" << short_num(m.mean_cv_true)
            << "  CV(KW)=" << short_num(m.mean_cv_kw) << "  CV(kwNR)=" << short_num(m.mean_cv_kwnr)
            << "  VR=" << short_num(m.vr) << "\n";
        out << "  " << pad("estimator", 16) << pad("RB x100", 12) << pad("empVar x1e4", 14) << "MSE x1e4\n";
        for (auto e : sim::kEstimators) {
            const auto &em = m[e];
            out << "  " << pad(sim::estimator_name(e), 16) << pad(short_num(em.rb_pct), 12)
                << pad(short_num(em.emp_var * 1e4), 14) << short_num(em.mse * 1e4) << "\n";
        }
    }
    out << "\nwrote " << (dir / "table1.csv").string() << ", table2.csv, metrics.json"
        << (request.write_replicates ? ", replicates.csv" : "") << "\n";
}

void cmd_weight(const WeightRequest &request, std::ostream &out, std::ostream &log) {
    const RunConfig &cfg = request.config;
    const auto ref_table = csv::read_file(request.reference);
    auto cohort_table = csv::read_file(request.cohort);
    const auto reference = reference_from_table(ref_table, cfg.reference);
    const auto cohort = cohort_from_table(cohort_table, cfg.cohort);
    if (cfg.reference.covariates.size() != cfg.cohort.x.size()) {
        throw ConfigError("reference.covariates and cohort.x must list the same number of covariates");
    }

    const KwResult kwres = [&] {
        try {
            return kw_from_samples(cohort, reference, cfg.kernel, cfg.design);
        } catch (const FitError &e) {
            throw Error(std::string("participation model: ") + e.what() +
                        "; try fewer covariates or a lower design degree");
        }
    }();
    const WeightSet &kw = kwres.weights;

    ResponseFit rfit = [&] {
        try {
            return fit_response_model(cohort, kw, cfg.nr, cfg.design);
        } catch (const FitError &e) {
            throw Error(std::string("response model: ") + e.what() + "; try fewer z covariates");
        }
    }();
    const auto kwnr = kwnr_weights(kw, rfit, cohort);
    if (cfg.verbosity > 0) {
        log << "bandwidth " << short_num(kwres.bandwidth) << ", response model converged in "
            << rfit.fit.iterations << " iterations\n";
    }

    set_column(cohort_table, cfg.weight_columns.kw, {kw.values().begin(), kw.values().end()});
    set_column(cohort_table, cfg.weight_columns.r_hat, rfit.propensity);
    set_column(cohort_table, cfg.weight_columns.kwnr, {kwnr.values().begin(), kwnr.values().end()});

    prepare_dir(request.out_dir);
    CsvFile file(request.out_dir / "cohort_weighted.csv", cfg);
    file.row(cohort_table.header);
    for (const auto &row : cohort_table.rows) {
        file.row(row);
    }
    file.close();

    const double ref_sum = reference.total_weight();
    const double kw_sum = kw.sum();
    json summary{{"version", kVersion},
                 {"config_hash", cfg.hash()},
                 {"n_reference", reference.size()},
                 {"n_cohort", cohort.size()},
                 {"n_respondents", cohort.respondents()},
                 {"kernel", to_string(cfg.kernel.kernel)},
                 {"bandwidth", kwres.bandwidth},
                 {"bandwidth_rule", cfg.kernel.bandwidth ? "fixed" : "silverman"},
                 {"mass_conservation",
                  {{"reference_weight_sum", ref_sum},
                   {"kw_weight_sum", kw_sum},
                   {"relative_difference", std::abs(kw_sum - ref_sum) / ref_sum}}},
                 {"kw_cv", kw.cv()},
                 {"kwnr_weight_sum", kwnr.sum()},
                 {"kwnr_cv", kwnr.cv()},
                 {"propensity_floor", rfit.propensity_floor},
                 {"floored_count", rfit.floored_count},
                 {"participation_fit", fit_json(kwres.participation)},
                 {"response_fit", fit_json(rfit.fit)}};
    write_json(request.out_dir / "weights_summary.json", summary);

    out << "cohort " << cohort.size() << " (" << cohort.respondents() << " respondents), reference "
        << reference.size() << "\n";
    out << "sum kw_weight " << short_num(kw_sum) << " vs sum d " << short_num(ref_sum) << ", CV(KW) "
        << short_num(kw.cv()) << ", CV(kwNR) " << short_num(kwnr.cv()) << ", floored " << rfit.floored_count
        << "\n";
    out << "wrote " << (request.out_dir / "cohort_weighted.csv").string() << ", weights_summary.json\n";
}

void cmd_estimate(const EstimateRequest &request, std::ostream &out, std::ostream &log) {
    const RunConfig &cfg = request.config;
    const auto table = csv::read_file(request.cohort);
    const auto cohort = cohort_from_table(table, cfg.cohort);

    std::vector<double> kw_values;
    if (request.weights_from) {
        const auto wtable = csv::read_file(*request.weights_from);
        if (wtable.rows.size() != table.rows.size()) {
            throw DataError("weights file has " + std::to_string(wtable.rows.size()) + " rows, cohort has " +
                            std::to_string(table.rows.size()));
        }
        kw_values = numeric_column(wtable, cfg.weight_columns.kw);
    } else {
        if (!table.find(cfg.weight_columns.kw)) {
            throw DataError("cohort has no '" + cfg.weight_columns.kw +
                                "' column; run `kwnr weight` first or pass --weights-from",
                            0, cfg.weight_columns.kw);
        }
        kw_values = numeric_column(table, cfg.weight_columns.kw);
    }
    const WeightSet kw(std::move(kw_values), WeightProvenance::KW);
    const auto rfit = fit_response_model(cohort, kw, cfg.nr, cfg.design);

    if (auto col = table.find(cfg.weight_columns.r_hat); col && !request.weights_from) {
        double worst = 0.0;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            if (auto v = csv::parse_number(table.rows[r][*col])) {
                worst = std::max(worst, std::abs(*v - rfit.propensity[r]));
            }
        }
        if (worst > 1e-6) {
            log << "warning: refitted response propensities differ from column '" << cfg.weight_columns.r_hat
                << "' by up to " << short_num(worst) << "\n";
        }
    }

    struct Row {
        std::string group;
        std::optional<EstimateReport> report;
        std::size_t n = 0;
        std::size_t n_resp = 0;
        std::string note;
    };
    std::vector<Row> rows;
    rows.push_back({"(overall)", estimate_report(cohort, kw, rfit), 0, 0, {}});
    if (cohort.has_subgroups()) {
        for (const auto &level : cohort.subgroup_levels()) {
            Row row{level, std::nullopt, 0, 0, {}};
            const auto mask = cohort.subgroup_mask(level);
            for (std::size_t i = 0; i < cohort.size(); ++i) {
                row.n += mask[i];
                row.n_resp += mask[i] != 0 && cohort.responded(i) ? 1 : 0;
            }
            try {
                row.report = estimate_subgroup(cohort, kw, rfit, mask);
            } catch (const Error &e) {
                row.note = e.what();
            }
            rows.push_back(std::move(row));
        }
    }

    prepare_dir(request.out_dir);
    CsvFile file(request.out_dir / "estimates.csv", cfg);
    file.row({"group", "estimate", "se", "ci_low", "ci_high", "var1", "var2", "n", "n_resp", "note"});
    out << pad("group", 14) << pad("estimate", 12) << pad("se", 12) << pad("95% CI", 24) << pad("n", 8)
        << "n_resp\n";
    for (auto &row : rows) {
        std::vector<std::string> fields(10);
        fields[0] = row.group;
        std::string est_text = "-";
        std::string se_text = "-";
        std::string ci_text = "-";
        if (row.report) {
            const auto &rep = *row.report;
            row.n = rep.n_used;
            row.n_resp = rep.n_resp;
            fields[1] = num(rep.estimate);
            est_text = short_num(rep.estimate);
            if (rep.variance) {
                const auto &v = *rep.variance;
                fields[2] = num(v.se);
                fields[3] = num(v.ci95.lower);
                fields[4] = num(v.ci95.upper);
                fields[5] = num(v.var1);
                fields[6] = num(v.var2);
                se_text = short_num(v.se);
                ci_text = "(" + short_num(v.ci95.lower) + ", " + short_num(v.ci95.upper) + ")";
            }
            if (row.note.empty()) {
                row.note = rep.note;
            }
        }
        fields[7] = std::to_string(row.n);
        fields[8] = std::to_string(row.n_resp);
        fields[9] = row.note;
        file.row(fields);
        out << pad(row.group, 14) << pad(est_text, 12) << pad(se_text, 12) << pad(ci_text, 24)
            << pad(std::to_string(row.n), 8) << row.n_resp;
        if (!row.note.empty()) {
            out << "  [" << row.note << "]";
        }
        out << "\n";
    }
    file.close();
    out << "wrote " << (request.out_dir / "estimates.csv").string() << "\n";
}

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Kernel-weighted pseudoweights with nonresponse adjustment for cohort follow-ups", "kwnr"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    int verbosity = 0;
    app.add_flag("-v,--verbose", verbosity, "More progress output on stderr (repeatable)");

    std::string config_path;
    std::optional<std::filesystem::path> out_dir;

    auto *simulate = app.add_subcommand("simulate", "Monte Carlo study of the estimators");
    std::optional<std::size_t> reps;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool replicates = false;
    simulate->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--reps", reps, "Replicates per cell");
    simulate->add_option("--seed", seed, "Master seed");
    simulate->add_option("--threads", threads, "Worker threads");
    simulate->add_option("--out", out_dir, "Output directory");
    simulate->add_flag("--replicates", replicates, "Also write replicates.csv");
    simulate->fallthrough();

    auto *weight = app.add_subcommand("weight", "Compute KW and kwNR weights for a cohort");
    std::filesystem::path reference_path;
    std::filesystem::path cohort_path;
    weight->add_option("--reference", reference_path, "Reference sample CSV")->required()->check(CLI::ExistingFile);
    weight->add_option("--cohort", cohort_path, "Cohort CSV")->required()->check(CLI::ExistingFile);
    weight->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    weight->add_option("--out", out_dir, "Output directory");
    weight->fallthrough();

    auto *estimate = app.add_subcommand("estimate", "kwNR estimates with Taylor-linearization variance");
    std::optional<std::filesystem::path> weights_from;
    estimate->add_option("--cohort", cohort_path, "Cohort CSV with weight columns")
        ->required()
        ->check(CLI::ExistingFile);
    estimate->add_option("--weights-from", weights_from, "CSV holding the kw weight column")
        ->check(CLI::ExistingFile);
    estimate->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    estimate->add_option("--out", out_dir, "Output directory");
    estimate->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e, out, err);
    }

    try {
        RunConfig cfg = load_config(config_path);
        cfg.verbosity = verbosity;
        const auto dir = resolve_out_dir(out_dir, cfg);
        if (simulate->parsed()) {
            if (reps) {
                cfg.reps = *reps;
            }
            if (seed) {
                cfg.seed = *seed;
            }
            if (threads) {
                cfg.threads = *threads;
            }
            cmd_simulate({cfg, dir, replicates}, out, err);
        } else if (weight->parsed()) {
            cmd_weight({cfg, reference_path, cohort_path, dir}, out, err);
        } else {
            cmd_estimate({cfg, cohort_path, weights_from, dir}, out, err);
        }
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace kwnr
