#include "kwnr/config.hpp"

#include "kwnr/error.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace kwnr {

namespace {

using nlohmann::json;

// Tracks which keys of a JSON object were consumed so leftovers can be reported.
class Object {
public:
    Object(const json &value, std::string path) : value_(value), path_(std::move(path)) {
        if (!value_.is_object()) {
            fail(path_, "expected an object");
        }
    }

    ~Object() noexcept(false) {
        if (std::uncaught_exceptions() > 0) {
            return;
        }
        for (const auto &item : value_.items()) {
            if (!used_.contains(item.key())) {
                fail(child(item.key()), "unknown field");
            }
        }
    }

    Object(const Object &) = delete;
    Object &operator=(const Object &) = delete;

    const json *get(const std::string &key) {
        used_.insert(key);
        auto it = value_.find(key);
        if (it == value_.end() || it->is_null()) {
            return nullptr;
        }
        return &*it;
    }

    std::string child(const std::string &key) const { return path_ + "." + key; }

    [[noreturn]] static void fail(const std::string &path, const std::string &what) {
        throw ConfigError("config field '" + path + "': " + what);
    }

private:
    const json &value_;
    std::string path_;
    std::set<std::string> used_;
};

double as_number(const json &v, const std::string &path) {
    if (!v.is_number()) {
        Object::fail(path, "expected a number");
    }
    return v.get<double>();
}

std::uint64_t as_unsigned(const json &v, const std::string &path) {
    if (v.is_number_unsigned()) {
        return v.get<std::uint64_t>();
    }
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    Object::fail(path, "expected a nonnegative integer");
}

bool as_bool(const json &v, const std::string &path) {
    if (!v.is_boolean()) {
        Object::fail(path, "expected true or false");
    }
    return v.get<bool>();
}

std::string as_string(const json &v, const std::string &path) {
    if (!v.is_string()) {
        Object::fail(path, "expected a string");
    }
    return v.get<std::string>();
}

std::vector<std::string> as_strings(const json &v, const std::string &path) {
    if (!v.is_array()) {
        Object::fail(path, "expected an array of strings");
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_string(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

sim::Coefficients as_pair(const json &v, const std::string &path) {
    if (!v.is_array() || v.size() != 2) {
        Object::fail(path, "expected a pair [intercept, slope]");
    }
    return {as_number(v[0], path + "[0]"), as_number(v[1], path + "[1]")};
}

std::vector<sim::Coefficients> as_cells(const json &v, const std::string &path) {
    if (v.is_array() && v.size() == 2 && v[0].is_number()) {
        return {as_pair(v, path)};
    }
    if (!v.is_array() || v.empty()) {
        Object::fail(path, "expected a pair or a nonempty list of pairs");
    }
    std::vector<sim::Coefficients> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_pair(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::pair<std::size_t, std::size_t> line_and_column(const std::string &text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

const char *pps_method_name(sim::PpsMethod m) {
    return m == sim::PpsMethod::Successive ? "successive" : "systematic";
}

const char *pps_overflow_name(sim::PpsOverflow o) {
    switch (o) {
    case sim::PpsOverflow::Allow:
        return "allow";
    case sim::PpsOverflow::Certainty:
        return "certainty";
    case sim::PpsOverflow::Error:
        return "error";
    }
    return "?";
}

} // namespace

RunConfig parse_config(const std::string &text, const std::string &source) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error &e) {
        const auto [line, column] = line_and_column(text, e.byte);
        std::string what = e.what();
        if (auto pos = what.find("syntax error"); pos != std::string::npos) {
            what = what.substr(pos);
        }
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what);
    }

    RunConfig cfg;
    sim::SimScenario base;
    std::vector<sim::Coefficients> cells{base.beta_c};
    {
        Object top(root, "$");
        if (auto *v = top.get("seed")) {
            cfg.seed = as_unsigned(*v, "$.seed");
        }
        if (auto *v = top.get("reps")) {
            cfg.reps = as_unsigned(*v, "$.reps");
        }
        if (auto *v = top.get("threads")) {
            cfg.threads = static_cast<unsigned>(as_unsigned(*v, "$.threads"));
        }
        if (auto *v = top.get("out_dir")) {
            cfg.out_dir = as_string(*v, "$.out_dir");
        }
        if (auto *v = top.get("population")) {
            Object pop(*v, "$.population");
            if (auto *f = pop.get("size")) {
                base.population_size = as_unsigned(*f, pop.child("size"));
            }
            if (auto *f = pop.get("beta_y")) {
                base.beta_y = as_pair(*f, pop.child("beta_y"));
            }
            if (auto *f = pop.get("beta_r")) {
                base.beta_r = as_pair(*f, pop.child("beta_r"));
            }
        }
        if (auto *v = top.get("cohort_size")) {
            base.cohort_size = as_unsigned(*v, "$.cohort_size");
        }
        if (auto *v = top.get("reference_size")) {
            base.reference_size = as_unsigned(*v, "$.reference_size");
        }
        if (auto *v = top.get("beta_c")) {
            cells = as_cells(*v, "$.beta_c");
        }
        if (auto *v = top.get("pps")) {
            Object pps(*v, "$.pps");
            if (auto *f = pps.get("method")) {
                const auto name = as_string(*f, pps.child("method"));
                if (name == "successive") {
                    base.pps_method = sim::PpsMethod::Successive;
                } else if (name == "systematic") {
                    base.pps_method = sim::PpsMethod::Systematic;
                    base.pps_overflow = sim::PpsOverflow::Error;
                } else {
                    Object::fail(pps.child("method"), "expected \"successive\" or \"systematic\"");
                }
            }
            if (auto *f = pps.get("overflow")) {
                const auto name = as_string(*f, pps.child("overflow"));
                if (name == "allow") {
                    base.pps_overflow = sim::PpsOverflow::Allow;
                } else if (name == "certainty") {
                    base.pps_overflow = sim::PpsOverflow::Certainty;
                } else if (name == "error") {
                    base.pps_overflow = sim::PpsOverflow::Error;
                } else {
                    Object::fail(pps.child("overflow"), "expected \"allow\", \"certainty\" or \"error\"");
                }
            }
        }
        if (auto *v = top.get("fixed_population")) {
            base.fixed_population = as_bool(*v, "$.fixed_population");
        }
        if (auto *v = top.get("kernel")) {
            Object k(*v, "$.kernel");
            if (auto *f = k.get("type")) {
                try {
                    cfg.kernel.kernel = parse_kernel_type(as_string(*f, k.child("type")));
                } catch (const ConfigError &) {
                    throw;
                } catch (const Error &e) {
                    Object::fail(k.child("type"), e.what());
                }
            }
            if (auto *f = k.get("bandwidth")) {
                const double h = as_number(*f, k.child("bandwidth"));
                if (!(h > 0.0) || !std::isfinite(h)) {
                    Object::fail(k.child("bandwidth"), "must be positive and finite");
                }
                cfg.kernel.bandwidth = h;
            }
        }
        if (auto *v = top.get("nr")) {
            Object nr(*v, "$.nr");
            if (auto *f = nr.get("base_weights")) {
                const auto name = as_string(*f, nr.child("base_weights"));
                if (name == "kw") {
                    cfg.nr.base_weight_mode = BaseWeightMode::KW;
                } else if (name == "unit") {
                    cfg.nr.base_weight_mode = BaseWeightMode::Unit;
                } else {
                    Object::fail(nr.child("base_weights"), "expected \"kw\" or \"unit\"");
                }
            }
            if (auto *f = nr.get("propensity_floor")) {
                cfg.nr.propensity_floor = as_number(*f, nr.child("propensity_floor"));
            }
            try {
                cfg.nr.validate();
            } catch (const ConfigError &e) {
                Object::fail(nr.child("propensity_floor"), e.what());
            }
        }
        if (auto *v = top.get("design")) {
            Object d(*v, "$.design");
            if (auto *f = d.get("degree")) {
                const auto degree = as_unsigned(*f, d.child("degree"));
                if (degree < 1 || degree > 4) {
                    Object::fail(d.child("degree"), "must be between 1 and 4");
                }
                cfg.design.degree = static_cast<int>(degree);
            }
            if (auto *f = d.get("interactions")) {
                cfg.design.interactions = as_bool(*f, d.child("interactions"));
            }
        }
        if (auto *v = top.get("reference")) {
            Object r(*v, "$.reference");
            if (auto *f = r.get("weight")) {
                cfg.reference.weight = as_string(*f, r.child("weight"));
            }
            if (auto *f = r.get("covariates")) {
                cfg.reference.covariates = as_strings(*f, r.child("covariates"));
            }
        }
        if (auto *v = top.get("cohort")) {
            Object c(*v, "$.cohort");
            if (auto *f = c.get("respond")) {
                cfg.cohort.respond = as_string(*f, c.child("respond"));
            }
            if (auto *f = c.get("outcome")) {
                cfg.cohort.outcome = as_string(*f, c.child("outcome"));
            }
            if (auto *f = c.get("x")) {
                cfg.cohort.x = as_strings(*f, c.child("x"));
            }
            if (auto *f = c.get("z")) {
                cfg.cohort.z = as_strings(*f, c.child("z"));
            }
            if (auto *f = c.get("subgroup")) {
                cfg.cohort.subgroup = as_string(*f, c.child("subgroup"));
            }
        }
        if (auto *v = top.get("weight_columns")) {
            Object w(*v, "$.weight_columns");
            if (auto *f = w.get("kw")) {
                cfg.weight_columns.kw = as_string(*f, w.child("kw"));
            }
            if (auto *f = w.get("r_hat")) {
                cfg.weight_columns.r_hat = as_string(*f, w.child("r_hat"));
            }
            if (auto *f = w.get("kwnr")) {
                cfg.weight_columns.kwnr = as_string(*f, w.child("kwnr"));
            }
        }
    }

    base.nr = cfg.nr;
    base.kernel = cfg.kernel;
    base.design = cfg.design;
    base.reps = cfg.reps;
    for (const auto &beta_c : cells) {
        auto scn = base;
        scn.beta_c = beta_c;
        cfg.cells.push_back(scn);
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file '" + path.string() + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.string());
}

std::string RunConfig::canonical() const {
    json j;
    j["version"] = kVersion;
    if (seed) {
        j["seed"] = *seed;
    }
    j["reps"] = reps;
    json cell_list = json::array();
    for (const auto &scn : cells) {
        cell_list.push_back({{"population_size", scn.population_size},
                             {"cohort_size", scn.cohort_size},
                             {"reference_size", scn.reference_size},
                             {"beta_y", scn.beta_y},
                             {"beta_r", scn.beta_r},
                             {"beta_c", scn.beta_c},
                             {"pps_method", pps_method_name(scn.pps_method)},
                             {"pps_overflow", pps_overflow_name(scn.pps_overflow)},
                             {"fixed_population", scn.fixed_population}});
    }
    j["cells"] = cell_list;
    j["kernel"] = {{"type", to_string(kernel.kernel)}};
    if (kernel.bandwidth) {
        j["kernel"]["bandwidth"] = *kernel.bandwidth;
    }
    j["nr"] = {{"base_weights", nr.base_weight_mode == BaseWeightMode::KW ? "kw" : "unit"},
               {"propensity_floor", nr.propensity_floor}};
    j["design"] = {{"degree", design.degree}, {"interactions", design.interactions}};
    j["reference"] = {{"weight", reference.weight}, {"covariates", reference.covariates}};
    j["cohort"] = {{"respond", cohort.respond}, {"x", cohort.x}, {"z", cohort.z}};
    if (cohort.outcome) {
        j["cohort"]["outcome"] = *cohort.outcome;
    }
    if (cohort.subgroup) {
        j["cohort"]["subgroup"] = *cohort.subgroup;
    }
    j["weight_columns"] = {
        {"kw", weight_columns.kw}, {"r_hat", weight_columns.r_hat}, {"kwnr", weight_columns.kwnr}};
    return j.dump();
}

std::string RunConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path resolve_out_dir(const std::optional<std::filesystem::path> &flag, const RunConfig &config) {
    if (flag) {
        return *flag;
    }
    if (const char *env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
        return env;
    }
    if (config.out_dir) {
        return *config.out_dir;
    }
    return ".";
}

} // namespace kwnr
