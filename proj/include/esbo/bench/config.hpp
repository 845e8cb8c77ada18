#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esbo/optimizer.hpp"
#include "esbo/tasks/registry.hpp"

namespace esbo::bench {

using Json = nlohmann::json;

/// Invalid campaign configuration; `where` is "line:col" for syntax errors or a JSON pointer
/// ("/budgets/K") for field errors.
struct ConfigError : std::runtime_error {
    std::string where;
    ConfigError(std::string at, const std::string& msg) : std::runtime_error(at + ": " + msg), where(std::move(at)) {}
};

/// Optional overrides of the default budgets. Absolute values win over the per-dimension ones.
struct Budgets {
    std::optional<int> k_init;
    std::optional<int> max_evals;            // "K"
    std::optional<long long> step_budget;    // "T_budget"
    int evals_per_dim = 45;                  // K = evals_per_dim * d
    int episodes_per_dim = 15;               // T_budget = episodes_per_dim * d * T_max
};

struct CampaignConfig {
    std::string name = "campaign";
    std::string store;  // empty: chosen by the caller
    std::vector<std::string> tasks;
    std::vector<Variant> variants;
    std::vector<std::uint64_t> seeds;
    Budgets budgets;
    gp::NoiseMode noise_mode = gp::NoiseMode::FixedZero;
    std::map<std::string, double> measurement_noise;  // task id -> output noise std
    acq::MesOptions mes;
    int fit_restarts = 8;
    int full_fit_every = 10;
    int light_restarts = 1;
    int light_max_iters = 30;

    /// Optimizer settings of one run.
    [[nodiscard]] OptimizerConfig run_config(const ClosedLoopTask& task, Variant v, std::uint64_t seed) const {
        OptimizerConfig c = OptimizerConfig::defaults_for(task, v, seed);
        const int d = task.dim();
        c.max_evals = budgets.evals_per_dim * d;
        c.step_budget = static_cast<long long>(budgets.episodes_per_dim) * d * task.max_steps();
        if (budgets.k_init) c.k_init = *budgets.k_init;
        if (budgets.max_evals) c.max_evals = *budgets.max_evals;
        if (budgets.step_budget) c.step_budget = *budgets.step_budget;
        c.noise_mode = noise_mode;
        c.mes = mes;
        c.fit.restarts = fit_restarts;
        c.full_fit_every = full_fit_every;
        c.light_restarts = light_restarts;
        c.light_max_iters = light_max_iters;
        return c;
    }

    /// Task instance with the configured measurement noise.
    [[nodiscard]] std::shared_ptr<ClosedLoopTask> make(const std::string& id) const {
        auto t = make_task(id);
        if (auto it = measurement_noise.find(id); it != measurement_noise.end()) t->set_measurement_noise(it->second);
        return t;
    }
};

inline std::string_view to_string(gp::NoiseMode m) { return m == gp::NoiseMode::Optimized ? "optimized" : "fixed_zero"; }

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(path_ + (key.empty() ? "" : "/" + key), msg);
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }
    [[nodiscard]] const Json& at(const std::string& key) const { return j_.at(key); }
    [[nodiscard]] std::string path(const std::string& key) const { return path_ + "/" + key; }

    long long integer(const std::string& key, long long lo, long long hi) const {
        const Json& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        const auto x = v.get<long long>();
        if (x < lo || x > hi) fail(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return x;
    }

    double number(const std::string& key, double lo) const {
        const Json& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double x = v.get<double>();
        if (!(x >= lo) || !std::isfinite(x)) fail(key, "must be finite and >= " + std::to_string(lo));
        return x;
    }

    std::string text(const std::string& key) const {
        const Json& v = j_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    void only(std::initializer_list<const char*> allowed) const {
        for (const auto& [k, _] : j_.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || k == a;
            if (!ok) fail(k, "unknown field");
        }
    }

private:
    const Json& j_;
    std::string path_;
};

/// A list of strings, or the string "all".
inline std::vector<std::string> names(const Reader& r, const std::string& key, const std::vector<std::string>& all) {
    const Json& v = r.at(key);
    if (v.is_string() && v.get<std::string>() == "all") return all;
    if (!v.is_array() || v.empty()) r.fail(key, "expected a non-empty array of names or \"all\"");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) r.fail(key + "/" + std::to_string(i), "expected a string");
        const auto s = v[i].get<std::string>();
        if (std::find(out.begin(), out.end(), s) != out.end()) r.fail(key + "/" + std::to_string(i), "duplicate \"" + s + "\"");
        out.push_back(s);
    }
    return out;
}

}  // namespace detail

/// Parses and validates a campaign config. Unknown fields are errors.
inline CampaignConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1), "syntax error");
    }
    const detail::Reader r(j, "");
    r.only({"name", "store", "tasks", "variants", "seeds", "seed_count", "budgets", "noise_mode", "measurement_noise",
            "acquisition", "fit"});

    CampaignConfig c;
    if (r.has("name")) c.name = r.text("name");
    if (r.has("store")) c.store = r.text("store");

    if (!r.has("tasks")) r.fail("tasks", "required");
    c.tasks = detail::names(r, "tasks", task_ids());
    for (std::size_t i = 0; i < c.tasks.size(); ++i) {
        const auto ids = task_ids();
        if (std::find(ids.begin(), ids.end(), c.tasks[i]) == ids.end()) {
            r.fail("tasks/" + std::to_string(i), "unknown task \"" + c.tasks[i] + "\"");
        }
    }

    if (!r.has("variants")) r.fail("variants", "required");
    std::vector<std::string> all;
    for (Variant v : all_variants()) all.emplace_back(to_string(v));
    const auto vs = detail::names(r, "variants", all);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        const auto v = parse_variant(vs[i]);
        if (!v) r.fail("variants/" + std::to_string(i), "unknown variant \"" + vs[i] + "\"");
        if (std::find(c.variants.begin(), c.variants.end(), *v) != c.variants.end()) {
            r.fail("variants/" + std::to_string(i), "duplicate variant");
        }
        c.variants.push_back(*v);
    }

    if (r.has("seeds") == r.has("seed_count")) r.fail("seeds", "give exactly one of seeds or seed_count");
    if (r.has("seeds")) {
        const Json& s = r.at("seeds");
        if (!s.is_array() || s.empty()) r.fail("seeds", "expected a non-empty array of non-negative integers");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s[i].is_number_unsigned()) r.fail("seeds/" + std::to_string(i), "expected a non-negative integer");
            const auto v = s[i].get<std::uint64_t>();
            if (std::find(c.seeds.begin(), c.seeds.end(), v) != c.seeds.end()) r.fail("seeds/" + std::to_string(i), "duplicate seed");
            c.seeds.push_back(v);
        }
    } else {
        const auto n = r.integer("seed_count", 1, 100000);
        for (long long i = 0; i < n; ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
    }

    if (r.has("budgets")) {
        const detail::Reader b(r.at("budgets"), r.path("budgets"));
        b.only({"k_init", "K", "T_budget", "K_per_dim", "T_budget_episodes_per_dim"});
        if (b.has("k_init")) c.budgets.k_init = static_cast<int>(b.integer("k_init", 2, 1000000));
        if (b.has("K")) c.budgets.max_evals = static_cast<int>(b.integer("K", 2, 100000000));
        if (b.has("T_budget")) c.budgets.step_budget = b.integer("T_budget", 1, 1LL << 50);
        if (b.has("K_per_dim")) c.budgets.evals_per_dim = static_cast<int>(b.integer("K_per_dim", 1, 1000000));
        if (b.has("T_budget_episodes_per_dim")) {
            c.budgets.episodes_per_dim = static_cast<int>(b.integer("T_budget_episodes_per_dim", 1, 1000000));
        }
    }

    if (r.has("noise_mode")) {
        const auto m = r.text("noise_mode");
        if (m == "fixed_zero") c.noise_mode = gp::NoiseMode::FixedZero;
        else if (m == "optimized") c.noise_mode = gp::NoiseMode::Optimized;
        else r.fail("noise_mode", "expected \"fixed_zero\" or \"optimized\"");
    }

    if (r.has("measurement_noise")) {
        const detail::Reader m(r.at("measurement_noise"), r.path("measurement_noise"));
        for (const auto& [id, _] : r.at("measurement_noise").items()) {
            if (std::find(c.tasks.begin(), c.tasks.end(), id) == c.tasks.end()) m.fail(id, "task not in this campaign");
            c.measurement_noise[id] = m.number(id, 0.0);
        }
    }

    if (r.has("acquisition")) {
        const detail::Reader a(r.at("acquisition"), r.path("acquisition"));
        a.only({"n_samples", "grid_per_dim", "candidates_per_dim", "refine_steps", "refine_starts"});
        if (a.has("n_samples")) c.mes.n_samples = static_cast<int>(a.integer("n_samples", 1, 100000));
        if (a.has("grid_per_dim")) c.mes.grid_per_dim = static_cast<int>(a.integer("grid_per_dim", 1, 1000000));
        if (a.has("candidates_per_dim")) c.mes.candidates_per_dim = static_cast<int>(a.integer("candidates_per_dim", 1, 1000000));
        if (a.has("refine_steps")) c.mes.refine_steps = static_cast<int>(a.integer("refine_steps", 0, 100000));
        if (a.has("refine_starts")) c.mes.refine_starts = static_cast<int>(a.integer("refine_starts", 0, 100000));
    }

    if (r.has("fit")) {
        const detail::Reader f(r.at("fit"), r.path("fit"));
        f.only({"restarts", "full_fit_every", "light_restarts", "light_max_iters"});
        if (f.has("restarts")) c.fit_restarts = static_cast<int>(f.integer("restarts", 1, 1000));
        if (f.has("full_fit_every")) c.full_fit_every = static_cast<int>(f.integer("full_fit_every", 1, 1000000));
        if (f.has("light_restarts")) c.light_restarts = static_cast<int>(f.integer("light_restarts", 1, 1000));
        if (f.has("light_max_iters")) c.light_max_iters = static_cast<int>(f.integer("light_max_iters", 1, 100000));
    }

    // budget consistency per task, reported against the field that is most likely wrong
    for (const auto& id : c.tasks) {
        const auto task = make_task(id);
        try {
            c.run_config(*task, c.variants.front(), 0).validate(*task);
        } catch (const esbo::ConfigError& e) {
            throw ConfigError("/budgets", std::string(e.what()) + " (task " + id + ")");
        }
    }
    return c;
}

inline CampaignConfig load_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file, "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Normalized form with every default spelled out; its hash identifies a result store.
inline Json to_json(const CampaignConfig& c) {
    Json j;
    j["name"] = c.name;
    j["tasks"] = c.tasks;
    std::vector<std::string> vs;
    for (Variant v : c.variants) vs.emplace_back(to_string(v));
    j["variants"] = vs;
    j["seeds"] = c.seeds;
    Json b;
    if (c.budgets.k_init) b["k_init"] = *c.budgets.k_init;
    if (c.budgets.max_evals) b["K"] = *c.budgets.max_evals;
    if (c.budgets.step_budget) b["T_budget"] = *c.budgets.step_budget;
    b["K_per_dim"] = c.budgets.evals_per_dim;
    b["T_budget_episodes_per_dim"] = c.budgets.episodes_per_dim;
    j["budgets"] = b;
    j["noise_mode"] = std::string(to_string(c.noise_mode));
    j["measurement_noise"] = c.measurement_noise;
    j["acquisition"] = {{"n_samples", c.mes.n_samples},
                        {"grid_per_dim", c.mes.grid_per_dim},
                        {"candidates_per_dim", c.mes.candidates_per_dim},
                        {"refine_steps", c.mes.refine_steps},
                        {"refine_starts", c.mes.refine_starts}};
    j["fit"] = {{"restarts", c.fit_restarts},
                {"full_fit_every", c.full_fit_every},
                {"light_restarts", c.light_restarts},
                {"light_max_iters", c.light_max_iters}};
    return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string config_hash(const CampaignConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
    return buf;
}

}  // namespace esbo::bench
