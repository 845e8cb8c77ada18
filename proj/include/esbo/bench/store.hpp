#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esbo/bench/config.hpp"
#include "esbo/optimizer.hpp"

#ifndef ESBO_VERSION
#define ESBO_VERSION "dev"
#endif

namespace esbo::bench {

namespace fs = std::filesystem;

struct StoreError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Identity of one run inside a campaign.
struct RunKey {
    std::string task;
    Variant variant = Variant::RS;
    std::uint64_t seed = 0;

    [[nodiscard]] std::string stem() const {
        return task + "__" + std::string(to_string(variant)) + "__s" + std::to_string(seed);
    }
};

/// Deterministic outcome of a run apart from its records.
struct RunMeta {
    RunKey key;
    int dim = 0;
    int max_steps = 0;
    int max_evals = 0;
    long long step_budget = 0;
    bool aborted = false;
    std::string diagnostic;
    int fallback_proposals = 0;
    InvariantCounts invariants;
};

/// A run as read back from the store.
struct StoredRun {
    RunMeta meta;
    std::vector<RunRecord> records;
};

/// %.17g round-trips doubles exactly; infinities are written as inf.
inline std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw StoreError("bad number \"" + s + "\"");
    return v;
}

constexpr const char* kRecordHeader = "task,variant,seed,k,theta,status,stop_time,cost,incumbent,cum_steps";

/// Records file text: header row, one line per evaluation; theta entries joined by ';'.
inline std::string records_csv(const RunKey& key, const std::vector<RunRecord>& records) {
    std::ostringstream out;
    out << kRecordHeader << '\n';
    for (const auto& r : records) {
        out << key.task << ',' << to_string(key.variant) << ',' << key.seed << ',' << r.k << ',';
        for (Eigen::Index i = 0; i < r.params.size(); ++i) out << (i ? ";" : "") << fmt(r.params[i]);
        out << ',' << to_string(r.status) << ',' << r.stop_time << ',' << fmt(r.cost) << ',' << fmt(r.incumbent) << ','
            << r.cum_steps << '\n';
    }
    return out.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::vector<RunRecord> parse_records_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kRecordHeader) throw StoreError("records file: bad header");
    std::vector<RunRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 10) throw StoreError("records file: expected 10 fields in \"" + line + "\"");
        RunRecord r;
        r.k = std::stoi(f[3]);
        const auto th = split(f[4], ';');
        r.params.resize(static_cast<Eigen::Index>(th.size()));
        for (std::size_t i = 0; i < th.size(); ++i) r.params[static_cast<Eigen::Index>(i)] = parse_double(th[i]);
        r.status = parse_status(f[5]);
        r.stop_time = std::stoi(f[6]);
        r.cost = parse_double(f[7]);
        r.incumbent = parse_double(f[8]);
        r.cum_steps = std::stoll(f[9]);
        out.push_back(std::move(r));
    }
    return out;
}

inline Json to_json(const RunMeta& m) {
    return Json{{"task", m.key.task},
                {"variant", std::string(to_string(m.key.variant))},
                {"seed", m.key.seed},
                {"dim", m.dim},
                {"T_max", m.max_steps},
                {"K", m.max_evals},
                {"T_budget", m.step_budget},
                {"aborted", m.aborted},
                {"diagnostic", m.diagnostic},
                {"fallback_proposals", m.fallback_proposals},
                {"invariant_checks", m.invariants.checked},
                {"violations",
                 {{"pessimistic_bounds", m.invariants.pessimistic_bounds},
                  {"below_partial", m.invariants.below_partial},
                  {"tr_not_minimum", m.invariants.tr_not_minimum},
                  {"incumbent_increase", m.invariants.incumbent_increase}}}};
}

inline RunMeta meta_from_json(const Json& j) {
    RunMeta m;
    m.key.task = j.at("task").get<std::string>();
    const auto v = parse_variant(j.at("variant").get<std::string>());
    if (!v) throw StoreError("meta: unknown variant");
    m.key.variant = *v;
    m.key.seed = j.at("seed").get<std::uint64_t>();
    m.dim = j.at("dim").get<int>();
    m.max_steps = j.at("T_max").get<int>();
    m.max_evals = j.at("K").get<int>();
    m.step_budget = j.at("T_budget").get<long long>();
    m.aborted = j.at("aborted").get<bool>();
    m.diagnostic = j.at("diagnostic").get<std::string>();
    m.fallback_proposals = j.at("fallback_proposals").get<int>();
    m.invariants.checked = j.at("invariant_checks").get<long long>();
    const auto& v2 = j.at("violations");
    m.invariants.pessimistic_bounds = v2.at("pessimistic_bounds").get<long long>();
    m.invariants.below_partial = v2.at("below_partial").get<long long>();
    m.invariants.tr_not_minimum = v2.at("tr_not_minimum").get<long long>();
    m.invariants.incumbent_increase = v2.at("incumbent_increase").get<long long>();
    return m;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw StoreError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary file and a rename so readers never see a partial file.
inline void write_file_atomic(const fs::path& p, const std::string& text) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw StoreError("write failed: " + tmp.string());
    }
    fs::rename(tmp, p);
}

/// Layout: <root>/runs/<stem>.csv (records), <stem>.meta.json, <stem>.timing.csv (wall clock,
/// excluded from determinism), <root>/manifest.json, <root>/report/.
class Store {
public:
    explicit Store(fs::path root) : root_(std::move(root)) {}

    [[nodiscard]] const fs::path& root() const { return root_; }
    [[nodiscard]] fs::path runs_dir() const { return root_ / "runs"; }
    [[nodiscard]] fs::path records_path(const RunKey& k) const { return runs_dir() / (k.stem() + ".csv"); }
    [[nodiscard]] fs::path meta_path(const RunKey& k) const { return runs_dir() / (k.stem() + ".meta.json"); }
    [[nodiscard]] fs::path timing_path(const RunKey& k) const { return runs_dir() / (k.stem() + ".timing.csv"); }
    [[nodiscard]] fs::path manifest_path() const { return root_ / "manifest.json"; }
    [[nodiscard]] fs::path report_dir() const { return root_ / "report"; }

    /// A run counts as done when both its records and its meta file exist (meta is written last).
    [[nodiscard]] bool done(const RunKey& k) const { return fs::exists(records_path(k)) && fs::exists(meta_path(k)); }

    void write_run(const RunMeta& meta, const std::vector<RunRecord>& records) const {
        fs::create_directories(runs_dir());
        std::ostringstream timing;
        timing << "k,wall_ms\n";
        for (const auto& r : records) timing << r.k << ',' << fmt(r.wall_ms) << '\n';
        write_file_atomic(timing_path(meta.key), timing.str());
        write_file_atomic(records_path(meta.key), records_csv(meta.key, records));
        write_file_atomic(meta_path(meta.key), to_json(meta).dump(2) + "\n");
    }

    [[nodiscard]] StoredRun read_run(const RunKey& k) const {
        StoredRun r;
        r.meta = meta_from_json(Json::parse(read_file(meta_path(k))));
        r.records = parse_records_csv(read_file(records_path(k)));
        return r;
    }

    /// Every completed run in the store, in file-name order.
    [[nodiscard]] std::vector<StoredRun> read_all() const {
        std::vector<fs::path> metas;
        if (fs::exists(runs_dir())) {
            for (const auto& e : fs::directory_iterator(runs_dir())) {
                const auto name = e.path().filename().string();
                if (name.size() > 10 && name.ends_with(".meta.json")) metas.push_back(e.path());
            }
        }
        std::sort(metas.begin(), metas.end());
        std::vector<StoredRun> out;
        for (const auto& p : metas) {
            StoredRun r;
            r.meta = meta_from_json(Json::parse(read_file(p)));
            if (!fs::exists(records_path(r.meta.key))) continue;
            r.records = parse_records_csv(read_file(records_path(r.meta.key)));
            out.push_back(std::move(r));
        }
        return out;
    }

    [[nodiscard]] std::optional<Json> manifest() const {
        if (!fs::exists(manifest_path())) return std::nullopt;
        return Json::parse(read_file(manifest_path()));
    }

private:
    fs::path root_;
};

}  // namespace esbo::bench
