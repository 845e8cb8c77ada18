#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "esbo/bench/metrics.hpp"
#include "esbo/bench/store.hpp"

namespace esbo::bench {

enum class Abscissa { Evaluations, Steps };

inline std::string_view to_string(Abscissa a) { return a == Abscissa::Steps ? "steps" : "evals"; }

/// One curve per algorithm: statistics over seeds of the task-averaged scaled regret.
struct AlgorithmCurves {
    std::vector<double> median, q25, q75;  // lower median; type-7 quartiles
    std::vector<double> average_rank;
};

struct TaskFinal {
    double median = 0.0, q25 = 0.0, q75 = 0.0;
    int runs = 0;
};

/// Aggregated campaign metrics on a grid of budget fractions (of T_budget for steps, of K for
/// evaluations). Curves are step functions carried forward from each evaluation; a run's last
/// episode may overshoot T_budget and is placed at the budget.
struct Analysis {
    Abscissa abscissa = Abscissa::Steps;
    std::vector<double> grid;
    std::vector<Variant> variants;
    std::vector<std::string> tasks;      // tasks included in the averages
    std::vector<std::string> degenerate; // excluded: no RS runs or RS median regret 0
    std::vector<std::string> warnings;
    std::map<std::string, double> j_star;    // best final incumbent over all runs, per task
    std::map<std::string, double> rs_scale;  // lower median of RS final regrets, per task
    std::map<Variant, AlgorithmCurves> curves;
    std::map<std::pair<std::string, Variant>, TaskFinal> final_by_task;

    [[nodiscard]] double final_median(Variant v) const { return curves.at(v).median.back(); }

    /// First grid fraction at which the median curve of `v` is at or below `threshold`.
    [[nodiscard]] std::optional<double> first_reach(Variant v, double threshold) const {
        const auto& m = curves.at(v).median;
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m[i] <= threshold) return grid[i];
        }
        return std::nullopt;
    }
};

/// Scaled-regret curve of one run on `grid`.
inline std::vector<double> run_curve(const StoredRun& r, Abscissa a, const std::vector<double>& grid, double j_star,
                                     double scale) {
    std::vector<double> x, y;
    const double budget = a == Abscissa::Steps ? static_cast<double>(r.meta.step_budget) : r.meta.max_evals;
    for (const auto& rec : r.records) {
        const double pos = a == Abscissa::Steps ? static_cast<double>(rec.cum_steps) : rec.k;
        x.push_back(std::min(pos, budget) / budget);
        y.push_back(rec.incumbent);
    }
    auto out = metrics::simple_regret(metrics::align_locf(x, y, grid), j_star);
    for (double& v : out) v /= scale;
    return out;
}

inline Analysis analyze(const std::vector<StoredRun>& runs, Abscissa a, int grid_points = 200) {
    Analysis an;
    an.abscissa = a;
    an.grid = metrics::fraction_grid(grid_points);

    std::set<std::string> task_set;
    std::set<Variant> variant_set;
    std::set<std::uint64_t> seed_set;
    std::map<std::tuple<std::string, Variant, std::uint64_t>, const StoredRun*> by_key;
    for (const auto& r : runs) {
        task_set.insert(r.meta.key.task);
        variant_set.insert(r.meta.key.variant);
        seed_set.insert(r.meta.key.seed);
        by_key[{r.meta.key.task, r.meta.key.variant, r.meta.key.seed}] = &r;
        if (r.records.empty()) continue;
        const double fin = r.records.back().incumbent;
        if (std::isfinite(fin)) {
            auto [it, fresh] = an.j_star.emplace(r.meta.key.task, fin);
            if (!fresh) it->second = std::min(it->second, fin);
        }
    }
    an.variants.assign(variant_set.begin(), variant_set.end());

    for (const auto& t : task_set) {
        std::vector<double> rs;
        for (auto s : seed_set) {
            auto it = by_key.find({t, Variant::RS, s});
            if (it == by_key.end() || it->second->records.empty()) continue;
            rs.push_back(it->second->records.back().incumbent);
        }
        if (rs.empty() || !an.j_star.count(t)) {
            an.degenerate.push_back(t);
            an.warnings.push_back("task " + t + ": no RS runs, excluded from scaled regret");
            continue;
        }
        const double scale = metrics::lower_median(metrics::simple_regret(rs, an.j_star[t]));
        if (!(scale > 0.0) || std::isinf(scale)) {
            an.degenerate.push_back(t);
            an.warnings.push_back("task " + t + ": RS median regret is " + fmt(scale) + ", excluded as degenerate");
            continue;
        }
        an.rs_scale[t] = scale;
        an.tasks.push_back(t);
    }

    // scaled curves per (task, variant, seed)
    std::map<std::tuple<std::string, Variant, std::uint64_t>, std::vector<double>> curve;
    for (const auto& [key, r] : by_key) {
        const auto& t = std::get<0>(key);
        if (!an.rs_scale.count(t)) continue;
        curve[key] = run_curve(*r, a, an.grid, an.j_star[t], an.rs_scale[t]);
    }

    const std::size_t g = an.grid.size();
    for (Variant v : an.variants) {
        // per-seed average over tasks, then statistics over seeds
        std::vector<std::vector<double>> per_seed;
        for (auto s : seed_set) {
            std::vector<double> avg(g, 0.0);
            int n = 0;
            for (const auto& t : an.tasks) {
                auto it = curve.find({t, v, s});
                if (it == curve.end()) continue;
                for (std::size_t i = 0; i < g; ++i) avg[i] += it->second[i];
                ++n;
            }
            if (n == 0) continue;
            if (n != static_cast<int>(an.tasks.size())) {
                an.warnings.push_back(std::string(esbo::to_string(v)) + " seed " + std::to_string(s) + ": averaged over " +
                                      std::to_string(n) + " of " + std::to_string(an.tasks.size()) + " tasks");
            }
            for (double& x : avg) x /= n;
            per_seed.push_back(std::move(avg));
        }
        AlgorithmCurves c;
        for (std::size_t i = 0; i < g; ++i) {
            std::vector<double> col;
            for (const auto& s : per_seed) col.push_back(s[i]);
            if (col.empty()) col.push_back(kInf);
            c.median.push_back(metrics::lower_median(col));
            c.q25.push_back(metrics::quantile(col, 0.25));
            c.q75.push_back(metrics::quantile(col, 0.75));
        }
        an.curves[v] = std::move(c);

        for (const auto& t : an.tasks) {
            std::vector<double> fin;
            for (auto s : seed_set) {
                auto it = curve.find({t, v, s});
                if (it != curve.end()) fin.push_back(it->second.back());
            }
            if (fin.empty()) continue;
            an.final_by_task[{t, v}] = {metrics::lower_median(fin), metrics::quantile(fin, 0.25),
                                        metrics::quantile(fin, 0.75), static_cast<int>(fin.size())};
        }
    }

    // average ranks over (task, seed) cells where every algorithm has a run
    std::map<Variant, std::vector<double>> rank_sum;
    for (Variant v : an.variants) rank_sum[v].assign(g, 0.0);
    int cells = 0;
    for (const auto& t : an.tasks) {
        for (auto s : seed_set) {
            bool full = true;
            for (Variant v : an.variants) full = full && curve.count({t, v, s});
            if (!full) continue;
            ++cells;
            for (std::size_t i = 0; i < g; ++i) {
                std::vector<double> vals;
                for (Variant v : an.variants) vals.push_back(curve[{t, v, s}][i]);
                const auto rk = metrics::average_ranks(vals);
                for (std::size_t j = 0; j < an.variants.size(); ++j) rank_sum[an.variants[j]][i] += rk[j];
            }
        }
    }
    for (Variant v : an.variants) {
        auto& r = an.curves[v].average_rank;
        r = rank_sum[v];
        for (double& x : r) x = cells > 0 ? x / cells : std::numeric_limits<double>::quiet_NaN();
    }
    return an;
}

/// Names of the files `write_report` produces for an abscissa.
inline std::vector<std::string> report_files(Abscissa a) {
    const std::string s(to_string(a));
    return {"scaled_regret_" + s + ".csv", "average_rank_" + s + ".csv", "headline_" + s + ".csv",
            "final_scaled_regret.csv"};
}

/// Writes the report files under store/report and returns a human-readable summary.
inline std::string write_report(const Store& store, const Analysis& an) {
    fs::create_directories(store.report_dir());
    const std::string ab(to_string(an.abscissa));
    const std::string xname = an.abscissa == Abscissa::Steps ? "budget_fraction" : "eval_fraction";
    const auto files = report_files(an.abscissa);

    std::ostringstream sr, rk, hl, fin, summary;
    sr << "algorithm," << xname << ",median,q25,q75\n";
    rk << "algorithm," << xname << ",average_rank\n";
    for (Variant v : an.variants) {
        const auto& c = an.curves.at(v);
        for (std::size_t i = 0; i < an.grid.size(); ++i) {
            sr << to_string(v) << ',' << fmt(an.grid[i]) << ',' << fmt(c.median[i]) << ',' << fmt(c.q25[i]) << ','
               << fmt(c.q75[i]) << '\n';
            rk << to_string(v) << ',' << fmt(an.grid[i]) << ',' << fmt(c.average_rank[i]) << '\n';
        }
    }

    hl << "algorithm,reference,threshold,first_" << xname << '\n';
    summary << "abscissa: " << ab << " (" << an.tasks.size() << " tasks averaged)\n";
    for (Variant ref : {Variant::RS, Variant::ESRS}) {
        if (!an.curves.count(ref)) continue;
        const double thr = an.final_median(ref);
        summary << "first reach of the " << to_string(ref) << "-median-final scaled regret (" << fmt(thr) << "):\n";
        for (Variant v : an.variants) {
            const auto f = an.first_reach(v, thr);
            hl << to_string(v) << ',' << to_string(ref) << ',' << fmt(thr) << ',' << (f ? fmt(*f) : "not reached") << '\n';
            summary << "  " << to_string(v) << ": " << (f ? fmt(*f) : std::string("not reached")) << '\n';
        }
        if (an.curves.count(Variant::BO) && an.curves.count(Variant::ESBO_GP)) {
            const auto bo = an.first_reach(Variant::BO, thr);
            const auto gp = an.first_reach(Variant::ESBO_GP, thr);
            if (bo && gp) summary << "  reduction ESBO-GP vs BO: " << fmt(1.0 - *gp / *bo) << '\n';
        }
    }
    summary << "median final scaled regret:\n";
    for (Variant v : an.variants) summary << "  " << to_string(v) << ": " << fmt(an.final_median(v)) << '\n';

    fin << "task,algorithm,median,q25,q75,runs\n";
    for (const auto& [key, f] : an.final_by_task) {
        fin << key.first << ',' << to_string(key.second) << ',' << fmt(f.median) << ',' << fmt(f.q25) << ','
            << fmt(f.q75) << ',' << f.runs << '\n';
    }
    for (Variant v : an.variants) {
        const auto& c = an.curves.at(v);
        fin << "all," << to_string(v) << ',' << fmt(c.median.back()) << ',' << fmt(c.q25.back()) << ','
            << fmt(c.q75.back()) << ",\n";
    }

    write_file_atomic(store.report_dir() / files[0], sr.str());
    write_file_atomic(store.report_dir() / files[1], rk.str());
    write_file_atomic(store.report_dir() / files[2], hl.str());
    write_file_atomic(store.report_dir() / files[3], fin.str());
    for (const auto& w : an.warnings) summary << "warning: " << w << '\n';
    return summary.str();
}

}  // namespace esbo::bench
