#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "esbo/bench/config.hpp"
#include "esbo/bench/store.hpp"
#include "esbo/optimizer.hpp"

namespace esbo::bench {

struct CampaignSummary {
    int total = 0;
    int skipped = 0;  // already in the store
    int ran = 0;
    int aborted = 0;  // no complete episode in the initial design; records kept
    std::vector<std::pair<RunKey, std::string>> failures;
};

/// All runs of a campaign, task-major then variant then seed.
inline std::vector<RunKey> campaign_runs(const CampaignConfig& c) {
    std::vector<RunKey> out;
    for (const auto& t : c.tasks) {
        for (Variant v : c.variants) {
            for (auto s : c.seeds) out.push_back({t, v, s});
        }
    }
    return out;
}

/// Runs one (task, variant, seed) and writes it to the store.
inline RunMeta execute_run(const CampaignConfig& c, const RunKey& key, const Store& store) {
    const auto task = c.make(key.task);
    const OptimizerConfig cfg = c.run_config(*task, key.variant, key.seed);
    const RunResult res = run_optimization(cfg, *task);
    RunMeta m;
    m.key = key;
    m.dim = task->dim();
    m.max_steps = task->max_steps();
    m.max_evals = cfg.max_evals;
    m.step_budget = cfg.step_budget;
    m.aborted = res.aborted;
    m.diagnostic = res.diagnostic;
    m.fallback_proposals = res.fallback_proposals;
    m.invariants = res.invariants;
    store.write_run(m, res.records);
    return m;
}

namespace detail {

inline Json manifest_json(const CampaignConfig& c, const Store& store, const std::vector<RunKey>& runs,
                          const std::map<std::string, std::string>& failures) {
    Json list = Json::array();
    for (const auto& k : runs) {
        Json r{{"task", k.task}, {"variant", std::string(to_string(k.variant))}, {"seed", k.seed},
               {"records", "runs/" + k.stem() + ".csv"}};
        if (auto f = failures.find(k.stem()); f != failures.end()) {
            r["status"] = "failed";
            r["error"] = f->second;
        } else if (store.done(k)) {
            r["status"] = meta_from_json(Json::parse(read_file(store.meta_path(k)))).aborted ? "aborted" : "ok";
        } else {
            r["status"] = "pending";
        }
        list.push_back(std::move(r));
    }
    return Json{{"name", c.name},
                {"config_hash", config_hash(c)},
                {"code_version", ESBO_VERSION},
                {"config", to_json(c)},
                {"runs", list}};
}

}  // namespace detail

/// Executes every run not yet in the store with `jobs` worker threads. Refuses a store written
/// by a different config. Run failures are logged and recorded in the manifest; the remaining
/// runs continue.
inline CampaignSummary run_campaign(const CampaignConfig& c, const Store& store, int jobs,
                                    const std::function<void(const std::string&)>& log = {}) {
    fs::create_directories(store.runs_dir());
    const std::string hash = config_hash(c);
    if (const auto old = store.manifest()) {
        const auto old_hash = old->value("config_hash", std::string());
        if (old_hash != hash) {
            throw StoreError("store " + store.root().string() + " belongs to a different config (hash " + old_hash +
                             ", this config " + hash + ")");
        }
    }
    const auto runs = campaign_runs(c);
    std::map<std::string, std::string> failures;
    write_file_atomic(store.manifest_path(), detail::manifest_json(c, store, runs, failures).dump(2) + "\n");

    CampaignSummary sum;
    sum.total = static_cast<int>(runs.size());
    std::vector<RunKey> todo;
    for (const auto& k : runs) {
        if (store.done(k)) ++sum.skipped;
        else todo.push_back(k);
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const RunKey& k = todo[i];
            try {
                const RunMeta m = execute_run(c, k, store);
                std::lock_guard lock(mu);
                ++sum.ran;
                if (m.aborted) ++sum.aborted;
                if (log) {
                    log("done " + k.stem() + (m.aborted ? " (aborted: " + m.diagnostic + ")" : "") + " [" +
                        std::to_string(sum.ran + static_cast<int>(sum.failures.size())) + "/" +
                        std::to_string(todo.size()) + "]");
                }
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                sum.failures.emplace_back(k, e.what());
                failures[k.stem()] = e.what();
                if (log) log("FAILED " + k.stem() + ": " + e.what());
            }
        }
    };
    const int n = std::max(1, std::min(jobs, static_cast<int>(todo.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::sort(sum.failures.begin(), sum.failures.end(),
              [](const auto& a, const auto& b) { return a.first.stem() < b.first.stem(); });
    write_file_atomic(store.manifest_path(), detail::manifest_json(c, store, runs, failures).dump(2) + "\n");
    return sum;
}

}  // namespace esbo::bench
