#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "esbo/bench/campaign.hpp"
#include "esbo/bench/config.hpp"
#include "esbo/bench/store.hpp"

using namespace esbo;
using namespace esbo::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("esbo_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string where(const std::string& text) {
    try {
        parse_config(text);
    } catch (const bench::ConfigError& e) {
        return e.where;
    }
    return "no error";
}

// pt2_pid with BO and ESBO-GP on seeds 0..4 at a small budget
const char* kPairConfig = R"({
  "name": "pair",
  "tasks": ["pt2_pid"],
  "variants": ["BO", "ESBO_GP"],
  "seeds": [0, 1, 2, 3, 4],
  "budgets": {"K": 9, "T_budget": 6000},
  "acquisition": {"grid_per_dim": 100, "candidates_per_dim": 200}
})";

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.find(".timing.") == std::string::npos) {
            out[fs::relative(e.path(), dir).string()] = read_file(e.path());
        }
    }
    return out;
}

int cli(const std::string& args) {
    const int rc = std::system((std::string(ESBO_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, DefaultsAndExpansion) {
    const auto c = parse_config(R"({"tasks": "all", "variants": "all", "seed_count": 3})");
    EXPECT_EQ(c.tasks.size(), 5u);
    EXPECT_EQ(c.variants.size(), 6u);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
    const auto task = make_task("cartpole_sf");
    const auto rc = c.run_config(*task, Variant::ESBO_GP, 2);
    EXPECT_EQ(rc.k_init, 4);
    EXPECT_EQ(rc.max_evals, 180);
    EXPECT_EQ(rc.step_budget, 15LL * 4 * 500);
    EXPECT_EQ(rc.seed, 2u);
}

TEST(Config, OverridesApply) {
    const auto c = parse_config(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [7],
        "budgets": {"k_init": 4, "K": 20, "T_budget": 9000}, "noise_mode": "optimized",
        "measurement_noise": {"pt2_pid": 0.01}, "acquisition": {"n_samples": 3}, "fit": {"restarts": 2}})");
    const auto task = c.make("pt2_pid");
    EXPECT_EQ(task->measurement_noise(), 0.01);
    const auto rc = c.run_config(*task, Variant::BO, 7);
    EXPECT_EQ(rc.k_init, 4);
    EXPECT_EQ(rc.max_evals, 20);
    EXPECT_EQ(rc.step_budget, 9000);
    EXPECT_EQ(rc.noise_mode, gp::NoiseMode::Optimized);
    EXPECT_EQ(rc.mes.n_samples, 3);
    EXPECT_EQ(rc.fit.restarts, 2);
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(where(R"({"variants": ["BO"], "seeds": [0]})"), "/tasks");
    EXPECT_EQ(where(R"({"tasks": ["nope"], "variants": ["BO"], "seeds": [0]})"), "/tasks/0");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO", "XX"], "seeds": [0]})"), "/variants/1");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [0], "seed_count": 2})"), "/seeds");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [-1]})"), "/seeds/0");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [0], "budgets": {"K": 1.5}})"), "/budgets/K");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [0], "colour": 1})"), "/colour");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [0], "noise_mode": "x"})"), "/noise_mode");
    EXPECT_EQ(where(R"({"tasks": ["pt2_pid"], "variants": ["BO"], "seeds": [0], "budgets": {"T_budget": 100}})"),
              "/budgets");
    EXPECT_EQ(where("{\n  \"tasks\": [pt2_pid]\n}"), "2:13");
}

TEST(Config, HashIdentifiesNormalizedConfig) {
    const auto a = parse_config(R"({"tasks": ["pt2_pid"], "variants": ["ESBO_GP"], "seed_count": 2})");
    const auto b = parse_config(R"({"seeds": [0, 1], "variants": ["ESBO-GP"], "tasks": ["pt2_pid"]})");
    EXPECT_EQ(config_hash(a), config_hash(b));
    const auto c = parse_config(R"({"tasks": ["pt2_pid"], "variants": ["ESBO_GP"], "seed_count": 3})");
    EXPECT_NE(config_hash(a), config_hash(c));
    EXPECT_EQ(fnv1a(""), 14695981039346656037ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Store, RecordsRoundTripExactly) {
    RunRecord r;
    r.k = 3;
    r.params = Eigen::Vector3d(0.1, -1.0 / 3.0, 1e-300);
    r.status = EpisodeStatus::StoppedEarly;
    r.stop_time = 17;
    r.cost = 2.0 / 7.0;
    r.incumbent = kInf;
    r.cum_steps = 12345678901LL;
    const RunKey key{"pt2_pid", Variant::ESBO_TR, 9};
    const auto text = records_csv(key, {r});
    const auto back = parse_records_csv(text);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].params, r.params);
    EXPECT_EQ(back[0].cost, r.cost);
    EXPECT_TRUE(std::isinf(back[0].incumbent));
    EXPECT_EQ(back[0].status, r.status);
    EXPECT_EQ(back[0].cum_steps, r.cum_steps);
    EXPECT_EQ(records_csv(key, back), text);
    EXPECT_EQ(text.substr(0, text.find('\n')), "task,variant,seed,k,theta,status,stop_time,cost,incumbent,cum_steps");
}

TEST(Campaign, CardinalityManifestAndIdempotentRerun) {
    const auto dir = scratch("pair");
    const auto cfg = parse_config(kPairConfig);
    const Store store(dir);
    const auto s1 = run_campaign(cfg, store, 2);
    EXPECT_EQ(s1.total, 10);
    EXPECT_EQ(s1.ran, 10);
    EXPECT_TRUE(s1.failures.empty());
    int csv = 0;
    for (const auto& e : fs::directory_iterator(store.runs_dir())) {
        const auto n = e.path().filename().string();
        csv += n.ends_with(".csv") && n.find(".timing.") == std::string::npos;
    }
    EXPECT_EQ(csv, 10);
    const auto manifest = store.manifest();
    ASSERT_TRUE(manifest.has_value());
    EXPECT_EQ((*manifest)["config_hash"], config_hash(cfg));
    EXPECT_EQ((*manifest)["runs"].size(), 10u);
    for (const auto& r : (*manifest)["runs"]) EXPECT_EQ(r["status"], "ok");

    const auto before = snapshot(dir);
    const auto s2 = run_campaign(cfg, store, 1);
    EXPECT_EQ(s2.ran, 0);
    EXPECT_EQ(s2.skipped, 10);
    EXPECT_EQ(snapshot(dir), before);  // records and manifest byte-identical

    // a partially deleted store is completed again, to the same bytes
    fs::remove(store.meta_path({"pt2_pid", Variant::ESBO_GP, 3}));
    const auto s3 = run_campaign(cfg, store, 1);
    EXPECT_EQ(s3.ran, 1);
    EXPECT_EQ(snapshot(dir), before);

    auto other = cfg;
    other.seeds.push_back(5);
    EXPECT_THROW(run_campaign(other, store, 1), StoreError);
    fs::remove_all(dir);
}

TEST(Campaign, ResultsIndependentOfParallelism) {
    const auto a = scratch("serial");
    const auto b = scratch("parallel");
    auto cfg = parse_config(kPairConfig);
    cfg.seeds = {0, 1, 2};
    run_campaign(cfg, Store(a), 1);
    run_campaign(cfg, Store(b), 3);
    EXPECT_EQ(snapshot(a), snapshot(b));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Campaign, InvariantsAndMetaStored) {
    const auto dir = scratch("meta");
    auto cfg = parse_config(kPairConfig);
    cfg.seeds = {1};
    const Store store(dir);
    run_campaign(cfg, store, 1);
    const auto run = store.read_run({"pt2_pid", Variant::ESBO_GP, 1});
    EXPECT_EQ(run.meta.max_evals, 9);
    EXPECT_EQ(run.meta.step_budget, 6000);
    EXPECT_EQ(run.meta.dim, 3);
    EXPECT_GT(run.meta.invariants.checked, 0);
    EXPECT_EQ(run.meta.invariants.violations(), 0);
    EXPECT_FALSE(run.records.empty());
    EXPECT_TRUE(fs::exists(store.timing_path(run.meta.key)));
    fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli");
    fs::create_directories(dir);
    const auto good = dir / "good.json";
    const auto bad = dir / "bad.json";
    std::ofstream(good) << R"({"tasks": ["boiler_bangbang"], "variants": ["RS", "BO"], "seeds": [0, 1],
                              "budgets": {"K": 5}, "acquisition": {"grid_per_dim": 50, "candidates_per_dim": 50}})";
    std::ofstream(bad) << R"({"tasks": ["boiler_bangbang"], "variants": ["BO"], "seeds": [0], "budgets": {"K": "x"}})";
    EXPECT_EQ(cli("validate " + good.string()), 0);
    EXPECT_EQ(cli("validate " + bad.string()), 2);
    EXPECT_EQ(cli("validate " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(cli("run " + bad.string() + " --store " + (dir / "s").string()), 2);
    EXPECT_EQ(cli("list-tasks"), 0);
    EXPECT_EQ(cli("frobnicate"), 2);
    EXPECT_EQ(cli("report " + (dir / "nothing").string()), 1);
    EXPECT_EQ(cli("run " + good.string() + " -j 1 --store " + (dir / "s").string()), 0);
    EXPECT_EQ(cli("report " + (dir / "s").string() + " --abscissa evals"), 0);
    EXPECT_TRUE(fs::exists(dir / "s" / "report" / "scaled_regret_evals.csv"));
    EXPECT_EQ(cli("report " + (dir / "s").string() + " --abscissa weeks"), 2);
    // a store file where a directory is expected is a runtime failure
    std::ofstream(dir / "blocker") << "x";
    EXPECT_EQ(cli("run " + good.string() + " --store " + (dir / "blocker").string()), 1);
    fs::remove_all(dir);
}

TEST(Determinism, SingleRunReproducesRecordsBytes) {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    auto cfg = parse_config(kPairConfig);
    cfg.variants = {Variant::ESBO_GP};
    cfg.seeds = {4};
    const RunKey key{"pt2_pid", Variant::ESBO_GP, 4};
    execute_run(cfg, key, Store(a));
    execute_run(cfg, key, Store(b));
    EXPECT_EQ(read_file(Store(a).records_path(key)), read_file(Store(b).records_path(key)));
    fs::remove_all(a);
    fs::remove_all(b);
}
