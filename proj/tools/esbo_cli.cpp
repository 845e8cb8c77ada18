// esbo command line: run campaigns, report metrics, list tasks, validate configs.
// Exit codes: 0 ok, 1 runtime failure, 2 config or usage error.

#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "esbo/bench/campaign.hpp"
#include "esbo/bench/config.hpp"
#include "esbo/bench/report.hpp"
#include "esbo/bench/store.hpp"
#include "esbo/tasks/registry.hpp"

namespace {

using namespace esbo;
using namespace esbo::bench;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kConfig = 2;

int cmd_validate(const std::string& file) {
    const CampaignConfig c = load_config(file);
    const auto runs = campaign_runs(c);
    std::cout << "ok: " << c.name << ", " << c.tasks.size() << " tasks x " << c.variants.size() << " variants x "
              << c.seeds.size() << " seeds = " << runs.size() << " runs, config hash " << config_hash(c) << '\n';
    for (const auto& id : c.tasks) {
        const auto task = c.make(id);
        const auto rc = c.run_config(*task, c.variants.front(), 0);
        std::cout << "  " << id << ": d=" << task->dim() << " k_init=" << rc.k_init << " K=" << rc.max_evals
                  << " T_budget=" << rc.step_budget << '\n';
    }
    return kOk;
}

int cmd_run(const std::string& file, std::string store_dir, int jobs, bool report) {
    const CampaignConfig c = load_config(file);
    if (store_dir.empty()) store_dir = c.store;
    if (store_dir.empty()) store_dir = fs::path(file).stem().string() + "_results";
    const Store store(store_dir);
    if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::cerr << "campaign " << c.name << " -> " << store.root().string() << " (" << jobs << " jobs)\n";
    const auto sum = run_campaign(c, store, jobs, [](const std::string& line) { std::cerr << line << '\n'; });
    std::cout << "runs: " << sum.total << " total, " << sum.skipped << " already stored, " << sum.ran << " ran ("
              << sum.aborted << " aborted), " << sum.failures.size() << " failed\n";
    for (const auto& [k, msg] : sum.failures) std::cout << "failed " << k.stem() << ": " << msg << '\n';
    if (report) {
        const auto runs = store.read_all();
        for (Abscissa a : {Abscissa::Evaluations, Abscissa::Steps}) std::cout << write_report(store, analyze(runs, a));
    }
    return sum.failures.empty() ? kOk : kRuntime;
}

int cmd_report(const std::string& dir, const std::string& abscissa) {
    const Store store(dir);
    if (!fs::exists(store.root())) {
        std::cerr << "error: no store at " << dir << '\n';
        return kRuntime;
    }
    const auto runs = store.read_all();
    if (runs.empty()) {
        std::cerr << "error: store " << dir << " has no completed runs\n";
        return kRuntime;
    }
    const Abscissa a = abscissa == "evals" ? Abscissa::Evaluations : Abscissa::Steps;
    std::cout << write_report(store, analyze(runs, a));
    std::cout << "wrote";
    for (const auto& f : report_files(a)) std::cout << ' ' << (store.report_dir() / f).string();
    std::cout << '\n';
    return kOk;
}

int cmd_list_tasks() {
    std::printf("%-16s %2s  %-14s %6s %6s  %-5s  %s\n", "id", "d", "objective", "T_max", "dt", "crash", "controller / plant");
    for (const auto& id : task_ids()) {
        const auto t = make_task(id);
        const auto& s = t->spec();
        std::printf("%-16s %2d  %-14s %6d %6g  %-5s  %s / %s\n", id.c_str(), t->dim(),
                    std::string(to_string(s.objective)).c_str(), s.max_steps, s.dt, s.can_crash ? "yes" : "no",
                    s.controller.c_str(), s.plant.c_str());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Early-stopping Bayesian optimization for controller tuning"};
    app.require_subcommand(1);

    std::string config_file, store_dir, abscissa = "steps";
    int jobs = 0;
    bool with_report = false;

    auto* run = app.add_subcommand("run", "run (or resume) a campaign");
    run->add_option("config", config_file, "campaign config (JSON)")->required();
    run->add_option("--store", store_dir, "result directory (default: config \"store\" or <config>_results)");
    run->add_option("-j,--jobs", jobs, "parallel runs (default: number of processors)");
    run->add_flag("--report", with_report, "write reports for both abscissae afterwards");

    auto* report = app.add_subcommand("report", "write metric files for a result store");
    report->add_option("store", store_dir, "result directory")->required();
    report->add_option("--abscissa", abscissa, "evals or steps")->check(CLI::IsMember({"evals", "steps"}));

    app.add_subcommand("list-tasks", "list the benchmark tasks");

    auto* validate = app.add_subcommand("validate", "check a campaign config");
    validate->add_option("config", config_file, "campaign config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*run) return cmd_run(config_file, store_dir, jobs, with_report);
        if (*report) return cmd_report(store_dir, abscissa);
        if (*validate) return cmd_validate(config_file);
        return cmd_list_tasks();
    } catch (const esbo::bench::ConfigError& e) {
        std::cerr << "config error at " << e.what() << '\n';
        return kConfig;
    } catch (const esbo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
