#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "bbm2/experiment.hpp"

using bbm2::experiment::ConfigError;
using bbm2::experiment::ExperimentConfig;
using nlohmann::json;

namespace {

// Flag values land here; only flags given on the command line are merged.
struct Flags {
    std::string config, task, out, barrier_kind, sampler;
    std::uint64_t seed = 0;
    std::size_t replicas = 0, bootstrap = 0, dppp_draws = 0;
    unsigned workers = 1;
    double beta = 0, sigma2 = 0, alpha = 0, horizon = 0, barrier_offset = 0, barrier_below = 0, log_eps = 0;
    double K = 0, A = 0, w_time = 0, internal_step = 0, s0 = 0;
    int grid = 0;
    std::vector<double> checkpoints, lambdas, R, t_grid;
};

void add_common(CLI::App* app, Flags& f, std::map<std::string, CLI::Option*>& opts) {
    opts["config"] = app->add_option("--config", f.config, "JSON config file; flags override its values");
    opts["seed"] = app->add_option("--seed", f.seed, "master seed");
    opts["replicas"] = app->add_option("--replicas", f.replicas, "number of replicas");
    opts["out"] = app->add_option("--out", f.out, "output directory");
    opts["workers"] = app->add_option("--workers", f.workers, "worker threads");
    app->add_flag("--strict", "exit 3 when any replica hits the population cap");
    opts["beta"] = app->add_option("--beta", f.beta);
    opts["sigma2"] = app->add_option("--sigma2", f.sigma2);
    opts["alpha"] = app->add_option("--alpha", f.alpha);
    opts["horizon"] = app->add_option("--horizon", f.horizon);
    opts["internal_step"] = app->add_option("--internal-step", f.internal_step);
    opts["barrier"] = app->add_option("--barrier", f.barrier_kind, "none | linear | first-moment");
    opts["barrier_offset"] = app->add_option("--barrier-offset", f.barrier_offset, "linear barrier offset");
    opts["barrier_below"] = app->add_option("--barrier-below", f.barrier_below, "first-moment level below m(t)");
    opts["log_eps"] = app->add_option("--log-eps", f.log_eps, "first-moment kill threshold (log)");
    opts["checkpoints"] = app->add_option("--checkpoints", f.checkpoints)->delimiter(',');
    opts["grid"] = app->add_option("--grid", f.grid, "phase sweep grid size per axis");
    opts["lambdas"] = app->add_option("--lambda", f.lambdas)->delimiter(',');
    opts["K"] = app->add_option("--K", f.K, "truncation level of D");
    opts["A"] = app->add_option("--A", f.A, "cutoff below the centering");
    opts["R"] = app->add_option("--R", f.R, "window parameters")->delimiter(',');
    opts["t_grid"] = app->add_option("--t-grid", f.t_grid)->delimiter(',');
    opts["bootstrap"] = app->add_option("--bootstrap", f.bootstrap);
    opts["w_time"] = app->add_option("--w-time", f.w_time, "snapshot time of the W mass");
    opts["dppp_draws"] = app->add_option("--dppp-draws", f.dppp_draws);
    opts["sampler"] = app->add_option("--sampler", f.sampler, "conditional | pruned");
    opts["s0"] = app->add_option("--s0", f.s0, "exact-simulation time of the conditional sampler");
}

json flag_overrides(const Flags& f, const std::map<std::string, CLI::Option*>& opts, const CLI::App* app) {
    auto given = [&](const char* k) { return opts.at(k)->count() > 0; };
    json j;
    if (given("seed")) j["seed"] = f.seed;
    if (given("replicas")) j["replicas"] = f.replicas;
    if (given("out")) j["out"] = f.out;
    if (given("workers")) j["workers"] = f.workers;
    if (app->count("--strict") > 0) j["strict"] = true;
    if (given("beta")) j["model"]["beta"] = f.beta;
    if (given("sigma2")) j["model"]["sigma2"] = f.sigma2;
    if (given("alpha")) j["model"]["alpha"] = f.alpha;
    if (given("horizon")) j["sim"]["horizon"] = f.horizon;
    if (given("internal_step")) j["sim"]["internal_step"] = f.internal_step;
    if (given("checkpoints")) j["sim"]["checkpoints"] = f.checkpoints;
    if (given("barrier")) j["sim"]["barrier"]["kind"] = f.barrier_kind;
    if (given("barrier_offset")) j["sim"]["barrier"]["offset"] = f.barrier_offset;
    if (given("barrier_below")) j["sim"]["barrier"]["below"] = f.barrier_below;
    if (given("log_eps")) j["sim"]["barrier"]["log_eps"] = f.log_eps;
    if (given("grid")) j["grid"] = f.grid;
    if (given("lambdas")) j["lambdas"] = f.lambdas;
    if (given("K")) j["K"] = f.K;
    if (given("A")) j["A"] = f.A;
    if (given("R")) j["R"] = f.R;
    if (given("t_grid")) j["t_grid"] = f.t_grid;
    if (given("bootstrap")) j["bootstrap"] = f.bootstrap;
    if (given("w_time")) j["w_time"] = f.w_time;
    if (given("dppp_draws")) j["dppp_draws"] = f.dppp_draws;
    if (given("sampler")) j["sampler"] = f.sampler;
    if (given("s0")) j["s0"] = f.s0;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-type branching Brownian motion experiments"};
    app.require_subcommand(1);
    const std::map<std::string, std::string> tasks{{"phase", "phase-sweep"},
                                                   {"simulate", "simulate"},
                                                   {"martingales", "martingales"},
                                                   {"extremal", "extremal"},
                                                   {"localization", "localization"},
                                                   {"gauss-checks", "gauss-checks"},
                                                   {"fit-correction", "fit-correction"}};
    Flags flags;
    std::map<CLI::App*, std::map<std::string, CLI::Option*>> options;
    std::map<CLI::App*, std::string> task_of;
    for (const auto& [cmd, task] : tasks) {
        auto* sub = app.add_subcommand(cmd, "run the " + task + " task");
        add_common(sub, flags, options[sub]);
        task_of[sub] = task;
    }
    auto* run = app.add_subcommand("run", "run the task named by --task or the config file");
    add_common(run, flags, options[run]);
    auto* task_opt = run->add_option("--task", flags.task);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        ExperimentConfig cfg;
        if (!flags.config.empty()) {
            json file;
            try {
                file = json::parse(bbm2::io::read_file(flags.config));
            } catch (const std::exception& e) {
                throw ConfigError("cannot read config " + flags.config + ": " + e.what());
            }
            cfg.merge(file);
        }
        cfg.merge(flag_overrides(flags, options.at(sub), sub));
        if (sub == run) {
            if (task_opt->count() > 0) cfg.task = flags.task == "phase" ? "phase-sweep" : flags.task;
        } else {
            cfg.task = task_of.at(sub);
        }
        const auto res = bbm2::experiment::run(cfg);
        for (const auto& a : res.artifacts) std::cout << (std::filesystem::path(cfg.out) / a).string() << '\n';
        if (!res.message.empty()) std::cerr << "warning: " << res.message << '\n';
        return res.status;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const bbm2::InvalidParameter& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
