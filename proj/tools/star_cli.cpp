// Command-line front end: train, evaluate, verify-bounds, audit-refinement, plot.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "star/config.hpp"
#include "star/errors.hpp"
#include "star/io.hpp"
#include "star/star_loop.hpp"
#include "star/theory.hpp"

namespace fs = std::filesystem;
using namespace star;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

// Relative paths land under $STAR_RUN_DIR when it is set.
fs::path resolve_out(const std::string& path) {
    const fs::path p(path);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("STAR_RUN_DIR"); root && *root) return fs::path(root) / p;
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

RunConfig run_config(const fs::path& run_dir) { return parse_config((run_dir / "config.txt").string()); }

struct TrainArgs {
    std::string config;
    std::string out = "runs/default";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> total_steps;
    std::optional<std::string> env;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig::defaults() : parse_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.total_steps) cfg.total_steps = *a.total_steps;
    try {
        if (a.env) cfg.env = env_variant_from_string(*a.env);
        cfg.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("line 0: ") + err.what());
    }

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    write_text(dir / "config.txt", config_to_string(cfg));

    Trainer trainer(cfg);
    TrainHooks hooks;
    hooks.on_eval = [&](const Trainer&, const EvalPoint& p, const EvalResult&) {
        if (a.quiet) return;
        std::cout << "step " << p.step << "  episode " << p.episode << "  success " << p.success_rate
                  << "  return " << std::fixed << std::setprecision(2) << p.mean_return << std::defaultfloat
                  << "  goals " << p.goal_count << "  eps " << std::setprecision(4) << p.epsilon
                  << std::setprecision(6) << "  " << std::fixed << std::setprecision(1) << p.wall_seconds << "s"
                  << std::defaultfloat << std::setprecision(6) << std::endl;
    };
    hooks.on_episode = [&](const Trainer& tr, const EpisodeTrace& ep) {
        if (ep.generation_after != ep.generation_before)
            save_partition((dir / ("partition_gen" + std::to_string(ep.generation_after) + ".json")).string(),
                           tr.partition());
    };
    const TrainResult res = train_run(trainer, hooks);

    metrics_csv(res.metrics, (dir / "metrics.csv").string());
    {
        std::ofstream t(dir / "timing.csv");
        write_timing_csv(t, res.metrics);
        std::ofstream r(dir / "refinements.jsonl");
        write_refinements_jsonl(r, trainer.refinement_log());
    }
    save_snapshot(dir.string(), trainer);
    heatmap_svg(trainer.partition(), evaluate(trainer).visits, trainer.spec().walls,
                (dir / ("heatmap_step" + std::to_string(res.steps) + ".svg")).string());
    std::cout << "run " << dir.string() << "  steps " << res.steps << "  first_success_step "
              << (res.first_success_step ? std::to_string(*res.first_success_step) : "none") << std::endl;
    return kExitOk;
}

Trainer restored_trainer(const fs::path& dir) {
    const RunConfig cfg = run_config(dir);
    Snapshot snap = load_snapshot(dir.string(), cfg);
    Trainer t(cfg);
    t.load_state(snap.partition, std::move(snap.qtable), std::move(snap.controller_actor),
                 std::move(snap.tutor_actor));
    return t;
}

int cmd_evaluate(const std::string& run) {
    const Trainer t = restored_trainer(resolve_out(run));
    const EvalResult ev = evaluate(t);
    std::cout << "success_rate " << ev.success_rate << "\nmean_return " << ev.mean_return << "\ngoals "
              << t.partition().size() << "\ngeneration " << t.partition().generation() << std::endl;
    return kExitOk;
}

int cmd_plot(const std::string& run, const std::string& out) {
    const fs::path dir = resolve_out(run);
    const Trainer t = restored_trainer(dir);
    const EvalResult ev = evaluate(t);
    const fs::path path = out.empty() ? dir / "heatmap.svg" : resolve_out(out);
    heatmap_svg(t.partition(), ev.visits, t.spec().walls, path.string());
    std::cout << "wrote " << path.string() << std::endl;
    return kExitOk;
}

int cmd_verify_bounds(const std::string& out) {
    std::vector<theory::BoundCheck> rows;
    for (const auto& c : theory::toy_suite()) rows.push_back(theory::check_bounds(c));
    std::ostringstream csv;
    write_bounds_csv(csv, rows);
    if (out.empty()) std::cout << csv.str();
    else write_text(resolve_out(out), csv.str());
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.audit.passed() && r.holds();
    if (!ok) std::cerr << "bound check failed" << std::endl;
    return ok ? kExitOk : kExitAcceptance;
}

int cmd_audit_refinement(const std::string& out, double tau1, double tau2, int max_rounds) {
    ReachConfig cfg;
    cfg.tau1 = tau1;
    cfg.tau2 = tau2;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("line 0: ") + err.what());
    }
    const theory::ChainExperiment ex = theory::chain_refinement_experiment(cfg, max_rounds);
    const std::string json = refinement_report_to_json(ex.report);
    if (out.empty()) std::cout << json << std::endl;
    else write_text(resolve_out(out), json + "\n");
    return ex.report.passed() ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"STAR: hierarchical RL with reachability-aware goal abstractions"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train an agent and write a run directory");
    t->add_option("--config", train.config, "Config file (section.key = value)")->check(CLI::ExistingFile);
    t->add_option("--out", train.out, "Run directory (relative paths go under $STAR_RUN_DIR)");
    t->add_option("--seed", train.seed, "Override run.seed");
    t->add_option("--total-steps", train.total_steps, "Override run.total_steps");
    t->add_option("--env", train.env, "Override env.variant (PointMaze | PointMazeKey)");
    t->add_flag("--quiet", train.quiet, "No per-evaluation progress lines");

    std::string run;
    auto* e = app.add_subcommand("evaluate", "Greedy evaluation of a saved run");
    e->add_option("--run", run, "Run directory")->required();

    std::string out;
    auto* vb = app.add_subcommand("verify-bounds", "Check the value-gap bounds on the toy MDPs");
    vb->add_option("--out", out, "CSV path (stdout when omitted)");

    double tau1 = 1.0, tau2 = 0.01;
    int rounds = 20;
    auto* ar = app.add_subcommand("audit-refinement", "Refinement audit on the drifting chain");
    ar->add_option("--out", out, "JSON path (stdout when omitted)");
    ar->add_option("--tau1", tau1, "Reachability threshold")->capture_default_str();
    ar->add_option("--tau2", tau2, "Non-reachability threshold")->capture_default_str();
    ar->add_option("--max-rounds", rounds, "Refinement rounds before giving up")->capture_default_str();

    auto* pl = app.add_subcommand("plot", "Visit heatmap of a saved run as SVG");
    pl->add_option("--run", run, "Run directory")->required();
    pl->add_option("--out", out, "SVG path (run_dir/heatmap.svg when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*t) return cmd_train(train);
        if (*e) return cmd_evaluate(run);
        if (*vb) return cmd_verify_bounds(out);
        if (*ar) return cmd_audit_refinement(out, tau1, tau2, rounds);
        if (*pl) return cmd_plot(run, out);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << std::endl;
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << std::endl;
        return kExitRuntime;
    }
    return kExitOk;
}
