#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "star/config.hpp"
#include "star/errors.hpp"
#include "star/io.hpp"

using namespace star;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("star_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string error_of(const std::string& text) {
    try {
        parse_config_string(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

Partition sample_partition() {
    Partition p = Partition::single(Box({-4, -4}, {20, 20}));
    p = p.replace(GoalId{0}, {Box({-4, -4}, {8, 20}), Box({8, -4}, {20, 20})});
    return p.replace(GoalId{2}, {Box({8, -4}, {20, 8}), Box({8, 8}, {20, 20})});
}

}  // namespace

TEST_CASE("empty config yields the published defaults") {
    const RunConfig c = parse_config_string("");
    CHECK(c.k == 30);
    CHECK(c.l == 10);
    CHECK(c.commander.epsilon0 == 0.99);
    CHECK(c.commander.epsilon_min == 0.01);
    CHECK(c.commander.epsilon_decay == 1e-6);
    CHECK(c.reach.tau1 == 0.7);
    CHECK(c.reach.tau2 == 0.01);
    CHECK(c.reach.min_volume_ratio == 0.125);
    CHECK(c.controller.buffer_capacity == 200000);
    CHECK(c.tutor.buffer_capacity == 200000);
    CHECK(c.fm.buffer_capacity == 100000);
    CHECK(c.controller.batch == 128);
    CHECK(c.tutor.batch == 128);
    CHECK(c.fm.batch == 64);
    CHECK(c.fm.epochs == 5);
    CHECK(c.fm.lr == 0.001);
    CHECK(c.fm.hidden == std::vector<int>{32, 32});
    CHECK(c.max_timesteps == 500);
    CHECK(c.eval_episodes == 5);
}

TEST_CASE("config errors carry line numbers") {
    CHECK(error_of("# comment\nrun.k = 25\nrun.l = 10\n").find("line 3") == 0);
    CHECK(error_of("\n\nbogus.key = 1\n").find("line 3") == 0);
    CHECK(error_of("run.k = thirty\n").find("line 1") == 0);
    CHECK(error_of("run.k = 30\nrun.k = 30\n").find("line 2") == 0);
    CHECK(error_of("run.k\n").find("line 1") == 0);
    CHECK(error_of("reach.tau1 = 0.005\n").find("line") == 0);
    CHECK(error_of("run.terminate_on_success = maybe\n").find("line 1") == 0);
    CHECK_THROWS_AS(parse_config("/nonexistent/star.cfg"), ConfigError);
}

TEST_CASE("config overrides and round trip") {
    const RunConfig c = parse_config_string("reach.tau1 = 0.8   # stricter\nenv.variant = point_maze_key\n"
                                            "controller.hidden = 16, 8\nrun.k = 20\nrun.l = 5\n");
    CHECK(c.reach.tau1 == 0.8);
    CHECK(c.env == EnvVariant::PointMazeKey);
    CHECK(c.controller.hidden == std::vector<int>{16, 8});
    const std::string text = config_to_string(c);
    CHECK(config_to_string(parse_config_string(text)) == text);
    CHECK(config_keys().size() == static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST_CASE("partition json round trip") {
    const Partition p = sample_partition();
    std::stringstream ss;
    write_partition_json(ss, p);
    const Partition back = read_partition_json(ss);
    CHECK(back == p);
    CHECK(back.generation() == 2);
    CHECK(back.next_id() == p.next_id());

    std::stringstream truncated(ss.str().substr(0, ss.str().size() / 2));
    CHECK_THROWS_AS(read_partition_json(truncated), FormatError);
    std::string wrong = ss.str();
    wrong.replace(wrong.find("\"version\": 1"), 12, "\"version\": 9");
    std::stringstream wv(wrong);
    CHECK_THROWS_AS(read_partition_json(wv), FormatError);
    std::stringstream overlap(
        R"({"format":"star-partition","version":1,"generation":0,"next_id":2,"bounds":{"lower":[0],"upper":[2]},)"
        R"("goals":[{"id":0,"lower":[0],"upper":[1.5]},{"id":1,"lower":[1],"upper":[2]}]})");
    CHECK_THROWS_AS(read_partition_json(overlap), FormatError);
}

TEST_CASE("commander snapshot round trip leaves no partial state on failure") {
    const std::vector<GoalId> goals{GoalId{1}, GoalId{3}, GoalId{4}};
    QTable q(goals, CommanderConfig{});
    q.set(GoalId{1}, GoalId{4}, 0.123456789012345678);
    q.set(GoalId{4}, GoalId{3}, -2.5);
    q.add_reach_edge(GoalId{1}, GoalId{3});
    q.set_epsilon(0.4321);
    const fs::path dir = scratch("qtable");
    save_qtable((dir / "q.csv").string(), (dir / "c.json").string(), q);
    const QTable back = load_qtable((dir / "q.csv").string(), (dir / "c.json").string(), goals, CommanderConfig{});
    CHECK(back.values() == q.values());
    CHECK(back.epsilon() == q.epsilon());
    CHECK(back.reach_graph() == q.reach_graph());

    QTable target = back;
    std::stringstream bad(R"({"format":"star-commander","version":1,"epsilon":0.2,"reach_edges":[[1,99]]})");
    CHECK_THROWS_AS(read_commander_json(bad, target), FormatError);
    CHECK(target.epsilon() == back.epsilon());
    CHECK(target.reach_graph() == back.reach_graph());
}

TEST_CASE("network snapshots are bitwise identical after reload") {
    const nn::DenseNet net = nn::init_net(3, {5}, 2, 7);
    const fs::path dir = scratch("net");
    nn::save_net((dir / "n.bin").string(), net);
    CHECK(nn::load_net((dir / "n.bin").string()) == net);
    {
        std::ofstream f(dir / "bad.bin", std::ios::binary);
        f << "not a network";
    }
    CHECK_THROWS_AS(nn::load_net((dir / "bad.bin").string()), FormatError);
}

TEST_CASE("run snapshots restore a trainer") {
    RunConfig cfg;
    cfg.controller.hidden = {8};
    cfg.tutor.hidden = {8};
    cfg.warmup_steps = 0;
    Trainer t(cfg);
    t.set_partition(sample_partition());
    t.qtable().set(GoalId{1}, GoalId{3}, 0.75);
    const fs::path dir = scratch("snapshot");
    save_snapshot(dir.string(), t);
    CHECK(fs::exists(dir / "partition_gen2.json"));
    CHECK(fs::exists(dir / "nets" / "controller_actor.bin"));
    CHECK(fs::exists(dir / "nets" / "forward_model.bin"));
    const Snapshot s = load_snapshot(dir.string(), cfg);
    CHECK(s.partition == t.partition());
    CHECK(s.qtable.values() == t.qtable().values());
    CHECK(s.controller_actor == t.controller().actor);
    CHECK(s.tutor_actor == t.tutor().actor);

    fs::remove(dir / "qtable.csv");
    CHECK_THROWS_AS(load_snapshot(dir.string(), cfg), FormatError);
}

TEST_CASE("metrics csv rows and idempotence") {
    Metrics m;
    for (int i = 0; i < 3; ++i) {
        EvalPoint p;
        p.step = 1000 * (i + 1);
        p.episode = i;
        p.success_rate = 0.5 * i;
        p.mean_return = -1.0 / 3.0;
        p.wall_seconds = 123.0 + i;
        m.evals.push_back(p);
    }
    const fs::path dir = scratch("metrics");
    const std::string path = (dir / "m.csv").string();
    metrics_csv(m, path);
    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string first = slurp(path);
    CHECK(std::count(first.begin(), first.end(), '\n') == 4);
    CHECK(first.find("123") == std::string::npos);
    metrics_csv(m, path);
    CHECK(slurp(path) == first);
    CHECK_THROWS(metrics_csv(m, (dir / "missing" / "m.csv").string()));
}

TEST_CASE("heatmap has one rectangle per goal") {
    const Partition p = sample_partition();
    const std::vector<Box> walls{Box({-12, -12}, {-4, -4}), Box({0, 4}, {8, 12})};
    const std::regex goal_rect(R"re(class="goal"[^>]*fill-opacity="([0-9.eE+-]+)")re");
    auto opacities = [&](const std::map<GoalId, int>& visits) {
        std::ostringstream os;
        write_heatmap_svg(os, p, visits, walls);
        const std::string svg = os.str();
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(svg.find("</svg>") != std::string::npos);
        std::vector<double> out;
        for (auto it = std::sregex_iterator(svg.begin(), svg.end(), goal_rect); it != std::sregex_iterator(); ++it)
            out.push_back(std::stod((*it)[1]));
        return out;
    };
    const auto none = opacities({});
    CHECK(none.size() == p.size());
    for (double o : none) CHECK(o == doctest::Approx(0.05));
    const auto one = opacities({{GoalId{3}, 7}});
    CHECK(one.size() == p.size());
    CHECK(std::count_if(one.begin(), one.end(), [](double o) { return o > 0.9; }) == 1);
}
