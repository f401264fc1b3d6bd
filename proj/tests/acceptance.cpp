// Acceptance checks: one PASS/FAIL line per criterion, exit status 3 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "star/agents.hpp"
#include "star/config.hpp"
#include "star/io.hpp"
#include "star/reachability.hpp"
#include "star/star_loop.hpp"
#include "star/theory.hpp"

using namespace star;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ------------------------------------------------------------------ 1

Outcome interval_soundness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    long outside = 0, checked = 0;
    for (int n = 0; n < 1000; ++n) {
        const int in = 1 + static_cast<int>(rng() % 4), out = 1 + static_cast<int>(rng() % 4);
        const nn::DenseNet net = oracle::random_net(rng, 3, 32, in, out);
        const Box box = oracle::random_box(rng, static_cast<std::size_t>(in));
        const Box img = propagate_net(net, box);
        for (int s = 0; s < 1000; ++s) {
            const oracle::Vector y = oracle::eval_net(net, oracle::uniform_in(box, rng));
            // Slack of a few ulps for the different summation order.
            double scale = 1.0;
            for (double v : y) scale = std::max(scale, std::abs(v));
            if (!oracle::inside(img, y, 1e-12 * scale)) ++outside;
            ++checked;
        }
    }
    const double secs = seconds_since(t0);
    return {outside == 0 && secs < 60.0,
            std::to_string(checked) + " points, " + std::to_string(outside) + " outside, " +
                std::to_string(secs) + " s"};
}

// ------------------------------------------------------------------ 2

Outcome gradient_exactness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    long params = 0, bad = 0;
    double worst = 0.0;
    for (int n = 0; n < 200; ++n) {
        const int in = 1 + static_cast<int>(rng() % 4), out = 1 + static_cast<int>(rng() % 3);
        nn::DenseNet net = oracle::random_net(rng, 3, 16, in, out);
        std::vector<oracle::Vector> xs, ys;
        std::vector<nn::Vec> bx, by;
        for (int i = 0; i < 4; ++i) {
            xs.push_back(oracle::uniform_in(Box(star::Point(in, -2.0), star::Point(in, 2.0)), rng));
            ys.push_back(oracle::uniform_in(Box(star::Point(out, -1.0), star::Point(out, 1.0)), rng));
            bx.push_back(Eigen::Map<const nn::Vec>(xs.back().data(), in));
            by.push_back(Eigen::Map<const nn::Vec>(ys.back().data(), out));
        }
        const nn::MseResult r = nn::grad_mse(net, bx, by);
        const double h = 1e-6;
        auto check = [&](double& p, double analytic) {
            const double saved = p;
            p = saved + h;
            const double up = oracle::mse(net, xs, ys);
            p = saved - h;
            const double down = oracle::mse(net, xs, ys);
            p = saved;
            const double numeric = (up - down) / (2 * h);
            const double err = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3});
            worst = std::max(worst, err);
            if (err > 1e-4) ++bad;
            ++params;
        };
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            auto& L = net.layers()[l];
            for (int i = 0; i < L.weight.size(); ++i) check(L.weight.data()[i], r.grads.weight[l].data()[i]);
            for (int i = 0; i < L.bias.size(); ++i) check(L.bias.data()[i], r.grads.bias[l].data()[i]);
        }
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld parameters, %ld over 1e-4, worst %.2e, %.1f s", params, bad, worst, secs);
    return {bad == 0 && secs < 60.0, buf};
}

// ------------------------------------------------------------------ 3

Outcome partition_integrity() {
    std::mt19937_64 rng(303);
    long failures = 0;
    for (int seq = 0; seq < 1000; ++seq) {
        const std::size_t dim = 1 + rng() % 3;
        const Box bounds = oracle::random_box(rng, dim, -10.0, 10.0);
        Partition p = Partition::single(bounds);
        const int steps = 1 + static_cast<int>(rng() % 30);
        for (int s = 0; s < steps; ++s) {
            const auto ids = p.ids();
            const GoalId g = ids[rng() % ids.size()];
            const Box b = p.box(g);
            const std::size_t d = rng() % dim;
            const double at = b.lower(d) + b.width(d) * std::uniform_real_distribution<double>(0.05, 0.95)(rng);
            if (!(b.lower(d) < at && at < b.upper(d))) continue;
            const auto [l, r] = split_box(b, d, at);
            std::vector<Box> pieces{l, r};
            if (rng() % 2) {
                // Occasionally split one half again.
                const std::size_t d2 = rng() % dim;
                const double at2 = r.lower(d2) + 0.5 * r.width(d2);
                if (r.lower(d2) < at2 && at2 < r.upper(d2)) {
                    const auto [a, c] = split_box(r, d2, at2);
                    pieces = {l, a, c};
                }
            }
            p = p.replace(g, pieces);
        }
        std::vector<Box> boxes;
        double total = 0.0;
        for (const auto& [id, b] : p.goals()) {
            boxes.push_back(b);
            total += oracle::volume(b);
        }
        bool ok = std::abs(total - oracle::volume(bounds)) <= 1e-9 * oracle::volume(bounds);
        for (std::size_t i = 0; i < boxes.size() && ok; ++i)
            for (std::size_t j = i + 1; j < boxes.size() && ok; ++j) ok = oracle::overlap(boxes[i], boxes[j]) == 0.0;
        if (!ok) ++failures;
    }
    return {failures == 0, "1000 sequences, " + std::to_string(failures) + " violations"};
}

// ------------------------------------------------------------------ 4

ForwardModel shift_model(const std::vector<double>& shift) {
    const int d = static_cast<int>(shift.size());
    nn::DenseLayer layer;
    layer.weight = nn::Mat::Zero(d, 3 * d);
    layer.bias.resize(d);
    for (int i = 0; i < d; ++i) {
        layer.weight(i, i) = 1.0;
        layer.bias(i) = shift[static_cast<std::size_t>(i)];
    }
    return ForwardModel::from_net(nn::DenseNet({layer}), 1, shift.size());
}

// Fraction of a dense grid over `piece` that lands in `target` under s + shift.
double grid_fraction(const Box& piece, const std::vector<double>& shift, const Box& target) {
    const int per_axis = piece.dim() == 1 ? 10000 : 100;
    std::vector<int> idx(piece.dim(), 0);
    long in = 0, total = 0;
    while (true) {
        oracle::Vector s(piece.dim());
        for (std::size_t i = 0; i < piece.dim(); ++i)
            s[i] = piece.lower(i) + piece.width(i) * (idx[i] + 0.5) / per_axis + shift[i];
        if (oracle::inside(target, s)) ++in;
        ++total;
        std::size_t a = 0;
        while (a < idx.size() && ++idx[a] == per_axis) idx[a++] = 0;
        if (a == idx.size()) break;
    }
    return static_cast<double>(in) / static_cast<double>(total);
}

struct AffineCase {
    Box source, target;
    std::vector<double> shift;
};

Outcome refinement_oracle() {
    std::vector<AffineCase> cases = {
        {Box({0}, {2}), Box({2}, {3}), {1.0}},
        {Box({0}, {4}), Box({3}, {6}), {1.0}},
        {Box({0}, {8}), Box({7}, {20}), {1.0}},
        {Box({0, 0}, {4, 4}), Box({3, -10}, {10, 10}), {1.0, 0.0}},
        {Box({0, 0}, {4, 4}), Box({3, 3}, {10, 10}), {1.0, 1.0}},
    };
    // Random cases whose target faces fall on the finest split grid: eighths
    // in 1D; quarters along x and halves along y for a square in 2D.
    std::mt19937_64 rng(404);
    for (int n = 0; n < 200; ++n) {
        const std::size_t dim = 1 + rng() % 2;
        const double w = std::ldexp(1.0, static_cast<int>(rng() % 4));
        Point lo(dim), hi(dim), tlo(dim), thi(dim);
        std::vector<double> shift(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            lo[i] = static_cast<double>(static_cast<int>(rng() % 9) - 4);
            hi[i] = lo[i] + w;
            shift[i] = static_cast<double>(static_cast<int>(rng() % 5) - 2) * w / 8.0;
            const int cells = dim == 1 ? 8 : (i == 0 ? 4 : 2);
            const double step = w / cells;
            const int a = static_cast<int>(rng() % (cells + 1));
            const int b = a + 1 + static_cast<int>(rng() % (cells + 1));
            tlo[i] = lo[i] + shift[i] + step * a - (a == 0 ? 5.0 * w : 0.0);
            thi[i] = lo[i] + shift[i] + step * b;
        }
        cases.push_back({Box(lo, hi), Box(tlo, thi), shift});
    }

    const ReachConfig cfg;
    long pieces = 0, bad = 0;
    double worst_reach = 1.0, worst_unreach = 0.0;
    for (const AffineCase& c : cases) {
        const SplitOutcome out = refine_goal(shift_model(c.shift), c.source, c.target, cfg);
        for (const Box& p : out.reachable_pieces) {
            const double f = grid_fraction(p, c.shift, c.target);
            worst_reach = std::min(worst_reach, f);
            if (f < cfg.tau1) ++bad;
            ++pieces;
        }
        for (const Box& p : out.unreachable_pieces) {
            const double f = grid_fraction(p, c.shift, c.target);
            worst_unreach = std::max(worst_unreach, f);
            if (f > cfg.tau2 + 0.05) ++bad;
            ++pieces;
        }
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu cases, %ld pieces, %ld mislabelled, min reachable %.4f, max unreachable %.4f",
                  cases.size(), pieces, bad, worst_reach, worst_unreach);
    return {bad == 0, buf};
}

// ------------------------------------------------------------------ 5, 6

Outcome value_bounds() {
    bool ok = true;
    std::string detail;
    for (const auto& c : theory::toy_suite()) {
        const theory::BoundCheck b = theory::check_bounds(c);
        ok = ok && b.audit.passed() && b.gap <= b.eq1 && b.gap <= b.eq2;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s%s gap %.4g eq1 %.4g eq2 %.4g audit %s", detail.empty() ? "" : "; ",
                      b.name.c_str(), b.gap, b.eq1, b.eq2, b.audit.passed() ? "ok" : "failed");
        detail += buf;
    }
    return {ok, detail};
}

Outcome refinement_audit_chain() {
    ReachConfig cfg;
    cfg.tau1 = 1.0;
    const theory::ChainExperiment ex = theory::chain_refinement_experiment(cfg);
    std::string cov;
    for (int c : ex.report.coverage) cov += (cov.empty() ? "" : ",") + std::to_string(c);
    const bool ok = ex.report.passed() && ex.report.coverage_monotone && ex.report.refinements <= 6;
    return {ok, std::to_string(ex.report.refinements) + " refinements, coverage [" + cov + "], final audit " +
                    (ex.report.final_audit.passed() ? "passes" : "fails")};
}

// ------------------------------------------------------------------ 7

Outcome q_transfer() {
    std::mt19937_64 rng(707);
    long tables = 0, bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng() % 49;
        std::vector<GoalId> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back(GoalId{i * 2 + rng() % 2});
        QTable q(ids, CommanderConfig{});
        std::normal_distribution<double> v(0.0, 1.0);
        for (GoalId a : ids)
            for (GoalId b : ids) q.set(a, b, v(rng));
        std::uint64_t next = ids.back().value + 1;
        for (int round = 0; round < 3; ++round) {
            const std::vector<GoalId> goals = q.goals();
            const GoalId refined = goals[rng() % goals.size()];
            const GoalId succ = goals[rng() % goals.size()];
            const std::size_t nr = rng() % 3, no = (nr == 0 ? 1 : 0) + rng() % 3;
            std::vector<GoalId> reach, other;
            for (std::size_t i = 0; i < nr; ++i) reach.push_back(GoalId{next++});
            for (std::size_t i = 0; i < no; ++i) other.push_back(GoalId{next++});
            const QTable before = q;
            q_table_transfer(q, refined, reach, other, succ);

            double cmax = -INFINITY, cmin = INFINITY;
            for (GoalId g : goals) {
                cmax = std::max(cmax, before.q(g, succ));
                cmin = std::min(cmin, before.q(g, succ));
            }
            const std::set<GoalId> rs(reach.begin(), reach.end()), os(other.begin(), other.end());
            auto piece = [&](GoalId g) { return rs.count(g) || os.count(g); };
            auto parent = [&](GoalId g) { return piece(g) ? refined : g; };
            std::size_t expected_entries = 0;
            for (GoalId s : q.goals())
                for (GoalId t : q.goals()) {
                    ++expected_entries;
                    double want = before.q(parent(s), parent(t));
                    if (piece(s) && t == succ && succ != refined) want = rs.count(s) ? cmax : cmin;
                    // Bit-exact: values are copies, never recomputed.
                    if (!(q.has(s) && q.has(t)) || std::memcmp(&want, &q.values().at({s, t}), sizeof(double)) != 0)
                        ++bad;
                }
            if (q.entry_count() != expected_entries || q.has(refined)) ++bad;
            ++tables;
        }
    }
    return {bad == 0, std::to_string(tables) + " transfers, " + std::to_string(bad) + " mismatches"};
}

// ------------------------------------------------------------------ 8

Outcome hyperparameters() {
    const RunConfig c = parse_config_string("");
    const bool ok = c.k == 30 && c.l == 10 && c.commander.epsilon0 == 0.99 && c.commander.epsilon_min == 0.01 &&
                    c.commander.epsilon_decay == 1e-6 && c.reach.tau1 == 0.7 && c.reach.tau2 == 0.01 &&
                    c.reach.min_volume_ratio == 0.125 && c.controller.buffer_capacity == 200000 &&
                    c.tutor.buffer_capacity == 200000 && c.fm.buffer_capacity == 100000 &&
                    c.controller.batch == 128 && c.tutor.batch == 128 && c.fm.batch == 64 && c.fm.epochs == 5;
    return {ok, "k=30 l=10 eps0=0.99 eps_min=0.01 decay=1e-6 tau1=0.7 tau2=0.01 split=0.125 "
                "buffers=200000/100000 batch=128/64 epochs=5"};
}

// ------------------------------------------------------------------ 9, 10

struct RunSummary {
    TrainResult result;
    double seconds = 0.0;
};

RunSummary train(RunConfig cfg) {
    const auto t0 = Clock::now();
    Trainer t(std::move(cfg));
    RunSummary s;
    s.result = train_run(t);
    s.seconds = seconds_since(t0);
    return s;
}

std::string describe(const RunSummary& s) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "first success %s, %lld steps, %.0f s",
                  s.result.first_success_step ? std::to_string(*s.result.first_success_step).c_str() : "none",
                  static_cast<long long>(s.result.steps), s.seconds);
    return buf;
}

Outcome end_to_end() {
    const std::string dir = STAR_CONFIG_DIR;
    std::string detail;
    int reached = 0;
    double slowest = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        RunConfig cfg = parse_config(dir + "/point_maze.cfg");
        cfg.seed = seed;
        cfg.total_steps = 500000;
        cfg.early_stop_success = 0.9;
        const RunSummary s = train(cfg);
        if (s.result.first_success_step && *s.result.first_success_step <= 500000) ++reached;
        slowest = std::max(slowest, s.seconds);
        detail += "PointMaze seed " + std::to_string(seed) + ": " + describe(s) + "; ";
    }
    RunConfig key = parse_config(dir + "/point_maze_key.cfg");
    key.total_steps = 1000000;
    key.early_stop_success = 0.6;
    const RunSummary k = train(key);
    const bool key_ok = k.result.first_success_step && *k.result.first_success_step <= 1000000;
    detail += "PointMazeKey: " + describe(k);
    return {reached >= 2 && slowest <= 1800.0 && key_ok, detail};
}

Outcome determinism() {
    RunConfig cfg;
    cfg.total_steps = 20000;
    auto once = [&] {
        Trainer t(cfg);
        std::ostringstream os;
        write_metrics_csv(os, train_run(t).metrics);
        return os.str();
    };
    const std::string a = once(), b = once();
    const long rows = static_cast<long>(std::count(a.begin(), a.end(), '\n')) - 1;
    return {a == b && rows > 0, std::to_string(rows) + " metric rows, " + (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"interval soundness", interval_soundness},
        {"gradient exactness", gradient_exactness},
        {"partition integrity", partition_integrity},
        {"refinement oracle equivalence", refinement_oracle},
        {"value-gap bounds on toy MDPs", value_bounds},
        {"refinement audit on the drifting chain", refinement_audit_chain},
        {"Q-table transfer exactness", q_transfer},
        {"default hyperparameters", hyperparameters},
        {"end-to-end PointMaze / PointMazeKey", end_to_end},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 3;
}
