#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "star/errors.hpp"
#include "star/reachability.hpp"

using namespace star;

namespace {

nn::DenseLayer dense(const nn::Mat& w, const nn::Vec& b) { return {w, b}; }

// s' = s + shift, ignoring the target encoding.
ForwardModel shift_model(const std::vector<double>& shift) {
    const int d = static_cast<int>(shift.size());
    nn::Mat w = nn::Mat::Zero(d, 3 * d);
    nn::Vec b(d);
    for (int i = 0; i < d; ++i) {
        w(i, i) = 1.0;
        b(i) = shift[static_cast<std::size_t>(i)];
    }
    return ForwardModel::from_net(nn::DenseNet({dense(w, b)}), 1, shift.size());
}

}  // namespace

TEST_CASE("propagate_layer interval arithmetic") {
    nn::Mat w(1, 2);
    w << 1, -1;
    nn::Vec b(1);
    b << 0.5;
    const Box out = propagate_layer(Box({0, 0}, {1, 2}), w, b, false);
    CHECK(out == Box({-1.5}, {1.5}));
    CHECK(propagate_layer(Box({0, 0}, {1, 2}), w, b, true) == Box({0}, {1.5}));
    nn::Mat id = nn::Mat::Identity(1, 1);
    CHECK(propagate_layer(Box({-2}, {-1}), id, nn::Vec::Zero(1), true) == Box({0}, {0}));
    CHECK_THROWS_AS(propagate_layer(Box({0}, {1}), w, b, false), std::invalid_argument);
}

TEST_CASE("propagate_net on hand nets") {
    nn::Mat w(1, 1);
    w << 2;
    nn::Vec b(1);
    b << 1;
    CHECK(propagate_net(nn::DenseNet({dense(w, b)}), Box({0}, {1})) == Box({1}, {3}));

    nn::Mat w1(2, 1), w2(1, 2);
    w1 << 1, -1;
    w2 << 1, -1;
    const nn::DenseNet identity({dense(w1, nn::Vec::Zero(2)), dense(w2, nn::Vec::Zero(1))});
    const Box out = propagate_net(identity, Box({-1}, {2}));
    CHECK(box_subset(Box({-1}, {2}), out));
}

TEST_CASE("propagate_net is sound on random nets") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const nn::DenseNet net = oracle::random_net(rng, 3, 32, 3, 2);
        const Box in = oracle::random_box(rng, 3);
        const Box out = propagate_net(net, in);
        for (int i = 0; i < 200; ++i) {
            const oracle::Vector y = oracle::eval_net(net, oracle::uniform_in(in, rng));
            CHECK(oracle::inside(out, y, 1e-9 * (1.0 + std::abs(y[0]) + std::abs(y[1]))));
        }
    }
}

TEST_CASE("propagate_net is monotone in the input box") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const nn::DenseNet net = oracle::random_net(rng, 3, 16, 2, 2);
        const Box outer = oracle::random_box(rng, 2);
        const Box inner(oracle::uniform_in(outer, rng), outer.upper());
        const Box a = propagate_net(net, inner), b = propagate_net(net, outer);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(a.lower(i) >= b.lower(i) - 1e-12);
            CHECK(a.upper(i) <= b.upper(i) + 1e-12);
        }
    }
}

TEST_CASE("check_reach_status thresholds") {
    const ReachConfig cfg;
    ReachStatus s = check_reach_status(Box({0, 0}, {1, 1}), Box({0, 0}, {2, 2}), cfg);
    CHECK(s.status == ReachClass::Reachable);
    CHECK(s.ratio == 1.0);
    s = check_reach_status(Box({0}, {1}), Box({5}, {6}), cfg);
    CHECK(s.status == ReachClass::NotReachable);
    CHECK(s.ratio == 0.0);
    s = check_reach_status(Box({0}, {2}), Box({1}, {3}), cfg);
    CHECK(s.status == ReachClass::Mixed);
    CHECK(s.ratio == 0.5);

    ReachConfig target_cfg;
    target_cfg.ratio_denominator = RatioDenominator::TargetSet;
    CHECK(check_reach_status(Box({0, 0}, {1, 1}), Box({0, 0}, {2, 2}), target_cfg).ratio == 0.25);
    CHECK_THROWS_AS(check_reach_status(Box({1}, {1}), Box({0}, {2}), cfg), IllPosedQuery);
}

TEST_CASE("reach config validation") {
    ReachConfig c;
    CHECK_NOTHROW(c.validate());
    c.tau2 = 0.8;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ReachConfig{};
    c.min_volume_ratio = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ReachConfig{};
    c.window = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("refine_goal on the unit drift") {
    const ForwardModel f = shift_model({1.0});
    const ReachConfig cfg;
    SplitOutcome out = refine_goal(f, Box({0}, {2}), Box({2}, {3}), cfg);
    REQUIRE(out.reachable_pieces.size() == 1);
    REQUIRE(out.unreachable_pieces.size() == 1);
    CHECK(out.reachable_pieces[0] == Box({1}, {2}));
    CHECK(out.unreachable_pieces[0] == Box({0}, {1}));

    out = refine_goal(f, Box({0}, {1}), Box({0}, {5}), cfg);
    CHECK(out.reachable_pieces == std::vector<Box>{Box({0}, {1})});
    CHECK(out.unreachable_pieces.empty());

    out = refine_goal(f, Box({0}, {1}), Box({10}, {11}), cfg);
    CHECK(out.unreachable_pieces == std::vector<Box>{Box({0}, {1})});
    CHECK(out.reachable_pieces.empty());

    ForwardModel untrained(Box({0}, {1}), 1, {4}, 0);
    CHECK_THROWS_AS(refine_goal(untrained, Box({0}, {1}), Box({0}, {1}), cfg), std::invalid_argument);
}

TEST_CASE("refine_goal pieces tile the source and respect the depth bound") {
    std::mt19937_64 rng(12);
    ReachConfig cfg;
    for (int trial = 0; trial < 300; ++trial) {
        const nn::DenseNet net = oracle::random_net(rng, 2, 8, 6, 2);
        const ForwardModel f = ForwardModel::from_net(net, 1, 2);
        const Box src = oracle::random_box(rng, 2), tgt = oracle::random_box(rng, 2);
        if (box_volume(src) <= 0.0) continue;
        const SplitOutcome out = refine_goal(f, src, tgt, cfg);
        std::vector<Box> all = out.reachable_pieces;
        all.insert(all.end(), out.unreachable_pieces.begin(), out.unreachable_pieces.end());
        CHECK(all.size() <= (1u << cfg.max_depth));
        CHECK(tiles(src, all));
        for (const Box& p : all) CHECK(box_volume(p) >= cfg.min_volume_ratio * box_volume(src) * (1 - 1e-9));
    }
}

TEST_CASE("stability_gate") {
    ReachConfig cfg;
    cfg.sigma = 0.05;
    CHECK(stability_gate(std::vector<double>(10, 0.02), cfg));
    CHECK_FALSE(stability_gate(std::vector<double>(9, 0.02), cfg));
    std::vector<double> e(12, 0.02);
    e[5] = 0.06;
    CHECK_FALSE(stability_gate(e, cfg));
    e[1] = 0.5;
    e[5] = 0.02;
    CHECK(stability_gate(e, cfg));  // only the last window counts
}

TEST_CASE("refine_partition applies splits and logs events") {
    const ForwardModel f = shift_model({1.0});
    const ReachConfig cfg;
    const Partition p = Partition::from_boxes(Box({0}, {4}), {Box({0}, {2}), Box({2}, {3}), Box({3}, {4})});

    RefinementResult r = refine_partition(p, {{GoalId{0}, GoalId{1}}}, f, cfg);
    CHECK(r.partition.generation() == p.generation() + 1);
    CHECK(r.partition.size() == 4);
    REQUIRE(r.events.size() == 1);
    CHECK(r.events[0].status == "split");
    REQUIRE(r.events[0].reachable_ids.size() == 1);
    CHECK(r.partition.box(r.events[0].reachable_ids[0]) == Box({1}, {2}));
    CHECK(r.steps.size() == 1);

    // The unit goal [2,3] reaches [3,4] entirely: nothing to split.
    r = refine_partition(p, {{GoalId{1}, GoalId{2}}}, f, cfg);
    CHECK(r.partition == p);
    CHECK(r.events[0].status == "reachable");

    r = refine_partition(p, {{GoalId{0}, GoalId{1}}}, f, cfg, [](const GoalPair&) { return false; });
    CHECK(r.partition == p);
    CHECK(r.events[0].status == "unstable");

    // A pair naming a goal replaced earlier in the same pass is re-located by its center.
    r = refine_partition(p, {{GoalId{0}, GoalId{1}}, {GoalId{2}, GoalId{0}}}, f, cfg);
    CHECK(r.events.size() == 2);
    CHECK(r.events[1].status == "skipped");
}

TEST_CASE("merge_if_box joins face-adjacent boxes only") {
    CHECK(merge_if_box({Box({0}, {1}), Box({1}, {2})}) == std::vector<Box>{Box({0}, {2})});
    CHECK(merge_if_box({Box({0, 0}, {1, 1}), Box({1, 1}, {2, 2})}).size() == 2);
}
