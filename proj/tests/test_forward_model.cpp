#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "star/errors.hpp"
#include "star/forward_model.hpp"

using namespace star;

namespace {

TransitionStore drift_store(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    TransitionStore store(100000);
    const Box target({0}, {11});
    for (int i = 0; i < n; ++i) {
        const double s = u(rng);
        store.add({{s}, GoalId{0}, GoalId{1}, target, {s + 1.0}});
    }
    return store;
}

}  // namespace

TEST_CASE("encode_input") {
    const double s[] = {1, 2};
    CHECK(encode_input(s, Box({0, 0}, {2, 4})) == std::vector<double>{1, 2, 1, 2, 1, 2});
    const auto e = encode_input(s, Box({3, 3}, {3, 3}));
    CHECK(e.size() == 6);
    CHECK(e[4] == 0.0);
    CHECK(e[5] == 0.0);
    const double s3[] = {0, 0, 0};
    CHECK(encode_input(s3, Box({0, 0, 0}, {1, 1, 1})).size() == 9);
}

TEST_CASE("fm_train fits the unit drift") {
    const Box bounds({0}, {11});
    ForwardModel f(bounds, 1, {32, 32}, 3);
    TransitionStore store = drift_store(20000, 1);
    const std::size_t before = store.size();
    std::mt19937_64 rng(2);
    const auto losses = fm_train(f, store, 5, 64, 0.001, rng);
    REQUIRE(losses.size() == 5);
    CHECK(losses.back() < 1e-3);
    CHECK(store.size() == before);

    const double s[] = {2.0};
    const Point p = fm_predict(f, s, Box({0}, {11}));
    REQUIRE(p.size() == 1);
    CHECK(p[0] >= 2.9);
    CHECK(p[0] <= 3.1);
    CHECK(fm_predict(f, s, Box({0}, {11})) == p);

    // A second pass over already-fit data does not make things worse.
    const auto again = fm_train(f, store, 5, 64, 0.001, rng);
    CHECK(again.back() <= losses.back() * 1.1 + 1e-6);
}

TEST_CASE("fm_train edge cases") {
    ForwardModel f(Box({0}, {11}), 1, {8}, 0);
    const nn::DenseNet before = f.net();
    TransitionStore store = drift_store(10, 0);
    std::mt19937_64 rng(0);
    CHECK(fm_train(f, store, 0, 4, 0.01, rng).empty());
    CHECK(f.net() == before);
    TransitionStore empty(10);
    CHECK_THROWS_AS(fm_train(f, empty, 1, 4, 0.01, rng), InsufficientData);
}

TEST_CASE("fm_error recomputation") {
    // Exact model: zero error.
    nn::DenseLayer exact{nn::Mat::Zero(1, 3), nn::Vec::Constant(1, 1.0)};
    exact.weight(0, 0) = 1.0;
    ForwardModel f = ForwardModel::from_net(nn::DenseNet({exact}), 1, 1);
    TransitionStore store = drift_store(100, 4);
    const GoalPair pair{GoalId{0}, GoalId{1}};
    CHECK(fm_error(f, store, pair) == doctest::Approx(0.0).epsilon(1e-24));

    // Constant-zero model against unit-norm targets.
    nn::DenseLayer zero{nn::Mat::Zero(2, 6), nn::Vec::Zero(2)};
    ForwardModel z = ForwardModel::from_net(nn::DenseNet({zero}), 1, 2);
    TransitionStore unit(100);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 70; ++i) {
        const double a = std::uniform_real_distribution<double>(0, 6.28)(rng);
        unit.add({{0.0, 0.0}, GoalId{0}, GoalId{1}, Box({0, 0}, {1, 1}), {std::cos(a), std::sin(a)}});
    }
    CHECK(fm_error(z, unit, pair) == doctest::Approx(1.0));

    // Independent recomputation over the most recent 64 records of a random model.
    std::mt19937_64 nrng(8);
    ForwardModel r = ForwardModel::from_net(oracle::random_net(nrng, 2, 6, 3, 1), 1, 1, Box({0}, {11}));
    const auto idx = store.pair_indices(pair);
    double sum = 0.0;
    for (std::size_t i = idx.size() - 64; i < idx.size(); ++i) {
        const FmRecord& rec = store.records()[idx[i]];
        const nn::Vec in = r.normalized_input(rec.s, rec.target_box);
        const oracle::Vector out = oracle::eval_net(r.net(), oracle::Vector(in.data(), in.data() + in.size()));
        const double pred = 5.5 + 5.5 * out[0];
        const double d = (pred - rec.s_next[0]) / 5.5;
        sum += d * d;
    }
    CHECK(fm_error(r, store, pair, 64) == doctest::Approx(sum / 64).epsilon(1e-10));

    CHECK_THROWS_AS(fm_error(f, store, {GoalId{7}, GoalId{8}}), InsufficientData);
}

TEST_CASE("error windows are trimmed") {
    ForwardModel f(Box({0}, {1}), 1, {4}, 0, 3);
    const GoalPair pair{GoalId{0}, GoalId{1}};
    for (int i = 0; i < 10; ++i) f.push_error(pair, i);
    CHECK(f.error_window(pair) == std::deque<double>{7, 8, 9});
    f.forget_pairs_not_in(Partition::single(Box({0}, {1})));
    CHECK(f.error_window(pair).empty());
}

TEST_CASE("transition store evicts FIFO and counts pairs") {
    TransitionStore store(3);
    for (int i = 0; i < 5; ++i) store.add({{double(i)}, GoalId{0}, GoalId{std::uint64_t(i % 2)}, Box({0}, {1}), {0.0}});
    CHECK(store.size() == 3);
    CHECK(store.records().front().s[0] == 2.0);
    CHECK(store.pair_count({GoalId{0}, GoalId{0}}) == 2);
    CHECK(store.pair_count({GoalId{0}, GoalId{1}}) == 1);
}
