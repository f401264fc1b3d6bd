#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "doctest.h"
#include "star/theory.hpp"

using namespace star;
using namespace star::theory;

namespace {

// Term-by-term sums, written independently of the library.
double eq1_ref(int m, int k, double g, double rmax, double eps, bool repeat_middle) {
    const int mk = m * k;
    double s = 0.0;
    for (int i = 0; i <= mk / 2; ++i) s += std::pow(g, i) * i;
    for (int i = repeat_middle ? mk / 2 : mk / 2 + 1; i <= mk; ++i) s += std::pow(g, i) * (mk - i);
    double geo = 0.0;
    for (int i = 0; i <= mk; ++i) geo += std::pow(g, i);
    return 2.0 * rmax * s + geo * eps;
}

// Backward recursion V_h(s) = r(s) + gamma V_{h-1}(s') over an integer lattice.
double bellman(const ToyMDP& mdp, const std::map<long, double>& action, long s, int h) {
    const double r = mdp.reward({static_cast<double>(s)});
    if (h == 0) return r;
    const Point next = mdp.step({static_cast<double>(s)}, {action.at(s)});
    return r + mdp.gamma * bellman(mdp, action, std::lround(next[0]), h - 1);
}

ToyMDP line(double gamma) {
    ToyMDP m;
    m.space = Box({0.0}, {10.0});
    m.goal = {7.0};
    m.gamma = gamma;
    m.max_step = 2.0;
    return m;
}

}  // namespace

TEST_CASE("value-gap bound examples") {
    CHECK(bound_eq1(1, 2, 0.5, 1.0, 0.1) == doctest::Approx(2.175));
    CHECK(bound_eq2(1, 2, 0.5, 1.0, 0.5) == doctest::Approx(4.375));
    CHECK(bound_eq1(2, 3, 0.0, 5.0, 0.25) == doctest::Approx(0.25));
    CHECK(bound_eq1(3, 2, 0.9, 0.0, 0.0) == 0.0);
    CHECK(bound_eq2(3, 2, 0.9, 0.0, 0.0) == 0.0);
    CHECK(bound_eq2(2, 2, 0.9, 1.0, 2.0) > bound_eq2(2, 2, 0.9, 1.0, 1.0));
    CHECK_THROWS_AS(bound_eq1(1, 3, 0.5, 1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(bound_eq1(1, 2, 1.0, 1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(bound_eq2(1, 2, 1.0, 1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(bound_eq2(1, 2, 0.5, 1.0, -0.1), std::invalid_argument);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 0.99);
    for (int i = 0; i < 200; ++i) {
        const int m = 1 + static_cast<int>(rng() % 5), k = 2 * (1 + static_cast<int>(rng() % 4));
        const double g = u(rng), rm = 3 * u(rng), eps = u(rng);
        CHECK(bound_eq1(m, k, g, rm, eps) == doctest::Approx(eq1_ref(m, k, g, rm, eps, true)).epsilon(1e-12));
        CHECK(bound_eq1_single_count(m, k, g, rm, eps) ==
              doctest::Approx(eq1_ref(m, k, g, rm, eps, false)).epsilon(1e-12));
        CHECK(bound_eq1(m, k, g, rm, eps) >= bound_eq1_single_count(m, k, g, rm, eps));
    }
}

TEST_CASE("exact_value examples and dynamic-programming agreement") {
    ToyMDP m = line(0.5);
    const StatePolicy stay = [](const Point&, int) { return Point{0.0}; };
    CHECK(exact_value(m, stay, {7.0}, 20) == 0.0);
    m.max_step = 1.0;
    const StatePolicy right = [](const Point& s, int) { return Point{s[0] < 7.0 ? 1.0 : 0.0}; };
    CHECK(exact_value(m, right, {6.0}, 10) == -1.0);

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        ToyMDP mdp = line(0.8);
        std::map<long, double> act;
        for (long s = 0; s <= 10; ++s) act[s] = static_cast<double>(static_cast<int>(rng() % 5) - 2);
        const StatePolicy pol = [&](const Point& s, int) { return Point{act.at(std::lround(s[0]))}; };
        const long s0 = static_cast<long>(rng() % 11);
        const int h = static_cast<int>(rng() % 15);
        CHECK(exact_value(mdp, pol, {static_cast<double>(s0)}, h) ==
              doctest::Approx(bellman(mdp, act, s0, h)).epsilon(1e-12));
    }
}

TEST_CASE("toy suite satisfies both bounds") {
    const auto suite = toy_suite();
    REQUIRE(suite.size() == 3);
    for (const ToyCase& c : suite) {
        const BoundCheck b = check_bounds(c);
        INFO(b.name);
        CHECK(b.audit.passed());
        CHECK(b.gap <= b.eq1);
        CHECK(b.gap <= b.eq2);
        CHECK(b.holds());
    }
}

TEST_CASE("audit_def3 rejects broken abstractions") {
    const ToyCase chain = toy_suite().front();
    // A hole in the cover breaks containment.
    Abstraction holes;
    holes.boxes = {Box({-0.5}, {0.5}), Box({1.5}, {2.5})};
    CHECK_FALSE(audit_def3(holes, chain.optimal, chain.low_abstract, chain.mdp, chain.k).c1);

    // Overlapping goals along the trajectory break disjointness.
    Abstraction overlap;
    overlap.boxes = {Box({-0.5}, {0.6}), Box({0.4}, {1.5}), Box({1.5}, {2.5})};
    const AbstractionAudit a = audit_def3(overlap, chain.optimal, chain.low_abstract, chain.mdp, chain.k);
    CHECK_FALSE(a.c2);

    // One big goal: the first step cannot reach a different box.
    Abstraction coarse;
    coarse.boxes = {Box({-0.5}, {1.5}), Box({1.5}, {2.5})};
    CHECK_FALSE(audit_def3(coarse, chain.optimal, chain.low_abstract, chain.mdp, chain.k).c3);

    AuditOptions strict;
    strict.epsilon_max = 0.1;
    CHECK_FALSE(audit_def3(chain.abstraction, chain.optimal, chain.low_abstract, chain.mdp, chain.k, strict).c4);
}

TEST_CASE("refinement audit on the drifting chain") {
    ReachConfig cfg;
    cfg.tau1 = 1.0;
    const ChainExperiment ex = chain_refinement_experiment(cfg);
    CHECK(ex.report.passed());
    CHECK(ex.report.refinements <= 6);
    for (std::size_t i = 1; i < ex.report.coverage.size(); ++i)
        CHECK(ex.report.coverage[i] >= ex.report.coverage[i - 1]);
    CHECK(ex.report.final_audit.passed());
}

TEST_CASE("refinement audit edge cases") {
    const ToyCase chain = toy_suite().front();
    const Partition p = Partition::single(chain.mdp.space);
    const RefinementReport same = refinement_audit({p, p, p}, chain.optimal, chain.low_abstract, chain.mdp, 1);
    CHECK(same.refinements == 0);
    CHECK(same.coverage_monotone);
    CHECK(same.step_is_refinement == std::vector<bool>{true, true});

    // A split that buys no reachability for any piece.
    const Partition bad = p.replace(p.ids().front(), {Box({-0.5}, {2.4}), Box({2.4}, {2.5})});
    const RefinementReport r = refinement_audit({p, bad}, chain.optimal, chain.low_abstract, chain.mdp, 1);
    CHECK(r.refinements == 1);
    CHECK_FALSE(r.passed());

    const Partition unrelated = Partition::from_boxes(chain.mdp.space, {Box({-0.5}, {1.0}), Box({1.0}, {2.5})});
    const Partition other = Partition::from_boxes(chain.mdp.space, {Box({-0.5}, {2.0}), Box({2.0}, {2.5})});
    CHECK_THROWS_AS(refinement_audit({unrelated, other}, chain.optimal, chain.low_abstract, chain.mdp, 1),
                    std::invalid_argument);
}
