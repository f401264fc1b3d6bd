#pragma once

// Executable checks of the suboptimality analysis on small deterministic
// MDPs: abstraction audits, the two value-gap bounds, exact value
// evaluation, and audits of refinement histories.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "star/geometry.hpp"
#include "star/reachability.hpp"

namespace star::theory {

/// Deterministic point dynamics: s' = s + clamp(a, -max_step, max_step) per
/// axis, clipped to `space`; a move ending strictly inside an obstacle is
/// cancelled. Reward r(s) = -|s - goal|.
struct ToyMDP {
    std::string name;
    Box space;
    std::vector<Box> obstacles;
    double max_step = 1.0;
    Point goal;
    double r_max = 1.0;  // largest one-step displacement
    double gamma = 0.9;

    Point step(const Point& s, const Point& a) const;
    double reward(const Point& s) const;
};

/// Ordered boxes; a point belongs to the first box containing it.
struct Abstraction {
    std::vector<Box> boxes;

    static Abstraction from_partition(const Partition& p);
    std::optional<std::size_t> locate(const Point& s) const;
};

using LowPolicy = std::function<Point(const Point& s, const Box& target)>;
using PointPolicy = std::function<Point(const Point& s, const Point& target)>;
using StatePolicy = std::function<Point(const Point& s, int t)>;

/// Step toward the closest point of the target box.
LowPolicy nearest_point_policy(double max_step);
/// Step straight toward the target point.
PointPolicy straight_policy(double max_step);

struct AuditOptions {
    int grid = 100;               // points per box edge
    double epsilon_max = 1.0;     // c4 threshold on the measured epsilon
};

struct AbstractionAudit {
    bool c1 = false;  // every sampled state lies in its own abstract goal
    bool c2 = false;  // trajectory goals are pairwise interior-disjoint
    bool c3 = false;  // each N(g_i) reaches N(g_{i+1}) in k steps
    bool c4 = false;  // measured epsilon <= threshold
    double epsilon = 0.0;
    std::optional<double> b;  // largest diameter among trajectory goals
    std::vector<bool> pair_reachable;

    bool passed() const { return c1 && c2 && c3 && c4; }
};

/// Inclusive linspace grid of a box (degenerate axes contribute one point).
std::vector<Point> box_grid(const Box& b, int per_edge);

/// All grid points of `source`, run k steps of `low` toward `target`, end in `target`.
bool pairwise_reachable(const ToyMDP& mdp, const Box& source, const Box& target, const LowPolicy& low,
                        int k, int grid);

AbstractionAudit audit_def3(const Abstraction& a, const std::vector<Point>& optimal_traj,
                            const LowPolicy& low, const ToyMDP& mdp, int k, const AuditOptions& opt = {});

/// sum_{i=0}^{mk/2} g^i i + sum_{i=mk/2}^{mk} g^i (mk - i), times 2 R_max, plus
/// (1 - g^{mk+1}) / (1 - g) * eps. Requires mk even.
double bound_eq1(int m, int k, double gamma, double r_max, double eps);
/// (1 - g^{mk+1}) / (1 - g) * (k R_max + B).
double bound_eq2(int m, int k, double gamma, double r_max, double b);
/// bound_eq1 counting the i = mk/2 term once.
double bound_eq1_single_count(int m, int k, double gamma, double r_max, double eps);

/// sum_{i=0}^{horizon} gamma^i r(s_i) along the deterministic rollout.
double exact_value(const ToyMDP& mdp, const StatePolicy& policy, const Point& s0, int horizon);

/// Target traj[i] for steps [(i-1)k, ik), i = 1..m; the last target afterwards.
StatePolicy hierarchical_point_policy(const std::vector<Point>& traj, int k, const PointPolicy& low);
StatePolicy hierarchical_box_policy(const std::vector<Point>& traj, const Abstraction& a, int k,
                                    const LowPolicy& low);

struct ToyCase {
    ToyMDP mdp;
    std::vector<Point> optimal;  // g_0 = s0, ..., g_m = g*
    int k = 1;
    Abstraction abstraction;
    LowPolicy low_abstract;
    PointPolicy low_concrete;
};

/// 1D chain, 2D corridor, 2-goal L-turn.
std::vector<ToyCase> toy_suite();

struct BoundCheck {
    std::string name;
    int m = 0;
    int k = 0;
    double gamma = 0.0;
    double r_max = 0.0;
    double v_optimal = 0.0;
    double v_abstract = 0.0;
    double gap = 0.0;
    double eq1 = 0.0;
    double eq2 = 0.0;
    AbstractionAudit audit;

    bool holds() const { return gap <= eq1 && gap <= eq2; }
};

BoundCheck check_bounds(const ToyCase& c, const AuditOptions& opt = {});

struct RefinementReport {
    int refinements = 0;
    std::vector<bool> step_is_refinement;  // (a) per history step
    std::vector<int> coverage;             // (b) reachable trajectory pairs per partition
    bool coverage_monotone = true;
    AbstractionAudit final_audit;          // (c)

    bool passed() const;
};

/// Throws std::invalid_argument when consecutive partitions are not related
/// by replacing exactly one goal with pieces tiling it (or are identical).
RefinementReport refinement_audit(const std::vector<Partition>& history, const std::vector<Point>& optimal_traj,
                                  const LowPolicy& low, const ToyMDP& mdp, int k, const AuditOptions& opt = {});

/// 1D chain with constant drift (s' = s + 1), refined from a single goal with
/// an exact affine forward model until the abstraction passes the audit.
struct ChainExperiment {
    ToyMDP mdp;
    std::vector<Point> optimal;
    std::vector<Partition> history;
    RefinementReport report;
};

ChainExperiment chain_refinement_experiment(const ReachConfig& cfg, int max_rounds = 20);

}  // namespace star::theory
