#pragma once

// Interval (box-domain) abstract interpretation through dense ReLU networks
// and the reachability-driven refinement of the goal partition.

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "star/forward_model.hpp"
#include "star/geometry.hpp"
#include "star/nn.hpp"

namespace star {

enum class ReachClass { Reachable, NotReachable, Mixed };
enum class RatioDenominator { ReachedSet, TargetSet };

const char* to_string(ReachClass c);

struct ReachStatus {
    ReachClass status = ReachClass::Mixed;
    double ratio = 0.0;
};

struct ReachConfig {
    double tau1 = 0.7;
    double tau2 = 0.01;
    double min_volume_ratio = 0.125;
    int max_depth = 3;
    double sigma = 0.05;
    int window = 10;
    RatioDenominator ratio_denominator = RatioDenominator::ReachedSet;
    // Merge same-class pieces whose union is a box before inserting them.
    bool merge_pieces = false;

    /// Throws std::invalid_argument when the invariants do not hold.
    void validate() const;
};

struct SplitOutcome {
    std::vector<Box> reachable_pieces;
    std::vector<Box> unreachable_pieces;

    bool splits() const { return !reachable_pieces.empty() && !unreachable_pieces.empty(); }
};

/// Interval image of x -> W x + b (then max(., 0) when apply_relu).
Box propagate_layer(const Box& in, const nn::Mat& weight, const nn::Vec& bias, bool apply_relu);
Box propagate_net(const nn::DenseNet& net, const Box& in);

/// Over-approximation, in oracle coordinates, of F(s, target) for s in source.
Box reached_box(const ForwardModel& f, const Box& source, const Box& target);

/// ratio = V(reached ∩ target) / V(denominator). Throws IllPosedQuery when
/// the denominator box has zero volume.
ReachStatus check_reach_status(const Box& reached, const Box& target, const ReachConfig& cfg);

/// Recursive widest-axis bisection of `source` until every piece is
/// Reachable or NotReachable toward `target`, or the depth/volume floor is hit.
SplitOutcome refine_goal(const ForwardModel& f, const Box& source, const Box& target,
                         const ReachConfig& cfg);

/// True iff at least cfg.window errors are recorded and the last cfg.window
/// of them are all below cfg.sigma.
bool stability_gate(const std::deque<double>& errors, const ReachConfig& cfg);
bool stability_gate(const std::vector<double>& errors, const ReachConfig& cfg);

/// One analysed pair. Pieces are listed with their new ids when a split was applied.
struct RefinementEvent {
    std::int64_t generation = 0;  // generation after the event
    GoalId source;
    GoalId target;
    std::string status;  // "reachable", "not_reachable", "split", "unstable", "skipped"
    Box source_box;
    std::vector<GoalId> reachable_ids;
    std::vector<GoalId> unreachable_ids;
    std::vector<Box> reachable_boxes;
    std::vector<Box> unreachable_boxes;
};

struct RefinementResult {
    Partition partition;
    std::vector<RefinementEvent> events;
    /// Partition after each applied split, in order.
    std::vector<Partition> steps;
};

/// When set, a pair is analysed only if this returns true (used to gate on
/// the forward model's per-pair error windows). Null means always analyse.
using PairGate = std::function<bool(const GoalPair&)>;

/// Analyse every distinct (source, target) pair of the episode in order.
RefinementResult refine_partition(const Partition& p, const std::vector<GoalPair>& episode_pairs,
                                  const ForwardModel& f, const ReachConfig& cfg,
                                  const PairGate& gate = nullptr);

/// Repeatedly merge pairs of boxes whose union is a box (face-adjacent,
/// identical on every other axis).
std::vector<Box> merge_if_box(const std::vector<Box>& pieces);

}  // namespace star
