#include "star/reachability.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "star/errors.hpp"

namespace star {

const char* to_string(ReachClass c) {
    switch (c) {
        case ReachClass::Reachable: return "reachable";
        case ReachClass::NotReachable: return "not_reachable";
        case ReachClass::Mixed: return "mixed";
    }
    return "mixed";
}

void ReachConfig::validate() const {
    if (!(0.0 <= tau2 && tau2 < tau1 && tau1 <= 1.0))
        throw std::invalid_argument("ReachConfig: need 0 <= tau2 < tau1 <= 1");
    if (!(min_volume_ratio > 0.0 && min_volume_ratio < 1.0))
        throw std::invalid_argument("ReachConfig: min_volume_ratio must lie in (0,1)");
    if (window < 1) throw std::invalid_argument("ReachConfig: window must be >= 1");
    if (max_depth < 0) throw std::invalid_argument("ReachConfig: max_depth must be >= 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("ReachConfig: sigma must be positive");
}

Box propagate_layer(const Box& in, const nn::Mat& weight, const nn::Vec& bias, bool apply_relu) {
    if (static_cast<std::size_t>(weight.cols()) != in.dim() || bias.size() != weight.rows())
        throw std::invalid_argument("propagate_layer: dimension mismatch");
    const auto rows = static_cast<std::size_t>(weight.rows());
    Point lo(rows), hi(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double l = bias[r];
        double h = bias[r];
        for (std::size_t c = 0; c < in.dim(); ++c) {
            const double w = weight(r, c);
            if (w >= 0.0) {
                l += w * in.lower(c);
                h += w * in.upper(c);
            } else {
                l += w * in.upper(c);
                h += w * in.lower(c);
            }
        }
        if (apply_relu) {
            l = std::max(l, 0.0);
            h = std::max(h, 0.0);
        }
        lo[r] = l;
        hi[r] = h;
    }
    return Box(std::move(lo), std::move(hi));
}

Box propagate_net(const nn::DenseNet& net, const Box& in) {
    if (in.dim() != net.input_dim()) throw std::invalid_argument("propagate_net: dimension mismatch");
    Box cur = in;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i)
        cur = propagate_layer(cur, layers[i].weight, layers[i].bias, i + 1 < layers.size());
    return cur;
}

Box reached_box(const ForwardModel& f, const Box& source, const Box& target) {
    return f.denormalize_output_box(propagate_net(f.net(), f.normalized_input_box(source, target)));
}

namespace {

ReachClass classify(double ratio, const ReachConfig& cfg) {
    if (ratio >= cfg.tau1) return ReachClass::Reachable;
    if (ratio <= cfg.tau2) return ReachClass::NotReachable;
    return ReachClass::Mixed;
}

// Overlap ratio that stays defined when the reached box is flat along some
// axes: a flat axis contributes 1 if its coordinate lies in the target
// interval and 0 otherwise (the limit of the non-flat formula).
double overlap_ratio(const Box& reached, const Box& target, RatioDenominator denom) {
    if (denom == RatioDenominator::TargetSet) {
        const double v = box_volume(target);
        if (!(v > 0.0)) throw IllPosedQuery("reach ratio: target box has zero volume");
        return intersection_volume(reached, target) / v;
    }
    double ratio = 1.0;
    for (std::size_t i = 0; i < reached.dim(); ++i) {
        const double w = reached.width(i);
        const double lo = std::max(reached.lower(i), target.lower(i));
        const double hi = std::min(reached.upper(i), target.upper(i));
        if (w > 0.0) {
            ratio *= std::max(0.0, hi - lo) / w;
        } else if (!(lo <= hi)) {
            return 0.0;
        }
    }
    return ratio;
}

}  // namespace

ReachStatus check_reach_status(const Box& reached, const Box& target, const ReachConfig& cfg) {
    if (reached.dim() != target.dim())
        throw std::invalid_argument("check_reach_status: dimension mismatch");
    const Box& denom = cfg.ratio_denominator == RatioDenominator::ReachedSet ? reached : target;
    const double v = box_volume(denom);
    if (!(v > 0.0)) throw IllPosedQuery("check_reach_status: denominator box has zero volume");
    const double ratio = intersection_volume(reached, target) / v;
    return {classify(ratio, cfg), ratio};
}

SplitOutcome refine_goal(const ForwardModel& f, const Box& source, const Box& target,
                         const ReachConfig& cfg) {
    if (!f.trained()) throw std::invalid_argument("refine_goal: forward model is untrained");
    if (source.dim() != f.oracle_dim() || target.dim() != f.oracle_dim())
        throw std::invalid_argument("refine_goal: dimension mismatch");

    SplitOutcome out;
    const double source_volume = box_volume(source);
    auto recurse = [&](auto&& self, const Box& piece, int depth) -> void {
        const double ratio = overlap_ratio(reached_box(f, piece, target), target, cfg.ratio_denominator);
        switch (classify(ratio, cfg)) {
            case ReachClass::Reachable:
                out.reachable_pieces.push_back(piece);
                return;
            case ReachClass::NotReachable:
                out.unreachable_pieces.push_back(piece);
                return;
            case ReachClass::Mixed:
                break;
        }
        const double child_ratio = source_volume > 0.0 ? 0.5 * box_volume(piece) / source_volume : 0.0;
        const std::size_t axis = piece.widest_dim();
        const double mid = 0.5 * (piece.lower(axis) + piece.upper(axis));
        const bool can_split = depth < cfg.max_depth &&
                               child_ratio >= cfg.min_volume_ratio * (1.0 - 1e-12) &&
                               piece.lower(axis) < mid && mid < piece.upper(axis);
        if (!can_split) {
            // Only pieces that passed the Reachable test are reported reachable.
            out.unreachable_pieces.push_back(piece);
            return;
        }
        auto [left, right] = split_box(piece, axis, mid);
        self(self, left, depth + 1);
        self(self, right, depth + 1);
    };
    recurse(recurse, source, 0);
    return out;
}

bool stability_gate(const std::deque<double>& errors, const ReachConfig& cfg) {
    if (errors.size() < static_cast<std::size_t>(cfg.window)) return false;
    return std::all_of(errors.end() - cfg.window, errors.end(),
                       [&](double e) { return e < cfg.sigma; });
}

bool stability_gate(const std::vector<double>& errors, const ReachConfig& cfg) {
    return stability_gate(std::deque<double>(errors.begin(), errors.end()), cfg);
}

std::vector<Box> merge_if_box(const std::vector<Box>& pieces) {
    std::vector<Box> boxes = pieces;
    auto try_merge = [](const Box& a, const Box& b) -> std::optional<Box> {
        std::optional<std::size_t> axis;
        for (std::size_t i = 0; i < a.dim(); ++i) {
            if (a.lower(i) == b.lower(i) && a.upper(i) == b.upper(i)) continue;
            if (axis) return std::nullopt;
            if (a.upper(i) != b.lower(i) && b.upper(i) != a.lower(i)) return std::nullopt;
            axis = i;
        }
        if (!axis) return std::nullopt;
        Point lo = a.lower(), hi = a.upper();
        lo[*axis] = std::min(a.lower(*axis), b.lower(*axis));
        hi[*axis] = std::max(a.upper(*axis), b.upper(*axis));
        return Box(std::move(lo), std::move(hi));
    };
    bool merged = true;
    while (merged && boxes.size() > 1) {
        merged = false;
        for (std::size_t i = 0; i < boxes.size() && !merged; ++i)
            for (std::size_t j = i + 1; j < boxes.size() && !merged; ++j)
                if (auto m = try_merge(boxes[i], boxes[j])) {
                    boxes[i] = *m;
                    boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(j));
                    merged = true;
                }
    }
    return boxes;
}

namespace {

// Map an id from the input partition onto the current one via its box
// center; nullopt when the center touches more than one current goal.
std::optional<GoalId> remap(GoalId id, const Partition& original, const Partition& current) {
    if (current.has(id)) return id;
    if (!original.has(id)) return std::nullopt;
    const auto hits = current.containing(original.box(id).center());
    if (hits.size() != 1) return std::nullopt;
    return hits.front();
}

}  // namespace

RefinementResult refine_partition(const Partition& p, const std::vector<GoalPair>& episode_pairs,
                                  const ForwardModel& f, const ReachConfig& cfg,
                                  const PairGate& gate) {
    RefinementResult result{p, {}, {}};
    std::set<GoalPair> seen;
    for (const auto& raw : episode_pairs) {
        if (!seen.insert(raw).second) continue;
        RefinementEvent ev;
        ev.source = raw.first;
        ev.target = raw.second;
        const auto src = remap(raw.first, p, result.partition);
        const auto tgt = remap(raw.second, p, result.partition);
        Partition& cur = result.partition;
        if (!src || !tgt) {
            ev.status = "skipped";
            ev.generation = cur.generation();
            result.events.push_back(std::move(ev));
            continue;
        }
        ev.source = *src;
        ev.target = *tgt;
        ev.source_box = cur.box(*src);
        ev.generation = cur.generation();
        if (gate && !gate({*src, *tgt})) {
            ev.status = "unstable";
            result.events.push_back(std::move(ev));
            continue;
        }
        const Box target_box = cur.box(*tgt);
        const SplitOutcome outcome = refine_goal(f, ev.source_box, target_box, cfg);
        if (!outcome.splits()) {
            ev.status = outcome.reachable_pieces.empty() ? "not_reachable" : "reachable";
            result.events.push_back(std::move(ev));
            continue;
        }
        ev.reachable_boxes = cfg.merge_pieces ? merge_if_box(outcome.reachable_pieces) : outcome.reachable_pieces;
        ev.unreachable_boxes =
            cfg.merge_pieces ? merge_if_box(outcome.unreachable_pieces) : outcome.unreachable_pieces;
        std::vector<Box> pieces = ev.reachable_boxes;
        pieces.insert(pieces.end(), ev.unreachable_boxes.begin(), ev.unreachable_boxes.end());
        std::vector<GoalId> ids;
        cur = cur.replace(*src, pieces, &ids);
        ev.reachable_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(ev.reachable_boxes.size()));
        ev.unreachable_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(ev.reachable_boxes.size()), ids.end());
        ev.status = "split";
        ev.generation = cur.generation();
        result.steps.push_back(cur);
        result.events.push_back(std::move(ev));
    }
    return result;
}

}  // namespace star
