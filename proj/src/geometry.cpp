#include "star/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "star/errors.hpp"

namespace star {

Box::Box(Point lower, Point upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size())
        throw std::invalid_argument("Box: lower and upper differ in dimension");
    for (std::size_t i = 0; i < lower_.size(); ++i) {
        if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]))
            throw std::invalid_argument("Box: non-finite bound");
        if (lower_[i] > upper_[i])
            throw std::invalid_argument("Box: lower exceeds upper on axis " + std::to_string(i));
    }
}

Point Box::center() const {
    Point c(dim());
    for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower_[i] + upper_[i]);
    return c;
}

Point Box::half_width() const {
    Point h(dim());
    for (std::size_t i = 0; i < dim(); ++i) h[i] = 0.5 * (upper_[i] - lower_[i]);
    return h;
}

std::size_t Box::widest_dim() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dim(); ++i)
        if (width(i) > width(best)) best = i;
    return best;
}

double box_volume(const Box& b) {
    double v = 1.0;
    for (std::size_t i = 0; i < b.dim(); ++i) v *= b.width(i);
    return v;
}

bool box_contains(const Box& b, std::span<const double> p) {
    if (p.size() != b.dim()) throw std::invalid_argument("box_contains: dimension mismatch");
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] < b.lower(i) || p[i] > b.upper(i)) return false;
    return true;
}

bool box_subset(const Box& a, const Box& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("box_subset: dimension mismatch");
    for (std::size_t i = 0; i < a.dim(); ++i)
        if (a.lower(i) < b.lower(i) || a.upper(i) > b.upper(i)) return false;
    return true;
}

std::optional<Box> box_intersect(const Box& a, const Box& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("box_intersect: dimension mismatch");
    Point lo(a.dim()), hi(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        lo[i] = std::max(a.lower(i), b.lower(i));
        hi[i] = std::min(a.upper(i), b.upper(i));
        if (lo[i] > hi[i]) return std::nullopt;
    }
    return Box(std::move(lo), std::move(hi));
}

double intersection_volume(const Box& a, const Box& b) {
    const auto i = box_intersect(a, b);
    return i ? box_volume(*i) : 0.0;
}

double point_to_box_distance(std::span<const double> g, const Box& b) {
    if (g.size() != b.dim())
        throw std::invalid_argument("point_to_box_distance: dimension mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = std::max({b.lower(i) - g[i], 0.0, g[i] - b.upper(i)});
        sum += d * d;
    }
    return std::sqrt(sum);
}

std::pair<Box, Box> split_box(const Box& b, std::size_t dim, double at) {
    if (dim >= b.dim()) throw std::invalid_argument("split_box: axis out of range");
    if (!(b.lower(dim) < at && at < b.upper(dim)))
        throw std::invalid_argument("split_box: cut not strictly inside the box");
    Point left_hi = b.upper();
    Point right_lo = b.lower();
    left_hi[dim] = at;
    right_lo[dim] = at;
    return {Box(b.lower(), std::move(left_hi)), Box(std::move(right_lo), b.upper())};
}

Box bounding_box(std::span<const Box> boxes) {
    if (boxes.empty()) throw std::invalid_argument("bounding_box: no boxes");
    Point lo = boxes.front().lower();
    Point hi = boxes.front().upper();
    for (const auto& b : boxes) {
        if (b.dim() != lo.size()) throw std::invalid_argument("bounding_box: dimension mismatch");
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] = std::min(lo[i], b.lower(i));
            hi[i] = std::max(hi[i], b.upper(i));
        }
    }
    return Box(std::move(lo), std::move(hi));
}

bool tiles(const Box& whole, const std::vector<Box>& pieces, double rel_tol) {
    if (pieces.empty()) return false;
    const double total = box_volume(whole);
    const double scale = total > 0.0 ? total : 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (pieces[i].dim() != whole.dim() || !box_subset(pieces[i], whole)) return false;
        sum += box_volume(pieces[i]);
        for (std::size_t j = i + 1; j < pieces.size(); ++j)
            if (intersection_volume(pieces[i], pieces[j]) > rel_tol * scale) return false;
    }
    return std::abs(sum - total) <= rel_tol * scale;
}

Partition Partition::single(const Box& bounds) { return from_boxes(bounds, {bounds}); }

Partition Partition::from_boxes(const Box& bounds, const std::vector<Box>& boxes) {
    if (!tiles(bounds, boxes)) throw std::invalid_argument("Partition: boxes do not tile bounds");
    Partition p;
    p.bounds_ = bounds;
    for (const auto& b : boxes) p.goals_.emplace(GoalId{p.next_id_++}, b);
    return p;
}

Partition Partition::restore(const Box& bounds, std::map<GoalId, Box> goals,
                             std::int64_t generation, std::uint64_t next_id) {
    std::vector<Box> boxes;
    for (const auto& [id, b] : goals) {
        if (id.value >= next_id) throw std::invalid_argument("Partition: goal id not below next_id");
        boxes.push_back(b);
    }
    if (!tiles(bounds, boxes)) throw std::invalid_argument("Partition: boxes do not tile bounds");
    if (generation < 0) throw std::invalid_argument("Partition: negative generation");
    Partition p;
    p.bounds_ = bounds;
    p.goals_ = std::move(goals);
    p.generation_ = generation;
    p.next_id_ = next_id;
    return p;
}

const Box& Partition::box(GoalId id) const {
    auto it = goals_.find(id);
    if (it == goals_.end())
        throw std::invalid_argument("Partition: unknown goal id " + std::to_string(id.value));
    return it->second;
}

std::vector<GoalId> Partition::ids() const {
    std::vector<GoalId> out;
    out.reserve(goals_.size());
    for (const auto& [id, b] : goals_) out.push_back(id);
    return out;
}

GoalId Partition::locate(std::span<const double> p) const {
    if (!box_contains(bounds_, p)) throw OutOfDomain("Partition::locate: point outside bounds");
    // std::map iterates in id order, so the first hit is the smallest id.
    for (const auto& [id, b] : goals_)
        if (box_contains(b, p)) return id;
    throw OutOfDomain("Partition::locate: point not covered");  // unreachable for valid partitions
}

std::vector<GoalId> Partition::containing(std::span<const double> p) const {
    std::vector<GoalId> out;
    for (const auto& [id, b] : goals_)
        if (box_contains(b, p)) out.push_back(id);
    return out;
}

Partition Partition::replace(GoalId id, const std::vector<Box>& pieces,
                             std::vector<GoalId>* new_ids) const {
    const Box& whole = box(id);
    if (!tiles(whole, pieces))
        throw std::invalid_argument("Partition::replace: pieces do not tile the replaced goal");
    Partition next = *this;
    next.goals_.erase(id);
    if (new_ids) new_ids->clear();
    for (const auto& b : pieces) {
        const GoalId fresh{next.next_id_++};
        next.goals_.emplace(fresh, b);
        if (new_ids) new_ids->push_back(fresh);
    }
    next.generation_ += 1;
    return next;
}

GoalId partition_locate(const Partition& p, std::span<const double> point) { return p.locate(point); }

Partition partition_replace(const Partition& p, GoalId id, const std::vector<Box>& pieces) {
    return p.replace(id, pieces);
}

}  // namespace star
