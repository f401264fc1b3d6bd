#pragma once

// Axis-aligned boxes and the box partition that serves as the goal
// abstraction. Boxes are closed sets.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace star {

using Point = std::vector<double>;

class Box {
public:
    Box() = default;
    /// Throws std::invalid_argument unless lower <= upper componentwise and all finite.
    Box(Point lower, Point upper);

    std::size_t dim() const { return lower_.size(); }
    const Point& lower() const { return lower_; }
    const Point& upper() const { return upper_; }
    double lower(std::size_t i) const { return lower_[i]; }
    double upper(std::size_t i) const { return upper_[i]; }
    double width(std::size_t i) const { return upper_[i] - lower_[i]; }

    Point center() const;
    Point half_width() const;
    /// Widest edge; ties go to the lowest index.
    std::size_t widest_dim() const;

    friend bool operator==(const Box&, const Box&) = default;

private:
    Point lower_;
    Point upper_;
};

double box_volume(const Box& b);
bool box_contains(const Box& b, std::span<const double> p);
/// a is a subset of b.
bool box_subset(const Box& a, const Box& b);
std::optional<Box> box_intersect(const Box& a, const Box& b);
/// Volume of the intersection, 0 when disjoint.
double intersection_volume(const Box& a, const Box& b);
double point_to_box_distance(std::span<const double> g, const Box& b);
/// Cut along `dim` at `at`; requires lower[dim] < at < upper[dim].
std::pair<Box, Box> split_box(const Box& b, std::size_t dim, double at);
/// Smallest box containing every input box (non-empty input).
Box bounding_box(std::span<const Box> boxes);

struct GoalId {
    std::uint64_t value = 0;
    auto operator<=>(const GoalId&) const = default;
};

/// Interior-disjoint boxes tiling `bounds`. Immutable: replace() yields the
/// next generation. Ids are handed out monotonically and never recycled.
class Partition {
public:
    /// One goal covering the whole bounds.
    static Partition single(const Box& bounds);
    /// Validated tiling of `bounds` by `boxes`; ids 0..n-1 in the given order.
    static Partition from_boxes(const Box& bounds, const std::vector<Box>& boxes);
    /// Rebuild a snapshot (validated).
    static Partition restore(const Box& bounds, std::map<GoalId, Box> goals,
                             std::int64_t generation, std::uint64_t next_id);

    const std::map<GoalId, Box>& goals() const { return goals_; }
    const Box& bounds() const { return bounds_; }
    std::int64_t generation() const { return generation_; }
    std::uint64_t next_id() const { return next_id_; }
    std::size_t size() const { return goals_.size(); }
    std::size_t dim() const { return bounds_.dim(); }

    bool has(GoalId id) const { return goals_.count(id) != 0; }
    const Box& box(GoalId id) const;
    std::vector<GoalId> ids() const;

    /// Goal whose box contains p; on shared faces the smallest id wins.
    /// Throws OutOfDomain when p is outside bounds.
    GoalId locate(std::span<const double> p) const;
    /// All goals whose closed box contains p.
    std::vector<GoalId> containing(std::span<const double> p) const;

    /// Replace goal `id` by `pieces` (must tile its box). Fresh ids are
    /// assigned to the pieces in order; they are written to `new_ids` if given.
    Partition replace(GoalId id, const std::vector<Box>& pieces,
                      std::vector<GoalId>* new_ids = nullptr) const;

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    Box bounds_;
    std::map<GoalId, Box> goals_;
    std::int64_t generation_ = 0;
    std::uint64_t next_id_ = 0;
};

/// Checks that `pieces` are inside `whole`, pairwise interior-disjoint and
/// that their volumes sum to vol(whole) within `rel_tol`.
bool tiles(const Box& whole, const std::vector<Box>& pieces, double rel_tol = 1e-9);

GoalId partition_locate(const Partition& p, std::span<const double> point);
Partition partition_replace(const Partition& p, GoalId id, const std::vector<Box>& pieces);

}  // namespace star
