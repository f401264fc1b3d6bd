#include "star/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace star {

namespace {

constexpr double kCell = 8.0;

Box cell_box(double cx, double cy) {
    return Box({cx - kCell / 2, cy - kCell / 2}, {cx + kCell / 2, cy + kCell / 2});
}

std::vector<Box> grid_cells() {
    std::vector<Box> cells;
    for (int cx = -8; cx <= 24; cx += 8)
        for (int cy = -8; cy <= 24; cy += 8) cells.push_back(cell_box(cx, cy));
    return cells;
}

std::vector<Box> maze_walls() {
    // 5x5 block grid with centers at -8..24; the U-shaped corridor is open.
    const std::vector<std::pair<int, int>> open = {{0, 0}, {8, 0}, {16, 0}, {16, 8},
                                                   {16, 16}, {8, 16}, {0, 16}};
    std::vector<Box> walls;
    for (int cx = -8; cx <= 24; cx += 8)
        for (int cy = -8; cy <= 24; cy += 8)
            if (std::find(open.begin(), open.end(), std::make_pair(cx, cy)) == open.end())
                walls.push_back(cell_box(cx, cy));
    return walls;
}

// Free space is the closed union of the open cells, so two adjacent blocks
// leave no gap along their shared face.
bool is_free(const EnvSpec& spec, double x, double y, bool gate_open) {
    static const std::vector<Box> cells = grid_cells();
    const double p[2] = {x, y};
    for (const Box& c : cells) {
        if (!box_contains(c, p)) continue;
        if (std::find(spec.walls.begin(), spec.walls.end(), c) != spec.walls.end()) continue;
        if (spec.variant == EnvVariant::PointMazeKey && !gate_open && c == spec.gate) continue;
        return true;
    }
    return false;
}

}  // namespace

const char* to_string(EnvVariant v) {
    return v == EnvVariant::PointMaze ? "point_maze" : "point_maze_key";
}

EnvVariant env_variant_from_string(const std::string& s) {
    if (s == "point_maze") return EnvVariant::PointMaze;
    if (s == "point_maze_key") return EnvVariant::PointMazeKey;
    throw std::invalid_argument("unknown environment variant '" + s + "'");
}

EnvSpec EnvSpec::point_maze() {
    EnvSpec s;
    s.variant = EnvVariant::PointMaze;
    s.walls = maze_walls();
    s.gate = cell_box(16, 8);
    s.camera_area = Box({16.0, 0.0}, {20.0, 8.0});
    s.goal_range = Box({-4.0, -4.0}, {20.0, 20.0});
    return s;
}

EnvSpec EnvSpec::point_maze_key() {
    EnvSpec s = point_maze();
    s.variant = EnvVariant::PointMazeKey;
    return s;
}

EnvSpec EnvSpec::for_variant(EnvVariant v) {
    return v == EnvVariant::PointMaze ? point_maze() : point_maze_key();
}

Box EnvSpec::oracle_bounds() const {
    if (variant == EnvVariant::PointMaze) return Box({-4.0, -4.0}, {20.0, 20.0});
    return Box({-4.0, -4.0, -std::numbers::pi}, {20.0, 20.0, std::numbers::pi});
}

Oracle::Oracle(std::vector<std::size_t> d) : dims(std::move(d)) {
    for (std::size_t i = 0; i < dims.size(); ++i)
        for (std::size_t j = i + 1; j < dims.size(); ++j)
            if (dims[i] == dims[j]) throw std::invalid_argument("Oracle: repeated dimension");
}

Oracle Oracle::for_spec(const EnvSpec& spec) {
    return spec.variant == EnvVariant::PointMaze ? Oracle({0, 1}) : Oracle({0, 1, 2});
}

ResetResult env_reset(const EnvSpec& spec, std::uint64_t seed, bool train) {
    std::mt19937_64 rng(seed);
    return env_reset(spec, rng, train);
}

ResetResult env_reset(const EnvSpec& spec, std::mt19937_64& rng, bool train) {
    ResetResult r;
    r.state.state = spec.start;
    if (spec.variant == EnvVariant::PointMazeKey) r.state.state.push_back(0.0);
    r.state.t = 0;
    r.state.gate_open = false;
    if (train) {
        r.goal.resize(2);
        for (std::size_t i = 0; i < 2; ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            r.goal[i] = spec.goal_range.lower(i) + u * spec.goal_range.width(i);
        }
    } else {
        r.goal = spec.eval_goal;
    }
    return r;
}

bool in_wall(const EnvSpec& spec, double x, double y, bool gate_open) {
    return !is_free(spec, x, y, gate_open);
}

StepResult env_step(const EnvState& s, std::span<const double> action, const EnvSpec& spec,
                    std::span<const double> goal) {
    if (action.size() != spec.action_dim()) throw std::invalid_argument("env_step: action dimension mismatch");
    for (double a : action)
        if (std::isnan(a)) throw std::invalid_argument("env_step: NaN action");
    if (s.state.size() != spec.state_dim()) throw std::invalid_argument("env_step: state dimension mismatch");

    StepResult r;
    r.next = s;
    Point& p = r.next.state;
    // Axis-decomposed motion: x first, then y. A move that would leave free
    // space stops at the cell face it crossed (steps are shorter than a cell).
    for (std::size_t axis = 0; axis < 2; ++axis) {
        const double delta = std::clamp(action[axis], -1.0, 1.0) * spec.v_max;
        const double from = p[axis];
        p[axis] += delta;
        if (!is_free(spec, p[0], p[1], r.next.gate_open)) {
            const double cells = (p[axis] + kCell / 2) / kCell;
            const double face = -kCell / 2 + kCell * (delta > 0.0 ? std::floor(cells) : std::ceil(cells));
            p[axis] = delta > 0.0 ? std::max(face, from) : std::min(face, from);
        }
    }
    if (spec.variant == EnvVariant::PointMazeKey) {
        const double dtheta = std::clamp(action[2], -1.0, 1.0) * spec.theta_max;
        p[2] = std::clamp(p[2] + dtheta, -std::numbers::pi, std::numbers::pi);
        if (!r.next.gate_open && box_contains(spec.camera_area, std::span<const double>(p.data(), 2)) &&
            p[2] < 0.0)
            r.next.gate_open = true;
    }
    r.next.t = s.t + 1;
    r.done = r.next.t >= spec.max_timesteps;
    r.r_ext = extrinsic_reward(r.next, goal, spec);
    return r;
}

double extrinsic_reward(const EnvState& s, std::span<const double> goal, const EnvSpec& spec) {
    const double dx = goal[0] - s.x();
    const double dy = goal[1] - s.y();
    return -spec.reward_scale * std::sqrt(dx * dx + dy * dy);
}

bool is_success(const EnvState& s, std::span<const double> goal, const EnvSpec& spec) {
    const double dx = goal[0] - s.x();
    const double dy = goal[1] - s.y();
    return std::sqrt(dx * dx + dy * dy) < spec.success_radius;
}

Point oracle_project(const Oracle& oracle, std::span<const double> full_state) {
    Point out;
    out.reserve(oracle.dims.size());
    for (std::size_t d : oracle.dims) {
        if (d >= full_state.size()) throw std::invalid_argument("oracle_project: index out of range");
        out.push_back(full_state[d]);
    }
    return out;
}

Point oracle_project(const Oracle& oracle, const EnvState& s) { return oracle_project(oracle, s.state); }

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
    const std::size_t sd = rows.empty() ? 0 : rows.front().state.size();
    const std::size_t ad = rows.empty() ? 0 : rows.front().action.size();
    out << "t";
    for (std::size_t i = 0; i < sd; ++i) out << ",s" << i;
    for (std::size_t i = 0; i < ad; ++i) out << ",a" << i;
    out << ",r_ext,done\n";
    for (const auto& r : rows) {
        out << r.t;
        for (double v : r.state) out << ',' << v;
        for (double v : r.action) out << ',' << v;
        out << ',' << r.r_ext << ',' << (r.done ? 1 : 0) << '\n';
    }
}

}  // namespace star
