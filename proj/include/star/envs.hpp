#pragma once

// Deterministic point-mass navigation on the U-shaped maze (8x8 blocks), plus
// a variant whose upper half is closed by a gate that opens only after the
// agent turns to a negative heading inside the camera area.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "star/geometry.hpp"

namespace star {

enum class EnvVariant { PointMaze, PointMazeKey };

const char* to_string(EnvVariant v);
EnvVariant env_variant_from_string(const std::string& s);

struct EnvSpec {
    EnvVariant variant = EnvVariant::PointMaze;
    std::vector<Box> walls;          // closed 8x8 blocks; interiors are forbidden
    Box gate;                        // blocking cell of the Key variant
    Box camera_area;                 // where a negative heading opens the gate
    Point eval_goal{0.0, 16.0};
    Box goal_range;                  // training goal sampling ranges (x, y)
    Point start{0.0, 0.0};
    int max_timesteps = 500;
    double success_radius = 5.0;
    double reward_scale = 0.1;
    double v_max = 1.0;
    double theta_max = 0.3;          // rad per step at |dtheta| = 1

    static EnvSpec point_maze();
    static EnvSpec point_maze_key();
    static EnvSpec for_variant(EnvVariant v);

    std::size_t state_dim() const { return variant == EnvVariant::PointMaze ? 2 : 3; }
    std::size_t action_dim() const { return state_dim(); }
    /// Oracle bounding box: free space of the maze (plus heading for Key).
    Box oracle_bounds() const;
};

struct EnvState {
    Point state;  // (x, y) or (x, y, theta)
    int t = 0;
    bool gate_open = false;

    double x() const { return state[0]; }
    double y() const { return state[1]; }
};

struct StepResult {
    EnvState next;
    double r_ext = 0.0;
    bool done = false;
};

struct ResetResult {
    EnvState state;
    Point goal;
};

struct Oracle {
    std::vector<std::size_t> dims;

    Oracle() = default;
    explicit Oracle(std::vector<std::size_t> d);
    static Oracle for_spec(const EnvSpec& spec);
    std::size_t size() const { return dims.size(); }
};

/// Training resets draw g* uniformly from spec.goal_range; evaluation resets
/// use spec.eval_goal. The agent always starts at spec.start.
ResetResult env_reset(const EnvSpec& spec, std::uint64_t seed, bool train);
ResetResult env_reset(const EnvSpec& spec, std::mt19937_64& rng, bool train);

StepResult env_step(const EnvState& s, std::span<const double> action, const EnvSpec& spec,
                    std::span<const double> goal);

double extrinsic_reward(const EnvState& s, std::span<const double> goal, const EnvSpec& spec);
bool is_success(const EnvState& s, std::span<const double> goal, const EnvSpec& spec);
Point oracle_project(const Oracle& oracle, std::span<const double> full_state);
Point oracle_project(const Oracle& oracle, const EnvState& s);

/// True when the point is outside the closed free space (open cells, plus the gate cell once opened).
bool in_wall(const EnvSpec& spec, double x, double y, bool gate_open);

struct TrajectoryRow {
    int t = 0;
    Point state;
    Point action;
    double r_ext = 0.0;
    bool done = false;
};

/// CSV with columns t, s0.., a0.., r_ext, done.
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

}  // namespace star
