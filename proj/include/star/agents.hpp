#pragma once

// Controller and Tutor: deterministic actor-critic learners with twin
// critics, target networks and delayed actor updates. Commander: tabular
// Q-learning over goal ids with exploration restricted to goals known to be
// reachable.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "star/forward_model.hpp"
#include "star/geometry.hpp"
#include "star/nn.hpp"

namespace star {

struct Td3Config {
    std::vector<int> hidden{64, 64};
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    std::size_t buffer_capacity = 200000;
    int batch = 128;
    double tau = 0.005;
    int update_every = 1;   // environment steps (or decisions) per critic step
    int policy_delay = 2;   // critic steps per actor step
    double gamma = 0.99;
    double reward_scale = 1.0;
    double expl_sigma = 1.0;        // Gaussian exploration, action units
    double target_noise = 0.2;      // smoothing noise, fraction of action half-range
    double target_noise_clip = 0.5;
};

/// Affine map between raw vectors and the network's normalized space.
struct Affine {
    nn::Vec offset;
    nn::Vec scale;

    static Affine identity(std::size_t dim);
    static Affine from_box(const Box& b);
    std::size_t dim() const { return static_cast<std::size_t>(offset.size()); }
};

/// Fixed-capacity FIFO ring of (obs, goal, action, next_obs, reward, done).
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t obs_dim, std::size_t goal_dim, std::size_t action_dim, std::size_t capacity);

    void add(std::span<const double> obs, std::span<const double> goal, std::span<const double> action,
             std::span<const double> next_obs, double reward, bool done);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t obs_dim() const { return static_cast<std::size_t>(obs_.rows()); }
    std::size_t goal_dim() const { return static_cast<std::size_t>(goal_.rows()); }
    std::size_t action_dim() const { return static_cast<std::size_t>(action_.rows()); }

    /// i-th stored transition, 0 = oldest.
    struct View {
        nn::Vec obs, goal, action, next_obs;
        double reward;
        bool done;
    };
    View at(std::size_t i) const;

    const nn::Mat& obs() const { return obs_; }
    const nn::Mat& goal() const { return goal_; }
    const nn::Mat& action() const { return action_; }
    const nn::Mat& next_obs() const { return next_obs_; }
    const nn::Vec& reward() const { return reward_; }
    const nn::Vec& done() const { return done_; }
    std::size_t physical(std::size_t i) const;

private:
    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    nn::Mat obs_, goal_, action_, next_obs_;
    nn::Vec reward_, done_;
};

class ActorCritic {
public:
    ActorCritic(std::size_t obs_dim, std::size_t goal_dim, std::size_t action_dim, Td3Config cfg,
                std::uint64_t seed, Affine obs_norm, Affine goal_norm, Affine action_map);

    /// Deterministic action in raw units.
    nn::Vec act(std::span<const double> obs, std::span<const double> goal) const;
    /// Batched deterministic actions; columns are samples (raw units).
    nn::Mat act_batch(const nn::Mat& obs, const nn::Mat& goal) const;
    /// Clamp a raw action to the action range.
    nn::Vec clamp_action(nn::Vec a) const;

    const Td3Config& config() const { return cfg_; }
    ReplayBuffer& replay() { return replay_; }
    const ReplayBuffer& replay() const { return replay_; }
    std::int64_t critic_steps() const { return critic_steps_; }

    nn::DenseNet actor, actor_target, critic1, critic2, critic1_target, critic2_target;

    // internals used by td3_update
    nn::Mat network_input(const nn::Mat& obs, const nn::Mat& goal) const;
    nn::Mat to_unit(const nn::Mat& raw_action) const;
    nn::Mat from_unit(const nn::Mat& unit_action) const;

    nn::AdamState actor_opt, critic1_opt, critic2_opt;
    std::int64_t critic_steps_ = 0;

private:
    Td3Config cfg_;
    Affine obs_norm_, goal_norm_, action_map_;
    ReplayBuffer replay_;
};

struct Td3Losses {
    double critic_loss = 0.0;
    std::optional<double> actor_loss;
};

/// One critic step (both critics) and, every policy_delay steps, one actor
/// step followed by Polyak updates of all targets. nullopt when the replay
/// holds fewer than `batch` transitions.
std::optional<Td3Losses> td3_update(ActorCritic& ac, int batch, std::mt19937_64& rng);

/// actor(s ++ g), in [-1,1]^a; Gaussian noise (config sigma) then clamp when exploring.
nn::Vec controller_act(const ActorCritic& ac, std::span<const double> s, std::span<const double> g,
                       bool explore, std::mt19937_64* rng);

/// Subgoal inside the oracle bounds; actor input is s ++ encode(G).
nn::Vec tutor_act(const ActorCritic& ac, std::span<const double> s, const Box& goal, bool explore,
                  std::mt19937_64* rng);

/// [center(G), halfwidth(G)]
std::vector<double> encode_goal(const Box& g);

struct RelabelResult {
    Point chosen;
    std::size_t index = 0;
    std::vector<Point> candidates;
    std::vector<double> scores;
};

/// Pick the subgoal that best explains the executed low-level actions among
/// {original, psi(final), 8 Gaussian samples around psi(final)} (clamped to
/// `bounds`). Ties keep the earliest candidate.
RelabelResult tutor_relabel(const ActorCritic& controller, const std::vector<Point>& states,
                            const std::vector<Point>& actions, std::span<const double> final_oracle,
                            std::span<const double> original_goal, const Box& bounds,
                            std::span<const double> sample_sigma, std::mt19937_64& rng,
                            std::size_t n_samples = 8);

struct CommanderConfig {
    double lr = 0.01;
    double epsilon0 = 0.99;
    double epsilon_min = 0.01;
    double epsilon_decay = 1e-6;
    double gamma = 0.99;
};

class QTable {
public:
    QTable() = default;
    /// Every pair of `goals` starts at 0.
    QTable(const std::vector<GoalId>& goals, CommanderConfig cfg);

    const CommanderConfig& config() const { return cfg_; }
    const std::vector<GoalId>& goals() const { return goals_; }
    bool has(GoalId g) const;
    double q(GoalId s, GoalId a) const;
    void set(GoalId s, GoalId a, double v);
    std::size_t entry_count() const { return values_.size(); }
    const std::map<GoalPair, double>& values() const { return values_; }

    double epsilon() const { return epsilon_; }
    void set_epsilon(double e) { epsilon_ = e; }
    void decay_epsilon();

    const std::map<GoalId, std::set<GoalId>>& reach_graph() const { return reach_; }
    void add_reach_edge(GoalId from, GoalId to);
    void remove_reach_edge(GoalId from, GoalId to);
    /// reach_graph[s] when non-empty, else every goal. Sorted by id.
    std::vector<GoalId> candidates(GoalId s) const;

    /// Rebuild with a new goal list. Used by q_table_transfer.
    void reset_goals(std::vector<GoalId> goals, std::map<GoalPair, double> values,
                     std::map<GoalId, std::set<GoalId>> reach);

private:
    CommanderConfig cfg_;
    std::vector<GoalId> goals_;
    std::map<GoalPair, double> values_;
    std::map<GoalId, std::set<GoalId>> reach_;
    double epsilon_ = 0.99;
};

/// argmax_a q(current, a) over candidates(current); ties to the smallest id.
GoalId commander_greedy(const QTable& q, GoalId current);

/// Greedy over candidates (ties to the smallest id); when exploring, with
/// probability epsilon a uniform candidate, then epsilon decays linearly.
GoalId commander_act(QTable& q, GoalId current, bool explore, std::mt19937_64* rng);

/// Tabular Q-learning step. Returns false (and does nothing) when any id is
/// not part of the table.
bool commander_update(QTable& q, GoalId s, GoalId a, double r, GoalId next, bool done);

/// Re-populate the table after `refined` was replaced by reach_ids + other_ids,
/// with reach_ids satisfying reachability toward `successor`.
void q_table_transfer(QTable& q, GoalId refined, const std::vector<GoalId>& reach_ids,
                      const std::vector<GoalId>& other_ids, GoalId successor);

void write_qtable_csv(std::ostream& out, const QTable& q);
/// Values read back into a table over `goals`; entries naming other ids are rejected.
QTable read_qtable_csv(std::istream& in, const std::vector<GoalId>& goals, CommanderConfig cfg);

}  // namespace star
