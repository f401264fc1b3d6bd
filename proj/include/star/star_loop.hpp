#pragma once

// The three-level training loop: the Commander picks a goal box every k
// steps, the Tutor a subgoal every l steps, the Controller an action every
// step. At the end of each episode the forward model is fitted on the
// Commander's transitions and the partition is refined.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "star/agents.hpp"
#include "star/envs.hpp"
#include "star/forward_model.hpp"
#include "star/geometry.hpp"
#include "star/reachability.hpp"

namespace star {

enum class CommanderReward {
    BoxMax,        // -scale * dist(g*, box of the located goal)
    StateDistance  // -scale * |psi(s) - g*|
};
enum class TrainGoal { Fixed, Sampled };

const char* to_string(CommanderReward r);
const char* to_string(TrainGoal g);

struct RunConfig {
    int k = 30;
    int l = 10;
    int max_timesteps = 500;
    std::int64_t total_steps = 500000;
    std::uint64_t seed = 0;
    EnvVariant env = EnvVariant::PointMaze;
    TrainGoal train_goal = TrainGoal::Fixed;
    CommanderReward commander_reward = CommanderReward::BoxMax;
    bool terminate_on_success = true;
    std::int64_t warmup_steps = 10000;
    std::int64_t eval_every = 10000;
    int eval_episodes = 5;
    // Stop once this many consecutive evaluations reach early_stop_success; 0 disables.
    int early_stop_evals = 0;
    double early_stop_success = 0.9;
    int refine_every = 1;  // episodes between refinement passes
    double relabel_sigma = 0.5;  // relabeling samples: fraction of the oracle half-width

    ReachConfig reach;
    ForwardModelConfig fm;
    CommanderConfig commander;
    Td3Config tutor = [] {
        Td3Config t;
        t.gamma = 0.99;
        t.reward_scale = 0.1;
        return t;
    }();
    Td3Config controller = [] {
        Td3Config t;
        t.gamma = 0.95;
        t.reward_scale = 1.0;
        return t;
    }();

    static RunConfig defaults() { return {}; }
    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
};

struct Rewards {
    double r_comm = 0.0;
    double r_tut = 0.0;
    double r_cont = 0.0;
};

/// psi_s: oracle state; located: box of the goal containing psi_s; goal_box: G_d;
/// subgoal: g; task_goal: g* (compared against the first |g*| oracle axes).
Rewards compute_rewards(std::span<const double> psi_s, const Box& located, const Box& goal_box,
                        std::span<const double> subgoal, std::span<const double> task_goal,
                        double reward_scale, CommanderReward variant = CommanderReward::BoxMax);

/// G0 = bounding box of the visited oracle states (inflated on flat axes),
/// followed by up to two slabs per axis covering the rest of `bounds`.
Partition initialize_abstraction(const std::vector<Point>& visited, const Box& bounds);

struct EpisodeTrace {
    std::vector<GoalPair> pairs;             // (located, chosen) per Commander decision
    std::vector<int> commander_times;        // t of each Commander decision
    std::vector<int> tutor_times;            // t of each Tutor decision
    std::vector<int> tutor_segment_lengths;  // low-level steps per logged Tutor transition
    int steps = 0;
    bool success = false;
    double extrinsic_return = 0.0;
    std::int64_t generation_before = 0;
    std::int64_t generation_after = 0;
    std::map<GoalId, int> visits;            // located goal per Commander decision
};

struct EvalPoint {
    std::int64_t step = 0;
    std::int64_t episode = 0;
    double success_rate = 0.0;
    double mean_return = 0.0;
    std::int64_t generation = 0;
    std::size_t goal_count = 0;
    double fm_loss = 0.0;  // mean loss of the last forward-model epoch (0 before any training)
    double epsilon = 0.0;
    double wall_seconds = 0.0;  // not part of the metrics file
};

struct Metrics {
    std::vector<EvalPoint> evals;
};

struct EvalResult {
    double success_rate = 0.0;
    double mean_return = 0.0;
    std::map<GoalId, int> visits;
    int commander_decisions = 0;
};

struct LoggedRefinement {
    std::int64_t step = 0;
    RefinementEvent event;
};

/// Owns every piece of mutable training state.
class Trainer {
public:
    explicit Trainer(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    const EnvSpec& spec() const { return spec_; }
    const Oracle& oracle() const { return oracle_; }
    const Box& bounds() const { return bounds_; }

    const Partition& partition() const { return partition_; }
    const QTable& qtable() const { return qtable_; }
    QTable& qtable() { return qtable_; }
    const ActorCritic& controller() const { return controller_; }
    const ActorCritic& tutor() const { return tutor_; }
    ActorCritic& controller() { return controller_; }
    ActorCritic& tutor() { return tutor_; }
    const ForwardModel& forward_model() const { return fm_; }
    const TransitionStore& fm_store() const { return fm_store_; }

    std::int64_t steps() const { return steps_; }
    std::int64_t episodes() const { return episodes_; }
    bool abstraction_initialized() const { return initialized_; }
    double last_fm_loss() const { return last_fm_loss_; }

    /// One training episode followed by the end-of-episode updates. Never
    /// runs past config().total_steps.
    EpisodeTrace run_episode();

    /// Replace the partition (and reset the Commander table and forward-model data).
    void set_partition(const Partition& p);
    /// Restore agent state from snapshots.
    void load_state(const Partition& p, QTable q, nn::DenseNet controller_actor, nn::DenseNet tutor_actor);

    std::vector<LoggedRefinement>& refinement_log() { return refinement_log_; }

private:
    void end_of_episode(const std::vector<GoalPair>& pairs);
    void apply_refinement(const RefinementResult& res);

    RunConfig cfg_;
    EnvSpec spec_;
    Oracle oracle_;
    Box bounds_;
    std::mt19937_64 rng_;
    Partition partition_;
    QTable qtable_;
    ActorCritic controller_;
    ActorCritic tutor_;
    ForwardModel fm_;
    TransitionStore fm_store_;
    std::vector<Point> warmup_visits_;
    std::int64_t steps_ = 0;
    std::int64_t episodes_ = 0;
    bool initialized_ = false;
    double last_fm_loss_ = 0.0;
    std::vector<LoggedRefinement> refinement_log_;
};

/// Greedy rollouts at the fixed exit (no exploration at any level). An episode
/// ends at success or after max_timesteps.
EvalResult evaluate(const ActorCritic& controller, const ActorCritic& tutor, const QTable& q,
                    const Partition& p, const RunConfig& cfg);
EvalResult evaluate(const Trainer& t);

/// Hooks fired by train_run; all optional.
struct TrainHooks {
    std::function<void(const Trainer&, const EvalPoint&, const EvalResult&)> on_eval;
    std::function<void(const Trainer&, const EpisodeTrace&)> on_episode;
};

struct TrainResult {
    Metrics metrics;
    std::optional<std::int64_t> first_success_step;  // first eval step with success >= early_stop_success
    std::int64_t steps = 0;
    bool stopped_early = false;
};

/// Warmup under the one-goal abstraction, initial abstraction, then episodes
/// until total_steps with evaluations every eval_every steps.
TrainResult train_run(Trainer& trainer, const TrainHooks& hooks = {});

}  // namespace star
