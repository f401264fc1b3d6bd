#include "star/star_loop.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "star/errors.hpp"

namespace star {

const char* to_string(CommanderReward r) { return r == CommanderReward::BoxMax ? "box_max" : "state_distance"; }
const char* to_string(TrainGoal g) { return g == TrainGoal::Fixed ? "fixed" : "sampled"; }

void RunConfig::validate() const {
    if (l < 1) throw std::invalid_argument("l must be >= 1");
    if (k < 1 || k % l != 0) throw std::invalid_argument("k must be a positive multiple of l");
    if (max_timesteps < 1) throw std::invalid_argument("max_timesteps must be >= 1");
    if (total_steps < 0 || warmup_steps < 0) throw std::invalid_argument("step counts must be >= 0");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
    if (early_stop_evals < 0) throw std::invalid_argument("early_stop_evals must be >= 0");
    if (refine_every < 1) throw std::invalid_argument("refine_every must be >= 1");
    if (!(relabel_sigma >= 0.0)) throw std::invalid_argument("relabel_sigma must be >= 0");
    reach.validate();
    if (fm.batch < 1 || fm.epochs < 0 || fm.buffer_capacity == 0 || fm.min_pair_steps < 0 || fm.window < 1)
        throw std::invalid_argument("invalid forward-model settings");
    if (fm.window != reach.window) throw std::invalid_argument("fm.window must equal reach.window");
    if (!(commander.epsilon_min >= 0.0 && commander.epsilon_min <= commander.epsilon0 && commander.epsilon0 <= 1.0))
        throw std::invalid_argument("need 0 <= epsilon_min <= epsilon0 <= 1");
    for (const Td3Config* t : {&tutor, &controller}) {
        if (t->batch < 1 || t->policy_delay < 1 || t->update_every < 1 || t->buffer_capacity == 0)
            throw std::invalid_argument("invalid actor-critic settings");
        if (!(t->gamma >= 0.0 && t->gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0,1)");
        for (int h : t->hidden)
            if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");
    }
}

Rewards compute_rewards(std::span<const double> psi_s, const Box& located, const Box& goal_box,
                        std::span<const double> subgoal, std::span<const double> task_goal,
                        double reward_scale, CommanderReward variant) {
    if (psi_s.size() != goal_box.dim() || subgoal.size() != psi_s.size() || located.dim() != psi_s.size())
        throw std::invalid_argument("compute_rewards: dimension mismatch");
    if (task_goal.size() > psi_s.size()) throw std::invalid_argument("compute_rewards: task goal too long");
    const std::size_t gd = task_goal.size();
    Rewards r;
    double d2 = 0.0;
    if (variant == CommanderReward::BoxMax) {
        for (std::size_t i = 0; i < gd; ++i) {
            const double gap = std::max({located.lower(i) - task_goal[i], 0.0, task_goal[i] - located.upper(i)});
            d2 += gap * gap;
        }
    } else {
        for (std::size_t i = 0; i < gd; ++i) d2 += (psi_s[i] - task_goal[i]) * (psi_s[i] - task_goal[i]);
    }
    r.r_comm = -reward_scale * std::sqrt(d2);
    double t2 = 0.0, c2 = 0.0;
    for (std::size_t i = 0; i < psi_s.size(); ++i) {
        const double dc = psi_s[i] - 0.5 * (goal_box.lower(i) + goal_box.upper(i));
        const double dg = subgoal[i] - psi_s[i];
        t2 += dc * dc;
        c2 += dg * dg;
    }
    r.r_tut = -std::sqrt(t2);
    r.r_cont = -std::sqrt(c2);
    return r;
}

Partition initialize_abstraction(const std::vector<Point>& visited, const Box& bounds) {
    if (visited.empty()) throw std::invalid_argument("initialize_abstraction: no visited states");
    const std::size_t d = bounds.dim();
    Point lo(d), hi(d);
    for (std::size_t i = 0; i < d; ++i) {
        lo[i] = bounds.upper(i);
        hi[i] = bounds.lower(i);
    }
    for (const Point& p : visited) {
        if (p.size() != d) throw std::invalid_argument("initialize_abstraction: dimension mismatch");
        for (std::size_t i = 0; i < d; ++i) {
            const double v = std::clamp(p[i], bounds.lower(i), bounds.upper(i));
            lo[i] = std::min(lo[i], v);
            hi[i] = std::max(hi[i], v);
        }
    }
    // A flat hull axis is widened to 1% of the bounds so G0 has volume.
    for (std::size_t i = 0; i < d; ++i) {
        if (hi[i] > lo[i]) continue;
        const double pad = 0.005 * bounds.width(i);
        lo[i] = std::max(bounds.lower(i), lo[i] - pad);
        hi[i] = std::min(bounds.upper(i), hi[i] + pad);
        if (hi[i] <= lo[i]) {
            lo[i] = bounds.lower(i);
            hi[i] = bounds.upper(i);
        }
    }
    const Box g0(lo, hi);
    if (g0 == bounds) return Partition::single(bounds);

    std::vector<Box> boxes{g0};
    for (std::size_t i = 0; i < d; ++i) {
        // Axes before i are restricted to G0, axes after i span the bounds.
        Point slo(d), shi(d);
        for (std::size_t j = 0; j < d; ++j) {
            slo[j] = j < i ? g0.lower(j) : bounds.lower(j);
            shi[j] = j < i ? g0.upper(j) : bounds.upper(j);
        }
        if (bounds.lower(i) < g0.lower(i)) {
            Point a = slo, b = shi;
            b[i] = g0.lower(i);
            boxes.emplace_back(a, b);
        }
        if (g0.upper(i) < bounds.upper(i)) {
            Point a = slo, b = shi;
            a[i] = g0.upper(i);
            boxes.emplace_back(a, b);
        }
    }
    return Partition::from_boxes(bounds, boxes);
}

// ------------------------------------------------------------------ trainer

namespace {

Affine goal_encoding_norm(const Box& bounds) {
    // [center, halfwidth]: centers scaled like states, halfwidths mapped from [0, H] to [-1, 1].
    const Affine c = Affine::from_box(bounds);
    Affine a;
    const auto d = c.offset.size();
    a.offset.resize(2 * d);
    a.scale.resize(2 * d);
    a.offset.head(d) = c.offset;
    a.scale.head(d) = c.scale;
    a.offset.tail(d) = 0.5 * c.scale;
    a.scale.tail(d) = 0.5 * c.scale;
    return a;
}

ActorCritic make_controller(const RunConfig& cfg, const EnvSpec& spec, const Box& bounds, std::uint64_t seed) {
    return ActorCritic(spec.state_dim(), bounds.dim(), spec.action_dim(), cfg.controller, seed,
                       Affine::from_box(bounds), Affine::from_box(bounds), Affine::identity(spec.action_dim()));
}

ActorCritic make_tutor(const RunConfig& cfg, const EnvSpec& spec, const Box& bounds, std::uint64_t seed) {
    return ActorCritic(spec.state_dim(), 2 * bounds.dim(), bounds.dim(), cfg.tutor, seed,
                       Affine::from_box(bounds), goal_encoding_norm(bounds), Affine::from_box(bounds));
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

EnvSpec spec_for(const RunConfig& cfg) {
    EnvSpec s = EnvSpec::for_variant(cfg.env);
    s.max_timesteps = cfg.max_timesteps;
    return s;
}

Point task_goal_for(const RunConfig& cfg, const EnvSpec& spec, const ResetResult& reset) {
    return cfg.train_goal == TrainGoal::Fixed ? spec.eval_goal : reset.goal;
}

}  // namespace

Trainer::Trainer(RunConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      spec_(spec_for(cfg_)),
      oracle_(Oracle::for_spec(spec_)),
      bounds_(spec_.oracle_bounds()),
      rng_(mix(cfg_.seed, 0)),
      partition_(Partition::single(bounds_)),
      qtable_(partition_.ids(), cfg_.commander),
      controller_(make_controller(cfg_, spec_, bounds_, mix(cfg_.seed, 1))),
      tutor_(make_tutor(cfg_, spec_, bounds_, mix(cfg_.seed, 2))),
      fm_(bounds_, cfg_.k, cfg_.fm.hidden, mix(cfg_.seed, 3), cfg_.fm.window),
      fm_store_(cfg_.fm.buffer_capacity) {
    initialized_ = cfg_.warmup_steps == 0;
}

void Trainer::set_partition(const Partition& p) {
    if (p.bounds() != bounds_) throw std::invalid_argument("set_partition: bounds mismatch");
    const double eps = qtable_.epsilon();
    partition_ = p;
    qtable_ = QTable(partition_.ids(), cfg_.commander);
    qtable_.set_epsilon(eps);
    fm_store_ = TransitionStore(cfg_.fm.buffer_capacity);
    fm_.forget_pairs_not_in(partition_);
    initialized_ = true;
}

void Trainer::load_state(const Partition& p, QTable q, nn::DenseNet controller_actor, nn::DenseNet tutor_actor) {
    set_partition(p);
    if (!controller_actor.same_shape(controller_.actor) || !tutor_actor.same_shape(tutor_.actor))
        throw std::invalid_argument("load_state: network shape mismatch");
    qtable_ = std::move(q);
    controller_.actor = controller_actor;
    controller_.actor_target = std::move(controller_actor);
    tutor_.actor = tutor_actor;
    tutor_.actor_target = std::move(tutor_actor);
}

EpisodeTrace Trainer::run_episode() {
    EpisodeTrace tr;
    tr.generation_before = partition_.generation();
    if (steps_ >= cfg_.total_steps) {
        tr.generation_after = tr.generation_before;
        return tr;
    }
    const ResetResult reset = env_reset(spec_, rng_, true);
    const Point task_goal = task_goal_for(cfg_, spec_, reset);
    EnvState s = reset.state;

    const std::size_t od = oracle_.size();
    std::vector<double> relabel_sigma(od);
    for (std::size_t i = 0; i < od; ++i) relabel_sigma[i] = cfg_.relabel_sigma * 0.5 * bounds_.width(i);

    // Open Commander decision.
    GoalId g_src{}, g_dst{};
    Point comm_start;
    bool comm_open = false;
    // Open Tutor decision.
    Point tut_start_state;
    std::vector<double> tut_goal_enc;
    Point subgoal;
    std::vector<Point> seg_states, seg_actions;
    bool tut_open = false;

    auto close_commander = [&](const Point& psi, bool done, bool full) {
        const Box& located = partition_.box(partition_.locate(psi));
        const Rewards r = compute_rewards(psi, located, partition_.box(g_dst), psi, task_goal,
                                          spec_.reward_scale, cfg_.commander_reward);
        commander_update(qtable_, g_src, g_dst, r.r_comm, partition_.locate(psi), done);
        if (full) fm_store_.add({comm_start, g_src, g_dst, partition_.box(g_dst), psi});
        comm_open = false;
    };
    auto close_tutor = [&](const EnvState& now, bool done) {
        const Point psi = oracle_project(oracle_, now);
        const Point center(tut_goal_enc.begin(), tut_goal_enc.begin() + static_cast<std::ptrdiff_t>(od));
        double d2 = 0.0;
        for (std::size_t i = 0; i < od; ++i) d2 += (psi[i] - center[i]) * (psi[i] - center[i]);
        Point action = subgoal;
        if (!seg_states.empty()) {
            const RelabelResult rl = tutor_relabel(controller_, seg_states, seg_actions, psi, subgoal, bounds_,
                                                   relabel_sigma, rng_);
            action = rl.chosen;
        }
        tutor_.replay().add(tut_start_state, tut_goal_enc, action, now.state, -std::sqrt(d2), done);
        tr.tutor_segment_lengths.push_back(static_cast<int>(seg_states.size()));
        if (tutor_.replay().size() >= static_cast<std::size_t>(tutor_.config().batch))
            td3_update(tutor_, tutor_.config().batch, rng_);
        tut_open = false;
    };

    bool done = false;
    int t = 0;
    while (!done && steps_ < cfg_.total_steps) {
        const Point psi = oracle_project(oracle_, s);
        if (t % cfg_.k == 0) {
            if (comm_open) close_commander(psi, false, true);
            g_src = partition_.locate(psi);
            g_dst = commander_act(qtable_, g_src, true, &rng_);
            comm_start = psi;
            comm_open = true;
            tr.pairs.emplace_back(g_src, g_dst);
            tr.commander_times.push_back(t);
            ++tr.visits[g_src];
        }
        if (t % cfg_.l == 0) {
            if (tut_open) close_tutor(s, false);
            tut_start_state = s.state;
            tut_goal_enc = encode_goal(partition_.box(g_dst));
            const nn::Vec gv = tutor_act(tutor_, s.state, partition_.box(g_dst), true, &rng_);
            subgoal.assign(gv.data(), gv.data() + gv.size());
            tut_open = true;
            tr.tutor_times.push_back(t);
            seg_states.clear();
            seg_actions.clear();
        }
        const nn::Vec a = controller_act(controller_, s.state, subgoal, true, &rng_);
        const Point action(a.data(), a.data() + a.size());
        const StepResult st = env_step(s, action, spec_, task_goal);
        const Point psi_next = oracle_project(oracle_, st.next);
        double d2 = 0.0;
        for (std::size_t i = 0; i < od; ++i) d2 += (subgoal[i] - psi_next[i]) * (subgoal[i] - psi_next[i]);
        controller_.replay().add(s.state, subgoal, action, st.next.state, -std::sqrt(d2), false);
        if (steps_ % controller_.config().update_every == 0)
            td3_update(controller_, controller_.config().batch, rng_);
        seg_states.push_back(s.state);
        seg_actions.push_back(action);

        tr.extrinsic_return += st.r_ext;
        if (!initialized_) warmup_visits_.push_back(psi_next);
        s = st.next;
        ++t;
        ++steps_;
        const bool success = is_success(s, task_goal, spec_);
        tr.success = tr.success || success;
        done = st.done || (cfg_.terminate_on_success && success);
    }
    const Point psi_end = oracle_project(oracle_, s);
    if (tut_open) close_tutor(s, true);
    if (comm_open) close_commander(psi_end, true, t % cfg_.k == 0);
    tr.steps = t;
    ++episodes_;

    if (!initialized_ && steps_ >= cfg_.warmup_steps) {
        set_partition(initialize_abstraction(warmup_visits_, bounds_));
        warmup_visits_.clear();
        warmup_visits_.shrink_to_fit();
    } else if (initialized_ && episodes_ % cfg_.refine_every == 0) {
        end_of_episode(tr.pairs);
    }
    tr.generation_after = partition_.generation();
    return tr;
}

void Trainer::end_of_episode(const std::vector<GoalPair>& pairs) {
    // Fit F_k on the episode's pairs that have accumulated enough data.
    std::set<GoalPair> distinct(pairs.begin(), pairs.end());
    std::vector<std::size_t> idx;
    for (const GoalPair& gp : distinct) {
        if (static_cast<std::int64_t>(fm_store_.pair_count(gp)) * cfg_.k < cfg_.fm.min_pair_steps) continue;
        const auto pi = fm_store_.pair_indices(gp);
        idx.insert(idx.end(), pi.begin(), pi.end());
    }
    if (!idx.empty()) {
        std::sort(idx.begin(), idx.end());
        if (cfg_.fm.max_train_records > 0 && idx.size() > cfg_.fm.max_train_records)
            idx.erase(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(cfg_.fm.max_train_records));
        const auto losses = fm_train(fm_, fm_store_, cfg_.fm.epochs, cfg_.fm.batch, cfg_.fm.lr, rng_, &idx);
        if (!losses.empty()) last_fm_loss_ = losses.back();
        fm_.mark_trained();
    }
    if (!fm_.trained()) return;
    for (const GoalPair& gp : distinct)
        if (fm_store_.pair_count(gp) > 0) fm_error(fm_, fm_store_, gp, cfg_.fm.batch);

    const ReachConfig& rc = cfg_.reach;
    const PairGate gate = [&](const GoalPair& gp) { return stability_gate(fm_.error_window(gp), rc); };
    apply_refinement(refine_partition(partition_, pairs, fm_, rc, gate));
}

void Trainer::apply_refinement(const RefinementResult& res) {
    for (const RefinementEvent& ev : res.events) {
        refinement_log_.push_back({steps_, ev});
        if (ev.status == "reachable") {
            if (qtable_.has(ev.source) && qtable_.has(ev.target)) qtable_.add_reach_edge(ev.source, ev.target);
        } else if (ev.status == "not_reachable") {
            qtable_.remove_reach_edge(ev.source, ev.target);
        } else if (ev.status == "split") {
            q_table_transfer(qtable_, ev.source, ev.reachable_ids, ev.unreachable_ids, ev.target);
        }
    }
    if (res.partition.generation() != partition_.generation()) {
        partition_ = res.partition;
        fm_store_.relabel_sources(partition_);
        fm_.forget_pairs_not_in(partition_);
    }
}

// ---------------------------------------------------------------- evaluate

EvalResult evaluate(const ActorCritic& controller, const ActorCritic& tutor, const QTable& q,
                    const Partition& p, const RunConfig& cfg) {
    const EnvSpec spec = spec_for(cfg);
    const Oracle oracle = Oracle::for_spec(spec);
    EvalResult out;
    int successes = 0;
    double returns = 0.0;
    for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
        std::mt19937_64 unused(0);
        const ResetResult reset = env_reset(spec, unused, false);
        EnvState s = reset.state;
        const Point& goal = reset.goal;
        Box goal_box = p.bounds();
        nn::Vec subgoal;
        bool success = false;
        double ret = 0.0;
        for (int t = 0; t < spec.max_timesteps && !success; ++t) {
            if (t % cfg.k == 0) {
                const Point psi = oracle_project(oracle, s);
                const GoalId src = p.locate(psi);
                const GoalId dst = q.has(src) ? commander_greedy(q, src) : src;
                goal_box = p.box(dst);
                ++out.visits[src];
                ++out.commander_decisions;
            }
            if (t % cfg.l == 0) subgoal = tutor_act(tutor, s.state, goal_box, false, nullptr);
            const nn::Vec a = controller_act(controller, s.state,
                                             std::span<const double>(subgoal.data(), static_cast<std::size_t>(subgoal.size())),
                                             false, nullptr);
            const StepResult st = env_step(s, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), spec, goal);
            ret += st.r_ext;
            s = st.next;
            success = is_success(s, goal, spec);
        }
        successes += success ? 1 : 0;
        returns += ret;
    }
    out.success_rate = static_cast<double>(successes) / cfg.eval_episodes;
    out.mean_return = returns / cfg.eval_episodes;
    return out;
}

EvalResult evaluate(const Trainer& t) {
    return evaluate(t.controller(), t.tutor(), t.qtable(), t.partition(), t.config());
}

TrainResult train_run(Trainer& trainer, const TrainHooks& hooks) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const RunConfig& cfg = trainer.config();
    TrainResult result;
    std::int64_t next_eval = cfg.eval_every;
    int streak = 0;
    while (trainer.steps() < cfg.total_steps) {
        const EpisodeTrace tr = trainer.run_episode();
        if (hooks.on_episode) hooks.on_episode(trainer, tr);
        if (tr.steps == 0) break;
        if (trainer.steps() < next_eval && trainer.steps() < cfg.total_steps) continue;
        while (next_eval <= trainer.steps()) next_eval += cfg.eval_every;

        const EvalResult ev = evaluate(trainer);
        EvalPoint pt;
        pt.step = trainer.steps();
        pt.episode = trainer.episodes();
        pt.success_rate = ev.success_rate;
        pt.mean_return = ev.mean_return;
        pt.generation = trainer.partition().generation();
        pt.goal_count = trainer.partition().size();
        pt.fm_loss = trainer.last_fm_loss();
        pt.epsilon = trainer.qtable().epsilon();
        pt.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        result.metrics.evals.push_back(pt);
        if (hooks.on_eval) hooks.on_eval(trainer, pt, ev);

        if (ev.success_rate >= cfg.early_stop_success) {
            if (!result.first_success_step) result.first_success_step = pt.step;
            ++streak;
        } else {
            streak = 0;
        }
        if (cfg.early_stop_evals > 0 && streak >= cfg.early_stop_evals) {
            result.stopped_early = true;
            break;
        }
    }
    result.steps = trainer.steps();
    return result;
}

}  // namespace star
