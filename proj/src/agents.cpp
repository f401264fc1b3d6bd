#include "star/agents.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>

#include "star/errors.hpp"

namespace star {

Affine Affine::identity(std::size_t dim) {
    return {nn::Vec::Zero(static_cast<Eigen::Index>(dim)), nn::Vec::Ones(static_cast<Eigen::Index>(dim))};
}

Affine Affine::from_box(const Box& b) {
    Affine a;
    const auto n = static_cast<Eigen::Index>(b.dim());
    a.offset.resize(n);
    a.scale.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        a.offset[i] = 0.5 * (b.lower(k) + b.upper(k));
        const double h = 0.5 * b.width(k);
        a.scale[i] = h > 0.0 ? h : 1.0;
    }
    return a;
}

// ---------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t obs_dim, std::size_t goal_dim, std::size_t action_dim,
                           std::size_t capacity)
    : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    const auto c = static_cast<Eigen::Index>(capacity);
    obs_.resize(static_cast<Eigen::Index>(obs_dim), c);
    goal_.resize(static_cast<Eigen::Index>(goal_dim), c);
    action_.resize(static_cast<Eigen::Index>(action_dim), c);
    next_obs_.resize(static_cast<Eigen::Index>(obs_dim), c);
    reward_.resize(c);
    done_.resize(c);
}

void ReplayBuffer::add(std::span<const double> obs, std::span<const double> goal,
                       std::span<const double> action, std::span<const double> next_obs, double reward,
                       bool done) {
    if (obs.size() != obs_dim() || next_obs.size() != obs_dim() || goal.size() != goal_dim() ||
        action.size() != action_dim())
        throw std::invalid_argument("ReplayBuffer::add: dimension mismatch");
    const auto col = static_cast<Eigen::Index>(head_);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        obs_(static_cast<Eigen::Index>(i), col) = obs[i];
        next_obs_(static_cast<Eigen::Index>(i), col) = next_obs[i];
    }
    for (std::size_t i = 0; i < goal.size(); ++i) goal_(static_cast<Eigen::Index>(i), col) = goal[i];
    for (std::size_t i = 0; i < action.size(); ++i) action_(static_cast<Eigen::Index>(i), col) = action[i];
    reward_[col] = reward;
    done_[col] = done ? 1.0 : 0.0;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
}

std::size_t ReplayBuffer::physical(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer: index out of range");
    const std::size_t oldest = size_ < capacity_ ? 0 : head_;
    return (oldest + i) % capacity_;
}

ReplayBuffer::View ReplayBuffer::at(std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(physical(i));
    return {obs_.col(c), goal_.col(c), action_.col(c), next_obs_.col(c), reward_[c], done_[c] != 0.0};
}

// ---------------------------------------------------------- actor-critic

ActorCritic::ActorCritic(std::size_t obs_dim, std::size_t goal_dim, std::size_t action_dim,
                         Td3Config cfg, std::uint64_t seed, Affine obs_norm, Affine goal_norm,
                         Affine action_map)
    : cfg_(std::move(cfg)),
      obs_norm_(std::move(obs_norm)),
      goal_norm_(std::move(goal_norm)),
      action_map_(std::move(action_map)),
      replay_(obs_dim, goal_dim, action_dim, cfg_.buffer_capacity) {
    if (obs_norm_.dim() != obs_dim || goal_norm_.dim() != goal_dim || action_map_.dim() != action_dim)
        throw std::invalid_argument("ActorCritic: normalizer dimension mismatch");
    if (cfg_.batch < 1 || cfg_.policy_delay < 1 || cfg_.update_every < 1)
        throw std::invalid_argument("ActorCritic: batch, policy_delay and update_every must be >= 1");
    const int in = static_cast<int>(obs_dim + goal_dim);
    const int a = static_cast<int>(action_dim);
    actor = nn::init_net(in, cfg_.hidden, a, seed);
    critic1 = nn::init_net(in + a, cfg_.hidden, 1, seed + 1);
    critic2 = nn::init_net(in + a, cfg_.hidden, 1, seed + 2);
    actor_target = actor;
    critic1_target = critic1;
    critic2_target = critic2;
    actor_opt = nn::AdamState::for_net(actor);
    critic1_opt = nn::AdamState::for_net(critic1);
    critic2_opt = nn::AdamState::for_net(critic2);
}

nn::Mat ActorCritic::network_input(const nn::Mat& obs, const nn::Mat& goal) const {
    nn::Mat x(obs.rows() + goal.rows(), obs.cols());
    x.topRows(obs.rows()) =
        ((obs.colwise() - obs_norm_.offset).array().colwise() / obs_norm_.scale.array()).matrix();
    x.bottomRows(goal.rows()) =
        ((goal.colwise() - goal_norm_.offset).array().colwise() / goal_norm_.scale.array()).matrix();
    return x;
}

nn::Mat ActorCritic::to_unit(const nn::Mat& raw) const {
    return ((raw.colwise() - action_map_.offset).array().colwise() / action_map_.scale.array()).matrix();
}

nn::Mat ActorCritic::from_unit(const nn::Mat& unit) const {
    return ((unit.array().colwise() * action_map_.scale.array()).matrix()).colwise() + action_map_.offset;
}

namespace {

nn::Mat as_col(std::span<const double> v) {
    return Eigen::Map<const nn::Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nn::Mat ActorCritic::act_batch(const nn::Mat& obs, const nn::Mat& goal) const {
    return from_unit(nn::forward_batch(actor, network_input(obs, goal)).array().tanh().matrix());
}

nn::Vec ActorCritic::act(std::span<const double> obs, std::span<const double> goal) const {
    if (obs.size() != obs_norm_.dim() || goal.size() != goal_norm_.dim())
        throw std::invalid_argument("ActorCritic::act: dimension mismatch");
    return act_batch(as_col(obs), as_col(goal)).col(0);
}

nn::Vec ActorCritic::clamp_action(nn::Vec a) const {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a[i] = std::clamp(a[i], action_map_.offset[i] - action_map_.scale[i],
                          action_map_.offset[i] + action_map_.scale[i]);
    return a;
}

std::optional<Td3Losses> td3_update(ActorCritic& ac, int batch, std::mt19937_64& rng) {
    const ReplayBuffer& rb = ac.replay();
    if (batch < 1) throw std::invalid_argument("td3_update: batch must be >= 1");
    if (rb.size() < static_cast<std::size_t>(batch)) return std::nullopt;
    const Td3Config& cfg = ac.config();

    const auto n = static_cast<Eigen::Index>(batch);
    std::uniform_int_distribution<std::size_t> pick(0, rb.size() - 1);
    nn::Mat obs(rb.obs().rows(), n), goal(rb.goal().rows(), n), act(rb.action().rows(), n),
        next(rb.obs().rows(), n);
    nn::Vec rew(n), done(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto c = static_cast<Eigen::Index>(rb.physical(pick(rng)));
        obs.col(j) = rb.obs().col(c);
        goal.col(j) = rb.goal().col(c);
        act.col(j) = rb.action().col(c);
        next.col(j) = rb.next_obs().col(c);
        rew[j] = rb.reward()[c];
        done[j] = rb.done()[c];
    }

    const nn::Mat x = ac.network_input(obs, goal);
    const nn::Mat x_next = ac.network_input(next, goal);
    const nn::Mat a_unit = ac.to_unit(act).cwiseMax(-1.0).cwiseMin(1.0);

    // Target: smoothed target-policy action, clipped double-Q.
    std::normal_distribution<double> noise(0.0, cfg.target_noise);
    nn::Mat a_next = nn::forward_batch(ac.actor_target, x_next).array().tanh().matrix();
    for (Eigen::Index i = 0; i < a_next.size(); ++i) {
        const double e = std::clamp(noise(rng), -cfg.target_noise_clip, cfg.target_noise_clip);
        a_next(i) = std::clamp(a_next(i) + e, -1.0, 1.0);
    }
    nn::Mat xa_next(x_next.rows() + a_next.rows(), n);
    xa_next << x_next, a_next;
    const nn::Mat q1t = nn::forward_batch(ac.critic1_target, xa_next);
    const nn::Mat q2t = nn::forward_batch(ac.critic2_target, xa_next);
    nn::Mat y(1, n);
    for (Eigen::Index j = 0; j < n; ++j)
        y(0, j) = cfg.reward_scale * rew[j] + cfg.gamma * (1.0 - done[j]) * std::min(q1t(0, j), q2t(0, j));

    nn::Mat xa(x.rows() + a_unit.rows(), n);
    xa << x, a_unit;
    const nn::MseResult l1 = nn::grad_mse(ac.critic1, xa, y);
    const nn::MseResult l2 = nn::grad_mse(ac.critic2, xa, y);
    nn::adam_step(ac.critic1, l1.grads, ac.critic1_opt, cfg.critic_lr);
    nn::adam_step(ac.critic2, l2.grads, ac.critic2_opt, cfg.critic_lr);
    ++ac.critic_steps_;

    Td3Losses losses;
    losses.critic_loss = 0.5 * (l1.loss + l2.loss);
    if (ac.critic_steps_ % cfg.policy_delay != 0) return losses;

    // Actor: ascend Q1(s, g, tanh(actor(s, g))).
    nn::ForwardCache actor_cache;
    const nn::Mat pre = nn::forward_batch(ac.actor, x, actor_cache);
    const nn::Mat a_pi = pre.array().tanh().matrix();
    nn::Mat xa_pi(x.rows() + a_pi.rows(), n);
    xa_pi << x, a_pi;
    nn::ForwardCache critic_cache;
    const nn::Mat q = nn::forward_batch(ac.critic1, xa_pi, critic_cache);
    const nn::Mat dq = nn::Mat::Constant(1, n, -1.0 / static_cast<double>(n));
    const nn::BackwardResult cb = nn::backward(ac.critic1, critic_cache, dq, true);
    const nn::Mat da = cb.input_grad.bottomRows(a_pi.rows());
    const nn::Mat dpre = (da.array() * (1.0 - a_pi.array().square())).matrix();
    const nn::BackwardResult ab = nn::backward(ac.actor, actor_cache, dpre, false);
    nn::adam_step(ac.actor, ab.grads, ac.actor_opt, cfg.actor_lr);
    losses.actor_loss = -q.mean();

    nn::polyak_update(ac.actor_target, ac.actor, cfg.tau);
    nn::polyak_update(ac.critic1_target, ac.critic1, cfg.tau);
    nn::polyak_update(ac.critic2_target, ac.critic2, cfg.tau);
    return losses;
}

nn::Vec controller_act(const ActorCritic& ac, std::span<const double> s, std::span<const double> g,
                       bool explore, std::mt19937_64* rng) {
    nn::Vec a = ac.act(s, g);
    if (explore) {
        if (!rng) throw std::invalid_argument("controller_act: exploration needs an rng");
        std::normal_distribution<double> noise(0.0, ac.config().expl_sigma);
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(*rng);
    }
    return ac.clamp_action(std::move(a));
}

std::vector<double> encode_goal(const Box& g) {
    std::vector<double> out = g.center();
    const Point h = g.half_width();
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

nn::Vec tutor_act(const ActorCritic& ac, std::span<const double> s, const Box& goal, bool explore,
                  std::mt19937_64* rng) {
    const std::vector<double> enc = encode_goal(goal);
    return controller_act(ac, s, enc, explore, rng);
}

RelabelResult tutor_relabel(const ActorCritic& controller, const std::vector<Point>& states,
                            const std::vector<Point>& actions, std::span<const double> final_oracle,
                            std::span<const double> original_goal, const Box& bounds,
                            std::span<const double> sample_sigma, std::mt19937_64& rng,
                            std::size_t n_samples) {
    if (states.empty() || states.size() != actions.size())
        throw std::invalid_argument("tutor_relabel: need one action per state");
    const std::size_t gd = bounds.dim();
    if (final_oracle.size() != gd || original_goal.size() != gd)
        throw std::invalid_argument("tutor_relabel: goal dimension mismatch");
    if (sample_sigma.size() != gd) throw std::invalid_argument("tutor_relabel: sigma dimension mismatch");

    RelabelResult r;
    auto clamp_to_bounds = [&](Point p) {
        for (std::size_t i = 0; i < gd; ++i) p[i] = std::clamp(p[i], bounds.lower(i), bounds.upper(i));
        return p;
    };
    r.candidates.emplace_back(original_goal.begin(), original_goal.end());
    r.candidates.push_back(clamp_to_bounds(Point(final_oracle.begin(), final_oracle.end())));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t k = 0; k < n_samples; ++k) {
        Point p(final_oracle.begin(), final_oracle.end());
        for (std::size_t i = 0; i < gd; ++i) p[i] += sample_sigma[i] * noise(rng);
        r.candidates.push_back(clamp_to_bounds(std::move(p)));
    }

    // Evaluate the controller on every (state, candidate) pair in one batch.
    const auto len = static_cast<Eigen::Index>(states.size());
    const auto nc = static_cast<Eigen::Index>(r.candidates.size());
    const auto sd = static_cast<Eigen::Index>(states.front().size());
    nn::Mat obs(sd, len * nc), goal(static_cast<Eigen::Index>(gd), len * nc);
    for (Eigen::Index c = 0; c < nc; ++c)
        for (Eigen::Index i = 0; i < len; ++i) {
            obs.col(c * len + i) = as_col(states[static_cast<std::size_t>(i)]);
            goal.col(c * len + i) = as_col(r.candidates[static_cast<std::size_t>(c)]);
        }
    const nn::Mat pred = controller.act_batch(obs, goal);
    for (Eigen::Index c = 0; c < nc; ++c) {
        double score = 0.0;
        for (Eigen::Index i = 0; i < len; ++i)
            score -= (as_col(actions[static_cast<std::size_t>(i)]) - pred.col(c * len + i)).squaredNorm();
        r.scores.push_back(score);
    }
    r.index = static_cast<std::size_t>(std::max_element(r.scores.begin(), r.scores.end()) - r.scores.begin());
    r.chosen = r.candidates[r.index];
    return r;
}

// ---------------------------------------------------------------- commander

QTable::QTable(const std::vector<GoalId>& goals, CommanderConfig cfg) : cfg_(cfg), epsilon_(cfg.epsilon0) {
    if (goals.empty()) throw std::invalid_argument("QTable: no goals");
    goals_ = goals;
    std::sort(goals_.begin(), goals_.end());
    if (std::adjacent_find(goals_.begin(), goals_.end()) != goals_.end())
        throw std::invalid_argument("QTable: duplicate goal id");
    for (GoalId a : goals_)
        for (GoalId b : goals_) values_[{a, b}] = 0.0;
}

bool QTable::has(GoalId g) const { return std::binary_search(goals_.begin(), goals_.end(), g); }

double QTable::q(GoalId s, GoalId a) const {
    if (!has(s) || !has(a)) throw std::out_of_range("QTable: unknown goal id");
    const auto it = values_.find({s, a});
    return it == values_.end() ? 0.0 : it->second;
}

void QTable::set(GoalId s, GoalId a, double v) {
    if (!has(s) || !has(a)) throw std::out_of_range("QTable: unknown goal id");
    values_[{s, a}] = v;
}

void QTable::decay_epsilon() { epsilon_ = std::max(cfg_.epsilon_min, epsilon_ - cfg_.epsilon_decay); }

void QTable::add_reach_edge(GoalId from, GoalId to) {
    if (!has(from) || !has(to)) throw std::out_of_range("QTable: unknown goal id");
    reach_[from].insert(to);
}

void QTable::remove_reach_edge(GoalId from, GoalId to) {
    const auto it = reach_.find(from);
    if (it == reach_.end()) return;
    it->second.erase(to);
    if (it->second.empty()) reach_.erase(it);
}

std::vector<GoalId> QTable::candidates(GoalId s) const {
    const auto it = reach_.find(s);
    if (it == reach_.end() || it->second.empty()) return goals_;
    return {it->second.begin(), it->second.end()};
}

void QTable::reset_goals(std::vector<GoalId> goals, std::map<GoalPair, double> values,
                         std::map<GoalId, std::set<GoalId>> reach) {
    std::sort(goals.begin(), goals.end());
    goals_ = std::move(goals);
    values_ = std::move(values);
    reach_ = std::move(reach);
}

GoalId commander_act(QTable& q, GoalId current, bool explore, std::mt19937_64* rng) {
    if (!q.has(current)) throw std::out_of_range("commander_act: unknown current goal");
    const std::vector<GoalId> cands = q.candidates(current);
    if (explore) {
        if (!rng) throw std::invalid_argument("commander_act: exploration needs an rng");
        const double u = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
        const bool random = u < q.epsilon();
        q.decay_epsilon();
        if (random) {
            std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
            return cands[pick(*rng)];
        }
    }
    return commander_greedy(q, current);
}

GoalId commander_greedy(const QTable& q, GoalId current) {
    if (!q.has(current)) throw std::out_of_range("commander_greedy: unknown current goal");
    const std::vector<GoalId> cands = q.candidates(current);
    GoalId best = cands.front();
    double best_q = q.q(current, best);
    for (std::size_t i = 1; i < cands.size(); ++i) {
        const double v = q.q(current, cands[i]);
        if (v > best_q) {
            best_q = v;
            best = cands[i];
        }
    }
    return best;
}

bool commander_update(QTable& q, GoalId s, GoalId a, double r, GoalId next, bool done) {
    if (!q.has(s) || !q.has(a) || !q.has(next)) return false;
    double target = r;
    if (!done) {
        double best = -std::numeric_limits<double>::infinity();
        for (GoalId c : q.candidates(next)) best = std::max(best, q.q(next, c));
        target += q.config().gamma * best;
    }
    const double old = q.q(s, a);
    q.set(s, a, old + q.config().lr * (target - old));
    return true;
}

void q_table_transfer(QTable& q, GoalId refined, const std::vector<GoalId>& reach_ids,
                      const std::vector<GoalId>& other_ids, GoalId successor) {
    if (!q.has(refined)) throw std::invalid_argument("q_table_transfer: refined goal not in table");
    if (!q.has(successor)) throw std::invalid_argument("q_table_transfer: unknown successor");
    std::vector<GoalId> pieces = reach_ids;
    pieces.insert(pieces.end(), other_ids.begin(), other_ids.end());
    if (pieces.empty()) throw std::invalid_argument("q_table_transfer: no pieces");
    for (GoalId p : pieces)
        if (q.has(p)) throw std::invalid_argument("q_table_transfer: piece id already in table");

    const std::vector<GoalId> old_goals = q.goals();
    double col_max = -std::numeric_limits<double>::infinity();
    double col_min = std::numeric_limits<double>::infinity();
    for (GoalId g : old_goals) {
        col_max = std::max(col_max, q.q(g, successor));
        col_min = std::min(col_min, q.q(g, successor));
    }
    const bool self_split = successor == refined;
    std::set<GoalId> reach_set(reach_ids.begin(), reach_ids.end());

    std::vector<GoalId> kept;
    for (GoalId g : old_goals)
        if (g != refined) kept.push_back(g);

    std::map<GoalPair, double> values;
    for (GoalId s : kept)
        for (GoalId t : kept) values[{s, t}] = q.q(s, t);
    for (GoalId p : pieces) {
        for (GoalId t : kept) {
            double v = q.q(refined, t);
            if (!self_split && t == successor) v = reach_set.count(p) ? col_max : col_min;
            values[{p, t}] = v;
        }
        for (GoalId s : kept) values[{s, p}] = q.q(s, refined);
        for (GoalId p2 : pieces) values[{p, p2}] = q.q(refined, refined);
    }

    std::map<GoalId, std::set<GoalId>> reach;
    for (const auto& [from, tos] : q.reach_graph()) {
        std::set<GoalId> out;
        for (GoalId t : tos) {
            if (t == refined) {
                if (from != refined) out.insert(pieces.begin(), pieces.end());
            } else {
                out.insert(t);
            }
        }
        if (from == refined) {
            for (GoalId p : pieces) {
                std::set<GoalId> po;
                for (GoalId t : out) po.insert(t);
                if (!po.empty()) reach[p].insert(po.begin(), po.end());
            }
        } else if (!out.empty()) {
            reach[from] = std::move(out);
        }
    }
    if (!self_split)
        for (GoalId p : reach_ids) reach[p].insert(successor);
    // An edge toward the successor inherited from the refined goal only holds for reachable pieces.
    for (GoalId p : other_ids) {
        auto it = reach.find(p);
        if (it != reach.end() && !self_split) {
            it->second.erase(successor);
            if (it->second.empty()) reach.erase(it);
        }
    }

    std::vector<GoalId> goals = kept;
    goals.insert(goals.end(), pieces.begin(), pieces.end());
    q.reset_goals(std::move(goals), std::move(values), std::move(reach));
}

void write_qtable_csv(std::ostream& out, const QTable& q) {
    out << "# star qtable v1\n";
    out << "source,target,value\n";
    out.precision(17);
    for (const auto& [key, v] : q.values()) out << key.first.value << ',' << key.second.value << ',' << v << '\n';
}

QTable read_qtable_csv(std::istream& in, const std::vector<GoalId>& goals, CommanderConfig cfg) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::tuple<std::uint64_t, std::uint64_t, double>> rows;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.rfind("# star qtable v", 0) == 0 && line != "# star qtable v1")
            throw FormatError("qtable csv: unsupported version '" + line.substr(2) + "'");
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != "source,target,value")
                throw FormatError("qtable csv line " + std::to_string(lineno) + ": bad header");
            header = true;
            continue;
        }
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
            throw FormatError("qtable csv line " + std::to_string(lineno) + ": expected 3 fields");
        try {
            rows.emplace_back(std::stoull(a), std::stoull(b), std::stod(c));
        } catch (const std::exception&) {
            throw FormatError("qtable csv line " + std::to_string(lineno) + ": bad number");
        }
    }
    if (!header) throw FormatError("qtable csv: missing header");
    QTable q(goals, cfg);
    for (const auto& [s, t, v] : rows) {
        if (!q.has(GoalId{s}) || !q.has(GoalId{t}))
            throw FormatError("qtable csv: entry refers to a goal outside the partition");
        q.set(GoalId{s}, GoalId{t}, v);
    }
    return q;
}

}  // namespace star
