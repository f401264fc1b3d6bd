#include "star/theory.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "star/forward_model.hpp"

namespace star::theory {

Point ToyMDP::step(const Point& s, const Point& a) const {
    if (s.size() != space.dim() || a.size() != space.dim()) throw std::invalid_argument("ToyMDP::step: dimension mismatch");
    Point next(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        next[i] = std::clamp(s[i] + std::clamp(a[i], -max_step, max_step), space.lower(i), space.upper(i));
    for (const Box& o : obstacles) {
        bool inside = true;
        for (std::size_t i = 0; i < next.size() && inside; ++i)
            inside = next[i] > o.lower(i) && next[i] < o.upper(i);
        if (inside) return s;
    }
    return next;
}

double ToyMDP::reward(const Point& s) const {
    double d2 = 0.0;
    for (std::size_t i = 0; i < goal.size(); ++i) d2 += (s[i] - goal[i]) * (s[i] - goal[i]);
    return -std::sqrt(d2);
}

Abstraction Abstraction::from_partition(const Partition& p) {
    Abstraction a;
    for (const auto& [id, box] : p.goals()) a.boxes.push_back(box);
    return a;
}

std::optional<std::size_t> Abstraction::locate(const Point& s) const {
    for (std::size_t i = 0; i < boxes.size(); ++i)
        if (box_contains(boxes[i], s)) return i;
    return std::nullopt;
}

LowPolicy nearest_point_policy(double max_step) {
    return [max_step](const Point& s, const Box& target) {
        Point a(s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            a[i] = std::clamp(std::clamp(s[i], target.lower(i), target.upper(i)) - s[i], -max_step, max_step);
        return a;
    };
}

PointPolicy straight_policy(double max_step) {
    return [max_step](const Point& s, const Point& target) {
        Point a(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) a[i] = std::clamp(target[i] - s[i], -max_step, max_step);
        return a;
    };
}

std::vector<Point> box_grid(const Box& b, int per_edge) {
    if (per_edge < 1) throw std::invalid_argument("box_grid: need at least one point per edge");
    const std::size_t d = b.dim();
    std::vector<std::vector<double>> axes(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (b.width(i) == 0.0 || per_edge == 1) {
            axes[i] = {per_edge == 1 ? 0.5 * (b.lower(i) + b.upper(i)) : b.lower(i)};
            continue;
        }
        for (int j = 0; j < per_edge; ++j)
            axes[i].push_back(j == per_edge - 1 ? b.upper(i)
                                                : b.lower(i) + b.width(i) * j / static_cast<double>(per_edge - 1));
    }
    std::vector<Point> out{Point{}};
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<Point> next;
        next.reserve(out.size() * axes[i].size());
        for (const Point& p : out)
            for (double v : axes[i]) {
                Point q = p;
                q.push_back(v);
                next.push_back(std::move(q));
            }
        out = std::move(next);
    }
    return out;
}

bool pairwise_reachable(const ToyMDP& mdp, const Box& source, const Box& target, const LowPolicy& low,
                        int k, int grid) {
    for (const Point& p : box_grid(source, grid)) {
        Point s = p;
        for (int t = 0; t < k; ++t) s = mdp.step(s, low(s, target));
        // Grid points and moves are computed in floating point; allow round-off at the faces.
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double tol = 1e-9 * (1.0 + std::abs(target.lower(i)) + std::abs(target.upper(i)));
            if (s[i] < target.lower(i) - tol || s[i] > target.upper(i) + tol) return false;
        }
    }
    return true;
}

namespace {

double diameter(const Box& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < b.dim(); ++i) d2 += b.width(i) * b.width(i);
    return std::sqrt(d2);
}

}  // namespace

AbstractionAudit audit_def3(const Abstraction& a, const std::vector<Point>& traj, const LowPolicy& low,
                            const ToyMDP& mdp, int k, const AuditOptions& opt) {
    if (!low) throw std::invalid_argument("audit_def3: missing low-level policy");
    if (traj.size() < 2) throw std::invalid_argument("audit_def3: trajectory needs at least two goals");
    if (k < 1) throw std::invalid_argument("audit_def3: k must be >= 1");
    AbstractionAudit out;

    out.c1 = true;
    for (const Point& s : box_grid(mdp.space, opt.grid)) {
        const auto idx = a.locate(s);
        if (!idx || !box_contains(a.boxes[*idx], s)) {
            out.c1 = false;
            break;
        }
    }

    std::vector<std::optional<std::size_t>> n(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        n[i] = a.locate(traj[i]);
        if (!n[i]) out.c1 = false;
    }

    out.c2 = true;
    for (std::size_t i = 0; i < traj.size(); ++i)
        for (std::size_t j = i + 1; j < traj.size(); ++j) {
            if (!n[i] || !n[j]) {
                out.c2 = false;
                continue;
            }
            if (*n[i] != *n[j] && intersection_volume(a.boxes[*n[i]], a.boxes[*n[j]]) > 0.0) out.c2 = false;
        }

    out.c3 = true;
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        const bool ok = n[i] && n[i + 1] &&
                        pairwise_reachable(mdp, a.boxes[*n[i]], a.boxes[*n[i + 1]], low, k, opt.grid);
        out.pair_reachable.push_back(ok);
        out.c3 = out.c3 && ok;
    }

    if (n.back()) {
        const Box& last = a.boxes[*n.back()];
        const double r_goal = mdp.reward(traj.back());
        for (const Point& s : box_grid(last, opt.grid))
            out.epsilon = std::max(out.epsilon, std::abs(r_goal - mdp.reward(s)));
        out.c4 = out.epsilon <= opt.epsilon_max;
        double b = 0.0;
        for (const auto& idx : n)
            if (idx) b = std::max(b, diameter(a.boxes[*idx]));
        out.b = b;
    }
    return out;
}

namespace {

void check_bound_args(int m, int k, double gamma, double r_max) {
    if (m < 1 || k < 1) throw std::invalid_argument("bound: m and k must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("bound: gamma must lie in [0,1)");
    if (!(r_max >= 0.0)) throw std::invalid_argument("bound: R_max must be >= 0");
}

double geometric(double gamma, int n_terms) {
    double s = 0.0, p = 1.0;
    for (int i = 0; i < n_terms; ++i) {
        s += p;
        p *= gamma;
    }
    return s;
}

double eq1_sums(int mk, double gamma, bool count_middle_twice) {
    const int half = mk / 2;
    double s = 0.0;
    for (int i = 0; i <= half; ++i) s += std::pow(gamma, i) * i;
    for (int i = count_middle_twice ? half : half + 1; i <= mk; ++i) s += std::pow(gamma, i) * (mk - i);
    return s;
}

}  // namespace

double bound_eq1(int m, int k, double gamma, double r_max, double eps) {
    check_bound_args(m, k, gamma, r_max);
    if ((m * k) % 2 != 0) throw std::invalid_argument("bound_eq1: m*k must be even");
    if (!(eps >= 0.0)) throw std::invalid_argument("bound_eq1: epsilon must be >= 0");
    const int mk = m * k;
    return eq1_sums(mk, gamma, true) * 2.0 * r_max + geometric(gamma, mk + 1) * eps;
}

double bound_eq1_single_count(int m, int k, double gamma, double r_max, double eps) {
    check_bound_args(m, k, gamma, r_max);
    if ((m * k) % 2 != 0) throw std::invalid_argument("bound_eq1: m*k must be even");
    if (!(eps >= 0.0)) throw std::invalid_argument("bound_eq1: epsilon must be >= 0");
    const int mk = m * k;
    return eq1_sums(mk, gamma, false) * 2.0 * r_max + geometric(gamma, mk + 1) * eps;
}

double bound_eq2(int m, int k, double gamma, double r_max, double b) {
    check_bound_args(m, k, gamma, r_max);
    if (!(b >= 0.0)) throw std::invalid_argument("bound_eq2: B must be >= 0");
    return (1.0 - std::pow(gamma, m * k + 1)) / (1.0 - gamma) * (k * r_max + b);
}

double exact_value(const ToyMDP& mdp, const StatePolicy& policy, const Point& s0, int horizon) {
    if (horizon < 0) throw std::invalid_argument("exact_value: negative horizon");
    double v = 0.0, disc = 1.0;
    Point s = s0;
    for (int t = 0; t <= horizon; ++t) {
        v += disc * mdp.reward(s);
        disc *= mdp.gamma;
        if (t < horizon) s = mdp.step(s, policy(s, t));
    }
    return v;
}

StatePolicy hierarchical_point_policy(const std::vector<Point>& traj, int k, const PointPolicy& low) {
    return [traj, k, low](const Point& s, int t) {
        const std::size_t i = std::min(static_cast<std::size_t>(t / k) + 1, traj.size() - 1);
        return low(s, traj[i]);
    };
}

StatePolicy hierarchical_box_policy(const std::vector<Point>& traj, const Abstraction& a, int k,
                                    const LowPolicy& low) {
    std::vector<Box> targets;
    for (const Point& g : traj) {
        const auto idx = a.locate(g);
        if (!idx) throw std::invalid_argument("hierarchical_box_policy: trajectory goal outside the abstraction");
        targets.push_back(a.boxes[*idx]);
    }
    return [targets, k, low](const Point& s, int t) {
        const std::size_t i = std::min(static_cast<std::size_t>(t / k) + 1, targets.size() - 1);
        return low(s, targets[i]);
    };
}

std::vector<ToyCase> toy_suite() {
    std::vector<ToyCase> out;
    {
        ToyCase c;
        c.mdp.name = "chain";
        c.mdp.space = Box({-0.5}, {2.5});
        c.mdp.goal = {2.0};
        c.mdp.r_max = 1.0;
        c.optimal = {{0.0}, {1.0}, {2.0}};
        c.k = 1;
        c.abstraction.boxes = {Box({-0.5}, {0.5}), Box({0.5}, {1.5}), Box({1.5}, {2.5})};
        out.push_back(c);
    }
    {
        ToyCase c;
        c.mdp.name = "corridor";
        c.mdp.space = Box({0.0, 0.0}, {4.0, 1.0});
        c.mdp.goal = {3.5, 0.5};
        c.mdp.r_max = std::sqrt(2.0);
        c.optimal = {{0.5, 0.5}, {1.5, 0.5}, {2.5, 0.5}, {3.5, 0.5}};
        c.k = 2;
        for (int i = 0; i < 4; ++i) c.abstraction.boxes.push_back(Box({1.0 * i, 0.0}, {1.0 * i + 1.0, 1.0}));
        out.push_back(c);
    }
    {
        ToyCase c;
        c.mdp.name = "l_turn";
        c.mdp.space = Box({0.0, 0.0}, {2.0, 2.0});
        c.mdp.obstacles = {Box({0.0, 1.0}, {1.0, 2.0})};
        c.mdp.goal = {1.5, 1.5};
        c.mdp.r_max = std::sqrt(2.0);
        c.optimal = {{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}};
        c.k = 1;
        c.abstraction.boxes = {Box({0.0, 0.0}, {1.0, 1.0}), Box({1.0, 0.0}, {2.0, 1.0}),
                               Box({1.0, 1.0}, {2.0, 2.0}), Box({0.0, 1.0}, {1.0, 2.0})};
        out.push_back(c);
    }
    for (ToyCase& c : out) {
        c.mdp.gamma = 0.9;
        c.mdp.max_step = 1.0;
        c.low_abstract = nearest_point_policy(c.mdp.max_step);
        c.low_concrete = straight_policy(c.mdp.max_step);
    }
    return out;
}

BoundCheck check_bounds(const ToyCase& c, const AuditOptions& opt) {
    BoundCheck b;
    b.name = c.mdp.name;
    b.m = static_cast<int>(c.optimal.size()) - 1;
    b.k = c.k;
    b.gamma = c.mdp.gamma;
    b.r_max = c.mdp.r_max;
    b.audit = audit_def3(c.abstraction, c.optimal, c.low_abstract, c.mdp, c.k, opt);
    const int horizon = b.m * b.k;
    const Point& s0 = c.optimal.front();
    b.v_optimal = exact_value(c.mdp, hierarchical_point_policy(c.optimal, c.k, c.low_concrete), s0, horizon);
    b.v_abstract =
        exact_value(c.mdp, hierarchical_box_policy(c.optimal, c.abstraction, c.k, c.low_abstract), s0, horizon);
    b.gap = std::abs(b.v_optimal - b.v_abstract);
    b.eq1 = bound_eq1(b.m, b.k, b.gamma, b.r_max, b.audit.epsilon);
    b.eq2 = bound_eq2(b.m, b.k, b.gamma, b.r_max, b.audit.b.value_or(0.0));
    return b;
}

bool RefinementReport::passed() const {
    return std::all_of(step_is_refinement.begin(), step_is_refinement.end(), [](bool v) { return v; }) &&
           coverage_monotone && final_audit.passed();
}

namespace {

int reachable_pairs(const Partition& p, const std::vector<Point>& traj, const LowPolicy& low, const ToyMDP& mdp,
                    int k, int grid) {
    int count = 0;
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        const GoalId from = p.locate(traj[i]);
        const GoalId to = p.locate(traj[i + 1]);
        // A step that stays inside one goal is not a transition between abstract goals.
        if (from == to) continue;
        if (pairwise_reachable(mdp, p.box(from), p.box(to), low, k, grid)) ++count;
    }
    return count;
}

}  // namespace

RefinementReport refinement_audit(const std::vector<Partition>& history, const std::vector<Point>& traj,
                                  const LowPolicy& low, const ToyMDP& mdp, int k, const AuditOptions& opt) {
    if (history.empty()) throw std::invalid_argument("refinement_audit: empty history");
    if (!low) throw std::invalid_argument("refinement_audit: missing low-level policy");
    RefinementReport rep;
    rep.coverage.push_back(reachable_pairs(history.front(), traj, low, mdp, k, opt.grid));
    for (std::size_t h = 1; h < history.size(); ++h) {
        const Partition& prev = history[h - 1];
        const Partition& next = history[h];
        if (prev.bounds() != next.bounds()) throw std::invalid_argument("refinement_audit: bounds changed");
        if (prev.goals() == next.goals()) {
            rep.step_is_refinement.push_back(true);
            rep.coverage.push_back(rep.coverage.back());
            continue;
        }
        std::vector<GoalId> removed, added;
        for (const auto& [id, box] : prev.goals()) {
            if (!next.has(id)) {
                removed.push_back(id);
            } else if (next.box(id) != box) {
                throw std::invalid_argument("refinement_audit: a kept goal changed its box");
            }
        }
        for (const auto& [id, box] : next.goals())
            if (!prev.has(id)) added.push_back(id);
        if (removed.size() != 1 || added.empty())
            throw std::invalid_argument("refinement_audit: step does not replace exactly one goal");
        const Box parent = prev.box(removed.front());
        std::vector<Box> pieces;
        for (GoalId id : added) pieces.push_back(next.box(id));
        if (!tiles(parent, pieces)) throw std::invalid_argument("refinement_audit: pieces do not tile the parent");
        ++rep.refinements;

        // Some piece must reach a goal that the parent as a whole did not.
        bool gained = false;
        for (const Box& piece : pieces) {
            for (const auto& [tid, tbox] : next.goals()) {
                if (pairwise_reachable(mdp, piece, tbox, low, k, opt.grid) &&
                    !pairwise_reachable(mdp, parent, tbox, low, k, opt.grid)) {
                    gained = true;
                    break;
                }
            }
            if (gained) break;
        }
        rep.step_is_refinement.push_back(gained);
        rep.coverage.push_back(reachable_pairs(next, traj, low, mdp, k, opt.grid));
        if (rep.coverage.back() < rep.coverage[rep.coverage.size() - 2]) rep.coverage_monotone = false;
    }
    rep.final_audit = audit_def3(Abstraction::from_partition(history.back()), traj, low, mdp, k, opt);
    return rep;
}

ChainExperiment chain_refinement_experiment(const ReachConfig& cfg, int max_rounds) {
    ChainExperiment ex;
    ex.mdp.name = "chain_drift";
    ex.mdp.space = Box({-0.5}, {3.5});
    ex.mdp.goal = {3.0};
    ex.mdp.r_max = 1.0;
    ex.mdp.gamma = 0.9;
    ex.optimal = {{0.0}, {1.0}, {2.0}, {3.0}};
    const int k = 1;
    const LowPolicy drift = [](const Point&, const Box&) { return Point{1.0}; };

    // Exact k-step model of the drift: s' = s + 1 whatever the target.
    nn::DenseLayer layer;
    layer.weight = nn::Mat::Zero(1, 3);
    layer.weight(0, 0) = 1.0;
    layer.bias = nn::Vec::Constant(1, 1.0);
    const ForwardModel f = ForwardModel::from_net(nn::DenseNet({layer}), k, 1);

    Partition p = Partition::single(ex.mdp.space);
    ex.history.push_back(p);
    for (int round = 0; round < max_rounds; ++round) {
        if (audit_def3(Abstraction::from_partition(p), ex.optimal, drift, ex.mdp, k).passed()) break;
        std::vector<GoalPair> pairs;
        for (std::size_t i = 0; i + 1 < ex.optimal.size(); ++i)
            pairs.emplace_back(p.locate(ex.optimal[i]), p.locate(ex.optimal[i + 1]));
        const RefinementResult res = refine_partition(p, pairs, f, cfg);
        if (res.steps.empty()) break;
        ex.history.insert(ex.history.end(), res.steps.begin(), res.steps.end());
        p = res.partition;
    }
    ex.report = refinement_audit(ex.history, ex.optimal, drift, ex.mdp, k);
    return ex;
}

}  // namespace star::theory
