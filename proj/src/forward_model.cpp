#include "star/forward_model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "star/errors.hpp"

namespace star {

std::vector<double> encode_input(std::span<const double> s, const Box& target) {
    if (s.size() != target.dim()) throw std::invalid_argument("encode_input: dimension mismatch");
    std::vector<double> out(s.begin(), s.end());
    const Point c = target.center();
    const Point h = target.half_width();
    out.insert(out.end(), c.begin(), c.end());
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

ForwardModel::ForwardModel(const Box& oracle_bounds, int k, const std::vector<int>& hidden,
                           std::uint64_t seed, int window)
    : k_(k), oracle_dim_(oracle_bounds.dim()), window_(window) {
    if (k <= 0) throw std::invalid_argument("ForwardModel: k must be positive");
    if (window < 1) throw std::invalid_argument("ForwardModel: window must be >= 1");
    const int d = static_cast<int>(oracle_dim_);
    net_ = nn::init_net(3 * d, hidden, d, seed);
    adam_ = nn::AdamState::for_net(net_);
    offset_ = oracle_bounds.center();
    scale_ = oracle_bounds.half_width();
    for (double& s : scale_)
        if (s <= 0.0) s = 1.0;
}

ForwardModel ForwardModel::from_net(nn::DenseNet net, int k, std::size_t oracle_dim,
                                    std::optional<Box> oracle_bounds, int window) {
    if (net.input_dim() != 3 * oracle_dim || net.output_dim() != oracle_dim)
        throw std::invalid_argument("ForwardModel: network shape does not match oracle dimension");
    if (k <= 0) throw std::invalid_argument("ForwardModel: k must be positive");
    ForwardModel f;
    f.k_ = k;
    f.oracle_dim_ = oracle_dim;
    f.window_ = window;
    f.net_ = std::move(net);
    f.adam_ = nn::AdamState::for_net(f.net_);
    if (oracle_bounds) {
        f.offset_ = oracle_bounds->center();
        f.scale_ = oracle_bounds->half_width();
        for (double& s : f.scale_)
            if (s <= 0.0) s = 1.0;
    } else {
        f.offset_.assign(oracle_dim, 0.0);
        f.scale_.assign(oracle_dim, 1.0);
    }
    f.trained_ = true;
    return f;
}

nn::Vec ForwardModel::normalized_input(std::span<const double> s, const Box& target) const {
    if (s.size() != oracle_dim_ || target.dim() != oracle_dim_)
        throw std::invalid_argument("ForwardModel: dimension mismatch");
    const std::size_t d = oracle_dim_;
    nn::Vec x(3 * d);
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = (s[i] - offset_[i]) / scale_[i];
        x[d + i] = (0.5 * (target.lower(i) + target.upper(i)) - offset_[i]) / scale_[i];
        x[2 * d + i] = 0.5 * (target.upper(i) - target.lower(i)) / scale_[i];
    }
    return x;
}

nn::Vec ForwardModel::normalized_output(std::span<const double> s_next) const {
    if (s_next.size() != oracle_dim_) throw std::invalid_argument("ForwardModel: dimension mismatch");
    nn::Vec y(oracle_dim_);
    for (std::size_t i = 0; i < oracle_dim_; ++i) y[i] = (s_next[i] - offset_[i]) / scale_[i];
    return y;
}

Box ForwardModel::normalized_input_box(const Box& source, const Box& target) const {
    if (source.dim() != oracle_dim_ || target.dim() != oracle_dim_)
        throw std::invalid_argument("ForwardModel: dimension mismatch");
    const std::size_t d = oracle_dim_;
    Point lo(3 * d), hi(3 * d);
    for (std::size_t i = 0; i < d; ++i) {
        lo[i] = (source.lower(i) - offset_[i]) / scale_[i];
        hi[i] = (source.upper(i) - offset_[i]) / scale_[i];
        const double c = (0.5 * (target.lower(i) + target.upper(i)) - offset_[i]) / scale_[i];
        const double h = 0.5 * (target.upper(i) - target.lower(i)) / scale_[i];
        lo[d + i] = hi[d + i] = c;
        lo[2 * d + i] = hi[2 * d + i] = h;
    }
    return Box(std::move(lo), std::move(hi));
}

Box ForwardModel::denormalize_output_box(const Box& out) const {
    if (out.dim() != oracle_dim_) throw std::invalid_argument("ForwardModel: dimension mismatch");
    Point lo(oracle_dim_), hi(oracle_dim_);
    for (std::size_t i = 0; i < oracle_dim_; ++i) {
        lo[i] = offset_[i] + scale_[i] * out.lower(i);
        hi[i] = offset_[i] + scale_[i] * out.upper(i);
    }
    return Box(std::move(lo), std::move(hi));
}

Point ForwardModel::denormalize_output(const nn::Vec& out) const {
    Point p(oracle_dim_);
    for (std::size_t i = 0; i < oracle_dim_; ++i) p[i] = offset_[i] + scale_[i] * out[i];
    return p;
}

double ForwardModel::normalized_sq_error(std::span<const double> predicted,
                                         std::span<const double> actual) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < oracle_dim_; ++i) {
        const double d = (predicted[i] - actual[i]) / scale_[i];
        sum += d * d;
    }
    return sum;
}

const std::deque<double>& ForwardModel::error_window(const GoalPair& pair) const {
    static const std::deque<double> kEmpty;
    auto it = windows_.find(pair);
    return it == windows_.end() ? kEmpty : it->second;
}

void ForwardModel::push_error(const GoalPair& pair, double err) {
    auto& w = windows_[pair];
    w.push_back(err);
    while (w.size() > static_cast<std::size_t>(window_)) w.pop_front();
}

void ForwardModel::forget_pairs_not_in(const Partition& p) {
    std::erase_if(windows_, [&](const auto& kv) {
        return !p.has(kv.first.first) || !p.has(kv.first.second);
    });
}

TransitionStore::TransitionStore(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("TransitionStore: capacity must be positive");
}

void TransitionStore::add(FmRecord r) {
    if (r.s.size() != r.s_next.size() || r.s.size() != r.target_box.dim())
        throw std::invalid_argument("TransitionStore: record dimension mismatch");
    if (!records_.empty() && r.s.size() != records_.front().s.size())
        throw std::invalid_argument("TransitionStore: record dimension differs from store");
    if (records_.size() == capacity_) {
        const auto& old = records_.front();
        auto it = counts_.find({old.source, old.target});
        if (it != counts_.end() && --it->second == 0) counts_.erase(it);
        records_.pop_front();
    }
    counts_[{r.source, r.target}] += 1;
    records_.push_back(std::move(r));
}

std::size_t TransitionStore::pair_count(const GoalPair& pair) const {
    auto it = counts_.find(pair);
    return it == counts_.end() ? 0 : it->second;
}

std::vector<std::size_t> TransitionStore::pair_indices(const GoalPair& pair) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (records_[i].source == pair.first && records_[i].target == pair.second) out.push_back(i);
    return out;
}

void TransitionStore::relabel_sources(const Partition& p) {
    bool changed = false;
    for (auto& r : records_) {
        if (p.has(r.source)) continue;
        r.source = p.locate(r.s);
        changed = true;
    }
    if (!changed) return;
    counts_.clear();
    for (const auto& r : records_) counts_[{r.source, r.target}] += 1;
}

std::vector<double> fm_train(ForwardModel& f, const TransitionStore& store, int epochs, int batch,
                             double lr, std::mt19937_64& rng,
                             const std::vector<std::size_t>* indices) {
    if (store.empty()) throw InsufficientData("fm_train: empty transition store");
    if (batch < 1) throw std::invalid_argument("fm_train: batch must be positive");
    if (epochs < 0) throw std::invalid_argument("fm_train: negative epoch count");
    std::vector<std::size_t> order;
    if (indices) {
        order = *indices;
        for (std::size_t i : order)
            if (i >= store.size()) throw std::invalid_argument("fm_train: record index out of range");
    } else {
        order.resize(store.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
    }
    if (order.empty()) throw InsufficientData("fm_train: no records selected");

    const auto& recs = store.records();
    const std::size_t in_dim = 3 * f.oracle_dim();
    const std::size_t out_dim = f.oracle_dim();
    std::vector<double> history;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t n = std::min<std::size_t>(batch, order.size() - start);
            nn::Mat x(in_dim, n), y(out_dim, n);
            for (std::size_t j = 0; j < n; ++j) {
                const auto& r = recs[order[start + j]];
                x.col(j) = f.normalized_input(r.s, r.target_box);
                y.col(j) = f.normalized_output(r.s_next);
            }
            const auto res = nn::grad_mse(f.net(), x, y);
            nn::adam_step(f.net(), res.grads, f.adam(), lr);
            loss_sum += res.loss;
            ++steps;
        }
        history.push_back(loss_sum / static_cast<double>(steps));
        f.mark_trained();
    }
    return history;
}

Point fm_predict(const ForwardModel& f, std::span<const double> s, const Box& target) {
    return f.denormalize_output(nn::forward(f.net(), f.normalized_input(s, target)));
}

double fm_error(ForwardModel& f, const TransitionStore& store, const GoalPair& pair, int batch) {
    const auto idx = store.pair_indices(pair);
    if (idx.empty()) throw InsufficientData("fm_error: no records for pair");
    const std::size_t n = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(batch, 1)));
    double sum = 0.0;
    for (std::size_t j = idx.size() - n; j < idx.size(); ++j) {
        const auto& r = store.records()[idx[j]];
        const Point pred = fm_predict(f, r.s, r.target_box);
        sum += f.normalized_sq_error(pred, r.s_next);
    }
    const double err = sum / static_cast<double>(n);
    f.push_error(pair, err);
    return err;
}

}  // namespace star
