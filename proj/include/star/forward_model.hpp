#pragma once

// k-step forward model: predicts psi(s_{t+k}) from psi(s_t) and the targeted
// goal box. Inputs and outputs are normalized by the oracle bounds outside the
// network, so the network itself sees values in roughly [-1, 1].

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "star/geometry.hpp"
#include "star/nn.hpp"

namespace star {

using GoalPair = std::pair<GoalId, GoalId>;

/// [s, center(target), halfwidth(target)]
std::vector<double> encode_input(std::span<const double> s, const Box& target);

struct ForwardModelConfig {
    std::vector<int> hidden{32, 32};
    double lr = 0.001;
    int batch = 64;
    int epochs = 5;
    std::size_t buffer_capacity = 100000;
    // Environment steps of data a pair needs before it is trained on
    // (records * k).
    int min_pair_steps = 5000;
    // Most recent eligible records used per training call; 0 = no cap.
    std::size_t max_train_records = 0;
    int window = 10;
};

class ForwardModel {
public:
    ForwardModel() = default;
    /// Fresh network; normalization taken from the oracle bounds.
    ForwardModel(const Box& oracle_bounds, int k, const std::vector<int>& hidden,
                 std::uint64_t seed, int window = 10);
    /// Wrap an existing network. With no bounds the normalization is the
    /// identity. The model counts as trained.
    static ForwardModel from_net(nn::DenseNet net, int k, std::size_t oracle_dim,
                                 std::optional<Box> oracle_bounds = std::nullopt,
                                 int window = 10);

    std::size_t oracle_dim() const { return oracle_dim_; }
    int k() const { return k_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }
    const nn::DenseNet& net() const { return net_; }
    nn::DenseNet& net() { return net_; }
    nn::AdamState& adam() { return adam_; }

    /// Network-space input for (s, target).
    nn::Vec normalized_input(std::span<const double> s, const Box& target) const;
    /// Network-space target vector for an observed psi(s_{t+k}).
    nn::Vec normalized_output(std::span<const double> s_next) const;
    /// Network-space input box for source box x {encoding of target}.
    Box normalized_input_box(const Box& source, const Box& target) const;
    /// Map a network-space output box back to oracle coordinates.
    Box denormalize_output_box(const Box& out) const;
    Point denormalize_output(const nn::Vec& out) const;
    /// Squared Euclidean distance in normalized units.
    double normalized_sq_error(std::span<const double> predicted, std::span<const double> actual) const;

    const std::deque<double>& error_window(const GoalPair& pair) const;
    void push_error(const GoalPair& pair, double err);
    const std::map<GoalPair, std::deque<double>>& error_windows() const { return windows_; }
    int window() const { return window_; }
    /// Drop windows of pairs whose goals no longer exist.
    void forget_pairs_not_in(const Partition& p);

private:
    nn::DenseNet net_;
    nn::AdamState adam_;
    int k_ = 1;
    std::size_t oracle_dim_ = 0;
    Point offset_;
    Point scale_;
    bool trained_ = false;
    int window_ = 10;
    std::map<GoalPair, std::deque<double>> windows_;
};

struct FmRecord {
    Point s;
    GoalId source;
    GoalId target;
    Box target_box;
    Point s_next;
};

/// FIFO buffer of Commander transitions feeding the forward model.
class TransitionStore {
public:
    explicit TransitionStore(std::size_t capacity = 100000);

    void add(FmRecord r);
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<FmRecord>& records() const { return records_; }
    std::size_t pair_count(const GoalPair& pair) const;
    /// Indices of the pair's records, oldest first.
    std::vector<std::size_t> pair_indices(const GoalPair& pair) const;
    /// Re-locate sources whose goal id is gone (after refinement).
    void relabel_sources(const Partition& p);

private:
    std::size_t capacity_;
    std::deque<FmRecord> records_;
    std::map<GoalPair, std::size_t> counts_;
};

/// Adam on MSE over `indices` (all records when null): epochs x ceil(N/batch)
/// steps, reshuffled every epoch. Returns the mean loss of each epoch.
std::vector<double> fm_train(ForwardModel& f, const TransitionStore& store, int epochs, int batch,
                             double lr, std::mt19937_64& rng,
                             const std::vector<std::size_t>* indices = nullptr);

Point fm_predict(const ForwardModel& f, std::span<const double> s, const Box& target);

/// Mean normalized squared error over the pair's most recent `batch` records; the value is
/// appended to the pair's error window. Throws InsufficientData with no records.
double fm_error(ForwardModel& f, const TransitionStore& store, const GoalPair& pair, int batch = 64);

}  // namespace star
