#pragma once

// Dense ReLU networks with hand-written reverse accumulation, Adam and
// Polyak averaging. Batches are stored column-wise: one column per sample.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace star::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;    // out
};

/// Feed-forward network: rectifier after every layer except the last.
class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<DenseLayer> layers);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t parameter_count() const;

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    bool same_shape(const DenseNet& other) const;
    bool all_finite() const;

    friend bool operator==(const DenseNet& a, const DenseNet& b);

private:
    std::vector<DenseLayer> layers_;
};

/// Parameter-shaped container used for gradients and optimizer moments.
struct Gradients {
    std::vector<Mat> weight;
    std::vector<Vec> bias;

    static Gradients zeros_like(const DenseNet& net);
    bool all_finite() const;
    bool matches(const DenseNet& net) const;
};

DenseNet init_net(int input_dim, const std::vector<int>& hidden, int output_dim,
                  std::uint64_t seed);

Vec forward(const DenseNet& net, const Vec& x);
Mat forward_batch(const DenseNet& net, const Mat& inputs);

/// Intermediate values kept for the backward pass.
struct ForwardCache {
    std::vector<Mat> inputs;  // inputs[i] feeds layer i
    std::vector<Mat> pre;     // pre-activation of layer i
};

Mat forward_batch(const DenseNet& net, const Mat& inputs, ForwardCache& cache);

struct BackwardResult {
    Gradients grads;
    Mat input_grad;  // empty unless requested
};

/// Reverse pass given dLoss/dOutput for every sample column.
BackwardResult backward(const DenseNet& net, const ForwardCache& cache, const Mat& output_grad,
                        bool want_input_grad = false);

struct MseResult {
    double loss = 0.0;
    Gradients grads;
};

/// Mean over all batch elements and output units of the squared error.
MseResult grad_mse(const DenseNet& net, const Mat& inputs, const Mat& targets);
MseResult grad_mse(const DenseNet& net, const std::vector<Vec>& batch_x,
                   const std::vector<Vec>& batch_y);

struct AdamState {
    Gradients m;
    Gradients v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_net(const DenseNet& net);
};

/// Bias-corrected Adam. Throws CorruptedTraining (net and state untouched)
/// if any gradient is non-finite.
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, double lr);

/// target <- (1 - tau) * target + tau * source
void polyak_update(DenseNet& target, const DenseNet& source, double tau);

// Binary snapshot: "STARNET" magic, u32 version, u32 layer count, then per
// layer u32 out, u32 in, out*in doubles (row-major weight), out doubles (bias).
// All integers and doubles little-endian as laid out in memory.
void write_net(std::ostream& out, const DenseNet& net);
DenseNet read_net(std::istream& in);
void save_net(const std::string& path, const DenseNet& net);
DenseNet load_net(const std::string& path);

}  // namespace star::nn
