#include "star/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "star/errors.hpp"

namespace star::nn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'R', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

double unit_uniform(std::mt19937_64& rng) {
    // 53 random mantissa bits; independent of the standard library's
    // distribution implementation.
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void relu_inplace(Mat& m) { m = m.cwiseMax(0.0); }

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("DenseNet needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weight.rows() == 0 || l.weight.cols() == 0)
            throw std::invalid_argument("DenseNet layer with empty weight");
        if (l.bias.size() != l.weight.rows())
            throw std::invalid_argument("DenseNet bias length does not match weight rows");
        if (i > 0 && layers_[i - 1].weight.rows() != l.weight.cols())
            throw std::invalid_argument("DenseNet layer dimensions do not chain");
    }
}

std::size_t DenseNet::input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t DenseNet::output_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

bool DenseNet::same_shape(const DenseNet& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight.rows() != other.layers_[i].weight.rows() ||
            layers_[i].weight.cols() != other.layers_[i].weight.cols())
            return false;
    }
    return true;
}

bool DenseNet::all_finite() const {
    for (const auto& l : layers_)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        if (a.layers_[i].weight != b.layers_[i].weight) return false;
        if (a.layers_[i].bias != b.layers_[i].bias) return false;
    }
    return true;
}

Gradients Gradients::zeros_like(const DenseNet& net) {
    Gradients g;
    for (const auto& l : net.layers()) {
        g.weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
        g.bias.push_back(Vec::Zero(l.bias.size()));
    }
    return g;
}

bool Gradients::all_finite() const {
    for (const auto& w : weight)
        if (!w.allFinite()) return false;
    for (const auto& b : bias)
        if (!b.allFinite()) return false;
    return true;
}

bool Gradients::matches(const DenseNet& net) const {
    if (weight.size() != net.num_layers() || bias.size() != net.num_layers()) return false;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        const auto& l = net.layers()[i];
        if (weight[i].rows() != l.weight.rows() || weight[i].cols() != l.weight.cols()) return false;
        if (bias[i].size() != l.bias.size()) return false;
    }
    return true;
}

DenseNet init_net(int input_dim, const std::vector<int>& hidden, int output_dim,
                  std::uint64_t seed) {
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("init_net: dimensions must be positive");
    std::vector<int> dims{input_dim};
    for (int h : hidden) {
        if (h < 1) throw std::invalid_argument("init_net: hidden sizes must be positive");
        dims.push_back(h);
    }
    dims.push_back(output_dim);

    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const int fan_in = dims[i];
        const int fan_out = dims[i + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        DenseLayer l{Mat(fan_out, fan_in), Vec::Zero(fan_out)};
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) l.weight(r, c) = (2.0 * unit_uniform(rng) - 1.0) * limit;
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

Vec forward(const DenseNet& net, const Vec& x) {
    if (static_cast<std::size_t>(x.size()) != net.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    Vec h = x;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].weight * h + layers[i].bias;
        if (i + 1 < layers.size()) h = h.cwiseMax(0.0);
    }
    return h;
}

Mat forward_batch(const DenseNet& net, const Mat& inputs) {
    if (static_cast<std::size_t>(inputs.rows()) != net.input_dim())
        throw std::invalid_argument("forward_batch: input dimension mismatch");
    Mat h = inputs;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Mat z = layers[i].weight * h;
        z.colwise() += layers[i].bias;
        if (i + 1 < layers.size()) relu_inplace(z);
        h = std::move(z);
    }
    return h;
}

Mat forward_batch(const DenseNet& net, const Mat& inputs, ForwardCache& cache) {
    if (static_cast<std::size_t>(inputs.rows()) != net.input_dim())
        throw std::invalid_argument("forward_batch: input dimension mismatch");
    const auto& layers = net.layers();
    cache.inputs.resize(layers.size());
    cache.pre.resize(layers.size());
    cache.inputs[0] = inputs;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Mat z = layers[i].weight * cache.inputs[i];
        z.colwise() += layers[i].bias;
        cache.pre[i] = z;
        if (i + 1 < layers.size()) {
            relu_inplace(z);
            cache.inputs[i + 1] = std::move(z);
        } else {
            return z;
        }
    }
    return {};
}

BackwardResult backward(const DenseNet& net, const ForwardCache& cache, const Mat& output_grad,
                        bool want_input_grad) {
    const auto& layers = net.layers();
    if (cache.pre.size() != layers.size())
        throw std::invalid_argument("backward: cache does not belong to this network");
    if (static_cast<std::size_t>(output_grad.rows()) != net.output_dim() ||
        output_grad.cols() != cache.pre.back().cols())
        throw std::invalid_argument("backward: output gradient shape mismatch");

    BackwardResult result;
    result.grads.weight.resize(layers.size());
    result.grads.bias.resize(layers.size());
    Mat delta = output_grad;
    for (std::size_t idx = layers.size(); idx-- > 0;) {
        if (idx + 1 < layers.size()) {
            // rectifier derivative, taken as 0 at the kink
            delta = delta.cwiseProduct((cache.pre[idx].array() > 0.0).cast<double>().matrix());
        }
        result.grads.weight[idx] = delta * cache.inputs[idx].transpose();
        result.grads.bias[idx] = delta.rowwise().sum();
        if (idx > 0 || want_input_grad) delta = layers[idx].weight.transpose() * delta;
    }
    if (want_input_grad) result.input_grad = std::move(delta);
    return result;
}

MseResult grad_mse(const DenseNet& net, const Mat& inputs, const Mat& targets) {
    if (inputs.cols() == 0) throw std::invalid_argument("grad_mse: empty batch");
    if (targets.cols() != inputs.cols() ||
        static_cast<std::size_t>(targets.rows()) != net.output_dim())
        throw std::invalid_argument("grad_mse: target shape mismatch");
    ForwardCache cache;
    const Mat pred = forward_batch(net, inputs, cache);
    const Mat diff = pred - targets;
    const double count = static_cast<double>(diff.size());
    MseResult r;
    r.loss = diff.squaredNorm() / count;
    r.grads = backward(net, cache, (2.0 / count) * diff).grads;
    return r;
}

MseResult grad_mse(const DenseNet& net, const std::vector<Vec>& batch_x,
                   const std::vector<Vec>& batch_y) {
    if (batch_x.empty()) throw std::invalid_argument("grad_mse: empty batch");
    if (batch_x.size() != batch_y.size())
        throw std::invalid_argument("grad_mse: batch_x and batch_y differ in length");
    Mat x(net.input_dim(), batch_x.size());
    Mat y(net.output_dim(), batch_y.size());
    for (std::size_t i = 0; i < batch_x.size(); ++i) {
        if (static_cast<std::size_t>(batch_x[i].size()) != net.input_dim() ||
            static_cast<std::size_t>(batch_y[i].size()) != net.output_dim())
            throw std::invalid_argument("grad_mse: sample shape mismatch");
        x.col(i) = batch_x[i];
        y.col(i) = batch_y[i];
    }
    return grad_mse(net, x, y);
}

AdamState AdamState::for_net(const DenseNet& net) {
    AdamState s;
    s.m = Gradients::zeros_like(net);
    s.v = Gradients::zeros_like(net);
    return s;
}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, double lr) {
    if (!grads.matches(net) || !state.m.matches(net) || !state.v.matches(net))
        throw std::invalid_argument("adam_step: gradient/state shape mismatch");
    if (!grads.all_finite()) throw CorruptedTraining("adam_step: non-finite gradient");

    state.step += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    };
    auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        update(layers[i].weight, grads.weight[i], state.m.weight[i], state.v.weight[i]);
        update(layers[i].bias, grads.bias[i], state.m.bias[i], state.v.bias[i]);
    }
}

void polyak_update(DenseNet& target, const DenseNet& source, double tau) {
    if (!target.same_shape(source))
        throw std::invalid_argument("polyak_update: architecture mismatch");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak_update: tau outside [0,1]");
    auto& t = target.layers();
    const auto& s = source.layers();
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i].weight = (1.0 - tau) * t[i].weight + tau * s[i].weight;
        t[i].bias = (1.0 - tau) * t[i].bias + tau * s[i].bias;
    }
}

void write_net(std::ostream& out, const DenseNet& net) {
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    out.write(kMagic, sizeof kMagic);
    put_u32(kVersion);
    put_u32(static_cast<std::uint32_t>(net.num_layers()));
    for (const auto& l : net.layers()) {
        put_u32(static_cast<std::uint32_t>(l.weight.rows()));
        put_u32(static_cast<std::uint32_t>(l.weight.cols()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
                const double v = l.weight(r, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
        out.write(reinterpret_cast<const char*>(l.bias.data()),
                  static_cast<std::streamsize>(sizeof(double) * l.bias.size()));
    }
    if (!out) throw std::runtime_error("write_net: stream failure");
}

DenseNet read_net(std::istream& in) {
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw FormatError("read_net: truncated snapshot");
        return v;
    };
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw FormatError("read_net: not a network snapshot");
    const std::uint32_t version = get_u32();
    if (version != kVersion)
        throw FormatError("read_net: unsupported snapshot version " + std::to_string(version));
    const std::uint32_t n = get_u32();
    if (n == 0 || n > 1024) throw FormatError("read_net: implausible layer count");
    std::vector<DenseLayer> layers;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t rows = get_u32();
        const std::uint32_t cols = get_u32();
        if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
            throw FormatError("read_net: implausible layer shape");
        DenseLayer l{Mat(rows, cols), Vec(rows)};
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) {
                double v = 0.0;
                in.read(reinterpret_cast<char*>(&v), sizeof v);
                l.weight(r, c) = v;
            }
        in.read(reinterpret_cast<char*>(l.bias.data()),
                static_cast<std::streamsize>(sizeof(double) * rows));
        if (!in) throw FormatError("read_net: truncated snapshot");
        layers.push_back(std::move(l));
    }
    try {
        return DenseNet(std::move(layers));
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("read_net: ") + e.what());
    }
}

void save_net(const std::string& path, const DenseNet& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_net: cannot open " + path);
    write_net(out, net);
}

DenseNet load_net(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_net: cannot open " + path);
    return read_net(in);
}

}  // namespace star::nn
