#pragma once

// Residual policy-value network f(x, y) with an exact hand-written backward
// pass. Batch normalization is replaced by per-channel biases.
//
//   input 3x3 conv (4 -> x) + bias, ReLU
//   y blocks: 3x3 conv + bias, ReLU, 3x3 conv + bias, skip add, ReLU
//   policy head: 1x1 conv (x -> 2) + bias, ReLU, linear 2n^2 -> n^2 logits
//   value head:  1x1 conv (x -> 1) + bias, ReLU, linear n^2 -> hidden, ReLU,
//                linear hidden -> 1, tanh

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mpv/evaluator.hpp"
#include "mpv/game.hpp"

namespace mpv::nn {

struct NetworkConfig {
    int board_size = 5;
    int filters = 16;
    int blocks = 1;
    double l2 = 1e-4;
    int value_hidden = 32;

    NetShape shape() const { return NetShape{filters, blocks}; }
    // Throws std::invalid_argument.
    void validate() const;
    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

template <typename T>
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> data;
};

template <typename T>
struct Parameters {
    NetworkConfig config;
    std::vector<Tensor<T>> tensors;

    static Parameters zeros(const NetworkConfig& config);
    // He-scaled Gaussian weights, zero biases.
    static Parameters random(const NetworkConfig& config, std::uint64_t seed);

    std::size_t count() const;
    T squared_norm() const;
    bool all_finite() const;
    std::uint64_t checksum() const;

    template <typename U>
    Parameters<U> cast() const {
        Parameters<U> out;
        out.config = config;
        for (const auto& t : tensors) {
            out.tensors.push_back(Tensor<U>{t.name, t.shape, std::vector<U>(t.data.begin(), t.data.end())});
        }
        return out;
    }
};

template <typename T>
using Gradients = Parameters<T>;

struct TrainingBatch {
    int board_size = 0;
    std::vector<FeaturePlanes> states;
    std::vector<std::vector<float>> policies;  // size*size each
    std::vector<float> outcomes;               // z in {-1, +1}

    std::size_t size() const { return states.size(); }
    void validate() const;
};

template <typename T>
struct Prediction {
    // Per sample: size*size masked probabilities, size*size raw logits.
    std::vector<std::vector<T>> policy;
    std::vector<std::vector<T>> logits;
    std::vector<T> value;
};

template <typename T>
struct LossBreakdown {
    T value = 0;
    T policy = 0;
    T l2 = 0;
    T total() const { return value + policy + l2; }
};

// Forward pass over a batch of feature planes. Throws std::invalid_argument
// on a shape mismatch.
template <typename T>
Prediction<T> forward(const Parameters<T>& params, const std::vector<FeaturePlanes>& states);

template <typename T>
PVOutput to_pv_output(const Prediction<T>& pred, std::size_t index);

// mean_b[(z - v)^2 - pi . log p] + c * |theta|^2
template <typename T>
LossBreakdown<T> loss(const Parameters<T>& params, const TrainingBatch& batch);

template <typename T>
struct LossAndGradients {
    LossBreakdown<T> loss;
    Gradients<T> grads;
};

template <typename T>
LossAndGradients<T> backward(const Parameters<T>& params, const TrainingBatch& batch);

// theta - lr * grad. Throws std::invalid_argument on lr < 0 or a non-finite
// gradient.
template <typename T>
Parameters<T> sgd_step(const Parameters<T>& params, const Gradients<T>& grads, double learning_rate);

// SGD with momentum: v = mu * v + g; theta -= lr * v.
class MomentumSgd {
public:
    explicit MomentumSgd(double momentum = 0.9) : momentum_(momentum) {}
    void step(Parameters<float>& params, const Gradients<float>& grads, double learning_rate);

private:
    double momentum_;
    std::vector<std::vector<float>> velocity_;
};

// Binary model file: "MPVN", u32 version, u32 board_size, filters, blocks,
// value_hidden, l2 (float64 bits, low word first), then every tensor as little-endian
// float32 in architecture order.
constexpr std::uint32_t kModelVersion = 1;
void save_params(const Parameters<float>& params, const std::filesystem::path& path);
// Throws std::runtime_error on bad magic/version, truncation or trailing data.
Parameters<float> load_params(const std::filesystem::path& path);
// Additionally throws if the stored configuration differs from `expected`.
Parameters<float> load_params(const std::filesystem::path& path, const NetworkConfig& expected);

class NetworkEvaluator final : public Evaluator {
public:
    NetworkEvaluator(std::shared_ptr<const Parameters<float>> params, NetShape reference, std::string label = "net");
    NormalizedCost cost() const override { return cost_; }
    std::string name() const override { return label_; }
    const Parameters<float>& params() const { return *params_; }

protected:
    PVOutput do_evaluate(const Position& p, std::uint64_t stream) const override;

private:
    std::shared_ptr<const Parameters<float>> params_;
    NormalizedCost cost_;
    std::string label_;
};

}  // namespace mpv::nn
