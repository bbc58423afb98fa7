#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mpv/game.hpp"
#include "mpv/rational.hpp"

namespace mpv {

// Policy is dense over the board (size*size entries, zero on illegal points);
// value is from the perspective of the side to move.
struct PVOutput {
    std::vector<float> policy;
    float value = 0.0f;
};

// Throws std::logic_error unless the policy is a distribution over legal
// moves of `p` (sum 1 +- 1e-6) and |value| <= 1.
void check_pv_output(const PVOutput& out, const Position& p);

// f(x, y): x filters, y residual blocks.
struct NetShape {
    int filters = 128;
    int blocks = 10;
    friend bool operator==(const NetShape&, const NetShape&) = default;
};

constexpr NetShape kReferenceShape{128, 10};

// Compute units; one unit is one forward pass of the reference shape.
struct NormalizedCost {
    Rational units{1};
    friend bool operator==(const NormalizedCost&, const NormalizedCost&) = default;
};

// (filters ratio)^2 * (blocks ratio). Throws on non-positive shapes.
NormalizedCost cost_of(NetShape shape, NetShape reference = kReferenceShape);

class Evaluator {
public:
    virtual ~Evaluator() = default;

    // `stream` lets a caller draw a distinct random stream per call; evaluators
    // without internal randomness ignore it. Throws std::invalid_argument on a
    // terminal position.
    PVOutput evaluate(const Position& p, std::uint64_t stream = 0) const;

    virtual NormalizedCost cost() const = 0;
    virtual std::string name() const = 0;

protected:
    virtual PVOutput do_evaluate(const Position& p, std::uint64_t stream) const = 0;
};

using EvaluatorPtr = std::shared_ptr<const Evaluator>;

std::vector<float> uniform_policy(const Position& p);

class UniformEvaluator final : public Evaluator {
public:
    explicit UniformEvaluator(NormalizedCost cost = {}) : cost_(cost) {}
    NormalizedCost cost() const override { return cost_; }
    std::string name() const override { return "uniform"; }

protected:
    PVOutput do_evaluate(const Position& p, std::uint64_t) const override;

private:
    NormalizedCost cost_;
};

// Uniform policy, value tanh(scale * (own mobility - opponent mobility)).
class HeuristicEvaluator final : public Evaluator {
public:
    explicit HeuristicEvaluator(double scale = 0.1, NormalizedCost cost = {}) : scale_(scale), cost_(cost) {}
    NormalizedCost cost() const override { return cost_; }
    std::string name() const override { return "heuristic"; }

protected:
    PVOutput do_evaluate(const Position& p, std::uint64_t) const override;

private:
    double scale_;
    NormalizedCost cost_;
};

// Mean +-1 outcome of uniformly random playouts; uniform policy.
PVOutput rollout_evaluate(const Position& p, int playouts, std::uint64_t seed);

class RolloutEvaluator final : public Evaluator {
public:
    RolloutEvaluator(int playouts, std::uint64_t seed, NormalizedCost cost = {});
    NormalizedCost cost() const override { return cost_; }
    std::string name() const override { return "rollout" + std::to_string(playouts_); }

protected:
    PVOutput do_evaluate(const Position& p, std::uint64_t stream) const override;

private:
    int playouts_;
    std::uint64_t seed_;
    NormalizedCost cost_;
};

// Adds Gaussian noise to the wrapped evaluator's value, clamped to [-1, 1].
// The noise is a fixed function of (seed, position), so the wrapper behaves
// like a deterministic but less accurate model.
class NoisyEvaluator final : public Evaluator {
public:
    NoisyEvaluator(EvaluatorPtr base, double sigma, std::uint64_t seed, NormalizedCost cost);
    NormalizedCost cost() const override { return cost_; }
    std::string name() const override;

protected:
    PVOutput do_evaluate(const Position& p, std::uint64_t stream) const override;

private:
    EvaluatorPtr base_;
    double sigma_;
    std::uint64_t seed_;
    NormalizedCost cost_;
};

// Counts forward passes through the wrapped evaluator.
class CountingEvaluator final : public Evaluator {
public:
    explicit CountingEvaluator(EvaluatorPtr base) : base_(std::move(base)) {}
    NormalizedCost cost() const override { return base_->cost(); }
    std::string name() const override { return base_->name(); }
    std::uint64_t calls() const { return calls_.load(); }
    void reset() { calls_ = 0; }

protected:
    PVOutput do_evaluate(const Position& p, std::uint64_t stream) const override;

private:
    EvaluatorPtr base_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

// Standard normal deviate from a 64-bit hash (Box-Muller on two derived
// uniforms); identical on every platform.
double gaussian_from_hash(std::uint64_t h);

}  // namespace mpv
