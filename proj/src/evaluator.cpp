#include "mpv/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mpv/random.hpp"

namespace mpv {

Rational Rational::parse(const std::string& text) {
    auto slash = text.find('/');
    if (slash != std::string::npos) {
        return Rational(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
    }
    auto dot = text.find('.');
    if (dot == std::string::npos) return Rational(std::stoll(text));
    std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    std::int64_t den = 1;
    for (std::size_t i = dot + 1; i < text.size(); ++i) den *= 10;
    if (digits.empty() || digits == "-") throw std::invalid_argument("bad number '" + text + "'");
    return Rational(std::stoll(digits), den);
}

void check_pv_output(const PVOutput& out, const Position& p) {
    if (static_cast<int>(out.policy.size()) != p.num_points()) throw std::logic_error("policy has wrong length");
    double sum = 0.0;
    for (int i = 0; i < p.num_points(); ++i) {
        float v = out.policy[i];
        if (!std::isfinite(v) || v < 0.0f) throw std::logic_error("policy entry negative or non-finite");
        if (v > 0.0f && !p.is_legal_point(i)) throw std::logic_error("policy mass on an illegal move");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw std::logic_error("policy does not sum to 1");
    if (!std::isfinite(out.value) || std::abs(out.value) > 1.0f) throw std::logic_error("value outside [-1, 1]");
}

NormalizedCost cost_of(NetShape shape, NetShape reference) {
    if (shape.filters < 1 || shape.blocks < 1 || reference.filters < 1 || reference.blocks < 1) {
        throw std::invalid_argument("cost_of: shapes need filters >= 1 and blocks >= 1");
    }
    Rational width(shape.filters, reference.filters);
    return NormalizedCost{width * width * Rational(shape.blocks, reference.blocks)};
}

PVOutput Evaluator::evaluate(const Position& p, std::uint64_t stream) const {
    if (p.is_terminal()) throw std::invalid_argument("evaluate: terminal position");
    return do_evaluate(p, stream);
}

std::vector<float> uniform_policy(const Position& p) {
    std::vector<float> policy(static_cast<std::size_t>(p.num_points()), 0.0f);
    Bitboard legal = p.legal_bits(p.to_play());
    int count = popcount(legal);
    if (count == 0) return policy;
    const float share = 1.0f / static_cast<float>(count);
    for_each_bit(legal, [&](int pt) { policy[pt] = share; });
    return policy;
}

PVOutput UniformEvaluator::do_evaluate(const Position& p, std::uint64_t) const {
    return PVOutput{uniform_policy(p), 0.0f};
}

PVOutput HeuristicEvaluator::do_evaluate(const Position& p, std::uint64_t) const {
    int diff = p.legal_count(p.to_play()) - p.legal_count(opponent(p.to_play()));
    return PVOutput{uniform_policy(p), static_cast<float>(std::tanh(scale_ * diff))};
}

PVOutput rollout_evaluate(const Position& p, int playouts, std::uint64_t seed) {
    if (playouts < 1) throw std::invalid_argument("rollout_evaluate: playouts must be >= 1");
    if (p.is_terminal()) throw std::invalid_argument("rollout_evaluate: terminal position");
    Rng rng(seed);
    const Color me = p.to_play();
    int score = 0;
    for (int i = 0; i < playouts; ++i) {
        Position sim = p;
        for (;;) {
            Bitboard legal = sim.legal_bits(sim.to_play());
            if (legal == 0) break;
            std::uniform_int_distribution<int> pick(0, popcount(legal) - 1);
            sim.play_inplace(nth_bit(legal, pick(rng)));
        }
        score += opponent(sim.to_play()) == me ? 1 : -1;
    }
    return PVOutput{uniform_policy(p), static_cast<float>(score) / static_cast<float>(playouts)};
}

RolloutEvaluator::RolloutEvaluator(int playouts, std::uint64_t seed, NormalizedCost cost)
    : playouts_(playouts), seed_(seed), cost_(cost) {
    if (playouts < 1) throw std::invalid_argument("RolloutEvaluator: playouts must be >= 1");
}

PVOutput RolloutEvaluator::do_evaluate(const Position& p, std::uint64_t stream) const {
    return rollout_evaluate(p, playouts_, derive_seed(seed_, {p.key(), stream}));
}

double gaussian_from_hash(std::uint64_t h) {
    double u1 = unit_from_hash(mix64(h ^ 0x5851f42d4c957f2dULL));
    double u2 = unit_from_hash(mix64(h ^ 0x14057b7ef767814fULL));
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

NoisyEvaluator::NoisyEvaluator(EvaluatorPtr base, double sigma, std::uint64_t seed, NormalizedCost cost)
    : base_(std::move(base)), sigma_(sigma), seed_(seed), cost_(cost) {
    if (!base_) throw std::invalid_argument("NoisyEvaluator: null base evaluator");
    if (sigma < 0.0) throw std::invalid_argument("NoisyEvaluator: sigma must be >= 0");
}

std::string NoisyEvaluator::name() const { return base_->name() + "+noise" + std::to_string(sigma_); }

PVOutput NoisyEvaluator::do_evaluate(const Position& p, std::uint64_t stream) const {
    PVOutput out = base_->evaluate(p, stream);
    double noisy = out.value + sigma_ * gaussian_from_hash(derive_seed(seed_, {p.key()}));
    out.value = static_cast<float>(std::clamp(noisy, -1.0, 1.0));
    return out;
}

PVOutput CountingEvaluator::do_evaluate(const Position& p, std::uint64_t stream) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return base_->evaluate(p, stream);
}

}  // namespace mpv
