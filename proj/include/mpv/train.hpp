#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpv/evaluator.hpp"
#include "mpv/game.hpp"
#include "mpv/mpv.hpp"
#include "mpv/nn.hpp"
#include "mpv/random.hpp"
#include "mpv/rational.hpp"

namespace mpv {

struct ReplayRecord {
    FeaturePlanes features;
    std::vector<float> policy;  // visit distribution at the state
    std::int8_t outcome = 0;    // +1 if the player to move won

    friend bool operator==(const ReplayRecord&, const ReplayRecord&) = default;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const ReplayRecord& at(std::size_t i) const { return records_.at(i); }

    // Evicts the oldest records beyond capacity.
    void append(ReplayRecord record);
    void append(std::span<const ReplayRecord> records);

    // Uniform with replacement. Throws std::logic_error when empty.
    nn::TrainingBatch sample_batch(std::size_t batch_size, Rng& rng) const;

    // "MPVR" u32 version u32 board_size u64 count, then per record the
    // 4*n*n feature bits packed LSB-first, n*n float32 policy, int8 outcome.
    void save(const std::filesystem::path& path) const;
    // Appends the file's records. Throws std::runtime_error on a bad file.
    void load(const std::filesystem::path& path);

private:
    std::size_t capacity_;
    std::deque<ReplayRecord> records_;
};

constexpr std::uint32_t kReplayVersion = 1;

nn::TrainingBatch make_batch(std::span<const ReplayRecord> records);

struct NetSims {
    NetShape shape;
    int simulations = 0;
};

// Cost of one game in normalized games: per-move cost in reference passes,
// divided by the `reference_sims` per-move budget of a normalized game.
Rational normalized_game_cost(std::span<const NetSims> nets, NetShape reference = kReferenceShape,
                              int reference_sims = 200);

struct SelfPlayConfig {
    int board_size = 5;
    bool mpv = false;
    int simulations = 800;          // PV mode
    BudgetSpec budget{800, 100};    // MPV mode
    ShareWeights weights;
    double c_puct = kDefaultCPuct;
    int tau_moves = -1;             // moves sampled at tau = 1; -1 means ceil(0.3 * size^2)
    bool root_noise = true;
    double dirichlet_alpha = 0.3;
    double dirichlet_weight = 0.25;

    int sampled_moves() const;
    void validate() const;
};

struct SelfPlayResult {
    GameRecord game;
    std::vector<ReplayRecord> records;
    std::int64_t small_passes = 0;
    std::int64_t large_passes = 0;
};

// One PV-MCTS self-play game with `net` on both sides.
SelfPlayResult selfplay_game(const SelfPlayConfig& config, const Evaluator& net, std::uint64_t seed);
// One MPV-MCTS self-play game; the policy target is T_S's visit distribution.
SelfPlayResult mpv_selfplay_game(const SelfPlayConfig& config, const Evaluator& small, const Evaluator& large,
                                 std::uint64_t seed);

struct TrainConfig {
    bool mpv = true;
    nn::NetworkConfig small_net{5, 16, 1, 1e-4, 32};
    nn::NetworkConfig large_net{5, 32, 2, 1e-4, 32};
    SelfPlayConfig selfplay;
    NetShape reference{32, 2};          // normalized-game reference shape
    int reference_sims = 200;
    Rational total_normalized_games{2000};
    Rational iteration_normalized_games{100};
    Rational checkpoint_every{500};
    int train_steps = 100;              // per iteration, per network
    int batch_size = 64;
    double learning_rate = 0.02;
    double momentum = 0.9;
    std::vector<double> lr_milestones{0.5, 0.75};  // fractions of the run; lr *= 0.1 at each
    std::size_t buffer_capacity = 100000;
    int workers = 1;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "run";

    Rational game_cost() const;
    int games_per_iteration() const;
    void validate() const;
    // Stable hash of the fields that must match on resume.
    std::uint64_t hash() const;
};

struct Checkpoint {
    std::filesystem::path dir;
    std::optional<nn::Parameters<float>> small;
    std::optional<nn::Parameters<float>> large;
    int iteration = 0;
    std::int64_t games = 0;
    Rational normalized_games;
    std::uint64_t config_hash = 0;
};

// Throws std::runtime_error if `dir` is not a checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// Checkpoint directories under `out_dir`, sorted by normalized games.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& out_dir);

class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainSummary {
    int iterations = 0;
    std::int64_t games = 0;
    Rational normalized_games;
    std::vector<std::filesystem::path> checkpoints;  // written during this call
};

// Generate / train loop. Resumes from the newest checkpoint in out_dir when
// one exists. `log` receives one line per iteration:
//   iter=<i> games=<g> normalized_games=<rational> [loss_S=<x>] loss_L=<x> buffer=<n>
// PV mode trains only the large network. Throws TrainingAborted on a
// non-finite loss.
TrainSummary train_loop(const TrainConfig& config, const std::function<void(const std::string&)>& log = {});

// Runs `count` jobs on up to `workers` threads; job(i) results are stored by
// index so the output does not depend on scheduling.
template <typename T, typename Job>
std::vector<T> run_indexed(int count, int workers, Job&& job);

}  // namespace mpv

#include "mpv/detail/run_indexed.hpp"
