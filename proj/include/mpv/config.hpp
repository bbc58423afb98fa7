#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpv/evaluator.hpp"
#include "mpv/mpv.hpp"
#include "mpv/rational.hpp"
#include "mpv/train.hpp"

namespace mpv {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat key=value configuration. '#' starts a comment; blank lines are
// ignored. Unknown keys and malformed values throw ConfigError.
struct Config {
    std::string mode = "mpv";  // pv | mpv
    int board_size = 5;
    double c_puct = kDefaultCPuct;
    double alpha = 0.5;
    double beta = 0.0;
    int b_s = 800;
    int b_l = 100;
    int simulations = 800;
    Rational r{1, 2};
    Rational budget_B{400};
    int tau_moves = -1;
    bool root_noise = true;
    double dirichlet_alpha = 0.3;
    double dirichlet_weight = 0.25;
    std::size_t buffer_capacity = 100000;
    int batch_size = 64;
    double lr = 0.02;
    double momentum = 0.9;
    double l2 = 1e-4;
    int value_hidden = 32;
    NetShape fS{16, 1};
    NetShape fL{32, 2};
    NetShape reference{32, 2};
    int reference_sims = 200;
    Rational total_normalized_games{2000};
    Rational iteration_normalized_games{100};
    Rational checkpoint_every{500};
    int train_steps = 100;
    int games = 200;
    int workers = 1;
    std::uint64_t seed = 1;
    std::string out_dir = "run";

    static Config load(const std::filesystem::path& path);
    // Parses text in the file format; `origin` names it in error messages.
    static Config parse(const std::string& text, const std::string& origin = "<config>");
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();
    void validate() const;
    std::string to_text() const;

    TrainConfig train_config() const;
    SelfPlayConfig selfplay_config() const;
    nn::NetworkConfig small_net() const;
    nn::NetworkConfig large_net() const;
};

// "64x5" -> {64, 5}. Throws std::invalid_argument.
NetShape parse_shape(const std::string& text);
std::string shape_to_string(NetShape s);

}  // namespace mpv
