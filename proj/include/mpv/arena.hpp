#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpv/evaluator.hpp"
#include "mpv/game.hpp"
#include "mpv/mpv.hpp"
#include "mpv/rational.hpp"
#include "mpv/train.hpp"

namespace mpv {

enum class AgentKind { PV, MPV, Random };

struct AgentSpec {
    std::string label = "agent";
    AgentKind kind = AgentKind::PV;
    EvaluatorPtr evaluator;  // PV net, or f_S for MPV
    EvaluatorPtr large;      // f_L for MPV
    int simulations = 800;
    BudgetSpec budget{800, 100};
    ShareWeights weights;
    double c_puct = kDefaultCPuct;
    // Agent-own moves chosen by sampling pi at tau = 1 before switching to
    // argmax with a seeded random tie-break.
    int opening_samples = 1;
    bool allow_inverted_budget = false;  // tests only

    // Throws std::invalid_argument.
    void validate() const;
};

AgentSpec pv_agent(std::string label, EvaluatorPtr net, int simulations);
AgentSpec mpv_agent(std::string label, EvaluatorPtr small, EvaluatorPtr large, BudgetSpec budget);
AgentSpec random_agent(std::string label = "random");
// PV search with one random playout per leaf and uniform priors.
AgentSpec uct_rollout_baseline(int simulations, std::uint64_t seed = 0x0dd5eed);
// PV agent on the checkpoint's f_L only. Throws std::invalid_argument if the
// checkpoint has no f_L.
AgentSpec large_only_test(const Checkpoint& checkpoint, int simulations, NetShape reference);

// Point chosen by `agent` at `pos`. `own_move` counts the agent's earlier
// moves in this game.
int choose_move(const AgentSpec& agent, const Position& pos, int own_move, std::uint64_t seed);

struct MatchResult {
    std::string pairing;
    int games = 0;
    int wins = 0;  // for agent a
    int losses = 0;
    int games_as_black = 0;  // a's games as black
    int wins_as_black = 0;
    int wins_as_white = 0;
    std::vector<GameRecord> transcripts;

    double win_rate() const { return games > 0 ? static_cast<double>(wins) / games : 0.0; }
    // Binomial standard error of the win rate.
    double stderr_winrate() const;
    // nullopt when p is 0 or 1.
    std::optional<double> elo() const;
    double elo_stderr() const;
};

// n_games even; a plays black in even-numbered games. Deterministic given
// the seed; any worker count gives the same result.
MatchResult play_match(const AgentSpec& a, const AgentSpec& b, int n_games, std::uint64_t seed, int board_size = 5,
                       int workers = 1);

// 400 * log10(p / (1 - p)); throws std::domain_error unless 0 < p < 1.
double elo_from_winrate(double p);

// Text table plus one `pairing;games;wins;p;elo;stderr` line per result.
// A win rate of 0 or 1 reports the Elo bound from p = 1/(2n) or 1 - 1/(2n)
// with a leading '<' or '>'.
std::string format_report(const std::vector<MatchResult>& results);
std::string machine_line(const MatchResult& r);

struct SweepConfig {
    std::vector<Rational> budgets;
    std::vector<Rational> ratios;
    EvaluatorPtr small;
    EvaluatorPtr large;
    AgentSpec opponent;
    int games = 200;
    int board_size = 5;
    std::uint64_t seed = 1;
    int workers = 1;
    ShareWeights weights;
    double c_puct = kDefaultCPuct;
};

struct SweepRow {
    Rational budget;
    Rational ratio;
    BudgetSpec spec;
    MatchResult result;
};

// Budgets come from the evaluators' normalized costs relative to f_L. r = 0
// and r = 1 rows use single-network PV agents.
std::vector<SweepRow> budget_sweep(const SweepConfig& config);
AgentSpec sweep_agent(const SweepConfig& config, Rational budget, Rational ratio, BudgetSpec* spec_out = nullptr);

}  // namespace mpv
