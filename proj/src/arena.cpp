#include "mpv/arena.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mpv/nn.hpp"
#include "mpv/random.hpp"
#include "mpv/search.hpp"

namespace mpv {

void AgentSpec::validate() const {
    switch (kind) {
        case AgentKind::Random:
            return;
        case AgentKind::PV:
            if (!evaluator) throw std::invalid_argument("agent '" + label + "': missing evaluator");
            if (simulations < 2) throw std::invalid_argument("agent '" + label + "': simulations must be >= 2");
            break;
        case AgentKind::MPV:
            if (!evaluator || !large) throw std::invalid_argument("agent '" + label + "': MPV needs both evaluators");
            budget.validate(allow_inverted_budget);
            if (budget.small < 2) throw std::invalid_argument("agent '" + label + "': small budget must be >= 2");
            weights.validate();
            break;
    }
    if (c_puct < 0.0) throw std::invalid_argument("agent '" + label + "': c_puct must be >= 0");
    if (opening_samples < 0) throw std::invalid_argument("agent '" + label + "': opening_samples must be >= 0");
}

AgentSpec pv_agent(std::string label, EvaluatorPtr net, int simulations) {
    AgentSpec a;
    a.label = std::move(label);
    a.kind = AgentKind::PV;
    a.evaluator = std::move(net);
    a.simulations = simulations;
    return a;
}

AgentSpec mpv_agent(std::string label, EvaluatorPtr small, EvaluatorPtr large, BudgetSpec budget) {
    AgentSpec a;
    a.label = std::move(label);
    a.kind = AgentKind::MPV;
    a.evaluator = std::move(small);
    a.large = std::move(large);
    a.budget = budget;
    return a;
}

AgentSpec random_agent(std::string label) {
    AgentSpec a;
    a.label = std::move(label);
    a.kind = AgentKind::Random;
    return a;
}

AgentSpec uct_rollout_baseline(int simulations, std::uint64_t seed) {
    if (simulations < 1) throw std::invalid_argument("baseline simulations must be >= 1");
    // One simulation only evaluates the root; two is the smallest search
    // that visits a move.
    return pv_agent("uct" + std::to_string(simulations), std::make_shared<RolloutEvaluator>(1, seed),
                    std::max(simulations, 2));
}

AgentSpec large_only_test(const Checkpoint& checkpoint, int simulations, NetShape reference) {
    if (!checkpoint.large) throw std::invalid_argument("checkpoint " + checkpoint.dir.string() + " has no f_L network");
    auto params = std::make_shared<const nn::Parameters<float>>(*checkpoint.large);
    auto net = std::make_shared<nn::NetworkEvaluator>(params, reference, "fL");
    return pv_agent(checkpoint.dir.filename().string() + ":fL", net, simulations);
}

int choose_move(const AgentSpec& agent, const Position& pos, int own_move, std::uint64_t seed) {
    if (pos.is_terminal()) throw std::invalid_argument("choose_move: terminal position");
    Rng rng(derive_seed(seed, {0xc0}));
    Bitboard legal = pos.legal_bits(pos.to_play());
    if (agent.kind == AgentKind::Random) {
        std::uniform_int_distribution<int> pick(0, popcount(legal) - 1);
        return nth_bit(legal, pick(rng));
    }
    std::vector<int> counts;
    if (agent.kind == AgentKind::PV) {
        SearchTree tree(pos, agent.c_puct);
        run_search(tree, *agent.evaluator, agent.simulations, seed);
        counts = tree.root_visit_counts();
    } else {
        MpvConfig mc;
        mc.weights = agent.weights;
        mc.c_puct = agent.c_puct;
        mc.allow_inverted_budget = agent.allow_inverted_budget;
        DualSearch dual(pos, *agent.evaluator, *agent.large, mc);
        dual.run(agent.budget, seed);
        counts = dual.small_tree().root_visit_counts();
    }
    if (own_move < agent.opening_samples) {
        std::vector<double> pi = policy_from_counts(counts, 1.0);
        std::discrete_distribution<int> pick(pi.begin(), pi.end());
        return pick(rng);
    }
    const int top = *std::max_element(counts.begin(), counts.end());
    std::vector<int> best;
    for (int i = 0; i < static_cast<int>(counts.size()); ++i) {
        if (counts[i] == top) best.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> pick(0, best.size() - 1);
    return best[pick(rng)];
}

double elo_from_winrate(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("Elo is undefined for win rate 0 or 1");
    // Difference of logs so that elo(1 - p) is the exact negation.
    return 400.0 * (std::log10(p) - std::log10(1.0 - p));
}

double MatchResult::stderr_winrate() const {
    if (games == 0) return 0.0;
    const double p = win_rate();
    return std::sqrt(p * (1.0 - p) / games);
}

std::optional<double> MatchResult::elo() const {
    const double p = win_rate();
    if (!(p > 0.0 && p < 1.0)) return std::nullopt;
    return elo_from_winrate(p);
}

double MatchResult::elo_stderr() const {
    const double p = win_rate();
    if (!(p > 0.0 && p < 1.0)) return 0.0;
    // Delta method: dElo/dp = 400 / (ln 10 * p * (1 - p)).
    return 400.0 / (std::log(10.0) * p * (1.0 - p)) * stderr_winrate();
}

namespace {

struct GameOutcome {
    GameRecord record;
    bool a_won = false;
    bool a_black = false;
};

GameOutcome play_game(const AgentSpec& a, const AgentSpec& b, int board_size, int index, std::uint64_t seed) {
    GameOutcome out;
    out.a_black = index % 2 == 0;
    const std::uint64_t game_seed = derive_seed(seed, {static_cast<std::uint64_t>(index)});
    Position pos(board_size);
    out.record.size = board_size;
    int own[2] = {0, 0};
    for (int ply = 0; !pos.is_terminal(); ++ply) {
        const bool a_to_move = (pos.to_play() == Color::Black) == out.a_black;
        const AgentSpec& agent = a_to_move ? a : b;
        const int side = a_to_move ? 0 : 1;
        const int pt = choose_move(agent, pos, own[side]++, derive_seed(game_seed, {static_cast<std::uint64_t>(ply)}));
        if (!pos.is_legal_point(pt)) throw std::logic_error("agent '" + agent.label + "' chose an illegal move");
        out.record.moves.push_back(pos.move_at(pt));
        pos.play_inplace(pt);
    }
    const Color winner = *pos.winner();
    out.record.winner = winner;
    out.a_won = (winner == Color::Black) == out.a_black;
    return out;
}

std::string format_elo(const MatchResult& r, bool with_sign) {
    char buf[64];
    if (auto e = r.elo()) {
        std::snprintf(buf, sizeof buf, with_sign ? "%+.1f" : "%.1f", *e);
        return buf;
    }
    const double p = r.wins == 0 ? 0.5 / r.games : 1.0 - 0.5 / r.games;
    std::snprintf(buf, sizeof buf, "%c%.1f", r.wins == 0 ? '<' : '>', elo_from_winrate(p));
    return buf;
}

}  // namespace

MatchResult play_match(const AgentSpec& a, const AgentSpec& b, int n_games, std::uint64_t seed, int board_size,
                       int workers) {
    if (n_games < 2 || n_games % 2 != 0) throw std::invalid_argument("play_match: n_games must be even and >= 2");
    if (board_size < 1 || board_size > kMaxBoardSize) throw std::invalid_argument("play_match: board size must be in 1..9");
    a.validate();
    b.validate();
    auto games = run_indexed<GameOutcome>(n_games, workers, [&](int i) { return play_game(a, b, board_size, i, seed); });
    MatchResult r;
    r.pairing = a.label + " vs " + b.label;
    for (auto& g : games) {
        ++r.games;
        if (g.a_black) ++r.games_as_black;
        if (g.a_won) {
            ++r.wins;
            if (g.a_black) ++r.wins_as_black;
            else ++r.wins_as_white;
        } else {
            ++r.losses;
        }
        r.transcripts.push_back(std::move(g.record));
    }
    return r;
}

std::string machine_line(const MatchResult& r) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ";%d;%d;%.4f;", r.games, r.wins, r.win_rate());
    char se[32];
    std::snprintf(se, sizeof se, ";%.1f", r.elo_stderr());
    return r.pairing + buf + format_elo(r, false) + se;
}

std::string format_report(const std::vector<MatchResult>& results) {
    std::size_t width = 7;
    for (const auto& r : results) width = std::max(width, r.pairing.size());
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s %6s %6s %7s %9s %7s\n", static_cast<int>(width), "pairing", "games", "wins",
                  "p", "elo", "stderr");
    os << buf;
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%-*s %6d %6d %7.4f %9s %7.1f\n", static_cast<int>(width), r.pairing.c_str(),
                      r.games, r.wins, r.win_rate(), format_elo(r, true).c_str(), r.elo_stderr());
        os << buf;
    }
    for (const auto& r : results) os << machine_line(r) << '\n';
    return os.str();
}

AgentSpec sweep_agent(const SweepConfig& config, Rational budget, Rational ratio, BudgetSpec* spec_out) {
    if (!config.small || !config.large) throw std::invalid_argument("budget sweep needs both evaluators");
    const Rational small_cost = config.small->cost().units / config.large->cost().units;
    const Rational large_cost(1);
    BudgetSpec spec;
    spec.large = static_cast<int>((ratio * budget / large_cost).floor());
    spec.small = static_cast<int>(((Rational(1) - ratio) * budget / small_cost).floor());
    if (ratio < Rational(0) || ratio > Rational(1)) throw std::invalid_argument("budget ratio must be in [0, 1]");
    if (spec_out) *spec_out = spec;
    AgentSpec agent;
    const std::string tag = "B" + budget.to_string() + ":r" + ratio.to_string();
    if (ratio == Rational(0)) {
        agent = pv_agent("pv-small:" + tag, config.small, spec.small);
    } else if (ratio == Rational(1)) {
        agent = pv_agent("pv-large:" + tag, config.large, spec.large);
    } else {
        spec.validate();
        agent = mpv_agent("mpv:" + tag, config.small, config.large, spec);
        agent.weights = config.weights;
    }
    agent.c_puct = config.c_puct;
    return agent;
}

std::vector<SweepRow> budget_sweep(const SweepConfig& config) {
    std::vector<SweepRow> rows;
    for (const Rational& b : config.budgets) {
        for (const Rational& r : config.ratios) {
            SweepRow row;
            row.budget = b;
            row.ratio = r;
            AgentSpec agent = sweep_agent(config, b, r, &row.spec);
            const std::uint64_t seed = derive_seed(config.seed, {static_cast<std::uint64_t>(b.num()),
                                                                 static_cast<std::uint64_t>(b.den()),
                                                                 static_cast<std::uint64_t>(r.num()),
                                                                 static_cast<std::uint64_t>(r.den())});
            row.result = play_match(agent, config.opponent, config.games, seed, config.board_size, config.workers);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace mpv
