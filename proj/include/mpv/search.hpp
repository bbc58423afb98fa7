#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mpv/evaluator.hpp"
#include "mpv/game.hpp"
#include "mpv/random.hpp"

namespace mpv {

constexpr double kDefaultCPuct = 1.5;

// Q + c * P * sqrt(N(s)) / (1 + N(s, a))
inline double puct_score(double q, double prior, int parent_visits, int child_visits, double c_puct) {
    return q + c_puct * prior * std::sqrt(static_cast<double>(parent_visits)) / (1.0 + child_visits);
}

struct Edge {
    std::uint8_t point = 0;
    float prior = 0.0f;
    int child = -1;
};

struct Node {
    std::uint64_t key = 0;
    int parent = -1;
    int parent_edge = -1;
    int first_edge = 0;
    int num_edges = 0;
    int visits = 0;          // N(s): own evaluation plus every backup through it
    double value_sum = 0.0;  // from this node's side-to-move perspective
    Color to_play = Color::Black;
    bool terminal = false;

    double mean() const { return visits > 0 ? value_sum / visits : 0.0; }
};

// Where a descent stopped: the unevaluated root, an unexpanded edge, or an
// existing terminal node.
struct Selection {
    int parent = -1;
    int edge = -1;
    int node = -1;
    Position position;

    bool at_root() const { return parent < 0 && node < 0; }
};

struct RootNoise {
    std::vector<float> noise;  // dense over the board, sums to 1 over legal moves
    double weight = 0.0;
};

// Draws Dirichlet(alpha) noise over the legal moves of `p`.
RootNoise dirichlet_noise(const Position& p, double alpha, double weight, Rng& rng);

// PV-MCTS tree. Nodes are unique per path; the key index maps each position
// key to the first node created for it, for lookups from other trees.
class SearchTree {
public:
    explicit SearchTree(Position root, double c_puct = kDefaultCPuct);

    const Position& root_position() const { return root_; }
    double c_puct() const { return c_puct_; }
    bool root_evaluated() const { return !nodes_.empty(); }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int i) const { return nodes_[i]; }
    const Edge& edge(int i) const { return edges_[i]; }
    std::span<const Edge> edges_of(int node) const {
        return {edges_.data() + nodes_[node].first_edge, static_cast<std::size_t>(nodes_[node].num_edges)};
    }
    std::optional<int> find(std::uint64_t key) const;
    std::uint64_t child_key(int node, int edge) const;

    void set_root_noise(RootNoise noise) { root_noise_ = std::move(noise); }

    // PUCT descent on this tree's own statistics.
    Selection select_leaf() const;

    // Descent with a caller-supplied score(node_index, edge_index) -> double;
    // the first maximal edge in point order wins.
    template <typename Scorer>
    Selection select(Scorer&& score) const;

    // Creates the evaluated node for `sel`; priors come from `out.policy`.
    // Throws std::logic_error if the state was already evaluated here.
    int expand(const Selection& sel, const PVOutput& out);
    // Creates the terminal node for `sel` (no evaluation).
    int add_terminal(const Selection& sel);
    // Adds `value` (from `node`'s perspective) along the path to the root,
    // flipping sign each ply.
    void backup(int node, double value);

    Position position_of(int node) const;
    std::vector<int> path_to_root(int node) const;

    // Dense over the board.
    std::vector<int> root_visit_counts() const;

    // Visit conservation, Q bounds and prior normalization; throws
    // std::logic_error on violation.
    void check_invariants() const;

private:
    Position root_;
    double c_puct_;
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::unordered_map<std::uint64_t, int> index_;
    RootNoise root_noise_;

    int create_node(const Selection& sel, bool terminal);
};

template <typename Scorer>
Selection SearchTree::select(Scorer&& score) const {
    Selection sel;
    sel.position = root_;
    if (nodes_.empty()) return sel;
    int s = 0;
    for (;;) {
        const Node& n = nodes_[s];
        if (n.terminal) {
            sel.node = s;
            return sel;
        }
        int best = -1;
        double best_score = 0.0;
        for (int e = n.first_edge; e < n.first_edge + n.num_edges; ++e) {
            double v = score(s, e);
            if (best < 0 || v > best_score) {
                best = e;
                best_score = v;
            }
        }
        sel.position.play_inplace(edges_[best].point);
        if (edges_[best].child < 0) {
            sel.parent = s;
            sel.edge = best;
            return sel;
        }
        s = edges_[best].child;
    }
}

struct SearchStats {
    int forward_passes = 0;
    int simulations = 0;
};

// Simulation cap used when the tree is exhausted (every descent ends in a
// terminal state): 4 * budget + 64.
int simulation_cap(int budget);

// Runs until `budget` forward passes are consumed. Terminal hits back up the
// exact value and count as simulations only. Throws on a terminal root.
SearchStats run_search(SearchTree& tree, const Evaluator& evaluator, int budget, std::uint64_t seed);

// pi_a proportional to N^(1/tau); tau <= 0 gives the one-hot argmax with
// lowest-index tie-break. Throws if every count is zero.
std::vector<double> policy_from_counts(std::span<const int> counts, double tau);

}  // namespace mpv
