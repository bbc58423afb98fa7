#include "mpv/search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpv {

RootNoise dirichlet_noise(const Position& p, double alpha, double weight, Rng& rng) {
    RootNoise out;
    out.weight = weight;
    out.noise.assign(static_cast<std::size_t>(p.num_points()), 0.0f);
    std::gamma_distribution<double> gamma(alpha, 1.0);
    double sum = 0.0;
    std::vector<double> draws(static_cast<std::size_t>(p.num_points()), 0.0);
    for_each_bit(p.legal_bits(p.to_play()), [&](int pt) {
        draws[pt] = gamma(rng);
        sum += draws[pt];
    });
    if (sum <= 0.0) return out;
    for (int pt = 0; pt < p.num_points(); ++pt) out.noise[pt] = static_cast<float>(draws[pt] / sum);
    return out;
}

SearchTree::SearchTree(Position root, double c_puct) : root_(std::move(root)), c_puct_(c_puct) {
    if (c_puct < 0.0) throw std::invalid_argument("c_puct must be >= 0");
}

std::optional<int> SearchTree::find(std::uint64_t key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::uint64_t SearchTree::child_key(int node, int edge) const {
    const Node& n = nodes_[node];
    return n.key ^ zobrist::stone(root_.size(), edges_[edge].point, n.to_play) ^ zobrist::white_to_play();
}

Selection SearchTree::select_leaf() const {
    return select([this](int s, int e) {
        const Node& n = nodes_[s];
        const Edge& ed = edges_[e];
        double q = 0.0;
        int child_visits = 0;
        if (ed.child >= 0) {
            q = -nodes_[ed.child].mean();
            child_visits = nodes_[ed.child].visits;
        }
        return puct_score(q, ed.prior, n.visits, child_visits, c_puct_);
    });
}

int SearchTree::create_node(const Selection& sel, bool terminal) {
    if (sel.node >= 0) throw std::logic_error("state already evaluated in this tree");
    if (sel.at_root() && !nodes_.empty()) throw std::logic_error("root already evaluated");
    if (!sel.at_root() && edges_[sel.edge].child >= 0) throw std::logic_error("state already evaluated in this tree");
    Node n;
    n.key = sel.position.key();
    n.parent = sel.parent;
    n.parent_edge = sel.edge;
    n.to_play = sel.position.to_play();
    n.terminal = terminal;
    n.first_edge = static_cast<int>(edges_.size());
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    if (!sel.at_root()) edges_[sel.edge].child = id;
    index_.try_emplace(n.key, id);
    return id;
}

int SearchTree::expand(const Selection& sel, const PVOutput& out) {
    if (sel.position.is_terminal()) throw std::logic_error("expand: terminal state");
    const int id = create_node(sel, false);
    const bool noisy = sel.at_root() && root_noise_.weight > 0.0 && !root_noise_.noise.empty();
    int count = 0;
    for_each_bit(sel.position.legal_bits(sel.position.to_play()), [&](int pt) {
        Edge e;
        e.point = static_cast<std::uint8_t>(pt);
        e.prior = out.policy[pt];
        if (noisy) {
            e.prior = static_cast<float>((1.0 - root_noise_.weight) * e.prior + root_noise_.weight * root_noise_.noise[pt]);
        }
        edges_.push_back(e);
        ++count;
    });
    nodes_[id].num_edges = count;
    return id;
}

int SearchTree::add_terminal(const Selection& sel) {
    if (!sel.position.is_terminal()) throw std::logic_error("add_terminal: state is not terminal");
    return create_node(sel, true);
}

void SearchTree::backup(int node, double value) {
    for (int s = node; s >= 0; s = nodes_[s].parent) {
        nodes_[s].visits += 1;
        nodes_[s].value_sum += value;
        value = -value;
    }
}

Position SearchTree::position_of(int node) const {
    std::vector<int> path = path_to_root(node);
    Position p = root_;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        if (nodes_[*it].parent_edge >= 0) p.play_inplace(edges_[nodes_[*it].parent_edge].point);
    }
    return p;
}

std::vector<int> SearchTree::path_to_root(int node) const {
    std::vector<int> path;
    for (int s = node; s >= 0; s = nodes_[s].parent) path.push_back(s);
    return path;
}

std::vector<int> SearchTree::root_visit_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(root_.num_points()), 0);
    if (nodes_.empty()) return counts;
    for (const Edge& e : edges_of(0)) counts[e.point] = e.child >= 0 ? nodes_[e.child].visits : 0;
    return counts;
}

void SearchTree::check_invariants() const {
    for (int s = 0; s < size(); ++s) {
        const Node& n = nodes_[s];
        if (n.visits > 0 && std::abs(n.mean()) > 1.0 + 1e-9) throw std::logic_error("node mean value outside [-1, 1]");
        if (n.terminal) continue;
        int child_sum = 0;
        double prior_sum = 0.0;
        for (const Edge& e : edges_of(s)) {
            prior_sum += e.prior;
            if (e.child >= 0) {
                child_sum += nodes_[e.child].visits;
                if (nodes_[e.child].parent != s) throw std::logic_error("child/parent link mismatch");
            }
        }
        if (n.visits != child_sum + 1) throw std::logic_error("visit conservation violated");
        if (n.num_edges > 0 && std::abs(prior_sum - 1.0) > 1e-4) throw std::logic_error("priors do not sum to 1");
    }
}

int simulation_cap(int budget) { return 4 * budget + 64; }

SearchStats run_search(SearchTree& tree, const Evaluator& evaluator, int budget, std::uint64_t seed) {
    if (budget < 1) throw std::invalid_argument("run_search: budget must be >= 1");
    if (tree.root_position().is_terminal()) throw std::invalid_argument("run_search: terminal root");
    SearchStats stats;
    const int cap = simulation_cap(budget);
    while (stats.forward_passes < budget && stats.simulations < cap) {
        Selection sel = tree.select_leaf();
        ++stats.simulations;
        if (sel.position.is_terminal()) {
            int node = sel.node >= 0 ? sel.node : tree.add_terminal(sel);
            tree.backup(node, -1.0);
            continue;
        }
        PVOutput out = evaluator.evaluate(sel.position, derive_seed(seed, {static_cast<std::uint64_t>(stats.forward_passes)}));
        ++stats.forward_passes;
        int node = tree.expand(sel, out);
        tree.backup(node, out.value);
    }
    return stats;
}

std::vector<double> policy_from_counts(std::span<const int> counts, double tau) {
    std::vector<double> pi(counts.size(), 0.0);
    int best = -1;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0) throw std::invalid_argument("policy_from_counts: negative count");
        if (counts[i] > 0 && (best < 0 || counts[i] > counts[best])) best = static_cast<int>(i);
    }
    if (best < 0) throw std::invalid_argument("policy_from_counts: no visited move");
    if (tau <= 0.0) {
        pi[best] = 1.0;
        return pi;
    }
    // Scale by the max count before exponentiating to stay finite for small tau.
    const double inv_tau = 1.0 / tau;
    const double top = counts[best];
    double sum = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) continue;
        pi[i] = std::pow(counts[i] / top, inv_tau);
        sum += pi[i];
    }
    for (double& v : pi) v /= sum;
    return pi;
}

}  // namespace mpv
