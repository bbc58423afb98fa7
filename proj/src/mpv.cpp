#include "mpv/mpv.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "mpv/random.hpp"

namespace mpv {

void BudgetSpec::validate(bool allow_inverted) const {
    if (small < 0 || large < 0) throw std::invalid_argument("budget counts must be >= 0");
    if (small + large == 0) throw std::invalid_argument("budget must be positive");
    if (!allow_inverted && small < large) {
        throw std::invalid_argument("small budget (" + std::to_string(small) + ") below large budget (" +
                                    std::to_string(large) + ")");
    }
}

void ShareWeights::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in [0, 1]");
}

std::vector<bool> make_schedule(const BudgetSpec& spec, std::uint64_t seed, bool allow_inverted) {
    spec.validate(allow_inverted);
    std::vector<bool> marks(static_cast<std::size_t>(spec.total()), false);
    std::fill(marks.begin(), marks.begin() + spec.small, true);
    Rng rng(seed);
    for (std::size_t i = marks.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::size_t j = pick(rng);
        bool tmp = marks[i - 1];
        marks[i - 1] = marks[j];
        marks[j] = tmp;
    }
    return marks;
}

BudgetSpec budget_split(Rational total, Rational r, NetShape small, NetShape large, NetShape reference,
                        bool allow_inverted) {
    if (r < Rational(0) || r > Rational(1)) throw std::invalid_argument("budget ratio must be in [0, 1]");
    if (total < Rational(0)) throw std::invalid_argument("budget must be >= 0");
    Rational small_cost = cost_of(small, reference).units;
    Rational large_cost = cost_of(large, reference).units;
    BudgetSpec spec;
    spec.large = static_cast<int>((r * total / large_cost).floor());
    spec.small = static_cast<int>(((Rational(1) - r) * total / small_cost).floor());
    if (r == Rational(1)) return spec;
    if (!allow_inverted && spec.small < spec.large) {
        throw std::invalid_argument("budget split gives fewer small than large simulations (" +
                                    std::to_string(spec.small) + " < " + std::to_string(spec.large) + ")");
    }
    return spec;
}

DualSearch::DualSearch(Position root, const Evaluator& small, const Evaluator& large, MpvConfig config)
    : small_eval_(small),
      large_eval_(large),
      config_(config),
      small_tree_(root, config.c_puct),
      large_tree_(root, config.c_puct) {
    config_.weights.validate();
    add_entry(-1, -1, root.key());
}

void DualSearch::set_root_noise(const RootNoise& noise) {
    small_tree_.set_root_noise(noise);
    large_tree_.set_root_noise(noise);
}

double DualSearch::mixed(std::optional<double> vs, std::optional<double> vl) const {
    if (vs && vl) return config_.weights.alpha * *vs + (1.0 - config_.weights.alpha) * *vl;
    if (vs) return *vs;
    return *vl;
}

double DualSearch::shared_value(std::uint64_t key) const {
    std::optional<double> vs, vl;
    if (auto s = small_tree_.find(key)) vs = small_tree_.node(*s).mean();
    if (auto l = large_tree_.find(key)) vl = large_tree_.node(*l).mean();
    if (!vs && !vl) throw std::out_of_range("shared_value: state not evaluated in either tree");
    return mixed(vs, vl);
}

namespace {
std::optional<double> prior_at(const SearchTree& tree, std::optional<int> node, int point) {
    if (!node || tree.node(*node).terminal) return std::nullopt;
    for (const Edge& e : tree.edges_of(*node)) {
        if (e.point == point) return e.prior;
    }
    return 0.0;
}
}  // namespace

double DualSearch::shared_prior(std::uint64_t key, int point) const {
    auto s = small_tree_.find(key);
    auto l = large_tree_.find(key);
    if (!s && !l) throw std::out_of_range("shared_prior: state not evaluated in either tree");
    std::optional<double> ps = prior_at(small_tree_, s, point);
    std::optional<double> pl = prior_at(large_tree_, l, point);
    if (ps && pl) return config_.weights.beta * *ps + (1.0 - config_.weights.beta) * *pl;
    if (ps) return *ps;
    if (pl) return *pl;
    return 0.0;
}

int DualSearch::small_visits(std::uint64_t key) const {
    auto s = small_tree_.find(key);
    return s ? small_tree_.node(*s).visits : 0;
}

int DualSearch::add_entry(int parent, int edge, std::uint64_t key) {
    const int id = static_cast<int>(frontier_.size());
    frontier_.push_back(FrontierEntry{parent, edge, key, next_seq_++, true});
    frontier_by_key_[key].push_back(id);
    heap_.push(HeapItem{small_visits(key), frontier_.back().seq, id});
    ++open_entries_;
    if (edge >= 0) {
        if (static_cast<int>(entry_of_edge_.size()) <= edge) entry_of_edge_.resize(static_cast<std::size_t>(edge) + 1, -1);
        entry_of_edge_[edge] = id;
    }
    return id;
}

void DualSearch::close_entry(int entry) {
    if (entry < 0 || !frontier_[entry].open) return;
    frontier_[entry].open = false;
    --open_entries_;
}

void DualSearch::add_children_to_frontier(int node) {
    const Node& n = large_tree_.node(node);
    for (int e = n.first_edge; e < n.first_edge + n.num_edges; ++e) add_entry(node, e, large_tree_.child_key(node, e));
}

void DualSearch::refresh_priorities(int small_node) {
    if (open_entries_ == 0) return;
    for (int s = small_node; s >= 0; s = small_tree_.node(s).parent) {
        const Node& n = small_tree_.node(s);
        auto it = frontier_by_key_.find(n.key);
        if (it == frontier_by_key_.end()) continue;
        if (small_tree_.find(n.key) != s) continue;
        for (int id : it->second) {
            if (frontier_[id].open) heap_.push(HeapItem{n.visits, frontier_[id].seq, id});
        }
    }
}

std::optional<FrontierPick> DualSearch::peek_priority() {
    while (!heap_.empty()) {
        const HeapItem top = heap_.top();
        const FrontierEntry& en = frontier_[top.entry];
        // A stale item is safe to drop: every change of N_S pushed a fresh one.
        if (!en.open || top.small_visits != small_visits(en.key)) {
            heap_.pop();
            continue;
        }
        return FrontierPick{top.entry, en.parent, en.edge, en.key, top.small_visits};
    }
    return std::nullopt;
}

FrontierPick DualSearch::linear_scan_pick() const {
    FrontierPick best;
    for (int id = 0; id < static_cast<int>(frontier_.size()); ++id) {
        const FrontierEntry& en = frontier_[id];
        if (!en.open) continue;
        int ns = small_visits(en.key);
        // Entries are visited in insertion order, so strict > keeps the earliest.
        if (best.entry < 0 || ns > best.small_visits) best = FrontierPick{id, en.parent, en.edge, en.key, ns};
    }
    return best;
}

FrontierPick DualSearch::select_priority_leaf() {
    std::optional<FrontierPick> pick = peek_priority();
    if (!pick) throw std::logic_error("select_priority_leaf: empty frontier");
    if (config_.debug) {
        FrontierPick scan = linear_scan_pick();
        if (scan.entry != pick->entry) throw std::logic_error("priority structure disagrees with frontier scan");
    }
    return *pick;
}

void DualSearch::record(int slot, char net, std::uint64_t key, const char* mode, double value) {
    if (!config_.trace) return;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d;net=%c;leaf=%016llx;mode=%s;value=%.6f", slot, net,
                  static_cast<unsigned long long>(key), mode, value);
    trace_.emplace_back(buf);
}

bool DualSearch::small_slot(std::uint64_t seed, int slot, int cap) {
    const SearchTree& S = small_tree_;
    const SearchTree& L = large_tree_;
    const double alpha = config_.weights.alpha;
    const double beta = config_.weights.beta;
    const bool share = L.root_evaluated();
    while (stats_.small_simulations < cap) {
        ++stats_.small_simulations;
        int cached_node = -1;
        int twin_first_edge = -1;
        Selection sel = S.select([&](int s, int e) {
            const Node& n = S.node(s);
            const Edge& ed = S.edge(e);
            if (s != cached_node) {
                cached_node = s;
                twin_first_edge = -1;
                if (share) {
                    auto twin = L.find(n.key);
                    if (twin && !L.node(*twin).terminal) twin_first_edge = L.node(*twin).first_edge;
                }
            }
            bool has_s = false, has_l = false;
            double vs = 0.0, vl = 0.0;
            int child_visits = 0;
            if (ed.child >= 0) {
                has_s = true;
                vs = S.node(ed.child).mean();
                child_visits = S.node(ed.child).visits;
            }
            if (share) {
                if (auto l = L.find(S.child_key(s, e))) {
                    has_l = true;
                    vl = L.node(*l).mean();
                }
            }
            double q = 0.0;
            if (has_s && has_l) q = -(alpha * vs + (1.0 - alpha) * vl);
            else if (has_s) q = -vs;
            else if (has_l) q = -vl;
            double prior = ed.prior;
            if (twin_first_edge >= 0) {
                prior = beta * ed.prior + (1.0 - beta) * L.edge(twin_first_edge + (e - n.first_edge)).prior;
            }
            return puct_score(q, prior, n.visits, child_visits, config_.c_puct);
        });
        if (sel.position.is_terminal()) {
            int node = sel.node >= 0 ? sel.node : small_tree_.add_terminal(sel);
            small_tree_.backup(node, -1.0);
            refresh_priorities(node);
            record(slot, 'S', sel.position.key(), "puct", -1.0);
            continue;
        }
        PVOutput out =
            small_eval_.evaluate(sel.position, derive_seed(seed, {static_cast<std::uint64_t>(stats_.small_passes)}));
        ++stats_.small_passes;
        int node = small_tree_.expand(sel, out);
        small_tree_.backup(node, out.value);
        refresh_priorities(node);
        record(slot, 'S', sel.position.key(), "puct", out.value);
        return true;
    }
    return false;
}

bool DualSearch::large_slot(std::uint64_t seed, int slot, int cap) {
    const SearchTree& S = small_tree_;
    const SearchTree& L = large_tree_;
    const double alpha = config_.weights.alpha;
    const double beta = config_.weights.beta;
    const bool share = S.root_evaluated();
    while (stats_.large_simulations < cap) {
        ++stats_.large_simulations;
        std::optional<FrontierPick> pick;
        if (open_entries_ > 0) pick = select_priority_leaf();
        Selection sel;
        const char* mode;
        if (pick && pick->small_visits > 0) {
            mode = "priority";
            ++stats_.priority_picks;
            sel.parent = pick->parent;
            sel.edge = pick->edge;
            sel.position = pick->parent < 0 ? L.root_position() : L.position_of(pick->parent);
            if (pick->edge >= 0) sel.position.play_inplace(L.edge(pick->edge).point);
        } else {
            mode = "fallback";
            ++stats_.fallback_picks;
            int cached_node = -1;
            int twin_first_edge = -1;
            sel = L.select([&](int s, int e) {
                const Node& n = L.node(s);
                const Edge& ed = L.edge(e);
                if (s != cached_node) {
                    cached_node = s;
                    twin_first_edge = -1;
                    if (share) {
                        auto twin = S.find(n.key);
                        if (twin && !S.node(*twin).terminal) twin_first_edge = S.node(*twin).first_edge;
                    }
                }
                bool has_s = false, has_l = false;
                double vs = 0.0, vl = 0.0;
                int child_visits = 0;
                if (ed.child >= 0) {
                    has_l = true;
                    vl = L.node(ed.child).mean();
                    child_visits = L.node(ed.child).visits;
                }
                if (share) {
                    if (auto sn = S.find(L.child_key(s, e))) {
                        has_s = true;
                        vs = S.node(*sn).mean();
                    }
                }
                double q = 0.0;
                if (has_s && has_l) q = -(alpha * vs + (1.0 - alpha) * vl);
                else if (has_l) q = -vl;
                else if (has_s) q = -vs;
                double prior = ed.prior;
                if (twin_first_edge >= 0) {
                    prior = beta * S.edge(twin_first_edge + (e - n.first_edge)).prior + (1.0 - beta) * ed.prior;
                }
                return puct_score(q, prior, n.visits, child_visits, config_.c_puct);
            });
        }
        const int entry = sel.node >= 0 ? -1 : (sel.at_root() ? 0 : entry_of_edge_[sel.edge]);
        if (sel.position.is_terminal()) {
            int node = sel.node >= 0 ? sel.node : large_tree_.add_terminal(sel);
            close_entry(entry);
            large_tree_.backup(node, -1.0);
            record(slot, 'L', sel.position.key(), mode, -1.0);
            continue;
        }
        PVOutput out =
            large_eval_.evaluate(sel.position, derive_seed(seed, {static_cast<std::uint64_t>(stats_.large_passes)}));
        ++stats_.large_passes;
        int node = large_tree_.expand(sel, out);
        close_entry(entry);
        add_children_to_frontier(node);
        large_tree_.backup(node, out.value);
        record(slot, 'L', sel.position.key(), mode, out.value);
        return true;
    }
    return false;
}

const MpvStats& DualSearch::run(const BudgetSpec& spec, std::uint64_t seed) {
    if (small_tree_.root_position().is_terminal()) throw std::invalid_argument("mpv search: terminal root");
    const bool inverted = config_.allow_inverted_budget;
    std::vector<bool> schedule = make_schedule(spec, derive_seed(seed, {kScheduleSalt}), inverted);
    const int small_cap = stats_.small_simulations + simulation_cap(spec.small);
    const int large_cap = stats_.large_simulations + simulation_cap(spec.large);
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const int slot = static_cast<int>(i) + 1;
        if (!config_.debug) {
            if (schedule[i]) small_slot(seed, slot, small_cap);
            else large_slot(seed, slot, large_cap);
            continue;
        }
        const SearchTree& other = schedule[i] ? large_tree_ : small_tree_;
        const int other_size = other.size();
        const int other_visits = other.root_evaluated() ? other.node(0).visits : 0;
        if (schedule[i]) small_slot(seed, slot, small_cap);
        else large_slot(seed, slot, large_cap);
        const int after_visits = other.root_evaluated() ? other.node(0).visits : 0;
        if (other.size() != other_size || after_visits != other_visits) {
            throw std::logic_error("search slot touched the other network's tree");
        }
    }
    return stats_;
}

std::vector<double> DualSearch::policy(double tau) const {
    return policy_from_counts(small_tree_.root_visit_counts(), tau);
}

}  // namespace mpv
