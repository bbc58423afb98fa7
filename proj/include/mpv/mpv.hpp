#pragma once

// Dual-tree search: a small network f_S and a large network f_L grow their own
// trees over one root, sharing values and priors by position key. Small slots
// run PUCT on T_S; large slots evaluate the T_L frontier state most visited in
// T_S, or fall back to PUCT on T_L while no frontier state has T_S visits.

#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpv/evaluator.hpp"
#include "mpv/rational.hpp"
#include "mpv/search.hpp"

namespace mpv {

struct BudgetSpec {
    int small = 0;
    int large = 0;

    // Throws std::invalid_argument on negative counts, an empty budget, or
    // small < large (unless `allow_inverted`).
    void validate(bool allow_inverted = false) const;
    int total() const { return small + large; }
    friend bool operator==(const BudgetSpec&, const BudgetSpec&) = default;
};

struct ShareWeights {
    double alpha = 0.5;  // value mix: alpha * V_S + (1 - alpha) * V_L
    double beta = 0.0;   // prior mix: beta * p_S + (1 - beta) * p_L

    void validate() const;
};

// Salt applied to the search seed before drawing the schedule.
constexpr std::uint64_t kScheduleSalt = 0x5ced'01e5ULL;

// true marks a small-net slot. Exactly spec.small entries are true; the
// positions are a uniformly random subset drawn with a seeded Fisher-Yates.
std::vector<bool> make_schedule(const BudgetSpec& spec, std::uint64_t seed, bool allow_inverted = false);

// Budgets from B normalized units (cost-1 passes of `reference`): the large
// net gets r * B, the small net (1 - r) * B, each divided by its cost and
// floored. r = 1 yields the pure large budget (0, B'). Any other split with
// small < large throws unless `allow_inverted`.
BudgetSpec budget_split(Rational total, Rational r, NetShape small, NetShape large, NetShape reference,
                        bool allow_inverted = false);
inline BudgetSpec budget_split(Rational total, Rational r, NetShape small, NetShape large) {
    return budget_split(total, r, small, large, large);
}

struct MpvConfig {
    ShareWeights weights;
    double c_puct = kDefaultCPuct;
    bool allow_inverted_budget = false;  // tests only
    bool debug = false;                  // cross-check priority picks and tree ownership
    bool trace = false;
};

struct MpvStats {
    int small_passes = 0;
    int large_passes = 0;
    int small_simulations = 0;
    int large_simulations = 0;
    int priority_picks = 0;
    int fallback_picks = 0;
};

struct FrontierPick {
    int entry = -1;
    int parent = -1;  // T_L node, -1 for the root
    int edge = -1;
    std::uint64_t key = 0;
    int small_visits = 0;
};

class DualSearch {
public:
    // Evaluators must outlive the search.
    DualSearch(Position root, const Evaluator& small, const Evaluator& large, MpvConfig config = {});

    const SearchTree& small_tree() const { return small_tree_; }
    const SearchTree& large_tree() const { return large_tree_; }
    const MpvConfig& config() const { return config_; }
    const MpvStats& stats() const { return stats_; }
    const std::vector<std::string>& trace() const { return trace_; }

    // Same noise on both roots.
    void set_root_noise(const RootNoise& noise);

    // Mixed value / prior of a state by key; throws std::out_of_range if
    // neither tree has evaluated it.
    double shared_value(std::uint64_t key) const;
    double shared_prior(std::uint64_t key, int point) const;

    // N_S of a state: visits of its T_S node, 0 if T_S never reached it.
    int small_visits(std::uint64_t key) const;

    // Frontier state of T_L with the highest N_S. Throws std::logic_error
    // on an empty frontier.
    FrontierPick select_priority_leaf();
    int frontier_size() const { return open_entries_; }

    // Runs the whole schedule. Consumes exactly spec.small f_S passes and
    // spec.large f_L passes unless a tree is exhausted.
    const MpvStats& run(const BudgetSpec& spec, std::uint64_t seed);

    // policy_from_counts over T_S's root.
    std::vector<double> policy(double tau) const;

private:
    struct FrontierEntry {
        int parent;
        int edge;
        std::uint64_t key;
        std::uint64_t seq;
        bool open;
    };
    struct HeapItem {
        int small_visits;
        std::uint64_t seq;
        int entry;
        bool operator<(const HeapItem& o) const {
            if (small_visits != o.small_visits) return small_visits < o.small_visits;
            return seq > o.seq;
        }
    };

    const Evaluator& small_eval_;
    const Evaluator& large_eval_;
    MpvConfig config_;
    SearchTree small_tree_;
    SearchTree large_tree_;
    MpvStats stats_;
    std::vector<std::string> trace_;

    std::vector<FrontierEntry> frontier_;
    std::unordered_map<std::uint64_t, std::vector<int>> frontier_by_key_;
    std::vector<int> entry_of_edge_;  // T_L edge index -> frontier entry
    std::priority_queue<HeapItem> heap_;
    std::uint64_t next_seq_ = 0;
    int open_entries_ = 0;

    int add_entry(int parent, int edge, std::uint64_t key);
    void close_entry(int entry);
    void add_children_to_frontier(int node);
    void refresh_priorities(int small_node);
    std::optional<FrontierPick> peek_priority();
    FrontierPick linear_scan_pick() const;

    double mixed(std::optional<double> vs, std::optional<double> vl) const;

    bool small_slot(std::uint64_t seed, int slot, int cap);
    bool large_slot(std::uint64_t seed, int slot, int cap);
    void record(int slot, char net, std::uint64_t key, const char* mode, double value);
};

}  // namespace mpv
