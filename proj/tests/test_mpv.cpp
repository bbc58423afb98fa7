#include <doctest.h>

#include <map>
#include <random>

#include "mpv/mpv.hpp"
#include "mpv/nn.hpp"
#include "oracles.hpp"
#include "reference_mpv.hpp"
#include "toy_game.hpp"

using namespace mpv;

namespace {

std::shared_ptr<nn::NetworkEvaluator> random_net(int filters, int blocks, std::uint64_t seed) {
    auto params = std::make_shared<nn::Parameters<float>>(
        nn::Parameters<float>::random(nn::NetworkConfig{5, filters, blocks, 0.0, 16}, seed));
    return std::make_shared<nn::NetworkEvaluator>(params, NetShape{8, 2});
}

Position random_position(int size, std::uint64_t seed, int max_len) {
    std::mt19937_64 rng(seed);
    for (;;) {
        Position p(size);
        const int len = std::uniform_int_distribution<int>(0, max_len)(rng);
        for (int k = 0; k < len && !p.is_terminal(); ++k) {
            auto moves = p.legal_moves();
            p = p.play(moves[std::uniform_int_distribution<std::size_t>(0, moves.size() - 1)(rng)]);
        }
        if (!p.is_terminal()) return p;
    }
}

std::vector<std::pair<int, double>> node_stats(const SearchTree& t) {
    std::vector<std::pair<int, double>> out;
    for (int i = 0; i < t.size(); ++i) out.emplace_back(t.node(i).visits, t.node(i).value_sum);
    return out;
}

// Largest N_S over T_L's frontier, computed from the trees directly.
int frontier_max_small_visits(const DualSearch& d) {
    const SearchTree& L = d.large_tree();
    if (!L.root_evaluated()) return d.small_visits(L.root_position().key());
    int best = -1;
    for (int n = 0; n < L.size(); ++n) {
        if (L.node(n).terminal) continue;
        for (int e = L.node(n).first_edge; e < L.node(n).first_edge + L.node(n).num_edges; ++e) {
            if (L.edge(e).child < 0) best = std::max(best, d.small_visits(L.child_key(n, e)));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("budget spec validation") {
    CHECK_NOTHROW((BudgetSpec{800, 100}.validate()));
    CHECK_NOTHROW((BudgetSpec{5, 5}.validate()));
    CHECK_NOTHROW((BudgetSpec{5, 0}.validate()));
    CHECK_THROWS_AS((BudgetSpec{0, 5}.validate()), std::invalid_argument);
    CHECK_NOTHROW((BudgetSpec{0, 5}.validate(true)));
    CHECK_THROWS((BudgetSpec{0, 0}.validate(true)));
    CHECK_THROWS((BudgetSpec{-1, 0}.validate(true)));
    CHECK_NOTHROW((ShareWeights{}.validate()));
    CHECK(ShareWeights{}.alpha == 0.5);
    CHECK(ShareWeights{}.beta == 0.0);
    CHECK_THROWS((ShareWeights{1.5, 0}.validate()));
    CHECK_THROWS((ShareWeights{0.5, -0.1}.validate()));
}

TEST_CASE("make_schedule") {
    SUBCASE("800 small and 100 large slots") {
        auto s = make_schedule(BudgetSpec{800, 100}, 1);
        CHECK(s.size() == 900);
        CHECK(std::count(s.begin(), s.end(), true) == 800);
        CHECK(s == make_schedule(BudgetSpec{800, 100}, 1));
        CHECK(s != make_schedule(BudgetSpec{800, 100}, 2));
    }
    SUBCASE("degenerate budgets") {
        auto all_small = make_schedule(BudgetSpec{50, 0}, 3);
        CHECK(std::count(all_small.begin(), all_small.end(), true) == 50);
        auto all_large = make_schedule(BudgetSpec{0, 50}, 3, true);
        CHECK(std::count(all_large.begin(), all_large.end(), false) == 50);
        CHECK_THROWS(make_schedule(BudgetSpec{0, 50}, 3));
    }
    SUBCASE("subsets are uniform") {
        // 5 slots, 2 small: 10 subsets, chi-square with 9 degrees of freedom.
        std::map<std::vector<bool>, int> freq;
        const int n = 20000;
        for (int seed = 0; seed < n; ++seed) ++freq[make_schedule(BudgetSpec{3, 2}, derive_seed(99, {static_cast<std::uint64_t>(seed)}))];
        CHECK(freq.size() == 10);
        double chi2 = 0;
        for (auto& [k, v] : freq) chi2 += (v - n / 10.0) * (v - n / 10.0) / (n / 10.0);
        CHECK(chi2 < 27.88);  // p = 0.001
    }
}

TEST_CASE("budget_split") {
    const NetShape f64_5{64, 5}, f128_10{128, 10};
    CHECK(budget_split(Rational(1600), Rational(1, 2), f64_5, f128_10) == BudgetSpec{6400, 800});
    CHECK(budget_split(Rational(1600), Rational(1), f64_5, f128_10) == BudgetSpec{0, 1600});
    CHECK(budget_split(Rational(1600), Rational(0), f64_5, f128_10) == BudgetSpec{12800, 0});
    CHECK(budget_split(Rational(400), Rational(1, 2), NetShape{16, 1}, NetShape{32, 2}) == BudgetSpec{1600, 200});
    CHECK(budget_split(Rational(10), Rational(1, 3), f64_5, f128_10) == BudgetSpec{53, 3});
    // Reference different from the large shape.
    CHECK(budget_split(Rational(100), Rational(1, 2), NetShape{16, 1}, NetShape{32, 2}, f128_10) ==
          BudgetSpec{50 * 640, 50 * 80});
    CHECK_THROWS_AS(budget_split(Rational(1600), Rational(19, 20), f64_5, f128_10), std::invalid_argument);
    CHECK(budget_split(Rational(1600), Rational(19, 20), f64_5, f128_10, f128_10, true) == BudgetSpec{640, 1520});
    CHECK_THROWS(budget_split(Rational(100), Rational(3, 2), f64_5, f128_10));
    CHECK_THROWS(budget_split(Rational(100), Rational(-1, 2), f64_5, f128_10));
}

TEST_CASE("shared value and prior") {
    oracle::ToyGame toy;
    REQUIRE(toy.well_formed());
    oracle::TableEvaluator small, large;
    std::vector<float> ps(9, 0.0f), pl(9, 0.0f);
    ps[7] = 0.6f;
    ps[8] = 0.4f;
    pl[7] = 0.3f;
    pl[8] = 0.7f;
    small.set(toy.root, {ps, 0.2f});
    large.set(toy.root, {pl, 0.6f});

    auto evaluated = [&](ShareWeights w) {
        MpvConfig cfg;
        cfg.weights = w;
        auto d = std::make_unique<DualSearch>(toy.root, small, large, cfg);
        d->run(BudgetSpec{1, 1}, 0);
        return d;
    };
    const std::uint64_t k = toy.root.key();
    SUBCASE("both trees know the state") {
        auto d = evaluated(ShareWeights{0.5, 0.0});
        REQUIRE(d->small_tree().node(0).visits == 1);
        REQUIRE(d->large_tree().node(0).visits == 1);
        CHECK(d->shared_value(k) == doctest::Approx(0.4));
        CHECK(d->shared_prior(k, 7) == doctest::Approx(0.3));  // p_L exactly
        CHECK(d->shared_prior(k, 8) == doctest::Approx(0.7));
        CHECK(d->shared_prior(k, 0) == 0.0);  // illegal point
        CHECK(evaluated(ShareWeights{1.0, 0.0})->shared_value(k) == doctest::Approx(0.2));
        CHECK(evaluated(ShareWeights{0.0, 0.0})->shared_value(k) == doctest::Approx(0.6));
        CHECK(evaluated(ShareWeights{0.5, 1.0})->shared_prior(k, 7) == doctest::Approx(0.6));
        CHECK(evaluated(ShareWeights{0.5, 0.5})->shared_prior(k, 7) == doctest::Approx(0.45));
    }
    SUBCASE("state known to T_S only") {
        MpvConfig cfg;
        DualSearch d(toy.root, small, large, cfg);
        d.run(BudgetSpec{1, 0}, 0);
        CHECK_FALSE(d.large_tree().root_evaluated());
        CHECK(d.shared_value(k) == doctest::Approx(0.2));
        CHECK(d.shared_prior(k, 7) == doctest::Approx(0.6));
    }
    SUBCASE("unknown states are errors") {
        DualSearch d(toy.root, small, large);
        CHECK_THROWS_AS(d.shared_value(k), std::out_of_range);
        CHECK_THROWS_AS(d.shared_prior(k, 7), std::out_of_range);
        CHECK(d.small_visits(k) == 0);
    }
}

TEST_CASE("shared value is a convex combination") {
    auto small = random_net(4, 1, 1);
    auto large = random_net(8, 1, 2);
    for (double alpha : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        MpvConfig cfg;
        cfg.weights.alpha = alpha;
        DualSearch d(random_position(5, 3, 6), *small, *large, cfg);
        d.run(BudgetSpec{200, 50}, 4);
        const SearchTree& S = d.small_tree();
        const SearchTree& L = d.large_tree();
        int both = 0;
        for (int n = 0; n < S.size(); ++n) {
            auto l = L.find(S.node(n).key);
            if (!l || S.find(S.node(n).key) != n) continue;
            const double vs = S.node(n).mean(), vl = L.node(*l).mean();
            const double v = d.shared_value(S.node(n).key);
            CHECK(v >= std::min(vs, vl) - 1e-12);
            CHECK(v <= std::max(vs, vl) + 1e-12);
            CHECK(v == doctest::Approx(alpha * vs + (1 - alpha) * vl));
            ++both;
        }
        CHECK(both > 5);
    }
}

TEST_CASE("hand-executed trace on the scripted toy game") {
    oracle::ToyGame toy;
    REQUIRE(toy.well_formed());
    std::string schedule;
    for (bool b : make_schedule(BudgetSpec{3, 3}, derive_seed(toy.kSeed, {kScheduleSalt}))) schedule += b ? 'S' : 'L';
    REQUIRE(schedule == toy.kSchedule);

    MpvConfig cfg;
    cfg.trace = true;
    cfg.debug = true;
    DualSearch d(toy.root, toy.small, toy.large, cfg);
    d.run(BudgetSpec{3, 3}, toy.kSeed);
    CHECK(d.trace() == toy.expected_trace());
    CHECK(d.stats().small_passes == 3);
    CHECK(d.stats().large_passes == 3);
    CHECK(d.stats().priority_picks == 1);
    CHECK(d.stats().fallback_picks == 2);

    // Final statistics from the same hand execution.
    const SearchTree& S = d.small_tree();
    const SearchTree& L = d.large_tree();
    CHECK(S.node(0).visits == 4);
    CHECK(S.node(0).value_sum == doctest::Approx(-0.6));
    CHECK(S.node(*S.find(toy.c2.key())).visits == 2);
    CHECK(S.node(*S.find(toy.c2.key())).value_sum == doctest::Approx(1.3));
    CHECK(S.node(*S.find(toy.g21.key())).terminal);
    CHECK(L.node(0).visits == 3);
    CHECK(L.node(0).value_sum == doctest::Approx(0.1));
    // Open frontier: the four replies; the one T_S has visited comes first.
    CHECK(d.frontier_size() == 4);
    FrontierPick next = d.select_priority_leaf();
    CHECK(next.key == toy.g21.key());
    CHECK(next.small_visits == 1);
}

TEST_CASE("DualSearch agrees with the reference implementation") {
    int compared = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        auto small = random_net(4, 1, seed);
        auto large = random_net(8, 1, seed + 100);
        const double alpha = (seed % 3) * 0.5;
        const double beta = (seed % 4) / 3.0;
        const int size = seed % 2 ? 4 : 5;
        Position root = random_position(size, seed, 4);
        auto small_eval = std::make_shared<HeuristicEvaluator>(0.2);
        const Evaluator& fs = size == 5 ? static_cast<const Evaluator&>(*small) : *small_eval;
        RolloutEvaluator rollout(1, seed);
        const Evaluator& fl = size == 5 ? static_cast<const Evaluator&>(*large) : rollout;
        const BudgetSpec spec{40 + static_cast<int>(seed) * 7, 10 + static_cast<int>(seed)};

        MpvConfig cfg;
        cfg.weights = ShareWeights{alpha, beta};
        cfg.trace = true;
        cfg.debug = true;
        DualSearch d(root, fs, fl, cfg);
        d.run(spec, seed);
        oracle::ReferenceDual ref(root, fs, fl, alpha, beta, cfg.c_puct);
        auto expected = ref.run(spec, seed, false);
        REQUIRE(d.trace().size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            INFO("seed " << seed << " line " << i);
            CHECK(d.trace()[i] == expected[i]);
        }
        CHECK(d.small_tree().root_visit_counts() == ref.root_counts(0));
        CHECK(d.large_tree().root_visit_counts() == ref.root_counts(1));
        ++compared;
    }
    CHECK(compared == 12);
}

TEST_CASE("forward-pass counters are exact") {
    auto cs = std::make_shared<CountingEvaluator>(random_net(4, 1, 5));
    auto cl = std::make_shared<CountingEvaluator>(random_net(8, 2, 6));
    for (auto spec : {BudgetSpec{800, 100}, BudgetSpec{100, 100}, BudgetSpec{37, 5}, BudgetSpec{20, 0}}) {
        cs->reset();
        cl->reset();
        MpvConfig cfg;
        cfg.debug = true;
        DualSearch d(Position(5), *cs, *cl, cfg);
        const MpvStats& st = d.run(spec, 11);
        CHECK(st.small_passes == spec.small);
        CHECK(st.large_passes == spec.large);
        CHECK(cs->calls() == static_cast<std::uint64_t>(spec.small));
        CHECK(cl->calls() == static_cast<std::uint64_t>(spec.large));
        CHECK(st.priority_picks + st.fallback_picks >= spec.large);
        d.small_tree().check_invariants();
        if (d.large_tree().root_evaluated()) d.large_tree().check_invariants();
    }
}

TEST_CASE("reduction identities") {
    RolloutEvaluator fs(2, 3);
    RolloutEvaluator fl(3, 4);
    for (std::uint64_t seed : {1, 2, 3}) {
        Position root = random_position(5, seed, 5);
        SUBCASE("b_L = 0 equals PV search with f_S") {
            DualSearch d(root, fs, fl);
            d.run(BudgetSpec{300, 0}, seed);
            SearchTree pv(root);
            run_search(pv, fs, 300, seed);
            CHECK(node_stats(d.small_tree()) == node_stats(pv));
            CHECK(d.policy(1.0) == policy_from_counts(pv.root_visit_counts(), 1.0));
            CHECK_FALSE(d.large_tree().root_evaluated());
        }
        SUBCASE("b_S = 0 equals PV search with f_L") {
            MpvConfig cfg;
            cfg.allow_inverted_budget = true;
            DualSearch d(root, fs, fl, cfg);
            d.run(BudgetSpec{0, 300}, seed);
            SearchTree pv(root);
            run_search(pv, fl, 300, seed);
            CHECK(node_stats(d.large_tree()) == node_stats(pv));
            CHECK(d.stats().fallback_picks == d.stats().large_simulations);
        }
    }
    SUBCASE("inverted budgets need the override") {
        DualSearch d(Position(5), fs, fl);
        CHECK_THROWS(d.run(BudgetSpec{0, 10}, 1));
    }
}

TEST_CASE("priority selection") {
    auto small = random_net(4, 1, 21);
    auto large = random_net(8, 1, 22);
    SUBCASE("picks the frontier state with the most T_S visits") {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            DualSearch d(random_position(5, seed, 5), *small, *large);
            d.run(BudgetSpec{150, 5}, seed);
            FrontierPick pick = d.select_priority_leaf();
            CHECK(pick.small_visits == frontier_max_small_visits(d));
            CHECK(pick.small_visits == d.small_visits(pick.key));
        }
    }
    SUBCASE("a fresh T_L root with no T_S visits signals fallback") {
        DualSearch d(Position(5), *small, *large);
        FrontierPick pick = d.select_priority_leaf();
        CHECK(pick.parent == -1);
        CHECK(pick.small_visits == 0);
        CHECK(d.frontier_size() == 1);
    }
    SUBCASE("an evaluated leaf leaves the frontier and its children enter") {
        MpvConfig cfg;
        cfg.allow_inverted_budget = true;
        DualSearch d(Position(5), *small, *large, cfg);
        d.run(BudgetSpec{0, 1}, 1);
        CHECK(d.frontier_size() == 25);
        d.run(BudgetSpec{0, 1}, 2);
        CHECK(d.frontier_size() == 25 - 1 + 24);
    }
    SUBCASE("exhausted frontier is an error") {
        MpvConfig cfg;
        cfg.allow_inverted_budget = true;
        DualSearch d(Position(2), *small, *large, cfg);
        UniformEvaluator u;
        DualSearch e(Position(2), u, u, cfg);
        e.run(BudgetSpec{0, 200}, 1);
        CHECK(e.frontier_size() == 0);
        CHECK_THROWS_AS(e.select_priority_leaf(), std::logic_error);
    }
}

TEST_CASE("debug mode cross-checks a long run") {
    auto small = random_net(4, 1, 31);
    auto large = random_net(8, 2, 32);
    MpvConfig cfg;
    cfg.debug = true;
    DualSearch d(Position(5), *small, *large, cfg);
    CHECK_NOTHROW(d.run(BudgetSpec{800, 100}, 5));
    CHECK(d.stats().priority_picks > 50);
}

TEST_CASE("policy comes from T_S counts") {
    auto small = random_net(4, 1, 41);
    auto large = random_net(8, 1, 42);
    DualSearch d(Position(5), *small, *large);
    d.run(BudgetSpec{400, 50}, 3);
    auto counts = d.small_tree().root_visit_counts();
    CHECK(d.policy(1.0) == policy_from_counts(counts, 1.0));
    auto greedy = d.policy(0.0);
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    CHECK(greedy[best] == 1.0);
    CHECK(std::accumulate(counts.begin(), counts.end(), 0) == d.small_tree().node(0).visits - 1);
}

TEST_CASE("dual search is deterministic and rejects terminal roots") {
    RolloutEvaluator fs(1, 5), fl(4, 6);
    auto run = [&] {
        MpvConfig cfg;
        cfg.trace = true;
        DualSearch d(Position(5), fs, fl, cfg);
        d.run(BudgetSpec{200, 40}, 9);
        return d.trace();
    };
    CHECK(run() == run());
    DualSearch t(Position(1), fs, fl);
    CHECK_THROWS(t.run(BudgetSpec{5, 1}, 1));
}
