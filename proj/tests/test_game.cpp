#include <doctest.h>

#include <random>
#include <unordered_map>

#include "mpv/game.hpp"
#include "oracles.hpp"

using namespace mpv;

namespace {

Position setup(int size, std::initializer_list<std::pair<Move, Stone>> stones, Color to_play) {
    std::vector<Stone> cells(static_cast<std::size_t>(size * size), Stone::Empty);
    for (auto [m, s] : stones) cells[m.row * size + m.col] = s;
    return Position::from_stones(size, cells, to_play);
}

Position random_position(int size, std::mt19937_64& rng, int max_moves) {
    Position p(size);
    std::uniform_int_distribution<int> len(0, max_moves);
    int n = len(rng);
    for (int i = 0; i < n && !p.is_terminal(); ++i) {
        auto moves = p.legal_moves();
        std::uniform_int_distribution<std::size_t> pick(0, moves.size() - 1);
        p = p.play(moves[pick(rng)]);
    }
    return p;
}

}  // namespace

TEST_CASE("empty 9x9 board: every point is legal") {
    Position p;
    CHECK(p.size() == 9);
    CHECK(p.to_play() == Color::Black);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) CHECK(p.is_legal(Move{r, c}));
    CHECK(p.legal_moves().size() == 81);
    CHECK_FALSE(p.winner().has_value());
}

TEST_CASE("2x2 corner: white's last point both suicides and captures") {
    Position p = setup(2, {{{0, 0}, Stone::Black}, {{0, 1}, Stone::Black}, {{1, 0}, Stone::Black}}, Color::White);
    CHECK_FALSE(p.is_legal(Move{1, 1}));
    CHECK(p.legal_moves().empty());
    REQUIRE(p.winner().has_value());
    CHECK(*p.winner() == Color::Black);
    try {
        (void)p.play(Move{1, 1});
        FAIL("expected IllegalMove");
    } catch (const IllegalMove& e) {
        CHECK(e.violation() == Violation::Suicide);
    }
}

TEST_CASE("single centre stone leaves all eight points legal for white") {
    Position p = Position(3).play(Move{1, 1});
    CHECK(p.to_play() == Color::White);
    int legal = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (!(r == 1 && c == 1)) legal += p.is_legal(Move{r, c});
    CHECK(legal == 8);
    CHECK_FALSE(p.is_legal(Move{1, 1}));
}

TEST_CASE("1x1 board: black has no move and loses") {
    Position p(1);
    CHECK_FALSE(p.is_legal(Move{0, 0}));
    CHECK(p.is_terminal());
    REQUIRE(p.winner().has_value());
    CHECK(*p.winner() == Color::White);
}

TEST_CASE("out-of-bounds and bad sizes are errors") {
    Position p(5);
    CHECK_THROWS_AS((void)p.is_legal(Move{5, 0}), std::out_of_range);
    CHECK_THROWS_AS((void)p.is_legal(Move{0, -1}), std::out_of_range);
    CHECK_THROWS_AS((void)p.play(Move{-1, 2}), std::out_of_range);
    CHECK_THROWS(Position(0));
    CHECK_THROWS(Position(10));
}

TEST_CASE("play has value semantics and reports the violated rule") {
    Position empty(9);
    Position next = empty.play(Move{4, 4});
    CHECK(next.at(Move{4, 4}) == Stone::Black);
    CHECK(next.to_play() == Color::White);
    CHECK(next.move_count() == 1);
    CHECK(empty.at(Move{4, 4}) == Stone::Empty);
    CHECK(empty.move_count() == 0);

    SUBCASE("occupied") {
        try {
            (void)next.play(Move{4, 4});
            FAIL("expected IllegalMove");
        } catch (const IllegalMove& e) {
            CHECK(e.violation() == Violation::Occupied);
        }
    }
    SUBCASE("capture without suicide") {
        Position p = setup(3, {{{0, 0}, Stone::White}, {{0, 1}, Stone::Black}}, Color::Black);
        try {
            (void)p.play(Move{1, 0});
            FAIL("expected IllegalMove");
        } catch (const IllegalMove& e) {
            CHECK(e.violation() == Violation::Capture);
        }
    }
    SUBCASE("suicide without capture") {
        Position p = setup(3, {{{0, 1}, Stone::White}, {{1, 0}, Stone::White}}, Color::Black);
        try {
            (void)p.play(Move{0, 0});
            FAIL("expected IllegalMove");
        } catch (const IllegalMove& e) {
            CHECK(e.violation() == Violation::Suicide);
        }
    }
}

TEST_CASE("from_stones rejects groups without liberties") {
    std::vector<Stone> cells{Stone::Black, Stone::White, Stone::White, Stone::Empty};
    CHECK_THROWS_AS(Position::from_stones(2, cells, Color::Black), std::invalid_argument);
    std::vector<Stone> wrong_size(5, Stone::Empty);
    CHECK_THROWS(Position::from_stones(2, wrong_size, Color::Black));
}

TEST_CASE("random games keep every group alive and end within n*n moves") {
    std::mt19937_64 rng(11);
    for (int size : {2, 3, 4, 5, 7, 9}) {
        for (int game = 0; game < 40; ++game) {
            Position p(size);
            int moves = 0;
            while (!p.is_terminal()) {
                auto legal = p.legal_moves();
                std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
                p = p.play(legal[pick(rng)]);
                ++moves;
                p.check_invariants();
                for (int pt = 0; pt < p.num_points(); ++pt) {
                    if (p.at(pt) != Stone::Empty) CHECK_FALSE(p.is_legal_point(pt));
                }
            }
            CHECK(moves <= size * size);
            CHECK(p.move_count() == moves);
            REQUIRE(p.winner().has_value());
            CHECK(*p.winner() == opponent(p.to_play()));
        }
    }
}

TEST_CASE("legality matches the flood-fill oracle on random 5x5 and 7x7 positions") {
    std::mt19937_64 rng(5);
    int mismatches = 0;
    for (int i = 0; i < 3000; ++i) {
        const int size = i % 2 ? 5 : 7;
        Position p = random_position(size, rng, size * size);
        oracle::Board b = oracle::Board::from(p);
        for (int pt = 0; pt < p.num_points(); ++pt) {
            const bool lib_black = (p.legal_bits(Color::Black) >> pt) & 1;
            const bool lib_white = (p.legal_bits(Color::White) >> pt) & 1;
            mismatches += lib_black != b.legal(pt, 1);
            mismatches += lib_white != b.legal(pt, 2);
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("legal_moves equals a point-by-point is_legal scan") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        Position p = random_position(5, rng, 20);
        std::vector<Move> scan;
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c)
                if (p.is_legal(Move{r, c})) scan.push_back(Move{r, c});
        CHECK(scan == p.legal_moves());
    }
}

TEST_CASE("feature planes") {
    SUBCASE("empty board, black to move") {
        FeaturePlanes f = Position(5).features();
        for (int pt = 0; pt < 25; ++pt) {
            CHECK(f.at(0, pt) == 0);
            CHECK(f.at(1, pt) == 0);
            CHECK(f.at(2, pt) == 1);
            CHECK(f.at(3, pt) == 1);
        }
    }
    SUBCASE("one black stone is the opponent's for white") {
        Position p = Position(5).play(Move{2, 3});
        FeaturePlanes f = p.features();
        int opp = 0, own = 0;
        for (int pt = 0; pt < 25; ++pt) {
            opp += f.at(1, pt);
            own += f.at(0, pt);
        }
        CHECK(opp == 1);
        CHECK(own == 0);
        CHECK(f.at(1, 2 * 5 + 3) == 1);
    }
    SUBCASE("legal planes agree with both colors' legal moves") {
        std::mt19937_64 rng(9);
        for (int i = 0; i < 200; ++i) {
            Position p = random_position(5, rng, 18);
            FeaturePlanes f = p.features();
            for (int pt = 0; pt < 25; ++pt) {
                CHECK(f.at(2, pt) == ((p.legal_bits(p.to_play()) >> pt) & 1));
                CHECK(f.at(3, pt) == ((p.legal_bits(opponent(p.to_play())) >> pt) & 1));
                CHECK((f.at(0, pt) & f.at(1, pt)) == 0);
                if (p.at(pt) != Stone::Empty) CHECK((f.at(2, pt) | f.at(3, pt)) == 0);
            }
        }
    }
}

TEST_CASE("position keys") {
    SUBCASE("transposed move orders agree") {
        Position a = Position(5).play(Move{0, 0}).play(Move{4, 4}).play(Move{2, 2}).play(Move{1, 3});
        Position b = Position(5).play(Move{2, 2}).play(Move{1, 3}).play(Move{0, 0}).play(Move{4, 4});
        CHECK(a == b);
        CHECK(a.key() == b.key());
        CHECK(position_key(a) == a.key());
    }
    SUBCASE("played and set-up positions agree") {
        Position played = Position(5).play(Move{1, 1}).play(Move{3, 2});
        Position built = setup(5, {{{1, 1}, Stone::Black}, {{3, 2}, Stone::White}}, Color::Black);
        CHECK(played == built);
        CHECK(played.key() == built.key());
    }
    SUBCASE("side to move and size are part of the key") {
        Position a = setup(5, {{{1, 1}, Stone::Black}}, Color::White);
        Position b = setup(5, {{{1, 1}, Stone::Black}}, Color::Black);
        CHECK(a.key() != b.key());
        CHECK(Position(5).key() != Position(6).key());
    }
    SUBCASE("child_key predicts the key after a move") {
        std::mt19937_64 rng(21);
        for (int i = 0; i < 300; ++i) {
            Position p = random_position(5, rng, 20);
            for_each_bit(p.legal_bits(p.to_play()), [&](int pt) {
                Position q = p;
                q.play_inplace(pt);
                CHECK(p.child_key(pt) == q.key());
            });
        }
    }
}

TEST_CASE("one million random 5x5 positions have no key collisions") {
    std::mt19937_64 rng(2024);
    std::unordered_map<std::uint64_t, std::string> seen;
    seen.reserve(1 << 20);
    int collisions = 0;
    for (int i = 0; i < 1000000; ++i) {
        Position p(5);
        std::uniform_int_distribution<int> len(0, 25);
        const int n = len(rng);
        for (int k = 0; k < n && !p.is_terminal(); ++k) {
            Bitboard legal = p.legal_bits(p.to_play());
            std::uniform_int_distribution<int> pick(0, popcount(legal) - 1);
            p.play_inplace(nth_bit(legal, pick(rng)));
        }
        std::string board = oracle::Board::from(p).key();
        auto [it, inserted] = seen.emplace(p.key(), board);
        if (!inserted && it->second != board) ++collisions;
    }
    CHECK(collisions == 0);
    CHECK(seen.size() > 100000);
}

TEST_CASE("GTP coordinates") {
    CHECK(to_gtp(Move{0, 0}, 9) == "A1");
    CHECK(to_gtp(Move{4, 4}, 9) == "E5");
    CHECK(to_gtp(Move{8, 8}, 9) == "J9");
    CHECK(to_gtp(Move{0, 7}, 9) == "H1");
    CHECK(parse_gtp("e5", 9) == Move{4, 4});
    CHECK(parse_gtp("J9", 9) == Move{8, 8});
    CHECK_THROWS_AS(parse_gtp("I3", 9), std::invalid_argument);
    CHECK_THROWS_AS(parse_gtp("F1", 5), std::invalid_argument);
    CHECK_THROWS_AS(parse_gtp("A6", 5), std::invalid_argument);
    CHECK_THROWS_AS(parse_gtp("", 5), std::invalid_argument);
    CHECK_THROWS_AS(parse_gtp("pass", 5), std::invalid_argument);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) CHECK(parse_gtp(to_gtp(Move{r, c}, 9), 9) == Move{r, c});
}

TEST_CASE("game records round-trip and replay bit-exactly") {
    std::mt19937_64 rng(77);
    for (int g = 0; g < 30; ++g) {
        Position p(5);
        GameRecord rec;
        rec.size = 5;
        while (!p.is_terminal()) {
            auto moves = p.legal_moves();
            std::uniform_int_distribution<std::size_t> pick(0, moves.size() - 1);
            Move m = moves[pick(rng)];
            rec.moves.push_back(m);
            p = p.play(m);
        }
        rec.winner = p.winner();
        const std::string line = rec.to_line();
        CHECK(line.rfind("5;B ", 0) == 0);
        GameRecord back = GameRecord::parse_line(line);
        CHECK(back.size == 5);
        CHECK(back.moves == rec.moves);
        CHECK(back.winner == rec.winner);
        Position replayed = back.replay();
        CHECK(replayed == p);
        CHECK(replayed.key() == p.key());
    }
    CHECK(GameRecord::parse_line("3;B B2;W A1;result=?").winner == std::nullopt);
    CHECK_THROWS(GameRecord::parse_line("3;B B2;B A1;result=?"));
    CHECK_THROWS(GameRecord::parse_line("x;B B2"));
    CHECK_THROWS(GameRecord::parse_line("3;B Z9;result=B"));
    CHECK_THROWS(GameRecord{2, {Move{0, 0}, Move{1, 1}, Move{0, 1}, Move{1, 0}}, std::nullopt}.replay());
}
