#pragma once

// NoGo rules: Go stones and liberties, but a move that captures or that
// leaves its own group without liberties is illegal. There is no pass; the
// player to move with no legal move loses.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mpv {

constexpr int kMaxBoardSize = 9;
constexpr int kMaxPoints = kMaxBoardSize * kMaxBoardSize;

using Bitboard = unsigned __int128;

inline int popcount(Bitboard b) {
    return __builtin_popcountll(static_cast<std::uint64_t>(b)) +
           __builtin_popcountll(static_cast<std::uint64_t>(b >> 64));
}

inline int lowest_bit(Bitboard b) {
    auto lo = static_cast<std::uint64_t>(b);
    return lo != 0 ? __builtin_ctzll(lo) : 64 + __builtin_ctzll(static_cast<std::uint64_t>(b >> 64));
}

constexpr Bitboard bit(int point) { return Bitboard{1} << point; }

// Index of the k-th (0-based) set bit.
int nth_bit(Bitboard b, int k);

template <typename Fn>
void for_each_bit(Bitboard b, Fn&& fn) {
    while (b != 0) {
        fn(lowest_bit(b));
        b &= b - 1;
    }
}

enum class Color : std::uint8_t { Black = 0, White = 1 };
enum class Stone : std::uint8_t { Empty = 0, Black = 1, White = 2 };

constexpr Color opponent(Color c) { return c == Color::Black ? Color::White : Color::Black; }
constexpr Stone stone_of(Color c) { return c == Color::Black ? Stone::Black : Stone::White; }
constexpr char color_char(Color c) { return c == Color::Black ? 'B' : 'W'; }

struct Move {
    int row = 0;
    int col = 0;
    friend constexpr bool operator==(const Move&, const Move&) = default;
};

enum class Violation { Occupied, Suicide, Capture };

std::string_view to_string(Violation v);

class IllegalMove : public std::invalid_argument {
public:
    IllegalMove(Violation v, const std::string& what) : std::invalid_argument(what), violation_(v) {}
    Violation violation() const { return violation_; }

private:
    Violation violation_;
};

struct FeaturePlanes {
    static constexpr int kPlanes = 4;

    int size = 0;
    // plane-major: bits[plane * size * size + point]
    std::vector<std::uint8_t> bits;

    std::uint8_t at(int plane, int point) const { return bits[plane * size * size + point]; }
    friend bool operator==(const FeaturePlanes&, const FeaturePlanes&) = default;
};

// Shift/mask tables for one board size.
struct Geometry {
    int size = 0;
    int points = 0;
    Bitboard board = 0;
    Bitboard not_west = 0;  // column != 0
    Bitboard not_east = 0;  // column != size - 1
    std::array<Bitboard, kMaxPoints> adjacent{};

    Bitboard dilate(Bitboard b) const {
        return (((b & not_east) << 1) | ((b & not_west) >> 1) | (b << size) | (b >> size)) & board;
    }

    static const Geometry& get(int size);
};

// Value-semantics NoGo position with an incrementally maintained group and
// liberty structure and cached legal-move sets for both colors.
class Position {
public:
    explicit Position(int size = 9);

    // Setup position from a stone array (row-major, size*size entries).
    // Throws std::invalid_argument if any group has no liberty.
    static Position from_stones(int size, std::span<const Stone> stones, Color to_play);

    int size() const { return size_; }
    int num_points() const { return size_ * size_; }
    Color to_play() const { return to_play_; }
    int move_count() const { return move_count_; }
    std::uint64_t key() const { return key_; }

    int point(Move m) const { return m.row * size_ + m.col; }
    Move move_at(int point) const { return Move{point / size_, point % size_}; }
    bool in_bounds(Move m) const { return m.row >= 0 && m.row < size_ && m.col >= 0 && m.col < size_; }

    Stone at(int point) const;
    Stone at(Move m) const { return at(point(m)); }
    Bitboard stones(Color c) const { return c == Color::Black ? black_ : white_; }
    Bitboard empty() const { return geometry().board & ~(black_ | white_); }

    // Throws std::out_of_range for an off-board point.
    bool is_legal(Move m) const;
    bool is_legal_point(int point) const { return (legal_[index(to_play_)] >> point) & 1; }
    Bitboard legal_bits(Color c) const { return legal_[index(c)]; }
    int legal_count(Color c) const { return popcount(legal_[index(c)]); }
    std::vector<Move> legal_moves() const;

    // Throws IllegalMove / std::out_of_range.
    Position play(Move m) const;
    // Unchecked in-place variant for rollouts and tree descent.
    void play_inplace(int point);

    // Winner if the side to move has no legal move.
    std::optional<Color> winner() const;
    bool is_terminal() const { return legal_[index(to_play_)] == 0; }

    FeaturePlanes features() const;

    // Key of the position reached by the side to move playing `point`,
    // without playing it.
    std::uint64_t child_key(int point) const;

    // Full recompute of groups and legality by flood fill; throws
    // std::logic_error if the incremental state disagrees.
    void check_invariants() const;

    std::string to_string() const;

    friend bool operator==(const Position& a, const Position& b) {
        return a.size_ == b.size_ && a.black_ == b.black_ && a.white_ == b.white_ && a.to_play_ == b.to_play_;
    }

private:
    static constexpr std::uint8_t kNoGroup = 0xff;
    static int index(Color c) { return static_cast<int>(c); }

    const Geometry& geometry() const { return Geometry::get(size_); }
    void place(int point, Color c);
    void refresh_legality();
    Violation violation_for(int point, Color c) const;

    std::int8_t size_ = 9;
    Color to_play_ = Color::Black;
    std::uint8_t move_count_ = 0;
    std::uint64_t key_ = 0;
    Bitboard black_ = 0;
    Bitboard white_ = 0;
    std::array<Bitboard, 2> legal_{};
    // Group ids are the point of the group's most recent stone.
    std::array<std::uint8_t, kMaxPoints> group_of_{};
    std::array<Bitboard, kMaxPoints> liberties_{};
    Bitboard group_ids_ = 0;
};

namespace zobrist {
std::uint64_t stone(int size, int point, Color c);
std::uint64_t white_to_play();
std::uint64_t board(int size);
}  // namespace zobrist

// Zobrist hash over (size, stones, to_play).
inline std::uint64_t position_key(const Position& p) { return p.key(); }

// GTP coordinates: columns A..J skipping I, rows numbered from 1 at row 0.
std::string to_gtp(Move m, int size);
// Throws std::invalid_argument on malformed or off-board text.
Move parse_gtp(std::string_view text, int size);

// `size;B E5;W D4;...;result=B`
struct GameRecord {
    int size = 9;
    std::vector<Move> moves;
    std::optional<Color> winner;

    std::string to_line() const;
    static GameRecord parse_line(std::string_view line);
    // Replays the moves from the empty board (each move checked).
    Position replay() const;
    friend bool operator==(const GameRecord&, const GameRecord&) = default;
};

}  // namespace mpv
