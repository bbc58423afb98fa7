#include "mpv/game.hpp"

#include <cctype>
#include <sstream>

#include "mpv/random.hpp"

namespace mpv {

int nth_bit(Bitboard b, int k) {
    auto word = static_cast<std::uint64_t>(b);
    int offset = 0;
    int lo_count = __builtin_popcountll(word);
    if (k >= lo_count) {
        k -= lo_count;
        word = static_cast<std::uint64_t>(b >> 64);
        offset = 64;
    }
    for (int i = 0; i < k; ++i) word &= word - 1;
    return offset + __builtin_ctzll(word);
}

std::string_view to_string(Violation v) {
    switch (v) {
        case Violation::Occupied: return "occupied";
        case Violation::Suicide: return "suicide";
        case Violation::Capture: return "capture";
    }
    return "unknown";
}

const Geometry& Geometry::get(int size) {
    static const auto table = [] {
        std::array<Geometry, kMaxBoardSize + 1> t{};
        for (int n = 1; n <= kMaxBoardSize; ++n) {
            Geometry& g = t[n];
            g.size = n;
            g.points = n * n;
            for (int p = 0; p < n * n; ++p) {
                g.board |= bit(p);
                if (p % n != 0) g.not_west |= bit(p);
                if (p % n != n - 1) g.not_east |= bit(p);
            }
            for (int p = 0; p < n * n; ++p) g.adjacent[p] = g.dilate(bit(p));
        }
        return t;
    }();
    if (size < 1 || size > kMaxBoardSize) throw std::invalid_argument("board size must be in 1..9");
    return table[size];
}

namespace zobrist {
namespace {
struct Table {
    std::array<std::array<std::array<std::uint64_t, 2>, kMaxPoints>, kMaxBoardSize + 1> stones{};
    std::array<std::uint64_t, kMaxBoardSize + 1> sizes{};
    std::uint64_t white = 0;

    Table() {
        std::uint64_t s = 0x4e6f476f5a6f6272ULL;
        auto next = [&s] { return s = mix64(s); };
        for (auto& per_size : stones)
            for (auto& per_point : per_size)
                for (auto& v : per_point) v = next();
        for (auto& v : sizes) v = next();
        white = next();
    }
};
const Table& table() {
    static const Table t;
    return t;
}
}  // namespace

std::uint64_t stone(int size, int point, Color c) { return table().stones[size][point][static_cast<int>(c)]; }
std::uint64_t white_to_play() { return table().white; }
std::uint64_t board(int size) { return table().sizes[size]; }
}  // namespace zobrist

Position::Position(int size) {
    Geometry::get(size);  // validates
    size_ = static_cast<std::int8_t>(size);
    group_of_.fill(kNoGroup);
    key_ = zobrist::board(size);
    refresh_legality();
}

Position Position::from_stones(int size, std::span<const Stone> stones, Color to_play) {
    Position p(size);
    if (static_cast<int>(stones.size()) != size * size) throw std::invalid_argument("from_stones: wrong stone count");
    for (int pt = 0; pt < size * size; ++pt) {
        if (stones[pt] == Stone::Empty) continue;
        p.place(pt, stones[pt] == Stone::Black ? Color::Black : Color::White);
        ++p.move_count_;
    }
    for_each_bit(p.group_ids_, [&](int g) {
        if (p.liberties_[g] == 0) throw std::invalid_argument("from_stones: group without liberties");
    });
    p.to_play_ = to_play;
    if (to_play == Color::White) p.key_ ^= zobrist::white_to_play();
    p.refresh_legality();
    return p;
}

Stone Position::at(int point) const {
    if ((black_ >> point) & 1) return Stone::Black;
    if ((white_ >> point) & 1) return Stone::White;
    return Stone::Empty;
}

bool Position::is_legal(Move m) const {
    if (!in_bounds(m)) throw std::out_of_range("move " + std::to_string(m.row) + "," + std::to_string(m.col) + " is off the board");
    return is_legal_point(point(m));
}

std::vector<Move> Position::legal_moves() const {
    std::vector<Move> out;
    for_each_bit(legal_[index(to_play_)], [&](int p) { out.push_back(move_at(p)); });
    return out;
}

Violation Position::violation_for(int pt, Color c) const {
    const Geometry& g = geometry();
    if (((black_ | white_) >> pt) & 1) return Violation::Occupied;
    Bitboard own = stones(c);
    Bitboard opp = stones(opponent(c));
    bool breathes = (g.adjacent[pt] & empty()) != 0;
    bool captures = false;
    for_each_bit(g.adjacent[pt] & own, [&](int q) {
        if (popcount(liberties_[group_of_[q]]) >= 2) breathes = true;
    });
    for_each_bit(g.adjacent[pt] & opp, [&](int q) {
        if (liberties_[group_of_[q]] == bit(pt)) captures = true;
    });
    if (!breathes) return Violation::Suicide;
    if (captures) return Violation::Capture;
    throw std::logic_error("violation_for called on a legal move");
}

Position Position::play(Move m) const {
    if (!is_legal(m)) {
        Violation v = violation_for(point(m), to_play_);
        throw IllegalMove(v, "illegal move " + to_gtp(m, size_) + ": " + std::string(mpv::to_string(v)));
    }
    Position next = *this;
    next.play_inplace(point(m));
    return next;
}

void Position::play_inplace(int pt) {
    place(pt, to_play_);
    ++move_count_;
    to_play_ = opponent(to_play_);
    key_ ^= zobrist::white_to_play();
    refresh_legality();
}

void Position::place(int pt, Color c) {
    const Geometry& g = geometry();
    Bitboard& own = c == Color::Black ? black_ : white_;
    Bitboard opp = stones(opponent(c));
    own |= bit(pt);
    key_ ^= zobrist::stone(size_, pt, c);

    const auto id = static_cast<std::uint8_t>(pt);
    Bitboard libs = g.adjacent[pt] & empty();
    Bitboard merged = 0;
    for_each_bit(g.adjacent[pt] & own & ~bit(pt), [&](int q) {
        std::uint8_t other = group_of_[q];
        if (other == id || ((merged >> other) & 1)) return;
        merged |= bit(other);
        libs |= liberties_[other];
        group_ids_ &= ~bit(other);
    });
    if (merged != 0) {
        for_each_bit(own, [&](int q) {
            if ((merged >> group_of_[q]) & 1) group_of_[q] = id;
        });
    }
    group_of_[pt] = id;
    group_ids_ |= bit(pt);
    liberties_[pt] = libs & ~bit(pt);
    for_each_bit(g.adjacent[pt] & opp, [&](int q) { liberties_[group_of_[q]] &= ~bit(pt); });
}

void Position::refresh_legality() {
    const Geometry& g = geometry();
    Bitboard open = empty();
    Bitboard near_open = g.dilate(open);
    std::array<Bitboard, 2> atari{};
    std::array<Bitboard, 2> safe{};
    for_each_bit(group_ids_, [&](int id) {
        Bitboard libs = liberties_[id];
        int c = ((black_ >> id) & 1) ? 0 : 1;
        if ((libs & (libs - 1)) == 0) {
            atari[c] |= libs;
        } else {
            safe[c] |= libs;
        }
    });
    for (int c = 0; c < 2; ++c) {
        legal_[c] = open & ~atari[1 - c] & (near_open | safe[c]);
    }
}

std::optional<Color> Position::winner() const {
    if (is_terminal()) return opponent(to_play_);
    return std::nullopt;
}

FeaturePlanes Position::features() const {
    FeaturePlanes f;
    f.size = size_;
    const int n = num_points();
    f.bits.assign(static_cast<std::size_t>(FeaturePlanes::kPlanes * n), 0);
    const Bitboard planes[4] = {stones(to_play_), stones(opponent(to_play_)), legal_[index(to_play_)],
                                legal_[index(opponent(to_play_))]};
    for (int k = 0; k < 4; ++k) {
        for_each_bit(planes[k], [&](int p) { f.bits[k * n + p] = 1; });
    }
    return f;
}

std::uint64_t Position::child_key(int pt) const {
    return key_ ^ zobrist::stone(size_, pt, to_play_) ^ zobrist::white_to_play();
}

void Position::check_invariants() const {
    const Geometry& g = geometry();
    const int n = num_points();
    if ((black_ & white_) != 0) throw std::logic_error("overlapping stones");
    if (((black_ | white_) & ~g.board) != 0) throw std::logic_error("stone off the board");
    if (popcount(black_ | white_) != move_count_) throw std::logic_error("move_count does not match stones");

    // Flood-fill groups from scratch.
    std::array<Bitboard, kMaxPoints> fresh_libs{};
    std::array<int, kMaxPoints> root{};
    root.fill(-1);
    Bitboard open = empty();
    for (int p = 0; p < n; ++p) {
        if (root[p] != -1 || at(p) == Stone::Empty) continue;
        Bitboard same = at(p) == Stone::Black ? black_ : white_;
        Bitboard group = bit(p);
        for (;;) {
            Bitboard grown = (group | g.dilate(group)) & same;
            if (grown == group) break;
            group = grown;
        }
        Bitboard libs = g.dilate(group) & open;
        if (libs == 0) throw std::logic_error("group without liberties");
        for_each_bit(group, [&](int q) {
            root[q] = p;
            fresh_libs[q] = libs;
        });
    }
    for (int p = 0; p < n; ++p) {
        if (root[p] == -1) continue;
        if (liberties_[group_of_[p]] != fresh_libs[p]) throw std::logic_error("stale liberty cache");
        if (group_of_[p] != group_of_[root[p]]) throw std::logic_error("split group ids");
    }

    // Legality by trial placement against the fresh groups.
    for (int c = 0; c < 2; ++c) {
        Bitboard own = c == 0 ? black_ : white_;
        Bitboard opp = c == 0 ? white_ : black_;
        Bitboard expect = 0;
        for_each_bit(open, [&](int p) {
            Bitboard group = bit(p);
            Bitboard with = own | bit(p);
            for (;;) {
                Bitboard grown = (group | g.dilate(group)) & with;
                if (grown == group) break;
                group = grown;
            }
            bool ok = (g.dilate(group) & open & ~bit(p)) != 0;
            for_each_bit(g.adjacent[p] & opp, [&](int q) {
                if (fresh_libs[q] == bit(p)) ok = false;
            });
            if (ok) expect |= bit(p);
        });
        if (expect != legal_[c]) throw std::logic_error("stale legality cache");
    }

    std::uint64_t k = zobrist::board(size_);
    for (int p = 0; p < n; ++p) {
        if (at(p) == Stone::Black) k ^= zobrist::stone(size_, p, Color::Black);
        if (at(p) == Stone::White) k ^= zobrist::stone(size_, p, Color::White);
    }
    if (to_play_ == Color::White) k ^= zobrist::white_to_play();
    if (k != key_) throw std::logic_error("stale position key");
}

std::string Position::to_string() const {
    std::ostringstream os;
    for (int r = size_ - 1; r >= 0; --r) {
        os << (r + 1) << ' ';
        for (int c = 0; c < size_; ++c) {
            Stone s = at(Move{r, c});
            os << (s == Stone::Black ? 'X' : s == Stone::White ? 'O' : '.');
        }
        os << '\n';
    }
    os << "  ";
    for (int c = 0; c < size_; ++c) os << to_gtp(Move{0, c}, size_)[0];
    os << "\n" << color_char(to_play_) << " to play\n";
    return os.str();
}

namespace {
constexpr std::string_view kColumns = "ABCDEFGHJ";
}

std::string to_gtp(Move m, int size) {
    if (m.row < 0 || m.row >= size || m.col < 0 || m.col >= size) throw std::out_of_range("to_gtp: off-board move");
    return std::string(1, kColumns[m.col]) + std::to_string(m.row + 1);
}

Move parse_gtp(std::string_view text, int size) {
    if (text.size() < 2 || text.size() > 3) throw std::invalid_argument("malformed coordinate '" + std::string(text) + "'");
    char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    auto col = kColumns.find(letter);
    if (col == std::string_view::npos) throw std::invalid_argument("malformed coordinate '" + std::string(text) + "'");
    int row = 0;
    for (char ch : text.substr(1)) {
        if (!std::isdigit(static_cast<unsigned char>(ch))) throw std::invalid_argument("malformed coordinate '" + std::string(text) + "'");
        row = row * 10 + (ch - '0');
    }
    Move m{row - 1, static_cast<int>(col)};
    if (m.row < 0 || m.row >= size || m.col >= size) throw std::invalid_argument("coordinate '" + std::string(text) + "' is off the board");
    return m;
}

std::string GameRecord::to_line() const {
    std::string out = std::to_string(size);
    Color c = Color::Black;
    for (const Move& m : moves) {
        out += ';';
        out += color_char(c);
        out += ' ';
        out += to_gtp(m, size);
        c = opponent(c);
    }
    out += ";result=";
    out += winner ? std::string(1, color_char(*winner)) : std::string("?");
    return out;
}

GameRecord GameRecord::parse_line(std::string_view line) {
    GameRecord rec;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
        auto end = line.find(';', start);
        if (end == std::string_view::npos) end = line.size();
        fields.push_back(line.substr(start, end - start));
        start = end + 1;
    }
    if (fields.size() < 2) throw std::invalid_argument("game record: too few fields");
    rec.size = std::stoi(std::string(fields.front()));
    Geometry::get(rec.size);
    Color expect = Color::Black;
    for (std::size_t i = 1; i + 1 < fields.size(); ++i) {
        auto f = fields[i];
        if (f.size() < 4 || f[1] != ' ' || f[0] != color_char(expect)) {
            throw std::invalid_argument("game record: bad move field '" + std::string(f) + "'");
        }
        rec.moves.push_back(parse_gtp(f.substr(2), rec.size));
        expect = opponent(expect);
    }
    auto last = fields.back();
    if (last == "result=B") {
        rec.winner = Color::Black;
    } else if (last == "result=W") {
        rec.winner = Color::White;
    } else if (last != "result=?") {
        throw std::invalid_argument("game record: bad result field '" + std::string(last) + "'");
    }
    return rec;
}

Position GameRecord::replay() const {
    Position p(size);
    for (const Move& m : moves) p = p.play(m);
    return p;
}

}  // namespace mpv
