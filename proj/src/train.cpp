#include "mpv/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mpv/search.hpp"

namespace mpv {

namespace fs = std::filesystem;

namespace {

constexpr char kReplayMagic[4] = {'M', 'P', 'V', 'R'};

template <typename U>
void put(std::ostream& os, U v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is, const fs::path& path) {
    U v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw std::runtime_error("truncated replay file " + path.string());
    }
    return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
}

void ReplayBuffer::append(ReplayRecord record) {
    records_.push_back(std::move(record));
    while (records_.size() > capacity_) records_.pop_front();
}

void ReplayBuffer::append(std::span<const ReplayRecord> records) {
    for (const auto& r : records) append(r);
}

nn::TrainingBatch make_batch(std::span<const ReplayRecord> records) {
    nn::TrainingBatch batch;
    if (records.empty()) return batch;
    batch.board_size = records.front().features.size;
    for (const auto& r : records) {
        batch.states.push_back(r.features);
        batch.policies.push_back(r.policy);
        batch.outcomes.push_back(static_cast<float>(r.outcome));
    }
    return batch;
}

nn::TrainingBatch ReplayBuffer::sample_batch(std::size_t batch_size, Rng& rng) const {
    if (records_.empty()) throw std::logic_error("sample_batch: replay buffer is empty");
    if (batch_size == 0) throw std::invalid_argument("sample_batch: batch size must be >= 1");
    std::uniform_int_distribution<std::size_t> pick(0, records_.size() - 1);
    nn::TrainingBatch batch;
    batch.board_size = records_.front().features.size;
    batch.states.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const ReplayRecord& r = records_[pick(rng)];
        batch.states.push_back(r.features);
        batch.policies.push_back(r.policy);
        batch.outcomes.push_back(static_cast<float>(r.outcome));
    }
    return batch;
}

void ReplayBuffer::save(const fs::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    const std::uint32_t size = records_.empty() ? 0 : static_cast<std::uint32_t>(records_.front().features.size);
    os.write(kReplayMagic, 4);
    put<std::uint32_t>(os, kReplayVersion);
    put<std::uint32_t>(os, size);
    put<std::uint64_t>(os, records_.size());
    const std::size_t n2 = static_cast<std::size_t>(size) * size;
    std::vector<std::uint8_t> packed((FeaturePlanes::kPlanes * n2 + 7) / 8);
    for (const auto& r : records_) {
        if (static_cast<std::uint32_t>(r.features.size) != size) throw std::logic_error("mixed board sizes in replay buffer");
        std::fill(packed.begin(), packed.end(), 0);
        for (std::size_t i = 0; i < r.features.bits.size(); ++i) {
            if (r.features.bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
        os.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
        for (float v : r.policy) put<float>(os, v);
        put<std::int8_t>(os, r.outcome);
    }
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

void ReplayBuffer::load(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kReplayMagic, 4) != 0) {
        throw std::runtime_error("bad replay magic in " + path.string());
    }
    if (get<std::uint32_t>(is, path) != kReplayVersion) throw std::runtime_error("unsupported replay version in " + path.string());
    const auto size = get<std::uint32_t>(is, path);
    const auto count = get<std::uint64_t>(is, path);
    if (count > 0 && (size < 1 || size > static_cast<std::uint32_t>(kMaxBoardSize))) {
        throw std::runtime_error("bad board size in " + path.string());
    }
    const std::size_t n2 = static_cast<std::size_t>(size) * size;
    std::vector<std::uint8_t> packed((FeaturePlanes::kPlanes * n2 + 7) / 8);
    for (std::uint64_t k = 0; k < count; ++k) {
        ReplayRecord r;
        if (!is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()))) {
            throw std::runtime_error("truncated replay file " + path.string());
        }
        r.features.size = static_cast<int>(size);
        r.features.bits.resize(FeaturePlanes::kPlanes * n2);
        for (std::size_t i = 0; i < r.features.bits.size(); ++i) r.features.bits[i] = (packed[i / 8] >> (i % 8)) & 1;
        r.policy.resize(n2);
        for (float& v : r.policy) v = get<float>(is, path);
        r.outcome = get<std::int8_t>(is, path);
        if (r.outcome != 1 && r.outcome != -1) throw std::runtime_error("bad outcome in " + path.string());
        append(std::move(r));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing data in " + path.string());
}

Rational normalized_game_cost(std::span<const NetSims> nets, NetShape reference, int reference_sims) {
    if (reference_sims < 1) throw std::invalid_argument("reference simulations must be >= 1");
    Rational per_move;
    for (const auto& n : nets) {
        if (n.simulations < 0) throw std::invalid_argument("simulation counts must be >= 0");
        per_move += Rational(n.simulations) * cost_of(n.shape, reference).units;
    }
    return per_move / Rational(reference_sims);
}

int SelfPlayConfig::sampled_moves() const {
    if (tau_moves >= 0) return tau_moves;
    return (3 * board_size * board_size + 9) / 10;
}

void SelfPlayConfig::validate() const {
    if (board_size < 1 || board_size > kMaxBoardSize) throw std::invalid_argument("board_size must be in 1..9");
    if (mpv) {
        budget.validate();
        if (budget.small < 2) throw std::invalid_argument("self-play needs at least 2 small simulations");
    } else if (simulations < 2) {
        throw std::invalid_argument("self-play needs at least 2 simulations per move");
    }
    weights.validate();
    if (c_puct < 0.0) throw std::invalid_argument("c_puct must be >= 0");
    if (tau_moves < -1) throw std::invalid_argument("tau_moves must be >= 0 (or -1 for the default)");
    if (root_noise && !(dirichlet_alpha > 0.0)) throw std::invalid_argument("dirichlet_alpha must be > 0");
    if (!(dirichlet_weight >= 0.0 && dirichlet_weight <= 1.0)) throw std::invalid_argument("dirichlet_weight must be in [0, 1]");
}

namespace {

struct SearchOutcome {
    std::vector<int> counts;
    int small_passes = 0;
    int large_passes = 0;
};

template <typename Search>
SelfPlayResult play_selfplay(const SelfPlayConfig& config, std::uint64_t seed, Search&& search) {
    config.validate();
    SelfPlayResult result;
    result.game.size = config.board_size;
    Position pos(config.board_size);
    std::vector<Color> movers;
    const int sampled = config.sampled_moves();
    for (int ply = 0; !pos.is_terminal(); ++ply) {
        const auto p = static_cast<std::uint64_t>(ply);
        RootNoise noise;
        if (config.root_noise && config.dirichlet_weight > 0.0) {
            Rng noise_rng(derive_seed(seed, {p, 2}));
            noise = dirichlet_noise(pos, config.dirichlet_alpha, config.dirichlet_weight, noise_rng);
        }
        SearchOutcome out = search(pos, noise, derive_seed(seed, {p, 1}));
        result.small_passes += out.small_passes;
        result.large_passes += out.large_passes;
        std::vector<double> pi = policy_from_counts(out.counts, 1.0);
        int point;
        if (ply < sampled) {
            Rng move_rng(derive_seed(seed, {p, 3}));
            std::discrete_distribution<int> pick(pi.begin(), pi.end());
            point = pick(move_rng);
        } else {
            std::vector<double> greedy = policy_from_counts(out.counts, 0.0);
            point = static_cast<int>(std::max_element(greedy.begin(), greedy.end()) - greedy.begin());
        }
        ReplayRecord rec;
        rec.features = pos.features();
        rec.policy.assign(pi.begin(), pi.end());
        result.records.push_back(std::move(rec));
        movers.push_back(pos.to_play());
        result.game.moves.push_back(pos.move_at(point));
        pos.play_inplace(point);
    }
    const Color winner = *pos.winner();
    result.game.winner = winner;
    for (std::size_t i = 0; i < result.records.size(); ++i) result.records[i].outcome = movers[i] == winner ? 1 : -1;
    return result;
}

}  // namespace

SelfPlayResult selfplay_game(const SelfPlayConfig& config, const Evaluator& net, std::uint64_t seed) {
    return play_selfplay(config, seed, [&](const Position& pos, const RootNoise& noise, std::uint64_t search_seed) {
        SearchTree tree(pos, config.c_puct);
        if (!noise.noise.empty()) tree.set_root_noise(noise);
        SearchStats stats = run_search(tree, net, config.simulations, search_seed);
        return SearchOutcome{tree.root_visit_counts(), stats.forward_passes, 0};
    });
}

SelfPlayResult mpv_selfplay_game(const SelfPlayConfig& config, const Evaluator& small, const Evaluator& large,
                                 std::uint64_t seed) {
    SelfPlayConfig cfg = config;
    cfg.mpv = true;
    return play_selfplay(cfg, seed, [&](const Position& pos, const RootNoise& noise, std::uint64_t search_seed) {
        MpvConfig mc;
        mc.weights = cfg.weights;
        mc.c_puct = cfg.c_puct;
        DualSearch dual(pos, small, large, mc);
        if (!noise.noise.empty()) dual.set_root_noise(noise);
        const MpvStats& stats = dual.run(cfg.budget, search_seed);
        return SearchOutcome{dual.small_tree().root_visit_counts(), stats.small_passes, stats.large_passes};
    });
}

Rational TrainConfig::game_cost() const {
    if (mpv) {
        std::vector<NetSims> nets{{small_net.shape(), selfplay.budget.small}, {large_net.shape(), selfplay.budget.large}};
        return normalized_game_cost(nets, reference, reference_sims);
    }
    std::vector<NetSims> nets{{large_net.shape(), selfplay.simulations}};
    return normalized_game_cost(nets, reference, reference_sims);
}

int TrainConfig::games_per_iteration() const {
    return static_cast<int>(std::max<std::int64_t>(1, (iteration_normalized_games / game_cost()).floor()));
}

void TrainConfig::validate() const {
    SelfPlayConfig sp = selfplay;
    sp.mpv = mpv;
    sp.validate();
    small_net.validate();
    large_net.validate();
    if (small_net.board_size != selfplay.board_size || large_net.board_size != selfplay.board_size) {
        throw std::invalid_argument("network board size differs from self-play board size");
    }
    if (reference.filters < 1 || reference.blocks < 1) throw std::invalid_argument("reference shape must be positive");
    if (total_normalized_games <= Rational(0)) throw std::invalid_argument("total normalized games must be > 0");
    if (iteration_normalized_games <= Rational(0)) throw std::invalid_argument("iteration normalized games must be > 0");
    if (checkpoint_every <= Rational(0)) throw std::invalid_argument("checkpoint interval must be > 0");
    if (train_steps < 0) throw std::invalid_argument("train_steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (buffer_capacity < 1) throw std::invalid_argument("buffer capacity must be >= 1");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

std::uint64_t TrainConfig::hash() const {
    std::ostringstream os;
    auto net = [&](const nn::NetworkConfig& n) {
        os << n.board_size << ',' << n.filters << ',' << n.blocks << ',' << n.l2 << ',' << n.value_hidden << ';';
    };
    os << (mpv ? "mpv;" : "pv;");
    net(small_net);
    net(large_net);
    os << selfplay.simulations << ',' << selfplay.budget.small << ',' << selfplay.budget.large << ','
       << selfplay.weights.alpha << ',' << selfplay.weights.beta << ',' << selfplay.c_puct << ','
       << selfplay.tau_moves << ',' << selfplay.root_noise << ',' << selfplay.dirichlet_alpha << ','
       << selfplay.dirichlet_weight << ';' << reference.filters << ',' << reference.blocks << ',' << reference_sims
       << ';' << iteration_normalized_games << ',' << train_steps << ',' << batch_size << ',' << learning_rate
       << ',' << momentum << ',' << buffer_capacity << ',' << seed;
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (char c : os.str()) h = mix64(h ^ static_cast<unsigned char>(c));
    return h;
}

namespace {

std::map<std::string, std::string> read_meta(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing checkpoint metadata " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad metadata line '" + line + "' in " + path.string());
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& meta_field(const std::map<std::string, std::string>& kv, const std::string& key, const fs::path& dir) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint " + dir.string() + " lacks '" + key + "'");
    return it->second;
}

std::optional<std::int64_t> checkpoint_number(const fs::path& dir) {
    const std::string name = dir.filename().string();
    if (name.rfind("ckpt_", 0) != 0 || name.size() == 5) return std::nullopt;
    const std::string digits = name.substr(5);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    return std::stoll(digits);
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a checkpoint directory: " + dir.string());
    auto kv = read_meta(dir / "meta");
    Checkpoint c;
    c.dir = dir;
    c.iteration = std::stoi(meta_field(kv, "iteration", dir));
    c.games = std::stoll(meta_field(kv, "games", dir));
    c.normalized_games = Rational::parse(meta_field(kv, "normalized_games", dir));
    c.config_hash = std::stoull(meta_field(kv, "config_hash", dir), nullptr, 16);
    if (fs::exists(dir / "fS.mpvn")) c.small = nn::load_params(dir / "fS.mpvn");
    if (fs::exists(dir / "fL.mpvn")) c.large = nn::load_params(dir / "fL.mpvn");
    if (!c.small && !c.large) throw std::runtime_error("checkpoint " + dir.string() + " has no network files");
    return c;
}

std::vector<fs::path> list_checkpoints(const fs::path& out_dir) {
    std::vector<std::pair<std::int64_t, fs::path>> found;
    if (!fs::is_directory(out_dir)) return {};
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (!entry.is_directory()) continue;
        if (auto n = checkpoint_number(entry.path()); n && fs::exists(entry.path() / "meta")) found.emplace_back(*n, entry.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& f : found) out.push_back(f.second);
    return out;
}

namespace {

struct LoopState {
    std::optional<nn::Parameters<float>> small;
    nn::Parameters<float> large;
    int iteration = 0;
    std::int64_t games = 0;
    Rational normalized;
};

fs::path write_checkpoint(const TrainConfig& config, const LoopState& st, const ReplayBuffer& buffer) {
    const fs::path dir = config.out_dir / ("ckpt_" + std::to_string(st.normalized.floor()));
    const fs::path tmp = config.out_dir / (".tmp_" + dir.filename().string());
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    if (st.small) nn::save_params(*st.small, tmp / "fS.mpvn");
    nn::save_params(st.large, tmp / "fL.mpvn");
    buffer.save(tmp / "replay.mpvr");
    {
        std::ofstream os(tmp / "meta");
        os << "mode=" << (config.mpv ? "mpv" : "pv") << '\n'
           << "iteration=" << st.iteration << '\n'
           << "games=" << st.games << '\n'
           << "normalized_games=" << st.normalized << '\n'
           << "seed=" << config.seed << '\n'
           << std::hex << "config_hash=" << config.hash() << '\n';
        if (!os) throw std::runtime_error("cannot write checkpoint metadata in " + tmp.string());
    }
    fs::remove_all(dir);
    fs::rename(tmp, dir);
    return dir;
}

double learning_rate_at(const TrainConfig& config, const Rational& normalized) {
    double lr = config.learning_rate;
    const double progress = normalized.to_double() / config.total_normalized_games.to_double();
    for (double m : config.lr_milestones) {
        if (progress >= m) lr *= 0.1;
    }
    return lr;
}

std::string format_loss(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

TrainSummary train_loop(const TrainConfig& config, const std::function<void(const std::string&)>& log) {
    config.validate();
    fs::create_directories(config.out_dir);
    LoopState st;
    ReplayBuffer buffer(config.buffer_capacity);
    TrainSummary summary;

    const auto existing = list_checkpoints(config.out_dir);
    if (!existing.empty()) {
        Checkpoint c = load_checkpoint(existing.back());
        if (c.config_hash != config.hash()) {
            throw std::runtime_error("checkpoint " + c.dir.string() + " was written with a different configuration");
        }
        if (!c.large || (config.mpv && !c.small)) throw std::runtime_error("checkpoint " + c.dir.string() + " lacks a network");
        if (c.large->config != config.large_net || (config.mpv && c.small->config != config.small_net)) {
            throw std::runtime_error("checkpoint network shapes differ from the configuration");
        }
        st.small = c.small;
        st.large = *c.large;
        st.iteration = c.iteration;
        st.games = c.games;
        st.normalized = c.normalized_games;
        if (fs::exists(c.dir / "replay.mpvr")) buffer.load(c.dir / "replay.mpvr");
    } else {
        if (config.mpv) st.small = nn::Parameters<float>::random(config.small_net, derive_seed(config.seed, {0x5, 1}));
        st.large = nn::Parameters<float>::random(config.large_net, derive_seed(config.seed, {0x5, 2}));
        summary.checkpoints.push_back(write_checkpoint(config, st, buffer));
    }

    nn::MomentumSgd opt_small(config.momentum);
    nn::MomentumSgd opt_large(config.momentum);
    const Rational cost = config.game_cost();
    const int per_iteration = config.games_per_iteration();
    SelfPlayConfig sp = config.selfplay;
    sp.mpv = config.mpv;

    while (st.normalized < config.total_normalized_games) {
        ++st.iteration;
        const auto it = static_cast<std::uint64_t>(st.iteration);
        auto large_params = std::make_shared<const nn::Parameters<float>>(st.large);
        nn::NetworkEvaluator large_eval(large_params, config.reference, "fL");
        std::shared_ptr<const nn::Parameters<float>> small_params;
        std::optional<nn::NetworkEvaluator> small_eval;
        if (config.mpv) {
            small_params = std::make_shared<const nn::Parameters<float>>(*st.small);
            small_eval.emplace(small_params, config.reference, "fS");
        }
        auto results = run_indexed<SelfPlayResult>(per_iteration, config.workers, [&](int i) {
            const std::uint64_t game_seed = derive_seed(config.seed, {it, static_cast<std::uint64_t>(i)});
            return config.mpv ? mpv_selfplay_game(sp, *small_eval, large_eval, game_seed)
                              : selfplay_game(sp, large_eval, game_seed);
        });
        const Rational before = st.normalized;
        for (const auto& r : results) {
            buffer.append(r.records);
            ++st.games;
            st.normalized += cost;
        }

        const double lr = learning_rate_at(config, before);
        Rng batch_rng(derive_seed(config.seed, {it, 0x7a}));
        double loss_small = 0.0, loss_large = 0.0;
        for (int step = 0; step < config.train_steps; ++step) {
            nn::TrainingBatch batch = buffer.sample_batch(static_cast<std::size_t>(config.batch_size), batch_rng);
            auto train_one = [&](nn::Parameters<float>& params, nn::MomentumSgd& opt, const char* label) {
                auto lg = nn::backward(params, batch);
                const double total = lg.loss.total();
                if (!std::isfinite(total) || !lg.grads.all_finite()) {
                    std::ostringstream msg;
                    msg << "non-finite loss for net " << label << " at iteration " << st.iteration << " step " << step
                        << " (value=" << lg.loss.value << " policy=" << lg.loss.policy << " l2=" << lg.loss.l2 << ")";
                    throw TrainingAborted(msg.str());
                }
                opt.step(params, lg.grads, lr);
                return total;
            };
            if (config.mpv) loss_small += train_one(*st.small, opt_small, "S");
            loss_large += train_one(st.large, opt_large, "L");
        }
        if (config.train_steps > 0) {
            loss_small /= config.train_steps;
            loss_large /= config.train_steps;
        }

        if (log) {
            std::ostringstream line;
            line << "iter=" << st.iteration << " games=" << st.games << " normalized_games=" << st.normalized;
            if (config.mpv) line << " loss_S=" << format_loss(loss_small);
            line << " loss_L=" << format_loss(loss_large) << " buffer=" << buffer.size();
            log(line.str());
        }

        const bool crossed = (st.normalized / config.checkpoint_every).floor() > (before / config.checkpoint_every).floor();
        if (crossed || st.normalized >= config.total_normalized_games) {
            summary.checkpoints.push_back(write_checkpoint(config, st, buffer));
        }
        ++summary.iterations;
    }
    summary.games = st.games;
    summary.normalized_games = st.normalized;
    return summary;
}

}  // namespace mpv
