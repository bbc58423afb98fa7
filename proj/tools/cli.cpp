#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mpv/nn.hpp"
#include "mpv/search.hpp"
#include "mpv/train.hpp"

namespace mpv::cli {

namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> parse_kv_list(const std::string& text, const std::string& what) {
    std::map<std::string, std::string> kv;
    if (text.empty()) return kv;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("bad " + what + " option '" + item + "' (expected key=value)");
        if (!kv.emplace(item.substr(0, eq), item.substr(eq + 1)).second) {
            throw ConfigError("duplicate " + what + " option '" + item.substr(0, eq) + "'");
        }
    }
    return kv;
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        int n = std::stoi(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad integer '" + v + "' for agent option '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad number '" + v + "' for agent option '" + key + "'");
}

void require_known(const std::map<std::string, std::string>& kv, std::initializer_list<const char*> allowed,
                   const std::string& kind) {
    for (const auto& [k, v] : kv) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError("unknown option '" + k + "' for agent kind '" + kind + "'");
    }
}

}  // namespace

EvaluatorPtr make_evaluator(const std::string& source, const Config& config, const std::string& label) {
    if (source == "uniform") return std::make_shared<UniformEvaluator>();
    if (source == "heuristic") return std::make_shared<HeuristicEvaluator>();
    if (source == "rollout") return std::make_shared<RolloutEvaluator>(1, derive_seed(config.seed, {0x70}));
    std::shared_ptr<const nn::Parameters<float>> params;
    if (source.rfind("init-", 0) == 0) {
        NetShape shape;
        try {
            shape = parse_shape(source.substr(5));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        nn::NetworkConfig nc{config.board_size, shape.filters, shape.blocks, config.l2, config.value_hidden};
        params = std::make_shared<const nn::Parameters<float>>(
            nn::Parameters<float>::random(nc, derive_seed(config.seed, {0x1417, static_cast<std::uint64_t>(shape.filters),
                                                                        static_cast<std::uint64_t>(shape.blocks)})));
    } else {
        if (!fs::exists(source)) throw ConfigError("evaluator source '" + source + "' is not a known kind or an existing file");
        params = std::make_shared<const nn::Parameters<float>>(nn::load_params(source));
    }
    if (params->config.board_size != config.board_size) {
        throw ConfigError("network '" + source + "' is for board size " + std::to_string(params->config.board_size) +
                          ", configuration says " + std::to_string(config.board_size));
    }
    return std::make_shared<nn::NetworkEvaluator>(params, config.reference, label);
}

AgentSpec parse_agent(const std::string& descriptor, const Config& config) {
    const auto colon = descriptor.find(':');
    const std::string kind = descriptor.substr(0, colon);
    const auto kv = parse_kv_list(colon == std::string::npos ? "" : descriptor.substr(colon + 1), "agent");
    auto opt = [&](const char* key, const std::string& fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    AgentSpec agent;
    if (kind == "random") {
        require_known(kv, {}, kind);
        agent = random_agent();
    } else if (kind == "pv") {
        require_known(kv, {"net", "sims", "c_puct", "open"}, kind);
        const std::string net = opt("net", "init-" + shape_to_string(config.fL));
        agent = pv_agent("pv(" + net + ")", make_evaluator(net, config, "net"), config.simulations);
        if (kv.count("sims")) agent.simulations = to_int("sims", kv.at("sims"));
    } else if (kind == "mpv") {
        require_known(kv, {"fS", "fL", "bs", "bl", "alpha", "beta", "c_puct", "open"}, kind);
        const std::string fs_src = opt("fS", "init-" + shape_to_string(config.fS));
        const std::string fl_src = opt("fL", "init-" + shape_to_string(config.fL));
        agent = mpv_agent("mpv(" + fs_src + "," + fl_src + ")", make_evaluator(fs_src, config, "fS"),
                          make_evaluator(fl_src, config, "fL"), BudgetSpec{config.b_s, config.b_l});
        if (kv.count("bs")) agent.budget.small = to_int("bs", kv.at("bs"));
        if (kv.count("bl")) agent.budget.large = to_int("bl", kv.at("bl"));
        agent.weights = ShareWeights{config.alpha, config.beta};
        if (kv.count("alpha")) agent.weights.alpha = to_double("alpha", kv.at("alpha"));
        if (kv.count("beta")) agent.weights.beta = to_double("beta", kv.at("beta"));
    } else if (kind == "uct") {
        require_known(kv, {"sims", "c_puct", "open"}, kind);
        agent = uct_rollout_baseline(to_int("sims", opt("sims", std::to_string(config.simulations))),
                                     derive_seed(config.seed, {0x70}));
    } else if (kind == "large") {
        require_known(kv, {"ckpt", "sims", "c_puct", "open"}, kind);
        if (!kv.count("ckpt")) throw ConfigError("agent kind 'large' needs ckpt=<dir>");
        Checkpoint c;
        try {
            c = load_checkpoint(kv.at("ckpt"));
        } catch (const std::runtime_error& e) {
            throw ConfigError(e.what());
        }
        agent = large_only_test(c, to_int("sims", opt("sims", std::to_string(config.simulations))), config.reference);
    } else {
        throw ConfigError("unknown agent kind '" + kind + "' (expected pv, mpv, uct, large or random)");
    }
    agent.c_puct = kv.count("c_puct") ? to_double("c_puct", kv.at("c_puct")) : config.c_puct;
    if (kv.count("open")) agent.opening_samples = to_int("open", kv.at("open"));
    try {
        agent.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return agent;
}

namespace {

std::optional<Color> parse_color(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "b" || s == "black") return Color::Black;
    if (s == "w" || s == "white") return Color::White;
    return std::nullopt;
}

Position with_to_play(const Position& p, Color c) {
    if (p.to_play() == c) return p;
    std::vector<Stone> stones(static_cast<std::size_t>(p.num_points()));
    for (int i = 0; i < p.num_points(); ++i) stones[i] = p.at(i);
    return Position::from_stones(p.size(), stones, c);
}

int agent_board_size(const AgentSpec& a) {
    for (const auto& e : {a.evaluator, a.large}) {
        if (auto* net = dynamic_cast<const nn::NetworkEvaluator*>(e.get())) return net->params().config.board_size;
    }
    return 0;
}

}  // namespace

void gtp_session(const AgentSpec& agent, const Config& config, std::istream& in, std::ostream& out) {
    static const std::vector<std::string> commands = {"protocol_version", "name",        "version",  "known_command",
                                                      "list_commands",    "boardsize",   "clear_board", "play",
                                                      "genmove",          "legal_moves", "showboard", "quit"};
    Position pos(config.board_size);
    int own_moves = 0;
    std::uint64_t move_counter = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> words;
        for (std::string w; ls >> w;) words.push_back(w);
        if (words.empty()) continue;
        std::string id;
        if (std::all_of(words[0].begin(), words[0].end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            id = words[0];
            words.erase(words.begin());
            if (words.empty()) continue;
        }
        auto ok = [&](const std::string& text) { out << '=' << id << (text.empty() ? "" : " ") << text << "\n\n" << std::flush; };
        auto fail = [&](const std::string& text) { out << '?' << id << ' ' << text << "\n\n" << std::flush; };
        const std::string& cmd = words[0];
        if (cmd == "protocol_version") {
            ok("2");
        } else if (cmd == "name") {
            ok("mpvgo");
        } else if (cmd == "version") {
            ok("0.1.0");
        } else if (cmd == "known_command") {
            ok(words.size() > 1 && std::find(commands.begin(), commands.end(), words[1]) != commands.end() ? "true" : "false");
        } else if (cmd == "list_commands") {
            std::string all;
            for (const auto& c : commands) all += (all.empty() ? "" : "\n") + c;
            ok(all);
        } else if (cmd == "boardsize") {
            int n = 0;
            try {
                n = words.size() > 1 ? std::stoi(words[1]) : 0;
            } catch (const std::exception&) {
            }
            const int needed = agent_board_size(agent);
            if (n < 1 || n > kMaxBoardSize || (needed != 0 && n != needed)) {
                fail("unacceptable size");
                continue;
            }
            pos = Position(n);
            own_moves = 0;
            ok("");
        } else if (cmd == "clear_board") {
            pos = Position(pos.size());
            own_moves = 0;
            ok("");
        } else if (cmd == "play") {
            auto color = words.size() > 2 ? parse_color(words[1]) : std::nullopt;
            if (!color) {
                fail("syntax error");
                continue;
            }
            try {
                Move m = parse_gtp(words[2], pos.size());
                Position next = with_to_play(pos, *color).play(m);
                pos = next;
                ok("");
            } catch (const IllegalMove&) {
                fail("illegal move");
            } catch (const std::exception&) {
                fail("invalid coordinate");
            }
        } else if (cmd == "genmove") {
            auto color = words.size() > 1 ? parse_color(words[1]) : std::nullopt;
            if (!color) {
                fail("syntax error");
                continue;
            }
            Position here = with_to_play(pos, *color);
            if (here.is_terminal()) {
                pos = here;
                ok("resign");
                continue;
            }
            int pt = choose_move(agent, here, own_moves++, derive_seed(config.seed, {0x6e7, move_counter++}));
            Move m = here.move_at(pt);
            pos = here.play(m);
            ok(to_gtp(m, pos.size()));
        } else if (cmd == "legal_moves") {
            Color c = pos.to_play();
            if (words.size() > 1) {
                auto parsed = parse_color(words[1]);
                if (!parsed) {
                    fail("syntax error");
                    continue;
                }
                c = *parsed;
            }
            std::string list;
            for_each_bit(pos.legal_bits(c), [&](int pt) { list += (list.empty() ? "" : " ") + to_gtp(pos.move_at(pt), pos.size()); });
            ok(list);
        } else if (cmd == "showboard") {
            ok("\n" + pos.to_string());
        } else if (cmd == "quit") {
            ok("");
            return;
        } else {
            fail("unknown command");
        }
    }
}

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
};

Config load_config(const Common& common) {
    Config c = common.config_path.empty() ? Config{} : Config::load(common.config_path);
    for (const auto& kv : common.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
}

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("-c,--config", common.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("-s,--set", common.overrides, "override a configuration key (key=value)");
}

int cmd_selfplay(const Config& config, int games, const std::string& out_dir, const std::string& fs_src,
                 const std::string& fl_src, std::ostream& out) {
    fs::create_directories(out_dir);
    SelfPlayConfig sp = config.selfplay_config();
    EvaluatorPtr large = make_evaluator(fl_src.empty() ? "init-" + shape_to_string(config.fL) : fl_src, config, "fL");
    EvaluatorPtr small;
    if (sp.mpv) small = make_evaluator(fs_src.empty() ? "init-" + shape_to_string(config.fS) : fs_src, config, "fS");
    auto results = run_indexed<SelfPlayResult>(games, config.workers, [&](int i) {
        const std::uint64_t seed = derive_seed(config.seed, {0x5e1f, static_cast<std::uint64_t>(i)});
        return sp.mpv ? mpv_selfplay_game(sp, *small, *large, seed) : selfplay_game(sp, *large, seed);
    });
    ReplayBuffer buffer(std::max<std::size_t>(1, config.buffer_capacity));
    std::ofstream records(fs::path(out_dir) / "games.txt", std::ios::trunc);
    for (const auto& r : results) {
        records << r.game.to_line() << '\n';
        buffer.append(r.records);
    }
    if (!records) throw std::runtime_error("cannot write " + (fs::path(out_dir) / "games.txt").string());
    buffer.save(fs::path(out_dir) / "replay.mpvr");
    out << "games=" << games << " positions=" << buffer.size() << " out=" << out_dir << '\n';
    return kOk;
}

int cmd_bench(const Config& config, int iterations, std::ostream& out) {
    Position pos(config.board_size);
    auto time_it = [&](const std::string& label, auto&& fn) {
        fn();
        const auto start = std::chrono::steady_clock::now();
        for (int i = 0; i < iterations; ++i) fn();
        const double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-28s %10.2f us/op\n", label.c_str(), us / iterations);
        out << buf;
    };
    for (const auto& [name, shape] : {std::pair{"fS", config.fS}, std::pair{"fL", config.fL}}) {
        EvaluatorPtr net = make_evaluator("init-" + shape_to_string(shape), config, name);
        time_it(std::string("forward ") + name + " " + shape_to_string(shape), [&] { (void)net->evaluate(pos); });
    }
    UniformEvaluator uniform;
    time_it("pv search 100 sims uniform", [&] {
        SearchTree tree(pos, config.c_puct);
        run_search(tree, uniform, 100, 1);
    });
    time_it("rollout", [&] { (void)rollout_evaluate(pos, 1, 7); });
    return kOk;
}

int cmd_analyze(const Config& config, const std::string& moves, const std::string& agent_desc, std::ostream& out) {
    Position pos(config.board_size);
    std::stringstream ss(moves);
    for (std::string m; ss >> m;) pos = pos.play(parse_gtp(m, pos.size()));
    out << pos.to_string();
    if (pos.is_terminal()) {
        out << "terminal: " << color_char(*pos.winner()) << " wins\n";
        return kOk;
    }
    AgentSpec agent = parse_agent(agent_desc, config);
    std::vector<int> counts;
    if (agent.kind == AgentKind::PV) {
        SearchTree tree(pos, agent.c_puct);
        run_search(tree, *agent.evaluator, agent.simulations, config.seed);
        counts = tree.root_visit_counts();
        out << "root value " << tree.node(0).mean() << '\n';
    } else if (agent.kind == AgentKind::MPV) {
        MpvConfig mc;
        mc.weights = agent.weights;
        mc.c_puct = agent.c_puct;
        DualSearch dual(pos, *agent.evaluator, *agent.large, mc);
        dual.run(agent.budget, config.seed);
        counts = dual.small_tree().root_visit_counts();
        out << "root value " << dual.shared_value(pos.key()) << '\n';
    } else {
        throw ConfigError("analyze needs a pv or mpv agent");
    }
    for (int pt = 0; pt < pos.num_points(); ++pt) {
        if (counts[pt] > 0) out << to_gtp(pos.move_at(pt), pos.size()) << ' ' << counts[pt] << '\n';
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"NoGo search and training with one or two policy-value networks", "mpvgo"};
    app.require_subcommand(1);

    Common common;
    int games = 1;
    std::string out_dir = "selfplay";
    std::string fs_src, fl_src;
    auto* selfplay = app.add_subcommand("selfplay", "generate self-play games and replay records");
    add_common(selfplay, common);
    selfplay->add_option("-n,--games", games, "number of games")->check(CLI::PositiveNumber);
    selfplay->add_option("-o,--out", out_dir, "output directory");
    selfplay->add_option("--fS", fs_src, "small network source");
    selfplay->add_option("--fL", fl_src, "large network source");

    auto* train = app.add_subcommand("train", "run the generate/train loop (resumes from out_dir)");
    add_common(train, common);

    std::string agent_a, agent_b;
    int match_games = 0;
    auto* match = app.add_subcommand("match", "play a match between two agents");
    add_common(match, common);
    match->add_option("agent_a", agent_a, "first agent descriptor")->required();
    match->add_option("agent_b", agent_b, "second agent descriptor")->required();
    match->add_option("-n,--games", match_games, "number of games (default: config 'games')");

    std::string agent_desc = "pv";
    auto* gtp = app.add_subcommand("gtp", "GTP session on stdin/stdout");
    add_common(gtp, common);
    gtp->add_option("-a,--agent", agent_desc, "agent descriptor");

    int bench_iters = 200;
    auto* bench = app.add_subcommand("bench", "time forward passes and search");
    add_common(bench, common);
    bench->add_option("-i,--iterations", bench_iters, "iterations per measurement")->check(CLI::PositiveNumber);

    std::string moves;
    auto* analyze = app.add_subcommand("analyze", "search a position and print root visit counts");
    add_common(analyze, common);
    analyze->add_option("-m,--moves", moves, "space-separated moves from the empty board, e.g. \"C3 D4\"");
    analyze->add_option("-a,--agent", agent_desc, "agent descriptor");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        const Config config = load_config(common);
        if (*selfplay) return cmd_selfplay(config, games, out_dir, fs_src, fl_src, out);
        if (*train) {
            TrainSummary s = train_loop(config.train_config(), [&](const std::string& line) { out << line << '\n' << std::flush; });
            out << "done iterations=" << s.iterations << " games=" << s.games << " normalized_games=" << s.normalized_games
                << '\n';
            return kOk;
        }
        if (*match) {
            AgentSpec a = parse_agent(agent_a, config);
            AgentSpec b = parse_agent(agent_b, config);
            const int n = match_games > 0 ? match_games : config.games;
            if (n < 2 || n % 2 != 0) throw ConfigError("match games must be even and >= 2");
            MatchResult r = play_match(a, b, n, config.seed, config.board_size, config.workers);
            out << format_report({r});
            return kOk;
        }
        if (*gtp) {
            gtp_session(parse_agent(agent_desc, config), config, in, out);
            return kOk;
        }
        if (*bench) return cmd_bench(config, bench_iters, out);
        if (*analyze) return cmd_analyze(config, moves, agent_desc, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "fatal: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}

}  // namespace mpv::cli
