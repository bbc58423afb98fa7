#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mpv/config.hpp"

using namespace mpv;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run mpvgo(std::vector<std::string> args, const std::string& input = "") {
    args.insert(args.begin(), "mpvgo");
    std::istringstream in(input);
    std::ostringstream out, err;
    const int code = cli::run(args, in, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("mpv_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// GTP responses, one per command, without the trailing blank line.
std::vector<std::string> responses(const std::string& out) {
    std::vector<std::string> r;
    std::size_t start = 0;
    for (std::size_t pos; (pos = out.find("\n\n", start)) != std::string::npos; start = pos + 2)
        r.push_back(out.substr(start, pos - start));
    return r;
}

}  // namespace

TEST_CASE("config parsing") {
    Config c = Config::parse("board_size = 7\n# comment\n\nalpha=0.25\nr=1/3\nfS=8x1\n");
    CHECK(c.board_size == 7);
    CHECK(c.alpha == 0.25);
    CHECK(c.r == Rational(1, 3));
    CHECK(c.fS == NetShape{8, 1});
    CHECK_THROWS_AS(Config::parse("bogus=1\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("board_size\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("board_size=five\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("root_noise=maybe\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("mode=both\n"), ConfigError);
    Config bad = Config::parse("alpha=1.5\n");
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    Config inverted = Config::parse("b_s=10\nb_l=20\n");
    CHECK_THROWS_AS(inverted.validate(), ConfigError);

    // Text round trip covers every key.
    Config d;
    d.seed = 77;
    d.budget_B = Rational(5, 2);
    Config back = Config::parse(d.to_text());
    CHECK(back.to_text() == d.to_text());
    for (const auto& k : Config::keys()) CHECK(d.to_text().find(k + "=") != std::string::npos);
}

TEST_CASE("derived configurations") {
    Config c = Config::parse("mode=pv\nboard_size=4\nfL=8x1\nsimulations=50\nl2=0.001\n");
    TrainConfig t = c.train_config();
    CHECK_FALSE(t.mpv);
    CHECK(t.large_net.board_size == 4);
    CHECK(t.large_net.filters == 8);
    CHECK(t.large_net.l2 == 0.001);
    CHECK(t.selfplay.simulations == 50);
    CHECK(c.selfplay_config().board_size == 4);
}

TEST_CASE("exit codes") {
    CHECK(mpvgo({}).code == cli::kUsage);
    CHECK(mpvgo({"frobnicate"}).code == cli::kUsage);
    CHECK(mpvgo({"--help"}).code == cli::kOk);
    Run bad_key = mpvgo({"bench", "-s", "nonsense=1"});
    CHECK(bad_key.code == cli::kUsage);
    CHECK(bad_key.err.find("nonsense") != std::string::npos);
    CHECK(mpvgo({"bench", "-s", "board_size=12"}).code == cli::kUsage);
    CHECK(mpvgo({"match", "random"}).code == cli::kUsage);
    CHECK(mpvgo({"match", "random", "warlock"}).code == cli::kUsage);
    CHECK(mpvgo({"selfplay", "-c", "/nonexistent/file.cfg"}).code == cli::kUsage);

    // Runtime failure: a checkpoint directory from a different configuration.
    fs::path dir = scratch("abort");
    const std::string base = "mode=pv\nboard_size=4\nfL=4x1\nfS=4x1\nsimulations=8\nreference=4x1\nreference_sims=8\n"
                             "total_normalized_games=2\niteration_normalized_games=2\ncheckpoint_every=2\n"
                             "train_steps=2\nbatch_size=8\nout_dir=" + (dir / "run").string() + "\n";
    std::ofstream(dir / "a.cfg") << base;
    std::ofstream(dir / "b.cfg") << base << "seed=9\n";
    CHECK(mpvgo({"train", "-c", (dir / "a.cfg").string()}).code == cli::kOk);
    Run clash = mpvgo({"train", "-c", (dir / "b.cfg").string()});
    CHECK(clash.code == cli::kRuntime);
    CHECK(clash.err.find("different configuration") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("selfplay command") {
    fs::path dir = scratch("selfplay");
    const std::vector<std::string> common{"-s", "mode=pv", "-s", "simulations=16", "-s", "fL=8x1"};
    auto run_to = [&](const fs::path& out, int n) {
        std::vector<std::string> args{"selfplay", "-n", std::to_string(n), "-o", out.string()};
        args.insert(args.end(), common.begin(), common.end());
        return mpvgo(args);
    };
    Run one = run_to(dir / "one", 1);
    REQUIRE(one.code == cli::kOk);
    const std::string games = slurp(dir / "one" / "games.txt");
    CHECK(std::count(games.begin(), games.end(), '\n') == 1);
    CHECK_NOTHROW(GameRecord::parse_line(games.substr(0, games.size() - 1)).replay());

    REQUIRE(run_to(dir / "a", 3).code == cli::kOk);
    REQUIRE(run_to(dir / "b", 3).code == cli::kOk);
    CHECK(slurp(dir / "a" / "games.txt") == slurp(dir / "b" / "games.txt"));
    CHECK(slurp(dir / "a" / "replay.mpvr") == slurp(dir / "b" / "replay.mpvr"));

    // Records load back into a replay buffer.
    ReplayBuffer buf(100000);
    CHECK_NOTHROW(buf.load(dir / "a" / "replay.mpvr"));
    CHECK(buf.size() > 3);

    Run mpv = mpvgo({"selfplay", "-n", "1", "-o", (dir / "m").string(), "-s", "b_s=16", "-s", "b_l=4", "-s", "fS=4x1",
                     "-s", "fL=8x1"});
    CHECK(mpv.code == cli::kOk);
    fs::remove_all(dir);
}

TEST_CASE("train command") {
    fs::path dir = scratch("train");
    std::ofstream(dir / "t.cfg") << "mode=mpv\nboard_size=4\nfS=4x1\nfL=8x1\nb_s=16\nb_l=2\nreference=8x1\nreference_sims=16\n"
                                    "total_normalized_games=8\niteration_normalized_games=4\ncheckpoint_every=4\n"
                                    "train_steps=3\nbatch_size=8\nout_dir="
                                 << (dir / "run").string() << "\n";
    Run r = mpvgo({"train", "-c", (dir / "t.cfg").string()});
    REQUIRE(r.code == cli::kOk);
    std::istringstream lines(r.out);
    int iterations = 0;
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("iter=", 0) != 0) continue;
        ++iterations;
        int it = 0, games = 0, buffer = 0;
        char ng[32], ls[32], ll[32];
        CHECK(std::sscanf(line.c_str(), "iter=%d games=%d normalized_games=%31s loss_S=%31s loss_L=%31s buffer=%d", &it,
                          &games, ng, ls, ll, &buffer) == 6);
        CHECK(it == iterations);
    }
    CHECK(iterations >= 2);
    CHECK(r.out.find("done iterations=" + std::to_string(iterations)) != std::string::npos);
    for (const auto& ck : list_checkpoints(dir / "run")) {
        CHECK(fs::exists(ck / "fS.mpvn"));
        CHECK(fs::exists(ck / "fL.mpvn"));
    }
    // Resume after losing the final checkpoint continues from the previous one.
    fs::remove_all(list_checkpoints(dir / "run").back());
    const int resumed_from = load_checkpoint(list_checkpoints(dir / "run").back()).iteration;
    Run again = mpvgo({"train", "-c", (dir / "t.cfg").string()});
    REQUIRE(again.code == cli::kOk);
    CHECK(again.out.rfind("iter=" + std::to_string(resumed_from + 1) + " ", 0) == 0);
    CHECK(again.out.find("done iterations=" + std::to_string(iterations - resumed_from)) != std::string::npos);

    // The checkpoint can drive an agent.
    const std::string ckpt = list_checkpoints(dir / "run").back().string();
    Run match = mpvgo({"match", "large:ckpt=" + ckpt + ",sims=8", "random", "-n", "4", "-s", "board_size=4"});
    CHECK(match.code == cli::kOk);
    fs::remove_all(dir);
}

TEST_CASE("match command") {
    Run r = mpvgo({"match", "pv:net=heuristic,sims=20", "random", "-n", "6"});
    REQUIRE(r.code == cli::kOk);
    CHECK(r.out.find("pairing") == 0);
    // The machine line has six ';' separated fields and 6 games.
    std::istringstream lines(r.out);
    std::string last;
    for (std::string line; std::getline(lines, line);)
        if (!line.empty()) last = line;
    CHECK(std::count(last.begin(), last.end(), ';') == 5);
    CHECK(last.find(";6;") != std::string::npos);
    CHECK(mpvgo({"match", "pv:net=heuristic,sims=20", "random", "-n", "6"}).out == r.out);
    CHECK(mpvgo({"match", "mpv:fS=heuristic,fL=rollout,bs=20,bl=4", "uct:sims=10", "-n", "2"}).code == cli::kOk);
    CHECK(mpvgo({"match", "pv:net=heuristic,sims=20,warp=9", "random"}).code == cli::kUsage);
    CHECK(mpvgo({"match", "random", "random", "-n", "3"}).code == cli::kUsage);
}

TEST_CASE("analyze and bench commands") {
    Run a = mpvgo({"analyze", "-m", "C3 B2", "-a", "pv:net=uniform,sims=50"});
    REQUIRE(a.code == cli::kOk);
    CHECK(a.out.find("root value") != std::string::npos);
    CHECK(mpvgo({"analyze", "-m", "C3 C3", "-a", "pv:net=uniform,sims=50"}).code != cli::kOk);
    Run b = mpvgo({"bench", "-i", "3", "-s", "fS=4x1", "-s", "fL=8x1"});
    CHECK(b.code == cli::kOk);
    CHECK(b.out.find("us/op") != std::string::npos);
}

TEST_CASE("GTP session") {
    Config cfg;
    cfg.board_size = 9;
    AgentSpec agent = cli::parse_agent("pv:net=heuristic,sims=30", cfg);
    auto session = [&](const std::string& script) {
        std::istringstream in(script);
        std::ostringstream out;
        cli::gtp_session(agent, cfg, in, out);
        return responses(out.str());
    };

    SUBCASE("boardsize then genmove") {
        auto r = session("boardsize 9\ngenmove b\nlegal_moves w\nquit\n");
        REQUIRE(r.size() == 4);
        CHECK(r[0] == "=");
        REQUIRE(r[1].rfind("= ", 0) == 0);
        const Move m = parse_gtp(r[1].substr(2), 9);
        CHECK(Position(9).is_legal(m));
        CHECK(r[2].find(r[1].substr(2)) == std::string::npos);  // occupied now
        CHECK(r[3] == "=");
    }
    SUBCASE("play then genmove") {
        auto r = session("play b E5\ngenmove w\n");
        REQUIRE(r.size() == 2);
        CHECK(r[0] == "=");
        const Move m = parse_gtp(r[1].substr(2), 9);
        CHECK(Position(9).play(parse_gtp("E5", 9)).is_legal(m));
    }
    SUBCASE("errors keep the session alive") {
        auto r = session("play b Z99\nfoo\n7 play b E5\nplay w E5\nprotocol_version\nknown_command genmove\nname\n");
        REQUIRE(r.size() == 7);
        CHECK(r[0].rfind("? ", 0) == 0);
        CHECK(r[1] == "? unknown command");
        CHECK(r[2] == "=7");
        CHECK(r[3] == "? illegal move");
        CHECK(r[4] == "= 2");
        CHECK(r[5] == "= true");
        CHECK(r[6] == "= mpvgo");
    }
    SUBCASE("deterministic") {
        const std::string script = "genmove b\ngenmove w\ngenmove b\n";
        CHECK(session(script) == session(script));
    }
    SUBCASE("through the command line") {
        Run r = mpvgo({"gtp", "-a", "uct:sims=20", "-s", "board_size=5"}, "boardsize 5\ngenmove b\nquit\n");
        CHECK(r.code == cli::kOk);
        CHECK(responses(r.out).size() == 3);
    }
}
