#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mpv/arena.hpp"
#include "mpv/config.hpp"

namespace mpv::cli {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

// Evaluator source: uniform | heuristic | rollout | init-<F>x<B> | <file.mpvn>
EvaluatorPtr make_evaluator(const std::string& source, const Config& config, const std::string& label);

// Agent descriptor `kind[:key=value,...]`:
//   pv:net=<src>,sims=<n>        mpv:fS=<src>,fL=<src>,bs=<n>,bl=<n>
//   uct:sims=<n>                 large:ckpt=<dir>,sims=<n>
//   random
// Keys c_puct, alpha, beta and open (opening samples) are accepted where
// they apply. Throws ConfigError.
AgentSpec parse_agent(const std::string& descriptor, const Config& config);

// Line-oriented GTP session until `quit` or end of input.
void gtp_session(const AgentSpec& agent, const Config& config, std::istream& in, std::ostream& out);

// Entry point; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace mpv::cli
