#include "mpv/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mpv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || text.empty()) {
        throw ConfigError("bad value '" + text + "' for key '" + key + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw ConfigError("bad value '" + text + "' for key '" + key + "' (expected true/false)");
}

Rational parse_rational(const std::string& key, const std::string& text) {
    try {
        for (char c : text) {
            if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '/' || c == '.' || c == '-')) {
                throw std::invalid_argument("bad character");
            }
        }
        return Rational::parse(text);
    } catch (const std::exception&) {
        throw ConfigError("bad value '" + text + "' for key '" + key + "' (expected p, p/q or a decimal)");
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <typename T>
Field number_field(T Config::*member) {
    return Field{[member](Config& c, const std::string& v) { c.*member = parse_number<T>("", v); },
                 [member](const Config& c) {
                     if constexpr (std::is_floating_point_v<T>) return fmt(c.*member);
                     else return std::to_string(c.*member);
                 }};
}

Field rational_field(Rational Config::*member) {
    return Field{[member](Config& c, const std::string& v) { c.*member = parse_rational("", v); },
                 [member](const Config& c) { return (c.*member).to_string(); }};
}

Field shape_field(NetShape Config::*member) {
    return Field{[member](Config& c, const std::string& v) {
                     try {
                         c.*member = parse_shape(v);
                     } catch (const std::invalid_argument& e) {
                         throw ConfigError(e.what());
                     }
                 },
                 [member](const Config& c) { return shape_to_string(c.*member); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["mode"] = Field{[](Config& c, const std::string& v) {
                              if (v != "pv" && v != "mpv") throw ConfigError("mode must be 'pv' or 'mpv'");
                              c.mode = v;
                          },
                          [](const Config& c) { return c.mode; }};
        t["board_size"] = number_field(&Config::board_size);
        t["c_puct"] = number_field(&Config::c_puct);
        t["alpha"] = number_field(&Config::alpha);
        t["beta"] = number_field(&Config::beta);
        t["b_s"] = number_field(&Config::b_s);
        t["b_l"] = number_field(&Config::b_l);
        t["simulations"] = number_field(&Config::simulations);
        t["r"] = rational_field(&Config::r);
        t["budget_B"] = rational_field(&Config::budget_B);
        t["tau_moves"] = number_field(&Config::tau_moves);
        t["root_noise"] = Field{[](Config& c, const std::string& v) { c.root_noise = parse_bool("root_noise", v); },
                                [](const Config& c) { return std::string(c.root_noise ? "true" : "false"); }};
        t["dirichlet_alpha"] = number_field(&Config::dirichlet_alpha);
        t["dirichlet_weight"] = number_field(&Config::dirichlet_weight);
        t["buffer_capacity"] = number_field(&Config::buffer_capacity);
        t["batch_size"] = number_field(&Config::batch_size);
        t["lr"] = number_field(&Config::lr);
        t["momentum"] = number_field(&Config::momentum);
        t["l2"] = number_field(&Config::l2);
        t["value_hidden"] = number_field(&Config::value_hidden);
        t["fS"] = shape_field(&Config::fS);
        t["fL"] = shape_field(&Config::fL);
        t["reference"] = shape_field(&Config::reference);
        t["reference_sims"] = number_field(&Config::reference_sims);
        t["total_normalized_games"] = rational_field(&Config::total_normalized_games);
        t["iteration_normalized_games"] = rational_field(&Config::iteration_normalized_games);
        t["checkpoint_every"] = rational_field(&Config::checkpoint_every);
        t["train_steps"] = number_field(&Config::train_steps);
        t["games"] = number_field(&Config::games);
        t["workers"] = number_field(&Config::workers);
        t["seed"] = number_field(&Config::seed);
        t["out_dir"] = Field{[](Config& c, const std::string& v) {
                                 if (v.empty()) throw ConfigError("out_dir must not be empty");
                                 c.out_dir = v;
                             },
                             [](const Config& c) { return c.out_dir; }};
        return t;
    }();
    return table;
}

}  // namespace

NetShape parse_shape(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw std::invalid_argument("bad network shape '" + text + "' (expected FILTERSxBLOCKS)");
    NetShape s;
    auto a = std::from_chars(text.data(), text.data() + x, s.filters);
    auto b = std::from_chars(text.data() + x + 1, text.data() + text.size(), s.blocks);
    if (a.ec != std::errc() || a.ptr != text.data() + x || b.ec != std::errc() || b.ptr != text.data() + text.size() ||
        s.filters < 1 || s.blocks < 1) {
        throw std::invalid_argument("bad network shape '" + text + "' (expected FILTERSxBLOCKS)");
    }
    return s;
}

std::string shape_to_string(NetShape s) { return std::to_string(s.filters) + "x" + std::to_string(s.blocks); }

const std::vector<std::string>& Config::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& [name, field] : fields()) out.push_back(name);
        return out;
    }();
    return k;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
        it->second.set(*this, value);
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        const std::string blank = "for key ''";
        if (auto pos = msg.find(blank); pos != std::string::npos) msg.replace(pos, blank.size(), "for key '" + key + "'");
        throw ConfigError(msg);
    }
}

std::string Config::get(const std::string& key) const {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second.get(*this);
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    std::istringstream is(text);
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected key=value");
        }
        try {
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read configuration file " + path.string());
    std::ostringstream text;
    text << is.rdbuf();
    return parse(text.str(), path.string());
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& key : keys()) out += key + "=" + get(key) + "\n";
    return out;
}

nn::NetworkConfig Config::small_net() const { return nn::NetworkConfig{board_size, fS.filters, fS.blocks, l2, value_hidden}; }
nn::NetworkConfig Config::large_net() const { return nn::NetworkConfig{board_size, fL.filters, fL.blocks, l2, value_hidden}; }

SelfPlayConfig Config::selfplay_config() const {
    SelfPlayConfig s;
    s.board_size = board_size;
    s.mpv = mode == "mpv";
    s.simulations = simulations;
    s.budget = BudgetSpec{b_s, b_l};
    s.weights = ShareWeights{alpha, beta};
    s.c_puct = c_puct;
    s.tau_moves = tau_moves;
    s.root_noise = root_noise;
    s.dirichlet_alpha = dirichlet_alpha;
    s.dirichlet_weight = dirichlet_weight;
    return s;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.mpv = mode == "mpv";
    t.small_net = small_net();
    t.large_net = large_net();
    t.selfplay = selfplay_config();
    t.reference = reference;
    t.reference_sims = reference_sims;
    t.total_normalized_games = total_normalized_games;
    t.iteration_normalized_games = iteration_normalized_games;
    t.checkpoint_every = checkpoint_every;
    t.train_steps = train_steps;
    t.batch_size = batch_size;
    t.learning_rate = lr;
    t.momentum = momentum;
    t.buffer_capacity = buffer_capacity;
    t.workers = workers;
    t.seed = seed;
    t.out_dir = out_dir;
    return t;
}

void Config::validate() const {
    try {
        train_config().validate();
        if (r < Rational(0) || r > Rational(1)) throw std::invalid_argument("r must be in [0, 1]");
        if (budget_B <= Rational(0)) throw std::invalid_argument("budget_B must be > 0");
        if (games < 2 || games % 2 != 0) throw std::invalid_argument("games must be even and >= 2");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

}  // namespace mpv
