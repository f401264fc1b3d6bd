#include "star/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "star/errors.hpp"

namespace star {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if (!v.empty() && v[0] == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) throw std::invalid_argument("expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(trim(item)));
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt_list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define STAR_INT(name, expr)                                                                       \
    Field {                                                                                        \
        name, [](RunConfig& c, const std::string& v) { c.expr = parse_number<decltype(c.expr)>(v); }, \
            [](const RunConfig& c) { return std::to_string(c.expr); }                               \
    }
#define STAR_REAL(name, expr)                                                                  \
    Field {                                                                                    \
        name, [](RunConfig& c, const std::string& v) { c.expr = parse_number<double>(v); },   \
            [](const RunConfig& c) { return fmt(c.expr); }                                      \
    }
#define STAR_BOOL(name, expr)                                                                   \
    Field {                                                                                     \
        name, [](RunConfig& c, const std::string& v) { c.expr = parse_bool(v); },              \
            [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); }           \
    }
#define STAR_LIST(name, expr)                                                                     \
    Field {                                                                                       \
        name, [](RunConfig& c, const std::string& v) { c.expr = parse_int_list(v); },            \
            [](const RunConfig& c) { return fmt_list(c.expr); }                                    \
    }

void add_td3_fields(std::vector<Field>& f, const std::string& prefix, Td3Config RunConfig::*member) {
    auto td3 = [member](RunConfig& c) -> Td3Config& { return c.*member; };
    auto ctd3 = [member](const RunConfig& c) -> const Td3Config& { return c.*member; };
    auto real = [&](const std::string& name, double Td3Config::*m) {
        f.push_back({prefix + name, [td3, m](RunConfig& c, const std::string& v) { td3(c).*m = parse_number<double>(v); },
                     [ctd3, m](const RunConfig& c) { return fmt(ctd3(c).*m); }});
    };
    auto integer = [&](const std::string& name, int Td3Config::*m) {
        f.push_back({prefix + name, [td3, m](RunConfig& c, const std::string& v) { td3(c).*m = parse_number<int>(v); },
                     [ctd3, m](const RunConfig& c) { return std::to_string(ctd3(c).*m); }});
    };
    f.push_back({prefix + "hidden", [td3](RunConfig& c, const std::string& v) { td3(c).hidden = parse_int_list(v); },
                 [ctd3](const RunConfig& c) { return fmt_list(ctd3(c).hidden); }});
    real("actor_lr", &Td3Config::actor_lr);
    real("critic_lr", &Td3Config::critic_lr);
    f.push_back({prefix + "buffer_capacity",
                 [td3](RunConfig& c, const std::string& v) { td3(c).buffer_capacity = parse_number<std::size_t>(v); },
                 [ctd3](const RunConfig& c) { return std::to_string(ctd3(c).buffer_capacity); }});
    integer("batch", &Td3Config::batch);
    real("tau", &Td3Config::tau);
    integer("update_every", &Td3Config::update_every);
    integer("policy_delay", &Td3Config::policy_delay);
    real("gamma", &Td3Config::gamma);
    real("reward_scale", &Td3Config::reward_scale);
    real("expl_sigma", &Td3Config::expl_sigma);
    real("target_noise", &Td3Config::target_noise);
    real("target_noise_clip", &Td3Config::target_noise_clip);
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f = {
            Field{"env.variant", [](RunConfig& c, const std::string& v) { c.env = env_variant_from_string(v); },
                  [](const RunConfig& c) { return std::string(to_string(c.env)); }},
            STAR_INT("run.k", k),
            STAR_INT("run.l", l),
            STAR_INT("run.max_timesteps", max_timesteps),
            STAR_INT("run.total_steps", total_steps),
            STAR_INT("run.seed", seed),
            STAR_INT("run.warmup_steps", warmup_steps),
            STAR_INT("run.eval_every", eval_every),
            STAR_INT("run.eval_episodes", eval_episodes),
            STAR_INT("run.early_stop_evals", early_stop_evals),
            STAR_REAL("run.early_stop_success", early_stop_success),
            STAR_INT("run.refine_every", refine_every),
            STAR_REAL("run.relabel_sigma", relabel_sigma),
            STAR_BOOL("run.terminate_on_success", terminate_on_success),
            Field{"run.train_goal",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "fixed") c.train_goal = TrainGoal::Fixed;
                      else if (v == "sampled") c.train_goal = TrainGoal::Sampled;
                      else throw std::invalid_argument("expected fixed or sampled, got '" + v + "'");
                  },
                  [](const RunConfig& c) { return std::string(to_string(c.train_goal)); }},
            Field{"run.commander_reward",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "box_max") c.commander_reward = CommanderReward::BoxMax;
                      else if (v == "state_distance") c.commander_reward = CommanderReward::StateDistance;
                      else throw std::invalid_argument("expected box_max or state_distance, got '" + v + "'");
                  },
                  [](const RunConfig& c) { return std::string(to_string(c.commander_reward)); }},
            STAR_REAL("reach.tau1", reach.tau1),
            STAR_REAL("reach.tau2", reach.tau2),
            STAR_REAL("reach.min_volume_ratio", reach.min_volume_ratio),
            STAR_INT("reach.max_depth", reach.max_depth),
            STAR_REAL("reach.sigma", reach.sigma),
            STAR_INT("reach.window", reach.window),
            Field{"reach.ratio_denominator",
                  [](RunConfig& c, const std::string& v) {
                      if (v == "reached") c.reach.ratio_denominator = RatioDenominator::ReachedSet;
                      else if (v == "target") c.reach.ratio_denominator = RatioDenominator::TargetSet;
                      else throw std::invalid_argument("expected reached or target, got '" + v + "'");
                  },
                  [](const RunConfig& c) {
                      return std::string(c.reach.ratio_denominator == RatioDenominator::ReachedSet ? "reached"
                                                                                                     : "target");
                  }},
            STAR_BOOL("reach.merge_pieces", reach.merge_pieces),
            STAR_LIST("fm.hidden", fm.hidden),
            STAR_REAL("fm.lr", fm.lr),
            STAR_INT("fm.batch", fm.batch),
            STAR_INT("fm.epochs", fm.epochs),
            STAR_INT("fm.buffer_capacity", fm.buffer_capacity),
            STAR_INT("fm.min_pair_steps", fm.min_pair_steps),
            STAR_INT("fm.max_train_records", fm.max_train_records),
            STAR_INT("fm.window", fm.window),
            STAR_REAL("commander.lr", commander.lr),
            STAR_REAL("commander.epsilon0", commander.epsilon0),
            STAR_REAL("commander.epsilon_min", commander.epsilon_min),
            STAR_REAL("commander.epsilon_decay", commander.epsilon_decay),
            STAR_REAL("commander.gamma", commander.gamma),
        };
        add_td3_fields(f, "tutor.", &RunConfig::tutor);
        add_td3_fields(f, "controller.", &RunConfig::controller);
        return f;
    }();
    return table;
}

#undef STAR_INT
#undef STAR_REAL
#undef STAR_BOOL
#undef STAR_LIST

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) keys.push_back(f.key);
    return keys;
}

RunConfig parse_config_string(const std::string& text) {
    std::map<std::string, const Field*> by_key;
    for (const Field& f : fields()) by_key[f.key] = &f;

    RunConfig cfg;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected 'section.key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = by_key.find(key);
        if (it == by_key.end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (seen.count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
        seen[key] = lineno;
        try {
            it->second->set(cfg, value);
        } catch (const std::exception& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    if (cfg.l < 1 || cfg.k % cfg.l != 0) {
        const int line = std::max(seen.count("run.k") ? seen["run.k"] : 0, seen.count("run.l") ? seen["run.l"] : 0);
        throw ConfigError("line " + std::to_string(line) + ": run.k = " + std::to_string(cfg.k) +
                          " is not a multiple of run.l = " + std::to_string(cfg.l));
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("line 0: invalid configuration: ") + e.what());
    }
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("line 0: cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_string(ss.str());
}

std::string config_to_string(const RunConfig& cfg) {
    std::string out;
    for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

}  // namespace star
