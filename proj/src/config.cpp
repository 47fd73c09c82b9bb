#include "slicing/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "slicing/error.hpp"

namespace slicing {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(const std::string &key, const std::string &text) {
    double v = 0.0;
    const char *end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    return v;
}

long long parse_int(const std::string &key, const std::string &text) {
    long long v = 0;
    const char *end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string &key, const std::string &text) {
    if (text == "true" || text == "1")
        return true;
    if (text == "false" || text == "0")
        return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

struct Field {
    std::function<std::string(const ExperimentConfig &)> get;
    std::function<void(ExperimentConfig &, const std::string &key, const std::string &)> set;
};

template <typename Section>
Field real(Section ExperimentConfig::*section, double Section::*member) {
    return {[=](const ExperimentConfig &c) { return fmt_double(c.*section.*member); },
            [=](ExperimentConfig &c, const std::string &k, const std::string &v) {
                c.*section.*member = parse_double(k, v);
            }};
}

template <typename Section>
Field integer(Section ExperimentConfig::*section, int Section::*member) {
    return {[=](const ExperimentConfig &c) { return std::to_string(c.*section.*member); },
            [=](ExperimentConfig &c, const std::string &k, const std::string &v) {
                const long long x = parse_int(k, v);
                if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
                    throw ConfigError(k + ": integer out of range");
                c.*section.*member = static_cast<int>(x);
            }};
}

template <typename Section>
Field flag(Section ExperimentConfig::*section, bool Section::*member) {
    return {[=](const ExperimentConfig &c) { return std::string(c.*section.*member ? "true" : "false"); },
            [=](ExperimentConfig &c, const std::string &k, const std::string &v) {
                c.*section.*member = parse_bool(k, v);
            }};
}

Field top_int(int ExperimentConfig::*member) {
    return {[=](const ExperimentConfig &c) { return std::to_string(c.*member); },
            [=](ExperimentConfig &c, const std::string &k, const std::string &v) {
                c.*member = static_cast<int>(parse_int(k, v));
            }};
}

// Keys in serialization order.
const std::vector<std::pair<std::string, Field>> &fields() {
    using C = ExperimentConfig;
    static const std::vector<std::pair<std::string, Field>> table = {
        {"capacity", real(&C::env, &EnvParams::capacity)},
        {"min_alloc", real(&C::env, &EnvParams::min_alloc)},
        {"arrival_rate", real(&C::env, &EnvParams::arrival_rate)},
        {"arrival_cap_factor", real(&C::env, &EnvParams::arrival_cap_factor)},
        {"size_min", real(&C::env, &EnvParams::size_min)},
        {"size_max", real(&C::env, &EnvParams::size_max)},
        {"kappa_sp", real(&C::env, &EnvParams::kappa_sp)},
        {"kappa_bc", real(&C::env, &EnvParams::kappa_bc)},
        {"header_bytes", real(&C::env, &EnvParams::header_bytes)},
        {"per_request_bytes", real(&C::env, &EnvParams::per_request_bytes)},
        {"demand_scaled_by_count", flag(&C::env, &EnvParams::demand_scaled_by_count)},
        {"backlog_unweighted", flag(&C::env, &EnvParams::backlog_unweighted)},
        {"link_rate", real(&C::env, &EnvParams::link_rate)},

        {"gamma_r", real(&C::agent, &AgentParams::gamma_r)},
        {"gamma_c", real(&C::agent, &AgentParams::gamma_c)},
        {"eps_max", real(&C::agent, &AgentParams::eps_max)},
        {"lr_critic_r", real(&C::agent, &AgentParams::lr_critic_r)},
        {"lr_critic_c", real(&C::agent, &AgentParams::lr_critic_c)},
        {"lr_actor", real(&C::agent, &AgentParams::lr_actor)},
        {"lr_dual", real(&C::agent, &AgentParams::lr_dual)},
        {"batch_size", integer(&C::agent, &AgentParams::batch_size)},
        {"replay_capacity", integer(&C::agent, &AgentParams::replay_capacity)},
        {"warmup_batches", integer(&C::agent, &AgentParams::warmup_batches)},
        {"soft_update_rate", real(&C::agent, &AgentParams::soft_update_rate)},
        {"ou_theta", real(&C::agent, &AgentParams::ou_theta)},
        {"ou_sigma", real(&C::agent, &AgentParams::ou_sigma)},
        {"ou_sigma_final", real(&C::agent, &AgentParams::ou_sigma_final)},
        {"episodes", integer(&C::agent, &AgentParams::episodes)},
        {"slots_per_episode", integer(&C::agent, &AgentParams::slots_per_episode)},
        {"hidden_units", integer(&C::agent, &AgentParams::hidden_units)},
        {"grad_clip", real(&C::agent, &AgentParams::grad_clip)},
        {"optimizer",
         {[](const C &c) { return nn::to_string(c.agent.optimizer); },
          [](C &c, const std::string &k, const std::string &v) {
              if (v != "adam" && v != "sgd")
                  throw ConfigError(k + ": expected adam or sgd, got '" + v + "'");
              c.agent.optimizer = nn::optimizer_from_string(v);
          }}},
        {"initial_dual", real(&C::agent, &AgentParams::initial_dual)},

        {"num_bs", integer(&C::reputation, &ReputationParams::num_bs)},
        {"feedback_weight", real(&C::reputation, &ReputationParams::feedback_weight)},
        {"history_window", integer(&C::reputation, &ReputationParams::history_window)},
        {"history_decay", real(&C::reputation, &ReputationParams::history_decay)},
        {"initial_reputation", real(&C::reputation, &ReputationParams::initial)},
        {"committee_threshold", real(&C::reputation, &ReputationParams::committee_threshold)},
        {"committee_size", integer(&C::reputation, &ReputationParams::committee_size)},
        {"feedback_per_slot", integer(&C::reputation, &ReputationParams::feedback_per_slot)},

        {"reputation_slots", top_int(&C::reputation_slots)},
        {"tracked_bs", top_int(&C::tracked_bs)},
        {"eval_episodes", top_int(&C::eval_episodes)},
        {"summary_window", top_int(&C::summary_window)},
        {"seed",
         {[](const C &c) { return std::to_string(c.seed); },
          [](C &c, const std::string &k, const std::string &v) {
              std::uint64_t x = 0;
              const char *end = v.data() + v.size();
              auto [ptr, ec] = std::from_chars(v.data(), end, x);
              if (ec != std::errc() || ptr != end)
                  throw ConfigError(k + ": expected an unsigned integer, got '" + v + "'");
              c.seed = x;
          }}},
        {"output_dir",
         {[](const C &c) { return c.output_dir; },
          [](C &c, const std::string &, const std::string &v) { c.output_dir = v; }}},
    };
    return table;
}

} // namespace

std::vector<AttackProfile> ExperimentConfig::default_attacks() {
    return {AttackProfile::constant(0, 0.5), AttackProfile::constant(1, 0.5),
            AttackProfile::constant(2, 0.5)};
}

std::vector<NamedProfile> ExperimentConfig::default_profiles() {
    return {
        {"dynamic", {{0, 0.0}, {250, 0.5}, {500, 0.1}, {750, 0.5}}},
        {"p0", {{0, 0.0}}},
        {"p25", {{0, 0.25}}},
        {"p50", {{0, 0.5}}},
    };
}

void ExperimentConfig::validate() const {
    env.validate();
    agent.validate();
    reputation.validate();
    for (const auto &a : attacks) {
        if (a.bs_id < 0 || a.bs_id >= reputation.num_bs)
            throw ConfigError("attack." + std::to_string(a.bs_id) + ": bs id outside [0, num_bs)");
        a.validate();
    }
    for (const auto &p : profiles) {
        if (p.schedule.empty())
            throw ConfigError("profile." + p.name + ": empty schedule");
        AttackProfile{tracked_bs, p.schedule}.validate();
    }
    if (reputation_slots < 1)
        throw ConfigError("reputation_slots: must be >= 1");
    if (tracked_bs < 0 || tracked_bs >= reputation.num_bs)
        throw ConfigError("tracked_bs: must be in [0, num_bs)");
    if (eval_episodes < 0)
        throw ConfigError("eval_episodes: must be nonnegative");
    if (summary_window < 1)
        throw ConfigError("summary_window: must be >= 1");
    if (output_dir.empty())
        throw ConfigError("output_dir: must not be empty");
}

std::vector<AttackProfile::Step> parse_schedule(const std::string &key, const std::string &text) {
    std::vector<AttackProfile::Step> steps;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty())
            continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError(key + ": schedule entries must look like slot:prob, got '" + item + "'");
        AttackProfile::Step s;
        s.from_slot = parse_int(key, trim(item.substr(0, colon)));
        s.prob = parse_double(key, trim(item.substr(colon + 1)));
        if (!(s.prob >= 0 && s.prob <= 1))
            throw ConfigError(key + ": probability " + fmt_double(s.prob) + " outside [0, 1]");
        steps.push_back(s);
    }
    if (steps.empty())
        throw ConfigError(key + ": empty schedule");
    AttackProfile{0, steps}.validate();
    return steps;
}

std::string format_schedule(const std::vector<AttackProfile::Step> &schedule) {
    std::string out;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (i)
            out += ", ";
        out += std::to_string(schedule[i].from_slot) + ":" + fmt_double(schedule[i].prob);
    }
    return out;
}

ExperimentConfig parse_config(const std::string &text) {
    ExperimentConfig cfg;
    std::map<int, AttackProfile> attacks;
    std::map<std::string, NamedProfile> profiles;
    bool saw_attacks = false;
    bool saw_profiles = false;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "attacks" && value == "none") {
            saw_attacks = true;
            continue;
        }
        if (key.rfind("attack.", 0) == 0) {
            saw_attacks = true;
            const int id = static_cast<int>(parse_int(key, key.substr(7)));
            attacks[id] = AttackProfile{id, parse_schedule(key, value)};
            continue;
        }
        if (key.rfind("profile.", 0) == 0) {
            saw_profiles = true;
            const std::string name = key.substr(8);
            if (name.empty())
                throw ConfigError(key + ": profile name must not be empty");
            profiles[name] = NamedProfile{name, parse_schedule(key, value)};
            continue;
        }
        const auto &table = fields();
        const auto it = std::find_if(table.begin(), table.end(),
                                     [&](const auto &f) { return f.first == key; });
        if (it == table.end())
            throw ConfigError(key + ": unknown key");
        it->second.set(cfg, key, value);
    }

    if (saw_attacks) {
        cfg.attacks.clear();
        for (auto &[id, a] : attacks)
            cfg.attacks.push_back(a);
    }
    if (saw_profiles) {
        cfg.profiles.clear();
        for (auto &[name, p] : profiles)
            cfg.profiles.push_back(p);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig &cfg) {
    std::ostringstream out;
    for (const auto &[key, field] : fields())
        out << key << " = " << field.get(cfg) << "\n";
    if (cfg.attacks.empty())
        out << "attacks = none\n";
    for (const auto &a : cfg.attacks)
        out << "attack." << a.bs_id << " = " << format_schedule(a.schedule) << "\n";
    for (const auto &p : cfg.profiles)
        out << "profile." << p.name << " = " << format_schedule(p.schedule) << "\n";
    return out.str();
}

bool operator==(const ExperimentConfig &a, const ExperimentConfig &b) {
    return serialize_config(a) == serialize_config(b);
}

} // namespace slicing
