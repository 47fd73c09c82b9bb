#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slicing/agent.hpp"
#include "slicing/env.hpp"
#include "slicing/reputation.hpp"

namespace slicing {

// A named DoS-feedback schedule tracked by the reputation experiment.
struct NamedProfile {
    std::string name;
    std::vector<AttackProfile::Step> schedule;
};

struct ExperimentConfig {
    EnvParams env;
    AgentParams agent;
    ReputationParams reputation;
    // Malicious BS behavior for the attack scenario, sorted by bs_id.
    std::vector<AttackProfile> attacks = default_attacks();
    // Reputation-tracking profiles, sorted by name.
    std::vector<NamedProfile> profiles = default_profiles();
    int reputation_slots = 1000;
    int tracked_bs = 0;
    int eval_episodes = 5;
    int summary_window = 10;
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    void validate() const;

    static std::vector<AttackProfile> default_attacks();
    static std::vector<NamedProfile> default_profiles();
};

// Parses the `key = value` format written by serialize_config. Omitted keys
// keep their defaults; unknown keys and out-of-range values throw
// ConfigError naming the key.
ExperimentConfig parse_config(const std::string &text);
ExperimentConfig load_config(const std::filesystem::path &path);
std::string serialize_config(const ExperimentConfig &cfg);

// Schedule syntax shared by attack.* and profile.* keys: "0:0.5, 250:0.1".
std::vector<AttackProfile::Step> parse_schedule(const std::string &key, const std::string &text);
std::string format_schedule(const std::vector<AttackProfile::Step> &schedule);

bool operator==(const ExperimentConfig &a, const ExperimentConfig &b);

} // namespace slicing
