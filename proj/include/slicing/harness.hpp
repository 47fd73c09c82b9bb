#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "slicing/agent.hpp"
#include "slicing/config.hpp"

namespace slicing {

// A figure bundle was requested before the runs it depends on.
class MissingRunError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

EnvFactory env_factory(const EnvParams &params);
AttackScenario attack_scenario(const ExperimentConfig &cfg);

// Reputation of the tracked BS per slot, one trace per configured profile.
using ReputationTraces = std::map<std::string, std::vector<double>>;

ReputationTraces reputation_traces(const ExperimentConfig &cfg);
// Writes reputation_<profile>.csv (slot,bs_id,reputation) into the output dir.
ReputationTraces run_reputation_experiment(const ExperimentConfig &cfg);

struct RunSummary {
    std::string mode;
    bool attacks = false;
    int episodes = 0;
    int window = 0;
    double mean_latency_norm = 0.0;
    double dos_rate = 0.0;
    double mean_reward = 0.0;
    double final_dual = 0.0;

    nlohmann::json to_json() const;
};

// Averages over the last `window` episodes (fewer if the run is shorter).
RunSummary summarize(const std::vector<EpisodeRecord> &episodes, Mode mode, bool attacks,
                     int window);

struct TrainingResult {
    TrainingLog log;
    RunSummary summary;
};

// File stem for a run, e.g. "constrained" or "min_dos_attack".
std::string run_tag(Mode mode, bool attacks);

// Trains and writes train_<tag>.csv, checkpoint_<tag>.json, summary_<tag>.json.
TrainingResult run_training(const ExperimentConfig &cfg, Mode mode, bool attacks);

// Greedy rollouts from checkpoint_<tag>.json; writes eval_<tag>.csv.
std::vector<EpisodeRecord> run_evaluation(const ExperimentConfig &cfg, Mode mode, bool attacks);

// Builds fig2_<profile>.csv, fig3a.csv, fig3b.csv, fig4a.csv and fig4b.csv
// from the runs already present in the output dir.
std::vector<std::filesystem::path> emit_figure_data(const ExperimentConfig &cfg);

inline constexpr const char *kTrainingHeader =
    "episode,mean_latency_norm,dos_rate,dual,critic_loss_r,critic_loss_c,actor_obj";

std::string training_csv(const std::vector<EpisodeRecord> &episodes);
std::vector<EpisodeRecord> read_training_csv(const std::filesystem::path &path);

} // namespace slicing
