#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <span>
#include <vector>

#include "slicing/rng.hpp"

namespace slicing {

struct ReputationParams {
    int num_bs = 10;
    // Weight of fresh feedback against the historical component.
    double feedback_weight = 0.2;
    int history_window = 10;
    // Per-lag geometric decay of history weights, (1 - decay)^(k - 1).
    double history_decay = 0.1;
    double initial = 1.0;
    double committee_threshold = 0.8;
    int committee_size = 4;
    // User feedback reports collected per BS per slot.
    int feedback_per_slot = 1;

    void validate() const;
};

// Unnormalized per-lag weights for lags 1..window.
std::vector<double> decay_weights(int window, double decay);

struct ReputationRecord {
    int bs_id = 0;
    double current = 1.0;
    // Most recent first: history[0] is the previous slot's reputation.
    std::deque<double> history;
    double feedback_weight = 0.2;
    std::vector<double> decay;

    static ReputationRecord make(int bs_id, const ReputationParams &params);

    int window() const { return static_cast<int>(decay.size()); }
};

struct FeedbackBatch {
    int bs_id = 0;
    double served_fraction = 0.0;
    bool empty = true;
};

// Decay-weighted mean of the stored history, weights renormalized over the
// entries present. Falls back to `current` when history is empty.
double historical_component(const ReputationRecord &record);

ReputationRecord update_reputation(ReputationRecord record, const FeedbackBatch &fb);

FeedbackBatch aggregate_feedback(int bs_id, std::span<const int> served_indicators);

// Piecewise-constant DoS feedback probability: each step applies from
// `from_slot` until the next step.
struct AttackProfile {
    struct Step {
        std::int64_t from_slot = 0;
        double prob = 0.0;
    };

    int bs_id = 0;
    std::vector<Step> schedule;

    static AttackProfile constant(int bs_id, double prob);

    double prob_at(std::int64_t slot) const;
    void validate() const;
};

// 1 when a user reports denial of service.
int malicious_feedback(const AttackProfile &profile, std::int64_t now, Rng &rng);

// Top `size` BSs by current reputation among those at or above `threshold`,
// ties broken by lower id. Throws EmptyCommittee when nobody qualifies.
std::vector<int> select_committee(std::span<const ReputationRecord> records, double threshold,
                                  int size);

int assign_miner(std::span<const int> committee, Rng &rng);

class EmptyCommittee : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reputation table for every BS plus the behavior profile of each.
// BSs without a profile behave honestly.
class ReputationSystem {
public:
    ReputationSystem(ReputationParams params, std::vector<AttackProfile> attacks);

    const ReputationParams &params() const { return params_; }
    const std::vector<ReputationRecord> &records() const { return records_; }
    const AttackProfile *profile(int bs_id) const;

    // Draws this slot's DoS reports for every BS and folds them into the
    // reputations. Returns, per BS, whether the first report was a denial.
    std::vector<int> observe_slot(std::int64_t slot, Rng &rng);

    // Only the serving miner's users report; every other BS sees an empty
    // feedback set this slot. Returns whether the miner's first report was a denial.
    bool observe_miner(std::int64_t slot, int miner, Rng &rng);

    std::vector<int> committee() const;

private:
    ReputationParams params_;
    std::vector<ReputationRecord> records_;
    std::vector<AttackProfile> attacks_;
};

} // namespace slicing
