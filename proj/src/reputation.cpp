#include "slicing/reputation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "slicing/error.hpp"

namespace slicing {

void ReputationParams::validate() const {
    auto fail = [](const char *key, const char *what) {
        throw ConfigError(std::string(key) + ": " + what);
    };
    if (num_bs < 1)
        fail("num_bs", "must be >= 1");
    if (!(feedback_weight >= 0 && feedback_weight <= 1))
        fail("feedback_weight", "must be in [0, 1]");
    if (history_window < 1)
        fail("history_window", "must be >= 1");
    if (!(history_decay >= 0 && history_decay < 1))
        fail("history_decay", "must be in [0, 1)");
    if (!(initial >= 0 && initial <= 1))
        fail("initial_reputation", "must be in [0, 1]");
    if (!(committee_threshold >= 0 && committee_threshold <= 1))
        fail("committee_threshold", "must be in [0, 1]");
    if (committee_size < 1 || committee_size > num_bs)
        fail("committee_size", "must be in [1, num_bs]");
    if (feedback_per_slot < 0)
        fail("feedback_per_slot", "must be >= 0");
}

std::vector<double> decay_weights(int window, double decay) {
    std::vector<double> w(static_cast<std::size_t>(window));
    for (int k = 0; k < window; ++k)
        w[static_cast<std::size_t>(k)] = std::pow(1.0 - decay, k);
    return w;
}

ReputationRecord ReputationRecord::make(int bs_id, const ReputationParams &params) {
    ReputationRecord r;
    r.bs_id = bs_id;
    r.current = params.initial;
    r.feedback_weight = params.feedback_weight;
    r.decay = decay_weights(params.history_window, params.history_decay);
    return r;
}

double historical_component(const ReputationRecord &record) {
    const std::size_t n = std::min(record.history.size(), record.decay.size());
    if (n == 0)
        return record.current;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        num += record.decay[k] * record.history[k];
        den += record.decay[k];
    }
    return num / den;
}

ReputationRecord update_reputation(ReputationRecord record, const FeedbackBatch &fb) {
    if (!fb.empty) {
        const double hist = historical_component(record);
        const double w = record.feedback_weight;
        record.current = std::clamp(w * fb.served_fraction + (1.0 - w) * hist, 0.0, 1.0);
    }
    record.history.push_front(record.current);
    while (record.history.size() > record.decay.size())
        record.history.pop_back();
    return record;
}

FeedbackBatch aggregate_feedback(int bs_id, std::span<const int> served_indicators) {
    FeedbackBatch fb;
    fb.bs_id = bs_id;
    if (served_indicators.empty())
        return fb;
    fb.empty = false;
    const double served = std::accumulate(served_indicators.begin(), served_indicators.end(), 0.0);
    fb.served_fraction = served / static_cast<double>(served_indicators.size());
    return fb;
}

AttackProfile AttackProfile::constant(int bs_id, double prob) {
    return AttackProfile{bs_id, {{0, prob}}};
}

double AttackProfile::prob_at(std::int64_t slot) const {
    double p = 0.0;
    for (const auto &step : schedule) {
        if (step.from_slot > slot)
            break;
        p = step.prob;
    }
    return p;
}

void AttackProfile::validate() const {
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i].prob >= 0 && schedule[i].prob <= 1))
            throw ConfigError("attack profile for bs " + std::to_string(bs_id) +
                              ": probability outside [0, 1]");
        if (i > 0 && schedule[i].from_slot <= schedule[i - 1].from_slot)
            throw ConfigError("attack profile for bs " + std::to_string(bs_id) +
                              ": schedule slots must be strictly increasing");
    }
}

int malicious_feedback(const AttackProfile &profile, std::int64_t now, Rng &rng) {
    std::bernoulli_distribution dos(profile.prob_at(now));
    return dos(rng) ? 1 : 0;
}

std::vector<int> select_committee(std::span<const ReputationRecord> records, double threshold,
                                  int size) {
    if (size < 1 || static_cast<std::size_t>(size) > records.size())
        throw ContractError("select_committee: size must be in [1, number of BSs]");
    std::vector<const ReputationRecord *> eligible;
    for (const auto &r : records)
        if (r.current >= threshold)
            eligible.push_back(&r);
    if (eligible.empty())
        throw EmptyCommittee("no BS meets the committee threshold");
    std::stable_sort(eligible.begin(), eligible.end(), [](const auto *a, const auto *b) {
        if (a->current != b->current)
            return a->current > b->current;
        return a->bs_id < b->bs_id;
    });
    std::vector<int> ids;
    for (std::size_t i = 0; i < eligible.size() && ids.size() < static_cast<std::size_t>(size); ++i)
        ids.push_back(eligible[i]->bs_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

int assign_miner(std::span<const int> committee, Rng &rng) {
    if (committee.empty())
        throw EmptyCommittee("cannot assign a miner from an empty committee");
    std::uniform_int_distribution<std::size_t> pick(0, committee.size() - 1);
    return committee[pick(rng)];
}

ReputationSystem::ReputationSystem(ReputationParams params, std::vector<AttackProfile> attacks)
    : params_(std::move(params)), attacks_(std::move(attacks)) {
    params_.validate();
    for (const auto &a : attacks_) {
        if (a.bs_id < 0 || a.bs_id >= params_.num_bs)
            throw ConfigError("attack profile bs_id " + std::to_string(a.bs_id) +
                              " outside [0, num_bs)");
        a.validate();
    }
    for (int i = 0; i < params_.num_bs; ++i)
        records_.push_back(ReputationRecord::make(i, params_));
}

const AttackProfile *ReputationSystem::profile(int bs_id) const {
    for (const auto &a : attacks_)
        if (a.bs_id == bs_id)
            return &a;
    return nullptr;
}

std::vector<int> ReputationSystem::observe_slot(std::int64_t slot, Rng &rng) {
    std::vector<int> denied(records_.size(), 0);
    std::vector<int> served;
    for (auto &record : records_) {
        const AttackProfile *p = profile(record.bs_id);
        served.clear();
        for (int u = 0; u < params_.feedback_per_slot; ++u) {
            const int dos = p ? malicious_feedback(*p, slot, rng) : 0;
            if (u == 0)
                denied[static_cast<std::size_t>(record.bs_id)] = dos;
            served.push_back(1 - dos);
        }
        record = update_reputation(std::move(record), aggregate_feedback(record.bs_id, served));
    }
    return denied;
}

bool ReputationSystem::observe_miner(std::int64_t slot, int miner, Rng &rng) {
    if (miner < 0 || miner >= static_cast<int>(records_.size()))
        throw ContractError("observe_miner: unknown bs " + std::to_string(miner));
    bool denied = false;
    for (auto &record : records_) {
        FeedbackBatch fb;
        if (record.bs_id == miner) {
            const AttackProfile *p = profile(record.bs_id);
            std::vector<int> served;
            for (int u = 0; u < params_.feedback_per_slot; ++u) {
                const int dos = p ? malicious_feedback(*p, slot, rng) : 0;
                if (u == 0)
                    denied = dos != 0;
                served.push_back(1 - dos);
            }
            fb = aggregate_feedback(record.bs_id, served);
        }
        record = update_reputation(std::move(record), fb);
    }
    return denied;
}

std::vector<int> ReputationSystem::committee() const {
    return select_committee(records_, params_.committee_threshold, params_.committee_size);
}

} // namespace slicing
