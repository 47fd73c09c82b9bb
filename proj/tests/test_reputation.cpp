#include "doctest.h"

#include <map>

#include "slicing/error.hpp"
#include "slicing/reputation.hpp"

using namespace slicing;

namespace {

ReputationRecord record_with_history(std::vector<double> history, double decay = 0.0,
                                     int window = 0) {
    ReputationParams p;
    p.history_decay = decay;
    p.history_window = window ? window : static_cast<int>(history.size());
    auto r = ReputationRecord::make(0, p);
    r.history.assign(history.begin(), history.end());
    return r;
}

FeedbackBatch feedback(double served) { return FeedbackBatch{0, served, false}; }

} // namespace

TEST_CASE("historical component") {
    CHECK(historical_component(record_with_history({1, 1, 1, 1}, 0.1)) == doctest::Approx(1.0));
    CHECK(historical_component(record_with_history({0, 0, 0}, 0.1)) == 0.0);
    CHECK(historical_component(record_with_history({1.0, 0.5}, 0.0, 2)) == doctest::Approx(0.75));

    auto empty = record_with_history({}, 0.1, 10);
    empty.current = 0.42;
    CHECK(historical_component(empty) == 0.42);
}

TEST_CASE("warm-up renormalizes over the entries present") {
    // weights 1, 0.9 over two entries
    const auto r = record_with_history({1.0, 0.0}, 0.1, 10);
    CHECK(historical_component(r) == doctest::Approx(1.0 / 1.9));
}

TEST_CASE("update rule") {
    auto r = record_with_history({1, 1, 1}, 0.1, 10);
    r.current = 1.0;

    const auto same = update_reputation(r, FeedbackBatch{});
    CHECK(same.current == r.current);
    CHECK(same.history.size() == r.history.size() + 1);

    CHECK(update_reputation(r, feedback(0.0)).current == doctest::Approx(0.8));
    CHECK(update_reputation(r, feedback(1.0)).current == doctest::Approx(1.0));
}

TEST_CASE("history ring keeps at most the window") {
    ReputationParams p;
    p.history_window = 3;
    auto r = ReputationRecord::make(0, p);
    for (int i = 0; i < 10; ++i)
        r = update_reputation(r, feedback(i % 2));
    CHECK(r.history.size() == 3);
    CHECK(r.history.front() == r.current);
}

TEST_CASE("aggregate feedback") {
    CHECK(aggregate_feedback(0, {}).empty);
    const std::vector<int> mixed{1, 1, 1, 0};
    const auto fb = aggregate_feedback(3, mixed);
    CHECK_FALSE(fb.empty);
    CHECK(fb.bs_id == 3);
    CHECK(fb.served_fraction == 0.75);
    const std::vector<int> zeros{0, 0, 0};
    CHECK(aggregate_feedback(0, zeros).served_fraction == 0.0);
}

TEST_CASE("reputations stay in range under random feedback streams") {
    Rng rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        ReputationParams p;
        p.feedback_weight = u(rng);
        p.history_decay = 0.9 * u(rng);
        p.history_window = 1 + trial % 12;
        p.initial = u(rng);
        auto r = ReputationRecord::make(0, p);
        for (int t = 0; t < 200; ++t) {
            const FeedbackBatch fb = u(rng) < 0.1 ? FeedbackBatch{} : feedback(u(rng));
            r = update_reputation(r, fb);
            CHECK(r.current >= 0.0);
            CHECK(r.current <= 1.0);
        }
    }
}

TEST_CASE("no feedback keeps reputation constant") {
    ReputationParams p;
    auto r = ReputationRecord::make(0, p);
    r = update_reputation(r, feedback(0.0));
    r = update_reputation(r, feedback(0.3));
    const double held = r.current;
    for (int k = 0; k < 25; ++k) {
        r = update_reputation(r, FeedbackBatch{});
        CHECK(r.current == held);
    }
}

TEST_CASE("more served feedback never lowers the update") {
    Rng rng(23);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> hist(5);
        for (auto &h : hist)
            h = u(rng);
        const auto r = record_with_history(hist, 0.1, 10);
        double a = u(rng), b = u(rng);
        if (a > b)
            std::swap(a, b);
        CHECK(update_reputation(r, feedback(a)).current <= update_reputation(r, feedback(b)).current);
    }
}

TEST_CASE("committee selection") {
    ReputationParams p;
    std::vector<ReputationRecord> recs;
    for (int i = 0; i < 6; ++i)
        recs.push_back(ReputationRecord::make(i, p));

    CHECK(select_committee(recs, 0.8, 4) == std::vector<int>{0, 1, 2, 3});

    recs[1].current = 0.5;
    const auto c = select_committee(recs, 0.8, 6);
    CHECK(std::find(c.begin(), c.end(), 1) == c.end());

    std::vector<ReputationRecord> three;
    for (int i = 0; i < 3; ++i)
        three.push_back(ReputationRecord::make(i, p));
    three[0].current = 0.9;
    three[1].current = 0.95;
    three[2].current = 0.7;
    CHECK(select_committee(three, 0.8, 2) == std::vector<int>{0, 1});

    for (auto &r : three)
        r.current = 0.1;
    CHECK_THROWS_AS(select_committee(three, 0.8, 2), EmptyCommittee);
    CHECK_THROWS_AS(select_committee(three, 0.0, 0), ContractError);
}

TEST_CASE("miner assignment") {
    Rng rng(1);
    const std::vector<int> single{5};
    CHECK(assign_miner(single, rng) == 5);
    CHECK_THROWS_AS(assign_miner(std::vector<int>{}, rng), EmptyCommittee);

    const std::vector<int> committee{2, 4, 6, 8};
    Rng a(9), b(9);
    for (int i = 0; i < 10; ++i)
        CHECK(assign_miner(committee, a) == assign_miner(committee, b));

    std::map<int, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        ++counts[assign_miner(committee, rng)];
    for (int id : committee)
        CHECK(std::abs(counts[id] / double(n) - 0.25) < 0.02);
}

TEST_CASE("malicious feedback") {
    Rng rng(4);
    const auto never = AttackProfile::constant(0, 0.0);
    const auto always = AttackProfile::constant(0, 1.0);
    for (int t = 0; t < 100; ++t) {
        CHECK(malicious_feedback(never, t, rng) == 0);
        CHECK(malicious_feedback(always, t, rng) == 1);
    }
    const auto half = AttackProfile::constant(0, 0.5);
    double sum = 0;
    const int n = 100000;
    for (int t = 0; t < n; ++t)
        sum += malicious_feedback(half, t, rng);
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("piecewise schedules") {
    AttackProfile p{0, {{0, 0.0}, {100, 0.5}, {300, 0.1}}};
    CHECK(p.prob_at(0) == 0.0);
    CHECK(p.prob_at(99) == 0.0);
    CHECK(p.prob_at(100) == 0.5);
    CHECK(p.prob_at(299) == 0.5);
    CHECK(p.prob_at(5000) == 0.1);
    p.schedule[1].prob = 1.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("reputation system excludes a persistent attacker from the committee") {
    ReputationParams p;
    ReputationSystem sys(p, {AttackProfile::constant(0, 0.9)});
    Rng rng(8);
    for (int t = 0; t < 50; ++t)
        sys.observe_slot(t, rng);
    const auto c = sys.committee();
    CHECK(std::find(c.begin(), c.end(), 0) == c.end());
    CHECK(c.size() == 4);
    CHECK_THROWS_AS(ReputationSystem(p, {AttackProfile::constant(42, 0.5)}), ConfigError);
}

TEST_CASE("only the serving miner receives feedback") {
    ReputationParams p;
    ReputationSystem sys(p, {AttackProfile::constant(0, 1.0)});
    Rng rng(2);
    CHECK(sys.committee() == std::vector<int>{0, 1, 2, 3});
    CHECK(sys.observe_miner(0, 0, rng));
    CHECK(sys.records()[0].current == doctest::Approx(0.8));
    for (std::size_t i = 1; i < sys.records().size(); ++i)
        CHECK(sys.records()[i].current == 1.0);
    // below the honest BSs at 1.0, so the attacker drops out after one denial
    CHECK(sys.committee() == std::vector<int>{1, 2, 3, 4});
    CHECK_FALSE(sys.observe_miner(1, 3, rng));
    CHECK(sys.records()[0].current == doctest::Approx(0.8));
    CHECK_THROWS_AS(sys.observe_miner(2, 10, rng), ContractError);
}
