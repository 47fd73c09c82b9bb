#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slicing/env.hpp"
#include "slicing/nn.hpp"
#include "slicing/reputation.hpp"
#include "slicing/rng.hpp"

namespace slicing {

struct AgentParams {
    double gamma_r = 0.95;
    double gamma_c = 0.95;
    double eps_max = 0.02;
    double lr_critic_r = 5e-4;
    double lr_critic_c = 5e-4;
    double lr_actor = 2e-4;
    double lr_dual = 0.1;
    int batch_size = 512;
    int replay_capacity = 100000;
    // Training starts once the buffer holds warmup_batches * batch_size.
    int warmup_batches = 2;
    double soft_update_rate = 0.005;
    double ou_theta = 0.15;
    double ou_sigma = 0.2;
    double ou_sigma_final = 0.01;
    int episodes = 60;
    int slots_per_episode = 1000;
    int hidden_units = 64;
    double grad_clip = 1.0;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
    double initial_dual = 0.0;

    void validate() const;

    // Long-term DoS budget: eps_max / (1 - gamma_c).
    double cost_budget() const { return eps_max / (1.0 - gamma_c); }
};

enum class Mode { Constrained, MinLatency, MinDos };

std::string to_string(Mode m);
// Accepts "constrained", "min-latency"/"min_latency", "min-dos"/"min_dos".
Mode mode_from_string(const std::string &s);

struct Transition {
    ReducedState state;
    double action = 0.0; // actor output after noise, clamped to [0, 1]
    double reward = 0.0;
    int cost = 0;
    ReducedState next_state;
};

// Column-major batch view of sampled transitions.
struct TransitionBatch {
    nn::Matrix states;      // 2 x M
    nn::Matrix actions;     // 1 x M
    Eigen::RowVectorXd rewards;
    Eigen::RowVectorXd costs;
    nn::Matrix next_states; // 2 x M

    int size() const { return static_cast<int>(actions.cols()); }
    static TransitionBatch from(const std::vector<Transition> &items);
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(const Transition &t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition &at(std::size_t i) const { return items_.at(i); }

    std::vector<std::size_t> sample_indices(std::size_t count, Rng &rng) const;
    TransitionBatch sample(std::size_t count, Rng &rng) const;

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> items_;
};

struct DualState {
    double lambda = 0.0;
    double lr = 0.1;
    double budget = 0.4;
};

// Projected ascent on the sampled dual gradient mean(Q_C) - budget.
DualState dual_update(double mean_cost_value, DualState dual);

// Mean-reverting exploration noise, x <- x - theta * x + sigma * N(0, 1).
class OUNoise {
public:
    OUNoise(double theta, double sigma) : theta_(theta), sigma_(sigma) {}

    double sample(Rng &rng);
    void reset() { value_ = 0.0; }
    double value() const { return value_; }
    void set_value(double v) { value_ = v; }
    double sigma() const { return sigma_; }
    void set_sigma(double s) { sigma_ = s; }

private:
    double theta_;
    double sigma_;
    double value_ = 0.0;
};

// Per-slot discounted returns G_t = c_t + gamma * G_{t+1} of a finite stream.
std::vector<double> discounted_returns(const std::vector<double> &values, double gamma);
double mean_discounted_return(const std::vector<double> &values, double gamma);

// Maps a relaxed action in [0, 1] onto {0} U [min_alloc, min(capacity, avail)].
double map_action(double u, double avail, double min_alloc, double capacity);

// Reward/cost critics, actor, and their slowly tracking targets.
struct Networks {
    nn::DenseNet actor;
    nn::DenseNet critic_r;
    nn::DenseNet critic_c;
    nn::DenseNet target_actor;
    nn::DenseNet target_r;
    nn::DenseNet target_c;

    static Networks make(int hidden_units, Rng &rng);
};

// Stacks states (2 x M) over actions (1 x M).
nn::Matrix critic_input(const nn::Matrix &states, const nn::Matrix &actions);

struct TdTargets {
    Eigen::RowVectorXd reward;
    Eigen::RowVectorXd cost;
};

TdTargets td_targets(const TransitionBatch &batch, const nn::DenseNet &target_actor,
                     const nn::DenseNet &target_r, const nn::DenseNet &target_c, double gamma_r,
                     double gamma_c);

// Mean squared TD error of `critic` on (inputs, targets).
double critic_loss(const nn::DenseNet &critic, const nn::Matrix &inputs,
                   const Eigen::RowVectorXd &targets);

// One optimizer step on the mean squared TD error. Returns the pre-step loss.
double critic_update(nn::DenseNet &critic, nn::Optimizer &opt, const nn::Matrix &inputs,
                     const Eigen::RowVectorXd &targets);

struct ActorObjective {
    double value = 0.0;         // mean of Q_R - lambda * Q_C at mu(s)
    nn::Gradients grads;        // d value / d actor params
};

ActorObjective actor_objective(const nn::Matrix &states, const nn::DenseNet &actor,
                               const nn::DenseNet &critic_r, const nn::DenseNet &critic_c,
                               double lambda);

// Steps the actor uphill on the Lagrangian objective. Returns its pre-step value.
double actor_update(const nn::Matrix &states, nn::DenseNet &actor, nn::Optimizer &opt,
                    const nn::DenseNet &critic_r, const nn::DenseNet &critic_c, double lambda);

// Mean Q_C(s, mu(s)) over the batch states.
double mean_cost_value(const nn::Matrix &states, const nn::DenseNet &actor,
                       const nn::DenseNet &critic_c);

struct ActionChoice {
    double u = 0.0;
    double rate = 0.0;
};

struct TrainStats {
    double loss_r = 0.0;
    double loss_c = 0.0;
    double actor_obj = 0.0;
};

// Primal-dual DDPG with separate reward and cost critics. The two baseline
// modes reuse the same machinery with the dual pinned at zero.
class PdDdpgAgent {
public:
    PdDdpgAgent(AgentParams params, Mode mode, std::uint64_t seed);

    const AgentParams &params() const { return params_; }
    Mode mode() const { return mode_; }
    const Networks &nets() const { return nets_; }
    const DualState &dual() const { return dual_; }
    const ReplayBuffer &buffer() const { return buffer_; }
    OUNoise &noise() { return noise_; }

    double greedy(const ReducedState &s) const;
    ActionChoice act(const ReducedState &s, double avail, double min_alloc, double capacity,
                     bool explore);

    void remember(const Transition &t) { buffer_.push(t); }
    bool ready() const;
    TrainStats train_step();

    nlohmann::json checkpoint() const;
    static PdDdpgAgent restore(const nlohmann::json &j, AgentParams params, std::uint64_t seed);

private:
    AgentParams params_;
    Mode mode_;
    Rng init_rng_;
    Rng noise_rng_;
    Rng replay_rng_;
    Networks nets_;
    nn::Optimizer opt_actor_;
    nn::Optimizer opt_r_;
    nn::Optimizer opt_c_;
    DualState dual_;
    OUNoise noise_;
    ReplayBuffer buffer_;
};

struct EpisodeRecord {
    int episode = 0;
    double mean_latency_norm = 0.0; // over slots where resources were allocated
    double dos_rate = 0.0;
    double dual = 0.0;
    double critic_loss_r = 0.0;
    double critic_loss_c = 0.0;
    double actor_obj = 0.0;
    double mean_reward = 0.0;
    double mean_cost = 0.0;
};

struct TrainingLog {
    std::vector<EpisodeRecord> episodes;
    nlohmann::json checkpoint;
};

// Malicious-miner scenario: reputations drive committee selection each slot
// and a denying miner forces a zero allocation.
struct AttackScenario {
    ReputationParams reputation;
    std::vector<AttackProfile> profiles;
};

using EnvFactory = std::function<SliceEnv(std::uint64_t seed)>;

// Runs the full training loop. Throws NumericError on any non-finite loss
// or parameter.
TrainingLog train(const EnvFactory &make_env, const AgentParams &params, Mode mode,
                  std::uint64_t seed, const std::optional<AttackScenario> &attacks = {});

// Greedy rollouts of a trained agent; losses in the records are zero.
std::vector<EpisodeRecord> evaluate(const EnvFactory &make_env, const PdDdpgAgent &agent,
                                    int episodes, int slots_per_episode, std::uint64_t seed,
                                    const std::optional<AttackScenario> &attacks = {});

} // namespace slicing
