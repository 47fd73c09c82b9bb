#include "slicing/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slicing/error.hpp"

namespace slicing {

namespace {

void require(bool ok, const char *key, const char *what) {
    if (!ok)
        throw ConfigError(std::string(key) + ": " + what);
}

bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }

} // namespace

void AgentParams::validate() const {
    require(in_open_unit(gamma_r), "gamma_r", "must be in (0, 1)");
    require(in_open_unit(gamma_c), "gamma_c", "must be in (0, 1)");
    require(in_open_unit(eps_max), "eps_max", "must be in (0, 1)");
    require(lr_critic_r > 0, "lr_critic_r", "must be positive");
    require(lr_critic_c > 0, "lr_critic_c", "must be positive");
    require(lr_actor > 0, "lr_actor", "must be positive");
    require(lr_dual > 0, "lr_dual", "must be positive");
    require(batch_size >= 1, "batch_size", "must be >= 1");
    require(replay_capacity >= batch_size, "replay_capacity", "must be >= batch_size");
    require(warmup_batches >= 1, "warmup_batches", "must be >= 1");
    require(static_cast<long long>(warmup_batches) * batch_size <= replay_capacity,
            "warmup_batches", "warm-up exceeds replay capacity");
    require(soft_update_rate >= 0 && soft_update_rate <= 1, "soft_update_rate",
            "must be in [0, 1]");
    require(ou_theta >= 0 && ou_theta <= 1, "ou_theta", "must be in [0, 1]");
    require(ou_sigma >= 0, "ou_sigma", "must be nonnegative");
    require(ou_sigma_final >= 0, "ou_sigma_final", "must be nonnegative");
    require(episodes >= 0, "episodes", "must be nonnegative");
    require(slots_per_episode >= 1, "slots_per_episode", "must be >= 1");
    require(hidden_units >= 1, "hidden_units", "must be >= 1");
    require(grad_clip >= 0, "grad_clip", "must be nonnegative");
    require(initial_dual >= 0, "initial_dual", "must be nonnegative");
}

std::string to_string(Mode m) {
    switch (m) {
    case Mode::Constrained:
        return "constrained";
    case Mode::MinLatency:
        return "min_latency";
    case Mode::MinDos:
        return "min_dos";
    }
    return "constrained";
}

Mode mode_from_string(const std::string &s) {
    if (s == "constrained")
        return Mode::Constrained;
    if (s == "min-latency" || s == "min_latency")
        return Mode::MinLatency;
    if (s == "min-dos" || s == "min_dos")
        return Mode::MinDos;
    throw ConfigError("mode: unknown value '" + s + "'");
}

TransitionBatch TransitionBatch::from(const std::vector<Transition> &items) {
    const auto m = static_cast<Eigen::Index>(items.size());
    TransitionBatch b;
    b.states.resize(2, m);
    b.actions.resize(1, m);
    b.rewards.resize(m);
    b.costs.resize(m);
    b.next_states.resize(2, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto &t = items[static_cast<std::size_t>(i)];
        b.states(0, i) = t.state.avail_frac;
        b.states(1, i) = t.state.backlog_frac;
        b.actions(0, i) = t.action;
        b.rewards(i) = t.reward;
        b.costs(i) = t.cost;
        b.next_states(0, i) = t.next_state.avail_frac;
        b.next_states(1, i) = t.next_state.backlog_frac;
    }
    return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0)
        throw ContractError("ReplayBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition &t) {
    if (items_.size() < capacity_) {
        items_.push_back(t);
    } else {
        items_[cursor_] = t;
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, Rng &rng) const {
    if (items_.empty())
        throw ContractError("ReplayBuffer::sample: buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> idx(count);
    for (auto &i : idx)
        i = pick(rng);
    return idx;
}

TransitionBatch ReplayBuffer::sample(std::size_t count, Rng &rng) const {
    std::vector<Transition> picked;
    picked.reserve(count);
    for (auto i : sample_indices(count, rng))
        picked.push_back(items_[i]);
    return TransitionBatch::from(picked);
}

DualState dual_update(double mean_cost_value, DualState dual) {
    const double grad = mean_cost_value - dual.budget;
    dual.lambda = std::max(0.0, dual.lambda + dual.lr * grad);
    return dual;
}

double OUNoise::sample(Rng &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double draw = n(rng);
    value_ += -theta_ * value_ + sigma_ * draw;
    return value_;
}

std::vector<double> discounted_returns(const std::vector<double> &values, double gamma) {
    std::vector<double> out(values.size());
    double g = 0.0;
    for (std::size_t i = values.size(); i-- > 0;) {
        g = values[i] + gamma * g;
        out[i] = g;
    }
    return out;
}

double mean_discounted_return(const std::vector<double> &values, double gamma) {
    if (values.empty())
        throw ContractError("mean_discounted_return: empty stream");
    const auto g = discounted_returns(values, gamma);
    double s = 0.0;
    for (double x : g)
        s += x;
    return s / static_cast<double>(g.size());
}

double map_action(double u, double avail, double min_alloc, double capacity) {
    const double x = std::clamp(u, 0.0, 1.0);
    const double candidate = x * capacity;
    if (candidate < min_alloc || avail < min_alloc)
        return 0.0;
    return std::min(candidate, avail);
}

Networks Networks::make(int hidden_units, Rng &rng) {
    using nn::Activation;
    const int h = hidden_units;
    Networks n;
    n.critic_r = nn::DenseNet::make({3, h, h, 1}, Activation::Relu, Activation::Identity, rng);
    n.critic_c = nn::DenseNet::make({3, h, h, 1}, Activation::Relu, Activation::Identity, rng);
    n.actor = nn::DenseNet::make({2, h, h, 1}, Activation::Relu, Activation::Sigmoid, rng, 3e-3);
    n.target_actor = n.actor;
    n.target_r = n.critic_r;
    n.target_c = n.critic_c;
    return n;
}

nn::Matrix critic_input(const nn::Matrix &states, const nn::Matrix &actions) {
    if (states.cols() != actions.cols() || states.rows() != 2 || actions.rows() != 1)
        throw ContractError("critic_input: expected 2 x M states and 1 x M actions");
    nn::Matrix x(3, states.cols());
    x.topRows(2) = states;
    x.bottomRows(1) = actions;
    return x;
}

TdTargets td_targets(const TransitionBatch &batch, const nn::DenseNet &target_actor,
                     const nn::DenseNet &target_r, const nn::DenseNet &target_c, double gamma_r,
                     double gamma_c) {
    if (batch.size() < 1)
        throw ContractError("td_targets: empty batch");
    const nn::Matrix next_u = target_actor.forward(batch.next_states);
    const nn::Matrix x = critic_input(batch.next_states, next_u);
    TdTargets y;
    y.reward = batch.rewards + gamma_r * target_r.forward(x).row(0);
    y.cost = batch.costs + gamma_c * target_c.forward(x).row(0);
    return y;
}

double critic_loss(const nn::DenseNet &critic, const nn::Matrix &inputs,
                   const Eigen::RowVectorXd &targets) {
    const nn::Matrix q = critic.forward(inputs);
    return (q.row(0) - targets).squaredNorm() / static_cast<double>(targets.size());
}

double critic_update(nn::DenseNet &critic, nn::Optimizer &opt, const nn::Matrix &inputs,
                     const Eigen::RowVectorXd &targets) {
    nn::ForwardCache cache;
    const nn::Matrix q = critic.forward(inputs, cache);
    const double m = static_cast<double>(targets.size());
    const Eigen::RowVectorXd residual = q.row(0) - targets;
    const double loss = residual.squaredNorm() / m;
    const nn::Matrix seed = (2.0 / m) * residual;
    opt.step(critic, critic.backward(cache, seed).grads);
    return loss;
}

ActorObjective actor_objective(const nn::Matrix &states, const nn::DenseNet &actor,
                               const nn::DenseNet &critic_r, const nn::DenseNet &critic_c,
                               double lambda) {
    const double m = static_cast<double>(states.cols());
    nn::ForwardCache actor_cache;
    const nn::Matrix u = actor.forward(states, actor_cache);
    const nn::Matrix x = critic_input(states, u);
    const nn::Matrix ones = nn::Matrix::Constant(1, states.cols(), 1.0 / m);

    nn::ForwardCache rc;
    const nn::Matrix qr = critic_r.forward(x, rc);
    const nn::Matrix dqr = critic_r.backward(rc, ones, false).input_grad.bottomRows(1);

    ActorObjective out;
    out.value = qr.sum() / m;
    nn::Matrix du = dqr;
    if (lambda != 0.0) {
        nn::ForwardCache cc;
        const nn::Matrix qc = critic_c.forward(x, cc);
        const nn::Matrix dqc = critic_c.backward(cc, ones, false).input_grad.bottomRows(1);
        out.value -= lambda * qc.sum() / m;
        du -= lambda * dqc;
    }
    out.grads = actor.backward(actor_cache, du).grads;
    return out;
}

double actor_update(const nn::Matrix &states, nn::DenseNet &actor, nn::Optimizer &opt,
                    const nn::DenseNet &critic_r, const nn::DenseNet &critic_c, double lambda) {
    ActorObjective obj = actor_objective(states, actor, critic_r, critic_c, lambda);
    // The optimizer descends, so hand it the negated ascent direction.
    obj.grads.scale(-1.0);
    opt.step(actor, std::move(obj.grads));
    return obj.value;
}

double mean_cost_value(const nn::Matrix &states, const nn::DenseNet &actor,
                       const nn::DenseNet &critic_c) {
    const nn::Matrix u = actor.forward(states);
    return critic_c.forward(critic_input(states, u)).mean();
}

PdDdpgAgent::PdDdpgAgent(AgentParams params, Mode mode, std::uint64_t seed)
    : params_(std::move(params)),
      mode_(mode),
      init_rng_(make_rng(seed, Stream::Init)),
      noise_rng_(make_rng(seed, Stream::Noise)),
      replay_rng_(make_rng(seed, Stream::Replay)),
      noise_(params_.ou_theta, params_.ou_sigma),
      buffer_(static_cast<std::size_t>(params_.replay_capacity)) {
    params_.validate();
    nets_ = Networks::make(params_.hidden_units, init_rng_);
    opt_actor_ = nn::Optimizer(nets_.actor, params_.lr_actor, params_.optimizer, params_.grad_clip);
    opt_r_ = nn::Optimizer(nets_.critic_r, params_.lr_critic_r, params_.optimizer, params_.grad_clip);
    opt_c_ = nn::Optimizer(nets_.critic_c, params_.lr_critic_c, params_.optimizer, params_.grad_clip);
    dual_ = DualState{mode_ == Mode::Constrained ? params_.initial_dual : 0.0, params_.lr_dual,
                      params_.cost_budget()};
}

double PdDdpgAgent::greedy(const ReducedState &s) const {
    nn::Vector x(2);
    x << s.avail_frac, s.backlog_frac;
    return nets_.actor.forward(x)(0);
}

ActionChoice PdDdpgAgent::act(const ReducedState &s, double avail, double min_alloc,
                              double capacity, bool explore) {
    double u = greedy(s);
    if (explore)
        u += noise_.sample(noise_rng_);
    ActionChoice c;
    c.u = std::clamp(u, 0.0, 1.0);
    c.rate = map_action(c.u, avail, min_alloc, capacity);
    return c;
}

bool PdDdpgAgent::ready() const {
    return buffer_.size() >=
           static_cast<std::size_t>(params_.warmup_batches) * static_cast<std::size_t>(params_.batch_size);
}

TrainStats PdDdpgAgent::train_step() {
    TransitionBatch batch = buffer_.sample(static_cast<std::size_t>(params_.batch_size), replay_rng_);
    if (mode_ == Mode::MinDos)
        batch.rewards = -batch.costs;

    const TdTargets y = td_targets(batch, nets_.target_actor, nets_.target_r, nets_.target_c,
                                   params_.gamma_r, params_.gamma_c);
    const nn::Matrix x = critic_input(batch.states, batch.actions);

    TrainStats stats;
    stats.loss_r = critic_update(nets_.critic_r, opt_r_, x, y.reward);
    stats.loss_c = critic_update(nets_.critic_c, opt_c_, x, y.cost);

    const double lambda = mode_ == Mode::Constrained ? dual_.lambda : 0.0;
    stats.actor_obj =
        actor_update(batch.states, nets_.actor, opt_actor_, nets_.critic_r, nets_.critic_c, lambda);
    if (mode_ == Mode::Constrained)
        dual_ = dual_update(mean_cost_value(batch.states, nets_.actor, nets_.critic_c), dual_);

    nn::soft_update(nets_.target_r, nets_.critic_r, params_.soft_update_rate);
    nn::soft_update(nets_.target_c, nets_.critic_c, params_.soft_update_rate);
    nn::soft_update(nets_.target_actor, nets_.actor, params_.soft_update_rate);

    if (!std::isfinite(stats.loss_r) || !std::isfinite(stats.loss_c) ||
        !std::isfinite(stats.actor_obj) || !std::isfinite(dual_.lambda) ||
        !nets_.actor.finite() || !nets_.critic_r.finite() || !nets_.critic_c.finite()) {
        std::ostringstream os;
        os << "non-finite value after training step " << opt_r_.steps() << " (loss_r=" << stats.loss_r
           << ", loss_c=" << stats.loss_c << ", actor_obj=" << stats.actor_obj
           << ", dual=" << dual_.lambda << ")";
        throw NumericError(os.str());
    }
    return stats;
}

nlohmann::json PdDdpgAgent::checkpoint() const {
    return {{"format", "slicing-checkpoint"},
            {"version", 1},
            {"mode", to_string(mode_)},
            {"networks",
             {{"actor", nets_.actor.to_json()},
              {"critic_r", nets_.critic_r.to_json()},
              {"critic_c", nets_.critic_c.to_json()},
              {"target_actor", nets_.target_actor.to_json()},
              {"target_r", nets_.target_r.to_json()},
              {"target_c", nets_.target_c.to_json()}}},
            {"optimizers",
             {{"actor", opt_actor_.to_json()},
              {"critic_r", opt_r_.to_json()},
              {"critic_c", opt_c_.to_json()}}},
            {"dual", {{"lambda", dual_.lambda}, {"lr", dual_.lr}, {"budget", dual_.budget}}}};
}

PdDdpgAgent PdDdpgAgent::restore(const nlohmann::json &j, AgentParams params, std::uint64_t seed) {
    if (j.value("format", "") != "slicing-checkpoint" || j.value("version", 0) != 1)
        throw ConfigError("checkpoint: unsupported format or version");
    PdDdpgAgent a(std::move(params), mode_from_string(j.at("mode").get<std::string>()), seed);
    const auto &n = j.at("networks");
    a.nets_.actor = nn::DenseNet::from_json(n.at("actor"));
    a.nets_.critic_r = nn::DenseNet::from_json(n.at("critic_r"));
    a.nets_.critic_c = nn::DenseNet::from_json(n.at("critic_c"));
    a.nets_.target_actor = nn::DenseNet::from_json(n.at("target_actor"));
    a.nets_.target_r = nn::DenseNet::from_json(n.at("target_r"));
    a.nets_.target_c = nn::DenseNet::from_json(n.at("target_c"));
    const auto &o = j.at("optimizers");
    a.opt_actor_ = nn::Optimizer::from_json(o.at("actor"));
    a.opt_r_ = nn::Optimizer::from_json(o.at("critic_r"));
    a.opt_c_ = nn::Optimizer::from_json(o.at("critic_c"));
    const auto &d = j.at("dual");
    a.dual_ = DualState{d.at("lambda").get<double>(), d.at("lr").get<double>(),
                        d.at("budget").get<double>()};
    return a;
}

namespace {

struct EpisodeAccumulator {
    double latency_sum = 0.0;
    double reward_sum = 0.0;
    int allocated = 0;
    int denied = 0;
    int slots = 0;
    TrainStats train_sum;
    int train_steps = 0;

    void add(const StepOutcome &o) {
        ++slots;
        reward_sum += o.reward;
        if (o.cost) {
            ++denied;
        } else {
            ++allocated;
            latency_sum += -o.reward;
        }
    }

    void add(const TrainStats &s) {
        train_sum.loss_r += s.loss_r;
        train_sum.loss_c += s.loss_c;
        train_sum.actor_obj += s.actor_obj;
        ++train_steps;
    }

    EpisodeRecord finish(int episode, double dual) const {
        EpisodeRecord r;
        r.episode = episode;
        r.mean_latency_norm = allocated > 0 ? latency_sum / allocated
                                            : std::numeric_limits<double>::quiet_NaN();
        r.dos_rate = slots > 0 ? static_cast<double>(denied) / slots : 0.0;
        r.mean_cost = r.dos_rate;
        r.mean_reward = slots > 0 ? reward_sum / slots : 0.0;
        r.dual = dual;
        if (train_steps > 0) {
            r.critic_loss_r = train_sum.loss_r / train_steps;
            r.critic_loss_c = train_sum.loss_c / train_steps;
            r.actor_obj = train_sum.actor_obj / train_steps;
        }
        return r;
    }
};

// Per-slot malicious-miner bookkeeping for the attack scenario.
class MinerDraw {
public:
    MinerDraw(const std::optional<AttackScenario> &attacks, std::uint64_t seed)
        : attacks_(attacks), feedback_rng_(make_rng(seed, Stream::Feedback)),
          miner_rng_(make_rng(seed, Stream::Miner)) {}

    // Every episode starts from a fresh network with all reputations at their
    // initial value; the random streams carry on.
    void reset() {
        if (attacks_)
            system_.emplace(attacks_->reputation, attacks_->profiles);
    }

    // True when this slot's miner denies service regardless of the policy.
    bool forced_denial(std::int64_t slot) {
        if (!system_)
            return false;
        const int miner = assign_miner(system_->committee(), miner_rng_);
        return system_->observe_miner(slot, miner, feedback_rng_);
    }

private:
    const std::optional<AttackScenario> &attacks_;
    Rng feedback_rng_;
    Rng miner_rng_;
    std::optional<ReputationSystem> system_;
};

} // namespace

TrainingLog train(const EnvFactory &make_env, const AgentParams &params, Mode mode,
                  std::uint64_t seed, const std::optional<AttackScenario> &attacks) {
    params.validate();
    SliceEnv env = make_env(seed);
    PdDdpgAgent agent(params, mode, seed);
    MinerDraw miners(attacks, seed);

    const double total_slots =
        static_cast<double>(params.episodes) * static_cast<double>(params.slots_per_episode);
    std::int64_t step = 0;

    TrainingLog log;
    for (int ep = 0; ep < params.episodes; ++ep) {
        env.reset();
        agent.noise().reset();
        miners.reset();
        EpisodeAccumulator acc;
        for (int k = 0; k < params.slots_per_episode; ++k, ++step) {
            const double progress = total_slots > 0 ? static_cast<double>(step) / total_slots : 0.0;
            agent.noise().set_sigma(params.ou_sigma +
                                    (params.ou_sigma_final - params.ou_sigma) * std::min(1.0, progress));

            const ReducedState s = env.observe();
            ActionChoice choice = agent.act(s, env.available(), env.params().min_alloc,
                                            env.params().capacity, true);
            if (miners.forced_denial(env.slot()))
                choice.rate = 0.0;

            const StepOutcome out = env.step(choice.rate);
            acc.add(out);
            agent.remember(Transition{s, choice.u, out.reward, out.cost, out.next_state});
            if (agent.ready())
                acc.add(agent.train_step());
        }
        log.episodes.push_back(acc.finish(ep, agent.dual().lambda));
    }
    log.checkpoint = agent.checkpoint();
    return log;
}

std::vector<EpisodeRecord> evaluate(const EnvFactory &make_env, const PdDdpgAgent &agent,
                                    int episodes, int slots_per_episode, std::uint64_t seed,
                                    const std::optional<AttackScenario> &attacks) {
    SliceEnv env = make_env(seed);
    MinerDraw miners(attacks, seed);
    std::vector<EpisodeRecord> records;
    for (int ep = 0; ep < episodes; ++ep) {
        env.reset();
        miners.reset();
        EpisodeAccumulator acc;
        for (int k = 0; k < slots_per_episode; ++k) {
            const ReducedState s = env.observe();
            double rate = map_action(agent.greedy(s), env.available(), env.params().min_alloc,
                                     env.params().capacity);
            if (miners.forced_denial(env.slot()))
                rate = 0.0;
            acc.add(env.step(rate));
        }
        records.push_back(acc.finish(ep, agent.dual().lambda));
    }
    return records;
}

} // namespace slicing
