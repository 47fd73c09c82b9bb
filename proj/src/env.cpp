#include "slicing/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slicing/error.hpp"

namespace slicing {

namespace {

void require(bool ok, const char *key, const std::string &what) {
    if (!ok)
        throw ConfigError(std::string(key) + ": " + what);
}

} // namespace

void EnvParams::validate() const {
    require(std::isfinite(capacity) && capacity > 0, "capacity", "must be positive");
    require(std::isfinite(min_alloc) && min_alloc > 0, "min_alloc", "must be positive");
    require(min_alloc <= capacity, "min_alloc", "must not exceed capacity");
    require(std::isfinite(arrival_rate) && arrival_rate > 0, "arrival_rate", "must be positive");
    require(arrival_cap_factor >= 1.0, "arrival_cap_factor", "must be >= 1");
    require(size_min > 0, "size_min", "must be positive");
    require(size_max >= size_min, "size_max", "must be >= size_min");
    require(kappa_sp > 0, "kappa_sp", "must be positive");
    require(kappa_bc >= 0, "kappa_bc", "must be nonnegative");
    require(header_bytes >= 0, "header_bytes", "must be nonnegative");
    require(per_request_bytes >= 0, "per_request_bytes", "must be nonnegative");
    require(link_rate > 0, "link_rate", "must be positive");
}

int EnvParams::arrival_cap() const {
    return static_cast<int>(std::ceil(arrival_cap_factor * arrival_rate));
}

double EnvParams::max_demand() const {
    const double cap = arrival_cap();
    double sp = kappa_sp * cap * size_max;
    if (demand_scaled_by_count)
        sp *= cap;
    return sp + kappa_bc * (header_bytes + per_request_bytes * cap);
}

double EnvParams::max_latency() const { return max_demand() / min_alloc; }

int EnvParams::horizon() const { return static_cast<int>(std::ceil(max_latency())); }

double service_demand(const RequestBatch &batch, double kappa_sp, bool scaled_by_count) {
    const double bytes = std::accumulate(batch.sizes.begin(), batch.sizes.end(), 0.0);
    double cycles = kappa_sp * bytes;
    if (scaled_by_count)
        cycles *= batch.count;
    return cycles;
}

double blockchain_demand(int count, double kappa_bc, double header_bytes,
                         double per_request_bytes) {
    return kappa_bc * (header_bytes + per_request_bytes * count);
}

RequestBatch sample_arrivals(Rng &rng, const EnvParams &params, std::int64_t slot) {
    params.validate();
    std::poisson_distribution<int> count_dist(params.arrival_rate);
    std::uniform_real_distribution<double> size_dist(params.size_min, params.size_max);

    RequestBatch batch;
    batch.slot = slot;
    batch.count = std::min(count_dist(rng), params.arrival_cap());
    batch.sizes.resize(static_cast<std::size_t>(batch.count));
    for (auto &s : batch.sizes)
        s = size_dist(rng);
    batch.cpu_demand_sp = service_demand(batch, params.kappa_sp, params.demand_scaled_by_count);
    batch.cpu_demand_bc = blockchain_demand(batch.count, params.kappa_bc, params.header_bytes,
                                            params.per_request_bytes);
    return batch;
}

double processing_latency(double demand, double rate) {
    if (!(rate > 0))
        throw ContractError("processing_latency: rate must be positive (denied slots have no latency)");
    return demand / rate;
}

ResourceLease ResourceLease::allocate(std::int64_t slot, double rate, double latency) {
    ResourceLease lease;
    lease.alloc_slot = slot;
    if (rate > 0) {
        lease.rate = rate;
        lease.total_latency_slots = static_cast<int>(std::ceil(latency));
    }
    lease.advance_to(slot);
    return lease;
}

void ResourceLease::advance_to(std::int64_t now) {
    const std::int64_t age = now - alloc_slot;
    const std::int64_t left = static_cast<std::int64_t>(total_latency_slots) - age;
    remaining_slots = static_cast<int>(std::max<std::int64_t>(0, left));
    held_rate = remaining_slots > 0 ? rate : 0.0;
}

LeaseQueue::LeaseQueue(double capacity, double min_alloc, int horizon, std::int64_t start_slot)
    : capacity_(capacity), min_alloc_(min_alloc), horizon_(horizon), now_(start_slot) {
    if (!(capacity > 0) || !(min_alloc > 0) || horizon < 0)
        throw ContractError("LeaseQueue: capacity and min_alloc must be positive, horizon >= 0");
}

void LeaseQueue::push(const ResourceLease &lease) {
    if (lease.alloc_slot != now_)
        throw ContractError("LeaseQueue::push: lease must be allocated in the current slot");
    if (lease.total_latency_slots > horizon_)
        throw ContractError("LeaseQueue::push: lease outlives the queue horizon");
    if (lease.held_rate > available())
        throw ContractError("LeaseQueue::push: lease exceeds available capacity");
    if (lease.active())
        leases_.push_back(lease);
}

void LeaseQueue::tick(std::int64_t now) {
    if (now != now_ + 1) {
        std::ostringstream os;
        os << "LeaseQueue::tick: expected slot " << now_ + 1 << ", got " << now;
        throw ContractError(os.str());
    }
    now_ = now;
    for (auto &lease : leases_)
        lease.advance_to(now_);
    std::erase_if(leases_, [&](const ResourceLease &l) {
        return !l.active() || now_ - l.alloc_slot > horizon_;
    });
}

double LeaseQueue::held_total() const {
    double total = 0.0;
    for (const auto &lease : leases_)
        total += lease.held_rate;
    return total;
}

double LeaseQueue::available() const {
    return std::clamp(capacity_ - held_total(), 0.0, capacity_);
}

bool LeaseQueue::empty() const { return leases_.empty(); }

std::vector<std::pair<int, double>> LeaseQueue::full_state() const {
    std::vector<std::pair<int, double>> out(static_cast<std::size_t>(horizon_) + 1, {0, 0.0});
    const std::int64_t first = now_ - horizon_;
    for (const auto &lease : leases_) {
        if (lease.alloc_slot < first)
            continue;
        out[static_cast<std::size_t>(lease.alloc_slot - first)] = {lease.remaining_slots,
                                                                   lease.held_rate};
    }
    return out;
}

ReducedState reduced_state(const LeaseQueue &queue, double max_latency, bool backlog_unweighted) {
    if (!(max_latency > 0))
        throw ContractError("reduced_state: max_latency must be positive");
    double work = 0.0;
    for (const auto &lease : queue.leases())
        work += backlog_unweighted ? lease.remaining_slots
                                   : lease.remaining_slots * lease.held_rate;
    ReducedState s;
    s.avail_frac = queue.available() / queue.capacity();
    s.backlog_frac = std::clamp(work / queue.capacity() / max_latency, 0.0, 1.0);
    return s;
}

double backlog_from_full_state(const std::vector<std::pair<int, double>> &full, double capacity,
                               double max_latency, bool backlog_unweighted) {
    double work = 0.0;
    for (const auto &[remaining, held] : full)
        work += backlog_unweighted ? remaining : remaining * held;
    return std::clamp(work / capacity / max_latency, 0.0, 1.0);
}

StepOutcome env_step(LeaseQueue &queue, const RequestBatch &batch, double action_rate,
                     double max_latency, bool backlog_unweighted) {
    const double avail = queue.available();
    if (action_rate < 0 || (action_rate > 0 && action_rate < queue.min_alloc()) ||
        action_rate > avail) {
        std::ostringstream os;
        os << "env_step: action rate " << action_rate << " outside {0} U [" << queue.min_alloc()
           << ", " << avail << "]";
        throw ContractError(os.str());
    }

    StepOutcome out;
    out.rate = action_rate;
    if (action_rate == 0.0) {
        out.cost = 1;
    } else {
        out.latency_slots = processing_latency(batch.total_demand(), action_rate);
        out.reward = -out.latency_slots / max_latency;
        queue.push(ResourceLease::allocate(queue.now(), action_rate, out.latency_slots));
    }
    queue.tick(queue.now() + 1);
    out.next_state = reduced_state(queue, max_latency, backlog_unweighted);
    return out;
}

SliceEnv::SliceEnv(EnvParams params, std::uint64_t seed)
    : params_(std::move(params)),
      rng_(make_rng(seed, Stream::Arrivals)),
      max_latency_(params_.max_latency()),
      queue_(params_.capacity, params_.min_alloc, params_.horizon()) {
    params_.validate();
    sampler_ = [p = params_](Rng &rng, std::int64_t slot) { return sample_arrivals(rng, p, slot); };
}

SliceEnv::SliceEnv(EnvParams params, std::uint64_t seed, ArrivalSampler sampler,
                   double max_latency)
    : params_(std::move(params)),
      rng_(make_rng(seed, Stream::Arrivals)),
      sampler_(std::move(sampler)),
      max_latency_(max_latency),
      queue_(params_.capacity, params_.min_alloc, static_cast<int>(std::ceil(max_latency))) {
    params_.validate();
}

void SliceEnv::reset() {
    queue_ = LeaseQueue(params_.capacity, params_.min_alloc, queue_.horizon(), queue_.now());
}

ReducedState SliceEnv::observe() const {
    return reduced_state(queue_, max_latency_, params_.backlog_unweighted);
}

StepOutcome SliceEnv::step(double rate) {
    last_batch_ = sampler_(rng_, queue_.now());
    return env_step(queue_, last_batch_, rate, max_latency_, params_.backlog_unweighted);
}

} // namespace slicing
