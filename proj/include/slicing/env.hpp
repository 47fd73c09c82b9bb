#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "slicing/rng.hpp"

namespace slicing {

// Physical and workload parameters of the serving base station.
// Rates are CPU cycles per slot, sizes are bytes, coefficients cycles/byte.
struct EnvParams {
    double capacity = 1.6e9;
    double min_alloc = 0.01e9;
    double arrival_rate = 1000.0;
    // Poisson counts are truncated at ceil(arrival_cap_factor * arrival_rate).
    double arrival_cap_factor = 2.0;
    double size_min = 1000.0;
    double size_max = 10000.0;
    double kappa_sp = 330.0;
    double kappa_bc = 330.0;
    double header_bytes = 500.0;
    double per_request_bytes = 50.0;
    // Multiply the service demand by the request count once more, as the
    // printed demand formula does. Off by default.
    bool demand_scaled_by_count = false;
    // Backlog feature sums bare remaining latencies instead of weighting
    // each one by its held rate. Off by default.
    bool backlog_unweighted = false;
    // Inter-BS link rate in bit/s. Recorded for completeness, no model uses it.
    double link_rate = 10e9;

    void validate() const;

    int arrival_cap() const;
    // Largest per-slot CPU demand reachable under truncation.
    double max_demand() const;
    // Largest processing latency in slots: max_demand / min_alloc.
    double max_latency() const;
    // Integer lease horizon, ceil(max_latency).
    int horizon() const;
};

struct RequestBatch {
    std::int64_t slot = 0;
    int count = 0;
    std::vector<double> sizes;
    double cpu_demand_sp = 0.0;
    double cpu_demand_bc = 0.0;

    double total_demand() const { return cpu_demand_sp + cpu_demand_bc; }
};

double service_demand(const RequestBatch &batch, double kappa_sp, bool scaled_by_count);
double blockchain_demand(int count, double kappa_bc, double header_bytes,
                         double per_request_bytes);

// Draws one slot of arrivals and fills in both CPU demand terms.
RequestBatch sample_arrivals(Rng &rng, const EnvParams &params, std::int64_t slot);

// Slots needed to process `demand` cycles at `rate` cycles/slot.
// Throws ContractError for a non-positive rate.
double processing_latency(double demand, double rate);

// One past allocation and the capacity it still holds.
struct ResourceLease {
    std::int64_t alloc_slot = 0;
    double rate = 0.0;
    int total_latency_slots = 0;
    int remaining_slots = 0;
    double held_rate = 0.0;

    // Lease for an allocation made at `slot` with unquantized latency
    // `latency`. A zero rate yields an empty lease.
    static ResourceLease allocate(std::int64_t slot, double rate, double latency);

    // Recomputes remaining/held for the current slot `now` >= alloc_slot.
    void advance_to(std::int64_t now);

    bool active() const { return remaining_slots > 0; }
};

// Window of leases allocated during the last `horizon` slots.
class LeaseQueue {
public:
    LeaseQueue(double capacity, double min_alloc, int horizon, std::int64_t start_slot = 0);

    double capacity() const { return capacity_; }
    double min_alloc() const { return min_alloc_; }
    int horizon() const { return horizon_; }
    std::int64_t now() const { return now_; }

    const std::deque<ResourceLease> &leases() const { return leases_; }

    // Adds a lease allocated in the current slot. Throws if it would exceed
    // capacity or if alloc_slot != now().
    void push(const ResourceLease &lease);

    // Advances to `now` (must equal now() + 1). Expired leases are dropped;
    // they are indistinguishable from empty slots in the state.
    void tick(std::int64_t now);

    double held_total() const;
    double available() const;
    bool empty() const;

    // (remaining_slots, held_rate) for t' in [now - horizon, now],
    // zero where no lease is active.
    std::vector<std::pair<int, double>> full_state() const;

private:
    double capacity_;
    double min_alloc_;
    int horizon_;
    std::int64_t now_;
    std::deque<ResourceLease> leases_;
};

// Two-feature normalized observation.
struct ReducedState {
    double avail_frac = 1.0;
    double backlog_frac = 0.0;
};

ReducedState reduced_state(const LeaseQueue &queue, double max_latency,
                           bool backlog_unweighted = false);

// Backlog fraction recomputed from a full-state vector; matches
// reduced_state(...).backlog_frac.
double backlog_from_full_state(const std::vector<std::pair<int, double>> &full,
                               double capacity, double max_latency,
                               bool backlog_unweighted = false);

struct StepOutcome {
    double reward = 0.0;
    int cost = 0;
    double latency_slots = 0.0;
    double rate = 0.0;
    ReducedState next_state;
};

// Serves `batch` at `action_rate` in the queue's current slot, then advances
// the queue one slot. action_rate must be 0 or within
// [min_alloc, available()]; anything else throws ContractError.
StepOutcome env_step(LeaseQueue &queue, const RequestBatch &batch, double action_rate,
                     double max_latency, bool backlog_unweighted = false);

using ArrivalSampler = std::function<RequestBatch(Rng &, std::int64_t slot)>;

// A single serving BS: arrival stream plus lease bookkeeping.
class SliceEnv {
public:
    SliceEnv(EnvParams params, std::uint64_t seed);
    // Custom arrival process, e.g. for small test instances. `max_latency`
    // must bound every latency the sampler can produce at min_alloc.
    SliceEnv(EnvParams params, std::uint64_t seed, ArrivalSampler sampler,
             double max_latency);

    const EnvParams &params() const { return params_; }
    double max_latency() const { return max_latency_; }
    std::int64_t slot() const { return queue_.now(); }
    const LeaseQueue &queue() const { return queue_; }

    // Empties the lease queue. The slot counter and arrival stream continue.
    void reset();

    ReducedState observe() const;
    double available() const { return queue_.available(); }

    // Samples this slot's arrivals and serves them at `rate`.
    StepOutcome step(double rate);

    const RequestBatch &last_batch() const { return last_batch_; }

private:
    EnvParams params_;
    Rng rng_;
    ArrivalSampler sampler_;
    double max_latency_;
    LeaseQueue queue_;
    RequestBatch last_batch_;
};

} // namespace slicing
