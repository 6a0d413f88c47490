#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pinning/disorder.hpp"
#include "pinning/logspace.hpp"
#include "pinning/renewal.hpp"
#include "pinning/rng.hpp"

namespace pinning {

struct PolymerParams {
    double beta = 0.0;
    double h = 0.0;
};

enum class Boundary { Free, Constrained };

struct DpBudget {
    std::uint64_t max_ops = std::uint64_t{1} << 36;          // inner-loop terms
    std::uint64_t max_count_cells = std::uint64_t{1} << 21;  // n * (count buckets) with a count axis
};

struct TableOptions {
    // Contacts in [1, m] resolved exactly for 0..count_cap, with one overflow
    // bucket for count_cap + 1 and above. Negative: no count axis.
    int count_cap = -1;
    // Complete gaps must be < gap_cap.
    int gap_cap = kUnbounded;
    // Track whether some complete gap is >= long_gap.
    int long_gap = kUnbounded;
    // Sites where contacts are disallowed (size n + 1 or empty). Site 0 is always a contact.
    std::vector<char> forbidden;
    DpBudget budget;
};

/// Log constrained partition functions log Z^c_m, m = 0..n, for one
/// (environment, params, kernel), optionally resolved by contact count and
/// long-gap flag. Immutable after construction.
class PartitionTable {
public:
    int n() const { return n_; }
    const PolymerParams& params() const { return params_; }
    const RenewalKernel& kernel() const { return *kernel_; }
    const TableOptions& options() const { return options_; }

    bool has_count_axis() const { return options_.count_cap >= 0; }
    bool tracks_long_gap() const { return options_.long_gap != kUnbounded; }
    int count_buckets() const { return count_buckets_; }

    // Aggregated over count buckets and flags.
    std::span<const double> log_zc() const { return log_zc_; }
    double log_zc(int m) const { return log_zc_.at(static_cast<std::size_t>(m)); }
    // Entry for `bucket` contacts in [1, m] and long-gap flag.
    double log_zc(int m, int bucket, bool long_gap_seen = false) const;
    // beta * omega_m + h
    std::span<const double> site_log_weights() const { return site_; }

private:
    friend PartitionTable build_partition_table(const Environment&, const PolymerParams&,
                                                const RenewalKernel&, int, TableOptions);
    int n_ = 0;
    PolymerParams params_;
    const RenewalKernel* kernel_ = nullptr;
    TableOptions options_;
    int count_buckets_ = 1;
    int flag_states_ = 1;
    std::vector<double> site_;
    std::vector<double> states_;  // [(flag * buckets + bucket) * (n + 1) + m]
    std::vector<double> log_zc_;
};

/// logZc[m] = (beta omega_m + h) + logsumexp_j (logZc[j] + log K(m - j)),
/// logZc[0] = beta omega_0 + h. Throws BudgetExceeded past the budget.
PartitionTable build_partition_table(const Environment& env, const PolymerParams& params,
                                     const RenewalKernel& kernel, int n, TableOptions options = {});

// log Z_n = logsumexp_m (logZc[m] + log K^+(n - m)), for any n <= table.n().
double free_log_partition(const PartitionTable& table, int n);
double free_log_partition(const PartitionTable& table);

double log_partition(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                     int n, Boundary boundary);

/// Intersection of trajectory restrictions on [0, n]; `complement` flips the whole set.
struct EventSpec {
    std::optional<int> max_contacts;        // |tau cap [0,n]| <= N
    std::optional<int> more_contacts_than;  // |tau cap [0,n]| > N
    std::optional<int> gap_below;           // every complete gap < G
    std::optional<int> long_gap;            // some complete gap >= G
    std::optional<int> last_after;          // tau_last > L
    std::optional<int> last_at_most;        // tau_last <= U
    std::optional<int> hat_at_most;         // last contact in [0, n/2] is <= H
    std::optional<int> check_at_least;      // first contact in [n/2, n] is >= C (vacuous if none)
    bool complement = false;

    bool trivial() const;
    int restriction_count() const;

    // E_{n,N}: more than N contacts in [0, n].
    static EventSpec many_contacts(int N);
    // A'_{b,n}: some complete gap of length >= bn.
    static EventSpec long_internal_gap(int n, double b);
    // A''_{b,n}: tau_last <= n - bn.
    static EventSpec early_last_contact(int n, double b);
    static EventSpec last_contact_after(int N);
    // E^c_{n, C1 log n} cap A^c_{b,n}.
    static EventSpec few_contacts_no_long_gap(int n, double c1, double b);
    // {hat tau_last > N} union {check tau_last < n - M}.
    static EventSpec midpoint_escape(int n, int N, int M);
};

// Integer parts: lengths that must reach a real bound use ceil, counts that
// must not exceed one use floor.
int gap_length_bound(int n, double b);     // ceil(b n)
int contact_count_bound(int n, double c);  // floor(c log n)

struct EventValue {
    double log_value = kNegInf;
    bool cancellation = false;  // a subtraction was needed and lost more than six digits
};

EventValue event_log_partition(const Environment& env, const PolymerParams& params,
                               const RenewalKernel& kernel, int n, const EventSpec& event,
                               Boundary boundary, const DpBudget& budget = {});

struct EventProbability {
    double value = 0.0;
    bool cancellation = false;
};

EventProbability gibbs_probability(const Environment& env, const PolymerParams& params,
                                   const RenewalKernel& kernel, int n, const EventSpec& event,
                                   Boundary boundary, const DpBudget& budget = {});

/// sum_{i in tau} (beta omega_i + h) + sum log K(gaps), plus log K^+(n - tau_last)
/// for the free boundary. -inf when a gap has zero kernel mass.
double trajectory_log_weight(const RenewalTrajectory& traj, const Environment& env,
                             const PolymerParams& params, const RenewalKernel& kernel,
                             Boundary boundary);

struct PathSample {
    RenewalTrajectory trajectory;
    double log_weight = 0.0;
};

/// Exact sampler from the polymer measure by backward decomposition over the
/// last renewal. Built once per table; reusable across draws.
class PathSampler {
public:
    PathSampler(const PartitionTable& table, Boundary boundary);
    PathSample sample(CounterRng& rng) const;

private:
    int pick(std::span<const double> log_weights, CounterRng& rng) const;
    const PartitionTable* table_;
    Boundary boundary_;
};

PathSample sample_path(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                       int n, Boundary boundary, CounterRng& rng);

struct SeriesResult {
    std::vector<double> log_terms;     // log of each summand
    std::vector<double> log_partials;  // log of running sums
};

// Partial sums of sum_{m=0}^{n_max} Z^c_m.
SeriesResult constrained_series(const Environment& env, const PolymerParams& params,
                                const RenewalKernel& kernel, int n_max);

// Partial sums of sum_{m=anchor-depth}^{anchor} Z^c_{[m, anchor]}, by a
// backward DP; the window is widened leftward as needed.
SeriesResult reversed_series(const Environment& env, const PolymerParams& params,
                             const RenewalKernel& kernel, std::int64_t anchor, int depth,
                             const DpBudget& budget = {});

/// Backward partitions from each site to n (site weight included):
/// free boundary ends with log K^+(n - last), constrained pins n.
std::vector<double> backward_log_partition(const PartitionTable& table, Boundary boundary);

struct ContactStatistics {
    double log_partition = 0.0;
    double expected_contacts = 0.0;           // E |tau cap [0, n]|
    double expected_disorder_overlap = 0.0;   // E sum omega_i delta_i
    std::vector<double> occupation;           // P(i in tau)
    std::vector<double> count_distribution;   // P(|tau cap [0,n]| = k), k = 0..n+1; empty unless requested
    std::vector<double> last_distribution;    // P(tau_last = m)
    std::vector<double> hat_distribution;     // P(hat tau_last = j), j = 0..floor(n/2)
    std::vector<double> check_distribution;   // P(check tau_last = l), l = 0..n (zero below ceil(n/2))
    double check_absent = 0.0;                // free boundary: no contact in [n/2, n]
};

ContactStatistics contact_statistics(const Environment& env, const PolymerParams& params,
                                     const RenewalKernel& kernel, int n, Boundary boundary,
                                     bool with_count_distribution = false, const DpBudget& budget = {});

}  // namespace pinning
