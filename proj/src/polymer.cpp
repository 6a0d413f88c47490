#include "pinning/polymer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pinning/errors.hpp"
#include "pinning/logspace.hpp"

namespace pinning {

namespace {

void check_horizon(const Environment& env, const RenewalKernel& kernel, int n) {
    if (n < 0) throw std::invalid_argument("polymer length n must be nonnegative");
    if (n > kernel.horizon()) {
        std::ostringstream os;
        os << "polymer length " << n << " exceeds kernel horizon " << kernel.horizon();
        throw std::invalid_argument(os.str());
    }
    if (!env.covers(0, n)) {
        std::ostringstream os;
        os << "environment window [" << env.lo() << ", " << env.hi() << "] does not cover [0, " << n << "]";
        throw std::invalid_argument(os.str());
    }
}

// Largest log K(d) over d >= r; the kernel is decreasing on its support.
double log_kernel_peak(const RenewalKernel& kernel) { return kernel.log_mass(kernel.support_min()); }

}  // namespace

double PartitionTable::log_zc(int m, int bucket, bool long_gap_seen) const {
    if (m < 0 || m > n_) throw std::out_of_range("partition table index outside [0, n]");
    if (bucket < 0 || bucket >= count_buckets_) throw std::out_of_range("count bucket out of range");
    const int flag = long_gap_seen ? 1 : 0;
    if (flag >= flag_states_) return long_gap_seen ? kNegInf : log_zc_[static_cast<std::size_t>(m)];
    return states_[(static_cast<std::size_t>(flag) * count_buckets_ + bucket) * (n_ + 1) + m];
}

PartitionTable build_partition_table(const Environment& env, const PolymerParams& params,
                                     const RenewalKernel& kernel, int n, TableOptions options) {
    check_horizon(env, kernel, n);
    if (!options.forbidden.empty() && options.forbidden.size() != static_cast<std::size_t>(n) + 1)
        throw std::invalid_argument("forbidden-site mask must have n + 1 entries");
    if (options.count_cap > n) options.count_cap = n;
    if (options.long_gap < 1) options.long_gap = 1;
    if (options.gap_cap < 0) options.gap_cap = 0;

    PartitionTable t;
    t.n_ = n;
    t.params_ = params;
    t.kernel_ = &kernel;
    t.count_buckets_ = options.count_cap >= 0 ? options.count_cap + 2 : 1;
    t.flag_states_ = options.long_gap != kUnbounded ? 2 : 1;
    const int nstates = t.count_buckets_ * t.flag_states_;
    const std::uint64_t width = static_cast<std::uint64_t>(n) + 1;

    if (options.count_cap >= 0 && width * nstates > options.budget.max_count_cells) {
        std::ostringstream os;
        os << "count-resolved table needs " << width * nstates << " cells, budget is "
           << options.budget.max_count_cells;
        throw BudgetExceeded(os.str());
    }
    if (width * width / 2 * nstates > options.budget.max_ops) {
        std::ostringstream os;
        os << "partition DP needs ~" << width * width / 2 * nstates << " operations, budget is "
           << options.budget.max_ops;
        throw BudgetExceeded(os.str());
    }

    t.site_.resize(width);
    for (int m = 0; m <= n; ++m) t.site_[m] = params.beta * env[m] + params.h;
    t.states_.assign(width * nstates, kNegInf);
    auto row = [&](int flag, int bucket) {
        return t.states_.data() + (static_cast<std::size_t>(flag) * t.count_buckets_ + bucket) * width;
    };
    row(0, 0)[0] = t.site_[0];

    const int r = kernel.support_min();
    const auto logk = kernel.log_masses();
    const double peak = log_kernel_peak(kernel);
    const int overflow = t.count_buckets_ - 1;
    const bool counted = options.count_cap >= 0;
    const bool tracked = t.flag_states_ == 2;

    for (int m = 1; m <= n; ++m) {
        if (!options.forbidden.empty() && options.forbidden[m]) continue;
        const long long jlo = std::max<long long>(0, static_cast<long long>(m) - options.gap_cap + 1);
        const int jhi = m - r;
        if (jhi < jlo) continue;
        // j <= split means the gap m - j is long.
        const long long split = tracked ? static_cast<long long>(m) - options.long_gap : -1;
        for (int flag = 0; flag < t.flag_states_; ++flag) {
            for (int bucket = 0; bucket < t.count_buckets_; ++bucket) {
                const double* src = row(flag, bucket);
                double mx = kNegInf;
                for (long long j = jlo; j <= jhi; ++j) mx = std::max(mx, src[j]);
                if (mx == kNegInf) continue;
                const double base = mx + peak;
                double short_sum = 0.0, long_sum = 0.0;
                for (long long j = jlo; j <= jhi; ++j) {
                    const double term = std::exp(src[j] + logk[m - j] - base);
                    if (j <= split) long_sum += term; else short_sum += term;
                }
                const int target = counted ? std::min(bucket + 1, overflow) : 0;
                if (short_sum > 0.0) {
                    double& dst = row(flag, target)[m];
                    dst = log_add(dst, base + std::log(short_sum));
                }
                if (long_sum > 0.0) {
                    double& dst = row(1, target)[m];
                    dst = log_add(dst, base + std::log(long_sum));
                }
            }
        }
        for (int s = 0; s < nstates; ++s) t.states_[s * width + m] += t.site_[m];
    }

    t.log_zc_.resize(width);
    if (nstates == 1) {
        std::copy_n(t.states_.begin(), width, t.log_zc_.begin());
    } else {
        for (std::size_t m = 0; m < width; ++m) {
            LogAccumulator acc;
            for (int s = 0; s < nstates; ++s) acc.add(t.states_[s * width + m]);
            t.log_zc_[m] = acc.value();
        }
    }
    t.options_ = std::move(options);
    return t;
}

double free_log_partition(const PartitionTable& table, int n) {
    if (n < 0 || n > table.n()) throw std::out_of_range("free_log_partition: n outside the table");
    const auto zc = table.log_zc();
    const auto tails = table.kernel().log_tails();
    double mx = kNegInf;
    for (int m = 0; m <= n; ++m) mx = std::max(mx, zc[m] + tails[n - m]);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (int m = 0; m <= n; ++m) s += std::exp(zc[m] + tails[n - m] - mx);
    return mx + std::log(s);
}

double free_log_partition(const PartitionTable& table) { return free_log_partition(table, table.n()); }

double log_partition(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                     int n, Boundary boundary) {
    const auto table = build_partition_table(env, params, kernel, n);
    return boundary == Boundary::Free ? free_log_partition(table) : table.log_zc(n);
}

// ---------------------------------------------------------------------------
// Events

bool EventSpec::trivial() const { return restriction_count() == 0; }

int EventSpec::restriction_count() const {
    return int(max_contacts.has_value()) + int(more_contacts_than.has_value()) + int(gap_below.has_value()) +
           int(long_gap.has_value()) + int(last_after.has_value()) + int(last_at_most.has_value()) +
           int(hat_at_most.has_value()) + int(check_at_least.has_value());
}

int gap_length_bound(int n, double b) { return static_cast<int>(std::ceil(b * n)); }

int contact_count_bound(int n, double c) {
    if (n < 1) return 0;
    return static_cast<int>(std::floor(c * std::log(static_cast<double>(n))));
}

EventSpec EventSpec::many_contacts(int N) {
    EventSpec e;
    e.more_contacts_than = N;
    return e;
}

EventSpec EventSpec::long_internal_gap(int n, double b) {
    EventSpec e;
    e.long_gap = gap_length_bound(n, b);
    return e;
}

EventSpec EventSpec::early_last_contact(int n, double b) {
    EventSpec e;
    e.last_at_most = n - gap_length_bound(n, b);  // = floor(n - bn)
    return e;
}

EventSpec EventSpec::last_contact_after(int N) {
    EventSpec e;
    e.last_after = N;
    return e;
}

EventSpec EventSpec::few_contacts_no_long_gap(int n, double c1, double b) {
    EventSpec e;
    e.max_contacts = contact_count_bound(n, c1);
    e.gap_below = gap_length_bound(n, b);
    e.last_after = n - gap_length_bound(n, b);
    return e;
}

EventSpec EventSpec::midpoint_escape(int n, int N, int M) {
    EventSpec e;
    e.hat_at_most = N;
    e.check_at_least = n - M;
    e.complement = true;
    return e;
}

namespace {

void validate_event(const EventSpec& ev) {
    auto nonneg = [](const std::optional<int>& v, const char* name) {
        if (v && *v < 0) throw std::invalid_argument(std::string("event threshold ") + name + " must be >= 0");
    };
    nonneg(ev.max_contacts, "max_contacts");
    nonneg(ev.more_contacts_than, "more_contacts_than");
    nonneg(ev.gap_below, "gap_below");
    nonneg(ev.long_gap, "long_gap");
    nonneg(ev.last_after, "last_after");
    nonneg(ev.last_at_most, "last_at_most");
    nonneg(ev.hat_at_most, "hat_at_most");
    nonneg(ev.check_at_least, "check_at_least");
}

double restricted_log_partition(const Environment& env, const PolymerParams& params,
                                const RenewalKernel& kernel, int n, const EventSpec& ev,
                                Boundary boundary, const DpBudget& budget) {
    // Counts below refer to k = contacts in [1, n] = |tau cap [0, n]| - 1.
    const int upper = ev.max_contacts.value_or(kUnbounded);
    const int lower = ev.more_contacts_than.value_or(0);
    if (upper < 1 || lower >= n + 1) return kNegInf;
    if (n == 0 && ev.check_at_least.value_or(0) > 0) return kNegInf;  // check site is 0
    const bool bounded_above = upper <= n;
    const bool bounded_below = lower >= 1;

    TableOptions opts;
    opts.budget = budget;
    if (bounded_above || bounded_below)
        opts.count_cap = std::max(bounded_above ? upper - 1 : 0, bounded_below ? lower - 1 : 0);
    if (ev.gap_below) opts.gap_cap = *ev.gap_below;
    if (ev.long_gap) opts.long_gap = std::max(1, *ev.long_gap);
    if (ev.hat_at_most || ev.check_at_least) {
        opts.forbidden.assign(static_cast<std::size_t>(n) + 1, 0);
        if (ev.hat_at_most)
            for (int i = *ev.hat_at_most + 1; i <= n / 2; ++i) opts.forbidden[i] = 1;
        if (ev.check_at_least)
            for (int i = (n + 1) / 2; i < std::min(*ev.check_at_least, n + 1); ++i) opts.forbidden[i] = 1;
        opts.forbidden[0] = 0;
    }
    const bool need_long = ev.long_gap.has_value();
    const auto table = build_partition_table(env, params, kernel, n, std::move(opts));

    int mlo = ev.last_after ? *ev.last_after + 1 : 0;
    int mhi = ev.last_at_most ? std::min(*ev.last_at_most, n) : n;
    if (boundary == Boundary::Constrained) mlo = std::max(mlo, n);
    const auto tails = kernel.log_tails();
    const int buckets = table.count_buckets();
    const int cap = buckets - 2;  // exact buckets 0..cap, overflow cap + 1

    LogAccumulator acc;
    for (int m = mlo; m <= mhi; ++m) {
        const double tail = boundary == Boundary::Free ? tails[n - m] : 0.0;
        if (!table.has_count_axis() && !table.tracks_long_gap()) {
            acc.add(table.log_zc(m) + tail);
            continue;
        }
        for (int flag = need_long ? 1 : 0; flag <= 1; ++flag) {
            if (flag == 1 && !table.tracks_long_gap()) break;
            for (int bucket = 0; bucket < buckets; ++bucket) {
                if (table.has_count_axis()) {
                    const bool is_overflow = bucket == cap + 1;
                    if (bounded_above && (is_overflow || bucket > upper - 1)) continue;
                    if (bounded_below && !is_overflow && bucket < lower) continue;
                }
                acc.add(table.log_zc(m, bucket, flag == 1) + tail);
            }
        }
    }
    return acc.value();
}

std::optional<EventSpec> direct_complement(const EventSpec& ev) {
    if (ev.restriction_count() != 1) return std::nullopt;
    EventSpec out;
    if (ev.max_contacts) out.more_contacts_than = ev.max_contacts;
    else if (ev.more_contacts_than) out.max_contacts = ev.more_contacts_than;
    else if (ev.gap_below) out.long_gap = ev.gap_below;
    else if (ev.long_gap) out.gap_below = ev.long_gap;
    else if (ev.last_after) out.last_at_most = ev.last_after;
    else if (ev.last_at_most) out.last_after = ev.last_at_most;
    else return std::nullopt;
    return out;
}

// acc &= r, merging restrictions of the same kind
void tighten(EventSpec& acc, const EventSpec& r) {
    auto low = [](std::optional<int>& a, const std::optional<int>& b) {
        if (b) a = a ? std::min(*a, *b) : *b;
    };
    auto high = [](std::optional<int>& a, const std::optional<int>& b) {
        if (b) a = a ? std::max(*a, *b) : *b;
    };
    low(acc.max_contacts, r.max_contacts);
    high(acc.more_contacts_than, r.more_contacts_than);
    low(acc.gap_below, r.gap_below);
    high(acc.long_gap, r.long_gap);
    high(acc.last_after, r.last_after);
    low(acc.last_at_most, r.last_at_most);
    low(acc.hat_at_most, r.hat_at_most);
    high(acc.check_at_least, r.check_at_least);
}

// Contacts in [lo, hi] violate the hat/check pair; lo > hi means nothing does.
std::pair<int, int> midpoint_zone(const EventSpec& ev, int n) {
    const int half_lo = n / 2, half_hi = (n + 1) / 2;
    const bool first = ev.hat_at_most && *ev.hat_at_most + 1 <= half_lo;
    const bool second = ev.check_at_least && half_hi <= std::min(*ev.check_at_least, n + 1) - 1;
    if (!first && !second) return {1, 0};
    return {first ? *ev.hat_at_most + 1 : half_hi, second ? std::min(*ev.check_at_least, n + 1) - 1 : half_lo};
}

// Z(some contact in [lo, hi]) summed over the first such contact, no subtraction.
double zone_hit_log_partition(const Environment& env, const PolymerParams& params,
                              const RenewalKernel& kernel, int n, int lo, int hi,
                              Boundary boundary, const DpBudget& budget) {
    TableOptions opts;
    opts.budget = budget;
    const auto table = build_partition_table(env, params, kernel, n, std::move(opts));
    const auto back = backward_log_partition(table, boundary);
    const auto zc = table.log_zc();
    const auto logk = kernel.log_masses();
    const int r = kernel.support_min();
    LogAccumulator out;
    for (int i = lo; i <= hi; ++i) {
        if (i == 0) {
            out.add(back[0]);
            continue;
        }
        LogAccumulator acc;
        for (int j = 0; j < lo && j <= i - r; ++j) acc.add(zc[j] + logk[i - j]);
        out.add(acc.value() + back[i]);
    }
    return out.value();
}

}  // namespace

EventValue event_log_partition(const Environment& env, const PolymerParams& params,
                               const RenewalKernel& kernel, int n, const EventSpec& event,
                               Boundary boundary, const DpBudget& budget) {
    check_horizon(env, kernel, n);
    validate_event(event);
    if (!event.complement) return {restricted_log_partition(env, params, kernel, n, event, boundary, budget), false};
    if (event.trivial()) return {kNegInf, false};
    if (auto flipped = direct_complement(event))
        return {restricted_log_partition(env, params, kernel, n, *flipped, boundary, budget), false};

    // not(A1 and ... and Ak) = disjoint union of (A1 .. A(i-1), not Ai); every
    // flippable restriction goes first, the hat/check pair last.
    std::vector<EventSpec> singles;
    auto push = [&](auto member) {
        if (event.*member) {
            EventSpec e;
            e.*member = event.*member;
            singles.push_back(e);
        }
    };
    push(&EventSpec::max_contacts);
    push(&EventSpec::more_contacts_than);
    push(&EventSpec::gap_below);
    push(&EventSpec::long_gap);
    push(&EventSpec::last_after);
    push(&EventSpec::last_at_most);

    LogAccumulator acc;
    EventSpec prefix;
    for (const auto& one : singles) {
        EventSpec term = prefix;
        tighten(term, *direct_complement(one));
        acc.add(restricted_log_partition(env, params, kernel, n, term, boundary, budget));
        tighten(prefix, one);
    }
    bool cancellation = false;
    if (event.hat_at_most || event.check_at_least) {
        EventSpec zone_ev;
        zone_ev.hat_at_most = event.hat_at_most;
        zone_ev.check_at_least = event.check_at_least;
        const auto [lo, hi] = midpoint_zone(zone_ev, n);
        if (lo <= hi) {
            if (prefix.trivial()) {
                acc.add(zone_hit_log_partition(env, params, kernel, n, lo, hi, boundary, budget));
            } else {
                // prefix and a hit in the zone: only this piece needs a subtraction
                const double all = restricted_log_partition(env, params, kernel, n, prefix, boundary, budget);
                EventSpec avoid = prefix;
                tighten(avoid, zone_ev);
                const double part = restricted_log_partition(env, params, kernel, n, avoid, boundary, budget);
                if (all != kNegInf) {
                    cancellation = -std::expm1(part - all) < 1e-6;
                    acc.add(log_sub(all, part));
                }
            }
        }
    }
    return {acc.value(), cancellation};
}

EventProbability gibbs_probability(const Environment& env, const PolymerParams& params,
                                   const RenewalKernel& kernel, int n, const EventSpec& event,
                                   Boundary boundary, const DpBudget& budget) {
    const auto ev = event_log_partition(env, params, kernel, n, event, boundary, budget);
    const double total = restricted_log_partition(env, params, kernel, n, EventSpec{}, boundary, budget);
    const double p = ev.log_value == kNegInf ? 0.0 : std::exp(ev.log_value - total);
    return {std::clamp(p, 0.0, 1.0), ev.cancellation};
}

// ---------------------------------------------------------------------------
// Trajectories and sampling

double trajectory_log_weight(const RenewalTrajectory& traj, const Environment& env,
                             const PolymerParams& params, const RenewalKernel& kernel,
                             Boundary boundary) {
    const int n = traj.horizon;
    check_horizon(env, kernel, n);
    if (traj.epochs.empty() || traj.epochs.front() != 0)
        throw std::invalid_argument("trajectory must start at epoch 0");
    if (traj.last() > n) throw std::invalid_argument("trajectory epoch beyond horizon");
    if (boundary == Boundary::Constrained && traj.last() != n) return kNegInf;
    double w = 0.0;
    for (std::size_t i = 0; i < traj.epochs.size(); ++i) {
        const int site = traj.epochs[i];
        w += params.beta * env[site] + params.h;
        if (i > 0) {
            const int gap = site - traj.epochs[i - 1];
            if (gap <= 0) throw std::invalid_argument("trajectory epochs must increase strictly");
            w += kernel.log_mass(gap);
        }
    }
    if (boundary == Boundary::Free) w += kernel.log_tail(n - traj.last());
    return w;
}

PathSampler::PathSampler(const PartitionTable& table, Boundary boundary) : table_(&table), boundary_(boundary) {
    if (table.has_count_axis() || table.tracks_long_gap())
        throw std::invalid_argument("path sampling needs a table without count axis or gap flag");
}

int PathSampler::pick(std::span<const double> log_weights, CounterRng& rng) const {
    double mx = kNegInf;
    for (double w : log_weights) mx = std::max(mx, w);
    if (mx == kNegInf) throw std::logic_error("path sampler reached a state with zero weight");
    std::vector<double> cumulative(log_weights.size());
    double s = 0.0;
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
        s += std::exp(log_weights[i] - mx);
        cumulative[i] = s;
    }
    const double target = rng.uniform() * s;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    auto idx = static_cast<int>(it - cumulative.begin());
    if (idx >= static_cast<int>(cumulative.size())) idx = static_cast<int>(cumulative.size()) - 1;
    // never land on a zero-weight entry
    while (log_weights[idx] == kNegInf) --idx;
    return idx;
}

PathSample PathSampler::sample(CounterRng& rng) const {
    const auto& t = *table_;
    const int n = t.n();
    const auto zc = t.log_zc();
    const auto logk = t.kernel().log_masses();
    const auto tails = t.kernel().log_tails();
    const auto site = t.site_log_weights();
    const int r = t.kernel().support_min();
    const int gap_cap = t.options().gap_cap;

    PathSample out;
    std::vector<int> reversed;
    std::vector<double> weights;
    int m = n;
    if (boundary_ == Boundary::Free) {
        weights.resize(static_cast<std::size_t>(n) + 1);
        for (int j = 0; j <= n; ++j) weights[j] = zc[j] + tails[n - j];
        m = pick(weights, rng);
        out.log_weight = tails[n - m];
    } else {
        if (zc[n] == kNegInf) throw std::logic_error("constrained partition function vanishes");
    }
    reversed.push_back(m);
    out.log_weight += site[m];
    while (m > 0) {
        const int jlo = static_cast<int>(std::max<long long>(0, static_cast<long long>(m) - gap_cap + 1));
        const int jhi = m - r;
        weights.assign(static_cast<std::size_t>(jhi - jlo + 1), kNegInf);
        for (int j = jlo; j <= jhi; ++j) weights[j - jlo] = zc[j] + logk[m - j];
        const int j = jlo + pick(weights, rng);
        out.log_weight += logk[m - j] + site[j];
        m = j;
        reversed.push_back(m);
    }
    out.trajectory.horizon = n;
    out.trajectory.epochs.assign(reversed.rbegin(), reversed.rend());
    return out;
}

PathSample sample_path(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                       int n, Boundary boundary, CounterRng& rng) {
    const auto table = build_partition_table(env, params, kernel, n);
    return PathSampler(table, boundary).sample(rng);
}

// ---------------------------------------------------------------------------
// Series

SeriesResult constrained_series(const Environment& env, const PolymerParams& params,
                                const RenewalKernel& kernel, int n_max) {
    const auto table = build_partition_table(env, params, kernel, n_max);
    SeriesResult out;
    out.log_terms.assign(table.log_zc().begin(), table.log_zc().end());
    out.log_partials.resize(out.log_terms.size());
    double running = kNegInf;
    for (std::size_t i = 0; i < out.log_terms.size(); ++i) {
        running = log_add(running, out.log_terms[i]);
        out.log_partials[i] = running;
    }
    return out;
}

SeriesResult reversed_series(const Environment& env, const PolymerParams& params,
                             const RenewalKernel& kernel, std::int64_t anchor, int depth,
                             const DpBudget& budget) {
    if (depth < 0) throw std::invalid_argument("reversed_series: depth must be nonnegative");
    if (depth > kernel.horizon()) throw std::invalid_argument("reversed_series: depth exceeds kernel horizon");
    const auto width = static_cast<std::uint64_t>(depth) + 1;
    if (width * width / 2 > budget.max_ops) throw BudgetExceeded("reversed_series: depth budget exceeded");
    const Environment* source = &env;
    Environment widened = env;
    if (!env.covers(anchor - depth, anchor)) {
        widened = env.extended(anchor - depth, anchor);
        source = &widened;
    }

    // back[i] = log Z^c_{[anchor - i, anchor]}
    std::vector<double> back(width, kNegInf);
    auto site = [&](int i) { return params.beta * (*source)[anchor - i] + params.h; };
    const auto logk = kernel.log_masses();
    const double peak = log_kernel_peak(kernel);
    const int r = kernel.support_min();
    back[0] = site(0);
    for (int i = 1; i <= depth; ++i) {
        // the next renewal to the right of anchor - i sits at anchor - j, j < i
        const int jhi = i - r;
        if (jhi < 0) continue;
        double mx = kNegInf;
        for (int j = 0; j <= jhi; ++j) mx = std::max(mx, back[j]);
        const double base = mx + peak;
        double s = 0.0;
        for (int j = 0; j <= jhi; ++j) s += std::exp(back[j] + logk[i - j] - base);
        back[i] = site(i) + base + std::log(s);
    }
    SeriesResult out;
    out.log_terms = back;
    out.log_partials.resize(width);
    double running = kNegInf;
    for (std::size_t i = 0; i < width; ++i) {
        running = log_add(running, back[i]);
        out.log_partials[i] = running;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

std::vector<double> backward_log_partition(const PartitionTable& table, Boundary boundary) {
    const auto& o = table.options();
    if (table.has_count_axis() || table.tracks_long_gap() || o.gap_cap != kUnbounded || !o.forbidden.empty())
        throw std::invalid_argument("backward_log_partition needs an unrestricted table");
    const int n = table.n();
    const auto& kernel = table.kernel();
    const auto logk = kernel.log_masses();
    const auto tails = kernel.log_tails();
    const auto site = table.site_log_weights();
    const double peak = log_kernel_peak(kernel);
    const int r = kernel.support_min();

    std::vector<double> back(static_cast<std::size_t>(n) + 1, kNegInf);
    back[n] = site[n];
    for (int i = n - 1; i >= 0; --i) {
        double acc = boundary == Boundary::Free ? tails[n - i] : kNegInf;
        if (i + r <= n) {
            double mx = kNegInf;
            for (int j = i + r; j <= n; ++j) mx = std::max(mx, back[j]);
            if (mx != kNegInf) {
                const double base = mx + peak;
                double s = 0.0;
                for (int j = i + r; j <= n; ++j) s += std::exp(back[j] + logk[j - i] - base);
                acc = log_add(acc, base + std::log(s));
            }
        }
        back[i] = site[i] + acc;
    }
    return back;
}

ContactStatistics contact_statistics(const Environment& env, const PolymerParams& params,
                                     const RenewalKernel& kernel, int n, Boundary boundary,
                                     bool with_count_distribution, const DpBudget& budget) {
    TableOptions opts;
    opts.budget = budget;
    const auto table = build_partition_table(env, params, kernel, n, opts);
    const auto fwd = table.log_zc();
    const auto back = backward_log_partition(table, boundary);
    const auto site = table.site_log_weights();
    const auto logk = kernel.log_masses();
    const auto tails = kernel.log_tails();
    const int r = kernel.support_min();
    const bool free = boundary == Boundary::Free;

    ContactStatistics st;
    st.log_partition = free ? free_log_partition(table) : fwd[n];
    const double lz = st.log_partition;

    st.occupation.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const double p = std::exp(fwd[i] + back[i] - site[i] - lz);
        st.occupation[i] = p;
        st.expected_contacts += p;
        st.expected_disorder_overlap += env[i] * p;
    }

    st.last_distribution.assign(static_cast<std::size_t>(n) + 1, 0.0);
    if (free) {
        for (int m = 0; m <= n; ++m) st.last_distribution[m] = std::exp(fwd[m] + tails[n - m] - lz);
    } else {
        st.last_distribution[n] = 1.0;
    }

    const int half_lo = n / 2;        // hat ranges over [0, floor(n/2)]
    const int half_hi = (n + 1) / 2;  // check ranges over [ceil(n/2), n]
    st.hat_distribution.assign(static_cast<std::size_t>(half_lo) + 1, 0.0);
    for (int j = 0; j <= half_lo; ++j) {
        LogAccumulator acc;
        if (free) acc.add(tails[n - j]);
        for (int l = std::max(half_lo + 1, j + r); l <= n; ++l) acc.add(logk[l - j] + back[l]);
        st.hat_distribution[j] = std::exp(fwd[j] + acc.value() - lz);
    }
    st.check_distribution.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (int l = half_hi; l <= n; ++l) {
        LogAccumulator acc;
        if (l == 0) acc.add(0.0);  // n == 0: the origin is its own check contact
        for (int j = 0; j < half_hi && j <= l - r; ++j) acc.add(fwd[j] + logk[l - j]);
        st.check_distribution[l] = std::exp(acc.value() + back[l] - lz);
    }
    if (free)
        for (int m = 0; m < half_hi; ++m) st.check_absent += std::exp(fwd[m] + tails[n - m] - lz);

    if (with_count_distribution) {
        TableOptions copts;
        copts.budget = budget;
        copts.count_cap = n;
        const auto counted = build_partition_table(env, params, kernel, n, copts);
        st.count_distribution.assign(static_cast<std::size_t>(n) + 2, 0.0);
        for (int k = 0; k <= n; ++k) {
            LogAccumulator acc;
            if (free) {
                for (int m = 0; m <= n; ++m) acc.add(counted.log_zc(m, k) + tails[n - m]);
            } else {
                acc.add(counted.log_zc(n, k));
            }
            st.count_distribution[k + 1] = std::exp(acc.value() - lz);
        }
    }
    return st;
}

}  // namespace pinning
