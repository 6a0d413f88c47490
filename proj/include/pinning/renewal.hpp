#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pinning/rng.hpp"

namespace pinning {

/// Heavy-tailed renewal law K(n) = c / n^{1+alpha} for n >= r, zero below r.
///
/// The normalizing constant c is chosen so that sum_{n>=r} K(n) = 1 (recurrent
/// renewal). Mass and tail tables cover 0..horizon; beyond the horizon the
/// closed form is available through mass_unbounded().
class RenewalKernel {
public:
    // Width the normalization bracket must reach before c is accepted.
    static constexpr double kBracketTolerance = 1e-13;

    RenewalKernel(double alpha, int support_min, int horizon);

    double alpha() const { return alpha_; }
    int support_min() const { return support_min_; }
    int horizon() const { return horizon_; }
    // The constant value of the slowly varying factor.
    double constant() const { return constant_; }
    // Certified width of the bracket on sum_{n>=r} n^{-(1+alpha)}.
    double normalization_bracket() const { return bracket_width_; }

    double mass(int n) const;
    double tail(int l) const;
    double log_mass(int n) const;
    double log_tail(int l) const;

    // Closed form for any n >= 1 (no table bound).
    double mass_unbounded(std::int64_t n) const;

    std::span<const double> masses() const { return mass_; }
    std::span<const double> tails() const { return tail_; }
    std::span<const double> log_masses() const { return log_mass_; }
    std::span<const double> log_tails() const { return log_tail_; }

private:
    double alpha_;
    int support_min_;
    int horizon_;
    double constant_ = 0.0;
    double bracket_width_ = 0.0;
    std::vector<double> mass_;
    std::vector<double> tail_;
    std::vector<double> log_mass_;
    std::vector<double> log_tail_;
};

/// Renewal points 0 = tau_0 < tau_1 < ... inside [0, horizon].
struct RenewalTrajectory {
    std::vector<int> epochs{0};
    int horizon = 0;

    int last() const { return epochs.back(); }
    int contacts() const { return static_cast<int>(epochs.size()); }
    bool contains(int i) const;
    // Throws std::invalid_argument unless epochs start at 0, increase strictly,
    // stay in [0, horizon] and every gap has positive kernel mass.
    void validate(const RenewalKernel& kernel) const;
};

// Free renewal on [0, n]: gaps drawn by inverse CDF on the tail table until
// the horizon is overshot; the overshooting gap is dropped.
RenewalTrajectory sample_free_renewal(const RenewalKernel& kernel, int n, CounterRng& rng);

inline constexpr int kUnbounded = std::numeric_limits<int>::max();

struct FreeEventQuery {
    int max_contacts = kUnbounded;             // |tau cap [0,n]| <= max_contacts
    int gap_cap = kUnbounded;                  // every complete gap < gap_cap
    int require_final_gap_below = kUnbounded;  // n - tau_last < this
};

/// Exact probability under the free renewal law of the intersection in
/// `query`. Count-resolved DP over (position, contacts), O(n * k * gap range).
/// Throws BudgetExceeded when (max_contacts + 1) * (n + 1) > cell_budget.
double free_event_probability(const RenewalKernel& kernel, int n, const FreeEventQuery& query,
                              std::uint64_t cell_budget = std::uint64_t{1} << 21);

/// u(m) = P(m in tau) for m = 0..n, by the renewal equation.
std::vector<double> renewal_mass_function(const RenewalKernel& kernel, int n);

}  // namespace pinning
