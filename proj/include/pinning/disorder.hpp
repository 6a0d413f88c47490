#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pinning {

/// Mean-zero disorder law with finite exponential moments of all orders.
/// The two-point law is kept for cross-checking the cumulant code paths.
class DisorderLaw {
public:
    enum class Family { Gaussian, TwoPoint };

    static DisorderLaw gaussian() { return DisorderLaw(Family::Gaussian, 1.0); }
    // Uniform on {-a, +a}.
    static DisorderLaw two_point(double a);

    Family family() const { return family_; }
    double atom() const { return atom_; }
    std::string name() const;

    // Cumulant generating function log M(beta) and its first two derivatives.
    double log_mgf(double beta) const;
    double log_mgf_derivative(double beta) const;
    double log_mgf_second_derivative(double beta) const;

    // Inverse-CDF style draw from two independent uniforms.
    double draw(double u1, double u2) const;

private:
    DisorderLaw(Family f, double a) : family_(f), atom_(a) {}
    Family family_;
    double atom_;
};

double annealed_critical_point(const DisorderLaw& law, double beta);

// h_t(beta) = -(1 + t alpha) log M(beta / (1 + t alpha)).
double h_t(const DisorderLaw& law, double beta, double t, double alpha);

struct RateValue {
    double value = 0.0;
    bool finite = true;  // false when u is outside the closure of the achievable means
    int iterations = 0;
};

/// Legendre transform Phi(u) = sup_l {l u - log M(l)} by safeguarded Newton on
/// (log M)'(l) = u. Throws NumericalFailure if the iteration budget runs out.
RateValue rate_function(const DisorderLaw& law, double u);

// u_beta = (log M)'(beta), the level with beta u - Phi(u) = log M(beta).
double tilt_level(const DisorderLaw& law, double beta);

/// Realized disorder on the integer window [lo, hi]. Each value is a pure
/// function of (seed, index), so widening the window never changes values
/// already present.
class Environment {
public:
    Environment(DisorderLaw law, std::int64_t lo, std::int64_t hi, std::uint64_t seed);

    const DisorderLaw& law() const { return law_; }
    std::int64_t lo() const { return lo_; }
    std::int64_t hi() const { return hi_; }
    std::uint64_t seed() const { return seed_; }
    bool synthetic() const { return synthetic_; }
    bool covers(std::int64_t a, std::int64_t b) const { return a >= lo_ && b <= hi_; }

    double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i - lo_)]; }
    double at(std::int64_t i) const;

    // Same seed over a window widened to include [lo, hi].
    Environment extended(std::int64_t lo, std::int64_t hi) const;
    // omega'_i = omega_{pivot - i} on [pivot - hi, pivot - lo]; flagged synthetic.
    Environment reflected(std::int64_t pivot) const;
    // Overwrites the listed sites with `value`; flagged synthetic.
    Environment planted(const std::vector<std::int64_t>& sites, double value) const;

    // Explicit values on [lo, lo + values.size() - 1]; flagged synthetic.
    static Environment from_values(DisorderLaw law, std::int64_t lo, std::vector<double> values);

private:
    Environment(DisorderLaw law) : law_(law) {}
    DisorderLaw law_;
    std::int64_t lo_ = 0;
    std::int64_t hi_ = -1;
    std::uint64_t seed_ = 0;
    bool synthetic_ = false;
    std::vector<double> values_;
};

// Per-index generator behind Environment.
double disorder_value(const DisorderLaw& law, std::uint64_t seed, std::int64_t index);

struct RichSegment {
    std::vector<std::int64_t> sites;  // n, n - r, ..., n - r(|J| - 1)
    double average = 0.0;
    bool hit = false;
};

// |J_n| = ceil(gamma log n) (at least 1).
int rich_segment_length(std::int64_t n, double gamma);

/// J_n = {n - i r : 0 <= i < ceil(gamma log n)}, its disorder average, and
/// whether the average reaches u.
RichSegment rich_segment_scan(const Environment& env, std::int64_t n, int r, double gamma,
                              double u);

/// Smallest beta (bisection to 1e-9) with
///   log M(beta) - (1 + eps alpha) log M(beta / (1 + eps alpha)) > log(1 / K_r);
/// +inf when no beta up to 2^60 qualifies.
double krcost_threshold(const DisorderLaw& law, double epsilon, double alpha, double k_r);

// Left side minus right side of the inequality above.
double krcost_margin(const DisorderLaw& law, double beta, double epsilon, double alpha,
                     double k_r);

}  // namespace pinning
