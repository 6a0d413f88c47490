#include "pinning/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pinning/errors.hpp"
#include "pinning/logspace.hpp"

namespace pinning {

namespace {

// Neumaier-compensated running sum.
struct CompensatedSum {
    long double sum = 0.0L;
    long double comp = 0.0L;
    void add(long double x) {
        const long double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    long double value() const { return sum + comp; }
};

constexpr std::int64_t kMaxNormalizationTerms = 200'000'000;

}  // namespace

RenewalKernel::RenewalKernel(double alpha, int support_min, int horizon)
    : alpha_(alpha), support_min_(support_min), horizon_(horizon) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("alpha: tail exponent must be positive and finite");
    if (support_min < 1) throw std::invalid_argument("support_min: must be at least 1");
    if (horizon < support_min) {
        std::ostringstream os;
        os << "horizon: must be >= support_min (" << support_min << ") to hold any kernel mass";
        throw std::invalid_argument(os.str());
    }

    const long double s = 1.0L + alpha;
    auto term = [s](std::int64_t n) { return std::pow(static_cast<long double>(n), -s); };

    // Convexity of x^{-s} brackets the remainder sum_{n>L}:
    //   int_{L+1}^inf + f(L+1)/2  <=  remainder  <=  int_{L+1/2}^inf.
    auto lower_remainder = [&](std::int64_t L) {
        const long double a = static_cast<long double>(L) + 1.0L;
        return std::pow(a, 1.0L - s) / (s - 1.0L) + 0.5L * std::pow(a, -s);
    };
    auto upper_remainder = [&](std::int64_t L) {
        const long double a = static_cast<long double>(L) + 0.5L;
        return std::pow(a, 1.0L - s) / (s - 1.0L);
    };

    std::int64_t cutoff = std::max<std::int64_t>(horizon, 1024);
    while (upper_remainder(cutoff) - lower_remainder(cutoff) > kBracketTolerance) {
        cutoff *= 2;
        if (cutoff > kMaxNormalizationTerms)
            throw std::invalid_argument(
                "alpha: too small to certify the normalization within the summation budget");
    }
    bracket_width_ = static_cast<double>(upper_remainder(cutoff) - lower_remainder(cutoff));
    const long double remainder = 0.5L * (upper_remainder(cutoff) + lower_remainder(cutoff));

    // Backward accumulation gives every tail sum_{n>l} n^{-s} without cancellation.
    std::vector<long double> raw_tail(static_cast<std::size_t>(horizon) + 1);
    CompensatedSum acc;
    acc.add(remainder);
    for (std::int64_t n = cutoff; n >= 1; --n) {
        if (n <= horizon) raw_tail[static_cast<std::size_t>(n)] = acc.value();
        if (n >= support_min) acc.add(term(n));
    }
    raw_tail[0] = acc.value();
    const long double total = raw_tail[0];
    constant_ = static_cast<double>(1.0L / total);

    mass_.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
    tail_.resize(static_cast<std::size_t>(horizon) + 1);
    log_mass_.assign(static_cast<std::size_t>(horizon) + 1, kNegInf);
    log_tail_.resize(static_cast<std::size_t>(horizon) + 1);
    const double log_c = -std::log(static_cast<double>(total));
    for (int n = 0; n <= horizon; ++n) {
        tail_[n] = static_cast<double>(raw_tail[n] / total);
        log_tail_[n] = std::log(tail_[n]);
        if (n >= support_min) {
            mass_[n] = static_cast<double>(term(n) / total);
            log_mass_[n] = log_c - (1.0 + alpha) * std::log(static_cast<double>(n));
        }
    }
}

double RenewalKernel::mass(int n) const {
    if (n < 0 || n > horizon_) throw std::out_of_range("kernel mass index outside [0, horizon]");
    return mass_[n];
}

double RenewalKernel::tail(int l) const {
    if (l < 0 || l > horizon_) throw std::out_of_range("kernel tail index outside [0, horizon]");
    return tail_[l];
}

double RenewalKernel::log_mass(int n) const {
    if (n < 0 || n > horizon_) throw std::out_of_range("kernel mass index outside [0, horizon]");
    return log_mass_[n];
}

double RenewalKernel::log_tail(int l) const {
    if (l < 0 || l > horizon_) throw std::out_of_range("kernel tail index outside [0, horizon]");
    return log_tail_[l];
}

double RenewalKernel::mass_unbounded(std::int64_t n) const {
    if (n < support_min_) return 0.0;
    if (n <= horizon_) return mass_[static_cast<std::size_t>(n)];
    return constant_ * std::pow(static_cast<double>(n), -(1.0 + alpha_));
}

bool RenewalTrajectory::contains(int i) const {
    return std::binary_search(epochs.begin(), epochs.end(), i);
}

void RenewalTrajectory::validate(const RenewalKernel& kernel) const {
    if (epochs.empty() || epochs.front() != 0)
        throw std::invalid_argument("trajectory must start at epoch 0");
    if (horizon < 0 || horizon > kernel.horizon())
        throw std::invalid_argument("trajectory horizon outside the kernel table");
    for (std::size_t i = 1; i < epochs.size(); ++i) {
        const int gap = epochs[i] - epochs[i - 1];
        if (gap <= 0) throw std::invalid_argument("trajectory epochs must increase strictly");
        if (gap < kernel.support_min())
            throw std::invalid_argument("trajectory gap below the kernel support");
    }
    if (epochs.back() > horizon) throw std::invalid_argument("trajectory epoch beyond horizon");
}

RenewalTrajectory sample_free_renewal(const RenewalKernel& kernel, int n, CounterRng& rng) {
    if (n < 0 || n > kernel.horizon())
        throw std::invalid_argument("sample_free_renewal: n outside [0, horizon]");
    RenewalTrajectory traj;
    traj.horizon = n;
    const auto tails = kernel.tails();
    int position = 0;
    while (position < n) {
        const int remaining = n - position;
        // P(gap > g) = K^+(g), so gap = min{g : K^+(g) < V} with V uniform on (0, 1].
        const double v = rng.uniform_pos();
        if (tails[remaining] >= v) break;
        const auto first = tails.begin() + 1;
        const auto last = tails.begin() + remaining + 1;
        const auto it = std::partition_point(first, last, [v](double t) { return t >= v; });
        position += static_cast<int>(it - tails.begin());
        traj.epochs.push_back(position);
    }
    return traj;
}

double free_event_probability(const RenewalKernel& kernel, int n, const FreeEventQuery& query,
                              std::uint64_t cell_budget) {
    if (n < 0 || n > kernel.horizon())
        throw std::invalid_argument("free_event_probability: n outside [0, horizon]");
    if (query.max_contacts <= 0 || query.require_final_gap_below <= 0) return 0.0;

    const bool counted = query.max_contacts <= n;
    // Row k holds contacts k = 1..kcap in [0, m]; without a count axis a single row.
    const int kcap = counted ? query.max_contacts : 1;
    const std::uint64_t cells =
        static_cast<std::uint64_t>(kcap + 1) * static_cast<std::uint64_t>(n + 1);
    if (counted && cells > cell_budget) {
        std::ostringstream os;
        os << "free_event_probability: count table of " << cells << " cells exceeds budget "
           << cell_budget;
        throw BudgetExceeded(os.str());
    }
    const int stride = kcap + 1;
    std::vector<double> table(cells, 0.0);
    auto at = [&](int m, int k) -> double& { return table[static_cast<std::size_t>(m) * stride + k]; };
    at(0, counted ? 1 : 0) = 1.0;

    const int r = kernel.support_min();
    const auto masses = kernel.masses();
    for (int m = 1; m <= n; ++m) {
        const int dmax = std::min<long long>(m, static_cast<long long>(query.gap_cap) - 1);
        for (int d = r; d <= dmax; ++d) {
            const double w = masses[d];
            const int j = m - d;
            if (counted) {
                for (int k = 1; k < kcap; ++k) at(m, k + 1) += at(j, k) * w;
            } else {
                at(m, 0) += at(j, 0) * w;
            }
        }
    }

    const auto tails = kernel.tails();
    double total = 0.0;
    const int mmin = std::max<long long>(0, static_cast<long long>(n) - query.require_final_gap_below + 1);
    for (int m = mmin; m <= n; ++m) {
        double row = 0.0;
        for (int k = 0; k <= kcap; ++k) row += at(m, k);
        total += row * tails[n - m];
    }
    return std::min(total, 1.0);
}

std::vector<double> renewal_mass_function(const RenewalKernel& kernel, int n) {
    if (n < 0 || n > kernel.horizon())
        throw std::invalid_argument("renewal_mass_function: n outside [0, horizon]");
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    u[0] = 1.0;
    const auto masses = kernel.masses();
    for (int m = 1; m <= n; ++m) {
        double s = 0.0;
        for (int d = kernel.support_min(); d <= m; ++d) s += masses[d] * u[m - d];
        u[m] = s;
    }
    return u;
}

}  // namespace pinning
