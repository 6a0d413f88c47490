#include "pinning/disorder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "pinning/errors.hpp"
#include "pinning/rng.hpp"

namespace pinning {

DisorderLaw DisorderLaw::two_point(double a) {
    if (!(a > 0.0) || !std::isfinite(a))
        throw std::invalid_argument("atom: two-point atom must be positive and finite");
    return DisorderLaw(Family::TwoPoint, a);
}

std::string DisorderLaw::name() const {
    if (family_ == Family::Gaussian) return "gaussian";
    std::ostringstream os;
    os << "two-point(" << atom_ << ")";
    return os.str();
}

double DisorderLaw::log_mgf(double beta) const {
    if (family_ == Family::Gaussian) return 0.5 * beta * beta;
    const double x = std::fabs(atom_ * beta);
    // log cosh x without overflow
    return x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2;
}

double DisorderLaw::log_mgf_derivative(double beta) const {
    if (family_ == Family::Gaussian) return beta;
    return atom_ * std::tanh(atom_ * beta);
}

double DisorderLaw::log_mgf_second_derivative(double beta) const {
    if (family_ == Family::Gaussian) return 1.0;
    const double t = std::tanh(atom_ * beta);
    return atom_ * atom_ * (1.0 - t * t);
}

double DisorderLaw::draw(double u1, double u2) const {
    if (family_ == Family::TwoPoint) return u1 < 0.5 ? -atom_ : atom_;
    const double radius = std::sqrt(-2.0 * std::log1p(-u1));
    return radius * std::cos(2.0 * std::numbers::pi * u2);
}

double annealed_critical_point(const DisorderLaw& law, double beta) { return -law.log_mgf(beta); }

double h_t(const DisorderLaw& law, double beta, double t, double alpha) {
    if (t < 0.0) throw std::invalid_argument("h_t: t must be nonnegative");
    const double s = 1.0 + t * alpha;
    return -s * law.log_mgf(beta / s);
}

RateValue rate_function(const DisorderLaw& law, double u) {
    RateValue out;
    if (law.family() == DisorderLaw::Family::TwoPoint) {
        const double a = law.atom();
        if (std::fabs(u) > a) {
            out.value = std::numeric_limits<double>::infinity();
            out.finite = false;
            return out;
        }
        if (std::fabs(u) == a) {
            out.value = std::numbers::ln2;
            return out;
        }
    }

    // (log M)' is increasing, so g(l) = (log M)'(l) - u has one root.
    auto g = [&](double l) { return law.log_mgf_derivative(l) - u; };
    double lo = -1.0, hi = 1.0;
    for (int i = 0; g(lo) > 0.0; ++i) {
        if (i > 200) throw NumericalFailure("rate_function: failed to bracket the Legendre root");
        hi = lo;
        lo *= 2.0;
    }
    for (int i = 0; g(hi) < 0.0; ++i) {
        if (i > 200) throw NumericalFailure("rate_function: failed to bracket the Legendre root");
        lo = hi;
        hi *= 2.0;
    }

    constexpr double kResidualTol = 1e-12;
    constexpr int kMaxIterations = 500;
    double l = std::clamp(u, lo, hi);
    for (int it = 1;; ++it) {
        const double r = g(l);
        out.iterations = it;
        if (std::fabs(r) <= kResidualTol) break;
        if (r > 0.0) hi = l; else lo = l;
        if (it >= kMaxIterations || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(l)) {
            if (std::fabs(r) <= 1e-9) break;
            throw NumericalFailure("rate_function: Newton iteration budget exhausted");
        }
        const double curvature = law.log_mgf_second_derivative(l);
        double next = curvature > 0.0 ? l - r / curvature : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        l = next;
    }
    out.value = l * u - law.log_mgf(l);
    return out;
}

double tilt_level(const DisorderLaw& law, double beta) {
    if (!std::isfinite(beta)) throw std::invalid_argument("tilt_level: beta must be finite");
    return law.log_mgf_derivative(beta);
}

double disorder_value(const DisorderLaw& law, std::uint64_t seed, std::int64_t index) {
    const auto idx = static_cast<std::uint64_t>(index);
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32),
                                  0x5EEDu, 0u};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const auto out = Philox4x32::block(ctr, key);
    const double u1 = to_unit((static_cast<std::uint64_t>(out[0]) << 32) | out[1]);
    const double u2 = to_unit((static_cast<std::uint64_t>(out[2]) << 32) | out[3]);
    return law.draw(u1, u2);
}

Environment::Environment(DisorderLaw law, std::int64_t lo, std::int64_t hi, std::uint64_t seed)
    : law_(law), lo_(lo), hi_(hi), seed_(seed) {
    if (hi < lo) throw std::invalid_argument("environment window must be nonempty");
    values_.resize(static_cast<std::size_t>(hi - lo + 1));
    for (std::int64_t i = lo; i <= hi; ++i) values_[static_cast<std::size_t>(i - lo)] = disorder_value(law, seed, i);
}

double Environment::at(std::int64_t i) const {
    if (i < lo_ || i > hi_) {
        std::ostringstream os;
        os << "environment index " << i << " outside window [" << lo_ << ", " << hi_ << "]";
        throw std::out_of_range(os.str());
    }
    return (*this)[i];
}

Environment Environment::extended(std::int64_t lo, std::int64_t hi) const {
    if (synthetic_) throw std::logic_error("cannot extend a synthetic environment");
    const std::int64_t new_lo = std::min(lo, lo_);
    const std::int64_t new_hi = std::max(hi, hi_);
    Environment out(law_);
    out.lo_ = new_lo;
    out.hi_ = new_hi;
    out.seed_ = seed_;
    out.values_.resize(static_cast<std::size_t>(new_hi - new_lo + 1));
    for (std::int64_t i = new_lo; i <= new_hi; ++i) {
        out.values_[static_cast<std::size_t>(i - new_lo)] =
            (i >= lo_ && i <= hi_) ? (*this)[i] : disorder_value(law_, seed_, i);
    }
    return out;
}

Environment Environment::reflected(std::int64_t pivot) const {
    Environment out(law_);
    out.lo_ = pivot - hi_;
    out.hi_ = pivot - lo_;
    out.seed_ = seed_;
    out.synthetic_ = true;
    out.values_.assign(values_.rbegin(), values_.rend());
    return out;
}

Environment Environment::planted(const std::vector<std::int64_t>& sites, double value) const {
    Environment out = *this;
    out.synthetic_ = true;
    for (auto i : sites) {
        at(i);  // range check
        out.values_[static_cast<std::size_t>(i - lo_)] = value;
    }
    return out;
}

Environment Environment::from_values(DisorderLaw law, std::int64_t lo, std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("environment window must be nonempty");
    Environment out(law);
    out.lo_ = lo;
    out.hi_ = lo + static_cast<std::int64_t>(values.size()) - 1;
    out.synthetic_ = true;
    out.values_ = std::move(values);
    return out;
}

int rich_segment_length(std::int64_t n, double gamma) {
    if (n < 1 || !(gamma > 0.0)) throw std::invalid_argument("rich segment needs n >= 1 and gamma > 0");
    return std::max(1, static_cast<int>(std::ceil(gamma * std::log(static_cast<double>(n)))));
}

RichSegment rich_segment_scan(const Environment& env, std::int64_t n, int r, double gamma, double u) {
    if (r < 1) throw std::invalid_argument("rich segment spacing r must be >= 1");
    const int len = rich_segment_length(n, gamma);
    const std::int64_t lowest = n - static_cast<std::int64_t>(r) * (len - 1);
    if (!env.covers(lowest, n)) {
        std::ostringstream os;
        os << "rich segment [" << lowest << ", " << n << "] not inside environment window ["
           << env.lo() << ", " << env.hi() << "]";
        throw std::invalid_argument(os.str());
    }
    RichSegment seg;
    seg.sites.reserve(static_cast<std::size_t>(len));
    double sum = 0.0;
    for (int i = 0; i < len; ++i) {
        const std::int64_t site = n - static_cast<std::int64_t>(i) * r;
        seg.sites.push_back(site);
        sum += env[site];
    }
    seg.average = sum / len;
    seg.hit = seg.average >= u;
    return seg;
}

double krcost_margin(const DisorderLaw& law, double beta, double epsilon, double alpha, double k_r) {
    const double s = 1.0 + epsilon * alpha;
    return law.log_mgf(beta) - s * law.log_mgf(beta / s) + std::log(k_r);
}

double krcost_threshold(const DisorderLaw& law, double epsilon, double alpha, double k_r) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon: must lie in (0, 1)");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha: must be positive");
    if (!(k_r > 0.0 && k_r <= 1.0)) throw std::invalid_argument("K_r: must lie in (0, 1]");
    if (k_r == 1.0) return 0.0;

    auto margin = [&](double beta) { return krcost_margin(law, beta, epsilon, alpha, k_r); };
    double lo = 0.0, hi = 1.0;
    for (int i = 0; margin(hi) <= 0.0; ++i) {
        // the two-point margin stays bounded in beta, so it may never turn positive
        if (i > 60) return std::numeric_limits<double>::infinity();
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        if (margin(mid) > 0.0) hi = mid; else lo = mid;
    }
    return hi;
}

}  // namespace pinning
