#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "oracle.hpp"
#include "pinning/errors.hpp"
#include "pinning/polymer.hpp"

using namespace pinning;

namespace {

const DisorderLaw kGauss = DisorderLaw::gaussian();

struct Instance {
    RenewalKernel kernel;
    Environment env;
    PolymerParams params;
    int n;
};

Instance random_instance(std::mt19937_64& gen, int n_max = 14) {
    std::uniform_real_distribution<double> beta(0.0, 3.0), h(-3.0, 1.0);
    const double alphas[] = {0.3, 0.5, 1.5};
    const int n = std::uniform_int_distribution<int>(0, n_max)(gen);
    const int r = std::uniform_int_distribution<int>(1, 2)(gen);
    const double alpha = alphas[std::uniform_int_distribution<int>(0, 2)(gen)];
    return {RenewalKernel(alpha, r, 20), Environment(kGauss, 0, n, gen()), {beta(gen), h(gen)}, n};
}

EventSpec random_event(std::mt19937_64& gen, int n) {
    auto coin = [&] { return std::uniform_int_distribution<int>(0, 3)(gen) == 0; };
    auto upto = [&](int k) { return std::uniform_int_distribution<int>(0, std::max(k, 0))(gen); };
    EventSpec ev;
    if (coin()) ev.max_contacts = upto(n + 1);
    if (coin()) ev.more_contacts_than = upto(n);
    if (coin()) ev.gap_below = 1 + upto(n);
    if (coin()) ev.long_gap = 1 + upto(n);
    if (coin()) ev.last_after = upto(n);
    if (coin()) ev.last_at_most = upto(n);
    if (coin()) ev.hat_at_most = upto(n / 2);
    if (coin()) ev.check_at_least = upto(n + 1);
    ev.complement = coin();
    return ev;
}

}  // namespace

TEST_CASE("partition functions and events equal subset enumeration") {
    std::mt19937_64 gen(12345);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto in = random_instance(gen);
        for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
            const auto paths = oracle::enumerate(in.env, in.params, in.kernel, in.n, boundary);
            const double z = oracle::total(paths);
            CHECK(oracle::relative_error(std::exp(log_partition(in.env, in.params, in.kernel, in.n, boundary)), z) <
                  1e-10);
            for (int e = 0; e < 6; ++e) {
                const auto ev = random_event(gen, in.n);
                const double exact = oracle::total(paths, [&](const oracle::Path& p) { return oracle::matches(p, ev, in.n); });
                const auto v = event_log_partition(in.env, in.params, in.kernel, in.n, ev, boundary);
                INFO("n=", in.n, " trial=", trial);
                if (v.cancellation) continue;  // flagged loss of precision
                if (exact < 1e-12 * z && ev.complement) {
                    CHECK(std::exp(v.log_value) <= 1e-10 * z);
                } else {
                    CHECK(oracle::relative_error(std::exp(v.log_value), exact) < 1e-10);
                }
                ++checked;
            }
        }
    }
    CHECK(checked > 3000);
}

TEST_CASE("named events") {
    const RenewalKernel k(0.5, 1, 14);
    const Environment env(kGauss, 0, 14, 3);
    const PolymerParams p{1.2, -0.4};
    const int n = 14;
    const auto paths = oracle::enumerate(env, p, k, n, Boundary::Free);
    const double z = oracle::total(paths);
    auto prob = [&](const EventSpec& ev) { return gibbs_probability(env, p, k, n, ev, Boundary::Free).value; };
    auto exact = [&](auto pred) { return oracle::total(paths, pred) / z; };

    CHECK(prob(EventSpec::many_contacts(3)) == doctest::Approx(exact([](const oracle::Path& q) { return q.contacts() > 3; })).epsilon(1e-10));
    // ceil(0.3 * 14) = 5
    CHECK(gap_length_bound(14, 0.3) == 5);
    CHECK(prob(EventSpec::long_internal_gap(n, 0.3)) ==
          doctest::Approx(exact([](const oracle::Path& q) { return q.max_gap() >= 5; })).epsilon(1e-10));
    CHECK(prob(EventSpec::early_last_contact(n, 0.3)) ==
          doctest::Approx(exact([](const oracle::Path& q) { return q.last() <= 9; })).epsilon(1e-10));
    CHECK(contact_count_bound(14, 1.0) == 2);
    CHECK(prob(EventSpec::few_contacts_no_long_gap(n, 2.0, 0.3)) ==
          doctest::Approx(exact([](const oracle::Path& q) {
              return q.contacts() <= 5 && q.max_gap() < 5 && 14 - q.last() < 5;
          })).epsilon(1e-10));
    CHECK(prob(EventSpec::last_contact_after(10)) ==
          doctest::Approx(exact([](const oracle::Path& q) { return q.last() > 10; })).epsilon(1e-10));
    CHECK(prob(EventSpec::many_contacts(15)) == 0.0);
    CHECK(prob(EventSpec{}) == doctest::Approx(1.0));

    const auto cpaths = oracle::enumerate(env, p, k, n, Boundary::Constrained);
    const double zc = oracle::total(cpaths);
    const double esc = oracle::total(cpaths, [](const oracle::Path& q) { return q.hat(14) > 3 || q.check(14) < 10; }) / zc;
    CHECK(gibbs_probability(env, p, k, n, EventSpec::midpoint_escape(n, 3, 4), Boundary::Constrained).value ==
          doctest::Approx(esc).epsilon(1e-10));
    CHECK(gibbs_probability(env, p, k, n, EventSpec::midpoint_escape(n, 7, 7), Boundary::Constrained).value ==
          doctest::Approx(0.0));
}

TEST_CASE("tables have the prefix property and reject bad input") {
    const RenewalKernel k(0.5, 1, 300);
    const Environment env(kGauss, 0, 300, 8);
    const PolymerParams p{0.8, -0.6};
    const auto big = build_partition_table(env, p, k, 300);
    const auto small = build_partition_table(env, p, k, 120);
    for (int m = 0; m <= 120; ++m) CHECK(small.log_zc(m) == big.log_zc(m));
    CHECK(free_log_partition(small) == doctest::Approx(free_log_partition(big, 120)).epsilon(1e-15));

    const Environment short_env(kGauss, 0, 50, 8);
    CHECK_THROWS_AS(build_partition_table(short_env, p, k, 100), std::invalid_argument);
    CHECK_THROWS_AS(build_partition_table(env, p, RenewalKernel(0.5, 1, 10), 100), std::invalid_argument);
    TableOptions tiny;
    tiny.budget.max_ops = 1000;
    CHECK_THROWS_AS(build_partition_table(env, p, k, 300, tiny), BudgetExceeded);
    TableOptions counted;
    counted.count_cap = 300;
    counted.budget.max_count_cells = 5000;
    CHECK_THROWS_AS(build_partition_table(env, p, k, 300, counted), BudgetExceeded);
}

TEST_CASE("empty and tiny polymers") {
    const RenewalKernel k(0.5, 1, 5);
    const Environment env(kGauss, 0, 5, 1);
    const PolymerParams p{1.0, 0.3};
    CHECK(log_partition(env, p, k, 0, Boundary::Free) == doctest::Approx(p.beta * env[0] + p.h));
    CHECK(log_partition(env, p, k, 0, Boundary::Constrained) == doctest::Approx(p.beta * env[0] + p.h));
    const RenewalKernel k3(0.5, 3, 5);
    // no admissible gap reaches site 2
    CHECK(log_partition(env, p, k3, 2, Boundary::Constrained) == kNegInf);
    CHECK(log_partition(env, p, k3, 2, Boundary::Free) == doctest::Approx(p.beta * env[0] + p.h));
}

TEST_CASE("contact statistics match enumeration") {
    const RenewalKernel k(0.5, 1, 13);
    const Environment env(kGauss, 0, 13, 77);
    const PolymerParams p{1.5, -0.2};
    const int n = 13;
    for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
        const auto paths = oracle::enumerate(env, p, k, n, boundary);
        const double z = oracle::total(paths);
        const auto st = contact_statistics(env, p, k, n, boundary, true);
        CHECK(std::exp(st.log_partition) == doctest::Approx(z).epsilon(1e-12));
        double ec = 0, overlap = 0;
        std::vector<double> occ(n + 1, 0.0), counts(n + 2, 0.0), last(n + 1, 0.0), hat(n / 2 + 1, 0.0),
            check(n + 1, 0.0);
        double absent = 0;
        for (const auto& q : paths) {
            const double w = q.weight / z;
            ec += w * q.contacts();
            for (int e : q.epochs) {
                occ[e] += w;
                overlap += w * env[e];
            }
            counts[q.contacts()] += w;
            last[q.last()] += w;
            hat[q.hat(n)] += w;
            if (q.check(n) < 0) absent += w; else check[q.check(n)] += w;
        }
        CHECK(st.expected_contacts == doctest::Approx(ec).epsilon(1e-11));
        CHECK(st.expected_disorder_overlap == doctest::Approx(overlap).epsilon(1e-10));
        CHECK(st.check_absent == doctest::Approx(absent).scale(1.0).epsilon(1e-11));
        for (int i = 0; i <= n; ++i) {
            CHECK(st.occupation[i] == doctest::Approx(occ[i]).scale(1.0).epsilon(1e-11));
            CHECK(st.last_distribution[i] == doctest::Approx(last[i]).scale(1.0).epsilon(1e-11));
            CHECK(st.check_distribution[i] == doctest::Approx(check[i]).scale(1.0).epsilon(1e-11));
        }
        for (int k2 = 0; k2 <= n + 1; ++k2)
            CHECK(st.count_distribution[k2] == doctest::Approx(counts[k2]).scale(1.0).epsilon(1e-11));
        for (int j = 0; j <= n / 2; ++j) CHECK(st.hat_distribution[j] == doctest::Approx(hat[j]).scale(1.0).epsilon(1e-11));
    }
}

TEST_CASE("derivatives of log Z are Gibbs expectations") {
    const RenewalKernel k(0.5, 1, 512);
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> beta(0.0, 2.0), h(-2.0, 0.5);
    for (int t = 0; t < 5; ++t) {
        const Environment env(kGauss, 0, 512, gen());
        const PolymerParams p{beta(gen), h(gen)};
        for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
            const auto st = contact_statistics(env, p, k, 512, boundary);
            const double e = 1e-5;
            const double dh = (log_partition(env, {p.beta, p.h + e}, k, 512, boundary) -
                               log_partition(env, {p.beta, p.h - e}, k, 512, boundary)) / (2 * e);
            const double db = (log_partition(env, {p.beta + e, p.h}, k, 512, boundary) -
                               log_partition(env, {p.beta - e, p.h}, k, 512, boundary)) / (2 * e);
            CHECK(dh == doctest::Approx(st.expected_contacts).epsilon(1e-5));
            CHECK(db == doctest::Approx(st.expected_disorder_overlap).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("single-trajectory and one-jump lower bounds, monotonicity in h") {
    std::mt19937_64 gen(5);
    const RenewalKernel k(0.5, 1, 300);
    for (int t = 0; t < 50; ++t) {
        const int n = std::uniform_int_distribution<int>(1, 300)(gen);
        const Environment env(kGauss, 0, n, gen());
        const PolymerParams p{std::uniform_real_distribution<double>(0, 3)(gen),
                              std::uniform_real_distribution<double>(-4, 1)(gen)};
        const double lz = log_partition(env, p, k, n, Boundary::Free);
        CHECK(lz >= k.log_tail(n) + p.beta * env[0] + p.h);
        CounterRng rng(gen());
        const auto traj = sample_free_renewal(k, n, rng);
        CHECK(lz >= trajectory_log_weight(traj, env, p, k, Boundary::Free) - 1e-12 * std::fabs(lz));
        CHECK(log_partition(env, {p.beta, p.h + 0.1}, k, n, Boundary::Free) > lz);
    }
}

TEST_CASE("backward partitions reproduce occupation probabilities") {
    const RenewalKernel k(0.5, 2, 200);
    const Environment env(kGauss, 0, 200, 4);
    const PolymerParams p{1.0, -0.3};
    const auto table = build_partition_table(env, p, k, 200);
    for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
        const auto back = backward_log_partition(table, boundary);
        const auto st = contact_statistics(env, p, k, 200, boundary);
        CHECK(back[0] == doctest::Approx(st.log_partition).epsilon(1e-12));
        for (int m = 0; m <= 200; m += 7) {
            const double occ = std::exp(table.log_zc(m) + back[m] - table.site_log_weights()[m] - st.log_partition);
            CHECK(occ == doctest::Approx(st.occupation[m]).scale(1.0).epsilon(1e-10));
        }
    }
    TableOptions capped;
    capped.gap_cap = 10;
    CHECK_THROWS_AS(backward_log_partition(build_partition_table(env, p, k, 50, capped), Boundary::Free),
                    std::invalid_argument);
}

TEST_CASE("path sampler reproduces the Gibbs law") {
    const RenewalKernel k(0.5, 1, 8);
    const Environment env(kGauss, 0, 8, 21);
    const PolymerParams p{0.7, -0.2};
    const int n = 8;
    for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
        const auto paths = oracle::enumerate(env, p, k, n, boundary);
        const double z = oracle::total(paths);
        std::map<std::vector<int>, double> law;
        for (const auto& q : paths) law[q.epochs] = q.weight / z;
        const auto table = build_partition_table(env, p, k, n);
        const PathSampler sampler(table, boundary);
        std::map<std::vector<int>, int> hits;
        constexpr int draws = 40000;
        for (int s = 0; s < draws; ++s) {
            CounterRng rng(11, s);
            const auto path = sampler.sample(rng);
            if (boundary == Boundary::Constrained) CHECK(path.trajectory.last() == n);
            CHECK(path.log_weight ==
                  doctest::Approx(trajectory_log_weight(path.trajectory, env, p, k, boundary)).epsilon(1e-12));
            ++hits[path.trajectory.epochs];
        }
        double tv = 0;
        for (const auto& [e, pr] : law) tv += std::fabs(hits[e] / double(draws) - pr);
        CHECK(tv / 2 < 0.03);
    }
}

TEST_CASE("forward and reversed series") {
    const RenewalKernel k(0.5, 1, 400);
    const Environment env(kGauss, 0, 400, 31);
    const PolymerParams p{0.5, -1.3};
    const auto fwd = constrained_series(env, p, k, 400);
    const auto table = build_partition_table(env, p, k, 400);
    for (int m = 0; m <= 400; m += 40) CHECK(fwd.log_terms[m] == table.log_zc(m));
    for (std::size_t i = 1; i < fwd.log_partials.size(); ++i) CHECK(fwd.log_partials[i] >= fwd.log_partials[i - 1]);

    // Z^c_{[a - d, a]}(omega) = Z^c_d(omega reflected about a)
    const Environment wide(kGauss, 600, 1000, 31);
    const auto rev = reversed_series(wide, p, k, 1000, 400);
    const auto mirrored = constrained_series(wide.reflected(1000), p, k, 400);
    for (int d = 0; d <= 400; ++d)
        CHECK(rev.log_terms[d] == doctest::Approx(mirrored.log_terms[d]).epsilon(1e-12));
    // widening the window on demand keeps the same disorder
    const Environment narrow(kGauss, 990, 1000, 31);
    const auto rev2 = reversed_series(narrow, p, k, 1000, 400);
    CHECK(rev2.log_partials.back() == doctest::Approx(rev.log_partials.back()).epsilon(1e-14));
    CHECK_THROWS_AS(reversed_series(wide, p, k, 1000, 401), std::invalid_argument);
}
