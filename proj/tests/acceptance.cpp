// One PASS/FAIL line per acceptance criterion. Exit status 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "oracle.hpp"
#include "pinning/disorder.hpp"
#include "pinning/experiments.hpp"
#include "pinning/polymer.hpp"
#include "pinning/renewal.hpp"
#include "pinning/rng.hpp"

using namespace pinning;

namespace {

const DisorderLaw kGauss = DisorderLaw::gaussian();
constexpr std::uint64_t kMaster = 20261017;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

EventSpec random_event(std::mt19937_64& gen, int n) {
    auto coin = [&] { return std::uniform_int_distribution<int>(0, 2)(gen) == 0; };
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

Verdict oracle_equivalence() {
    std::mt19937_64 gen(kMaster);
    std::uniform_real_distribution<double> beta(0.0, 3.0), h(-3.0, 1.0);
    const double alphas[] = {0.3, 0.5, 1.5};
    double worst = 0.0;
    int values = 0, flagged = 0;
    for (int t = 0; t < 100; ++t) {
        const int n = std::uniform_int_distribution<int>(0, 14)(gen);
        const RenewalKernel k(alphas[t % 3], 1 + t % 2, 14);
        const Environment env(kGauss, 0, n, gen());
        const PolymerParams p{beta(gen), h(gen)};
        for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
            const auto paths = oracle::enumerate(env, p, k, n, boundary);
            const double z = oracle::total(paths);
            worst = std::max(worst, oracle::relative_error(std::exp(log_partition(env, p, k, n, boundary)), z));
            ++values;
            for (int e = 0; e < 20; ++e) {
                const auto ev = random_event(gen, n);
                const double exact = oracle::total(paths, [&](const oracle::Path& q) { return oracle::matches(q, ev, n); });
                const auto v = event_log_partition(env, p, k, n, ev, boundary);
                flagged += v.cancellation;
                worst = std::max(worst, oracle::relative_error(std::exp(v.log_value), exact));
                ++values;
            }
        }
    }
    return {worst <= 1e-10, fmt("%d values on 100 instances, max relative error %.3g, %d flagged", values, worst, flagged)};
}

Verdict sampler_exactness() {
    const int n = 10;
    const RenewalKernel k(0.5, 1, n);
    const Environment env(kGauss, 0, n, derive_seed(kMaster, "acceptance-sampler", 0));
    const PolymerParams p{1.0, -2.0};
    const auto table = build_partition_table(env, p, k, n);
    double worst = 0.0, floor_worst = 0.0;
    bool pinned = true;
    for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
        const auto paths = oracle::enumerate(env, p, k, n, boundary);
        const double z = oracle::total(paths);
        std::map<std::vector<int>, double> law;
        for (const auto& q : paths) law[q.epochs] = q.weight / z;
        const PathSampler sampler(table, boundary);
        std::map<std::vector<int>, int> hits;
        constexpr int draws = 100000;
        for (int s = 0; s < draws; ++s) {
            CounterRng rng(derive_seed(kMaster, "acceptance-sampler", 1), s);
            const auto path = sampler.sample(rng);
            if (boundary == Boundary::Constrained) pinned = pinned && path.trajectory.last() == n;
            ++hits[path.trajectory.epochs];
        }
        double tv = 0.0, noise = 0.0;
        for (const auto& [e, pr] : law) {
            tv += std::fabs(hits[e] / double(draws) - pr);
            noise += std::sqrt(2.0 * pr * (1.0 - pr) / (M_PI * draws));
        }
        worst = std::max(worst, tv / 2);
        floor_worst = std::max(floor_worst, noise / 2);
    }
    return {worst <= 0.01 && pinned,
            fmt("max TV %.4f over free and constrained (sampling noise floor %.4f), constrained pinned at n: %s", worst,
                floor_worst, pinned ? "yes" : "no")};
}

Verdict derivative_identities() {
    const int n = 512;
    const RenewalKernel k(0.5, 1, n);
    std::mt19937_64 gen(kMaster + 3);
    std::uniform_real_distribution<double> beta(0.0, 2.0), h(-2.0, 0.5);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Environment env(kGauss, 0, n, gen());
        const PolymerParams p{beta(gen), h(gen)};
        const auto boundary = t % 2 ? Boundary::Constrained : Boundary::Free;
        const double e = 1e-5;
        const double dh = (log_partition(env, {p.beta, p.h + e}, k, n, boundary) -
                           log_partition(env, {p.beta, p.h - e}, k, n, boundary)) / (2 * e);
        const auto st = contact_statistics(env, p, k, n, boundary);
        worst = std::max(worst, std::fabs(dh - st.expected_contacts) / st.expected_contacts);
    }
    return {worst <= 1e-5, fmt("20 instances at n=512, max relative deviation %.3g", worst)};
}

Verdict lower_bounds() {
    const RenewalKernel k(0.5, 1, 400);
    std::mt19937_64 gen(kMaster + 4);
    int checks = 0, violations = 0;
    for (int t = 0; t < 5000; ++t) {
        const int n = std::uniform_int_distribution<int>(1, 400)(gen);
        const Environment env(kGauss, 0, n, gen());
        const PolymerParams p{std::uniform_real_distribution<double>(0, 4)(gen),
                              std::uniform_real_distribution<double>(-6, 1)(gen)};
        const auto boundary = t % 2 ? Boundary::Constrained : Boundary::Free;
        const double lz = log_partition(env, p, k, n, boundary);
        const double tol = 1e-12 * std::max(1.0, std::fabs(lz));
        // one jump: free ends with K^+(n), constrained with K(n)
        const double jump = (boundary == Boundary::Free ? k.log_tail(n) : k.log_mass(n) + p.beta * env[n] + p.h) +
                            p.beta * env[0] + p.h;
        violations += lz < jump - tol;
        CounterRng rng(gen());
        auto traj = sample_free_renewal(k, n, rng);
        if (boundary == Boundary::Constrained && traj.last() != n) traj.epochs.push_back(n);
        violations += lz < trajectory_log_weight(traj, env, p, k, boundary) - tol;
        checks += 2;
    }
    return {violations == 0 && checks >= 10000, fmt("%d checks, %d violations", checks, violations)};
}

Verdict homogeneous_free_energy_check() {
    const RenewalKernel k(0.5, 1, 4096);
    ReplicaSettings run;
    run.master_seed = kMaster;
    run.command = "acceptance-free-energy";
    const auto res = free_energy_estimate(k, kGauss, {0.0, 1.0}, {4096}, run);
    const double root = homogeneous_free_energy(k, 1.0);
    const double rel = std::fabs(res.quenched - root) / root;
    return {rel <= 0.02, fmt("(1/n) log Z at n=4096 is %.6f, root %.6f, relative gap %.4f", res.quenched, root, rel)};
}

Verdict decay() {
    const double alpha = 0.5, b = 0.05;
    const RenewalKernel k(alpha, 1, 4000);
    const auto res = decay_check(k, b, 5.0, {500, 1000, 1500, 2000, 2500, 3000, 3500, 4000});
    const double target = -alpha / (9 * b) + 0.1;
    const bool ok = res.fitted_slope <= target && res.first_crossing.has_value() && res.persists;
    return {ok, fmt("fitted slope %.3f (need <= %.3f), first crossing n=%d, holds afterwards: %s", res.fitted_slope,
                    target, res.first_crossing.value_or(-1), res.persists ? "yes" : "no")};
}

const PolymerParams kDeloc{0.5, annealed_critical_point(DisorderLaw::gaussian(), 0.5) - 1.0};

Verdict tightness() {
    const RenewalKernel k(0.5, 1, 4000);
    TightnessGrid g;
    g.params = kDeloc;
    g.n_values = {2000, 4000};
    g.N_values = {10, 20, 50, 100, 200, 300, 500};
    g.epsilon = 0.1;
    g.run.replicas = 200;
    g.run.master_seed = kMaster;
    g.run.command = "tightness";
    const auto res = tightness_scan(k, g);
    const auto& rep = res.report;
    const bool monotone = rep.footer["per_replica_monotone_in_N"].get<bool>();
    std::map<std::pair<int, int>, std::pair<double, double>> cell;
    for (std::size_t row = 0; row < rep.rows.size(); ++row)
        cell[{int(rep.number(row, "n")), int(rep.number(row, "N"))}] = {rep.number(row, "frequency"),
                                                                        rep.number(row, "std_error")};
    const auto [f2, s2] = cell[{2000, 200}];
    const auto [f4, s4] = cell[{4000, 200}];
    const bool agree = std::fabs(f2 - f4) <= 2.0 * std::sqrt(s2 * s2 + s4 * s4);
    int below = -1;
    for (int N : g.N_values)
        if (below < 0 && cell[{2000, N}].first < 0.05 && cell[{4000, N}].first < 0.05) below = N;
    return {monotone && agree && below >= 0,
            fmt("monotone per replica: %s; N=200 frequencies %.3f vs %.3f (combined se %.3f); below 0.05 from N=%d",
                monotone ? "yes" : "no", f2, f4, std::sqrt(s2 * s2 + s4 * s4), below)};
}

Verdict planner() {
    const double alpha = 0.5, eps = 0.5, beta = 3.5;
    const RenewalKernel k(alpha, 1, 64);
    const double kr = 1.0 / std::riemann_zeta(1.0 + alpha);
    const double threshold = krcost_threshold(kGauss, eps, alpha, kr);

    // Gaussian chain in closed form: log M(b) = b^2/2, u = beta, Phi(u) = u^2/2.
    const double s = 1.0 + eps * alpha;
    const double h_eps = -beta * beta / (2 * s);
    const double h = h_eps + 0.1;
    const double phi = beta * beta / 2;
    const double reward = beta * beta + h_eps + std::log(kr);
    const double delta = 0.5 * (reward / phi - 1.0);
    const double gamma = 2.0 / ((1.0 + delta) * phi + reward);
    const double kappa = gamma * reward - 1.0;
    const int m = static_cast<int>(std::floor(4.0 / kappa)) + 1;

    const auto plan = returns_planner(kGauss, k, eps, beta, h);
    const auto check = verify_plan(plan, kGauss);
    auto rel = [](double a, double b) { return std::fabs(a - b) / std::fabs(b); };
    const double worst = std::max(rel(plan.gamma, gamma), rel(plan.kappa, kappa));
    const bool slacks = check.krcost_slack > 0 && check.delta_slack > 0 && check.gamma_upper_slack > 0 &&
                        check.gamma_lower_slack > 0 && check.m_slack > 0 && check.ok;
    const bool ok = std::fabs(threshold - 3.0992) <= 0.001 && plan.feasible && worst <= 1e-6 && plan.m == m && slacks;
    return {ok, fmt("threshold %.6f; gamma %.12g kappa %.12g m %d (closed form %.12g %.12g %d, max rel %.2g); "
                    "slacks positive: %s",
                    threshold, plan.gamma, plan.kappa, plan.m, gamma, kappa, m, worst, slacks ? "yes" : "no")};
}

Verdict rich_segments() {
    const RenewalKernel k(0.5, 1, 2000);
    const auto plan = returns_planner(kGauss, k, 0.5, 3.5, -4.8);
    LogReturnsConfig cfg;
    cfg.params = {3.5, -4.8};
    cfg.u = plan.u_beta;
    cfg.gamma = plan.gamma;
    cfg.kappa = plan.kappa;
    cfg.n_values = {2000};
    cfg.planted = true;
    cfg.contact_statistics = true;
    cfg.run.master_seed = kMaster;
    cfg.run.command = "log-returns";
    const auto planted = log_returns_experiment(k, cfg);
    const double len = planted.report.number(0, "J_size");
    const double contacts = planted.report.number(0, "expected_contacts");
    const double in_j = planted.report.number(0, "expected_J_contacts");

    cfg.planted = false;
    cfg.n_values = {};
    for (int n = 100; n <= 2000; n += 100) cfg.n_values.push_back(n);
    cfg.run.replicas = 50;
    const auto random = log_returns_experiment(k, cfg);
    const bool ok = contacts >= 0.9 * len && random.instances >= 1000 && random.bound_violations == 0;
    return {ok, fmt("planted n=2000: |J|=%.0f, expected contacts %.3f (%.3f inside J); %lld random instances, %lld "
                    "bound violations",
                    len, contacts, in_j, static_cast<long long>(random.instances),
                    static_cast<long long>(random.bound_violations))};
}

Verdict series() {
    const RenewalKernel k(0.5, 1, 4000);
    int close = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const Environment env(kGauss, 0, 4000, derive_seed(kMaster, "series", rep));
        const auto s = constrained_series(env, kDeloc, k, 4000);
        close += std::expm1(s.log_partials[4000] - s.log_partials[2000]) < 0.01;
    }
    const int depth = 1000;
    std::vector<double> fwd, rev;
    for (int rep = 0; rep < 500; ++rep) {
        const Environment a(kGauss, 0, depth, derive_seed(kMaster, "series-forward", rep));
        fwd.push_back(constrained_series(a, kDeloc, k, depth).log_partials.back());
        const Environment b(kGauss, 0, 2 * depth, derive_seed(kMaster, "series-reversed", rep));
        rev.push_back(reversed_series(b, kDeloc, k, 2 * depth, depth).log_partials.back());
    }
    const auto ks = ks_two_sample(fwd, rev);
    return {close >= 95 && ks.p_value > 0.01,
            fmt("%d/100 replicas change by < 1%% from n=2000 to 4000; KS forward vs reversed D=%.4f p=%.3f", close,
                ks.statistic, ks.p_value)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"oracle equivalence", oracle_equivalence},
        {"sampler exactness", sampler_exactness},
        {"derivative identities", derivative_identities},
        {"lower bounds", lower_bounds},
        {"homogeneous free energy", homogeneous_free_energy_check},
        {"decay of the few-contacts event", decay},
        {"tightness of the last contact", tightness},
        {"many-returns planner", planner},
        {"rich-segment mechanism", rich_segments},
        {"series behaviour", series},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !v.pass;
        std::printf("criterion %2zu %s: %s (%s) [%.1fs]\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    v.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
