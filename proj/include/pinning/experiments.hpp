#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pinning/disorder.hpp"
#include "pinning/polymer.hpp"
#include "pinning/renewal.hpp"
#include "pinning/report.hpp"

namespace pinning {

/// Shared run settings for replica experiments. Replica k draws its
/// environment from derive_seed(master_seed, command, k).
struct ReplicaSettings {
    int replicas = 1;
    std::uint64_t master_seed = 1;
    std::string command = "experiment";
    int threads = 1;
    DpBudget budget;
};

std::uint64_t replica_seed(const ReplicaSettings& settings, int replica);

nlohmann::json describe(const RenewalKernel& kernel);
nlohmann::json describe(const DisorderLaw& law);

struct TightnessGrid {
    DisorderLaw law = DisorderLaw::gaussian();
    PolymerParams params;
    std::vector<int> n_values;
    std::vector<int> N_values;
    std::vector<int> M_values;  // constrained scan only
    double epsilon = 0.1;
    ReplicaSettings run;
    // Scans above the annealed critical point are refused unless set.
    bool allow_above_annealed = false;
};

struct TightnessResult {
    ExperimentReport report;
    // probability[replica][row] for the rows of `report`, in row order
    std::vector<std::vector<double>> probability;
};

/// Replica frequency of {P_{n,omega}(tau_last > N) > epsilon} on the (n, N) grid.
TightnessResult tightness_scan(const RenewalKernel& kernel, const TightnessGrid& grid);

/// Replica frequency of {P^c_{n,omega}(hat tau_last > N or check tau_last < n - M) > epsilon}.
TightnessResult constrained_tightness_scan(const RenewalKernel& kernel, const TightnessGrid& grid);

// Constrained Gibbs probability of {hat tau_last > N} union {check tau_last < n - M},
// from forward and backward constrained tables.
double midpoint_escape_probability(const PartitionTable& table, const std::vector<double>& backward, int N,
                                   int M);

/// Parameter chain for the many-returns regime at large beta.
struct ReturnsPlan {
    double epsilon = 0.0;
    double beta = 0.0;
    double h = 0.0;
    double alpha = 0.0;
    double k_r = 0.0;
    double h_epsilon = 0.0;
    double u_beta = 0.0;
    double rate_at_u = 0.0;      // Phi(u_beta)
    double reward = 0.0;         // beta u_beta + h_eps - log(1/K(r))
    double beta_threshold = 0.0; // minimal beta for the K(r) cost inequality
    double delta = 0.0;
    double gamma = 0.0;
    double kappa = 0.0;
    int m = 0;
    double lambda = 0.0;
    double nu = 0.0;
    bool feasible = false;
    std::string infeasibility_reason;

    nlohmann::json to_json() const;
};

ReturnsPlan returns_planner(const DisorderLaw& law, const RenewalKernel& kernel, double epsilon, double beta,
                              double h);

struct PlanCheck {
    double krcost_slack = 0.0;    // reward - Phi(u)
    double delta_slack = 0.0;     // reward - (1 + delta) Phi(u)
    double gamma_upper_slack = 0.0;  // reward - 1/gamma
    double gamma_lower_slack = 0.0;  // 1/gamma - (1 + delta) Phi(u)
    double kappa_residual = 0.0;  // gamma reward - (1 + kappa)
    double m_slack = 0.0;         // m - 4/kappa
    double nu_value = 0.0;
    double legendre_residual = 0.0;  // beta u - Phi(u) - log M(beta)
    bool ok = false;
};

// Recomputes every chain inequality of a feasible plan from its raw values.
PlanCheck verify_plan(const ReturnsPlan& plan, const DisorderLaw& law);

/// n_{j+1} = n_j + ceil(2 r gamma log n_j); checks consecutive J_{n_j} windows are disjoint.
std::vector<std::int64_t> rich_subsequence(std::int64_t n0, int r, double gamma, int count);

struct LogReturnsConfig {
    DisorderLaw law = DisorderLaw::gaussian();
    PolymerParams params;
    double u = 0.0;
    double gamma = 0.0;
    std::optional<double> kappa;   // from a plan; enables the n^{-alpha+kappa} check
    std::vector<double> nu_grid;   // thresholds nu' for {|tau cap [0,n]| > nu' log n}
    std::vector<int> n_values;
    bool planted = false;          // omega = u on J_n (synthetic)
    bool contact_statistics = false;
    ReplicaSettings run;
};

struct LogReturnsResult {
    ExperimentReport report;
    std::int64_t bound_violations = 0;  // instances with log Z_n < weight of the J_n trajectory
    std::int64_t instances = 0;
};

LogReturnsResult log_returns_experiment(const RenewalKernel& kernel, const LogReturnsConfig& config);

// The trajectory {0} cup J_n, free at n.
RenewalTrajectory rich_segment_trajectory(std::int64_t n, int r, double gamma);

struct DecayResult {
    ExperimentReport report;
    std::optional<int> first_crossing;  // smallest tabulated n from which the bound holds onward
    bool persists = false;
    double fitted_slope = 0.0;          // least squares slope of log P vs log n
};

/// Exact free-renewal probability of E^c_{n, C1 log n} cap A^c_{b,n} on the n grid,
/// against n^{-alpha / (9 b)}.
DecayResult decay_check(const RenewalKernel& kernel, double b, double c1, const std::vector<int>& n_values,
                        std::uint64_t cell_budget = std::uint64_t{1} << 21);

// Least squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Free energy of the homogeneous model: root f of sum_n K(n) e^{-f n} = e^{-h_eff}; 0 if h_eff <= 0.
double homogeneous_free_energy(const RenewalKernel& kernel, double h_eff);

struct FreeEnergyResult {
    ExperimentReport report;
    double quenched = 0.0;      // replica mean of (1/n) log Z_n at the largest n
    double quenched_se = 0.0;
    double extrapolated = 0.0;  // offset-cancelling estimate from the two largest n
    double annealed = 0.0;
};

FreeEnergyResult free_energy_estimate(const RenewalKernel& kernel, const DisorderLaw& law,
                                      const PolymerParams& params, const std::vector<int>& n_values,
                                      const ReplicaSettings& run);

struct SeriesEventResult {
    std::vector<double> log_partials;  // log sum_{m <= n} Z^c_m(E_{m,N}), n = 0..n_max
    double log_envelope = 0.0;         // log sum_{k >= N} e^{-k (h_c - h - eps)}
};

SeriesEventResult series_event_sum(const Environment& env, const PolymerParams& params,
                                   const RenewalKernel& kernel, int N, int n_max, double hc_surrogate,
                                   double eps = 0.0, const DpBudget& budget = {});

/// Brute-force enumeration used as an in-run smoke test before experiment grids.
double enumerate_log_partition(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                               int n, Boundary boundary);
// Returns the largest relative deviation found on a few n <= 12 instances.
double smoke_check(const RenewalKernel& kernel, const DisorderLaw& law, const PolymerParams& params,
                   std::uint64_t seed);

// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace pinning
