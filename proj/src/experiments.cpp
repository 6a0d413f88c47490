#include "pinning/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "pinning/errors.hpp"
#include "pinning/logspace.hpp"
#include "pinning/parallel.hpp"
#include "pinning/rng.hpp"

namespace pinning {

std::uint64_t replica_seed(const ReplicaSettings& settings, int replica) {
    return derive_seed(settings.master_seed, settings.command, static_cast<std::uint64_t>(replica));
}

nlohmann::json describe(const RenewalKernel& kernel) {
    return {{"family", "power-law-constant-phi"},
            {"alpha", kernel.alpha()},
            {"support_min", kernel.support_min()},
            {"horizon", kernel.horizon()},
            {"constant", kernel.constant()}};
}

nlohmann::json describe(const DisorderLaw& law) {
    nlohmann::json j = {{"family", law.family() == DisorderLaw::Family::Gaussian ? "gaussian" : "two-point"}};
    if (law.family() == DisorderLaw::Family::TwoPoint) j["atom"] = law.atom();
    return j;
}

namespace {

nlohmann::json run_header(const std::string& command, const ReplicaSettings& run) {
    return {{"command", command},
            {"code_version", kCodeVersion},
            {"replicas", run.replicas},
            {"master_seed", run.master_seed},
            {"seed_rule", "replica k uses derive_seed(master_seed, \"" + run.command + "\", k)"}};
}

void require_grid(const std::vector<int>& values, const char* name, int min_value) {
    if (values.empty()) throw std::invalid_argument(std::string(name) + ": grid must be nonempty");
    for (int v : values)
        if (v < min_value) {
            std::ostringstream os;
            os << name << ": entries must be >= " << min_value;
            throw std::invalid_argument(os.str());
        }
}

void require_horizon(const RenewalKernel& kernel, int n) {
    if (n > kernel.horizon()) {
        std::ostringstream os;
        os << "horizon: kernel horizon " << kernel.horizon() << " is below the largest n = " << n;
        throw std::invalid_argument(os.str());
    }
}

double binomial_se(double p, int trials) { return trials > 0 ? std::sqrt(p * (1.0 - p) / trials) : 0.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Tightness of the last contact

TightnessResult tightness_scan(const RenewalKernel& kernel, const TightnessGrid& grid) {
    require_grid(grid.n_values, "n_grid", 1);
    require_grid(grid.N_values, "N_grid", 0);
    if (grid.run.replicas < 1) throw std::invalid_argument("replicas: must be >= 1");
    const double h_ann = annealed_critical_point(grid.law, grid.params.beta);
    if (!grid.allow_above_annealed && !(grid.params.h < h_ann)) {
        std::ostringstream os;
        os << "h: " << grid.params.h << " is not below the annealed critical point " << h_ann;
        throw std::invalid_argument(os.str());
    }
    const int n_max = *std::max_element(grid.n_values.begin(), grid.n_values.end());
    require_horizon(kernel, n_max);

    const std::size_t cells = grid.n_values.size() * grid.N_values.size();
    TightnessResult out;
    out.probability.assign(static_cast<std::size_t>(grid.run.replicas), std::vector<double>(cells, 0.0));
    const auto tails = kernel.log_tails();

    parallel_for(static_cast<std::size_t>(grid.run.replicas), grid.run.threads, [&](std::size_t k) {
        const Environment env(grid.law, 0, n_max, replica_seed(grid.run, static_cast<int>(k)));
        TableOptions opts;
        opts.budget = grid.run.budget;
        const auto table = build_partition_table(env, grid.params, kernel, n_max, opts);
        const auto zc = table.log_zc();
        std::vector<double> suffix;
        std::size_t cell = 0;
        for (int n : grid.n_values) {
            // suffix[m] = log sum_{m' >= m} Z^c_{m'} K^+(n - m')
            suffix.assign(static_cast<std::size_t>(n) + 2, kNegInf);
            for (int m = n; m >= 0; --m) suffix[m] = log_add(suffix[m + 1], zc[m] + tails[n - m]);
            const double lz = suffix[0];
            for (int N : grid.N_values) {
                const double p = N >= n ? 0.0 : std::exp(suffix[static_cast<std::size_t>(N) + 1] - lz);
                out.probability[k][cell++] = std::clamp(p, 0.0, 1.0);
            }
        }
    });

    auto& rep = out.report;
    rep.header = run_header("tightness", grid.run);
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(grid.law);
    rep.header["beta"] = grid.params.beta;
    rep.header["h"] = grid.params.h;
    rep.header["h_annealed"] = h_ann;
    rep.header["epsilon"] = grid.epsilon;
    rep.header["boundary"] = "free";
    rep.header["event"] = "P_n(tau_last > N) > epsilon";
    rep.columns = {"n", "N", "frequency", "std_error", "hits", "replicas", "mean_probability", "max_probability"};

    bool monotone = true;
    std::size_t cell = 0;
    for (std::size_t a = 0; a < grid.n_values.size(); ++a) {
        for (std::size_t b = 0; b < grid.N_values.size(); ++b, ++cell) {
            int hits = 0;
            double sum = 0.0, mx = 0.0;
            for (const auto& per : out.probability) {
                hits += per[cell] > grid.epsilon;
                sum += per[cell];
                mx = std::max(mx, per[cell]);
                if (b > 0 && grid.N_values[b] >= grid.N_values[b - 1] && per[cell] > per[cell - 1]) monotone = false;
            }
            const double f = static_cast<double>(hits) / grid.run.replicas;
            rep.add_row({std::int64_t{grid.n_values[a]}, std::int64_t{grid.N_values[b]}, f,
                         binomial_se(f, grid.run.replicas), std::int64_t{hits}, std::int64_t{grid.run.replicas},
                         sum / grid.run.replicas, mx});
        }
    }
    rep.footer["per_replica_monotone_in_N"] = monotone;
    return out;
}

double midpoint_escape_probability(const PartitionTable& table, const std::vector<double>& backward, int N, int M) {
    const int n = static_cast<int>(backward.size()) - 1;
    if (n > table.n()) throw std::invalid_argument("midpoint_escape_probability: table shorter than n");
    if (N < 0 || M < 0) throw std::invalid_argument("midpoint thresholds must be >= 0");
    const int half_lo = n / 2, half_hi = (n + 1) / 2;
    const bool first = N + 1 <= half_lo;        // (N, n/2] nonempty
    const bool second = half_hi <= n - M - 1;   // [n/2, n - M) nonempty
    if (!first && !second) return 0.0;
    const int lo = first ? N + 1 : half_hi;
    const int hi = second ? n - M - 1 : half_lo;

    // Escape = some contact in [lo, hi]; sum over the first such contact i.
    const auto zc = table.log_zc();
    const auto logk = table.kernel().log_masses();
    const int r = table.kernel().support_min();
    const double lz = zc[n];
    double p = 0.0;
    for (int i = lo; i <= hi; ++i) {
        LogAccumulator acc;
        for (int j = 0; j < lo && j <= i - r; ++j) acc.add(zc[j] + logk[i - j]);
        const double v = acc.value();
        if (v != kNegInf) p += std::exp(v + backward[i] - lz);
    }
    return std::clamp(p, 0.0, 1.0);
}

TightnessResult constrained_tightness_scan(const RenewalKernel& kernel, const TightnessGrid& grid) {
    require_grid(grid.n_values, "n_grid", 1);
    require_grid(grid.N_values, "N_grid", 0);
    require_grid(grid.M_values, "M_grid", 0);
    if (grid.run.replicas < 1) throw std::invalid_argument("replicas: must be >= 1");
    const double h_ann = annealed_critical_point(grid.law, grid.params.beta);
    if (!grid.allow_above_annealed && !(grid.params.h < h_ann)) {
        std::ostringstream os;
        os << "h: " << grid.params.h << " is not below the annealed critical point " << h_ann;
        throw std::invalid_argument(os.str());
    }
    const int n_max = *std::max_element(grid.n_values.begin(), grid.n_values.end());
    require_horizon(kernel, n_max);

    const std::size_t cells = grid.n_values.size() * grid.N_values.size() * grid.M_values.size();
    TightnessResult out;
    out.probability.assign(static_cast<std::size_t>(grid.run.replicas), std::vector<double>(cells, 0.0));

    parallel_for(static_cast<std::size_t>(grid.run.replicas), grid.run.threads, [&](std::size_t k) {
        const Environment env(grid.law, 0, n_max, replica_seed(grid.run, static_cast<int>(k)));
        std::size_t cell = 0;
        for (int n : grid.n_values) {
            TableOptions opts;
            opts.budget = grid.run.budget;
            const auto table = build_partition_table(env, grid.params, kernel, n, opts);
            const auto back = backward_log_partition(table, Boundary::Constrained);
            for (int N : grid.N_values)
                for (int M : grid.M_values) out.probability[k][cell++] = midpoint_escape_probability(table, back, N, M);
        }
    });

    auto& rep = out.report;
    rep.header = run_header("tightness-constrained", grid.run);
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(grid.law);
    rep.header["beta"] = grid.params.beta;
    rep.header["h"] = grid.params.h;
    rep.header["h_annealed"] = h_ann;
    rep.header["epsilon"] = grid.epsilon;
    rep.header["boundary"] = "constrained";
    rep.header["event"] = "P^c_n(hat tau_last > N or check tau_last < n - M) > epsilon";
    rep.columns = {"n", "N", "M", "frequency", "std_error", "hits", "replicas", "mean_probability", "max_probability"};
    std::size_t cell = 0;
    for (int n : grid.n_values)
        for (int N : grid.N_values)
            for (int M : grid.M_values) {
                int hits = 0;
                double sum = 0.0, mx = 0.0;
                for (const auto& per : out.probability) {
                    hits += per[cell] > grid.epsilon;
                    sum += per[cell];
                    mx = std::max(mx, per[cell]);
                }
                const double f = static_cast<double>(hits) / grid.run.replicas;
                rep.add_row({std::int64_t{n}, std::int64_t{N}, std::int64_t{M}, f, binomial_se(f, grid.run.replicas),
                             std::int64_t{hits}, std::int64_t{grid.run.replicas}, sum / grid.run.replicas, mx});
                ++cell;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Many-returns parameter chain

nlohmann::json ReturnsPlan::to_json() const {
    return {{"epsilon", epsilon},
            {"beta", beta},
            {"h", h},
            {"alpha", alpha},
            {"K_r", k_r},
            {"h_epsilon", h_epsilon},
            {"u_beta", u_beta},
            {"rate_at_u", rate_at_u},
            {"reward", reward},
            {"beta_threshold", beta_threshold},
            {"delta", delta},
            {"gamma", gamma},
            {"kappa", kappa},
            {"m", m},
            {"lambda", lambda},
            {"nu", nu},
            {"feasible", feasible},
            {"infeasibility_reason", infeasibility_reason},
            {"tie_breaks", "delta = half the slack ratio; 1/gamma = midpoint of the admissible interval"}};
}

ReturnsPlan returns_planner(const DisorderLaw& law, const RenewalKernel& kernel, double epsilon, double beta,
                              double h) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon: must lie in (0, 1)");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta: must be positive");
    ReturnsPlan p;
    p.epsilon = epsilon;
    p.beta = beta;
    p.h = h;
    p.alpha = kernel.alpha();
    p.k_r = kernel.mass(kernel.support_min());
    p.h_epsilon = h_t(law, beta, epsilon, p.alpha);
    p.u_beta = tilt_level(law, beta);
    p.rate_at_u = rate_function(law, p.u_beta).value;
    p.reward = beta * p.u_beta + p.h_epsilon + std::log(p.k_r);
    p.beta_threshold = krcost_threshold(law, epsilon, p.alpha, p.k_r);

    if (!(h > p.h_epsilon)) {
        p.infeasibility_reason = "h must exceed h_epsilon(beta)";
        return p;
    }
    if (!(p.reward > p.rate_at_u)) {
        std::ostringstream os;
        os << "beta below the K(r)-cost threshold " << format_double(p.beta_threshold);
        p.infeasibility_reason = os.str();
        return p;
    }
    p.delta = 0.5 * (p.reward / p.rate_at_u - 1.0);
    const double inv_gamma = 0.5 * ((1.0 + p.delta) * p.rate_at_u + p.reward);
    p.gamma = 1.0 / inv_gamma;
    p.kappa = p.gamma * p.reward - 1.0;
    p.m = static_cast<int>(std::floor(4.0 / p.kappa)) + 1;
    p.lambda = 2.0 * (law.log_mgf(p.m * beta) / p.m + h);
    if (!(p.lambda > 0.0)) {
        p.infeasibility_reason = "lambda must be positive";
        return p;
    }
    p.nu = p.kappa / (2.0 * p.lambda);
    p.feasible = true;
    return p;
}

PlanCheck verify_plan(const ReturnsPlan& plan, const DisorderLaw& law) {
    PlanCheck c;
    const double u = tilt_level(law, plan.beta);
    const double phi = rate_function(law, u).value;
    const double reward = plan.beta * u + h_t(law, plan.beta, plan.epsilon, plan.alpha) + std::log(plan.k_r);
    c.krcost_slack = reward - phi;
    c.delta_slack = reward - (1.0 + plan.delta) * phi;
    c.gamma_upper_slack = reward - 1.0 / plan.gamma;
    c.gamma_lower_slack = 1.0 / plan.gamma - (1.0 + plan.delta) * phi;
    c.kappa_residual = plan.gamma * reward - (1.0 + plan.kappa);
    c.m_slack = plan.m - 4.0 / plan.kappa;
    c.nu_value = plan.nu;
    c.legendre_residual = plan.beta * u - phi - law.log_mgf(plan.beta);
    c.ok = plan.feasible && c.krcost_slack > 0 && c.delta_slack > 0 && c.gamma_upper_slack > 0 &&
           c.gamma_lower_slack > 0 && plan.delta > 0 && plan.kappa > 0 && std::fabs(c.kappa_residual) < 1e-12 &&
           c.m_slack > 0 && plan.lambda > 0 && plan.nu > 0 && std::fabs(c.legendre_residual) < 1e-10;
    return c;
}

std::vector<std::int64_t> rich_subsequence(std::int64_t n0, int r, double gamma, int count) {
    if (r < 1 || !(gamma > 0.0) || count < 1) throw std::invalid_argument("rich_subsequence: need r >= 1, gamma > 0, count >= 1");
    if (n0 < 2 || 2.0 * r * gamma * std::log(static_cast<double>(n0)) < 1.0)
        throw std::invalid_argument("n0: too small, need 2 r gamma log n0 >= 1");
    std::vector<std::int64_t> seq{n0};
    seq.reserve(static_cast<std::size_t>(count));
    while (static_cast<int>(seq.size()) < count) {
        const std::int64_t cur = seq.back();
        const auto step = static_cast<std::int64_t>(std::ceil(2.0 * r * gamma * std::log(static_cast<double>(cur))));
        const std::int64_t next = cur + step;
        const std::int64_t lowest = next - static_cast<std::int64_t>(r) * (rich_segment_length(next, gamma) - 1);
        if (lowest <= cur) {
            std::ostringstream os;
            os << "n0: rich segments of " << cur << " and " << next << " overlap; increase n0";
            throw std::invalid_argument(os.str());
        }
        seq.push_back(next);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Log-many returns

RenewalTrajectory rich_segment_trajectory(std::int64_t n, int r, double gamma) {
    const int len = rich_segment_length(n, gamma);
    const std::int64_t lowest = n - static_cast<std::int64_t>(r) * (len - 1);
    if (lowest <= 0) throw std::invalid_argument("rich segment does not fit inside (0, n]");
    RenewalTrajectory t;
    t.horizon = static_cast<int>(n);
    for (int i = len - 1; i >= 0; --i) t.epochs.push_back(static_cast<int>(n - static_cast<std::int64_t>(i) * r));
    return t;
}

LogReturnsResult log_returns_experiment(const RenewalKernel& kernel, const LogReturnsConfig& config) {
    require_grid(config.n_values, "n_grid", 2);
    if (!(config.gamma > 0.0)) throw std::invalid_argument("gamma: must be positive");
    if (config.run.replicas < 1) throw std::invalid_argument("replicas: must be >= 1");
    for (double nu : config.nu_grid)
        if (!(nu > 0.0)) throw std::invalid_argument("nu_grid: entries must be positive");
    const int n_max = *std::max_element(config.n_values.begin(), config.n_values.end());
    require_horizon(kernel, n_max);
    const int r = kernel.support_min();

    int max_threshold = 0;
    for (int n : config.n_values)
        for (double nu : config.nu_grid) max_threshold = std::max(max_threshold, contact_count_bound(n, nu));
    const bool counted = !config.nu_grid.empty();
    const auto tails = kernel.log_tails();
    const double log_c = std::log(kernel.constant());

    const std::size_t nn = config.n_values.size(), nv = config.nu_grid.size();
    struct Row {
        std::uint64_t seed = 0;
        int len = 0;
        double average = 0, log_z = 0, j_weight = 0, kappa_bound = 0, contacts = NAN, j_contacts = NAN;
        bool hit = false, bound_ok = false, kappa_ok = false;
        std::vector<double> p, running;
    };
    std::vector<Row> rows(static_cast<std::size_t>(config.run.replicas) * nn);

    // P(|tau cap [0, n]| > N) from a count-resolved table
    auto many_contacts = [&](const PartitionTable& t, int n, int N, double lz) {
        LogAccumulator acc;
        for (int m = 0; m <= n; ++m)
            for (int b = N; b < t.count_buckets(); ++b) acc.add(t.log_zc(m, b) + tails[n - m]);
        const double v = acc.value();
        return v == kNegInf ? 0.0 : std::clamp(std::exp(v - lz), 0.0, 1.0);
    };

    parallel_for(static_cast<std::size_t>(config.run.replicas), config.run.threads, [&](std::size_t k) {
        const std::uint64_t seed = replica_seed(config.run, static_cast<int>(k));
        const Environment base_env(config.law, 0, n_max, seed);
        TableOptions plain;
        plain.budget = config.run.budget;
        TableOptions with_counts = plain;
        with_counts.count_cap = std::max(0, max_threshold - 1);

        std::optional<PartitionTable> base, counts;
        if (!config.planted) {
            base = build_partition_table(base_env, config.params, kernel, n_max, plain);
            if (counted) counts = build_partition_table(base_env, config.params, kernel, n_max, with_counts);
        }
        std::vector<double> running(nv, 0.0);
        for (std::size_t a = 0; a < nn; ++a) {
            const int n = config.n_values[a];
            Row& row = rows[k * nn + a];
            row.seed = seed;
            auto seg = rich_segment_scan(base_env, n, r, config.gamma, config.u);
            Environment env = base_env;
            if (config.planted) {
                env = base_env.planted(seg.sites, config.u);
                seg = rich_segment_scan(env, n, r, config.gamma, config.u);
                base = build_partition_table(env, config.params, kernel, n, plain);
                if (counted) counts = build_partition_table(env, config.params, kernel, n, with_counts);
            }
            row.len = static_cast<int>(seg.sites.size());
            row.average = seg.average;
            row.hit = seg.hit;
            row.log_z = free_log_partition(*base, n);
            row.j_weight = trajectory_log_weight(rich_segment_trajectory(n, r, config.gamma), env, config.params,
                                                 kernel, Boundary::Free);
            // The J_n trajectory is one summand of Z_n; allow only rounding slack.
            row.bound_ok = row.log_z >= row.j_weight - 1e-12 * std::max(1.0, std::fabs(row.j_weight));
            if (config.kappa) {
                const double logn = std::log(static_cast<double>(n));
                row.kappa_bound = std::log(0.5) + (*config.kappa - kernel.alpha()) * logn + log_c;
                row.kappa_ok = row.log_z >= row.kappa_bound;
            } else {
                row.kappa_bound = NAN;
            }
            row.p.resize(nv);
            row.running.resize(nv);
            for (std::size_t v = 0; v < nv; ++v) {
                row.p[v] = many_contacts(*counts, n, contact_count_bound(n, config.nu_grid[v]), row.log_z);
                running[v] = std::max(running[v], row.p[v]);
                row.running[v] = running[v];
            }
            if (config.contact_statistics) {
                const auto st = contact_statistics(env, config.params, kernel, n, Boundary::Free, false,
                                                   config.run.budget);
                row.contacts = st.expected_contacts;
                row.j_contacts = 0.0;
                for (auto s : seg.sites) row.j_contacts += st.occupation[static_cast<std::size_t>(s)];
            }
        }
    });

    LogReturnsResult out;
    auto& rep = out.report;
    rep.header = run_header("log-returns", config.run);
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(config.law);
    rep.header["beta"] = config.params.beta;
    rep.header["h"] = config.params.h;
    rep.header["u"] = config.u;
    rep.header["gamma"] = config.gamma;
    rep.header["kappa"] = config.kappa ? nlohmann::json(*config.kappa) : nlohmann::json(nullptr);
    rep.header["nu_grid"] = config.nu_grid;
    rep.header["synthetic"] = config.planted;
    rep.header["segment_rule"] = "J_n = {n - i r : 0 <= i < ceil(gamma log n)}";
    rep.columns = {"replica", "seed", "n", "J_size", "J_average", "D_hit", "log_Z", "log_J_weight", "J_bound_ok",
                   "log_kappa_bound", "kappa_bound_ok", "expected_contacts", "expected_J_contacts"};
    for (double nu : config.nu_grid) rep.columns.push_back("p_nu_" + format_double(nu));
    for (double nu : config.nu_grid) rep.columns.push_back("running_max_nu_" + format_double(nu));

    std::int64_t hits = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        std::vector<Cell> cells{std::int64_t(i / nn),
                                std::to_string(row.seed),
                                std::int64_t{config.n_values[i % nn]},
                                std::int64_t{row.len},
                                row.average,
                                std::int64_t{row.hit},
                                row.log_z,
                                row.j_weight,
                                std::int64_t{row.bound_ok},
                                row.kappa_bound,
                                std::int64_t{config.kappa ? row.kappa_ok : 0},
                                row.contacts,
                                row.j_contacts};
        for (double p : row.p) cells.emplace_back(p);
        for (double p : row.running) cells.emplace_back(p);
        rep.add_row(std::move(cells));
        out.bound_violations += !row.bound_ok;
        hits += row.hit;
        ++out.instances;
    }
    rep.footer["J_bound_violations"] = out.bound_violations;
    rep.footer["instances"] = out.instances;
    rep.footer["D_hits"] = hits;
    return out;
}

// ---------------------------------------------------------------------------
// Free-renewal decay

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need >= 2 paired points");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_slope: x values are all equal");
    return sxy / sxx;
}

DecayResult decay_check(const RenewalKernel& kernel, double b, double c1, const std::vector<int>& n_values,
                        std::uint64_t cell_budget) {
    require_grid(n_values, "n_grid", 2);
    if (!(b > 0.0 && b < 0.5)) throw std::invalid_argument("b: must lie in (0, 1/2)");
    if (!(c1 > 0.0)) throw std::invalid_argument("C1: must be positive");
    std::vector<int> ns = n_values;
    std::sort(ns.begin(), ns.end());
    require_horizon(kernel, ns.back());
    const double exponent = kernel.alpha() / (9.0 * b);

    DecayResult out;
    auto& rep = out.report;
    rep.header = {{"command", "decay-check"}, {"code_version", kCodeVersion}, {"kernel", describe(kernel)},
                  {"b", b}, {"C1", c1}, {"bound", "n^{-alpha/(9b)}"}, {"bound_exponent", -exponent},
                  {"integer_parts", "contacts <= floor(C1 log n); gaps and final gap < ceil(b n)"}};
    rep.columns = {"n", "max_contacts", "gap_bound", "probability", "log_probability", "bound", "holds"};
    std::vector<double> lx, ly;
    std::vector<bool> holds;
    for (int n : ns) {
        FreeEventQuery q;
        q.max_contacts = contact_count_bound(n, c1);
        q.gap_cap = gap_length_bound(n, b);
        q.require_final_gap_below = gap_length_bound(n, b);
        const double p = free_event_probability(kernel, n, q, cell_budget);
        const double bound = std::pow(static_cast<double>(n), -exponent);
        holds.push_back(p <= bound);
        if (p > 0.0) {
            lx.push_back(std::log(static_cast<double>(n)));
            ly.push_back(std::log(p));
        }
        rep.add_row({std::int64_t{n}, std::int64_t{q.max_contacts}, std::int64_t{q.gap_cap}, p,
                     p > 0.0 ? std::log(p) : kNegInf, bound, std::int64_t{p <= bound}});
    }
    const auto first = std::find(holds.begin(), holds.end(), true);
    if (first != holds.end()) {
        out.first_crossing = ns[static_cast<std::size_t>(first - holds.begin())];
        out.persists = std::all_of(first, holds.end(), [](bool v) { return v; });
    }
    out.fitted_slope = lx.size() >= 2 ? fit_slope(lx, ly) : NAN;
    rep.footer["first_crossing"] = out.first_crossing ? nlohmann::json(*out.first_crossing) : nlohmann::json(nullptr);
    rep.footer["persists"] = out.persists;
    rep.footer["fitted_slope"] = std::isfinite(out.fitted_slope) ? nlohmann::json(out.fitted_slope) : nlohmann::json(nullptr);
    rep.footer["slope_target"] = -exponent + 0.1;
    return out;
}

// ---------------------------------------------------------------------------
// Free energy

namespace {

// Upper incomplete gamma for s > -k, by the downward recurrence
// Gamma(s, x) = (Gamma(s + 1, x) - x^s e^{-x}) / s.
double upper_gamma(double s, double x) {
    if (s > 0.0) return boost::math::tgamma(s, x);
    if (s == 0.0) return boost::math::expint(1, x);
    return (upper_gamma(s + 1.0, x) - std::pow(x, s) * std::exp(-x)) / s;
}

}  // namespace

double homogeneous_free_energy(const RenewalKernel& kernel, double h_eff) {
    if (h_eff <= 0.0) return 0.0;
    const int H = kernel.horizon();
    const double alpha = kernel.alpha(), c = kernel.constant();
    const auto masses = kernel.masses();
    // log sum_n K(n) e^{-f n}; past the horizon K(n) = c n^{-1-alpha} and the
    // sum is replaced by its Euler-Maclaurin expansion.
    auto log_transform = [&](double f) {
        long double s = 0.0L;
        for (int n = kernel.support_min(); n <= H; ++n) s += masses[n] * std::exp(-f * n);
        const double a = H + 1.0;
        const double g = c * std::pow(a, -1.0 - alpha) * std::exp(-f * a);
        const double dg = -g * ((1.0 + alpha) / a + f);
        const double integral = c * std::pow(f, alpha) * upper_gamma(-alpha, f * a);
        s += integral + 0.5 * g - dg / 12.0;
        return static_cast<double>(std::log(s));
    };
    // log transform + h_eff decreases from h_eff > 0 at f = 0 to <= 0 at f = h_eff.
    double lo = 0.0, hi = h_eff;
    if (log_transform(hi) + h_eff > 0.0) throw NumericalFailure("homogeneous_free_energy: root bracket failure");
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (log_transform(mid) + h_eff > 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

FreeEnergyResult free_energy_estimate(const RenewalKernel& kernel, const DisorderLaw& law, const PolymerParams& params,
                                      const std::vector<int>& n_values, const ReplicaSettings& run) {
    require_grid(n_values, "n_grid", 1);
    if (run.replicas < 1) throw std::invalid_argument("replicas: must be >= 1");
    std::vector<int> ns = n_values;
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    const int n_max = ns.back();
    require_horizon(kernel, n_max);

    std::vector<std::vector<double>> per(static_cast<std::size_t>(run.replicas), std::vector<double>(ns.size()));
    parallel_for(static_cast<std::size_t>(run.replicas), run.threads, [&](std::size_t k) {
        const Environment env(law, 0, n_max, replica_seed(run, static_cast<int>(k)));
        TableOptions opts;
        opts.budget = run.budget;
        const auto table = build_partition_table(env, params, kernel, n_max, opts);
        for (std::size_t i = 0; i < ns.size(); ++i) per[k][i] = free_log_partition(table, ns[i]) / ns[i];
    });

    // E Z_n is the homogeneous partition function at h + log M(beta).
    const double h_eff = params.h + law.log_mgf(params.beta);
    const Environment flat = Environment::from_values(law, 0, std::vector<double>(static_cast<std::size_t>(n_max) + 1, 0.0));
    TableOptions opts;
    opts.budget = run.budget;
    const auto annealed_table = build_partition_table(flat, PolymerParams{0.0, h_eff}, kernel, n_max, opts);

    FreeEnergyResult out;
    out.annealed = homogeneous_free_energy(kernel, h_eff);
    auto& rep = out.report;
    rep.header = run_header("free-energy", run);
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(law);
    rep.header["beta"] = params.beta;
    rep.header["h"] = params.h;
    rep.header["h_eff"] = h_eff;
    rep.header["annealed_free_energy"] = out.annealed;
    rep.columns = {"n", "quenched", "std_error", "extrapolated", "annealed_finite_n", "annealed", "jensen_ok"};
    bool jensen = true;
    double prev_mean = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        double sum = 0.0, sq = 0.0;
        for (const auto& row : per) {
            sum += row[i];
            sq += row[i] * row[i];
        }
        const double mean = sum / run.replicas;
        const double var = run.replicas > 1 ? std::max(0.0, (sq - run.replicas * mean * mean) / (run.replicas - 1)) : 0.0;
        const double se = std::sqrt(var / run.replicas);
        const double extrap = i == 0 ? NAN : (ns[i] * mean - ns[i - 1] * prev_mean) / (ns[i] - ns[i - 1]);
        const double annealed_n = free_log_partition(annealed_table, ns[i]) / ns[i];
        const bool ok = mean <= annealed_n + 3.0 * se + 1e-12 * std::max(1.0, std::fabs(annealed_n));
        jensen = jensen && ok;
        rep.add_row({std::int64_t{ns[i]}, mean, se, extrap, annealed_n, out.annealed, std::int64_t{ok}});
        prev_mean = mean;
        if (i + 1 == ns.size()) {
            out.quenched = mean;
            out.quenched_se = se;
            out.extrapolated = i == 0 ? mean : extrap;
        }
    }
    rep.footer["jensen_ok"] = jensen;
    rep.footer["quenched"] = out.quenched;
    rep.footer["extrapolated"] = out.extrapolated;
    return out;
}

// ---------------------------------------------------------------------------
// Event series

SeriesEventResult series_event_sum(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                                   int N, int n_max, double hc_surrogate, double eps, const DpBudget& budget) {
    if (N < 0) throw std::invalid_argument("N: must be >= 0");
    if (n_max < 0) throw std::invalid_argument("n_max: must be >= 0");
    SeriesEventResult out;
    out.log_partials.assign(static_cast<std::size_t>(n_max) + 1, kNegInf);
    const double x = hc_surrogate - params.h - eps;
    out.log_envelope = x > 0.0 ? -N * x - std::log(-std::expm1(-x)) : std::numeric_limits<double>::infinity();
    if (N > n_max) return out;

    TableOptions opts;
    opts.budget = budget;
    opts.count_cap = N >= 1 ? N - 1 : -1;  // overflow bucket = more than N contacts in [0, m]
    const auto table = build_partition_table(env, params, kernel, n_max, opts);
    double running = kNegInf;
    for (int m = 0; m <= n_max; ++m) {
        double term = kNegInf;
        if (N == 0) {
            term = table.log_zc(m);
        } else {
            for (int bkt = N; bkt < table.count_buckets(); ++bkt) term = log_add(term, table.log_zc(m, bkt));
        }
        running = log_add(running, term);
        out.log_partials[m] = running;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Smoke checks

double enumerate_log_partition(const Environment& env, const PolymerParams& params, const RenewalKernel& kernel,
                               int n, Boundary boundary) {
    if (n < 0 || n > 20) throw std::invalid_argument("enumerate_log_partition: n must lie in [0, 20]");
    LogAccumulator acc;
    const int free_bits = boundary == Boundary::Free ? n : std::max(0, n - 1);
    for (std::uint32_t mask = 0; mask < (1u << free_bits); ++mask) {
        RenewalTrajectory t;
        t.horizon = n;
        for (int i = 1; i <= free_bits; ++i)
            if (mask & (1u << (i - 1))) t.epochs.push_back(i);
        if (boundary == Boundary::Constrained && n > 0) t.epochs.push_back(n);
        acc.add(trajectory_log_weight(t, env, params, kernel, boundary));
    }
    return acc.value();
}

double smoke_check(const RenewalKernel& kernel, const DisorderLaw& law, const PolymerParams& params,
                   std::uint64_t seed) {
    double worst = 0.0;
    for (int n : {1, 7, 12}) {
        if (n > kernel.horizon()) continue;
        const Environment env(law, 0, n, derive_seed(seed, "smoke", static_cast<std::uint64_t>(n)));
        for (auto boundary : {Boundary::Free, Boundary::Constrained}) {
            const double dp = log_partition(env, params, kernel, n, boundary);
            const double brute = enumerate_log_partition(env, params, kernel, n, boundary);
            if (dp == kNegInf && brute == kNegInf) continue;
            worst = std::max(worst, std::fabs(std::expm1(dp - brute)));
        }
    }
    return worst;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: samples must be nonempty");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(i / na - j / nb));
    }
    const double en = std::sqrt(na * nb / (na + nb));
    const double lambda = (en + 0.12 + 0.11 / en) * d;
    // Kolmogorov survival function
    double p = 0.0, sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
        p += term;
        if (std::fabs(term) < 1e-12 * std::fabs(p) || std::fabs(term) < 1e-300) break;
        sign = -sign;
    }
    if (lambda < 0.2) p = 1.0;
    return {d, std::clamp(p, 0.0, 1.0)};
}

}  // namespace pinning
