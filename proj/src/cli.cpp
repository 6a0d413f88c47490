#include "pinning/cli.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "pinning/errors.hpp"
#include "pinning/experiments.hpp"
#include "pinning/logspace.hpp"
#include "pinning/parallel.hpp"

namespace pinning {

namespace {

const std::set<std::string> kCommonKeys = {"alpha", "r", "horizon", "law", "atom", "seed", "threads", "budget",
                                           "count_cells"};
const std::set<std::string> kModelKeys = {"beta", "h", "h_shift_ann", "h_shift_eps", "epsilon"};

struct Context {
    std::string command;
    const RunConfig& cfg;
    std::filesystem::path out_dir;
    std::ostream& log;
    std::vector<std::filesystem::path> written;

    void allow(std::initializer_list<std::string> extra, bool model = true) const {
        std::set<std::string> keys = kCommonKeys;
        if (model) keys.insert(kModelKeys.begin(), kModelKeys.end());
        keys.insert(extra.begin(), extra.end());
        cfg.require_known(keys);
    }

    std::uint64_t seed() const { return cfg.get_uint("seed", 1); }

    int threads() const {
        const auto t = cfg.get_int("threads", 1);
        if (t < 1 || t > 1024) throw std::invalid_argument("threads: must lie in [1, 1024]");
        return static_cast<int>(t);
    }

    DpBudget budget() const {
        DpBudget b;
        b.max_ops = cfg.get_uint("budget", b.max_ops);
        b.max_count_cells = cfg.get_uint("count_cells", b.max_count_cells);
        return b;
    }

    RenewalKernel kernel(int needed) const {
        const double alpha = cfg.get_double("alpha", 0.5);
        const auto r = cfg.get_int("r", 1);
        const auto horizon = cfg.get_int("horizon", std::max(needed, 1));
        if (r < 1 || r > 1'000'000) throw std::invalid_argument("r: must lie in [1, 10^6]");
        if (horizon < 1 || horizon > 100'000'000) throw std::invalid_argument("horizon: must lie in [1, 10^8]");
        if (horizon < needed)
            throw std::invalid_argument("horizon: " + std::to_string(horizon) + " is below the required n = " +
                                        std::to_string(needed));
        return RenewalKernel(alpha, static_cast<int>(r), static_cast<int>(horizon));
    }

    DisorderLaw law() const {
        const auto name = cfg.get_string("law", "gaussian");
        if (name == "gaussian") {
            if (cfg.has("atom")) throw std::invalid_argument("atom: only valid for law = two-point");
            return DisorderLaw::gaussian();
        }
        if (name == "two-point" || name == "two_point") return DisorderLaw::two_point(cfg.get_double("atom", 1.0));
        throw std::invalid_argument("law: expected gaussian or two-point, got '" + name + "'");
    }

    double epsilon(double fallback) const { return cfg.get_double("epsilon", fallback); }

    // h from `h`, or a shift from the annealed critical point or from h_epsilon(beta).
    PolymerParams params(const DisorderLaw& law, double alpha, double default_beta,
                         const std::function<double(double)>& default_h) const {
        PolymerParams p;
        p.beta = cfg.get_double("beta", default_beta);
        if (!std::isfinite(p.beta) || p.beta < 0.0) throw std::invalid_argument("beta: must be finite and >= 0");
        const int given = cfg.has("h") + cfg.has("h_shift_ann") + cfg.has("h_shift_eps");
        if (given > 1) throw std::invalid_argument("h: give only one of h, h_shift_ann, h_shift_eps");
        if (cfg.has("h")) {
            p.h = cfg.get_double("h", 0.0);
        } else if (cfg.has("h_shift_ann")) {
            p.h = annealed_critical_point(law, p.beta) + cfg.get_double("h_shift_ann", 0.0);
        } else if (cfg.has("h_shift_eps")) {
            const double eps = epsilon(0.5);
            if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("epsilon: must lie in (0, 1)");
            p.h = h_t(law, p.beta, eps, alpha) + cfg.get_double("h_shift_eps", 0.0);
        } else {
            p.h = default_h(p.beta);
        }
        if (!std::isfinite(p.h)) throw std::invalid_argument("h: must be finite");
        return p;
    }

    ReplicaSettings replicas(int fallback) const {
        ReplicaSettings run;
        const auto k = cfg.get_int("replicas", fallback);
        if (k < 1 || k > 10'000'000) throw std::invalid_argument("replicas: must lie in [1, 10^7]");
        run.replicas = static_cast<int>(k);
        run.master_seed = seed();
        run.command = command;
        run.threads = threads();
        run.budget = budget();
        return run;
    }

    void emit(ExperimentReport& report, const std::string& stem = {}) {
        report.header["config"] = cfg.to_json();
        report.header["command"] = command;
        report.header["code_version"] = kCodeVersion;
        const std::string base = stem.empty() ? command : stem;
        const auto csv = out_dir / (base + ".csv");
        const auto json = out_dir / (base + ".json");
        report.write_csv(csv);
        report.write_json(json);
        written.push_back(csv);
        written.push_back(json);
    }

    void emit_svg(const std::string& stem, const std::string& svg) {
        const auto path = out_dir / (stem + ".svg");
        write_text(path, svg);
        written.push_back(path);
    }
};

int grid_max(const std::vector<int>& v) { return v.empty() ? 1 : *std::max_element(v.begin(), v.end()); }

Boundary parse_boundary(const RunConfig& cfg) {
    const auto b = cfg.get_string("boundary", "free");
    if (b == "free") return Boundary::Free;
    if (b == "constrained") return Boundary::Constrained;
    throw std::invalid_argument("boundary: expected free or constrained, got '" + b + "'");
}

int positive_n(const RunConfig& cfg, const std::string& key, int fallback) {
    const auto n = cfg.get_int(key, fallback);
    if (n < 1 || n > 100'000'000) throw std::invalid_argument(key + ": must lie in [1, 10^8]");
    return static_cast<int>(n);
}

// --- kernel-check -----------------------------------------------------------

void kernel_check(Context& ctx) {
    ctx.allow({"samples", "rows"}, false);
    const auto kernel = ctx.kernel(static_cast<int>(ctx.cfg.get_int("horizon", 4096)));
    const auto samples = ctx.cfg.get_int("samples", 0);
    const auto nrows = ctx.cfg.get_int("rows", 20);
    if (samples < 0) throw std::invalid_argument("samples: must be >= 0");
    if (nrows < 1) throw std::invalid_argument("rows: must be >= 1");
    const int r = kernel.support_min();
    const int last_row = static_cast<int>(std::min<std::int64_t>(kernel.horizon(), r + nrows - 1));

    // first gap histogram from independent draws
    std::vector<std::int64_t> hist(static_cast<std::size_t>(last_row) + 1, 0);
    for (std::int64_t s = 0; s < samples; ++s) {
        CounterRng rng(derive_seed(ctx.seed(), ctx.command, static_cast<std::uint64_t>(s)));
        const auto traj = sample_free_renewal(kernel, kernel.horizon(), rng);
        if (traj.epochs.size() > 1 && traj.epochs[1] <= last_row) ++hist[static_cast<std::size_t>(traj.epochs[1])];
    }

    ExperimentReport rep;
    rep.header["kernel"] = describe(kernel);
    rep.header["samples"] = samples;
    rep.header["seed"] = ctx.seed();
    rep.columns = {"n", "mass", "tail", "log_mass", "empirical", "std_error", "z_score"};
    double worst_z = 0.0;
    for (int n = r; n <= last_row; ++n) {
        const double p = kernel.mass(n);
        const double emp = samples ? static_cast<double>(hist[n]) / samples : NAN;
        const double se = samples ? std::sqrt(p * (1 - p) / samples) : NAN;
        const double z = samples && se > 0 ? (emp - p) / se : NAN;
        if (std::isfinite(z)) worst_z = std::max(worst_z, std::fabs(z));
        rep.add_row({std::int64_t{n}, p, kernel.tail(n), kernel.log_mass(n), emp, se, z});
    }
    long double total = 0.0L;
    for (int n = r; n <= kernel.horizon(); ++n) total += kernel.mass(n);
    const double closure = static_cast<double>(total + kernel.tail(kernel.horizon())) - 1.0;
    const auto u = renewal_mass_function(kernel, std::min(kernel.horizon(), 2000));
    double residual = 0.0;
    for (std::size_t m = 1; m < u.size(); ++m) {
        long double s = 0.0L;
        for (std::size_t j = static_cast<std::size_t>(r); j <= m; ++j) s += kernel.mass(static_cast<int>(j)) * u[m - j];
        residual = std::max(residual, std::fabs(static_cast<double>(s) - u[m]));
    }
    rep.footer["normalization_bracket"] = kernel.normalization_bracket();
    rep.footer["tail_at_zero"] = kernel.tail(0);
    rep.footer["mass_closure_error"] = closure;
    rep.footer["renewal_equation_residual"] = residual;
    rep.footer["max_abs_z"] = samples ? nlohmann::json(worst_z) : nlohmann::json(nullptr);
    rep.footer["pass"] = kernel.tail(0) == 1.0 && std::fabs(closure) < 1e-12 && residual < 1e-12 &&
                         (samples == 0 || worst_z < 5.0);
    ctx.emit(rep);
    ctx.log << "kernel-check: constant " << format_double(kernel.constant()) << ", pass "
            << (rep.footer["pass"].get<bool>() ? "yes" : "no") << "\n";
}

// --- partition ----------------------------------------------------------------

void partition(Context& ctx) {
    ctx.allow({"n", "boundary", "count_distribution", "smoke"});
    const int n = positive_n(ctx.cfg, "n", 100);
    const auto kernel = ctx.kernel(n);
    const auto law = ctx.law();
    const auto params = ctx.params(law, kernel.alpha(), 0.0, [&](double b) { return annealed_critical_point(law, b) - 1.0; });
    const auto boundary = parse_boundary(ctx.cfg);
    const bool counts = ctx.cfg.get_bool("count_distribution", false);
    const Environment env(law, 0, n, derive_seed(ctx.seed(), ctx.command, 0));

    TableOptions opts;
    opts.budget = ctx.budget();
    const auto table = build_partition_table(env, params, kernel, n, opts);
    const auto stats = contact_statistics(env, params, kernel, n, boundary, counts, ctx.budget());

    ExperimentReport rep;
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(law);
    rep.header["beta"] = params.beta;
    rep.header["h"] = params.h;
    rep.header["n"] = n;
    rep.header["boundary"] = boundary == Boundary::Free ? "free" : "constrained";
    rep.header["environment_seed"] = env.seed();
    rep.columns = {"m", "omega", "log_Zc", "log_Z_free", "occupation", "last_probability"};
    if (counts) rep.columns.push_back("count_probability");
    for (int m = 0; m <= n; ++m) {
        std::vector<Cell> row{std::int64_t{m}, env[m], table.log_zc(m), free_log_partition(table, m),
                              stats.occupation[m], stats.last_distribution[m]};
        if (counts) row.emplace_back(stats.count_distribution[static_cast<std::size_t>(m) + 1]);
        rep.add_row(std::move(row));
    }
    const double smoke = ctx.cfg.get_bool("smoke", true) ? smoke_check(kernel, law, params, ctx.seed()) : NAN;
    rep.footer["log_partition"] = stats.log_partition;
    rep.footer["expected_contacts"] = stats.expected_contacts;
    rep.footer["expected_disorder_overlap"] = stats.expected_disorder_overlap;
    if (std::isfinite(smoke)) {
        rep.footer["smoke_relative_error"] = smoke;
        rep.footer["smoke_pass"] = smoke <= 1e-10;
    }
    ctx.emit(rep);
    ctx.log << "partition: log Z = " << format_double(stats.log_partition) << "\n";
}

// --- sample-paths -------------------------------------------------------------

void sample_paths(Context& ctx) {
    ctx.allow({"n", "boundary", "samples"});
    const int n = positive_n(ctx.cfg, "n", 100);
    const auto kernel = ctx.kernel(n);
    const auto law = ctx.law();
    const auto params = ctx.params(law, kernel.alpha(), 0.0, [&](double b) { return annealed_critical_point(law, b) - 1.0; });
    const auto boundary = parse_boundary(ctx.cfg);
    const auto samples = ctx.cfg.get_int("samples", 1000);
    if (samples < 1 || samples > 100'000'000) throw std::invalid_argument("samples: must lie in [1, 10^8]");
    const Environment env(law, 0, n, derive_seed(ctx.seed(), ctx.command, 0));
    TableOptions opts;
    opts.budget = ctx.budget();
    const auto table = build_partition_table(env, params, kernel, n, opts);
    const PathSampler sampler(table, boundary);
    const auto stats = contact_statistics(env, params, kernel, n, boundary, false, ctx.budget());

    ExperimentReport rep;
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(law);
    rep.header["beta"] = params.beta;
    rep.header["h"] = params.h;
    rep.header["n"] = n;
    rep.header["boundary"] = boundary == Boundary::Free ? "free" : "constrained";
    rep.header["environment_seed"] = env.seed();
    rep.header["draw_rule"] = "sample s uses CounterRng(seed, s + 1)";
    rep.columns = {"sample", "contacts", "last", "log_weight", "epochs"};
    double sum = 0.0, sq = 0.0;
    for (std::int64_t s = 0; s < samples; ++s) {
        CounterRng rng(env.seed(), static_cast<std::uint64_t>(s) + 1);
        const auto path = sampler.sample(rng);
        std::ostringstream epochs;
        for (std::size_t i = 0; i < path.trajectory.epochs.size(); ++i)
            epochs << (i ? " " : "") << path.trajectory.epochs[i];
        const double c = path.trajectory.contacts();
        sum += c;
        sq += c * c;
        rep.add_row({std::int64_t{s}, std::int64_t{path.trajectory.contacts()}, std::int64_t{path.trajectory.last()},
                     path.log_weight, epochs.str()});
    }
    const double mean = sum / samples;
    const double se = samples > 1 ? std::sqrt(std::max(0.0, (sq - samples * mean * mean) / (samples - 1)) / samples) : 0.0;
    rep.footer["mean_contacts"] = mean;
    rep.footer["mean_contacts_se"] = se;
    rep.footer["exact_expected_contacts"] = stats.expected_contacts;
    rep.footer["z_score"] = se > 0 ? (mean - stats.expected_contacts) / se : 0.0;
    ctx.emit(rep);
    ctx.log << "sample-paths: " << samples << " draws, mean contacts " << format_double(mean) << "\n";
}

// --- tightness ----------------------------------------------------------------

TightnessGrid tightness_grid(Context& ctx, const DisorderLaw& law, const RenewalKernel& kernel, bool constrained) {
    TightnessGrid grid;
    grid.law = law;
    grid.params = ctx.params(law, kernel.alpha(), 0.5, [&](double b) { return annealed_critical_point(law, b) - 1.0; });
    grid.n_values = ctx.cfg.get_int_list("n_grid", {2000, 4000});
    grid.N_values = ctx.cfg.get_int_list("N_grid", {10, 20, 50, 100, 200, 300, 500});
    if (constrained) grid.M_values = ctx.cfg.get_int_list("M_grid", {10, 50, 200});
    grid.epsilon = ctx.epsilon(0.1);
    if (!(grid.epsilon > 0.0 && grid.epsilon < 1.0)) throw std::invalid_argument("epsilon: must lie in (0, 1)");
    grid.run = ctx.replicas(200);
    grid.allow_above_annealed = ctx.cfg.get_bool("allow_above_annealed", false);
    return grid;
}

void emit_replica_table(Context& ctx, const TightnessResult& res, int replicas, const std::string& stem) {
    ExperimentReport per;
    per.header = res.report.header;
    per.columns = {"replica", "seed"};
    std::vector<std::string> coord;
    for (const auto& c : res.report.columns) {
        if (c == "frequency") break;
        coord.push_back(c);
        per.columns.push_back(c);
    }
    per.columns.push_back("probability");
    ReplicaSettings run;
    run.master_seed = ctx.seed();
    run.command = ctx.command;
    for (int k = 0; k < replicas; ++k)
        for (std::size_t row = 0; row < res.report.rows.size(); ++row) {
            std::vector<Cell> cells{std::int64_t{k}, std::to_string(replica_seed(run, k))};
            for (std::size_t c = 0; c < coord.size(); ++c) cells.push_back(res.report.rows[row][c]);
            cells.emplace_back(res.probability[k][row]);
            per.add_row(std::move(cells));
        }
    ctx.emit(per, stem);
}

void tightness(Context& ctx) {
    ctx.allow({"n_grid", "N_grid", "replicas", "allow_above_annealed"});
    const auto n_values = ctx.cfg.get_int_list("n_grid", {2000, 4000});
    const auto kernel = ctx.kernel(grid_max(n_values));
    const auto law = ctx.law();
    const auto grid = tightness_grid(ctx, law, kernel, false);
    const double smoke = smoke_check(kernel, law, grid.params, ctx.seed());
    if (!(smoke <= 1e-10)) throw NumericalFailure("smoke check against enumeration failed");
    auto res = tightness_scan(kernel, grid);
    res.report.footer["smoke_relative_error"] = smoke;
    ctx.emit(res.report);
    emit_replica_table(ctx, res, grid.run.replicas, ctx.command + "_replicas");

    std::vector<PlotSeries> series;
    for (std::size_t a = 0; a < grid.n_values.size(); ++a) {
        PlotSeries s{"n = " + std::to_string(grid.n_values[a]), {}, {}};
        for (std::size_t b = 0; b < grid.N_values.size(); ++b) {
            const std::size_t row = a * grid.N_values.size() + b;
            s.x.push_back(grid.N_values[b]);
            s.y.push_back(res.report.number(row, "frequency"));
        }
        series.push_back(std::move(s));
    }
    ctx.emit_svg(ctx.command, render_svg("P(P_n(tau_last > N) > eps)", "N", "frequency", series));
    ctx.log << "tightness: " << res.report.rows.size() << " grid points, " << grid.run.replicas << " replicas\n";
}

void tightness_constrained(Context& ctx) {
    ctx.allow({"n_grid", "N_grid", "M_grid", "replicas", "allow_above_annealed"});
    const auto n_values = ctx.cfg.get_int_list("n_grid", {2000, 4000});
    const auto kernel = ctx.kernel(grid_max(n_values));
    const auto law = ctx.law();
    const auto grid = tightness_grid(ctx, law, kernel, true);
    auto res = constrained_tightness_scan(kernel, grid);
    ctx.emit(res.report);
    emit_replica_table(ctx, res, grid.run.replicas, ctx.command + "_replicas");
    ctx.log << "tightness-constrained: " << res.report.rows.size() << " grid points, " << grid.run.replicas
            << " replicas\n";
}

// --- many returns --------------------------------------------------------------

void plan_thm2(Context& ctx) {
    ctx.allow({"subsequence_n0", "subsequence_count"});
    const auto kernel = ctx.kernel(1);
    const auto law = ctx.law();
    const double eps = ctx.epsilon(0.5);
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("epsilon: must lie in (0, 1)");
    const auto params = ctx.params(law, kernel.alpha(), 3.5,
                                   [&](double b) { return h_t(law, b, eps, kernel.alpha()) + 0.1; });
    if (!(params.beta > 0.0)) throw std::invalid_argument("beta: must be positive");
    const auto plan = returns_planner(law, kernel, eps, params.beta, params.h);

    ExperimentReport rep;
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(law);
    rep.header["plan"] = plan.to_json();
    rep.columns = {"epsilon", "beta", "h", "h_epsilon", "u_beta", "rate_at_u", "reward", "beta_threshold", "delta",
                   "gamma", "kappa", "m", "lambda", "nu", "feasible"};
    rep.add_row({plan.epsilon, plan.beta, plan.h, plan.h_epsilon, plan.u_beta, plan.rate_at_u, plan.reward,
                 plan.beta_threshold, plan.delta, plan.gamma, plan.kappa, std::int64_t{plan.m}, plan.lambda, plan.nu,
                 std::int64_t{plan.feasible}});
    rep.footer["feasible"] = plan.feasible;
    if (plan.feasible) {
        const auto check = verify_plan(plan, law);
        rep.footer["chain_ok"] = check.ok;
        rep.footer["slack"] = {{"krcost", check.krcost_slack},
                               {"delta", check.delta_slack},
                               {"gamma_upper", check.gamma_upper_slack},
                               {"gamma_lower", check.gamma_lower_slack},
                               {"kappa_residual", check.kappa_residual},
                               {"m", check.m_slack},
                               {"legendre_residual", check.legendre_residual}};
        if (ctx.cfg.has("subsequence_n0")) {
            const auto seq = rich_subsequence(ctx.cfg.get_int("subsequence_n0", 10000), kernel.support_min(),
                                              plan.gamma, static_cast<int>(ctx.cfg.get_int("subsequence_count", 10)));
            rep.footer["rich_subsequence"] = seq;
        }
    } else {
        rep.footer["infeasibility_reason"] = plan.infeasibility_reason;
    }
    ctx.emit(rep);
    ctx.log << "plan-thm2: feasible " << (plan.feasible ? "yes" : "no") << ", beta threshold "
            << format_double(plan.beta_threshold) << "\n";
}

void log_returns(Context& ctx) {
    ctx.allow({"n_grid", "replicas", "gamma", "u", "kappa", "nu_grid", "planted", "contact_statistics"});
    const auto n_values = ctx.cfg.get_int_list("n_grid", {500, 1000, 2000});
    const auto kernel = ctx.kernel(grid_max(n_values));
    const auto law = ctx.law();
    const double eps = ctx.epsilon(0.5);
    LogReturnsConfig lc;
    lc.law = law;
    lc.params = ctx.params(law, kernel.alpha(), 3.5, [&](double b) { return h_t(law, b, eps, kernel.alpha()) + 0.1; });
    lc.n_values = n_values;
    lc.nu_grid = ctx.cfg.get_double_list("nu_grid", {0.5, 1.0, 2.0});
    lc.planted = ctx.cfg.get_bool("planted", false);
    lc.contact_statistics = ctx.cfg.get_bool("contact_statistics", false);
    lc.run = ctx.replicas(20);
    std::optional<ReturnsPlan> plan;
    if (!ctx.cfg.has("gamma")) {
        if (!(lc.params.beta > 0.0)) throw std::invalid_argument("beta: must be positive for a plan");
        plan = returns_planner(law, kernel, eps, lc.params.beta, lc.params.h);
        if (!plan->feasible) throw std::invalid_argument("beta: plan infeasible: " + plan->infeasibility_reason);
        lc.gamma = plan->gamma;
        lc.kappa = plan->kappa;
        lc.u = ctx.cfg.get_double("u", plan->u_beta);
    } else {
        lc.gamma = ctx.cfg.get_double("gamma", 0.0);
        lc.u = ctx.cfg.get_double("u", lc.params.beta > 0 ? tilt_level(law, lc.params.beta) : 0.0);
        if (ctx.cfg.has("kappa")) lc.kappa = ctx.cfg.get_double("kappa", 0.0);
    }
    auto res = log_returns_experiment(kernel, lc);
    if (plan) res.report.header["plan"] = plan->to_json();
    ctx.emit(res.report);
    ctx.log << "log-returns: " << res.instances << " instances, " << res.bound_violations
            << " single-trajectory bound violations\n";
}

// --- decay, free energy, series --------------------------------------------------

void decay(Context& ctx) {
    ctx.allow({"b", "C1", "n_grid"}, false);
    const auto n_values = ctx.cfg.get_int_list("n_grid", {500, 707, 1000, 1414, 2000, 2828, 4000});
    const auto kernel = ctx.kernel(grid_max(n_values));
    const auto res = [&] {
        auto r = decay_check(kernel, ctx.cfg.get_double("b", 0.05), ctx.cfg.get_double("C1", 5.0), n_values,
                             ctx.budget().max_count_cells);
        return r;
    }();
    auto rep = res.report;
    ctx.emit(rep);
    ctx.log << "decay-check: fitted slope " << format_double(res.fitted_slope) << "\n";
}

void free_energy(Context& ctx) {
    ctx.allow({"n_grid", "replicas"});
    const auto n_values = ctx.cfg.get_int_list("n_grid", {512, 1024, 2048, 4096});
    const auto kernel = ctx.kernel(grid_max(n_values));
    const auto law = ctx.law();
    const auto params = ctx.params(law, kernel.alpha(), 0.0, [](double) { return 1.0; });
    auto res = free_energy_estimate(kernel, law, params, n_values, ctx.replicas(params.beta > 0 ? 20 : 1));
    ctx.emit(res.report);
    ctx.log << "free-energy: quenched " << format_double(res.quenched) << ", annealed "
            << format_double(res.annealed) << "\n";
}

void series(Context& ctx) {
    ctx.allow({"N", "n_grid", "replicas", "hc", "eps_series", "depth", "anchor"});
    const auto n_values = ctx.cfg.get_int_list("n_grid", {2000});
    const int n_max = grid_max(n_values);
    const auto depth = ctx.cfg.get_int("depth", 0);
    const auto anchor = ctx.cfg.get_int("anchor", n_max);
    if (depth < 0) throw std::invalid_argument("depth: must be >= 0");
    if (depth > 0 && anchor < 0) throw std::invalid_argument("anchor: must be >= 0");
    const auto kernel = ctx.kernel(std::max<int>(n_max, static_cast<int>(depth)));
    const auto law = ctx.law();
    const auto params = ctx.params(law, kernel.alpha(), 0.5, [&](double b) { return annealed_critical_point(law, b) - 1.0; });
    const auto N = ctx.cfg.get_int("N", 0);
    if (N < 0) throw std::invalid_argument("N: must be >= 0");
    const double hc = ctx.cfg.get_double("hc", annealed_critical_point(law, params.beta));
    const double eps = ctx.cfg.get_double("eps_series", 0.0);
    const auto run = ctx.replicas(1);

    struct Out {
        std::vector<double> partial;
        double envelope = 0.0;
        double reversed = NAN;
    };
    std::vector<Out> outs(static_cast<std::size_t>(run.replicas));
    parallel_for(outs.size(), run.threads, [&](std::size_t k) {
        const auto seed = replica_seed(run, static_cast<int>(k));
        const Environment env(law, 0, n_max, seed);
        const auto s = series_event_sum(env, params, kernel, static_cast<int>(N), n_max, hc, eps, run.budget);
        for (int n : n_values) outs[k].partial.push_back(s.log_partials[n]);
        outs[k].envelope = s.log_envelope;
        if (depth > 0) {
            const Environment wide(law, anchor - depth, anchor, seed);
            const auto rs = reversed_series(wide, params, kernel, anchor, static_cast<int>(depth), run.budget);
            outs[k].reversed = rs.log_partials.back();
        }
    });

    ExperimentReport rep;
    rep.header["kernel"] = describe(kernel);
    rep.header["law"] = describe(law);
    rep.header["beta"] = params.beta;
    rep.header["h"] = params.h;
    rep.header["N"] = N;
    rep.header["hc_surrogate"] = hc;
    rep.header["eps"] = eps;
    rep.header["replicas"] = run.replicas;
    rep.header["master_seed"] = run.master_seed;
    rep.header["seed_rule"] = "replica k uses derive_seed(master_seed, \"" + run.command + "\", k)";
    rep.columns = {"replica", "seed", "n", "log_partial_sum", "log_envelope", "log_reversed_sum"};
    for (std::size_t k = 0; k < outs.size(); ++k)
        for (std::size_t i = 0; i < n_values.size(); ++i)
            rep.add_row({std::int64_t(k), std::to_string(replica_seed(run, static_cast<int>(k))),
                         std::int64_t{n_values[i]}, outs[k].partial[i], outs[k].envelope, outs[k].reversed});
    ctx.emit(rep);
    ctx.log << "series: " << rep.rows.size() << " rows\n";
}

using Handler = void (*)(Context&);

const std::map<std::string, std::pair<Handler, std::string>>& commands() {
    static const std::map<std::string, std::pair<Handler, std::string>> table = {
        {"kernel-check", {kernel_check, "renewal kernel normalization and sampler checks"}},
        {"partition", {partition, "single-instance partition functions and contact statistics"}},
        {"sample-paths", {sample_paths, "exact path samples from the polymer measure"}},
        {"tightness", {tightness, "replica frequency of a late last contact (free boundary)"}},
        {"tightness-constrained", {tightness_constrained, "midpoint escape frequency (constrained boundary)"}},
        {"log-returns", {log_returns, "rich segments and many-contact probabilities"}},
        {"plan-thm2", {plan_thm2, "parameter chain for the many-returns regime"}},
        {"decay-check", {decay, "free renewal probability of few contacts and no long gap"}},
        {"free-energy", {free_energy, "quenched and annealed free energy estimates"}},
        {"series", {series, "partial sums of restricted constrained partition functions"}},
    };
    return table;
}

// "--key=value", "--key value" or "key=value"; dashes in keys become underscores.
void apply_overrides(const std::vector<std::string>& extras, RunConfig& cfg) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string item = extras[i];
        const bool flag = item.rfind("--", 0) == 0;
        if (flag) item = item.substr(2);
        std::string key, value;
        const auto eq = item.find('=');
        if (eq != std::string::npos) {
            key = item.substr(0, eq);
            value = item.substr(eq + 1);
        } else if (flag && i + 1 < extras.size()) {
            key = item;
            value = extras[++i];
        } else {
            throw std::invalid_argument("unrecognized argument '" + extras[i] + "'");
        }
        std::replace(key.begin(), key.end(), '-', '_');
        cfg.set(key, value);
    }
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, entry] : commands()) v.push_back(name);
        return v;
    }();
    return names;
}

std::vector<std::filesystem::path> run_command(const std::string& command, const RunConfig& config,
                                               const std::filesystem::path& out_dir, std::ostream& log) {
    const auto it = commands().find(command);
    if (it == commands().end()) throw std::invalid_argument("command: unknown command '" + command + "'");
    std::filesystem::create_directories(out_dir);
    Context ctx{command, config, out_dir, log, {}};
    it->second.first(ctx);
    return ctx.written;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"pinning-lab: exact computations for disordered pinning models"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".", seed, threads, budget;
    std::vector<std::string> sets;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands()) {
        auto* sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", config_path, "flat key = value configuration file");
        sub->add_option("--seed", seed, "64-bit master seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--threads", threads, "worker threads");
        sub->add_option("--budget", budget, "DP work budget (inner-loop terms)");
        sub->add_option("--set", sets, "key=value override (repeatable)");
        sub->allow_extras();
        subs[name] = sub;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalid;
    }
    std::string command;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) command = name;

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        apply_overrides(sets, cfg);
        apply_overrides(subs[command]->remaining(), cfg);
        if (!seed.empty()) cfg.set("seed", seed);
        if (!threads.empty()) cfg.set("threads", threads);
        if (!budget.empty()) cfg.set("budget", budget);
        run_command(command, cfg, out_dir, out);
        return kExitOk;
    } catch (const BudgetExceeded& e) {
        err << "budget exceeded: " << e.what() << "\n";
        return kExitBudget;
    } catch (const std::invalid_argument& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace pinning
