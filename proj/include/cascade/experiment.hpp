#ifndef CASCADE_EXPERIMENT_HPP
#define CASCADE_EXPERIMENT_HPP

#include "cascade/config.hpp"
#include "cascade/csv.hpp"
#include "cascade/insensitize.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace cascade {

struct CheckResult {
    std::string name;
    double value = 0.0;
    std::string relation;  // "<=", "<", ">=", "in"
    double limit = 0.0;
    double upper = 0.0;  // second bound of "in"
    bool passed = false;
};

struct RunResult {
    int status = 0;  // 0 every check passed, 1 a check failed or the module refused
    bool refused = false;
    std::string diagnostic;
    std::vector<CheckResult> checks;
    std::vector<std::string> files;

    bool passed() const { return status == 0; }
};

namespace detail {

inline Vec random_in_norm(const Vec& d, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Vec x(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i)
        x[i] = g(rng) / std::sqrt(d[i]);
    return x;
}

inline Vec random_vec(Eigen::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Vec x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x[i] = g(rng);
    return x;
}

inline std::vector<Vec> random_source(const SpectralSpace& space, const TimeGrid& grid, std::mt19937_64& rng)
{
    std::vector<Vec> xi;
    for (int m = 0; m <= grid.steps(); ++m)
        xi.push_back(random_vec(space.size(), rng).cwiseQuotient(space.eigenvalues()));
    return xi;
}

inline std::vector<Vec> random_control(const SpectralSpace& space, const Observer& obs, const TimeGrid& grid,
                                       std::mt19937_64& rng)
{
    const Eigen::Index len = obs.is_boundary() ? 2 : space.nodes().size();
    std::vector<Vec> v;
    for (int m = 0; m <= grid.steps(); ++m)
        v.push_back(random_vec(len, rng));
    return v;
}

inline double relative_to(double num, double den) { return den > 0.0 ? num / den : (num == 0.0 ? 0.0 : INFINITY); }

class Runner {
public:
    Runner(const ExperimentConfig& cfg, std::string outdir) : cfg_(cfg), outdir_(std::move(outdir)), rng_(cfg.seed) {}

    RunResult run()
    {
        switch (cfg_.kind) {
        case ExperimentConfig::Kind::simulate: simulate(); break;
        case ExperimentConfig::Kind::gramian: gramian(); break;
        case ExperimentConfig::Kind::sweep: sweep(); break;
        case ExperimentConfig::Kind::hum: hum(); break;
        case ExperimentConfig::Kind::insensitize: insensitize_run(); break;
        case ExperimentConfig::Kind::audit: audit(); break;
        }
        CsvTable checks({"check", "value", "relation", "limit", "passed"});
        for (const auto& c : res_.checks) {
            std::string lim = c.relation == "in" ? format_number(c.limit) + " " + format_number(c.upper)
                                                 : format_number(c.limit);
            checks.add({c.name, c.value, c.relation, lim, std::string(c.passed ? "true" : "false")});
        }
        save(checks, "checks.csv");
        res_.status = res_.refused ? 1 : 0;
        for (const auto& c : res_.checks)
            if (!c.passed)
                res_.status = 1;
        return res_;
    }

private:
    // Grid-resolution violations are configuration errors.
    TimeGrid grid(const SpectralSpace& space, double horizon) const
    {
        try {
            if (cfg_.steps > 0)
                return TimeGrid(space, horizon, cfg_.steps);
            return TimeGrid::resolved(space, horizon, cfg_.cfl);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(cfg_.name + ": grid: " + e.what());
        }
    }

    SpectralSpace space(int modes) const
    {
        try {
            return SpectralSpace(modes, modes == cfg_.modes ? cfg_.panels : 0);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(cfg_.name + ": space: " + e.what());
        }
    }

    void require_dense(int modes) const
    {
        if (modes > dense_mode_limit)
            throw ConfigError(cfg_.name + ": space.modes: dense computation limited to " +
                              std::to_string(dense_mode_limit) + " modes");
    }

    // Fixed horizon, or factor times the empirical observability horizon; nullopt after a refusal.
    std::optional<double> horizon(const Observer& obs)
    {
        if (!cfg_.horizon_auto)
            return cfg_.horizon;
        const int n = std::min(cfg_.modes, dense_mode_limit / 2);
        const double h = empirical_observability_horizon(cfg_.coupling_function(), obs, n, cfg_.horizon_scan,
                                                         cfg_.observable_floor, 0.5, cfg_.cfl);
        empirical_horizon_ = h;
        if (!std::isfinite(h)) {
            refuse("no observability horizon found on the scan");
            return std::nullopt;
        }
        return cfg_.horizon_factor * h;
    }

    void refuse(const std::string& why)
    {
        res_.refused = true;
        if (!res_.diagnostic.empty())
            res_.diagnostic += "; ";
        res_.diagnostic += why;
    }

    void check(const std::string& name, double value, const std::string& rel, double limit, double upper = 0.0)
    {
        bool ok = false;
        if (rel == "<=")
            ok = value <= limit;
        else if (rel == "<")
            ok = value < limit;
        else if (rel == ">=")
            ok = value >= limit;
        else if (rel == "in")
            ok = value >= limit && value <= upper;
        res_.checks.push_back({name, value, rel, limit, upper, ok});
    }

    std::string path(const std::string& suffix) const
    {
        return (std::filesystem::path(outdir_) / (cfg_.prefix + "_" + suffix)).string();
    }

    void save(const CsvTable& t, const std::string& suffix)
    {
        t.save(path(suffix));
        res_.files.push_back(path(suffix));
    }

    void save_text(const std::string& text, const std::string& suffix)
    {
        std::ofstream f(path(suffix), std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + path(suffix));
        f << text;
        res_.files.push_back(path(suffix));
    }

    // ---- simulate ----

    void simulate()
    {
        SpectralSpace s = space(cfg_.modes);
        auto c = CouplingOperator::from_function(s, cfg_.coupling_function());
        const Observer obs = cfg_.observer();
        auto t = horizon(obs);
        if (!t)
            return;
        TimeGrid g = grid(s, *t);
        const int n = s.size();
        CascadeState u0 = cfg_.random_data ? CascadeState::unpack(random_in_norm(state_norm_weights(s), rng_))
                                           : CascadeState::zero(n);
        auto tr = evolve_cascade(s, u0, c, g);

        CsvTable energy({"t", "e1_u1", "e0_u1", "e1_u2", "e0_u2", "obs_norm_sq"});
        double e1_drift = 0.0, e0_drift = 0.0, e1u2_max = 0.0;
        const auto hist = energy_history(s, tr, obs);
        for (const auto& r : hist) {
            energy.add({r.t, r.e1_u1, r.e0_u1, r.e1_u2, r.e0_u2, r.obs_norm_sq});
            e1_drift = std::max(e1_drift, std::abs(r.e1_u1 - hist.front().e1_u1));
            e0_drift = std::max(e0_drift, std::abs(r.e0_u1 - hist.front().e0_u1));
            e1u2_max = std::max(e1u2_max, r.e1_u2);
        }
        save(energy, "energy.csv");
        check("e1_u1_relative_drift", relative_to(e1_drift, hist.front().e1_u1), "<=", cfg_.conservation_tol);
        check("e0_u1_relative_drift", relative_to(e0_drift, hist.front().e0_u1), "<=", cfg_.conservation_tol);

        const double work = integrate_along(tr, [&](const CascadeState& x) { return (c.matrix * x.u1).dot(x.v2); });
        const double balance = hist.back().e1_u2 - hist.front().e1_u2 + work;
        check("energy_balance_residual", relative_to(std::abs(balance), e1u2_max), "<=", cfg_.identity_tol);

        if (cfg_.oracle) {
            Mat a = generator_matrix(s, c.matrix);
            Vec ref = (a * g.horizon()).exp() * u0.pack();
            check("oracle_relative_error", relative_to((tr.final().pack() - ref).norm(), ref.norm()), "<=",
                  cfg_.identity_tol);
        }
        if (cfg_.order) {
            const double to = cfg_.order_horizon.value_or(g.horizon());
            CascadeState w0 = cfg_.random_data ? u0 : CascadeState::unpack(random_in_norm(state_norm_weights(s), rng_));
            Vec ref = (generator_matrix(s, c.matrix) * to).exp() * w0.pack();
            TimeGrid g1 = grid(s, to);
            CsvTable order({"steps", "dt", "error"});
            std::vector<double> err;
            for (int k : {1, 2}) {
                TimeGrid gk(s, to, k * g1.steps());
                err.push_back((evolve_cascade(s, w0, c, gk).final().pack() - ref).norm());
                order.add({static_cast<long>(gk.steps()), gk.dt(), err.back()});
            }
            save(order, "order.csv");
            check("order_error_ratio", relative_to(err[0], err[1]), "in", 12.0, 20.0);
        }
    }

    // ---- gramian and sweep ----

    static std::vector<std::string> gramian_header()
    {
        return {"T", "N", "offset", "min_eig_full", "max_eig_full", "min_eig_u1block", "min_eig_u2block", "d1_emp",
                "d2_emp", "k2_emp", "r2_emp", "admissibility", "d1_T3", "d2_T", "r2_T2"};
    }

    static std::vector<CsvTable::Cell> gramian_row(const GramianReport& r, double offset)
    {
        const double t = r.horizon;
        return {t, static_cast<long>(r.modes), offset, r.min_eig_full, r.max_eig_full, r.min_eig_u1block,
                r.min_eig_u2block, r.d1_emp, r.d2_emp, r.k2_emp, r.r2_emp, r.admissibility, r.d1_emp * t * t * t,
                r.d2_emp * t, r.r2_emp * t * t};
    }

    GramianReport gramian_at(int modes, double t, const Observer& obs)
    {
        require_dense(modes);
        SpectralSpace s = space(modes);
        Mat cm = assemble_multiplication_matrix(s, cfg_.coupling_function());
        return gramian_report(s, cm, obs, grid(s, t), cfg_.eig_floor);
    }

    void gramian()
    {
        const Observer obs = cfg_.observer();
        auto t = horizon(obs);
        if (!t)
            return;
        auto r = gramian_at(cfg_.modes, *t, obs);
        CsvTable table(gramian_header());
        table.add(gramian_row(r, 0.0));
        save(table, "gramian.csv");
        if (cfg_.expect_observable)
            check("min_eig_ratio", relative_to(r.min_eig_full, r.max_eig_full), ">=", cfg_.observable_floor);
        else
            check("min_eig_u1block", r.min_eig_u1block, "<=", cfg_.unobservable_tol);
    }

    Observer shifted_observer(double offset) const
    {
        if (cfg_.observer_boundary)
            throw ConfigError(cfg_.name + ": sweep.axis: offset sweeps need an interior observer");
        auto bumps = cfg_.observer_bumps;
        for (auto& b : bumps) {
            b.lo += offset;
            b.hi += offset;
            if (b.lo - b.margin < 0.0 || b.hi + b.margin > 1.0)
                throw ConfigError(cfg_.name + ": sweep.values: offset " + format_number(offset) +
                                  " moves the observer outside (0,1)");
        }
        return Observer::interior(bumps.empty() ? CoefficientFunction::constant(0.0) : CoefficientFunction(bumps));
    }

    void sweep()
    {
        CsvTable table(gramian_header());
        std::vector<GramianReport> reports;
        if (!cfg_.sweep_values.empty()) {
            std::optional<double> t = cfg_.horizon;
            if (cfg_.sweep_axis != "T" && !(t = horizon(cfg_.observer())))
                return;
            for (double v : cfg_.sweep_values) {
                GramianReport r;
                double offset = 0.0;
                if (cfg_.sweep_axis == "T") {
                    r = gramian_at(cfg_.modes, v, cfg_.observer());
                } else if (cfg_.sweep_axis == "N") {
                    r = gramian_at(static_cast<int>(v), *t, cfg_.observer());
                } else {
                    offset = v;
                    r = gramian_at(cfg_.modes, *t, shifted_observer(v));
                }
                table.add(gramian_row(r, offset));
                reports.push_back(r);
            }
        }
        save(table, "sweep.csv");
        if (reports.empty())
            return;

        if (cfg_.sweep_check == "trend") {
            auto worst_growth = [&](auto f) {
                double w = 0.0;
                for (size_t i = 1; i < reports.size(); ++i)
                    w = std::max(w, relative_to(f(reports[i]), f(reports[i - 1])));
                return w;
            };
            check("d1_T3_growth", worst_growth([](const GramianReport& r) { return r.d1_emp * std::pow(r.horizon, 3); }),
                  "<=", cfg_.trend_factor);
            check("d2_T_growth", worst_growth([](const GramianReport& r) { return r.d2_emp * r.horizon; }), "<=",
                  cfg_.trend_factor);
            check("r2_T2_growth", worst_growth([](const GramianReport& r) { return r.r2_emp * r.horizon * r.horizon; }),
                  "<=", cfg_.trend_factor);
            double lo = INFINITY, hi = 0.0;
            for (const auto& r : reports) {
                lo = std::min(lo, r.k2_emp);
                hi = std::max(hi, r.k2_emp);
            }
            check("k2_spread", relative_to(hi, lo), "<=", cfg_.trend_factor);
        } else if (cfg_.sweep_check == "decay") {
            double worst = 0.0;
            for (size_t i = 1; i < reports.size(); ++i) {
                const auto& r = reports[i];
                if (r.min_eig_full <= cfg_.eig_floor * r.max_eig_full)
                    continue;
                worst = std::max(worst, relative_to(r.min_eig_full, reports[i - 1].min_eig_full));
            }
            check("min_eig_ratio_per_step", worst, "<=", 0.5);
        } else if (cfg_.sweep_check == "stable") {
            double lo = INFINITY, hi = 0.0, floor_ratio = INFINITY;
            for (const auto& r : reports) {
                lo = std::min(lo, r.min_eig_full);
                hi = std::max(hi, r.min_eig_full);
                floor_ratio = std::min(floor_ratio, relative_to(r.min_eig_full, r.max_eig_full));
            }
            check("min_eig_variation", relative_to(hi - lo, hi), "<", cfg_.stability);
            check("min_eig_ratio", floor_ratio, ">=", cfg_.observable_floor);
        }
    }

    // ---- hum ----

    HUMProblem hum_problem(const SpectralSpace& s, const TimeGrid& g)
    {
        HUMProblem p;
        p.coupling = assemble_multiplication_matrix(s, cfg_.coupling_function());
        p.control = cfg_.observer();
        p.grid = g;
        p.cg_tolerance = cfg_.cg_tolerance;
        p.max_iterations = cfg_.max_iterations;
        p.floor = cfg_.hum_floor;
        p.y0 = cfg_.random_data
                   ? CascadeState::unpack(random_in_norm(control_space_weights(s, p.boundary()), rng_))
                   : CascadeState::zero(s.size());
        if (cfg_.random_source)
            p.source = random_source(s, g, rng_);
        return p;
    }

    void transposition(const SpectralSpace& s, const TimeGrid& g)
    {
        double cascade_res = 0.0, first_res = 0.0;
        CsvTable table({"instance", "cascade_residual", "first_component_residual"});
        for (int k = 0; k < cfg_.transposition_tests; ++k) {
            HUMProblem p = hum_problem(s, g);
            if (!cfg_.random_data)
                p.y0 = CascadeState::unpack(random_in_norm(control_space_weights(s, p.boundary()), rng_));
            if (p.source.empty())
                p.source = random_source(s, g, rng_);
            auto v = random_control(s, p.control, g, rng_);
            auto y = simulate_controlled(s, p, v);
            std::vector<CascadeState> tests{
                CascadeState::unpack(random_in_norm(adjoint_space_weights(s, p.boundary()), rng_))};
            auto rep = verify_transposition(s, p, v, y, tests);
            table.add({static_cast<long>(k + 1), rep.cascade_residual, rep.first_residual});
            cascade_res = std::max(cascade_res, rep.cascade_residual);
            first_res = std::max(first_res, rep.first_residual);
        }
        save(table, "transposition.csv");
        check("transposition_cascade_residual", cascade_res, "<=", cfg_.identity_tol);
        check("transposition_first_residual", first_res, "<=", cfg_.identity_tol);
    }

    void write_control(const SpectralSpace& s, const HUMProblem& p, const std::vector<Vec>& v)
    {
        if (p.boundary()) {
            CsvTable table({"t", "v_left", "v_right"});
            for (int m = 0; m <= p.grid.steps() && !v.empty(); ++m)
                table.add({p.grid.time(m), v[m][0], v[m][1]});
            save(table, "control.csv");
            return;
        }
        CsvTable table({"t", "x", "v"});
        for (int m = 0; m <= p.grid.steps() && !v.empty(); ++m)
            for (Eigen::Index i = 0; i < s.nodes().size(); ++i)
                table.add({p.grid.time(m), s.nodes()[i], v[m][i]});
        save(table, "control.csv");
    }

    static std::string status_name(HUMSolution::Status st)
    {
        switch (st) {
        case HUMSolution::Status::solved: return "solved";
        case HUMSolution::Status::refused: return "refused";
        case HUMSolution::Status::stagnated: return "stagnated";
        }
        return "?";
    }

    void hum()
    {
        SpectralSpace s = space(cfg_.modes);
        const Observer obs = cfg_.observer();
        auto t = horizon(obs);
        if (!t)
            return;
        TimeGrid g = grid(s, *t);
        HUMProblem p = hum_problem(s, g);
        auto sol = solve_hum(s, p);

        std::ostringstream man;
        man << "case = " << (p.boundary() ? "boundary" : "interior") << "\n"
            << "modes = " << s.size() << "\n"
            << "horizon = " << format_number(g.horizon()) << "\n"
            << "steps = " << g.steps() << "\n"
            << "status = " << status_name(sol.status) << "\n"
            << "diagnostic = " << sol.diagnostic << "\n"
            << "cg_iterations = " << sol.cg_iterations << "\n"
            << "final_residual = " << format_number(sol.final_residual) << "\n"
            << "reference_norm = " << format_number(sol.reference_norm) << "\n";
        const char* names[] = {"terminal_y1", "terminal_y2", "terminal_y1_velocity", "terminal_y2_velocity"};
        for (int i = 0; i < 4; ++i)
            man << names[i] << " = " << format_number(sol.terminal_norms[i]) << "\n";
        man << "max_relative_terminal = " << format_number(sol.max_relative_terminal()) << "\n"
            << "duality_residual = " << format_number(sol.duality_residual) << "\n"
            << "gramian_min_eig = " << format_number(sol.spectrum.min_eig) << "\n"
            << "gramian_max_eig = " << format_number(sol.spectrum.max_eig) << "\n"
            << "control_norm_sq = "
            << format_number(sol.control.empty() ? 0.0 : control_norm_sq(s, p.control, g, sol.control)) << "\n";
        save_text(man.str(), "manifest.txt");

        CsvTable trace({"iteration", "relative_residual"});
        for (size_t i = 0; i < sol.residual_trace.size(); ++i)
            trace.add({static_cast<long>(i), sol.residual_trace[i]});
        save(trace, "cg_trace.csv");

        if (!sol.ok()) {
            refuse(sol.diagnostic);
            return;
        }
        if (cfg_.write_control)
            write_control(s, p, sol.control);
        check("terminal_relative", sol.max_relative_terminal(), "<=", cfg_.terminal_tol);
        check("cg_iterations", sol.cg_iterations, "<", cfg_.max_cg_iterations);

        if (cfg_.dense_check) {
            SpectralSpace s8(8);
            HUMProblem q = hum_problem(s8, grid(s8, *t));
            if (!cfg_.random_data)
                q.y0 = CascadeState::unpack(random_in_norm(control_space_weights(s8, q.boundary()), rng_));
            auto cg = solve_hum(s8, q);
            Vec dense = dense_hum_gramian(s8, q).ldlt().solve(-assemble_rhs(s8, q));
            double diff = cg.ok() ? relative_to((cg.final_data.pack() - dense).norm(), dense.norm()) : INFINITY;
            check("dense_agreement", diff, "<=", cfg_.identity_tol);
        }
        if (cfg_.transposition_tests > 0)
            transposition(s, g);
    }

    // ---- insensitize ----

    InsensitizeProblem insensitize_problem(const SpectralSpace& s, const TimeGrid& g)
    {
        InsensitizeProblem ip;
        ip.c = cfg_.coupling_function();
        ip.control = cfg_.observer();
        ip.grid = g;
        ip.cg_tolerance = cfg_.cg_tolerance;
        ip.max_iterations = cfg_.max_iterations;
        ip.floor = cfg_.hum_floor;
        auto [k0, k1] = perturbation_levels(ip.boundary());
        const int n = s.size();
        ip.y0 = Vec::Zero(n);
        ip.y1 = Vec::Zero(n);
        if (cfg_.random_data) {
            std::normal_distribution<double> gauss;
            for (int j = 0; j < n; ++j) {
                ip.y0[j] = gauss(rng_) / std::sqrt(std::pow(s.eigenvalue(j), k0));
                ip.y1[j] = gauss(rng_) / std::sqrt(std::pow(s.eigenvalue(j), k1));
            }
        }
        if (cfg_.random_source)
            ip.source = random_source(s, g, rng_);
        return ip;
    }

    void insensitize_run()
    {
        SpectralSpace s = space(cfg_.modes);
        const Observer obs = cfg_.observer();
        auto t = horizon(obs);
        if (!t)
            return;
        TimeGrid g = grid(s, *t);
        InsensitizeProblem ip = insensitize_problem(s, g);
        auto pool = perturbation_pool(s, ip.boundary(), cfg_.modal_perturbations, cfg_.random_perturbations, rng_);
        auto [v, cert] = insensitize(s, ip, pool);
        cert.terminal_tol = cfg_.terminal_tol;

        CsvTable table({"perturbation_id", "dphi_tau0_analytic", "dphi_tau0_fd", "dphi_tau1_analytic", "dphi_tau1_fd"});
        for (const auto& r : cert.rows)
            table.add({r.label, r.analytic.d_tau0, r.fd.d_tau0, r.analytic.d_tau1, r.fd.d_tau1});
        save(table, "derivatives.csv");

        std::ostringstream rep;
        rep << "case = " << (ip.boundary() ? "boundary" : "interior") << "\n"
            << "modes = " << s.size() << "\n"
            << "horizon = " << format_number(g.horizon()) << "\n"
            << "refused = " << (cert.refused ? "true" : "false") << "\n"
            << "diagnostic = " << cert.diagnostic << "\n"
            << "cg_iterations = " << cert.hum.cg_iterations << "\n"
            << "phi_baseline = " << format_number(cert.phi_baseline) << "\n"
            << "y1_terminal = " << format_number(cert.y1_terminal) << "\n"
            << "y2_terminal = " << format_number(cert.y2_terminal) << "\n"
            << "perturbations = " << cert.rows.size() << "\n"
            << "max_derivative_ratio = " << format_number(cert.max_derivative_ratio) << "\n"
            << "max_fd_mismatch = " << format_number(cert.max_fd_mismatch) << "\n"
            << "scaling_exponent = " << format_number(cert.scaling_exponent) << "\n"
            << "passed = " << (cert.passed() ? "true" : "false") << "\n";
        save_text(rep.str(), "certificate.txt");

        if (cert.refused || !cert.hum.ok()) {
            refuse(cert.diagnostic.empty() ? "control synthesis failed" : cert.diagnostic);
            return;
        }
        check("y1_terminal", cert.y1_terminal, "<=", cfg_.terminal_tol);
        check("y2_terminal", cert.y2_terminal, "<=", cfg_.terminal_tol);
        check("perturbations", static_cast<double>(cert.rows.size()), ">=", 1.0);
        check("max_derivative_ratio", cert.max_derivative_ratio, "<=", cert.derivative_tol);
        check("max_fd_mismatch", cert.max_fd_mismatch, "<=", cert.fd_tol);
        check("scaling_exponent", cert.scaling_exponent, ">=", cert.exponent_min);
        auto conv = verify_converse(s, ip, v);
        check("converse_agreement", conv.agree() ? 0.0 : 1.0, "<=", 0.0);

        if (cfg_.equivalence_instances > 0)
            equivalence(s, g);
    }

    // Positive instances use the synthesized control, negative ones v = 0 with coupled nonzero data.
    void equivalence(const SpectralSpace& s, const TimeGrid& g)
    {
        CsvTable table({"instance", "kind", "max_derivative_ratio", "y1_terminal", "derivatives_vanish",
                        "terminal_vanishes", "agree"});
        int disagreements = 0, wrong_side = 0;
        double negative_min = INFINITY;
        auto b = [](bool x) { return std::string(x ? "true" : "false"); };
        for (int k = 0; k < cfg_.equivalence_instances; ++k) {
            for (bool positive : {true, false}) {
                InsensitizeProblem ip = insensitize_problem(s, g);
                if (!cfg_.random_data) {
                    ip.y0 = random_vec(s.size(), rng_).cwiseQuotient(s.eigenvalues());
                    ip.y1 = random_vec(s.size(), rng_).cwiseQuotient(s.eigenvalues().cwiseSqrt());
                }
                std::vector<Vec> v;
                if (positive) {
                    auto [vv, cert] = insensitize(s, ip, {});
                    if (!cert.hum.ok()) {
                        refuse(cert.diagnostic);
                        return;
                    }
                    v = std::move(vv);
                }
                auto rep = verify_converse(s, ip, v);
                table.add({static_cast<long>(k + 1), std::string(positive ? "positive" : "negative"),
                           rep.max_derivative_ratio, rep.y1_terminal, b(rep.derivatives_vanish()),
                           b(rep.terminal_vanishes()), b(rep.agree())});
                disagreements += !rep.agree();
                wrong_side += positive ? !rep.terminal_vanishes() : rep.terminal_vanishes();
                if (!positive)
                    negative_min = std::min(negative_min, rep.y1_terminal);
            }
        }
        save(table, "equivalence.csv");
        check("equivalence_disagreements", disagreements, "<=", 0.0);
        check("equivalence_misclassified", wrong_side, "<=", 0.0);
        check("negative_min_terminal", negative_min, ">=", 1e-3);
    }

    // ---- audit ----

    void audit()
    {
        SpectralSpace s = space(cfg_.modes);
        auto c = CouplingOperator::from_function(s, cfg_.coupling_function());
        const Observer obs = cfg_.observer();
        if (c.core.empty() || obs.empty()) {
            refuse(c.core.empty() ? "coupling core region is empty" : "observation region is empty");
            return;
        }
        auto t = horizon(obs);
        if (!t)
            return;
        TimeGrid g = grid(s, *t);

        const double alpha = cfg_.alpha.value_or(c.alpha), beta = cfg_.beta.value_or(c.beta);
        UniformConstants u;
        if (!cfg_.gamma0 || !cfg_.eta0 || !cfg_.alpha0) {
            u = estimate_uniform_constants(s, c, obs, g, cfg_.ensemble, rng_, cfg_.safety);
            if (!u.ok) {
                refuse(u.diagnostic);
                return;
            }
        }
        const double t0 = cfg_.t0.value_or(std::max(gcc_min_time(c.core), gcc_min_time(obs)));
        ObservabilityConstants k;
        try {
            k = theoretical_constants(alpha, beta, cfg_.gamma0.value_or(u.gamma0), cfg_.eta0.value_or(u.eta0),
                                      cfg_.alpha0.value_or(u.alpha0), t0, cfg_.c1, cfg_.c2, cfg_.c3, cfg_.c4);
        } catch (const std::invalid_argument& e) {
            refuse(e.what());
            return;
        }

        CsvTable consts({"name", "value"});
        std::vector<std::pair<std::string, double>> rows = {{"horizon", g.horizon()}};
        if (cfg_.horizon_auto)
            rows.push_back({"empirical_horizon", empirical_horizon_});
        rows.insert(rows.end(), {{"alpha", k.alpha}, {"beta", k.beta}, {"gamma0", k.gamma0}, {"eta0", k.eta0},
                                 {"alpha0", k.alpha0}, {"c1", k.c1}, {"c2", k.c2}, {"c3", k.c3}, {"c4", k.c4},
                                 {"a", k.a}, {"b", k.b}, {"nu", k.nu}, {"M", k.M}, {"T0", k.T0}, {"T1", k.T1},
                                 {"T2", k.T2}, {"T3", k.T3}});
        for (const auto& [name, value] : rows)
            consts.add({name, value});
        save(consts, "constants.csv");

        CsvTable ledger({"sample", "inequality_name", "lhs", "rhs", "margin", "must_hold"});
        const Vec d = state_norm_weights(s);
        int violations = 0;
        double duality = 0.0;
        for (int i = 0; i < cfg_.ensemble; ++i) {
            CascadeState u0 = cfg_.random_data ? CascadeState::unpack(random_in_norm(d, rng_)) : CascadeState::zero(s.size());
            for (const auto& e : proof_chain_audit(s, u0, c, obs, k, g)) {
                ledger.add({static_cast<long>(i + 1), e.name, e.lhs, e.rhs, e.margin,
                            std::string(e.must_hold ? "true" : "false")});
                if (e.must_hold && !e.satisfied(cfg_.identity_tol))
                    ++violations;
                if (e.name == "coupling_duality_identity")
                    duality = std::max(duality, relative_to(std::abs(e.lhs - e.rhs), std::abs(e.lhs) + std::abs(e.rhs)));
            }
        }
        save(ledger, "ledger.csv");
        check("must_hold_violations", violations, "<=", 0.0);
        check("duality_identity_residual", duality, "<=", cfg_.identity_tol);
        if (cfg_.transposition_tests > 0)
            transposition(s, g);
    }

    const ExperimentConfig& cfg_;
    std::string outdir_;
    std::mt19937_64 rng_;
    RunResult res_;
    double empirical_horizon_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace detail

/// Runs one experiment and writes its artifacts into outdir. Throws ConfigError on invalid input.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& outdir)
{
    std::filesystem::create_directories(outdir);
    return detail::Runner(cfg, outdir).run();
}

/// Process exit code: 0 pass, 1 check failure or refusal, inverted when a failure is expected.
inline int exit_code(const RunResult& r, bool expect_fail)
{
    return (r.status == 0) != expect_fail ? 0 : 1;
}

}  // namespace cascade

#endif
