#ifndef CASCADE_INSENSITIZE_HPP
#define CASCADE_INSENSITIZE_HPP

#include "cascade/hum.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace cascade {

/// y'' + A y = xi + B v with y(0) = y0 + tau0 z0, y'(0) = y1 + tau1 z1 and the
/// weighted observation Phi = 1/2 int int c y^2. The observer carries the control weight b.
struct InsensitizeProblem {
    Vec y0, y1;
    std::vector<Vec> source;
    CoefficientFunction c;
    Observer control;
    TimeGrid grid;
    double cg_tolerance = 1e-10;
    int max_iterations = 2000;
    double floor = 1e-8;

    bool boundary() const { return control.is_boundary(); }
};

struct Perturbation {
    Vec z0, z1;
    std::string label;
};

using ScalarPath = std::vector<ComponentState>;

/// Cascade control problem whose exact control insensitizes Phi.
inline HUMProblem cascade_problem(const SpectralSpace& space, const InsensitizeProblem& ip)
{
    const int n = space.size();
    HUMProblem p;
    p.y0 = {Vec::Zero(n), ip.y0, Vec::Zero(n), ip.y1};
    p.source = ip.source;
    p.coupling = assemble_multiplication_matrix(space, ip.c);
    p.control = ip.control;
    p.grid = ip.grid;
    p.cg_tolerance = ip.cg_tolerance;
    p.max_iterations = ip.max_iterations;
    p.floor = ip.floor;
    // with c = 0 the first component never leaves rest and need not be observed
    p.check_floor = !ip.c.is_zero();
    return p;
}

inline ScalarPath second_component(const Trajectory& tr)
{
    ScalarPath out;
    out.reserve(tr.states.size());
    for (const auto& s : tr.states)
        out.push_back(s.second());
    return out;
}

/// Controlled scalar wave with perturbed initial data.
inline ScalarPath scalar_solution(const SpectralSpace& space, const InsensitizeProblem& ip, const std::vector<Vec>& v,
                                  double tau0 = 0.0, const Vec& z0 = Vec(), double tau1 = 0.0, const Vec& z1 = Vec())
{
    const int n = space.size();
    CascadeState y{Vec::Zero(n), ip.y0, Vec::Zero(n), ip.y1};
    if (tau0 != 0.0)
        y.u2 += tau0 * z0;
    if (tau1 != 0.0)
        y.v2 += tau1 * z1;
    return second_component(simulate_controlled(space, Mat::Zero(n, n), ip.control, y, ip.grid, v, ip.source));
}

inline ScalarPath free_wave(const SpectralSpace& space, const ComponentState& init, const TimeGrid& grid)
{
    ScalarPath out;
    out.reserve(grid.steps() + 1);
    for (int m = 0; m <= grid.steps(); ++m)
        out.push_back(free_evolve(space, init, grid.time(m)));
    return out;
}

/// int_0^T a^T Mc b dt by Simpson on the half grid; between nodes both paths move freely.
inline double weighted_time_pairing(const SpectralSpace& space, const Mat& mc, const TimeGrid& grid, const ScalarPath& a,
                                    const ScalarPath& b)
{
    return detail::half_grid_integral(space, grid, [&](int m, int mid, const CascadeStepper& rot) {
        if (!mid)
            return a[m].u.dot(mc * b[m].u);
        return rot.half_step_position(a[m].u, a[m].v).dot(mc * rot.half_step_position(b[m].u, b[m].v));
    });
}

inline double phi(const SpectralSpace& space, const ScalarPath& y, const Mat& mc, const TimeGrid& grid)
{
    return 0.5 * weighted_time_pairing(space, mc, grid, y, y);
}

struct SensitivityPair {
    double d_tau0 = 0.0;
    double d_tau1 = 0.0;
};

/// dPhi/dtau0 = int int c y w^, dPhi/dtau1 = int int c y z^ with w^, z^ free waves from (z0, 0), (0, z1).
inline SensitivityPair sensitivity_derivatives(const SpectralSpace& space, const InsensitizeProblem& ip,
                                               const std::vector<Vec>& v, const Vec& z0, const Vec& z1)
{
    const int n = space.size();
    Mat mc = assemble_multiplication_matrix(space, ip.c);
    ScalarPath y = scalar_solution(space, ip, v);
    ScalarPath w = free_wave(space, {z0, Vec::Zero(n)}, ip.grid);
    ScalarPath z = free_wave(space, {Vec::Zero(n), z1}, ip.grid);
    return {weighted_time_pairing(space, mc, ip.grid, y, w), weighted_time_pairing(space, mc, ip.grid, y, z)};
}

/// Central differences of Phi at steps h1 > h2, Richardson-combined for the second-order error.
inline SensitivityPair fd_derivatives(const SpectralSpace& space, const InsensitizeProblem& ip, const std::vector<Vec>& v,
                                      const Vec& z0, const Vec& z1, double h1 = 1e-3, double h2 = 1e-4)
{
    Mat mc = assemble_multiplication_matrix(space, ip.c);
    auto central = [&](double h, bool first) {
        auto at = [&](double t) {
            return first ? phi(space, scalar_solution(space, ip, v, t, z0), mc, ip.grid)
                         : phi(space, scalar_solution(space, ip, v, 0.0, Vec(), t, z1), mc, ip.grid);
        };
        return (at(h) - at(-h)) / (2.0 * h);
    };
    const double r = (h1 / h2) * (h1 / h2);
    auto richardson = [&](bool first) { return (r * central(h2, first) - central(h1, first)) / (r - 1.0); };
    return {richardson(true), richardson(false)};
}

/// Norms in which perturbations are normalized: H_1 x H (interior) or H x H_-1 (boundary).
inline std::pair<int, int> perturbation_levels(bool boundary) { return boundary ? std::pair{0, -1} : std::pair{1, 0}; }

inline Perturbation normalized_perturbation(const SpectralSpace& space, bool boundary, Vec z0, Vec z1,
                                            std::string label)
{
    auto [k0, k1] = perturbation_levels(boundary);
    const double a = sobolev_norm(space, z0, k0), b = sobolev_norm(space, z1, k1);
    if (a > 0.0)
        z0 /= a;
    if (b > 0.0)
        z1 /= b;
    return {std::move(z0), std::move(z1), std::move(label)};
}

/// First modal directions followed by random directions, each of unit norm.
inline std::vector<Perturbation> perturbation_pool(const SpectralSpace& space, bool boundary, int modal, int random,
                                                   std::mt19937_64& rng)
{
    const int n = space.size();
    std::vector<Perturbation> pool;
    for (int j = 0; j < std::min(modal, n); ++j) {
        Vec e = Vec::Zero(n);
        e[j] = 1.0;
        pool.push_back(normalized_perturbation(space, boundary, e, e, "mode" + std::to_string(j + 1)));
    }
    std::normal_distribution<double> g;
    auto [k0, k1] = perturbation_levels(boundary);
    for (int i = 0; i < random; ++i) {
        Vec a(n), b(n);
        for (int j = 0; j < n; ++j) {
            a[j] = g(rng) / std::sqrt(std::pow(space.eigenvalue(j), k0));
            b[j] = g(rng) / std::sqrt(std::pow(space.eigenvalue(j), k1));
        }
        pool.push_back(normalized_perturbation(space, boundary, a, b, "random" + std::to_string(i + 1)));
    }
    return pool;
}

/// Cauchy-Schwarz scale of a derivative: |int int c y w| <= 2 sqrt(Phi(y) Phi(w)).
inline double phi_scale(double phi_y, double phi_w) { return 2.0 * std::sqrt(std::max(phi_y, 0.0) * std::max(phi_w, 0.0)); }

struct PerturbationRow {
    std::string label;
    SensitivityPair analytic;
    SensitivityPair fd;
    double scale0 = 0.0;
    double scale1 = 0.0;
};

struct InsensitizeCertificate {
    HUMSolution hum;
    bool refused = false;
    std::string diagnostic;
    double y1_terminal = 0.0;  // max of |y1(T)|, |y1'(T)| relative to the data
    double y2_terminal = 0.0;
    double phi_baseline = 0.0;
    std::vector<PerturbationRow> rows;
    double max_derivative_ratio = 0.0;  // |dPhi| / Phi-scale
    double max_fd_mismatch = 0.0;       // |analytic - fd| / max(|analytic|, Phi-scale)
    double scaling_exponent = 0.0;

    double terminal_tol = 1e-6;
    double derivative_tol = 1e-6;
    double fd_tol = 1e-5;
    double exponent_min = 1.9;

    bool terminal_ok() const { return y1_terminal <= terminal_tol && y2_terminal <= terminal_tol; }
    bool derivatives_ok() const { return !rows.empty() && max_derivative_ratio <= derivative_tol; }
    bool fd_ok() const { return !rows.empty() && max_fd_mismatch <= fd_tol; }
    bool scaling_ok() const { return scaling_exponent >= exponent_min; }
    bool passed() const { return !refused && hum.ok() && terminal_ok() && derivatives_ok() && fd_ok() && scaling_ok(); }
};

namespace detail {

inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : (num == 0.0 ? 0.0 : INFINITY); }

inline double log_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

/// Fitted exponent p in |Phi(tau) - Phi(0)| ~ tau^p for tau0 = tau1 = tau along one perturbation.
inline double phi_scaling_exponent(const SpectralSpace& space, const InsensitizeProblem& ip, const std::vector<Vec>& v,
                                   const Perturbation& z, const std::vector<double>& taus = {1e-1, 1e-2, 1e-3, 1e-4})
{
    Mat mc = assemble_multiplication_matrix(space, ip.c);
    const double base = phi(space, scalar_solution(space, ip, v), mc, ip.grid);
    std::vector<double> dx, dy;
    for (double t : taus) {
        const double d = std::abs(phi(space, scalar_solution(space, ip, v, t, z.z0, t, z.z1), mc, ip.grid) - base);
        if (d > 0.0) {
            dx.push_back(t);
            dy.push_back(d);
        }
    }
    if (dx.size() < 2)
        return INFINITY;
    return detail::log_slope(dx, dy);
}

/// Fills the derivative rows and the scaling exponent of a certificate for control v.
inline void certify_derivatives(const SpectralSpace& space, const InsensitizeProblem& ip, const std::vector<Vec>& v,
                                const std::vector<Perturbation>& pool, InsensitizeCertificate& cert)
{
    const int n = space.size();
    Mat mc = assemble_multiplication_matrix(space, ip.c);
    cert.phi_baseline = phi(space, scalar_solution(space, ip, v), mc, ip.grid);
    cert.rows.clear();
    cert.max_derivative_ratio = cert.max_fd_mismatch = 0.0;
    for (const auto& z : pool) {
        PerturbationRow row;
        row.label = z.label;
        row.analytic = sensitivity_derivatives(space, ip, v, z.z0, z.z1);
        row.fd = fd_derivatives(space, ip, v, z.z0, z.z1);
        row.scale0 = phi_scale(cert.phi_baseline, phi(space, free_wave(space, {z.z0, Vec::Zero(n)}, ip.grid), mc, ip.grid));
        row.scale1 = phi_scale(cert.phi_baseline, phi(space, free_wave(space, {Vec::Zero(n), z.z1}, ip.grid), mc, ip.grid));
        cert.max_derivative_ratio = std::max({cert.max_derivative_ratio,
                                              detail::ratio_or_zero(std::abs(row.analytic.d_tau0), row.scale0),
                                              detail::ratio_or_zero(std::abs(row.analytic.d_tau1), row.scale1)});
        auto mismatch = [](double a, double f, double s) {
            return detail::ratio_or_zero(std::abs(a - f), std::max(std::abs(a), s));
        };
        cert.max_fd_mismatch = std::max({cert.max_fd_mismatch, mismatch(row.analytic.d_tau0, row.fd.d_tau0, row.scale0),
                                         mismatch(row.analytic.d_tau1, row.fd.d_tau1, row.scale1)});
        cert.rows.push_back(std::move(row));
    }
    cert.scaling_exponent = INFINITY;
    for (size_t i = 0; i < pool.size() && i < 3; ++i)
        cert.scaling_exponent =
            std::min(cert.scaling_exponent, phi_scaling_exponent(space, ip, v, pool[pool.size() - 1 - i]));
}

/// Builds the insensitizing control through the cascade control problem and certifies it.
inline std::pair<std::vector<Vec>, InsensitizeCertificate> insensitize(const SpectralSpace& space,
                                                                        const InsensitizeProblem& ip,
                                                                        const std::vector<Perturbation>& pool)
{
    InsensitizeCertificate cert;
    const double t = ip.grid.horizon();
    if (!ip.c.is_zero() && !(t > gcc_min_time(ip.c.core()))) {
        cert.refused = true;
        cert.diagnostic = "observation region needs T > " + std::to_string(gcc_min_time(ip.c.core()));
        return {{}, cert};
    }
    if (ip.control.empty() || !(t > gcc_min_time(ip.control))) {
        cert.refused = true;
        cert.diagnostic = ip.control.empty() ? "empty control region"
                                             : "control region needs T > " + std::to_string(gcc_min_time(ip.control));
        return {{}, cert};
    }
    HUMProblem p = cascade_problem(space, ip);
    cert.hum = solve_hum(space, p);
    if (!cert.hum.ok()) {
        cert.refused = cert.hum.status == HUMSolution::Status::refused;
        cert.diagnostic = cert.hum.diagnostic;
        return {{}, cert};
    }
    const Vec& tn = cert.hum.terminal_norms;
    const double ref = cert.hum.reference_norm;
    cert.y1_terminal = detail::ratio_or_zero(std::max(tn[0], tn[2]), ref);
    cert.y2_terminal = detail::ratio_or_zero(std::max(tn[1], tn[3]), ref);
    std::vector<Vec> v = cert.hum.control;
    certify_derivatives(space, ip, v, pool, cert);
    return {v, cert};
}

struct ConverseReport {
    double max_derivative_ratio = 0.0;  // over every modal direction in both slots
    double y1_terminal = 0.0;           // relative to the data
    double tol = 1e-6;

    bool derivatives_vanish() const { return max_derivative_ratio <= tol; }
    bool terminal_vanishes() const { return y1_terminal <= tol; }
    bool agree() const { return derivatives_vanish() == terminal_vanishes(); }
};

/// Compares vanishing of all modal sensitivities with vanishing of the first cascade component at T.
inline ConverseReport verify_converse(const SpectralSpace& space, const InsensitizeProblem& ip, const std::vector<Vec>& v)
{
    const int n = space.size();
    ConverseReport rep;
    HUMProblem p = cascade_problem(space, ip);
    const Vec ew = control_space_weights(space, ip.boundary());
    const double ref = weighted_norm(p.y0, ew);
    Vec tn = component_norms(simulate_controlled(space, p, v).final(), ew);
    rep.y1_terminal = detail::ratio_or_zero(std::max(tn[0], tn[2]), ref);

    if (ip.c.is_zero())
        return rep;
    Mat mc = assemble_multiplication_matrix(space, ip.c);
    ScalarPath y = scalar_solution(space, ip, v);
    const double py = phi(space, y, mc, ip.grid);
    for (int j = 0; j < n; ++j) {
        Vec e = Vec::Zero(n);
        e[j] = 1.0;
        for (bool position : {true, false}) {
            ComponentState init = position ? ComponentState{e, Vec::Zero(n)} : ComponentState{Vec::Zero(n), e};
            ScalarPath w = free_wave(space, init, ip.grid);
            const double d = weighted_time_pairing(space, mc, ip.grid, y, w);
            const double s = phi_scale(py, phi(space, w, mc, ip.grid));
            rep.max_derivative_ratio = std::max(rep.max_derivative_ratio, detail::ratio_or_zero(std::abs(d), s));
        }
    }
    return rep;
}

}  // namespace cascade

#endif
