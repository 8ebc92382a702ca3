#ifndef CASCADE_HUM_HPP
#define CASCADE_HUM_HPP

#include "cascade/observability.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cascade {

/// Exact control of y1'' + A y1 + C y2 = 0, y2'' + A y2 = xi + B v from y0 to rest.
/// The observer fixes the case: interior weight b (v is a field) or boundary
/// endpoints (v is the pair of Dirichlet values, y2 = b v on the boundary).
struct HUMProblem {
    CascadeState y0;
    std::vector<Vec> source;  // modal xi at every node; empty means zero
    Mat coupling;
    Observer control;
    TimeGrid grid;
    double cg_tolerance = 1e-10;
    int max_iterations = 2000;
    double floor = 1e-8;  // min/max eigenvalue ratio required of the Gramian
    bool check_floor = true;

    bool boundary() const { return control.is_boundary(); }
};

/// Diagonal Riesz weights of the adjoint space: (w1, w2, w1', w2') in
/// H_-1 x H x H_-2 x H_-1 (interior) or H x H_1 x H_-1 x H (boundary).
inline Vec adjoint_space_weights(const SpectralSpace& space, bool boundary)
{
    const int s = boundary ? 0 : -1;
    const int n = space.size();
    Vec d(4 * n);
    d << space.power(s), space.power(s + 1), space.power(s - 1), space.power(s);
    return d;
}

/// Weights of the state space in duality with the adjoint space through the pairing below:
/// H_2 x H_1 x H_1 x H (interior) or H_1 x H x H x H_-1 (boundary).
inline Vec control_space_weights(const SpectralSpace& space, bool boundary)
{
    const int n = space.size();
    Vec d = adjoint_space_weights(space, boundary);
    Vec e(4 * n);
    e << d.segment(2 * n, 2 * n).cwiseInverse(), d.head(2 * n).cwiseInverse();
    return e;
}

/// <y1', w1> - <y1, w1'> + <y2', w2> - <y2, w2'>, the quantity conserved between controls.
inline double state_pairing(const CascadeState& y, const CascadeState& w)
{
    return y.v1.dot(w.u1) - y.u1.dot(w.v1) + y.v2.dot(w.u2) - y.u2.dot(w.v2);
}

/// Packed vector r with r . pack(W) = state_pairing(y, W).
inline Vec pairing_representer(const CascadeState& y)
{
    return CascadeState{y.v1, y.v2, -y.u1, -y.u2}.pack();
}

/// Per-component norms (y1, y2, y1', y2') in the weighted space.
inline Vec component_norms(const CascadeState& y, const Vec& weights)
{
    const int n = y.size();
    Vec p = y.pack().cwiseAbs2().cwiseProduct(weights);
    Vec out(4);
    for (int k = 0; k < 4; ++k)
        out[k] = std::sqrt(p.segment(k * n, n).sum());
    return out;
}

inline double weighted_norm(const CascadeState& y, const Vec& weights)
{
    return std::sqrt(y.pack().cwiseAbs2().dot(weights));
}

/// Control sample produced by an adjoint w2: b w2 on the quadrature nodes, or
/// -(b_L dw2/dnu(0), b_R dw2/dnu(1)) at the endpoints.
inline Vec control_from_adjoint(const SpectralSpace& space, const Observer& obs, const Vec& w2)
{
    if (obs.is_boundary()) {
        Vec v(2);
        v[0] = -obs.b_left * space.normal_derivative_left().dot(w2);
        v[1] = -obs.b_right * space.normal_derivative_right().dot(w2);
        return v;
    }
    return sample(space, obs.weight).cwiseProduct(space.synthesize(w2));
}

/// Modal source of a control sample. Boundary data enter through Green's formula:
/// y2 = g on the boundary contributes -g dphi_j/dnu to mode j.
inline Vec control_source(const SpectralSpace& space, const Observer& obs, const Vec& v)
{
    if (obs.is_boundary()) {
        if (v.size() != 2)
            throw std::invalid_argument("boundary control sample must have two entries");
        return -(obs.b_left * v[0]) * space.normal_derivative_left()
               - (obs.b_right * v[1]) * space.normal_derivative_right();
    }
    if (v.size() != space.nodes().size())
        throw std::invalid_argument("interior control sample must live on the quadrature nodes");
    return space.basis().transpose() * space.weights().cwiseProduct(sample(space, obs.weight)).cwiseProduct(v);
}

/// Inner product of two control samples in G.
inline double control_inner(const SpectralSpace& space, const Observer& obs, const Vec& a, const Vec& b)
{
    if (obs.is_boundary())
        return a.dot(b);
    return space.weights().dot(a.cwiseProduct(b));
}

/// int_0^T |v|_G^2 dt with the grid weights.
inline double control_norm_sq(const SpectralSpace& space, const Observer& obs, const TimeGrid& grid,
                              const std::vector<Vec>& v)
{
    if (v.empty())
        return 0.0;
    const Vec q = grid.weights();
    double s = 0.0;
    for (int m = 0; m <= grid.steps(); ++m)
        s += q[m] * control_inner(space, obs, v[m], v[m]);
    return s;
}

/// Symmetric N x N matrix K with <source(control(w)), w~> = w~^T K w.
inline Mat control_form(const SpectralSpace& space, const Observer& obs)
{
    if (obs.is_boundary()) {
        Vec gl = space.normal_derivative_left(), gr = space.normal_derivative_right();
        return obs.b_left * obs.b_left * gl * gl.transpose() + obs.b_right * obs.b_right * gr * gr.transpose();
    }
    return assemble_multiplication_matrix(space, sample(space, obs.weight).cwiseAbs2());
}

inline void check_problem(const SpectralSpace& space, const HUMProblem& p)
{
    check_sizes(space, p.y0, p.coupling);
    if (!(p.cg_tolerance > 0.0))
        throw std::invalid_argument("cg tolerance must be positive");
    if (!p.source.empty()) {
        if (static_cast<int>(p.source.size()) != p.grid.steps() + 1)
            throw std::invalid_argument("source must have one sample per node");
        for (const auto& s : p.source)
            if (s.size() != space.size())
                throw std::invalid_argument("source sample does not match the spectral space");
    }
}

/// Adjoint trajectory with final data W at t = T.
inline Trajectory adjoint_trajectory(const SpectralSpace& space, const HUMProblem& p, const CascadeState& wt)
{
    return evolve_cascade_backward(space, wt, p.coupling, p.grid);
}

/// Control time series v(t_m) generated by adjoint final data.
inline std::vector<Vec> control_from_final_data(const SpectralSpace& space, const HUMProblem& p,
                                                const CascadeState& wt)
{
    auto tr = adjoint_trajectory(space, p, wt);
    std::vector<Vec> v;
    v.reserve(tr.states.size());
    for (const auto& s : tr.states)
        v.push_back(control_from_adjoint(space, p.control, s.u2));
    return v;
}

/// Controlled trajectory from initial data y0 with the given control (empty means zero) and optional source.
inline Trajectory simulate_controlled(const SpectralSpace& space, const Mat& c, const Observer& obs,
                                      const CascadeState& y0, const TimeGrid& grid, const std::vector<Vec>& control,
                                      const std::vector<Vec>& source)
{
    if (control.empty() && source.empty())
        return evolve_controlled(space, y0, c, grid, {});
    std::vector<Vec> g(grid.steps() + 1, Vec::Zero(space.size()));
    for (int m = 0; m <= grid.steps(); ++m) {
        if (!control.empty())
            g[m] += control_source(space, obs, control[m]);
        if (!source.empty())
            g[m] += source[m];
    }
    return evolve_controlled(space, y0, c, grid, g);
}

inline Trajectory simulate_controlled(const SpectralSpace& space, const HUMProblem& p, const std::vector<Vec>& control)
{
    return simulate_controlled(space, p.coupling, p.control, p.y0, p.grid, control, p.source);
}

/// Terminal state reached from rest under the control generated by W.
inline CascadeState reach_from_final_data(const SpectralSpace& space, const HUMProblem& p, const CascadeState& wt)
{
    return simulate_controlled(space, p.coupling, p.control, CascadeState::zero(space.size()), p.grid,
                               control_from_final_data(space, p, wt), {})
        .final();
}

/// Lambda W as a dual vector: Lambda(W, W~) = apply_hum_gramian(W) . pack(W~).
inline Vec apply_hum_gramian(const SpectralSpace& space, const HUMProblem& p, const CascadeState& wt)
{
    return pairing_representer(reach_from_final_data(space, p, wt));
}

/// Dual vector of L + J: the pairing of the uncontrolled terminal state.
inline Vec assemble_rhs(const SpectralSpace& space, const HUMProblem& p)
{
    return pairing_representer(simulate_controlled(space, p, {}).final());
}

/// L(W~) + J(W~) evaluated directly from the adjoint trajectory.
inline double linear_form(const SpectralSpace& space, const HUMProblem& p, const CascadeState& wt)
{
    auto tr = adjoint_trajectory(space, p, wt);
    double s = state_pairing(p.y0, tr.at(0));
    if (!p.source.empty()) {
        const Vec q = p.grid.weights();
        for (int m = 0; m <= p.grid.steps(); ++m)
            s += q[m] * p.source[m].dot(tr.at(m).u2);
    }
    return s;
}

/// Dense Gramian of the adjoint flow: Lambda(W, W~) = W~^T G W.
inline Mat dense_hum_gramian(const SpectralSpace& space, const HUMProblem& p)
{
    const int n = space.size();
    Mat o = Mat::Zero(4 * n, 4 * n);
    o.block(n, n, n, n) = control_form(space, p.control);
    Mat g = cascade_flow(space, p.coupling, p.grid).integrate(o);
    // backward trajectory of W is the reflected forward trajectory of the velocity-negated W
    g.bottomRows(2 * n) *= -1.0;
    g.rightCols(2 * n) *= -1.0;
    return g;
}

struct GramianSpectrum {
    double min_eig = 0.0;
    double max_eig = 0.0;
    double ratio() const { return max_eig > 0.0 ? min_eig / max_eig : 0.0; }
};

/// Extreme eigenvalues of the Gramian relative to the adjoint-space inner product.
inline GramianSpectrum hum_gramian_spectrum(const SpectralSpace& space, const HUMProblem& p)
{
    Mat g = scale_form(dense_hum_gramian(space, p), adjoint_space_weights(space, p.boundary()));
    Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

struct HUMSolution {
    enum class Status { solved, refused, stagnated };

    Status status = Status::solved;
    std::string diagnostic;
    CascadeState final_data;
    std::vector<Vec> control;
    Trajectory trajectory;
    int cg_iterations = 0;
    double final_residual = 0.0;
    std::vector<double> residual_trace;
    Vec terminal_norms;  // (y1, y2, y1', y2') at T in the state space
    double reference_norm = 0.0;
    double duality_residual = 0.0;
    GramianSpectrum spectrum;

    bool ok() const { return status == Status::solved; }
    double max_relative_terminal() const
    {
        return reference_norm > 0.0 ? terminal_norms.maxCoeff() / reference_norm : terminal_norms.maxCoeff();
    }
};

/// Preconditioned CG for Lambda W = -(L + J) in the adjoint-space inner product.
inline HUMSolution solve_hum(const SpectralSpace& space, const HUMProblem& p)
{
    check_problem(space, p);
    const int n = space.size();
    const bool bnd = p.boundary();
    const Vec d = adjoint_space_weights(space, bnd);
    const Vec dinv = d.cwiseInverse();
    const Vec ew = control_space_weights(space, bnd);

    HUMSolution sol;
    sol.final_data = CascadeState::zero(n);
    sol.trajectory = simulate_controlled(space, p, {});
    const CascadeState free_final = sol.trajectory.final();
    sol.reference_norm = weighted_norm(p.y0, ew);
    if (sol.reference_norm == 0.0)
        sol.reference_norm = weighted_norm(free_final, ew);

    if (p.control.empty()) {
        sol.status = HUMSolution::Status::refused;
        sol.diagnostic = "empty control region";
        sol.terminal_norms = component_norms(free_final, ew);
        return sol;
    }
    if (p.check_floor && n <= dense_mode_limit) {
        sol.spectrum = hum_gramian_spectrum(space, p);
        if (!(sol.spectrum.ratio() >= p.floor)) {
            sol.status = HUMSolution::Status::refused;
            sol.diagnostic = "Gramian below the observability floor: min/max eigenvalue " +
                             std::to_string(sol.spectrum.ratio()) + " at T = " + std::to_string(p.grid.horizon());
            sol.terminal_norms = component_norms(free_final, ew);
            return sol;
        }
    }

    const Vec b = pairing_representer(free_final);
    const double bnorm = std::sqrt(b.cwiseAbs2().dot(dinv));
    Vec x = Vec::Zero(4 * n);
    if (bnorm > 0.0) {
        Vec r = -b;
        Vec z = dinv.cwiseProduct(r);
        Vec dir = z;
        double rz = r.dot(z);
        sol.residual_trace.push_back(1.0);
        bool converged = false;
        for (int it = 0; it < p.max_iterations; ++it) {
            Vec ad = apply_hum_gramian(space, p, CascadeState::unpack(dir));
            const double curv = dir.dot(ad);
            if (!(curv > 0.0))
                break;
            const double a = rz / curv;
            x += a * dir;
            r -= a * ad;
            z = dinv.cwiseProduct(r);
            const double rz_new = r.dot(z);
            const double rel = std::sqrt(std::max(rz_new, 0.0)) / bnorm;
            sol.residual_trace.push_back(rel);
            sol.cg_iterations = it + 1;
            if (rel <= p.cg_tolerance) {
                converged = true;
                break;
            }
            dir = z + (rz_new / rz) * dir;
            rz = rz_new;
        }
        sol.final_residual = sol.residual_trace.back();
        if (!converged) {
            sol.status = HUMSolution::Status::stagnated;
            sol.diagnostic = "CG stopped after " + std::to_string(sol.cg_iterations) + " iterations at relative residual " +
                             std::to_string(sol.final_residual);
        }
    }

    sol.final_data = CascadeState::unpack(x);
    sol.control = control_from_final_data(space, p, sol.final_data);
    sol.trajectory = simulate_controlled(space, p, sol.control);
    sol.terminal_norms = component_norms(sol.trajectory.final(), ew);

    const double lj = b.dot(x);
    const double lam = apply_hum_gramian(space, p, sol.final_data).dot(x);
    sol.duality_residual = std::abs(lam + lj) / std::max(std::abs(lj), std::abs(lam) + 1e-300);
    if (lj == 0.0 && lam == 0.0)
        sol.duality_residual = 0.0;
    return sol;
}

struct TranspositionReport {
    double cascade_residual = 0.0;  // full identity over the adjoint cascade
    double first_residual = 0.0;    // first-component identity against the coupling integral
    int tests = 0;
};

namespace detail {

// Simpson on the half grid, using free-rotation midpoints of the leading position.
template <class Integrand>
double half_grid_integral(const SpectralSpace& space, const TimeGrid& grid, Integrand&& f)
{
    CascadeStepper rot(space, Mat(), grid.dt());
    const double h = grid.dt();
    double s = 0.0;
    for (int m = 0; m < grid.steps(); ++m)
        s += h / 6.0 * (f(m, 0, rot) + 4.0 * f(m, 1, rot) + f(m + 1, 0, rot));
    return s;
}

}  // namespace detail

/// Checks the transposition identities of a controlled trajectory against adjoint final data.
/// Residuals are relative to the largest term in each identity.
inline TranspositionReport verify_transposition(const SpectralSpace& space, const HUMProblem& p,
                                                const std::vector<Vec>& control, const Trajectory& y,
                                                const std::vector<CascadeState>& tests)
{
    TranspositionReport rep;
    const Vec q = p.grid.weights();
    const Vec bsamp = p.control.is_boundary() ? Vec() : sample(space, p.control.weight);
    for (const auto& wt : tests) {
        auto w = adjoint_trajectory(space, p, wt);

        // int <v, B* w2>_G + int <xi, w2> = pairing(T) - pairing(0)
        double lhs = 0.0, scale = 0.0;
        for (int m = 0; m <= p.grid.steps(); ++m) {
            double term = 0.0;
            if (!control.empty()) {
                if (p.control.is_boundary()) {
                    Vec obs(2);
                    obs[0] = p.control.b_left * space.normal_derivative_left().dot(w.at(m).u2);
                    obs[1] = p.control.b_right * space.normal_derivative_right().dot(w.at(m).u2);
                    term -= control[m].dot(obs);
                } else {
                    term += space.weights().dot(control[m].cwiseProduct(bsamp).cwiseProduct(space.synthesize(w.at(m).u2)));
                }
            }
            if (!p.source.empty())
                term += p.source[m].dot(w.at(m).u2);
            lhs += q[m] * term;
            scale += q[m] * std::abs(term);
        }
        const double pt = state_pairing(y.final(), w.final()), p0 = state_pairing(p.y0, w.at(0));
        const double rhs = pt - p0;
        const double denom = std::max({scale, std::abs(pt), std::abs(p0), 1e-300});
        rep.cascade_residual = std::max(rep.cascade_residual, std::abs(lhs - rhs) / denom);

        // first component against a free wave w1 with the same final data
        CascadeState w1t{wt.u1, Vec::Zero(space.size()), wt.v1, Vec::Zero(space.size())};
        auto w1 = adjoint_trajectory(space, p, w1t);
        const Mat& c = p.coupling;
        double coup = detail::half_grid_integral(space, p.grid, [&](int m, int mid, const CascadeStepper& rot) {
            const CascadeState& ys = y.at(m);
            const CascadeState& ws = w1.at(m);
            if (!mid)
                return ys.u2.dot(c * ws.u1);
            return rot.half_step_position(ys.u2, ys.v2).dot(c * rot.half_step_position(ws.u1, ws.v1));
        });
        auto first = [](const CascadeState& a, const CascadeState& b) { return a.v1.dot(b.u1) - a.u1.dot(b.v1); };
        const double f1 = first(y.final(), w1.final()) - first(p.y0, w1.at(0));
        const double d1 = std::max({std::abs(coup), std::abs(first(y.final(), w1.final())),
                                    std::abs(first(p.y0, w1.at(0))), 1e-300});
        if (coup != 0.0 || f1 != 0.0)
            rep.first_residual = std::max(rep.first_residual, std::abs(f1 + coup) / d1);
        ++rep.tests;
    }
    return rep;
}

}  // namespace cascade

#endif
