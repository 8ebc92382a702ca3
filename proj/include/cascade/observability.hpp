#ifndef CASCADE_OBSERVABILITY_HPP
#define CASCADE_OBSERVABILITY_HPP

#include "cascade/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cascade {

constexpr int dense_mode_limit = 64;

/// Dense one-step map of a stepper acting on packed states.
template <class Step>
Mat step_matrix(int dim, Step&& step)
{
    Mat p(dim, dim);
    for (int k = 0; k < dim; ++k) {
        Vec e = Vec::Zero(dim);
        e[k] = 1.0;
        p.col(k) = step(e);
    }
    return p;
}

inline Mat cascade_step_matrix(const SpectralSpace& space, const Mat& c, double dt)
{
    CascadeStepper stepper(space, c, dt);
    return step_matrix(4 * space.size(), [&](const Vec& x) { return stepper.step(CascadeState::unpack(x)).pack(); });
}

/// Sum_{k<K} (P^k)^T O P^k by binary doubling.
inline Mat power_sum(const Mat& p, const Mat& o, long k)
{
    const Eigen::Index d = p.rows();
    Mat s = Mat::Zero(d, d);
    Mat pw = Mat::Identity(d, d);
    if (k <= 0)
        return s;
    int top = 0;
    while ((k >> (top + 1)) > 0)
        ++top;
    for (int bit = top; bit >= 0; --bit) {
        s += pw.transpose() * s * pw;
        pw = pw * pw;
        if ((k >> bit) & 1L) {
            s += pw.transpose() * o * pw;
            pw = pw * p;
        }
    }
    return 0.5 * (s + s.transpose());
}

inline Mat matrix_power(const Mat& p, long k)
{
    Mat r = Mat::Identity(p.rows(), p.cols());
    Mat b = p;
    while (k > 0) {
        if (k & 1L)
            r = r * b;
        b = b * b;
        k >>= 1;
    }
    return r;
}

/// Time-stationary linear recursion x_{m+1} = P x_m on a grid; integrates
/// quadratic forms x_m^T O x_m with the grid's Simpson weights.
class DiscreteFlow {
public:
    DiscreteFlow(Mat p, const TimeGrid& grid) : p_(std::move(p)), grid_(grid)
    {
        p2_ = p_ * p_;
        pn_ = matrix_power(p_, grid.steps());
    }

    const Mat& step() const { return p_; }
    const Mat& final_map() const { return pn_; }
    const TimeGrid& grid() const { return grid_; }

    /// Sum_m Q_m (P^m)^T O P^m with Q = dt/3 (1, 4, 2, ..., 4, 1).
    Mat integrate(const Mat& o) const
    {
        const long n = grid_.steps();
        Mat all = power_sum(p_, o, n + 1);
        Mat odd = p_.transpose() * power_sum(p2_, o, n / 2) * p_;
        Mat g = (grid_.dt() / 3.0) * (2.0 * all + 2.0 * odd - o - pn_.transpose() * o * pn_);
        return 0.5 * (g + g.transpose());
    }

private:
    Mat p_;
    Mat p2_;
    Mat pn_;
    TimeGrid grid_;
};

inline DiscreteFlow cascade_flow(const SpectralSpace& space, const Mat& c, const TimeGrid& grid)
{
    if (space.size() > dense_mode_limit)
        throw std::invalid_argument("dense Gramian limited to N <= 64");
    return DiscreteFlow(cascade_step_matrix(space, c, grid.dt()), grid);
}

/// int_0^T |B* U_2|^2 dt along the evolved trajectory.
inline double gramian_form(const SpectralSpace& space, const CascadeState& u0, const Mat& c, const Observer& obs,
                           const TimeGrid& grid)
{
    auto tr = evolve_cascade(space, u0, c, grid);
    return integrate_along(tr, [&](const CascadeState& s) {
        return observation_norm_sq(space, obs, observe(space, obs, s.second()));
    });
}

inline Mat gramian_matrix(const SpectralSpace& space, const Mat& c, const Observer& obs, const TimeGrid& grid)
{
    return cascade_flow(space, c, grid).integrate(observation_form(space, obs));
}

/// Diagonal weights d with x^T diag(d) x = e_{k1}(U1) + e_{k2}(U2) on packed states.
inline Vec energy_weights(const SpectralSpace& space, int k1, int k2)
{
    const int n = space.size();
    Vec d(4 * n);
    d << 0.5 * space.power(k1), 0.5 * space.power(k2), 0.5 * space.power(k1 - 1), 0.5 * space.power(k2 - 1);
    return d;
}

/// X-norm e0(U1) + e1(U2) shifted by norm_level.
inline Vec state_norm_weights(const SpectralSpace& space, int norm_level = 0)
{
    return energy_weights(space, norm_level, norm_level + 1);
}

inline Mat scale_form(const Mat& g, const Vec& d)
{
    Vec s = d.cwiseSqrt().cwiseInverse();
    return s.asDiagonal() * g * s.asDiagonal();
}

inline std::vector<int> first_component_indices(int n)
{
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
        idx.push_back(j);
    for (int j = 0; j < n; ++j)
        idx.push_back(2 * n + j);
    return idx;
}

inline std::vector<int> second_component_indices(int n)
{
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
        idx.push_back(n + j);
    for (int j = 0; j < n; ++j)
        idx.push_back(3 * n + j);
    return idx;
}

inline Mat principal_block(const Mat& g, const std::vector<int>& idx)
{
    const int k = static_cast<int>(idx.size());
    Mat b(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            b(i, j) = g(idx[i], idx[j]);
    return b;
}

struct EigenPair {
    double value;
    Vec vector;
};

/// Smallest eigenvalue of the Gramian in the X-norm; the returned vector is in packed state coordinates.
inline EigenPair min_eigenvalue(const SpectralSpace& space, const Mat& c, const Observer& obs, const TimeGrid& grid,
                                int norm_level = 0)
{
    Vec d = state_norm_weights(space, norm_level);
    Eigen::SelfAdjointEigenSolver<Mat> es(scale_form(gramian_matrix(space, c, obs, grid), d));
    Vec x = d.cwiseSqrt().cwiseInverse().cwiseProduct(es.eigenvectors().col(0));
    return {es.eigenvalues()[0], x};
}

struct GramianReport {
    double horizon = 0.0;
    int modes = 0;
    double min_eig_full = 0.0;
    double max_eig_full = 0.0;
    double min_eig_u1block = 0.0;
    double max_eig_u1block = 0.0;
    double min_eig_u2block = 0.0;
    double max_eig_u2block = 0.0;
    double d1_emp = 0.0;
    double d2_emp = 0.0;
    double k2_emp = 0.0;
    double r2_emp = 0.0;
    double admissibility = 0.0;
    bool invertible = false;
};

inline double max_generalized_eigenvalue(const Mat& a, const Mat& b)
{
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(a, b, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
    return es.eigenvalues().maxCoeff();
}

/// Dense report at one (N, T); constants are sharp over the discrete space.
inline GramianReport gramian_report(const SpectralSpace& space, const Mat& c, const Observer& obs, const TimeGrid& grid,
                                    double floor = 1e-12)
{
    const int n = space.size();
    DiscreteFlow flow = cascade_flow(space, c, grid);
    Vec d = state_norm_weights(space, 0);
    Mat g = scale_form(flow.integrate(observation_form(space, obs)), d);

    GramianReport r;
    r.horizon = grid.horizon();
    r.modes = n;
    Eigen::SelfAdjointEigenSolver<Mat> full(g, Eigen::EigenvaluesOnly);
    r.min_eig_full = full.eigenvalues()[0];
    r.max_eig_full = full.eigenvalues()[4 * n - 1];
    r.admissibility = r.max_eig_full;
    auto i1 = first_component_indices(n), i2 = second_component_indices(n);
    Eigen::SelfAdjointEigenSolver<Mat> b1(principal_block(g, i1), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat> b2(principal_block(g, i2), Eigen::EigenvaluesOnly);
    r.min_eig_u1block = b1.eigenvalues()[0];
    r.max_eig_u1block = b1.eigenvalues()[2 * n - 1];
    r.min_eig_u2block = b2.eigenvalues()[0];
    r.max_eig_u2block = b2.eigenvalues()[2 * n - 1];

    r.invertible = r.min_eig_full > floor * r.max_eig_full;
    if (!r.invertible) {
        r.d1_emp = r.d2_emp = r.k2_emp = r.r2_emp = std::numeric_limits<double>::infinity();
        return r;
    }
    Mat ginv = g.inverse();
    ginv = 0.5 * (ginv + ginv.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> g1(principal_block(ginv, i1), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat> g2(principal_block(ginv, i2), Eigen::EigenvaluesOnly);
    r.d1_emp = g1.eigenvalues().maxCoeff();
    r.d2_emp = g2.eigenvalues().maxCoeff();

    Mat e2 = Mat::Zero(4 * n, 4 * n);
    e2.diagonal() = energy_weights(space, 1, 1);
    for (int i : i1)
        e2(i, i) = 0.0;
    Mat cc = Mat::Zero(4 * n, 4 * n);
    cc.block(0, 0, n, n) = c;
    r.k2_emp = max_generalized_eigenvalue(scale_form(flow.integrate(e2), d), g);
    r.r2_emp = max_generalized_eigenvalue(scale_form(flow.integrate(cc), d), g);
    return r;
}

/// Max over an ensemble of int |B* U_2|^2 / (e0(U1)(0) + e1(U2)(0)).
inline double admissibility_constant(const SpectralSpace& space, const Mat& c, const Observer& obs,
                                     const TimeGrid& grid, const std::vector<CascadeState>& ensemble)
{
    double best = 0.0;
    for (const auto& u : ensemble) {
        double e = energy(space, u.u1, u.v1, 0) + energy(space, u.u2, u.v2, 1);
        if (e <= 0.0)
            continue;
        best = std::max(best, gramian_form(space, u, c, obs, grid) / e);
    }
    return best;
}

struct ObservabilityConstants {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma0 = 0.0;
    double eta0 = 0.0;
    double alpha0 = 0.0;
    double delta0 = 0.0;
    double c1 = 4.0;
    double c2 = 16.0;
    double c3 = 32.0;
    double c4 = 128.0;
    double a = 0.0;
    double b = 0.0;
    double nu = 0.0;
    double M = 0.0;
    double T0 = 0.0;
    double T1 = 0.0;
    double T2 = 0.0;
    double T3 = 0.0;
};

inline ObservabilityConstants theoretical_constants(double alpha, double beta, double gamma0, double eta0,
                                                    double alpha0, double t0, double c1 = 4.0, double c2 = 16.0,
                                                    double c3 = 32.0, double c4 = 128.0)
{
    for (double v : {alpha, beta, gamma0, eta0, alpha0, c1, c2, c3, c4})
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("theoretical_constants: inputs must be positive and finite");
    if (t0 < 0.0)
        throw std::invalid_argument("theoretical_constants: T0 must be nonnegative");
    ObservabilityConstants k;
    k.alpha = alpha;
    k.beta = beta;
    k.gamma0 = gamma0;
    k.eta0 = eta0;
    k.alpha0 = alpha0;
    k.c1 = c1;
    k.c2 = c2;
    k.c3 = c3;
    k.c4 = c4;
    k.T0 = t0;
    k.a = c3 * beta * gamma0 / (2.0 * alpha);
    k.b = c4 * beta * beta * gamma0 * gamma0 / (2.0 * alpha * alpha);
    const double root = std::sqrt(k.a * k.a + k.a + k.b);
    k.nu = k.a + root;
    k.M = root / ((2.0 * k.a + 1.0) * (k.a + root) + k.a + 2.0 * k.b);
    k.T1 = std::sqrt(2.0 * c4 * alpha0 * beta * gamma0) / alpha;
    k.T2 = std::sqrt(2.0 * c3 * alpha0 * beta * gamma0) / std::sqrt(alpha * k.M);
    k.T3 = std::max({k.T0, k.T1, k.T2});
    return k;
}

/// Free single-wave recursion on (p, q) in R^{2N}.
inline DiscreteFlow free_wave_flow(const SpectralSpace& space, const TimeGrid& grid)
{
    const int n = space.size();
    return DiscreteFlow(step_matrix(2 * n,
                                    [&](const Vec& x) {
                                        ComponentState s{x.head(n), x.tail(n)};
                                        ComponentState o = free_evolve(space, s, grid.dt());
                                        Vec y(2 * n);
                                        y << o.u, o.v;
                                        return y;
                                    }),
                        grid);
}

/// Observation forms on a single wave (p, q): velocity weighted by a multiplication
/// matrix, or boundary traces of the position.
inline Mat single_wave_form(const SpectralSpace& space, const Observer& obs)
{
    const int n = space.size();
    Mat full = observation_form(space, obs);
    Mat o = Mat::Zero(2 * n, 2 * n);
    o.block(0, 0, n, n) = full.block(n, n, n, n);
    o.block(n, n, n, n) = full.block(3 * n, 3 * n, n, n);
    return o;
}

inline Mat single_wave_velocity_form(const Mat& m)
{
    const Eigen::Index n = m.rows();
    Mat o = Mat::Zero(2 * n, 2 * n);
    o.block(n, n, n, n) = m;
    return o;
}

struct UniformConstant {
    double value = 0.0;        // sharp discrete sup of T e1(0) / int obs over free waves
    double ensemble_max = 0.0; // max over the sampled ensemble (includes the extremal direction)
    Vec extremal;              // (p, q) attaining the sup
    bool degenerate = false;
};

/// T / lambda_min of the e1-scaled free-wave Gramian of the given single-wave form.
inline UniformConstant free_wave_constant(const SpectralSpace& space, const Mat& form, const TimeGrid& grid,
                                          int ensemble_size, std::mt19937_64& rng)
{
    const int n = space.size();
    DiscreteFlow flow = free_wave_flow(space, grid);
    Vec d(2 * n);
    d << 0.5 * space.power(1), 0.5 * Vec::Ones(n);
    Mat g = scale_form(flow.integrate(form), d);
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    UniformConstant u;
    const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[2 * n - 1];
    if (!(hi > 0.0) || lo <= 1e-13 * hi) {
        u.degenerate = true;
        u.value = u.ensemble_max = std::numeric_limits<double>::infinity();
        return u;
    }
    u.value = grid.horizon() / lo;
    u.extremal = d.cwiseSqrt().cwiseInverse().cwiseProduct(es.eigenvectors().col(0));
    Mat graw = flow.integrate(form);
    auto ratio = [&](const Vec& x) { return grid.horizon() * x.dot(d.cwiseProduct(x)) / x.dot(graw * x); };
    u.ensemble_max = ratio(u.extremal);
    std::normal_distribution<double> gauss;
    for (int k = 0; k < ensemble_size; ++k) {
        Vec x(2 * n);
        for (int i = 0; i < 2 * n; ++i)
            x[i] = gauss(rng) / std::sqrt(d[i]);
        u.ensemble_max = std::max(u.ensemble_max, ratio(x));
    }
    return u;
}

struct ForcedConstant {
    double value = 0.0;
    bool degenerate = false;
};

/// Smallest mu with int e1(U2) - eta * int obs(U2) <= mu * int |C u1|^2 over all cascade data,
/// found by bisection on the largest eigenvalue of the combined form.
inline ForcedConstant forced_constant(const SpectralSpace& space, const Mat& c, const Mat& obs_form, double eta,
                                      const TimeGrid& grid)
{
    const int n = space.size();
    DiscreteFlow flow = cascade_flow(space, c, grid);
    Vec d = state_norm_weights(space, 0);
    Mat e2 = Mat::Zero(4 * n, 4 * n);
    e2.block(n, n, n, n).diagonal() = 0.5 * space.power(1);
    e2.block(3 * n, 3 * n, n, n).diagonal() = 0.5 * Vec::Ones(n);
    Mat f = Mat::Zero(4 * n, 4 * n);
    f.block(0, 0, n, n) = c.transpose() * c;
    Mat k = scale_form(flow.integrate(e2) - eta * flow.integrate(obs_form), d);
    Mat ff = scale_form(flow.integrate(f), d);

    auto top = [&](double mu) {
        Eigen::SelfAdjointEigenSolver<Mat> es(k - mu * ff, Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    };
    const double tol = 1e-12 * k.norm();
    ForcedConstant out;
    if (top(0.0) <= tol)
        return out;
    double lo = 0.0, hi = 1.0;
    while (top(hi) > tol) {
        lo = hi;
        hi *= 4.0;
        if (hi > 1e16) {
            out.degenerate = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
    }
    for (int it = 0; it < 80 && hi - lo > 1e-10 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        (top(mid) > tol ? lo : hi) = mid;
    }
    out.value = hi;
    return out;
}

struct UniformConstants {
    double gamma0 = 0.0;
    double eta0 = 0.0;
    double alpha0 = 0.0;
    double delta0 = 0.0;
    double gamma0_ensemble = 0.0;
    double eta0_ensemble = 0.0;
    bool ok = false;
    std::string diagnostic;
};

/// Heuristic estimates of the uniform observability constants at the grid's horizon.
/// gamma0 is the sharp free-wave value and eta0 the sharp value times safety. alpha0 and
/// delta0 are sharp over cascade-generated forcings given eta0 and safety * gamma0, then
/// times safety. The forced constant blows up as eta approaches the sharp free-wave value
/// and vanishes for large eta; a vanishing value is replaced by the first positive one on
/// eta = sharp (1 + (safety - 1) / 2^k), which stays valid at larger eta.
inline UniformConstants estimate_uniform_constants(const SpectralSpace& space, const CouplingOperator& c,
                                                   const Observer& obs, const TimeGrid& grid, int ensemble_size,
                                                   std::mt19937_64& rng, double safety = 2.0)
{
    UniformConstants k;
    if (!(safety > 1.0)) {
        k.diagnostic = "safety factor must exceed 1";
        return k;
    }
    if (obs.empty()) {
        k.diagnostic = "observation region is empty";
        return k;
    }
    if (c.core.empty()) {
        k.diagnostic = "coupling core region is empty";
        return k;
    }
    Mat pi_m = indicator_projection(space, c.core);
    auto g = free_wave_constant(space, single_wave_velocity_form(pi_m), grid, ensemble_size, rng);
    auto e = free_wave_constant(space, single_wave_form(space, obs), grid, ensemble_size, rng);
    if (g.degenerate || e.degenerate) {
        k.diagnostic = g.degenerate ? "coupling region does not observe free waves" : "observer does not observe free waves";
        return k;
    }
    k.gamma0 = g.value;
    k.eta0 = safety * e.value;
    k.gamma0_ensemble = g.ensemble_max;
    k.eta0_ensemble = e.ensemble_max;

    const int n = space.size();
    Mat pi_form = Mat::Zero(4 * n, 4 * n);
    pi_form.block(3 * n, 3 * n, n, n) = pi_m;
    auto positive_forced = [&](const Mat& form, double sharp) {
        ForcedConstant f;
        for (int i = 0; i < 60; ++i) {
            f = forced_constant(space, c.matrix, form, sharp * (1.0 + (safety - 1.0) / std::ldexp(1.0, i)), grid);
            if (f.degenerate || f.value > 0.0)
                return f;
        }
        f.degenerate = true;
        return f;
    };
    auto a0 = positive_forced(observation_form(space, obs), e.value);
    auto d0 = positive_forced(pi_form, k.gamma0);
    if (a0.degenerate || d0.degenerate) {
        k.diagnostic = "forced estimate did not converge";
        return k;
    }
    k.alpha0 = safety * a0.value;
    k.delta0 = safety * d0.value;
    k.ok = true;
    return k;
}

/// Observability time of the 1D billiard for an interior interval.
inline double gcc_min_time(Interval region)
{
    if (region.empty())
        throw std::invalid_argument("gcc_min_time: empty region");
    if (region.lo < 0.0 || region.hi > 1.0)
        throw std::invalid_argument("gcc_min_time: region must lie in [0, 1]");
    return 2.0 * std::max(region.lo, 1.0 - region.hi);
}

/// Observability time for boundary subsets.
inline double gcc_min_time(bool left, bool right)
{
    if (!left && !right)
        throw std::invalid_argument("gcc_min_time: empty boundary subset");
    return (left && right) ? 1.0 : 2.0;
}

inline double gcc_min_time(const Observer& obs)
{
    return obs.is_boundary() ? gcc_min_time(obs.left, obs.right) : gcc_min_time(obs.region);
}

struct LedgerEntry {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    bool must_hold = false;
    bool identity = false;

    bool satisfied(double rel_tol = 1e-6) const
    {
        if (identity)
            return std::abs(lhs - rhs) <= rel_tol * (std::abs(lhs) + std::abs(rhs)) + 1e-300;
        if (std::isinf(rhs) && rhs > 0)
            return true;
        return lhs <= rhs + rel_tol * (std::abs(lhs) + std::abs(rhs)) + 1e-300;
    }
};

/// Evaluates each inequality of the two-level energy argument along one trajectory.
/// Entries whose validity requires T > T3 are flagged must_hold only in that regime.
inline std::vector<LedgerEntry> proof_chain_audit(const SpectralSpace& space, const CascadeState& u0,
                                                  const CouplingOperator& c, const Observer& obs,
                                                  const ObservabilityConstants& k, const TimeGrid& grid)
{
    const double t = grid.horizon();
    const Mat& cm = c.matrix;
    Mat pi_m = indicator_projection(space, c.core);
    auto tr = evolve_cascade(space, u0, cm, grid);
    const auto& s0 = tr.at(0);
    const auto& st = tr.final();

    const double ic = integrate_along(tr, [&](const CascadeState& s) { return s.u1.dot(cm * s.u1); });
    const double work = integrate_along(tr, [&](const CascadeState& s) { return (cm * s.u1).dot(s.v2); });
    const double eint = integrate_along(tr, [&](const CascadeState& s) { return energy(space, s.u2, s.v2, 1); });
    const double gobs = integrate_along(tr, [&](const CascadeState& s) {
        return observation_norm_sq(space, obs, observe(space, obs, s.second()));
    });
    const double pi_u1 = integrate_along(tr, [&](const CascadeState& s) { return s.u1.dot(pi_m * s.u1); });
    const double e10 = energy(space, s0.u2, s0.v2, 1), e1t = energy(space, st.u2, st.v2, 1);
    const double e00 = energy(space, s0.u1, s0.v1, 0);
    const double bracket = (st.v1.dot(st.u2) - st.v2.dot(st.u1)) - (s0.v1.dot(s0.u2) - s0.v2.dot(s0.u1));

    const double al = k.alpha, be = k.beta, g0 = k.gamma0, n0 = k.eta0;
    const double eta = t * al / (4.0 * g0);
    const bool late = t > k.T3;
    const double inf = std::numeric_limits<double>::infinity();
    const double gap = t * t - k.T2 * k.T2;

    std::vector<LedgerEntry> out;
    auto add = [&](std::string name, double lhs, double rhs, bool must, bool ident = false) {
        out.push_back({std::move(name), lhs, rhs, rhs - lhs, must, ident});
    };
    add("coupling_duality_identity", ic, bracket, true, true);
    add("energy_balance_identity", e1t - e10, -work, true, true);
    add("free_wave_coupling_observability", t * e00, g0 * pi_u1, true);
    add("young_coupling_bound", ic, 2.0 * eta * e00 + (e1t + e10) / eta, true);
    add("coupling_integral_bound", ic, 8.0 * g0 / (al * t) * (e1t + e10), true);
    add("endpoint_energy_bound", e1t + e10, k.c1 * e10 + k.c2 * be * g0 / (al * t) * eint, true);
    add("refined_coupling_bound", ic, k.c3 * g0 / (al * t) * e10 + k.c4 * be * g0 * g0 / (al * al * t * t) * eint, true);
    add("integrated_energy_lower_bound", k.M * t * e10, eint, true);
    add("forced_uniform_observability", eint - k.alpha0 * be * ic, n0 * gobs, true);
    add("weak_energy_coupling_bound", e00, g0 / (al * t) * ic, true);
    add("late_observation_lower_bound", k.M / (2.0 * t) * gap * e10, gap > 0.0 ? n0 * gobs : inf, late);
    add("late_integrated_energy_bound", eint, gap > 0.0 ? 2.0 * n0 * t * t / gap * gobs : inf, late);
    add("late_coupling_bound", ic,
        gap > 0.0 ? k.c3 * g0 / (al * t) * e10 + 2.0 * k.c4 * n0 * be * g0 * g0 / (al * al * gap) * gobs : inf, late);
    add("late_weak_energy_observability", e00,
        gap > 0.0 ? 2.0 * n0 * g0 * g0 / (al * al * gap * t) * (k.c3 / k.M + k.c4 * be * g0 / al) * gobs : inf, late);
    return out;
}

/// Smallest T on the scan at which the full minimal eigenvalue agrees between N and 2N
/// within the relative tolerance and exceeds floor * max eigenvalue. Returns +inf if none.
inline double empirical_observability_horizon(const CoefficientFunction& coupling, const Observer& obs, int n,
                                              const std::vector<double>& scan, double floor = 1e-6,
                                              double agree = 0.5, double cfl = TimeGrid::max_cfl)
{
    SpectralSpace s1(n), s2(2 * n);
    Mat c1 = assemble_multiplication_matrix(s1, coupling), c2 = assemble_multiplication_matrix(s2, coupling);
    for (double t : scan) {
        auto r1 = gramian_report(s1, c1, obs, TimeGrid::resolved(s1, t, cfl));
        auto r2 = gramian_report(s2, c2, obs, TimeGrid::resolved(s2, t, cfl));
        bool ok1 = r1.min_eig_full > floor * r1.max_eig_full, ok2 = r2.min_eig_full > floor * r2.max_eig_full;
        double ref = std::max(r1.min_eig_full, r2.min_eig_full);
        if (ok1 && ok2 && std::abs(r1.min_eig_full - r2.min_eig_full) <= agree * ref)
            return t;
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace cascade

#endif
