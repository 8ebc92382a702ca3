#ifndef CASCADE_DYNAMICS_HPP
#define CASCADE_DYNAMICS_HPP

#include "cascade/spectral.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cascade {

/// Position and velocity of one wave component.
struct ComponentState {
    Vec u;
    Vec v;

    static ComponentState zero(int n) { return {Vec::Zero(n), Vec::Zero(n)}; }
};

/// U = (u1, u2, v1, v2) with v_i = u_i'.
struct CascadeState {
    Vec u1;
    Vec u2;
    Vec v1;
    Vec v2;

    static CascadeState zero(int n) { return {Vec::Zero(n), Vec::Zero(n), Vec::Zero(n), Vec::Zero(n)}; }

    int size() const { return static_cast<int>(u1.size()); }
    ComponentState first() const { return {u1, v1}; }
    ComponentState second() const { return {u2, v2}; }

    /// Stacked as (u1, u2, v1, v2).
    Vec pack() const
    {
        const int n = size();
        Vec x(4 * n);
        x << u1, u2, v1, v2;
        return x;
    }

    static CascadeState unpack(const Vec& x)
    {
        const Eigen::Index n = x.size() / 4;
        if (4 * n != x.size())
            throw std::invalid_argument("CascadeState::unpack: length is not a multiple of 4");
        return {x.segment(0, n), x.segment(n, n), x.segment(2 * n, n), x.segment(3 * n, n)};
    }

    CascadeState operator+(const CascadeState& o) const { return {u1 + o.u1, u2 + o.u2, v1 + o.v1, v2 + o.v2}; }
    CascadeState operator-(const CascadeState& o) const { return {u1 - o.u1, u2 - o.u2, v1 - o.v1, v2 - o.v2}; }
    CascadeState operator*(double a) const { return {a * u1, a * u2, a * v1, a * v2}; }

    CascadeState velocity_negated() const { return {u1, u2, -v1, -v2}; }
    double norm() const { return pack().norm(); }
};

struct CouplingOperator {
    Mat matrix;
    double alpha = 0.0;
    double beta = 0.0;
    Interval core;
    bool lipschitz = true;

    static CouplingOperator zero(int n)
    {
        CouplingOperator c;
        c.matrix = Mat::Zero(n, n);
        return c;
    }

    static CouplingOperator from_function(const SpectralSpace& space, const CoefficientFunction& f)
    {
        CouplingOperator c;
        c.matrix = assemble_multiplication_matrix(space, f);
        c.core = f.core();
        c.alpha = f.core_infimum();
        c.beta = f.sup_norm();
        c.lipschitz = f.lipschitz();
        return c;
    }

    int size() const { return static_cast<int>(matrix.rows()); }
    bool is_zero() const { return matrix.norm() == 0.0; }
    double spectral_norm() const
    {
        if (matrix.size() == 0)
            return 0.0;
        Eigen::SelfAdjointEigenSolver<Mat> es(matrix, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
};

/// Sharp indicator projection onto the core region of the coupling.
inline Mat indicator_projection(const SpectralSpace& space, Interval region)
{
    if (region.empty())
        return Mat::Zero(space.size(), space.size());
    return assemble_multiplication_matrix(space, CoefficientFunction::indicator(region.lo, region.hi));
}

class TimeGrid {
public:
    TimeGrid() = default;

    TimeGrid(const SpectralSpace& space, double horizon, int n_steps, bool allow_coarse = false)
        : horizon_(horizon), n_(n_steps)
    {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (n_steps < 2 || n_steps % 2 != 0)
            throw std::invalid_argument("TimeGrid: step count must be even and at least 2");
        dt_ = horizon / n_steps;
        if (!allow_coarse && dt_ * space.max_frequency() > max_cfl + 1e-12)
            throw std::invalid_argument("TimeGrid: dt * sqrt(lambda_N) exceeds 0.5");
    }

    /// Smallest even step count with dt * sqrt(lambda_N) <= cfl.
    static TimeGrid resolved(const SpectralSpace& space, double horizon, double cfl = max_cfl)
    {
        if (!(cfl > 0.0))
            throw std::invalid_argument("TimeGrid: cfl must be positive");
        int n = static_cast<int>(std::ceil(horizon * space.max_frequency() / cfl - 1e-9));
        n = std::max(2, n + (n % 2));
        return TimeGrid(space, horizon, n, cfl > max_cfl);
    }

    double horizon() const { return horizon_; }
    int steps() const { return n_; }
    double dt() const { return dt_; }
    double time(int m) const { return m == n_ ? horizon_ : m * dt_; }

    /// Composite Simpson weights on the n+1 nodes.
    Vec weights() const
    {
        Vec q(n_ + 1);
        for (int m = 0; m <= n_; ++m)
            q[m] = (m == 0 || m == n_) ? 1.0 : (m % 2 == 1 ? 4.0 : 2.0);
        return q * (dt_ / 3.0);
    }

    static constexpr double max_cfl = 0.5;

private:
    double horizon_ = 0.0;
    int n_ = 0;
    double dt_ = 0.0;
};

/// Exact rotation of every mode by time tau.
inline ComponentState free_evolve(const SpectralSpace& space, const ComponentState& s, double t)
{
    ComponentState out = s;
    for (int j = 0; j < space.size(); ++j) {
        double w = space.frequency(j);
        double c = std::cos(w * t), sn = std::sin(w * t);
        out.u[j] = c * s.u[j] + sn / w * s.v[j];
        out.v[j] = -w * sn * s.u[j] + c * s.v[j];
    }
    return out;
}

/// One step of a leader/follower pair: the leader is a free wave, the follower
/// is forced by -K * leader position. Exact rotation plus Simpson on the Duhamel term.
class CascadeStepper {
public:
    CascadeStepper(const SpectralSpace& space, const Mat& coupling, double h)
        : k_(coupling), h_(h)
    {
        const int n = space.size();
        w_.resize(n);
        ch_.resize(n);
        sh_.resize(n);
        cm_.resize(n);
        sm_.resize(n);
        for (int j = 0; j < n; ++j) {
            w_[j] = space.frequency(j);
            ch_[j] = std::cos(w_[j] * h);
            sh_[j] = std::sin(w_[j] * h);
            cm_[j] = std::cos(w_[j] * h / 2);
            sm_[j] = std::sin(w_[j] * h / 2);
        }
        coupled_ = k_.size() > 0 && k_.norm() > 0.0;
    }

    void step(Vec& lp, Vec& lq, Vec& fp, Vec& fq) const
    {
        Vec f0, fm, f1;
        if (coupled_) {
            Vec mid = cm_.cwiseProduct(lp) + sm_.cwiseQuotient(w_).cwiseProduct(lq);
            f0 = -(k_ * lp);
            fm = -(k_ * mid);
        }
        rotate(ch_, sh_, lp, lq);
        rotate(ch_, sh_, fp, fq);
        if (!coupled_)
            return;
        f1 = -(k_ * lp);
        const double s = h_ / 6.0;
        fp += s * (sh_.cwiseQuotient(w_).cwiseProduct(f0) + 4.0 * sm_.cwiseQuotient(w_).cwiseProduct(fm));
        fq += s * (ch_.cwiseProduct(f0) + 4.0 * cm_.cwiseProduct(fm) + f1);
    }

    /// Cascade convention: u1 leads, u2 follows.
    CascadeState step(const CascadeState& s) const
    {
        CascadeState o = s;
        step(o.u1, o.v1, o.u2, o.v2);
        return o;
    }

    /// Controlled convention: y2 leads, y1 follows.
    CascadeState step_controlled(const CascadeState& s) const
    {
        CascadeState o = s;
        step(o.u2, o.v2, o.u1, o.v1);
        return o;
    }

    /// Position of a free wave half a step ahead.
    Vec half_step_position(const Vec& p, const Vec& q) const
    {
        return cm_.cwiseProduct(p) + sm_.cwiseQuotient(w_).cwiseProduct(q);
    }

private:
    void rotate(const Vec& c, const Vec& sn, Vec& p, Vec& q) const
    {
        Vec np = c.cwiseProduct(p) + sn.cwiseQuotient(w_).cwiseProduct(q);
        q = c.cwiseProduct(q) - w_.cwiseProduct(sn).cwiseProduct(p);
        p = std::move(np);
    }

    Mat k_;
    double h_;
    Vec w_, ch_, sh_, cm_, sm_;
    bool coupled_ = false;
};

struct Trajectory {
    TimeGrid grid;
    std::vector<CascadeState> states;

    const CascadeState& at(int m) const { return states[m]; }
    const CascadeState& final() const { return states.back(); }
};

inline void check_sizes(const SpectralSpace& space, const CascadeState& s, const Mat& c)
{
    const int n = space.size();
    if (s.u1.size() != n || s.u2.size() != n || s.v1.size() != n || s.v2.size() != n)
        throw std::invalid_argument("cascade state does not match the spectral space");
    if (c.rows() != n || c.cols() != n)
        throw std::invalid_argument("coupling matrix does not match the spectral space");
    if (!s.pack().allFinite())
        throw std::invalid_argument("non-finite state");
}

inline Trajectory evolve_cascade(const SpectralSpace& space, const CascadeState& u0, const Mat& c, const TimeGrid& grid)
{
    check_sizes(space, u0, c);
    CascadeStepper stepper(space, c, grid.dt());
    Trajectory tr{grid, {}};
    tr.states.reserve(grid.steps() + 1);
    tr.states.push_back(u0);
    for (int m = 0; m < grid.steps(); ++m)
        tr.states.push_back(stepper.step(tr.states.back()));
    return tr;
}

inline Trajectory evolve_cascade(const SpectralSpace& space, const CascadeState& u0, const CouplingOperator& c,
                                 const TimeGrid& grid)
{
    return evolve_cascade(space, u0, c.matrix, grid);
}

/// Final data at t = T; forward solve of the velocity-negated state, then reflect.
inline Trajectory evolve_cascade_backward(const SpectralSpace& space, const CascadeState& ut, const Mat& c,
                                          const TimeGrid& grid)
{
    Trajectory fwd = evolve_cascade(space, ut.velocity_negated(), c, grid);
    Trajectory tr{grid, {}};
    const int n = grid.steps();
    tr.states.reserve(n + 1);
    for (int m = 0; m <= n; ++m)
        tr.states.push_back(fwd.states[n - m].velocity_negated());
    return tr;
}

inline Trajectory evolve_cascade_backward(const SpectralSpace& space, const CascadeState& ut,
                                          const CouplingOperator& c, const TimeGrid& grid)
{
    return evolve_cascade_backward(space, ut, c.matrix, grid);
}

/// Controlled system y1'' + A y1 + C y2 = 0, y2'' + A y2 = g. The source enters as a
/// velocity impulse Q_m g_m on y2 at every node; node states are post-impulse.
/// An empty source list means g = 0.
inline Trajectory evolve_controlled(const SpectralSpace& space, const CascadeState& y0, const Mat& c,
                                    const TimeGrid& grid, const std::vector<Vec>& source)
{
    check_sizes(space, y0, c);
    if (!source.empty() && static_cast<int>(source.size()) != grid.steps() + 1)
        throw std::invalid_argument("evolve_controlled: source must have one sample per node");
    CascadeStepper stepper(space, c, grid.dt());
    const Vec q = grid.weights();
    Trajectory tr{grid, {}};
    tr.states.reserve(grid.steps() + 1);
    CascadeState s = y0;
    for (int m = 0; m <= grid.steps(); ++m) {
        if (m > 0)
            s = stepper.step_controlled(s);
        if (!source.empty())
            s.v2 += q[m] * source[m];
        tr.states.push_back(s);
    }
    return tr;
}

/// Generator: (u1, u2, v1, v2) -> (v1, v2, -A u1, -A u2 - C u1).
inline CascadeState apply_generator(const SpectralSpace& space, const CascadeState& u, const Mat& c)
{
    const Vec& lam = space.eigenvalues();
    return {u.v1, u.v2, -lam.cwiseProduct(u.u1), -lam.cwiseProduct(u.u2) - c * u.u1};
}

inline CascadeState invert_generator(const SpectralSpace& space, const CascadeState& u, const Mat& c)
{
    const Vec& lam = space.eigenvalues();
    Vec w1 = -u.v1.cwiseQuotient(lam);
    Vec w2 = -(u.v2 + c * w1).cwiseQuotient(lam);
    return {w1, w2, u.u1, u.u2};
}

inline CascadeState iterate_inverse(const SpectralSpace& space, const CascadeState& u, const Mat& c, int k)
{
    if (k < 1)
        throw std::invalid_argument("iterate_inverse: k must be positive");
    CascadeState w = u;
    for (int i = 0; i < k; ++i)
        w = invert_generator(space, w, c);
    return w;
}

/// Dense 4N x 4N generator matrix acting on packed states.
inline Mat generator_matrix(const SpectralSpace& space, const Mat& c)
{
    const int n = space.size();
    Mat g = Mat::Zero(4 * n, 4 * n);
    g.block(0, 2 * n, n, n).setIdentity();
    g.block(n, 3 * n, n, n).setIdentity();
    g.block(2 * n, 0, n, n).diagonal() = -space.eigenvalues();
    g.block(3 * n, n, n, n).diagonal() = -space.eigenvalues();
    g.block(3 * n, 0, n, n) = -c;
    return g;
}

/// e_k = 1/2 (|A^{k/2} u|^2 + |A^{(k-1)/2} u'|^2).
inline double energy(const SpectralSpace& space, const Vec& u, const Vec& v, int k)
{
    return 0.5 * (space.power(k).dot(u.cwiseAbs2()) + space.power(k - 1).dot(v.cwiseAbs2()));
}

inline double energy(const SpectralSpace& space, const ComponentState& s, int k)
{
    return energy(space, s.u, s.v, k);
}

struct Observer {
    enum class Kind { interior_velocity, boundary_normal_derivative };

    Kind kind = Kind::interior_velocity;
    CoefficientFunction weight;
    Interval region;
    bool left = false;
    bool right = false;
    double b_left = 0.0;
    double b_right = 0.0;

    static Observer interior(const CoefficientFunction& b)
    {
        Observer o;
        o.weight = b;
        o.region = b.core();
        return o;
    }

    static Observer boundary(bool left, bool right, double b_left = 1.0, double b_right = 1.0)
    {
        Observer o;
        o.kind = Kind::boundary_normal_derivative;
        o.left = left;
        o.right = right;
        o.b_left = left ? b_left : 0.0;
        o.b_right = right ? b_right : 0.0;
        return o;
    }

    bool is_boundary() const { return kind == Kind::boundary_normal_derivative; }

    bool empty() const
    {
        if (is_boundary())
            return !((left && b_left > 0.0) || (right && b_right > 0.0));
        return region.empty() || weight.is_zero();
    }
};

/// Interior kind: b * u' on the quadrature nodes. Boundary kind: (b_L du/dnu(0), b_R du/dnu(1)).
inline Vec observe(const SpectralSpace& space, const Observer& obs, const ComponentState& s)
{
    if (obs.is_boundary()) {
        Vec out(2);
        out[0] = obs.b_left * space.normal_derivative_left().dot(s.u);
        out[1] = obs.b_right * space.normal_derivative_right().dot(s.u);
        return out;
    }
    return sample(space, obs.weight).cwiseProduct(space.synthesize(s.v));
}

/// Squared norm of an observation sample in G.
inline double observation_norm_sq(const SpectralSpace& space, const Observer& obs, const Vec& sample_values)
{
    if (obs.is_boundary())
        return sample_values.squaredNorm();
    return space.weights().dot(sample_values.cwiseAbs2());
}

/// Symmetric 4N x 4N matrix O with |B* U_2|^2 = U^T O U.
inline Mat observation_form(const SpectralSpace& space, const Observer& obs)
{
    const int n = space.size();
    Mat o = Mat::Zero(4 * n, 4 * n);
    if (obs.is_boundary()) {
        Vec gl = space.normal_derivative_left(), gr = space.normal_derivative_right();
        o.block(n, n, n, n) = obs.b_left * obs.b_left * gl * gl.transpose()
                              + obs.b_right * obs.b_right * gr * gr.transpose();
    } else {
        Vec b = sample(space, obs.weight);
        o.block(3 * n, 3 * n, n, n) = assemble_multiplication_matrix(space, b.cwiseAbs2());
    }
    return o;
}

/// Simpson integral over the grid of a per-node scalar sequence.
inline double time_integral(const TimeGrid& grid, const std::vector<double>& values)
{
    if (static_cast<int>(values.size()) != grid.steps() + 1)
        throw std::invalid_argument("time_integral: one value per node required");
    const Vec q = grid.weights();
    double s = 0.0;
    for (int m = 0; m <= grid.steps(); ++m)
        s += q[m] * values[m];
    return s;
}

template <class F>
double integrate_along(const Trajectory& tr, F&& f)
{
    std::vector<double> vals;
    vals.reserve(tr.states.size());
    for (const auto& s : tr.states)
        vals.push_back(f(s));
    return time_integral(tr.grid, vals);
}

struct EnergyRow {
    double t;
    double e1_u1;
    double e0_u1;
    double e1_u2;
    double e0_u2;
    double obs_norm_sq;
};

inline std::vector<EnergyRow> energy_history(const SpectralSpace& space, const Trajectory& tr, const Observer& obs)
{
    std::vector<EnergyRow> rows;
    for (int m = 0; m <= tr.grid.steps(); ++m) {
        const auto& s = tr.states[m];
        rows.push_back({tr.grid.time(m), energy(space, s.u1, s.v1, 1), energy(space, s.u1, s.v1, 0),
                        energy(space, s.u2, s.v2, 1), energy(space, s.u2, s.v2, 0),
                        observation_norm_sq(space, obs, observe(space, obs, s.second()))});
    }
    return rows;
}

struct InverseEnergyReport {
    double identity_residual;  // e0(Z1) - e_{-1}(W1)
    double constant;           // C in the two one-sided bounds
    double lower_margin;       // C (e0(Z1) + e1(Z2)) - e0(W2)
    double upper_margin;       // C (e_{-1}(W1) + e0(W2)) - e1(Z2)
    double c1;
    double c2;
    double ratio;              // (e_{-1}(W1) + e0(W2)) / (e0(Z1) + e1(Z2))
    double sandwich_low_margin;
    double sandwich_high_margin;
};

/// Energy relations between W and Z = A^{-1} W, with C = max(2, 2 |C|^2 / lambda_1).
inline InverseEnergyReport inverse_energy_report(const SpectralSpace& space, const CascadeState& w, const Mat& c)
{
    CascadeState z = invert_generator(space, w, c);
    double beta = 0.0;
    if (c.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Mat> es(c, Eigen::EigenvaluesOnly);
        beta = es.eigenvalues().cwiseAbs().maxCoeff();
    }
    const double k = std::max(2.0, 2.0 * beta * beta / space.eigenvalue(0));
    const double e0z1 = energy(space, z.u1, z.v1, 0);
    const double e1z2 = energy(space, z.u2, z.v2, 1);
    const double em1w1 = energy(space, w.u1, w.v1, -1);
    const double e0w2 = energy(space, w.u2, w.v2, 0);

    InverseEnergyReport r{};
    r.identity_residual = e0z1 - em1w1;
    r.constant = k;
    r.lower_margin = k * (e0z1 + e1z2) - e0w2;
    r.upper_margin = k * (em1w1 + e0w2) - e1z2;
    r.c1 = 1.0 / (1.0 + k);
    r.c2 = 1.0 + k;
    const double zs = e0z1 + e1z2, ws = em1w1 + e0w2;
    r.ratio = zs > 0.0 ? ws / zs : 0.0;
    r.sandwich_low_margin = ws - r.c1 * zs;
    r.sandwich_high_margin = r.c2 * zs - ws;
    return r;
}

}  // namespace cascade

#endif
