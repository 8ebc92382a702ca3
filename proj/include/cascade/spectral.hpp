#ifndef CASCADE_SPECTRAL_HPP
#define CASCADE_SPECTRAL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace cascade {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double pi = std::numbers::pi;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool empty() const { return !(hi > lo); }
    double length() const { return empty() ? 0.0 : hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Dirichlet sine basis phi_j(x) = sqrt(2) sin(j pi x), j = 1..N, on (0,1),
/// together with a composite Simpson rule on M uniform panels.
class SpectralSpace {
public:
    explicit SpectralSpace(int n_modes, int panels = 0)
        : n_(n_modes), m_(panels == 0 ? 8 * n_modes : panels)
    {
        if (n_ < 1)
            throw std::invalid_argument("SpectralSpace: n_modes must be positive");
        if (m_ < 8 * n_)
            throw std::invalid_argument("SpectralSpace: need at least 8N quadrature panels");
        if (m_ % 2 != 0)
            throw std::invalid_argument("SpectralSpace: Simpson rule needs an even panel count");

        lambda_.resize(n_);
        for (int j = 0; j < n_; ++j) {
            double k = (j + 1) * pi;
            lambda_[j] = k * k;
        }

        const double h = 1.0 / m_;
        nodes_.resize(m_ + 1);
        weights_.resize(m_ + 1);
        for (int i = 0; i <= m_; ++i) {
            nodes_[i] = i * h;
            double w = (i == 0 || i == m_) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            weights_[i] = w * h / 3.0;
        }

        basis_.resize(m_ + 1, n_);
        for (int i = 0; i <= m_; ++i)
            for (int j = 0; j < n_; ++j)
                basis_(i, j) = std::sqrt(2.0) * std::sin((j + 1) * pi * nodes_[i]);
    }

    int size() const { return n_; }
    int panels() const { return m_; }

    const Vec& eigenvalues() const { return lambda_; }
    double eigenvalue(int j) const { return lambda_[j]; }
    double frequency(int j) const { return std::sqrt(lambda_[j]); }
    double max_frequency() const { return std::sqrt(lambda_[n_ - 1]); }

    const Vec& nodes() const { return nodes_; }
    const Vec& weights() const { return weights_; }
    /// Basis sampled on the quadrature nodes, (M+1) x N.
    const Mat& basis() const { return basis_; }

    /// Per-mode multipliers lambda_j^s.
    Vec power(double s) const
    {
        Vec out(n_);
        for (int j = 0; j < n_; ++j)
            out[j] = std::pow(lambda_[j], s);
        return out;
    }

    /// Field values of a modal vector on the quadrature nodes.
    Vec synthesize(const Vec& coeffs) const { return basis_ * coeffs; }

    /// Field value at an arbitrary point.
    double evaluate(const Vec& coeffs, double x) const
    {
        double s = 0.0;
        for (int j = 0; j < n_; ++j)
            s += coeffs[j] * std::sqrt(2.0) * std::sin((j + 1) * pi * x);
        return s;
    }

    /// Row vectors g with g . c equal to the outward normal derivative at x = 0 and x = 1.
    Vec normal_derivative_left() const
    {
        Vec g(n_);
        for (int j = 0; j < n_; ++j)
            g[j] = -std::sqrt(2.0) * (j + 1) * pi;
        return g;
    }

    Vec normal_derivative_right() const
    {
        Vec g(n_);
        for (int j = 0; j < n_; ++j)
            g[j] = std::sqrt(2.0) * (j + 1) * pi * ((j + 1) % 2 == 0 ? 1.0 : -1.0);
        return g;
    }

private:
    int n_;
    int m_;
    Vec lambda_;
    Vec nodes_;
    Vec weights_;
    Mat basis_;
};

/// Plateau of height h on [lo, hi] with cubic smoothstep ramps of width margin.
/// A zero margin gives the sharp indicator of [lo, hi] scaled by h.
struct PlateauBump {
    double lo = 0.0;
    double hi = 0.0;
    double margin = 0.0;
    double height = 1.0;

    double operator()(double x) const
    {
        if (x >= lo && x <= hi)
            return height;
        if (margin <= 0.0)
            return 0.0;
        double t;
        if (x < lo && x > lo - margin)
            t = (x - (lo - margin)) / margin;
        else if (x > hi && x < hi + margin)
            t = ((hi + margin) - x) / margin;
        else
            return 0.0;
        return height * t * t * (3.0 - 2.0 * t);
    }
};

class CoefficientFunction {
public:
    CoefficientFunction() = default;
    explicit CoefficientFunction(std::vector<PlateauBump> pieces, Interval core = {})
        : pieces_(std::move(pieces)), core_(core)
    {
        for (const auto& p : pieces_) {
            if (p.height < 0.0 || p.margin < 0.0 || p.hi < p.lo)
                throw std::invalid_argument("CoefficientFunction: malformed plateau bump");
        }
        if (core_.empty() && !pieces_.empty())
            core_ = {pieces_.front().lo, pieces_.front().hi};
    }

    static CoefficientFunction constant(double value)
    {
        return CoefficientFunction({PlateauBump{0.0, 1.0, 0.0, value}}, Interval{0.0, 1.0});
    }

    static CoefficientFunction bump(double lo, double hi, double margin, double height = 1.0)
    {
        return CoefficientFunction({PlateauBump{lo, hi, margin, height}}, Interval{lo, hi});
    }

    static CoefficientFunction indicator(double lo, double hi)
    {
        return CoefficientFunction({PlateauBump{lo, hi, 0.0, 1.0}}, Interval{lo, hi});
    }

    double operator()(double x) const
    {
        double s = 0.0;
        for (const auto& p : pieces_)
            s += p(x);
        return s;
    }

    const std::vector<PlateauBump>& pieces() const { return pieces_; }
    const Interval& core() const { return core_; }
    bool is_zero() const { return sup_norm() == 0.0; }

    /// Lipschitz regularity fails as soon as one piece is a sharp indicator.
    bool lipschitz() const
    {
        for (const auto& p : pieces_)
            if (p.margin <= 0.0 && p.height > 0.0 && !(p.lo <= 0.0 && p.hi >= 1.0))
                return false;
        return true;
    }

    Interval support() const
    {
        Interval s{1.0, 0.0};
        for (const auto& p : pieces_) {
            if (p.height <= 0.0)
                continue;
            s.lo = std::min(s.lo, std::max(0.0, p.lo - p.margin));
            s.hi = std::max(s.hi, std::min(1.0, p.hi + p.margin));
        }
        return s;
    }

    double sup_norm() const
    {
        double s = 0.0;
        for (double x : sample_points({0.0, 1.0}))
            s = std::max(s, (*this)(x));
        return s;
    }

    /// Infimum over the closure of the declared core region.
    double core_infimum() const
    {
        if (core_.empty())
            return 0.0;
        double s = (*this)(core_.lo);
        for (double x : sample_points(core_))
            s = std::min(s, (*this)(x));
        return s;
    }

private:
    std::vector<double> sample_points(Interval r) const
    {
        std::vector<double> xs;
        const int n = 4096;
        for (int i = 0; i <= n; ++i)
            xs.push_back(r.lo + (r.hi - r.lo) * i / n);
        for (const auto& p : pieces_)
            for (double x : {p.lo, p.hi})
                if (x >= r.lo && x <= r.hi)
                    xs.push_back(x);
        return xs;
    }

    std::vector<PlateauBump> pieces_;
    Interval core_{};
};

inline Vec sample(const SpectralSpace& space, const CoefficientFunction& f)
{
    const Vec& x = space.nodes();
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        out[i] = f(x[i]);
    return out;
}

/// Coefficients c_j = int f phi_j from values on the quadrature nodes.
inline Vec project(const SpectralSpace& space, const Vec& samples)
{
    if (samples.size() != space.nodes().size())
        throw std::invalid_argument("project: sample count does not match quadrature nodes");
    if (!samples.allFinite())
        throw std::invalid_argument("project: non-finite samples");
    return space.basis().transpose() * space.weights().cwiseProduct(samples);
}

inline Vec project(const SpectralSpace& space, const CoefficientFunction& f)
{
    return project(space, sample(space, f));
}

inline Vec apply_fractional_power(const SpectralSpace& space, const Vec& u, double s)
{
    return space.power(s).cwiseProduct(u);
}

inline double sobolev_norm(const SpectralSpace& space, const Vec& u, int k)
{
    return std::sqrt(space.power(k).dot(u.cwiseAbs2()));
}

/// C_jk = int f phi_j phi_k by the space's quadrature rule.
inline Mat assemble_multiplication_matrix(const SpectralSpace& space, const Vec& samples)
{
    const Mat& phi = space.basis();
    Vec w = space.weights().cwiseProduct(samples);
    Mat c = phi.transpose() * w.asDiagonal() * phi;
    return 0.5 * (c + c.transpose());
}

inline Mat assemble_multiplication_matrix(const SpectralSpace& space, const CoefficientFunction& f)
{
    return assemble_multiplication_matrix(space, sample(space, f));
}

}  // namespace cascade

#endif
