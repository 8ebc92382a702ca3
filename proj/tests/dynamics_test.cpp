#include "cascade/dynamics.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

using namespace cascade;

namespace {

Vec random_vec(int n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Vec v(n);
    for (int i = 0; i < n; ++i)
        v[i] = g(rng);
    return v;
}

CascadeState random_state(int n, std::mt19937_64& rng)
{
    return {random_vec(n, rng), random_vec(n, rng), random_vec(n, rng), random_vec(n, rng)};
}

// Random data with modal decay so that high modes do not dominate.
CascadeState smooth_state(const SpectralSpace& s, std::mt19937_64& rng)
{
    CascadeState u = random_state(s.size(), rng);
    Vec d = s.power(-0.5);
    return {u.u1.cwiseProduct(d), u.u2.cwiseProduct(d), u.v1, u.v2};
}

Vec unit(int n, int j)
{
    Vec e = Vec::Zero(n);
    e[j] = 1.0;
    return e;
}

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(FreeEvolve, HalfAndFullPeriod)
{
    SpectralSpace s(4);
    ComponentState c{unit(4, 0), Vec::Zero(4)};
    auto half = free_evolve(s, c, 1.0);
    EXPECT_LT((half.u + unit(4, 0)).norm(), 1e-14);
    EXPECT_LT(half.v.norm(), 1e-13);
    auto full = free_evolve(s, c, 2.0);
    EXPECT_LT((full.u - unit(4, 0)).norm(), 1e-14);
    EXPECT_LT(full.v.norm(), 1e-13);
}

TEST(FreeEvolve, ConservesEnergy)
{
    SpectralSpace s(20);
    std::mt19937_64 rng(4);
    ComponentState c{random_vec(20, rng), random_vec(20, rng)};
    double e0 = energy(s, c, 1);
    EXPECT_NEAR(energy(s, free_evolve(s, c, 3.7), 1), e0, 1e-12 * e0);
}

TEST(TimeGrid, ResolutionGuard)
{
    SpectralSpace s(16);
    EXPECT_THROW(TimeGrid(s, 2.0, 10), std::invalid_argument);
    EXPECT_NO_THROW(TimeGrid(s, 2.0, 10, true));
    EXPECT_THROW(TimeGrid(s, 2.0, 11, true), std::invalid_argument);
    auto g = TimeGrid::resolved(s, 2.0);
    EXPECT_LE(g.dt() * s.max_frequency(), 0.5 + 1e-12);
    EXPECT_EQ(g.steps() % 2, 0);
    EXPECT_NEAR(g.weights().sum(), 2.0, 1e-12);
}

TEST(EvolveCascade, DecoupledAndZero)
{
    SpectralSpace s(8);
    auto grid = TimeGrid::resolved(s, 1.3);
    std::mt19937_64 rng(5);
    CascadeState u0 = random_state(8, rng);
    auto tr = evolve_cascade(s, u0, Mat::Zero(8, 8), grid);
    auto a = free_evolve(s, u0.first(), 1.3), b = free_evolve(s, u0.second(), 1.3);
    EXPECT_LT((tr.final().u1 - a.u).norm(), 1e-12);
    EXPECT_LT((tr.final().v2 - b.v).norm(), 1e-11);

    auto z = evolve_cascade(s, CascadeState::zero(8), Mat::Identity(8, 8), grid);
    for (const auto& st : z.states)
        EXPECT_EQ(st.norm(), 0.0);
}

TEST(EvolveCascade, LeaderIsExactFreeWave)
{
    SpectralSpace s(16);
    auto c = CouplingOperator::from_function(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    auto grid = TimeGrid::resolved(s, 2.0);
    std::mt19937_64 rng(6);
    CascadeState u0 = random_state(16, rng);
    auto tr = evolve_cascade(s, u0, c, grid);
    for (int m = 0; m <= grid.steps(); m += 7) {
        auto ref = free_evolve(s, u0.first(), grid.time(m));
        EXPECT_LT((tr.at(m).u1 - ref.u).norm(), 1e-12 * ref.u.norm() + 1e-13);
    }
}

TEST(EvolveCascade, MatchesMatrixExponential)
{
    SpectralSpace s(16);
    auto c = CouplingOperator::from_function(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    std::mt19937_64 rng(7);
    CascadeState u0 = smooth_state(s, rng);
    Mat a = generator_matrix(s, c.matrix);
    Vec ref = (a * 2.0).exp() * u0.pack();

    auto grid = TimeGrid::resolved(s, 2.0);
    auto tr = evolve_cascade(s, u0, c, grid);
    EXPECT_LT(rel(tr.final().pack(), ref), 1e-6);

    Vec refb = (a * -2.0).exp() * u0.pack();
    auto bk = evolve_cascade_backward(s, u0, c, grid);
    EXPECT_LT(rel(bk.at(0).pack(), refb), 1e-6);
}

TEST(EvolveCascade, FourthOrder)
{
    // T = 2 is a common period of all modes, where the scheme is exact to roundoff,
    // so the convergence rate is measured on a non-resonant horizon.
    SpectralSpace s(16);
    auto c = CouplingOperator::from_function(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    std::mt19937_64 rng(8);
    CascadeState u0 = random_state(16, rng);
    const double t = 2.1;
    Vec ref = (generator_matrix(s, c.matrix) * t).exp() * u0.pack();
    auto g1 = TimeGrid::resolved(s, t, 0.5);
    TimeGrid g2(s, t, 2 * g1.steps());
    double e1 = (evolve_cascade(s, u0, c, g1).final().pack() - ref).norm();
    double e2 = (evolve_cascade(s, u0, c, g2).final().pack() - ref).norm();
    EXPECT_GE(e1 / e2, 12.0);
    EXPECT_LE(e1 / e2, 20.0);
}

TEST(EvolveCascade, BackwardRoundTrip)
{
    SpectralSpace s(16);
    auto c = CouplingOperator::from_function(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    std::mt19937_64 rng(9);
    CascadeState u0 = random_state(16, rng);
    auto grid = TimeGrid::resolved(s, 3.0);
    auto fwd = evolve_cascade(s, u0, c, grid);
    auto bk = evolve_cascade_backward(s, fwd.final(), c, grid);
    EXPECT_LT(rel(bk.at(0).pack(), u0.pack()), 1e-8);
    for (int m = 0; m <= grid.steps(); m += 11)
        EXPECT_LT(rel(bk.at(m).pack(), fwd.at(m).pack()), 1e-8);
}

TEST(EvolveCascade, BackwardDecoupledIsReflectedFreeWave)
{
    SpectralSpace s(6);
    auto grid = TimeGrid::resolved(s, 1.5);
    CascadeState ut{Vec::Zero(6), unit(6, 0), Vec::Zero(6), Vec::Zero(6)};
    auto bk = evolve_cascade_backward(s, ut, Mat::Zero(6, 6), grid);
    for (int m = 0; m <= grid.steps(); ++m) {
        auto ref = free_evolve(s, {unit(6, 0), Vec::Zero(6)}, grid.time(m) - 1.5);
        EXPECT_LT((bk.at(m).u2 - ref.u).norm(), 1e-12);
        EXPECT_LT((bk.at(m).v2 - ref.v).norm(), 1e-11);
    }
}

TEST(EvolveCascade, Linearity)
{
    SpectralSpace s(12);
    auto c = CouplingOperator::from_function(s, CoefficientFunction::bump(0.3, 0.5, 0.1));
    auto grid = TimeGrid::resolved(s, 1.0);
    std::mt19937_64 rng(10);
    CascadeState u = random_state(12, rng), v = random_state(12, rng);
    Vec lhs = evolve_cascade(s, u * 2.5 + v * -0.7, c, grid).final().pack();
    Vec rhs = 2.5 * evolve_cascade(s, u, c, grid).final().pack() - 0.7 * evolve_cascade(s, v, c, grid).final().pack();
    EXPECT_LT(rel(lhs, rhs), 1e-10);
}

TEST(EvolveCascade, ConservationAndEnergyBalance)
{
    SpectralSpace s(16);
    auto c = CouplingOperator::from_function(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    std::mt19937_64 rng(11);
    CascadeState u0 = smooth_state(s, rng);
    auto grid = TimeGrid::resolved(s, 4.0, 0.05);
    auto tr = evolve_cascade(s, u0, c, grid);
    const double e1 = energy(s, u0.u1, u0.v1, 1), e0 = energy(s, u0.u1, u0.v1, 0);
    for (const auto& st : tr.states) {
        EXPECT_NEAR(energy(s, st.u1, st.v1, 1), e1, 1e-12 * e1);
        EXPECT_NEAR(energy(s, st.u1, st.v1, 0), e0, 1e-12 * e0);
    }
    double work = integrate_along(tr, [&](const CascadeState& st) { return (c.matrix * st.u1).dot(st.v2); });
    double de = energy(s, tr.final().u2, tr.final().v2, 1) - energy(s, u0.u2, u0.v2, 1);
    EXPECT_LT(std::abs(de + work), 1e-6 * (std::abs(de) + std::abs(work)));
}

TEST(Generator, LiteralFormula)
{
    SpectralSpace s(6);
    Mat c = assemble_multiplication_matrix(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    CascadeState u{Vec::Zero(6), Vec::Zero(6), unit(6, 0), Vec::Zero(6)};
    auto a = apply_generator(s, u, c);
    EXPECT_EQ(a.u1, unit(6, 0));
    EXPECT_EQ(a.u2.norm() + a.v1.norm() + a.v2.norm(), 0.0);

    CascadeState p{unit(6, 0), Vec::Zero(6), Vec::Zero(6), Vec::Zero(6)};
    auto b = apply_generator(s, p, c);
    EXPECT_EQ(b.u1.norm() + b.u2.norm(), 0.0);
    EXPECT_NEAR(b.v1[0], -pi * pi, 1e-13);
    EXPECT_LT((b.v2 + c.col(0)).norm(), 1e-15);
}

TEST(Generator, InverseFormula)
{
    SpectralSpace s(6);
    Mat c = assemble_multiplication_matrix(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    CascadeState p{unit(6, 0), Vec::Zero(6), Vec::Zero(6), Vec::Zero(6)};
    auto w = invert_generator(s, p, c);
    EXPECT_EQ(w.u1.norm() + w.u2.norm() + w.v2.norm(), 0.0);
    EXPECT_EQ(w.v1, unit(6, 0));

    CascadeState q{Vec::Zero(6), Vec::Zero(6), unit(6, 0), Vec::Zero(6)};
    auto z = invert_generator(s, q, c);
    const double l1 = pi * pi;
    EXPECT_LT((z.u1 + unit(6, 0) / l1).norm(), 1e-15);
    Vec expected = (c * unit(6, 0)).cwiseQuotient(s.eigenvalues()) / l1;
    EXPECT_LT((z.u2 - expected).norm(), 1e-15);
}

TEST(Generator, RoundTrips)
{
    SpectralSpace s(16);
    Mat c = assemble_multiplication_matrix(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    std::mt19937_64 rng(12);
    for (int k = 0; k < 10; ++k) {
        CascadeState u = random_state(16, rng);
        EXPECT_LT(rel(apply_generator(s, invert_generator(s, u, c), c).pack(), u.pack()), 1e-10);
        auto w2 = iterate_inverse(s, u, c, 2);
        EXPECT_LT(rel(apply_generator(s, apply_generator(s, w2, c), c).pack(), u.pack()), 1e-10);
        EXPECT_EQ(iterate_inverse(s, u, c, 1).pack(), invert_generator(s, u, c).pack());
    }
    EXPECT_THROW(iterate_inverse(s, CascadeState::zero(16), c, 0), std::invalid_argument);
}

TEST(Generator, InverseCommutesWithDynamics)
{
    SpectralSpace s(16);
    Mat c = assemble_multiplication_matrix(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    std::mt19937_64 rng(13);
    CascadeState u0 = smooth_state(s, rng);
    auto grid = TimeGrid::resolved(s, 1.0, 0.1);
    Vec a = evolve_cascade(s, invert_generator(s, u0, c), c, grid).final().pack();
    Vec b = invert_generator(s, evolve_cascade(s, u0, c, grid).final(), c).pack();
    EXPECT_LT(rel(a, b), 1e-8);
}

TEST(Energy, SingleModes)
{
    SpectralSpace s(3);
    EXPECT_NEAR(energy(s, unit(3, 0), Vec::Zero(3), 1), pi * pi / 2, 1e-14);
    EXPECT_NEAR(energy(s, unit(3, 0), Vec::Zero(3), 0), 0.5, 1e-15);
    EXPECT_NEAR(energy(s, Vec::Zero(3), unit(3, 0), 0), 1.0 / (2 * pi * pi), 1e-15);
    EXPECT_NEAR(energy(s, Vec::Zero(3), unit(3, 0), 0), 0.050660, 1e-6);
}

TEST(Observe, InteriorAndBoundary)
{
    SpectralSpace s(8);
    auto obs = Observer::interior(CoefficientFunction::bump(0.6, 0.7, 0.05));
    ComponentState pos{unit(8, 0), Vec::Zero(8)};
    EXPECT_EQ(observe(s, obs, pos).norm(), 0.0);

    auto left = Observer::boundary(true, false);
    Vec o = observe(s, left, pos);
    EXPECT_NEAR(o[0], -std::sqrt(2.0) * pi, 1e-13);
    EXPECT_NEAR(o[0], -4.4429, 1e-4);
    EXPECT_EQ(o[1], 0.0);
}

TEST(Observe, InteriorNormMatchesFineQuadrature)
{
    SpectralSpace s(16, 2048);
    auto b = CoefficientFunction::bump(0.6, 0.7, 0.05);
    auto obs = Observer::interior(b);
    std::mt19937_64 rng(14);
    ComponentState st{random_vec(16, rng), random_vec(16, rng)};
    double q = observation_norm_sq(s, obs, observe(s, obs, st));

    const int nodes = 1000000;
    const double h = 1.0 / (nodes - 1);
    double ref = 0.0;
    for (int i = 0; i < nodes; ++i) {
        double x = i * h, v = 0.0;
        for (int j = 0; j < 16; ++j)
            v += st.v[j] * std::sqrt(2.0) * std::sin((j + 1) * pi * x);
        double f = b(x) * v;
        ref += (i == 0 || i == nodes - 1 ? 0.5 : 1.0) * f * f;
    }
    ref *= h;
    EXPECT_NEAR(q, ref, 1e-6 * ref);
}

TEST(Observe, FormMatchesSamples)
{
    SpectralSpace s(10);
    std::mt19937_64 rng(15);
    for (auto obs : {Observer::interior(CoefficientFunction::bump(0.5, 0.8, 0.1)), Observer::boundary(true, true, 1.0, 0.5)}) {
        Mat o = observation_form(s, obs);
        CascadeState u = random_state(10, rng);
        double a = u.pack().dot(o * u.pack());
        double b = observation_norm_sq(s, obs, observe(s, obs, u.second()));
        EXPECT_NEAR(a, b, 1e-10 * b);
    }
}

TEST(InverseEnergy, Identities)
{
    SpectralSpace s(16);
    Mat c = assemble_multiplication_matrix(s, CoefficientFunction::bump(0.2, 0.3, 0.05));
    auto zero = inverse_energy_report(s, CascadeState::zero(16), c);
    EXPECT_EQ(zero.identity_residual, 0.0);
    EXPECT_EQ(zero.lower_margin, 0.0);
    EXPECT_EQ(zero.upper_margin, 0.0);

    CascadeState w{unit(16, 0), Vec::Zero(16), Vec::Zero(16), Vec::Zero(16)};
    auto r = inverse_energy_report(s, w, c);
    EXPECT_LT(std::abs(r.identity_residual), 1e-12);
    EXPECT_NEAR(energy(s, w.u1, w.v1, -1), 1.0 / (2 * pi * pi), 1e-15);

    std::mt19937_64 rng(16);
    double lo = 1e300, hi = 0.0;
    for (int k = 0; k < 100; ++k) {
        auto rk = inverse_energy_report(s, random_state(16, rng), c);
        EXPECT_LT(std::abs(rk.identity_residual), 1e-10 * (1.0 + std::abs(rk.ratio)));
        EXPECT_GE(rk.lower_margin, 0.0);
        EXPECT_GE(rk.upper_margin, 0.0);
        EXPECT_GE(rk.sandwich_low_margin, 0.0);
        EXPECT_GE(rk.sandwich_high_margin, 0.0);
        lo = std::min(lo, rk.ratio);
        hi = std::max(hi, rk.ratio);
    }
    EXPECT_GE(lo, 1.0 / (1.0 + zero.constant));
    EXPECT_LE(hi, 1.0 + zero.constant);
}

TEST(Coupling, PartialCoercivityAndQuadraticBound)
{
    SpectralSpace s(64);
    auto f = CoefficientFunction::bump(0.2, 0.3, 0.05);
    auto c = CouplingOperator::from_function(s, f);
    EXPECT_DOUBLE_EQ(c.alpha, 1.0);
    EXPECT_DOUBLE_EQ(c.beta, 1.0);
    Mat pi_m = indicator_projection(s, c.core);
    std::mt19937_64 rng(17);
    for (int k = 0; k < 50; ++k) {
        Vec w = random_vec(64, rng);
        double cw = w.dot(c.matrix * w);
        EXPECT_LE((c.matrix * w).squaredNorm(), c.beta * cw + 1e-6 * w.squaredNorm());
        EXPECT_LE(c.alpha * w.dot(pi_m * w), cw + 1e-6 * w.squaredNorm());
    }
}
