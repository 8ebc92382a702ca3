#include "cascade/insensitize.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cascade;

namespace {

const auto observed_bump = CoefficientFunction::bump(0.2, 0.3, 0.05);
const auto control_bump = CoefficientFunction::bump(0.6, 0.7, 0.05);

InsensitizeProblem make_problem(const SpectralSpace& s, bool boundary, double t, std::mt19937_64& rng,
                                bool with_source = true)
{
    InsensitizeProblem ip;
    ip.c = observed_bump;
    ip.control = boundary ? Observer::boundary(true, false) : Observer::interior(control_bump);
    ip.grid = TimeGrid::resolved(s, t);
    std::normal_distribution<double> g;
    auto [k0, k1] = perturbation_levels(boundary);
    const int n = s.size();
    ip.y0.resize(n);
    ip.y1.resize(n);
    for (int j = 0; j < n; ++j) {
        ip.y0[j] = g(rng) / std::sqrt(std::pow(s.eigenvalue(j), k0));
        ip.y1[j] = g(rng) / std::sqrt(std::pow(s.eigenvalue(j), k1));
    }
    if (with_source) {
        for (int m = 0; m <= ip.grid.steps(); ++m) {
            Vec x(n);
            for (int j = 0; j < n; ++j)
                x[j] = g(rng) / s.eigenvalue(j);
            ip.source.push_back(x);
        }
    }
    return ip;
}

std::vector<Vec> random_control(const SpectralSpace& s, const InsensitizeProblem& ip, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    const int len = ip.boundary() ? 2 : static_cast<int>(s.nodes().size());
    std::vector<Vec> v;
    for (int m = 0; m <= ip.grid.steps(); ++m) {
        Vec x(len);
        for (int i = 0; i < len; ++i)
            x[i] = g(rng);
        v.push_back(x);
    }
    return v;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

}  // namespace

TEST(Phi, DegenerateCases)
{
    SpectralSpace s(8);
    auto grid = TimeGrid::resolved(s, 2.0);
    ScalarPath zero = free_wave(s, {Vec::Zero(8), Vec::Zero(8)}, grid);
    EXPECT_EQ(phi(s, zero, assemble_multiplication_matrix(s, observed_bump), grid), 0.0);
    ScalarPath y = free_wave(s, {Vec::Ones(8), Vec::Ones(8)}, grid);
    EXPECT_EQ(phi(s, y, Mat::Zero(8, 8), grid), 0.0);
}

TEST(Phi, SeparableClosedForm)
{
    // y = sin(pi t) phi_1 with c = 1 on T = 2: 1/2 int_0^2 sin^2(pi t) dt = 1/2
    SpectralSpace s(4);
    auto grid = TimeGrid::resolved(s, 2.0);
    Vec v = Vec::Zero(4);
    v[0] = pi;
    ScalarPath y = free_wave(s, {Vec::Zero(4), v}, grid);
    Mat one = assemble_multiplication_matrix(s, CoefficientFunction::constant(1.0));
    EXPECT_NEAR(phi(s, y, one, grid), 0.5, 1e-10);
}

TEST(Sensitivity, DegenerateCases)
{
    SpectralSpace s(8);
    std::mt19937_64 rng(1);
    auto ip = make_problem(s, false, 4.0, rng);
    auto v = random_control(s, ip, rng);
    auto z = sensitivity_derivatives(s, ip, v, Vec::Zero(8), Vec::Zero(8));
    EXPECT_EQ(z.d_tau0, 0.0);
    EXPECT_EQ(z.d_tau1, 0.0);
    ip.c = CoefficientFunction::constant(0.0);
    auto pool = perturbation_pool(s, false, 1, 0, rng);
    auto c0 = sensitivity_derivatives(s, ip, v, pool[0].z0, pool[0].z1);
    EXPECT_EQ(c0.d_tau0, 0.0);
    EXPECT_EQ(c0.d_tau1, 0.0);
}

TEST(Sensitivity, MatchesFiniteDifferences)
{
    SpectralSpace s(16);
    std::mt19937_64 rng(2);
    for (bool bnd : {false, true}) {
        auto ip = make_problem(s, bnd, 4.0, rng);
        auto v = random_control(s, ip, rng);
        for (const auto& z : perturbation_pool(s, bnd, 2, 3, rng)) {
            auto a = sensitivity_derivatives(s, ip, v, z.z0, z.z1);
            auto f = fd_derivatives(s, ip, v, z.z0, z.z1);
            EXPECT_LT(rel(a.d_tau0, f.d_tau0), 1e-5) << z.label;
            EXPECT_LT(rel(a.d_tau1, f.d_tau1), 1e-5) << z.label;
        }
    }
}

TEST(Sensitivity, LinearInDirection)
{
    SpectralSpace s(16);
    std::mt19937_64 rng(3);
    auto ip = make_problem(s, false, 4.0, rng);
    auto v = random_control(s, ip, rng);
    auto pool = perturbation_pool(s, false, 0, 2, rng);
    const Vec& a = pool[0].z0;
    const Vec& b = pool[1].z0;
    auto da = sensitivity_derivatives(s, ip, v, a, a);
    auto db = sensitivity_derivatives(s, ip, v, b, b);
    Vec mix = a - 3.0 * b;
    auto dm = sensitivity_derivatives(s, ip, v, mix, mix);
    EXPECT_LT(std::abs(dm.d_tau0 - (da.d_tau0 - 3.0 * db.d_tau0)), 1e-8 * (std::abs(da.d_tau0) + 3.0 * std::abs(db.d_tau0)));
    EXPECT_LT(std::abs(dm.d_tau1 - (da.d_tau1 - 3.0 * db.d_tau1)), 1e-8 * (std::abs(da.d_tau1) + 3.0 * std::abs(db.d_tau1)));
}

TEST(Perturbations, UnitNormPool)
{
    SpectralSpace s(16);
    std::mt19937_64 rng(4);
    for (bool bnd : {false, true}) {
        auto pool = perturbation_pool(s, bnd, 10, 10, rng);
        ASSERT_EQ(pool.size(), 20u);
        auto [k0, k1] = perturbation_levels(bnd);
        for (const auto& z : pool) {
            EXPECT_NEAR(sobolev_norm(s, z.z0, k0), 1.0, 1e-12);
            EXPECT_NEAR(sobolev_norm(s, z.z1, k1), 1.0, 1e-12);
        }
        EXPECT_EQ(pool[0].label, "mode1");
        EXPECT_EQ(pool[10].label, "random1");
    }
}

TEST(Perturbations, ReversedVariables)
{
    // w(t) = w^(T - t) solves the free wave with w(T) = z0, w'(T) = 0; z(t) = z^(T - t) has z'(T) = -z1.
    SpectralSpace s(8);
    std::mt19937_64 rng(5);
    auto grid = TimeGrid::resolved(s, 4.0);
    auto z = perturbation_pool(s, false, 0, 1, rng).front();
    const int n = 8, steps = grid.steps();
    ScalarPath wh = free_wave(s, {z.z0, Vec::Zero(n)}, grid);
    ScalarPath zh = free_wave(s, {Vec::Zero(n), z.z1}, grid);
    auto w = evolve_cascade_backward(s, {z.z0, Vec::Zero(n), Vec::Zero(n), Vec::Zero(n)}, Mat::Zero(n, n), grid);
    auto zz = evolve_cascade_backward(s, {Vec::Zero(n), Vec::Zero(n), -z.z1, Vec::Zero(n)}, Mat::Zero(n, n), grid);
    for (int m = 0; m <= steps; ++m) {
        EXPECT_LT((w.at(m).u1 - wh[steps - m].u).norm(), 1e-12);
        EXPECT_LT((w.at(m).v1 + wh[steps - m].v).norm(), 1e-10);
        EXPECT_LT((zz.at(m).u1 - zh[steps - m].u).norm(), 1e-12);
    }
}

TEST(Insensitize, ZeroData)
{
    SpectralSpace s(8);
    std::mt19937_64 rng(6);
    auto ip = make_problem(s, false, 4.0, rng, false);
    ip.y0.setZero();
    ip.y1.setZero();
    auto [v, cert] = insensitize(s, ip, perturbation_pool(s, false, 2, 2, rng));
    ASSERT_TRUE(cert.hum.ok());
    EXPECT_EQ(control_norm_sq(s, ip.control, ip.grid, v), 0.0);
    EXPECT_EQ(cert.phi_baseline, 0.0);
    EXPECT_EQ(cert.y1_terminal, 0.0);
    EXPECT_EQ(cert.y2_terminal, 0.0);
    for (const auto& r : cert.rows) {
        EXPECT_EQ(r.analytic.d_tau0, 0.0);
        EXPECT_EQ(r.analytic.d_tau1, 0.0);
    }
}

TEST(Insensitize, CertificatePasses)
{
    SpectralSpace s(16);
    std::mt19937_64 rng(7);
    for (bool bnd : {false, true}) {
        auto ip = make_problem(s, bnd, 4.0, rng);
        auto pool = perturbation_pool(s, bnd, 10, 10, rng);
        auto [v, cert] = insensitize(s, ip, pool);
        ASSERT_TRUE(cert.hum.ok()) << cert.diagnostic;
        EXPECT_EQ(cert.rows.size(), 20u);
        EXPECT_LE(cert.y1_terminal, 1e-6);
        EXPECT_LE(cert.y2_terminal, 1e-6);
        EXPECT_LE(cert.max_derivative_ratio, 1e-6);
        EXPECT_LE(cert.max_fd_mismatch, 1e-5);
        EXPECT_GE(cert.scaling_exponent, 1.9);
        EXPECT_TRUE(cert.passed());
        EXPECT_GT(cert.phi_baseline, 0.0);
    }
}

TEST(Insensitize, UnobservedWeightGivesPlainNullControl)
{
    SpectralSpace s(16);
    std::mt19937_64 rng(8);
    auto ip = make_problem(s, false, 4.0, rng);
    ip.c = CoefficientFunction::constant(0.0);
    auto [v, cert] = insensitize(s, ip, perturbation_pool(s, false, 2, 2, rng));
    ASSERT_TRUE(cert.hum.ok()) << cert.diagnostic;
    EXPECT_LE(cert.y2_terminal, 1e-6);
    EXPECT_EQ(cert.y1_terminal, 0.0);
    EXPECT_EQ(cert.max_derivative_ratio, 0.0);
}

TEST(Insensitize, RefusesShortHorizon)
{
    SpectralSpace s(8);
    std::mt19937_64 rng(9);
    auto ip = make_problem(s, false, 1.0, rng);
    auto [v, cert] = insensitize(s, ip, {});
    EXPECT_TRUE(cert.refused);
    EXPECT_TRUE(v.empty());
    EXPECT_NE(cert.diagnostic.find("T >"), std::string::npos);
    EXPECT_FALSE(cert.passed());
}

TEST(Converse, BothDirectionsAgree)
{
    SpectralSpace s(16);
    std::mt19937_64 rng(10);
    auto ip = make_problem(s, false, 4.0, rng);
    auto [v, cert] = insensitize(s, ip, {});
    ASSERT_TRUE(cert.hum.ok());
    auto pos = verify_converse(s, ip, v);
    EXPECT_TRUE(pos.derivatives_vanish());
    EXPECT_TRUE(pos.terminal_vanishes());

    auto neg = verify_converse(s, ip, {});
    EXPECT_FALSE(neg.derivatives_vanish());
    EXPECT_FALSE(neg.terminal_vanishes());
    EXPECT_GT(neg.y1_terminal, 1e-3);
    EXPECT_TRUE(neg.agree());

    ip.c = CoefficientFunction::constant(0.0);
    auto vac = verify_converse(s, ip, {});
    EXPECT_TRUE(vac.terminal_vanishes());
    EXPECT_TRUE(vac.derivatives_vanish());
}
