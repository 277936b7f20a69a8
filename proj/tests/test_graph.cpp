#include "conmax/graph.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace conmax;

namespace {

Configuration random_configuration(int n, double side, std::mt19937_64& rng, int dim = 2)
{
    std::uniform_real_distribution<double> uni(-0.5 * side, 0.5 * side);
    Configuration c{Matrix(dim, n)};
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) c.positions(k, i) = uni(rng);
    return c;
}

} // namespace

TEST(Weight, PlateauAndCutoff)
{
    const WeightParams p;
    EXPECT_EQ(weight(0.5, p), 1.0);
    EXPECT_EQ(weight(4.0, p), 0.0);
    EXPECT_EQ(weight(p.rho1, p), 1.0);
    EXPECT_EQ(weight(p.rho2, p), 0.0);
    EXPECT_NEAR(weight(0.5 * (p.rho1 + p.rho2), p), 0.5, 1e-15);
}

TEST(Weight, NegativeDistanceRejected)
{
    EXPECT_THROW(weight(-1e-3, WeightParams{}), InvalidArgument);
    EXPECT_THROW(weight_derivative(-1.0, WeightParams{}), InvalidArgument);
}

TEST(Weight, BadParamsRejected)
{
    EXPECT_THROW((WeightParams{2.0, 1.0}.validate()), InvalidArgument);
    EXPECT_THROW((WeightParams{0.0, 1.0}.validate()), InvalidArgument);
}

TEST(Weight, MonotoneOnGrid)
{
    const WeightParams p;
    double prev = weight(0.0, p);
    for (int k = 1; k <= 1000; ++k) {
        const double w = weight(2.0 * p.rho2 * k / 1000.0, p);
        EXPECT_LE(w, prev);
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, 1.0);
        EXPECT_LT(std::abs(w - prev), 0.01); // no jumps on this grid
        prev = w;
    }
}

TEST(Weight, MatchesIndependentFormula)
{
    const WeightParams p{0.6, 2.5};
    for (int k = 0; k <= 200; ++k) {
        const double d2 = 3.0 * k / 200.0;
        EXPECT_NEAR(weight(d2, p), oracle::weight(d2, p.rho1, p.rho2), 1e-14);
    }
}

TEST(WeightDerivative, ZeroOutsideTransition)
{
    const WeightParams p;
    EXPECT_EQ(weight_derivative(0.2, p), 0.0);
    EXPECT_EQ(weight_derivative(5.0, p), 0.0);
    EXPECT_EQ(weight_derivative(p.rho1, p), 0.0);
    EXPECT_EQ(weight_derivative(p.rho2, p), 0.0);
}

TEST(WeightDerivative, MatchesCentralDifferences)
{
    const WeightParams p;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(p.rho1 + 0.01, p.rho2 - 0.01);
    const double h = 1e-5 * p.rho2;
    for (int t = 0; t < 100; ++t) {
        const double d2 = uni(rng);
        const double fd = (weight(d2 + h, p) - weight(d2 - h, p)) / (2.0 * h);
        const double an = weight_derivative(d2, p);
        EXPECT_LE(an, 0.0);
        EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(BuildGraph, SingleUnitEdge)
{
    Configuration c{Matrix(2, 2)};
    c.positions << 0.0, std::sqrt(0.5), 0.0, 0.0;
    const WeightedGraphView g = build_graph(c, WeightParams{});
    ASSERT_EQ(g.edges.size(), 1u);
    Matrix expected(2, 2);
    expected << 1, -1, -1, 1;
    EXPECT_LT((g.laplacian - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BuildGraph, CompleteTriangleSpectrum)
{
    Configuration c{Matrix(2, 3)};
    c.positions << 0.0, 0.5, 0.25, 0.0, 0.0, 0.4;
    const Vector ev = sorted_eigenvalues(build_graph(c, WeightParams{}).laplacian);
    EXPECT_NEAR(ev(0), 0.0, 1e-12);
    EXPECT_NEAR(ev(1), 3.0, 1e-12);
    EXPECT_NEAR(ev(2), 3.0, 1e-12);
}

TEST(BuildGraph, FarApartIsDisconnected)
{
    Configuration c{Matrix(2, 2)};
    c.positions << 0.0, 2.0, 0.0, 0.0; // d2 = 4 >= rho2
    const WeightedGraphView g = build_graph(c, WeightParams{});
    EXPECT_TRUE(g.edges.empty());
    EXPECT_EQ(g.laplacian.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(algebraic_connectivity(g.laplacian), 0.0);
}

TEST(BuildGraph, ConfigurationValidation)
{
    EXPECT_THROW(build_graph(Configuration{Matrix::Zero(2, 1)}, WeightParams{}), InvalidArgument);
    EXPECT_THROW(build_graph(Configuration{Matrix::Zero(4, 3)}, WeightParams{}), InvalidArgument);
    Matrix bad = Matrix::Zero(2, 3);
    bad(0, 1) = std::nan("");
    EXPECT_THROW(build_graph(Configuration{bad}, WeightParams{}), InvalidArgument);
}

TEST(BuildGraph, LaplacianInvariantsOnRandomConfigurations)
{
    std::mt19937_64 rng(11);
    for (int t = 0; t < 50; ++t) {
        const int dim = t % 2 == 0 ? 2 : 3;
        const Configuration c = random_configuration(3 + t % 8, 3.0, rng, dim);
        const WeightedGraphView g = build_graph(c, WeightParams{});
        const Matrix& l = g.laplacian;
        EXPECT_LT((l - l.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LT(l.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_GE(sorted_eigenvalues(l)(0), -1e-8);
        for (Eigen::Index i = 0; i < l.rows(); ++i)
            for (Eigen::Index j = 0; j < l.cols(); ++j)
                if (i != j) {
                    EXPECT_LE(l(i, j), 0.0);
                    EXPECT_GE(l(i, j), -1.0);
                }
        EXPECT_LT((l - oracle::laplacian(c.positions, 0.75, 3.0)).cwiseAbs().maxCoeff(), 1e-14);
        for (std::size_t e = 0; e < g.edges.size(); ++e) EXPECT_LT(g.sq_distances[e], 3.0);
    }
}

TEST(Linearize, GradientOfSquaredNorm)
{
    Configuration c{Matrix(2, 2)};
    c.positions << 1.0, 0.0, 0.0, 0.0;
    const LinearizationCoeffs lc = linearize(c, WeightParams{});
    ASSERT_EQ(lc.edges.size(), 1u);
    EXPECT_EQ(lc.b(0, 0), 2.0);
    EXPECT_EQ(lc.b(1, 0), 0.0);
    // d2 = 1 lies in the transition band
    EXPECT_NEAR(lc.a(0, 0), weight_derivative(1.0, WeightParams{}) * 2.0, 1e-15);
}

TEST(Linearize, PlateauEdgeHasZeroSlope)
{
    Configuration c{Matrix(2, 2)};
    c.positions << 0.5, 0.0, 0.0, 0.0;
    const LinearizationCoeffs lc = linearize(c, WeightParams{});
    EXPECT_EQ(lc.a.col(0).norm(), 0.0);
}

TEST(Linearize, TaylorRemainderIsSecondOrder)
{
    const WeightParams p;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    int checked = 0;
    for (int t = 0; t < 200 && checked < 40; ++t) {
        const Configuration c = random_configuration(2, 2.5, rng);
        const LinearizationCoeffs lc = linearize(c, p);
        if (lc.edges.empty() || lc.base_sq_distances[0] <= p.rho1 + 0.05 || lc.base_sq_distances[0] >= p.rho2 - 0.05)
            continue;
        ++checked;
        const Vector delta = Vector::NullaryExpr(2, [&] { return normal(rng); });
        double prev_err = 0.0;
        for (double eps : {1e-2, 5e-3}) {
            const double d2 = lc.base_sq_distances[0] + eps * lc.b.col(0).dot(delta);
            const double err = std::abs(weight(d2, p) - (lc.base_weights[0] + eps * lc.a.col(0).dot(delta)));
            if (prev_err > 1e-13) {
                EXPECT_LT(err, 0.3 * prev_err); // halving eps cuts the error about 4x
            }
            prev_err = err;
        }
    }
    EXPECT_GE(checked, 20);
}

TEST(DeltaLaplacian, ZeroDisplacementGivesBase)
{
    std::mt19937_64 rng(5);
    const Configuration c = random_configuration(7, 3.0, rng);
    const WeightedGraphView g = build_graph(c, WeightParams{});
    const LinearizationCoeffs lc = linearize(c, WeightParams{});
    EXPECT_EQ((delta_laplacian(lc, Matrix::Zero(2, 7)) - g.laplacian).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DeltaLaplacian, TranslationInvariant)
{
    std::mt19937_64 rng(6);
    const Configuration c = random_configuration(6, 3.0, rng);
    const LinearizationCoeffs lc = linearize(c, WeightParams{});
    Matrix shift(2, 6);
    shift.row(0).setConstant(0.37);
    shift.row(1).setConstant(-1.2);
    EXPECT_LT((delta_laplacian(lc, shift) - delta_laplacian(lc, Matrix::Zero(2, 6))).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(DeltaLaplacian, MatchesIndependentLoop)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (int t = 0; t < 20; ++t) {
        const Configuration c = random_configuration(8, 3.2, rng);
        const Matrix delta = Matrix::NullaryExpr(2, 8, [&] { return normal(rng); });
        const LinearizationCoeffs lc = linearize(c, WeightParams{});
        const Matrix ref = oracle::linearized_laplacian_fd(c.positions, delta, 0.75, 3.0);
        EXPECT_LT((delta_laplacian(lc, delta) - ref).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(DeltaLaplacian, AffineIdentity)
{
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 0.3);
    const Configuration c = random_configuration(8, 3.0, rng);
    const LinearizationCoeffs lc = linearize(c, WeightParams{});
    const Matrix zero = Matrix::Zero(2, 8);
    for (int t = 0; t < 20; ++t) {
        const Matrix d1 = Matrix::NullaryExpr(2, 8, [&] { return normal(rng); });
        const Matrix d2 = Matrix::NullaryExpr(2, 8, [&] { return normal(rng); });
        const Matrix base = delta_laplacian(lc, zero);
        const Matrix lhs = delta_laplacian(lc, d1 + d2) - base;
        const Matrix rhs = (delta_laplacian(lc, d1) - base) + (delta_laplacian(lc, d2) - base);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(DeltaLaplacian, ShapeMismatchRejected)
{
    std::mt19937_64 rng(10);
    const LinearizationCoeffs lc = linearize(random_configuration(4, 2.0, rng), WeightParams{});
    EXPECT_THROW(delta_laplacian(lc, Matrix::Zero(2, 5)), InvalidArgument);
    EXPECT_THROW(delta_laplacian(lc, Matrix::Zero(3, 4)), InvalidArgument);
}

TEST(AlgebraicConnectivity, SmallGraphs)
{
    Matrix path(2, 2);
    path << 0.4, -0.4, -0.4, 0.4;
    EXPECT_NEAR(algebraic_connectivity(path), 0.8, 1e-14);
    Matrix k3 = 3.0 * Matrix::Identity(3, 3) - Matrix::Ones(3, 3);
    EXPECT_NEAR(algebraic_connectivity(k3), 3.0, 1e-13);
}

TEST(AlgebraicConnectivity, RejectsAsymmetricInput)
{
    Matrix m(2, 2);
    m << 1.0, -1.0, -0.9, 1.0;
    EXPECT_THROW(algebraic_connectivity(m), InvalidArgument);
}

TEST(AlgebraicConnectivity, MatchesBisectionOracle)
{
    std::mt19937_64 rng(12);
    for (int t = 0; t < 20; ++t) {
        const Matrix l = oracle::random_weighted_laplacian(6, 0.6, rng);
        EXPECT_NEAR(algebraic_connectivity(l), oracle::eigenvalue_by_bisection(l, 1), 1e-10);
    }
}

TEST(ShiftedMatrix, SmallCases)
{
    const Matrix k3 = 3.0 * Matrix::Identity(3, 3) - Matrix::Ones(3, 3);
    const Vector ev = sorted_eigenvalues(shifted_matrix(k3, 3.0));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(ev(k), 3.0, 1e-12);
    const Vector ev2 = sorted_eigenvalues(shifted_matrix(Matrix::Zero(2, 2), 2.0));
    EXPECT_NEAR(ev2(0), 0.0, 1e-14);
    EXPECT_NEAR(ev2(1), 2.0, 1e-14);
    EXPECT_THROW(shifted_matrix(k3, 0.0), InvalidArgument);
}

TEST(ShiftedMatrix, SpectrumOfRandomGraphs)
{
    std::mt19937_64 rng(13);
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + t % 7;
        const Matrix l = oracle::random_weighted_laplacian(n, 0.5, rng);
        const Vector shifted = oracle::spectrum_by_bisection(shifted_matrix(l, n));
        std::vector<double> expected{static_cast<double>(n)};
        const Vector ev = oracle::spectrum_by_bisection(l);
        for (int k = 1; k < n; ++k) expected.push_back(ev(k));
        std::sort(expected.begin(), expected.end());
        for (int k = 0; k < n; ++k) EXPECT_NEAR(shifted(k), expected[static_cast<std::size_t>(k)], 1e-9);
    }
}

TEST(RestrictCoeffs, KeepsInducedEdgesOnly)
{
    Configuration c{Matrix(2, 4)};
    c.positions << 0.0, 1.2, 2.4, 3.6, 0.0, 0.0, 0.0, 0.0; // path 0-1-2-3
    const LinearizationCoeffs lc = linearize(c, WeightParams{});
    ASSERT_EQ(lc.edges.size(), 3u);
    const LinearizationCoeffs sub = restrict_coeffs(lc, {1, 2, 3});
    ASSERT_EQ(sub.agent_count, 3);
    ASSERT_EQ(sub.edges.size(), 2u);
    EXPECT_EQ(sub.edges[0], (Edge{0, 1}));
    EXPECT_EQ(sub.edges[1], (Edge{1, 2}));
    EXPECT_EQ(sub.b.col(0), lc.b.col(1));
}
