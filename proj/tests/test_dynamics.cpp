#include "conmax/dynamics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace conmax;

namespace {

AgentDynamics random_dynamics(std::mt19937_64& rng, int dim)
{
    std::uniform_real_distribution<double> uni(-0.3, 0.3);
    AgentDynamics d;
    d.A1 = Matrix::Identity(dim, dim) * 0.7 + Matrix::NullaryExpr(dim, dim, [&] { return uni(rng); });
    d.A2 = Matrix::Identity(dim, dim) * 0.5 + Matrix::NullaryExpr(dim, dim, [&] { return uni(rng); });
    d.b1 = 0.4 + std::abs(uni(rng));
    return d;
}

Vector random_vector(std::mt19937_64& rng, int dim, double scale)
{
    std::uniform_real_distribution<double> uni(-scale, scale);
    return Vector::NullaryExpr(dim, [&] { return uni(rng); });
}

} // namespace

TEST(Dynamics, BenchmarkMatrices)
{
    const AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    EXPECT_EQ(d.A1, Matrix::Identity(2, 2) * 0.5);
    EXPECT_EQ(d.A2, Matrix::Identity(2, 2) * 0.75);
    EXPECT_EQ(d.b1, 0.5);
    EXPECT_NO_THROW(d.validate());
}

TEST(Dynamics, ValidationErrors)
{
    AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    d.b1 = 0.0;
    EXPECT_THROW(d.validate(), InvalidDynamics);
    d = AgentDynamics::benchmark(2, 1.0);
    d.A1(1, 1) = 0.0;
    EXPECT_THROW(d.validate(), InvalidDynamics);
    d = AgentDynamics::benchmark(2, 1.0);
    d.A2 = Matrix::Identity(3, 3);
    EXPECT_THROW(d.validate(), InvalidDynamics);
}

TEST(Dynamics, LiftedMapsEqualTwoSubsteps)
{
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
        const int dim = 2 + t % 2;
        const AgentDynamics d = random_dynamics(rng, dim);
        const Vector x = random_vector(rng, dim, 2.0), v = random_vector(rng, dim, 1.0);
        const Vector u1 = random_vector(rng, dim, 1.0), u2 = random_vector(rng, dim, 1.0);
        // written out by hand: x2 = x + A1 v + A1 (A2 v + b1 u1), v2 = A2 (A2 v + b1 u1) + b1 u2
        const Vector v1 = d.A2 * v + d.b1 * u1;
        const Vector x2 = x + d.A1 * v + d.A1 * v1;
        const Vector v2 = d.A2 * v1 + d.b1 * u2;
        const LiftedMatrices m = lift(d);
        Vector s(2 * dim), u(2 * dim);
        s << x, v;
        u << u1, u2;
        const Vector lifted = m.state_map * s + m.input_map * u;
        EXPECT_LT((lifted.head(dim) - x2).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((lifted.tail(dim) - v2).cwiseAbs().maxCoeff(), 1e-12);
        const LiftedState stepped = step(d, {x, v}, {u1, u2});
        EXPECT_LT((stepped.x - x2).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((stepped.v - v2).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Dynamics, InvertControlRoundTrip)
{
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const int dim = 2 + t % 2;
        const AgentDynamics d = random_dynamics(rng, dim);
        const LiftedState from{random_vector(rng, dim, 3.0), random_vector(rng, dim, 1.0)};
        const LiftedState to{random_vector(rng, dim, 3.0), random_vector(rng, dim, 1.0)};
        const LiftedState reached = step(d, from, invert_control(d, from, to));
        EXPECT_LT((reached.x - to.x).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((reached.v - to.v).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Dynamics, InvertControlStopsBenchmarkAgent)
{
    const AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    Vector x(2), v(2);
    x << 1.0, -2.0;
    v << 0.3, -0.2;
    const LiftedInput u = invert_control(d, {x, v}, {x, Vector::Zero(2)});
    // hand solution: u1 = -(1 + 0.75) v / 0.5, u2 = 0.75 v / 0.5
    EXPECT_NEAR(u.u_first(0), -1.05, 1e-14);
    EXPECT_NEAR(u.u_first(1), 0.7, 1e-14);
    EXPECT_NEAR(u.u_second(0), 0.45, 1e-14);
    EXPECT_NEAR(u.u_second(1), -0.3, 1e-14);
}

TEST(Dynamics, InvertControlRejectsSingularA1)
{
    AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    d.A1(0, 0) = 0.0;
    EXPECT_THROW(invert_control(d, {Vector::Zero(2), Vector::Zero(2)}, {Vector::Ones(2), Vector::Zero(2)}),
                 InvalidDynamics);
}

TEST(Polytope, BenchmarkOctagon)
{
    const InputPolytope p = InputPolytope::benchmark(2);
    EXPECT_EQ(p.H.rows(), 8);
    Vector u(2);
    u << 1.0, 0.5;
    EXPECT_TRUE(p.contains(u));
    u << 1.0, 0.6;
    EXPECT_FALSE(p.contains(u));
    u << 1.01, 0.0;
    EXPECT_FALSE(p.contains(u));
    EXPECT_TRUE(p.contains(Vector::Zero(2)));
    EXPECT_EQ(InputPolytope::benchmark(3).H.rows(), 6 + 12);
}

TEST(VelocitySet, MembershipMatchesStoppingInputs)
{
    std::mt19937_64 rng(4);
    for (int t = 0; t < 10; ++t) {
        const int dim = 2 + t % 2;
        const AgentDynamics d = random_dynamics(rng, dim);
        const InputPolytope p = InputPolytope::benchmark(dim);
        const VelocityFeasibleSet f = velocity_feasible_set(d, p);
        int inside = 0;
        for (int s = 0; s < 500; ++s) {
            const Vector v = random_vector(rng, dim, 1.0);
            const Vector x = random_vector(rng, dim, 5.0);
            const LiftedInput stop = invert_control(d, {x, v}, {x, Vector::Zero(dim)});
            const bool admissible = p.contains(stop.u_first, 0.0) && p.contains(stop.u_second, 0.0);
            EXPECT_EQ(f.contains(v, 0.0), admissible);
            inside += admissible ? 1 : 0;
        }
        EXPECT_GT(inside, 0);
    }
}

TEST(VelocitySet, ZeroVelocityAlwaysFeasible)
{
    std::mt19937_64 rng(5);
    const AgentDynamics d = random_dynamics(rng, 2);
    EXPECT_TRUE(velocity_feasible_set(d, InputPolytope::benchmark(2)).contains(Vector::Zero(2)));
}

TEST(VelocitySet, ScaledParametersKeepTheSet)
{
    // (A1/a, A2, b1 a, h/a) describes the same velocity set
    std::mt19937_64 rng(6);
    const AgentDynamics d = random_dynamics(rng, 2);
    const InputPolytope p = InputPolytope::benchmark(2);
    const double a = 0.37;
    const VelocityFeasibleSet f = velocity_feasible_set(d, p);
    const VelocityFeasibleSet g = velocity_feasible_set({d.A1 / a, d.A2, d.b1 * a}, {p.H, p.h / a});
    for (int s = 0; s < 1000; ++s) {
        const Vector v = random_vector(rng, 2, 1.0);
        EXPECT_EQ(f.contains(v, 0.0), g.contains(v, 0.0));
    }
}

TEST(Vertices, UnitSquare)
{
    Matrix M(4, 2);
    M << 1, 0, -1, 0, 0, 1, 0, -1;
    const auto vs = enumerate_vertices(M, Vector::Ones(4));
    EXPECT_EQ(vs.size(), 4u);
    for (const Vector& v : vs) EXPECT_NEAR(v.cwiseAbs().sum(), 2.0, 1e-12);
}

TEST(Vertices, UnboundedSetRejected)
{
    Matrix M(2, 2);
    M << 1, 0, -1, 0; // nothing bounds the second coordinate
    EXPECT_THROW(enumerate_vertices(M, Vector::Ones(2)), UnboundedFeasibleSet);
    AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    InputPolytope p{M, Vector::Ones(2)};
    EXPECT_THROW(collision_bound({d, d}, {p, p}), UnboundedFeasibleSet);
}

TEST(CollisionBound, BenchmarkValue)
{
    // F_v = U / 3.5 for the benchmark; the farthest octagon vertex is (1, 0.5), so the worst
    // relative sub-step displacement is 0.5 * 2 * (1, 0.5) / 3.5 with squared norm 1.25 / 12.25.
    const AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    const InputPolytope p = InputPolytope::benchmark(2);
    const CollisionBound b = collision_bound({d, d, d}, {p, p, p});
    EXPECT_NEAR(b.value, 1.25 / 12.25, 1e-12);
    EXPECT_TRUE(check_collision_margin(0.75, b.value));
    EXPECT_FALSE(check_collision_margin(0.1, b.value));
    EXPECT_NE(collision_margin_diagnostic(0.1, b).find("violated"), std::string::npos);
}

TEST(CollisionBound, DominatesSampledPairs)
{
    std::mt19937_64 rng(7);
    const AgentDynamics d1 = random_dynamics(rng, 2), d2 = random_dynamics(rng, 2);
    const InputPolytope p = InputPolytope::benchmark(2);
    const CollisionBound b = collision_bound({d1, d2}, {p, p});
    const VelocityFeasibleSet f1 = velocity_feasible_set(d1, p), f2 = velocity_feasible_set(d2, p);
    // sampling box from the stopping-input bound |u| <= 1.5 per coordinate
    const double box1 = 1.5 * (Matrix::Identity(2, 2) + d1.A2).inverse().cwiseAbs().maxCoeff() * 2.0 * d1.b1;
    const double box2 = 1.5 * (Matrix::Identity(2, 2) + d2.A2).inverse().cwiseAbs().maxCoeff() * 2.0 * d2.b1;
    double best = 0.0;
    int samples = 0;
    while (samples < 100000) {
        const Vector v1 = random_vector(rng, 2, box1), v2 = random_vector(rng, 2, box2);
        if (!f1.contains(v1, 0.0) || !f2.contains(v2, 0.0)) continue;
        ++samples;
        const double value = (d1.A1 * v1 - d2.A1 * v2).squaredNorm();
        EXPECT_LE(value, b.value * (1.0 + 1e-12));
        best = std::max(best, value);
    }
    EXPECT_GT(best, 0.8 * b.value); // the bound is not loose
}
