#pragma once

#include "conmax/common.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace conmax {

/// x(t+1) = x(t) + A1 v(t),  v(t+1) = A2 v(t) + b1 u(t).
struct AgentDynamics {
    Matrix A1;
    Matrix A2;
    double b1 = 1.0;

    int dim() const { return static_cast<int>(A1.rows()); }

    void validate() const
    {
        if (A1.rows() != A1.cols() || A2.rows() != A2.cols() || A1.rows() != A2.rows())
            throw InvalidDynamics("dynamics matrices must be square and of equal size");
        if (!A1.allFinite() || !A2.allFinite() || !std::isfinite(b1))
            throw InvalidDynamics("dynamics contain non-finite values");
        if (b1 == 0.0) throw InvalidDynamics("input gain b1 must be nonzero");
        Eigen::JacobiSVD<Matrix> svd(A1);
        if (svd.singularValues().minCoeff() <= 1e-10) throw InvalidDynamics("A1 must be full rank");
    }

    /// Damped double integrator used by the benchmark scenario.
    static AgentDynamics benchmark(int dim, double sampling_time)
    {
        return {Matrix::Identity(dim, dim) * (sampling_time / 2.0), Matrix::Identity(dim, dim) * 0.75,
                sampling_time / 2.0};
    }
};

/// {u : H u <= h}
struct InputPolytope {
    Matrix H;
    Vector h;

    int dim() const { return static_cast<int>(H.cols()); }

    bool contains(const Vector& u, double tol = 1e-9) const
    {
        return ((H * u - h).array() <= tol * (1.0 + h.array().abs())).all();
    }

    void validate() const
    {
        require(H.rows() == h.size() && H.rows() > 0, "input polytope: H and h sizes differ");
        require(H.allFinite() && h.allFinite(), "input polytope: non-finite data");
        require((h.array() >= 0.0).all(), "input polytope: h must be non-negative so that 0 is admissible");
    }

    /// Unit box with cut corners: |u_k| <= 1 and |u_a| + |u_b| <= 1.5 for every pair a < b.
    static InputPolytope benchmark(int dim)
    {
        std::vector<Vector> rows;
        std::vector<double> rhs;
        for (int k = 0; k < dim; ++k) {
            for (double sign : {1.0, -1.0}) {
                Vector r = Vector::Zero(dim);
                r(k) = sign;
                rows.push_back(r);
                rhs.push_back(1.0);
            }
        }
        for (int a = 0; a < dim; ++a) {
            for (int b = a + 1; b < dim; ++b) {
                for (double sa : {1.0, -1.0}) {
                    for (double sb : {1.0, -1.0}) {
                        Vector r = Vector::Zero(dim);
                        r(a) = sa;
                        r(b) = sb;
                        rows.push_back(r);
                        rhs.push_back(1.5);
                    }
                }
            }
        }
        InputPolytope poly;
        poly.H.resize(static_cast<Eigen::Index>(rows.size()), dim);
        poly.h.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            poly.H.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
            poly.h(static_cast<Eigen::Index>(r)) = rhs[r];
        }
        return poly;
    }
};

struct LiftedState {
    Vector x;
    Vector v;
};

struct LiftedInput {
    Vector u_first;
    Vector u_second;

    Vector stacked() const
    {
        Vector out(u_first.size() + u_second.size());
        out << u_first, u_second;
        return out;
    }
};

struct LiftedMatrices {
    Matrix state_map; ///< 2dim x 2dim
    Matrix input_map; ///< 2dim x 2dim
};

/// M v <= rhs
struct VelocityFeasibleSet {
    Matrix M;
    Vector rhs;

    bool contains(const Vector& v, double tol = 1e-9) const
    {
        return ((M * v - rhs).array() <= tol * (1.0 + rhs.array().abs())).all();
    }
};

inline LiftedMatrices lift(const AgentDynamics& dyn)
{
    const int d = dyn.dim();
    const Matrix I = Matrix::Identity(d, d);
    LiftedMatrices out;
    out.state_map = Matrix::Zero(2 * d, 2 * d);
    out.state_map.topLeftCorner(d, d) = I;
    out.state_map.topRightCorner(d, d) = dyn.A1 * (I + dyn.A2);
    out.state_map.bottomRightCorner(d, d) = dyn.A2 * dyn.A2;
    out.input_map = Matrix::Zero(2 * d, 2 * d);
    out.input_map.topLeftCorner(d, d) = dyn.b1 * dyn.A1;
    out.input_map.bottomLeftCorner(d, d) = dyn.b1 * dyn.A2;
    out.input_map.bottomRightCorner(d, d) = dyn.b1 * I;
    return out;
}

/// One elementary sub-step.
inline LiftedState substep(const AgentDynamics& dyn, const LiftedState& state, const Vector& u)
{
    return {state.x + dyn.A1 * state.v, dyn.A2 * state.v + dyn.b1 * u};
}

inline LiftedState step(const AgentDynamics& dyn, const LiftedState& state, const LiftedInput& input)
{
    return substep(dyn, substep(dyn, state, input.u_first), input.u_second);
}

inline LiftedInput invert_control(const AgentDynamics& dyn, const LiftedState& from, const LiftedState& to)
{
    const int d = dyn.dim();
    if (dyn.b1 == 0.0) throw InvalidDynamics("invert_control: b1 is zero");
    Eigen::FullPivLU<Matrix> lu(dyn.A1);
    if (!lu.isInvertible() || Eigen::JacobiSVD<Matrix>(dyn.A1).singularValues().minCoeff() <= 1e-10)
        throw InvalidDynamics("invert_control: A1 is singular");
    const LiftedMatrices lifted = lift(dyn);
    Vector from_stacked(2 * d), to_stacked(2 * d);
    from_stacked << from.x, from.v;
    to_stacked << to.x, to.v;
    const Vector residual = to_stacked - lifted.state_map * from_stacked;
    const Vector first = lu.solve(residual.head(d)) / dyn.b1;
    const Vector second = (residual.tail(d) - dyn.b1 * dyn.A2 * first) / dyn.b1;
    return {first, second};
}

/// Velocities from which an admissible lifted input stops the agent in place:
/// u_first = -(I + A2) v / b1 and u_second = A2 v / b1 must both lie in the polytope.
inline VelocityFeasibleSet velocity_feasible_set(const AgentDynamics& dyn, const InputPolytope& poly)
{
    const int d = dyn.dim();
    const Eigen::Index m = poly.H.rows();
    const Matrix I = Matrix::Identity(d, d);
    VelocityFeasibleSet set;
    set.M.resize(2 * m, d);
    set.M.topRows(m) = -poly.H * (I + dyn.A2) / dyn.b1;
    set.M.bottomRows(m) = poly.H * dyn.A2 / dyn.b1;
    set.rhs.resize(2 * m);
    set.rhs << poly.h, poly.h;
    return set;
}

namespace detail {

inline void for_each_subset(int n, int k, const std::function<void(const std::vector<int>&)>& visit)
{
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (k > n) return;
    while (true) {
        visit(idx);
        int pos = k - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
        if (pos < 0) return;
        ++idx[static_cast<std::size_t>(pos)];
        for (int q = pos + 1; q < k; ++q) idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
    }
}

} // namespace detail

/// Vertices of {v : M v <= rhs}. Throws if the set is unbounded.
inline std::vector<Vector> enumerate_vertices(const Matrix& M, const Vector& rhs, double box = 1e6)
{
    const int d = static_cast<int>(M.cols());
    const int m = static_cast<int>(M.rows());
    Matrix A(m + 2 * d, d);
    Vector b(m + 2 * d);
    A.topRows(m) = M;
    b.head(m) = rhs;
    A.bottomRows(2 * d).setZero();
    for (int k = 0; k < d; ++k) {
        A(m + 2 * k, k) = 1.0;
        A(m + 2 * k + 1, k) = -1.0;
        b(m + 2 * k) = box;
        b(m + 2 * k + 1) = box;
    }
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    std::vector<Vector> vertices;
    detail::for_each_subset(static_cast<int>(A.rows()), d, [&](const std::vector<int>& rows) {
        Matrix S(d, d);
        Vector r(d);
        for (int k = 0; k < d; ++k) {
            S.row(k) = A.row(rows[static_cast<std::size_t>(k)]);
            r(k) = b(rows[static_cast<std::size_t>(k)]);
        }
        Eigen::FullPivLU<Matrix> lu(S);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible()) return;
        const Vector v = lu.solve(r);
        if (((A * v - b).array() > 1e-9 * std::max(scale, v.cwiseAbs().maxCoeff())).any()) return;
        for (const Vector& known : vertices)
            if ((known - v).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, v.cwiseAbs().maxCoeff())) return;
        vertices.push_back(v);
    });
    for (const Vector& v : vertices)
        if (v.cwiseAbs().maxCoeff() >= box * (1.0 - 1e-9))
            throw UnboundedFeasibleSet("feasible velocity set is unbounded");
    return vertices;
}

struct CollisionBound {
    double value = 0.0; ///< worst squared relative displacement in one sub-step
    int worst_i = -1;
    int worst_j = -1;
};

inline CollisionBound collision_bound(const std::vector<AgentDynamics>& dynamics,
                                      const std::vector<InputPolytope>& polytopes)
{
    require(dynamics.size() == polytopes.size(), "collision_bound: dynamics and polytopes differ in count");
    std::vector<std::vector<Vector>> displacements(dynamics.size());
    for (std::size_t i = 0; i < dynamics.size(); ++i) {
        const VelocityFeasibleSet set = velocity_feasible_set(dynamics[i], polytopes[i]);
        for (const Vector& v : enumerate_vertices(set.M, set.rhs)) displacements[i].push_back(dynamics[i].A1 * v);
    }
    CollisionBound out;
    for (std::size_t i = 0; i < dynamics.size(); ++i) {
        for (std::size_t j = i + 1; j < dynamics.size(); ++j) {
            for (const Vector& p : displacements[i]) {
                for (const Vector& q : displacements[j]) {
                    const double value = (p - q).squaredNorm();
                    if (value > out.value || out.worst_i < 0) {
                        out.value = value;
                        out.worst_i = static_cast<int>(i);
                        out.worst_j = static_cast<int>(j);
                    }
                }
            }
        }
    }
    if (out.value == 0.0 && dynamics.size() >= 2) {
        out.worst_i = 0;
        out.worst_j = 1;
    }
    return out;
}

inline bool check_collision_margin(double rho1, double rho_bar_1) { return rho1 > rho_bar_1; }

inline std::string collision_margin_diagnostic(double rho1, const CollisionBound& bound)
{
    std::ostringstream os;
    os.precision(17);
    if (check_collision_margin(rho1, bound.value)) {
        os << "collision margin ok: rho1 = " << rho1 << " > rho_bar_1 = " << bound.value;
    } else {
        os << "collision margin violated: rho1 = " << rho1 << " <= rho_bar_1 = " << bound.value
           << " (worst pair " << bound.worst_i << ", " << bound.worst_j << ")";
    }
    return os.str();
}

} // namespace conmax
