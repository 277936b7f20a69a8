#pragma once

#include "conmax/conic_solver.hpp"
#include "conmax/dynamics.hpp"
#include "conmax/graph.hpp"
#include "conmax/program.hpp"

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

namespace conmax {

struct ProblemTolerances {
    double eps_strict = 1e-7;  ///< margin that turns d^2 > rho into d^2 >= rho + eps
    double gamma_min = 1e-9;   ///< margin that turns gamma > 0 into gamma >= gamma_min
    double feas_tol = 1e-7;
    double opt_tol = 1e-6;
    int max_iterations = 100;
};

enum class SolveStatus { optimal, infeasible, numerical_failure };

inline const char* to_string(SolveStatus status)
{
    switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical-failure";
    }
    return "unknown";
}

struct SolveOutcome {
    SolveStatus status = SolveStatus::numerical_failure;
    double gamma = 0.0;
    Matrix delta_x; ///< dim x agents
    Matrix v_next;  ///< dim x agents (lifted problems)
    Matrix inputs;  ///< 2dim x agents, first sub-input on top (lifted problems)
    Vector variables;
    int iterations = 0;
    std::string message;

    LiftedInput input(int agent) const
    {
        const auto d = delta_x.rows();
        return {inputs.col(agent).head(d), inputs.col(agent).tail(d)};
    }
};

/// One agent as seen by a lifted program, with the (possibly scaled) model it is optimized under.
struct LiftedAgent {
    Vector x;
    Vector v;
    AgentDynamics dynamics;
    InputPolytope polytope;
    bool frozen = false;
};

namespace detail {

inline std::vector<std::pair<int, Matrix>> laplacian_terms(const LinearizationCoeffs& coeffs, const VariableLayout& lay)
{
    const int n = coeffs.agent_count;
    std::vector<std::pair<int, Matrix>> terms;
    for (int a = 0; a < n; ++a) {
        for (int k = 0; k < lay.dim; ++k) {
            Matrix F = Matrix::Zero(n, n);
            bool any = false;
            for (std::size_t e = 0; e < coeffs.edges.size(); ++e) {
                const Edge& edge = coeffs.edges[e];
                if (edge.i != a && edge.j != a) continue;
                const double coefficient = coeffs.a(k, static_cast<Eigen::Index>(e)) * (edge.i == a ? 1.0 : -1.0);
                if (coefficient == 0.0) continue;
                any = true;
                F(edge.i, edge.i) += coefficient;
                F(edge.j, edge.j) += coefficient;
                F(edge.i, edge.j) -= coefficient;
                F(edge.j, edge.i) -= coefficient;
            }
            if (any) terms.emplace_back(lay.delta_x(a, k), F);
        }
    }
    return terms;
}

inline double stationary_gamma(const Matrix& base_laplacian, const ProblemTolerances& tol)
{
    const double n = static_cast<double>(base_laplacian.rows());
    const double lambda2 = algebraic_connectivity(base_laplacian);
    return std::max(tol.gamma_min, std::min(lambda2, n) - 1e-12);
}

class RowBuilder {
public:
    explicit RowBuilder(int variables) : variables_(variables) {}

    void add(const Vector& row, double rhs, std::string label = {})
    {
        rows_.push_back(row);
        rhs_.push_back(rhs);
        labels_.push_back(std::move(label));
    }

    Vector blank() const { return Vector::Zero(variables_); }

    void emit(Matrix& matrix, Vector& rhs) const
    {
        matrix.resize(static_cast<Eigen::Index>(rows_.size()), variables_);
        rhs.resize(static_cast<Eigen::Index>(rows_.size()));
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            matrix.row(static_cast<Eigen::Index>(r)) = rows_[r].transpose();
            rhs(static_cast<Eigen::Index>(r)) = rhs_[r];
        }
    }

    const std::vector<std::string>& labels() const { return labels_; }

private:
    int variables_;
    std::vector<Vector> rows_;
    std::vector<double> rhs_;
    std::vector<std::string> labels_;
};

inline void check_edge_margins(const LinearizationCoeffs& coeffs, const std::vector<double>& edge_rho,
                               const std::vector<int>& ids)
{
    for (std::size_t e = 0; e < coeffs.edges.size(); ++e) {
        if (!(coeffs.base_sq_distances[e] > edge_rho[e])) {
            std::ostringstream os;
            os << "base state violates the distance margin on edge (" << ids[static_cast<std::size_t>(coeffs.edges[e].i)]
               << ", " << ids[static_cast<std::size_t>(coeffs.edges[e].j)] << ")";
            throw PreconditionViolation(os.str());
        }
    }
}

inline void check_connected(const Matrix& base_laplacian, const ProblemTolerances& tol)
{
    if (base_laplacian.rows() < 2) throw PreconditionViolation("problem needs at least two agents");
    if (!(algebraic_connectivity(base_laplacian) > tol.gamma_min))
        throw PreconditionViolation("base graph is not connected");
}

inline std::string edge_label(const std::vector<int>& ids, const Edge& edge)
{
    return "distance " + std::to_string(ids[static_cast<std::size_t>(edge.i)]) + "-" +
           std::to_string(ids[static_cast<std::size_t>(edge.j)]);
}

} // namespace detail

/// Lifted program over the agents of `local_coeffs` (local order). `edge_rho` gives the
/// distance threshold of every edge of `local_coeffs`.
inline ConicProgram build_lifted_program(ProblemKind kind, const std::vector<int>& ids,
                                         const std::vector<LiftedAgent>& agents,
                                         const LinearizationCoeffs& local_coeffs,
                                         const std::vector<double>& edge_rho, const ProblemTolerances& tol = {})
{
    const int n = static_cast<int>(agents.size());
    require(n == local_coeffs.agent_count && ids.size() == agents.size(), "lifted program: agent count mismatch");
    require(edge_rho.size() == local_coeffs.edges.size(), "lifted program: one threshold per edge required");
    const int dim = static_cast<int>(agents.front().x.size());

    const Matrix base = delta_laplacian(local_coeffs, Matrix::Zero(dim, n));
    detail::check_connected(base, tol);
    detail::check_edge_margins(local_coeffs, edge_rho, ids);

    ConicProgram prog;
    prog.kind = kind;
    prog.layout = {n, dim, true};
    prog.agents = ids;
    const VariableLayout& lay = prog.layout;
    const int nv = lay.size();
    prog.objective = Vector::Zero(nv);
    prog.objective(lay.gamma()) = 1.0;
    prog.psd_constant = base + Matrix::Ones(n, n);
    prog.psd_terms.emplace_back(lay.gamma(), -Matrix::Identity(n, n));
    for (auto& term : detail::laplacian_terms(local_coeffs, lay)) prog.psd_terms.push_back(std::move(term));

    detail::RowBuilder ineq(nv), eq(nv);
    {
        Vector row = ineq.blank();
        row(lay.gamma()) = -1.0;
        ineq.add(row, -tol.gamma_min, "gamma");
    }
    for (std::size_t e = 0; e < local_coeffs.edges.size(); ++e) {
        const Edge& edge = local_coeffs.edges[e];
        Vector row = ineq.blank();
        for (int k = 0; k < dim; ++k) {
            const double b = local_coeffs.b(k, static_cast<Eigen::Index>(e));
            row(lay.delta_x(edge.i, k)) = -b;
            row(lay.delta_x(edge.j, k)) = b;
        }
        ineq.add(row, local_coeffs.base_sq_distances[e] - edge_rho[e] - tol.eps_strict, detail::edge_label(ids, edge));
    }

    prog.stationary_point = Vector::Zero(nv);
    prog.stationary_point(lay.gamma()) = detail::stationary_gamma(base, tol);
    for (int a = 0; a < n; ++a) {
        const LiftedAgent& ag = agents[static_cast<std::size_t>(a)];
        prog.frozen.push_back(ag.frozen);
        const std::string who = std::to_string(ids[static_cast<std::size_t>(a)]);
        const VelocityFeasibleSet fv = velocity_feasible_set(ag.dynamics, ag.polytope);
        if (!fv.contains(ag.v, 1e-7))
            throw PreconditionViolation("velocity of agent " + who + " is outside its feasible set");

        for (Eigen::Index r = 0; r < fv.M.rows(); ++r) {
            Vector row = ineq.blank();
            for (int k = 0; k < dim; ++k) row(lay.v_next(a, k)) = fv.M(r, k);
            ineq.add(row, fv.rhs(r), "velocity-set " + who);
        }
        const bool pinned_input = (ag.polytope.h.array() == 0.0).all();
        for (int part = 0; part < 2; ++part) {
            for (Eigen::Index r = 0; r < ag.polytope.H.rows(); ++r) {
                if (pinned_input) break;
                Vector row = ineq.blank();
                for (int k = 0; k < dim; ++k) row(lay.input(a, part * dim + k)) = ag.polytope.H(r, k);
                ineq.add(row, ag.polytope.h(r), "input " + who);
            }
            if (pinned_input) {
                for (int k = 0; k < dim; ++k) {
                    Vector row = eq.blank();
                    row(lay.input(a, part * dim + k)) = 1.0;
                    eq.add(row, 0.0);
                }
            }
        }

        // lifted dynamics: delta_x = A1 (I + A2) v + b1 A1 u1,  v_next = A2^2 v + b1 A2 u1 + b1 u2
        const Matrix I = Matrix::Identity(dim, dim);
        const AgentDynamics& dyn = ag.dynamics;
        const Vector drift_x = dyn.A1 * (I + dyn.A2) * ag.v;
        const Vector drift_v = dyn.A2 * dyn.A2 * ag.v;
        for (int k = 0; k < dim; ++k) {
            Vector row = eq.blank();
            row(lay.delta_x(a, k)) = 1.0;
            for (int q = 0; q < dim; ++q) row(lay.input(a, q)) = -dyn.b1 * dyn.A1(k, q);
            eq.add(row, drift_x(k));
        }
        for (int k = 0; k < dim; ++k) {
            Vector row = eq.blank();
            row(lay.v_next(a, k)) = 1.0;
            for (int q = 0; q < dim; ++q) row(lay.input(a, q)) = -dyn.b1 * dyn.A2(k, q);
            row(lay.input(a, dim + k)) -= dyn.b1;
            eq.add(row, drift_v(k));
        }
        if (ag.frozen) {
            for (int k = 0; k < dim; ++k) {
                Vector row = eq.blank();
                row(lay.delta_x(a, k)) = 1.0;
                eq.add(row, 0.0);
            }
            for (int k = 0; k < dim; ++k) {
                Vector row = eq.blank();
                row(lay.v_next(a, k)) = 1.0;
                eq.add(row, 0.0);
            }
        }

        const LiftedInput stop = invert_control(dyn, {ag.x, ag.v}, {ag.x, Vector::Zero(dim)});
        for (int k = 0; k < dim; ++k) {
            prog.stationary_point(lay.input(a, k)) = stop.u_first(k);
            prog.stationary_point(lay.input(a, dim + k)) = stop.u_second(k);
        }
    }
    ineq.emit(prog.ineq_matrix, prog.ineq_rhs);
    prog.ineq_labels = ineq.labels();
    eq.emit(prog.eq_matrix, prog.eq_rhs);
    return prog;
}

/// Single-integrator problem: x(k+1) = x(k) + delta_x with ||delta_x_i|| <= v_max Ts.
inline ConicProgram build_centralized_si(const Configuration& config, const WeightParams& params,
                                         const LinearizationCoeffs& coeffs, double v_max, double sampling_time,
                                         const ProblemTolerances& tol = {})
{
    config.validate();
    params.validate();
    require(v_max >= 0.0 && sampling_time > 0.0, "single-integrator problem: need v_max >= 0 and Ts > 0");
    const int n = config.size();
    const int dim = config.dim();
    require(coeffs.agent_count == n, "single-integrator problem: coefficients do not match the configuration");
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;

    const Matrix base = delta_laplacian(coeffs, Matrix::Zero(dim, n));
    detail::check_connected(base, tol);
    detail::check_edge_margins(coeffs, std::vector<double>(coeffs.edges.size(), params.rho1), ids);

    ConicProgram prog;
    prog.kind = ProblemKind::centralized_si;
    prog.layout = {n, dim, false};
    prog.agents = ids;
    prog.frozen.assign(static_cast<std::size_t>(n), false);
    const VariableLayout& lay = prog.layout;
    const int nv = lay.size();
    prog.objective = Vector::Zero(nv);
    prog.objective(lay.gamma()) = 1.0;
    prog.psd_constant = base + Matrix::Ones(n, n);
    prog.psd_terms.emplace_back(lay.gamma(), -Matrix::Identity(n, n));
    for (auto& term : detail::laplacian_terms(coeffs, lay)) prog.psd_terms.push_back(std::move(term));

    detail::RowBuilder ineq(nv), eq(nv);
    {
        Vector row = ineq.blank();
        row(lay.gamma()) = -1.0;
        ineq.add(row, -tol.gamma_min, "gamma");
    }
    for (std::size_t e = 0; e < coeffs.edges.size(); ++e) {
        const Edge& edge = coeffs.edges[e];
        Vector row = ineq.blank();
        for (int k = 0; k < dim; ++k) {
            const double b = coeffs.b(k, static_cast<Eigen::Index>(e));
            row(lay.delta_x(edge.i, k)) = -b;
            row(lay.delta_x(edge.j, k)) = b;
        }
        ineq.add(row, coeffs.base_sq_distances[e] - params.rho1 - tol.eps_strict, detail::edge_label(ids, edge));
    }
    const double radius = v_max * sampling_time;
    for (int a = 0; a < n; ++a) {
        if (radius > 0.0) {
            NormConstraint nc;
            nc.A = Matrix::Zero(dim, nv);
            for (int k = 0; k < dim; ++k) nc.A(k, lay.delta_x(a, k)) = 1.0;
            nc.b = Vector::Zero(dim);
            nc.c = Vector::Zero(nv);
            nc.d = radius;
            prog.norm_constraints.push_back(std::move(nc));
        } else {
            for (int k = 0; k < dim; ++k) {
                Vector row = eq.blank();
                row(lay.delta_x(a, k)) = 1.0;
                eq.add(row, 0.0);
            }
        }
    }
    ineq.emit(prog.ineq_matrix, prog.ineq_rhs);
    prog.ineq_labels = ineq.labels();
    eq.emit(prog.eq_matrix, prog.eq_rhs);
    prog.stationary_point = Vector::Zero(nv);
    prog.stationary_point(lay.gamma()) = detail::stationary_gamma(base, tol);
    return prog;
}

inline ConicProgram build_centralized_lti(const Configuration& config, const Matrix& velocities,
                                          const WeightParams& params, const LinearizationCoeffs& coeffs,
                                          const std::vector<AgentDynamics>& dynamics,
                                          const std::vector<InputPolytope>& polytopes,
                                          const ProblemTolerances& tol = {})
{
    config.validate();
    params.validate();
    const int n = config.size();
    require(velocities.cols() == n && velocities.rows() == config.dim(), "lti problem: velocity shape mismatch");
    require(static_cast<int>(dynamics.size()) == n && static_cast<int>(polytopes.size()) == n,
            "lti problem: one model per agent required");
    require(coeffs.agent_count == n, "lti problem: coefficients do not match the configuration");
    std::vector<int> ids(static_cast<std::size_t>(n));
    std::vector<LiftedAgent> agents;
    for (int i = 0; i < n; ++i) {
        ids[static_cast<std::size_t>(i)] = i;
        agents.push_back({config.positions.col(i), velocities.col(i), dynamics[static_cast<std::size_t>(i)],
                          polytopes[static_cast<std::size_t>(i)], false});
    }
    return build_lifted_program(ProblemKind::centralized_lti, ids, agents, coeffs,
                                std::vector<double>(coeffs.edges.size(), params.rho1), tol);
}

/// Local problem data assembled by the distributed layer.
struct LocalProblemSpec {
    std::vector<int> members;                ///< sorted global ids
    std::vector<bool> frozen;                ///< per member
    std::vector<AgentDynamics> dynamics;     ///< scaled, per member
    std::vector<InputPolytope> polytopes;    ///< scaled, per member
    std::vector<double> edge_rho;            ///< per edge of the induced subgraph (restrict_coeffs order)
};

inline ConicProgram build_local(const Configuration& config, const Matrix& velocities,
                                const LinearizationCoeffs& coeffs, const LocalProblemSpec& spec,
                                const ProblemTolerances& tol = {})
{
    const std::size_t count = spec.members.size();
    require(spec.frozen.size() == count && spec.dynamics.size() == count && spec.polytopes.size() == count,
            "local problem: per-member data mismatch");
    require(std::is_sorted(spec.members.begin(), spec.members.end()), "local problem: members must be sorted");
    const LinearizationCoeffs local = restrict_coeffs(coeffs, spec.members);
    std::vector<LiftedAgent> agents;
    for (std::size_t k = 0; k < count; ++k) {
        const int id = spec.members[k];
        agents.push_back({config.positions.col(id), velocities.col(id), spec.dynamics[k], spec.polytopes[k],
                          static_cast<bool>(spec.frozen[k])});
    }
    return build_lifted_program(ProblemKind::local, spec.members, agents, local, spec.edge_rho, tol);
}

inline SolveOutcome outcome_from_variables(const ConicProgram& program, const Vector& z)
{
    const VariableLayout& lay = program.layout;
    SolveOutcome out;
    out.variables = z;
    out.gamma = z(lay.gamma());
    out.delta_x.resize(lay.dim, lay.agents);
    for (int a = 0; a < lay.agents; ++a)
        for (int k = 0; k < lay.dim; ++k) out.delta_x(k, a) = z(lay.delta_x(a, k));
    if (lay.lifted) {
        out.v_next.resize(lay.dim, lay.agents);
        out.inputs.resize(2 * lay.dim, lay.agents);
        for (int a = 0; a < lay.agents; ++a) {
            for (int k = 0; k < lay.dim; ++k) out.v_next(k, a) = z(lay.v_next(a, k));
            for (int k = 0; k < 2 * lay.dim; ++k) out.inputs(k, a) = z(lay.input(a, k));
        }
    }
    return out;
}

/// Zero-motion solution used as the fallback.
inline SolveOutcome stationary_outcome(const ConicProgram& program, SolveStatus status = SolveStatus::optimal)
{
    SolveOutcome out = outcome_from_variables(program, program.stationary_point);
    out.status = status;
    return out;
}

inline SolveOutcome solve(const ConicProgram& program, const ProblemTolerances& tol = {})
{
    SolverSettings settings;
    settings.accept_feas_tol = tol.feas_tol;
    settings.accept_gap_tol = tol.opt_tol;
    settings.max_iterations = tol.max_iterations;
    const ConeSolution raw = solve_cone_problem(to_cone_problem(program), settings);

    SolveOutcome out;
    if (raw.status == ConeStatus::optimal) {
        out = outcome_from_variables(program, raw.x);
        out.status = SolveStatus::optimal;
        const ProgramResiduals residuals = evaluate(program, raw.x);
        const double floor = program.stationary_point(program.layout.gamma()) - tol.opt_tol;
        if (!residuals.within(tol.feas_tol)) {
            out.status = SolveStatus::numerical_failure;
            out.message = "solution failed the residual check";
        } else if (out.gamma < floor) {
            out.status = SolveStatus::numerical_failure;
            out.message = "objective below the stationary value";
        }
    } else {
        out.status = raw.status == ConeStatus::infeasible ? SolveStatus::infeasible : SolveStatus::numerical_failure;
        out.variables = raw.x;
    }
    out.iterations = raw.iterations;
    if (out.message.empty()) out.message = raw.message;
    return out;
}

} // namespace conmax
