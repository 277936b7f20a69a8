#pragma once

#include "conmax/dynamics.hpp"
#include "conmax/graph.hpp"
#include "conmax/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

namespace conmax {

struct AgentModel {
    AgentDynamics dynamics;
    InputPolytope polytope;
};

struct WorldState {
    Matrix positions;  ///< dim x N
    Matrix velocities; ///< dim x N

    int size() const { return static_cast<int>(positions.cols()); }
    int dim() const { return static_cast<int>(positions.rows()); }
    Configuration configuration() const { return {positions}; }
};

struct NeighborhoodIndex {
    std::vector<int> n;
    std::vector<std::vector<int>> J;        ///< sorted
    std::vector<std::vector<int>> boundary; ///< sorted, agents exactly n hops away
    std::vector<std::vector<int>> J_star;   ///< sorted

    int size() const { return static_cast<int>(n.size()); }
};

struct MergeWeights {
    std::vector<double> alpha;
    std::vector<double> alpha_bar; ///< per agent
    Matrix alpha_bar_pair;         ///< N x N, sum of alpha over J_i* and J_j*
};

/// Agents within `n` hops of `i` and the outermost shell.
inline std::pair<std::vector<int>, std::vector<int>> enlarged_neighborhood(
    const std::vector<std::vector<int>>& adjacency, int i, int n)
{
    require(n >= 1, "enlarged_neighborhood: size must be at least 1");
    require(i >= 0 && i < static_cast<int>(adjacency.size()), "enlarged_neighborhood: agent out of range");
    std::vector<int> hops(adjacency.size(), -1);
    std::deque<int> queue{i};
    hops[static_cast<std::size_t>(i)] = 0;
    while (!queue.empty()) {
        const int cur = queue.front();
        queue.pop_front();
        if (hops[static_cast<std::size_t>(cur)] == n) continue;
        for (int next : adjacency[static_cast<std::size_t>(cur)]) {
            if (hops[static_cast<std::size_t>(next)] >= 0) continue;
            hops[static_cast<std::size_t>(next)] = hops[static_cast<std::size_t>(cur)] + 1;
            queue.push_back(next);
        }
    }
    std::vector<int> members, shell;
    for (std::size_t j = 0; j < hops.size(); ++j) {
        if (hops[j] < 0) continue;
        members.push_back(static_cast<int>(j));
        if (hops[j] == n) shell.push_back(static_cast<int>(j));
    }
    return {members, shell};
}

inline std::pair<std::vector<int>, std::vector<int>> enlarged_neighborhood(const WeightedGraphView& graph, int i, int n)
{
    return enlarged_neighborhood(graph.adjacency(), i, n);
}

inline std::vector<std::vector<int>> dual_index(const std::vector<std::vector<int>>& J)
{
    std::vector<std::vector<int>> star(J.size());
    for (std::size_t p = 0; p < J.size(); ++p)
        for (int i : J[p]) star[static_cast<std::size_t>(i)].push_back(static_cast<int>(p));
    return star;
}

inline NeighborhoodIndex build_neighborhood_index(const WeightedGraphView& graph, const std::vector<int>& n)
{
    require(static_cast<int>(n.size()) == graph.agent_count, "neighborhood index: one size per agent required");
    const auto adjacency = graph.adjacency();
    NeighborhoodIndex index;
    index.n = n;
    for (int i = 0; i < graph.agent_count; ++i) {
        auto [members, shell] = enlarged_neighborhood(adjacency, i, n[static_cast<std::size_t>(i)]);
        index.J.push_back(std::move(members));
        index.boundary.push_back(std::move(shell));
    }
    index.J_star = dual_index(index.J);
    return index;
}

inline std::vector<double> uniform_alpha(int agents)
{
    return std::vector<double>(static_cast<std::size_t>(agents), 1.0 / static_cast<double>(agents));
}

inline MergeWeights make_merge_weights(const NeighborhoodIndex& index, const std::vector<double>& alpha,
                                       const WeightedGraphView& graph)
{
    const int n = index.size();
    require(static_cast<int>(alpha.size()) == n, "merge weights: one alpha per agent required");
    for (double a : alpha) require(a > 0.0 && std::isfinite(a), "merge weights: alpha must be positive");
    MergeWeights out;
    out.alpha = alpha;
    out.alpha_bar.assign(static_cast<std::size_t>(n), 0.0);
    Matrix membership = Matrix::Zero(n, n); // (i, p) = alpha_p if p in J_i*
    for (int i = 0; i < n; ++i) {
        for (int p : index.J_star[static_cast<std::size_t>(i)]) {
            membership(i, p) = alpha[static_cast<std::size_t>(p)];
            out.alpha_bar[static_cast<std::size_t>(i)] += alpha[static_cast<std::size_t>(p)];
        }
        if (out.alpha_bar[static_cast<std::size_t>(i)] > 1.0 + 1e-12)
            throw InvalidArgument("merge weights: alpha_bar of agent " + std::to_string(i) + " exceeds 1");
    }
    out.alpha_bar_pair = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < n; ++p)
                if (membership(i, p) > 0.0 && membership(j, p) > 0.0) out.alpha_bar_pair(i, j) += alpha[static_cast<std::size_t>(p)];
    for (const Edge& e : graph.edges)
        if (!(out.alpha_bar_pair(e.i, e.j) > 0.0))
            throw InvalidArgument("merge weights: edge without a shared local problem");
    return out;
}

/// Model an agent is optimized under inside other agents' local problems.
inline AgentModel scaled_local_params(const AgentDynamics& dyn, const InputPolytope& poly, double alpha_bar)
{
    require(alpha_bar > 0.0, "scaled_local_params: alpha_bar must be positive");
    return {{dyn.A1 / alpha_bar, dyn.A2, dyn.b1 * alpha_bar}, {poly.H, poly.h / alpha_bar}};
}

/// Distance threshold for a local problem such that the merged linearized distance stays above rho1.
inline double local_rho(double rho1, double d2_now, double alpha_bar_pair)
{
    require(alpha_bar_pair > 0.0, "local_rho: alpha_bar must be positive");
    return (rho1 + d2_now * (alpha_bar_pair - 1.0)) / alpha_bar_pair;
}

struct LocalSolution {
    int owner = -1;
    std::vector<int> members; ///< sorted global ids
    std::vector<bool> frozen;
    Matrix delta_x;
    Matrix v_next;
    Matrix inputs;
    double gamma = 0.0;
    SolveStatus status = SolveStatus::numerical_failure;
    bool fallback = false; ///< stationary solution substituted
    int iterations = 0;
    std::string message;

    int position_of(int agent) const
    {
        const auto it = std::lower_bound(members.begin(), members.end(), agent);
        return it != members.end() && *it == agent ? static_cast<int>(it - members.begin()) : -1;
    }

    /// Status character used in logs.
    char status_code() const
    {
        if (members.size() <= 1) return 's';
        if (!fallback) return 'o';
        return status == SolveStatus::infeasible ? 'x' : 'f';
    }
};

inline LocalProblemSpec make_local_spec(const std::vector<int>& members,
                                        const std::vector<int>& shell, const MergeWeights& weights,
                                        const std::vector<AgentModel>& models, const WeightParams& params,
                                        const LinearizationCoeffs& coeffs)
{
    LocalProblemSpec spec;
    spec.members = members;
    for (int j : members) {
        spec.frozen.push_back(std::binary_search(shell.begin(), shell.end(), j));
        const AgentModel scaled = scaled_local_params(models[static_cast<std::size_t>(j)].dynamics,
                                                      models[static_cast<std::size_t>(j)].polytope,
                                                      weights.alpha_bar[static_cast<std::size_t>(j)]);
        spec.dynamics.push_back(scaled.dynamics);
        spec.polytopes.push_back(scaled.polytope);
    }
    const LinearizationCoeffs local = restrict_coeffs(coeffs, members);
    for (std::size_t e = 0; e < local.edges.size(); ++e) {
        const int gi = members[static_cast<std::size_t>(local.edges[e].i)];
        const int gj = members[static_cast<std::size_t>(local.edges[e].j)];
        spec.edge_rho.push_back(local_rho(params.rho1, local.base_sq_distances[e], weights.alpha_bar_pair(gi, gj)));
    }
    return spec;
}

/// Builds and solves one local problem; substitutes the stationary solution when the solve fails.
inline LocalSolution solve_local(const WorldState& world, int owner, const std::vector<int>& members,
                                 const std::vector<int>& shell, const MergeWeights& weights,
                                 const std::vector<AgentModel>& models, const WeightParams& params,
                                 const LinearizationCoeffs& coeffs, const ProblemTolerances& tol)
{
    LocalSolution out;
    out.owner = owner;
    out.members = members;
    const int dim = world.dim();
    const auto count = static_cast<Eigen::Index>(members.size());
    if (members.size() <= 1) {
        // isolated agent: hold position
        const AgentModel scaled = scaled_local_params(models[static_cast<std::size_t>(owner)].dynamics,
                                                      models[static_cast<std::size_t>(owner)].polytope,
                                                      weights.alpha_bar[static_cast<std::size_t>(owner)]);
        const LiftedInput stop = invert_control(scaled.dynamics, {world.positions.col(owner), world.velocities.col(owner)},
                                                {world.positions.col(owner), Vector::Zero(dim)});
        out.frozen = {false};
        out.delta_x = Matrix::Zero(dim, 1);
        out.v_next = Matrix::Zero(dim, 1);
        out.inputs.resize(2 * dim, 1);
        out.inputs << stop.u_first, stop.u_second;
        out.status = SolveStatus::optimal;
        out.fallback = true;
        out.message = "isolated agent";
        return out;
    }
    const LocalProblemSpec spec = make_local_spec(members, shell, weights, models, params, coeffs);
    out.frozen = spec.frozen;
    const ConicProgram program = build_local(world.configuration(), world.velocities, coeffs, spec, tol);
    SolveOutcome outcome = solve(program, tol);
    out.status = outcome.status;
    out.iterations = outcome.iterations;
    out.message = outcome.message;
    if (outcome.status != SolveStatus::optimal) {
        outcome = stationary_outcome(program, outcome.status);
        out.fallback = true;
    }
    out.gamma = outcome.gamma;
    out.delta_x = outcome.delta_x;
    out.v_next = outcome.v_next;
    out.inputs = outcome.inputs;
    for (Eigen::Index k = 0; k < count; ++k) {
        if (!out.frozen[static_cast<std::size_t>(k)]) continue;
        out.delta_x.col(k).setZero();
        out.v_next.col(k).setZero();
    }
    return out;
}

/// Local displacement padded with zeros to all N agents.
inline Matrix padded_displacement(const LocalSolution& local, int agents)
{
    Matrix out = Matrix::Zero(local.delta_x.rows(), agents);
    for (std::size_t k = 0; k < local.members.size(); ++k)
        out.col(local.members[k]) = local.delta_x.col(static_cast<Eigen::Index>(k));
    return out;
}

struct MergeResult {
    WorldState next;
    Matrix inputs;                 ///< 2dim x N applied lifted inputs
    Matrix predicted_positions;    ///< x + sum alpha delta_x_hat
    Matrix predicted_velocities;   ///< sum alpha v_hat / alpha_bar
    Matrix intermediate_positions; ///< positions after the first sub-step
};

/// `locals[p]` must be agent p's solution.
inline MergeResult merge_step(const std::vector<LocalSolution>& locals, const MergeWeights& weights,
                              const NeighborhoodIndex& index, const std::vector<AgentModel>& models,
                              const WorldState& current)
{
    const int n = current.size();
    const int dim = current.dim();
    require(static_cast<int>(locals.size()) == n && index.size() == n, "merge_step: one local solution per agent");
    MergeResult out;
    out.inputs = Matrix::Zero(2 * dim, n);
    out.predicted_positions = current.positions;
    out.predicted_velocities = Matrix::Zero(dim, n);
    out.next.positions.resize(dim, n);
    out.next.velocities.resize(dim, n);
    out.intermediate_positions.resize(dim, n);
    for (int i = 0; i < n; ++i) {
        for (int p : index.J_star[static_cast<std::size_t>(i)]) {
            const LocalSolution& local = locals[static_cast<std::size_t>(p)];
            const int slot = local.owner == p ? local.position_of(i) : -1;
            if (slot < 0)
                throw ProtocolError("merge_step: agent " + std::to_string(i) + " is missing from the solution of agent " +
                                    std::to_string(p));
            const double a = weights.alpha[static_cast<std::size_t>(p)];
            out.inputs.col(i) += a * local.inputs.col(slot);
            out.predicted_positions.col(i) += a * local.delta_x.col(slot);
            out.predicted_velocities.col(i) += a * local.v_next.col(slot);
        }
        out.predicted_velocities.col(i) /= weights.alpha_bar[static_cast<std::size_t>(i)];
        const AgentDynamics& dyn = models[static_cast<std::size_t>(i)].dynamics;
        const LiftedState now{current.positions.col(i), current.velocities.col(i)};
        const LiftedState next = step(dyn, now, {out.inputs.col(i).head(dim), out.inputs.col(i).tail(dim)});
        out.next.positions.col(i) = next.x;
        out.next.velocities.col(i) = next.v;
        out.intermediate_positions.col(i) = now.x + dyn.A1 * now.v;
    }
    return out;
}

struct DistributedSettings {
    WeightParams params;
    ProblemTolerances tol;
    bool safeguard = true;          ///< blend toward the stationary inputs if the merge lowers lambda_2
    double monotonicity_tol = 1e-9; ///< decrease tolerated before the safeguard acts
};

struct StepReport {
    WorldState next;
    std::vector<LocalSolution> locals;
    MergeResult merge;            ///< raw merge, before any blending
    LinearizationCoeffs coeffs;   ///< linearization at the current state
    Matrix applied_inputs;        ///< 2dim x N
    Matrix intermediate_positions;
    double lambda2_before = 0.0;  ///< lambda_2(L(x(k)))
    double lambda2_merged = 0.0;  ///< linearized lambda_2 of the raw merge
    double lambda2_linearized = 0.0;
    double blend = 1.0;           ///< weight of the merged inputs (1 = no safeguard action)
};

namespace detail {

/// argmax over t in [0, 1] of a concave function.
template <class F>
double golden_section_max(F f, double tol = 1e-10)
{
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > tol) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    return 0.5 * (lo + hi);
}

inline Matrix stationary_inputs(const WorldState& world, const std::vector<AgentModel>& models)
{
    const int dim = world.dim();
    Matrix out(2 * dim, world.size());
    for (int i = 0; i < world.size(); ++i) {
        const LiftedInput stop = invert_control(models[static_cast<std::size_t>(i)].dynamics,
                                                {world.positions.col(i), world.velocities.col(i)},
                                                {world.positions.col(i), Vector::Zero(dim)});
        out.col(i) << stop.u_first, stop.u_second;
    }
    return out;
}

inline WorldState apply_inputs(const WorldState& world, const std::vector<AgentModel>& models, const Matrix& inputs)
{
    const int dim = world.dim();
    WorldState next{Matrix(dim, world.size()), Matrix(dim, world.size())};
    for (int i = 0; i < world.size(); ++i) {
        const LiftedState s = step(models[static_cast<std::size_t>(i)].dynamics,
                                   {world.positions.col(i), world.velocities.col(i)},
                                   {inputs.col(i).head(dim), inputs.col(i).tail(dim)});
        next.positions.col(i) = s.x;
        next.velocities.col(i) = s.v;
    }
    return next;
}

} // namespace detail

/// Checks the unscaled global constraints for a step from `world` to `next` under `inputs`.
/// Returns an empty string when they hold.
inline std::string check_global_constraints(const WorldState& world, const WorldState& next, const Matrix& inputs,
                                            const std::vector<AgentModel>& models, const LinearizationCoeffs& coeffs,
                                            const WeightParams& params, double tol = 1e-7)
{
    const int dim = world.dim();
    const Matrix delta = next.positions - world.positions;
    for (std::size_t e = 0; e < coeffs.edges.size(); ++e) {
        const Edge& edge = coeffs.edges[e];
        const double lin = coeffs.base_sq_distances[e] +
                           coeffs.b.col(static_cast<Eigen::Index>(e)).dot(delta.col(edge.i) - delta.col(edge.j));
        if (!(lin >= params.rho1 - tol))
            return "linearized distance margin violated on edge " + std::to_string(edge.i) + "-" + std::to_string(edge.j);
    }
    for (int i = 0; i < world.size(); ++i) {
        const AgentModel& m = models[static_cast<std::size_t>(i)];
        if (!velocity_feasible_set(m.dynamics, m.polytope).contains(next.velocities.col(i), tol))
            return "velocity of agent " + std::to_string(i) + " left its feasible set";
        if (!m.polytope.contains(inputs.col(i).head(dim), tol) || !m.polytope.contains(inputs.col(i).tail(dim), tol))
            return "input of agent " + std::to_string(i) + " left its polytope";
    }
    return {};
}

/// One round: local solves, exchange, merge, actuation.
inline StepReport distributed_round(const WorldState& world, const NeighborhoodIndex& index, const MergeWeights& weights,
                                  const std::vector<AgentModel>& models, const DistributedSettings& settings)
{
    const int n = world.size();
    const int dim = world.dim();
    require(index.size() == n && static_cast<int>(models.size()) == n, "distributed_round: size mismatch");
    StepReport report;
    report.coeffs = linearize(world.configuration(), settings.params);
    for (int p = 0; p < n; ++p) {
        report.locals.push_back(solve_local(world, p, index.J[static_cast<std::size_t>(p)],
                                            index.boundary[static_cast<std::size_t>(p)], weights, models,
                                            settings.params, report.coeffs, settings.tol));
    }
    report.merge = merge_step(report.locals, weights, index, models, world);

    const Matrix zero = Matrix::Zero(dim, n);
    report.lambda2_before = algebraic_connectivity(delta_laplacian(report.coeffs, zero));
    const Matrix merged_delta = report.merge.next.positions - world.positions;
    report.lambda2_merged = algebraic_connectivity(delta_laplacian(report.coeffs, merged_delta));

    report.next = report.merge.next;
    report.applied_inputs = report.merge.inputs;
    report.lambda2_linearized = report.lambda2_merged;
    if (settings.safeguard && report.lambda2_merged < report.lambda2_before - settings.monotonicity_tol) {
        auto lambda2_at = [&](double t) {
            return algebraic_connectivity(delta_laplacian(report.coeffs, t * merged_delta));
        };
        double t = detail::golden_section_max(lambda2_at);
        if (lambda2_at(t) < report.lambda2_before) t = 0.0;
        report.blend = t;
        report.applied_inputs =
            t * report.merge.inputs + (1.0 - t) * detail::stationary_inputs(world, models);
        report.next = detail::apply_inputs(world, models, report.applied_inputs);
        report.lambda2_linearized =
            algebraic_connectivity(delta_laplacian(report.coeffs, report.next.positions - world.positions));
    }
    report.intermediate_positions = report.merge.intermediate_positions;

    const std::string violation = check_global_constraints(world, report.next, report.applied_inputs, models,
                                                           report.coeffs, settings.params, settings.tol.feas_tol);
    if (!violation.empty()) throw FeasibilityViolation("distributed_round: " + violation);
    return report;
}

/// max |dL(merged) - sum_p alpha_p dL(padded_p) - (1 - sum alpha) L|, with the merged displacement
/// taken from the true dynamics.
inline double merged_laplacian_residual(const StepReport& report, const MergeWeights& weights, const WorldState& world)
{
    const int n = world.size();
    const Matrix merged = delta_laplacian(report.coeffs, report.merge.next.positions - world.positions);
    const Matrix base = delta_laplacian(report.coeffs, Matrix::Zero(world.dim(), n));
    double total_alpha = 0.0;
    Matrix combined = Matrix::Zero(n, n);
    for (int p = 0; p < n; ++p) {
        const double a = weights.alpha[static_cast<std::size_t>(p)];
        total_alpha += a;
        combined += a * delta_laplacian(report.coeffs, padded_displacement(report.locals[static_cast<std::size_t>(p)], n));
    }
    combined += (1.0 - total_alpha) * base;
    return (merged - combined).cwiseAbs().maxCoeff();
}

/// Largest deviation between the true-dynamics merge and the position/velocity merge rules.
inline double induced_merge_residual(const MergeResult& merge)
{
    return std::max((merge.next.positions - merge.predicted_positions).cwiseAbs().maxCoeff(),
                    (merge.next.velocities - merge.predicted_velocities).cwiseAbs().maxCoeff());
}

/// Smallest eigenvalue of dL_loc(solution) - dL_loc(0) on the owner's induced subgraph.
inline double local_loewner_gap(const LinearizationCoeffs& coeffs, const LocalSolution& local)
{
    const LinearizationCoeffs sub = restrict_coeffs(coeffs, local.members);
    const Matrix diff = delta_laplacian(sub, local.delta_x) -
                        delta_laplacian(sub, Matrix::Zero(local.delta_x.rows(), local.delta_x.cols()));
    return sorted_eigenvalues(diff)(0);
}

} // namespace conmax
