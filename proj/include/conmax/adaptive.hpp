#pragma once

#include "conmax/distributed.hpp"

#include <algorithm>
#include <vector>

namespace conmax {

struct SuboptimalityMeasures {
    double e_plus = 0.0;
    double e_minus = 0.0;
};

struct AdaptivePolicy {
    double grow_threshold = 0.05;
    double shrink_threshold = 0.01;
    int period = 5;
    int n_min = 1;
    int n_max = 9;

    void validate() const
    {
        require(grow_threshold >= 0.0 && shrink_threshold >= 0.0, "adaptive policy: thresholds must be non-negative");
        require(period >= 1, "adaptive policy: period must be at least 1");
        require(n_min >= 1 && n_min <= n_max, "adaptive policy: need 1 <= n_min <= n_max");
    }
};

/// Everything a local solve needs besides the owner and the neighborhood size.
struct LocalContext {
    const WorldState& world;
    const std::vector<std::vector<int>>& adjacency;
    const MergeWeights& weights;
    const std::vector<AgentModel>& models;
    const LinearizationCoeffs& coeffs;
    const DistributedSettings& settings;
};

inline LocalSolution solve_local_of_size(const LocalContext& ctx, int owner, int size)
{
    const auto [members, shell] = enlarged_neighborhood(ctx.adjacency, owner, size);
    return solve_local(ctx.world, owner, members, shell, ctx.weights, ctx.models, ctx.settings.params, ctx.coeffs,
                       ctx.settings.tol);
}

/// lambda_2 of the linearized Laplacian of the subgraph induced by `members`, at a padded displacement.
inline double local_lambda2(const LinearizationCoeffs& coeffs, const std::vector<int>& members,
                            const Matrix& padded_delta)
{
    const LinearizationCoeffs sub = restrict_coeffs(coeffs, members);
    Matrix local(padded_delta.rows(), static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) local.col(static_cast<Eigen::Index>(k)) = padded_delta.col(members[k]);
    return algebraic_connectivity(delta_laplacian(sub, local));
}

namespace detail {

/// 1 - lambda_2(small solution) / lambda_2(large solution), both on the larger neighborhood.
inline double relative_loss(const LocalSolution& small, const LocalSolution& large, const LinearizationCoeffs& coeffs,
                            int agents)
{
    const double numerator = local_lambda2(coeffs, large.members, padded_displacement(small, agents));
    const double denominator = local_lambda2(coeffs, large.members, padded_displacement(large, agents));
    if (!(denominator > 1e-12)) throw UndefinedMeasure("sub-optimality measure: local graph is disconnected");
    return 1.0 - numerator / denominator;
}

} // namespace detail

/// Relative local gains from growing (e_plus) or shrinking (e_minus) the neighborhood of `agent`.
/// `current` may carry an already computed solution of size n (skips one solve).
inline SuboptimalityMeasures suboptimality(const LocalContext& ctx, int agent, int n,
                                           const LocalSolution* current = nullptr)
{
    require(n >= 1, "suboptimality: neighborhood size must be at least 1");
    const int agents = ctx.world.size();
    const LocalSolution mid = current ? *current : solve_local_of_size(ctx, agent, n);
    const LocalSolution up = solve_local_of_size(ctx, agent, n + 1);
    SuboptimalityMeasures out;
    out.e_plus = detail::relative_loss(mid, up, ctx.coeffs, agents);
    if (n > 1) {
        const LocalSolution down = solve_local_of_size(ctx, agent, n - 1);
        out.e_minus = detail::relative_loss(down, mid, ctx.coeffs, agents);
    }
    return out;
}

inline int update_n(const SuboptimalityMeasures& measures, const AdaptivePolicy& policy, int n)
{
    int next = n;
    if (measures.e_plus > policy.grow_threshold)
        next = n + 1;
    else if (measures.e_plus < policy.grow_threshold && measures.e_minus < policy.shrink_threshold)
        next = n - 1;
    return std::clamp(next, policy.n_min, policy.n_max);
}

} // namespace conmax
