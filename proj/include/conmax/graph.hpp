#pragma once

#include "conmax/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace conmax {

struct WeightParams {
    double rho1 = 0.75; ///< squared distance below which the weight is 1
    double rho2 = 3.0;  ///< squared distance at and beyond which the weight is 0

    void validate() const
    {
        require(std::isfinite(rho1) && std::isfinite(rho2), "weight params must be finite");
        require(rho1 > 0.0 && rho1 < rho2, "weight params need 0 < rho1 < rho2");
    }
};

/// Agent positions, one column per agent.
struct Configuration {
    Matrix positions;

    int size() const { return static_cast<int>(positions.cols()); }
    int dim() const { return static_cast<int>(positions.rows()); }

    void validate() const
    {
        require(dim() == 2 || dim() == 3, "configuration dimension must be 2 or 3");
        require(size() >= 2, "configuration needs at least two agents");
        require(positions.allFinite(), "configuration has non-finite coordinates");
    }
};

struct Edge {
    int i = 0;
    int j = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

struct WeightedGraphView {
    int agent_count = 0;
    std::vector<Edge> edges; ///< i < j, lexicographic order
    std::vector<double> weights;
    std::vector<double> sq_distances;
    Matrix laplacian;

    std::vector<std::vector<int>> adjacency() const
    {
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(agent_count));
        for (const Edge& e : edges) {
            adj[static_cast<std::size_t>(e.i)].push_back(e.j);
            adj[static_cast<std::size_t>(e.j)].push_back(e.i);
        }
        for (auto& list : adj) std::sort(list.begin(), list.end());
        return adj;
    }
};

/// First-order data of the weights at a configuration.
/// Column e of `a` and `b` belongs to edges[e] and is taken with respect to x_i
/// (the gradient with respect to x_j is the negation).
struct LinearizationCoeffs {
    int agent_count = 0;
    std::vector<Edge> edges;
    Matrix a;
    Matrix b;
    std::vector<double> base_weights;
    std::vector<double> base_sq_distances;

    int dim() const { return static_cast<int>(b.rows()); }
};

namespace detail {

inline double normalized_gap(double d2, const WeightParams& params)
{
    return (d2 - params.rho1) / (params.rho2 - params.rho1);
}

} // namespace detail

/// Quintic smoothstep falloff between rho1 and rho2.
inline double weight(double d2, const WeightParams& params)
{
    if (!(d2 >= 0.0)) throw InvalidArgument("weight: negative squared distance");
    if (d2 <= params.rho1) return 1.0;
    if (d2 >= params.rho2) return 0.0;
    const double s = detail::normalized_gap(d2, params);
    return 1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

inline double weight_derivative(double d2, const WeightParams& params)
{
    if (!(d2 >= 0.0)) throw InvalidArgument("weight_derivative: negative squared distance");
    if (d2 <= params.rho1 || d2 >= params.rho2) return 0.0;
    const double s = detail::normalized_gap(d2, params);
    const double one_minus = 1.0 - s;
    return -30.0 * s * s * one_minus * one_minus / (params.rho2 - params.rho1);
}

inline double squared_distance(const Configuration& config, int i, int j)
{
    return (config.positions.col(i) - config.positions.col(j)).squaredNorm();
}

inline WeightedGraphView build_graph(const Configuration& config, const WeightParams& params)
{
    config.validate();
    const int n = config.size();
    WeightedGraphView view;
    view.agent_count = n;
    view.laplacian = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double d2 = squared_distance(config, i, j);
            if (d2 >= params.rho2) continue;
            const double w = weight(d2, params);
            view.edges.push_back({i, j});
            view.weights.push_back(w);
            view.sq_distances.push_back(d2);
            view.laplacian(i, j) -= w;
            view.laplacian(j, i) -= w;
            view.laplacian(i, i) += w;
            view.laplacian(j, j) += w;
        }
    }
    return view;
}

inline LinearizationCoeffs linearize(const Configuration& config, const WeightParams& params)
{
    const WeightedGraphView view = build_graph(config, params);
    LinearizationCoeffs coeffs;
    coeffs.agent_count = config.size();
    coeffs.edges = view.edges;
    coeffs.base_weights = view.weights;
    coeffs.base_sq_distances = view.sq_distances;
    const auto edge_count = static_cast<Eigen::Index>(view.edges.size());
    coeffs.a.resize(config.dim(), edge_count);
    coeffs.b.resize(config.dim(), edge_count);
    for (Eigen::Index e = 0; e < edge_count; ++e) {
        const Edge& edge = view.edges[static_cast<std::size_t>(e)];
        coeffs.b.col(e) = 2.0 * (config.positions.col(edge.i) - config.positions.col(edge.j));
        coeffs.a.col(e) =
            weight_derivative(view.sq_distances[static_cast<std::size_t>(e)], params) * coeffs.b.col(e);
    }
    return coeffs;
}

/// Linearized Laplacian at displacement `delta_x` (dim x N, one column per agent).
inline Matrix delta_laplacian(const LinearizationCoeffs& coeffs, const Matrix& delta_x)
{
    const int n = coeffs.agent_count;
    if (delta_x.cols() != n || (coeffs.edges.size() > 0 && delta_x.rows() != coeffs.dim()))
        throw InvalidArgument("delta_laplacian: displacement has the wrong shape");
    Matrix out = Matrix::Zero(n, n);
    for (std::size_t e = 0; e < coeffs.edges.size(); ++e) {
        const Edge& edge = coeffs.edges[e];
        const auto col = static_cast<Eigen::Index>(e);
        const double w = coeffs.base_weights[e] +
                         coeffs.a.col(col).dot(delta_x.col(edge.i) - delta_x.col(edge.j));
        out(edge.i, edge.j) -= w;
        out(edge.j, edge.i) -= w;
        out(edge.i, edge.i) += w;
        out(edge.j, edge.j) += w;
    }
    return out;
}

/// Coefficients restricted to the subgraph induced by `members` (global ids),
/// re-indexed to positions in `members`.
inline LinearizationCoeffs restrict_coeffs(const LinearizationCoeffs& coeffs,
                                           const std::vector<int>& members)
{
    std::vector<int> local(static_cast<std::size_t>(coeffs.agent_count), -1);
    for (std::size_t k = 0; k < members.size(); ++k) local[static_cast<std::size_t>(members[k])] = static_cast<int>(k);

    std::vector<Eigen::Index> kept;
    LinearizationCoeffs out;
    out.agent_count = static_cast<int>(members.size());
    for (std::size_t e = 0; e < coeffs.edges.size(); ++e) {
        const int li = local[static_cast<std::size_t>(coeffs.edges[e].i)];
        const int lj = local[static_cast<std::size_t>(coeffs.edges[e].j)];
        if (li < 0 || lj < 0) continue;
        kept.push_back(static_cast<Eigen::Index>(e));
        // keep orientation consistent with the stored gradients
        out.edges.push_back({li, lj});
        out.base_weights.push_back(coeffs.base_weights[e]);
        out.base_sq_distances.push_back(coeffs.base_sq_distances[e]);
    }
    out.a.resize(coeffs.a.rows(), static_cast<Eigen::Index>(kept.size()));
    out.b.resize(coeffs.b.rows(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        out.a.col(static_cast<Eigen::Index>(k)) = coeffs.a.col(kept[k]);
        out.b.col(static_cast<Eigen::Index>(k)) = coeffs.b.col(kept[k]);
    }
    return out;
}

inline Vector sorted_eigenvalues(const Matrix& symmetric)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

inline double algebraic_connectivity(const Matrix& laplacian)
{
    require(laplacian.rows() == laplacian.cols(), "algebraic_connectivity: matrix must be square");
    require(laplacian.rows() >= 2, "algebraic_connectivity: need at least two nodes");
    const double scale = std::max(1.0, laplacian.cwiseAbs().maxCoeff());
    if ((laplacian - laplacian.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw InvalidArgument("algebraic_connectivity: matrix is not symmetric");
    return sorted_eigenvalues(0.5 * (laplacian + laplacian.transpose()))(1);
}

/// L + (shift/N) 11^T: the zero eigenvalue of L moves to `shift`.
inline Matrix shifted_matrix(const Matrix& laplacian, double shift)
{
    require(shift > 0.0, "shifted_matrix: shift must be positive");
    const auto n = laplacian.rows();
    return laplacian + Matrix::Constant(n, n, shift / static_cast<double>(n));
}

} // namespace conmax
