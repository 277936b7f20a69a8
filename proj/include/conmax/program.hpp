#pragma once

#include "conmax/common.hpp"
#include "conmax/conic_solver.hpp"
#include "conmax/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace conmax {

enum class ProblemKind { centralized_si, centralized_lti, local };

inline const char* to_string(ProblemKind kind)
{
    switch (kind) {
    case ProblemKind::centralized_si: return "centralized-si";
    case ProblemKind::centralized_lti: return "centralized-lti";
    case ProblemKind::local: return "local";
    }
    return "unknown";
}

/// Variable ordering: gamma, delta_x (agent-major), then for lifted problems
/// v_next (agent-major) and the lifted inputs (2*dim per agent).
struct VariableLayout {
    int agents = 0;
    int dim = 0;
    bool lifted = false;

    int gamma() const { return 0; }
    int delta_x(int a, int k) const { return 1 + a * dim + k; }
    int v_next(int a, int k) const { return 1 + agents * dim + a * dim + k; }
    int input(int a, int k) const { return 1 + 2 * agents * dim + a * 2 * dim + k; }
    int size() const { return lifted ? 1 + 4 * agents * dim : 1 + agents * dim; }
};

/// ||A z + b|| <= c'z + d
struct NormConstraint {
    Matrix A;
    Vector b;
    Vector c;
    double d = 0.0;
};

/// maximize objective'z subject to
///   psd_constant + sum_k z_k psd_terms[k] >= 0,
///   ineq_matrix z <= ineq_rhs, eq_matrix z = eq_rhs, norm constraints.
struct ConicProgram {
    ProblemKind kind = ProblemKind::centralized_si;
    VariableLayout layout;
    std::vector<int> agents; ///< global ids in local order
    std::vector<bool> frozen;
    Vector objective;
    Matrix psd_constant;
    std::vector<std::pair<int, Matrix>> psd_terms;
    Matrix ineq_matrix;
    Vector ineq_rhs;
    std::vector<std::string> ineq_labels;
    Matrix eq_matrix;
    Vector eq_rhs;
    std::vector<NormConstraint> norm_constraints;

    /// Feasible point with zero motion, kept for the solver fallback.
    Vector stationary_point;

    int variable_count() const { return layout.size(); }

    Matrix psd_value(const Vector& z) const
    {
        Matrix out = psd_constant;
        for (const auto& [index, coefficient] : psd_terms) out += z(index) * coefficient;
        return out;
    }
};

struct ProgramResiduals {
    double psd_min_eigenvalue = 0.0;
    double max_inequality_violation = 0.0;
    double max_equality_violation = 0.0;
    double max_norm_violation = 0.0;

    bool within(double tol) const
    {
        return psd_min_eigenvalue >= -tol && max_inequality_violation <= tol && max_equality_violation <= tol &&
               max_norm_violation <= tol;
    }
};

inline ProgramResiduals evaluate(const ConicProgram& program, const Vector& z)
{
    require(z.size() == program.variable_count(), "evaluate: variable vector has the wrong size");
    ProgramResiduals out;
    Eigen::SelfAdjointEigenSolver<Matrix> es(program.psd_value(z), Eigen::EigenvaluesOnly);
    out.psd_min_eigenvalue = es.eigenvalues()(0);
    if (program.ineq_matrix.rows() > 0)
        out.max_inequality_violation = std::max(0.0, (program.ineq_matrix * z - program.ineq_rhs).maxCoeff());
    if (program.eq_matrix.rows() > 0)
        out.max_equality_violation = (program.eq_matrix * z - program.eq_rhs).cwiseAbs().maxCoeff();
    for (const NormConstraint& nc : program.norm_constraints)
        out.max_norm_violation =
            std::max(out.max_norm_violation, (nc.A * z + nc.b).norm() - nc.c.dot(z) - nc.d);
    return out;
}

/// Standard-form data for the interior-point method (minimize -objective'z).
inline ConeProblem to_cone_problem(const ConicProgram& program)
{
    const int n = program.variable_count();
    const int psd_order = static_cast<int>(program.psd_constant.rows());
    ConeProblem out;
    out.c = -program.objective;
    out.dims.linear = static_cast<int>(program.ineq_matrix.rows());
    for (const NormConstraint& nc : program.norm_constraints) out.dims.soc.push_back(1 + static_cast<int>(nc.A.rows()));
    out.dims.psd = {psd_order};
    const int rows = out.dims.size();
    out.G = Matrix::Zero(rows, n);
    out.h = Vector::Zero(rows);
    int r = 0;
    if (out.dims.linear > 0) {
        out.G.topRows(out.dims.linear) = program.ineq_matrix;
        out.h.head(out.dims.linear) = program.ineq_rhs;
        r = out.dims.linear;
    }
    for (const NormConstraint& nc : program.norm_constraints) {
        out.G.row(r) = -nc.c.transpose();
        out.h(r) = nc.d;
        out.G.block(r + 1, 0, nc.A.rows(), n) = -nc.A;
        out.h.segment(r + 1, nc.A.rows()) = nc.b;
        r += 1 + static_cast<int>(nc.A.rows());
    }
    const int len = ConeDims::svec_size(psd_order);
    out.h.segment(r, len) = cone::svec(program.psd_constant);
    for (const auto& [index, coefficient] : program.psd_terms) out.G.block(r, index, len, 1) -= cone::svec(coefficient);
    out.A = program.eq_matrix.rows() > 0 ? program.eq_matrix : Matrix(0, n);
    out.b = program.eq_matrix.rows() > 0 ? program.eq_rhs : Vector(0);
    return out;
}

/// Plain-text dump of a program for external cross-checking.
inline void dump_program(const ConicProgram& program, std::ostream& os)
{
    const auto old_precision = os.precision(17);
    const VariableLayout& lay = program.layout;
    os << "kind " << to_string(program.kind) << "\n";
    os << "variables " << program.variable_count() << " agents " << lay.agents << " dim " << lay.dim << " lifted "
       << (lay.lifted ? 1 : 0) << "\n";
    os << "agent_ids";
    for (int id : program.agents) os << ' ' << id;
    os << "\nfrozen";
    for (bool f : program.frozen) os << ' ' << (f ? 1 : 0);
    os << "\nobjective\n" << program.objective.transpose() << "\n";
    os << "psd_order " << program.psd_constant.rows() << "\npsd_constant\n" << program.psd_constant << "\n";
    os << "psd_terms " << program.psd_terms.size() << "\n";
    for (const auto& [index, coefficient] : program.psd_terms) os << "term " << index << "\n" << coefficient << "\n";
    os << "inequalities " << program.ineq_matrix.rows() << "\n";
    for (Eigen::Index r = 0; r < program.ineq_matrix.rows(); ++r) {
        os << program.ineq_labels[static_cast<std::size_t>(r)] << " | " << program.ineq_matrix.row(r) << " | "
           << program.ineq_rhs(r) << "\n";
    }
    os << "equalities " << program.eq_matrix.rows() << "\n";
    for (Eigen::Index r = 0; r < program.eq_matrix.rows(); ++r)
        os << program.eq_matrix.row(r) << " | " << program.eq_rhs(r) << "\n";
    os << "norm_constraints " << program.norm_constraints.size() << "\n";
    for (const NormConstraint& nc : program.norm_constraints)
        os << "A\n" << nc.A << "\nb " << nc.b.transpose() << "\nc " << nc.c.transpose() << "\nd " << nc.d << "\n";
    os.precision(old_precision);
}

} // namespace conmax
