#pragma once

// Primal-dual interior-point method for small dense conic programs
//
//   minimize    c'x
//   subject to  G x + s = h,  A x = b,  s in K,
//
// where K is a product of a nonnegative orthant, second-order cones and
// positive semidefinite cones (PSD blocks stored in scaled lower-triangular
// vectorized form). Nesterov-Todd scaling with Mehrotra predictor-corrector.

#include "conmax/common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace conmax {

struct ConeDims {
    int linear = 0;
    std::vector<int> soc; ///< cone sizes (each >= 1)
    std::vector<int> psd; ///< matrix orders

    static int svec_size(int order) { return order * (order + 1) / 2; }

    int size() const
    {
        int total = linear;
        for (int q : soc) total += q;
        for (int n : psd) total += svec_size(n);
        return total;
    }

    int degree() const
    {
        return linear + static_cast<int>(soc.size()) + std::accumulate(psd.begin(), psd.end(), 0);
    }
};

struct ConeProblem {
    Vector c;
    Matrix G;
    Vector h;
    ConeDims dims;
    Matrix A; ///< may have zero rows
    Vector b;
};

struct SolverSettings {
    double feas_tol = 1e-9;        ///< target relative residuals
    double abs_tol = 1e-9;         ///< target duality gap
    double rel_tol = 1e-9;         ///< target relative duality gap
    double accept_feas_tol = 1e-7; ///< residual accepted when the iteration budget runs out
    double accept_gap_tol = 1e-6;  ///< gap accepted when the iteration budget runs out
    int max_iterations = 100;
    double step_fraction = 0.99;
    std::ostream* trace = nullptr; ///< per-iteration progress when set
};

enum class ConeStatus { optimal, infeasible, numerical_failure };

struct ConeSolution {
    ConeStatus status = ConeStatus::numerical_failure;
    Vector x;
    Vector s;
    Vector z;
    int iterations = 0;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    std::string message;
};

namespace cone {

inline Vector svec(const Matrix& X)
{
    const auto n = X.rows();
    Vector out(n * (n + 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        out(k++) = X(j, j);
        for (Eigen::Index i = j + 1; i < n; ++i) out(k++) = std::sqrt(2.0) * X(i, j);
    }
    return out;
}

inline Matrix smat(const Eigen::Ref<const Vector>& v, int n)
{
    Matrix X(n, n);
    Eigen::Index k = 0;
    for (int j = 0; j < n; ++j) {
        X(j, j) = v(k++);
        for (int i = j + 1; i < n; ++i) {
            X(i, j) = v(k++) / std::sqrt(2.0);
            X(j, i) = X(i, j);
        }
    }
    return X;
}

/// Offsets of every block in a cone vector.
class Layout {
public:
    explicit Layout(const ConeDims& dims) : dims_(dims)
    {
        int offset = dims.linear;
        for (int q : dims.soc) {
            soc_offsets_.push_back(offset);
            offset += q;
        }
        for (int n : dims.psd) {
            psd_offsets_.push_back(offset);
            offset += ConeDims::svec_size(n);
        }
        size_ = offset;
    }

    const ConeDims& dims() const { return dims_; }
    int size() const { return size_; }
    int soc_offset(std::size_t k) const { return soc_offsets_[k]; }
    int psd_offset(std::size_t k) const { return psd_offsets_[k]; }

    Vector identity() const
    {
        Vector e = Vector::Zero(size_);
        e.head(dims_.linear).setOnes();
        for (std::size_t k = 0; k < dims_.soc.size(); ++k) e(soc_offsets_[k]) = 1.0;
        for (std::size_t k = 0; k < dims_.psd.size(); ++k)
            e.segment(psd_offsets_[k], ConeDims::svec_size(dims_.psd[k])) =
                svec(Matrix::Identity(dims_.psd[k], dims_.psd[k]));
        return e;
    }

    /// Smallest t with x + t e in the closed cone.
    double min_shift(const Vector& x) const
    {
        double t = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < dims_.linear; ++i) t = std::max(t, -x(i));
        for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
            const int q = dims_.soc[k];
            const int o = soc_offsets_[k];
            t = std::max(t, x.segment(o + 1, q - 1).norm() - x(o));
        }
        for (std::size_t k = 0; k < dims_.psd.size(); ++k) {
            const int n = dims_.psd[k];
            const Matrix X = smat(x.segment(psd_offsets_[k], ConeDims::svec_size(n)), n);
            Eigen::SelfAdjointEigenSolver<Matrix> es(X, Eigen::EigenvaluesOnly);
            t = std::max(t, -es.eigenvalues()(0));
        }
        return t;
    }

private:
    ConeDims dims_;
    std::vector<int> soc_offsets_;
    std::vector<int> psd_offsets_;
    int size_ = 0;
};

inline Vector soc_reflect(const Eigen::Ref<const Vector>& x)
{
    Vector out = -x;
    out(0) = x(0);
    return out;
}

inline double soc_jnorm(const Eigen::Ref<const Vector>& x)
{
    const double value = x(0) * x(0) - x.tail(x.size() - 1).squaredNorm();
    return value > 0.0 ? std::sqrt(value) : -1.0;
}

/// Nesterov-Todd scaling W with W z = W^{-T} s = lambda.
struct Scaling {
    Vector lp_w;
    std::vector<double> soc_beta;
    std::vector<Vector> soc_v;
    std::vector<Matrix> psd_r;
    std::vector<Matrix> psd_rti;
    std::vector<Vector> psd_lambda;
    Vector lambda;
};

enum class Apply { W, W_inv, W_T, W_inv_T };

inline bool compute_scaling(const Layout& layout, const Vector& s, const Vector& z, Scaling& out)
{
    const ConeDims& dims = layout.dims();
    out.lambda.resize(layout.size());
    const int l = dims.linear;
    if (l > 0) {
        if ((s.head(l).array() <= 0.0).any() || (z.head(l).array() <= 0.0).any()) return false;
        out.lp_w = (s.head(l).array() / z.head(l).array()).sqrt();
        out.lambda.head(l) = (s.head(l).array() * z.head(l).array()).sqrt();
    }
    out.soc_beta.clear();
    out.soc_v.clear();
    for (std::size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        const int o = layout.soc_offset(k);
        const Vector sk = s.segment(o, q);
        const Vector zk = z.segment(o, q);
        const double aa = soc_jnorm(sk);
        const double bb = soc_jnorm(zk);
        if (aa <= 0.0 || bb <= 0.0) return false;
        const double beta = std::sqrt(aa / bb);
        const Vector sbar = sk / aa;
        const Vector zbar = zk / bb;
        const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
        Vector w = (sbar + soc_reflect(zbar)) / (2.0 * gamma);
        Vector v = w;
        v(0) += 1.0;
        v /= std::sqrt(2.0 * (w(0) + 1.0));
        out.soc_beta.push_back(beta);
        out.soc_v.push_back(v);
        out.lambda.segment(o, q) = beta * (2.0 * v * v.dot(zk) - soc_reflect(zk));
    }
    out.psd_r.clear();
    out.psd_rti.clear();
    out.psd_lambda.clear();
    for (std::size_t k = 0; k < dims.psd.size(); ++k) {
        const int n = dims.psd[k];
        const int o = layout.psd_offset(k);
        const int len = ConeDims::svec_size(n);
        Eigen::LLT<Matrix> ls(smat(s.segment(o, len), n));
        Eigen::LLT<Matrix> lz(smat(z.segment(o, len), n));
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
        const Matrix L1 = ls.matrixL();
        const Matrix L2 = lz.matrixL();
        Eigen::JacobiSVD<Matrix> svd(L2.transpose() * L1, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector lam = svd.singularValues();
        if ((lam.array() <= 0.0).any()) return false;
        const Vector inv_sqrt = lam.array().rsqrt();
        out.psd_r.push_back(L1 * svd.matrixV() * inv_sqrt.asDiagonal());
        out.psd_rti.push_back(L2 * svd.matrixU() * inv_sqrt.asDiagonal());
        out.psd_lambda.push_back(lam);
        out.lambda.segment(o, len) = svec(Matrix(lam.asDiagonal()));
    }
    return true;
}

inline void apply_scaling(const Layout& layout, const Scaling& sc, Apply mode, Eigen::Ref<Vector> x)
{
    const ConeDims& dims = layout.dims();
    const int l = dims.linear;
    if (l > 0) {
        if (mode == Apply::W || mode == Apply::W_T)
            x.head(l).array() *= sc.lp_w.array();
        else
            x.head(l).array() /= sc.lp_w.array();
    }
    for (std::size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        const int o = layout.soc_offset(k);
        const Vector xk = x.segment(o, q);
        const Vector& v = sc.soc_v[k];
        if (mode == Apply::W || mode == Apply::W_T) {
            x.segment(o, q) = sc.soc_beta[k] * (2.0 * v * v.dot(xk) - soc_reflect(xk));
        } else {
            const Vector jv = soc_reflect(v);
            x.segment(o, q) = (2.0 * jv * jv.dot(xk) - soc_reflect(xk)) / sc.soc_beta[k];
        }
    }
    for (std::size_t k = 0; k < dims.psd.size(); ++k) {
        const int n = dims.psd[k];
        const int o = layout.psd_offset(k);
        const int len = ConeDims::svec_size(n);
        const Matrix X = smat(x.segment(o, len), n);
        const Matrix& r = sc.psd_r[k];
        const Matrix& rti = sc.psd_rti[k];
        Matrix Y;
        switch (mode) {
        case Apply::W: Y = r.transpose() * X * r; break;
        case Apply::W_T: Y = r * X * r.transpose(); break;
        case Apply::W_inv: Y = rti * X * rti.transpose(); break;
        case Apply::W_inv_T: Y = rti.transpose() * X * rti; break;
        }
        x.segment(o, len) = svec(Y);
    }
}

inline Vector jordan_product(const Layout& layout, const Vector& x, const Vector& y)
{
    const ConeDims& dims = layout.dims();
    Vector out(layout.size());
    const int l = dims.linear;
    out.head(l) = x.head(l).cwiseProduct(y.head(l));
    for (std::size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        const int o = layout.soc_offset(k);
        out(o) = x.segment(o, q).dot(y.segment(o, q));
        out.segment(o + 1, q - 1) = x(o) * y.segment(o + 1, q - 1) + y(o) * x.segment(o + 1, q - 1);
    }
    for (std::size_t k = 0; k < dims.psd.size(); ++k) {
        const int n = dims.psd[k];
        const int o = layout.psd_offset(k);
        const int len = ConeDims::svec_size(n);
        const Matrix X = smat(x.segment(o, len), n);
        const Matrix Y = smat(y.segment(o, len), n);
        out.segment(o, len) = svec(0.5 * (X * Y + Y * X));
    }
    return out;
}

/// Solves lambda o x = d for x, using the diagonal form of the PSD blocks of lambda.
inline Vector lambda_divide(const Layout& layout, const Scaling& sc, const Vector& d)
{
    const ConeDims& dims = layout.dims();
    const Vector& lam = sc.lambda;
    Vector out(layout.size());
    const int l = dims.linear;
    out.head(l) = d.head(l).cwiseQuotient(lam.head(l));
    for (std::size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        const int o = layout.soc_offset(k);
        const double l0 = lam(o);
        const auto l1 = lam.segment(o + 1, q - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        const double x0 = (l0 * d(o) - l1.dot(d.segment(o + 1, q - 1))) / det;
        out(o) = x0;
        out.segment(o + 1, q - 1) = (d.segment(o + 1, q - 1) - x0 * l1) / l0;
    }
    for (std::size_t k = 0; k < dims.psd.size(); ++k) {
        const int n = dims.psd[k];
        const int o = layout.psd_offset(k);
        const Vector& eig = sc.psd_lambda[k];
        Eigen::Index idx = 0;
        for (int j = 0; j < n; ++j)
            for (int i = j; i < n; ++i, ++idx)
                out(o + idx) = 2.0 * d(o + idx) / (eig(i) + eig(j));
    }
    return out;
}

/// Largest alpha with lambda + alpha * x in the cone (infinity if unbounded).
inline double max_step(const Layout& layout, const Scaling& sc, const Vector& x)
{
    const ConeDims& dims = layout.dims();
    const Vector& lam = sc.lambda;
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dims.linear; ++i)
        if (x(i) < 0.0) alpha = std::min(alpha, -lam(i) / x(i));
    for (std::size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        const int o = layout.soc_offset(k);
        const auto u = lam.segment(o, q);
        const auto dx = x.segment(o, q);
        const double a = dx(0) * dx(0) - dx.tail(q - 1).squaredNorm();
        const double b = u(0) * dx(0) - u.tail(q - 1).dot(dx.tail(q - 1));
        const double c = u(0) * u(0) - u.tail(q - 1).squaredNorm();
        const double disc = b * b - a * c;
        if (a < 0.0 || (b < 0.0 && disc >= 0.0)) alpha = std::min(alpha, c / (std::sqrt(std::max(disc, 0.0)) - b));
    }
    for (std::size_t k = 0; k < dims.psd.size(); ++k) {
        const int n = dims.psd[k];
        const int o = layout.psd_offset(k);
        const Vector inv_sqrt = sc.psd_lambda[k].array().rsqrt();
        const Matrix X = smat(x.segment(o, ConeDims::svec_size(n)), n);
        const Matrix Y = inv_sqrt.asDiagonal() * X * inv_sqrt.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Matrix> es(Y, Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues()(0);
        if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
    }
    return alpha;
}

/// Least-squares style solver for M'M dx = rhs through a pivoted QR of M.
class NormalSolver {
public:
    explicit NormalSolver(const Matrix& M) : qr_(M)
    {
        n_ = M.cols();
        rank_ = qr_.rank();
        if (rank_ < n_) {
            Matrix normal = M.transpose() * M;
            const double reg = 1e-12 * std::max(1.0, normal.diagonal().maxCoeff());
            normal.diagonal().array() += reg;
            ldlt_.compute(normal);
        }
    }

    Vector solve(const Vector& rhs) const
    {
        if (rank_ < n_) return ldlt_.solve(rhs);
        // M P = Q R  =>  P' M'M P = R'R
        const auto R = qr_.matrixR().topLeftCorner(n_, n_).template triangularView<Eigen::Upper>();
        Vector y = qr_.colsPermutation().transpose() * rhs;
        R.transpose().solveInPlace(y);
        R.solveInPlace(y);
        return qr_.colsPermutation() * y;
    }

private:
    Eigen::ColPivHouseholderQR<Matrix> qr_;
    Eigen::LDLT<Matrix> ldlt_;
    Eigen::Index n_ = 0;
    Eigen::Index rank_ = 0;
};

/// Inequality-only problem (no A x = b).
inline ConeSolution solve_inequality_form(const Vector& c, const Matrix& G, const Vector& h, const ConeDims& dims,
                                          const SolverSettings& settings)
{
    const Layout layout(dims);
    const Eigen::Index n = G.cols();
    const int m = layout.size();
    const double nu = static_cast<double>(std::max(1, dims.degree()));
    const Vector e = layout.identity();
    ConeSolution sol;

    if (n == 0) {
        sol.x = Vector::Zero(0);
        sol.s = h;
        sol.z = Vector::Zero(m);
        sol.status = layout.min_shift(h) <= settings.accept_feas_tol * std::max(1.0, h.norm())
                         ? ConeStatus::optimal
                         : ConeStatus::infeasible;
        sol.message = "no free variables";
        return sol;
    }

    // Starting point: least-squares primal, least-norm dual, both shifted into the cone.
    Eigen::ColPivHouseholderQR<Matrix> gqr(G);
    if (gqr.rank() < n) {
        sol.message = "constraint matrix is rank deficient";
        return sol;
    }
    Vector x = gqr.solve(h);
    Vector s = h - G * x;
    Vector z;
    {
        const auto R = gqr.matrixR().topLeftCorner(n, n).triangularView<Eigen::Upper>();
        Vector y = gqr.colsPermutation().transpose() * c;
        R.transpose().solveInPlace(y);
        Vector full = Vector::Zero(m);
        full.head(n) = y;
        z = -(gqr.householderQ() * full);
    }
    const double ts = layout.min_shift(s);
    if (ts >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + ts) * e;
    const double tz = layout.min_shift(z);
    if (tz >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + tz) * e;

    const double h_scale = std::max(1.0, h.norm());
    const double c_scale = std::max(1.0, c.norm());
    Scaling sc;

    auto record = [&](int iteration) {
        sol.x = x;
        sol.s = s;
        sol.z = z;
        sol.iterations = iteration;
        sol.primal_objective = c.dot(x);
        sol.dual_objective = -h.dot(z);
        sol.primal_residual = (G * x + s - h).norm() / h_scale;
        sol.dual_residual = (G.transpose() * z + c).norm() / c_scale;
        sol.gap = s.dot(z);
    };
    auto acceptable = [&]() {
        return sol.primal_residual <= settings.accept_feas_tol && sol.dual_residual <= settings.accept_feas_tol &&
               sol.gap <= settings.accept_gap_tol;
    };

    ConeSolution best;
    double best_merit = 0.0;
    bool have_best = false;

    for (int iteration = 0; iteration <= settings.max_iterations; ++iteration) {
        record(iteration);
        const double pcost = sol.primal_objective;
        const double dcost = sol.dual_objective;
        const double relgap = sol.gap / std::max({std::abs(pcost), std::abs(dcost), 1e-12});
        if (settings.trace)
            *settings.trace << iteration << " pcost " << pcost << " dcost " << dcost << " gap " << sol.gap
                            << " pres " << sol.primal_residual << " dres " << sol.dual_residual << "\n";
        if (sol.primal_residual <= settings.feas_tol && sol.dual_residual <= settings.feas_tol &&
            (sol.gap <= settings.abs_tol || relgap <= settings.rel_tol)) {
            sol.status = ConeStatus::optimal;
            sol.message = "converged";
            return sol;
        }
        if (acceptable()) {
            const double merit = std::max({sol.primal_residual, sol.dual_residual, sol.gap});
            if (!have_best || merit < best_merit) {
                best = sol;
                best_merit = merit;
                have_best = true;
            }
            // No further progress is possible once the gap is at rounding level.
            if (sol.gap <= 1e-3 * settings.abs_tol) break;
        }
        const double hz = h.dot(z);
        if (iteration > 5 && hz < 0.0) {
            const double certificate = (G.transpose() * z).norm() / (-hz);
            if (certificate <= 1e-8 * std::max(1.0, G.norm())) {
                sol.status = ConeStatus::infeasible;
                sol.message = "primal infeasibility certificate";
                return sol;
            }
        }
        if (iteration == settings.max_iterations) break;
        if (!compute_scaling(layout, s, z, sc)) {
            sol.message = "lost interiority";
            break;
        }

        Matrix M = G;
        for (Eigen::Index col = 0; col < n; ++col) apply_scaling(layout, sc, Apply::W_inv_T, M.col(col));
        const NormalSolver normal(M);

        const Vector rp = G * x + s - h;
        const Vector rd = G.transpose() * z + c;
        Vector rp_scaled = rp;
        apply_scaling(layout, sc, Apply::W_inv_T, rp_scaled);

        auto newton = [&](const Vector& ds, Vector& dx, Vector& ds_tilde, Vector& dz_tilde) {
            const Vector q = lambda_divide(layout, sc, ds) + rp_scaled;
            dx = normal.solve(-rd - M.transpose() * q);
            dz_tilde = q + M * dx;
            for (int refine = 0; refine < 2; ++refine) {
                const Vector correction = normal.solve(-rd - M.transpose() * dz_tilde);
                dx += correction;
                dz_tilde += M * correction;
            }
            ds_tilde = lambda_divide(layout, sc, ds) - dz_tilde;
        };

        const Vector& lam = sc.lambda;
        const double mu = lam.squaredNorm() / nu;
        const Vector lam_sq = jordan_product(layout, lam, lam);

        Vector dx_a, ds_a, dz_a;
        newton(-lam_sq, dx_a, ds_a, dz_a);
        const double alpha_a =
            std::min(1.0, std::min(max_step(layout, sc, ds_a), max_step(layout, sc, dz_a)));
        const double mu_a = (lam + alpha_a * ds_a).dot(lam + alpha_a * dz_a) / nu;
        const double sigma = std::pow(std::clamp(mu_a / mu, 0.0, 1.0), 3.0);

        Vector dx, ds_t, dz_t;
        newton(-lam_sq - jordan_product(layout, ds_a, dz_a) + sigma * mu * e, dx, ds_t, dz_t);
        if (!dx.allFinite() || !ds_t.allFinite() || !dz_t.allFinite()) {
            sol.message = "non-finite search direction";
            break;
        }
        const double alpha_max = std::min(max_step(layout, sc, ds_t), max_step(layout, sc, dz_t));
        const double alpha = std::min(1.0, settings.step_fraction * alpha_max);

        Vector ds = ds_t;
        apply_scaling(layout, sc, Apply::W_T, ds);
        Vector dz = dz_t;
        apply_scaling(layout, sc, Apply::W_inv, dz);
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
    }
    record(sol.iterations);
    if (have_best) {
        const int iterations = sol.iterations;
        sol = best;
        sol.iterations = iterations;
        sol.status = ConeStatus::optimal;
        sol.message = "accepted at reduced accuracy";
    } else {
        sol.status = ConeStatus::numerical_failure;
        if (sol.message.empty()) sol.message = "iteration limit reached";
    }
    return sol;
}

} // namespace cone

/// Solves the general form, eliminating equalities through a nullspace basis and
/// dropping linear rows that become constant.
inline ConeSolution solve_cone_problem(const ConeProblem& problem, const SolverSettings& settings = {})
{
    const Eigen::Index n = problem.G.cols();
    require(problem.c.size() == n, "cone problem: objective size mismatch");
    require(problem.G.rows() == problem.dims.size() && problem.h.size() == problem.G.rows(),
            "cone problem: inequality data does not match the cone dimensions");
    require(problem.A.rows() == problem.b.size() && (problem.A.rows() == 0 || problem.A.cols() == n),
            "cone problem: equality data mismatch");

    Vector x_particular = Vector::Zero(n);
    Matrix basis = Matrix::Identity(n, n);
    ConeSolution failed;
    if (problem.A.rows() > 0) {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(problem.A);
        cod.setThreshold(1e-12);
        x_particular = cod.solve(problem.b);
        if ((problem.A * x_particular - problem.b).norm() > 1e-9 * std::max(1.0, problem.b.norm())) {
            failed.status = ConeStatus::infeasible;
            failed.message = "inconsistent equality constraints";
            return failed;
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(problem.A.transpose());
        qr.setThreshold(1e-12);
        const Eigen::Index rank = qr.rank();
        const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
        basis = Q.rightCols(n - rank);
    }

    Matrix G = problem.G * basis;
    Vector h = problem.h - problem.G * x_particular;
    Vector c = basis.transpose() * problem.c;

    // Constant linear rows are checked once and removed.
    const int l = problem.dims.linear;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < G.rows(); ++r) {
        const bool is_linear = r < l;
        const double row_norm = G.row(r).norm();
        if (is_linear && row_norm <= 1e-12 * std::max(1.0, problem.G.row(r).norm())) {
            if (h(r) < -settings.accept_feas_tol * std::max(1.0, std::abs(problem.h(r)))) {
                failed.status = ConeStatus::infeasible;
                failed.message = "constant inequality row " + std::to_string(r) + " is violated";
                return failed;
            }
            continue;
        }
        keep.push_back(r);
    }
    ConeDims dims = problem.dims;
    int kept_linear = 0;
    for (Eigen::Index r : keep)
        if (r < l) ++kept_linear;
    dims.linear = kept_linear;
    Matrix G_red(static_cast<Eigen::Index>(keep.size()), G.cols());
    Vector h_red(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        G_red.row(static_cast<Eigen::Index>(k)) = G.row(keep[k]);
        h_red(static_cast<Eigen::Index>(k)) = h(keep[k]);
    }

    ConeSolution reduced = cone::solve_inequality_form(c, G_red, h_red, dims, settings);
    ConeSolution out = reduced;
    out.x = x_particular + basis * reduced.x;
    out.s = problem.h - problem.G * out.x;
    out.z = Vector::Zero(problem.G.rows());
    if (reduced.z.size() == static_cast<Eigen::Index>(keep.size()))
        for (std::size_t k = 0; k < keep.size(); ++k) out.z(keep[k]) = reduced.z(static_cast<Eigen::Index>(k));
    out.primal_objective = problem.c.dot(out.x);
    return out;
}

} // namespace conmax
