// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any fails.

#include "conmax/adaptive.hpp"
#include "conmax/sim.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

using namespace conmax;

namespace {

const WeightParams kParams{};

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::vector<AgentModel> bench_models(int n)
{
    return std::vector<AgentModel>(n, AgentModel{AgentDynamics::benchmark(2, 1.0), InputPolytope::benchmark(2)});
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0)
{
    char buffer[256];
    std::snprintf(buffer, sizeof(buffer), pattern, a, b, c);
    return buffer;
}

Verdict shift_identity()
{
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + t % 7;
        const Matrix l = oracle::random_weighted_laplacian(n, 0.6, rng);
        Vector expected = oracle::spectrum_by_bisection(l);
        expected(0) = n; // the zero eigenvalue moves to N
        std::sort(expected.data(), expected.data() + n);
        const Vector got = sorted_eigenvalues(shifted_matrix(l, n));
        worst = std::max(worst, (got - expected).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-9, fmt("20 graphs, max spectrum error %.2e (tol 1e-9)", worst)};
}

Verdict linearization()
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    double worst_rel = 0.0, worst_affine = 0.0;
    int edges = 0;
    while (edges < 100) {
        Matrix pos(2, 2);
        pos << 0.0, uni(rng) * 1.7, 0.0, uni(rng) * 1.7;
        const double d2 = pos.col(1).squaredNorm();
        if (d2 <= kParams.rho1 + 0.01 || d2 >= kParams.rho2 - 0.01) continue;
        ++edges;
        const LinearizationCoeffs lc = linearize(Configuration{pos}, kParams);
        // b: gradient of d^2 with respect to x_i, a: gradient of the weight
        for (int d = 0; d < 2; ++d) {
            const double h = 1e-6;
            Matrix plus = pos, minus = pos;
            plus(d, 0) += h;
            minus(d, 0) -= h;
            const double fd_b = ((plus.col(0) - plus.col(1)).squaredNorm() - (minus.col(0) - minus.col(1)).squaredNorm()) / (2 * h);
            const double fd_a = (oracle::weight((plus.col(0) - plus.col(1)).squaredNorm(), kParams.rho1, kParams.rho2) -
                                 oracle::weight((minus.col(0) - minus.col(1)).squaredNorm(), kParams.rho1, kParams.rho2)) /
                                (2 * h);
            worst_rel = std::max(worst_rel, std::abs(lc.b(d, 0) - fd_b) / std::max(1.0, std::abs(fd_b)));
            worst_rel = std::max(worst_rel, std::abs(lc.a(d, 0) - fd_a) / std::max(1.0, std::abs(fd_a)));
        }
    }
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const WorldState w = init_random_feasible(8, 2, seed, kParams, {}, 0.0, 0.0);
        const LinearizationCoeffs lc = linearize(w.configuration(), kParams);
        const Matrix d1 = Matrix::NullaryExpr(2, 8, [&] { return uni(rng); });
        const Matrix d2 = Matrix::NullaryExpr(2, 8, [&] { return uni(rng); });
        const double c = uni(rng);
        const Matrix base = delta_laplacian(lc, Matrix::Zero(2, 8));
        const Matrix lhs = delta_laplacian(lc, d1 + c * d2) - base;
        const Matrix rhs = (delta_laplacian(lc, d1) - base) + c * (delta_laplacian(lc, d2) - base);
        worst_affine = std::max(worst_affine, (lhs - rhs).cwiseAbs().maxCoeff());
        worst_affine = std::max(worst_affine, (base - build_graph(w.configuration(), kParams).laplacian).cwiseAbs().maxCoeff());
    }
    return {worst_rel <= 1e-6 && worst_affine <= 1e-12,
            fmt("100 edges, max relative FD error %.2e (tol 1e-6); affine identity error %.2e (tol 1e-12)", worst_rel,
                worst_affine)};
}

/// Largest violation of the input polytopes by the inputs that reproduce the recorded trajectory.
double input_violation(const RunResult& r, const Scenario& s)
{
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < r.states.size(); ++k) {
        for (int i = 0; i < s.agents; ++i) {
            const AgentModel& m = s.models[static_cast<std::size_t>(i)];
            const LiftedInput u = invert_control(m.dynamics, {r.states[k].positions.col(i), r.states[k].velocities.col(i)},
                                                 {r.states[k + 1].positions.col(i), r.states[k + 1].velocities.col(i)});
            worst = std::max(worst, (m.polytope.H * u.u_first - m.polytope.h).maxCoeff());
            worst = std::max(worst, (m.polytope.H * u.u_second - m.polytope.h).maxCoeff());
        }
    }
    return worst;
}

Verdict stationary_and_persistent_feasibility()
{
    const ProblemTolerances tol;
    int accepted = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const int n = 4 + static_cast<int>(seed % 7);
        const WorldState w = init_random_feasible(n, 2, 1000 + seed, kParams, bench_models(n), 0.0, 0.15);
        const LinearizationCoeffs lc = linearize(w.configuration(), kParams);
        const std::vector<AgentModel> models = bench_models(n);
        std::vector<AgentDynamics> dyn;
        std::vector<InputPolytope> poly;
        for (const AgentModel& m : models) {
            dyn.push_back(m.dynamics);
            poly.push_back(m.polytope);
        }
        bool ok = true;
        const ConicProgram si = build_centralized_si(w.configuration(), kParams, lc, 0.5, 1.0, tol);
        const ConicProgram lti = build_centralized_lti(w.configuration(), w.velocities, kParams, lc, dyn, poly, tol);
        ok = ok && evaluate(si, si.stationary_point).within(1e-9) && evaluate(lti, lti.stationary_point).within(1e-9);
        const WeightedGraphView g = build_graph(w.configuration(), kParams);
        const NeighborhoodIndex idx = build_neighborhood_index(g, std::vector<int>(n, 2));
        const MergeWeights mw = make_merge_weights(idx, uniform_alpha(n), g);
        for (int p = 0; p < n; ++p) {
            if (idx.J[p].size() < 2) continue;
            const ConicProgram local = build_local(w.configuration(), w.velocities, lc,
                                                   make_local_spec(idx.J[p], idx.boundary[p], mw, models, kParams, lc), tol);
            ok = ok && evaluate(local, local.stationary_point).within(1e-9);
        }
        accepted += ok ? 1 : 0;
        ++total;
    }

    const Scenario s = benchmark_scenario(Mode::distributed, 3, 1);
    std::string run_issue;
    double min_d2 = 0.0, min_mid = 0.0, inputs = 0.0;
    try {
        const RunResult r = run(s); // aborts on any state or sub-step violation
        min_d2 = std::numeric_limits<double>::infinity();
        min_mid = min_d2;
        for (const StepLog& log : r.steps) {
            min_d2 = std::min(min_d2, log.min_d2);
            min_mid = std::min(min_mid, log.min_d2_intermediate);
        }
        inputs = input_violation(r, s);
    } catch (const std::exception& e) {
        run_issue = e.what();
    }
    const bool pass = accepted == total && run_issue.empty() && min_d2 > kParams.rho1 && inputs <= 1e-7;
    std::string detail = fmt("stationary point accepted on %.0f/%.0f states; ", accepted, total);
    if (!run_issue.empty())
        detail += "T=100 run aborted: " + run_issue;
    else
        detail += fmt("T=100 run: min d2 %.8f (> 0.75), min sub-step d2 %.4f, max input violation %.1e", min_d2, min_mid,
                      inputs);
    return {pass, detail};
}

Verdict monotonicity()
{
    bool pass = true;
    std::string detail;
    const std::vector<std::pair<Mode, int>> cases{
        {Mode::distributed, 1}, {Mode::distributed, 2}, {Mode::distributed, 3}, {Mode::adaptive, 2}};
    for (const auto& [mode, n] : cases) {
        const RunResult r = run(benchmark_scenario(mode, n, 1));
        const double margin = r.summary.min_monotonicity_margin;
        pass = pass && margin >= -1e-6;
        detail += std::string(mode == Mode::adaptive ? "adaptive" : "n=" + std::to_string(n)) +
                  fmt(" margin %.2e (safeguard %.0f); ", margin, r.summary.safeguard_activations);
    }
    return {pass, detail + "tol -1e-6 over T=100"};
}

Verdict merge_identities(bool laplacian)
{
    double worst = 0.0;
    for (int n : {1, 2, 3}) {
        const RunResult r = run(benchmark_scenario(Mode::distributed, n, 1, 10, 20), RunOptions{true, nullptr});
        worst = std::max(worst, laplacian ? r.summary.max_laplacian_residual : r.summary.max_merge_residual);
    }
    if (laplacian) return {worst <= 1e-10, fmt("n=1,2,3 T=20: max elementwise residual %.2e (tol 1e-10)", worst)};
    return {worst <= 1e-8, fmt("n=1,2,3 T=20: max position/velocity residual %.2e (tol 1e-8)", worst)};
}

Verdict equivalence()
{
    Scenario d = benchmark_scenario(Mode::distributed, 5, 4, 5, 10);
    d.init.kind = InitSpec::Kind::random_feasible;
    d.init.velocity_scale = 0.1;
    Scenario c = d;
    c.mode = Mode::centralized_lti;
    const RunResult rd = run(d), rc = run(c);
    double worst = 0.0;
    for (std::size_t k = 0; k < rd.summary.lambda2_trajectory.size(); ++k)
        worst = std::max(worst, std::abs(rd.summary.lambda2_trajectory[k] - rc.summary.lambda2_trajectory[k]));
    return {worst <= 1e-4, fmt("N=5, 10 steps: max lambda2 gap %.2e (tol 1e-4)", worst)};
}

Verdict neighborhood_monotonicity()
{
    int holds = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const WorldState w = init_random_feasible(10, 2, 500 + seed, kParams, bench_models(10), 0.0, 0.1);
        const WeightedGraphView g = build_graph(w.configuration(), kParams);
        double l2[2];
        for (int n : {1, 2}) {
            const NeighborhoodIndex idx = build_neighborhood_index(g, std::vector<int>(10, n));
            const MergeWeights mw = make_merge_weights(idx, uniform_alpha(10), g);
            l2[n - 1] = distributed_round(w, idx, mw, bench_models(10), DistributedSettings{}).lambda2_linearized;
        }
        worst = std::min(worst, l2[1] - l2[0]);
        holds += l2[1] >= l2[0] - 1e-6 ? 1 : 0;
    }
    return {holds == 20, fmt("%.0f/20 states with lambda2(n=2) >= lambda2(n=1) - 1e-6; min difference %.2e", holds, worst)};
}

Verdict collision()
{
    const AgentDynamics d = AgentDynamics::benchmark(2, 1.0);
    const InputPolytope p = InputPolytope::benchmark(2);
    const CollisionBound b = collision_bound({d, d}, {p, p});
    const VelocityFeasibleSet f = velocity_feasible_set(d, p);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(-0.3, 0.3); // F_v lies inside |v_k| <= 1/3.5
    double best = 0.0;
    int samples = 0;
    while (samples < 1000000) {
        Vector v1(2), v2(2);
        v1 << uni(rng), uni(rng);
        v2 << uni(rng), uni(rng);
        if (!f.contains(v1, 0.0) || !f.contains(v2, 0.0)) continue;
        ++samples;
        best = std::max(best, (d.A1 * v1 - d.A1 * v2).squaredNorm());
    }
    bool rejected = true;
    for (double rho1 : {b.value, 0.5 * b.value}) {
        Scenario s = benchmark_scenario(Mode::distributed, 2, 1, 4, 1);
        s.weights.rho1 = rho1;
        s.init.sigma = 0.0;
        try {
            validate_scenario(s);
            rejected = false;
        } catch (const ConfigError&) {
        }
    }
    return {best <= b.value * (1.0 + 1e-12) && rejected,
            fmt("bound %.6f, max of 1e6 samples %.6f; check rejects rho1 <= bound: ", b.value, best) +
                (rejected ? "yes" : "no")};
}

Verdict ratio_table()
{
    RatioHistogram h;
    int in_band = 0;
    std::string ratios;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Scenario s = benchmark_scenario(Mode::distributed, 3, seed);
        s.paired_centralized = true;
        const double r = *run(s).summary.ratio;
        h.add(r);
        in_band += (r > 0.3 && r <= 1.2) ? 1 : 0;
        ratios += fmt("%.3f ", r);
    }
    std::string hist;
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        if (h.counts[b]) hist += h.label(b) + ":" + std::to_string(h.counts[b]) + " ";
    return {in_band >= 4, std::string("ratios ") + ratios + fmt("-> %.0f/5 in (0.3, 1.2]; bins ", in_band) + hist};
}

Verdict growth()
{
    const RunResult r = run(benchmark_scenario(Mode::centralized_lti, 10, 1));
    const double factor = r.summary.final_lambda2 / r.summary.initial_lambda2;
    return {factor >= 3.0, fmt("lambda2 %.4f -> %.4f, factor %.1f (need >= 3)", r.summary.initial_lambda2,
                               r.summary.final_lambda2, factor)};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"shift identity", shift_identity},
        {"linearization", linearization},
        {"stationary and persistent feasibility", stationary_and_persistent_feasibility},
        {"lambda2 monotonicity", monotonicity},
        {"merged Laplacian identity", [] { return merge_identities(true); }},
        {"induced merge", [] { return merge_identities(false); }},
        {"full-neighborhood equivalence", equivalence},
        {"one-step neighborhood monotonicity", neighborhood_monotonicity},
        {"collision bound", collision},
        {"scaled-down ratio table", ratio_table},
        {"centralized growth", growth},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), secs);
        std::fflush(stdout);
        failures += v.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
