#pragma once

#include "conmax/adaptive.hpp"
#include "conmax/distributed.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace conmax {

enum class Mode { centralized_si, centralized_lti, distributed, adaptive };

inline const char* to_string(Mode mode)
{
    switch (mode) {
    case Mode::centralized_si: return "centralized-si";
    case Mode::centralized_lti: return "centralized-lti";
    case Mode::distributed: return "distributed";
    case Mode::adaptive: return "adaptive";
    }
    return "unknown";
}

inline Mode parse_mode(const std::string& text)
{
    for (Mode m : {Mode::centralized_si, Mode::centralized_lti, Mode::distributed, Mode::adaptive})
        if (text == to_string(m)) return m;
    throw ConfigError("unknown mode '" + text + "'");
}

inline bool is_lifted(Mode mode) { return mode != Mode::centralized_si; }

struct InitSpec {
    enum class Kind { line_benchmark, explicit_state, random_feasible };
    Kind kind = Kind::line_benchmark;
    double sigma = 0.1;          ///< line benchmark: std of the lateral offsets
    double box = 0.0;            ///< random feasible: side of the square/cube, 0 = 1.2 sqrt(N)
    double velocity_scale = 0.0; ///< random feasible: velocity components drawn from [-s, s]
    Matrix positions;            ///< explicit: dim x N
    Matrix velocities;           ///< explicit: dim x N, empty = zero
};

struct Scenario {
    int agents = 10;
    int dim = 2;
    int steps = 100;
    double sampling_time = 1.0;
    std::uint64_t seed = 1;
    Mode mode = Mode::distributed;
    WeightParams weights;
    std::vector<AgentModel> models; ///< one per agent
    double v_max = 0.5;             ///< single-integrator mode
    std::vector<double> alpha;      ///< empty = 1/N
    std::vector<int> n_init;        ///< one per agent
    AdaptivePolicy adaptive;
    InitSpec init;
    ProblemTolerances tol;
    bool safeguard = true;
    bool paired_centralized = false;

    std::vector<AgentDynamics> dynamics() const
    {
        std::vector<AgentDynamics> out;
        for (const AgentModel& m : models) out.push_back(m.dynamics);
        return out;
    }
    std::vector<InputPolytope> polytopes() const
    {
        std::vector<InputPolytope> out;
        for (const AgentModel& m : models) out.push_back(m.polytope);
        return out;
    }
    std::vector<double> merge_alpha() const { return alpha.empty() ? uniform_alpha(agents) : alpha; }
};

/// Benchmark scenario: line start, damped double integrators, octagon inputs.
inline Scenario benchmark_scenario(Mode mode, int n, std::uint64_t seed, int agents = 10, int steps = 100)
{
    Scenario s;
    s.agents = agents;
    s.steps = steps;
    s.seed = seed;
    s.mode = mode;
    s.models.assign(static_cast<std::size_t>(agents),
                    AgentModel{AgentDynamics::benchmark(s.dim, s.sampling_time), InputPolytope::benchmark(s.dim)});
    s.n_init.assign(static_cast<std::size_t>(agents), n);
    s.adaptive.n_max = agents - 1;
    return s;
}

// ---------------------------------------------------------------- feasibility checks

/// Separation, connectivity and (lifted modes) velocity-set check of a state. Empty string when it holds.
inline std::string check_state(const WorldState& world, const WeightParams& params,
                               const std::vector<AgentModel>& models, bool lifted, double tol = 1e-7)
{
    const int n = world.size();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double d2 = (world.positions.col(i) - world.positions.col(j)).squaredNorm();
            if (!(d2 > params.rho1))
                return "agents " + std::to_string(i) + " and " + std::to_string(j) + " are closer than rho1";
        }
    }
    const WeightedGraphView graph = build_graph(world.configuration(), params);
    if (!(algebraic_connectivity(graph.laplacian) > 0.0)) return "communication graph is disconnected";
    if (lifted) {
        for (int i = 0; i < n; ++i) {
            const AgentModel& m = models[static_cast<std::size_t>(i)];
            if (!velocity_feasible_set(m.dynamics, m.polytope).contains(world.velocities.col(i), tol))
                return "velocity of agent " + std::to_string(i) + " is outside its feasible set";
        }
    }
    return {};
}

/// Pairwise distances at the intermediate sub-step must stay above (sqrt(rho1) - sqrt(rho_bar_1))^2.
inline std::string check_intermediate(const Matrix& intermediate, const WeightParams& params, double rho_bar_1,
                                      double tol = 1e-9)
{
    const double root = std::sqrt(params.rho1) - std::sqrt(std::max(rho_bar_1, 0.0));
    const double floor = root > 0.0 ? root * root : 0.0;
    for (Eigen::Index i = 0; i < intermediate.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < intermediate.cols(); ++j) {
            const double d2 = (intermediate.col(i) - intermediate.col(j)).squaredNorm();
            if (!(d2 > 0.0) || d2 < floor - tol)
                return "agents " + std::to_string(i) + " and " + std::to_string(j) +
                       " come too close at the intermediate sub-step";
        }
    }
    return {};
}

inline double min_pairwise_sq_distance(const Matrix& positions)
{
    double out = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < positions.cols(); ++i)
        for (Eigen::Index j = i + 1; j < positions.cols(); ++j)
            out = std::min(out, (positions.col(i) - positions.col(j)).squaredNorm());
    return out;
}

// ---------------------------------------------------------------- initialization

/// Agents on the x axis, 1.5 apart and centred, with Gaussian lateral offsets.
inline Configuration init_line_benchmark(int agents, std::uint64_t seed, double sigma = 0.1, int dim = 2,
                                         const WeightParams& params = {})
{
    require(agents >= 2, "line benchmark: need at least two agents");
    require(dim == 2 || dim == 3, "line benchmark: dim must be 2 or 3");
    require(sigma >= 0.0, "line benchmark: sigma must be non-negative");
    const double start = -0.75 * (agents - 1);
    for (int attempt = 0; attempt < 10; ++attempt) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL);
        std::normal_distribution<double> normal(0.0, 1.0);
        Configuration config{Matrix::Zero(dim, agents)};
        for (int i = 0; i < agents; ++i) {
            config.positions(0, i) = start + 1.5 * i;
            for (int k = 1; k < dim; ++k) config.positions(k, i) = sigma * normal(rng);
        }
        const WorldState probe{config.positions, Matrix::Zero(dim, agents)};
        if (check_state(probe, params, {}, false).empty()) return config;
    }
    throw ConfigError("line benchmark: no feasible configuration after 10 attempts");
}

/// Sequential rejection sampling in a square/cube; every new agent keeps a margin from all
/// placed agents and has at least one neighbor, so the result is connected.
inline WorldState init_random_feasible(int agents, int dim, std::uint64_t seed, const WeightParams& params,
                                       const std::vector<AgentModel>& models, double box = 0.0,
                                       double velocity_scale = 0.0)
{
    require(agents >= 2 && (dim == 2 || dim == 3), "random init: need N >= 2 and dim 2 or 3");
    require(velocity_scale >= 0.0 && box >= 0.0, "random init: scales must be non-negative");
    const double side = box > 0.0 ? box : 1.2 * std::sqrt(static_cast<double>(agents));
    const double margin = 0.05 * (params.rho2 - params.rho1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(-0.5 * side, 0.5 * side);
    WorldState out{Matrix::Zero(dim, agents), Matrix::Zero(dim, agents)};
    for (int i = 0; i < agents; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 100000 && !placed; ++attempt) {
            Vector candidate(dim);
            for (int k = 0; k < dim; ++k) candidate(k) = coord(rng);
            bool clear = true, linked = i == 0;
            for (int j = 0; j < i && clear; ++j) {
                const double d2 = (out.positions.col(j) - candidate).squaredNorm();
                clear = d2 > params.rho1 + margin;
                linked = linked || d2 < params.rho2 - margin;
            }
            if (clear && linked) {
                out.positions.col(i) = candidate;
                placed = true;
            }
        }
        if (!placed) throw ConfigError("random init: could not place agent " + std::to_string(i) + "; enlarge the box");
    }
    if (velocity_scale > 0.0) {
        require(static_cast<int>(models.size()) == agents, "random init: one model per agent required");
        std::uniform_real_distribution<double> vel(-velocity_scale, velocity_scale);
        for (int i = 0; i < agents; ++i) {
            const AgentModel& m = models[static_cast<std::size_t>(i)];
            const VelocityFeasibleSet fv = velocity_feasible_set(m.dynamics, m.polytope);
            bool drawn = false;
            for (int attempt = 0; attempt < 100000 && !drawn; ++attempt) {
                Vector v(dim);
                for (int k = 0; k < dim; ++k) v(k) = vel(rng);
                if (fv.contains(v, 0.0)) {
                    out.velocities.col(i) = v;
                    drawn = true;
                }
            }
            if (!drawn) throw ConfigError("random init: no feasible velocity found; reduce velocity_scale");
        }
    }
    return out;
}

inline WorldState initial_state(const Scenario& s)
{
    switch (s.init.kind) {
    case InitSpec::Kind::line_benchmark: {
        const Configuration config = init_line_benchmark(s.agents, s.seed, s.init.sigma, s.dim, s.weights);
        return {config.positions, Matrix::Zero(s.dim, s.agents)};
    }
    case InitSpec::Kind::explicit_state: {
        WorldState out{s.init.positions, s.init.velocities};
        if (out.velocities.size() == 0) out.velocities = Matrix::Zero(s.dim, s.agents);
        return out;
    }
    case InitSpec::Kind::random_feasible:
        return init_random_feasible(s.agents, s.dim, s.seed, s.weights, s.models, s.init.box, s.init.velocity_scale);
    }
    throw ConfigError("unknown init kind");
}

// ---------------------------------------------------------------- validation

struct ScenarioCheck {
    WorldState initial;
    CollisionBound collision;
};

/// Static checks plus the two load-time conditions: collision margin and a feasible initial state.
inline ScenarioCheck validate_scenario(const Scenario& s)
{
    const auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (s.agents < 2) fail("agents must be at least 2");
    if (s.dim != 2 && s.dim != 3) fail("dim must be 2 or 3");
    if (s.steps < 1) fail("steps must be at least 1");
    if (!(s.sampling_time > 0.0)) fail("sampling_time must be positive");
    if (!(s.v_max >= 0.0)) fail("v_max must be non-negative");
    try {
        s.weights.validate();
        s.adaptive.validate();
    } catch (const std::exception& e) {
        fail(e.what());
    }
    if (static_cast<int>(s.models.size()) != s.agents) fail("need one dynamics/polytope pair per agent");
    for (const AgentModel& m : s.models) {
        try {
            m.dynamics.validate();
            m.polytope.validate();
        } catch (const std::exception& e) {
            fail(std::string("agent model: ") + e.what());
        }
        if (m.dynamics.dim() != s.dim || m.polytope.dim() != s.dim) fail("agent model dimension differs from dim");
    }
    if (!s.alpha.empty()) {
        if (static_cast<int>(s.alpha.size()) != s.agents) fail("alpha needs one entry per agent");
        for (double a : s.alpha)
            if (!(a > 0.0)) fail("alpha entries must be positive");
    }
    if (static_cast<int>(s.n_init.size()) != s.agents) fail("n_init needs one entry per agent");
    for (int n : s.n_init)
        if (n < 1) fail("n_init entries must be at least 1");
    if (s.init.kind == InitSpec::Kind::explicit_state) {
        if (s.init.positions.rows() != s.dim || s.init.positions.cols() != s.agents)
            fail("explicit positions must have one dim-vector per agent");
        if (s.init.velocities.size() != 0 &&
            (s.init.velocities.rows() != s.dim || s.init.velocities.cols() != s.agents))
            fail("explicit velocities must have one dim-vector per agent");
    }

    ScenarioCheck out;
    if (is_lifted(s.mode)) {
        try {
            out.collision = collision_bound(s.dynamics(), s.polytopes());
        } catch (const std::exception& e) {
            fail(std::string("collision bound: ") + e.what());
        }
        if (!check_collision_margin(s.weights.rho1, out.collision.value))
            fail(collision_margin_diagnostic(s.weights.rho1, out.collision));
    }
    out.initial = initial_state(s);
    const std::string issue = check_state(out.initial, s.weights, s.models, is_lifted(s.mode));
    if (!issue.empty()) fail("initial state infeasible: " + issue);
    return out;
}

// ---------------------------------------------------------------- JSON config

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double number(const Json& v, const std::string& where)
{
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    return v.get<double>();
}

inline int integer(const Json& v, const std::string& where)
{
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    return v.get<int>();
}

inline Vector vector_of(const Json& v, const std::string& where)
{
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) out(static_cast<Eigen::Index>(k)) = number(v[k], where);
    return out;
}

/// Row-major array of arrays.
inline Matrix matrix_of(const Json& v, const std::string& where)
{
    if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
        const Vector row = vector_of(v[r], where);
        if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(where + ": ragged rows");
        out.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return out;
}

/// One point per row in the file, stored as columns.
inline Matrix points_of(const Json& v, const std::string& where) { return matrix_of(v, where).transpose(); }

inline AgentDynamics dynamics_of(const Json& v, int dim, double ts, const std::string& where)
{
    reject_unknown(v, {"A1", "A2", "b1", "preset"}, where);
    if (v.contains("preset")) {
        if (v.size() != 1) throw ConfigError(where + ": 'preset' excludes other keys");
        if (v["preset"] != "benchmark") throw ConfigError(where + ": unknown preset");
        return AgentDynamics::benchmark(dim, ts);
    }
    if (!v.contains("A1") || !v.contains("A2") || !v.contains("b1"))
        throw ConfigError(where + ": need A1, A2 and b1");
    return {matrix_of(v["A1"], where + ".A1"), matrix_of(v["A2"], where + ".A2"), number(v["b1"], where + ".b1")};
}

inline InputPolytope polytope_of(const Json& v, int dim, const std::string& where)
{
    reject_unknown(v, {"H", "h", "preset"}, where);
    if (v.contains("preset")) {
        if (v.size() != 1) throw ConfigError(where + ": 'preset' excludes other keys");
        if (v["preset"] != "benchmark") throw ConfigError(where + ": unknown preset");
        return InputPolytope::benchmark(dim);
    }
    if (!v.contains("H") || !v.contains("h")) throw ConfigError(where + ": need H and h");
    return {matrix_of(v["H"], where + ".H"), vector_of(v["h"], where + ".h")};
}

template <class T, class F>
std::vector<T> per_agent(const Json& v, int agents, const std::string& where, F parse_one)
{
    if (v.is_array()) {
        if (static_cast<int>(v.size()) != agents) throw ConfigError(where + ": need one entry per agent");
        std::vector<T> out;
        for (std::size_t k = 0; k < v.size(); ++k) out.push_back(parse_one(v[k], where + "[" + std::to_string(k) + "]"));
        return out;
    }
    return std::vector<T>(static_cast<std::size_t>(agents), parse_one(v, where));
}

} // namespace detail

/// Parses a scenario; unknown keys are rejected at every level. Does not run validate_scenario.
inline Scenario scenario_from_json(const nlohmann::json& root)
{
    using detail::integer;
    using detail::number;
    detail::reject_unknown(root,
                           {"agents", "dim", "steps", "sampling_time", "seed", "mode", "weights", "dynamics",
                            "input_polytope", "v_max", "alpha", "n_init", "adaptive", "init", "solver", "safeguard",
                            "paired_centralized"},
                           "config");
    Scenario s;
    if (root.contains("agents")) s.agents = integer(root["agents"], "agents");
    if (root.contains("dim")) s.dim = integer(root["dim"], "dim");
    if (s.agents < 2) throw ConfigError("agents must be at least 2");
    if (s.dim != 2 && s.dim != 3) throw ConfigError("dim must be 2 or 3");
    if (root.contains("steps")) s.steps = integer(root["steps"], "steps");
    if (root.contains("sampling_time")) s.sampling_time = number(root["sampling_time"], "sampling_time");
    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
        s.seed = root["seed"].get<std::uint64_t>();
    }
    if (root.contains("mode")) {
        if (!root["mode"].is_string()) throw ConfigError("mode: expected a string");
        s.mode = parse_mode(root["mode"].get<std::string>());
    }
    if (root.contains("weights")) {
        const auto& w = root["weights"];
        detail::reject_unknown(w, {"rho1", "rho2"}, "weights");
        if (w.contains("rho1")) s.weights.rho1 = number(w["rho1"], "weights.rho1");
        if (w.contains("rho2")) s.weights.rho2 = number(w["rho2"], "weights.rho2");
    }
    const int dim = s.dim;
    const double ts = s.sampling_time;
    const std::vector<AgentDynamics> dyn =
        root.contains("dynamics")
            ? detail::per_agent<AgentDynamics>(root["dynamics"], s.agents, "dynamics",
                                               [&](const nlohmann::json& v, const std::string& where) {
                                                   return detail::dynamics_of(v, dim, ts, where);
                                               })
            : std::vector<AgentDynamics>(static_cast<std::size_t>(s.agents), AgentDynamics::benchmark(dim, ts));
    const std::vector<InputPolytope> poly =
        root.contains("input_polytope")
            ? detail::per_agent<InputPolytope>(root["input_polytope"], s.agents, "input_polytope",
                                               [&](const nlohmann::json& v, const std::string& where) {
                                                   return detail::polytope_of(v, dim, where);
                                               })
            : std::vector<InputPolytope>(static_cast<std::size_t>(s.agents), InputPolytope::benchmark(dim));
    s.models.clear();
    for (int i = 0; i < s.agents; ++i) s.models.push_back({dyn[static_cast<std::size_t>(i)], poly[static_cast<std::size_t>(i)]});
    if (root.contains("v_max")) s.v_max = number(root["v_max"], "v_max");
    if (root.contains("alpha")) {
        const auto& a = root["alpha"];
        if (a.is_string()) {
            if (a != "uniform") throw ConfigError("alpha: expected \"uniform\" or an array");
        } else {
            const Vector values = detail::vector_of(a, "alpha");
            s.alpha.assign(values.data(), values.data() + values.size());
        }
    }
    s.n_init.assign(static_cast<std::size_t>(s.agents), 2);
    if (root.contains("n_init")) {
        const auto& n = root["n_init"];
        if (n.is_array()) {
            s.n_init.clear();
            for (const auto& v : n) s.n_init.push_back(integer(v, "n_init"));
        } else {
            s.n_init.assign(static_cast<std::size_t>(s.agents), integer(n, "n_init"));
        }
    }
    s.adaptive.n_max = s.agents - 1;
    if (root.contains("adaptive")) {
        const auto& a = root["adaptive"];
        detail::reject_unknown(a, {"grow_threshold", "shrink_threshold", "period", "n_min", "n_max"}, "adaptive");
        if (a.contains("grow_threshold")) s.adaptive.grow_threshold = number(a["grow_threshold"], "adaptive.grow_threshold");
        if (a.contains("shrink_threshold"))
            s.adaptive.shrink_threshold = number(a["shrink_threshold"], "adaptive.shrink_threshold");
        if (a.contains("period")) s.adaptive.period = integer(a["period"], "adaptive.period");
        if (a.contains("n_min")) s.adaptive.n_min = integer(a["n_min"], "adaptive.n_min");
        if (a.contains("n_max")) s.adaptive.n_max = integer(a["n_max"], "adaptive.n_max");
    }
    if (root.contains("init")) {
        const auto& in = root["init"];
        if (!in.is_object() || !in.contains("kind") || !in["kind"].is_string())
            throw ConfigError("init: expected an object with a string 'kind'");
        const std::string kind = in["kind"].get<std::string>();
        if (kind == "line-benchmark") {
            detail::reject_unknown(in, {"kind", "sigma"}, "init");
            s.init.kind = InitSpec::Kind::line_benchmark;
            if (in.contains("sigma")) s.init.sigma = number(in["sigma"], "init.sigma");
        } else if (kind == "explicit") {
            detail::reject_unknown(in, {"kind", "positions", "velocities"}, "init");
            s.init.kind = InitSpec::Kind::explicit_state;
            if (!in.contains("positions")) throw ConfigError("init: explicit kind needs positions");
            s.init.positions = detail::points_of(in["positions"], "init.positions");
            if (in.contains("velocities")) s.init.velocities = detail::points_of(in["velocities"], "init.velocities");
        } else if (kind == "random-feasible") {
            detail::reject_unknown(in, {"kind", "box", "velocity_scale"}, "init");
            s.init.kind = InitSpec::Kind::random_feasible;
            if (in.contains("box")) s.init.box = number(in["box"], "init.box");
            if (in.contains("velocity_scale")) s.init.velocity_scale = number(in["velocity_scale"], "init.velocity_scale");
        } else {
            throw ConfigError("init: unknown kind '" + kind + "'");
        }
    }
    if (root.contains("solver")) {
        const auto& t = root["solver"];
        detail::reject_unknown(t, {"eps_strict", "gamma_min", "feas_tol", "opt_tol", "max_iterations"}, "solver");
        if (t.contains("eps_strict")) s.tol.eps_strict = number(t["eps_strict"], "solver.eps_strict");
        if (t.contains("gamma_min")) s.tol.gamma_min = number(t["gamma_min"], "solver.gamma_min");
        if (t.contains("feas_tol")) s.tol.feas_tol = number(t["feas_tol"], "solver.feas_tol");
        if (t.contains("opt_tol")) s.tol.opt_tol = number(t["opt_tol"], "solver.opt_tol");
        if (t.contains("max_iterations")) s.tol.max_iterations = integer(t["max_iterations"], "solver.max_iterations");
    }
    if (root.contains("safeguard")) {
        if (!root["safeguard"].is_boolean()) throw ConfigError("safeguard: expected a boolean");
        s.safeguard = root["safeguard"].get<bool>();
    }
    if (root.contains("paired_centralized")) {
        if (!root["paired_centralized"].is_boolean()) throw ConfigError("paired_centralized: expected a boolean");
        s.paired_centralized = root["paired_centralized"].get<bool>();
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return scenario_from_json(root);
}

// ---------------------------------------------------------------- run loop

struct StepLog {
    int k = 0;
    double lambda2_before = 0.0;
    double lambda2_lin = 0.0;
    double lambda2_actual = 0.0;
    double gamma_min = 0.0;
    double gamma_max = 0.0;
    double min_d2 = 0.0;
    double min_d2_intermediate = 0.0;
    std::vector<int> n;
    std::string statuses;
    double wall_time = 0.0;
    double blend = 1.0;
    double laplacian_residual = std::numeric_limits<double>::quiet_NaN();
    double merge_residual = std::numeric_limits<double>::quiet_NaN();
    double loewner_gap = std::numeric_limits<double>::quiet_NaN();

    double mean_n() const
    {
        return n.empty() ? 0.0 : std::accumulate(n.begin(), n.end(), 0.0) / static_cast<double>(n.size());
    }
};

struct RunSummary {
    Mode mode = Mode::distributed;
    int agents = 0;
    int steps = 0;
    std::uint64_t seed = 0;
    double rho1 = 0.0;
    double rho_bar_1 = 0.0;
    double initial_lambda2 = 0.0;
    double final_lambda2 = 0.0;
    std::vector<double> lambda2_trajectory; ///< actual lambda_2 at k = 0..T
    double runtime_seconds = 0.0;
    int fallbacks = 0;
    int safeguard_activations = 0;
    double min_monotonicity_margin = std::numeric_limits<double>::infinity();
    double max_laplacian_residual = std::numeric_limits<double>::quiet_NaN();
    double max_merge_residual = std::numeric_limits<double>::quiet_NaN();
    double min_loewner_gap = std::numeric_limits<double>::quiet_NaN();
    double mean_n = 0.0;
    int max_n = 0;
    std::optional<double> centralized_final_lambda2;
    std::optional<double> ratio;
};

struct RunResult {
    std::vector<StepLog> steps;
    std::vector<WorldState> states; ///< k = 0..T
    std::vector<std::vector<int>> n_history; ///< neighborhood sizes in force at k = 0..T
    RunSummary summary;
};

struct RunOptions {
    bool diagnostics = false;        ///< per-step merged-Laplacian, merge and local Loewner residuals
    std::ostream* progress = nullptr;
};

namespace detail {

inline double nan_max(double a, double b) { return std::isnan(a) ? b : std::isnan(b) ? a : std::max(a, b); }
inline double nan_min(double a, double b) { return std::isnan(a) ? b : std::isnan(b) ? a : std::min(a, b); }

struct StepOutput {
    WorldState next;
    Matrix inputs; ///< lifted modes
    Matrix intermediate;
    double lambda2_lin = 0.0;
    double gamma_min = 0.0;
    double gamma_max = 0.0;
    std::string statuses;
    int fallbacks = 0;
    double blend = 1.0;
    double laplacian = std::numeric_limits<double>::quiet_NaN();
    double merge = std::numeric_limits<double>::quiet_NaN();
    double loewner = std::numeric_limits<double>::quiet_NaN();
};

inline char centralized_code(const SolveOutcome& raw)
{
    if (raw.status == SolveStatus::optimal) return 'o';
    return raw.status == SolveStatus::infeasible ? 'x' : 'f';
}

inline StepOutput centralized_step(const Scenario& s, const WorldState& world, const LinearizationCoeffs& coeffs)
{
    StepOutput out;
    const bool lifted = s.mode == Mode::centralized_lti;
    const ConicProgram program =
        lifted ? build_centralized_lti(world.configuration(), world.velocities, s.weights, coeffs, s.dynamics(),
                                       s.polytopes(), s.tol)
               : build_centralized_si(world.configuration(), s.weights, coeffs, s.v_max, s.sampling_time, s.tol);
    SolveOutcome outcome = solve(program, s.tol);
    out.statuses = std::string(1, centralized_code(outcome));
    if (outcome.status != SolveStatus::optimal) {
        outcome = stationary_outcome(program, outcome.status);
        out.fallbacks = 1;
    }
    out.gamma_min = out.gamma_max = outcome.gamma;
    if (lifted) {
        out.inputs = outcome.inputs;
        out.next = apply_inputs(world, s.models, out.inputs);
        out.intermediate = world.positions;
        for (int i = 0; i < world.size(); ++i)
            out.intermediate.col(i) += s.models[static_cast<std::size_t>(i)].dynamics.A1 * world.velocities.col(i);
        const std::string violation =
            check_global_constraints(world, out.next, out.inputs, s.models, coeffs, s.weights, s.tol.feas_tol);
        if (!violation.empty()) throw FeasibilityViolation("centralized step: " + violation);
    } else {
        out.next.positions = world.positions + outcome.delta_x;
        out.next.velocities = outcome.delta_x / s.sampling_time;
        out.intermediate = out.next.positions;
    }
    out.lambda2_lin = algebraic_connectivity(delta_laplacian(coeffs, out.next.positions - world.positions));
    return out;
}

inline StepOutput distributed_step(const Scenario& s, const WorldState& world, const std::vector<int>& n,
                                   const DistributedSettings& settings, bool diagnostics)
{
    const WeightedGraphView graph = build_graph(world.configuration(), s.weights);
    const NeighborhoodIndex index = build_neighborhood_index(graph, n);
    const MergeWeights weights = make_merge_weights(index, s.merge_alpha(), graph);
    const StepReport report = distributed_round(world, index, weights, s.models, settings);
    StepOutput out;
    out.next = report.next;
    out.inputs = report.applied_inputs;
    out.intermediate = report.intermediate_positions;
    out.lambda2_lin = report.lambda2_linearized;
    out.blend = report.blend;
    out.gamma_min = std::numeric_limits<double>::infinity();
    out.gamma_max = -std::numeric_limits<double>::infinity();
    for (const LocalSolution& local : report.locals) {
        out.statuses.push_back(local.status_code());
        if (local.fallback && local.members.size() > 1) ++out.fallbacks;
        out.gamma_min = std::min(out.gamma_min, local.gamma);
        out.gamma_max = std::max(out.gamma_max, local.gamma);
    }
    if (diagnostics) {
        out.laplacian = merged_laplacian_residual(report, weights, world);
        out.merge = induced_merge_residual(report.merge);
        for (const LocalSolution& local : report.locals)
            if (local.members.size() > 1) out.loewner = nan_min(out.loewner, local_loewner_gap(report.coeffs, local));
    }
    return out;
}

/// Updates every agent's neighborhood size from its sub-optimality measures.
inline std::vector<int> adapt_sizes(const Scenario& s, const WorldState& world, const std::vector<int>& n,
                                    const DistributedSettings& settings)
{
    const WeightedGraphView graph = build_graph(world.configuration(), s.weights);
    const NeighborhoodIndex index = build_neighborhood_index(graph, n);
    const MergeWeights weights = make_merge_weights(index, s.merge_alpha(), graph);
    const LinearizationCoeffs coeffs = linearize(world.configuration(), s.weights);
    const auto adjacency = graph.adjacency();
    const LocalContext ctx{world, adjacency, weights, s.models, coeffs, settings};
    std::vector<int> next = n;
    for (int i = 0; i < world.size(); ++i) {
        try {
            const SuboptimalityMeasures m = suboptimality(ctx, i, n[static_cast<std::size_t>(i)]);
            next[static_cast<std::size_t>(i)] = update_n(m, s.adaptive, n[static_cast<std::size_t>(i)]);
        } catch (const UndefinedMeasure&) {
            // keep the current size when the local graph is disconnected
        }
    }
    return next;
}

} // namespace detail

inline RunResult run(const Scenario& scenario, const RunOptions& options = {})
{
    const ScenarioCheck check = validate_scenario(scenario);
    const auto t_start = std::chrono::steady_clock::now();
    const bool lifted = is_lifted(scenario.mode);
    const bool distributed = scenario.mode == Mode::distributed || scenario.mode == Mode::adaptive;

    DistributedSettings settings;
    settings.params = scenario.weights;
    settings.tol = scenario.tol;
    settings.safeguard = scenario.safeguard;

    RunResult result;
    RunSummary& sum = result.summary;
    sum.mode = scenario.mode;
    sum.agents = scenario.agents;
    sum.steps = scenario.steps;
    sum.seed = scenario.seed;
    sum.rho1 = scenario.weights.rho1;
    sum.rho_bar_1 = check.collision.value;

    WorldState world = check.initial;
    std::vector<int> n = distributed ? scenario.n_init : std::vector<int>(static_cast<std::size_t>(scenario.agents),
                                                                          scenario.agents);
    result.states.push_back(world);
    sum.initial_lambda2 = algebraic_connectivity(build_graph(world.configuration(), scenario.weights).laplacian);
    sum.lambda2_trajectory.push_back(sum.initial_lambda2);

    for (int k = 0; k < scenario.steps; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        if (scenario.mode == Mode::adaptive && k % scenario.adaptive.period == 0)
            n = detail::adapt_sizes(scenario, world, n, settings);
        result.n_history.push_back(n);

        const LinearizationCoeffs coeffs = linearize(world.configuration(), scenario.weights);
        StepLog log;
        log.k = k;
        log.n = n;
        log.lambda2_before = algebraic_connectivity(delta_laplacian(coeffs, Matrix::Zero(world.dim(), world.size())));
        detail::StepOutput out;
        try {
            out = distributed ? detail::distributed_step(scenario, world, n, settings, options.diagnostics)
                              : detail::centralized_step(scenario, world, coeffs);
        } catch (const FeasibilityViolation& e) {
            throw FeasibilityViolation("step " + std::to_string(k) + ": " + e.what());
        }

        const std::string state_issue = check_state(out.next, scenario.weights, scenario.models, lifted);
        if (!state_issue.empty()) throw FeasibilityViolation("step " + std::to_string(k) + ": " + state_issue);
        if (lifted) {
            const std::string mid = check_intermediate(out.intermediate, scenario.weights, check.collision.value);
            if (!mid.empty()) throw FeasibilityViolation("step " + std::to_string(k) + ": " + mid);
        }

        log.lambda2_lin = out.lambda2_lin;
        log.lambda2_actual = algebraic_connectivity(build_graph(out.next.configuration(), scenario.weights).laplacian);
        log.gamma_min = out.gamma_min;
        log.gamma_max = out.gamma_max;
        log.min_d2 = min_pairwise_sq_distance(out.next.positions);
        log.min_d2_intermediate = min_pairwise_sq_distance(out.intermediate);
        log.statuses = out.statuses;
        log.blend = out.blend;
        log.laplacian_residual = out.laplacian;
        log.merge_residual = out.merge;
        log.loewner_gap = out.loewner;
        log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        sum.fallbacks += out.fallbacks;
        if (out.blend < 1.0) ++sum.safeguard_activations;
        sum.min_monotonicity_margin = std::min(sum.min_monotonicity_margin, log.lambda2_lin - log.lambda2_before);
        sum.max_laplacian_residual = detail::nan_max(sum.max_laplacian_residual, log.laplacian_residual);
        sum.max_merge_residual = detail::nan_max(sum.max_merge_residual, log.merge_residual);
        sum.min_loewner_gap = detail::nan_min(sum.min_loewner_gap, log.loewner_gap);
        sum.lambda2_trajectory.push_back(log.lambda2_actual);

        if (options.progress)
            *options.progress << "step " << k << " lambda2 " << log.lambda2_actual << " statuses " << log.statuses
                              << "\n";
        world = out.next;
        result.states.push_back(world);
        result.steps.push_back(std::move(log));
    }
    result.n_history.push_back(n);
    sum.final_lambda2 = sum.lambda2_trajectory.back();
    double total_n = 0.0;
    for (const StepLog& log : result.steps) {
        total_n += log.mean_n();
        for (int v : log.n) sum.max_n = std::max(sum.max_n, v);
    }
    sum.mean_n = total_n / static_cast<double>(result.steps.size());
    sum.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    if (scenario.paired_centralized && distributed) {
        Scenario paired = scenario;
        paired.mode = Mode::centralized_lti;
        paired.paired_centralized = false;
        paired.init.kind = InitSpec::Kind::explicit_state;
        paired.init.positions = check.initial.positions;
        paired.init.velocities = check.initial.velocities;
        const RunResult central = run(paired);
        sum.centralized_final_lambda2 = central.summary.final_lambda2;
        sum.ratio = sum.final_lambda2 / central.summary.final_lambda2;
    }
    return result;
}

// ---------------------------------------------------------------- output

/// Shortest round-trip decimal form, locale independent.
inline std::string format_double(double value)
{
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[64];
    const auto res = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, res.ptr);
}

inline void write_steps_csv(std::ostream& os, const std::vector<StepLog>& steps)
{
    os << "k,lambda2_lin,lambda2_actual,gamma_min,gamma_max,min_d2,mean_n,statuses\n";
    for (const StepLog& s : steps) {
        os << s.k << ',' << format_double(s.lambda2_lin) << ',' << format_double(s.lambda2_actual) << ','
           << format_double(s.gamma_min) << ',' << format_double(s.gamma_max) << ',' << format_double(s.min_d2) << ','
           << format_double(s.mean_n()) << ',' << s.statuses << '\n';
    }
}

inline void write_trajectory_csv(std::ostream& os, const RunResult& result)
{
    if (result.states.empty()) return;
    const int dim = result.states.front().dim();
    os << "k,agent";
    for (int d = 1; d <= dim; ++d) os << ",x" << d;
    for (int d = 1; d <= dim; ++d) os << ",v" << d;
    os << ",n_i\n";
    for (std::size_t k = 0; k < result.states.size(); ++k) {
        const WorldState& w = result.states[k];
        const std::vector<int>& n = result.n_history[std::min(k, result.n_history.size() - 1)];
        for (int i = 0; i < w.size(); ++i) {
            os << k << ',' << i;
            for (int d = 0; d < dim; ++d) os << ',' << format_double(w.positions(d, i));
            for (int d = 0; d < dim; ++d) os << ',' << format_double(w.velocities(d, i));
            os << ',' << n[static_cast<std::size_t>(i)] << '\n';
        }
    }
}

inline nlohmann::json summary_json(const RunSummary& s)
{
    const auto num = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::json out;
    out["mode"] = to_string(s.mode);
    out["agents"] = s.agents;
    out["steps"] = s.steps;
    out["seed"] = s.seed;
    out["rho1"] = s.rho1;
    out["rho_bar_1"] = s.rho_bar_1;
    out["initial_lambda2"] = s.initial_lambda2;
    out["final_lambda2"] = s.final_lambda2;
    out["lambda2_trajectory"] = s.lambda2_trajectory;
    out["runtime_seconds"] = s.runtime_seconds;
    out["fallbacks"] = s.fallbacks;
    out["safeguard_activations"] = s.safeguard_activations;
    out["min_monotonicity_margin"] = num(s.min_monotonicity_margin);
    out["max_laplacian_residual"] = num(s.max_laplacian_residual);
    out["max_merge_residual"] = num(s.max_merge_residual);
    out["min_loewner_gap"] = num(s.min_loewner_gap);
    out["mean_n"] = s.mean_n;
    out["max_n"] = s.max_n;
    out["centralized_final_lambda2"] = s.centralized_final_lambda2 ? nlohmann::json(*s.centralized_final_lambda2) : nlohmann::json(nullptr);
    out["ratio"] = s.ratio ? nlohmann::json(*s.ratio) : nlohmann::json(nullptr);
    return out;
}

/// Writes steps.csv, trajectory.csv and summary.json into `dir`.
inline void write_outputs(const std::filesystem::path& dir, const RunResult& result)
{
    std::filesystem::create_directories(dir);
    const auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(dir / "steps.csv");
        write_steps_csv(f, result.steps);
    }
    {
        auto f = open(dir / "trajectory.csv");
        write_trajectory_csv(f, result);
    }
    {
        auto f = open(dir / "summary.json");
        f << summary_json(result.summary).dump(2) << '\n';
    }
}

/// Table-style histogram bins for distributed/centralized ratios.
struct RatioHistogram {
    std::vector<double> edges{0.0, 0.1, 0.3, 0.8, 1.0, 1.1};
    std::vector<int> counts = std::vector<int>(7, 0); ///< <=0, (0,0.1], ..., (1.0,1.1], >1.1

    void add(double ratio)
    {
        std::size_t bin = 0;
        while (bin < edges.size() && ratio > edges[bin]) ++bin;
        ++counts[bin];
    }

    std::string label(std::size_t bin) const
    {
        if (bin == 0) return "<=" + format_double(edges.front());
        if (bin == edges.size()) return ">" + format_double(edges.back());
        return "(" + format_double(edges[bin - 1]) + "-" + format_double(edges[bin]) + "]";
    }
};

} // namespace conmax
