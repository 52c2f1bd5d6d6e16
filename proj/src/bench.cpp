#include "graybox/bench.hpp"

#include <Eigen/SVD>
#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

namespace graybox {

std::string method_name(Method method) {
    switch (method) {
    case Method::dcp:
        return "dcp";
    case Method::altmin:
        return "altmin";
    case Method::pemSurrogate:
        return "pem";
    }
    return "?";
}

Method parse_method(const std::string &name) {
    if (name == "dcp")
        return Method::dcp;
    if (name == "altmin")
        return Method::altmin;
    if (name == "pem")
        return Method::pemSurrogate;
    throw std::invalid_argument("unknown method '" + name + "' (expected dcp, altmin or pem)");
}

void TrialConfig::validate() const {
    if (!(successThreshold > 0))
        throw std::invalid_argument("TrialConfig: successThreshold must be positive");
    if (!(timeoutSeconds > 0))
        throw std::invalid_argument("TrialConfig: timeoutSeconds must be positive");
    if (dcpRestarts < 0 || altminMaxIters < 0 || pemDataLength <= 0)
        throw std::invalid_argument("TrialConfig: negative iteration or length setting");
    if (family == Family::compartmental && dims.n < 2)
        throw std::invalid_argument("TrialConfig: compartmental order must be at least 2");
    dc.validate();
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream for method-side randomness (initial points, input data).
std::uint64_t method_seed(std::uint64_t seed, std::uint64_t salt) { return splitmix64(seed ^ splitmix64(salt)); }

ParameterVector gaussian_vector(Index size, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    ParameterVector v(size);
    for (Index i = 0; i < size; ++i)
        v(i) = normal(rng);
    return v;
}

struct MethodOutput {
    ParameterVector theta;
    int iterations = 0;
};

MethodOutput run_dcp(const TrialConfig &c, const GrayBoxInstance &inst, const HankelMatrix &Y,
                     std::map<std::string, double> &extras) {
    DcSettings s = c.dc;
    s.timeLimitSeconds = c.timeoutSeconds;
    const auto start = std::chrono::steady_clock::now();
    DcSolution best = solve_dcp(Y, inst.param, s);
    int iterations = static_cast<int>(best.objectiveTrace.size());
    int runs = 1;
    std::mt19937_64 rng(method_seed(c.seed, 1));
    for (int r = 0; r < c.dcpRestarts && best.objectiveTrace.back() > c.restartObjective; ++r) {
        const double used = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        s.timeLimitSeconds = c.timeoutSeconds - used;
        if (s.timeLimitSeconds <= 0)
            throw TimeLimitError("dcp: time limit exceeded before restart " + std::to_string(r + 1));
        const ParameterVector theta0 = gaussian_vector(inst.param.q(), rng);
        DcSolution next = solve_dcp_from(Y, inst.param, consistent_iterate(inst.param, theta0, Y.v, Y.h), s);
        iterations += static_cast<int>(next.objectiveTrace.size());
        ++runs;
        if (next.objectiveTrace.back() < best.objectiveTrace.back())
            best = std::move(next);
    }
    extras["objective"] = best.objectiveTrace.back();
    extras["converged"] = best.status == DcStatus::converged ? 1.0 : 0.0;
    extras["runs"] = runs;
    return {best.theta, iterations};
}

MethodOutput run_altmin(const TrialConfig &c, const GrayBoxInstance &inst, const HankelMatrix &Y,
                        std::map<std::string, double> &extras) {
    const StateSpace blackBox = ho_kalman_realize(Y, inst.param.dims.n);
    std::mt19937_64 rng(method_seed(c.seed, 2));
    SimilarityIterate init{Matrix::Identity(inst.param.dims.n, inst.param.dims.n),
                           gaussian_vector(inst.param.q(), rng), 0.0};
    const AltminResult r = altmin_similarity(blackBox, inst.param, init, c.altminMaxIters);
    extras["cost"] = r.iterate.cost;
    extras["min_sv_q"] = Eigen::JacobiSVD<Matrix>(r.iterate.Q).singularValues().minCoeff();
    extras["rank_deficient"] = r.rankDeficient ? 1.0 : 0.0;
    return {r.iterate.theta, r.iterations};
}

MethodOutput run_pem(const TrialConfig &c, const GrayBoxInstance &inst, std::map<std::string, double> &extras) {
    const StateSpace truth = assemble(inst.param, inst.thetaTrue);
    const IoData data = make_identification_data(truth, c.pemDataLength, method_seed(c.seed, 3));
    std::mt19937_64 rng(method_seed(c.seed, 4));
    const PemResult r = pem_surrogate(data, inst.param, gaussian_vector(inst.param.q(), rng), c.pem);
    extras["cost"] = r.costTrace.back();
    extras["sampling_period"] = data.T;
    return {r.theta, r.iterations};
}

} // namespace

GrayBoxInstance trial_instance(const TrialConfig &config) {
    if (config.family == Family::compartmental)
        return compartmental_instance(config.dims.n, config.seed);
    return random_structured_instance(config.dims, config.q, config.seed);
}

TrialResult run_trial(const TrialConfig &config) {
    config.validate();
    TrialResult result;
    const auto start = std::chrono::steady_clock::now();
    try {
        const GrayBoxInstance inst = trial_instance(config);
        const Index n = inst.param.dims.n;
        const Index v = config.dc.v != 0 ? config.dc.v : n + 1;
        const Index h = config.dc.h != 0 ? config.dc.h : n + 1;
        const MarkovSequence truth = markov_sequence(assemble(inst.param, inst.thetaTrue), v + h - 1);
        const HankelMatrix Y = build_hankel(truth, v, h);

        MethodOutput out;
        switch (config.method) {
        case Method::dcp:
            out = run_dcp(config, inst, Y, result.extras);
            break;
        case Method::altmin:
            out = run_altmin(config, inst, Y, result.extras);
            break;
        case Method::pemSurrogate:
            out = run_pem(config, inst, result.extras);
            break;
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > config.timeoutSeconds)
            throw TimeLimitError("trial exceeded its time limit");
        result.iterations = out.iterations;
        result.irf = impulse_response_fit(markov_sequence(assemble(inst.param, out.theta), v + h - 1), truth);
        if (!std::isfinite(result.irf))
            result.irf = std::numeric_limits<double>::infinity();
    } catch (const std::exception &e) {
        result.irf = std::numeric_limits<double>::infinity();
        result.error = e.what();
    }
    result.success = result.irf <= config.successThreshold;
    result.wallClockMs = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                             .count();
    return result;
}

std::uint64_t trial_seed(std::uint64_t baseSeed, Index value, int trialIndex) {
    std::uint64_t h = splitmix64(baseSeed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(value));
    return splitmix64(h ^ static_cast<std::uint64_t>(trialIndex));
}

SweepResult run_sweep(const SweepSpec &spec) {
    if (spec.trialsPerPoint < 1)
        throw std::invalid_argument("run_sweep: trialsPerPoint must be at least 1");
    if (spec.values.empty() || spec.methods.empty())
        throw std::invalid_argument("run_sweep: no sweep values or no methods");

    SweepResult out;
    std::vector<TrialConfig> configs;
    for (Method method : spec.methods)
        for (Index value : spec.values)
            for (int t = 0; t < spec.trialsPerPoint; ++t) {
                TrialConfig c = spec.base;
                c.family = spec.family;
                c.method = method;
                c.seed = trial_seed(spec.baseSeed, value, t);
                if (spec.family == Family::compartmental) {
                    c.dims = {value, 1, 1};
                } else {
                    c.dims = spec.dims;
                    c.q = value;
                }
                c.validate();
                configs.push_back(c);
                out.trials.push_back({method, value, t, {}});
            }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++)
            out.trials[i].result = run_trial(configs[i]);
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(spec.workers, static_cast<unsigned>(configs.size())));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w)
        pool.emplace_back(worker);
    worker();
    for (auto &t : pool)
        t.join();

    for (Method method : spec.methods) {
        SuccessCurve curve{method_name(method), spec.family == Family::compartmental ? "n" : "q", {}};
        for (Index value : spec.values) {
            CurvePoint pt{value, 0, 0, 0.0, 0.0};
            double irfSum = 0.0;
            int finite = 0;
            for (const auto &t : out.trials) {
                if (t.method != method || t.value != value)
                    continue;
                ++pt.trials;
                pt.successes += t.result.success ? 1 : 0;
                if (std::isfinite(t.result.irf)) {
                    irfSum += t.result.irf;
                    ++finite;
                }
            }
            pt.rate = static_cast<double>(pt.successes) / pt.trials;
            pt.meanIrf = finite > 0 ? irfSum / finite : std::numeric_limits<double>::quiet_NaN();
            curve.points.push_back(pt);
        }
        out.curves.push_back(std::move(curve));
    }
    return out;
}

double success_rate(const std::vector<TrialResult> &results) {
    if (results.empty())
        throw std::invalid_argument("success_rate: empty result list");
    const auto hits = std::count_if(results.begin(), results.end(), [](const TrialResult &r) { return r.success; });
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::string curves_to_csv(const std::vector<SuccessCurve> &curves) {
    struct Row {
        std::string method, variable;
        CurvePoint pt;
    };
    std::vector<Row> rows;
    for (const auto &c : curves)
        for (const auto &pt : c.points)
            rows.push_back({c.method, c.sweepVariable, pt});
    std::stable_sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) {
        return a.method != b.method ? a.method < b.method : a.pt.value < b.pt.value;
    });
    std::string csv = "method,sweep_variable,sweep_value,trials,successes,rate,mean_irf\n";
    for (const auto &r : rows)
        csv += fmt::format("{},{},{},{},{},{},{}\n", r.method, r.variable, r.pt.value, r.pt.trials, r.pt.successes,
                           r.pt.rate, r.pt.meanIrf);
    return csv;
}

void emit_csv(const std::vector<SuccessCurve> &curves, const std::string &path) {
    if (curves.empty())
        throw std::invalid_argument("emit_csv: no curves");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("emit_csv: cannot open '" + path + "' for writing");
    out << curves_to_csv(curves);
    if (!out)
        throw std::runtime_error("emit_csv: write to '" + path + "' failed");
}

} // namespace graybox
