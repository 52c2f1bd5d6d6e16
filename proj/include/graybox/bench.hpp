#pragma once

#include "graybox/baselines.hpp"
#include "graybox/dc_solver.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace graybox {

enum class Family { randomStructure, compartmental };
enum class Method { dcp, altmin, pemSurrogate };

/// "dcp", "altmin", "pem".
std::string method_name(Method method);
Method parse_method(const std::string &name);

struct TrialConfig {
    Family family = Family::compartmental;
    Dims dims{2, 1, 1}; ///< random structure; for compartmental only dims.n (the order) is used
    Index q = 1;        ///< random structure only
    Method method = Method::dcp;
    std::uint64_t seed = 0;

    DcSettings dc;
    /// Extra dcp runs from random consistent starts when the zero start ends
    /// above restartObjective; the lowest final objective wins.
    int dcpRestarts = 0;
    double restartObjective = 1e-7;
    int altminMaxIters = 500;
    PemSettings pem;
    Index pemDataLength = 500;

    double successThreshold = 1e-3;
    double timeoutSeconds = 120.0;

    void validate() const;
};

struct TrialResult {
    double irf = 0.0;
    bool success = false;
    int iterations = 0;
    std::int64_t wallClockMs = 0;
    std::map<std::string, double> extras;
    std::string error; ///< empty unless the method failed
};

/// The instance a trial config generates: model structure and true parameters.
GrayBoxInstance trial_instance(const TrialConfig &config);

TrialResult run_trial(const TrialConfig &config);

struct CurvePoint {
    Index value = 0;
    int trials = 0;
    int successes = 0;
    double rate = 0.0;
    double meanIrf = 0.0; ///< over trials with a finite irf; NaN when there are none
};

struct SuccessCurve {
    std::string method;
    std::string sweepVariable; ///< "q" or "n"
    std::vector<CurvePoint> points;
};

struct SweepSpec {
    Family family = Family::compartmental;
    Dims dims{5, 1, 1}; ///< random structure only
    std::vector<Index> values; ///< q for random structure, n for compartmental
    std::vector<Method> methods;
    int trialsPerPoint = 25;
    std::uint64_t baseSeed = 0;
    unsigned workers = 1;
    TrialConfig base; ///< solver settings, threshold and timeout copied into every trial
};

struct SweepTrial {
    Method method;
    Index value;
    int index;
    TrialResult result;
};

struct SweepResult {
    std::vector<SuccessCurve> curves;
    std::vector<SweepTrial> trials;
};

/// Stable 64-bit mix of (baseSeed, value, trialIndex).
std::uint64_t trial_seed(std::uint64_t baseSeed, Index value, int trialIndex);

SweepResult run_sweep(const SweepSpec &spec);

double success_rate(const std::vector<TrialResult> &results);

/// CSV with header method,sweep_variable,sweep_value,trials,successes,rate,mean_irf.
std::string curves_to_csv(const std::vector<SuccessCurve> &curves);
void emit_csv(const std::vector<SuccessCurve> &curves, const std::string &path);

} // namespace graybox
