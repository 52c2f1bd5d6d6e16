#include "graybox/bench.hpp"
#include "graybox/io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>
#include <thread>

using namespace graybox;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct IdentifyArgs {
    std::string model, markov, out;
    Index v = 0, h = 0;
    DcSettings dc;
};

struct RealizeArgs {
    std::string markov, out;
    Index order = 0;
};

struct BenchArgs {
    Index order = 5, m = 1, p = 1;
    std::vector<Index> values;
    int trials = 25;
    std::vector<std::string> methods{"dcp", "altmin", "pem"};
    std::uint64_t seed = 0;
    std::string csv;
    unsigned workers = 1;
    double threshold = 1e-3;
    double timeout = 120.0;
    int restarts = 0;
    bool fullScale = false;
};

int run_identify(const IdentifyArgs &a) {
    const ModelFile model = model_from_json(read_json_file(a.model));
    const Index n = model.param.dims.n;
    const Index v = a.v != 0 ? a.v : n + 1;
    const Index h = a.h != 0 ? a.h : n + 1;

    std::optional<MarkovSequence> truth;
    MarkovSequence data;
    if (!a.markov.empty()) {
        data = markov_from_json(read_json_file(a.markov));
        if (data.dims.m != model.param.dims.m || data.dims.p != model.param.dims.p)
            throw IoError("Markov file dimensions do not match the model");
        if (data.size() < v + h - 1)
            throw IoError(fmt::format("Markov file has {} blocks, need {}", data.size(), v + h - 1));
        data.blocks.resize(static_cast<std::size_t>(v + h - 1));
        truth = data;
    } else {
        if (!model.thetaTrue)
            throw IoError("model file has no theta_true; supply --markov");
        data = markov_sequence(assemble(model.param, *model.thetaTrue), v + h - 1);
        truth = data;
    }

    DcSettings dc = a.dc;
    dc.v = v;
    dc.h = h;
    const DcSolution sol = solve_dcp(build_hankel(data, v, h), model.param, dc);
    Json j = solution_to_json(sol);
    j["hankel_v"] = v;
    j["hankel_h"] = h;
    j["irf"] = impulse_response_fit(markov_sequence(assemble(model.param, sol.theta), v + h - 1), *truth);
    write_json_file(a.out, j);
    std::cout << fmt::format("status {}  iterations {}  irf {:.3e}\n", j["status"].get<std::string>(),
                             sol.objectiveTrace.size(), j["irf"].get<double>());
    return 0;
}

int run_realize(const RealizeArgs &a) {
    const MarkovSequence mk = markov_from_json(read_json_file(a.markov));
    const Index count = mk.size();
    const Index v = (count + 2) / 2;
    const Index h = count + 1 - v;
    if (h < 1)
        throw IoError("Markov file needs at least two blocks");
    const StateSpace ss = ho_kalman_realize(build_hankel(mk, v, h), a.order);
    write_json_file(a.out, model_to_json(fixed_model(ss)));
    return 0;
}

int run_bench(const BenchArgs &a, Family family, int trialsGiven) {
    SweepSpec spec;
    spec.family = family;
    spec.dims = {a.order, a.m, a.p};
    spec.values = a.values;
    if (spec.values.empty()) {
        if (family == Family::randomStructure)
            spec.values = a.fullScale ? std::vector<Index>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10} : std::vector<Index>{2, 4, 6, 8};
        else
            spec.values = a.fullScale ? std::vector<Index>{2, 3, 4, 5, 6} : std::vector<Index>{2, 3, 4};
    }
    spec.trialsPerPoint = a.fullScale && trialsGiven == 0 ? 100 : a.trials;
    for (const auto &name : a.methods)
        spec.methods.push_back(parse_method(name));
    spec.baseSeed = a.seed;
    spec.workers = a.workers;
    spec.base.successThreshold = a.threshold;
    spec.base.timeoutSeconds = a.timeout;
    spec.base.dcpRestarts = a.restarts;

    const SweepResult result = run_sweep(spec);
    emit_csv(result.curves, a.csv);
    for (const auto &c : result.curves)
        for (const auto &pt : c.points)
            std::cout << fmt::format("{:<7} {}={:<3} {:>4}/{:<4} rate {:.2f}\n", c.method, c.sweepVariable, pt.value,
                                     pt.successes, pt.trials, pt.rate);
    return 0;
}

void add_bench_common(CLI::App *cmd, BenchArgs &a) {
    cmd->add_option("--trials", a.trials, "Trials per sweep point")->check(CLI::PositiveNumber);
    cmd->add_option("--methods", a.methods, "Methods: dcp, altmin, pem")->delimiter(',');
    cmd->add_option("--seed", a.seed, "Base seed");
    cmd->add_option("--csv", a.csv, "Output CSV path")->required();
    cmd->add_option("--workers", a.workers, "Parallel trials")->check(CLI::PositiveNumber);
    cmd->add_option("--threshold", a.threshold, "IRF success threshold")->check(CLI::PositiveNumber);
    cmd->add_option("--timeout", a.timeout, "Per-trial time limit in seconds")->check(CLI::PositiveNumber);
    cmd->add_option("--restarts", a.restarts, "Extra dcp runs from random starts")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--full-scale", a.fullScale, "100 trials and the wider sweep unless given explicitly");
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Gray-box identification from Markov parameters"};
    app.require_subcommand(1);

    IdentifyArgs id;
    auto *identify = app.add_subcommand("identify", "Estimate structured parameters from Markov data");
    identify->add_option("--model", id.model, "Model JSON (structure, optional theta_true)")->required();
    identify->add_option("--markov", id.markov, "Markov JSON; default builds it from theta_true");
    identify->add_option("--hankel-v", id.v, "Block rows (default n+1)")->check(CLI::PositiveNumber);
    identify->add_option("--hankel-h", id.h, "Block columns (default n+1)")->check(CLI::PositiveNumber);
    identify->add_option("--lambda1", id.dc.lambda1, "Rank-n gap weight");
    identify->add_option("--lambda2", id.dc.lambda2, "Rank-1 gap weight");
    identify->add_option("--rho", id.dc.rho, "Proximal weight");
    identify->add_option("--eps", id.dc.epsilon, "Relative theta-change tolerance");
    identify->add_option("--max-iters", id.dc.maxOuterIters, "Outer iteration cap");
    identify->add_option("--out", id.out, "Result JSON")->required();

    RealizeArgs rz;
    auto *realize = app.add_subcommand("realize", "Ho-Kalman realization of a Markov sequence");
    realize->add_option("--markov", rz.markov, "Markov JSON")->required();
    realize->add_option("--order", rz.order, "State order")->required()->check(CLI::PositiveNumber);
    realize->add_option("--out", rz.out, "Model JSON")->required();

    auto *bench = app.add_subcommand("bench", "Monte-Carlo success-rate sweeps");
    bench->require_subcommand(1);
    BenchArgs br, bc;
    bc.methods = {"dcp"};
    auto *random = bench->add_subcommand("random", "Random structures, sweep over the parameter count");
    random->add_option("--order", br.order, "State order")->check(CLI::PositiveNumber);
    random->add_option("--m", br.m, "Inputs")->check(CLI::PositiveNumber);
    random->add_option("--p", br.p, "Outputs")->check(CLI::PositiveNumber);
    random->add_option("--params", br.values, "Parameter counts")->delimiter(',');
    add_bench_common(random, br);
    auto *comp = bench->add_subcommand("compartmental", "Compartmental chains, sweep over the order");
    comp->add_option("--orders", bc.values, "Orders")->delimiter(',');
    add_bench_common(comp, bc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*identify) {
            id.dc.validate();
            return run_identify(id);
        }
        if (*realize)
            return run_realize(rz);
        if (*random)
            return run_bench(br, Family::randomStructure, static_cast<int>(random->count("--trials")));
        return run_bench(bc, Family::compartmental, static_cast<int>(comp->count("--trials")));
    } catch (const NumericalError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
