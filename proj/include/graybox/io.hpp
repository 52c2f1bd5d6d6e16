#pragma once

#include "graybox/dc_solver.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace graybox {

using Json = nlohmann::json;

/// Error reading or writing a file, or malformed content.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelFile {
    AffineParameterization param;
    std::optional<ParameterVector> thetaTrue;
};

/// Row-major nested arrays.
Json matrix_to_json(const Matrix &M);
Matrix matrix_from_json(const Json &j, const std::string &what);

Json model_to_json(const ModelFile &model);
ModelFile model_from_json(const Json &j);

/// A black-box realization written as a model with no parameters.
ModelFile fixed_model(const StateSpace &ss);

Json markov_to_json(const MarkovSequence &markov);
MarkovSequence markov_from_json(const Json &j);

Json split_diagnostics_to_json(const SplitDiagnostics &diag);
Json solution_to_json(const DcSolution &solution);

Json read_json_file(const std::string &path);
void write_json_file(const std::string &path, const Json &j);

} // namespace graybox
