#include "graybox/io.hpp"

#include <fstream>

namespace graybox {

Json matrix_to_json(const Matrix &M) {
    Json rows = Json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < M.cols(); ++j)
            row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json &j, const std::string &what) {
    if (!j.is_array())
        throw IoError(what + ": expected an array of rows");
    const Index rows = static_cast<Index>(j.size());
    if (rows == 0)
        return Matrix(0, 0);
    if (!j[0].is_array())
        throw IoError(what + ": expected an array of rows");
    const Index cols = static_cast<Index>(j[0].size());
    Matrix M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const Json &row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw IoError(what + ": ragged rows");
        for (Index c = 0; c < cols; ++c) {
            const Json &x = row[static_cast<std::size_t>(c)];
            if (!x.is_number())
                throw IoError(what + ": non-numeric entry");
            M(r, c) = x.get<double>();
        }
    }
    return M;
}

namespace {

// Empty JSON rows cannot carry a column count, so n x 0 and 0 x n shapes are restored here.
Matrix shaped(const Json &j, Index rows, Index cols, const std::string &what) {
    Matrix M = matrix_from_json(j, what);
    if (M.size() == 0 && rows * cols == 0)
        return Matrix(rows, cols);
    if (M.rows() != rows || M.cols() != cols)
        throw IoError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                      std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
    return M;
}

Index read_dim(const Json &j, const char *key) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw IoError(std::string("missing or non-integer field '") + key + "'");
    return j[key].get<Index>();
}

Json vector_to_json(const Vector &v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i)
        a.push_back(v(i));
    return a;
}

} // namespace

Json model_to_json(const ModelFile &model) {
    const auto &p = model.param;
    Json j;
    j["n"] = p.dims.n;
    j["m"] = p.dims.m;
    j["p"] = p.dims.p;
    j["q"] = p.q();
    j["offsetA"] = matrix_to_json(p.offsetA);
    j["offsetB"] = matrix_to_json(p.offsetB);
    j["offsetC"] = matrix_to_json(p.offsetC);
    j["coeffs"] = Json::array();
    for (std::size_t i = 0; i < p.coeffA.size(); ++i)
        j["coeffs"].push_back({{"A", matrix_to_json(p.coeffA[i])},
                               {"B", matrix_to_json(p.coeffB[i])},
                               {"C", matrix_to_json(p.coeffC[i])}});
    if (model.thetaTrue)
        j["theta_true"] = vector_to_json(*model.thetaTrue);
    return j;
}

ModelFile model_from_json(const Json &j) {
    if (!j.is_object())
        throw IoError("model: expected a JSON object");
    const Dims dims{read_dim(j, "n"), read_dim(j, "m"), read_dim(j, "p")};
    try {
        dims.validate();
    } catch (const DimensionError &e) {
        throw IoError(std::string("model: ") + e.what());
    }
    const Index q = read_dim(j, "q");
    ModelFile model;
    model.param = AffineParameterization::zeros(dims);
    for (const char *key : {"offsetA", "offsetB", "offsetC", "coeffs"})
        if (!j.contains(key))
            throw IoError(std::string("model: missing field '") + key + "'");
    model.param.offsetA = shaped(j["offsetA"], dims.n, dims.n, "offsetA");
    model.param.offsetB = shaped(j["offsetB"], dims.n, dims.m, "offsetB");
    model.param.offsetC = shaped(j["offsetC"], dims.p, dims.n, "offsetC");
    const Json &coeffs = j["coeffs"];
    if (!coeffs.is_array() || static_cast<Index>(coeffs.size()) != q)
        throw IoError("model: 'coeffs' must be an array of length q");
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        const std::string tag = "coeffs[" + std::to_string(i) + "].";
        const Json &c = coeffs[i];
        if (!c.is_object() || !c.contains("A") || !c.contains("B") || !c.contains("C"))
            throw IoError("model: " + tag + " needs A, B and C");
        model.param.add_parameter(shaped(c["A"], dims.n, dims.n, tag + "A"), shaped(c["B"], dims.n, dims.m, tag + "B"),
                                  shaped(c["C"], dims.p, dims.n, tag + "C"));
    }
    if (j.contains("theta_true")) {
        const Json &t = j["theta_true"];
        if (!t.is_array() || static_cast<Index>(t.size()) != q)
            throw IoError("model: 'theta_true' must be an array of length q");
        ParameterVector theta(q);
        for (Index i = 0; i < q; ++i) {
            if (!t[static_cast<std::size_t>(i)].is_number())
                throw IoError("model: non-numeric theta_true entry");
            theta(i) = t[static_cast<std::size_t>(i)].get<double>();
        }
        model.thetaTrue = theta;
    }
    return model;
}

ModelFile fixed_model(const StateSpace &ss) {
    ModelFile model;
    model.param = AffineParameterization::zeros(ss.dims());
    model.param.offsetA = ss.A;
    model.param.offsetB = ss.B;
    model.param.offsetC = ss.C;
    model.thetaTrue = ParameterVector(0);
    return model;
}

Json markov_to_json(const MarkovSequence &markov) {
    Json j;
    j["p"] = markov.dims.p;
    j["m"] = markov.dims.m;
    j["blocks"] = Json::array();
    for (const auto &b : markov.blocks)
        j["blocks"].push_back(matrix_to_json(b));
    return j;
}

MarkovSequence markov_from_json(const Json &j) {
    if (!j.is_object())
        throw IoError("markov: expected a JSON object");
    MarkovSequence mk;
    mk.dims = {0, read_dim(j, "m"), read_dim(j, "p")};
    if (mk.dims.m <= 0 || mk.dims.p <= 0)
        throw IoError("markov: m and p must be positive");
    if (!j.contains("blocks") || !j["blocks"].is_array())
        throw IoError("markov: missing 'blocks' array");
    for (std::size_t i = 0; i < j["blocks"].size(); ++i)
        mk.blocks.push_back(shaped(j["blocks"][i], mk.dims.p, mk.dims.m, "blocks[" + std::to_string(i) + "]"));
    return mk;
}

Json split_diagnostics_to_json(const SplitDiagnostics &diag) {
    return {{"iterations", diag.iterations},
            {"primal_residual", diag.primalResidual},
            {"dual_residual", diag.dualResidual},
            {"mu_history_length", diag.muHistory.size()},
            {"converged", diag.converged}};
}

Json solution_to_json(const DcSolution &solution) {
    Json j;
    j["theta"] = vector_to_json(solution.theta);
    j["status"] = solution.status == DcStatus::converged ? "converged" : "iteration_cap_reached";
    j["objective_trace"] = solution.objectiveTrace;
    j["theta_rel_change_trace"] = solution.thetaRelChangeTrace;
    j["iteration_ms"] = solution.iterationMillis;
    j["inner"] = Json::array();
    for (const auto &d : solution.innerDiagnostics)
        j["inner"].push_back(split_diagnostics_to_json(d));
    return j;
}

Json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "' for reading");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error &e) {
        throw IoError("'" + path + "': " + e.what());
    }
}

void write_json_file(const std::string &path, const Json &j) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("write to '" + path + "' failed");
}

} // namespace graybox
