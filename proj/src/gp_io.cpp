#include <fstream>

#include "gpmhe/io.hpp"

namespace gpmhe {

using nlohmann::json;

namespace {

void check_header(const json &doc, const char *format) {
    if (!doc.contains("format") || doc.at("format") != format) {
        throw std::invalid_argument(std::string("expected a '") + format + "' document");
    }
    const int version = doc.at("version").get<int>();
    if (version != kFormatVersion) {
        throw std::invalid_argument(std::string(format) + ": unsupported version " +
                                    std::to_string(version));
    }
}

}  // namespace

json vector_to_json(const Vector &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const json &doc) {
    const auto values = doc.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json matrix_to_json(const Matrix &m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json &doc) {
    const auto rows = doc.at("rows").get<Eigen::Index>();
    const auto cols = doc.at("cols").get<Eigen::Index>();
    const auto &data = doc.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw std::invalid_argument("matrix: row count");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Vector r = vector_from_json(data.at(static_cast<std::size_t>(i)));
        if (r.size() != cols) throw std::invalid_argument("matrix: column count");
        m.row(i) = r.transpose();
    }
    return m;
}

json to_json(const KernelParams &params) {
    return json{{"signal_variance", params.signal_variance},
                {"lengthscales", vector_to_json(params.lengthscales)},
                {"noise_variance", params.noise_variance}};
}

KernelParams kernel_params_from_json(const json &doc) {
    KernelParams p;
    p.signal_variance = doc.at("signal_variance").get<double>();
    p.lengthscales = vector_from_json(doc.at("lengthscales"));
    p.noise_variance = doc.at("noise_variance").get<double>();
    p.validate(p.input_dim());
    return p;
}

json to_json(const GpModel &model) {
    return json{{"format", kGpFormat},
                {"version", kFormatVersion},
                {"kernel", "squared_exponential_ard"},
                {"params", to_json(model.params())},
                {"inputs", matrix_to_json(model.inputs())},
                {"targets", vector_to_json(model.targets())}};
}

GpModel gp_model_from_json(const json &doc) {
    check_header(doc, kGpFormat);
    const KernelParams params = kernel_params_from_json(doc.at("params"));
    Matrix inputs = matrix_from_json(doc.at("inputs"));
    const Vector targets = vector_from_json(doc.at("targets"));
    if (inputs.rows() == 0) return GpModel(params);
    return GpModel::fit(inputs, targets, params);
}

json to_json(const LearnedDynamics &model) {
    json states = json::array();
    json outputs = json::array();
    for (const auto &gp : model.state_gps()) states.push_back(to_json(gp));
    for (const auto &gp : model.output_gps()) outputs.push_back(to_json(gp));
    return json{{"format", kDynamicsFormat},
                {"version", kFormatVersion},
                {"state_dim", model.state_dim()},
                {"input_dim", model.input_dim()},
                {"output_dim", model.output_dim()},
                {"state_gps", states},
                {"output_gps", outputs}};
}

LearnedDynamics learned_dynamics_from_json(const json &doc) {
    check_header(doc, kDynamicsFormat);
    std::vector<GpModel> states;
    std::vector<GpModel> outputs;
    for (const auto &gp : doc.at("state_gps")) states.push_back(gp_model_from_json(gp));
    for (const auto &gp : doc.at("output_gps")) outputs.push_back(gp_model_from_json(gp));
    return LearnedDynamics(doc.at("state_dim").get<std::size_t>(), doc.at("input_dim").get<std::size_t>(),
                           doc.at("output_dim").get<std::size_t>(), std::move(states),
                           std::move(outputs));
}

json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

void write_json_file(const std::string &path, const json &doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

}  // namespace gpmhe
