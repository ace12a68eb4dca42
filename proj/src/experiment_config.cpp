#include "gpmhe/experiment_config.hpp"

#include "gpmhe/io.hpp"

namespace gpmhe {
namespace {

using nlohmann::json;

Matrix covariance_from_json(const json &doc, Eigen::Index dim) {
    if (doc.is_number()) return doc.get<double>() * Matrix::Identity(dim, dim);
    if (doc.is_array()) {
        const Vector d = vector_from_json(doc);
        if (d.size() != dim) throw std::invalid_argument("config: diagonal has wrong length");
        return d.asDiagonal();
    }
    Matrix m = matrix_from_json(doc);
    if (m.rows() != dim || m.cols() != dim) throw std::invalid_argument("config: matrix has wrong shape");
    return m;
}

Box box_from_json(const json &doc) {
    return {vector_from_json(doc.at("lo")), vector_from_json(doc.at("hi"))};
}

json box_to_json(const Box &box) { return {{"lo", vector_to_json(box.lo)}, {"hi", vector_to_json(box.hi)}}; }

template <typename T>
void read(const json &doc, const char *key, T &out) {
    if (doc.contains(key)) out = doc.at(key).get<T>();
}

void read_cov(const json &doc, const char *key, Matrix &out, Eigen::Index dim) {
    if (doc.contains(key)) out = covariance_from_json(doc.at(key), dim);
}

CapRule parse_cap_rule(const std::string &name) {
    if (name == "exact") return CapRule::kExact;
    if (name == "gershgorin") return CapRule::kGershgorin;
    throw std::invalid_argument("unknown cap rule '" + name + "'");
}

}  // namespace

ExperimentSpec spec_from_json(const json &doc) {
    ExperimentSpec spec = default_spec(doc.value("system", std::string("reactor1")));
    const Eigen::Index n = spec.online.initial_estimate.size();
    const Eigen::Index p = spec.mhe.noise.sigma_v.rows();

    read(doc, "seed", spec.seed);
    read(doc, "threads", spec.threads);
    read(doc, "estimators", spec.estimators);

    if (doc.contains("offline")) {
        const auto &o = doc.at("offline");
        if (o.contains("initial_states")) {
            spec.offline.initial_states.clear();
            for (const auto &x : o.at("initial_states")) spec.offline.initial_states.push_back(vector_from_json(x));
        }
        read(o, "steps", spec.offline.steps);
        read_cov(o, "sigma_w", spec.offline.sigma_w, n);
        read_cov(o, "sigma_v", spec.offline.sigma_v, p);
    }

    if (doc.contains("online")) {
        const auto &o = doc.at("online");
        read(o, "steps", spec.online.steps);
        read(o, "runs", spec.online.runs);
        if (o.contains("initial_box")) spec.online.initial_box = box_from_json(o.at("initial_box"));
        if (o.contains("initial_estimate")) spec.online.initial_estimate = vector_from_json(o.at("initial_estimate"));
    }

    if (doc.contains("mhe")) {
        const auto &o = doc.at("mhe");
        auto &cfg = spec.mhe;
        read(o, "horizon", cfg.horizon);
        read(o, "discount", cfg.discount);
        const bool noise_changed = o.contains("sigma_w") || o.contains("sigma_v");
        read_cov(o, "sigma_w", cfg.noise.sigma_w, n);
        read_cov(o, "sigma_v", cfg.noise.sigma_v, p);
        if (noise_changed) {
            cfg.caps.sigma_x_min = cfg.noise.sigma_w;
            cfg.caps.sigma_y_min = cfg.noise.sigma_v;
        }
        read_cov(o, "sigma_x_max", cfg.caps.sigma_x_max, n);
        read_cov(o, "sigma_y_max", cfg.caps.sigma_y_max, p);
        read_cov(o, "sigma_x_min", cfg.caps.sigma_x_min, n);
        read_cov(o, "sigma_y_min", cfg.caps.sigma_y_min, p);
        read(o, "epsilon", cfg.caps.epsilon);
        read(o, "disable_cap", cfg.caps.disable_cap);
        if (o.contains("cap_rule")) cfg.caps.rule = parse_cap_rule(o.at("cap_rule").get<std::string>());
        if (o.contains("state_box")) cfg.state_box = box_from_json(o.at("state_box"));
        read_cov(o, "prior_sigma_init", cfg.prior_sigma_init, n);
        read(o, "anchor_initial_uncertainty", cfg.anchor_initial_uncertainty);
        if (o.contains("solver")) {
            const auto &s = o.at("solver");
            read(s, "kkt_tolerance", cfg.solver.kkt_tolerance);
            read(s, "max_iterations", cfg.solver.max_iterations);
            read(s, "barrier_initial", cfg.solver.barrier_initial);
            read(s, "barrier_final", cfg.solver.barrier_final);
            read(s, "barrier_factor", cfg.solver.barrier_factor);
            read(s, "damping_initial", cfg.solver.damping_initial);
            read(s, "damping_factor", cfg.solver.damping_factor);
            read(s, "freeze_weights_per_iteration", cfg.solver.freeze_weights_per_iteration);
        }
    }

    if (doc.contains("constant_weights")) {
        const auto &o = doc.at("constant_weights");
        read_cov(o, "prior_sigma", spec.constant_weights.prior_sigma, n);
        read_cov(o, "sigma_x", spec.constant_weights.sigma_x, n);
        read_cov(o, "sigma_y", spec.constant_weights.sigma_y, p);
    }

    if (doc.contains("training")) {
        const auto &o = doc.at("training");
        read(o, "starts", spec.training.hyper.starts);
        read(o, "max_iterations", spec.training.hyper.max_iterations);
        read(o, "gradient_tolerance", spec.training.hyper.gradient_tolerance);
    }

    if (doc.contains("ut")) {
        const auto &o = doc.at("ut");
        read(o, "alpha", spec.ut.alpha);
        read(o, "beta", spec.ut.beta);
        read(o, "kappa", spec.ut.kappa);
    }

    if (doc.contains("filter_covariance")) spec.filter_covariance = covariance_from_json(doc.at("filter_covariance"), n);

    spec.validate();
    return spec;
}

json to_json(const ExperimentSpec &spec) {
    json doc;
    doc["system"] = spec.system;
    doc["seed"] = spec.seed;
    doc["threads"] = spec.threads;
    doc["estimators"] = spec.estimators;

    json initial = json::array();
    for (const auto &x : spec.offline.initial_states) initial.push_back(vector_to_json(x));
    doc["offline"] = {{"initial_states", initial},
                      {"steps", spec.offline.steps},
                      {"sigma_w", matrix_to_json(spec.offline.sigma_w)},
                      {"sigma_v", matrix_to_json(spec.offline.sigma_v)}};

    doc["online"] = {{"steps", spec.online.steps},
                     {"runs", spec.online.runs},
                     {"initial_box", box_to_json(spec.online.initial_box)},
                     {"initial_estimate", vector_to_json(spec.online.initial_estimate)}};

    const auto &cfg = spec.mhe;
    doc["mhe"] = {{"horizon", cfg.horizon},
                  {"discount", cfg.discount},
                  {"sigma_w", matrix_to_json(cfg.noise.sigma_w)},
                  {"sigma_v", matrix_to_json(cfg.noise.sigma_v)},
                  {"sigma_x_max", matrix_to_json(cfg.caps.sigma_x_max)},
                  {"sigma_y_max", matrix_to_json(cfg.caps.sigma_y_max)},
                  {"sigma_x_min", matrix_to_json(cfg.caps.sigma_x_min)},
                  {"sigma_y_min", matrix_to_json(cfg.caps.sigma_y_min)},
                  {"epsilon", cfg.caps.epsilon},
                  {"disable_cap", cfg.caps.disable_cap},
                  {"cap_rule", cfg.caps.rule == CapRule::kExact ? "exact" : "gershgorin"},
                  {"state_box", box_to_json(cfg.state_box)},
                  {"prior_sigma_init", matrix_to_json(cfg.prior_sigma_init)},
                  {"anchor_initial_uncertainty", cfg.anchor_initial_uncertainty},
                  {"solver",
                   {{"kkt_tolerance", cfg.solver.kkt_tolerance},
                    {"max_iterations", cfg.solver.max_iterations},
                    {"barrier_initial", cfg.solver.barrier_initial},
                    {"barrier_final", cfg.solver.barrier_final},
                    {"barrier_factor", cfg.solver.barrier_factor},
                    {"damping_initial", cfg.solver.damping_initial},
                    {"damping_factor", cfg.solver.damping_factor},
                    {"freeze_weights_per_iteration", cfg.solver.freeze_weights_per_iteration}}}};

    doc["constant_weights"] = {{"prior_sigma", matrix_to_json(spec.constant_weights.prior_sigma)},
                               {"sigma_x", matrix_to_json(spec.constant_weights.sigma_x)},
                               {"sigma_y", matrix_to_json(spec.constant_weights.sigma_y)}};
    doc["training"] = {{"starts", spec.training.hyper.starts},
                       {"max_iterations", spec.training.hyper.max_iterations},
                       {"gradient_tolerance", spec.training.hyper.gradient_tolerance}};
    doc["ut"] = {{"alpha", spec.ut.alpha}, {"beta", spec.ut.beta}, {"kappa", spec.ut.kappa}};
    if (spec.filter_covariance) doc["filter_covariance"] = matrix_to_json(*spec.filter_covariance);
    return doc;
}

ExperimentSpec load_spec(const std::string &path) {
    if (path.empty()) return default_spec("reactor1");
    return spec_from_json(read_json_file(path));
}

}  // namespace gpmhe
