// gpmhe: data generation, training, estimation, benchmarks and stability analysis.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gpmhe/experiment_config.hpp"
#include "gpmhe/io.hpp"

namespace fs = std::filesystem;
using namespace gpmhe;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::string estimator;
    std::string out = ".";
    std::string model;
    std::string data;
};

void add_common(CLI::App *cmd, CommonOptions &opt) {
    cmd->add_option("--config", opt.config, "experiment config JSON");
    cmd->add_option("--seed", opt.seed, "RNG seed");
    cmd->add_option("--runs", opt.runs, "Monte Carlo runs");
    cmd->add_option("--estimator", opt.estimator, "estimator name (comma-separated for benchmark)");
    cmd->add_option("--out", opt.out, "output directory");
}

ExperimentSpec resolve_spec(const CommonOptions &opt) {
    ExperimentSpec spec = load_spec(opt.config);
    if (opt.seed) spec.seed = *opt.seed;
    if (opt.runs) spec.online.runs = *opt.runs;
    if (!opt.estimator.empty()) {
        spec.estimators.clear();
        std::stringstream ss(opt.estimator);
        for (std::string name; std::getline(ss, name, ',');) spec.estimators.push_back(name);
    }
    spec.validate();
    return spec;
}

std::ofstream open_out(const CommonOptions &opt, const std::string &name) {
    fs::create_directories(opt.out);
    const auto path = fs::path(opt.out) / name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::cout << "wrote " << path.string() << '\n';
    return out;
}

RegressionDataset obtain_data(const CommonOptions &opt, const ExperimentSpec &spec, const TruthModel &truth) {
    if (opt.data.empty()) return generate_offline_data(spec, truth, spec.seed);
    std::ifstream in(opt.data);
    if (!in) throw std::runtime_error("cannot read " + opt.data);
    return read_dataset_csv(in);
}

LearnedDynamics obtain_model(const CommonOptions &opt, const ExperimentSpec &spec, const TruthModel &truth) {
    if (!opt.model.empty()) return learned_dynamics_from_json(read_json_file(opt.model));
    return train_model(spec, obtain_data(opt, spec, truth));
}

RunRecord realization(const ExperimentSpec &spec, const TruthModel &truth, int run) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(run)};
    std::mt19937_64 rng(seq);
    const Box &box = spec.online.initial_box;
    Vector x0(box.lo.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = std::uniform_real_distribution<double>(box.lo[i], box.hi[i])(rng);
    return simulate_truth(truth, x0, spec.online.steps, rng);
}

void cmd_gen_data(const CommonOptions &opt) {
    const auto spec = resolve_spec(opt);
    const auto truth = make_truth_model(spec.system);
    auto out = open_out(opt, "dataset.csv");
    write_dataset_csv(out, generate_offline_data(spec, truth, spec.seed));
}

void cmd_train(const CommonOptions &opt) {
    const auto spec = resolve_spec(opt);
    const auto truth = make_truth_model(spec.system);
    const auto model = train_model(spec, obtain_data(opt, spec, truth));
    fs::create_directories(opt.out);
    const auto path = (fs::path(opt.out) / "model.json").string();
    write_json_file(path, to_json(model));
    std::cout << "wrote " << path << '\n';
}

void cmd_estimate(const CommonOptions &opt) {
    auto spec = resolve_spec(opt);
    const std::string name = opt.estimator.empty() ? "gp_mhe" : spec.estimators.front();
    const auto truth = make_truth_model(spec.system);
    const auto model = obtain_model(opt, spec, truth);
    const auto record = realization(spec, truth, 0);
    const auto res = run_online(spec, name, model, truth, record);

    auto out = open_out(opt, "trajectory.csv");
    const auto n = record.states.cols();
    out << "t";
    for (Eigen::Index i = 0; i < n; ++i) out << ",x" << i + 1;
    for (Eigen::Index i = 0; i < n; ++i) out << ",xhat" << i + 1;
    for (Eigen::Index j = 0; j < record.outputs.cols(); ++j) out << ",y" << j + 1;
    out << '\n';
    out.precision(12);
    for (Eigen::Index t = 0; t < record.states.rows(); ++t) {
        out << t;
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << record.states(t, i);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << res.estimates(t, i);
        for (Eigen::Index j = 0; j < record.outputs.cols(); ++j) out << ',' << record.outputs(t, j);
        out << '\n';
    }
    std::cout << name << " mse " << res.mse << '\n';
}

void cmd_benchmark(const CommonOptions &opt) {
    const auto spec = resolve_spec(opt);
    const auto truth = make_truth_model(spec.system);
    const auto model = obtain_model(opt, spec, truth);
    const auto mc = monte_carlo(spec, model, truth);
    {
        auto out = open_out(opt, "summary.csv");
        mc.table.write_summary_csv(out);
    }
    {
        auto out = open_out(opt, "runs.csv");
        mc.table.write_runs_csv(out);
    }
    fs::create_directories(opt.out);
    write_json_file((fs::path(opt.out) / "results.json").string(), mc.table.to_json());
    mc.table.write_summary_csv(std::cout);
}

void cmd_analyze(const CommonOptions &opt) {
    const auto spec = resolve_spec(opt);
    const auto truth = make_truth_model(spec.system);
    const auto model = obtain_model(opt, spec, truth);

    StabilityConfig cfg;
    cfg.caps = spec.mhe.caps;
    cfg.discount = spec.mhe.discount;
    cfg.seed = spec.seed;
    const auto horizon = contraction_and_min_horizon(cfg);
    const double mu = contraction_rate(horizon.lambda, cfg.discount, spec.mhe.horizon);
    const auto alpha = estimate_alpha_max(model, *truth.model, spec.mhe.state_box, Box{}, cfg);

    auto record = realization(spec, truth, 0);
    const auto res = run_online(spec, "gp_mhe", model, truth, record);
    record.estimates = res.estimates;
    const auto report = check_pres_bound(record, model, estimator_mhe_config("gp_mhe", spec), mu, alpha.alpha);

    {
        auto out = open_out(opt, "pres_bound.csv");
        report.write_csv(out);
    }
    nlohmann::json doc = {{"lambda", horizon.lambda},
                          {"min_horizon", horizon.min_horizon},
                          {"horizon", spec.mhe.horizon},
                          {"mu", mu},
                          {"bound_applicable", report.applicable},
                          {"violations", report.violations},
                          {"alpha1", alpha.alpha1},
                          {"alpha2", alpha.alpha2},
                          {"alpha_max", alpha.alpha},
                          {"alpha_samples", alpha.samples},
                          {"alpha_is_lower_estimate", true}};
    const auto path = (fs::path(opt.out) / "analysis.json").string();
    write_json_file(path, doc);
    std::cout << "wrote " << path << '\n' << doc.dump(2) << '\n';
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"GP-based moving horizon estimation"};
    app.require_subcommand(1);
    CommonOptions opt;

    auto *gen = app.add_subcommand("gen-data", "simulate offline trajectories, write dataset.csv");
    auto *train = app.add_subcommand("train", "fit the GP model, write model.json");
    auto *est = app.add_subcommand("estimate", "single online run, write trajectory.csv");
    auto *bench = app.add_subcommand("benchmark", "Monte Carlo comparison, write summary/runs CSV and JSON");
    auto *analyze = app.add_subcommand("analyze", "minimal horizon, alpha_max and the pRES bound report");
    for (auto *cmd : {gen, train, est, bench, analyze}) add_common(cmd, opt);
    train->add_option("--data", opt.data, "dataset CSV (default: generate)");
    for (auto *cmd : {est, bench, analyze}) cmd->add_option("--model", opt.model, "model JSON (default: train)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed()) cmd_gen_data(opt);
        if (train->parsed()) cmd_train(opt);
        if (est->parsed()) cmd_estimate(opt);
        if (bench->parsed()) cmd_benchmark(opt);
        if (analyze->parsed()) cmd_analyze(opt);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
