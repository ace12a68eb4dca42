#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include "gpmhe/benchmark.hpp"

namespace gpmhe {
namespace {

Vector sample_gaussian(const Matrix &sigma, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector out(sigma.rows());
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = std::sqrt(sigma(i, i)) * normal(rng);
    return out;
}

double population_std(const std::vector<double> &values, double mean) {
    if (values.empty()) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(values.size()));
}

double mean_of(const std::vector<double> &values) {
    if (values.empty()) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc / static_cast<double>(values.size());
}

}  // namespace

const std::vector<std::string> &estimator_names() {
    static const std::vector<std::string> names = {"gp_mhe",   "gp_mhe_simple", "gp_mhe_const", "mhe_const",
                                                   "mhe_ekf", "gp_ekf",        "gp_ukf"};
    return names;
}

void ExperimentSpec::validate() const {
    if (online.runs < 1 || online.steps < 1) throw std::invalid_argument("ExperimentSpec: runs and steps must be >= 1");
    if (offline.initial_states.empty() || offline.steps < 2) {
        throw std::invalid_argument("ExperimentSpec: offline protocol needs initial states and >= 2 steps");
    }
    if (estimators.empty()) throw std::invalid_argument("ExperimentSpec: empty estimator roster");
    for (const auto &name : estimators) {
        if (std::find(estimator_names().begin(), estimator_names().end(), name) == estimator_names().end()) {
            throw std::invalid_argument("ExperimentSpec: unknown estimator '" + name + "'");
        }
    }
    online.initial_box.validate(static_cast<std::size_t>(online.initial_estimate.size()));
}

ExperimentSpec reactor1_spec() {
    const TruthModel truth = make_reactor1();
    ExperimentSpec spec;
    spec.system = "reactor1";
    spec.offline.initial_states = {Vector::Zero(2), Vector::Zero(2), Vector::Zero(2)};
    spec.offline.initial_states[0] << 3.0, 1.0;
    spec.offline.initial_states[1] << 1.0, 3.0;
    spec.offline.initial_states[2] << 2.0, 4.0;
    spec.offline.steps = 31;
    spec.offline.sigma_w = truth.noise.sigma_w;
    spec.offline.sigma_v = truth.noise.sigma_v;
    spec.online.steps = 150;
    spec.online.runs = 20;
    spec.online.initial_box = {Vector::Constant(2, 1.0), Vector::Constant(2, 3.0)};
    spec.online.initial_estimate = Vector(2);
    spec.online.initial_estimate << 0.1, 4.5;

    spec.mhe.horizon = 15;
    spec.mhe.discount = 0.91;
    spec.mhe.noise = truth.noise;
    spec.mhe.caps = UncertaintyCaps::isotropic(truth.noise, 1e5, 1e5);
    spec.mhe.state_box = truth.state_box;
    spec.mhe.prior_sigma_init = 10.0 * Matrix::Identity(2, 2);  // P = 0.1 I

    // Small prior weight, model weight well below the output weight.
    spec.constant_weights.prior_sigma = spec.mhe.prior_sigma_init;
    spec.constant_weights.sigma_x = 1e-1 * Matrix::Identity(2, 2);
    spec.constant_weights.sigma_y = truth.noise.sigma_v;
    spec.estimators = estimator_names();
    return spec;
}

ExperimentSpec reactor2_spec() {
    const TruthModel truth = make_reactor2();
    ExperimentSpec spec;
    spec.system = "reactor2";
    const double ics[][3] = {{0.5, 0.05, 0.0}, {1.5, 0.5, 0.5}, {0.5, 1.5, 1.0}, {1.0, 1.0, 1.5}};
    for (const auto &ic : ics) {
        Vector x(3);
        x << ic[0], ic[1], ic[2];
        spec.offline.initial_states.push_back(x);
    }
    spec.offline.steps = 31;
    spec.offline.sigma_w = truth.noise.sigma_w;
    spec.offline.sigma_v = truth.noise.sigma_v;
    spec.online.steps = 150;
    spec.online.runs = 10;
    spec.online.initial_box = {Vector::Constant(3, 0.5), Vector::Constant(3, 1.5)};
    spec.online.initial_estimate = Vector(3);
    spec.online.initial_estimate << 1.0, 0.0, 4.0;

    spec.mhe.horizon = 15;
    spec.mhe.discount = 0.91;
    spec.mhe.noise = truth.noise;
    spec.mhe.caps = UncertaintyCaps::isotropic(truth.noise, 1e5, 1e5);
    spec.mhe.state_box = truth.state_box;
    spec.mhe.prior_sigma_init = 10.0 * Matrix::Identity(3, 3);

    spec.constant_weights.prior_sigma = spec.mhe.prior_sigma_init;
    spec.constant_weights.sigma_x = truth.noise.sigma_w;
    spec.constant_weights.sigma_y = truth.noise.sigma_v;
    spec.estimators = {"gp_mhe", "gp_ekf", "gp_ukf"};
    return spec;
}

ExperimentSpec default_spec(const std::string &system) {
    if (system == "reactor1") return reactor1_spec();
    if (system == "reactor2") return reactor2_spec();
    throw std::invalid_argument("unknown system '" + system + "'");
}

RegressionDataset generate_offline_data(const ExperimentSpec &spec, const TruthModel &truth, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto n = static_cast<Eigen::Index>(truth.model->state_dim());
    const auto p = static_cast<Eigen::Index>(truth.model->output_dim());
    const Vector u;
    std::vector<Trajectory> trajectories;
    for (const auto &x0 : spec.offline.initial_states) {
        if (x0.size() != n) throw std::invalid_argument("generate_offline_data: initial state size");
        const Eigen::Index steps = spec.offline.steps;
        Trajectory traj{Matrix(steps, n), Matrix(steps, 0), Matrix(steps, p)};
        Vector x = x0;
        for (Eigen::Index t = 0; t < steps; ++t) {
            traj.states.row(t) = x.transpose();
            traj.outputs.row(t) = (truth.model->output(x, u) + sample_gaussian(spec.offline.sigma_v, rng)).transpose();
            x = truth.model->transition(x, u) + sample_gaussian(spec.offline.sigma_w, rng);
        }
        trajectories.push_back(std::move(traj));
    }
    return build_dataset(std::move(trajectories));
}

RunRecord simulate_truth(const TruthModel &truth, const Vector &x0, int steps, std::mt19937_64 &rng) {
    const auto n = static_cast<Eigen::Index>(truth.model->state_dim());
    const auto p = static_cast<Eigen::Index>(truth.model->output_dim());
    RunRecord rec;
    rec.states.resize(steps + 1, n);
    rec.outputs.resize(steps + 1, p);
    rec.inputs.resize(steps + 1, 0);
    rec.process_noise.resize(steps, n);
    rec.output_noise.resize(steps + 1, p);
    const Vector u;
    Vector x = x0;
    for (int t = 0; t <= steps; ++t) {
        rec.states.row(t) = x.transpose();
        const Vector v = sample_gaussian(truth.noise.sigma_v, rng);
        rec.output_noise.row(t) = v.transpose();
        rec.outputs.row(t) = (truth.model->output(x, u) + v).transpose();
        if (t < steps) {
            const Vector w = sample_gaussian(truth.noise.sigma_w, rng);
            rec.process_noise.row(t) = w.transpose();
            x = truth.model->transition(x, u) + w;
        }
    }
    if (!rec.states.allFinite()) throw NumericalError("simulate_truth: non-finite state");
    return rec;
}

MheConfig estimator_mhe_config(const std::string &name, const ExperimentSpec &spec) {
    MheConfig cfg = spec.mhe;
    if (name == "gp_mhe") {
        cfg.cost_mode = CostMode::kPropagated;
        cfg.prior_mode = PriorMode::kUncertainty;
    } else if (name == "gp_mhe_simple") {
        cfg.cost_mode = CostMode::kOneStep;
        cfg.prior_mode = PriorMode::kUncertainty;
    } else if (name == "gp_mhe_const" || name == "mhe_const" || name == "mhe_ekf") {
        cfg.cost_mode = CostMode::kConstant;
        cfg.prior_mode = name == "mhe_ekf" ? PriorMode::kEkf : PriorMode::kConstant;
        cfg.constant_sigma_x = spec.constant_weights.sigma_x;
        cfg.constant_sigma_y = spec.constant_weights.sigma_y;
        cfg.constant_prior_sigma = spec.constant_weights.prior_sigma;
        cfg.prior_sigma_init = spec.constant_weights.prior_sigma;
    } else {
        throw std::invalid_argument("estimator_mhe_config: '" + name + "' is not an MHE scheme");
    }
    return cfg;
}

std::unique_ptr<StateEstimator> make_estimator(const std::string &name, const ExperimentSpec &spec,
                                               const DynamicsModel &learned, const TruthModel &truth) {
    const Vector &x0 = spec.online.initial_estimate;
    const Matrix p0 = spec.filter_covariance.value_or(spec.mhe.prior_sigma_init);
    if (name == "gp_ekf") return std::make_unique<EkfEstimator>(learned, spec.mhe.noise, x0, p0);
    if (name == "gp_ukf") return std::make_unique<UkfEstimator>(learned, spec.mhe.noise, x0, p0, spec.ut);
    const bool exact = name == "mhe_const" || name == "mhe_ekf";
    return std::make_unique<MheDriver>(name, exact ? static_cast<const DynamicsModel &>(*truth.model) : learned,
                                       estimator_mhe_config(name, spec), x0);
}

double mse(const Matrix &states, const Matrix &estimates) {
    if (states.rows() != estimates.rows() || states.cols() != estimates.cols() || states.rows() < 2) {
        throw std::invalid_argument("mse: need matching (T+1) x n matrices with T >= 1");
    }
    const auto steps = states.rows() - 1;
    return (states.bottomRows(steps) - estimates.bottomRows(steps)).squaredNorm() /
           static_cast<double>(steps * states.cols());
}

RunResult run_online(const ExperimentSpec &spec, const std::string &estimator, const DynamicsModel &learned,
                     const TruthModel &truth, const RunRecord &record) {
    using clock = std::chrono::steady_clock;
    auto est = make_estimator(estimator, spec, learned, truth);
    const auto *mhe = dynamic_cast<const MheDriver *>(est.get());
    const bool check_weights = mhe && mhe->estimator().config().cost_mode == CostMode::kPropagated;
    const auto &caps = spec.mhe.caps;

    const int steps = static_cast<int>(record.states.rows()) - 1;
    const auto n = record.states.cols();
    RunResult res;
    res.estimator = estimator;
    res.estimates.resize(steps + 1, n);
    auto row = [](const Matrix &m, int t) { return Vector(m.row(t).transpose()); };
    std::vector<double> taus;

    Vector current = est->begin(row(record.inputs, 0), row(record.outputs, 0));
    res.estimates.row(0) = current.transpose();
    bool frozen = false;
    for (int t = 1; t <= steps; ++t) {
        if (!frozen) {
            const auto start = clock::now();
            Vector next;
            try {
                next = est->advance(row(record.inputs, t - 1), row(record.outputs, t - 1), row(record.inputs, t),
                                    row(record.outputs, t));
            } catch (const NumericalError &) {
                next = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
            }
            taus.push_back(std::chrono::duration<double>(clock::now() - start).count());
            if (next.allFinite()) {
                current = next;
            } else {
                // Diverged filter: hold the last finite estimate from here on.
                frozen = true;
                res.finite = false;
            }
            if (mhe && !frozen) {
                const auto &sol = mhe->estimator().last_solution();
                if (!sol.converged) ++res.unconverged_steps;
                if (check_weights) {
                    for (std::size_t i = 0; i < sol.weights.sigma_x.size(); ++i) {
                        ++res.weight_checks;
                        if (!inverse_sandwich(sol.weights.sigma_x[i], caps.sigma_x_min, caps.sigma_x_max) ||
                            !inverse_sandwich(sol.weights.sigma_y[i], caps.sigma_y_min, caps.sigma_y_max)) {
                            ++res.weight_violations;
                        }
                    }
                    ++res.weight_checks;
                    if (!inverse_sandwich(mhe->estimator().estimate_sigma(), caps.sigma_x_min, caps.sigma_x_max)) {
                        ++res.weight_violations;
                    }
                }
            }
        }
        res.estimates.row(t) = current.transpose();
    }
    res.mse = mse(record.states, res.estimates);
    res.tau_mean = mean_of(taus);
    res.tau_std = population_std(taus, res.tau_mean);
    return res;
}

EstimatorSummary summarize(const std::string &estimator, const std::vector<RunResult> &runs) {
    EstimatorSummary s;
    s.estimator = estimator;
    std::vector<double> mses, taus;
    for (const auto &r : runs) {
        if (r.estimator != estimator) continue;
        mses.push_back(r.mse);
        taus.push_back(r.tau_mean);
        if (r.mse > 1.0) ++s.diverged_runs;
        s.weight_violations += r.weight_violations;
    }
    s.runs = static_cast<int>(mses.size());
    s.mse_mean = mean_of(mses);
    s.mse_std = population_std(mses, s.mse_mean);
    s.tau_mean = mean_of(taus);
    s.tau_std = population_std(taus, s.tau_mean);
    return s;
}

const EstimatorSummary &ResultTable::at(const std::string &estimator) const {
    for (const auto &s : summary) {
        if (s.estimator == estimator) return s;
    }
    throw std::out_of_range("ResultTable: no estimator '" + estimator + "'");
}

void ResultTable::write_summary_csv(std::ostream &out) const {
    out << "estimator,runs,mse_mean,mse_std,diverged_runs,weight_violations,tau_mean,tau_std\n";
    out.precision(10);
    for (const auto &s : summary) {
        out << s.estimator << ',' << s.runs << ',' << s.mse_mean << ',' << s.mse_std << ',' << s.diverged_runs << ','
            << s.weight_violations << ',' << s.tau_mean << ',' << s.tau_std << '\n';
    }
}

void ResultTable::write_runs_csv(std::ostream &out) const {
    out << "estimator,run,mse,finite,unconverged_steps,weight_violations,tau_mean,tau_std\n";
    out.precision(10);
    for (const auto &r : runs) {
        out << r.estimator << ',' << r.run << ',' << r.mse << ',' << (r.finite ? 1 : 0) << ',' << r.unconverged_steps
            << ',' << r.weight_violations << ',' << r.tau_mean << ',' << r.tau_std << '\n';
    }
}

nlohmann::json ResultTable::to_json() const {
    nlohmann::json doc;
    doc["summary"] = nlohmann::json::array();
    for (const auto &s : summary) {
        doc["summary"].push_back({{"estimator", s.estimator},
                                  {"runs", s.runs},
                                  {"mse_mean", s.mse_mean},
                                  {"mse_std", s.mse_std},
                                  {"diverged_runs", s.diverged_runs},
                                  {"weight_violations", s.weight_violations},
                                  {"tau_mean", s.tau_mean},
                                  {"tau_std", s.tau_std}});
    }
    doc["runs"] = nlohmann::json::array();
    for (const auto &r : runs) {
        doc["runs"].push_back({{"estimator", r.estimator},
                               {"run", r.run},
                               {"mse", r.mse},
                               {"finite", r.finite},
                               {"unconverged_steps", r.unconverged_steps},
                               {"weight_checks", r.weight_checks},
                               {"weight_violations", r.weight_violations},
                               {"tau_mean", r.tau_mean},
                               {"tau_std", r.tau_std}});
    }
    return doc;
}

MonteCarloOutput monte_carlo(const ExperimentSpec &spec, const DynamicsModel &learned, const TruthModel &truth) {
    spec.validate();
    const int runs = spec.online.runs;
    const std::size_t roster = spec.estimators.size();
    MonteCarloOutput out;
    out.records.resize(static_cast<std::size_t>(runs));
    std::vector<RunResult> results(static_cast<std::size_t>(runs) * roster);

    auto work = [&](int r) {
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        const Box &box = spec.online.initial_box;
        Vector x0(box.lo.size());
        for (Eigen::Index i = 0; i < x0.size(); ++i) {
            x0[i] = std::uniform_real_distribution<double>(box.lo[i], box.hi[i])(rng);
        }
        auto record = simulate_truth(truth, x0, spec.online.steps, rng);
        for (std::size_t e = 0; e < roster; ++e) {
            auto res = run_online(spec, spec.estimators[e], learned, truth, record);
            res.run = r;
            results[static_cast<std::size_t>(r) * roster + e] = std::move(res);
        }
        out.records[static_cast<std::size_t>(r)] = std::move(record);
    };

    int workers = spec.threads > 0 ? spec.threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, runs);
    if (workers == 1) {
        for (int r = 0; r < runs; ++r) work(r);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::mutex error_mutex;
        for (int k = 0; k < workers; ++k) {
            pool.emplace_back([&] {
                for (int r = next++; r < runs; r = next++) {
                    try {
                        work(r);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
        for (auto &th : pool) th.join();
        if (error) std::rethrow_exception(error);
    }

    // Runs ordered by estimator, then run index.
    for (const auto &name : spec.estimators) {
        for (int r = 0; r < runs; ++r) {
            for (std::size_t e = 0; e < roster; ++e) {
                if (spec.estimators[e] == name) out.table.runs.push_back(results[static_cast<std::size_t>(r) * roster + e]);
            }
        }
        out.table.summary.push_back(summarize(name, out.table.runs));
    }
    return out;
}

LearnedDynamics train_model(const ExperimentSpec &spec, const RegressionDataset &data) {
    TrainingOptions options = spec.training;
    options.hyper.seed = spec.seed;
    return LearnedDynamics::train(data, options);
}

BenchmarkOutput run_benchmark(const ExperimentSpec &spec) {
    spec.validate();
    const TruthModel truth = make_truth_model(spec.system);
    BenchmarkOutput out;
    out.data = generate_offline_data(spec, truth, spec.seed);
    out.model = std::make_shared<LearnedDynamics>(train_model(spec, out.data));
    out.results = monte_carlo(spec, *out.model, truth);
    return out;
}

}  // namespace gpmhe
