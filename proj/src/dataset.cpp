#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "gpmhe/learned_dynamics.hpp"

namespace gpmhe {
namespace {

bool same(const Matrix &a, const Matrix &b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

}  // namespace

bool Trajectory::operator==(const Trajectory &other) const {
    return same(states, other.states) && same(inputs, other.inputs) && same(outputs, other.outputs);
}

bool RegressionDataset::operator==(const RegressionDataset &other) const {
    return trajectories == other.trajectories && same(inputs, other.inputs) &&
           same(state_targets, other.state_targets) && same(output_targets, other.output_targets) &&
           state_dim == other.state_dim && input_dim == other.input_dim &&
           output_dim == other.output_dim;
}

RegressionDataset build_dataset(std::vector<Trajectory> trajectories) {
    if (trajectories.empty()) throw std::invalid_argument("build_dataset: no trajectories");
    RegressionDataset data;
    const auto &first = trajectories.front();
    data.state_dim = static_cast<std::size_t>(first.states.cols());
    data.input_dim = static_cast<std::size_t>(first.inputs.cols());
    data.output_dim = static_cast<std::size_t>(first.outputs.cols());

    Eigen::Index pairs = 0;
    for (const auto &traj : trajectories) {
        if (static_cast<std::size_t>(traj.states.cols()) != data.state_dim ||
            static_cast<std::size_t>(traj.inputs.cols()) != data.input_dim ||
            static_cast<std::size_t>(traj.outputs.cols()) != data.output_dim) {
            throw std::invalid_argument("build_dataset: inconsistent dimensions across trajectories");
        }
        if (traj.inputs.rows() != traj.length() || traj.outputs.rows() != traj.length()) {
            throw std::invalid_argument("build_dataset: states/inputs/outputs lengths differ");
        }
        if (traj.length() < 2) throw std::invalid_argument("build_dataset: trajectory needs T >= 2");
        pairs += traj.length() - 1;
    }

    const auto n = static_cast<Eigen::Index>(data.state_dim);
    const auto m = static_cast<Eigen::Index>(data.input_dim);
    const auto p = static_cast<Eigen::Index>(data.output_dim);
    data.inputs.resize(pairs, n + m);
    data.state_targets.resize(pairs, n);
    data.output_targets.resize(pairs, p);
    Eigen::Index row = 0;
    for (const auto &traj : trajectories) {
        const Eigen::Index count = traj.length() - 1;
        data.inputs.block(row, 0, count, n) = traj.states.topRows(count);
        if (m > 0) data.inputs.block(row, n, count, m) = traj.inputs.topRows(count);
        data.state_targets.middleRows(row, count) = traj.states.bottomRows(count);
        data.output_targets.middleRows(row, count) = traj.outputs.topRows(count);
        row += count;
    }
    data.trajectories = std::move(trajectories);
    return data;
}

RegressionDataset concat(const RegressionDataset &a, const RegressionDataset &b) {
    std::vector<Trajectory> all = a.trajectories;
    all.insert(all.end(), b.trajectories.begin(), b.trajectories.end());
    return build_dataset(std::move(all));
}

void write_dataset_csv(std::ostream &out, const RegressionDataset &data) {
    out << "t";
    for (std::size_t i = 1; i <= data.state_dim; ++i) out << ",x" << i;
    for (std::size_t i = 1; i <= data.input_dim; ++i) out << ",u" << i;
    for (std::size_t i = 1; i <= data.output_dim; ++i) out << ",y" << i;
    out << ",trajectory_id\n";
    out << std::setprecision(17);
    for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
        const auto &traj = data.trajectories[k];
        for (Eigen::Index t = 0; t < traj.length(); ++t) {
            out << t;
            for (Eigen::Index i = 0; i < traj.states.cols(); ++i) out << ',' << traj.states(t, i);
            for (Eigen::Index i = 0; i < traj.inputs.cols(); ++i) out << ',' << traj.inputs(t, i);
            for (Eigen::Index i = 0; i < traj.outputs.cols(); ++i) out << ',' << traj.outputs(t, i);
            out << ',' << k << '\n';
        }
    }
}

RegressionDataset read_dataset_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("read_dataset_csv: empty input");
    std::size_t n = 0, m = 0, p = 0;
    {
        std::stringstream header(line);
        std::string col;
        while (std::getline(header, col, ',')) {
            if (!col.empty() && col.back() == '\r') col.pop_back();
            if (col.size() > 1 && col[0] == 'x') ++n;
            else if (col.size() > 1 && col[0] == 'u') ++m;
            else if (col.size() > 1 && col[0] == 'y') ++p;
        }
    }
    if (n == 0) throw std::invalid_argument("read_dataset_csv: header has no state columns");

    // trajectory id -> rows, kept in first-seen order
    std::vector<long> order;
    std::map<long, std::vector<std::vector<double>>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        if (values.size() != 2 + n + m + p) {
            throw std::invalid_argument("read_dataset_csv: wrong column count in row: " + line);
        }
        const long id = static_cast<long>(values.back());
        if (!rows.contains(id)) order.push_back(id);
        rows[id].push_back(std::move(values));
    }

    std::vector<Trajectory> trajectories;
    for (long id : order) {
        const auto &block = rows[id];
        const auto len = static_cast<Eigen::Index>(block.size());
        Trajectory traj{Matrix(len, static_cast<Eigen::Index>(n)), Matrix(len, static_cast<Eigen::Index>(m)),
                        Matrix(len, static_cast<Eigen::Index>(p))};
        for (Eigen::Index t = 0; t < len; ++t) {
            const auto &vals = block[static_cast<std::size_t>(t)];
            std::size_t c = 1;
            for (std::size_t i = 0; i < n; ++i) traj.states(t, static_cast<Eigen::Index>(i)) = vals[c++];
            for (std::size_t i = 0; i < m; ++i) traj.inputs(t, static_cast<Eigen::Index>(i)) = vals[c++];
            for (std::size_t i = 0; i < p; ++i) traj.outputs(t, static_cast<Eigen::Index>(i)) = vals[c++];
        }
        trajectories.push_back(std::move(traj));
    }
    return build_dataset(std::move(trajectories));
}

}  // namespace gpmhe
