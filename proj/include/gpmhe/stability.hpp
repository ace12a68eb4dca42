// Stability quantities for the uncertainty-weighted MHE: generalized
// eigenvalues, contraction rate and minimal horizon, model-mismatch constants
// and the practical robust exponential stability (pRES) error bound.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "gpmhe/mhe.hpp"

namespace gpmhe {

/// Largest lambda with det(p1 - lambda p2) = 0, via Cholesky whitening of p2.
double gen_eig_max(const Matrix &p1, const Matrix &p2);

struct StabilityConfig {
    UncertaintyCaps caps;
    double discount = 0.91;
    /// Points per dimension of the deterministic grid over X x U.
    int grid = 21;
    /// Latin-hypercube samples added to the grid.
    int refinements = 10000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct HorizonResult {
    double lambda = 0.0;
    int min_horizon = 0;
};

/// lambda = lambda_max(inv(S_x_min), inv(S_x_max + eps I)); the minimal
/// horizon is the smallest M >= 1 with 4 lambda eta^M < 1.
HorizonResult contraction_and_min_horizon(const StabilityConfig &cfg);

/// mu with mu^M = 4 lambda eta^M.
double contraction_rate(double lambda, double discount, int horizon);

struct AlphaMax {
    double alpha1 = 0.0;  // sup |f - mean_f|_{inv(S_x_min)}
    double alpha2 = 0.0;  // sup |h - mean_h|_{inv(S_y_min)}
    double alpha = 0.0;
    std::size_t samples = 0;
    /// Sample maximum; never larger than the true supremum.
    bool lower_estimate = true;
};

/// Grid plus Latin-hypercube maximum over the state box (and input box when
/// m > 0) of the weighted model mismatch.
AlphaMax estimate_alpha_max(const DynamicsModel &learned, const DynamicsModel &truth, const Box &state_box,
                            const Box &input_box, const StabilityConfig &cfg);

/// A simulated run with everything the bound needs.
struct RunRecord {
    Matrix states;        // (T + 1) x n, x(0..T)
    Matrix estimates;     // (T + 1) x n
    Matrix inputs;        // (T + 1) x m
    Matrix outputs;       // (T + 1) x p
    Matrix process_noise; // T x n, w(0..T-1)
    Matrix output_noise;  // (T + 1) x p, v(0..T)
};

struct PresBoundRow {
    int t = 0;
    double lhs = 0.0;
    double initial_term = 0.0;
    double w_term = 0.0;
    double v_term = 0.0;
    double alpha_term = 0.0;
    bool satisfied = true;

    double rhs() const;
};

struct PresBoundReport {
    std::vector<PresBoundRow> rows;
    double mu = 0.0;
    bool applicable = true;  // false when mu >= 1
    int violations = 0;

    void write_csv(std::ostream &out) const;
};

/// Evaluates the four-term bound along the true trajectory. Uncertainties
/// along the true trajectory restart from zero every M steps counted back from
/// t - 1 (blocks [t-M, t-1], [t-2M, t-M-1], ...), truncated at time 0.
PresBoundReport check_pres_bound(const RunRecord &run, const DynamicsModel &learned, const MheConfig &mhe,
                                 double mu, double alpha_max);

}  // namespace gpmhe
