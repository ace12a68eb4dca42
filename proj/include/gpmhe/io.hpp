// JSON documents for fitted models. The Gram factor is never stored; it is
// recomputed from (hyperparameters, inputs, targets) on load.
#pragma once

#include <json.hpp>
#include <string>

#include "gpmhe/learned_dynamics.hpp"

namespace gpmhe {

inline constexpr const char *kGpFormat = "gpmhe.gp";
inline constexpr const char *kDynamicsFormat = "gpmhe.learned_dynamics";
inline constexpr int kFormatVersion = 1;

nlohmann::json to_json(const KernelParams &params);
KernelParams kernel_params_from_json(const nlohmann::json &doc);

nlohmann::json to_json(const GpModel &model);
GpModel gp_model_from_json(const nlohmann::json &doc);

nlohmann::json to_json(const LearnedDynamics &model);
LearnedDynamics learned_dynamics_from_json(const nlohmann::json &doc);

nlohmann::json matrix_to_json(const Matrix &m);
Matrix matrix_from_json(const nlohmann::json &doc);
nlohmann::json vector_to_json(const Vector &v);
Vector vector_from_json(const nlohmann::json &doc);

nlohmann::json read_json_file(const std::string &path);
void write_json_file(const std::string &path, const nlohmann::json &doc);

}  // namespace gpmhe
