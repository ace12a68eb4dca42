// JSON form of ExperimentSpec. Every key is optional; missing keys keep the
// defaults of the named system. Covariances accept a scalar (s * I), an array
// (diagonal) or a {rows, cols, data} matrix object.
#pragma once

#include <json.hpp>

#include "gpmhe/benchmark.hpp"

namespace gpmhe {

ExperimentSpec spec_from_json(const nlohmann::json &doc);
nlohmann::json to_json(const ExperimentSpec &spec);

/// Reads a config file; an empty path gives default_spec("reactor1").
ExperimentSpec load_spec(const std::string &path);

}  // namespace gpmhe
