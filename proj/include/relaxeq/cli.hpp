#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "relaxeq/config.hpp"
#include "relaxeq/layers.hpp"
#include "relaxeq/tasks.hpp"

namespace relaxeq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point shared by the executable and the tests.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

/// CSV "i,theta" for i = 0..N_E.
std::string schedule_csv(const ThetaSchedule& schedule);

/// {p_ee, p_pe, lie_total, per_layer_lie, intertwiner_dims, ...} for a model on held-out data.
nlohmann::json audit_report(const Model& model, const RunConfig& config, const Dataset& test);
/// Empty string when the report matches its schema, else the first problem found.
std::string validate_audit_report(const nlohmann::json& report);

}  // namespace relaxeq::cli
