#pragma once

#include "latreg/inference.hpp"
#include "latreg/linear.hpp"
#include "latreg/nonlinear.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace latreg {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

nlohmann::json to_json(const GaussianPrior& p);
nlohmann::json to_json(const LinearEstimate& e);
nlohmann::json to_json(const TauEstimate& e);
nlohmann::json to_json(const BootstrapResult& r);
nlohmann::json to_json(const DiagnosticReport& r);

struct EstimateEntry {
    LinearEstimate estimate;
    std::optional<BootstrapResult> bootstrap;
};

// One run of the CLI: provenance (version, input content digest, command
// echo), the requested estimates with their bootstraps, diagnostics when
// asked for, timing unless suppressed.
struct RunReport {
    std::string command;
    std::string input_digest;
    std::vector<EstimateEntry> estimates;
    std::vector<DiagnosticReport> diagnostics;
    std::optional<double> timing_ms;

    nlohmann::json to_json() const;
};

nlohmann::json error_json(const std::string& type, const std::string& message);

} // namespace latreg
