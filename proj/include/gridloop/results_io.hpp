#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridloop/certificates.hpp"
#include "gridloop/closed_loop.hpp"

namespace gridloop {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunMetadata {
    std::string scenario_name;
    std::uint64_t seed = 0;
    std::string plant_mode;
    std::string generator = std::string("gridloop ") + kToolVersion;
    double wall_time_s = 0.0;
};

struct ResultsBundle {
    std::string schema_version = "1.0";
    RunMetadata meta;
    std::optional<CertificateReport> certificate;
    MetricsSummary summary;
    Trajectory trajectory;               // Standard record level expected
    std::vector<std::string> node_labels;  // per-node column labels for vmag
};

enum class ResultsFormat { TableCsv, StructuredJson };

/// Column labels for the non-slack nodes, bus id plus phase letter when a
/// bus has more than one phase.
std::vector<std::string> state_node_labels(const GridModel& grid);

/// Deterministic byte output; doubles at 17 significant digits in the CSV.
void export_results(const ResultsBundle& bundle, const std::string& path,
                    ResultsFormat format);

/// In-memory variants (unit tests compare bytes without touching disk).
std::string results_to_csv(const ResultsBundle& bundle);
std::string results_to_json_text(const ResultsBundle& bundle);

/// Reload a structured-JSON results file; refuses mismatched schema majors.
ResultsBundle load_results(const std::string& path);

/// Certificate record alone, as pretty-printed JSON (the `certify` output).
std::string certificate_to_json_text(const CertificateReport& report);

}  // namespace gridloop
