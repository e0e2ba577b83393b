#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2p2g/coordinator.hpp"

namespace p2p2g {

class MissingArtifacts : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_hash(const CaseConfig& config);

void write_iteration_csv(std::ostream& out, const std::vector<IterationTrace>& trace);
/// Prosumers are written by node id.
void write_agent_csv(std::ostream& out, const CaseConfig& config, const std::vector<AgentTraceRow>& rows);
void write_doe_csv(std::ostream& out, const CaseConfig& config, const std::vector<DoeTraceRow>& rows);
void write_breakdown_csv(std::ostream& out, const CaseConfig& config, const PriceBreakdown& breakdown);
void write_decisions_csv(std::ostream& out, const CaseConfig& config, const ClearingResult& result);

nlohmann::json manifest(const CaseConfig& config, const ClearingResult& result, const std::string& case_path,
                        const RunOptions& options);
nlohmann::json integrity_json(const IntegrityReport& report);

/// Writes manifest.json, integrity.json, iterations.csv, agents.csv, doe.csv,
/// breakdown.csv (when available), decisions.csv and powerflow.csv.
void write_run(const std::filesystem::path& dir, const CaseConfig& config, const ClearingResult& result,
               const std::string& case_path, const RunOptions& options);

struct CompareRow {
    std::string metric;
    double a = 0.0;
    double b = 0.0;
    double delta = 0.0;  // b - a
};

/// Reads two run directories; throws MissingArtifacts when a manifest is absent.
std::vector<CompareRow> compare_runs(const std::filesystem::path& a, const std::filesystem::path& b);
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);
void write_compare_text(std::ostream& out, const std::vector<CompareRow>& rows);

}  // namespace p2p2g
