#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "predfuzz/fuzz_engine.hpp"

namespace predfuzz {

/// Timeout sentinel used in tables and CSV output.
inline constexpr const char* kTimeoutMark = "T.O.";
/// Unreached campaigns count as this multiple of the budget when comparing.
inline constexpr double kTimeoutFactor = 1.25;

bool operator==(const CycleReport& a, const CycleReport& b);
bool operator==(const CampaignReport& a, const CampaignReport& b);

void to_json(nlohmann::json& j, const CycleReport& c);
void from_json(const nlohmann::json& j, CycleReport& c);
void to_json(nlohmann::json& j, const CampaignReport& r);
void from_json(const nlohmann::json& j, CampaignReport& r);

/// Per-cycle CSV with a header row; locale-independent number formatting.
std::string campaign_csv(const CampaignReport& report);
/// Per-cycle gbest efficiency, gbest position and mean particle position.
std::string swarm_csv(const CampaignReport& report);
std::string summary_text(const CampaignReport& report);

/// Writes campaign.csv, swarm.csv, summary.txt and summary.json into `dir` (created if
/// missing). Throws std::runtime_error naming the failing path.
void emit_report(const CampaignReport& report, const std::filesystem::path& dir);

/// Reads summary.json back from a directory written by emit_report().
CampaignReport load_report(const std::filesystem::path& dir);

/// Executions to reach the target, or budget x kTimeoutFactor when unreached.
double executions_to_reach(const CampaignReport& report);

/// Vargha-Delaney A12 for "a is better" when lower is better:
/// P(a < b) + 0.5 P(a = b) over all pairs.
double vargha_delaney_a12(std::span<const double> a, std::span<const double> b);

struct MannWhitney {
    double u = 0.0;        ///< U statistic of sample a
    double p_value = 1.0;  ///< two-sided
    bool exact = false;
};

/// Exact null distribution when there are no ties and both samples are
/// small, normal approximation with tie correction otherwise.
MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b);

struct Comparison {
    double speedup = 0.0;  ///< mean(b) / mean(a)
    double a12 = 0.5;
    double u = 0.0;
    double p_value = 1.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
};

Comparison compare_samples(std::span<const double> a, std::span<const double> b);

/// Compares executions-to-reach; needs at least three reports per side.
Comparison compare_campaigns(std::span<const CampaignReport> a, std::span<const CampaignReport> b);

/// Every summary.json below `dir` (the directory itself or its children).
std::vector<CampaignReport> load_report_set(const std::filesystem::path& dir);

}  // namespace predfuzz
