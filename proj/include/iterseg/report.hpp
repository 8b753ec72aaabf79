#pragma once

// JSON report and trace serialization shared by the CLI and the tests.
// Schema: {scan, direction, instances: [...], aggregates: {...}, versions: {...}}.

#include <json.hpp>

#include <string>
#include <vector>

#include "iterseg/metrics.hpp"
#include "iterseg/traversal.hpp"

namespace iterseg {

inline constexpr const char* kToolName = "iterseg";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json versions_json() {
    return {{"tool", kToolName}, {"tool_version", kToolVersion}, {"report_schema", kReportSchemaVersion}};
}

/// Report for a segmentation run: one entry per emitted instance, straight
/// from the vertebra records; no reference-dependent fields.
inline nlohmann::json segmentation_report(const std::string& scan, Direction direction,
                                          const std::vector<VertebraRecord>& records) {
    nlohmann::json instances = nlohmann::json::array();
    std::size_t complete_count = 0;
    for (const auto& r : records) {
        instances.push_back({{"id", r.instance_id},
                             {"label", r.final_label},
                             {"raw_label_value", r.raw_label_value},
                             {"completeness_prob", r.completeness_prob},
                             {"complete", r.complete},
                             {"converged_center", {r.converged_center.x, r.converged_center.y,
                                                   r.converged_center.z}},
                             {"n_iterations", r.n_iterations},
                             {"forced_midpoint", r.forced_midpoint}});
        complete_count += r.complete;
    }
    return {{"scan", scan},
            {"direction", to_string(direction)},
            {"instances", instances},
            {"aggregates", {{"instances", records.size()}, {"complete_instances", complete_count}}},
            {"versions", versions_json()}};
}

/// Report for an evaluation run: one entry per reference instance plus the
/// aggregate metric block.
inline nlohmann::json evaluation_report(const std::string& scan, const ScanReport& report) {
    nlohmann::json instances = nlohmann::json::array();
    for (const auto& r : report.instances) {
        nlohmann::json item{{"id", r.ref_id},
                            {"ref_label", r.ref_label},
                            {"ref_complete", r.ref_complete},
                            {"complete", r.predicted_complete},
                            {"identified", r.identified},
                            {"dice", r.dice}};
        item["label"] = r.auto_label ? nlohmann::json(*r.auto_label) : nlohmann::json();
        if (r.assd_mm) item["assd"] = *r.assd_mm;
        instances.push_back(std::move(item));
    }
    nlohmann::json aggregates{{"dice_mean", report.dice_agg.mean},
                              {"dice_sd", report.dice_agg.sd},
                              {"dice_count", report.dice_agg.count},
                              {"assd_mean", report.assd_agg.mean},
                              {"assd_sd", report.assd_agg.sd},
                              {"assd_count", report.assd_agg.count},
                              {"identification_accuracy", report.identification_accuracy},
                              {"completeness_accuracy", report.completeness_accuracy},
                              {"completeness_fp", report.completeness_fp},
                              {"completeness_fn", report.completeness_fn}};
    if (report.kappa) aggregates["kappa"] = *report.kappa;
    return {{"scan", scan},
            {"direction", "unspecified"},
            {"instances", instances},
            {"aggregates", aggregates},
            {"versions", versions_json()}};
}

/// One JSON object per traversal iteration, newline-delimited.
inline std::string trace_jsonl(const std::vector<TraceEntry>& trace) {
    std::string out;
    for (const auto& row : trace) {
        nlohmann::json j{{"t", row.t},
                         {"x", {row.x.x, row.x.y, row.x.z}},
                         {"v", row.v},
                         {"phase", to_string(row.phase)},
                         {"converged", row.converged},
                         {"forced_midpoint", row.forced_midpoint},
                         {"memory_voxels", row.memory_voxels}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace iterseg
