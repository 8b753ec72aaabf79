#pragma once

// Evaluation suite: largest-overlap instance matching, Dice, average
// absolute symmetric surface distance (ASSD), identification accuracy,
// linearly weighted kappa and completeness-classification accounting.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "iterseg/distance_transform.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

class UndefinedMetricError : public std::runtime_error {
public:
    explicit UndefinedMetricError(const std::string& what) : std::runtime_error(what) {}
};

/// Each reference instance maps to the automatic instance with the largest
/// voxel overlap (ties toward the smaller auto id); no overlap → nullopt.
inline std::map<std::uint16_t, std::optional<std::uint16_t>> match_instances(const InstanceMask& reference,
                                                                             const InstanceMask& automatic) {
    if (reference.dims != automatic.dims)
        throw std::invalid_argument("match_instances: masks must share the same grid");

    std::map<std::uint16_t, std::map<std::uint16_t, std::size_t>> overlap;  // ref -> auto -> count
    for (std::size_t i = 0; i < reference.ids.size(); ++i) {
        const std::uint16_t r = reference.ids[i], a = automatic.ids[i];
        if (r != 0 && a != 0) ++overlap[r][a];
    }

    std::map<std::uint16_t, std::optional<std::uint16_t>> result;
    for (const auto& [rid, rec] : reference.records) {
        (void)rec;
        auto it = overlap.find(rid);
        if (it == overlap.end()) {
            result[rid] = std::nullopt;
            continue;
        }
        std::uint16_t best_id = 0;
        std::size_t best_count = 0;
        for (const auto& [aid, count] : it->second)  // ascending aid: strict > keeps the smaller id on ties
            if (count > best_count) {
                best_count = count;
                best_id = aid;
            }
        result[rid] = best_id;
    }
    return result;
}

inline BinaryGrid instance_binary(const InstanceMask& mask, std::uint16_t id) {
    BinaryGrid out(mask.dims, 0, mask.spacing, mask.origin);
    for (std::size_t i = 0; i < mask.ids.size(); ++i) out.values[i] = (mask.ids[i] == id) ? 1 : 0;
    return out;
}

inline double dice(const BinaryGrid& a, const BinaryGrid& b) {
    if (a.dims != b.dims) throw std::invalid_argument("dice: grids must share dims");
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const bool ia = a.values[i] != 0, ib = b.values[i] != 0;
        na += ia;
        nb += ib;
        inter += (ia && ib);
    }
    if (na + nb == 0) throw UndefinedMetricError("dice: both sets empty");
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

/// ASSD in mm: (sum of directed boundary distances a→b plus b→a) divided by
/// the total boundary voxel count. Boundaries are six-connected surfaces;
/// distances come from the exact Euclidean distance transform.
inline double assd(const BinaryGrid& a, const BinaryGrid& b) {
    if (a.dims != b.dims || a.spacing != b.spacing)
        throw std::invalid_argument("assd: grids must share dims and spacing");
    bool a_any = false, b_any = false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        a_any |= a.values[i] != 0;
        b_any |= b.values[i] != 0;
    }
    if (!a_any || !b_any) throw UndefinedMetricError("assd: empty mask");

    const auto surf_a = surface_voxels(a);
    const auto surf_b = surface_voxels(b);
    const auto dist_to_a = squared_distance_to_sites(surf_a);
    const auto dist_to_b = squared_distance_to_sites(surf_b);

    double sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < surf_a.values.size(); ++i) {
        if (surf_a.values[i]) {
            sum += std::sqrt(dist_to_b.values[i]);
            ++count;
        }
        if (surf_b.values[i]) {
            sum += std::sqrt(dist_to_a.values[i]);
            ++count;
        }
    }
    if (count == 0) throw UndefinedMetricError("assd: no boundary voxels");
    return sum / static_cast<double>(count);
}

/// Linearly weighted kappa over (true, predicted) label pairs, labels in
/// 1..n_categories; w_ij = 1 − |i−j|/(n−1).
inline double weighted_kappa(const std::vector<std::pair<int, int>>& pairs, int n_categories = 24) {
    if (pairs.empty()) throw std::invalid_argument("weighted_kappa: need at least one pair");
    if (n_categories < 1) throw std::invalid_argument("weighted_kappa: need at least one category");
    const int n = n_categories;
    std::vector<double> confusion(static_cast<std::size_t>(n) * n, 0.0);
    for (const auto& [t, p] : pairs) {
        if (t < 1 || t > n || p < 1 || p > n)
            throw std::invalid_argument("weighted_kappa: label outside 1..n_categories");
        confusion[static_cast<std::size_t>(t - 1) * n + (p - 1)] += 1.0;
    }
    const double total = static_cast<double>(pairs.size());
    std::vector<double> row(n, 0.0), col(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            row[i] += confusion[static_cast<std::size_t>(i) * n + j];
            col[j] += confusion[static_cast<std::size_t>(i) * n + j];
        }
    auto weight = [n](int i, int j) {
        return n == 1 ? 1.0 : 1.0 - std::abs(i - j) / static_cast<double>(n - 1);
    };
    double p_o = 0, p_e = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            p_o += weight(i, j) * confusion[static_cast<std::size_t>(i) * n + j] / total;
            p_e += weight(i, j) * row[i] * col[j] / (total * total);
        }
    if (p_e >= 1.0) {
        if (p_o >= 1.0 - 1e-12) return 1.0;
        throw UndefinedMetricError("weighted_kappa: chance agreement is 1");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

struct InstanceResult {
    std::uint16_t ref_id = 0;
    std::optional<std::uint16_t> auto_id;
    int ref_label = 0;
    std::optional<int> auto_label;
    bool ref_complete = true;
    bool predicted_complete = false;
    double dice = 0;                  // meaningful for reference-complete instances
    std::optional<double> assd_mm;    // absent when unmatched
    bool identified = false;
};

struct Aggregate {
    double mean = 0;
    double sd = 0;  // population standard deviation
    std::size_t count = 0;
};

struct ScanReport {
    std::vector<InstanceResult> instances;
    Aggregate dice_agg;                    // reference-complete instances
    Aggregate assd_agg;                    // matched reference-complete instances
    double identification_accuracy = 0;    // reference-complete instances
    std::optional<double> kappa;           // matched reference-complete pairs
    double completeness_accuracy = 0;      // all reference instances
    int completeness_fp = 0;               // incompletely visible classified complete
    int completeness_fn = 0;               // completely visible classified incomplete
};

namespace metrics_detail {

inline Aggregate aggregate(const std::vector<double>& xs) {
    Aggregate a;
    a.count = xs.size();
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    for (double x : xs) a.sd += (x - a.mean) * (x - a.mean);
    a.sd = std::sqrt(a.sd / static_cast<double>(xs.size()));
    return a;
}

}  // namespace metrics_detail

/// Full per-scan evaluation. Dice/ASSD/identification follow the
/// completely-visible-only rule (restricted to reference-complete
/// instances); completeness accounting covers every reference instance.
inline ScanReport evaluate_scan(const InstanceMask& reference, const InstanceMask& automatic) {
    if (reference.dims != automatic.dims || reference.spacing != automatic.spacing)
        throw std::invalid_argument("evaluate_scan: masks must share the same grid");
    const auto matches = match_instances(reference, automatic);

    ScanReport report;
    std::vector<double> dices, assds;
    std::vector<std::pair<int, int>> kappa_pairs;
    std::size_t complete_count = 0, identified_count = 0, completeness_correct = 0;

    for (const auto& [rid, rrec] : reference.records) {
        InstanceResult r;
        r.ref_id = rid;
        r.ref_label = rrec.anatomical_label;
        r.ref_complete = rrec.complete;
        r.auto_id = matches.at(rid);
        if (r.auto_id) {
            const auto& arec = automatic.records.at(*r.auto_id);
            r.auto_label = arec.anatomical_label;
            r.predicted_complete = arec.complete;
        }

        if (r.ref_complete) {
            ++complete_count;
            const auto ref_bin = instance_binary(reference, rid);
            if (r.auto_id) {
                const auto auto_bin = instance_binary(automatic, *r.auto_id);
                r.dice = dice(ref_bin, auto_bin);
                r.assd_mm = assd(ref_bin, auto_bin);
                r.identified = (*r.auto_label == r.ref_label);
                kappa_pairs.emplace_back(r.ref_label, *r.auto_label);
                assds.push_back(*r.assd_mm);
            } else {
                r.dice = 0.0;  // unmatched: Dice 0, identification failure
                r.identified = false;
            }
            dices.push_back(r.dice);
            identified_count += r.identified;
        }

        const bool correct = (r.predicted_complete == r.ref_complete);
        completeness_correct += correct;
        if (!r.ref_complete && r.predicted_complete) ++report.completeness_fp;
        if (r.ref_complete && !r.predicted_complete) ++report.completeness_fn;

        report.instances.push_back(std::move(r));
    }

    report.dice_agg = metrics_detail::aggregate(dices);
    report.assd_agg = metrics_detail::aggregate(assds);
    report.identification_accuracy =
        complete_count ? static_cast<double>(identified_count) / static_cast<double>(complete_count) : 1.0;
    report.completeness_accuracy =
        reference.records.empty()
            ? 1.0
            : static_cast<double>(completeness_correct) / static_cast<double>(reference.records.size());
    if (!kappa_pairs.empty()) {
        try {
            report.kappa = weighted_kappa(kappa_pairs);
        } catch (const UndefinedMetricError&) {
            report.kappa = std::nullopt;
        }
    }
    return report;
}

}  // namespace iterseg
