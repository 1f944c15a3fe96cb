#pragma once

#include "maskforge/raster.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// |a & b| / |a | b|; 1.0 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

/// round(0.02 * image diagonal), at least 1.
int default_boundary_width(int width, int height);

/// Inner band m & !erode(m, d).
BinaryMask boundary_band(const BinaryMask& mask, int d);

double boundary_iou(const BinaryMask& a, const BinaryMask& b, int d);
double boundary_iou(const BinaryMask& a, const BinaryMask& b);

/// Dataset-level per-class IoU from accumulated intersections and unions.
class MiouAccumulator {
public:
    explicit MiouAccumulator(int num_classes);

    /// Throws FormatError on a label outside [0, num_classes).
    void add(const LabelMask& pred, const LabelMask& gt);

    int num_classes() const noexcept { return num_classes_; }
    /// IoU per class; nullopt for classes absent from both pred and gt.
    std::vector<std::optional<double>> per_class() const;
    /// Mean over present classes (0 when none are present).
    double mean() const;

private:
    int num_classes_;
    std::vector<long long> intersection_;
    std::vector<long long> union_;
};

struct MiouResult {
    std::vector<std::optional<double>> per_class;
    double mean = 0.0;
};

MiouResult miou(const LabelMask& pred, const LabelMask& gt, int num_classes);

struct SelectionRecord {
    /// Scores per selector name, one per candidate.
    std::map<std::string, std::vector<double>> scores;
    std::vector<double> gt_iou;
};

/// Fraction of records whose selector argmax (lowest index on ties) lies in
/// the ground-truth argmax set. Throws ConfigError on empty input.
std::map<std::string, double> top1_accuracy(const std::vector<SelectionRecord>& records);

struct InstanceRow {
    std::string image;
    std::string instance;
    double coarse_iou = 0.0;
    double coarse_boundary_iou = 0.0;
    double iou = 0.0;
    double boundary_iou = 0.0;
};

struct EvalReport {
    static constexpr int kSchemaVersion = 1;

    std::vector<InstanceRow> rows;
    std::vector<SelectionRecord> selection;
    std::optional<MiouResult> miou;
    std::optional<MiouResult> coarse_miou;

    double mean_iou() const;
    double mean_boundary_iou() const;
    double mean_coarse_iou() const;
    double mean_coarse_boundary_iou() const;
};

nlohmann::json report_to_json(const EvalReport& report);
/// One row per instance.
std::string report_to_csv(const EvalReport& report);

} // namespace maskforge
