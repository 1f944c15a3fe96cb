#include "maskforge/metrics.hpp"

#include "maskforge/raster_ops.hpp"

#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

namespace maskforge {

double iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a, b, "iou");
    long long inter = 0;
    long long uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] != 0;
        const bool y = b[i] != 0;
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

int default_boundary_width(int width, int height) {
    const double diagonal = std::sqrt(double(width) * width + double(height) * height);
    return std::max(1, static_cast<int>(std::lround(0.02 * diagonal)));
}

BinaryMask boundary_band(const BinaryMask& mask, int d) {
    if (d < 1) {
        throw ConfigError("boundary_iou: width must be >= 1");
    }
    return mask_and_not(mask, erode(mask, d));
}

double boundary_iou(const BinaryMask& a, const BinaryMask& b, int d) {
    require_same_dims(a, b, "boundary_iou");
    return iou(boundary_band(a, d), boundary_band(b, d));
}

double boundary_iou(const BinaryMask& a, const BinaryMask& b) {
    return boundary_iou(a, b, default_boundary_width(a.width(), a.height()));
}

MiouAccumulator::MiouAccumulator(int num_classes)
    : num_classes_(num_classes),
      intersection_(static_cast<std::size_t>(std::max(num_classes, 0)), 0),
      union_(static_cast<std::size_t>(std::max(num_classes, 0)), 0) {
    if (num_classes <= 0) {
        throw ConfigError("miou: num_classes must be positive");
    }
}

void MiouAccumulator::add(const LabelMask& pred, const LabelMask& gt) {
    if (!pred.same_dims(gt)) {
        throw DimensionError("miou: dimension mismatch");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        const int g = gt[i];
        if (p < 0 || p >= num_classes_ || g < 0 || g >= num_classes_) {
            throw FormatError("miou: label " + std::to_string(p < 0 || p >= num_classes_ ? p : g) +
                              " out of range [0, " + std::to_string(num_classes_) + ")");
        }
        if (p == g) {
            ++intersection_[static_cast<std::size_t>(p)];
            ++union_[static_cast<std::size_t>(p)];
        } else {
            ++union_[static_cast<std::size_t>(p)];
            ++union_[static_cast<std::size_t>(g)];
        }
    }
}

std::vector<std::optional<double>> MiouAccumulator::per_class() const {
    std::vector<std::optional<double>> out(static_cast<std::size_t>(num_classes_));
    for (std::size_t c = 0; c < out.size(); ++c) {
        if (union_[c] > 0) {
            out[c] = double(intersection_[c]) / double(union_[c]);
        }
    }
    return out;
}

double MiouAccumulator::mean() const {
    double sum = 0.0;
    int present = 0;
    for (const auto& v : per_class()) {
        if (v) {
            sum += *v;
            ++present;
        }
    }
    return present == 0 ? 0.0 : sum / present;
}

MiouResult miou(const LabelMask& pred, const LabelMask& gt, int num_classes) {
    MiouAccumulator acc(num_classes);
    acc.add(pred, gt);
    return {acc.per_class(), acc.mean()};
}

std::map<std::string, double> top1_accuracy(const std::vector<SelectionRecord>& records) {
    if (records.empty()) {
        throw ConfigError("top1_accuracy: no records");
    }
    std::map<std::string, long long> hits;
    std::map<std::string, long long> totals;
    for (const SelectionRecord& r : records) {
        if (r.gt_iou.empty()) {
            throw ConfigError("top1_accuracy: record without candidates");
        }
        const double best = *std::max_element(r.gt_iou.begin(), r.gt_iou.end());
        for (const auto& [name, scores] : r.scores) {
            if (scores.size() != r.gt_iou.size()) {
                throw DimensionError("top1_accuracy: selector '" + name + "' has wrong candidate count");
            }
            const auto chosen = static_cast<std::size_t>(
                std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
            ++totals[name];
            if (r.gt_iou[chosen] == best) {
                ++hits[name];
            }
        }
    }
    std::map<std::string, double> out;
    for (const auto& [name, total] : totals) {
        out[name] = double(hits[name]) / double(total);
    }
    return out;
}

namespace {

template <typename F>
double mean_of(const std::vector<InstanceRow>& rows, F field) {
    if (rows.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& r : rows) {
        sum += field(r);
    }
    return sum / double(rows.size());
}

nlohmann::json miou_json(const MiouResult& m) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        if (m.per_class[c]) {
            per_class[std::to_string(c)] = *m.per_class[c];
        }
    }
    return {{"per_class", per_class}, {"mean", m.mean}};
}

} // namespace

double EvalReport::mean_iou() const {
    return mean_of(rows, [](const InstanceRow& r) { return r.iou; });
}
double EvalReport::mean_boundary_iou() const {
    return mean_of(rows, [](const InstanceRow& r) { return r.boundary_iou; });
}
double EvalReport::mean_coarse_iou() const {
    return mean_of(rows, [](const InstanceRow& r) { return r.coarse_iou; });
}
double EvalReport::mean_coarse_boundary_iou() const {
    return mean_of(rows, [](const InstanceRow& r) { return r.coarse_boundary_iou; });
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["schema_version"] = EvalReport::kSchemaVersion;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"image", r.image},
                        {"instance", r.instance},
                        {"coarse_iou", r.coarse_iou},
                        {"coarse_boundary_iou", r.coarse_boundary_iou},
                        {"iou", r.iou},
                        {"boundary_iou", r.boundary_iou}});
    }
    j["instances"] = rows;
    nlohmann::json agg;
    agg["count"] = report.rows.size();
    agg["mean_iou"] = report.mean_iou();
    agg["mean_boundary_iou"] = report.mean_boundary_iou();
    agg["mean_coarse_iou"] = report.mean_coarse_iou();
    agg["mean_coarse_boundary_iou"] = report.mean_coarse_boundary_iou();
    if (!report.selection.empty()) {
        agg["top1"] = top1_accuracy(report.selection);
        agg["top1_count"] = report.selection.size();
    }
    if (report.miou) {
        agg["miou"] = miou_json(*report.miou);
    }
    if (report.coarse_miou) {
        agg["coarse_miou"] = miou_json(*report.coarse_miou);
    }
    j["aggregates"] = agg;
    return j;
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "image,instance,coarse_iou,coarse_boundary_iou,iou,boundary_iou\n";
    out << std::setprecision(9);
    for (const auto& r : report.rows) {
        out << r.image << ',' << r.instance << ',' << r.coarse_iou << ',' << r.coarse_boundary_iou << ','
            << r.iou << ',' << r.boundary_iou << '\n';
    }
    return out.str();
}

} // namespace maskforge
