#pragma once

#include "maskforge/raster.hpp"
#include "maskforge/segmenter.hpp"

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

enum class DatasetMode { instance, semantic };

enum class MaskFormat {
    /// Directory of `<image stem>_<id>.png`, one binary mask per instance.
    instance_pngs,
    /// Directory of `<image stem>.png` greyscale label maps.
    label_pngs,
    /// COCO-style JSON with uncompressed RLE segmentations.
    coco_json,
};

std::string to_string(DatasetMode mode);
std::string to_string(MaskFormat format);
DatasetMode dataset_mode_from_string(const std::string& name);
MaskFormat mask_format_from_string(const std::string& name);

struct MaskSource {
    MaskFormat format = MaskFormat::instance_pngs;
    std::string path;
};

struct DatasetSpec {
    DatasetMode mode = DatasetMode::instance;
    /// PNG images; the file stem is the image id.
    std::string image_dir;
    MaskSource coarse;
    std::optional<MaskSource> gt;
};

struct InstanceTarget {
    long long id = 0;
    int category = 1;
    BinaryMask coarse;
    std::optional<BinaryMask> gt;
};

struct DatasetItem {
    RgbImage image;
    /// Instance mode, ascending id.
    std::vector<InstanceTarget> instances;
    /// Semantic mode.
    std::optional<LabelMask> coarse_labels;
    std::optional<LabelMask> gt_labels;
};

/// Loads every image in `image_dir` (lexicographic by file name) with its
/// coarse targets and optional ground truth. Instance ids come from the file
/// name, the label value or the annotation id. Images without annotations
/// yield items with no targets.
///
/// Errors: IoError for missing files, DimensionError when a mask does not
/// match its image, FormatError for malformed names or RLE. Messages name the
/// offending file.
std::vector<DatasetItem> ingest(const DatasetSpec& spec);

/// Per-image masks, ascending id, from any source format.
struct MaskRecord {
    long long id = 0;
    int category = 1;
    BinaryMask mask;
};
std::vector<MaskRecord> read_instance_masks(const MaskSource& source, const std::string& image_id, int width,
                                            int height);
LabelMask read_semantic_labels(const MaskSource& source, const std::string& image_id, int width, int height);

struct CocoImageMasks {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<MaskRecord> masks;
};

/// Writes `images` as COCO-style JSON. Annotation ids are taken from the
/// records, file names are `<image_id>.png`.
nlohmann::json coco_to_json(const std::vector<CocoImageMasks>& images);

/// Sorted PNG stems in a directory. Throws IoError when it does not exist.
std::vector<std::string> list_png_stems(const std::string& dir);

} // namespace maskforge
