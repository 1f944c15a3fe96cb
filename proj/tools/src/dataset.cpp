#include "maskforge/harness/dataset.hpp"

#include "maskforge/error.hpp"
#include "maskforge/harness/image_io.hpp"
#include "maskforge/rle.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

namespace fs = std::filesystem;

namespace maskforge {

namespace {

using nlohmann::json;

void require_dims(const std::string& what, int w, int h, int width, int height) {
    if (w != width || h != height) {
        throw DimensionError(what + ": mask is " + std::to_string(w) + "x" + std::to_string(h) + ", image is " +
                             std::to_string(width) + "x" + std::to_string(height));
    }
}

/// Splits `<stem>_<digits>` at the last underscore.
std::optional<std::pair<std::string, long long>> parse_instance_name(const std::string& name) {
    const auto cut = name.rfind('_');
    if (cut == std::string::npos || cut == 0 || cut + 1 == name.size() || name.size() - cut > 18) {
        return std::nullopt;
    }
    const std::string digits = name.substr(cut + 1);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    return std::make_pair(name.substr(0, cut), std::stoll(digits));
}

struct CocoImage {
    int width = 0;
    int height = 0;
    std::vector<MaskRecord> masks;
};

/// Parsed COCO file keyed by image stem.
class CocoIndex {
public:
    explicit CocoIndex(const std::string& path) : path_(path) {
        std::ifstream in(path);
        if (!in) {
            throw IoError(path, "cannot open annotation file");
        }
        json j;
        try {
            in >> j;
            parse(j);
        } catch (const json::exception& e) {
            throw FormatError(path + ": " + e.what());
        }
    }

    const CocoImage* find(const std::string& stem) const {
        const auto it = images_.find(stem);
        return it == images_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, CocoImage>& images() const { return images_; }

private:
    void parse(const json& j) {
        std::map<long long, std::string> by_id;
        for (const auto& img : j.at("images")) {
            const std::string stem = fs::path(img.at("file_name").get<std::string>()).stem().string();
            const long long id = img.at("id").get<long long>();
            if (!by_id.emplace(id, stem).second || images_.contains(stem)) {
                throw FormatError(path_ + ": duplicate image entry '" + stem + "'");
            }
            images_[stem] = {img.at("width").get<int>(), img.at("height").get<int>(), {}};
        }
        std::set<long long> seen;
        for (const auto& ann : j.value("annotations", json::array())) {
            const long long id = ann.at("id").get<long long>();
            if (!seen.insert(id).second) {
                throw FormatError(path_ + ": duplicate annotation id " + std::to_string(id));
            }
            const long long image_id = ann.at("image_id").get<long long>();
            const auto it = by_id.find(image_id);
            if (it == by_id.end()) {
                throw FormatError(path_ + ": annotation " + std::to_string(id) + " refers to unknown image " +
                                  std::to_string(image_id));
            }
            const json& seg = ann.at("segmentation");
            if (!seg.is_object() || !seg.contains("counts") || !seg.at("counts").is_array()) {
                throw FormatError(path_ + ": annotation " + std::to_string(id) +
                                  " must use uncompressed RLE segmentation");
            }
            CocoImage& image = images_.at(it->second);
            BinaryMask mask;
            try {
                mask = rle_decode(rle_from_json(seg));
            } catch (const FormatError& e) {
                throw FormatError(path_ + ": annotation " + std::to_string(id) + ": " + e.what());
            }
            require_dims(path_ + " annotation " + std::to_string(id), mask.width(), mask.height(), image.width,
                         image.height);
            image.masks.push_back({id, ann.value("category_id", 1), std::move(mask)});
        }
        for (auto& [stem, image] : images_) {
            std::sort(image.masks.begin(), image.masks.end(),
                      [](const MaskRecord& a, const MaskRecord& b) { return a.id < b.id; });
        }
    }

    std::string path_;
    std::map<std::string, CocoImage> images_;
};

/// Reads one source for many images, parsing COCO files only once.
class MaskReader {
public:
    explicit MaskReader(MaskSource source) : source_(std::move(source)) {
        if (source_.format == MaskFormat::coco_json) {
            coco_.emplace(source_.path);
        } else if (!fs::is_directory(source_.path)) {
            throw IoError(source_.path, "mask directory does not exist");
        }
    }

    const MaskSource& source() const { return source_; }

    /// Image stems the source has masks for.
    std::set<std::string> referenced_images() const {
        std::set<std::string> out;
        if (coco_) {
            for (const auto& [stem, image] : coco_->images()) {
                out.insert(stem);
            }
            return out;
        }
        for (const auto& stem : list_png_stems(source_.path)) {
            if (source_.format == MaskFormat::label_pngs) {
                out.insert(stem);
                continue;
            }
            const auto parsed = parse_instance_name(stem);
            if (!parsed) {
                throw FormatError((fs::path(source_.path) / (stem + ".png")).string() +
                                  ": expected <image>_<id>.png");
            }
            out.insert(parsed->first);
        }
        return out;
    }

    std::vector<MaskRecord> instances(const std::string& image_id, int width, int height) const {
        std::vector<MaskRecord> out;
        switch (source_.format) {
        case MaskFormat::instance_pngs:
            for (const auto& stem : list_png_stems(source_.path)) {
                const auto parsed = parse_instance_name(stem);
                if (!parsed || parsed->first != image_id) {
                    continue;
                }
                const std::string file = (fs::path(source_.path) / (stem + ".png")).string();
                BinaryMask mask = read_mask_png(file);
                require_dims(file, mask.width(), mask.height(), width, height);
                out.push_back({parsed->second, 1, std::move(mask)});
            }
            break;
        case MaskFormat::label_pngs: {
            const LabelMask labels = semantic(image_id, width, height);
            std::map<int, BinaryMask> by_label;
            for (std::size_t p = 0; p < labels.size(); ++p) {
                if (labels[p] != 0) {
                    auto [it, fresh] = by_label.try_emplace(labels[p], width, height);
                    it->second[p] = 1;
                }
            }
            for (auto& [label, mask] : by_label) {
                out.push_back({label, label, std::move(mask)});
            }
            break;
        }
        case MaskFormat::coco_json:
            if (const CocoImage* image = coco_->find(image_id)) {
                require_dims(source_.path + " image '" + image_id + "'", image->width, image->height, width, height);
                out = image->masks;
            }
            break;
        }
        std::sort(out.begin(), out.end(), [](const MaskRecord& a, const MaskRecord& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < out.size(); ++i) {
            if (out[i].id == out[i - 1].id) {
                throw FormatError(source_.path + ": duplicate instance id " + std::to_string(out[i].id) +
                                  " for image '" + image_id + "'");
            }
        }
        return out;
    }

    LabelMask semantic(const std::string& image_id, int width, int height) const {
        switch (source_.format) {
        case MaskFormat::label_pngs: {
            const std::string file = (fs::path(source_.path) / (image_id + ".png")).string();
            if (!fs::exists(file)) {
                throw IoError(file, "label map not found");
            }
            LabelMask labels = read_label_png(file);
            require_dims(file, labels.width(), labels.height(), width, height);
            return labels;
        }
        case MaskFormat::coco_json: {
            LabelMask labels(width, height, 0);
            for (const auto& rec : instances(image_id, width, height)) {
                for (std::size_t p = 0; p < labels.size(); ++p) {
                    if (rec.mask[p] != 0) {
                        labels[p] = rec.category;
                    }
                }
            }
            return labels;
        }
        case MaskFormat::instance_pngs:
            break;
        }
        throw ConfigError("semantic mode needs label_pngs or coco_json masks");
    }

private:
    MaskSource source_;
    std::optional<CocoIndex> coco_;
};

} // namespace

std::string to_string(DatasetMode mode) { return mode == DatasetMode::instance ? "instance" : "semantic"; }

std::string to_string(MaskFormat format) {
    switch (format) {
    case MaskFormat::instance_pngs:
        return "instance_pngs";
    case MaskFormat::label_pngs:
        return "label_pngs";
    case MaskFormat::coco_json:
        return "coco_json";
    }
    return "unknown";
}

DatasetMode dataset_mode_from_string(const std::string& name) {
    if (name == "instance") return DatasetMode::instance;
    if (name == "semantic") return DatasetMode::semantic;
    throw ConfigError("unknown dataset mode '" + name + "'");
}

MaskFormat mask_format_from_string(const std::string& name) {
    if (name == "instance_pngs") return MaskFormat::instance_pngs;
    if (name == "label_pngs") return MaskFormat::label_pngs;
    if (name == "coco_json") return MaskFormat::coco_json;
    throw ConfigError("unknown mask format '" + name + "'");
}

std::vector<std::string> list_png_stems(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError(dir, "directory does not exist");
    }
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            stems.push_back(entry.path().stem().string());
        }
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

std::vector<MaskRecord> read_instance_masks(const MaskSource& source, const std::string& image_id, int width,
                                            int height) {
    return MaskReader(source).instances(image_id, width, height);
}

LabelMask read_semantic_labels(const MaskSource& source, const std::string& image_id, int width, int height) {
    return MaskReader(source).semantic(image_id, width, height);
}

std::vector<DatasetItem> ingest(const DatasetSpec& spec) {
    if (spec.mode == DatasetMode::semantic && spec.coarse.format == MaskFormat::instance_pngs) {
        throw ConfigError("semantic mode needs label_pngs or coco_json masks");
    }
    const std::vector<std::string> stems = list_png_stems(spec.image_dir);
    const MaskReader coarse(spec.coarse);
    std::optional<MaskReader> gt;
    if (spec.gt) {
        gt.emplace(*spec.gt);
    }

    const std::set<std::string> known(stems.begin(), stems.end());
    const std::set<std::string> referenced = coarse.referenced_images();
    for (const auto& stem : referenced) {
        if (!known.contains(stem)) {
            throw IoError((fs::path(spec.image_dir) / (stem + ".png")).string(),
                          "image referenced by " + spec.coarse.path + " not found");
        }
    }

    std::vector<DatasetItem> items;
    for (const auto& stem : stems) {
        DatasetItem item;
        item.image = read_rgb_png((fs::path(spec.image_dir) / (stem + ".png")).string());
        item.image.id = stem;
        const int w = item.image.width;
        const int h = item.image.height;
        if (spec.mode == DatasetMode::semantic) {
            if (referenced.contains(stem)) {
                item.coarse_labels = coarse.semantic(stem, w, h);
            }
            if (gt && item.coarse_labels) {
                item.gt_labels = gt->semantic(stem, w, h);
            }
        } else {
            std::vector<MaskRecord> gt_masks;
            if (gt) {
                gt_masks = gt->instances(stem, w, h);
            }
            for (auto& rec : coarse.instances(stem, w, h)) {
                InstanceTarget target{rec.id, rec.category, std::move(rec.mask), std::nullopt};
                if (gt) {
                    const auto it = std::find_if(gt_masks.begin(), gt_masks.end(),
                                                 [&](const MaskRecord& g) { return g.id == target.id; });
                    if (it == gt_masks.end()) {
                        throw IoError(gt->source().path, "no ground truth for instance " + std::to_string(target.id) +
                                                             " of image '" + stem + "'");
                    }
                    target.gt = it->mask;
                }
                item.instances.push_back(std::move(target));
            }
        }
        items.push_back(std::move(item));
    }
    return items;
}

nlohmann::json coco_to_json(const std::vector<CocoImageMasks>& images) {
    json imgs = json::array();
    json anns = json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        const auto image_id = static_cast<long long>(i + 1);
        imgs.push_back(
            {{"id", image_id}, {"file_name", img.image_id + ".png"}, {"width", img.width}, {"height", img.height}});
        for (const auto& rec : img.masks) {
            anns.push_back({{"id", rec.id},
                            {"image_id", image_id},
                            {"category_id", rec.category},
                            {"segmentation", rle_to_json(rle_encode(rec.mask))},
                            {"area", foreground_area(rec.mask)}});
        }
    }
    return {{"images", imgs}, {"annotations", anns}};
}

} // namespace maskforge
