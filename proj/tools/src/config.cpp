#include "maskforge/harness/config.hpp"

#include "maskforge/error.hpp"

#include <array>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace maskforge {

namespace {

using nlohmann::json;

// Reads known keys from one object and rejects whatever is left over.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + path_ + "' must be an object");
        }
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (const json* v = find(key)) {
            try {
                out = v->get<T>();
            } catch (const json::exception&) {
                throw ConfigError("config: '" + path_ + "." + key + "' has the wrong type");
            }
        }
    }

    void read(const std::string& key, IntRange& out) {
        std::array<int, 2> pair{out.lo, out.hi};
        read(key, pair);
        out = {pair[0], pair[1]};
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string child(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError("config: unknown key '" + path_ + "." + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json range_json(const IntRange& r) { return json::array({r.lo, r.hi}); }

void read_kinds(Section& s, const std::string& key, PromptKinds& kinds) {
    if (const json* v = s.find(key)) {
        Section k(*v, s.child(key));
        k.read("point", kinds.point);
        k.read("box", kinds.box);
        k.read("mask", kinds.mask);
        k.finish();
    }
}

void read_blobs(Section& s, const std::string& key, BlobSpec& blobs) {
    if (const json* v = s.find(key)) {
        Section b(*v, s.child(key));
        b.read("count", blobs.count);
        b.read("radius", blobs.radius);
        b.finish();
    }
}

} // namespace

void HarnessConfig::validate() const {
    refine.validate();
    train.validate();
    defects.validate();
}

json prompt_kinds_to_json(const PromptKinds& kinds) {
    return {{"point", kinds.point}, {"box", kinds.box}, {"mask", kinds.mask}};
}

PromptKinds prompt_kinds_from_json(const json& j) {
    PromptKinds kinds;
    Section s(j, "enabled");
    s.read("point", kinds.point);
    s.read("box", kinds.box);
    s.read("mask", kinds.mask);
    s.finish();
    return kinds;
}

json config_to_json(const HarnessConfig& cfg) {
    const ExcavationConfig& e = cfg.refine.excavation;
    const TrainConfig& t = cfg.train;
    const DefectSpec& d = cfg.defects;
    return {
        {"refine",
         {{"excavation",
           {{"lambda", e.lambda},
            {"omega", e.omega},
            {"gamma", e.gamma},
            {"sim_threshold", e.sim_threshold},
            {"expand_fraction", e.expand_fraction},
            {"max_expand_px", e.max_expand_px},
            {"expand_iters", e.expand_iters},
            {"min_negative_distance", e.min_negative_distance},
            {"enabled", prompt_kinds_to_json(e.enabled)}}},
          {"merge", {{"mu", cfg.refine.merge.mu}, {"min_region_px", cfg.refine.merge.min_region_px}}},
          {"iterations", cfg.refine.iterations},
          {"selector", to_string(cfg.refine.selector)}}},
        {"train",
         {{"lr", t.lr},
          {"batch", t.batch},
          {"epochs", t.epochs},
          {"lr_drop_steps", t.lr_drop_steps},
          {"lr_drop_factor", t.lr_drop_factor},
          {"lr_drop_reference_steps", t.lr_drop_reference_steps},
          {"margin", t.margin},
          {"rank", t.rank},
          {"scale", t.scale},
          {"init_std", t.init_std},
          {"seed", t.seed}}},
        {"defects",
         {{"seed", d.seed},
          {"boundary_noise", range_json(d.boundary_noise)},
          {"boundary_segments", d.boundary_segments},
          {"fp_blobs", {{"count", range_json(d.fp_blobs.count)}, {"radius", range_json(d.fp_blobs.radius)}}},
          {"fn_holes", {{"count", range_json(d.fn_holes.count)}, {"radius", range_json(d.fn_holes.radius)}}},
          {"drop_prob", d.drop_prob},
          {"min_iou", d.min_iou},
          {"max_iou", d.max_iou},
          {"max_retries", d.max_retries}}},
    };
}

HarnessConfig config_from_json(const json& j) {
    HarnessConfig cfg;
    Section root(j, "config");
    if (const json* r = root.find("refine")) {
        Section refine(*r, "refine");
        if (const json* e = refine.find("excavation")) {
            ExcavationConfig& x = cfg.refine.excavation;
            Section ex(*e, "refine.excavation");
            ex.read("lambda", x.lambda);
            ex.read("omega", x.omega);
            ex.read("gamma", x.gamma);
            ex.read("sim_threshold", x.sim_threshold);
            ex.read("expand_fraction", x.expand_fraction);
            ex.read("max_expand_px", x.max_expand_px);
            ex.read("expand_iters", x.expand_iters);
            ex.read("min_negative_distance", x.min_negative_distance);
            read_kinds(ex, "enabled", x.enabled);
            ex.finish();
        }
        if (const json* m = refine.find("merge")) {
            Section merge(*m, "refine.merge");
            merge.read("mu", cfg.refine.merge.mu);
            merge.read("min_region_px", cfg.refine.merge.min_region_px);
            merge.finish();
        }
        refine.read("iterations", cfg.refine.iterations);
        std::string selector = to_string(cfg.refine.selector);
        refine.read("selector", selector);
        cfg.refine.selector = selector_from_string(selector);
        refine.finish();
    }
    if (const json* t = root.find("train")) {
        TrainConfig& x = cfg.train;
        Section train(*t, "train");
        train.read("lr", x.lr);
        train.read("batch", x.batch);
        train.read("epochs", x.epochs);
        train.read("lr_drop_steps", x.lr_drop_steps);
        train.read("lr_drop_factor", x.lr_drop_factor);
        train.read("lr_drop_reference_steps", x.lr_drop_reference_steps);
        train.read("margin", x.margin);
        train.read("rank", x.rank);
        train.read("scale", x.scale);
        train.read("init_std", x.init_std);
        train.read("seed", x.seed);
        train.finish();
    }
    if (const json* d = root.find("defects")) {
        DefectSpec& x = cfg.defects;
        Section defects(*d, "defects");
        defects.read("seed", x.seed);
        defects.read("boundary_noise", x.boundary_noise);
        defects.read("boundary_segments", x.boundary_segments);
        read_blobs(defects, "fp_blobs", x.fp_blobs);
        read_blobs(defects, "fn_holes", x.fn_holes);
        defects.read("drop_prob", x.drop_prob);
        defects.read("min_iou", x.min_iou);
        defects.read("max_iou", x.max_iou);
        defects.read("max_retries", x.max_retries);
        defects.finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

HarnessConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path, "cannot open config");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace maskforge
