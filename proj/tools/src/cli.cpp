#include "maskforge/harness/cli.hpp"

#include "maskforge/error.hpp"
#include "maskforge/harness/config.hpp"
#include "maskforge/harness/dataset.hpp"
#include "maskforge/harness/defects.hpp"
#include "maskforge/harness/fixtures.hpp"
#include "maskforge/harness/image_io.hpp"
#include "maskforge/metrics.hpp"
#include "maskforge/mock_segmenter.hpp"
#include "maskforge/neural_segmenter.hpp"
#include "maskforge/parallel.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/random.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>

namespace maskforge {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config;
    std::string backend;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out;
};

struct Context {
    HarnessConfig cfg;
    int jobs = 1;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::string backend_spec;
    std::ostream* log = nullptr;

    std::ostream& print() const { return *log; }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError(path.string(), "cannot write file");
    }
    f << text;
    if (!f) {
        throw IoError(path.string(), "write failed");
    }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string backend_kind(const std::string& spec) { return spec.substr(0, spec.find(':')); }

std::unique_ptr<PromptedSegmenter> make_backend(const Context& ctx) {
    const std::string& spec = ctx.backend_spec;
    if (spec.empty()) {
        throw UsageError("--backend is required for this command");
    }
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string path = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "mock") {
        return std::make_unique<MockSegmenter>(load_scenes(path));
    }
    return load_neural(path);
}

MaskSource mask_source(const std::string& path, const std::string& format, DatasetMode mode) {
    if (!format.empty()) {
        return {mask_format_from_string(format), path};
    }
    if (fs::path(path).extension() == ".json") {
        return {MaskFormat::coco_json, path};
    }
    return {mode == DatasetMode::instance ? MaskFormat::instance_pngs : MaskFormat::label_pngs, path};
}

fs::path require_out(const Context& ctx) {
    if (ctx.out.empty()) {
        throw UsageError("--out is required for this command");
    }
    fs::create_directories(ctx.out);
    return ctx.out;
}

SelectionRecord selection_record(const MultiMaskOutput& output, const BinaryMask& coarse, const BinaryMask& gt,
                                 const LoraAdaptor* adaptor) {
    SelectionRecord rec;
    rec.scores["predicted"] = output.iou_pred;
    rec.scores["coarse_iou"] = selector_scores(output, Selector::coarse_iou, {&coarse, nullptr, nullptr});
    if (adaptor != nullptr) {
        rec.scores["adapted"] = adapted_scores(output.hidden, output.iou_pred, *adaptor);
    }
    rec.gt_iou = selector_scores(output, Selector::gt_iou, {nullptr, &gt, nullptr});
    return rec;
}

InstanceRow instance_row(const std::string& image, long long id, const BinaryMask& coarse, const BinaryMask& result,
                         const BinaryMask& gt) {
    return {image, std::to_string(id), iou(coarse, gt), boundary_iou(coarse, gt), iou(result, gt),
            boundary_iou(result, gt)};
}

int max_label(const LabelMask& labels) {
    int m = 0;
    for (int v : labels.pixels()) {
        m = std::max(m, v);
    }
    return m;
}

std::string fixed(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

// refine ----------------------------------------------------------------

struct RefineArgs {
    std::string images;
    std::string coarse;
    std::string coarse_format;
    std::string gt;
    std::string gt_format;
    std::string mode = "instance";
    std::string selector;
    std::string adaptor;
};

DatasetSpec dataset_spec(const std::string& mode_name, const std::string& images, const std::string& coarse,
                         const std::string& coarse_format, const std::string& gt, const std::string& gt_format) {
    DatasetSpec spec;
    spec.mode = dataset_mode_from_string(mode_name);
    spec.image_dir = images;
    spec.coarse = mask_source(coarse, coarse_format, spec.mode);
    if (!gt.empty()) {
        spec.gt = mask_source(gt, gt_format, spec.mode);
    }
    return spec;
}

struct InstanceOutcome {
    long long id = 0;
    int category = 1;
    RefineResult result;
    std::optional<SelectionRecord> selection;
    std::optional<InstanceRow> row;
};

struct ItemOutcome {
    std::vector<InstanceOutcome> instances;
    std::optional<SemanticResult> semantic;
};

int cmd_refine(Context& ctx, const RefineArgs& args) {
    const fs::path out = require_out(ctx);
    RefineConfig cfg = ctx.cfg.refine;
    if (!args.selector.empty()) {
        cfg.selector = selector_from_string(args.selector);
    }
    std::optional<LoraAdaptor> adaptor;
    if (!args.adaptor.empty()) {
        adaptor = load_adaptor(args.adaptor);
    }
    if (cfg.selector == Selector::adapted && !adaptor) {
        throw UsageError("--selector adapted needs --adaptor");
    }
    const DatasetSpec spec =
        dataset_spec(args.mode, args.images, args.coarse, args.coarse_format, args.gt, args.gt_format);
    if (cfg.selector == Selector::gt_iou && !spec.gt) {
        throw UsageError("--selector gt_iou needs --gt");
    }
    const auto backend = make_backend(ctx);
    const std::vector<DatasetItem> items = ingest(spec);
    const LoraAdaptor* adaptor_ptr = adaptor ? &*adaptor : nullptr;

    std::vector<ItemOutcome> outcomes(items.size());
    parallel_for(items.size(), ctx.jobs, [&](std::size_t i) {
        const DatasetItem& item = items[i];
        if (spec.mode == DatasetMode::semantic) {
            if (!item.coarse_labels) {
                return;
            }
            const ImageEmbedding emb = backend->embed(item.image);
            outcomes[i].semantic = refine_semantic(emb, *item.coarse_labels, cfg, *backend, adaptor_ptr);
            return;
        }
        if (item.instances.empty()) {
            return;
        }
        const ImageEmbedding emb = backend->embed(item.image);
        for (const InstanceTarget& t : item.instances) {
            InstanceOutcome o;
            o.id = t.id;
            o.category = t.category;
            const BinaryMask* gt = t.gt ? &*t.gt : nullptr;
            o.result = refine_instance(emb, t.coarse, cfg, *backend, {gt, adaptor_ptr});
            if (gt != nullptr) {
                o.row = instance_row(item.image.id, t.id, t.coarse, o.result.refined, *gt);
                if (!o.result.iterations.empty()) {
                    o.selection = selection_record(o.result.iterations.front().output, t.coarse, *gt, adaptor_ptr);
                }
            }
            outcomes[i].instances.push_back(std::move(o));
        }
    });

    EvalReport report;
    json refinements = json::array();
    std::size_t refined_count = 0;
    std::size_t passthrough_count = 0;
    if (spec.mode == DatasetMode::instance) {
        fs::create_directories(out / "masks");
        std::vector<CocoImageMasks> coco;
        json extras = json::array();
        long long next_id = 1;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const DatasetItem& item = items[i];
            CocoImageMasks entry{item.image.id, item.image.width, item.image.height, {}};
            for (InstanceOutcome& o : outcomes[i].instances) {
                const std::string file = item.image.id + "_" + std::to_string(o.id) + ".png";
                write_mask_png((out / "masks" / file).string(), o.result.refined);
                entry.masks.push_back({next_id++, o.category, o.result.refined});
                const json chosen = o.result.passthrough() ? json(nullptr) : json(o.result.chosen_index);
                extras.push_back({{"instance", o.id},
                                  {"file", "masks/" + file},
                                  {"candidate", chosen},
                                  {"score", o.result.chosen_score}});
                refinements.push_back({{"image", item.image.id},
                                       {"instance", o.id},
                                       {"candidate", chosen},
                                       {"score", o.result.chosen_score},
                                       {"iterations", o.result.iterations.size()},
                                       {"warnings", o.result.warnings}});
                (o.result.passthrough() ? passthrough_count : refined_count) += 1;
                if (o.row) {
                    report.rows.push_back(*o.row);
                }
                if (o.selection) {
                    report.selection.push_back(std::move(*o.selection));
                }
            }
            coco.push_back(std::move(entry));
        }
        json index = coco_to_json(coco);
        for (std::size_t k = 0; k < extras.size(); ++k) {
            index["annotations"][k].update(extras[k]);
        }
        index["schema_version"] = 1;
        write_json(out / "index.json", index);
    } else {
        fs::create_directories(out / "labels");
        int classes = 1;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!outcomes[i].semantic) {
                continue;
            }
            classes = std::max(classes, max_label(outcomes[i].semantic->labels) + 1);
            classes = std::max(classes, max_label(*items[i].coarse_labels) + 1);
            if (items[i].gt_labels) {
                classes = std::max(classes, max_label(*items[i].gt_labels) + 1);
            }
        }
        MiouAccumulator refined(classes);
        MiouAccumulator coarse(classes);
        bool have_gt = false;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!outcomes[i].semantic) {
                continue;
            }
            const SemanticResult& s = *outcomes[i].semantic;
            write_label_png((out / "labels" / (items[i].image.id + ".png")).string(), s.labels);
            for (const auto* group : {&s.targets, &s.passthrough}) {
                for (const SemanticTarget& t : *group) {
                    const json chosen = t.result.passthrough() ? json(nullptr) : json(t.result.chosen_index);
                    refinements.push_back({{"image", items[i].image.id},
                                           {"class", t.class_id},
                                           {"candidate", chosen},
                                           {"score", t.result.chosen_score},
                                           {"warnings", t.result.warnings}});
                    (t.result.passthrough() ? passthrough_count : refined_count) += 1;
                }
            }
            if (items[i].gt_labels) {
                have_gt = true;
                refined.add(s.labels, *items[i].gt_labels);
                coarse.add(*items[i].coarse_labels, *items[i].gt_labels);
            }
        }
        if (have_gt) {
            report.miou = MiouResult{refined.per_class(), refined.mean()};
            report.coarse_miou = MiouResult{coarse.per_class(), coarse.mean()};
        }
    }

    json j = report_to_json(report);
    j["run"] = {{"command", "refine"},
                {"mode", args.mode},
                {"backend", backend_kind(ctx.backend_spec)},
                {"selector", to_string(cfg.selector)},
                {"adapted", adaptor.has_value()},
                {"config", config_to_json(ctx.cfg)},
                {"refinements", refinements}};
    write_json(out / "report.json", j);
    write_text(out / "report.csv", report_to_csv(report));

    ctx.print() << "refined " << refined_count << " targets, " << passthrough_count << " passed through\n";
    if (!report.rows.empty()) {
        ctx.print() << "mean IoU " << fixed(report.mean_coarse_iou()) << " -> " << fixed(report.mean_iou())
                    << ", boundary IoU " << fixed(report.mean_coarse_boundary_iou()) << " -> "
                    << fixed(report.mean_boundary_iou()) << '\n';
    }
    if (report.miou) {
        ctx.print() << "mIoU " << fixed(report.coarse_miou->mean) << " -> " << fixed(report.miou->mean) << '\n';
    }
    return 0;
}

// eval ------------------------------------------------------------------

struct EvalArgs {
    std::string images;
    std::string pred;
    std::string pred_format;
    std::string gt;
    std::string gt_format;
    std::string mode = "instance";
};

int cmd_eval(Context& ctx, const EvalArgs& args) {
    const fs::path out = require_out(ctx);
    const DatasetSpec spec = dataset_spec(args.mode, args.images, args.pred, args.pred_format, args.gt, args.gt_format);
    const std::vector<DatasetItem> items = ingest(spec);
    EvalReport report;
    if (spec.mode == DatasetMode::instance) {
        std::vector<std::vector<InstanceRow>> rows(items.size());
        parallel_for(items.size(), ctx.jobs, [&](std::size_t i) {
            for (const InstanceTarget& t : items[i].instances) {
                // Without a separate coarse input the coarse columns repeat the prediction.
                rows[i].push_back(instance_row(items[i].image.id, t.id, t.coarse, t.coarse, *t.gt));
            }
        });
        for (auto& r : rows) {
            report.rows.insert(report.rows.end(), r.begin(), r.end());
        }
    } else {
        int classes = 1;
        for (const auto& item : items) {
            if (item.coarse_labels) {
                classes = std::max({classes, max_label(*item.coarse_labels) + 1, max_label(*item.gt_labels) + 1});
            }
        }
        MiouAccumulator acc(classes);
        for (const auto& item : items) {
            if (item.coarse_labels) {
                acc.add(*item.coarse_labels, *item.gt_labels);
            }
        }
        report.miou = MiouResult{acc.per_class(), acc.mean()};
    }
    json j = report_to_json(report);
    j["run"] = {{"command", "eval"}, {"mode", args.mode}};
    write_json(out / "report.json", j);
    write_text(out / "report.csv", report_to_csv(report));
    if (report.miou) {
        ctx.print() << "mIoU " << fixed(report.miou->mean) << '\n';
    } else {
        ctx.print() << report.rows.size() << " instances, mean IoU " << fixed(report.mean_iou())
                    << ", boundary IoU " << fixed(report.mean_boundary_iou()) << '\n';
    }
    return 0;
}

// adapt-iou -------------------------------------------------------------

struct AdaptArgs {
    std::string images;
    std::string coarse;
    std::string coarse_format;
    std::string mode = "instance";
};

int cmd_adapt(Context& ctx, const AdaptArgs& args) {
    const fs::path out = require_out(ctx);
    const DatasetSpec spec = dataset_spec(args.mode, args.images, args.coarse, args.coarse_format, "", "");
    const auto backend = make_backend(ctx);
    std::vector<AdaptionImage> images;
    for (DatasetItem& item : ingest(spec)) {
        AdaptionImage a{std::move(item.image), {}};
        if (item.coarse_labels) {
            for (auto& [cls, inputs] : stm_refine_inputs(*item.coarse_labels, ctx.cfg.refine.merge)) {
                a.coarse.insert(a.coarse.end(), inputs.targets.begin(), inputs.targets.end());
            }
        }
        for (InstanceTarget& t : item.instances) {
            a.coarse.push_back(std::move(t.coarse));
        }
        images.push_back(std::move(a));
    }
    const auto modes = default_training_modes();
    const std::vector<TrainSample> samples =
        build_training_set(images, *backend, ctx.cfg.refine.excavation, modes, ctx.jobs);
    if (samples.empty()) {
        throw ConfigError("adapt-iou: no training samples (all candidates tied or no coarse masks)");
    }
    const TrainConfig& tc = ctx.cfg.train;
    const LoraAdaptor adaptor = train(samples, tc);
    const LoraAdaptor zero = LoraAdaptor::zero(adaptor.hidden_dim, tc.rank, tc.scale);
    const double before = mean_ranking_loss(samples, zero, tc.margin);
    const double after = mean_ranking_loss(samples, adaptor, tc.margin);
    save_adaptor((out / "adaptor.json").string(), adaptor);
    write_json(out / "adapt_report.json", {{"schema_version", 1},
                                           {"samples", samples.size()},
                                           {"loss_before", before},
                                           {"loss_after", after},
                                           {"train", config_to_json(ctx.cfg)["train"]}});
    ctx.print() << "trained on " << samples.size() << " samples, ranking loss " << fixed(before) << " -> "
                << fixed(after) << '\n';
    return 0;
}

// simulate-defects ------------------------------------------------------

struct DefectArgs {
    std::string images;
    std::string gt;
    std::string gt_format;
};

int cmd_simulate(Context& ctx, const DefectArgs& args) {
    const fs::path out = require_out(ctx);
    const DefectSpec& ds = ctx.cfg.defects;
    MaskSource source = mask_source(args.gt, args.gt_format, DatasetMode::instance);
    const DatasetMode mode = source.format == MaskFormat::label_pngs ? DatasetMode::semantic : DatasetMode::instance;
    const std::vector<DatasetItem> items = ingest({mode, args.images, source, std::nullopt});

    struct Defected {
        long long id = 0;
        int category = 1;
        std::optional<BinaryMask> mask;
        double iou = 0.0;
    };
    std::vector<std::vector<Defected>> results(items.size());
    parallel_for(items.size(), ctx.jobs, [&](std::size_t i) {
        const DatasetItem& item = items[i];
        std::vector<MaskRecord> records;
        if (item.coarse_labels) {
            records = read_instance_masks({MaskFormat::label_pngs, source.path}, item.image.id, item.image.width,
                                          item.image.height);
        }
        for (const InstanceTarget& t : item.instances) {
            records.push_back({t.id, t.category, t.coarse});
        }
        for (const MaskRecord& r : records) {
            Defected d{r.id, r.category, std::nullopt, 0.0};
            const std::uint64_t stream = defect_stream(item.image.id, r.id);
            if (!drop_instance(ds, stream)) {
                d.mask = simulate_defects(r.mask, ds, stream);
                d.iou = iou(*d.mask, r.mask);
            }
            results[i].push_back(std::move(d));
        }
    });

    json rows = json::array();
    double total = 0.0;
    std::size_t kept = 0;
    std::vector<CocoImageMasks> coco;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const DatasetItem& item = items[i];
        CocoImageMasks entry{item.image.id, item.image.width, item.image.height, {}};
        LabelMask labels(item.image.width, item.image.height, 0);
        for (const Defected& d : results[i]) {
            rows.push_back({{"image", item.image.id},
                            {"instance", d.id},
                            {"dropped", !d.mask},
                            {"iou", d.mask ? json(d.iou) : json(nullptr)}});
            if (!d.mask) {
                continue;
            }
            total += d.iou;
            ++kept;
            switch (source.format) {
            case MaskFormat::instance_pngs:
                write_mask_png((out / (item.image.id + "_" + std::to_string(d.id) + ".png")).string(), *d.mask);
                break;
            case MaskFormat::coco_json:
                entry.masks.push_back({d.id, d.category, *d.mask});
                break;
            case MaskFormat::label_pngs:
                for (std::size_t p = 0; p < labels.size(); ++p) {
                    if ((*d.mask)[p] != 0) {
                        labels[p] = static_cast<int>(d.id);
                    }
                }
                break;
            }
        }
        if (source.format == MaskFormat::label_pngs && item.coarse_labels) {
            write_label_png((out / (item.image.id + ".png")).string(), labels);
        }
        coco.push_back(std::move(entry));
    }
    if (source.format == MaskFormat::coco_json) {
        write_json(out / "coarse.json", coco_to_json(coco));
    }
    const double mean = kept == 0 ? 0.0 : total / double(kept);
    write_json(out / "defects.json",
               {{"schema_version", 1}, {"instances", rows}, {"mean_iou", mean}, {"defects", config_to_json(ctx.cfg)["defects"]}});
    ctx.print() << "defected " << kept << " of " << rows.size() << " masks, mean IoU " << fixed(mean) << '\n';
    return 0;
}

// backend-check ---------------------------------------------------------

struct CheckArgs {
    std::string fixtures;
    bool record = false;
    std::string images;
    std::string coarse;
    std::string coarse_format;
};

std::vector<std::string> fixture_files(const std::string& path) {
    if (!fs::is_directory(path)) {
        if (!fs::exists(path)) {
            throw IoError(path, "fixture path does not exist");
        }
        return {path};
    }
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file() && e.path().extension() == ".json") {
            files.push_back(e.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_backend_check(Context& ctx, const CheckArgs& args) {
    const auto backend = make_backend(ctx);
    const Capabilities caps = backend->capabilities();
    ctx.print() << "backend " << backend_kind(ctx.backend_spec) << " ok: " << caps.num_candidates
                << " candidates, hidden " << caps.hidden_dim << ", embedding channels " << caps.embedding_channels
                << '\n';

    if (args.record) {
        const fs::path out = require_out(ctx);
        const DatasetSpec spec = dataset_spec("instance", args.images, args.coarse, args.coarse_format, "", "");
        std::size_t n = 0;
        for (const DatasetItem& item : ingest(spec)) {
            if (item.instances.empty()) {
                continue;
            }
            const ImageEmbedding emb = backend->embed(item.image);
            const GridSize grid = backend->prompt_grid(item.image.width, item.image.height);
            for (const InstanceTarget& t : item.instances) {
                const PromptSet prompts = excavate(t.coarse, emb, ctx.cfg.refine.excavation, grid);
                const std::string name = item.image.id + "_" + std::to_string(t.id);
                save_fixture((out / "fixtures").string(), record_fixture(*backend, item.image, prompts, name));
                ++n;
            }
        }
        ctx.print() << "recorded " << n << " fixtures\n";
        return 0;
    }
    if (args.fixtures.empty()) {
        return 0;
    }

    const std::vector<std::string> files = fixture_files(args.fixtures);
    std::vector<ParityResult> results(files.size());
    parallel_for(files.size(), ctx.jobs,
                 [&](std::size_t i) { results[i] = check_fixture(*backend, load_fixture(files[i])); });
    bool ok = true;
    for (const ParityResult& r : results) {
        ok = ok && r.pass();
        ctx.print() << (r.pass() ? "PASS " : "FAIL ") << r.name << "  embedding " << r.embedding_max_abs
                    << "  logits " << r.logits_max_abs << "  iou " << r.iou_max_abs << "  hidden "
                    << r.hidden_max_abs;
        if (!r.error.empty()) {
            ctx.print() << "  (" << r.error << ")";
        }
        ctx.print() << '\n';
    }
    if (!ctx.out.empty()) {
        fs::create_directories(ctx.out);
        write_json(ctx.out / "parity.json", parity_to_json(results));
    }
    if (!ok) {
        throw BackendError("parity check failed");
    }
    return 0;
}

// synth-scenes ----------------------------------------------------------

struct SynthArgs {
    int count = 50;
    SceneGenConfig scene;
};

int cmd_synth(Context& ctx, const SynthArgs& args) {
    const fs::path out = require_out(ctx);
    const std::uint64_t seed = ctx.seed.value_or(0);
    for (const char* sub : {"images", "gt", "coarse"}) {
        fs::create_directories(out / sub);
    }
    std::vector<OracleScene> scenes(static_cast<std::size_t>(args.count));
    parallel_for(scenes.size(), ctx.jobs, [&](std::size_t i) {
        std::ostringstream id;
        id << "scene_" << std::setw(3) << std::setfill('0') << i;
        scenes[i] = generate_scene(mix64(seed, i), id.str(), args.scene);
        const OracleScene& s = scenes[i];
        write_rgb_png((out / "images" / (s.image_id + ".png")).string(), render_scene(s));
        for (const SceneShape& shape : s.shapes) {
            const std::string file = s.image_id + "_" + std::to_string(shape.id) + ".png";
            write_mask_png((out / "gt" / file).string(), shape.mask);
            const std::uint64_t stream = defect_stream(s.image_id, shape.id);
            if (!drop_instance(ctx.cfg.defects, stream)) {
                write_mask_png((out / "coarse" / file).string(), simulate_defects(shape.mask, ctx.cfg.defects, stream));
            }
        }
    });
    save_scenes((out / "scenes.json").string(), scenes);
    ctx.print() << "wrote " << scenes.size() << " scenes\n";
    return 0;
}

std::uint64_t parse_seed(const std::string& text, const char* source) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(text, &used);
        if (used == text.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw UsageError(std::string(source) + ": '" + text + "' is not an unsigned integer");
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Refine coarse segmentation masks with a promptable segmenter.", "maskforge"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);

    Globals g;
    app.add_option("--config", g.config, "JSON config with refine/train/defects sections");
    app.add_option("--backend", g.backend, "mock:<scenes.json> or neural:<manifest.json>")
        ->check([](const std::string& v) {
            return v.starts_with("mock:") || v.starts_with("neural:") ? std::string()
                                                                       : std::string("expected mock:<file> or neural:<file>");
        });
    app.add_option("--seed", g.seed, "seed for every random choice (default: $MASKFORGE_SEED)");
    app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::Range(1, 1024));
    app.add_option("--out", g.out, "output directory");

    RefineArgs refine_args;
    auto* refine = app.add_subcommand("refine", "refine coarse masks and write masks plus a report");
    refine->add_option("--images", refine_args.images, "image directory (PNG)")->required();
    refine->add_option("--coarse", refine_args.coarse, "coarse masks: directory or COCO JSON")->required();
    refine->add_option("--coarse-format", refine_args.coarse_format, "instance_pngs|label_pngs|coco_json");
    refine->add_option("--gt", refine_args.gt, "optional ground truth, same formats");
    refine->add_option("--gt-format", refine_args.gt_format, "instance_pngs|label_pngs|coco_json");
    refine->add_option("--mode", refine_args.mode, "instance|semantic")
        ->check(CLI::IsMember({"instance", "semantic"}));
    refine->add_option("--selector", refine_args.selector, "predicted|adapted|coarse_iou|gt_iou")
        ->check(CLI::IsMember({"predicted", "adapted", "coarse_iou", "gt_iou"}));
    refine->add_option("--adaptor", refine_args.adaptor, "adaptor file from adapt-iou");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--images", eval_args.images, "image directory (PNG)")->required();
    eval->add_option("--pred", eval_args.pred, "predicted masks")->required();
    eval->add_option("--pred-format", eval_args.pred_format, "instance_pngs|label_pngs|coco_json");
    eval->add_option("--gt", eval_args.gt, "ground-truth masks")->required();
    eval->add_option("--gt-format", eval_args.gt_format, "instance_pngs|label_pngs|coco_json");
    eval->add_option("--mode", eval_args.mode, "instance|semantic")->check(CLI::IsMember({"instance", "semantic"}));

    AdaptArgs adapt_args;
    auto* adapt = app.add_subcommand("adapt-iou", "train a low-rank adaptor for candidate selection");
    adapt->add_option("--images", adapt_args.images, "image directory (PNG)")->required();
    adapt->add_option("--coarse", adapt_args.coarse, "coarse masks")->required();
    adapt->add_option("--coarse-format", adapt_args.coarse_format, "instance_pngs|label_pngs|coco_json");
    adapt->add_option("--mode", adapt_args.mode, "instance|semantic")->check(CLI::IsMember({"instance", "semantic"}));

    DefectArgs defect_args;
    auto* simulate = app.add_subcommand("simulate-defects", "turn ground-truth masks into coarse ones");
    simulate->add_option("--images", defect_args.images, "image directory (PNG)")->required();
    simulate->add_option("--gt", defect_args.gt, "ground-truth masks")->required();
    simulate->add_option("--gt-format", defect_args.gt_format, "instance_pngs|label_pngs|coco_json");

    CheckArgs check_args;
    auto* check = app.add_subcommand("backend-check", "load a backend and replay parity fixtures");
    check->add_option("--fixtures", check_args.fixtures, "fixture JSON file or directory");
    check->add_flag("--record", check_args.record, "record fixtures from --images/--coarse instead");
    check->add_option("--images", check_args.images, "image directory for --record");
    check->add_option("--coarse", check_args.coarse, "coarse masks for --record");
    check->add_option("--coarse-format", check_args.coarse_format, "instance_pngs|label_pngs|coco_json");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth-scenes", "generate synthetic scenes for the mock backend");
    synth->add_option("--count", synth_args.count, "number of scenes")->check(CLI::Range(1, 100000));
    synth->add_option("--width", synth_args.scene.width, "scene width")->check(CLI::Range(8, 4096));
    synth->add_option("--height", synth_args.scene.height, "scene height")->check(CLI::Range(8, 4096));
    synth->add_flag("--nested", synth_args.scene.nested, "stack smaller shapes on a large one");
    synth->add_option("--noise", synth_args.scene.noise, "oracle score noise amplitude")->check(CLI::Range(0.0, 1.0));

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        Context ctx;
        ctx.log = &out;
        ctx.jobs = g.jobs;
        ctx.out = g.out;
        ctx.backend_spec = g.backend;
        if (g.seed) {
            ctx.seed = g.seed;
        } else if (const char* env = std::getenv("MASKFORGE_SEED"); env != nullptr && *env != '\0') {
            ctx.seed = parse_seed(env, "MASKFORGE_SEED");
        }
        if (!g.config.empty()) {
            ctx.cfg = load_config(g.config);
        }
        if (ctx.seed) {
            ctx.cfg.train.seed = *ctx.seed;
            ctx.cfg.defects.seed = *ctx.seed;
        }
        if (refine->parsed()) return cmd_refine(ctx, refine_args);
        if (eval->parsed()) return cmd_eval(ctx, eval_args);
        if (adapt->parsed()) return cmd_adapt(ctx, adapt_args);
        if (simulate->parsed()) return cmd_simulate(ctx, defect_args);
        if (check->parsed()) {
            if (check_args.record && (check_args.images.empty() || check_args.coarse.empty())) {
                throw UsageError("--record needs --images and --coarse");
            }
            return cmd_backend_check(ctx, check_args);
        }
        if (synth->parsed()) return cmd_synth(ctx, synth_args);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace maskforge
