#include "maskforge/iou_adaption.hpp"

#include "maskforge/metrics.hpp"
#include "maskforge/parallel.hpp"
#include "maskforge/random.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace maskforge {

LoraAdaptor LoraAdaptor::zero(int hidden_dim, int rank, double scale) {
    LoraAdaptor out;
    out.hidden_dim = hidden_dim;
    out.rank = rank;
    out.scale = scale;
    out.a.assign(static_cast<std::size_t>(rank) * static_cast<std::size_t>(std::max(hidden_dim, 0)), 0.0);
    out.b.assign(static_cast<std::size_t>(rank), 0.0);
    out.validate();
    return out;
}

void LoraAdaptor::validate() const {
    if (hidden_dim <= 0 || rank <= 0 || rank > hidden_dim) {
        throw DimensionError("adaptor: need 0 < rank <= hidden_dim");
    }
    if (a.size() != static_cast<std::size_t>(rank) * hidden_dim || b.size() != static_cast<std::size_t>(rank)) {
        throw DimensionError("adaptor: weight sizes do not match rank and hidden_dim");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::isfinite(scale) || !std::all_of(a.begin(), a.end(), finite) || !std::all_of(b.begin(), b.end(), finite)) {
        throw DimensionError("adaptor: non-finite weights");
    }
}

namespace {

// A h for one hidden vector.
std::vector<double> project(const LoraAdaptor& ad, const std::vector<double>& h) {
    std::vector<double> out(static_cast<std::size_t>(ad.rank), 0.0);
    for (int r = 0; r < ad.rank; ++r) {
        const double* row = ad.a.data() + static_cast<std::size_t>(r) * ad.hidden_dim;
        double acc = 0.0;
        for (int k = 0; k < ad.hidden_dim; ++k) {
            acc += row[k] * h[static_cast<std::size_t>(k)];
        }
        out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

void check_index(std::span<const double> scores, int best) {
    if (best < 0 || static_cast<std::size_t>(best) >= scores.size()) {
        throw ConfigError("ranking loss: best index out of range");
    }
}

} // namespace

std::vector<double> adapted_scores(std::span<const std::vector<double>> hidden, std::span<const double> base,
                                   const LoraAdaptor& adaptor) {
    if (hidden.size() != base.size()) {
        throw DimensionError("adapted_scores: hidden and base score counts differ");
    }
    std::vector<double> out(base.begin(), base.end());
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (hidden[i].size() != static_cast<std::size_t>(adaptor.hidden_dim)) {
            throw DimensionError("adapted_scores: hidden dimension " + std::to_string(hidden[i].size()) +
                                 " does not match adaptor " + std::to_string(adaptor.hidden_dim));
        }
        const auto ah = project(adaptor, hidden[i]);
        double delta = 0.0;
        for (int r = 0; r < adaptor.rank; ++r) {
            delta += adaptor.b[static_cast<std::size_t>(r)] * ah[static_cast<std::size_t>(r)];
        }
        out[i] += adaptor.scale * delta;
    }
    return out;
}

double ranking_loss(std::span<const double> scores, int best, double margin) {
    check_index(scores, best);
    const double xj = scores[static_cast<std::size_t>(best)];
    double loss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(i) != best) {
            loss += std::max(0.0, scores[i] - xj + margin);
        }
    }
    return loss;
}

std::vector<double> ranking_loss_grad(std::span<const double> scores, int best, double margin) {
    check_index(scores, best);
    const double xj = scores[static_cast<std::size_t>(best)];
    std::vector<double> grad(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(i) != best && scores[i] - xj + margin > 0.0) {
            grad[i] += 1.0;
            grad[static_cast<std::size_t>(best)] -= 1.0;
        }
    }
    return grad;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        throw ConfigError("train: lr must be positive");
    }
    if (margin < 0.0) {
        throw ConfigError("train: margin must be non-negative");
    }
    if (batch <= 0 || epochs < 0 || rank <= 0 || lr_drop_reference_steps < 0) {
        throw ConfigError("train: batch and rank must be positive, epochs non-negative");
    }
}

std::vector<int> effective_drop_steps(const TrainConfig& cfg, int total_steps) {
    if (cfg.lr_drop_reference_steps <= 0) {
        return cfg.lr_drop_steps;
    }
    std::vector<int> out;
    for (int step : cfg.lr_drop_steps) {
        out.push_back(static_cast<int>(
            std::lround(double(step) * double(total_steps) / double(cfg.lr_drop_reference_steps))));
    }
    return out;
}

LoraAdaptor train(std::span<const TrainSample> samples, const TrainConfig& cfg) {
    cfg.validate();
    if (samples.empty()) {
        throw ConfigError("train: empty sample set");
    }
    const int dim = static_cast<int>(samples.front().hidden.front().size());
    for (const auto& s : samples) {
        if (s.hidden.size() != s.base_scores.size() || s.hidden.empty()) {
            throw DimensionError("train: sample hidden/base count mismatch");
        }
        for (const auto& h : s.hidden) {
            if (static_cast<int>(h.size()) != dim) {
                throw DimensionError("train: inconsistent hidden dimension");
            }
        }
        check_index(s.base_scores, s.best_index);
    }

    Rng rng(mix64(cfg.seed, 0x10aaULL));
    LoraAdaptor ad = LoraAdaptor::zero(dim, cfg.rank, cfg.scale);
    for (double& v : ad.a) {
        v = cfg.init_std * rng.normal();
    }

    const std::size_t n = samples.size();
    const int steps_per_epoch = static_cast<int>((n + static_cast<std::size_t>(cfg.batch) - 1) / cfg.batch);
    const std::vector<int> drops = effective_drop_steps(cfg, steps_per_epoch * cfg.epochs);
    std::vector<std::size_t> order(n);
    int step = 0;
    std::vector<double> grad_a(ad.a.size());
    std::vector<double> grad_b(ad.b.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) {
            order[i] = i;
        }
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.next() % i);
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
            std::fill(grad_a.begin(), grad_a.end(), 0.0);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            for (std::size_t idx = start; idx < stop; ++idx) {
                const TrainSample& s = samples[order[idx]];
                const auto scores = adapted_scores(s.hidden, s.base_scores, ad);
                const auto g = ranking_loss_grad(scores, s.best_index, cfg.margin);
                for (std::size_t c = 0; c < g.size(); ++c) {
                    if (g[c] == 0.0) {
                        continue;
                    }
                    const auto& h = s.hidden[c];
                    const auto ah = project(ad, h);
                    for (int r = 0; r < ad.rank; ++r) {
                        grad_b[static_cast<std::size_t>(r)] += g[c] * ad.scale * ah[static_cast<std::size_t>(r)];
                        const double coeff = g[c] * ad.scale * ad.b[static_cast<std::size_t>(r)];
                        double* row = grad_a.data() + static_cast<std::size_t>(r) * dim;
                        for (int k = 0; k < dim; ++k) {
                            row[k] += coeff * h[static_cast<std::size_t>(k)];
                        }
                    }
                }
            }
            double lr = cfg.lr;
            for (int d : drops) {
                if (step >= d) {
                    lr *= cfg.lr_drop_factor;
                }
            }
            const double inv = 1.0 / double(stop - start);
            for (std::size_t k = 0; k < ad.a.size(); ++k) {
                ad.a[k] -= lr * grad_a[k] * inv;
            }
            for (std::size_t k = 0; k < ad.b.size(); ++k) {
                ad.b[k] -= lr * grad_b[k] * inv;
            }
            ++step;
        }
    }
    return ad;
}

double mean_ranking_loss(std::span<const TrainSample> samples, const LoraAdaptor& adaptor, double margin) {
    if (samples.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& s : samples) {
        sum += ranking_loss(adapted_scores(s.hidden, s.base_scores, adaptor), s.best_index, margin);
    }
    return sum / double(samples.size());
}

std::vector<PromptKinds> default_training_modes() {
    return {PromptKinds::point_only(), PromptKinds::box_only(), PromptKinds::mask_only()};
}

std::vector<TrainSample> build_training_set(std::span<const AdaptionImage> images, const PromptedSegmenter& backend,
                                            const ExcavationConfig& excavation,
                                            std::span<const PromptKinds> modes, int jobs) {
    std::vector<std::vector<TrainSample>> per_image(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t idx) {
        const AdaptionImage& item = images[idx];
        const ImageEmbedding emb = backend.embed(item.image);
        const GridSize grid = backend.prompt_grid(item.image.width, item.image.height);
        for (const BinaryMask& coarse : item.coarse) {
            if (is_empty(coarse)) {
                continue;
            }
            for (const PromptKinds& mode : modes) {
                ExcavationConfig cfg = excavation;
                cfg.enabled = mode;
                const PromptSet prompts = excavate(coarse, emb, cfg, grid);
                const MultiMaskOutput out = backend.predict(emb, prompts);
                std::vector<double> coarse_iou;
                for (const auto& m : out.masks) {
                    coarse_iou.push_back(iou(m, coarse));
                }
                const auto best = std::max_element(coarse_iou.begin(), coarse_iou.end());
                const bool all_tied = std::all_of(coarse_iou.begin(), coarse_iou.end(),
                                                  [&](double v) { return v == coarse_iou.front(); });
                if (all_tied) {
                    continue;
                }
                per_image[idx].push_back(
                    {out.hidden, out.iou_pred, static_cast<int>(std::distance(coarse_iou.begin(), best))});
            }
        }
    });
    std::vector<TrainSample> out;
    for (auto& v : per_image) {
        for (auto& s : v) {
            out.push_back(std::move(s));
        }
    }
    return out;
}

nlohmann::json adaptor_to_json(const LoraAdaptor& ad) {
    return {{"format", "maskforge-lora"}, {"version", LoraAdaptor::kFormatVersion},
            {"hidden_dim", ad.hidden_dim}, {"rank", ad.rank},
            {"scale", ad.scale},           {"A", ad.a},
            {"B", ad.b}};
}

LoraAdaptor adaptor_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != LoraAdaptor::kFormatVersion) {
            throw VersionMismatchError("adaptor: unsupported version " + j.at("version").dump());
        }
        LoraAdaptor ad;
        ad.hidden_dim = j.at("hidden_dim").get<int>();
        ad.rank = j.at("rank").get<int>();
        ad.scale = j.at("scale").get<double>();
        ad.a = j.at("A").get<std::vector<double>>();
        ad.b = j.at("B").get<std::vector<double>>();
        ad.validate();
        return ad;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("adaptor: malformed json: ") + e.what());
    }
}

void save_adaptor(const std::string& path, const LoraAdaptor& adaptor) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(path, "cannot write adaptor");
    }
    out << adaptor_to_json(adaptor).dump(2) << '\n';
}

LoraAdaptor load_adaptor(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path, "cannot open adaptor");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return adaptor_from_json(j);
}

} // namespace maskforge
