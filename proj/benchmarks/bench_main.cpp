#include "maskforge/mock_segmenter.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/prompts.hpp"
#include "maskforge/raster_ops.hpp"

#include <benchmark/benchmark.h>

using namespace maskforge;

namespace {

OracleScene scene_of_size(int side) {
    SceneGenConfig cfg;
    cfg.width = side;
    cfg.height = side;
    cfg.min_radius = side / 10;
    cfg.max_radius = side / 5;
    cfg.noise = 0.0;
    return generate_scene(7, "bench", cfg);
}

void bm_distance_transform(benchmark::State& state) {
    const OracleScene scene = scene_of_size(int(state.range(0)));
    const BinaryMask& mask = scene.shapes.front().mask;
    for (auto _ : state) {
        benchmark::DoNotOptimize(distance_transform(mask));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(mask.size()));
}
BENCHMARK(bm_distance_transform)->Arg(64)->Arg(256)->Arg(1024);

void bm_connected_components(benchmark::State& state) {
    const OracleScene scene = scene_of_size(int(state.range(0)));
    BinaryMask all(scene.width, scene.height);
    for (const auto& s : scene.shapes) {
        all = mask_or(all, s.mask);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(connected_components(all));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(all.size()));
}
BENCHMARK(bm_connected_components)->Arg(64)->Arg(256)->Arg(1024);

void bm_excavate(benchmark::State& state) {
    const OracleScene scene = scene_of_size(int(state.range(0)));
    const MockSegmenter mock({scene});
    const ImageEmbedding emb = mock.embed(render_scene(scene));
    const BinaryMask coarse = erode(scene.shapes.front().mask, 2);
    const ExcavationConfig cfg;
    const GridSize grid = mock.prompt_grid(scene.width, scene.height);
    for (auto _ : state) {
        benchmark::DoNotOptimize(excavate(coarse, emb, cfg, grid));
    }
}
BENCHMARK(bm_excavate)->Arg(96)->Arg(256);

void bm_refine_instance(benchmark::State& state) {
    const OracleScene scene = scene_of_size(96);
    const MockSegmenter mock({scene});
    const ImageEmbedding emb = mock.embed(render_scene(scene));
    const BinaryMask coarse = erode(scene.shapes.front().mask, 2);
    RefineConfig cfg;
    cfg.iterations = int(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(refine_instance(emb, coarse, cfg, mock));
    }
}
BENCHMARK(bm_refine_instance)->Arg(1)->Arg(3);

} // namespace
BENCHMARK_MAIN();
