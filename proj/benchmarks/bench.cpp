#include "skp/half.hpp"
#include "skp/lines.hpp"
#include "skp/partition.hpp"
#include "skp/patch_codec.hpp"
#include "skp/pipeline.hpp"
#include "skp/renderer.hpp"
#include "skp/rng.hpp"
#include "skp/sketch_codec.hpp"
#include "skp/synth.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace skp;

namespace {

GaussianCloud make_cloud(size_t n, int sh_degree, uint64_t seed) {
    Rng rng(seed);
    GaussianCloud cloud;
    cloud.sh_degree = sh_degree;
    cloud.splats.resize(n);
    for (auto& s : cloud.splats) {
        s.position = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                     rng.uniform(0.8, 2.5));
        for (int k = 0; k < 3; ++k) s.log_scale[k] = rng.uniform(-4.0, -2.5);
        for (int k = 0; k < 4; ++k) s.rotation[k] = rng.normal();
        s.opacity_logit = rng.uniform(-1.0, 2.0);
        for (int k = 0; k < 3; ++k) s.sh_dc[k] = rng.uniform(-1.0, 1.0);
        for (int k = 0; k < kShRestSize; ++k) s.sh_rest[k] = rng.normal(0.0, 0.1);
    }
    return cloud;
}

const SynthScene& synth_scene() {
    static const SynthScene scene = [] {
        SynthConfig cfg;
        cfg.n_lines = 4;
        cfg.splats_per_line = 400;
        cfg.free_splats = 400;
        cfg.outlier_fraction = 0.1;
        cfg.seed = 3;
        return make_synth_scene(cfg);
    }();
    return scene;
}

} // namespace

static void BM_ToHalf(benchmark::State& state) {
    Rng rng(1);
    std::vector<double> values(4096);
    for (double& v : values) v = rng.uniform(-70000.0, 70000.0);
    for (auto _ : state) {
        uint32_t acc = 0;
        for (double v : values) acc += to_half(v);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * values.size());
}
BENCHMARK(BM_ToHalf);

static void BM_ProjectToSegment(benchmark::State& state) {
    Rng rng(2);
    LineSegment3D seg;
    seg.p_start = Eigen::Vector3d(-1, -2, 0.5);
    seg.p_end = Eigen::Vector3d(2, 1, -0.5);
    std::vector<Eigen::Vector3d> points(4096);
    for (auto& p : points)
        p = Eigen::Vector3d(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    for (auto _ : state) {
        double acc = 0;
        for (const auto& p : points) acc += project_to_segment(p, seg).distance;
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * points.size());
}
BENCHMARK(BM_ProjectToSegment);

static void BM_Partition(benchmark::State& state) {
    const SynthScene& scene = synth_scene();
    PartitionConfig cfg;
    cfg.threads = static_cast<int>(state.range(0));
    for (auto _ : state) {
        PartitionResult res = partition(scene.cloud, scene.lines, cfg);
        benchmark::DoNotOptimize(res.groups.size());
    }
    state.SetItemsProcessed(state.iterations() * scene.cloud.size());
}
BENCHMARK(BM_Partition)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

static void BM_Kmeans1D(benchmark::State& state) {
    Rng rng(4);
    std::vector<double> values(state.range(0));
    for (double& v : values) v = rng.normal(0.0, 1.0);
    for (auto _ : state) {
        KmeansResult res = kmeans_1d(values, 256, 25, 7);
        benchmark::DoNotOptimize(res.centroids.data());
    }
    state.SetItemsProcessed(state.iterations() * values.size());
}
BENCHMARK(BM_Kmeans1D)->Arg(1000)->Arg(45000)->Unit(benchmark::kMillisecond);

static void BM_QuantizePatch(benchmark::State& state) {
    GaussianCloud cloud = make_cloud(static_cast<size_t>(state.range(0)), 3, 5);
    for (auto _ : state) {
        QuantizedPatchBlock block = quantize_patch(cloud.splats, 7);
        benchmark::DoNotOptimize(block.byte_size());
    }
    state.SetItemsProcessed(state.iterations() * cloud.size());
}
BENCHMARK(BM_QuantizePatch)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

static void BM_SketchRoundTrip(benchmark::State& state) {
    const SynthScene& scene = synth_scene();
    PartitionConfig cfg;
    const PartitionResult res = partition(scene.cloud, scene.lines, cfg);
    if (res.groups.empty()) {
        state.SkipWithError("partition produced no groups");
        return;
    }
    const SketchGroup& group = res.groups[0];
    const LineSegment3D& seg = scene.lines[group.line_id];
    for (auto _ : state) {
        SketchLineBlock block = encode_group(scene.cloud, group, seg);
        std::vector<GaussianSplat> decoded = decode_group(block);
        benchmark::DoNotOptimize(decoded.data());
    }
    state.SetItemsProcessed(state.iterations() * group.member_indices.size());
}
BENCHMARK(BM_SketchRoundTrip)->Unit(benchmark::kMillisecond);

static void BM_Render(benchmark::State& state) {
    GaussianCloud cloud = make_cloud(static_cast<size_t>(state.range(0)), 3, 6);
    Camera cam = make_lookat(Eigen::Vector3d(0, 0, -1.5), Eigen::Vector3d(0, 0, 1.5),
                             64.0, 64, 64);
    for (auto _ : state) {
        Image img = render(cloud, cam, 0);
        benchmark::DoNotOptimize(img.pixels.data());
    }
}
BENCHMARK(BM_Render)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_Gradients(benchmark::State& state) {
    GaussianCloud cloud = make_cloud(200, 3, 7);
    Camera cam = make_lookat(Eigen::Vector3d(0, 0, -1.5), Eigen::Vector3d(0, 0, 1.5),
                             64.0, 64, 64);
    Image truth = render(make_cloud(150, 3, 8), cam, 0);
    for (auto _ : state) {
        GradientResult res = gradients(cloud, {}, cam, truth, {}, 0);
        benchmark::DoNotOptimize(res.grads.data());
    }
}
BENCHMARK(BM_Gradients)->Unit(benchmark::kMillisecond);

static void BM_EncodeScene(benchmark::State& state) {
    const SynthScene& scene = synth_scene();
    EncodeConfig cfg;
    for (auto _ : state) {
        HybridModel model = encode_scene(scene.cloud, scene.lines, cfg);
        benchmark::DoNotOptimize(model.sketch_blocks.data());
    }
    state.SetItemsProcessed(state.iterations() * scene.cloud.size());
}
BENCHMARK(BM_EncodeScene)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
