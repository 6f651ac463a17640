#include "skp/container.hpp"
#include "skp/pipeline.hpp"
#include "skp/ply_io.hpp"
#include "skp/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct EncodeOpts {
    std::string input;
    std::string output;
    std::string lines;
    bool extract = false;
    double extract_radius = 0.01;
    int extract_min_inliers = 20;
    int extract_max_lines = 32;
    double radius = 0.0;
    double eta = 3.0;
    int ransac_iters = 100;
    int min_group_size = 8;
    int fit_degree = 3;
    double prune_factor = 4.0;
    size_t max_lines = 0;
    uint64_t seed = 1;
    int threads = 0;
    std::string report;
    bool retrain = false;
    std::string cameras; // with --retrain
    std::string images;  // with --retrain
    int retrain_steps = 500;
};

struct DecodeOpts {
    std::string input;
    std::string output;
    bool retrain = false;
    std::string cameras;
    std::string images;
    int steps = 500;
    uint64_t seed = 1;
    int threads = 0;
};

struct EvalOpts {
    std::string input;
    std::string reference;
    std::string truth_dir;
    std::string cameras;
    std::string output;
    int threads = 0;
};

struct SweepOpts {
    EncodeOpts encode; // shares partitioning knobs; prune_factor ignored
    std::vector<double> factors = {2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0};
    std::vector<double> line_fractions = {1.0};
    std::string cameras;
    std::string output;
    std::string report_dir;
};

struct SynthOpts {
    std::string output_dir;
    int n_lines = 3;
    int splats_per_line = 200;
    int free_splats = 150;
    double outlier_fraction = 0.05;
    double extent = 1.0;
    double noise = 1e-7;
    int cameras = 5;
    int image_size = 64;
    uint64_t seed = 42;
    bool render_truth = false;
    int threads = 0;
};

int report_error(const std::exception& e) {
    const char* stage = "runtime";
    if (dynamic_cast<const skp::PlyError*>(&e))
        stage = "ply";
    else if (dynamic_cast<const skp::LineFormatError*>(&e))
        stage = "lines";
    else if (dynamic_cast<const skp::ContainerError*>(&e))
        stage = "container";
    else if (dynamic_cast<const std::invalid_argument*>(&e))
        stage = "args";
    else if (dynamic_cast<const std::ios_base::failure*>(&e))
        stage = "io";
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

skp::GaussianCloud load_cloud_any(const std::string& path) {
    if (has_suffix(path, ".skph"))
        return skp::decode_full(skp::read_hybrid(skp::read_file(path)));
    return skp::load_ply_file(path);
}

std::vector<skp::Image> load_truth_images(const std::string& dir, size_t count) {
    std::vector<skp::Image> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03zu.png", i);
        out.push_back(skp::read_png((fs::path(dir) / name).string()));
    }
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open for writing: " + path);
    f << text;
    if (!f)
        throw std::runtime_error("failed writing: " + path);
}

std::vector<skp::LineSegment3D> resolve_lines(const EncodeOpts& o,
                                              const skp::GaussianCloud& cloud) {
    if (!o.lines.empty())
        return skp::load_lines(o.lines);
    if (o.extract) {
        skp::LineExtractConfig cfg;
        cfg.inlier_radius = o.extract_radius;
        cfg.min_inliers = o.extract_min_inliers;
        cfg.max_lines = o.extract_max_lines;
        cfg.seed = o.seed;
        return skp::extract_lines_from_points(cloud, cfg);
    }
    throw std::invalid_argument("encode needs --lines FILE or --extract");
}

skp::EncodeConfig make_encode_config(const EncodeOpts& o) {
    skp::EncodeConfig cfg;
    cfg.partition.radius_r = o.radius;
    cfg.partition.eta = o.eta;
    cfg.partition.ransac_iters = o.ransac_iters;
    cfg.partition.min_group_size = o.min_group_size;
    cfg.partition.fit_degree = o.fit_degree;
    cfg.partition.seed = o.seed;
    cfg.partition.threads = o.threads;
    cfg.prune_factor = o.prune_factor;
    cfg.max_lines = o.max_lines;
    cfg.quant_seed = o.seed;
    cfg.retrain = o.retrain;
    cfg.retrain_cfg.steps = o.retrain_steps;
    cfg.retrain_cfg.seed = o.seed;
    cfg.retrain_cfg.threads = o.threads;
    return cfg;
}

double sketch_ratio_of(const skp::EncodeReport& r) {
    const size_t stored = r.sketch_splats + r.patch_splats;
    return stored ? static_cast<double>(r.sketch_splats) / static_cast<double>(stored) : 0.0;
}

json report_json(const skp::EncodeReport& r, size_t raw_bytes) {
    json j;
    j["total_splats"] = r.total_splats;
    j["sketch_splats"] = r.sketch_splats;
    j["patch_candidates"] = r.patch_candidates;
    j["patch_splats"] = r.patch_splats;
    j["sketch_ratio"] = sketch_ratio_of(r);
    j["line_groups"] = r.line_groups;
    j["lines_used"] = r.lines_used;
    j["iqr_reclassified"] = r.iqr_reclassified;
    j["bytes"]["header"] = r.sizes.header_bytes;
    j["bytes"]["sketch"] = r.sizes.sketch_bytes;
    j["bytes"]["patch"] = r.sizes.patch_bytes;
    j["bytes"]["total"] = r.sizes.total;
    j["raw_ply_bytes"] = raw_bytes;
    j["compression_ratio"] =
        r.sizes.total ? static_cast<double>(raw_bytes) / r.sizes.total : 0.0;
    return j;
}

int cmd_encode(const EncodeOpts& o) {
    const skp::GaussianCloud cloud = skp::load_ply_file(o.input);
    const auto lines = resolve_lines(o, cloud);
    std::vector<skp::Camera> cams;
    std::vector<skp::Image> truths;
    if (o.retrain) {
        if (o.cameras.empty() || o.images.empty())
            throw std::invalid_argument("--retrain needs --cameras and --images");
        cams = skp::load_cameras(o.cameras);
        truths = load_truth_images(o.images, cams.size());
    }
    skp::EncodeReport rep;
    const skp::HybridModel model =
        skp::encode_scene(cloud, lines, make_encode_config(o), &rep, cams, truths);
    const std::vector<uint8_t> bytes = skp::write_hybrid(model);
    skp::write_file(o.output, bytes);

    const size_t raw = skp::save_ply(cloud).size();
    std::cout << "splats: " << rep.total_splats << " total, " << rep.sketch_splats
              << " sketch in " << rep.line_groups << " groups, " << rep.patch_candidates
              << " patch candidates, " << rep.patch_splats << " stored (sketch ratio "
              << skp::format_double(sketch_ratio_of(rep)) << ")\n";
    std::cout << "file: " << rep.sizes.total << " bytes (header " << rep.sizes.header_bytes
              << ", sketch " << rep.sizes.sketch_bytes << ", patch " << rep.sizes.patch_bytes
              << "), ratio " << skp::format_double(static_cast<double>(raw) / rep.sizes.total)
              << "x\n";
    if (!o.report.empty())
        write_text(o.report, report_json(rep, raw).dump(2) + "\n");
    return 0;
}

int cmd_decode(const DecodeOpts& o) {
    const skp::HybridModel model = skp::read_hybrid(skp::read_file(o.input));
    skp::DecodeStats stats;
    skp::GaussianCloud cloud = skp::decode_full(model, &stats);

    if (o.retrain) {
        if (o.cameras.empty() || o.images.empty())
            throw std::invalid_argument("--retrain needs --cameras and --images");
        const auto cams = skp::load_cameras(o.cameras);
        const auto truths = load_truth_images(o.images, cams.size());
        const size_t sketch_n = model.sketch_splat_count();
        std::vector<skp::GaussianSplat> sketch(cloud.splats.begin(),
                                               cloud.splats.begin() + sketch_n);
        std::vector<skp::GaussianSplat> patch(cloud.splats.begin() + sketch_n,
                                              cloud.splats.end());
        skp::RetrainConfig rc;
        rc.steps = o.steps;
        rc.sh_degree = cloud.sh_degree;
        rc.seed = o.seed;
        rc.threads = o.threads;
        const skp::RetrainResult rr = skp::retrain_patch(sketch, patch, cams, truths, rc);
        std::copy(rr.patch.begin(), rr.patch.end(), cloud.splats.begin() + sketch_n);
        if (!rr.step_losses.empty())
            std::cout << "retrain: " << rr.step_losses.size() << " steps, loss "
                      << skp::format_double(rr.step_losses.front()) << " -> "
                      << skp::format_double(rr.step_losses.back()) << "\n";
    }

    skp::save_ply_file(cloud, o.output);
    std::cout << "decoded " << cloud.splats.size() << " splats ("
              << model.sketch_splat_count() << " sketch, " << model.patch_splat_count()
              << " patch)\n";
    if (stats.zero_norm_quaternions)
        std::cout << "zero-norm quaternions replaced: " << stats.zero_norm_quaternions
                  << "\n";
    return 0;
}

std::string metrics_csv(const std::vector<skp::ViewMetrics>& metrics) {
    std::string csv = "view,psnr,ssim\n";
    double sp = 0.0, ss = 0.0;
    for (size_t i = 0; i < metrics.size(); ++i) {
        csv += std::to_string(i) + "," + skp::format_double(metrics[i].psnr) + "," +
               skp::format_double(metrics[i].ssim) + "\n";
        sp += metrics[i].psnr;
        ss += metrics[i].ssim;
    }
    if (!metrics.empty())
        csv += "mean," + skp::format_double(sp / metrics.size()) + "," +
               skp::format_double(ss / metrics.size()) + "\n";
    return csv;
}

int cmd_eval(const EvalOpts& o) {
    if (o.reference.empty() == o.truth_dir.empty())
        throw std::invalid_argument("eval needs exactly one of --reference or --truth-dir");
    const skp::GaussianCloud cloud = load_cloud_any(o.input);
    const auto cams = skp::load_cameras(o.cameras);

    std::vector<skp::ViewMetrics> metrics;
    if (!o.reference.empty()) {
        metrics = skp::evaluate_views(cloud, load_cloud_any(o.reference), cams, {}, o.threads);
    } else {
        metrics = skp::evaluate_views(cloud, load_truth_images(o.truth_dir, cams.size()),
                                      cams, {}, o.threads);
    }
    const std::string csv = metrics_csv(metrics);
    std::cout << csv;
    if (!o.output.empty())
        write_text(o.output, csv);
    return 0;
}

std::string sweep_point_name(const skp::SweepPoint& p) {
    std::string name = "factor_" + skp::format_double(p.prune_factor);
    if (p.line_fraction != 1.0)
        name += "_lines_" + skp::format_double(p.line_fraction);
    return name;
}

int cmd_sweep(const SweepOpts& o) {
    const skp::GaussianCloud cloud = skp::load_ply_file(o.encode.input);
    const auto lines = resolve_lines(o.encode, cloud);
    const auto cams = skp::load_cameras(o.cameras);
    const auto points =
        skp::sweep_prune(cloud, lines, make_encode_config(o.encode), o.factors, cams,
                         o.encode.threads, o.line_fractions);

    std::string csv = "factor,line_fraction,sketch_bytes,patch_bytes,total_bytes,psnr,ssim\n";
    for (const skp::SweepPoint& p : points) {
        if (!p.error.empty()) {
            std::cerr << "sweep point " << sweep_point_name(p) << " failed: " << p.error
                      << "\n";
            continue;
        }
        csv += skp::format_double(p.prune_factor) + "," +
               skp::format_double(p.line_fraction) + "," + std::to_string(p.sketch_bytes) +
               "," + std::to_string(p.patch_bytes) + "," + std::to_string(p.file_bytes) +
               "," + skp::format_double(p.mean_psnr) + "," +
               skp::format_double(p.mean_ssim) + "\n";
    }
    std::cout << csv;
    if (!o.output.empty())
        write_text(o.output, csv);
    if (!o.report_dir.empty()) {
        fs::create_directories(o.report_dir);
        for (const skp::SweepPoint& p : points) {
            json j;
            j["prune_factor"] = p.prune_factor;
            j["line_fraction"] = p.line_fraction;
            if (p.error.empty()) {
                j["file_bytes"] = p.file_bytes;
                j["sketch_bytes"] = p.sketch_bytes;
                j["patch_bytes"] = p.patch_bytes;
                j["compression_ratio"] = p.compression_ratio;
                j["sketch_splats"] = p.sketch_splats;
                j["patch_splats"] = p.patch_splats;
                j["mean_psnr"] = p.mean_psnr;
                j["mean_ssim"] = p.mean_ssim;
            } else {
                j["error"] = p.error;
            }
            write_text((fs::path(o.report_dir) / (sweep_point_name(p) + ".json")).string(),
                       j.dump(2) + "\n");
        }
    }
    return 0;
}

int cmd_synth(const SynthOpts& o) {
    skp::SynthConfig cfg;
    cfg.n_lines = o.n_lines;
    cfg.splats_per_line = o.splats_per_line;
    cfg.free_splats = o.free_splats;
    cfg.outlier_fraction = o.outlier_fraction;
    cfg.extent = o.extent;
    cfg.attribute_noise = o.noise;
    cfg.n_cameras = o.cameras;
    cfg.image_size = o.image_size;
    cfg.seed = o.seed;
    const skp::SynthScene scene = skp::make_synth_scene(cfg);

    fs::create_directories(o.output_dir);
    const fs::path dir(o.output_dir);
    skp::save_ply_file(scene.cloud, (dir / "scene.ply").string());
    skp::save_lines(scene.lines, (dir / "lines.txt").string());
    skp::save_cameras(scene.cameras, (dir / "cameras.json").string());

    json labels;
    labels["on_line"] = scene.on_line;
    labels["is_outlier"] = scene.is_outlier;
    write_text((dir / "labels.json").string(), labels.dump() + "\n");

    if (o.render_truth) {
        fs::create_directories(dir / "truth");
        for (size_t i = 0; i < scene.cameras.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "view_%03zu.png", i);
            skp::write_png(skp::quantize8(skp::render(scene.cloud, scene.cameras[i], o.threads)),
                           (dir / "truth" / name).string());
        }
    }
    std::cout << "synthetic scene: " << scene.cloud.splats.size() << " splats, "
              << scene.lines.size() << " lines, " << scene.cameras.size()
              << " cameras -> " << o.output_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid sketch/patch codec for Gaussian splat scenes"};
    app.require_subcommand(1);

    EncodeOpts eo;
    CLI::App* enc = app.add_subcommand("encode", "Encode a PLY scene into a .skph container");
    enc->add_option("--input", eo.input, "Input .ply scene")->required();
    enc->add_option("--output", eo.output, "Output .skph file")->required();
    enc->add_option("--lines", eo.lines, "Line segments file (id x1 y1 z1 x2 y2 z2)");
    enc->add_flag("--extract", eo.extract, "Extract lines from splat centers when --lines is absent");
    enc->add_option("--extract-radius", eo.extract_radius, "Extraction inlier radius");
    enc->add_option("--extract-min-inliers", eo.extract_min_inliers, "Extraction support minimum");
    enc->add_option("--extract-max-lines", eo.extract_max_lines, "Extraction line cap");
    enc->add_option("--radius", eo.radius, "Assignment radius (<=0: 0.005 x bbox diagonal)");
    enc->add_option("--eta", eo.eta, "Inlier threshold, multiples of the residual MAD");
    enc->add_option("--ransac-iters", eo.ransac_iters, "RANSAC iterations per attribute");
    enc->add_option("--min-group-size", eo.min_group_size, "Smallest surviving line group");
    enc->add_option("--fit-degree", eo.fit_degree, "RANSAC polynomial degree");
    enc->add_option("--prune-factor", eo.prune_factor, "Keep ceil(n/factor) patch splats");
    enc->add_option("--max-lines", eo.max_lines, "Line budget, longest kept (0: all)");
    enc->add_option("--seed", eo.seed, "Deterministic seed");
    enc->add_option("--threads", eo.threads, "Worker threads (0: hardware)");
    enc->add_option("--report", eo.report, "Write a JSON encode report");
    enc->add_flag("--retrain", eo.retrain,
                  "Retrain pruned patch splats against truth images before quantization");
    enc->add_option("--cameras", eo.cameras, "Cameras JSON (with --retrain)");
    enc->add_option("--images", eo.images,
                    "Truth image directory, view_XXX.png (with --retrain)");
    enc->add_option("--retrain-steps", eo.retrain_steps, "Retraining steps");

    DecodeOpts dopt;
    CLI::App* dec = app.add_subcommand("decode", "Decode a .skph container back to PLY");
    dec->add_option("--input", dopt.input, "Input .skph file")->required();
    dec->add_option("--output", dopt.output, "Output .ply file")->required();
    dec->add_flag("--retrain", dopt.retrain, "Fine-tune patch splats against truth images");
    dec->add_option("--cameras", dopt.cameras, "Cameras JSON (with --retrain)");
    dec->add_option("--images", dopt.images, "Truth image directory, view_XXX.png (with --retrain)");
    dec->add_option("--steps", dopt.steps, "Retraining steps");
    dec->add_option("--seed", dopt.seed, "Retraining shuffle seed");
    dec->add_option("--threads", dopt.threads, "Worker threads (0: hardware)");

    EvalOpts vo;
    CLI::App* ev = app.add_subcommand("eval", "Per-view PSNR/SSIM of a scene against a reference");
    ev->add_option("--input", vo.input, "Scene to score (.ply or .skph)")->required();
    ev->add_option("--reference", vo.reference, "Reference scene (.ply or .skph)");
    ev->add_option("--truth-dir", vo.truth_dir, "Directory of truth images view_XXX.png");
    ev->add_option("--cameras", vo.cameras, "Cameras JSON")->required();
    ev->add_option("--output", vo.output, "Also write the CSV here");
    ev->add_option("--threads", vo.threads, "Worker threads (0: hardware)");

    SweepOpts so;
    CLI::App* sw = app.add_subcommand("sweep", "Rate-distortion sweep over patch prune factors");
    sw->add_option("--input", so.encode.input, "Input .ply scene")->required();
    sw->add_option("--lines", so.encode.lines, "Line segments file");
    sw->add_flag("--extract", so.encode.extract, "Extract lines from splat centers");
    sw->add_option("--cameras", so.cameras, "Cameras JSON")->required();
    sw->add_option("--factors", so.factors, "Prune factors to sweep")->delimiter(',');
    sw->add_option("--line-fractions", so.line_fractions,
                   "Top-longest line fractions to sweep, each in (0,1]")
        ->delimiter(',');
    sw->add_flag("--retrain", so.encode.retrain,
                 "Retrain each point's patch splats against the scene's own renders");
    sw->add_option("--retrain-steps", so.encode.retrain_steps, "Retraining steps per point");
    sw->add_option("--radius", so.encode.radius, "Assignment radius (<=0: auto)");
    sw->add_option("--eta", so.encode.eta, "Inlier threshold multiplier");
    sw->add_option("--ransac-iters", so.encode.ransac_iters, "RANSAC iterations");
    sw->add_option("--min-group-size", so.encode.min_group_size, "Smallest surviving group");
    sw->add_option("--max-lines", so.encode.max_lines, "Line budget (0: all)");
    sw->add_option("--seed", so.encode.seed, "Deterministic seed");
    sw->add_option("--threads", so.encode.threads, "Worker threads (0: hardware)");
    sw->add_option("--output", so.output, "Also write the CSV here");
    sw->add_option("--report-dir", so.report_dir, "Per-factor JSON reports");

    SynthOpts yo;
    CLI::App* sy = app.add_subcommand("synth", "Generate a synthetic scene with known line structure");
    sy->add_option("--output-dir", yo.output_dir, "Destination directory")->required();
    sy->add_option("--lines", yo.n_lines, "Number of line segments");
    sy->add_option("--splats-per-line", yo.splats_per_line, "Members per line");
    sy->add_option("--free-splats", yo.free_splats, "Unstructured splats");
    sy->add_option("--outlier-fraction", yo.outlier_fraction, "Attribute outliers per line");
    sy->add_option("--extent", yo.extent, "Scene box side length");
    sy->add_option("--noise", yo.noise, "Clean attribute noise sigma");
    sy->add_option("--cameras", yo.cameras, "Orbit camera count");
    sy->add_option("--image-size", yo.image_size, "Camera resolution (square)");
    sy->add_option("--seed", yo.seed, "Generator seed");
    sy->add_flag("--render-truth", yo.render_truth, "Render truth images into truth/");
    sy->add_option("--threads", yo.threads, "Worker threads (0: hardware)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (enc->parsed())
            return cmd_encode(eo);
        if (dec->parsed())
            return cmd_decode(dopt);
        if (ev->parsed())
            return cmd_eval(vo);
        if (sw->parsed())
            return cmd_sweep(so);
        if (sy->parsed())
            return cmd_synth(yo);
    } catch (const std::exception& e) {
        return report_error(e);
    }
    return 0;
}
