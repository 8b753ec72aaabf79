// Command-line pipeline: phantom generation, network training, iterative
// segmentation (network or ground-truth oracle), and evaluation.
// Exit codes: 0 success, 1 pipeline failure, 2 usage / IO / config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "iterseg/config.hpp"
#include "iterseg/labeling.hpp"
#include "iterseg/metrics.hpp"
#include "iterseg/network.hpp"
#include "iterseg/nrrd.hpp"
#include "iterseg/phantom.hpp"
#include "iterseg/report.hpp"
#include "iterseg/segmentor.hpp"
#include "iterseg/trainer.hpp"
#include "iterseg/traversal.hpp"

namespace fs = std::filesystem;
using namespace iterseg;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_input(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw UsageError(std::string(what) + " not found: '" + path + "'");
}

Direction direction_from_string(const std::string& s) {
    if (s == "up") return Direction::up;
    if (s == "down") return Direction::down;
    throw UsageError("direction must be 'up' or 'down', got '" + s + "'");
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------- phantom

int cmd_phantom(const std::string& config_path, const std::string& out_image,
                const std::string& out_mask) {
    require_input(config_path, "config file");
    const auto cfg = KeyValueConfig::from_file(config_path);

    PhantomConfig p;
    p.dims = cfg.vec3i("phantom.dims", p.dims);
    p.n_instances = static_cast<int>(cfg.integer("phantom.n_instances", p.n_instances));
    p.label_start = static_cast<int>(cfg.integer("phantom.label_start", p.label_start));
    p.instance_half_axes = cfg.vec3d("phantom.half_axes", p.instance_half_axes);
    p.gap = cfg.real("phantom.gap", p.gap);
    p.column_curvature = cfg.real("phantom.curvature", p.column_curvature);
    p.foreground_intensity = cfg.real("phantom.foreground", p.foreground_intensity);
    p.background_intensity = cfg.real("phantom.background", p.background_intensity);
    p.noise_sigma = cfg.real("phantom.noise_sigma", p.noise_sigma);
    p.crop_policy = crop_policy_from_string(cfg.text("phantom.crop", to_string(p.crop_policy)));
    p.seed = static_cast<std::uint64_t>(cfg.integer("phantom.seed", static_cast<long>(p.seed)));
    cfg.reject_unused();

    const auto result = generate_phantom(p);
    write_nrrd(result.image, out_image);
    write_nrrd(result.mask, out_mask);
    std::printf("phantom: %d instances in %dx%dx%d -> %s, %s\n", p.n_instances, p.dims.x, p.dims.y,
                p.dims.z, out_image.c_str(), out_mask.c_str());
    return 0;
}

// ------------------------------------------------------------------ train

std::vector<ScanEntry<float>> load_dataset(const std::string& dir) {
    require_input(dir, "dataset directory");
    std::vector<std::string> image_paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 11 && name.substr(name.size() - 11) == ".image.nrrd")
            image_paths.push_back(entry.path().string());
    }
    std::sort(image_paths.begin(), image_paths.end());
    if (image_paths.empty())
        throw UsageError("no '*.image.nrrd' scans in dataset directory '" + dir + "'");

    std::vector<ScanEntry<float>> dataset;
    dataset.reserve(image_paths.size());
    for (const auto& img_path : image_paths) {
        const std::string mask_path =
            img_path.substr(0, img_path.size() - 11) + ".mask.nrrd";
        require_input(mask_path, "mask for training scan");
        dataset.push_back(make_scan_entry(read_nrrd_image(img_path), read_nrrd_mask(mask_path)));
    }
    return dataset;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_model, std::string curve_path) {
    require_input(config_path, "config file");
    const auto cfg = KeyValueConfig::from_file(config_path);

    SegmentorConfig net_cfg;
    net_cfg.channels = static_cast<int>(cfg.integer("model.channels", net_cfg.channels));
    net_cfg.depth = static_cast<int>(cfg.integer("model.depth", net_cfg.depth));
    net_cfg.head_width = static_cast<int>(cfg.integer("model.head_width", net_cfg.head_width));
    net_cfg.patch_size = cfg.vec3i("model.patch_size", net_cfg.patch_size);
    const auto model_seed = static_cast<std::uint64_t>(cfg.integer("model.seed", 1));

    TrainerConfig t;
    t.learning_rate = cfg.real("train.learning_rate", t.learning_rate);
    t.momentum_beta1 = cfg.real("train.beta1", t.momentum_beta1);
    t.beta2 = cfg.real("train.beta2", t.beta2);
    t.eps = cfg.real("train.eps", t.eps);
    t.n_max = cfg.integer("train.n_max", t.n_max);
    t.random_patch_fraction = cfg.real("train.random_patch_fraction", t.random_patch_fraction);
    t.direction = direction_from_string(cfg.text("train.direction", to_string(t.direction)));
    t.seed = static_cast<std::uint64_t>(cfg.integer("train.seed", static_cast<long>(t.seed)));
    t.augment.noise_sigma_min = cfg.real("augment.noise_sigma_min", t.augment.noise_sigma_min);
    t.augment.noise_sigma_max = cfg.real("augment.noise_sigma_max", t.augment.noise_sigma_max);
    t.augment.smooth_sigma_min = cfg.real("augment.smooth_sigma_min", t.augment.smooth_sigma_min);
    t.augment.smooth_sigma_max = cfg.real("augment.smooth_sigma_max", t.augment.smooth_sigma_max);
    t.augment.zcrop_max = static_cast<int>(cfg.integer("augment.zcrop_max", t.augment.zcrop_max));
    t.augment.pad_value = cfg.real("augment.pad_value", t.augment.pad_value);
    t.loss.gamma = cfg.real("loss.gamma", t.loss.gamma);
    t.loss.sigma = cfg.real("loss.sigma", t.loss.sigma);
    t.loss.lambda_min = cfg.real("loss.lambda_min", t.loss.lambda_min);
    cfg.reject_unused();

    const auto dataset = load_dataset(dataset_dir);
    TinyFcn<float> net(net_cfg, model_seed);
    const auto curve = train(net, dataset, t);
    net.save(out_model);

    if (curve_path.empty()) curve_path = out_model + ".curve.csv";
    std::string csv = "iteration,lambda,fp_soft,fn_soft,seg_loss,label_loss,completeness_loss,total\n";
    char row[256];
    for (const auto& r : curve) {
        std::snprintf(row, sizeof row, "%ld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.iteration,
                      r.lambda, r.fp_soft, r.fn_soft, r.seg_loss, r.label_loss,
                      r.completeness_loss, r.total);
        csv += row;
    }
    write_text(curve_path, csv);

    double tail = 0;
    const std::size_t tail_n = std::min<std::size_t>(50, curve.size());
    for (std::size_t i = curve.size() - tail_n; i < curve.size(); ++i) tail += curve[i].total;
    std::printf("train: %zu scans, %ld iterations, mean loss over last %zu: %.6f -> %s\n",
                dataset.size(), t.n_max, tail_n, tail / static_cast<double>(tail_n),
                out_model.c_str());
    return 0;
}

// ---------------------------------------------------------------- segment

/// Raw regression values, ordered along the anatomical chain (bottom-up),
/// are refined into a contiguous label run and written back to the records
/// and the mask. Falls back to rounding if refinement is impossible.
void apply_label_refinement(TraversalResult& result, Direction direction) {
    if (result.records.empty()) return;
    std::vector<double> values;
    values.reserve(result.records.size());
    for (const auto& r : result.records) values.push_back(r.raw_label_value);
    if (direction == Direction::down) std::reverse(values.begin(), values.end());

    std::vector<int> labels;
    try {
        labels = refine_labels(values);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "warning: label refinement skipped (%s); using rounded raw values\n",
                     e.what());
        labels.clear();
        for (double v : values)
            labels.push_back(std::clamp(static_cast<int>(std::llround(v)), kMinLabel, kMaxLabel));
    }
    if (direction == Direction::down) std::reverse(labels.begin(), labels.end());

    for (std::size_t i = 0; i < result.records.size(); ++i) {
        result.records[i].final_label = labels[i];
        result.mask.records.at(result.records[i].instance_id).anatomical_label = labels[i];
    }
}

int cmd_segment(const std::string& model_path, bool oracle, const std::string& reference_path,
                const std::string& image_path, const std::string& out_mask,
                const std::string& direction_str, const std::string& config_path,
                std::string report_path, const std::string& trace_path) {
    if (oracle && !model_path.empty())
        throw UsageError("--oracle and a model file are mutually exclusive");
    if (!oracle && model_path.empty())
        throw UsageError("provide a model file or --oracle");
    if (oracle && reference_path.empty())
        throw UsageError("--oracle requires --reference <mask.nrrd>");
    require_input(image_path, "image");
    if (!model_path.empty()) require_input(model_path, "model file");
    if (oracle) require_input(reference_path, "reference mask");

    KeyValueConfig cfg;
    if (!config_path.empty()) {
        require_input(config_path, "config file");
        cfg = KeyValueConfig::from_file(config_path);
    }
    const Direction direction = direction_from_string(direction_str);
    const double working_spacing = cfg.real("segment.working_spacing", 1.0);

    TraversalConfig tv;
    tv.patch_size = cfg.vec3i("traversal.patch_size", tv.patch_size);
    tv.v_min = cfg.integer("traversal.v_min", v_min_for_spacing(working_spacing));
    tv.delta_max = static_cast<int>(cfg.integer("traversal.delta_max", tv.delta_max));
    tv.max_iter_per_vertebra =
        static_cast<int>(cfg.integer("traversal.max_iter", tv.max_iter_per_vertebra));
    tv.step = cfg.vec3i("traversal.step", tv.step);
    tv.binarize_threshold = cfg.real("traversal.binarize_threshold", tv.binarize_threshold);
    if (cfg.has("traversal.hu_surface_threshold"))
        tv.hu_surface_threshold = cfg.real("traversal.hu_surface_threshold", 200.0);
    tv.keep_incomplete_in_output =
        cfg.boolean("traversal.keep_incomplete", tv.keep_incomplete_in_output);
    tv.direction = direction;
    cfg.reject_unused();

    const auto image_native = read_nrrd_image(image_path);
    const auto working = resample_to_isotropic(image_native, working_spacing, ResampleMode::trilinear);

    TraversalResult result;
    if (oracle) {
        const auto ref_native = read_nrrd_mask(reference_path);
        const auto ref_working = resample_mask_to_grid(ref_native, working);
        if (!ref_working.vanished.empty())
            std::fprintf(stderr, "warning: %zu reference instance(s) vanished at working resolution\n",
                         ref_working.vanished.size());
        OracleSegmentor<float> seg{&ref_working.mask};
        result = run_traversal(working, seg, tv);
    } else {
        const auto net = TinyFcn<float>::load(model_path);
        if (cfg.has("traversal.patch_size") && tv.patch_size != net.config().patch_size)
            throw UsageError("traversal.patch_size conflicts with the model's patch size");
        tv.patch_size = net.config().patch_size;
        NetworkSegmentor<float> seg{&net};
        result = run_traversal(working, seg, tv);
    }

    apply_label_refinement(result, direction);

    const auto native = resample_mask_to_grid(result.mask, image_native);
    write_nrrd(native.mask, out_mask);

    if (report_path.empty()) report_path = out_mask + ".report.json";
    write_text(report_path, segmentation_report(image_path, direction, result.records).dump(2) + "\n");
    if (!trace_path.empty()) write_text(trace_path, trace_jsonl(result.trace));

    std::size_t complete = 0;
    for (const auto& r : result.records) complete += r.complete;
    std::printf("segment: %zu instance(s), %zu complete, %zu iteration(s) -> %s\n",
                result.records.size(), complete, result.trace.size(), out_mask.c_str());
    return 0;
}

// --------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& ref_path, const std::string& auto_path,
                 const std::string& report_path) {
    require_input(ref_path, "reference mask");
    require_input(auto_path, "automatic mask");
    const auto reference = read_nrrd_mask(ref_path);
    const auto automatic = read_nrrd_mask(auto_path);
    if (reference.dims != automatic.dims)
        throw UsageError("mask grids differ: reference is " + std::to_string(reference.dims.x) + "x" +
                         std::to_string(reference.dims.y) + "x" + std::to_string(reference.dims.z) +
                         ", automatic is " + std::to_string(automatic.dims.x) + "x" +
                         std::to_string(automatic.dims.y) + "x" + std::to_string(automatic.dims.z));

    const auto report = evaluate_scan(reference, automatic);
    write_text(report_path, evaluation_report(ref_path, report).dump(2) + "\n");

    std::printf("evaluate: dice %.4f +/- %.4f (n=%zu), identification %.1f%%, completeness %.1f%%\n",
                report.dice_agg.mean, report.dice_agg.sd, report.dice_agg.count,
                100.0 * report.identification_accuracy, 100.0 * report.completeness_accuracy);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative instance-by-instance volumetric segmentation"};
    app.require_subcommand(1);

    std::string config_path, out_image, out_mask, dataset_dir, out_model, curve_path;
    std::string model_path, image_path, reference_path, direction_str = "up";
    std::string report_path, trace_path, ref_path, auto_path;
    bool oracle = false;

    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic column phantom pair");
    phantom->add_option("config", config_path, "key = value phantom configuration")->required();
    phantom->add_option("out_image", out_image, "output image NRRD")->required();
    phantom->add_option("out_mask", out_mask, "output instance mask NRRD")->required();

    auto* train = app.add_subcommand("train", "Train the patch segmentor on a scan directory");
    train->add_option("config", config_path, "key = value training configuration")->required();
    train->add_option("dataset_dir", dataset_dir, "directory of *.image.nrrd / *.mask.nrrd pairs")
        ->required();
    train->add_option("out_model", out_model, "output model file")->required();
    train->add_option("--curve", curve_path, "training-curve CSV path (default <model>.curve.csv)");

    auto* segment = app.add_subcommand("segment", "Run the iterative traversal over one scan");
    segment->add_option("image", image_path, "input image NRRD")->required();
    segment->add_option("out_mask", out_mask, "output instance mask NRRD")->required();
    segment->add_option("--model", model_path, "trained model file");
    segment->add_flag("--oracle", oracle, "use the ground-truth oracle segmentor");
    segment->add_option("--reference", reference_path, "reference mask (oracle mode)");
    segment->add_option("--direction", direction_str, "traversal direction: up or down")
        ->check(CLI::IsMember({"up", "down"}));
    segment->add_option("--config", config_path, "key = value traversal configuration");
    segment->add_option("--report", report_path, "report JSON path (default <out_mask>.report.json)");
    segment->add_option("--trace", trace_path, "write per-iteration trace as JSON lines");

    auto* evaluate = app.add_subcommand("evaluate", "Compare an automatic mask against a reference");
    evaluate->add_option("reference", ref_path, "reference instance mask NRRD")->required();
    evaluate->add_option("automatic", auto_path, "automatic instance mask NRRD")->required();
    evaluate->add_option("report", report_path, "output report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (phantom->parsed()) return cmd_phantom(config_path, out_image, out_mask);
        if (train->parsed()) return cmd_train(config_path, dataset_dir, out_model, curve_path);
        if (segment->parsed())
            return cmd_segment(model_path, oracle, reference_path, image_path, out_mask,
                               direction_str, config_path, report_path, trace_path);
        if (evaluate->parsed()) return cmd_evaluate(ref_path, auto_path, report_path);
        std::fprintf(stderr, "error: no subcommand\n");
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
