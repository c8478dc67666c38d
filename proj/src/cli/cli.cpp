#include "brpatch/cli.hpp"

#include "brpatch/backend.hpp"
#include "brpatch/config.hpp"
#include "brpatch/dataset.hpp"
#include "brpatch/errors.hpp"
#include "brpatch/evaluate.hpp"
#include "brpatch/patch_io.hpp"
#include "brpatch/perturb.hpp"
#include "brpatch/plot.hpp"
#include "brpatch/text.hpp"
#include "brpatch/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <ostream>

namespace brpatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError(IoErrorKind::write_failed, "write failed: " + path.string());
    }
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

fs::path make_run_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError(IoErrorKind::open_failed, "cannot create run directory: " + dir.string());
    }
    return dir;
}

// Outputs may never overwrite an input file.
void guard_distinct(const fs::path& in, const fs::path& out)
{
    if (fs::exists(out) && fs::equivalent(in, out)) {
        throw ConfigError("output path equals input path: " + out.string());
    }
}

/// Everything a run directory needs to be rerun: the resolved config, the
/// invocation that consumed it and every master seed.
void write_snapshot(const fs::path& dir, const ExperimentConfig& cfg, const json& invocation)
{
    write_json(dir / "config.json", to_json(cfg));
    write_json(dir / "run.json", invocation);
    write_json(dir / "seeds.json", {{"dataset", cfg.backends.texture.seed},
                                    {"backend_source", cfg.backends.seed_source},
                                    {"backend_target", cfg.backends.seed_target},
                                    {"train", cfg.train.config.seed},
                                    {"eval", cfg.eval.seed}});
}

Dataset dataset_for(const ExperimentConfig& cfg)
{
    if (cfg.backends.dataset) {
        return load_dataset(*cfg.backends.dataset);
    }
    return generate_texture_dataset(cfg.backends.texture);
}

CnnBackend require_model(const std::optional<fs::path>& path, const char* key)
{
    if (!path) {
        throw ConfigError(std::string("backends.") + key + " is required for this command");
    }
    return load_backend(*path);
}

struct Splits {
    ImageBatch train;
    ImageBatch val;
    ImageBatch eval;
};

Splits splits_for(const ExperimentConfig& cfg, const Dataset& data)
{
    const auto clip = [](std::size_t v, std::size_t n) { return std::min(v, n); };
    Splits s;
    s.train = data.train.head(clip(cfg.train.n_train_images, data.train.size()));
    s.val = data.test.head(clip(cfg.train.n_val_images, data.test.size()));
    const std::size_t begin = clip(cfg.eval.offset, data.test.size());
    s.eval = data.test.slice(begin, clip(begin + cfg.eval.n_images, data.test.size()));
    if (s.eval.empty()) {
        throw ConfigError("eval.offset leaves no evaluation images in the test split");
    }
    return s;
}

void save_brightness(const fs::path& dir, const std::vector<BrightnessRow>& rows, bool plots)
{
    write_brightness_csv(rows, dir / "brightness_summary.csv", dir / "brightness_histograms.csv");
    if (plots) {
        for (const auto& r : rows) {
            plot_histogram(r.stats, dir / ("histogram_" + r.name + ".png"));
        }
    }
}

struct Common {
    std::string config;
    std::string out;
    bool plots = false;
};

void cmd_make_backends(const Common& o, std::ostream& log)
{
    const auto cfg = load_config(o.config);
    const fs::path dir = make_run_dir(o.out);
    const Dataset data = dataset_for(cfg);
    if (!cfg.backends.dataset) {
        save_dataset(data, dir / "dataset");
    }
    const auto rb = reference_backends(cfg.backends.seed_source, cfg.backends.seed_target, data, cfg.backends.reference);
    save_backend(rb.source, dir / "source.brm");
    save_backend(rb.target, dir / "target.brm");
    write_json(dir / "backends.json",
               {{"source", {{"model_id", rb.source.model_id()}, {"clean_accuracy", rb.source.clean_accuracy()}}},
                {"target", {{"model_id", rb.target.model_id()}, {"clean_accuracy", rb.target.clean_accuracy()}}}});
    write_snapshot(dir, cfg, {{"command", "make-backends"}});
    log << "source " << rb.source.model_id() << " accuracy " << rb.source.clean_accuracy() << "\n"
        << "target " << rb.target.model_id() << " accuracy " << rb.target.clean_accuracy() << "\n";
}

void cmd_train(const Common& o, std::ostream& log)
{
    const auto cfg = load_config(o.config);
    const auto source = require_model(cfg.backends.source_model, "source_model");
    const Dataset data = dataset_for(cfg);
    const Splits s = splits_for(cfg, data);
    const fs::path dir = make_run_dir(o.out);
    const auto res = train_patch(cfg.train.config, s.train, s.val, source);
    save_patch(res.patch, dir / "patch.brp");
    write_history_csv(res.history, dir / "history.csv");
    const auto& best = res.history.epochs[static_cast<std::size_t>(res.history.best_epoch - 1)];
    write_json(dir / "train.json", {{"best_epoch", res.history.best_epoch},
                                    {"val_asr", best.val_asr},
                                    {"brightness_range", res.patch.meta().brightness_range},
                                    {"source_model_id", source.model_id()}});
    if (o.plots) {
        export_png(res.patch, dir / "patch.png");
        plot_histogram(brightness_stats(res.patch), dir / "histogram.png");
    }
    write_snapshot(dir, cfg, {{"command", "train"}, {"plots", o.plots}});
    log << "best epoch " << res.history.best_epoch << " val_asr " << best.val_asr << " brightness_range "
        << res.patch.meta().brightness_range << "\n";
}

void cmd_sweep(const Common& o, std::ostream& log)
{
    const auto cfg = load_config(o.config);
    const auto source = require_model(cfg.backends.source_model, "source_model");
    const auto target = require_model(cfg.backends.target_model, "target_model");
    const Dataset data = dataset_for(cfg);
    const Splits s = splits_for(cfg, data);
    if (cfg.eval.offset < cfg.train.n_val_images) {
        throw ConfigError("eval images overlap the validation images (eval.offset < train.n_val_images)");
    }
    const fs::path dir = make_run_dir(o.out);
    const auto report = sweep_lambda(cfg.train.config, cfg.sweep.lambdas, {s.train, s.val, s.eval}, source, target,
                                     cfg.eval.transform, cfg.eval.seed);
    fs::create_directories(dir / "patches");
    json rows = json::array();
    std::vector<Patch> patches;
    std::vector<std::string> names;
    std::vector<std::pair<double, double>> curve;
    for (const auto& r : report.rows) {
        const std::string name = "lambda_" + fmt_double(r.lambda, 6);
        save_patch(r.patch, dir / "patches" / (name + ".brp"));
        if (o.plots) {
            export_png(r.patch, dir / "patches" / (name + ".png"));
        }
        rows.push_back({{"lambda", r.lambda},
                        {"brightness_range", r.brightness_range},
                        {"asr_gray_box", r.asr_gray_box},
                        {"asr_white_box", r.asr_white_box},
                        {"best_epoch", r.best_epoch},
                        {"patch", "patches/" + name + ".brp"}});
        patches.push_back(r.patch);
        names.push_back(name);
        curve.emplace_back(r.brightness_range, r.asr_gray_box);
        log << "lambda " << r.lambda << " range " << r.brightness_range << " gray-box asr " << r.asr_gray_box << "\n";
    }
    write_sweep_csv(report, dir / "sweep.csv");
    write_json(dir / "sweep.json", {{"rows", rows}, {"source", source.model_id()}, {"target", target.model_id()}});
    save_brightness(dir, brightness_report(patches, names), o.plots);
    if (o.plots) {
        plot_asr_vs_range(curve, dir / "asr_vs_range.png");
    }
    write_snapshot(dir, cfg, {{"command", "sweep"}, {"plots", o.plots}});
}

const ClassifierBackend& pick(const std::string& which, const CnnBackend& source, const CnnBackend& target)
{
    return which == "source" ? static_cast<const ClassifierBackend&>(source) : target;
}

void cmd_eval(const Common& o, const std::string& patch_path, const std::string& which, std::ostream& log)
{
    const auto cfg = load_config(o.config);
    const Patch patch = load_patch_any(patch_path);
    const auto backend = require_model(which == "source" ? cfg.backends.source_model : cfg.backends.target_model,
                                       which == "source" ? "source_model" : "target_model");
    const Dataset data = dataset_for(cfg);
    const Splits s = splits_for(cfg, data);
    const fs::path dir = make_run_dir(o.out);
    const auto report = evaluate_asr(patch, s.eval, patch.meta().target_class, backend, cfg.eval.transform,
                                     cfg.eval.seed, fs::path(patch_path).filename().string());
    write_eval_json(report, dir / "eval.json");
    write_eval_csv(report, dir / "eval.csv");
    write_snapshot(dir, cfg,
                   {{"command", "eval"}, {"patch", fs::weakly_canonical(patch_path).string()}, {"backend", which}});
    log << "asr " << report.asr << " (" << report.n_success << "/" << report.n_images << ")\n";
}

void cmd_robustness(const Common& o, const std::string& patch_path, const std::string& suite_name,
                    const std::string& which, std::ostream& log)
{
    auto cfg = load_config(o.config);
    if (!suite_name.empty()) {
        cfg.perturb.suite = parse_suite_name(suite_name);
    }
    const Patch patch = load_patch_any(patch_path);
    const auto source = require_model(cfg.backends.source_model, "source_model");
    const auto target = which == "source" ? source : require_model(cfg.backends.target_model, "target_model");
    const Dataset data = dataset_for(cfg);
    const Splits s = splits_for(cfg, data);
    const fs::path dir = make_run_dir(o.out);
    const auto table = robustness_table(patch, cfg.perturb.suite, s.eval, patch.meta().target_class,
                                        pick(which, source, target), cfg.eval.transform, cfg.eval.seed);
    write_robustness_csv(table, dir / "robustness.csv");
    write_json(dir / "robustness.json", to_json(table));
    write_snapshot(dir, cfg,
                   {{"command", "robustness"}, {"patch", fs::weakly_canonical(patch_path).string()}, {"backend", which}});
    for (const auto& r : table.rows) {
        log << r.label << " " << r.report.asr << "\n";
    }
}

struct PerturbArgs {
    std::string op;
    std::optional<double> delta;
    std::optional<double> q;
    std::optional<double> factor;
    std::optional<int> height;
    std::optional<int> width;
    bool align_corners = false;
    std::uint64_t seed = 0;
    std::string in;
    std::string out;
};

void cmd_perturb(const PerturbArgs& a)
{
    guard_distinct(a.in, a.out);
    const Patch in = load_patch_any(a.in);
    const auto need = [&](const std::optional<double>& v, const char* flag) {
        if (!v) {
            throw ConfigError(a.op + " needs " + flag);
        }
        return *v;
    };
    if (a.op == "color_transfer") {
        save_patch_any(color_transfer(in, need(a.delta, "--delta")), a.out);
    } else if (a.op == "gaussian_blur3") {
        save_patch_any(gaussian_blur3(in), a.out);
    } else if (a.op == "color_drift") {
        save_patch_any(color_drift(in, need(a.q, "--q"), a.seed), a.out);
    } else if (a.op == "resize_bilinear") {
        int h = 0;
        int w = 0;
        if (a.factor) {
            if (a.height || a.width) {
                throw ConfigError("resize_bilinear takes --factor or --height/--width, not both");
            }
            if (!(*a.factor > 0.0)) {
                throw ConfigError("--factor must be positive");
            }
            h = std::max(1, static_cast<int>(std::lround(in.height() * *a.factor)));
            w = std::max(1, static_cast<int>(std::lround(in.width() * *a.factor)));
        } else if (a.height && a.width) {
            h = *a.height;
            w = *a.width;
        } else {
            throw ConfigError("resize_bilinear needs --factor or both --height and --width");
        }
        save_patch_any(resize_bilinear(in, h, w, a.align_corners), a.out);
    } else {
        throw ConfigError("unknown op '" + a.op + "'");
    }
}

struct HueArgs {
    std::string region;
    double threshold = 0.2;
    bool literal = false;
    std::string in;
    std::string out;
};

void cmd_huemap(const HueArgs& a)
{
    guard_distinct(a.in, a.out);
    const Patch in = load_patch_any(a.in);
    const Patch region = import_png(a.region);
    HueMapParams p;
    p.threshold = a.threshold;
    p.target_region = Image(region.height(), region.width());
    p.target_region.data = region.to_doubles();
    p.sign = a.literal ? HueShiftSign::literal : HueShiftSign::toward_scene;
    save_patch_any(hue_map(in, p), a.out);
}

void cmd_stats(const std::vector<std::string>& inputs, int bins, const std::string& out_dir, bool plots,
               std::ostream& log)
{
    std::vector<Patch> patches;
    std::vector<std::string> names;
    for (const auto& in : inputs) {
        patches.push_back(load_patch_any(in));
        names.push_back(fs::path(in).stem().string());
    }
    const auto rows = brightness_report(patches, names, bins);
    if (!out_dir.empty()) {
        save_brightness(make_run_dir(out_dir), rows, plots);
    }
    log << "name,min_b,max_b,range\n";
    for (const auto& r : rows) {
        log << csv_field(r.name) << ',' << fmt_double(r.stats.min_b) << ',' << fmt_double(r.stats.max_b) << ','
            << fmt_double(r.stats.range) << '\n';
    }
}

int exit_code_for(const Error& e)
{
    if (dynamic_cast<const InfeasibleError*>(&e)) {
        return kExitInfeasible;
    }
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const BackendError*>(&e)) {
        return kExitBackend;
    }
    if (dynamic_cast<const IoError*>(&e)) {
        return kExitIo;
    }
    if (dynamic_cast<const TrainingError*>(&e)) {
        return kExitTraining;
    }
    return kExitOther;
}

std::string one_line(std::string s)
{
    for (char& c : s) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Brightness-restricted adversarial patches: training, perturbation and evaluation", "brpatch"};
    app.require_subcommand(1);
    std::function<void()> run;

    auto add_common = [](CLI::App* sub, Common& c, bool plots) {
        sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", c.out, "run directory")->required();
        if (plots) {
            sub->add_flag("--plots", c.plots, "also render PNG plots");
        }
    };

    Common mb;
    auto* s_mb = app.add_subcommand("make-backends", "train the source and target classifiers");
    add_common(s_mb, mb, false);
    s_mb->callback([&] { run = [&] { cmd_make_backends(mb, out); }; });

    Common tr;
    auto* s_tr = app.add_subcommand("train", "train one patch on the source backend");
    add_common(s_tr, tr, true);
    s_tr->callback([&] { run = [&] { cmd_train(tr, out); }; });

    Common sw;
    auto* s_sw = app.add_subcommand("sweep", "train one patch per lambda and score each gray-box");
    add_common(s_sw, sw, true);
    s_sw->callback([&] { run = [&] { cmd_sweep(sw, out); }; });

    Common ev;
    std::string ev_patch;
    std::string ev_backend = "target";
    auto* s_ev = app.add_subcommand("eval", "attack success rate of a patch");
    add_common(s_ev, ev, false);
    s_ev->add_option("--patch", ev_patch, "patch (.brp or .png)")->required()->check(CLI::ExistingFile);
    s_ev->add_option("--backend", ev_backend, "target (gray-box) or source (white-box)")
        ->check(CLI::IsMember({"target", "source"}));
    s_ev->callback([&] { run = [&] { cmd_eval(ev, ev_patch, ev_backend, out); }; });

    Common rb;
    std::string rb_patch;
    std::string rb_suite;
    std::string rb_backend = "target";
    auto* s_rb = app.add_subcommand("robustness", "paired ASR table over a perturbation suite");
    add_common(s_rb, rb, false);
    s_rb->add_option("--patch", rb_patch, "patch (.brp or .png)")->required()->check(CLI::ExistingFile);
    s_rb->add_option("--suite", rb_suite, "default, feature, drift or size (overrides perturb.suite)");
    s_rb->add_option("--backend", rb_backend, "target (gray-box) or source (white-box)")
        ->check(CLI::IsMember({"target", "source"}));
    s_rb->callback([&] { run = [&] { cmd_robustness(rb, rb_patch, rb_suite, rb_backend, out); }; });

    PerturbArgs pa;
    auto* s_pa = app.add_subcommand("perturb", "apply one perturbation to a patch");
    s_pa->add_option("--op", pa.op, "color_transfer, gaussian_blur3, color_drift or resize_bilinear")->required();
    s_pa->add_option("--delta", pa.delta, "color_transfer offset");
    s_pa->add_option("--q", pa.q, "color_drift magnitude");
    s_pa->add_option("--factor", pa.factor, "resize_bilinear linear scale");
    s_pa->add_option("--height", pa.height, "resize_bilinear output height");
    s_pa->add_option("--width", pa.width, "resize_bilinear output width");
    s_pa->add_flag("--align-corners", pa.align_corners, "resize_bilinear corner-aligned sampling");
    s_pa->add_option("--seed", pa.seed, "color_drift noise seed");
    s_pa->add_option("input", pa.in, "input patch")->required()->check(CLI::ExistingFile);
    s_pa->add_option("output", pa.out, "output patch")->required();
    s_pa->callback([&] { run = [&] { cmd_perturb(pa); }; });

    HueArgs ha;
    auto* s_ha = app.add_subcommand("huemap", "shift a patch toward the color of its scene region");
    s_ha->add_option("--region", ha.region, "scene crop (8-bit RGB PNG)")->required()->check(CLI::ExistingFile);
    s_ha->add_option("--threshold", ha.threshold, "H_t, maximum shift per channel")->check(CLI::Range(0.0, 1.0));
    s_ha->add_flag("--literal", ha.literal, "one-sided literal shift sign instead of toward-scene");
    s_ha->add_option("input", ha.in, "input patch")->required()->check(CLI::ExistingFile);
    s_ha->add_option("output", ha.out, "output patch")->required();
    s_ha->callback([&] { run = [&] { cmd_huemap(ha); }; });

    std::vector<std::string> st_in;
    int st_bins = kDefaultHistogramBins;
    std::string st_out;
    bool st_plots = false;
    auto* s_st = app.add_subcommand("stats", "HSB brightness statistics of patches");
    s_st->add_option("patches", st_in, "patches (.brp or .png)")->required()->check(CLI::ExistingFile);
    s_st->add_option("--bins", st_bins, "histogram bins")->check(CLI::PositiveNumber);
    s_st->add_option("--out", st_out, "directory for summary and histogram CSVs");
    s_st->add_flag("--plots", st_plots, "also render histogram PNGs (needs --out)");
    s_st->callback([&] { run = [&] { cmd_stats(st_in, st_bins, st_out, st_plots, out); }; });

    std::string ex_in;
    std::string ex_out;
    auto* s_ex = app.add_subcommand("export-png", "write a patch as an 8-bit RGB PNG");
    s_ex->add_option("input", ex_in, "input .brp")->required()->check(CLI::ExistingFile);
    s_ex->add_option("output", ex_out, "output .png")->required();
    s_ex->callback([&] {
        run = [&] {
            guard_distinct(ex_in, ex_out);
            export_png(load_patch(ex_in), ex_out);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "brpatch: error[usage]: " << one_line(e.what()) << "\n";
        return kExitConfig;
    }

    try {
        run();
    } catch (const Error& e) {
        err << "brpatch: error[" << e.category() << "]: " << one_line(e.what()) << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "brpatch: error[internal]: " << one_line(e.what()) << "\n";
        return kExitOther;
    }
    return kExitOk;
}

} // namespace brpatch
