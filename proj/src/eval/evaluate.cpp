#include "brpatch/evaluate.hpp"

#include "brpatch/errors.hpp"
#include "brpatch/parallel.hpp"
#include "brpatch/perturb.hpp"
#include "brpatch/rng.hpp"
#include "brpatch/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace brpatch {

namespace {

constexpr std::uint64_t kDriftStream = 0xd41f7ULL;
constexpr double kDefaultTransferDelta = 0.05;

nlohmann::json transform_json(const TransformSample& t)
{
    return {{"cx", t.cx}, {"cy", t.cy}, {"angle_deg", t.angle_deg}, {"scale", t.scale}};
}

} // namespace

nlohmann::json to_json(const TransformConfig& c)
{
    nlohmann::json j{{"angle_range_deg", {c.angle_min_deg, c.angle_max_deg}},
                     {"scale_range", {c.scale_min, c.scale_max}}};
    if (c.placement == Placement::fixed) {
        j["placement"] = {{"fixed", {c.fixed_cx, c.fixed_cy}}};
    } else {
        j["placement"] = "uniform_interior";
    }
    return j;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path.string());
    }
    return out;
}

} // namespace

EvalReport evaluate_asr(const Patch& patch, const ImageBatch& images, int target_class,
                        const ClassifierBackend& backend, const TransformConfig& tcfg, std::uint64_t seed,
                        std::string patch_id)
{
    if (images.empty()) {
        throw DomainError("evaluate_asr needs a nonempty image set");
    }
    if (target_class < 0 || target_class >= backend.num_classes()) {
        throw DomainError("target class " + std::to_string(target_class) + " is not below num_classes " +
                          std::to_string(backend.num_classes()));
    }
    tcfg.validate();

    const Dims image_dims{images.height(), images.width()};
    const Dims patch_dims{patch.height(), patch.width()};
    const auto values = patch.to_doubles();
    const PatchView view{patch.height(), patch.width(), values};

    // Transforms are drawn up front so infeasible geometry fails fast and the
    // draw never depends on scheduling.
    const std::size_t n = images.size();
    std::vector<TransformSample> transforms(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        transforms[i] = sample_transform(rng, tcfg, image_dims, patch_dims);
    }

    enum class Status : char { excluded, ok, failed };
    std::vector<Status> status(n, Status::ok);
    std::vector<ImageOutcome> outcomes(n);
    std::vector<std::string> errors(n);

    parallel_for(
        n,
        [&](std::size_t i) {
            if (images.has_labels() && images.label(i) == target_class) {
                status[i] = Status::excluded;
                return;
            }
            try {
                const Composite comp = compose(images.image(i), view, transforms[i]);
                const auto probs = backend.predict(comp.image);
                if (probs.size() != static_cast<std::size_t>(backend.num_classes())) {
                    throw BackendError("probability vector has the wrong length");
                }
                const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
                outcomes[i] = {i, transforms[i], static_cast<int>(best), probs[static_cast<std::size_t>(target_class)]};
            } catch (const InfeasibleError&) {
                throw;
            } catch (const std::exception& e) {
                status[i] = Status::failed;
                errors[i] = e.what();
            }
        },
        backend.concurrent_inference());

    EvalReport report;
    report.patch_id = std::move(patch_id);
    report.model_id = backend.model_id();
    report.target_class = target_class;
    report.master_seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        switch (status[i]) {
        case Status::excluded: ++report.n_excluded; break;
        case Status::failed: report.failures.push_back({i, errors[i]}); break;
        case Status::ok:
            report.per_image.push_back(outcomes[i]);
            if (outcomes[i].predicted == target_class) {
                ++report.n_success;
            }
            break;
        }
    }
    const std::size_t attempted = n - report.n_excluded;
    if (!report.failures.empty() && report.failures.size() * 100 > attempted) {
        throw BackendError("backend failed on " + std::to_string(report.failures.size()) + " of " +
                           std::to_string(attempted) + " images (first: image " +
                           std::to_string(report.failures.front().image_index) + ": " +
                           report.failures.front().message + ")");
    }
    report.n_images = report.per_image.size();
    report.asr = report.n_images == 0 ? 0.0 : static_cast<double>(report.n_success) / report.n_images;
    report.config_snapshot = {{"transform", to_json(tcfg)},
                              {"seed", seed},
                              {"n_images_requested", n},
                              {"patch_height", patch.height()},
                              {"patch_width", patch.width()},
                              {"backend", backend.model_id()},
                              {"capability", to_string(backend.capability())}};
    return report;
}

nlohmann::json to_json(const EvalReport& r)
{
    nlohmann::json per = nlohmann::json::array();
    for (const auto& o : r.per_image) {
        per.push_back({{"image_index", o.image_index},
                       {"transform", transform_json(o.transform)},
                       {"predicted", o.predicted},
                       {"target_prob", o.target_prob}});
    }
    nlohmann::json fails = nlohmann::json::array();
    for (const auto& f : r.failures) {
        fails.push_back({{"image_index", f.image_index}, {"message", f.message}});
    }
    return {{"patch_id", r.patch_id},
            {"model_id", r.model_id},
            {"target_class", r.target_class},
            {"n_images", r.n_images},
            {"n_success", r.n_success},
            {"n_excluded", r.n_excluded},
            {"asr", r.asr},
            {"per_image", per},
            {"failures", fails},
            {"config_snapshot", r.config_snapshot},
            {"master_seed", r.master_seed}};
}

void write_eval_json(const EvalReport& report, const std::filesystem::path& path)
{
    auto out = open_out(path);
    out << to_json(report).dump(2) << '\n';
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path)
{
    auto out = open_out(path);
    out << "patch_id,model_id,target_class,n_images,n_success,n_excluded,asr\n";
    out << csv_field(report.patch_id) << ',' << csv_field(report.model_id) << ',' << report.target_class << ','
        << report.n_images << ',' << report.n_success << ',' << report.n_excluded << ',' << fmt_double(report.asr)
        << '\n';
}

const char* to_string(PerturbationKind kind) noexcept
{
    switch (kind) {
    case PerturbationKind::original: return "original";
    case PerturbationKind::color_transfer: return "color_transfer";
    case PerturbationKind::gaussian_blur3: return "gaussian_blur3";
    case PerturbationKind::color_drift: return "color_drift";
    case PerturbationKind::resize: return "resize_bilinear";
    case PerturbationKind::hue_map: return "hue_map";
    }
    return "unknown";
}

std::vector<PerturbationSpec> default_suite()
{
    return {
        {PerturbationKind::original, std::nullopt},
        {PerturbationKind::color_transfer, std::nullopt},
        {PerturbationKind::gaussian_blur3, std::nullopt},
        {PerturbationKind::color_drift, 0.10},
        {PerturbationKind::color_drift, 0.15},
        {PerturbationKind::color_drift, 0.20},
        {PerturbationKind::resize, 1.2},
        {PerturbationKind::resize, 1.4},
        {PerturbationKind::resize, 1.6},
    };
}

std::pair<Patch, double> apply_perturbation(const Patch& patch, const PerturbationSpec& spec, std::uint64_t seed)
{
    switch (spec.kind) {
    case PerturbationKind::original: return {patch, 0.0};
    case PerturbationKind::color_transfer: {
        double delta = 0.0;
        if (spec.value) {
            delta = *spec.value;
        } else {
            const auto [lo, hi] = color_transfer_interval(patch);
            if (hi >= kDefaultTransferDelta) {
                delta = kDefaultTransferDelta;
            } else if (lo <= -kDefaultTransferDelta) {
                delta = -kDefaultTransferDelta;
            } else {
                delta = hi >= -lo ? hi : lo;
            }
        }
        return {color_transfer(patch, delta), delta};
    }
    case PerturbationKind::gaussian_blur3: return {gaussian_blur3(patch), 0.0};
    case PerturbationKind::color_drift: {
        const double q = spec.value.value_or(0.10);
        return {color_drift(patch, q, derive_seed(seed, kDriftStream)), q};
    }
    case PerturbationKind::resize: {
        const double f = spec.value.value_or(1.0);
        if (!(f > 0.0)) {
            throw DomainError("resize factor must be positive");
        }
        const int h = std::max(1, static_cast<int>(std::lround(patch.height() * f)));
        const int w = std::max(1, static_cast<int>(std::lround(patch.width() * f)));
        return {resize_bilinear(patch, h, w), f};
    }
    case PerturbationKind::hue_map:
        throw DomainError("hue_map needs a target region and is not part of robustness suites");
    }
    throw DomainError("unknown perturbation");
}

namespace {

std::string row_label(PerturbationKind kind, double param, const Patch& p)
{
    switch (kind) {
    case PerturbationKind::original: return "original";
    case PerturbationKind::color_transfer: return "color_transfer(" + fmt_double(param, 4) + ")";
    case PerturbationKind::gaussian_blur3: return "gaussian_blur3";
    case PerturbationKind::color_drift: return "color_drift(" + fmt_double(param, 4) + ")";
    case PerturbationKind::resize: return "resize(" + std::to_string(p.height()) + "x" + std::to_string(p.width()) + ")";
    case PerturbationKind::hue_map: return "hue_map";
    }
    return "unknown";
}

const char* table_of(PerturbationKind kind)
{
    switch (kind) {
    case PerturbationKind::color_drift: return "drift";
    case PerturbationKind::resize: return "size";
    default: return "feature";
    }
}

} // namespace

RobustnessTable robustness_table(const Patch& patch, const std::vector<PerturbationSpec>& suite,
                                 const ImageBatch& images, int target_class, const ClassifierBackend& backend,
                                 const TransformConfig& tcfg, std::uint64_t seed)
{
    if (suite.empty()) {
        throw DomainError("robustness suite is empty");
    }
    RobustnessTable table;
    table.master_seed = seed;
    table.target_class = target_class;
    for (const auto& spec : suite) {
        auto [perturbed, param] = apply_perturbation(patch, spec, seed);
        RobustnessRow row;
        row.kind = spec.kind;
        row.parameter = param;
        row.label = row_label(spec.kind, param, perturbed);
        row.table = table_of(spec.kind);
        row.patch_height = perturbed.height();
        row.patch_width = perturbed.width();
        row.report = evaluate_asr(perturbed, images, target_class, backend, tcfg, seed, row.label);
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::json to_json(const RobustnessTable& table)
{
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json tables = nlohmann::json::object();
    for (const auto& r : table.rows) {
        rows.push_back({{"label", r.label},
                        {"table", r.table},
                        {"kind", to_string(r.kind)},
                        {"parameter", r.parameter},
                        {"patch_height", r.patch_height},
                        {"patch_width", r.patch_width},
                        {"n_images", r.report.n_images},
                        {"n_success", r.report.n_success},
                        {"asr", r.report.asr}});
        tables[r.table][r.label] = r.report.asr;
    }
    return {{"master_seed", table.master_seed}, {"target_class", table.target_class}, {"rows", rows},
            {"tables", tables}};
}

void write_robustness_csv(const RobustnessTable& table, const std::filesystem::path& path)
{
    auto out = open_out(path);
    out << "label,table,kind,parameter,patch_height,patch_width,n_images,n_success,asr\n";
    for (const auto& r : table.rows) {
        out << csv_field(r.label) << ',' << r.table << ',' << to_string(r.kind) << ',' << fmt_double(r.parameter)
            << ',' << r.patch_height << ',' << r.patch_width << ',' << r.report.n_images << ','
            << r.report.n_success << ',' << fmt_double(r.report.asr) << '\n';
    }
}

std::vector<BrightnessRow> brightness_report(const std::vector<Patch>& patches, const std::vector<std::string>& names,
                                             int bins)
{
    if (patches.empty()) {
        throw DomainError("brightness_report needs at least one patch");
    }
    if (!names.empty() && names.size() != patches.size()) {
        throw DomainError("brightness_report: one name per patch");
    }
    std::vector<BrightnessRow> rows;
    rows.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        rows.push_back({names.empty() ? "patch" + std::to_string(i) : names[i], brightness_stats(patches[i], bins)});
    }
    return rows;
}

void write_brightness_csv(const std::vector<BrightnessRow>& rows, const std::filesystem::path& summary_path,
                          const std::filesystem::path& histogram_path)
{
    auto out = open_out(summary_path);
    out << "name,min_b,max_b,range\n";
    for (const auto& r : rows) {
        out << csv_field(r.name) << ',' << fmt_double(r.stats.min_b) << ',' << fmt_double(r.stats.max_b) << ','
            << fmt_double(r.stats.range) << '\n';
    }
    auto hist = open_out(histogram_path);
    hist << "name,bin,lo,hi,count\n";
    for (const auto& r : rows) {
        for (std::size_t b = 0; b < r.stats.histogram.size(); ++b) {
            hist << csv_field(r.name) << ',' << b << ',' << fmt_double(r.stats.bin_edges[b]) << ','
                 << fmt_double(r.stats.bin_edges[b + 1]) << ',' << r.stats.histogram[b] << '\n';
        }
    }
}

} // namespace brpatch
