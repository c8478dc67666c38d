#include "brpatch/config.hpp"

#include "brpatch/errors.hpp"

#include <fstream>
#include <limits>
#include <set>

namespace brpatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Rejects keys outside `allowed`; every section is a closed schema.
void expect_object(const json& j, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

const json* find(const json& j, const char* key)
{
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

std::string at(const std::string& where, const char* key)
{
    return where + "." + key;
}

void read(const json& j, const char* key, const std::string& where, double& out)
{
    if (const json* v = find(j, key)) {
        if (!v->is_number()) {
            throw ConfigError(at(where, key) + ": expected a number");
        }
        out = v->get<double>();
    }
}

void read(const json& j, const char* key, const std::string& where, int& out)
{
    if (const json* v = find(j, key)) {
        if (!v->is_number_integer()) {
            throw ConfigError(at(where, key) + ": expected an integer");
        }
        const auto x = v->get<std::int64_t>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
            throw ConfigError(at(where, key) + ": out of range");
        }
        out = static_cast<int>(x);
    }
}

void read(const json& j, const char* key, const std::string& where, std::uint64_t& out)
{
    if (const json* v = find(j, key)) {
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
            throw ConfigError(at(where, key) + ": expected a nonnegative integer");
        }
        out = v->get<std::uint64_t>();
    }
}

void read(const json& j, const char* key, const std::string& where, std::string& out)
{
    if (const json* v = find(j, key)) {
        if (!v->is_string()) {
            throw ConfigError(at(where, key) + ": expected a string");
        }
        out = v->get<std::string>();
    }
}

void read_pair(const json& j, const char* key, const std::string& where, double& lo, double& hi)
{
    if (const json* v = find(j, key)) {
        if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
            throw ConfigError(at(where, key) + ": expected [low, high]");
        }
        lo = (*v)[0].get<double>();
        hi = (*v)[1].get<double>();
    }
}

std::optional<fs::path> read_path(const json& j, const char* key, const std::string& where, const fs::path& base)
{
    const json* v = find(j, key);
    if (!v || v->is_null()) {
        return std::nullopt;
    }
    if (!v->is_string()) {
        throw ConfigError(at(where, key) + ": expected a path string");
    }
    fs::path p = v->get<std::string>();
    if (p.is_relative()) {
        p = base / p;
    }
    if (!fs::exists(p)) {
        throw IoError(IoErrorKind::open_failed, at(where, key) + ": path does not exist: " + p.string());
    }
    return fs::weakly_canonical(p);
}

// Wraps module-level validation so every bad value surfaces as a config error.
template <typename Fn>
void validated(const std::string& where, Fn&& fn)
{
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const DomainError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

TransformConfig parse_transform(const json& j, const std::string& where)
{
    expect_object(j, where, {"angle_range_deg", "scale_range", "placement"});
    TransformConfig t;
    read_pair(j, "angle_range_deg", where, t.angle_min_deg, t.angle_max_deg);
    read_pair(j, "scale_range", where, t.scale_min, t.scale_max);
    if (const json* p = find(j, "placement")) {
        if (p->is_string() && p->get<std::string>() == "uniform_interior") {
            t.placement = Placement::uniform_interior;
        } else if (p->is_object()) {
            const std::string w = at(where, "placement");
            expect_object(*p, w, {"fixed"});
            if (!p->contains("fixed")) {
                throw ConfigError(w + ": expected {\"fixed\": [cx, cy]}");
            }
            t.placement = Placement::fixed;
            read_pair(*p, "fixed", w, t.fixed_cx, t.fixed_cy);
        } else {
            throw ConfigError(at(where, "placement") + ": expected \"uniform_interior\" or {\"fixed\": [cx, cy]}");
        }
    }
    validated(where, [&] { t.validate(); });
    return t;
}

TextureDatasetConfig parse_texture(const json& j, const std::string& where)
{
    expect_object(j, where,
                  {"seed", "n_train", "n_test", "image_size", "contrast_range", "radius_range", "period_range", "noise"});
    TextureDatasetConfig c;
    read(j, "seed", where, c.seed);
    read(j, "n_train", where, c.n_train);
    read(j, "n_test", where, c.n_test);
    read(j, "image_size", where, c.image_size);
    read_pair(j, "contrast_range", where, c.contrast_min, c.contrast_max);
    read_pair(j, "radius_range", where, c.radius_min, c.radius_max);
    read_pair(j, "period_range", where, c.period_min, c.period_max);
    read(j, "noise", where, c.noise);
    validated(where, [&] { c.validate(); });
    return c;
}

json texture_json(const TextureDatasetConfig& c)
{
    return {{"seed", c.seed},
            {"n_train", c.n_train},
            {"n_test", c.n_test},
            {"image_size", c.image_size},
            {"contrast_range", {c.contrast_min, c.contrast_max}},
            {"radius_range", {c.radius_min, c.radius_max}},
            {"period_range", {c.period_min, c.period_max}},
            {"noise", c.noise}};
}

BackendsSection parse_backends(const json& j, const fs::path& base)
{
    const std::string where = "backends";
    expect_object(j, where,
                  {"dataset", "texture", "source_model", "target_model", "seed_source", "seed_target", "min_accuracy",
                   "arch", "fit"});
    BackendsSection b;
    b.dataset = read_path(j, "dataset", where, base);
    if (const json* t = find(j, "texture")) {
        b.texture = parse_texture(*t, at(where, "texture"));
    }
    b.source_model = read_path(j, "source_model", where, base);
    b.target_model = read_path(j, "target_model", where, base);
    read(j, "seed_source", where, b.seed_source);
    read(j, "seed_target", where, b.seed_target);
    read(j, "min_accuracy", where, b.reference.min_accuracy);
    if (!(b.reference.min_accuracy >= 0.0 && b.reference.min_accuracy <= 1.0)) {
        throw ConfigError("backends.min_accuracy must lie in [0, 1]");
    }
    if (const json* a = find(j, "arch")) {
        const std::string w = at(where, "arch");
        expect_object(*a, w, {"channels", "pool"});
        auto& arch = b.reference.arch;
        if (const json* ch = find(*a, "channels")) {
            if (!ch->is_array()) {
                throw ConfigError(w + ".channels: expected an integer list");
            }
            arch.channels.clear();
            for (const auto& c : *ch) {
                if (!c.is_number_integer()) {
                    throw ConfigError(w + ".channels: expected an integer list");
                }
                arch.channels.push_back(c.get<int>());
            }
        }
        std::string pool = arch.pool == GlobalPool::max ? "max" : "avg";
        read(*a, "pool", w, pool);
        if (pool != "max" && pool != "avg") {
            throw ConfigError(w + ".pool: expected \"max\" or \"avg\"");
        }
        arch.pool = pool == "max" ? GlobalPool::max : GlobalPool::avg;
        validated(w, [&] { arch.validate(); });
    }
    if (const json* f = find(j, "fit")) {
        const std::string w = at(where, "fit");
        expect_object(*f, w, {"epochs", "batch_size", "learning_rate", "input_noise"});
        auto& fit = b.reference.fit;
        read(*f, "epochs", w, fit.epochs);
        read(*f, "batch_size", w, fit.batch_size);
        read(*f, "learning_rate", w, fit.learning_rate);
        read(*f, "input_noise", w, fit.input_noise);
        if (fit.epochs < 1 || fit.batch_size < 1 || !(fit.learning_rate > 0.0) || !(fit.input_noise >= 0.0)) {
            throw ConfigError(w + ": epochs and batch_size must be positive, learning_rate > 0, input_noise >= 0");
        }
    }
    return b;
}

TrainSection parse_train(const json& j)
{
    const std::string where = "train";
    expect_object(j, where,
                  {"patch_size", "target_class", "lambda", "epochs", "step_size", "batch_size", "seed", "transform",
                   "init", "eps_guard", "created", "n_train_images", "n_val_images"});
    TrainSection s;
    auto& c = s.config;
    read(j, "patch_size", where, c.patch_size);
    read(j, "target_class", where, c.target_class);
    read(j, "lambda", where, c.lambda);
    read(j, "epochs", where, c.epochs);
    read(j, "step_size", where, c.step_size);
    read(j, "batch_size", where, c.batch_size);
    read(j, "seed", where, c.seed);
    if (const json* t = find(j, "transform")) {
        c.transform = parse_transform(*t, at(where, "transform"));
    }
    std::string init = c.init == PatchInit::gray ? "gray" : "uniform_random";
    read(j, "init", where, init);
    if (init != "gray" && init != "uniform_random") {
        throw ConfigError("train.init: expected \"gray\" or \"uniform_random\"");
    }
    c.init = init == "gray" ? PatchInit::gray : PatchInit::uniform_random;
    read(j, "eps_guard", where, c.eps_guard);
    read(j, "created", where, c.created);
    read(j, "n_train_images", where, s.n_train_images);
    read(j, "n_val_images", where, s.n_val_images);
    if (s.n_train_images == 0 || s.n_val_images == 0) {
        throw ConfigError("train: n_train_images and n_val_images must be positive");
    }
    c.validate();
    return s;
}

EvalSection parse_eval(const json& j)
{
    const std::string where = "eval";
    expect_object(j, where, {"transform", "seed", "n_images", "offset"});
    EvalSection e;
    if (const json* t = find(j, "transform")) {
        e.transform = parse_transform(*t, at(where, "transform"));
    }
    read(j, "seed", where, e.seed);
    read(j, "n_images", where, e.n_images);
    read(j, "offset", where, e.offset);
    if (e.n_images == 0) {
        throw ConfigError("eval.n_images must be positive");
    }
    return e;
}

SweepSection parse_sweep(const json& j)
{
    expect_object(j, "sweep", {"lambdas"});
    SweepSection s;
    if (const json* l = find(j, "lambdas")) {
        if (!l->is_array() || l->empty()) {
            throw ConfigError("sweep.lambdas: expected a nonempty number list");
        }
        s.lambdas.clear();
        for (const auto& v : *l) {
            if (!v.is_number() || !(v.get<double>() >= 0.0)) {
                throw ConfigError("sweep.lambdas: every lambda must be a number >= 0");
            }
            s.lambdas.push_back(v.get<double>());
        }
    }
    return s;
}

PerturbSection parse_perturb(const json& j)
{
    expect_object(j, "perturb", {"suite"});
    PerturbSection s;
    if (const json* suite = find(j, "suite")) {
        if (suite->is_string()) {
            s.suite = parse_suite_name(suite->get<std::string>());
        } else if (suite->is_array() && !suite->empty()) {
            s.suite.clear();
            for (const auto& e : *suite) {
                s.suite.push_back(perturbation_from_json(e));
            }
        } else {
            throw ConfigError("perturb.suite: expected a suite name or a nonempty list");
        }
    }
    return s;
}

HueMapSection parse_huemap(const json& j, const fs::path& base)
{
    const std::string where = "huemap";
    expect_object(j, where, {"threshold", "region", "sign"});
    HueMapSection h;
    read(j, "threshold", where, h.threshold);
    if (!(h.threshold >= 0.0 && h.threshold <= 1.0)) {
        throw ConfigError("huemap.threshold must lie in [0, 1]");
    }
    h.region = read_path(j, "region", where, base);
    std::string sign = h.sign == HueShiftSign::toward_scene ? "toward_scene" : "literal";
    read(j, "sign", where, sign);
    if (sign != "toward_scene" && sign != "literal") {
        throw ConfigError("huemap.sign: expected \"toward_scene\" or \"literal\"");
    }
    h.sign = sign == "literal" ? HueShiftSign::literal : HueShiftSign::toward_scene;
    return h;
}

json path_json(const std::optional<fs::path>& p)
{
    return p ? json(p->string()) : json(nullptr);
}

} // namespace

std::vector<PerturbationSpec> parse_suite_name(const std::string& name)
{
    const auto all = default_suite();
    if (name == "default") {
        return all;
    }
    std::vector<PerturbationSpec> out{all[0]};
    if (name == "feature") {
        out.insert(out.end(), all.begin() + 1, all.begin() + 3);
    } else if (name == "drift") {
        out.insert(out.end(), all.begin() + 3, all.begin() + 6);
    } else if (name == "size") {
        out.insert(out.end(), all.begin() + 6, all.end());
    } else {
        throw ConfigError("unknown suite '" + name + "' (expected default, feature, drift or size)");
    }
    return out;
}

json to_json(const PerturbationSpec& spec)
{
    json j{{"op", to_string(spec.kind)}};
    if (spec.value) {
        j["value"] = *spec.value;
    }
    return j;
}

PerturbationSpec perturbation_from_json(const json& j)
{
    const std::string where = "perturbation";
    expect_object(j, where, {"op", "value"});
    std::string op;
    read(j, "op", where, op);
    PerturbationSpec s;
    bool known = false;
    for (auto k : {PerturbationKind::original, PerturbationKind::color_transfer, PerturbationKind::gaussian_blur3,
                   PerturbationKind::color_drift, PerturbationKind::resize}) {
        if (op == to_string(k)) {
            s.kind = k;
            known = true;
        }
    }
    if (!known) {
        throw ConfigError("perturbation.op: unknown op '" + op + "'");
    }
    if (const json* v = find(j, "value"); v && !v->is_null()) {
        if (!v->is_number()) {
            throw ConfigError("perturbation.value: expected a number");
        }
        s.value = v->get<double>();
    }
    return s;
}

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir)
{
    expect_object(doc, "config", {"backends", "train", "eval", "sweep", "perturb", "huemap"});
    ExperimentConfig c;
    if (const json* s = find(doc, "backends")) {
        c.backends = parse_backends(*s, base_dir);
    }
    if (const json* s = find(doc, "train")) {
        c.train = parse_train(*s);
    }
    if (const json* s = find(doc, "eval")) {
        c.eval = parse_eval(*s);
    }
    if (const json* s = find(doc, "sweep")) {
        c.sweep = parse_sweep(*s);
    }
    if (const json* s = find(doc, "perturb")) {
        c.perturb = parse_perturb(*s);
    }
    if (const json* s = find(doc, "huemap")) {
        c.huemap = parse_huemap(*s, base_dir);
    }
    return c;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError(IoErrorKind::open_failed, "cannot open config: " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(doc, fs::absolute(path).parent_path());
}

json to_json(const ExperimentConfig& c)
{
    const auto& b = c.backends;
    const auto& t = c.train.config;
    json suite = json::array();
    for (const auto& s : c.perturb.suite) {
        suite.push_back(to_json(s));
    }
    return {
        {"backends",
         {{"dataset", path_json(b.dataset)},
          {"texture", texture_json(b.texture)},
          {"source_model", path_json(b.source_model)},
          {"target_model", path_json(b.target_model)},
          {"seed_source", b.seed_source},
          {"seed_target", b.seed_target},
          {"min_accuracy", b.reference.min_accuracy},
          {"arch",
           {{"channels", b.reference.arch.channels},
            {"pool", b.reference.arch.pool == GlobalPool::max ? "max" : "avg"}}},
          {"fit",
           {{"epochs", b.reference.fit.epochs},
            {"batch_size", b.reference.fit.batch_size},
            {"learning_rate", b.reference.fit.learning_rate},
            {"input_noise", b.reference.fit.input_noise}}}}},
        {"train",
         {{"patch_size", t.patch_size},
          {"target_class", t.target_class},
          {"lambda", t.lambda},
          {"epochs", t.epochs},
          {"step_size", t.step_size},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"transform", to_json(t.transform)},
          {"init", t.init == PatchInit::gray ? "gray" : "uniform_random"},
          {"eps_guard", t.eps_guard},
          {"created", t.created},
          {"n_train_images", c.train.n_train_images},
          {"n_val_images", c.train.n_val_images}}},
        {"eval",
         {{"transform", to_json(c.eval.transform)},
          {"seed", c.eval.seed},
          {"n_images", c.eval.n_images},
          {"offset", c.eval.offset}}},
        {"sweep", {{"lambdas", c.sweep.lambdas}}},
        {"perturb", {{"suite", suite}}},
        {"huemap",
         {{"threshold", c.huemap.threshold},
          {"region", path_json(c.huemap.region)},
          {"sign", c.huemap.sign == HueShiftSign::literal ? "literal" : "toward_scene"}}},
    };
}

} // namespace brpatch
