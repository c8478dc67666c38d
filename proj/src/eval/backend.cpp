#include "brpatch/backend.hpp"

#include "brpatch/errors.hpp"
#include "brpatch/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace brpatch {

namespace {

constexpr std::string_view kModelMagic = "BRMODEL1";

nlohmann::json arch_to_json(const CnnArch& a)
{
    return {{"image_size", a.image_size},
            {"num_classes", a.num_classes},
            {"channels", a.channels},
            {"pool", a.pool == GlobalPool::max ? "max" : "avg"}};
}

CnnArch arch_from_json(const nlohmann::json& j)
{
    CnnArch a;
    a.image_size = j.at("image_size").get<int>();
    a.num_classes = j.at("num_classes").get<int>();
    a.channels = j.at("channels").get<std::vector<int>>();
    const auto pool = j.at("pool").get<std::string>();
    if (pool != "max" && pool != "avg") {
        throw DomainError("unknown global pool '" + pool + "'");
    }
    a.pool = pool == "max" ? GlobalPool::max : GlobalPool::avg;
    return a;
}

} // namespace

const char* to_string(Capability c) noexcept
{
    return c == Capability::white_box ? "white_box" : "black_box";
}

std::vector<double> ClassifierBackend::log_probs(const Image& image) const
{
    auto p = predict(image);
    for (double& v : p) {
        v = std::log(v);
    }
    return p;
}

LogProbGrad ClassifierBackend::log_prob_grad(const Image&, int) const
{
    throw CapabilityError("backend '" + model_id() + "' is black-box: input gradients are unavailable");
}

void ClassifierBackend::require_white_box(const char* operation) const
{
    if (capability() != Capability::white_box) {
        throw CapabilityError(std::string(operation) + " requires a white-box backend, but '" + model_id() +
                              "' is black-box");
    }
}

std::vector<std::vector<double>> ClassifierBackend::predict(std::span<const Image> batch) const
{
    std::vector<std::vector<double>> out(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) { out[i] = predict(batch[i]); }, concurrent_inference());
    return out;
}

std::vector<Image> ClassifierBackend::grad_log_prob(std::span<const Image> batch, int cls) const
{
    require_white_box("grad_log_prob");
    std::vector<Image> out(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) { out[i] = log_prob_grad(batch[i], cls).grad; },
                 concurrent_inference());
    return out;
}

CnnBackend::CnnBackend(SmallCnn model, std::string model_id, Capability capability, double clean_accuracy)
    : model_(std::move(model)), model_id_(std::move(model_id)), capability_(capability),
      clean_accuracy_(clean_accuracy)
{
}

std::vector<double> CnnBackend::predict(const Image& image) const
{
    return softmax(model_.logits(image.data));
}

std::vector<double> CnnBackend::log_probs(const Image& image) const
{
    return log_softmax(model_.logits(image.data));
}

LogProbGrad CnnBackend::log_prob_grad(const Image& image, int cls) const
{
    require_white_box("log_prob_grad");
    if (cls < 0 || cls >= num_classes()) {
        throw DomainError("class index " + std::to_string(cls) + " out of range");
    }
    SmallCnn::Trace trace;
    const auto z = model_.forward(image.data, trace);
    const auto lp = log_softmax(z);
    // d log p_c / d z = onehot(c) - softmax(z)
    std::vector<double> dz(lp.size());
    for (std::size_t k = 0; k < lp.size(); ++k) {
        dz[k] = -std::exp(lp[k]);
    }
    dz[static_cast<std::size_t>(cls)] += 1.0;
    LogProbGrad out{lp[static_cast<std::size_t>(cls)], Image(image.height, image.width)};
    model_.backward(trace, dz, {}, out.grad.data);
    return out;
}

CnnBackend CnnBackend::with_capability(Capability capability) const
{
    return CnnBackend(model_, model_id_, capability, clean_accuracy_);
}

void save_backend(const CnnBackend& backend, const std::filesystem::path& path)
{
    const std::string header = nlohmann::json{{"model_id", backend.model_id()},
                                              {"capability", to_string(backend.capability())},
                                              {"clean_accuracy", backend.clean_accuracy()},
                                              {"arch", arch_to_json(backend.model().arch())}}
                                   .dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrorKind::open_failed, "cannot open for writing: " + path.string());
    }
    out.write(kModelMagic.data(), static_cast<std::streamsize>(kModelMagic.size()));
    const auto len = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const auto params = backend.model().parameters();
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
    if (!out) {
        throw IoError(IoErrorKind::write_failed, "write failed: " + path.string());
    }
}

CnnBackend load_backend(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(IoErrorKind::open_failed, "cannot open model: " + path.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t head = kModelMagic.size() + 4;
    if (bytes.size() < head || std::memcmp(bytes.data(), kModelMagic.data(), kModelMagic.size()) != 0) {
        throw IoError(IoErrorKind::corrupt_header, "corrupt header: not a BRMODEL1 file: " + path.string());
    }
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + kModelMagic.size(), 4);
    if (bytes.size() - head < len) {
        throw IoError(IoErrorKind::corrupt_header, "corrupt header: metadata length exceeds file size");
    }
    std::string id;
    Capability cap = Capability::black_box;
    double acc = 0.0;
    CnnArch arch;
    try {
        const auto meta = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(head),
                                                bytes.begin() + static_cast<std::ptrdiff_t>(head + len));
        id = meta.at("model_id").get<std::string>();
        const auto c = meta.at("capability").get<std::string>();
        if (c != "white_box" && c != "black_box") {
            throw IoError(IoErrorKind::metadata_parse, "unknown capability '" + c + "'");
        }
        cap = c == "white_box" ? Capability::white_box : Capability::black_box;
        acc = meta.at("clean_accuracy").get<double>();
        arch = arch_from_json(meta.at("arch"));
        arch.validate();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoErrorKind::metadata_parse, std::string("model metadata parse failure: ") + e.what());
    } catch (const DomainError& e) {
        throw IoError(IoErrorKind::metadata_parse, std::string("model metadata invalid: ") + e.what());
    }
    SmallCnn model(arch);
    const std::size_t payload = bytes.size() - head - len;
    if (payload != model.parameter_count() * sizeof(double)) {
        throw IoError(IoErrorKind::payload_length_mismatch, "payload length mismatch in " + path.string());
    }
    std::memcpy(model.parameters().data(), bytes.data() + head + len, payload);
    return CnnBackend(std::move(model), std::move(id), cap, acc);
}

ReferenceBackends reference_backends(std::uint64_t seed_a, std::uint64_t seed_b, const Dataset& data,
                                     const ReferenceBackendConfig& cfg)
{
    if (data.train.empty() || data.test.empty()) {
        throw IoError(IoErrorKind::open_failed, "dataset missing: empty train or test split");
    }
    CnnArch arch = cfg.arch;
    arch.image_size = data.train.height();
    arch.num_classes = data.num_classes;

    auto train_one = [&](std::uint64_t seed, const char* role) {
        SmallCnn net = SmallCnn::initialized(arch, derive_seed(seed, 0));
        FitConfig fc = cfg.fit;
        fc.seed = derive_seed(seed, 1);
        fit(net, data.train, data.test, fc);
        const double acc = accuracy(net, data.test);
        if (acc < cfg.min_accuracy) {
            std::ostringstream msg;
            msg << "backend underfit: " << role << " (seed " << seed << ") reached clean accuracy " << acc
                << " < floor " << cfg.min_accuracy;
            throw BackendError(msg.str());
        }
        return std::pair{std::move(net), acc};
    };

    auto [net_a, acc_a] = train_one(seed_a, "source");
    std::ostringstream id_a;
    id_a << "cnn-s" << seed_a;
    CnnBackend source(std::move(net_a), id_a.str(), Capability::white_box, acc_a);

    std::ostringstream id_b;
    id_b << "cnn-s" << seed_b;
    if (seed_a == seed_b) {
        // Identical seeds give identical weights; skip the second fit.
        return {source, CnnBackend(source.model(), id_b.str(), Capability::black_box, acc_a)};
    }
    auto [net_b, acc_b] = train_one(seed_b, "target");
    return {std::move(source), CnnBackend(std::move(net_b), id_b.str(), Capability::black_box, acc_b)};
}

ReferenceBackends reference_backends(std::uint64_t seed_a, std::uint64_t seed_b, const TextureDatasetConfig& data_cfg,
                                     const ReferenceBackendConfig& cfg)
{
    return reference_backends(seed_a, seed_b, generate_texture_dataset(data_cfg), cfg);
}

} // namespace brpatch
