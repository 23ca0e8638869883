#include "bgfg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bgfg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'G', 'F', 'G'};
constexpr std::uint8_t kDtypeF64 = 1;

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    template <class T>
    T get(const char* what) {
        T v;
        std::memcpy(&v, take(sizeof(T), what), sizeof(T));
        return v;
    }

    const char* take(std::size_t n, const char* what) {
        if (n > bytes_.size() - pos_)
            throw DataError("checkpoint " + path_ + ": truncated while reading " + what);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

const std::string kStage1 = "stage1/", kStage2 = "stage2/", kBridge = "bridge/";

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw DataError("checkpoint: no tensor named " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta = ckpt.metadata.dump();
    put<std::uint32_t>(out, std::uint32_t(meta.size()));
    out += meta;
    put<std::uint32_t>(out, std::uint32_t(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put<std::uint32_t>(out, std::uint32_t(name.size()));
        out += name;
        put<std::uint32_t>(out, std::uint32_t(t.rank()));
        for (auto d : t.shape()) put<std::uint64_t>(out, d);
        put<std::uint8_t>(out, kDtypeF64);
        out.append(reinterpret_cast<const char*>(t.raw()), t.size() * sizeof(Real));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader in(bytes, path);

    if (std::memcmp(in.take(4, "magic"), kMagic, 4) != 0)
        throw DataError("checkpoint " + path + ": magic mismatch (not a BGFG checkpoint)");
    const auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint " + path + ": unsupported version " + std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    const auto meta_len = in.get<std::uint32_t>("metadata length");
    const char* meta = in.take(meta_len, "metadata");
    try {
        ckpt.metadata = nlohmann::json::parse(meta, meta + meta_len);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + ": malformed metadata: " + e.what());
    }
    const auto count = in.get<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint32_t>("tensor name length");
        std::string name(in.take(name_len, "tensor name"), name_len);
        const auto rank = in.get<std::uint32_t>("tensor rank");
        if (rank == 0 || rank > 8) throw DataError("checkpoint " + path + ": tensor " + name + " has invalid rank");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = in.get<std::uint64_t>("tensor dims");
            if (d == 0 || d > (std::size_t(1) << 40) / n)
                throw DataError("checkpoint " + path + ": tensor " + name + " has invalid extents");
            n *= d;
        }
        if (in.get<std::uint8_t>("dtype") != kDtypeF64)
            throw DataError("checkpoint " + path + ": tensor " + name + " has an unsupported dtype");
        const char* payload = in.take(n * sizeof(Real), "tensor payload");
        Tensor t(shape);
        std::memcpy(t.raw(), payload, n * sizeof(Real));
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) throw DataError("checkpoint " + path + ": trailing bytes after the last tensor");
    return ckpt;
}

nlohmann::json to_json(const EncoderDecoderProfile& p) {
    return {{"input_size", p.input_size},
            {"channel_progression", p.channel_progression},
            {"latent_channels", p.latent_channels},
            {"use_batchnorm", p.use_batchnorm},
            {"encoder_slope", p.encoder_slope}};
}

nlohmann::json to_json(const McfcnProfile& p) {
    return {{"in_channels", p.in_channels},       {"input_size", p.input_size},
            {"stage_channels", p.stage_channels}, {"fc6_dilation", p.fc6_dilation},
            {"output_stride", p.output_stride},   {"fc_channels", p.fc_channels},
            {"num_classes", p.num_classes},       {"use_batchnorm", p.use_batchnorm}};
}

EncoderDecoderProfile encoder_decoder_profile_from_json(const nlohmann::json& j) {
    try {
        EncoderDecoderProfile p;
        p.input_size = j.at("input_size");
        p.channel_progression = j.at("channel_progression").get<std::vector<std::size_t>>();
        p.latent_channels = j.at("latent_channels");
        p.use_batchnorm = j.at("use_batchnorm");
        p.encoder_slope = j.at("encoder_slope");
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad stage-1 profile: ") + e.what());
    }
}

McfcnProfile mcfcn_profile_from_json(const nlohmann::json& j) {
    try {
        McfcnProfile p;
        p.in_channels = j.at("in_channels");
        p.input_size = j.at("input_size");
        p.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
        p.fc6_dilation = j.at("fc6_dilation");
        p.output_stride = j.at("output_stride");
        p.fc_channels = j.at("fc_channels");
        p.num_classes = j.at("num_classes");
        p.use_batchnorm = j.at("use_batchnorm");
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad stage-2 profile: ") + e.what());
    }
}

Checkpoint model_checkpoint(const TwoStageModel& model, std::uint64_t seed, int step) {
    Checkpoint c;
    c.metadata = {{"stage1", to_json(model.stage1_profile)},
                  {"stage2", to_json(model.stage2_profile)},
                  {"channel_mean", model.channel_mean},
                  {"channel_order", model.uses_background() ? nlohmann::json{"frame", "background"}
                                                            : nlohmann::json{"frame"}},
                  {"align_corners", false},
                  {"seed", seed},
                  {"step", step}};
    for (const auto& [name, p] : model.stage1.params()) c.tensors.emplace_back(kStage1 + name, p.value);
    for (const auto& [name, p] : model.stage2.params()) c.tensors.emplace_back(kStage2 + name, p.value);
    for (const auto& [name, p] : model.bridge.coefficients()) c.tensors.emplace_back(kBridge + name, p.value);
    return c;
}

TwoStageModel model_from_checkpoint(const Checkpoint& ckpt) {
    const auto& meta = ckpt.metadata;
    if (!meta.contains("stage1") || !meta.contains("stage2") || !meta.contains("channel_mean"))
        throw DataError("checkpoint: metadata lacks profiles or normalisation");
    TwoStageModel m(encoder_decoder_profile_from_json(meta["stage1"]), mcfcn_profile_from_json(meta["stage2"]));
    const auto mean = meta["channel_mean"].get<std::vector<Real>>();
    if (mean.size() != 3) throw DataError("checkpoint: channel_mean must have 3 entries");
    std::copy(mean.begin(), mean.end(), m.channel_mean.begin());

    std::size_t seen = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        ParameterSet* target = nullptr;
        std::string local;
        if (name.starts_with(kStage1)) target = &m.stage1.params(), local = name.substr(kStage1.size());
        else if (name.starts_with(kStage2)) target = &m.stage2.params(), local = name.substr(kStage2.size());
        else if (name.starts_with(kBridge)) {
            local = name.substr(kBridge.size());
            const auto& coeffs = m.bridge.coefficients();
            if (!coeffs.contains(local) || !coeffs.get(local).value.bitwise_equal(t))
                throw DataError("checkpoint: bridge tensor " + name + " differs from the fixed coefficients");
            continue;
        }
        if (!target || !target->contains(local)) throw DataError("checkpoint: unexpected tensor " + name);
        Parameter& p = target->get(local);
        if (p.value.shape() != t.shape())
            throw DataError("checkpoint: tensor " + name + " has shape " + shape_to_string(t.shape()) +
                            ", profile declares " + shape_to_string(p.value.shape()));
        p.value = t;
        p.zero_grad();
        ++seen;
    }
    if (seen != m.stage1.params().size() + m.stage2.params().size())
        throw DataError("checkpoint: missing parameters (" + std::to_string(seen) + " of " +
                        std::to_string(m.stage1.params().size() + m.stage2.params().size()) + " present)");
    m.initialized = true;
    return m;
}

void save_model(const std::string& path, const TwoStageModel& model, std::uint64_t seed, int step) {
    save_checkpoint(path, model_checkpoint(model, seed, step));
}

TwoStageModel load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

}  // namespace bgfg
