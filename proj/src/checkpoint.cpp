#include "recordkit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "recordkit/errors.hpp"

namespace recordkit {

namespace {

void put_u16(std::ostream& os, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b, 8);
}

uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os.write("RECD", 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw ConfigError("tensor name too long: " + name);
        put_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        if (t.rank() > 0xff) throw ConfigError("tensor rank too large");
        char rank = static_cast<char>(t.rank());
        os.write(&rank, 1);
        for (size_t e : t.shape()) put_u32(os, static_cast<uint32_t>(e));
        for (size_t i = 0; i < t.numel(); ++i) put_f64(os, t[i]);
    }
    if (!os) throw MissingArtifactError("write failed: " + path);
}

NamedTensors read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("missing checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RECD", 4) != 0) {
        throw ConfigError("bad checkpoint magic in " + path);
    }
    uint32_t version = get_u32(is);
    if (version != kCheckpointVersion) {
        throw ConfigError("unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t count = get_u32(is);
    NamedTensors out;
    out.reserve(count);
    for (uint32_t k = 0; k < count; ++k) {
        uint16_t name_len = get_u16(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        char rank = 0;
        is.read(&rank, 1);
        std::vector<size_t> shape(static_cast<size_t>(rank));
        for (auto& e : shape) e = get_u32(is);
        size_t numel = 1;
        for (size_t e : shape) numel *= e;
        std::vector<double> data(numel);
        for (auto& v : data) v = get_f64(is);
        if (!is) throw ConfigError("truncated checkpoint: " + path);
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

NamedTensors model_to_tensors(const Model& model) {
    const ModelDims& d = model.dims;
    NamedTensors out;
    out.emplace_back("meta.dims",
                     Tensor({7}, {static_cast<double>(d.d_z), static_cast<double>(d.d_e),
                                  static_cast<double>(d.d_t), static_cast<double>(d.hidden),
                                  static_cast<double>(d.vocab), static_cast<double>(d.concepts),
                                  static_cast<double>(d.max_len)}));
    out.emplace_back("meta.final_train_loss", Tensor::scalar(model.final_train_loss));
    out.emplace_back("schedule.beta",
                     Tensor({model.schedule.timesteps}, model.schedule.beta));
    out.emplace_back("schedule.alpha_bar",
                     Tensor({model.schedule.timesteps}, model.schedule.alpha_bar));
    out.emplace_back("dataset.means", model.dataset.means);
    out.emplace_back("dataset.sigma", Tensor::scalar(model.dataset.sigma));
    out.emplace_back("enc.table", model.encoder.table);
    out.emplace_back("enc.pos", model.encoder.pos);
    out.emplace_back("enc.mix_w", model.encoder.mix_w);
    out.emplace_back("enc.mix_b", model.encoder.mix_b);
    out.emplace_back("den.w1", model.denoiser.w1);
    out.emplace_back("den.b1", model.denoiser.b1);
    out.emplace_back("den.w2", model.denoiser.w2);
    out.emplace_back("den.b2", model.denoiser.b2);
    out.emplace_back("den.w3", model.denoiser.w3);
    out.emplace_back("den.b3", model.denoiser.b3);
    return out;
}

Model model_from_tensors(const NamedTensors& tensors) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : tensors) by_name[name] = &t;
    auto need = [&](const std::string& name) -> const Tensor& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("checkpoint missing tensor '" + name + "'");
        return *it->second;
    };

    const Tensor& dims_t = need("meta.dims");
    if (dims_t.numel() != 7) throw ConfigError("meta.dims must have 7 entries");
    Model m;
    m.dims.d_z = static_cast<size_t>(dims_t[0]);
    m.dims.d_e = static_cast<size_t>(dims_t[1]);
    m.dims.d_t = static_cast<size_t>(dims_t[2]);
    m.dims.hidden = static_cast<size_t>(dims_t[3]);
    m.dims.vocab = static_cast<size_t>(dims_t[4]);
    m.dims.concepts = static_cast<size_t>(dims_t[5]);
    m.dims.max_len = static_cast<size_t>(dims_t[6]);
    m.final_train_loss = need("meta.final_train_loss")[0];

    const Tensor& beta = need("schedule.beta");
    const Tensor& alpha_bar = need("schedule.alpha_bar");
    m.schedule.timesteps = beta.numel();
    m.schedule.beta = beta.vec();
    m.schedule.alpha_bar = alpha_bar.vec();

    m.dataset.means = need("dataset.means");
    m.dataset.sigma = need("dataset.sigma")[0];

    m.encoder.table = need("enc.table");
    m.encoder.pos = need("enc.pos");
    m.encoder.mix_w = need("enc.mix_w");
    m.encoder.mix_b = need("enc.mix_b");
    m.denoiser.w1 = need("den.w1");
    m.denoiser.b1 = need("den.b1");
    m.denoiser.w2 = need("den.w2");
    m.denoiser.b2 = need("den.b2");
    m.denoiser.w3 = need("den.w3");
    m.denoiser.b3 = need("den.b3");
    m.refresh_cached();
    return m;
}

void save_model(const std::string& path, const Model& model) {
    write_checkpoint(path, model_to_tensors(model));
}

Model load_model(const std::string& path) { return model_from_tensors(read_checkpoint(path)); }

}  // namespace recordkit
