#include "dlaseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace dlaseg {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'D', 'L', 'A', 'C'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    if (!is) throw ParseError("truncated checkpoint", 0);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void write_sizes(std::ostream& os, const std::vector<std::size_t>& v) {
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(v.size()));
    for (std::size_t x : v) write_le<std::uint64_t>(os, x);
}

std::vector<std::size_t> read_sizes(std::istream& is) {
    std::vector<std::size_t> v(read_le<std::uint8_t>(is));
    for (auto& x : v) x = static_cast<std::size_t>(read_le<std::uint64_t>(is));
    return v;
}

void write_disc_cfg(std::ostream& os, const DiscriminatorConfig& c) {
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(c.in_channels));
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(c.base_width));
    write_sizes(os, c.block_convs);
}

DiscriminatorConfig read_disc_cfg(std::istream& is) {
    DiscriminatorConfig c;
    c.in_channels = read_le<std::uint16_t>(is);
    c.base_width = read_le<std::uint16_t>(is);
    c.block_convs = read_sizes(is);
    return c;
}

const Tensor& record(const Checkpoint& c, const std::string& name) {
    auto it = c.records.find(name);
    if (it == c.records.end())
        throw ContractError("checkpoint is missing record \"" + name + "\"");
    return it->second;
}

ConvKernel kernel_from_records(const Checkpoint& c, const std::string& prefix,
                               std::size_t stride) {
    const Tensor& w = record(c, prefix + ".w");
    const Tensor& b = record(c, prefix + ".b");
    if (w.ndim() != 4) throw ContractError("record " + prefix + ".w is not a kernel");
    ConvKernel k(w.dims[0], w.dims[1], w.dims[2], w.dims[3], w.dims[2] / 2, w.dims[3] / 2,
                 stride);
    k.weights = w;
    k.bias = b.data;
    return k;
}

}  // namespace

Checkpoint snapshot(SegModel& model, Discriminator* d1, Discriminator* d2) {
    Checkpoint c;
    c.model_cfg = model.config();
    c.fused = model.fused();
    for (auto& np : model.params()) c.records["gen." + np.name] = np.param->value;
    for (auto& nb : model.buffers()) c.records["gen." + nb.name] = *nb.tensor;
    if (c.fused) {
        const auto& fk = model.fused_kernels();
        auto put = [&](const std::string& name, const std::vector<ConvKernel>& ks) {
            for (std::size_t s = 0; s < ks.size(); ++s) {
                c.records["gen.fused." + name + std::to_string(s) + ".w"] = ks[s].weights;
                Tensor b({ks[s].bias.size()});
                b.data = ks[s].bias;
                c.records["gen.fused." + name + std::to_string(s) + ".b"] = b;
            }
        };
        put("enc", fk.enc);
        put("decb", fk.dec_b);
        put("decr", fk.dec_r);
        put("ctx", fk.ctx);
    }
    if (d1 && d2) {
        c.has_discriminators = true;
        c.d1_cfg = d1->config();
        c.d2_cfg = d2->config();
        for (auto& np : d1->params()) c.records["d1." + np.name] = np.param->value;
        for (auto& np : d2->params()) c.records["d2." + np.name] = np.param->value;
    }
    return c;
}

void write_checkpoint(const fs::path& path, const Checkpoint& c) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 4);
    write_le<std::uint16_t>(os, kVersion);
    std::uint8_t flags = 0;
    if (c.fused) flags |= 1;
    if (c.has_discriminators) flags |= 2;
    write_le<std::uint8_t>(os, flags);
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(c.model_cfg.c1));
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(c.model_cfg.c2));
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(c.model_cfg.in_channels));
    write_sizes(os, c.model_cfg.enc_channels);
    write_sizes(os, c.model_cfg.dec_channels);
    if (c.has_discriminators) {
        write_disc_cfg(os, c.d1_cfg);
        write_disc_cfg(os, c.d2_cfg);
    }
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.records.size()));
    for (const auto& [name, tensor] : c.records) {
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, tensor);
    }

    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        const std::string bytes = os.str();
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("bad checkpoint magic in " + path.string(), 0);
    if (read_le<std::uint16_t>(is) != kVersion)
        throw ParseError("unsupported checkpoint version", 4);
    Checkpoint c;
    const std::uint8_t flags = read_le<std::uint8_t>(is);
    c.fused = flags & 1;
    c.has_discriminators = flags & 2;
    c.model_cfg.c1 = read_le<std::uint16_t>(is);
    c.model_cfg.c2 = read_le<std::uint16_t>(is);
    c.model_cfg.in_channels = read_le<std::uint16_t>(is);
    c.model_cfg.enc_channels = read_sizes(is);
    c.model_cfg.dec_channels = read_sizes(is);
    if (c.has_discriminators) {
        c.d1_cfg = read_disc_cfg(is);
        c.d2_cfg = read_disc_cfg(is);
    }
    const std::uint32_t n = read_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name(read_le<std::uint16_t>(is), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        if (!is) throw ParseError("truncated record name", 0);
        c.records[name] = read_tensor(is);
    }
    return c;
}

SegModel model_from_checkpoint(const Checkpoint& c) {
    SegModel model(c.model_cfg);
    if (c.fused) {
        SegModel::FusedKernels fk;
        for (std::size_t s = 0; s < 4; ++s) {
            fk.enc.push_back(kernel_from_records(c, "gen.fused.enc" + std::to_string(s), 2));
            fk.dec_b.push_back(kernel_from_records(c, "gen.fused.decb" + std::to_string(s), 1));
            fk.dec_r.push_back(kernel_from_records(c, "gen.fused.decr" + std::to_string(s), 1));
            fk.ctx.push_back(kernel_from_records(c, "gen.fused.ctx" + std::to_string(s), 1));
        }
        model.set_fused_kernels(std::move(fk));
    }
    for (auto& np : model.params()) {
        const Tensor& t = record(c, "gen." + np.name);
        if (t.dims != np.param->value.dims)
            throw ContractError("record gen." + np.name + " has shape " + t.shape_str() +
                                ", expected " + np.param->value.shape_str());
        np.param->value = t;
    }
    for (auto& nb : model.buffers()) *nb.tensor = record(c, "gen." + nb.name);
    return model;
}

Discriminator discriminator_from_checkpoint(const Checkpoint& c, const std::string& prefix) {
    if (!c.has_discriminators)
        throw ContractError("checkpoint carries no discriminator weights");
    Discriminator d(prefix == "d1" ? c.d1_cfg : c.d2_cfg);
    for (auto& np : d.params()) np.param->value = record(c, prefix + "." + np.name);
    return d;
}

FuseReport fuse_checkpoint(const Checkpoint& in, Checkpoint& out, std::size_t probes,
                           std::size_t probe_hw, std::uint64_t seed) {
    if (in.fused) throw ContractError("checkpoint is already fused");
    SegModel unfused = model_from_checkpoint(in);
    SegModel fused = model_from_checkpoint(in);
    fused.fuse();

    FuseReport rep;
    rep.probes = probes;
    std::mt19937_64 rng(derive_stream(seed, 0xf05e));
    for (std::size_t p = 0; p < probes; ++p) {
        Tensor x({1, in.model_cfg.in_channels, probe_hw, probe_hw});
        x.fill_uniform(rng, 0.0, 1.0);
        auto a = unfused.infer(x);
        auto b = fused.infer(x);
        for (std::size_t i = 0; i < a.probs_boundary.size(); ++i)
            rep.max_abs_deviation_boundary =
                std::max(rep.max_abs_deviation_boundary,
                         std::abs(a.probs_boundary.data[i] - b.probs_boundary.data[i]));
        for (std::size_t i = 0; i < a.probs_room.size(); ++i)
            rep.max_abs_deviation_room =
                std::max(rep.max_abs_deviation_room,
                         std::abs(a.probs_room.data[i] - b.probs_room.data[i]));
    }
    out = snapshot(fused);
    return rep;
}

}  // namespace dlaseg
