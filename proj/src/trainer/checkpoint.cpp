#include "fluoro/trainer/checkpoint.hpp"

#include <cstring>

#include "fluoro/errors.hpp"
#include "fluoro/fault.hpp"
#include "fluoro/io/binary.hpp"

namespace fluoro::trainer {

Checkpoint Checkpoint::capture(const Model& model, const TrainConfig& config, const survival::BinSpec& bins,
                               std::size_t epoch, double val_c_index) {
    Checkpoint c{config, model.embed_dim(), epoch, val_c_index, bins, {}};
    for (const auto& p : model.named_parameters()) {
        c.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
    }
    return c;
}

Model Checkpoint::restore() const {
    auto model = Model::init(config, embed_dim, 0);
    auto params = model.named_parameters();
    if (params.size() != tensors.size()) {
        throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& stored = tensors[i];
        if (stored.name != params[i].name || stored.shape != params[i].tensor.shape()) {
            throw FormatError("checkpoint tensor '" + stored.name + "' " + nx::shape_string(stored.shape) +
                              " does not match model tensor '" + params[i].name + "' " +
                              nx::shape_string(params[i].tensor.shape()));
        }
        auto dst = params[i].tensor.mutable_data();
        std::copy(stored.values.begin(), stored.values.end(), dst.begin());
    }
    return model;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    io::ByteWriter w;
    if (fault::active() == fault::Fault::checkpoint_magic) {
        w.raw("FLCX", 4);
    } else {
        w.raw(kCheckpointMagic, 4);
    }
    w.u32(kCheckpointVersion);
    w.string(to_json(ckpt.config).dump());
    w.u32(static_cast<std::uint32_t>(ckpt.embed_dim));
    w.u32(static_cast<std::uint32_t>(ckpt.epoch));
    w.f64(ckpt.val_c_index);
    w.u32(static_cast<std::uint32_t>(ckpt.bins.cutoffs.size()));
    for (double c : ckpt.bins.cutoffs) w.f64(c);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        if (nx::numel(t.shape) != t.values.size()) throw DimensionError("checkpoint tensor '" + t.name + "' size");
        w.string(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto e : t.shape) w.u32(static_cast<std::uint32_t>(e));
        for (double v : t.values) w.f64(v);
    }
    return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes, "checkpoint");
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    try {
        c.config = config_from_json(nlohmann::json::parse(r.string()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: config is not valid JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    c.embed_dim = r.u32();
    c.epoch = r.u32();
    c.val_c_index = r.f64();
    const auto cutoffs = r.u32();
    r.need(static_cast<std::size_t>(cutoffs) * 8);
    for (std::uint32_t i = 0; i < cutoffs; ++i) c.bins.cutoffs.push_back(r.f64());
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        StoredTensor t;
        t.name = r.string();
        const auto rank = r.u32();
        r.need(static_cast<std::size_t>(rank) * 4);
        for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u32());
        const auto n = nx::numel(t.shape);
        r.need(n * 8);
        t.values.resize(n);
        for (auto& v : t.values) v = r.f64();
        c.tensors.push_back(std::move(t));
    }
    r.expect_end();
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace fluoro::trainer
