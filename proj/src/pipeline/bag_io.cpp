#include "fluoro/pipeline/bag_io.hpp"

#include <cstring>

#include "fluoro/errors.hpp"
#include "fluoro/io/binary.hpp"

namespace fluoro::pipeline {

std::vector<std::uint8_t> encode_bag(const fusion::EmbeddedBag& bag) {
    bag.validate();
    if (bag.channel_names.size() != bag.num_markers) {
        throw DimensionError("bag '" + bag.sample_id + "': every marker needs a channel name");
    }
    io::ByteWriter w;
    w.raw(kBagMagic, 4);
    w.u32(kBagVersion);
    w.u32(static_cast<std::uint32_t>(bag.num_patches));
    w.u32(static_cast<std::uint32_t>(bag.num_markers));
    w.u32(static_cast<std::uint32_t>(bag.embed_dim));
    for (const auto& name : bag.channel_names) w.string(name);
    for (const auto& c : bag.coords) {
        w.u32(c.row);
        w.u32(c.col);
    }
    for (float v : bag.embeddings) w.f32(v);
    return std::move(w.bytes());
}

fusion::EmbeddedBag decode_bag(std::span<const std::uint8_t> bytes, const std::string& sample_id) {
    io::ByteReader r(bytes, "bag '" + sample_id + "'");
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kBagMagic, 4) != 0) throw FormatError("bag '" + sample_id + "': bad magic");
    const auto version = r.u32();
    if (version != kBagVersion) {
        throw FormatError("bag '" + sample_id + "': unsupported version " + std::to_string(version));
    }
    fusion::EmbeddedBag bag;
    bag.sample_id = sample_id;
    bag.num_patches = r.u32();
    bag.num_markers = r.u32();
    bag.embed_dim = r.u32();
    for (std::size_t m = 0; m < bag.num_markers; ++m) bag.channel_names.push_back(r.string());
    r.need(bag.num_patches * 8);
    bag.coords.resize(bag.num_patches);
    for (auto& c : bag.coords) {
        c.row = r.u32();
        c.col = r.u32();
    }
    const auto count = bag.num_patches * bag.num_markers * bag.embed_dim;
    if (r.remaining() != count * 4) {
        throw FormatError("bag '" + sample_id + "': payload holds " + std::to_string(r.remaining()) +
                          " bytes, expected " + std::to_string(count * 4));
    }
    bag.embeddings.resize(count);
    for (auto& v : bag.embeddings) v = r.f32();
    r.expect_end();
    bag.validate();
    return bag;
}

void write_bag(const std::filesystem::path& path, const fusion::EmbeddedBag& bag) {
    io::write_file(path, encode_bag(bag));
}

fusion::EmbeddedBag read_bag(const std::filesystem::path& path) {
    return decode_bag(io::read_file(path), path.stem().string());
}

}  // namespace fluoro::pipeline
