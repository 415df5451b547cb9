#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fluoro/errors.hpp"
#include "fluoro/pipeline/bag_io.hpp"
#include "fluoro/pipeline/embedder.hpp"
#include "fluoro/pipeline/foreground.hpp"
#include "fluoro/pipeline/image.hpp"
#include "fluoro/pipeline/manifest.hpp"
#include "fluoro/pipeline/patches.hpp"
#include "fluoro/reference/reference.hpp"
#include "test_util.hpp"

using namespace fluoro;
using namespace fluoro::pipeline;

namespace {

Channel plane(std::size_t h, std::size_t w, std::uint16_t fill = 0) {
    return {h, w, 8, std::vector<std::uint16_t>(h * w, fill)};
}

SlideImage mif(std::vector<Channel> channels) {
    SlideImage s;
    s.sample_id = "s";
    for (std::size_t i = 0; i < channels.size(); ++i) s.channel_names.push_back("c" + std::to_string(i));
    s.channels = std::move(channels);
    return s;
}

fusion::EmbeddedBag random_bag(std::mt19937_64& rng) {
    fusion::EmbeddedBag b;
    b.num_patches = rng() % 6;
    b.num_markers = 1 + rng() % 4;
    b.embed_dim = 1 + rng() % 9;
    for (std::size_t m = 0; m < b.num_markers; ++m) b.channel_names.push_back("mk" + std::to_string(rng() % 1000));
    for (std::uint32_t k = 0; k < b.num_patches; ++k) b.coords.push_back({k, static_cast<std::uint32_t>(rng() % 50)});
    std::normal_distribution<float> g;
    b.embeddings.resize(b.num_patches * b.num_markers * b.embed_dim);
    for (auto& x : b.embeddings) x = g(rng);
    return b;
}

}  // namespace

TEST_CASE("Otsu on a bimodal histogram") {
    Histogram h{};
    h[20] = 100;
    h[200] = 100;
    const int t = otsu_threshold(h);
    CHECK(t >= 20);
    CHECK(t < 200);
    CHECK(t == reference::exhaustive_otsu(h));
}

TEST_CASE("Otsu agrees with exhaustive search") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        Histogram h{};
        const int occupied = 2 + static_cast<int>(rng() % 40);
        for (int i = 0; i < occupied; ++i) h[rng() % 256] += 1 + rng() % 1000;
        const int want = reference::exhaustive_otsu(h);
        if (want < 0) {
            CHECK_THROWS_AS(otsu_threshold(h), DegenerateInputError);
            continue;
        }
        CHECK(otsu_threshold(h) == want);
    }
    Histogram single{};
    single[7] = 50;
    CHECK_THROWS_AS(otsu_threshold(single), DegenerateInputError);
}

TEST_CASE("downsample and binning") {
    Channel c = plane(3, 3);
    for (std::size_t i = 0; i < 9; ++i) c.pixels[i] = static_cast<std::uint16_t>(i);
    const auto d = downsample(c, 2);
    REQUIRE(d.size() == 4);
    CHECK(d[0] == 2.0);
    CHECK(d[1] == 3.5);
    CHECK(d[2] == 6.5);
    CHECK(d[3] == 8.0);
    std::vector<double> v16{1000.0, 2000.0, 3000.0};
    const auto b = to_bins(v16, 16);
    CHECK(b == std::vector<std::uint8_t>{0, 128, 255});
}

TEST_CASE("foreground of one lit channel and one blank channel") {
    auto s = mif({plane(448, 448, 255), plane(448, 448, 0)});
    const auto m = foreground_mask(s, 224);
    CHECK(m.rows == 2);
    CHECK(m.cols == 2);
    CHECK(m.count() == 4);
    CHECK(!m.warnings.empty());
    CHECK_THROWS_AS(foreground_mask(mif({plane(448, 448, 0), plane(448, 448, 0)}), 224), DegenerateInputError);
}

TEST_CASE("foreground picks out bright blobs") {
    // 4x4 cells of 8 px; cells (0,0) and (3,2) are lit in different channels.
    auto a = plane(32, 32, 5), b = plane(32, 32, 3);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            a.pixels[r * 32 + c] = 220;
            b.pixels[(24 + r) * 32 + 16 + c] = 180;
        }
    const auto m = foreground_mask(mif({a, b}), 8);
    CHECK(m.count() == 2);
    CHECK(m.at(0, 0));
    CHECK(m.at(3, 2));
}

TEST_CASE("H&E foreground keeps dark tissue") {
    SlideImage s;
    s.sample_id = "he";
    s.modality = Modality::he;
    s.channel_names = {"R", "G", "B"};
    for (int i = 0; i < 3; ++i) {
        auto p = plane(16, 16, 240);
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 8; ++c) p.pixels[r * 16 + c] = 60;
        s.channels.push_back(p);
    }
    const auto m = foreground_mask(s, 8);
    CHECK(m.count() == 1);
    CHECK(m.at(0, 0));
}

TEST_CASE("patch extraction") {
    auto s = mif({plane(448, 448, 255)});
    const auto m = foreground_mask(s, 224);
    const auto p = extract_patches(s, m, 224);
    REQUIRE(p.size() == 4);
    CHECK(p[0].coord == GridCoord{0, 0});
    CHECK(p[1].coord == GridCoord{0, 1});
    CHECK(p[3].coord == GridCoord{1, 1});
    CHECK(p[2].pixels.front() == 1.0f);

    ForegroundMask none{2, 2, 224, {0, 0, 0, 0}, {}};
    CHECK(extract_patches(s, none, 224).empty());

    // Patches past the slide edge are zero padded.
    auto small = mif({plane(300, 300, 255)});
    ForegroundMask corner{2, 2, 224, {0, 0, 0, 1}, {}};
    const auto q = extract_patches(small, corner, 224);
    REQUIRE(q.size() == 1);
    CHECK(q[0].pixels[0] == 1.0f);
    CHECK(q[0].pixels[100 * 224 + 100] == 0.0f);
}

TEST_CASE("gray to rgb repeats the plane") {
    std::vector<float> v{0.1f, 0.2f, 0.3f, 0.4f};
    const auto rgb = gray_to_rgb(v, 2, 2);
    REQUIRE(rgb.data.size() == 12);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) CHECK(rgb.data[c * 4 + i] == v[i]);
}

TEST_CASE("stub embedder") {
    StubEmbedder e(16, 7);
    RgbPatch zero{4, 4, std::vector<float>(48, 0.0f)};
    for (float x : e.embed(zero)) CHECK(x == 0.0f);
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<float> u(0, 1);
    RgbPatch p{4, 4, std::vector<float>(48)};
    for (auto& x : p.data) x = u(rng);
    const auto a = e.embed(p);
    CHECK(a == StubEmbedder(16, 7).embed(p));
    CHECK(a != StubEmbedder(16, 8).embed(p));
    for (float x : a) {
        CHECK(x > -1.0f);
        CHECK(x < 1.0f);
    }
}

TEST_CASE("embed_bag layout") {
    auto s = mif({plane(4, 4, 100), plane(4, 4, 200)});
    ForegroundMask m{2, 2, 2, {1, 0, 0, 1}, {}};
    const auto patches = extract_patches(s, m, 2);
    StubEmbedder e(3, 1);
    const auto bag = embed_bag(patches, e, s.channel_names, "s", Modality::mif);
    CHECK(bag.num_patches == 2);
    CHECK(bag.num_markers == 2);
    CHECK(bag.embed_dim == 3);
    CHECK(bag.coords == std::vector<GridCoord>{{0, 0}, {1, 1}});
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t mk = 0; mk < 2; ++mk) {
            const auto want = e.embed(gray_to_rgb({patches[k].plane(mk), 4}, 2, 2));
            for (std::size_t j = 0; j < 3; ++j) CHECK(bag.embeddings[(k * 2 + mk) * 3 + j] == want[j]);
        }
}

TEST_CASE("bag round trip") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        auto b = random_bag(rng);
        b.sample_id = "x";
        const auto bytes = encode_bag(b);
        CHECK(decode_bag(bytes, "x") == b);
        CHECK(encode_bag(decode_bag(bytes, "x")) == bytes);
    }
}

TEST_CASE("corrupt bags are rejected") {
    std::mt19937_64 rng(34);
    auto b = random_bag(rng);
    b.num_patches = 2;
    b.coords = {{0, 0}, {0, 1}};
    b.embeddings.assign(2 * b.num_markers * b.embed_dim, 0.5f);
    auto bytes = encode_bag(b);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_bag(bad), FormatError);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_bag(truncated), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_bag(trailing), FormatError);
    b.coords = {{0, 0}, {0, 0}};
    CHECK_THROWS(encode_bag(b));
}

TEST_CASE("bag and manifest files") {
    testing::TempDir dir("pipeline");
    std::mt19937_64 rng(35);
    auto b = random_bag(rng);
    b.sample_id = "S0001";
    write_bag(dir.path() / "S0001.flbg", b);
    CHECK(read_bag(dir.path() / "S0001.flbg") == b);
    CHECK_THROWS(read_bag(dir.path() / "missing.flbg"));

    std::vector<ManifestEntry> rows{{"S0001", "P1", 120.5, false, "bags/S0001.flbg"},
                                    {"S0002", "P1", 80.0, true, "bags/S0002.flbg"}};
    write_manifest(dir.path() / kManifestName, rows);
    CHECK(read_manifest(dir.path() / kManifestName) == rows);

    std::ofstream(dir.path() / "bad.csv") << "sample_id,patient_id,time_days,censored,bag_path\nS1,P1,abc,0,x\n";
    CHECK_THROWS(read_manifest(dir.path() / "bad.csv"));
}

TEST_CASE("PNG planes") {
    testing::TempDir dir("png");
    Channel c = plane(5, 7);
    for (std::size_t i = 0; i < c.pixels.size(); ++i) c.pixels[i] = static_cast<std::uint16_t>(i * 7 % 256);
    write_png_gray(dir.path() / "a.png", c);
    const auto back = read_png(dir.path() / "a.png");
    REQUIRE(back.size() == 1);
    CHECK(back[0].pixels == c.pixels);
    CHECK(back[0].height == 5);
    CHECK(back[0].width == 7);

    write_png_gray(dir.path() / "b.png", plane(5, 7, 9));
    std::ofstream(dir.path() / "channels.txt") << "b\na\n";
    const auto s = load_slide(dir.path(), Modality::mif);
    CHECK(s.channel_names == std::vector<std::string>{"b", "a"});
    CHECK(s.channels[1].pixels == c.pixels);
    CHECK_THROWS(load_slide(dir.path(), Modality::he));
}
