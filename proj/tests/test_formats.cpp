#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "attncodec/formats.hpp"
#include "attncodec/random.hpp"

using namespace attncodec;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

// --- PPM ------------------------------------------------------------------------

TEST(Ppm, SinglePixelBytes) {
    Image img(1, 1);
    img.pixels = {255, 0, 7};
    const std::vector<std::uint8_t> expect = {'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 255, 0, 7};
    EXPECT_EQ(encode_ppm(img), expect);
}

TEST(Ppm, RoundTrip) {
    Rng rng(1);
    Image img(13, 7);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    EXPECT_EQ(decode_ppm(encode_ppm(img)), img);
}

TEST(Ppm, ToleratesCommentsAndWhitespace) {
    auto bytes = bytes_of("P6 # comment\n 2\t1\n# more\n255\n");
    bytes.insert(bytes.end(), {1, 2, 3, 4, 5, 6});
    const Image img = decode_ppm(bytes);
    EXPECT_EQ(img.width, 2u);
    EXPECT_EQ(img.at(1, 0, 2), 6);
}

TEST(Ppm, RejectsOtherVariants) {
    EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n0 0 0\n")), FormatError);
    EXPECT_THROW(decode_ppm(bytes_of("P5\n1 1\n255\n\x01")), FormatError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06")), FormatError);
    EXPECT_THROW(decode_ppm(bytes_of("GIF89a")), FormatError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\nx 1\n255\n")), FormatError);
}

TEST(Ppm, TruncatedPixelsAreCorrupt) {
    EXPECT_THROW(decode_ppm(bytes_of("P6\n2 2\n255\n\x01\x02\x03")), CorruptStreamError);
}

TEST(Ppm, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "attncodec_test_formats.ppm";
    const Image img(3, 2, 9);
    write_ppm(img, path.string());
    EXPECT_EQ(read_ppm(path.string()), img);
    std::filesystem::remove(path);
    EXPECT_THROW(read_ppm(path.string()), IoError);
}

// --- weight container ---------------------------------------------------------------

TEST(Container, EmptyRoundTrip) {
    const WeightContainer wc;
    const auto bytes = wc.serialize();
    EXPECT_EQ(bytes.size(), 9u);
    EXPECT_EQ(WeightContainer::parse(bytes).size(), 0u);
}

TEST(Container, SerializedSize) {
    WeightContainer wc;
    wc.add("w", Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(wc.serialize().size(), 4u + 1 + 4 + (2 + 1 + 1 + 1 + 8) + 24);
}

TEST(Container, GoldenLittleEndianBytes) {
    WeightContainer wc;
    wc.add("ab", Tensor(Shape{2}, {1.0, -2.0}));
    const std::vector<std::uint8_t> expect = {
        'C', 'T', 'W', 'T', 1,           // magic, version
        1, 0, 0, 0,                      // count
        2, 0, 'a', 'b',                  // name
        0, 1,                            // dtype f32, rank 1
        2, 0, 0, 0,                      // dim
        0x00, 0x00, 0x80, 0x3F,          // 1.0f
        0x00, 0x00, 0x00, 0xC0,          // -2.0f
    };
    EXPECT_EQ(wc.serialize(), expect);
    const Tensor t = WeightContainer::parse(expect).tensor("ab");
    EXPECT_EQ(t.shape(), (Shape{2}));
    EXPECT_EQ(t[1], -2.0);
}

TEST(Container, RoundTripPreservesOrderAndValues) {
    Rng rng(3);
    WeightContainer wc;
    for (int i = 0; i < 5; ++i) {
        Tensor t(Shape{std::size_t(i + 1), 4});
        for (auto& v : t.data()) v = static_cast<float>(rng.normal());
        wc.add("layer" + std::to_string(4 - i) + ".w", t);
    }
    wc.add("scalar", Tensor(Shape{}, {0.5}));
    const WeightContainer back = WeightContainer::parse(wc.serialize());
    ASSERT_EQ(back.size(), wc.size());
    for (std::size_t i = 0; i < wc.size(); ++i) {
        EXPECT_EQ(back.entries()[i].name, wc.entries()[i].name);
        EXPECT_EQ(back.entries()[i].dims, wc.entries()[i].dims);
        EXPECT_EQ(back.entries()[i].data, wc.entries()[i].data);
    }
    EXPECT_EQ(back.serialize(), wc.serialize());
}

TEST(Container, MissingTensorIsLoadError) {
    try {
        WeightContainer().tensor("patch_embed.weight");
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find("patch_embed.weight"), std::string::npos);
    }
}

TEST(Container, DuplicateNamesRejected) {
    WeightContainer wc;
    wc.add("x", Tensor(Shape{1}, {1.0}));
    EXPECT_THROW(wc.add("x", Tensor(Shape{1}, {2.0})), ContractError);
    // Hand-built file with the same name twice.
    auto bytes = wc.serialize();
    const std::vector<std::uint8_t> entry(bytes.begin() + 9, bytes.end());
    bytes.insert(bytes.end(), entry.begin(), entry.end());
    bytes[5] = 2;
    EXPECT_THROW(WeightContainer::parse(bytes), FormatError);
}

TEST(Container, HeaderErrors) {
    WeightContainer wc;
    wc.add("x", Tensor(Shape{1}, {1.0}));
    const auto good = wc.serialize();
    auto bad = good;
    bad[0] = 'Q';
    EXPECT_THROW(WeightContainer::parse(bad), FormatError);
    bad = good;
    bad[4] = 9;
    EXPECT_THROW(WeightContainer::parse(bad), FormatError);
    bad = good;
    bad[12] = 1;  // dtype
    EXPECT_THROW(WeightContainer::parse(bad), FormatError);
    bad = good;
    bad.push_back(0);
    EXPECT_THROW(WeightContainer::parse(bad), FormatError);
}

TEST(Container, TruncationIsCorrupt) {
    WeightContainer wc;
    wc.add("x", Tensor(Shape{4}, {1, 2, 3, 4}));
    const auto good = wc.serialize();
    for (std::size_t keep = 0; keep < good.size(); ++keep) {
        const std::vector<std::uint8_t> cut(good.begin(), good.begin() + keep);
        EXPECT_THROW(WeightContainer::parse(cut), CorruptStreamError) << keep;
    }
}

TEST(Container, StoresFloat32) {
    WeightContainer wc;
    wc.add("x", Tensor(Shape{1}, {0.1}));
    EXPECT_EQ(wc.tensor("x")[0], static_cast<double>(0.1f));
}
