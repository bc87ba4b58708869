#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "attncodec/codec.hpp"
#include "attncodec/random.hpp"
#include "attncodec/range_coder.hpp"

using namespace attncodec;

namespace {

struct Symbol {
    int context;  // -1 = bypass
    int bit;
};

std::vector<Symbol> random_symbols(std::size_t n, std::uint64_t seed, int contexts) {
    Rng rng(seed);
    // Skewed per-context sources so probabilities actually adapt.
    std::vector<double> p_one(contexts);
    for (double& p : p_one) p = rng.uniform(0.01, 0.99);
    std::vector<Symbol> out(n);
    for (auto& s : out) {
        s.context = rng.below(8) == 0 ? -1 : static_cast<int>(rng.below(contexts));
        s.bit = s.context < 0 ? static_cast<int>(rng.below(2)) : (rng.uniform() < p_one[s.context] ? 1 : 0);
    }
    return out;
}

std::vector<std::uint8_t> encode_symbols(const std::vector<Symbol>& syms, int contexts) {
    rc::Encoder enc;
    std::vector<rc::Prob> probs(contexts);
    for (const auto& s : syms) {
        if (s.context < 0)
            enc.encode_bypass(s.bit);
        else
            enc.encode(probs[s.context], s.bit);
    }
    return enc.finish();
}

}  // namespace

TEST(RangeCoder, MillionSymbolRoundTrip) {
    constexpr int kContexts = 37;
    const auto syms = random_symbols(1'000'000, 2718, kContexts);
    const auto bytes = encode_symbols(syms, kContexts);
    rc::Decoder dec(bytes);
    std::vector<rc::Prob> probs(kContexts);
    for (std::size_t i = 0; i < syms.size(); ++i) {
        const int bit = syms[i].context < 0 ? dec.decode_bypass() : dec.decode(probs[syms[i].context]);
        ASSERT_EQ(bit, syms[i].bit) << "symbol " << i;
    }
}

TEST(RangeCoder, DeterministicOutput) {
    const auto syms = random_symbols(50'000, 5, 4);
    EXPECT_EQ(encode_symbols(syms, 4), encode_symbols(syms, 4));
}

TEST(RangeCoder, SkewedSourceCompresses) {
    std::vector<Symbol> syms(100'000, Symbol{0, 0});
    for (std::size_t i = 0; i < syms.size(); i += 100) syms[i].bit = 1;
    const auto bytes = encode_symbols(syms, 1);
    // Entropy of p = 0.01 is about 0.081 bits per symbol.
    EXPECT_LT(bytes.size() * 8, syms.size() / 8);
}

TEST(RangeCoder, EstimatedBitsTrackOutputSize) {
    const auto syms = random_symbols(200'000, 9, 16);
    rc::Encoder enc;
    std::vector<rc::Prob> probs(16);
    for (const auto& s : syms) s.context < 0 ? enc.encode_bypass(s.bit) : enc.encode(probs[s.context], s.bit);
    const double est = enc.estimated_bits();
    const auto bytes = enc.finish();
    EXPECT_NEAR(bytes.size() * 8.0, est, 0.01 * est + 64);
}

TEST(RangeCoder, TruncatedInputReportsOffset) {
    const auto syms = random_symbols(10'000, 3, 4);
    auto bytes = encode_symbols(syms, 4);
    bytes.resize(bytes.size() / 2);
    try {
        rc::Decoder dec(bytes, 100);
        std::vector<rc::Prob> probs(4);
        for (const auto& s : syms) s.context < 0 ? dec.decode_bypass() : dec.decode(probs[s.context]);
        FAIL() << "expected CorruptStreamError";
    } catch (const CorruptStreamError& e) {
        EXPECT_EQ(e.offset(), 100 + bytes.size());
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
}

TEST(CoefficientCoding, RoundTripsSignedValues) {
    Rng rng(61);
    std::vector<std::int32_t> values(200'000);
    for (auto& v : values) {
        const int kind = static_cast<int>(rng.below(4));
        v = kind == 0 ? 0 : static_cast<std::int32_t>(rng.below(kind == 3 ? 5000 : 6)) * (rng.below(2) ? 1 : -1);
    }
    values[7] = 1 << 20;
    values[8] = -(1 << 20);
    detail::CoefficientModel em, dm;
    rc::Encoder enc;
    for (std::size_t i = 0; i < values.size(); ++i)
        detail::encode_value(enc, em, i % 3, i % 3, (i / 3) % 3, values[i]);
    const auto bytes = enc.finish();
    rc::Decoder dec(bytes);
    for (std::size_t i = 0; i < values.size(); ++i)
        ASSERT_EQ(detail::decode_value(dec, dm, i % 3, i % 3, (i / 3) % 3), values[i]) << i;
}
