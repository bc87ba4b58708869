#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "attncodec/error.hpp"

namespace attncodec::rc {

// Binary adaptive range coder (carry-propagating, LZMA-style). All coding
// decisions use fixed-width integer arithmetic only.

inline constexpr unsigned kProbBits = 12;
inline constexpr std::uint32_t kProbOne = 1u << kProbBits;
inline constexpr unsigned kAdaptShift = 5;
inline constexpr std::uint32_t kTop = 1u << 24;

/// Probability that the next bit is 0, in units of 2^-12.
struct Prob {
    std::uint16_t p = kProbOne / 2;

    void update(int bit) {
        if (bit)
            p = static_cast<std::uint16_t>(p - (p >> kAdaptShift));
        else
            p = static_cast<std::uint16_t>(p + ((kProbOne - p) >> kAdaptShift));
    }

    /// Ideal code length of `bit` under the current state, in bits.
    double cost(int bit) const {
        const double q = static_cast<double>(bit ? kProbOne - p : p) / kProbOne;
        return -std::log2(q);
    }
};

class Encoder {
  public:
    void encode(Prob& prob, int bit) {
        bits_ += prob.cost(bit);
        const std::uint32_t bound = (range_ >> kProbBits) * prob.p;
        if (!bit) {
            range_ = bound;
        } else {
            low_ += bound;
            range_ -= bound;
        }
        prob.update(bit);
        normalize();
    }

    void encode_bypass(int bit) {
        bits_ += 1.0;
        range_ >>= 1;
        if (bit) low_ += range_;
        normalize();
    }

    /// Flushes pending state; the encoder must not be used afterwards.
    std::vector<std::uint8_t> finish() {
        for (int i = 0; i < 5; ++i) shift_low();
        return std::move(out_);
    }

    /// Running ideal code length (for rate accounting, not for coding).
    double estimated_bits() const noexcept { return bits_; }

  private:
    void normalize() {
        while (range_ < kTop) {
            range_ <<= 8;
            shift_low();
        }
    }

    void shift_low() {
        if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
            const auto carry = static_cast<std::uint8_t>(low_ >> 32);
            std::uint8_t temp = cache_;
            do {
                out_.push_back(static_cast<std::uint8_t>(temp + carry));
                temp = 0xFF;
            } while (--cache_size_ != 0);
            cache_ = static_cast<std::uint8_t>(low_ >> 24);
        }
        ++cache_size_;
        low_ = (low_ & 0x00FFFFFFu) << 8;
    }

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    std::vector<std::uint8_t> out_;
    double bits_ = 0.0;
};

class Decoder {
  public:
    /// `base_offset` is added to positions reported in errors.
    explicit Decoder(std::span<const std::uint8_t> data, std::size_t base_offset = 0)
        : data_(data), base_(base_offset) {
        for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
    }

    int decode(Prob& prob) {
        const std::uint32_t bound = (range_ >> kProbBits) * prob.p;
        int bit;
        if (code_ < bound) {
            range_ = bound;
            bit = 0;
        } else {
            code_ -= bound;
            range_ -= bound;
            bit = 1;
        }
        prob.update(bit);
        normalize();
        return bit;
    }

    int decode_bypass() {
        range_ >>= 1;
        int bit = 0;
        if (code_ >= range_) {
            code_ -= range_;
            bit = 1;
        }
        normalize();
        return bit;
    }

    std::size_t position() const noexcept { return base_ + pos_; }

  private:
    std::uint8_t next_byte() {
        if (pos_ >= data_.size()) throw CorruptStreamError("entropy-coded payload truncated", base_ + pos_);
        return data_[pos_++];
    }

    void normalize() {
        while (range_ < kTop) {
            range_ <<= 8;
            code_ = (code_ << 8) | next_byte();
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t base_;
    std::size_t pos_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
};

}  // namespace attncodec::rc
