#pragma once

#include <bit>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attncodec/error.hpp"
#include "attncodec/image.hpp"
#include "attncodec/tensor.hpp"

namespace attncodec {

// ---------------------------------------------------------------------------
// Little-endian byte helpers

class ByteWriter {
  public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; running off the end raises CorruptStreamError
/// carrying the offset.
class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() {
        need(1, "u8");
        return data_[pos_++];
    }
    std::uint16_t u16() {
        need(2, "u16");
        const std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n, "block of " + std::to_string(n) + " bytes");
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

  private:
    void need(std::size_t n, const std::string& what) {
        if (data_.size() - pos_ < n) throw CorruptStreamError("truncated data reading " + what, pos_);
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_text(const std::string& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// PPM (binary P6, maxval 255 only)

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
    ByteWriter w;
    w.raw("P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n");
    w.raw(img.pixels);
    return w.take();
}

inline Image decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* field) {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw FormatError(std::string("ppm: malformed header field '") + field + "'");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > 1u << 24) throw FormatError(std::string("ppm: header field '") + field + "' too large");
        }
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("ppm: missing 'P' magic");
    if (bytes[1] != '6')
        throw FormatError(std::string("ppm: unsupported format P") + static_cast<char>(bytes[1]) + " (only P6)");
    pos = 2;
    const std::size_t w = read_uint("width");
    const std::size_t h = read_uint("height");
    const std::size_t maxval = read_uint("maxval");
    if (maxval != 255) throw FormatError("ppm: unsupported maxval " + std::to_string(maxval) + " (only 255)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: missing separator after header");
    ++pos;
    const std::size_t n = w * h * 3;
    if (bytes.size() - pos < n)
        throw CorruptStreamError("ppm: truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " +
                                     std::to_string(n) + " bytes)",
                                 bytes.size());
    Image img(w, h);
    std::memcpy(img.pixels.data(), bytes.data() + pos, n);
    return img;
}

inline Image read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }
inline void write_ppm(const Image& img, const std::string& path) { write_file(path, encode_ppm(img)); }

// ---------------------------------------------------------------------------
// Weight container

/// Named float32 tensors. Storage stays 32-bit; tensor() is the single
/// widening point to the 64-bit compute type.
class WeightContainer {
  public:
    static constexpr std::string_view kMagic = "CTWT";
    static constexpr std::uint8_t kVersion = 1;
    static constexpr std::uint8_t kDtypeF32 = 0;

    struct Entry {
        std::string name;
        Shape dims;
        std::vector<float> data;
    };

    void add(std::string name, const Tensor& t) {
        Entry e{std::move(name), t.shape(), {}};
        e.data.reserve(t.size());
        for (double v : t.data()) e.data.push_back(static_cast<float>(v));
        add(std::move(e));
    }

    void add(Entry e) {
        require(!e.name.empty() && e.name.size() <= 0xFFFF, "container: tensor name length out of range");
        require(e.dims.size() <= 0xFF, "container: rank too large for '" + e.name + "'");
        require(shape_size(e.dims) == e.data.size(), "container: data size mismatch for '" + e.name + "'");
        require(!contains(e.name), "container: duplicate tensor name '" + e.name + "'");
        index_[e.name] = entries_.size();
        entries_.push_back(std::move(e));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw LoadError("missing tensor '" + name + "'");
        return entries_[it->second];
    }

    Tensor tensor(const std::string& name) const {
        const Entry& e = entry(name);
        std::vector<double> data(e.data.begin(), e.data.end());
        return Tensor(e.dims, std::move(data));
    }

    std::vector<std::uint8_t> serialize() const {
        ByteWriter w;
        w.raw(kMagic);
        w.u8(kVersion);
        w.u32(static_cast<std::uint32_t>(entries_.size()));
        for (const Entry& e : entries_) {
            w.u16(static_cast<std::uint16_t>(e.name.size()));
            w.raw(e.name);
            w.u8(kDtypeF32);
            w.u8(static_cast<std::uint8_t>(e.dims.size()));
            for (std::size_t d : e.dims) w.u32(static_cast<std::uint32_t>(d));
            for (float v : e.data) w.f32(v);
        }
        return w.take();
    }

    static WeightContainer parse(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        auto magic = r.raw(4);
        if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != kMagic)
            throw FormatError("container: bad magic (expected CTWT)");
        const std::uint8_t version = r.u8();
        if (version != kVersion) throw FormatError("container: unsupported version " + std::to_string(version));
        const std::uint32_t count = r.u32();
        WeightContainer wc;
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint16_t name_len = r.u16();
            auto name_bytes = r.raw(name_len);
            std::string name(name_bytes.begin(), name_bytes.end());
            const std::uint8_t dtype = r.u8();
            if (dtype != kDtypeF32)
                throw FormatError("container: unsupported dtype " + std::to_string(dtype) + " for '" + name + "'");
            const std::uint8_t rank = r.u8();
            Shape dims(rank);
            for (auto& d : dims) d = r.u32();
            const std::size_t n = shape_size(dims);
            if (n > r.remaining() / 4)
                throw CorruptStreamError("container: tensor '" + name + "' exceeds file length", r.offset());
            Entry e{name, dims, std::vector<float>(n)};
            for (auto& v : e.data) v = r.f32();
            if (wc.contains(name)) throw FormatError("container: duplicate tensor name '" + name + "'");
            wc.add(std::move(e));
        }
        if (r.remaining() != 0)
            throw FormatError("container: " + std::to_string(r.remaining()) + " trailing bytes after last entry");
        return wc;
    }

  private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

inline WeightContainer read_container(const std::string& path) { return WeightContainer::parse(read_file(path)); }
inline void write_container(const WeightContainer& wc, const std::string& path) { write_file(path, wc.serialize()); }

}  // namespace attncodec
