#include "train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "core/crc32.hpp"
#include "core/errors.hpp"

namespace sdr::train {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

void append_u16(std::vector<unsigned char>& buf, std::uint16_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xFF));
    buf.push_back(static_cast<unsigned char>(v >> 8));
}

void append_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint16_t take_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t take_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

void save_checkpoint(const std::string& path, const core::ParamStore<float>& params) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), {'S', 'D', 'R', '1'});
    append_u16(buf, kCheckpointVersion);
    for (const auto& e : params.entries()) {
        if (e.name.size() > 0xFFFF) throw InvariantError("checkpoint: name too long");
        append_u16(buf, static_cast<std::uint16_t>(e.name.size()));
        buf.insert(buf.end(), e.name.begin(), e.name.end());
        buf.push_back(static_cast<unsigned char>(e.value.rank()));
        for (int d : e.value.dims) append_u32(buf, static_cast<std::uint32_t>(d));
        for (float v : e.value.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            append_u32(buf, bits);
        }
    }
    append_u32(buf, core::crc32(buf.data(), buf.size()));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw IoError("write failed: " + path);
}

std::vector<std::pair<std::string, core::Tensor<float>>> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint not found: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 10 || std::memcmp(buf.data(), "SDR1", 4) != 0) {
        throw IoError("bad checkpoint magic: " + path);
    }
    const std::size_t body = buf.size() - 4;
    if (core::crc32(buf.data(), body) != take_u32(buf.data() + body)) {
        throw IoError("checkpoint CRC mismatch: " + path);
    }
    if (take_u16(buf.data() + 4) != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version: " + path);
    }

    std::vector<std::pair<std::string, core::Tensor<float>>> out;
    std::size_t off = 6;
    auto need = [&](std::size_t n) {
        if (off + n > body) throw IoError("truncated checkpoint: " + path);
    };
    while (off < body) {
        need(2);
        const std::uint16_t name_len = take_u16(buf.data() + off);
        off += 2;
        need(name_len);
        std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
        off += name_len;
        need(1);
        const int rank = buf[off++];
        core::Dims dims;
        need(static_cast<std::size_t>(rank) * 4);
        for (int i = 0; i < rank; ++i) {
            dims.push_back(static_cast<int>(take_u32(buf.data() + off)));
            off += 4;
        }
        const std::int64_t count = core::numel(dims);
        need(static_cast<std::size_t>(count) * 4);
        std::vector<float> data(static_cast<std::size_t>(count));
        for (std::int64_t i = 0; i < count; ++i) {
            const std::uint32_t bits = take_u32(buf.data() + off);
            off += 4;
            std::memcpy(&data[static_cast<std::size_t>(i)], &bits, 4);
        }
        out.emplace_back(std::move(name), core::Tensor<float>::from(std::move(dims), std::move(data)));
    }
    return out;
}

void restore_params(core::ParamStore<float>& params, const std::string& path) {
    auto entries = load_checkpoint(path);
    if (entries.size() != params.count()) {
        throw DataError("checkpoint does not match model: tensor count differs");
    }
    for (auto& [name, tensor] : entries) {
        if (!params.has(name)) throw DataError("checkpoint tensor not in model: " + name);
        auto& slot = params.value(name);
        if (slot.dims != tensor.dims) throw DataError("checkpoint dims mismatch for " + name);
        slot = std::move(tensor);
    }
}

} // namespace sdr::train
