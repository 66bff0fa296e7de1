#include "clipgen/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"

namespace sdr::clipgen {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

constexpr std::uint16_t kArchiveVersion = 1;

} // namespace

void write_archive(const std::string& path, const std::vector<Clip>& clips) {
    if (clips.empty()) throw DataError("write_archive: no clips");
    const Clip& first = clips.front();
    for (const Clip& c : clips) {
        if (c.t != first.t || c.c != first.c || c.h != first.h || c.w != first.w) {
            throw DataError("write_archive: clips must share dimensions");
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("SDRC", 4);
    put_u16(os, kArchiveVersion);
    put_u32(os, static_cast<std::uint32_t>(first.t));
    put_u32(os, static_cast<std::uint32_t>(first.c));
    put_u32(os, static_cast<std::uint32_t>(first.h));
    put_u32(os, static_cast<std::uint32_t>(first.w));
    put_u32(os, static_cast<std::uint32_t>(clips.size()));
    for (const Clip& c : clips) {
        put_u32(os, c.video_id);
        os.put(static_cast<char>(c.label));
        for (float v : c.data) put_f32(os, v);
    }
    if (!os) throw IoError("write failed: " + path);
}

std::vector<Clip> read_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("clip archive not found: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SDRC", 4) != 0) {
        throw DataError("bad clip archive magic: " + path);
    }
    const std::uint16_t version = get_u16(is);
    if (version != kArchiveVersion) {
        throw DataError("unsupported clip archive version " + std::to_string(version));
    }
    const int t = static_cast<int>(get_u32(is));
    const int c = static_cast<int>(get_u32(is));
    const int h = static_cast<int>(get_u32(is));
    const int w = static_cast<int>(get_u32(is));
    const std::uint32_t count = get_u32(is);
    if (!is || t < 2 || c < 1 || h < 1 || w < 1) throw DataError("bad clip archive header: " + path);
    std::vector<Clip> clips;
    clips.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Clip clip(t, c, h, w);
        clip.video_id = get_u32(is);
        clip.label = static_cast<std::uint8_t>(is.get());
        for (auto& v : clip.data) v = get_f32(is);
        if (!is) throw DataError("truncated clip archive: " + path);
        clips.push_back(std::move(clip));
    }
    return clips;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "video_id,label,style,kind,strength,seed\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(r.strength));
        os << r.video_id << ',' << static_cast<int>(r.label) << ',' << r.style << ','
           << r.kind << ',' << buf << ',' << r.seed << '\n';
    }
    if (!os) throw IoError("write failed: " + path);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("manifest not found: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "video_id,label,style,kind,strength,seed") {
        throw DataError("bad manifest header: " + path);
    }
    std::vector<ManifestRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        ManifestRow r;
        std::getline(ls, field, ',');
        r.video_id = static_cast<std::uint32_t>(std::stoul(field));
        std::getline(ls, field, ',');
        r.label = static_cast<std::uint8_t>(std::stoi(field));
        std::getline(ls, field, ',');
        r.style = std::stoi(field);
        std::getline(ls, r.kind, ',');
        std::getline(ls, field, ',');
        r.strength = std::stof(field);
        std::getline(ls, field, ',');
        r.seed = std::stoull(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace sdr::clipgen
