#include "laof/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "laof/errors.hpp"

namespace laof {

namespace {

constexpr char kMagic[4] = {'L', 'A', 'O', 'F'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CorruptionError("checkpoint truncated while reading " + what);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw StateError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put<uint32_t>(os, kVersion);
    put<uint64_t>(os, params.size());
    for (const auto& [name, t] : params) {
        if (name.size() > std::numeric_limits<uint16_t>::max()) {
            throw UsageError("parameter name too long: " + name.substr(0, 64) + "...");
        }
        put<uint16_t>(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<uint8_t>(os, static_cast<uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) put<uint32_t>(os, static_cast<uint32_t>(t.extent(i)));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!os) throw StateError("write failed for checkpoint: " + path);
}

ParamMap load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("cannot open checkpoint for reading: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("not a checkpoint file: " + path);
    }
    const uint32_t version = get<uint32_t>(is, "version");
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const uint64_t count = get<uint64_t>(is, "param count");
    ParamMap out;
    for (uint64_t p = 0; p < count; ++p) {
        const uint16_t name_len = get<uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw CorruptionError("checkpoint truncated while reading a name");
        const uint8_t rank = get<uint8_t>(is, "rank");
        std::vector<int> shape(rank);
        uint64_t numel = 1;
        for (uint8_t i = 0; i < rank; ++i) {
            const uint32_t e = get<uint32_t>(is, "extent");
            if (e == 0 || e > (1u << 28)) {
                throw CorruptionError("implausible extent " + std::to_string(e) + " in " + name);
            }
            shape[i] = static_cast<int>(e);
            numel *= e;
        }
        std::vector<float> data(numel);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!is) throw CorruptionError("checkpoint truncated inside data of " + name);
        if (out.count(name)) throw CorruptionError("duplicate parameter " + name);
        out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    // Trailing bytes mean the writer and reader disagree about the layout.
    is.peek();
    if (!is.eof()) throw CorruptionError("trailing bytes after last parameter in " + path);
    return out;
}

}  // namespace laof
