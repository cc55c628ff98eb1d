#include "coda/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "coda/error.hpp"

namespace coda {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void serialize(const ParamStore& params, std::vector<char>& out) {
    auto put = [&](const void* p, std::size_t n) {
        const char* c = static_cast<const char*>(p);
        out.insert(out.end(), c, c + n);
    };
    put(kMagic, 8);
    put(&kVersion, 4);
    std::uint32_t count = std::uint32_t(params.size());
    put(&count, 4);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& slot = params.at(i);
        std::uint32_t name_len = std::uint32_t(slot.name.size());
        put(&name_len, 4);
        put(slot.name.data(), name_len);
        std::uint32_t ndim = std::uint32_t(slot.shape.size());
        put(&ndim, 4);
        for (std::size_t d : slot.shape) {
            std::uint64_t v = d;
            put(&v, 8);
        }
        put(slot.data.data(), slot.data.size() * 8);
    }
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::vector<char> buf;
    serialize(params, buf);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CodaError("cannot open checkpoint " + path + " for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CodaError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw CodaError("checkpoint " + path + ": bad magic");
    std::uint32_t version = 0, count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kVersion) throw CodaError("checkpoint " + path + ": unsupported version");
    in.read(reinterpret_cast<char*>(&count), 4);
    ParamStore params;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 4);
        std::vector<std::size_t> shape(ndim);
        std::size_t numel = 1;
        for (std::uint32_t k = 0; k < ndim; ++k) {
            std::uint64_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 8);
            shape[k] = std::size_t(v);
            numel *= shape[k];
        }
        params.add(name, shape);
        in.read(reinterpret_cast<char*>(params.data(name).data()), std::streamsize(numel * 8));
        if (!in) throw CodaError("checkpoint " + path + ": truncated");
    }
    return params;
}

std::uint64_t checkpoint_digest(const ParamStore& params) {
    std::vector<char> buf;
    serialize(params, buf);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : buf) {
        h ^= std::uint64_t(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace coda
