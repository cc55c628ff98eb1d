#include "coda/encoder.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "coda/error.hpp"

namespace coda {

namespace {

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= std::uint64_t(static_cast<unsigned char>(data[i]));
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

Vec HashingProvider::encode(const std::string& code) const {
    Vec out(dim_, 0.0);
    std::size_t i = 0;
    const std::size_t n = code.size();
    bool any = false;
    while (i < n) {
        while (i < n && !std::isalnum(static_cast<unsigned char>(code[i]))) ++i;
        std::size_t start = i;
        while (i < n && std::isalnum(static_cast<unsigned char>(code[i]))) ++i;
        if (i == start) continue;
        std::uint64_t h = fnv1a(code.data() + start, i - start);
        double s = (h >> 63) ? 1.0 : -1.0;
        out[h % dim_] += s;
        any = true;
    }
    if (!any) return out;
    double norm = 0.0;
    for (double x : out) norm += x * x;
    if (norm == 0.0) return out;  // signed counts can cancel exactly
    norm = std::sqrt(norm);
    for (double& x : out) x /= norm;
    return out;
}

Vec FileProvider::encode(const std::string& code) const {
    auto it = table_.find(code);
    if (it == table_.end()) throw CodaError("embedding provider: unknown code key '" + code + "'");
    return it->second;
}

void save_embeddings(const std::string& path, const std::vector<std::string>& keys,
                     const std::vector<Vec>& rows) {
    require(keys.size() == rows.size(), "save_embeddings: keys/rows length mismatch");
    std::uint64_t count = rows.size();
    std::uint64_t dim = rows.empty() ? 0 : rows[0].size();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CodaError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(&count), 8);
    out.write(reinterpret_cast<const char*>(&dim), 8);
    std::vector<float> row(dim);
    for (const Vec& r : rows) {
        require(r.size() == dim, "save_embeddings: ragged rows");
        for (std::size_t j = 0; j < dim; ++j) row[j] = float(r[j]);
        out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(4 * dim));
    }
    std::ofstream ks(path + ".keys");
    if (!ks) throw CodaError("cannot open " + path + ".keys for writing");
    for (const auto& k : keys) ks << k << "\n";
}

std::unique_ptr<FileProvider> load_embeddings(const std::string& path) {
    return load_embeddings(path, 0);
}

std::unique_ptr<FileProvider> load_embeddings(const std::string& path, std::size_t expect_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CodaError("cannot open embedding file " + path);
    std::uint64_t count = 0, dim = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    in.read(reinterpret_cast<char*>(&dim), 8);
    if (!in) throw CodaError("embedding file " + path + ": truncated header");
    if (expect_dim != 0 && dim != expect_dim)
        throw CodaError("embedding file " + path + ": dim " + std::to_string(dim) +
                        " does not match configured dim " + std::to_string(expect_dim));
    std::vector<Vec> rows(count, Vec(dim, 0.0));
    std::vector<float> buf(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(4 * dim));
        if (!in) throw CodaError("embedding file " + path + ": truncated at row " + std::to_string(i));
        for (std::uint64_t j = 0; j < dim; ++j) rows[i][j] = double(buf[j]);
    }
    std::ifstream ks(path + ".keys");
    if (!ks) throw CodaError("cannot open key sidecar " + path + ".keys");
    std::map<std::string, Vec> table;
    std::string key;
    std::uint64_t i = 0;
    while (std::getline(ks, key)) {
        if (key.empty() && i == count) break;
        if (i >= count) throw CodaError("key sidecar " + path + ".keys has more keys than rows");
        table[key] = rows[i++];
    }
    if (i != count) throw CodaError("key sidecar " + path + ".keys has fewer keys than rows");
    return std::make_unique<FileProvider>(std::move(table), dim);
}

}  // namespace coda
