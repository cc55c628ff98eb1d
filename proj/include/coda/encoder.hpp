#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "coda/params.hpp"

namespace coda {

// Pluggable code-embedding provider. Deterministic: the same code text always
// maps to the same vector of fixed dimension.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual Vec encode(const std::string& code) const = 0;
};

// Feature hashing over alphanumeric tokens: 64-bit FNV-1a picks the bucket,
// one hash bit picks the sign, result is L2-normalized (empty input stays 0).
class HashingProvider : public EmbeddingProvider {
public:
    explicit HashingProvider(std::size_t dim) : dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Vec encode(const std::string& code) const override;

private:
    std::size_t dim_;
};

// Exact lookup of precomputed vectors by code key.
class FileProvider : public EmbeddingProvider {
public:
    FileProvider(std::map<std::string, Vec> table, std::size_t dim)
        : table_(std::move(table)), dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Vec encode(const std::string& code) const override;

private:
    std::map<std::string, Vec> table_;
    std::size_t dim_;
};

// Binary embedding file: little-endian header [u64 count][u64 dim], then
// count rows of dim float32. Keys live in a sidecar "<path>.keys", one per
// line, same order.
std::unique_ptr<FileProvider> load_embeddings(const std::string& path);
std::unique_ptr<FileProvider> load_embeddings(const std::string& path, std::size_t expect_dim);
void save_embeddings(const std::string& path, const std::vector<std::string>& keys,
                     const std::vector<Vec>& rows);

}  // namespace coda
