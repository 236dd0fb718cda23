#ifndef RETRANK_EMBED_STORE_HPP
#define RETRANK_EMBED_STORE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "retrank/core_types.hpp"

namespace retrank {

/// Dense N x D float32 matrix, row-major, one row per id.
///
/// On disk (little-endian):
///   "LMRA" | u16 version=1 | u16 reserved=0 | u32 dim | u64 count | count*dim f32
/// plus a sidecar `<path>.ids` (one id per line, same order) and a JSON
/// manifest `<path>.manifest.json`.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    /// Validates shape, distinct ids and finiteness.
    EmbeddingMatrix(std::size_t dim, std::vector<DocId> ids, std::vector<float> data);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<DocId>& ids() const noexcept { return ids_; }
    const std::vector<float>& data() const noexcept { return data_; }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    bool contains(const DocId& id) const { return index_.count(id) != 0; }
    /// Row index of `id`; throws NotFound.
    std::size_t index_of(const DocId& id) const;

    friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
        return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<DocId> ids_;
    std::vector<float> data_;
    std::unordered_map<DocId, std::size_t> index_;
};

struct StoreManifest {
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    std::uint32_t checksum = 0;
    std::string id_file;
    std::string created_at;
};

inline constexpr std::size_t kStoreHeaderBytes = 20;

/// Writes the binary, the id sidecar and the manifest. Returns the manifest.
StoreManifest write_store(const EmbeddingMatrix& m, const std::string& path);

/// Reads the binary and its id sidecar; verifies the manifest checksum when
/// the manifest exists.
EmbeddingMatrix read_store(const std::string& path);

StoreManifest read_manifest(const std::string& path);

/// CRC-32 (IEEE) of the float data section as written on disk.
std::uint32_t data_checksum(std::span<const float> data);

/// Returns a copy with every row scaled to unit Euclidean norm. Throws ZeroVector.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

/// Copy of the row for `id`; throws NotFound.
std::vector<float> lookup(const EmbeddingMatrix& store, const DocId& id);

}  // namespace retrank

#endif  // RETRANK_EMBED_STORE_HPP
