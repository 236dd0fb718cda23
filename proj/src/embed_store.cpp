#include "retrank/embed_store.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace retrank {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'R', 'A'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");

template <typename T>
void put(std::string& buf, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const char* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoError, "cannot open " + tmp + " for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorCode::IoError, "write failed for " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot rename " + tmp + ": " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::vector<DocId> ids, std::vector<float> data)
    : dim_(dim), ids_(std::move(ids)), data_(std::move(data)) {
    if (dim_ == 0) {
        throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
    }
    if (data_.size() != ids_.size() * dim_) {
        throw Error(ErrorCode::DimMismatch, "data has " + std::to_string(data_.size()) + " values, expected " +
                                               std::to_string(ids_.size()) + " x " + std::to_string(dim_));
    }
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i].empty()) {
            throw Error(ErrorCode::EmptyId, "row " + std::to_string(i) + " has an empty id");
        }
        if (!index_.emplace(ids_[i], i).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate id '" + ids_[i].str() + "'");
        }
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite value in row '" + ids_[i / dim_].str() + "'");
        }
    }
}

std::size_t EmbeddingMatrix::index_of(const DocId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        throw Error(ErrorCode::NotFound, "id '" + id.str() + "' not in store");
    }
    return it->second;
}

std::uint32_t data_checksum(std::span<const float> data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    const auto* bytes = reinterpret_cast<const Bytef*>(data.data());
    std::size_t remaining = data.size_bytes();
    // zlib takes uInt lengths
    while (remaining > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
        crc = crc32(crc, bytes, chunk);
        bytes += chunk;
        remaining -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

StoreManifest write_store(const EmbeddingMatrix& m, const std::string& path) {
    for (float v : m.data()) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue, "refusing to write non-finite value");
        }
    }
    std::string ids;
    for (const auto& id : m.ids()) {
        if (id.str().find_first_of("\r\n") != std::string::npos) {
            throw Error(ErrorCode::FormatError, "id contains a line break: '" + id.str() + "'");
        }
        ids += id.str();
        ids += '\n';
    }

    std::string bin;
    bin.reserve(kStoreHeaderBytes + m.data().size() * sizeof(float));
    bin.append(kMagic, 4);
    put<std::uint16_t>(bin, kVersion);
    put<std::uint16_t>(bin, 0);
    put<std::uint32_t>(bin, static_cast<std::uint32_t>(m.dim()));
    put<std::uint64_t>(bin, static_cast<std::uint64_t>(m.size()));
    bin.append(reinterpret_cast<const char*>(m.data().data()), m.data().size() * sizeof(float));

    StoreManifest manifest;
    manifest.dim = static_cast<std::uint32_t>(m.dim());
    manifest.count = m.size();
    manifest.checksum = data_checksum(m.data());
    manifest.id_file = std::filesystem::path(path + ".ids").filename().string();
    manifest.created_at = utc_now();

    const nlohmann::json mj = {{"dim", manifest.dim},
                               {"count", manifest.count},
                               {"checksum", manifest.checksum},
                               {"id_file", manifest.id_file},
                               {"created_at", manifest.created_at}};

    write_file_atomic(path, bin);
    write_file_atomic(path + ".ids", ids);
    write_file_atomic(path + ".manifest.json", mj.dump(2) + "\n");
    return manifest;
}

StoreManifest read_manifest(const std::string& path) {
    const std::string text = read_file(path + ".manifest.json");
    try {
        const auto j = nlohmann::json::parse(text);
        StoreManifest m;
        m.dim = j.at("dim").get<std::uint32_t>();
        m.count = j.at("count").get<std::uint64_t>();
        m.checksum = j.at("checksum").get<std::uint32_t>();
        m.id_file = j.at("id_file").get<std::string>();
        m.created_at = j.at("created_at").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, "bad manifest for " + path + ": " + e.what());
    }
}

EmbeddingMatrix read_store(const std::string& path) {
    const std::string bin = read_file(path);
    if (bin.size() < kStoreHeaderBytes || std::memcmp(bin.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::FormatError, path + " is not an embedding store");
    }
    const auto version = get<std::uint16_t>(bin.data() + 4);
    if (version != kVersion) {
        throw Error(ErrorCode::FormatError, "unsupported store version " + std::to_string(version));
    }
    const auto dim = get<std::uint32_t>(bin.data() + 8);
    const auto count = get<std::uint64_t>(bin.data() + 12);
    if (dim == 0) {
        throw Error(ErrorCode::FormatError, path + " declares dim 0");
    }
    const std::uint64_t expected = kStoreHeaderBytes + count * dim * sizeof(float);
    if (bin.size() != expected) {
        throw Error(ErrorCode::FormatError, path + " has " + std::to_string(bin.size()) + " bytes, header implies " +
                                                std::to_string(expected));
    }
    std::vector<float> data(count * dim);
    std::memcpy(data.data(), bin.data() + kStoreHeaderBytes, data.size() * sizeof(float));

    std::vector<DocId> ids;
    ids.reserve(count);
    {
        std::ifstream in(path + ".ids", std::ios::binary);
        if (!in) {
            throw Error(ErrorCode::IoError, "cannot open id sidecar " + path + ".ids");
        }
        std::string line;
        while (std::getline(in, line)) {
            ids.emplace_back(line);
        }
    }
    if (ids.size() != count) {
        throw Error(ErrorCode::FormatError, "id sidecar has " + std::to_string(ids.size()) + " lines, store has " +
                                                std::to_string(count) + " rows");
    }

    if (std::filesystem::exists(path + ".manifest.json")) {
        const auto manifest = read_manifest(path);
        if (manifest.dim != dim || manifest.count != count) {
            throw Error(ErrorCode::FormatError, "manifest shape disagrees with " + path);
        }
        if (manifest.checksum != data_checksum(data)) {
            throw Error(ErrorCode::ChecksumMismatch, "data section of " + path + " does not match manifest checksum");
        }
    }
    return EmbeddingMatrix(dim, std::move(ids), std::move(data));
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
    std::vector<float> out(m.data().size());
    const std::size_t d = m.dim();
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto row = m.row(i);
        double sq = 0.0;
        for (float v : row) {
            sq += static_cast<double>(v) * v;
        }
        if (sq == 0.0) {
            throw Error(ErrorCode::ZeroVector, "row '" + m.ids()[i].str() + "' has zero norm");
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t k = 0; k < d; ++k) {
            out[i * d + k] = static_cast<float>(row[k] * inv);
        }
    }
    return EmbeddingMatrix(d, m.ids(), std::move(out));
}

std::vector<float> lookup(const EmbeddingMatrix& store, const DocId& id) {
    const auto row = store.row(store.index_of(id));
    return {row.begin(), row.end()};
}

}  // namespace retrank
