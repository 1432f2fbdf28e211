#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "deita/errors.hpp"
#include "deita/hash.hpp"

namespace deita {

using EmbeddingVector = std::vector<double>;

/// Id-indexed fixed-dimension vectors. Immutable once loaded; queries are
/// pure and safe to call concurrently.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dim = 0) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }

    void add(const std::string& id, EmbeddingVector v) {
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_)
            throw DataError("embedding for '" + id + "' has dim " + std::to_string(v.size()) +
                            ", store dim is " + std::to_string(dim_));
        for (double x : v)
            if (!std::isfinite(x))
                throw DataError("embedding for '" + id + "' has non-finite entries");
        if (index_.count(id)) throw DataError("duplicate embedding id '" + id + "'");
        index_.emplace(id, entries_.size());
        entries_.emplace_back(id, std::move(v));
    }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const EmbeddingVector& by_id(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw DataError("no embedding for id '" + id + "'");
        return entries_[it->second].second;
    }

    const std::vector<std::pair<std::string, EmbeddingVector>>& entries() const {
        return entries_;
    }

    /// Free-form descriptor of what text was embedded and how it was pooled.
    std::string embedded_text;

private:
    std::size_t dim_;
    std::vector<std::pair<std::string, EmbeddingVector>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// d = 1 - cos(u, v), in [0, 2].
inline double cosine_distance(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.size() != v.size())
        throw DataError("cosine_distance: dim mismatch (" + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()) + ")");
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0 || nv == 0) throw DataError("cosine_distance: zero-norm vector");
    return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

struct NearestResult {
    double distance = std::numeric_limits<double>::infinity();
    std::optional<std::string> id;
};

/// Exact exhaustive minimum cosine distance from v to the selected set.
/// Empty set yields the +inf sentinel.
inline NearestResult nearest_distance(const EmbeddingVector& v, const EmbeddingStore& store,
                                      const std::vector<std::string>& selected) {
    NearestResult best;
    for (const auto& id : selected) {
        const double d = cosine_distance(v, store.by_id(id));
        if (d < best.distance) {
            best.distance = d;
            best.id = id;
        }
    }
    return best;
}

/// Componentwise arithmetic mean of equal-length rows.
inline EmbeddingVector mean_pool(const std::vector<EmbeddingVector>& rows) {
    if (rows.empty()) throw DataError("mean_pool: empty input");
    const std::size_t dim = rows.front().size();
    EmbeddingVector mean(dim, 0.0);
    for (const auto& row : rows) {
        if (row.size() != dim) throw DataError("mean_pool: inconsistent row dims");
        for (std::size_t i = 0; i < dim; ++i) mean[i] += row[i];
    }
    for (double& x : mean) x /= static_cast<double>(rows.size());
    return mean;
}

// --- persistence --------------------------------------------------------
// Textual: header line {"dim": d, "count": n}, then {"id": ..., "vector": [...]}
// per line at full binary64 precision. Packed: "DEMB", version 1, LE u32 dim,
// u32 count, then per record u16 id length, id bytes, dim LE binary32 values.

enum class EmbeddingFormat { Textual, Packed };

inline void save_embeddings(const EmbeddingStore& store, const std::string& path,
                            EmbeddingFormat format) {
    if (format == EmbeddingFormat::Textual) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw DataError("cannot open embedding output '" + path + "'");
        nlohmann::json header = {{"dim", store.dim()}, {"count", store.size()}};
        if (!store.embedded_text.empty()) header["embedded_text"] = store.embedded_text;
        out << header.dump() << '\n';
        for (const auto& [id, vec] : store.entries())
            out << nlohmann::json{{"id", id}, {"vector", vec}}.dump() << '\n';
        if (!out) throw DataError("write failed for '" + path + "'");
        return;
    }
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot open embedding output '" + path + "'");
    out.write("DEMB", 4);
    const unsigned char version = 1;
    out.write(reinterpret_cast<const char*>(&version), 1);
    const auto write_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    write_u32(static_cast<std::uint32_t>(store.dim()));
    write_u32(static_cast<std::uint32_t>(store.size()));
    for (const auto& [id, vec] : store.entries()) {
        if (id.size() > UINT16_MAX)
            throw DataError("embedding id too long for packed format: '" + id + "'");
        const std::uint16_t len = static_cast<std::uint16_t>(id.size());
        unsigned char lb[2] = {static_cast<unsigned char>(len),
                               static_cast<unsigned char>(len >> 8)};
        out.write(reinterpret_cast<const char*>(lb), 2);
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (double x : vec) {
            const float f = static_cast<float>(x);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            unsigned char b[4] = {static_cast<unsigned char>(bits),
                                  static_cast<unsigned char>(bits >> 8),
                                  static_cast<unsigned char>(bits >> 16),
                                  static_cast<unsigned char>(bits >> 24)};
            out.write(reinterpret_cast<const char*>(b), 4);
        }
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

inline EmbeddingStore load_embeddings_textual(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line))
        throw DataError("embedding file '" + path + "' is empty");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("embedding header in '" + path + "': " + std::string(e.what()));
    }
    if (!header.contains("dim") || !header.contains("count"))
        throw DataError("embedding header needs dim and count");
    const std::size_t dim = header["dim"].get<std::size_t>();
    const std::size_t count = header["count"].get<std::size_t>();
    if (dim < 1) throw DataError("embedding dim must be >= 1");
    EmbeddingStore store(dim);
    if (header.contains("embedded_text"))
        store.embedded_text = header["embedded_text"].get<std::string>();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("embedding line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.contains("id") || !rec.contains("vector"))
            throw DataError("embedding line " + std::to_string(line_no) + ": need id and vector");
        const std::string id = rec["id"].get<std::string>();
        auto vec = rec["vector"].get<EmbeddingVector>();
        if (vec.size() != dim)
            throw DataError("embedding for id '" + id + "' has dim " +
                            std::to_string(vec.size()) + ", header says " + std::to_string(dim));
        store.add(id, std::move(vec));
    }
    if (store.size() != count)
        throw DataError("embedding file '" + path + "': header count " + std::to_string(count) +
                        " but " + std::to_string(store.size()) + " records");
    return store;
}

inline EmbeddingStore load_embeddings_packed(std::istream& in, const std::string& path) {
    const auto truncated = [&]() -> DataError {
        return DataError("packed embedding file '" + path + "' is truncated");
    };
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "DEMB", 4) != 0)
        throw DataError("'" + path + "' is not a packed embedding file (bad magic)");
    unsigned char version;
    if (!in.read(reinterpret_cast<char*>(&version), 1)) throw truncated();
    if (version != 1)
        throw DataError("unsupported packed embedding version " + std::to_string(version));
    const auto read_u32 = [&]() -> std::uint32_t {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw truncated();
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    };
    const std::uint32_t dim = read_u32();
    const std::uint32_t count = read_u32();
    if (dim < 1) throw DataError("embedding dim must be >= 1");
    EmbeddingStore store(dim);
    for (std::uint32_t r = 0; r < count; ++r) {
        unsigned char lb[2];
        if (!in.read(reinterpret_cast<char*>(lb), 2)) throw truncated();
        const std::uint16_t len =
            static_cast<std::uint16_t>(lb[0] | (static_cast<std::uint16_t>(lb[1]) << 8));
        std::string id(len, '\0');
        if (len > 0 && !in.read(id.data(), len)) throw truncated();
        EmbeddingVector vec(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            const std::uint32_t bits = read_u32();
            float f;
            std::memcpy(&f, &bits, 4);
            vec[i] = static_cast<double>(f);
        }
        store.add(id, std::move(vec));
    }
    return store;
}

/// Format is detected from the magic bytes when not forced.
inline EmbeddingStore load_embeddings(const std::string& path,
                                      std::optional<EmbeddingFormat> format = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding file '" + path + "'");
    if (!format) {
        char magic[4] = {};
        in.read(magic, 4);
        in.clear();
        in.seekg(0);
        format = std::memcmp(magic, "DEMB", 4) == 0 ? EmbeddingFormat::Packed
                                                    : EmbeddingFormat::Textual;
    }
    return *format == EmbeddingFormat::Packed ? load_embeddings_packed(in, path)
                                              : load_embeddings_textual(in, path);
}

inline std::string embeddings_fingerprint(const EmbeddingStore& store) {
    std::string buf = std::to_string(store.dim()) + "\n";
    for (const auto& [id, vec] : store.entries()) {
        buf += id;
        for (double x : vec) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, 8);
            buf += '|';
            buf += std::to_string(bits);
        }
        buf += '\n';
    }
    return sha256_hex(buf);
}

} // namespace deita
