#pragma once

// "MIS1" tensor container.
//
// Layout (all integers little-endian):
//   "MIS1"                      4 bytes magic
//   u32 array_count
//   per array:
//     u16 name_length, name bytes
//     u8  rank, rank x u64 dims
//     prod(dims) x f64, row-major

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/digest.hpp"
#include "shortcut/error.hpp"

namespace shortcut {

struct ContainerMagicError : DataError {
    using DataError::DataError;
};
struct ContainerDimensionError : DataError {
    using DataError::DataError;
};
struct ContainerTruncatedError : DataError {
    using DataError::DataError;
};

struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    bool operator==(const NamedArray&) const = default;
};

using TensorContainer = std::vector<NamedArray>;

inline NamedArray array_from(std::string name, const Eigen::MatrixXd& m) {
    NamedArray a{std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
    a.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return a;
}

inline NamedArray array_from(std::string name, const Eigen::VectorXd& v) {
    return {std::move(name), {static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

inline NamedArray array_from(std::string name, std::vector<double> values) {
    const auto n = static_cast<std::uint64_t>(values.size());
    return {std::move(name), {n}, std::move(values)};
}

/// Rank-2 view (rank-1 arrays become a single column; higher ranks flatten trailing dims).
inline Eigen::MatrixXd to_matrix(const NamedArray& a) {
    if (a.dims.empty()) throw DataError("array '" + a.name + "' has rank 0");
    const auto rows = static_cast<Eigen::Index>(a.dims[0]);
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(a.data.size()) / rows;
    Eigen::MatrixXd m(rows, a.dims.size() == 1 ? 1 : cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = a.data[static_cast<std::size_t>(i * m.cols() + j)];
    return m;
}

inline Eigen::VectorXd to_vector(const NamedArray& a) {
    return Eigen::Map<const Eigen::VectorXd>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

inline const NamedArray& find_array(const TensorContainer& c, std::string_view name) {
    for (const auto& a : c)
        if (a.name == name) return a;
    std::string names;
    for (const auto& a : c) names += (names.empty() ? "" : ", ") + a.name;
    throw DataError("container has no array named '" + std::string(name) + "' (available: " + names + ")");
}

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get_le(std::string_view what) {
        need(sizeof(T), what);
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            value |= static_cast<T>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n, std::string_view what) {
        need(n, what);
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n, std::string_view what) const {
        if (bytes_.size() - pos_ < n)
            throw ContainerTruncatedError("MIS1 container truncated while reading " + std::string(what) + " at byte " +
                                          std::to_string(pos_));
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_container(const TensorContainer& arrays) {
    if (arrays.size() > std::numeric_limits<std::uint32_t>::max()) throw ContainerDimensionError("too many arrays");
    std::string out = "MIS1";
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.name.size() > std::numeric_limits<std::uint16_t>::max())
            throw ContainerDimensionError("array name too long: " + a.name.substr(0, 32));
        if (a.dims.size() > std::numeric_limits<std::uint8_t>::max())
            throw ContainerDimensionError("array rank too large: " + a.name);
        if (a.element_count() != a.data.size())
            throw ContainerDimensionError("array '" + a.name + "' dims do not match its data length");
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
        out += a.name;
        out.push_back(static_cast<char>(a.dims.size()));
        for (auto d : a.dims) detail::put_le<std::uint64_t>(out, d);
        for (double v : a.data) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline TensorContainer decode_container(std::string_view bytes) {
    detail::ByteReader in(bytes);
    if (bytes.size() < 4 || bytes.substr(0, 4) != "MIS1") {
        const auto found = bytes.substr(0, std::min<std::size_t>(4, bytes.size()));
        throw ContainerMagicError("not a MIS1 container: expected magic \"MIS1\", found \"" + std::string(found) + "\"");
    }
    in.take(4, "magic");
    const auto count = in.get_le<std::uint32_t>("array count");
    TensorContainer out;
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedArray a;
        const auto name_len = in.get_le<std::uint16_t>("name length");
        a.name = std::string(in.take(name_len, "array name"));
        const auto rank = in.get_le<std::uint8_t>("rank");
        std::uint64_t elements = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            const auto d = in.get_le<std::uint64_t>("dims");
            if (d != 0 && elements > std::numeric_limits<std::uint64_t>::max() / 8 / d)
                throw ContainerDimensionError("array '" + a.name + "' dimensions overflow");
            elements *= d;
            a.dims.push_back(d);
        }
        if (elements > in.remaining() / 8)
            throw ContainerTruncatedError("MIS1 container truncated: array '" + a.name + "' needs " +
                                          std::to_string(elements * 8) + " bytes, " +
                                          std::to_string(in.remaining()) + " remain");
        a.data.resize(static_cast<std::size_t>(elements));
        for (auto& v : a.data) v = std::bit_cast<double>(in.get_le<std::uint64_t>("data"));
        out.push_back(std::move(a));
    }
    if (in.remaining() != 0)
        throw DataError("MIS1 container has " + std::to_string(in.remaining()) + " trailing bytes");
    return out;
}

inline void write_bytes(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path);
}

inline void tensor_container_write(const std::string& path, const TensorContainer& arrays) {
    write_bytes(path, encode_container(arrays));
}

inline TensorContainer tensor_container_read(const std::string& path) {
    return decode_container(read_file_bytes(path));
}

} // namespace shortcut
