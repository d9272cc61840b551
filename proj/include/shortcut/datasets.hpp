#pragma once

// Shortcut datasets: IDX ingestion, parity labelling, corner-patch injection,
// subsetting, and attribute-correlated curation from a list_attr manifest.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/digest.hpp"
#include "shortcut/error.hpp"
#include "shortcut/rng.hpp"

namespace shortcut {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxFormatError : DataError {
    using DataError::DataError;
};
struct IdxLengthError : DataError {
    using DataError::DataError;
};
struct IdxPairingError : DataError {
    using DataError::DataError;
};

/// Grayscale image, row-major pixels in [0, 1].
struct ImageTensor {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    double at(int row, int col) const { return pixels[static_cast<std::size_t>(row * width + col)]; }
};

struct LabelledImages {
    std::vector<ImageTensor> images;
    std::vector<std::uint8_t> labels;
};

enum class Corner { top_left, top_right, bottom_left, bottom_right };
enum class Parity { even, odd };

struct ShortcutSpec {
    int patch_size = 4;
    Corner corner = Corner::top_left;
    double intensity = 1.0;
    double efficacy = 1.0;  ///< fraction p of the target class carrying the patch
    Parity target_parity = Parity::even;

    void validate() const {
        if (patch_size < 1) throw ConfigError("patch_size must be positive");
        if (!(intensity > 0.0 && intensity <= 1.0)) throw ConfigError("patch intensity must lie in (0, 1]");
        if (!(efficacy >= 0.0 && efficacy <= 1.0)) throw ConfigError("efficacy must lie in [0, 1]");
    }
};

struct ShortcutDataset {
    int height = 0;
    int width = 0;
    Matrix inputs;        ///< N x (height * width)
    Vector targets;       ///< +1 / -1
    std::vector<std::uint8_t> shortcut_flags;
    Matrix clean_inputs;  ///< pre-injection copy
    std::uint64_t seed = 0;
    std::string provenance;

    Eigen::Index size() const { return inputs.rows(); }
    std::size_t flagged() const { return static_cast<std::size_t>(std::count(shortcut_flags.begin(), shortcut_flags.end(), 1)); }
};

namespace detail {

inline std::uint32_t read_be32(std::string_view bytes, std::size_t offset, std::string_view file) {
    if (bytes.size() < offset + 4)
        throw IdxLengthError("IDX file " + std::string(file) + " truncated in header");
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes[offset + i]);
    return v;
}

inline std::string hex32(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

inline void check_magic(std::uint32_t found, std::uint32_t expected, const std::string& path) {
    if (found != expected)
        throw IdxFormatError("IDX file " + path + ": expected magic " + hex32(expected) + ", found " + hex32(found));
}

} // namespace detail

inline std::vector<ImageTensor> parse_idx_images(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    detail::check_magic(detail::read_be32(bytes, 0, path), kIdxImageMagic, path);
    const std::uint64_t count = detail::read_be32(bytes, 4, path);
    const std::uint64_t rows = detail::read_be32(bytes, 8, path);
    const std::uint64_t cols = detail::read_be32(bytes, 12, path);
    const std::uint64_t need = count * rows * cols;
    if (bytes.size() - 16 != need)
        throw IdxLengthError("IDX image file " + path + ": expected " + std::to_string(need) + " payload bytes, found " +
                             std::to_string(bytes.size() - 16));
    std::vector<ImageTensor> images(static_cast<std::size_t>(count));
    std::size_t pos = 16;
    for (auto& img : images) {
        img.height = static_cast<int>(rows);
        img.width = static_cast<int>(cols);
        img.pixels.resize(static_cast<std::size_t>(rows * cols));
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(bytes[pos++]) / 255.0;
    }
    return images;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    detail::check_magic(detail::read_be32(bytes, 0, path), kIdxLabelMagic, path);
    const std::uint64_t count = detail::read_be32(bytes, 4, path);
    if (bytes.size() - 8 != count)
        throw IdxLengthError("IDX label file " + path + ": expected " + std::to_string(count) + " labels, found " +
                             std::to_string(bytes.size() - 8));
    return {bytes.begin() + 8, bytes.end()};
}

/// Reads an IDX image/label pair; pixels are scaled by 1/255.
inline LabelledImages parse_idx(const std::string& images_path, const std::string& labels_path) {
    LabelledImages out{parse_idx_images(images_path), parse_idx_labels(labels_path)};
    if (out.images.size() != out.labels.size())
        throw IdxPairingError("IDX pairing error: " + std::to_string(out.images.size()) + " images in " + images_path +
                              " but " + std::to_string(out.labels.size()) + " labels in " + labels_path);
    return out;
}

/// Writes an IDX image file from raw bytes (used for fixtures and tooling).
inline void write_idx_images(const std::string& path, int count, int rows, int cols, std::span<const std::uint8_t> pixels) {
    std::string out;
    for (std::uint32_t v : {kIdxImageMagic, static_cast<std::uint32_t>(count), static_cast<std::uint32_t>(rows),
                            static_cast<std::uint32_t>(cols)})
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    std::ofstream f(path, std::ios::binary);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels) {
    std::string out;
    for (std::uint32_t v : {kIdxLabelMagic, static_cast<std::uint32_t>(labels.size())})
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
    out.append(reinterpret_cast<const char*>(labels.data()), labels.size());
    std::ofstream f(path, std::ios::binary);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

/// Even digits -> +1, odd digits -> -1.
inline ShortcutDataset build_parity_task(const std::vector<ImageTensor>& images, std::span<const std::uint8_t> labels) {
    if (images.size() != labels.size()) throw IdxPairingError("build_parity_task: image/label count mismatch");
    if (images.empty()) throw DataError("build_parity_task: no images");
    ShortcutDataset ds;
    ds.height = images.front().height;
    ds.width = images.front().width;
    const auto d = static_cast<Eigen::Index>(ds.height) * ds.width;
    ds.inputs.resize(static_cast<Eigen::Index>(images.size()), d);
    ds.targets.resize(static_cast<Eigen::Index>(images.size()));
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != ds.height || images[i].width != ds.width)
            throw DataError("build_parity_task: images have inconsistent shapes");
        if (labels[i] > 9) throw DataError("build_parity_task: label " + std::to_string(labels[i]) + " outside 0-9");
        const auto row = static_cast<Eigen::Index>(i);
        for (Eigen::Index k = 0; k < d; ++k) ds.inputs(row, k) = images[i].pixels[static_cast<std::size_t>(k)];
        ds.targets(row) = labels[i] % 2 == 0 ? 1.0 : -1.0;
    }
    ds.shortcut_flags.assign(images.size(), 0);
    ds.clean_inputs = ds.inputs;
    ds.provenance = "parity";
    return ds;
}

/// Pixel offsets (row-major) of the patch square.
inline std::vector<Eigen::Index> patch_pixels(int height, int width, int patch_size, Corner corner) {
    if (patch_size > std::min(height, width))
        throw ConfigError("patch of size " + std::to_string(patch_size) + " exceeds image bounds " +
                          std::to_string(height) + "x" + std::to_string(width));
    const int r0 = (corner == Corner::bottom_left || corner == Corner::bottom_right) ? height - patch_size : 0;
    const int c0 = (corner == Corner::top_right || corner == Corner::bottom_right) ? width - patch_size : 0;
    std::vector<Eigen::Index> out;
    for (int r = r0; r < r0 + patch_size; ++r)
        for (int c = c0; c < c0 + patch_size; ++c) out.push_back(static_cast<Eigen::Index>(r) * width + c);
    return out;
}

inline std::string_view to_string(Corner c) {
    switch (c) {
    case Corner::top_left: return "top_left";
    case Corner::top_right: return "top_right";
    case Corner::bottom_left: return "bottom_left";
    case Corner::bottom_right: return "bottom_right";
    }
    return "?";
}

inline std::string_view to_string(Parity p) { return p == Parity::even ? "even" : "odd"; }

/// Number of flagged examples: round(p * n), half away from zero.
inline std::size_t shortcut_count(double efficacy, std::size_t target_count) {
    return static_cast<std::size_t>(std::round(efficacy * static_cast<double>(target_count)));
}

/// Puts the patch on round(p * |target class|) target-class rows chosen by a
/// seeded shuffle. Always starts from `clean_inputs`, so re-application with the
/// same spec and seed reproduces the same dataset.
inline ShortcutDataset inject_patch(const ShortcutDataset& ds, const ShortcutSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto pixels = patch_pixels(ds.height, ds.width, spec.patch_size, spec.corner);
    const double target = spec.target_parity == Parity::even ? 1.0 : -1.0;
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (ds.targets(i) == target) members.push_back(i);
    Rng rng(mix_seed(seed, 0x9a7c));
    rng.shuffle(std::span(members));
    const std::size_t count = shortcut_count(spec.efficacy, members.size());

    ShortcutDataset out = ds;
    out.inputs = ds.clean_inputs;
    out.shortcut_flags.assign(static_cast<std::size_t>(ds.size()), 0);
    for (std::size_t k = 0; k < count; ++k) {
        const Eigen::Index row = members[k];
        out.shortcut_flags[static_cast<std::size_t>(row)] = 1;
        for (auto p : pixels) out.inputs(row, p) = spec.intensity;
    }
    out.seed = seed;
    std::ostringstream prov;
    prov << ds.provenance << "; patch size=" << spec.patch_size << " corner=" << to_string(spec.corner)
         << " intensity=" << spec.intensity << " efficacy=" << spec.efficacy
         << " parity=" << to_string(spec.target_parity) << " seed=" << seed << " flagged=" << count;
    out.provenance = prov.str();
    return out;
}

inline ShortcutDataset select_rows(const ShortcutDataset& ds, std::span<const Eigen::Index> rows) {
    ShortcutDataset out;
    out.height = ds.height;
    out.width = ds.width;
    out.seed = ds.seed;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.inputs.resize(n, ds.inputs.cols());
    out.clean_inputs.resize(n, ds.inputs.cols());
    out.targets.resize(n);
    out.shortcut_flags.resize(rows.size());
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto r = rows[static_cast<std::size_t>(k)];
        if (r < 0 || r >= ds.size()) throw DataError("row index out of range: " + std::to_string(r));
        out.inputs.row(k) = ds.inputs.row(r);
        out.clean_inputs.row(k) = ds.clean_inputs.row(r);
        out.targets(k) = ds.targets(r);
        out.shortcut_flags[static_cast<std::size_t>(k)] = ds.shortcut_flags[static_cast<std::size_t>(r)];
    }
    out.provenance = ds.provenance;
    return out;
}

/// Seeded subset of n rows, kept in original order. Stratified mode takes
/// ceil(n/2) positives and floor(n/2) negatives, topping up from the other
/// class when one runs short.
inline ShortcutDataset subsample(const ShortcutDataset& ds, std::size_t n, std::uint64_t seed, bool stratify) {
    const auto total = static_cast<std::size_t>(ds.size());
    if (n > total) throw ConfigError("subsample: requested " + std::to_string(n) + " rows but dataset has " +
                                     std::to_string(total));
    Rng rng(mix_seed(seed, 0x5b5));
    std::vector<Eigen::Index> chosen;
    if (!stratify) {
        std::vector<Eigen::Index> all(total);
        std::iota(all.begin(), all.end(), Eigen::Index{0});
        rng.shuffle(std::span(all));
        chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        std::vector<Eigen::Index> pos, neg;
        for (Eigen::Index i = 0; i < ds.size(); ++i) (ds.targets(i) > 0 ? pos : neg).push_back(i);
        rng.shuffle(std::span(pos));
        rng.shuffle(std::span(neg));
        std::size_t want_pos = std::min(pos.size(), (n + 1) / 2);
        std::size_t want_neg = std::min(neg.size(), n - want_pos);
        want_pos = n - want_neg;
        chosen.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(want_pos));
        chosen.insert(chosen.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(want_neg));
    }
    std::sort(chosen.begin(), chosen.end());
    ShortcutDataset out = select_rows(ds, chosen);
    std::string index_text;
    for (auto c : chosen) index_text += std::to_string(c) + ",";
    out.provenance = ds.provenance + "; subsample n=" + std::to_string(n) + " seed=" + std::to_string(seed) +
                     (stratify ? " stratified" : "") + " indices_sha256=" + sha256_hex(index_text);
    out.seed = seed;
    return out;
}

// ---------------------------------------------------------------------------
// Attribute manifests (list_attr layout).

struct AttributeManifest {
    std::size_t entry_count = 0;
    std::vector<std::string> attribute_names;
    std::vector<std::string> ids;
    std::vector<std::vector<std::int8_t>> values;  ///< one row per id, +1 / -1

    std::size_t attribute_index(const std::string& name) const {
        for (std::size_t i = 0; i < attribute_names.size(); ++i)
            if (attribute_names[i] == name) return i;
        std::string names;
        for (const auto& a : attribute_names) names += (names.empty() ? "" : ", ") + a;
        throw DataError("unknown attribute '" + name + "'; available: " + names);
    }
};

inline AttributeManifest parse_attribute_manifest_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    AttributeManifest m;
    int line_no = 0;
    const auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") != std::string::npos) return true;
        }
        return false;
    };
    if (!next_line()) throw DataError("attribute manifest: missing entry count");
    try {
        std::size_t used = 0;
        const long long count = std::stoll(line, &used);
        if (count < 0 || line.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
        m.entry_count = static_cast<std::size_t>(count);
    } catch (const std::exception&) {
        throw DataError("attribute manifest line 1: expected entry count, found '" + line + "'");
    }
    if (!next_line()) throw DataError("attribute manifest: missing attribute-name line");
    {
        std::istringstream names(line);
        for (std::string name; names >> name;) m.attribute_names.push_back(name);
    }
    while (next_line()) {
        std::istringstream row(line);
        std::string id;
        row >> id;
        std::vector<std::int8_t> vals;
        for (std::string field; row >> field;) {
            if (field == "1" || field == "+1") vals.push_back(1);
            else if (field == "-1") vals.push_back(-1);
            else throw DataError("attribute manifest line " + std::to_string(line_no) + ": value '" + field + "' is not +1/-1");
        }
        if (vals.size() != m.attribute_names.size())
            throw DataError("attribute manifest line " + std::to_string(line_no) + ": expected " +
                            std::to_string(m.attribute_names.size()) + " values, found " + std::to_string(vals.size()));
        m.ids.push_back(std::move(id));
        m.values.push_back(std::move(vals));
    }
    if (m.ids.size() != m.entry_count)
        throw DataError("attribute manifest declares " + std::to_string(m.entry_count) + " entries but has " +
                        std::to_string(m.ids.size()) + " rows");
    return m;
}

inline AttributeManifest parse_attribute_manifest(const std::string& path) {
    return parse_attribute_manifest_text(read_file_bytes(path));
}

/// Counts over the full manifest. `aligned_*` are the curated cells
/// (class+ with pos attr, class- with neg attr); `opposed_*` the swapped cells.
struct CurationReport {
    std::size_t total = 0;
    std::size_t class_pos = 0;
    std::size_t class_neg = 0;
    std::size_t aligned_pos = 0;   ///< class = +1, shortcut_pos = +1
    std::size_t aligned_neg = 0;   ///< class = -1, shortcut_neg = +1
    std::size_t opposed_pos = 0;   ///< class = +1, shortcut_neg = +1
    std::size_t opposed_neg = 0;   ///< class = -1, shortcut_pos = +1
};

struct CurationResult {
    std::vector<std::string> ids;
    std::vector<std::size_t> rows;
    std::vector<double> targets;  ///< class attribute value per selected row
    CurationReport report;
};

namespace detail {

inline CurationResult curate(const AttributeManifest& m, const std::string& class_attr, const std::string& pos_attr,
                             const std::string& neg_attr, bool aligned) {
    const auto ci = m.attribute_index(class_attr);
    const auto pi = m.attribute_index(pos_attr);
    const auto ni = m.attribute_index(neg_attr);
    CurationResult out;
    auto& r = out.report;
    r.total = m.ids.size();
    for (std::size_t row = 0; row < m.ids.size(); ++row) {
        const auto& v = m.values[row];
        const bool cls = v[ci] > 0;
        const bool has_pos = v[pi] > 0;
        const bool has_neg = v[ni] > 0;
        (cls ? r.class_pos : r.class_neg)++;
        if (cls && has_pos) ++r.aligned_pos;
        if (!cls && has_neg) ++r.aligned_neg;
        if (cls && has_neg) ++r.opposed_pos;
        if (!cls && has_pos) ++r.opposed_neg;
        const bool take = aligned ? (cls ? has_pos : has_neg) : (cls ? has_neg : has_pos);
        if (take) {
            out.ids.push_back(m.ids[row]);
            out.rows.push_back(row);
            out.targets.push_back(cls ? 1.0 : -1.0);
        }
    }
    return out;
}

} // namespace detail

/// Rows whose shortcut attribute agrees with the class: (class=+1 and pos=+1) or (class=-1 and neg=+1).
inline CurationResult curate_attribute_correlated(const AttributeManifest& m, const std::string& class_attr,
                                                  const std::string& shortcut_attr_pos,
                                                  const std::string& shortcut_attr_neg) {
    return detail::curate(m, class_attr, shortcut_attr_pos, shortcut_attr_neg, true);
}

/// The opposed cells, used as the clean evaluation set.
inline CurationResult curate_attribute_opposed(const AttributeManifest& m, const std::string& class_attr,
                                               const std::string& shortcut_attr_pos,
                                               const std::string& shortcut_attr_neg) {
    return detail::curate(m, class_attr, shortcut_attr_pos, shortcut_attr_neg, false);
}

} // namespace shortcut
