#pragma once

// INI-style run configuration:
//
//   # comment
//   [section]
//   key = value
//
// Sections: dataset, architecture, dynamics, mi, finite, output.
// Unknown sections or keys are errors; every key has a default.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/datasets.hpp"
#include "shortcut/dynamics.hpp"
#include "shortcut/error.hpp"
#include "shortcut/finitewidth.hpp"
#include "shortcut/infomeasure.hpp"
#include "shortcut/kernels.hpp"

namespace shortcut {

inline constexpr std::string_view kVersion = "0.1.0";

enum class DataSource { idx, tensor };
enum class TrainVariant { shortcut, clean };
enum class PointSet { clean_test, train };

struct DatasetSection {
    DataSource source = DataSource::idx;
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::string images;    ///< MIS1 container with an "images" array (tensor source)
    std::string manifest;  ///< list_attr manifest (tensor source)
    std::string class_attr = "Male";
    std::string shortcut_attr_pos = "Black_Hair";
    std::string shortcut_attr_neg = "Blond_Hair";
    int train_size = 128;
    int test_size = 256;
    bool stratify = false;
    ShortcutSpec shortcut;
    std::uint64_t seed = 0;
    std::string data_dir;  ///< defaults to the output directory
    TrainVariant train_variant = TrainVariant::shortcut;
};

struct DynamicsSection {
    double learning_rate = 1.0;
    double t_min = 1e-2;
    double t_max = 1e4;
    int points = 100;
    Spacing spacing = Spacing::log;
    bool include_zero = true;

    std::vector<double> grid() const { return make_time_grid(t_min, t_max, points, spacing, include_zero); }
};

struct MiSection {
    PointSet point_set = PointSet::clean_test;
    double variance_clamp = kMinVariance;
};

struct FiniteSection {
    std::vector<int> hidden{256, 64};
    double learning_rate = 0.05;
    int steps = 500;
    int batch_size = 32;
    LossKind loss = LossKind::softmax_cross_entropy;
    int checkpoint_every = 25;
    std::uint64_t seed = 0;
    double alpha_min = -0.5;
    double alpha_max = 1.5;
    int alpha_points = 101;
    double saliency_epsilon = 1e-3;

    TrainConfig train_config(int input_dim) const {
        TrainConfig c;
        c.widths = {input_dim};
        c.widths.insert(c.widths.end(), hidden.begin(), hidden.end());
        c.widths.push_back(loss == LossKind::mse ? 1 : 2);
        c.learning_rate = learning_rate;
        c.steps = steps;
        c.batch_size = batch_size;
        c.loss = loss;
        c.checkpoints = checkpoint_schedule(steps, checkpoint_every);
        c.seed = seed;
        return c;
    }
};

struct OutputSection {
    std::string dir = "out";
    std::vector<std::string> formats{"csv", "svg"};

    bool wants(std::string_view f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
};

struct RunConfig {
    DatasetSection dataset;
    ArchitectureSpec architecture;
    DynamicsSection dynamics;
    MiSection mi;
    FiniteSection finite;
    OutputSection output;

    std::string data_dir() const { return dataset.data_dir.empty() ? output.dir : dataset.data_dir; }

    /// Sets both the dataset and the finite-width training seed.
    void override_seed(std::uint64_t s) {
        dataset.seed = s;
        finite.seed = s;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename E>
struct EnumName {
    E value;
    std::string_view name;
};

// Field binding: parse from text, print canonical text.
struct Field {
    std::function<void(const std::string&)> parse;
    std::function<std::string()> print;
};

class FieldTable {
public:
    struct Error {
        std::string message;
    };

    void add(const std::string& section, const std::string& key, Field f) {
        order_.emplace_back(section, key);
        fields_[section + "." + key] = std::move(f);
    }

    Field* find(const std::string& section, const std::string& key) {
        auto it = fields_.find(section + "." + key);
        return it == fields_.end() ? nullptr : &it->second;
    }

    bool has_section(const std::string& s) const {
        return std::any_of(order_.begin(), order_.end(), [&](const auto& p) { return p.first == s; });
    }

    std::string nearest_key(const std::string& section, const std::string& key) const {
        std::string best;
        std::size_t best_d = std::string::npos;
        for (const auto& [s, k] : order_) {
            if (s != section) continue;
            const auto d = edit_distance(key, k);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return best;
    }

    const std::vector<std::pair<std::string, std::string>>& order() const { return order_; }

private:
    std::vector<std::pair<std::string, std::string>> order_;
    std::map<std::string, Field> fields_;
};

struct ValueError {
    std::string message;
};

inline double parse_double(const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
        throw ValueError{"expected a real number, found '" + v + "'"};
    return out;
}

inline long long parse_integer(const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ValueError{"expected an integer, found '" + v + "'"};
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ValueError{"expected true/false, found '" + v + "'"};
}

template <typename E, std::size_t N>
E parse_enum(const std::string& v, const EnumName<E> (&names)[N]) {
    for (const auto& n : names)
        if (n.name == v) return n.value;
    std::string opts;
    for (const auto& n : names) opts += (opts.empty() ? "" : ", ") + std::string(n.name);
    throw ValueError{"expected one of {" + opts + "}, found '" + v + "'"};
}

template <typename E, std::size_t N>
std::string print_enum(E v, const EnumName<E> (&names)[N]) {
    for (const auto& n : names)
        if (n.value == v) return std::string(n.name);
    return "?";
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline constexpr EnumName<DataSource> kSources[] = {{DataSource::idx, "idx"}, {DataSource::tensor, "tensor"}};
inline constexpr EnumName<Corner> kCorners[] = {{Corner::top_left, "top_left"},
                                                {Corner::top_right, "top_right"},
                                                {Corner::bottom_left, "bottom_left"},
                                                {Corner::bottom_right, "bottom_right"}};
inline constexpr EnumName<Parity> kParities[] = {{Parity::even, "even"}, {Parity::odd, "odd"}};
inline constexpr EnumName<TrainVariant> kVariants[] = {{TrainVariant::shortcut, "shortcut"},
                                                       {TrainVariant::clean, "clean"}};
inline constexpr EnumName<Activation> kActivations[] = {{Activation::relu, "relu"}, {Activation::erf, "erf"}};
inline constexpr EnumName<Spacing> kSpacings[] = {{Spacing::log, "log"}, {Spacing::linear, "linear"}};
inline constexpr EnumName<PointSet> kPointSets[] = {{PointSet::clean_test, "clean_test"}, {PointSet::train, "train"}};
inline constexpr EnumName<LossKind> kLosses[] = {{LossKind::mse, "mse"},
                                                 {LossKind::softmax_cross_entropy, "softmax_cross_entropy"}};

inline Field string_field(std::string& s) {
    return {[&s](const std::string& v) { s = v; }, [&s] { return s; }};
}
inline Field double_field(double& d) {
    return {[&d](const std::string& v) { d = parse_double(v); }, [&d] { return format_double(d); }};
}
template <typename I>
Field int_field(I& i) {
    return {[&i](const std::string& v) {
                const long long x = parse_integer(v);
                if constexpr (std::is_unsigned_v<I>)
                    if (x < 0) throw ValueError{"expected a non-negative integer, found '" + v + "'"};
                i = static_cast<I>(x);
            },
            [&i] { return std::to_string(i); }};
}
inline Field bool_field(bool& b) {
    return {[&b](const std::string& v) { b = parse_bool(v); }, [&b] { return std::string(b ? "true" : "false"); }};
}
template <typename E, std::size_t N>
Field enum_field(E& e, const EnumName<E> (&names)[N]) {
    return {[&e, &names](const std::string& v) { e = parse_enum(v, names); }, [&e, &names] { return print_enum(e, names); }};
}

inline FieldTable bind(RunConfig& c) {
    FieldTable t;
    auto& d = c.dataset;
    t.add("dataset", "source", enum_field(d.source, kSources));
    t.add("dataset", "train_images", string_field(d.train_images));
    t.add("dataset", "train_labels", string_field(d.train_labels));
    t.add("dataset", "test_images", string_field(d.test_images));
    t.add("dataset", "test_labels", string_field(d.test_labels));
    t.add("dataset", "images", string_field(d.images));
    t.add("dataset", "manifest", string_field(d.manifest));
    t.add("dataset", "class_attr", string_field(d.class_attr));
    t.add("dataset", "shortcut_attr_pos", string_field(d.shortcut_attr_pos));
    t.add("dataset", "shortcut_attr_neg", string_field(d.shortcut_attr_neg));
    t.add("dataset", "train_size", int_field(d.train_size));
    t.add("dataset", "test_size", int_field(d.test_size));
    t.add("dataset", "stratify", bool_field(d.stratify));
    t.add("dataset", "patch_size", int_field(d.shortcut.patch_size));
    t.add("dataset", "corner", enum_field(d.shortcut.corner, kCorners));
    t.add("dataset", "intensity", double_field(d.shortcut.intensity));
    t.add("dataset", "efficacy", double_field(d.shortcut.efficacy));
    t.add("dataset", "target_parity", enum_field(d.shortcut.target_parity, kParities));
    t.add("dataset", "seed", int_field(d.seed));
    t.add("dataset", "data_dir", string_field(d.data_dir));
    t.add("dataset", "train_variant", enum_field(d.train_variant, kVariants));

    auto& a = c.architecture;
    t.add("architecture", "depth", int_field(a.depth));
    t.add("architecture", "activation", enum_field(a.activation, kActivations));
    t.add("architecture", "weight_variance", double_field(a.weight_variance));
    t.add("architecture", "bias_variance", double_field(a.bias_variance));

    auto& y = c.dynamics;
    t.add("dynamics", "learning_rate", double_field(y.learning_rate));
    t.add("dynamics", "t_min", double_field(y.t_min));
    t.add("dynamics", "t_max", double_field(y.t_max));
    t.add("dynamics", "points", int_field(y.points));
    t.add("dynamics", "spacing", enum_field(y.spacing, kSpacings));
    t.add("dynamics", "include_zero", bool_field(y.include_zero));

    t.add("mi", "point_set", enum_field(c.mi.point_set, kPointSets));
    t.add("mi", "variance_clamp", double_field(c.mi.variance_clamp));

    auto& f = c.finite;
    t.add("finite", "hidden",
          {[&f](const std::string& v) {
               f.hidden.clear();
               for (const auto& item : split_list(v)) f.hidden.push_back(static_cast<int>(parse_integer(item)));
           },
           [&f] {
               std::string s;
               for (int h : f.hidden) s += (s.empty() ? "" : ",") + std::to_string(h);
               return s;
           }});
    t.add("finite", "learning_rate", double_field(f.learning_rate));
    t.add("finite", "steps", int_field(f.steps));
    t.add("finite", "batch_size", int_field(f.batch_size));
    t.add("finite", "loss", enum_field(f.loss, kLosses));
    t.add("finite", "checkpoint_every", int_field(f.checkpoint_every));
    t.add("finite", "seed", int_field(f.seed));
    t.add("finite", "alpha_min", double_field(f.alpha_min));
    t.add("finite", "alpha_max", double_field(f.alpha_max));
    t.add("finite", "alpha_points", int_field(f.alpha_points));
    t.add("finite", "saliency_epsilon", double_field(f.saliency_epsilon));

    auto& o = c.output;
    t.add("output", "dir", string_field(o.dir));
    t.add("output", "formats",
          {[&o](const std::string& v) { o.formats = split_list(v); },
           [&o] {
               std::string s;
               for (const auto& x : o.formats) s += (s.empty() ? "" : ",") + x;
               return s;
           }});
    return t;
}

} // namespace detail

/// Range checks for every section; throws ConfigError.
inline void validate(const RunConfig& c) {
    const auto& d = c.dataset;
    if (d.train_size < 2) throw ConfigError("dataset.train_size must be >= 2");
    if (d.test_size < 1) throw ConfigError("dataset.test_size must be >= 1");
    d.shortcut.validate();
    c.architecture.validate();
    if (!(c.dynamics.learning_rate > 0.0)) throw ConfigError("dynamics.learning_rate must be > 0");
    (void)c.dynamics.grid();
    if (!(c.mi.variance_clamp > 0.0)) throw ConfigError("mi.variance_clamp must be > 0");
    const auto& f = c.finite;
    for (int h : f.hidden)
        if (h < 1) throw ConfigError("finite.hidden widths must be positive");
    if (f.hidden.empty()) throw ConfigError("finite.hidden needs at least one layer");
    if (f.steps < 1) throw ConfigError("finite.steps must be >= 1");
    if (f.batch_size < 1) throw ConfigError("finite.batch_size must be >= 1");
    if (!(f.learning_rate >= 0.0)) throw ConfigError("finite.learning_rate must be >= 0");
    if (f.checkpoint_every < 1) throw ConfigError("finite.checkpoint_every must be >= 1");
    if (!(f.alpha_max > f.alpha_min) || f.alpha_points < 3) throw ConfigError("finite alpha grid is invalid");
    if (!(f.saliency_epsilon > 0.0)) throw ConfigError("finite.saliency_epsilon must be > 0");
    if (c.output.dir.empty()) throw ConfigError("output.dir must not be empty");
}

inline RunConfig parse_config_text(std::string_view text, const std::string& origin = "<config>") {
    RunConfig cfg;
    auto table = detail::bind(cfg);
    std::istringstream in{std::string(text)};
    std::string line, section;
    std::set<std::string> seen;
    int line_no = 0;
    const auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "malformed section header '" + line + "'");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (!table.has_section(section)) throw ConfigError(where() + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value', found '" + line + "'");
        if (section.empty()) throw ConfigError(where() + "key outside of any [section]");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        auto* field = table.find(section, key);
        if (!field) {
            const auto hint = table.nearest_key(section, key);
            throw ConfigError(where() + "unknown key '" + key + "' in [" + section + "]" +
                              (hint.empty() ? "" : "; did you mean '" + hint + "'?"));
        }
        if (!seen.insert(section + "." + key).second)
            throw ConfigError(where() + "duplicate key '" + key + "' in [" + section + "]");
        try {
            field->parse(value);
        } catch (const detail::ValueError& e) {
            throw ConfigError(where() + section + "." + key + ": " + e.message);
        }
    }
    validate(cfg);
    return cfg;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

/// Canonical text with every key, defaults folded in. Parses back to the same config.
inline std::string echo_config(const RunConfig& c) {
    RunConfig copy = c;
    auto table = detail::bind(copy);
    std::string out, section;
    for (const auto& [s, k] : table.order()) {
        if (s != section) {
            out += (out.empty() ? "" : "\n") + std::string("[") + s + "]\n";
            section = s;
        }
        const std::string value = table.find(s, k)->print();
        out += k + (value.empty() ? " =\n" : " = " + value + "\n");
    }
    return out;
}

/// Checks that the input files needed by gen-data exist. Unset paths are config
/// errors, absent files are data errors.
inline void validate_inputs(const RunConfig& c) {
    namespace fs = std::filesystem;
    const auto need = [](const std::string& key, const std::string& path) {
        if (path.empty()) throw ConfigError("dataset." + key + " must be set");
        if (!fs::exists(path)) throw DataError("dataset." + key + " does not exist: " + path);
    };
    if (c.dataset.source == DataSource::idx) {
        need("train_images", c.dataset.train_images);
        need("train_labels", c.dataset.train_labels);
        need("test_images", c.dataset.test_images);
        need("test_labels", c.dataset.test_labels);
    } else {
        need("images", c.dataset.images);
        need("manifest", c.dataset.manifest);
    }
}

} // namespace shortcut
