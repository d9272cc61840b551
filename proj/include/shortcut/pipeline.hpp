#pragma once

// Subcommand pipelines: datasets -> kernels -> dynamics -> information
// measures, plus the finite-width corroboration runs. Each command reads a
// RunConfig, writes its files into the output directory and reports a short
// summary on the given stream.

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "shortcut/config.hpp"
#include "shortcut/csv.hpp"
#include "shortcut/datasets.hpp"
#include "shortcut/digest.hpp"
#include "shortcut/dynamics.hpp"
#include "shortcut/finitewidth.hpp"
#include "shortcut/infomeasure.hpp"
#include "shortcut/kernels.hpp"
#include "shortcut/svg.hpp"
#include "shortcut/tensor_io.hpp"

namespace shortcut {

namespace fs = std::filesystem;

inline constexpr const char* kTrainShortcutFile = "train_shortcut.mis1";
inline constexpr const char* kTrainCleanFile = "train_clean.mis1";
inline constexpr const char* kTestCleanFile = "test_clean.mis1";

inline std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory: " + dir);
}

// ---------------------------------------------------------------------------
// Dataset files

inline TensorContainer dataset_container(const ShortcutDataset& ds) {
    std::vector<double> flags(ds.shortcut_flags.begin(), ds.shortcut_flags.end());
    return {array_from("inputs", ds.inputs), array_from("clean_inputs", ds.clean_inputs),
            array_from("targets", ds.targets), array_from("shortcut_flags", std::move(flags)),
            array_from("image_shape", std::vector<double>{double(ds.height), double(ds.width)})};
}

inline ShortcutDataset load_dataset(const std::string& path) {
    if (!fs::exists(path)) throw DataError("dataset file not found: " + path + " (run gen-data first)");
    const auto c = tensor_container_read(path);
    ShortcutDataset ds;
    ds.inputs = to_matrix(find_array(c, "inputs"));
    ds.clean_inputs = to_matrix(find_array(c, "clean_inputs"));
    ds.targets = to_vector(find_array(c, "targets"));
    for (double f : find_array(c, "shortcut_flags").data) ds.shortcut_flags.push_back(f != 0.0);
    const auto& shape = find_array(c, "image_shape").data;
    if (shape.size() != 2) throw DataError(path + ": image_shape must hold two entries");
    ds.height = static_cast<int>(shape[0]);
    ds.width = static_cast<int>(shape[1]);
    if (ds.inputs.cols() != static_cast<Eigen::Index>(ds.height) * ds.width || ds.clean_inputs.rows() != ds.size() ||
        ds.targets.size() != ds.size() || ds.shortcut_flags.size() != static_cast<std::size_t>(ds.size()))
        throw DataError(path + ": inconsistent array shapes");
    ds.provenance = path;
    return ds;
}

struct GeneratedData {
    ShortcutDataset train_shortcut;
    ShortcutDataset train_clean;
    ShortcutDataset test_clean;
};

namespace detail {

inline ShortcutDataset dataset_from_rows(const Matrix& images, int height, int width,
                                         const std::vector<std::size_t>& rows, const std::vector<double>& targets) {
    ShortcutDataset ds;
    ds.height = height;
    ds.width = width;
    ds.inputs.resize(static_cast<Eigen::Index>(rows.size()), images.cols());
    ds.targets.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ds.inputs.row(static_cast<Eigen::Index>(i)) = images.row(static_cast<Eigen::Index>(rows[i]));
        ds.targets(static_cast<Eigen::Index>(i)) = targets[i];
    }
    ds.shortcut_flags.assign(rows.size(), 0);
    ds.clean_inputs = ds.inputs;
    return ds;
}

inline GeneratedData build_idx(const RunConfig& cfg) {
    const auto& d = cfg.dataset;
    const auto train = parse_idx(d.train_images, d.train_labels);
    const auto test = parse_idx(d.test_images, d.test_labels);
    const auto train_all = build_parity_task(train.images, train.labels);
    const auto test_all = build_parity_task(test.images, test.labels);
    GeneratedData g;
    g.train_clean = subsample(train_all, static_cast<std::size_t>(d.train_size), d.seed, d.stratify);
    g.test_clean = subsample(test_all, static_cast<std::size_t>(d.test_size), mix_seed(d.seed, 1), d.stratify);
    g.train_shortcut = inject_patch(g.train_clean, d.shortcut, d.seed);
    return g;
}

// Natural shortcuts: the aligned contingency cells form the shortcut training
// pool, a uniform draw over the whole manifest the clean one, and the opposed
// cells the clean test pool.
inline GeneratedData build_tensor(const RunConfig& cfg) {
    const auto& d = cfg.dataset;
    const auto manifest = parse_attribute_manifest(d.manifest);
    const auto container = tensor_container_read(d.images);
    const auto& images = find_array(container, "images");
    if (images.dims.size() != 3) throw DataError(d.images + ": 'images' must have shape (count, height, width)");
    if (images.dims[0] != manifest.ids.size())
        throw DataError(d.images + ": image count " + std::to_string(images.dims[0]) + " does not match manifest entries " +
                        std::to_string(manifest.ids.size()));
    for (double v : images.data)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError(d.images + ": pixel values must lie in [0, 1]");
    const int h = static_cast<int>(images.dims[1]), w = static_cast<int>(images.dims[2]);
    Matrix pixels = to_matrix(images);

    const auto aligned = curate_attribute_correlated(manifest, d.class_attr, d.shortcut_attr_pos, d.shortcut_attr_neg);
    const auto opposed = curate_attribute_opposed(manifest, d.class_attr, d.shortcut_attr_pos, d.shortcut_attr_neg);
    const auto ci = manifest.attribute_index(d.class_attr);
    std::vector<std::size_t> all_rows(manifest.ids.size());
    std::vector<double> all_targets(manifest.ids.size());
    for (std::size_t r = 0; r < all_rows.size(); ++r) {
        all_rows[r] = r;
        all_targets[r] = manifest.values[r][ci] > 0 ? 1.0 : -1.0;
    }

    auto pool_shortcut = dataset_from_rows(pixels, h, w, aligned.rows, aligned.targets);
    pool_shortcut.shortcut_flags.assign(aligned.rows.size(), 1);
    auto pool_clean = dataset_from_rows(pixels, h, w, all_rows, all_targets);
    std::vector<char> is_aligned(all_rows.size(), 0);
    for (auto r : aligned.rows) is_aligned[r] = 1;
    for (std::size_t r = 0; r < all_rows.size(); ++r) pool_clean.shortcut_flags[r] = is_aligned[r];
    const auto pool_test = dataset_from_rows(pixels, h, w, opposed.rows, opposed.targets);

    const auto n = static_cast<std::size_t>(d.train_size);
    GeneratedData g;
    g.train_shortcut = subsample(pool_shortcut, n, d.seed, d.stratify);
    g.train_clean = subsample(pool_clean, n, d.seed, d.stratify);
    g.test_clean = subsample(pool_test, static_cast<std::size_t>(d.test_size), mix_seed(d.seed, 1), d.stratify);
    return g;
}

} // namespace detail

inline GeneratedData build_datasets(const RunConfig& cfg) {
    validate_inputs(cfg);
    return cfg.dataset.source == DataSource::idx ? detail::build_idx(cfg) : detail::build_tensor(cfg);
}

struct GenDataResult {
    std::map<std::string, std::string> digests;  ///< file name -> sha256
    std::size_t flagged = 0;
    std::size_t target_class = 0;
};

inline GenDataResult cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
    const auto g = build_datasets(cfg);
    const std::string dir = cfg.data_dir();
    ensure_dir(dir);
    GenDataResult res;
    const double target = cfg.dataset.shortcut.target_parity == Parity::even ? 1.0 : -1.0;
    res.flagged = g.train_shortcut.flagged();
    for (Eigen::Index i = 0; i < g.train_clean.size(); ++i) res.target_class += g.train_clean.targets(i) == target;

    std::string manifest = "# file sha256 rows flagged\n";
    const auto emit = [&](const char* name, const ShortcutDataset& ds) {
        const std::string bytes = encode_container(dataset_container(ds));
        write_bytes(path_in(dir, name), bytes);
        res.digests[name] = sha256_hex(bytes);
        manifest += std::string(name) + " " + res.digests[name] + " " + std::to_string(ds.size()) + " " +
                    std::to_string(ds.flagged()) + "\n";
        log << res.digests[name] << "  " << name << "\n";
    };
    emit(kTrainShortcutFile, g.train_shortcut);
    emit(kTrainCleanFile, g.train_clean);
    emit(kTestCleanFile, g.test_clean);
    manifest += "# target_class_count " + std::to_string(res.target_class) + "\n";
    manifest += "# shortcut_flag_count " + std::to_string(res.flagged) + "\n";
    write_text(path_in(dir, "manifest.txt"), manifest);
    log << "shortcut flags: " << res.flagged << " of " << res.target_class << " target-class training images\n";
    return res;
}

inline std::string train_file(const RunConfig& cfg) {
    return path_in(cfg.data_dir(),
                   cfg.dataset.train_variant == TrainVariant::shortcut ? kTrainShortcutFile : kTrainCleanFile);
}
inline std::string test_file(const RunConfig& cfg) { return path_in(cfg.data_dir(), kTestCleanFile); }

// ---------------------------------------------------------------------------
// Infinite-width run

struct NtkRun {
    std::vector<SeriesRecord> series;
    double jitter_used = 0.0;
};

/// The full infinite-width computation on in-memory datasets.
inline NtkRun ntk_series(const RunConfig& cfg, const ShortcutDataset& train, const ShortcutDataset& test) {
    if (train.inputs.cols() != test.inputs.cols())
        throw DataError("train and clean-test inputs differ in dimension");
    const KernelBundle bundle = propagate_kernels(cfg.architecture, train.inputs, test.inputs);
    const SpectralNTK spec = spectral_decompose(bundle.ntk_train);
    const EvalKernels eval = eval_kernels_of(bundle);
    const double eta = cfg.dynamics.learning_rate;
    const auto grid = cfg.dynamics.grid();
    const bool on_train = cfg.mi.point_set == PointSet::train;

    NtkRun run;
    run.jitter_used = spec.jitter_used;
    run.series.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid[k];
        const PredictiveGaussian gt = predict_train(spec, bundle.nngp_train, train.targets, eta, t);
        const PredictiveGaussian ge = predict_eval(spec, bundle.nngp_train, eval, train.targets, eta, t);
        const auto train_loss = loss_of(gt, train.targets, "train");
        const auto test_loss = loss_of(ge, test.targets, "clean_test");

        const PredictiveGaussian& g = on_train ? gt : ge;
        const Vector& labels = on_train ? train.targets : test.targets;
        const auto comps = marginal_components(std::span<const double>(g.mean.data(), g.mean.size()),
                                               std::span<const double>(g.variance.data(), g.variance.size()),
                                               cfg.mi.variance_clamp);
        const MIEstimate ixz = mi_xz(comps);
        const MIEstimate izy = mi_zy(comps, std::span<const double>(labels.data(), labels.size()));

        auto& r = run.series[k];
        r.step = static_cast<int>(k);
        r.t = t;
        r.ixz_upper = ixz.upper_nats;
        r.ixz_lower = ixz.lower_nats;
        r.izy = izy.estimate_nats;
        r.train_mse = train_loss.mean_mse;
        r.clean_test_mse = test_loss.mean_mse;
        r.clean_test_expected_mse = test_loss.expected_mse;
    }
    return run;
}

struct NamedSeries {
    std::string name;
    std::vector<SeriesRecord> records;
};

namespace detail {

template <typename Get>
svg::Series pick(const NamedSeries& s, Get get) {
    svg::Series out{s.name, {}, {}};
    for (const auto& r : s.records) {
        out.x.push_back(r.t);
        out.y.push_back(get(r));
    }
    return out;
}

} // namespace detail

/// ixz.svg, izy.svg, loss.svg and info_plane.svg for one or more runs.
inline std::vector<std::string> write_series_charts(const std::string& dir, const std::vector<NamedSeries>& runs) {
    svg::LineChart ixz{"I(X;Z) upper bound", "training time t", "I(X;Z) [nats]", true, false, {}};
    svg::LineChart izy{"I(Z;Y) estimate", "training time t", "I(Z;Y) [nats]", true, false, {}};
    svg::LineChart loss{"Clean test loss", "training time t", "mean-prediction MSE", true, false, {}};
    svg::LineChart plane{"Information plane", "I(X;Z) upper bound [nats]", "I(Z;Y) [nats]", false, true, {}};
    for (const auto& run : runs) {
        ixz.series.push_back(detail::pick(run, [](const SeriesRecord& r) { return r.ixz_upper; }));
        izy.series.push_back(detail::pick(run, [](const SeriesRecord& r) { return r.izy; }));
        loss.series.push_back(detail::pick(run, [](const SeriesRecord& r) { return r.clean_test_mse; }));
        svg::Series p{run.name, {}, {}};
        for (const auto& r : run.records) {
            p.x.push_back(r.ixz_upper);
            p.y.push_back(r.izy);
        }
        plane.series.push_back(std::move(p));
    }
    const std::vector<std::pair<std::string, const svg::LineChart*>> charts{
        {"ixz.svg", &ixz}, {"izy.svg", &izy}, {"loss.svg", &loss}, {"info_plane.svg", &plane}};
    std::vector<std::string> written;
    for (const auto& [name, chart] : charts) {
        const auto p = path_in(dir, name);
        write_text(p, svg::render(*chart));
        written.push_back(p);
    }
    return written;
}

inline nlohmann::ordered_json dataset_digests(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    for (const auto& p : {train_file(cfg), test_file(cfg)}) j[fs::path(p).filename().string()] = sha256_file(p);
    return j;
}

inline NtkRun cmd_run_ntk(const RunConfig& cfg, std::ostream& log) {
    const auto train = load_dataset(train_file(cfg));
    const auto test = load_dataset(test_file(cfg));
    NtkRun run = ntk_series(cfg, train, test);
    const std::string dir = cfg.output.dir;
    ensure_dir(dir);
    write_series_csv(path_in(dir, "series.csv"), run.series);
    CsvTable plane;
    plane.header = {"step", "t", "I_XZ_upper", "I_ZY"};
    for (const auto& r : run.series)
        plane.rows.push_back({std::to_string(r.step), format_number(r.t), format_number(r.ixz_upper), format_number(r.izy)});
    write_text(path_in(dir, "info_plane.csv"), plane.text());
    if (cfg.output.wants("svg")) write_series_charts(dir, {{"run", run.series}});

    nlohmann::ordered_json meta;
    meta["command"] = "run-ntk";
    meta["version"] = kVersion;
    meta["units"] = "nats";
    meta["dataset_seed"] = cfg.dataset.seed;
    meta["finite_seed"] = cfg.finite.seed;
    meta["jitter_used"] = run.jitter_used;
    meta["variance_clamp"] = cfg.mi.variance_clamp;
    meta["ixz_bound"] = "pairwise KL mixture-entropy upper bound";
    meta["izy_estimate"] = "pairwise KL plug-in";
    meta["datasets"] = dataset_digests(cfg);
    meta["config"] = echo_config(cfg);
    write_text(path_in(dir, "run_ntk.json"), meta.dump(2) + "\n");

    const auto& last = run.series.back();
    log << "final t=" << format_number(last.t) << " I_XZ_upper=" << format_number(last.ixz_upper)
        << " I_ZY=" << format_number(last.izy) << " clean_test_mse=" << format_number(last.clean_test_mse)
        << " (jitter " << format_number(run.jitter_used) << ")\n";
    return run;
}

// ---------------------------------------------------------------------------
// Finite-width runs

inline TensorContainer trajectory_container(const Trajectory& traj) {
    std::vector<double> widths(traj.widths.begin(), traj.widths.end());
    std::vector<double> steps, losses;
    Matrix theta(static_cast<Eigen::Index>(traj.checkpoints.size()), traj.checkpoints.front().params.size());
    for (std::size_t i = 0; i < traj.checkpoints.size(); ++i) {
        steps.push_back(traj.checkpoints[i].step);
        losses.push_back(traj.checkpoints[i].train_loss);
        theta.row(static_cast<Eigen::Index>(i)) = traj.checkpoints[i].params.transpose();
    }
    return {array_from("widths", std::move(widths)),
            array_from("loss_kind", std::vector<double>{traj.loss == LossKind::mse ? 0.0 : 1.0}),
            array_from("steps", std::move(steps)), array_from("train_loss", std::move(losses)),
            array_from("theta", theta)};
}

inline Trajectory load_trajectory(const std::string& path) {
    if (!fs::exists(path)) throw DataError("trajectory file not found: " + path + " (run run-finite first)");
    const auto c = tensor_container_read(path);
    Trajectory traj;
    for (double w : find_array(c, "widths").data) traj.widths.push_back(static_cast<int>(w));
    traj.loss = find_array(c, "loss_kind").data.at(0) == 0.0 ? LossKind::mse : LossKind::softmax_cross_entropy;
    const auto& steps = find_array(c, "steps").data;
    const auto& losses = find_array(c, "train_loss").data;
    const Matrix theta = to_matrix(find_array(c, "theta"));
    if (static_cast<std::size_t>(theta.rows()) != steps.size() || losses.size() != steps.size() ||
        static_cast<std::size_t>(theta.cols()) != parameter_count(traj.widths))
        throw DataError(path + ": trajectory arrays are inconsistent");
    for (std::size_t i = 0; i < steps.size(); ++i)
        traj.checkpoints.push_back({static_cast<int>(steps[i]), theta.row(static_cast<Eigen::Index>(i)).transpose(), losses[i]});
    return traj;
}

struct FiniteRun {
    Trajectory trajectory;
    double train_accuracy = 0.0;
    double clean_test_accuracy = 0.0;
};

inline FiniteRun cmd_run_finite(const RunConfig& cfg, std::ostream& log) {
    const auto train = load_dataset(train_file(cfg));
    const auto test = load_dataset(test_file(cfg));
    const TrainConfig tc = cfg.finite.train_config(static_cast<int>(train.inputs.cols()));
    FiniteRun run{train_sgd(train.inputs, train.targets, tc), 0.0, 0.0};
    const std::string dir = cfg.output.dir;
    ensure_dir(dir);
    tensor_container_write(path_in(dir, "trajectory.mis1"), trajectory_container(run.trajectory));

    CsvTable t;
    t.header = {"step", "train_loss", "clean_test_loss", "train_accuracy", "clean_test_accuracy"};
    for (std::size_t i = 0; i < run.trajectory.checkpoints.size(); ++i) {
        const auto& cp = run.trajectory.checkpoints[i];
        const MLPParams p = run.trajectory.params_at(i);
        t.rows.push_back({std::to_string(cp.step), format_number(cp.train_loss),
                          format_number(loss_value(p, test.inputs, test.targets, tc.loss)),
                          format_number(accuracy(p, train.inputs, train.targets)),
                          format_number(accuracy(p, test.inputs, test.targets))});
    }
    write_text(path_in(dir, "finite_loss.csv"), t.text());
    const MLPParams final_params = run.trajectory.final_params();
    run.train_accuracy = accuracy(final_params, train.inputs, train.targets);
    run.clean_test_accuracy = accuracy(final_params, test.inputs, test.targets);
    log << "final train accuracy " << format_number(run.train_accuracy) << ", clean test accuracy "
        << format_number(run.clean_test_accuracy) << "\n";
    return run;
}

struct SaliencyRequest {
    std::string trajectory;  ///< empty: <output dir>/trajectory.mis1
    std::string dataset;     ///< empty: the configured training file
    int image_index = 0;
};

struct SaliencyResult {
    SaliencyMap map;
    double patch_fraction = 0.0;
};

/// Saliency of the true-class probability on one image, for the final checkpoint.
inline SaliencyResult saliency_of(const RunConfig& cfg, const MLPParams& params, const ShortcutDataset& ds, int index) {
    if (index < 0 || index >= ds.size())
        throw DataError("image index " + std::to_string(index) + " out of range [0, " + std::to_string(ds.size()) + ")");
    const Vector image = ds.inputs.row(index).transpose();
    const int label = ds.targets(index) > 0.0 ? 1 : 0;
    const int label_index = params.widths.back() == 1 ? 0 : label;
    SaliencyResult res{saliency_fd(params, image, ds.height, ds.width, label_index, cfg.finite.saliency_epsilon), 0.0};
    const auto patch = patch_pixels(ds.height, ds.width, cfg.dataset.shortcut.patch_size, cfg.dataset.shortcut.corner);
    res.patch_fraction = res.map.mass_fraction(patch);
    return res;
}

inline SaliencyResult cmd_saliency(const RunConfig& cfg, const SaliencyRequest& req, std::ostream& log) {
    const std::string traj_path = req.trajectory.empty() ? path_in(cfg.output.dir, "trajectory.mis1") : req.trajectory;
    const auto traj = load_trajectory(traj_path);
    const auto ds = load_dataset(req.dataset.empty() ? train_file(cfg) : req.dataset);
    if (ds.inputs.cols() != traj.widths.front())
        throw DataError("dataset input dimension does not match the trajectory network");
    const auto res = saliency_of(cfg, traj.final_params(), ds, req.image_index);
    ensure_dir(cfg.output.dir);
    const auto& m = res.map;
    tensor_container_write(path_in(cfg.output.dir, "saliency.mis1"),
                           {array_from("signed", m.signed_values), array_from("abs", m.abs_values),
                            array_from("image_shape", std::vector<double>{double(m.height), double(m.width)}),
                            array_from("image_index", std::vector<double>{double(req.image_index)})});
    if (cfg.output.wants("svg"))
        write_text(path_in(cfg.output.dir, "saliency.svg"),
                   svg::render_heatmap("|saliency| of image " + std::to_string(req.image_index), m.height, m.width,
                                       m.abs_values));
    log << "patch mass fraction " << format_number(res.patch_fraction) << "\n";
    return res;
}

struct LandscapeRequest {
    std::string trajectory;  ///< empty: <output dir>/trajectory.mis1
    std::string dataset;     ///< empty: the configured training file
};

struct LandscapeResult {
    std::vector<InterpolationPoint> train_curve;
    std::vector<InterpolationPoint> test_curve;
    std::vector<PolarPoint> polar;
    double flatness_train = 0.0;
    double flatness_test = 0.0;
};

inline LandscapeResult landscape_of(const RunConfig& cfg, const Trajectory& traj, const ShortcutDataset& train,
                                    const ShortcutDataset& test) {
    if (train.inputs.cols() != traj.widths.front() || test.inputs.cols() != traj.widths.front())
        throw DataError("landscape: dataset input dimension " + std::to_string(train.inputs.cols()) +
                        " does not match trajectory network input " + std::to_string(traj.widths.front()));
    const auto alphas = alpha_grid(cfg.finite.alpha_min, cfg.finite.alpha_max, cfg.finite.alpha_points);
    const Vector& a = traj.checkpoints.front().params;
    const Vector& b = traj.checkpoints.back().params;
    LandscapeResult res;
    res.train_curve = line_interpolation(a, b, traj.widths, train.inputs, train.targets, traj.loss, alphas);
    res.test_curve = line_interpolation(a, b, traj.widths, test.inputs, test.targets, traj.loss, alphas);
    res.polar = polar_trajectory(traj);
    res.flatness_train = flatness(res.train_curve);
    res.flatness_test = flatness(res.test_curve);
    return res;
}

inline LandscapeResult cmd_landscape(const RunConfig& cfg, const LandscapeRequest& req, std::ostream& log) {
    const auto traj = load_trajectory(req.trajectory.empty() ? path_in(cfg.output.dir, "trajectory.mis1") : req.trajectory);
    const auto train = load_dataset(req.dataset.empty() ? train_file(cfg) : req.dataset);
    const auto test = load_dataset(test_file(cfg));
    const auto res = landscape_of(cfg, traj, train, test);
    const std::string dir = cfg.output.dir;
    ensure_dir(dir);

    CsvTable interp;
    interp.header = {"alpha", "train_loss", "clean_test_loss"};
    for (std::size_t i = 0; i < res.train_curve.size(); ++i)
        interp.rows.push_back({format_number(res.train_curve[i].alpha), format_number(res.train_curve[i].loss),
                               format_number(res.test_curve[i].loss)});
    write_text(path_in(dir, "interpolation.csv"), interp.text());
    CsvTable polar;
    polar.header = {"step", "r", "phi"};
    for (const auto& p : res.polar)
        polar.rows.push_back({std::to_string(p.step), format_number(p.r), format_optional(p.phi)});
    write_text(path_in(dir, "polar.csv"), polar.text());

    if (cfg.output.wants("svg")) {
        svg::LineChart chart{"Loss along the initial-to-final line", "alpha", "loss", false, false, {}};
        svg::Series tr{"train", {}, {}}, te{"clean_test", {}, {}};
        for (std::size_t i = 0; i < res.train_curve.size(); ++i) {
            tr.x.push_back(res.train_curve[i].alpha);
            tr.y.push_back(res.train_curve[i].loss);
            te.x.push_back(res.test_curve[i].alpha);
            te.y.push_back(res.test_curve[i].loss);
        }
        chart.series = {tr, te};
        write_text(path_in(dir, "interpolation.svg"), svg::render(chart));
        svg::PolarSeries ps{"trajectory", {}, {}};
        for (const auto& p : res.polar) {
            ps.r.push_back(p.r);
            ps.phi.push_back(p.phi.value_or(std::numeric_limits<double>::quiet_NaN()));
        }
        write_text(path_in(dir, "polar.svg"), svg::render_polar("Polar optimisation trajectory", {ps}));
    }
    log << "flatness (train) " << format_number(res.flatness_train) << "\n";
    log << "flatness (clean_test) " << format_number(res.flatness_test) << "\n";
    return res;
}

// ---------------------------------------------------------------------------
// Report

/// Legend names from file stems; stems that collide are prefixed with their parent directory.
inline std::vector<std::string> legend_names(const std::vector<std::string>& paths) {
    std::map<std::string, int> seen;
    for (const auto& p : paths) ++seen[fs::path(p).stem().string()];
    std::vector<std::string> out;
    for (const auto& p : paths) {
        const fs::path path(p);
        const std::string stem = path.stem().string();
        const std::string parent = path.parent_path().filename().string();
        out.push_back(seen[stem] > 1 && !parent.empty() ? parent + "/" + stem : stem);
    }
    return out;
}

inline std::vector<std::string> cmd_report(const RunConfig& cfg, const std::vector<std::string>& csv_paths,
                                           std::ostream& log) {
    if (csv_paths.empty()) throw ConfigError("report: at least one series CSV is required");
    const auto names = legend_names(csv_paths);
    std::vector<NamedSeries> runs;
    for (std::size_t i = 0; i < csv_paths.size(); ++i) {
        try {
            runs.push_back({names[i], read_series_csv(csv_paths[i])});
        } catch (const DataError& e) {
            throw DataError(csv_paths[i] + ": " + e.what());
        }
    }
    ensure_dir(cfg.output.dir);
    const auto written = write_series_charts(cfg.output.dir, runs);
    for (const auto& w : written) log << "wrote " << w << "\n";
    return written;
}

} // namespace shortcut
