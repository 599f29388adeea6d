#ifndef TFSCOPE_PIPELINE_HPP
#define TFSCOPE_PIPELINE_HPP

// Joint characterization: one shared subsample, three feature spaces, exports.

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"
#include "tfscope/export.hpp"
#include "tfscope/io.hpp"
#include "tfscope/le.hpp"
#include "tfscope/parallel.hpp"
#include "tfscope/pca.hpp"
#include "tfscope/tsne.hpp"
#include "tfscope/unmix.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tfscope {

inline constexpr std::size_t default_le_cap = 25000;
inline constexpr std::size_t default_tsne_cap = 50000;

struct CharacterizationConfig {
    StandardizeMode standardization = StandardizeMode::none;
    std::size_t subsample_cap = 5000;
    std::uint64_t subsample_seed = 0;
    std::size_t le_cap = default_le_cap;
    std::size_t tsne_cap = default_tsne_cap;

    std::size_t pca_k = 10;

    std::size_t le_neighbors = 10;
    Kernel le_kernel = Kernel::heat;
    Normalization le_normalization = Normalization::symmetric;
    std::size_t le_dims = 3;

    double tsne_perplexity = 30.0;
    int tsne_max_iter = 1000;
    double tsne_exaggeration = 12.0;
    int tsne_exaggeration_iters = 250;
    std::optional<double> tsne_learning_rate;
    std::uint64_t tsne_seed = 0;
    std::size_t tsne_runs = 10;

    std::vector<std::size_t> rgb_dims = {1, 2, 3}; ///< 1-based dims mapped to R, G, B
    std::string output_dir;
    int threads = 0; ///< 0 = hardware concurrency

    TsneParams tsne_params() const {
        TsneParams p;
        p.perplexity = tsne_perplexity;
        p.max_iter = tsne_max_iter;
        p.exaggeration = tsne_exaggeration;
        p.exaggeration_iters = tsne_exaggeration_iters;
        p.learning_rate = tsne_learning_rate;
        p.seed = tsne_seed;
        return p;
    }
};

inline void validate_config(const CharacterizationConfig& c) {
    require(c.subsample_cap >= 4, Errc::invalid_argument, "subsample_cap must be at least 4");
    require(c.subsample_cap <= c.le_cap, Errc::invalid_argument,
            "subsample_cap " + std::to_string(c.subsample_cap) + " exceeds le_cap " + std::to_string(c.le_cap));
    require(c.subsample_cap <= c.tsne_cap, Errc::invalid_argument,
            "subsample_cap " + std::to_string(c.subsample_cap) + " exceeds tsne_cap " + std::to_string(c.tsne_cap));
    require(c.pca_k >= 1, Errc::invalid_argument, "pca_k must be at least 1");
    require(c.le_neighbors >= 1, Errc::invalid_argument, "le_neighbors must be at least 1");
    require(c.le_dims >= 1, Errc::invalid_argument, "le_dims must be at least 1");
    require(c.tsne_runs >= 2, Errc::invalid_argument, "tsne_runs must be at least 2");
    require(c.tsne_max_iter >= 1, Errc::invalid_argument, "tsne_max_iter must be at least 1");
    require(c.rgb_dims.size() == 3, Errc::invalid_argument, "rgb_dims needs exactly 3 entries");
    for (std::size_t d : c.rgb_dims) {
        require(d >= 1, Errc::invalid_argument, "rgb_dims entries are 1-based");
    }
    require(c.threads >= 0, Errc::invalid_argument, "threads must be non-negative");
}

inline nlohmann::ordered_json config_to_json(const CharacterizationConfig& c) {
    nlohmann::ordered_json j;
    j["standardization"] = std::string(standardize_mode_name(c.standardization));
    j["subsample_cap"] = c.subsample_cap;
    j["subsample_seed"] = c.subsample_seed;
    j["le_cap"] = c.le_cap;
    j["tsne_cap"] = c.tsne_cap;
    j["pca_k"] = c.pca_k;
    j["le_neighbors"] = c.le_neighbors;
    j["le_kernel"] = std::string(kernel_name(c.le_kernel));
    j["le_normalization"] = std::string(normalization_name(c.le_normalization));
    j["le_dims"] = c.le_dims;
    j["tsne_perplexity"] = c.tsne_perplexity;
    j["tsne_max_iter"] = c.tsne_max_iter;
    j["tsne_exaggeration"] = c.tsne_exaggeration;
    j["tsne_exaggeration_iters"] = c.tsne_exaggeration_iters;
    j["tsne_learning_rate"] = c.tsne_learning_rate ? nlohmann::ordered_json(*c.tsne_learning_rate) : nlohmann::ordered_json(nullptr);
    j["tsne_seed"] = c.tsne_seed;
    j["tsne_runs"] = c.tsne_runs;
    j["rgb_dims"] = c.rgb_dims;
    j["output_dir"] = c.output_dir;
    j["threads"] = c.threads;
    return j;
}

/// Strict parse: unknown keys and wrongly typed values are rejected; absent keys keep defaults.
inline CharacterizationConfig config_from_json(const nlohmann::json& j, CharacterizationConfig c = {}) {
    require(j.is_object(), Errc::format, "config must be a JSON object");
    static const std::set<std::string> known = {
        "standardization", "subsample_cap",  "subsample_seed",  "le_cap",           "tsne_cap",
        "pca_k",           "le_neighbors",   "le_kernel",       "le_normalization", "le_dims",
        "tsne_perplexity", "tsne_max_iter",  "tsne_exaggeration", "tsne_exaggeration_iters",
        "tsne_learning_rate", "tsne_seed",   "tsne_runs",       "rgb_dims",         "output_dir",
        "threads"};
    for (const auto& [key, value] : j.items()) {
        require(known.count(key) > 0, Errc::format, "unknown config key \"" + key + "\"");
    }
    auto count = [&](const char* key, std::size_t& out) {
        if (j.contains(key)) {
            require(j[key].is_number_unsigned() || (j[key].is_number_integer() && j[key].get<long long>() >= 0),
                    Errc::format, std::string(key) + " must be a non-negative integer");
            out = j[key].get<std::size_t>();
        }
    };
    auto seed = [&](const char* key, std::uint64_t& out) {
        if (j.contains(key)) {
            require(j[key].is_number_unsigned() || (j[key].is_number_integer() && j[key].get<long long>() >= 0),
                    Errc::format, std::string(key) + " must be a non-negative integer");
            out = j[key].get<std::uint64_t>();
        }
    };
    auto integer = [&](const char* key, int& out) {
        if (j.contains(key)) {
            require(j[key].is_number_integer(), Errc::format, std::string(key) + " must be an integer");
            out = j[key].get<int>();
        }
    };
    auto real = [&](const char* key, double& out) {
        if (j.contains(key)) {
            require(j[key].is_number(), Errc::format, std::string(key) + " must be a number");
            out = j[key].get<double>();
        }
    };
    auto text = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key)) {
            return std::nullopt;
        }
        require(j[key].is_string(), Errc::format, std::string(key) + " must be a string");
        return j[key].get<std::string>();
    };

    try {
        if (auto s = text("standardization")) c.standardization = parse_standardize_mode(*s);
        count("subsample_cap", c.subsample_cap);
        seed("subsample_seed", c.subsample_seed);
        count("le_cap", c.le_cap);
        count("tsne_cap", c.tsne_cap);
        count("pca_k", c.pca_k);
        count("le_neighbors", c.le_neighbors);
        if (auto s = text("le_kernel")) c.le_kernel = parse_kernel(*s);
        if (auto s = text("le_normalization")) c.le_normalization = parse_normalization(*s);
        count("le_dims", c.le_dims);
        real("tsne_perplexity", c.tsne_perplexity);
        integer("tsne_max_iter", c.tsne_max_iter);
        real("tsne_exaggeration", c.tsne_exaggeration);
        integer("tsne_exaggeration_iters", c.tsne_exaggeration_iters);
        if (j.contains("tsne_learning_rate")) {
            if (j["tsne_learning_rate"].is_null()) {
                c.tsne_learning_rate.reset();
            } else {
                double lr = 0.0;
                real("tsne_learning_rate", lr);
                c.tsne_learning_rate = lr;
            }
        }
        seed("tsne_seed", c.tsne_seed);
        count("tsne_runs", c.tsne_runs);
        if (j.contains("rgb_dims")) {
            require(j["rgb_dims"].is_array(), Errc::format, "rgb_dims must be an array");
            c.rgb_dims.clear();
            for (const auto& v : j["rgb_dims"]) {
                require(v.is_number_integer() && v.get<long long>() >= 1, Errc::format,
                        "rgb_dims entries must be positive integers");
                c.rgb_dims.push_back(v.get<std::size_t>());
            }
        }
        if (auto s = text("output_dir")) c.output_dir = *s;
        integer("threads", c.threads);
    } catch (const Error& e) {
        if (e.code() == Errc::invalid_argument) {
            fail(Errc::format, e.what());
        }
        throw;
    }
    validate_config(c);
    return c;
}

inline CharacterizationConfig load_config(const fs::path& path, CharacterizationConfig base = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format, "config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, std::move(base));
}

// ---------------------------------------------------------------------------

struct TimingRecord {
    double flatten_s = 0.0;
    double pca_s = 0.0;
    double le_s = 0.0;
    double tsne_s = 0.0;
};

struct JointCharacterization {
    CharacterizationConfig config;
    SampleMatrix matrix; ///< the shared subsample; row order is the sample identity order of every embedding
    LinearDecomposition pca;
    LeEmbedding le;
    PcTsneResult pctsne;
    TimingRecord timing;

    const std::vector<GridIndex>& index_map() const { return matrix.index_map(); }
};

namespace detail {

/// Runs one stage; failures are re-raised with the stage named.
template <typename F>
auto run_stage(const char* name, double& seconds, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto result = body();
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return result;
    } catch (const Error& e) {
        fail(e.code(), std::string(name) + ": " + e.what());
    }
}

} // namespace detail

inline SampleMatrix prepare_matrix(const DataCube& cube, const CharacterizationConfig& config) {
    SampleMatrix full = flatten(cube, config.standardization);
    if (full.n_samples() <= config.subsample_cap) {
        return full;
    }
    return subsample(full, config.subsample_cap, config.subsample_seed);
}

inline LinearDecomposition run_pca(const SampleMatrix& m, const CharacterizationConfig& config) {
    const std::size_t k = std::min({config.pca_k, m.n_samples(), m.n_features()});
    return pca_eof(m, static_cast<Eigen::Index>(k));
}

inline LeEmbedding run_le(const SampleMatrix& m, const CharacterizationConfig& config) {
    const NeighborGraph g = build_knn_graph(m, config.le_neighbors, config.le_kernel);
    EigenOptions opts;
    opts.seed = config.subsample_seed;
    return le_embed(g, config.le_dims, config.le_normalization, opts);
}

inline PcTsneResult run_pctsne(const SampleMatrix& m, const CharacterizationConfig& config) {
    return pc_tsne(m, config.tsne_params(), config.tsne_runs);
}

inline JointCharacterization characterize(const DataCube& cube, const CharacterizationConfig& config) {
    validate_config(config);
    ThreadCapGuard guard(config.threads);
    TimingRecord timing;
    SampleMatrix matrix =
        detail::run_stage("flatten", timing.flatten_s, [&] { return prepare_matrix(cube, config); });
    JointCharacterization out{config, std::move(matrix), {}, {}, {}, timing};
    const SampleMatrix& m = out.matrix;
    out.pca = detail::run_stage("pca", out.timing.pca_s, [&] { return run_pca(m, config); });
    out.le = detail::run_stage("le", out.timing.le_s, [&] { return run_le(m, config); });
    out.pctsne = detail::run_stage("pctsne", out.timing.tsne_s, [&] { return run_pctsne(m, config); });
    return out;
}

// ---------------------------------------------------------------------------
// Exports

inline nlohmann::ordered_json to_json_array(const Eigen::VectorXd& v) {
    auto a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v(i));
    }
    return a;
}

inline nlohmann::ordered_json pca_metadata(const CharacterizationConfig& c, const SampleMatrix& m,
                                           const LinearDecomposition& d) {
    nlohmann::ordered_json j;
    j["method"] = "pca";
    j["params"] = {{"k", d.k()},
                   {"standardization", std::string(standardize_mode_name(c.standardization))},
                   {"n_samples", m.n_samples()},
                   {"n_features", m.n_features()},
                   {"total_variance", d.total_variance}};
    j["seed"] = c.subsample_seed;
    j["eigenvalues"] = to_json_array(d.eigenvalues);
    j["variance_fractions"] = to_json_array(d.variance_fractions);
    return j;
}

inline nlohmann::ordered_json le_metadata(const CharacterizationConfig& c, const SampleMatrix& m,
                                          const LeEmbedding& le) {
    nlohmann::ordered_json bridges = nlohmann::ordered_json::array();
    for (const Bridge& b : le.bridges) {
        bridges.push_back({{"from", m.sample_id(b.from)},
                           {"to", m.sample_id(b.to)},
                           {"distance", b.distance},
                           {"weight", b.weight}});
    }
    nlohmann::ordered_json j;
    j["method"] = "le";
    j["params"] = {{"neighbors", le.graph.k},
                   {"kernel", std::string(kernel_name(le.graph.kernel))},
                   {"bandwidth", le.graph.bandwidth},
                   {"normalization", std::string(normalization_name(le.normalization))},
                   {"dims", le.coordinates.cols()},
                   {"standardization", std::string(standardize_mode_name(c.standardization))},
                   {"n_samples", m.n_samples()},
                   {"component_count", le.component_count},
                   {"bridges", bridges},
                   {"trivial_eigenvalue", le.trivial_eigenvalue},
                   {"max_residual", le.max_residual}};
    j["seed"] = c.subsample_seed;
    j["eigenvalues"] = to_json_array(le.eigenvalues);
    j["variance_fractions"] = nlohmann::ordered_json::array();
    return j;
}

inline nlohmann::ordered_json tsne_params_json(const TsneParams& p, std::size_t n) {
    return {{"perplexity", p.perplexity},
            {"max_iter", p.max_iter},
            {"exaggeration", p.exaggeration},
            {"exaggeration_iters", p.exaggeration_iters},
            {"learning_rate", resolve_learning_rate(p, n)},
            {"momentum", p.momentum},
            {"final_momentum", p.final_momentum},
            {"init_stddev", p.init_stddev}};
}

inline nlohmann::ordered_json pctsne_metadata(const CharacterizationConfig& c, const SampleMatrix& m,
                                              const PcTsneResult& r) {
    const TsneParams p = c.tsne_params();
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    nlohmann::ordered_json kl = nlohmann::ordered_json::array();
    for (const auto& run : r.realizations) {
        seeds.push_back(run.seed);
        kl.push_back(run.kl_final);
    }
    nlohmann::ordered_json params = tsne_params_json(p, m.n_samples());
    params["runs"] = r.realizations.size();
    params["standardization"] = std::string(standardize_mode_name(c.standardization));
    params["n_samples"] = m.n_samples();
    params["realization_seeds"] = seeds;
    params["kl_final"] = kl;
    params["min_divergence_run"] = min_divergence(r);
    nlohmann::ordered_json j;
    j["method"] = "pctsne";
    j["params"] = params;
    j["seed"] = p.seed;
    j["eigenvalues"] = to_json_array(r.eigenvalues);
    j["variance_fractions"] = to_json_array(r.variance_fractions);
    return j;
}

inline nlohmann::ordered_json tsne_metadata(const CharacterizationConfig& c, const SampleMatrix& m,
                                            const TsneRealization& r) {
    nlohmann::ordered_json params = tsne_params_json(c.tsne_params(), m.n_samples());
    params["standardization"] = std::string(standardize_mode_name(c.standardization));
    params["n_samples"] = m.n_samples();
    params["kl_initial"] = r.kl_initial;
    params["kl_final"] = r.kl_final;
    params["iterations"] = r.iterations;
    nlohmann::ordered_json j;
    j["method"] = "tsne";
    j["params"] = params;
    j["seed"] = r.seed;
    j["eigenvalues"] = nlohmann::ordered_json::array();
    j["variance_fractions"] = nlohmann::ordered_json::array();
    return j;
}

/// Names of the embeddings written by write_characterization, in export order.
inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names = {"pca", "le", "pctsne"};
    return names;
}

inline const RowMatrix& method_coordinates(const JointCharacterization& jc, const std::string& method) {
    if (method == "pca") return jc.pca.scores;
    if (method == "le") return jc.le.coordinates;
    if (method == "pctsne") return jc.pctsne.stacked_scores;
    fail(Errc::invalid_argument, "unknown method \"" + method + "\"");
}

/**
 * Writes into `dir`: <method>.csv and <method>.json for pca, le and pctsne;
 * <method>_rgb.ppm composites (when the method has the configured dims),
 * <method>_dim1.pgm, subsample.csv (row order), and config.json.
 */
inline std::vector<fs::path> write_characterization(const JointCharacterization& jc, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<fs::path> written;
    const CubeDims grid = jc.matrix.grid();
    const nlohmann::ordered_json metas[] = {pca_metadata(jc.config, jc.matrix, jc.pca),
                                            le_metadata(jc.config, jc.matrix, jc.le),
                                            pctsne_metadata(jc.config, jc.matrix, jc.pctsne)};
    for (std::size_t k = 0; k < method_names().size(); ++k) {
        const std::string& name = method_names()[k];
        const RowMatrix& coords = method_coordinates(jc, name);
        export_tfs(coords, jc.matrix, metas[k], dir / (name + ".csv"));
        written.push_back(dir / (name + ".csv"));
        written.push_back(dir / (name + ".json"));

        render_map(pick_columns(coords, {1}), jc.index_map(), grid.ny, grid.nx, dir / (name + "_dim1.pgm"));
        written.push_back(dir / (name + "_dim1.pgm"));
        const bool has_rgb = std::all_of(jc.config.rgb_dims.begin(), jc.config.rgb_dims.end(),
                                         [&](std::size_t d) { return d <= static_cast<std::size_t>(coords.cols()); });
        if (has_rgb) {
            render_map(pick_columns(coords, jc.config.rgb_dims), jc.index_map(), grid.ny, grid.nx,
                       dir / (name + "_rgb.ppm"));
            written.push_back(dir / (name + "_rgb.ppm"));
        }
    }
    nlohmann::ordered_json cfg = config_to_json(jc.config);
    write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");
    written.push_back(dir / "config.json");
    return written;
}

inline JointCharacterization run_characterization(const DataCube& cube, const CharacterizationConfig& config,
                                                  const fs::path& dir) {
    JointCharacterization jc = characterize(cube, config);
    write_characterization(jc, dir);
    return jc;
}

// ---------------------------------------------------------------------------
// Unmixing outputs shared by the CLI and the service

inline nlohmann::ordered_json misfit_summary_json(const MisfitSummary& s) {
    return {{"threshold_pct", s.threshold_pct}, {"fraction_below", s.fraction_below}, {"mean", s.mean},
            {"median", s.median},               {"max", s.max},                       {"count", s.count}};
}

/// Fractions CSV at `csv_path`, plus <stem>_misfit.pgm and <stem>_summary.json beside it.
inline MisfitSummary write_unmix_outputs(const FractionResult& r, const EndmemberSet& ems, const fs::path& csv_path,
                                         double threshold_pct = 10.0) {
    if (csv_path.has_parent_path()) {
        fs::create_directories(csv_path.parent_path());
    }
    write_fractions_csv(r, csv_path);
    const fs::path stem = csv_path.parent_path() / csv_path.stem();
    RowMatrix mis(r.misfit.size(), 1);
    mis.col(0) = r.misfit;
    render_map(mis, r.index_map, r.grid.ny, r.grid.nx, stem.string() + "_misfit.pgm");
    const MisfitSummary s = misfit_summary(r, threshold_pct);
    nlohmann::ordered_json j;
    j["constraint"] = r.constraint == FractionConstraint::sum_to_one ? "sum_to_one" : "sum_to_one_nonneg";
    j["endmembers"] = r.labels;
    j["provenance"] = ems.provenance;
    j["misfit"] = misfit_summary_json(s);
    j["max_kkt_residual"] = r.max_kkt_residual;
    write_file_atomic(stem.string() + "_summary.json", j.dump(2) + "\n");
    return s;
}

} // namespace tfscope

#endif
