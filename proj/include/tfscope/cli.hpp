#ifndef TFSCOPE_CLI_HPP
#define TFSCOPE_CLI_HPP

// Command-line front end. Needs CLI11.hpp and httplib.h on the include path.

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"
#include "tfscope/export.hpp"
#include "tfscope/io.hpp"
#include "tfscope/pipeline.hpp"
#include "tfscope/service.hpp"
#include "tfscope/synth.hpp"
#include "tfscope/unmix.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace tfscope::cli {

enum ExitCode : int { ok = 0, usage = 1, data = 2 };

namespace detail {

/// Flag mirror of CharacterizationConfig; explicitly given flags override the config file.
struct ConfigFlags {
    std::string config_path;
    CharacterizationConfig values;
    std::string standardization = "none";
    std::string le_kernel = "heat";
    std::string le_normalization = "symmetric";
    double tsne_learning_rate = 0.0;
    std::vector<CLI::Option*> options;

    void add(CLI::App& app, bool embeddings) {
        auto& v = values;
        app.add_option("--config", config_path, "CharacterizationConfig JSON file")->check(CLI::ExistingFile);
        options.push_back(app.add_option("--standardization", standardization, "none or zscore"));
        options.push_back(app.add_option("--subsample-cap", v.subsample_cap, "Shared subsample size"));
        options.push_back(app.add_option("--subsample-seed", v.subsample_seed, "Subsample seed"));
        options.push_back(app.add_option("--threads", v.threads, "Worker thread cap, 0 = all cores"));
        if (!embeddings) {
            return;
        }
        options.push_back(app.add_option("--le-cap", v.le_cap, "Largest sample count allowed for LE"));
        options.push_back(app.add_option("--tsne-cap", v.tsne_cap, "Largest sample count allowed for t-SNE"));
        options.push_back(app.add_option("--pca-k", v.pca_k, "Principal components kept"));
        options.push_back(app.add_option("--le-neighbors", v.le_neighbors, "LE nearest neighbours"));
        options.push_back(app.add_option("--le-kernel", le_kernel, "binary or heat"));
        options.push_back(app.add_option("--le-normalization", le_normalization, "unnormalized or symmetric"));
        options.push_back(app.add_option("--le-dims", v.le_dims, "LE output dimensions"));
        options.push_back(app.add_option("--tsne-perplexity", v.tsne_perplexity, "t-SNE perplexity"));
        options.push_back(app.add_option("--tsne-max-iter", v.tsne_max_iter, "t-SNE iterations"));
        options.push_back(app.add_option("--tsne-exaggeration", v.tsne_exaggeration, "Early exaggeration factor"));
        options.push_back(
            app.add_option("--tsne-exaggeration-iters", v.tsne_exaggeration_iters, "Early exaggeration iterations"));
        options.push_back(app.add_option("--tsne-learning-rate", tsne_learning_rate,
                                         "Learning rate; 0 = max(n / exaggeration, 50)"));
        options.push_back(app.add_option("--tsne-seed", v.tsne_seed, "Seed of the first t-SNE realization"));
        options.push_back(app.add_option("--tsne-runs", v.tsne_runs, "PC(t-SNE) realizations"));
        options.push_back(app.add_option("--rgb-dims", v.rgb_dims, "Dims shown as R G B in composites")->expected(3));
    }

    bool given(const std::string& name) const {
        for (const CLI::Option* o : options) {
            if (o->get_name() == name) {
                return o->count() > 0;
            }
        }
        return false;
    }

    CharacterizationConfig resolve() const {
        CharacterizationConfig c = config_path.empty() ? CharacterizationConfig{} : load_config(config_path);
        const CharacterizationConfig& v = values;
        if (given("--standardization")) c.standardization = parse_standardize_mode(standardization);
        if (given("--subsample-cap")) c.subsample_cap = v.subsample_cap;
        if (given("--subsample-seed")) c.subsample_seed = v.subsample_seed;
        if (given("--threads")) c.threads = v.threads;
        if (given("--le-cap")) c.le_cap = v.le_cap;
        if (given("--tsne-cap")) c.tsne_cap = v.tsne_cap;
        if (given("--pca-k")) c.pca_k = v.pca_k;
        if (given("--le-neighbors")) c.le_neighbors = v.le_neighbors;
        if (given("--le-kernel")) c.le_kernel = parse_kernel(le_kernel);
        if (given("--le-normalization")) c.le_normalization = parse_normalization(le_normalization);
        if (given("--le-dims")) c.le_dims = v.le_dims;
        if (given("--tsne-perplexity")) c.tsne_perplexity = v.tsne_perplexity;
        if (given("--tsne-max-iter")) c.tsne_max_iter = v.tsne_max_iter;
        if (given("--tsne-exaggeration")) c.tsne_exaggeration = v.tsne_exaggeration;
        if (given("--tsne-exaggeration-iters")) c.tsne_exaggeration_iters = v.tsne_exaggeration_iters;
        if (given("--tsne-learning-rate")) {
            c.tsne_learning_rate = tsne_learning_rate > 0.0 ? std::optional<double>(tsne_learning_rate) : std::nullopt;
        }
        if (given("--tsne-seed")) c.tsne_seed = v.tsne_seed;
        if (given("--tsne-runs")) c.tsne_runs = v.tsne_runs;
        if (given("--rgb-dims")) c.rgb_dims = v.rgb_dims;
        validate_config(c);
        return c;
    }
};

inline std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    for (const auto& tok : split(text, ',')) {
        const long long d = parse_integer(tok);
        require(d >= 1, Errc::invalid_argument, "dims are 1-based");
        dims.push_back(static_cast<std::size_t>(d));
    }
    return dims;
}

inline std::string weights_csv(const ToyCube& toy) {
    std::string out = "sample_id,y,x,w1,w2,w3\n";
    for (std::size_t y = 0; y < toy.weights.ny; ++y) {
        for (std::size_t x = 0; x < toy.weights.nx; ++x) {
            const WeightTriple& w = toy.weights.at(y, x);
            out += std::to_string(y * toy.weights.nx + x) + ',' + std::to_string(y) + ',' + std::to_string(x);
            for (double v : w) {
                out += ',' + format_real(v, 17);
            }
            out += '\n';
        }
    }
    return out;
}

inline std::string signals_csv(const SignalSet& s) {
    std::string out = "t,s1,s2,s3\n";
    for (std::size_t t = 0; t < s.nt; ++t) {
        out += std::to_string(t) + ',' + format_real(s.s1[t], 17) + ',' + format_real(s.s2[t], 17) + ',' +
               format_real(s.s3[t], 17) + '\n';
    }
    return out;
}

/// The flattened cube restricted to the samples listed in a feature-space table, in table order.
inline SampleMatrix rows_for_table(const SampleMatrix& full, const TfsTable& table) {
    std::vector<std::size_t> rows;
    rows.reserve(table.sample_ids.size());
    for (std::size_t id : table.sample_ids) {
        const auto row = full.find_sample(id);
        require(row.has_value(), Errc::out_of_range,
                "sample " + std::to_string(id) + " is not a valid cell of the cube");
        rows.push_back(*row);
    }
    return full.select(rows);
}

inline std::atomic<bool>& stop_requested() {
    static std::atomic<bool> flag{false};
    return flag;
}

extern "C" inline void on_signal(int) { stop_requested().store(true); }

} // namespace detail

/// Runs one command line. Returns 0 on success, 1 on usage errors, 2 on data errors.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Joint characterization of spatiotemporal data manifolds", "tfscope"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    // gen-toy
    auto* gen = app.add_subcommand("gen-toy", "Write the synthetic three-signal cube and its ground truth");
    std::string gen_out;
    std::size_t gen_ny = 100, gen_nx = 100, gen_nt = 100;
    std::uint64_t gen_seed = 42;
    bool gen_spatial = false;
    std::string gen_dtype = "f32le";
    gen->add_option("--out", gen_out, "Output prefix: PREFIX.json, PREFIX.weights.csv, PREFIX.signals.csv")->required();
    gen->add_option("--ny", gen_ny, "Grid rows");
    gen->add_option("--nx", gen_nx, "Grid columns");
    gen->add_option("--nt", gen_nt, "Time steps");
    gen->add_option("--seed", gen_seed, "Weight seed");
    gen->add_flag("--spatial-gate", gen_spatial, "Zero the third signal for columns x < 50");
    gen->add_option("--dtype", gen_dtype, "Payload type: f32le or f64le");

    // characterize
    auto* chr = app.add_subcommand("characterize", "Run PCA, LE and PC(t-SNE) on one shared subsample");
    std::string chr_cube, chr_out;
    detail::ConfigFlags chr_flags;
    chr->add_option("--cube", chr_cube, "Cube header JSON")->required()->check(CLI::ExistingFile);
    chr->add_option("--out", chr_out, "Output directory (defaults to the config's output_dir)");
    chr_flags.add(*chr, true);

    // single-method embeddings
    struct MethodCommand {
        CLI::App* app = nullptr;
        std::string cube;
        std::string out;
        detail::ConfigFlags flags;
    };
    MethodCommand pca_cmd, le_cmd, tsne_cmd, pctsne_cmd;
    auto add_method = [&](MethodCommand& m, const char* name, const char* what) {
        m.app = app.add_subcommand(name, what);
        m.app->add_option("--cube", m.cube, "Cube header JSON")->required()->check(CLI::ExistingFile);
        m.app->add_option("--out", m.out, "Feature-space CSV; metadata goes beside it as .json")->required();
        m.flags.add(*m.app, true);
    };
    add_method(pca_cmd, "pca", "Principal components of the subsample");
    add_method(le_cmd, "le", "Laplacian eigenmap of the subsample");
    add_method(tsne_cmd, "tsne", "One t-SNE realization of the subsample");
    add_method(pctsne_cmd, "pctsne", "Principal components of stacked t-SNE realizations");

    // suggest-ems
    auto* sug = app.add_subcommand("suggest-ems", "Rank apex samples of a feature space as endmember candidates");
    std::string sug_cube, sug_tfs, sug_out, sug_ranking, sug_dims, sug_std = "none";
    std::size_t sug_count = 3, sug_dirs = 256;
    sug->add_option("--cube", sug_cube, "Cube header JSON")->required()->check(CLI::ExistingFile);
    sug->add_option("--tfs", sug_tfs, "Feature-space CSV (e.g. run/pca.csv)")->required()->check(CLI::ExistingFile);
    sug->add_option("--dims", sug_dims, "Comma-separated 1-based dims; empty = all");
    sug->add_option("--count", sug_count, "Endmembers to write");
    sug->add_option("--directions", sug_dirs, "Probe directions");
    sug->add_option("--standardization", sug_std, "Signature units: none or zscore (match unmix)");
    sug->add_option("--out", sug_out, "Endmember CSV")->required();
    sug->add_option("--ranking", sug_ranking, "Optional CSV of the full candidate ranking");

    // unmix
    auto* unm = app.add_subcommand("unmix", "Invert the temporal mixture model for every valid sample");
    std::string unm_cube, unm_ems, unm_out, unm_std = "none";
    bool unm_nonneg = false;
    double unm_threshold = 10.0;
    unm->add_option("--cube", unm_cube, "Cube header JSON")->required()->check(CLI::ExistingFile);
    unm->add_option("--ems", unm_ems, "Endmember CSV")->required()->check(CLI::ExistingFile);
    unm->add_option("--out", unm_out, "Fractions CSV; _misfit.pgm and _summary.json go beside it")->required();
    unm->add_flag("--nonneg", unm_nonneg, "Also constrain fractions to be nonnegative");
    unm->add_option("--standardization", unm_std, "none or zscore");
    unm->add_option("--threshold", unm_threshold, "Misfit threshold in percent for the summary");

    // render-map
    auto* ren = app.add_subcommand("render-map", "Render columns of a per-sample CSV as a PGM or PPM map");
    std::string ren_tfs, ren_cube, ren_out, ren_dims = "1";
    std::size_t ren_ny = 0, ren_nx = 0;
    ren->add_option("--tfs", ren_tfs, "CSV starting with sample_id,y,x")->required()->check(CLI::ExistingFile);
    ren->add_option("--dims", ren_dims, "1 dim (gray) or 3 dims (RGB), 1-based, comma-separated");
    ren->add_option("--cube", ren_cube, "Cube header giving the grid size")->check(CLI::ExistingFile);
    ren->add_option("--ny", ren_ny, "Grid rows when --cube is not given");
    ren->add_option("--nx", ren_nx, "Grid columns when --cube is not given");
    ren->add_option("--out", ren_out, "Output .pgm or .ppm")->required();

    // serve
    auto* srv = app.add_subcommand("serve", "Start the local HTTP service");
    const char* env_dir = std::getenv("TFSCOPE_DATA_DIR");
    std::string srv_dir = env_dir && *env_dir ? env_dir : "tfscope-data";
    std::string srv_host = "127.0.0.1", srv_ui;
    int srv_port = 8750;
    std::size_t srv_workers = 1;
    int srv_threads = 0;
    srv->add_option("--port", srv_port, "TCP port");
    srv->add_option("--host", srv_host, "Bind address");
    srv->add_option("--data-dir", srv_dir, "Data directory (default from TFSCOPE_DATA_DIR)");
    srv->add_option("--workers", srv_workers, "Concurrent jobs")->check(CLI::PositiveNumber);
    srv->add_option("--ui", srv_ui, "Static web UI directory mounted at /ui");
    srv->add_option("--threads", srv_threads, "Worker thread cap, 0 = all cores");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ExitCode::ok : ExitCode::usage;
    }

    // Config and flag values are checked first so that bad values are usage errors.
    auto resolve = [](const detail::ConfigFlags& f) {
        try {
            return f.resolve();
        } catch (const Error& e) {
            if (e.code() == Errc::invalid_argument) {
                throw CLI::ValidationError("config", e.what());
            }
            throw;
        }
    };

    try {
        try {
            if (gen->parsed()) {
                ToyOptions opts;
                opts.spatial_gate = gen_spatial;
                opts.dtype = parse_sample_type(gen_dtype);
                const ToyCube toy = generate_toy_cube(gen_ny, gen_nx, gen_nt, gen_seed, opts);
                const fs::path prefix(gen_out);
                if (prefix.has_parent_path()) {
                    fs::create_directories(prefix.parent_path());
                }
                save_cube(toy.cube, prefix.string() + ".json");
                write_file_atomic(prefix.string() + ".weights.csv", detail::weights_csv(toy));
                write_file_atomic(prefix.string() + ".signals.csv", detail::signals_csv(toy.signals));
                out << "wrote " << prefix.string() << ".json\n";
                return ExitCode::ok;
            }

            if (chr->parsed()) {
                CharacterizationConfig config = resolve(chr_flags);
                const std::string dir = chr_out.empty() ? config.output_dir : chr_out;
                if (dir.empty()) {
                    throw CLI::ValidationError("--out", "no output directory: pass --out or set output_dir");
                }
                const DataCube cube = load_cube(chr_cube);
                const JointCharacterization jc = run_characterization(cube, config, dir);
                out << "samples " << jc.matrix.n_samples() << "\n"
                    << "pca variance_fractions[0..1] " << format_real(jc.pca.variance_fractions.head(2).sum(), 6) << "\n"
                    << "pctsne variance_fractions[0..1] "
                    << format_real(jc.pctsne.variance_fractions.head(2).sum(), 6) << "\n"
                    << "wrote " << dir << "\n";
                return ExitCode::ok;
            }

            for (MethodCommand* m : {&pca_cmd, &le_cmd, &tsne_cmd, &pctsne_cmd}) {
                if (!m->app->parsed()) {
                    continue;
                }
                const CharacterizationConfig config = resolve(m->flags);
                ThreadCapGuard guard(config.threads);
                const DataCube cube = load_cube(m->cube);
                const SampleMatrix matrix = prepare_matrix(cube, config);
                const std::string name = m->app->get_name();
                if (fs::path(m->out).has_parent_path()) {
                    fs::create_directories(fs::path(m->out).parent_path());
                }
                if (name == "pca") {
                    const auto d = run_pca(matrix, config);
                    export_tfs(d.scores, matrix, pca_metadata(config, matrix, d), m->out);
                } else if (name == "le") {
                    const auto e = run_le(matrix, config);
                    export_tfs(e.coordinates, matrix, le_metadata(config, matrix, e), m->out);
                } else if (name == "tsne") {
                    const auto r = tsne_run(matrix, config.tsne_params());
                    export_tfs(r.coordinates, matrix, tsne_metadata(config, matrix, r), m->out);
                } else {
                    const auto r = run_pctsne(matrix, config);
                    export_tfs(r.stacked_scores, matrix, pctsne_metadata(config, matrix, r), m->out);
                }
                out << "wrote " << m->out << "\n";
                return ExitCode::ok;
            }

            if (sug->parsed()) {
                const DataCube cube = load_cube(sug_cube);
                const TfsTable table = read_tfs_csv(sug_tfs);
                const SampleMatrix rows =
                    detail::rows_for_table(flatten(cube, parse_standardize_mode(sug_std)), table);
                const RowMatrix coords =
                    sug_dims.empty() ? table.coords : pick_columns(table.coords, detail::parse_dims(sug_dims));
                const auto ranked = suggest_endmembers(coords, rows, sug_dirs);
                require(sug_count >= 2 && sug_count <= ranked.size(), Errc::invalid_argument,
                        "--count must lie in [2, sample count]");
                std::vector<std::size_t> picked;
                for (std::size_t k = 0; k < sug_count; ++k) {
                    picked.push_back(ranked[k].row);
                }
                const EndmemberSet ems = endmembers_from_samples(rows, picked);
                if (fs::path(sug_out).has_parent_path()) {
                    fs::create_directories(fs::path(sug_out).parent_path());
                }
                write_endmembers_csv(ems, sug_out);
                if (!sug_ranking.empty()) {
                    std::string csv = "rank,sample_id,y,x,extremity_count\n";
                    for (std::size_t r = 0; r < ranked.size(); ++r) {
                        const GridIndex g = rows.index_map()[ranked[r].row];
                        csv += std::to_string(r + 1) + ',' + std::to_string(ranked[r].sample_id) + ',' +
                               std::to_string(g.y) + ',' + std::to_string(g.x) + ',' +
                               std::to_string(ranked[r].extremity_count) + '\n';
                    }
                    write_file_atomic(sug_ranking, csv);
                }
                for (std::size_t k = 0; k < sug_count; ++k) {
                    out << ems.labels[k] << " hits " << ranked[k].extremity_count << "\n";
                }
                return ExitCode::ok;
            }

            if (unm->parsed()) {
                const DataCube cube = load_cube(unm_cube);
                const SampleMatrix matrix = flatten(cube, parse_standardize_mode(unm_std));
                const EndmemberSet ems = read_endmembers_csv(unm_ems);
                const FractionResult r = unmix(matrix, ems, unm_nonneg);
                const MisfitSummary s = write_unmix_outputs(r, ems, unm_out, unm_threshold);
                out << "samples " << s.count << "\n"
                    << "fraction below " << format_real(s.threshold_pct, 6) << "% misfit "
                    << format_real(s.fraction_below, 6) << "\n"
                    << "misfit mean " << format_real(s.mean, 6) << " median " << format_real(s.median, 6) << " max "
                    << format_real(s.max, 6) << "\n";
                return ExitCode::ok;
            }

            if (ren->parsed()) {
                std::size_t ny = ren_ny, nx = ren_nx;
                if (!ren_cube.empty()) {
                    const DataCube cube = load_cube(ren_cube);
                    ny = cube.dims().ny;
                    nx = cube.dims().nx;
                }
                if (ny == 0 || nx == 0) {
                    throw CLI::ValidationError("--cube", "grid size needed: pass --cube or --ny and --nx");
                }
                const TfsTable table = read_tfs_csv(ren_tfs);
                const RowMatrix values = pick_columns(table.coords, detail::parse_dims(ren_dims));
                if (fs::path(ren_out).has_parent_path()) {
                    fs::create_directories(fs::path(ren_out).parent_path());
                }
                render_map(values, table.index_map, ny, nx, ren_out);
                out << "wrote " << ren_out << "\n";
                return ExitCode::ok;
            }

            if (srv->parsed()) {
                ServiceOptions opts;
                opts.data_dir = srv_dir;
                opts.workers = srv_workers;
                opts.ui_dir = srv_ui;
                opts.threads = srv_threads;
                Service service(opts);
                const int port = service.bind(srv_host, srv_port);
                out << "listening on http://" << srv_host << ":" << port << " data " << srv_dir << std::endl;
                detail::stop_requested().store(false);
                std::signal(SIGINT, detail::on_signal);
                std::signal(SIGTERM, detail::on_signal);
                std::thread watcher([&] {
                    while (!detail::stop_requested().load() && service.running()) {
                        std::this_thread::sleep_for(std::chrono::milliseconds(100));
                    }
                    service.stop();
                });
                service.serve();
                detail::stop_requested().store(true);
                watcher.join();
                out << "stopped" << std::endl;
                return ExitCode::ok;
            }
        } catch (const Error& e) {
            if (e.code() == Errc::invalid_argument) {
                throw CLI::ValidationError("argument", e.what());
            }
            throw;
        }
    } catch (const CLI::Error& e) {
        err << "error: usage: " << e.what() << "\n";
        return ExitCode::usage;
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: " << msg << "\n";
        return ExitCode::data;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: io: " << msg << "\n";
        return ExitCode::data;
    }
    return ExitCode::usage;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args);
}

} // namespace tfscope::cli

#endif
