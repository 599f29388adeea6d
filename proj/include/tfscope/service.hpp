#ifndef TFSCOPE_SERVICE_HPP
#define TFSCOPE_SERVICE_HPP

// Local HTTP front end for the pipeline. Needs httplib.h on the include path.
//
// Data directory layout:
//   cubes/<id>/cube.json (+ payload, mask)
//   jobs/<id>/job.json   state record, rewritten atomically on every transition
//   jobs/<id>/...        characterization exports, or fractions.csv for unmix jobs

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"
#include "tfscope/export.hpp"
#include "tfscope/io.hpp"
#include "tfscope/pipeline.hpp"
#include "tfscope/unmix.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace tfscope {

struct ServiceOptions {
    fs::path data_dir = "tfscope-data";
    std::size_t workers = 1;
    std::string ui_dir; ///< mounted at /ui when non-empty
    int threads = 0;    ///< library thread cap for jobs, 0 = all cores
};

enum class JobKind { characterize, unmix };
enum class JobState { queued, running, done, failed };

inline std::string_view job_kind_name(JobKind k) { return k == JobKind::characterize ? "characterize" : "unmix"; }
inline std::string_view job_state_name(JobState s) {
    switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    }
    return "failed";
}

struct Job {
    std::string id;
    JobKind kind = JobKind::characterize;
    JobState state = JobState::queued;
    std::string cube;
    nlohmann::ordered_json request; ///< config echo (characterize) or unmix request
    std::string error;
    nlohmann::ordered_json summary; ///< unmix misfit summary once done
};

class Service {
public:
    explicit Service(ServiceOptions options) : options_(std::move(options)) {
        fs::create_directories(options_.data_dir / "cubes");
        fs::create_directories(options_.data_dir / "jobs");
        restore();
        routes();
        for (std::size_t w = 0; w < std::max<std::size_t>(1, options_.workers); ++w) {
            workers_.emplace_back([this] { work(); });
        }
    }

    ~Service() {
        stop();
        for (auto& t : workers_) {
            if (t.joinable()) {
                t.join();
            }
        }
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listener; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port) {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
        } else if (!server_.bind_to_port(host, port)) {
            bound = -1;
        }
        require(bound > 0, Errc::io, "cannot bind " + host + ":" + std::to_string(port));
        return bound;
    }

    /// Serves until stop(); returns after the listener has closed.
    void serve() { server_.listen_after_bind(); }

    bool running() const { return server_.is_running() || !stopping_.load(); }

    void wait_until_ready() const { server_.wait_until_ready(); }

    /**
     * Stops accepting requests, fails queued jobs and lets running jobs finish.
     * Safe to call more than once and from any thread.
     */
    void stop() {
        {
            std::lock_guard lock(mutex_);
            if (stopping_.exchange(true)) {
                return;
            }
            while (!queue_.empty()) {
                Job& job = jobs_.at(queue_.front());
                queue_.pop_front();
                job.state = JobState::failed;
                job.error = "service stopped before the job started";
                persist(job);
            }
        }
        cv_.notify_all();
        server_.stop();
        for (auto& t : workers_) {
            if (t.joinable() && t.get_id() != std::this_thread::get_id()) {
                t.join();
            }
        }
    }

    /// Blocks until the job leaves the queued/running states or the timeout passes.
    std::optional<Job> wait_for(const std::string& id, std::chrono::milliseconds timeout) {
        std::unique_lock lock(mutex_);
        const bool settled = done_cv_.wait_for(lock, timeout, [&] {
            const auto it = jobs_.find(id);
            return it == jobs_.end() || it->second.state == JobState::done || it->second.state == JobState::failed;
        });
        const auto it = jobs_.find(id);
        if (!settled || it == jobs_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    const fs::path& data_dir() const { return options_.data_dir; }

private:
    struct CubeEntry {
        std::string id;
        CubeDims dims;
        std::size_t valid_count = 0;
        std::string dtype;
    };

    ServiceOptions options_;
    httplib::Server server_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::deque<std::string> queue_;
    std::map<std::string, Job> jobs_;
    std::map<std::string, CubeEntry> cubes_;
    std::size_t next_cube_ = 1;
    std::size_t next_job_ = 1;
    std::atomic<bool> stopping_{false};
    std::vector<std::thread> workers_;

    fs::path cube_header(const std::string& id) const { return options_.data_dir / "cubes" / id / "cube.json"; }
    fs::path job_dir(const std::string& id) const { return options_.data_dir / "jobs" / id; }

    static std::string make_id(const char* prefix, std::size_t n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, n);
        return buf;
    }

    static std::size_t id_number(const std::string& id) {
        const auto dash = id.rfind('-');
        if (dash == std::string::npos) {
            return 0;
        }
        try {
            return static_cast<std::size_t>(std::stoull(id.substr(dash + 1)));
        } catch (...) {
            return 0;
        }
    }

    static bool safe_name(const std::string& s) {
        if (s.empty() || s == "." || s == "..") {
            return false;
        }
        return std::all_of(s.begin(), s.end(),
                           [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; });
    }

    static nlohmann::ordered_json cube_json(const CubeEntry& c) {
        return {{"id", c.id},       {"ny", c.dims.ny},       {"nx", c.dims.nx},
                {"nt", c.dims.nt},  {"nvars", c.dims.nvars}, {"valid_count", c.valid_count},
                {"dtype", c.dtype}};
    }

    static nlohmann::ordered_json job_json(const Job& j) {
        nlohmann::ordered_json o;
        o["id"] = j.id;
        o["kind"] = std::string(job_kind_name(j.kind));
        o["state"] = std::string(job_state_name(j.state));
        o["cube"] = j.cube;
        o[j.kind == JobKind::characterize ? "config" : "request"] = j.request;
        o["result"] = j.state == JobState::done ? nlohmann::ordered_json("/jobs/" + j.id) : nlohmann::ordered_json();
        o["error"] = j.state == JobState::failed ? nlohmann::ordered_json(j.error) : nlohmann::ordered_json();
        if (!j.summary.is_null()) {
            o["summary"] = j.summary;
        }
        return o;
    }

    void persist(const Job& j) const {
        fs::create_directories(job_dir(j.id));
        write_file_atomic(job_dir(j.id) / "job.json", job_json(j).dump(2) + "\n");
    }

    // Re-registers cubes and finished jobs left in the data directory by an earlier process.
    void restore() {
        for (const auto& e : fs::directory_iterator(options_.data_dir / "cubes")) {
            const std::string id = e.path().filename().string();
            try {
                const DataCube cube = load_cube(cube_header(id));
                cubes_[id] = {id, cube.dims(), cube.valid_count(), std::string(sample_type_name(cube.dtype()))};
                next_cube_ = std::max(next_cube_, id_number(id) + 1);
            } catch (const Error&) {
                // Incomplete uploads are ignored.
            }
        }
        for (const auto& e : fs::directory_iterator(options_.data_dir / "jobs")) {
            const fs::path record = e.path() / "job.json";
            if (!fs::exists(record)) {
                continue;
            }
            try {
                const auto o = nlohmann::ordered_json::parse(read_file(record));
                Job j;
                j.id = o.at("id").get<std::string>();
                j.kind = o.at("kind").get<std::string>() == "unmix" ? JobKind::unmix : JobKind::characterize;
                j.cube = o.at("cube").get<std::string>();
                j.request = o.contains("config") ? o["config"] : o.value("request", nlohmann::ordered_json());
                const std::string state = o.at("state").get<std::string>();
                if (state == "done") {
                    j.state = JobState::done;
                } else {
                    j.state = JobState::failed;
                    j.error = state == "failed" ? o.value("error", std::string()) : "interrupted by a service restart";
                }
                if (o.contains("summary")) {
                    j.summary = o["summary"];
                }
                next_job_ = std::max(next_job_, id_number(j.id) + 1);
                jobs_[j.id] = j;
                persist(j);
            } catch (const std::exception&) {
            }
        }
    }

    // -- jobs ---------------------------------------------------------------

    std::string enqueue(Job job) {
        std::lock_guard lock(mutex_);
        require(!stopping_.load(), Errc::invalid_argument, "service is stopping");
        job.id = make_id("job", next_job_++);
        job.state = JobState::queued;
        persist(job);
        jobs_[job.id] = job;
        queue_.push_back(job.id);
        cv_.notify_one();
        return job.id;
    }

    void work() {
        for (;;) {
            Job job;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stopping_.load() || !queue_.empty(); });
                if (queue_.empty()) {
                    return;
                }
                Job& j = jobs_.at(queue_.front());
                queue_.pop_front();
                j.state = JobState::running;
                persist(j);
                job = j;
            }
            std::string error;
            nlohmann::ordered_json summary;
            try {
                summary = execute(job);
            } catch (const std::exception& e) {
                error = e.what();
            }
            {
                std::lock_guard lock(mutex_);
                Job& j = jobs_.at(job.id);
                j.state = error.empty() ? JobState::done : JobState::failed;
                j.error = error;
                j.summary = summary;
                persist(j);
            }
            done_cv_.notify_all();
        }
    }

    nlohmann::ordered_json execute(const Job& job) {
        ThreadCapGuard guard(options_.threads);
        const DataCube cube = load_cube(cube_header(job.cube));
        if (job.kind == JobKind::characterize) {
            const CharacterizationConfig config = config_from_json(nlohmann::json::parse(job.request.dump()));
            run_characterization(cube, config, job_dir(job.id));
            return nullptr;
        }
        const auto& r = job.request;
        const StandardizeMode mode = parse_standardize_mode(r.value("standardization", std::string("none")));
        const SampleMatrix matrix = flatten(cube, mode);
        EndmemberSet ems;
        if (r.contains("samples")) {
            std::vector<std::size_t> rows;
            for (const auto& id : r["samples"]) {
                const auto row = matrix.find_sample(id.get<std::size_t>());
                require(row.has_value(), Errc::out_of_range,
                        "sample " + std::to_string(id.get<std::size_t>()) + " is not a valid cell");
                rows.push_back(*row);
            }
            ems = endmembers_from_samples(matrix, rows);
        } else {
            const auto& sig = r.at("signatures");
            ems.signatures.resize(static_cast<Eigen::Index>(sig.size()),
                                  sig.empty() ? 0 : static_cast<Eigen::Index>(sig[0].size()));
            for (std::size_t k = 0; k < sig.size(); ++k) {
                require(sig[k].size() == sig[0].size(), Errc::width_mismatch, "signatures differ in length");
                for (std::size_t f = 0; f < sig[k].size(); ++f) {
                    ems.signatures(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) = sig[k][f].get<double>();
                }
                ems.labels.push_back("em" + std::to_string(k + 1));
                ems.provenance.push_back("external");
            }
        }
        if (r.contains("labels")) {
            ems.labels = r["labels"].get<std::vector<std::string>>();
        }
        const FractionResult result = unmix(matrix, ems, r.value("nonneg", false));
        const MisfitSummary s =
            write_unmix_outputs(result, ems, job_dir(job.id) / "fractions.csv", r.value("threshold", 10.0));
        return misfit_summary_json(s);
    }

    // -- HTTP ---------------------------------------------------------------

    static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
        res.status = status;
        res.set_content(body.dump(2) + "\n", "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& message) {
        send_json(res, status, {{"error", message}});
    }

    static int status_for(Errc code) {
        return code == Errc::out_of_range ? 404 : 400;
    }

    /// Wraps a handler so library errors become JSON error responses.
    template <typename F>
    static httplib::Server::Handler guarded(F&& f) {
        return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, status_for(e.code()), e.what());
            } catch (const nlohmann::json::exception& e) {
                send_error(res, 400, std::string("format: ") + e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        };
    }

    std::optional<Job> find_job(const std::string& id) {
        std::lock_guard lock(mutex_);
        const auto it = jobs_.find(id);
        if (it == jobs_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    /// The job if it exists and is done; otherwise writes a 404/409 response.
    std::optional<Job> finished_job(const std::string& id, httplib::Response& res) {
        auto job = find_job(id);
        if (!job) {
            send_error(res, 404, "no job " + id);
        } else if (job->state != JobState::done) {
            send_error(res, 409, "job " + id + " is " + std::string(job_state_name(job->state)));
            job.reset();
        }
        return job;
    }

    std::string register_cube(const std::string& header_text, const std::string& payload,
                              const std::optional<std::string>& mask) {
        std::string id;
        {
            std::lock_guard lock(mutex_);
            id = make_id("cube", next_cube_++);
        }
        const fs::path dir = options_.data_dir / "cubes" / id;
        fs::create_directories(dir);
        try {
            nlohmann::ordered_json header;
            try {
                header = nlohmann::ordered_json::parse(header_text);
            } catch (const nlohmann::json::exception& e) {
                fail(Errc::format, std::string("cube header is not valid JSON: ") + e.what());
            }
            require(header.is_object(), Errc::format, "cube header must be an object");
            const std::string dtype = header.value("dtype", std::string("f32le"));
            const std::string ext(sample_type_extension(parse_sample_type(dtype)));
            header["data"] = "cube" + ext;
            header["mask"] = mask ? nlohmann::ordered_json("cube.mask") : nlohmann::ordered_json();
            write_file_atomic(dir / ("cube" + ext), payload);
            if (mask) {
                write_file_atomic(dir / "cube.mask", *mask);
            }
            write_file_atomic(dir / "cube.json", header.dump(2) + "\n");
            const DataCube cube = load_cube(dir / "cube.json");
            std::lock_guard lock(mutex_);
            cubes_[id] = {id, cube.dims(), cube.valid_count(), dtype};
        } catch (...) {
            std::error_code ec;
            fs::remove_all(dir, ec);
            throw;
        }
        return id;
    }

    std::string register_cube_file(const fs::path& header_path) {
        const DataCube cube = load_cube(header_path);
        std::string id;
        {
            std::lock_guard lock(mutex_);
            id = make_id("cube", next_cube_++);
        }
        fs::create_directories(options_.data_dir / "cubes" / id);
        save_cube(cube, cube_header(id));
        std::lock_guard lock(mutex_);
        cubes_[id] = {id, cube.dims(), cube.valid_count(), std::string(sample_type_name(cube.dtype()))};
        return id;
    }

    bool has_cube(const std::string& id) {
        std::lock_guard lock(mutex_);
        return cubes_.count(id) > 0;
    }

    std::string unmix_job(const nlohmann::json& body) {
        require(body.is_object(), Errc::format, "request body must be a JSON object");
        Job job;
        job.kind = JobKind::unmix;
        nlohmann::ordered_json request = nlohmann::ordered_json::parse(body.dump());
        request.erase("kind");
        if (body.contains("job")) {
            const std::string ref = body["job"].get<std::string>();
            const auto source = find_job(ref);
            require(source.has_value() && source->kind == JobKind::characterize, Errc::out_of_range,
                    "no characterize job " + ref);
            job.cube = source->cube;
            if (!request.contains("standardization")) {
                request["standardization"] = source->request.value("standardization", std::string("none"));
            }
        } else {
            job.cube = body.at("cube").get<std::string>();
        }
        require(has_cube(job.cube), Errc::out_of_range, "no cube " + job.cube);
        require(body.contains("samples") != body.contains("signatures"), Errc::invalid_argument,
                "give exactly one of samples or signatures");
        if (body.contains("samples")) {
            require(body["samples"].is_array() && body["samples"].size() >= 2, Errc::invalid_argument,
                    "samples must list at least 2 sample ids");
            for (const auto& s : body["samples"]) {
                require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0),
                        Errc::invalid_argument, "sample ids must be non-negative integers");
            }
        } else {
            require(body["signatures"].is_array() && body["signatures"].size() >= 2, Errc::invalid_argument,
                    "signatures must list at least 2 series");
        }
        if (body.contains("standardization")) {
            parse_standardize_mode(body["standardization"].get<std::string>());
        }
        job.request = request;
        return enqueue(std::move(job));
    }

    void routes() {
        server_.Post("/cubes", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string id;
            if (req.is_multipart_form_data()) {
                require(req.has_file("header") && req.has_file("data"), Errc::format,
                        "multipart upload needs 'header' and 'data' parts");
                std::optional<std::string> mask;
                if (req.has_file("mask")) {
                    mask = req.get_file_value("mask").content;
                }
                id = register_cube(req.get_file_value("header").content, req.get_file_value("data").content, mask);
            } else {
                const auto body = nlohmann::json::parse(req.body);
                require(body.is_object() && body.contains("path") && body["path"].is_string(), Errc::format,
                        "JSON body must be {\"path\": \"<cube header>\"}");
                id = register_cube_file(body["path"].get<std::string>());
            }
            std::lock_guard lock(mutex_);
            send_json(res, 201, cube_json(cubes_.at(id)));
        }));

        server_.Get("/cubes", guarded([this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            auto list = nlohmann::ordered_json::array();
            for (const auto& [id, c] : cubes_) {
                list.push_back(cube_json(c));
            }
            send_json(res, 200, {{"cubes", list}});
        }));

        server_.Post("/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            require(body.is_object(), Errc::format, "request body must be a JSON object");
            const std::string kind = body.value("kind", std::string("characterize"));
            std::string id;
            if (kind == "unmix") {
                id = unmix_job(body);
            } else {
                require(kind == "characterize", Errc::invalid_argument, "kind must be characterize or unmix");
                Job job;
                job.kind = JobKind::characterize;
                job.cube = body.at("cube").get<std::string>();
                require(has_cube(job.cube), Errc::out_of_range, "no cube " + job.cube);
                const CharacterizationConfig config =
                    config_from_json(body.contains("config") ? body["config"] : nlohmann::json::object());
                job.request = config_to_json(config);
                id = enqueue(std::move(job));
            }
            send_json(res, 202, {{"id", id}, {"state", "queued"}});
        }));

        server_.Get("/jobs", guarded([this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            auto list = nlohmann::ordered_json::array();
            for (const auto& [id, j] : jobs_) {
                list.push_back(job_json(j));
            }
            send_json(res, 200, {{"jobs", list}});
        }));

        server_.Get(R"(/jobs/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = find_job(req.matches[1]);
            if (!job) {
                send_error(res, 404, "no job " + std::string(req.matches[1]));
                return;
            }
            send_json(res, 200, job_json(*job));
        }));

        server_.Get(R"(/embeddings/([A-Za-z0-9_-]+)/([a-z]+)/points)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = finished_job(req.matches[1], res);
            if (!job) {
                return;
            }
            const std::string method = req.matches[2];
            const auto& names = method_names();
            require(job->kind == JobKind::characterize && std::find(names.begin(), names.end(), method) != names.end(),
                    Errc::out_of_range, "no embedding " + method + " for job " + job->id);
            const std::string text = read_file(job_dir(job->id) / (method + ".csv"));
            if (!req.has_param("dims")) {
                res.set_content(text, "text/csv");
                return;
            }
            // Column selection works on the exported text, so values stay byte-identical.
            const auto dims = parse_dim_list(req.get_param_value("dims"));
            std::string out;
            std::size_t pos = 0;
            while (pos < text.size()) {
                const std::size_t eol = text.find('\n', pos);
                const auto fields = split(std::string_view(text).substr(pos, eol - pos), ',');
                require(fields.size() >= 4, Errc::format, "malformed export");
                std::string line = fields[0] + ',' + fields[1] + ',' + fields[2];
                for (std::size_t d : dims) {
                    require(d + 2 < fields.size(), Errc::invalid_argument,
                            "dimension " + std::to_string(d) + " not in the " + method + " export");
                    line += ',' + fields[d + 2];
                }
                out += line + '\n';
                pos = eol == std::string::npos ? text.size() : eol + 1;
            }
            res.set_content(out, "text/csv");
        }));

        server_.Get("/series", guarded([this](const httplib::Request& req, httplib::Response& res) {
            require(req.has_param("cube") && req.has_param("samples"), Errc::invalid_argument,
                    "series needs cube= and samples=");
            const std::string id = req.get_param_value("cube");
            require(has_cube(id), Errc::out_of_range, "no cube " + id);
            const DataCube cube = load_cube(cube_header(id));
            const CubeDims d = cube.dims();
            auto list = nlohmann::ordered_json::array();
            for (const auto& tok : split(req.get_param_value("samples"), ',')) {
                const long long sid = parse_integer(tok);
                require(sid >= 0 && static_cast<std::size_t>(sid) < d.cells(), Errc::out_of_range,
                        "sample " + tok + " outside the grid");
                const std::size_t y = static_cast<std::size_t>(sid) / d.nx;
                const std::size_t x = static_cast<std::size_t>(sid) % d.nx;
                require(cube.valid(y, x), Errc::out_of_range, "sample " + tok + " is masked out");
                const auto cell = cube.cell(y, x);
                list.push_back({{"sample_id", sid}, {"y", y}, {"x", x}, {"values", std::vector<double>(cell.begin(), cell.end())}});
            }
            send_json(res, 200, {{"cube", id}, {"nt", d.nt}, {"nvars", d.nvars}, {"series", list}});
        }));

        server_.Post("/unmix", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = unmix_job(nlohmann::json::parse(req.body));
            send_json(res, 202, {{"id", id}, {"state", "queued"}});
        }));

        server_.Get(R"(/fractions/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = finished_job(req.matches[1], res);
            if (!job) {
                return;
            }
            require(job->kind == JobKind::unmix, Errc::out_of_range, "job " + job->id + " is not an unmix job");
            res.set_content(read_file(job_dir(job->id) / "fractions.csv"), "text/csv");
        }));

        server_.Get(R"(/maps/([A-Za-z0-9_-]+)/([A-Za-z0-9_.-]+))",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = finished_job(req.matches[1], res);
            if (!job) {
                return;
            }
            const std::string name = req.matches[2];
            const fs::path ext = fs::path(name).extension();
            require(safe_name(name) && (ext == ".pgm" || ext == ".ppm"), Errc::out_of_range, "no map " + name);
            const fs::path path = job_dir(job->id) / name;
            require(fs::exists(path), Errc::out_of_range, "no map " + name + " for job " + job->id);
            res.set_content(read_file(path), ext == ".pgm" ? "image/x-portable-graymap" : "image/x-portable-pixmap");
        }));

        if (!options_.ui_dir.empty()) {
            server_.set_mount_point("/ui", options_.ui_dir);
        }
    }

    static std::vector<std::size_t> parse_dim_list(const std::string& text) {
        std::vector<std::size_t> dims;
        for (const auto& tok : split(text, ',')) {
            const long long d = parse_integer(tok);
            require(d >= 1, Errc::invalid_argument, "dims are 1-based");
            dims.push_back(static_cast<std::size_t>(d));
        }
        require(!dims.empty(), Errc::invalid_argument, "dims is empty");
        return dims;
    }
};

} // namespace tfscope

#endif
