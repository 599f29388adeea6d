#ifndef TFSCOPE_CUBE_HPP
#define TFSCOPE_CUBE_HPP

/**
 * @file cube.hpp
 *
 * Masked space-time data cubes, their on-disk header/payload form, and the
 * flattening into per-pixel sample rows that every reduction consumes.
 *
 * On disk a cube is a JSON header plus a raw little-endian payload ordered
 * (y, x, t, var) and an optional one-byte-per-cell mask:
 *
 *     {"ny":2,"nx":2,"nt":3,"nvars":1,"dtype":"f32le","order":"y,x,t,var",
 *      "data":"toy.f32","mask":null,"time_labels":[],"var_names":[]}
 */

#include "tfscope/error.hpp"
#include "tfscope/io.hpp"
#include "tfscope/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tfscope {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Storage precision of a cube payload. Values are held as double in memory; an
/// f32le cube only ever holds values exactly representable in binary32.
enum class SampleType { f32le, f64le };

inline std::string_view sample_type_name(SampleType t) { return t == SampleType::f32le ? "f32le" : "f64le"; }
inline std::string_view sample_type_extension(SampleType t) { return t == SampleType::f32le ? ".f32" : ".f64"; }

inline SampleType parse_sample_type(std::string_view name) {
    if (name == "f32le") {
        return SampleType::f32le;
    }
    if (name == "f64le") {
        return SampleType::f64le;
    }
    fail(Errc::format, "unsupported dtype '" + std::string(name) + "'");
}

struct CubeDims {
    std::size_t ny = 0;
    std::size_t nx = 0;
    std::size_t nt = 0;
    std::size_t nvars = 1;

    std::size_t cells() const { return ny * nx; }
    std::size_t features() const { return nt * nvars; }
    std::size_t size() const { return cells() * features(); }
    bool operator==(const CubeDims&) const = default;
};

class DataCube {
public:
    DataCube(CubeDims dims, std::vector<double> values, std::vector<std::uint8_t> mask = {},
             SampleType dtype = SampleType::f64le, std::vector<std::string> time_labels = {},
             std::vector<std::string> var_names = {})
        : dims_(dims), values_(std::move(values)), mask_(std::move(mask)), dtype_(dtype),
          time_labels_(std::move(time_labels)), var_names_(std::move(var_names)) {
        require(dims_.ny >= 1 && dims_.nx >= 1 && dims_.nt >= 1 && dims_.nvars >= 1, Errc::invalid_argument,
                "cube dimensions must all be at least 1");
        require(values_.size() == dims_.size(), Errc::size_mismatch,
                "cube holds " + std::to_string(values_.size()) + " values, dimensions require " +
                    std::to_string(dims_.size()));
        if (mask_.empty()) {
            mask_.assign(dims_.cells(), 1);
        }
        require(mask_.size() == dims_.cells(), Errc::size_mismatch, "mask length does not match ny*nx");
        for (auto& m : mask_) {
            require(m <= 1, Errc::format, "mask entries must be 0 or 1");
        }
        require(time_labels_.empty() || time_labels_.size() == dims_.nt, Errc::size_mismatch,
                "time_labels must be empty or have nt entries");
        require(var_names_.empty() || var_names_.size() == dims_.nvars, Errc::size_mismatch,
                "var_names must be empty or have nvars entries");
        if (dtype_ == SampleType::f32le) {
            for (auto& v : values_) {
                v = static_cast<double>(static_cast<float>(v));
            }
        }
        const std::size_t stride = dims_.features();
        for (std::size_t cell = 0; cell < dims_.cells(); ++cell) {
            if (!mask_[cell]) {
                continue;
            }
            for (std::size_t f = 0; f < stride; ++f) {
                require(std::isfinite(values_[cell * stride + f]), Errc::non_finite,
                        "non-finite value under valid mask at cell (" + std::to_string(cell / dims_.nx) + ", " +
                            std::to_string(cell % dims_.nx) + ")");
            }
        }
    }

    const CubeDims& dims() const { return dims_; }
    std::span<const double> values() const { return values_; }
    std::span<const std::uint8_t> mask() const { return mask_; }
    SampleType dtype() const { return dtype_; }
    const std::vector<std::string>& time_labels() const { return time_labels_; }
    const std::vector<std::string>& var_names() const { return var_names_; }

    bool valid(std::size_t y, std::size_t x) const { return mask_[y * dims_.nx + x] != 0; }

    double at(std::size_t y, std::size_t x, std::size_t t, std::size_t var = 0) const {
        return values_[((y * dims_.nx + x) * dims_.nt + t) * dims_.nvars + var];
    }

    /// All nt*nvars values of one cell, (t major, var minor).
    std::span<const double> cell(std::size_t y, std::size_t x) const {
        const std::size_t stride = dims_.features();
        return std::span<const double>(values_).subspan((y * dims_.nx + x) * stride, stride);
    }

    std::size_t valid_count() const {
        return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
    }

    /// Same cube stored at another precision (narrowing rounds to nearest).
    DataCube with_dtype(SampleType dtype) const {
        return DataCube(dims_, values_, mask_, dtype, time_labels_, var_names_);
    }

private:
    CubeDims dims_;
    std::vector<double> values_;
    std::vector<std::uint8_t> mask_;
    SampleType dtype_;
    std::vector<std::string> time_labels_;
    std::vector<std::string> var_names_;
};

namespace detail {

inline void append_le(std::string& out, std::uint64_t bits, int bytes) {
    for (int b = 0; b < bytes; ++b) {
        out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
}

inline std::uint64_t read_le(const char* p, int bytes) {
    std::uint64_t bits = 0;
    for (int b = 0; b < bytes; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    }
    return bits;
}

inline fs::path sibling(const fs::path& header_path, std::string_view extension) {
    fs::path p = header_path;
    p.replace_extension(extension);
    return p;
}

} // namespace detail

/// Writes `<stem>.json` plus `<stem>.f32|.f64` and, when any cell is masked out, `<stem>.mask`.
inline void save_cube(const DataCube& cube, const fs::path& header_path) {
    const CubeDims& d = cube.dims();
    const fs::path data_path = detail::sibling(header_path, sample_type_extension(cube.dtype()));
    const bool any_invalid = cube.valid_count() != d.cells();
    const fs::path mask_path = detail::sibling(header_path, ".mask");

    std::string payload;
    const int width = cube.dtype() == SampleType::f32le ? 4 : 8;
    payload.reserve(d.size() * static_cast<std::size_t>(width));
    for (double v : cube.values()) {
        if (cube.dtype() == SampleType::f32le) {
            detail::append_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
        } else {
            detail::append_le(payload, std::bit_cast<std::uint64_t>(v), 8);
        }
    }

    nlohmann::ordered_json header;
    header["ny"] = d.ny;
    header["nx"] = d.nx;
    header["nt"] = d.nt;
    header["nvars"] = d.nvars;
    header["dtype"] = sample_type_name(cube.dtype());
    header["order"] = "y,x,t,var";
    header["data"] = data_path.filename().string();
    header["mask"] = any_invalid ? nlohmann::ordered_json(mask_path.filename().string()) : nlohmann::ordered_json();
    header["time_labels"] = cube.time_labels();
    header["var_names"] = cube.var_names();

    write_file_atomic(data_path, payload);
    if (any_invalid) {
        const auto mask = cube.mask();
        write_file_atomic(mask_path, std::string_view(reinterpret_cast<const char*>(mask.data()), mask.size()));
    }
    write_file_atomic(header_path, header.dump(2) + "\n");
}

inline DataCube load_cube(const fs::path& header_path) {
    require(fs::exists(header_path), Errc::io, "missing cube header " + header_path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(read_file(header_path));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format, "cube header is not valid JSON: " + std::string(e.what()));
    }

    CubeDims dims;
    SampleType dtype = SampleType::f32le;
    std::string data_name;
    std::optional<std::string> mask_name;
    std::vector<std::string> time_labels;
    std::vector<std::string> var_names;
    try {
        dims.ny = header.at("ny").get<std::size_t>();
        dims.nx = header.at("nx").get<std::size_t>();
        dims.nt = header.at("nt").get<std::size_t>();
        dims.nvars = header.value("nvars", std::size_t{1});
        dtype = parse_sample_type(header.value("dtype", std::string("f32le")));
        const std::string order = header.value("order", std::string("y,x,t,var"));
        require(order == "y,x,t,var", Errc::format, "unsupported order '" + order + "'");
        data_name = header.at("data").get<std::string>();
        if (header.contains("mask") && !header["mask"].is_null()) {
            mask_name = header["mask"].get<std::string>();
        }
        if (header.contains("time_labels")) {
            time_labels = header["time_labels"].get<std::vector<std::string>>();
        }
        if (header.contains("var_names")) {
            var_names = header["var_names"].get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format, "malformed cube header: " + std::string(e.what()));
    }
    require(dims.ny >= 1 && dims.nx >= 1 && dims.nt >= 1 && dims.nvars >= 1, Errc::format,
            "cube dimensions must all be at least 1");

    const fs::path base = header_path.parent_path();
    const fs::path data_path = base / data_name;
    require(fs::exists(data_path), Errc::io, "missing cube payload " + data_path.string());
    const std::string payload = read_file(data_path);
    const std::size_t width = dtype == SampleType::f32le ? 4 : 8;
    require(payload.size() == dims.size() * width, Errc::size_mismatch,
            "payload " + data_path.string() + " has " + std::to_string(payload.size()) + " bytes, header declares " +
                std::to_string(dims.size() * width));

    std::vector<double> values(dims.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const char* p = payload.data() + i * width;
        values[i] = dtype == SampleType::f32le
                        ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(detail::read_le(p, 4))))
                        : std::bit_cast<double>(detail::read_le(p, 8));
    }

    std::vector<std::uint8_t> mask;
    if (mask_name) {
        const fs::path mask_path = base / *mask_name;
        require(fs::exists(mask_path), Errc::io, "missing cube mask " + mask_path.string());
        const std::string bytes = read_file(mask_path);
        require(bytes.size() == dims.cells(), Errc::size_mismatch, "mask file length does not match ny*nx");
        mask.assign(bytes.begin(), bytes.end());
    }
    return DataCube(dims, std::move(values), std::move(mask), dtype, std::move(time_labels), std::move(var_names));
}

// ---------------------------------------------------------------------------
// Flattening

enum class StandardizeMode { none, zscore };

inline std::string_view standardize_mode_name(StandardizeMode m) { return m == StandardizeMode::none ? "none" : "zscore"; }

inline StandardizeMode parse_standardize_mode(std::string_view name) {
    if (name == "none") {
        return StandardizeMode::none;
    }
    if (name == "zscore" || name == "per-variable-zscore") {
        return StandardizeMode::zscore;
    }
    fail(Errc::invalid_argument, "unknown standardization mode '" + std::string(name) + "'");
}

/// Per-variable affine scaling applied at flatten time: stored = (raw - offset) / divisor.
struct Standardization {
    StandardizeMode mode = StandardizeMode::none;
    std::vector<double> offsets;
    std::vector<double> divisors;
};

struct GridIndex {
    std::uint32_t y = 0;
    std::uint32_t x = 0;
    auto operator<=>(const GridIndex&) const = default;
};

/**
 * One row per retained cell, features ordered (t major, var minor). Row order is
 * the sample identity order used by every downstream engine; `sample_id(i)` is
 * the cell's linear grid index y*nx + x.
 */
class SampleMatrix {
public:
    SampleMatrix(RowMatrix data, std::vector<GridIndex> index_map, CubeDims grid, Standardization standardization = {})
        : data_(std::move(data)), index_map_(std::move(index_map)), grid_(grid),
          standardization_(std::move(standardization)) {
        require(static_cast<std::size_t>(data_.rows()) == index_map_.size(), Errc::size_mismatch,
                "index map length differs from row count");
        require(static_cast<std::size_t>(data_.cols()) == grid_.features(), Errc::size_mismatch,
                "feature count differs from nt*nvars");
        std::vector<std::size_t> ids(index_map_.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            require(index_map_[i].y < grid_.ny && index_map_[i].x < grid_.nx, Errc::out_of_range,
                    "index map entry outside the grid");
            ids[i] = sample_id(i);
        }
        std::sort(ids.begin(), ids.end());
        require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), Errc::invalid_argument,
                "index map entries must be unique");
    }

    std::size_t n_samples() const { return static_cast<std::size_t>(data_.rows()); }
    std::size_t n_features() const { return static_cast<std::size_t>(data_.cols()); }
    const RowMatrix& data() const { return data_; }
    const std::vector<GridIndex>& index_map() const { return index_map_; }
    const CubeDims& grid() const { return grid_; }
    const Standardization& standardization() const { return standardization_; }

    std::size_t sample_id(std::size_t row) const {
        return static_cast<std::size_t>(index_map_[row].y) * grid_.nx + index_map_[row].x;
    }

    /// Rows in the given order, carrying their index-map entries along.
    SampleMatrix select(std::span<const std::size_t> rows) const {
        RowMatrix data(static_cast<Eigen::Index>(rows.size()), data_.cols());
        std::vector<GridIndex> map(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            require(rows[i] < n_samples(), Errc::out_of_range, "row selection out of range");
            data.row(static_cast<Eigen::Index>(i)) = data_.row(static_cast<Eigen::Index>(rows[i]));
            map[i] = index_map_[rows[i]];
        }
        return SampleMatrix(std::move(data), std::move(map), grid_, standardization_);
    }

    /// Row holding the given sample id, if present.
    std::optional<std::size_t> find_sample(std::size_t id) const {
        for (std::size_t i = 0; i < n_samples(); ++i) {
            if (sample_id(i) == id) {
                return i;
            }
        }
        return std::nullopt;
    }

private:
    RowMatrix data_;
    std::vector<GridIndex> index_map_;
    CubeDims grid_;
    Standardization standardization_;
};

inline SampleMatrix flatten(const DataCube& cube, StandardizeMode mode = StandardizeMode::none) {
    const CubeDims& d = cube.dims();
    const std::size_t n = cube.valid_count();
    require(n > 0, Errc::empty_selection, "cube has no valid cells");

    RowMatrix data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d.features()));
    std::vector<GridIndex> map;
    map.reserve(n);
    for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
            if (!cube.valid(y, x)) {
                continue;
            }
            const auto series = cube.cell(y, x);
            const auto row = static_cast<Eigen::Index>(map.size());
            for (std::size_t f = 0; f < series.size(); ++f) {
                data(row, static_cast<Eigen::Index>(f)) = series[f];
            }
            map.push_back({static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x)});
        }
    }

    Standardization record;
    record.mode = mode;
    record.offsets.assign(d.nvars, 0.0);
    record.divisors.assign(d.nvars, 1.0);
    if (mode == StandardizeMode::zscore) {
        const double count = static_cast<double>(n * d.nt);
        for (std::size_t v = 0; v < d.nvars; ++v) {
            double sum = 0.0;
            for (Eigen::Index i = 0; i < data.rows(); ++i) {
                for (std::size_t t = 0; t < d.nt; ++t) {
                    sum += data(i, static_cast<Eigen::Index>(t * d.nvars + v));
                }
            }
            const double mean = sum / count;
            double ss = 0.0;
            for (Eigen::Index i = 0; i < data.rows(); ++i) {
                for (std::size_t t = 0; t < d.nt; ++t) {
                    const double dev = data(i, static_cast<Eigen::Index>(t * d.nvars + v)) - mean;
                    ss += dev * dev;
                }
            }
            const double sd = std::sqrt(ss / count);
            if (!(sd > 1e-12 * std::abs(mean)) || sd == 0.0) {
                const std::string name = v < cube.var_names().size() ? cube.var_names()[v] : std::to_string(v);
                fail(Errc::degenerate_variable, "variable " + name + " has zero variance");
            }
            record.offsets[v] = mean;
            record.divisors[v] = sd;
            for (Eigen::Index i = 0; i < data.rows(); ++i) {
                for (std::size_t t = 0; t < d.nt; ++t) {
                    double& value = data(i, static_cast<Eigen::Index>(t * d.nvars + v));
                    value = (value - mean) / sd;
                }
            }
        }
    }
    return SampleMatrix(std::move(data), std::move(map), d, std::move(record));
}

/// Scatters rows back onto the grid, undoing any standardization; unsampled cells are masked out.
inline DataCube unflatten(const SampleMatrix& matrix) {
    const CubeDims& d = matrix.grid();
    std::vector<double> values(d.size(), 0.0);
    std::vector<std::uint8_t> mask(d.cells(), 0);
    const auto& std_rec = matrix.standardization();
    for (std::size_t i = 0; i < matrix.n_samples(); ++i) {
        const std::size_t cell = matrix.sample_id(i);
        mask[cell] = 1;
        for (std::size_t f = 0; f < d.features(); ++f) {
            double v = matrix.data()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
            if (std_rec.mode != StandardizeMode::none) {
                const std::size_t var = f % d.nvars;
                v = v * std_rec.divisors[var] + std_rec.offsets[var];
            }
            values[cell * d.features() + f] = v;
        }
    }
    return DataCube(d, std::move(values), std::move(mask));
}

/**
 * Uniform subsample without replacement of at most `max_n` rows. Selected rows
 * keep their original relative order, so sample identity order is preserved.
 */
inline SampleMatrix subsample(const SampleMatrix& matrix, std::size_t max_n, std::uint64_t seed) {
    require(max_n >= 1, Errc::invalid_argument, "subsample cap must be at least 1");
    const std::size_t n = matrix.n_samples();
    if (n <= max_n) {
        return matrix;
    }
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    CounterRng rng(seed, streams::subsample);
    for (std::size_t i = 0; i < max_n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(max_n);
    std::sort(pool.begin(), pool.end());
    return matrix.select(pool);
}

} // namespace tfscope

#endif
