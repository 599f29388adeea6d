#ifndef TFSCOPE_EXPORT_HPP
#define TFSCOPE_EXPORT_HPP

// Feature-space CSV tables with JSON sidecars, and 8-bit PGM/PPM maps.

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"
#include "tfscope/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace tfscope {

/**
 * "sample_id,y,x,dim<a>,dim<b>,..." with one row per sample and 9 significant
 * digits. `dims` are 1-based column numbers; empty means all columns.
 */
inline std::string tfs_csv(const RowMatrix& coords, const std::vector<GridIndex>& index_map, std::size_t grid_nx,
                           std::vector<std::size_t> dims = {}) {
    require(static_cast<std::size_t>(coords.rows()) == index_map.size(), Errc::size_mismatch,
            "coordinate rows differ from index map length");
    if (dims.empty()) {
        for (Eigen::Index c = 0; c < coords.cols(); ++c) {
            dims.push_back(static_cast<std::size_t>(c) + 1);
        }
    }
    for (std::size_t d : dims) {
        require(d >= 1 && d <= static_cast<std::size_t>(coords.cols()), Errc::out_of_range,
                "dimension " + std::to_string(d) + " not in [1, " + std::to_string(coords.cols()) + "]");
    }
    std::string out = "sample_id,y,x";
    for (std::size_t d : dims) {
        out += ",dim" + std::to_string(d);
    }
    out += '\n';
    for (std::size_t i = 0; i < index_map.size(); ++i) {
        const GridIndex g = index_map[i];
        out += std::to_string(static_cast<std::size_t>(g.y) * grid_nx + g.x) + ',' + std::to_string(g.y) + ',' +
               std::to_string(g.x);
        for (std::size_t d : dims) {
            out += ',' + format_real(coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d - 1)), 9);
        }
        out += '\n';
    }
    return out;
}

/// Writes the CSV at `csv_path` and the metadata next to it with a .json extension.
inline void export_tfs(const RowMatrix& coords, const SampleMatrix& matrix, const nlohmann::ordered_json& metadata,
                       const fs::path& csv_path) {
    write_file_atomic(csv_path, tfs_csv(coords, matrix.index_map(), matrix.grid().nx));
    fs::path meta = csv_path;
    meta.replace_extension(".json");
    write_file_atomic(meta, metadata.dump(2) + "\n");
}

struct TfsTable {
    std::vector<std::size_t> sample_ids;
    std::vector<GridIndex> index_map;
    std::vector<std::string> dim_names;
    RowMatrix coords;
};

inline TfsTable read_tfs_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    require(!lines.empty(), Errc::format, "feature-space file " + path.string() + " is empty");
    const auto header = split(lines[0], ',');
    require(header.size() >= 4 && header[0] == "sample_id" && header[1] == "y" && header[2] == "x", Errc::format,
            "feature-space header must start with sample_id,y,x and name at least one dimension");
    TfsTable t;
    t.dim_names.assign(header.begin() + 3, header.end());
    const auto d = static_cast<Eigen::Index>(t.dim_names.size());
    t.coords.resize(static_cast<Eigen::Index>(lines.size() - 1), d);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto f = split(lines[r], ',');
        require(f.size() == header.size(), Errc::format, "row " + std::to_string(r) + " has the wrong field count");
        t.sample_ids.push_back(static_cast<std::size_t>(parse_integer(f[0])));
        t.index_map.push_back({static_cast<std::uint32_t>(parse_integer(f[1])), static_cast<std::uint32_t>(parse_integer(f[2]))});
        for (Eigen::Index c = 0; c < d; ++c) {
            t.coords(static_cast<Eigen::Index>(r - 1), c) = parse_real(f[static_cast<std::size_t>(c) + 3]);
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Maps

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
    require(!v.empty(), Errc::invalid_argument, "percentile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/**
 * 8-bit map of per-sample values: one column gives a binary PGM (P5), three
 * columns an RGB PPM (P6). Each channel is stretched linearly between its 2nd
 * and 98th percentiles; a channel with no spread renders mid-gray 128. Cells
 * without a sample are black.
 */
inline std::string render_map_bytes(const RowMatrix& values, const std::vector<GridIndex>& index_map, std::size_t ny,
                                    std::size_t nx) {
    const Eigen::Index channels = values.cols();
    require(channels == 1 || channels == 3, Errc::invalid_argument, "maps take 1 (gray) or 3 (RGB) channels");
    require(static_cast<std::size_t>(values.rows()) == index_map.size(), Errc::size_mismatch,
            "value rows differ from index map length");
    require(values.allFinite(), Errc::non_finite, "map values must be finite");

    std::vector<std::uint8_t> pixels(ny * nx * static_cast<std::size_t>(channels), 0);
    for (Eigen::Index c = 0; c < channels; ++c) {
        if (values.rows() == 0) {
            break;
        }
        std::vector<double> col(static_cast<std::size_t>(values.rows()));
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            col[static_cast<std::size_t>(i)] = values(i, c);
        }
        const double lo = percentile(col, 2.0);
        const double hi = percentile(col, 98.0);
        const bool flat = !(hi - lo > 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)}));
        for (std::size_t i = 0; i < index_map.size(); ++i) {
            const GridIndex g = index_map[i];
            require(g.y < ny && g.x < nx, Errc::out_of_range, "index map entry outside the map");
            std::uint8_t level = 128;
            if (!flat) {
                const double s = (col[i] - lo) / (hi - lo);
                level = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0));
            }
            pixels[(static_cast<std::size_t>(g.y) * nx + g.x) * static_cast<std::size_t>(channels) +
                   static_cast<std::size_t>(c)] = level;
        }
    }
    std::string out = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return out;
}

inline void render_map(const RowMatrix& values, const std::vector<GridIndex>& index_map, std::size_t ny, std::size_t nx,
                       const fs::path& path) {
    write_file_atomic(path, render_map_bytes(values, index_map, ny, nx));
}

/// Columns of `coords` picked by 1-based dims (e.g. {1,2,3} for an RGB composite).
inline RowMatrix pick_columns(const RowMatrix& coords, const std::vector<std::size_t>& dims) {
    RowMatrix out(coords.rows(), static_cast<Eigen::Index>(dims.size()));
    for (std::size_t k = 0; k < dims.size(); ++k) {
        require(dims[k] >= 1 && dims[k] <= static_cast<std::size_t>(coords.cols()), Errc::out_of_range,
                "dimension " + std::to_string(dims[k]) + " not available");
        out.col(static_cast<Eigen::Index>(k)) = coords.col(static_cast<Eigen::Index>(dims[k] - 1));
    }
    return out;
}

} // namespace tfscope

#endif
