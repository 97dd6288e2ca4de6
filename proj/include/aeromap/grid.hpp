#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aeromap/civil_time.hpp"
#include "aeromap/common.hpp"
#include "aeromap/csv.hpp"

namespace aeromap {

/// ESRI ASCII raster. Values are stored row-major with the first row at
/// the top (largest y), matching the file layout.
struct EsriGrid {
    int ncols = 0;
    int nrows = 0;
    double xllcorner = 0.0;
    double yllcorner = 0.0;
    double cellsize = 0.0;
    double nodata = -9999.0;
    std::vector<double> values;

    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * ncols + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * ncols + col]; }

    double cell_center_x(int col) const { return xllcorner + (col + 0.5) * cellsize; }
    double cell_center_y(int row) const {
        return yllcorner + (nrows - 1 - row + 0.5) * cellsize;
    }

    bool contains(double x, double y) const {
        return x >= xllcorner && x <= xllcorner + ncols * cellsize &&
               y >= yllcorner && y <= yllcorner + nrows * cellsize;
    }

    /// Value of the cell containing (x, y); points on the upper edges
    /// fall into the last cell.
    double sample_nearest(double x, double y) const {
        int col = static_cast<int>(std::floor((x - xllcorner) / cellsize));
        int row_from_bottom = static_cast<int>(std::floor((y - yllcorner) / cellsize));
        col = std::clamp(col, 0, ncols - 1);
        row_from_bottom = std::clamp(row_from_bottom, 0, nrows - 1);
        return at(nrows - 1 - row_from_bottom, col);
    }

    static EsriGrid read(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ContractViolation("cannot open raster file: " + path);
        EsriGrid g;
        std::string key;
        bool have_nodata = false;
        // Six header lines, NODATA_value optional.
        for (int i = 0; i < 6; ++i) {
            auto pos = in.tellg();
            if (!(in >> key)) throw ContractViolation(path + ": truncated raster header");
            std::string lower;
            for (char c : key) lower += static_cast<char>(std::tolower(c));
            if (lower == "ncols") in >> g.ncols;
            else if (lower == "nrows") in >> g.nrows;
            else if (lower == "xllcorner") in >> g.xllcorner;
            else if (lower == "yllcorner") in >> g.yllcorner;
            else if (lower == "cellsize") in >> g.cellsize;
            else if (lower == "nodata_value") { in >> g.nodata; have_nodata = true; }
            else {
                in.seekg(pos);
                break;
            }
        }
        (void)have_nodata;
        if (g.ncols <= 0 || g.nrows <= 0 || g.cellsize <= 0)
            throw ContractViolation(path + ": invalid raster header");
        g.values.resize(static_cast<std::size_t>(g.ncols) * g.nrows);
        for (auto& v : g.values)
            if (!(in >> v)) throw ContractViolation(path + ": truncated raster data");
        return g;
    }

    void write(const std::string& path, int sig_digits = 6) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ContractViolation("cannot write raster file: " + path);
        out << "ncols " << ncols << "\n";
        out << "nrows " << nrows << "\n";
        out << "xllcorner " << fmt_double(xllcorner) << "\n";
        out << "yllcorner " << fmt_double(yllcorner) << "\n";
        out << "cellsize " << fmt_double(cellsize) << "\n";
        out << "NODATA_value " << fmt_double(nodata) << "\n";
        for (int r = 0; r < nrows; ++r) {
            for (int c = 0; c < ncols; ++c) {
                if (c) out << ' ';
                double v = at(r, c);
                out << (v == nodata ? fmt_double(nodata) : fmt_sig(v, sig_digits));
            }
            out << '\n';
        }
    }
};

/// A coarse raster whose cells carry a time series; the storage format of
/// the spatio-temporal covariate sources.
struct GridSeries {
    int ncols = 0;
    int nrows = 0;
    double xllcorner = 0.0;
    double yllcorner = 0.0;
    double cellsize = 0.0;
    std::vector<double> times;                // utc seconds, ascending
    std::vector<std::vector<double>> slices;  // one raster (row-major, top row first) per time

    bool contains(double x, double y) const {
        return x >= xllcorner && x <= xllcorner + ncols * cellsize &&
               y >= yllcorner && y <= yllcorner + nrows * cellsize;
    }

    std::size_t cell_index(double x, double y) const {
        int col = std::clamp(static_cast<int>(std::floor((x - xllcorner) / cellsize)), 0, ncols - 1);
        int row_from_bottom =
            std::clamp(static_cast<int>(std::floor((y - yllcorner) / cellsize)), 0, nrows - 1);
        return static_cast<std::size_t>(nrows - 1 - row_from_bottom) * ncols + col;
    }

    static GridSeries read(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ContractViolation("cannot open grid series file: " + path);
        nlohmann::json doc = nlohmann::json::parse(in);
        GridSeries g;
        g.ncols = doc.at("ncols").get<int>();
        g.nrows = doc.at("nrows").get<int>();
        g.xllcorner = doc.at("xllcorner").get<double>();
        g.yllcorner = doc.at("yllcorner").get<double>();
        g.cellsize = doc.at("cellsize").get<double>();
        for (const auto& t : doc.at("times"))
            g.times.push_back(parse_iso8601(t.get<std::string>()).utc_s);
        for (const auto& s : doc.at("values"))
            g.slices.push_back(s.get<std::vector<double>>());
        if (g.slices.size() != g.times.size())
            throw ContractViolation(path + ": times/values length mismatch");
        for (const auto& s : g.slices)
            if (s.size() != static_cast<std::size_t>(g.ncols) * g.nrows)
                throw ContractViolation(path + ": slice size does not match grid");
        return g;
    }

    void write(const std::string& path) const {
        nlohmann::json doc;
        doc["ncols"] = ncols;
        doc["nrows"] = nrows;
        doc["xllcorner"] = xllcorner;
        doc["yllcorner"] = yllcorner;
        doc["cellsize"] = cellsize;
        nlohmann::json times_json = nlohmann::json::array();
        for (double t : times) times_json.push_back(format_iso8601({t, 0}));
        doc["times"] = std::move(times_json);
        doc["values"] = slices;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ContractViolation("cannot write grid series file: " + path);
        out << doc.dump(1) << '\n';
    }
};

/// Piecewise-linear interpolation of (times, values) at t. Strict about
/// coverage: t outside the sampled span is an error the caller converts
/// into an OutOfCoverage with context.
inline double interp_series(const std::vector<double>& times,
                            const std::vector<double>& values, double t,
                            bool* covered) {
    if (times.empty() || t < times.front() || t > times.back()) {
        *covered = false;
        return 0.0;
    }
    *covered = true;
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return values.front();
    std::size_t hi = static_cast<std::size_t>(it - times.begin());
    if (hi == times.size()) return values.back();
    std::size_t lo = hi - 1;
    double span = times[hi] - times[lo];
    if (span <= 0) return values[lo];
    double w = (t - times[lo]) / span;
    return values[lo] * (1.0 - w) + values[hi] * w;
}

} // namespace aeromap
