#ifndef CATCHSTAT_GWSOURCE_HPP
#define CATCHSTAT_GWSOURCE_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catchstat/csv.hpp"
#include "catchstat/errors.hpp"
#include "catchstat/network.hpp"

namespace catchstat {

enum class RedoxClass { Reduced, Oxic };
enum class PhClass { Low, Neutral, High };
enum class GwMethod { Estimated, Modelled, Mix, NA };

inline const char* to_string(RedoxClass r) { return r == RedoxClass::Reduced ? "Reduced" : "Oxic"; }
inline const char* to_string(PhClass p) {
    switch (p) {
        case PhClass::Low: return "low pH";
        case PhClass::Neutral: return "neutral pH";
        default: return "high pH";
    }
}
inline const char* to_string(GwMethod m) {
    switch (m) {
        case GwMethod::Estimated: return "Estimated";
        case GwMethod::Modelled: return "Modelled";
        case GwMethod::Mix: return "Mix";
        default: return "NA";
    }
}

/// Certainty labels attached to each method. Estimated values rest on
/// direct observations and are the most certain.
inline const char* uncertainty_label(GwMethod m) {
    switch (m) {
        case GwMethod::Estimated: return "High";
        case GwMethod::Modelled: return "Low";
        case GwMethod::Mix: return "Moderate";
        default: return "Unknown";
    }
}

struct WellScreen {
    std::string id;
    double x = 0.0, y = 0.0;           // planar coordinates, m
    std::optional<double> mam_ni;      // mean annual mean Ni, ug/l
    std::optional<double> nitrate;     // mg/l
    std::optional<double> ph;
    std::optional<std::string> gvf_id; // linked groundwater body
    std::string nbl_unit;              // geography+geology code, e.g. dkmj_ks
};

struct GroundwaterBody {
    std::string id;
    std::optional<double> ox_percent;  // volumetric oxic fraction, %
    std::optional<double> ph_median;
    std::string nbl_unit;
    bool surface_contact = false;
};

struct AquiferClass {
    RedoxClass redox;
    PhClass ph;
    std::string aquifer_type;  // nbl_unit/redox/pH triple
};

inline PhClass classify_ph(double ph) {
    if (ph <= 6.0) return PhClass::Low;
    if (ph <= 7.0) return PhClass::Neutral;
    return PhClass::High;
}

inline std::string aquifer_key(const std::string& nbl_unit, RedoxClass redox, PhClass ph) {
    return nbl_unit + "/" + to_string(redox) + "/" + to_string(ph);
}

/// Screen-level classification: reduced at nitrate <= 2 mg/l, pH classes
/// low (<=6), neutral (6-7], high (>7).
inline AquiferClass classify_screen(const WellScreen& ws) {
    if (!ws.nitrate) throw MissingField("nitrate at well-screen " + ws.id);
    if (!ws.ph) throw MissingField("pH at well-screen " + ws.id);
    AquiferClass c;
    c.redox = *ws.nitrate <= 2.0 ? RedoxClass::Reduced : RedoxClass::Oxic;
    c.ph = classify_ph(*ws.ph);
    c.aquifer_type = aquifer_key(ws.nbl_unit, c.redox, c.ph);
    return c;
}

/// Body-level classification: oxic when the oxic volume fraction exceeds
/// 50%. The pH median may come from the body record or from a zonal median
/// of an interpolated grid.
inline AquiferClass classify_gvf(const GroundwaterBody& g,
                                 std::optional<double> ph_zonal_median = std::nullopt) {
    if (!g.ox_percent) throw MissingField("ox_percent at groundwater body " + g.id);
    const std::optional<double> ph = g.ph_median ? g.ph_median : ph_zonal_median;
    if (!ph) throw MissingField("pH at groundwater body " + g.id);
    AquiferClass c;
    c.redox = *g.ox_percent > 50.0 ? RedoxClass::Oxic : RedoxClass::Reduced;
    c.ph = classify_ph(*ph);
    c.aquifer_type = aquifer_key(g.nbl_unit, c.redox, c.ph);
    return c;
}

/// Median with the midpoint convention for even counts.
inline double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    if (n % 2 == 1) return xs[n / 2];
    return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct GvfTypical {
    std::string gvf_id;
    std::optional<double> value;  // ug/l
    GwMethod method = GwMethod::NA;
    bool surface_contact = false;
};

/// Typical Ni concentration of one groundwater body: the median over its
/// own screens when more than two carry Ni data, otherwise the nationwide
/// median of its aquifer type. Missing information propagates as a missing
/// value rather than an error.
inline GvfTypical gvf_typical(const GroundwaterBody& g,
                              const std::vector<const WellScreen*>& linked_screens,
                              const std::map<std::string, double>& aquifer_medians,
                              std::optional<double> ph_zonal_median = std::nullopt) {
    GvfTypical out;
    out.gvf_id = g.id;
    out.surface_contact = g.surface_contact;

    std::vector<double> ni;
    for (const auto* ws : linked_screens)
        if (ws->mam_ni) ni.push_back(*ws->mam_ni);

    if (ni.size() > 2) {
        out.value = median(std::move(ni));
        out.method = GwMethod::Estimated;
        return out;
    }
    try {
        const auto cls = classify_gvf(g, ph_zonal_median);
        const auto it = aquifer_medians.find(cls.aquifer_type);
        if (it != aquifer_medians.end()) {
            out.value = it->second;
            out.method = GwMethod::Modelled;
        }
    } catch (const MissingField&) {
        // unclassifiable body stays NA
    }
    return out;
}

struct GwCatchmentResult {
    std::string catchment;
    std::optional<double> cg;  // ug/l
    GwMethod method = GwMethod::NA;
    std::string uncertainty;
};

/// Catchment-level transfer: unweighted mean of the typical values of the
/// intersecting surface-contact bodies. Method is Estimated or Modelled when
/// the contributing bodies agree, Mix otherwise, NA when nothing
/// contributes.
inline GwCatchmentResult catchment_gw(const std::string& catchment,
                                      const std::vector<GvfTypical>& intersecting) {
    GwCatchmentResult out;
    out.catchment = catchment;
    double sum = 0.0;
    std::size_t count = 0, estimated = 0, modelled = 0;
    for (const auto& g : intersecting) {
        if (!g.surface_contact || !g.value) continue;
        sum += *g.value;
        ++count;
        if (g.method == GwMethod::Estimated) ++estimated;
        if (g.method == GwMethod::Modelled) ++modelled;
    }
    if (count == 0) {
        out.method = GwMethod::NA;
    } else {
        out.cg = sum / static_cast<double>(count);
        if (estimated == count)
            out.method = GwMethod::Estimated;
        else if (modelled == count)
            out.method = GwMethod::Modelled;
        else
            out.method = GwMethod::Mix;
    }
    out.uncertainty = uncertainty_label(out.method);
    return out;
}

/// Regular grid of interpolated pH values; cell centers at
/// (x0 + (ix+0.5)*resolution, y0 + (iy+0.5)*resolution).
struct PhGrid {
    double x0 = 0.0, y0 = 0.0;
    double resolution = 0.0;
    std::size_t nx = 0, ny = 0;
    std::vector<double> values;  // row-major, iy*nx + ix

    double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }
    double center_x(std::size_t ix) const { return x0 + (ix + 0.5) * resolution; }
    double center_y(std::size_t iy) const { return y0 + (iy + 0.5) * resolution; }
};

/// Inverse-distance-weighted (1/d^2) interpolation onto an explicit grid.
/// A screen sitting on a cell center wins the cell exactly.
inline PhGrid idw_ph_grid(const std::vector<WellScreen>& screens, double x0, double y0,
                          double resolution, std::size_t nx, std::size_t ny) {
    std::vector<const WellScreen*> with_ph;
    for (const auto& ws : screens)
        if (ws.ph) with_ph.push_back(&ws);
    if (with_ph.empty()) throw NoData("no well-screens with pH for interpolation");
    std::sort(with_ph.begin(), with_ph.end(),
              [](const WellScreen* a, const WellScreen* b) { return a->id < b->id; });

    PhGrid grid;
    grid.x0 = x0;
    grid.y0 = y0;
    grid.resolution = resolution;
    grid.nx = nx;
    grid.ny = ny;
    grid.values.resize(nx * ny);

    for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double cx = grid.center_x(ix);
            const double cy = grid.center_y(iy);
            double wsum = 0.0, vsum = 0.0;
            bool exact = false;
            for (const auto* ws : with_ph) {
                const double dx = ws->x - cx, dy = ws->y - cy;
                const double dist = std::sqrt(dx * dx + dy * dy);
                if (dist < 1e-9) {
                    grid.values[iy * nx + ix] = *ws->ph;
                    exact = true;
                    break;
                }
                const double w = 1.0 / (dist * dist);
                wsum += w;
                vsum += w * *ws->ph;
            }
            if (!exact) grid.values[iy * nx + ix] = vsum / wsum;
        }
    }
    return grid;
}

/// Convenience overload: grid over the bounding box of the screens, aligned
/// so the minimum-coordinate corner is a cell center.
inline PhGrid idw_ph(double grid_resolution, const std::vector<WellScreen>& screens) {
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    bool first = true;
    for (const auto& ws : screens) {
        if (!ws.ph) continue;
        if (first) {
            min_x = max_x = ws.x;
            min_y = max_y = ws.y;
            first = false;
        } else {
            min_x = std::min(min_x, ws.x);
            max_x = std::max(max_x, ws.x);
            min_y = std::min(min_y, ws.y);
            max_y = std::max(max_y, ws.y);
        }
    }
    if (first) throw NoData("no well-screens with pH for interpolation");
    const double x0 = min_x - 0.5 * grid_resolution;
    const double y0 = min_y - 0.5 * grid_resolution;
    const auto nx = static_cast<std::size_t>(std::floor((max_x - x0) / grid_resolution)) + 1;
    const auto ny = static_cast<std::size_t>(std::floor((max_y - y0) / grid_resolution)) + 1;
    return idw_ph_grid(screens, x0, y0, grid_resolution, nx, ny);
}

inline double zonal_median(const PhGrid& grid, std::span<const std::size_t> cells) {
    if (cells.empty()) throw NoData("zonal median over an empty cell set");
    std::vector<double> vals;
    vals.reserve(cells.size());
    for (std::size_t c : cells) vals.push_back(grid.values[c]);
    return median(std::move(vals));
}

// ---------------------------------------------------------------------------
// Batch pipeline
// ---------------------------------------------------------------------------

struct GwPipelineResult {
    std::vector<GvfTypical> gvf_values;          // by gvf id
    std::map<std::string, double> aquifer_medians;
    std::vector<GwCatchmentResult> catchments;   // sorted by catchment id
    std::map<std::string, std::size_t> method_counts;
};

/// Full transfer chain: screen classification, aquifer-type medians, body
/// typical values, catchment means. `links` couples screen id to body id;
/// `intersections` couples body id to catchment id (precomputed externally).
/// `universe` lists every catchment that must appear in the output.
inline GwPipelineResult run_gw_pipeline(
    const std::vector<WellScreen>& screens, const std::vector<GroundwaterBody>& gvfs,
    const std::vector<std::pair<std::string, std::string>>& links,
    const std::vector<std::pair<std::string, std::string>>& intersections,
    std::vector<std::string> universe) {
    GwPipelineResult result;

    // Aquifer-type medians over all classifiable screens with Ni data.
    {
        std::map<std::string, std::vector<double>> groups;
        for (const auto& ws : screens) {
            if (!ws.mam_ni || !ws.nitrate || !ws.ph) continue;
            groups[classify_screen(ws).aquifer_type].push_back(*ws.mam_ni);
        }
        for (auto& [key, vals] : groups)
            result.aquifer_medians.emplace(key, median(std::move(vals)));
    }

    std::map<std::string, const WellScreen*> screen_by_id;
    for (const auto& ws : screens) screen_by_id.emplace(ws.id, &ws);
    std::map<std::string, std::vector<const WellScreen*>> screens_by_gvf;
    for (const auto& [screen_id, gvf_id] : links) {
        const auto it = screen_by_id.find(screen_id);
        if (it != screen_by_id.end()) screens_by_gvf[gvf_id].push_back(it->second);
    }
    // Screens may also carry their body link directly.
    for (const auto& ws : screens)
        if (ws.gvf_id) {
            auto& list = screens_by_gvf[*ws.gvf_id];
            if (std::find(list.begin(), list.end(), &ws) == list.end()) list.push_back(&ws);
        }

    std::map<std::string, GvfTypical> typical_by_gvf;
    for (const auto& g : gvfs) {
        static const std::vector<const WellScreen*> none;
        const auto it = screens_by_gvf.find(g.id);
        auto typical = gvf_typical(g, it != screens_by_gvf.end() ? it->second : none,
                                   result.aquifer_medians);
        result.gvf_values.push_back(typical);
        typical_by_gvf.emplace(g.id, std::move(typical));
    }

    std::map<std::string, std::vector<GvfTypical>> intersecting_by_catchment;
    for (const auto& [gvf_id, catchment_id] : intersections) {
        const auto it = typical_by_gvf.find(gvf_id);
        if (it != typical_by_gvf.end())
            intersecting_by_catchment[catchment_id].push_back(it->second);
    }

    if (universe.empty())
        for (const auto& [catchment_id, _] : intersecting_by_catchment)
            universe.push_back(catchment_id);
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());

    static const std::vector<GvfTypical> no_bodies;
    for (const auto& catchment_id : universe) {
        const auto it = intersecting_by_catchment.find(catchment_id);
        auto res = catchment_gw(catchment_id,
                                it != intersecting_by_catchment.end() ? it->second : no_bodies);
        ++result.method_counts[to_string(res.method)];
        result.catchments.push_back(std::move(res));
    }
    return result;
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

inline std::vector<WellScreen> read_screens_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const int c_id = t.require_column("id", path);
    const int c_x = t.require_column("x", path);
    const int c_y = t.require_column("y", path);
    const int c_ni = t.require_column("mam_ni", path);
    const int c_no3 = t.require_column("nitrate", path);
    const int c_ph = t.require_column("ph", path);
    const int c_gvf = t.column("gvf_id");
    const int c_nbl = t.require_column("nbl_unit", path);

    std::vector<WellScreen> out;
    for (const auto& r : t.rows) {
        WellScreen ws;
        ws.id = r[c_id];
        ws.x = csv::parse_double(r[c_x], path);
        ws.y = csv::parse_double(r[c_y], path);
        ws.mam_ni = csv::parse_optional_double(r[c_ni], path);
        ws.nitrate = csv::parse_optional_double(r[c_no3], path);
        ws.ph = csv::parse_optional_double(r[c_ph], path);
        if (c_gvf >= 0 && !r[c_gvf].empty()) ws.gvf_id = r[c_gvf];
        ws.nbl_unit = r[c_nbl];
        if (ws.mam_ni && *ws.mam_ni < 0.0)
            throw IoError(path + ": negative Ni concentration at screen " + ws.id);
        if (ws.ph && (*ws.ph <= 0.0 || *ws.ph >= 14.0))
            throw IoError(path + ": pH out of range at screen " + ws.id);
        out.push_back(std::move(ws));
    }
    return out;
}

inline std::vector<GroundwaterBody> read_gvf_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const int c_id = t.require_column("id", path);
    const int c_ox = t.require_column("ox_percent", path);
    const int c_ph = t.require_column("ph_median", path);
    const int c_nbl = t.require_column("nbl_unit", path);
    const int c_sc = t.require_column("surface_contact", path);

    std::vector<GroundwaterBody> out;
    for (const auto& r : t.rows) {
        GroundwaterBody g;
        g.id = r[c_id];
        g.ox_percent = csv::parse_optional_double(r[c_ox], path);
        g.ph_median = csv::parse_optional_double(r[c_ph], path);
        g.nbl_unit = r[c_nbl];
        g.surface_contact = csv::parse_long(r[c_sc], path) != 0;
        if (g.ox_percent && (*g.ox_percent < 0.0 || *g.ox_percent > 100.0))
            throw IoError(path + ": ox_percent out of [0,100] at body " + g.id);
        out.push_back(std::move(g));
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>> read_pair_csv(
    const std::string& path, const std::string& first, const std::string& second) {
    const auto t = csv::read_file(path);
    const int c_a = t.require_column(first, path);
    const int c_b = t.require_column(second, path);
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) out.emplace_back(r[c_a], r[c_b]);
    return out;
}

inline void write_gw_catchment_csv(const std::vector<GwCatchmentResult>& results,
                                   const std::string& path) {
    csv::Writer w(path);
    w.comment("groundwater Ni contribution per catchment; cg in ug/l, empty = NA");
    w.comment("uncertainty denotes certainty of the value: Estimated entries rest on");
    w.comment("direct observations and are the most certain (High); Modelled entries");
    w.comment("transfer aquifer-type medians and are the least certain (Low)");
    w.row({"catchment_id", "cg", "method", "uncertainty"});
    for (const auto& r : results)
        w.row({r.catchment, r.cg ? format_double(*r.cg) : "", to_string(r.method),
               r.uncertainty});
}

/// Reads the per-catchment groundwater concentrations back, aligned to a
/// network; NA rows come through as missing values.
inline std::vector<std::optional<double>> read_gw_catchment_csv(const CatchmentNetwork& net,
                                                                const std::string& path) {
    const auto t = csv::read_file(path);
    const int c_id = t.require_column("catchment_id", path);
    const int c_cg = t.require_column("cg", path);
    std::vector<std::optional<double>> cg(net.size());
    for (const auto& r : t.rows) {
        const auto idx = net.index_of(r[c_id]);
        if (!idx) continue;  // the gw table may cover more catchments than the network
        cg[*idx] = csv::parse_optional_double(r[c_cg], path);
    }
    return cg;
}

}  // namespace catchstat

#endif  // CATCHSTAT_GWSOURCE_HPP
