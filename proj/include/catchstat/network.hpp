#ifndef CATCHSTAT_NETWORK_HPP
#define CATCHSTAT_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "catchstat/csv.hpp"
#include "catchstat/errors.hpp"

namespace catchstat {

/// One drainage unit. Water leaves through a single outlet, either into the
/// sub-catchment named by `downstream` or into the marine environment.
struct SubCatchment {
    std::string id;
    double q_total = 0.0;      // total outlet discharge, m^3/d
    double q_ground = 0.0;     // groundwater inflow to surface water, m^3/d
    double q_shallow = 0.0;    // shallow / surface-near inflow, m^3/d
    double area_surface = 0.0; // surface water area, m^2
    std::optional<std::string> downstream;
};

/// Immutable connectivity of the sub-catchment DAG. Each row of the sparse
/// connectivity has at most one nonzero (single downstream neighbour);
/// levels stratify catchments by longest upstream chain. Safe to share
/// across threads once built.
class CatchmentNetwork {
public:
    std::size_t size() const { return catchments_.size(); }
    const SubCatchment& catchment(std::size_t i) const { return catchments_[i]; }
    const std::vector<SubCatchment>& catchments() const { return catchments_; }

    const std::string& id(std::size_t i) const { return catchments_[i].id; }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t require_index(const std::string& id) const {
        auto idx = index_of(id);
        if (!idx) throw UnknownCatchment(id);
        return *idx;
    }

    /// Downstream neighbour (the single nonzero of connectivity row i).
    std::optional<std::size_t> downstream(std::size_t i) const { return downstream_[i]; }

    /// Upstream neighbours of i, sorted by id so reductions over them are
    /// order-stable regardless of input file ordering.
    const std::vector<std::size_t>& upstream(std::size_t i) const { return upstream_[i]; }

    int level(std::size_t i) const { return levels_[i]; }
    int max_level() const { return max_level_; }

    /// Evaluation order: ascending level, ties broken by ascending id.
    const std::vector<std::size_t>& order() const { return order_; }

    friend CatchmentNetwork build_network(std::vector<SubCatchment> catchments);

private:
    std::vector<SubCatchment> catchments_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::optional<std::size_t>> downstream_;
    std::vector<std::vector<std::size_t>> upstream_;
    std::vector<int> levels_;
    std::vector<std::size_t> order_;
    int max_level_ = 0;
};

inline CatchmentNetwork build_network(std::vector<SubCatchment> catchments) {
    CatchmentNetwork net;
    net.catchments_ = std::move(catchments);
    const std::size_t n = net.catchments_.size();

    net.index_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = net.catchments_[i];
        if (!(c.q_total > 0.0))
            throw InvalidCatchment("catchment " + c.id + " has non-positive total discharge");
        if (c.q_ground < 0.0 || c.q_shallow < 0.0 || c.area_surface < 0.0)
            throw InvalidCatchment("catchment " + c.id + " has a negative hydrology field");
        if (!net.index_.emplace(c.id, i).second) throw DuplicateId(c.id);
    }

    net.downstream_.resize(n);
    net.upstream_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = net.catchments_[i];
        if (!c.downstream) continue;
        auto it = net.index_.find(*c.downstream);
        if (it == net.index_.end()) throw DanglingDownstream(c.id, *c.downstream);
        net.downstream_[i] = it->second;
        net.upstream_[it->second].push_back(i);
    }
    for (auto& ups : net.upstream_)
        std::sort(ups.begin(), ups.end(), [&](std::size_t a, std::size_t b) {
            return net.catchments_[a].id < net.catchments_[b].id;
        });

    // Cycle check by chain walking; out-degree <= 1 makes every cycle a
    // downstream loop.
    {
        std::vector<int> state(n, 0);  // 0 unvisited, 1 on current walk, 2 done
        std::vector<std::size_t> walk;
        for (std::size_t start = 0; start < n; ++start) {
            if (state[start] == 2) continue;
            walk.clear();
            std::size_t cur = start;
            while (true) {
                if (state[cur] == 1) {
                    std::string ids;
                    bool in_cycle = false;
                    for (std::size_t w : walk) {
                        if (w == cur) in_cycle = true;
                        if (in_cycle) ids += net.catchments_[w].id + " ";
                    }
                    ids += net.catchments_[cur].id;
                    throw CycleDetected(ids);
                }
                if (state[cur] == 2) break;
                state[cur] = 1;
                walk.push_back(cur);
                if (!net.downstream_[cur]) break;
                cur = *net.downstream_[cur];
            }
            for (std::size_t w : walk) state[w] = 2;
        }
    }

    // Levels: longest upstream chain, propagated in topological order.
    net.levels_.assign(n, 0);
    {
        std::vector<std::size_t> pending(n, 0);
        std::vector<std::size_t> queue;
        for (std::size_t i = 0; i < n; ++i) {
            pending[i] = net.upstream_[i].size();
            if (pending[i] == 0) queue.push_back(i);
        }
        std::size_t head = 0;
        while (head < queue.size()) {
            const std::size_t i = queue[head++];
            int lvl = 0;
            for (std::size_t u : net.upstream_[i]) lvl = std::max(lvl, net.levels_[u] + 1);
            net.levels_[i] = lvl;
            net.max_level_ = std::max(net.max_level_, lvl);
            if (net.downstream_[i] && --pending[*net.downstream_[i]] == 0)
                queue.push_back(*net.downstream_[i]);
        }
    }

    net.order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) net.order_[i] = i;
    std::sort(net.order_.begin(), net.order_.end(), [&](std::size_t a, std::size_t b) {
        if (net.levels_[a] != net.levels_[b]) return net.levels_[a] < net.levels_[b];
        return net.catchments_[a].id < net.catchments_[b].id;
    });

    return net;
}

/// Catchments that discharge to the marine environment (connectivity row
/// all zero).
inline std::vector<std::string> marine_outlets(const CatchmentNetwork& net) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (!net.downstream(i)) out.push_back(net.id(i));
    std::sort(out.begin(), out.end());
    return out;
}

struct BalanceEntry {
    std::string id;
    double residual = 0.0;  // Q_i - (sum of upstream Q + Qg_i + Qs_i)
    double relative = 0.0;  // |residual| / Q_i
    bool flagged = false;
};

struct BalanceReport {
    std::vector<BalanceEntry> entries;  // network input order
    std::size_t flagged_count = 0;
    bool ok = true;
};

/// Checks the steady-state water balance per catchment. Violations are
/// reported, never thrown: real hydrology tables can be inconsistent and the
/// concentration model stays well-defined either way.
inline BalanceReport check_water_balance(const CatchmentNetwork& net, double rel_tol) {
    BalanceReport report;
    report.entries.reserve(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& c = net.catchment(i);
        double inflow = 0.0;
        for (std::size_t u : net.upstream(i)) inflow += net.catchment(u).q_total;
        inflow += c.q_ground + c.q_shallow;
        BalanceEntry e;
        e.id = c.id;
        e.residual = c.q_total - inflow;
        e.relative = std::abs(e.residual) / c.q_total;
        e.flagged = e.relative > rel_tol;
        if (e.flagged) {
            ++report.flagged_count;
            report.ok = false;
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

/// Reads the sub-catchment hydrology CSV: id, downstream_id (empty =
/// marine), q_total, q_ground, q_shallow, area_surface.
inline CatchmentNetwork read_network_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const int c_id = t.require_column("id", path);
    const int c_down = t.require_column("downstream_id", path);
    const int c_q = t.require_column("q_total", path);
    const int c_qg = t.require_column("q_ground", path);
    const int c_qs = t.require_column("q_shallow", path);
    const int c_a = t.require_column("area_surface", path);

    std::vector<SubCatchment> rows;
    rows.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        SubCatchment c;
        c.id = r[c_id];
        if (!r[c_down].empty()) c.downstream = r[c_down];
        c.q_total = csv::parse_double(r[c_q], path);
        c.q_ground = csv::parse_double(r[c_qg], path);
        c.q_shallow = csv::parse_double(r[c_qs], path);
        c.area_surface = csv::parse_double(r[c_a], path);
        rows.push_back(std::move(c));
    }
    return build_network(std::move(rows));
}

inline void write_network_csv(const CatchmentNetwork& net, const std::string& path) {
    csv::Writer w(path);
    w.comment("sub-catchment hydrology");
    w.comment("q_total, q_ground, q_shallow in m^3/d; area_surface in m^2");
    w.comment("empty downstream_id = discharges to the marine environment");
    w.row({"id", "downstream_id", "q_total", "q_ground", "q_shallow", "area_surface"});
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& c = net.catchment(i);
        w.row({c.id, c.downstream.value_or(""), format_double(c.q_total),
               format_double(c.q_ground), format_double(c.q_shallow),
               format_double(c.area_surface)});
    }
}

}  // namespace catchstat

#endif  // CATCHSTAT_NETWORK_HPP
