#ifndef CATCHSTAT_SOURCEMODEL_HPP
#define CATCHSTAT_SOURCEMODEL_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "catchstat/math.hpp"
#include "catchstat/network.hpp"

namespace catchstat {

/// Per-catchment source factors, aligned to network input order. The
/// reference factor x0 carries no free coefficient; each extra factor k is
/// weighted by the relative coefficient beta'_k.
class SourceDesign {
public:
    SourceDesign() = default;

    SourceDesign(const CatchmentNetwork& net, std::vector<double> x0,
                 std::vector<std::vector<double>> factors, std::vector<std::string> names)
        : x0_(std::move(x0)), factors_(std::move(factors)), names_(std::move(names)) {
        const std::size_t n = net.size();
        ids_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) ids_.push_back(net.id(i));
        if (x0_.size() != n)
            throw InvalidDesign("reference factor column has " + std::to_string(x0_.size()) +
                                " entries for " + std::to_string(n) + " catchments");
        if (factors_.size() != names_.size())
            throw InvalidDesign("factor count does not match factor name count");
        for (std::size_t i = 0; i < n; ++i)
            if (!(x0_[i] > 0.0))
                throw InvalidDesign("reference factor must be positive; catchment " + ids_[i]);
        for (std::size_t k = 0; k < factors_.size(); ++k) {
            if (factors_[k].size() != n)
                throw InvalidDesign("factor " + names_[k] + " has wrong length");
            for (std::size_t i = 0; i < n; ++i)
                if (factors_[k][i] < 0.0)
                    throw InvalidDesign("factor " + names_[k] + " is negative at catchment " +
                                        ids_[i]);
        }
    }

    /// Number of non-reference factors (P).
    std::size_t factor_count() const { return factors_.size(); }
    std::size_t size() const { return x0_.size(); }

    double x0(std::size_t i) const { return x0_[i]; }
    double factor(std::size_t k, std::size_t i) const { return factors_[k][i]; }
    const std::vector<std::string>& factor_names() const { return names_; }
    const std::vector<std::string>& ids() const { return ids_; }

    /// Uniform inflow template: x0 = Qg + Qs, no extra factors.
    static SourceDesign single_source(const CatchmentNetwork& net) {
        std::vector<double> x0(net.size());
        for (std::size_t i = 0; i < net.size(); ++i)
            x0[i] = net.catchment(i).q_ground + net.catchment(i).q_shallow;
        return SourceDesign(net, std::move(x0), {}, {});
    }

    /// Groundwater split template: x0 = Qs, x1 = Qg * Cg. Catchments whose
    /// groundwater concentration is unknown get x1 = 0 and are listed in
    /// `missing` so callers can log the fallback.
    static SourceDesign two_source(const CatchmentNetwork& net,
                                   const std::vector<std::optional<double>>& cg,
                                   std::vector<std::string>* missing = nullptr) {
        const std::size_t n = net.size();
        if (cg.size() != n)
            throw InvalidDesign("groundwater concentration vector has wrong length");
        std::vector<double> x0(n), x1(n);
        for (std::size_t i = 0; i < n; ++i) {
            x0[i] = net.catchment(i).q_shallow;
            if (cg[i]) {
                x1[i] = net.catchment(i).q_ground * *cg[i];
            } else {
                x1[i] = 0.0;
                if (missing) missing->push_back(net.id(i));
            }
        }
        return SourceDesign(net, std::move(x0), {std::move(x1)}, {"x_groundwater"});
    }

private:
    std::vector<double> x0_;
    std::vector<std::vector<double>> factors_;  // [k][catchment]
    std::vector<std::string> names_;
    std::vector<std::string> ids_;
};

/// Reads a design CSV: id, x0, then one column per extra factor, named by
/// the header. Rows are matched to the network by id.
inline SourceDesign read_design_csv(const CatchmentNetwork& net, const std::string& path) {
    const auto t = csv::read_file(path);
    const int c_id = t.require_column("id", path);
    const int c_x0 = t.require_column("x0", path);
    std::vector<int> factor_cols;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (static_cast<int>(c) == c_id || static_cast<int>(c) == c_x0) continue;
        factor_cols.push_back(static_cast<int>(c));
        names.push_back(t.header[c]);
    }

    const std::size_t n = net.size();
    std::vector<double> x0(n, -1.0);
    std::vector<std::vector<double>> factors(names.size(), std::vector<double>(n, 0.0));
    for (const auto& r : t.rows) {
        const auto idx = net.index_of(r[c_id]);
        if (!idx) throw UnknownCatchment(r[c_id]);
        x0[*idx] = csv::parse_double(r[c_x0], path);
        for (std::size_t k = 0; k < factor_cols.size(); ++k)
            factors[k][*idx] = csv::parse_double(r[factor_cols[k]], path);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (x0[i] < 0.0)
            throw InvalidDesign("design file " + path + " has no row for catchment " + net.id(i));
    return SourceDesign(net, std::move(x0), std::move(factors), std::move(names));
}

inline void write_design_csv(const CatchmentNetwork& net, const SourceDesign& design,
                             const std::string& path) {
    csv::Writer w(path);
    w.comment("source design; x0 is the reference factor");
    std::vector<std::string> header{"id", "x0"};
    for (const auto& name : design.factor_names()) header.push_back(name);
    w.row(header);
    for (std::size_t i = 0; i < net.size(); ++i) {
        std::vector<std::string> row{net.id(i), format_double(design.x0(i))};
        for (std::size_t k = 0; k < design.factor_count(); ++k)
            row.push_back(format_double(design.factor(k, i)));
        w.row(row);
    }
}

/// Fixed effects and variance components, stored on the unconstrained log
/// scale so every natural value is positive by construction.
struct ParameterSet {
    double log_sigma0 = 0.0;
    double log_sigmap = 0.0;
    double log_sigmay = 0.0;
    double log_theta = 0.0;
    double log_beta0 = 0.0;
    std::vector<double> log_betak;  // relative source coefficients, one per extra factor

    double sigma0() const { return std::exp(log_sigma0); }
    double sigmap() const { return std::exp(log_sigmap); }
    double sigmay() const { return std::exp(log_sigmay); }
    double theta() const { return std::exp(log_theta); }
    double beta0() const { return std::exp(log_beta0); }
    double betak(std::size_t k) const { return std::exp(log_betak[k]); }

    static ParameterSet from_natural(double beta0, const std::vector<double>& betak,
                                     double theta, double sigma0, double sigmap,
                                     double sigmay) {
        ParameterSet p;
        p.log_beta0 = std::log(beta0);
        p.log_theta = std::log(theta);
        p.log_sigma0 = std::log(sigma0);
        p.log_sigmap = std::log(sigmap);
        p.log_sigmay = std::log(sigmay);
        p.log_betak.reserve(betak.size());
        for (double b : betak) p.log_betak.push_back(std::log(b));
        return p;
    }

    std::size_t dim() const { return 5 + log_betak.size(); }

    /// Flat internal vector in reporting order:
    /// [sigma0, sigmap, sigmay, theta, beta0, betak...] (all logs).
    std::vector<double> pack() const {
        std::vector<double> u{log_sigma0, log_sigmap, log_sigmay, log_theta, log_beta0};
        u.insert(u.end(), log_betak.begin(), log_betak.end());
        return u;
    }

    static ParameterSet unpack(const std::vector<double>& u, std::size_t n_factors) {
        ParameterSet p;
        p.log_sigma0 = u[0];
        p.log_sigmap = u[1];
        p.log_sigmay = u[2];
        p.log_theta = u[3];
        p.log_beta0 = u[4];
        p.log_betak.assign(u.begin() + 5, u.begin() + 5 + n_factors);
        return p;
    }

    static std::vector<std::string> names(std::size_t n_factors) {
        std::vector<std::string> out{"sigma0", "sigmap", "sigmay", "theta", "beta0"};
        for (std::size_t k = 0; k < n_factors; ++k)
            out.push_back("beta_prime_" + std::to_string(k + 1));
        return out;
    }
};

/// Latent field: one residual per sub-catchment (sampled or not) and one
/// effect per observed calendar year.
struct LatentState {
    std::vector<double> eps;    // network input order
    std::vector<double> delta;  // sorted distinct years

    static LatentState zeros(std::size_t n_catchments, std::size_t n_years) {
        LatentState s;
        s.eps.assign(n_catchments, 0.0);
        s.delta.assign(n_years, 0.0);
        return s;
    }
};

/// Scaled source sum S_i = x0_i + sum_k beta'_k * x_{k,i}; the bracket that
/// multiplies beta0 in the source term. Strictly positive.
inline double source_term(const ParameterSet& params, const SourceDesign& design,
                          std::size_t i) {
    if (i >= design.size()) throw UnknownCatchment(std::to_string(i));
    double s = design.x0(i);
    for (std::size_t k = 0; k < design.factor_count(); ++k)
        s += params.betak(k) * design.factor(k, i);
    return s;
}

inline double source_term(const ParameterSet& params, const SourceDesign& design,
                          const CatchmentNetwork& net, const std::string& id) {
    const auto idx = net.index_of(id);
    if (!idx) throw UnknownCatchment(id);
    return source_term(params, design, *idx);
}

struct Propagation {
    std::vector<double> lc;  // log outlet concentration per catchment
    std::vector<double> c;   // exp(lc)
};

/// Level-ordered steady-state propagation of expected log-concentrations.
/// Residuals enter before the downstream sums, so the realized
/// (residual-bearing) mass is what flows on. The inner log falls back to a
/// log-sum-exp evaluation when straight accumulation overflows.
inline void propagate_into(const CatchmentNetwork& net, const SourceDesign& design,
                           const ParameterSet& params, const LatentState& latent,
                           Propagation& out) {
    const std::size_t n = net.size();
    const double beta0 = params.beta0();
    const double log_beta0 = params.log_beta0;
    const double theta = params.theta();
    out.lc.resize(n);
    out.c.resize(n);

    std::vector<double> log_terms;
    for (std::size_t i : net.order()) {
        const auto& cat = net.catchment(i);
        const double s_i = source_term(params, design, i);
        double upstream = 0.0;
        for (std::size_t j : net.upstream(i)) upstream += out.c[j] * net.catchment(j).q_total;

        const double ratio = theta * cat.area_surface / cat.q_total;
        double inner = upstream / beta0 + s_i;
        double log_inner;
        if (std::isfinite(inner) && inner > 0.0) {
            log_inner = std::log(inner);
        } else {
            // Magnitudes span the double range; assemble the log directly.
            log_terms.clear();
            for (std::size_t j : net.upstream(i))
                log_terms.push_back(out.lc[j] + std::log(net.catchment(j).q_total) - log_beta0);
            log_terms.push_back(std::log(s_i));
            log_inner = logsumexp(log_terms);
        }

        const double lc = log_inner - std::log(cat.q_total) + log_beta0 - std::log1p(ratio) +
                          latent.eps[i];
        if (std::isnan(lc) || lc == std::numeric_limits<double>::infinity())
            throw NonFiniteResult(cat.id);
        out.lc[i] = lc;
        out.c[i] = std::exp(lc);
    }
}

inline Propagation propagate(const CatchmentNetwork& net, const SourceDesign& design,
                             const ParameterSet& params, const LatentState& latent) {
    Propagation out;
    propagate_into(net, design, params, latent, out);
    return out;
}

struct RemovalFluxes {
    std::vector<double> flux;  // theta * A_i * C_i, mass/time
    double total = 0.0;
};

/// First-order retention flux per catchment and its network total.
inline RemovalFluxes removal_fluxes(const CatchmentNetwork& net, const SourceDesign& design,
                                    const ParameterSet& params, const LatentState& latent) {
    const Propagation prop = propagate(net, design, params, latent);
    RemovalFluxes out;
    out.flux.resize(net.size());
    const double theta = params.theta();
    std::vector<double> terms(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) {
        out.flux[i] = theta * net.catchment(i).area_surface * prop.c[i];
        terms[i] = out.flux[i];
    }
    out.total = pairwise_sum(terms);
    return out;
}

}  // namespace catchstat

#endif  // CATCHSTAT_SOURCEMODEL_HPP
