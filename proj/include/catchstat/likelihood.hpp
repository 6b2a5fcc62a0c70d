#ifndef CATCHSTAT_LIKELIHOOD_HPP
#define CATCHSTAT_LIKELIHOOD_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "catchstat/math.hpp"
#include "catchstat/network.hpp"
#include "catchstat/sourcemodel.hpp"

namespace catchstat {

/// A single concentration sample at a sub-catchment outlet. `value` is
/// meaningful only when the sample is not censored; censored samples are
/// known only to lie below their detection limit.
struct Measurement {
    std::string catchment;
    int year = 0;
    int replicate = 0;
    double value = 0.0;            // ug/l
    double detection_limit = 0.0;  // ug/l
    bool censored = false;
};

/// Measurements bound to a network: ids resolved, years indexed, log values
/// precomputed. Rows are stored in a canonical content order so that any
/// permutation of the input (replicate relabelling included) produces a
/// bit-identical likelihood.
class MeasurementSet {
public:
    MeasurementSet() = default;

    MeasurementSet(const CatchmentNetwork& net, std::vector<Measurement> measurements) {
        for (auto& m : measurements) {
            if (!(m.detection_limit > 0.0))
                throw InvalidMeasurement("catchment " + m.catchment +
                                         ": detection limit must be positive");
            if (!m.censored && m.value < m.detection_limit)
                throw InvalidMeasurement("catchment " + m.catchment + " year " +
                                         std::to_string(m.year) +
                                         ": uncensored value below its detection limit");
            if (!net.index_of(m.catchment))
                throw UnknownCatchment(m.catchment);
        }

        std::sort(measurements.begin(), measurements.end(),
                  [](const Measurement& a, const Measurement& b) {
                      return std::tie(a.catchment, a.year, a.censored, a.value,
                                      a.detection_limit) <
                             std::tie(b.catchment, b.year, b.censored, b.value,
                                      b.detection_limit);
                  });
        int rep = 0;
        for (std::size_t i = 0; i < measurements.size(); ++i) {
            if (i > 0 && measurements[i].catchment == measurements[i - 1].catchment &&
                measurements[i].year == measurements[i - 1].year)
                ++rep;
            else
                rep = 0;
            measurements[i].replicate = rep;
        }
        measurements_ = std::move(measurements);

        for (const auto& m : measurements_) years_.push_back(m.year);
        std::sort(years_.begin(), years_.end());
        years_.erase(std::unique(years_.begin(), years_.end()), years_.end());

        for (const auto& m : measurements_) sampled_.push_back(m.catchment);
        std::sort(sampled_.begin(), sampled_.end());
        sampled_.erase(std::unique(sampled_.begin(), sampled_.end()), sampled_.end());

        obs_catchment_.reserve(measurements_.size());
        obs_year_.reserve(measurements_.size());
        obs_logval_.reserve(measurements_.size());
        obs_censored_.reserve(measurements_.size());
        for (const auto& m : measurements_) {
            obs_catchment_.push_back(*net.index_of(m.catchment));
            obs_year_.push_back(static_cast<std::size_t>(
                std::lower_bound(years_.begin(), years_.end(), m.year) - years_.begin()));
            obs_logval_.push_back(std::log(m.censored ? m.detection_limit : m.value));
            obs_censored_.push_back(m.censored ? 1 : 0);
        }

        catchment_sampled_.assign(net.size(), 0);
        for (std::size_t c : obs_catchment_) catchment_sampled_[c] = 1;
    }

    std::size_t size() const { return measurements_.size(); }
    const std::vector<Measurement>& measurements() const { return measurements_; }
    const std::vector<int>& years() const { return years_; }
    const std::vector<std::string>& sampled_catchments() const { return sampled_; }

    std::size_t obs_catchment(std::size_t o) const { return obs_catchment_[o]; }
    std::size_t obs_year(std::size_t o) const { return obs_year_[o]; }
    double obs_logval(std::size_t o) const { return obs_logval_[o]; }
    bool obs_censored(std::size_t o) const { return obs_censored_[o] != 0; }
    bool is_sampled(std::size_t catchment_index) const {
        return catchment_sampled_[catchment_index] != 0;
    }

    /// Subset without any measurement from the given catchment ids (used by
    /// cross-validation folds).
    MeasurementSet excluding(const CatchmentNetwork& net,
                             const std::vector<std::string>& held_out) const {
        std::vector<Measurement> keep;
        keep.reserve(measurements_.size());
        for (const auto& m : measurements_) {
            if (std::find(held_out.begin(), held_out.end(), m.catchment) == held_out.end())
                keep.push_back(m);
        }
        return MeasurementSet(net, std::move(keep));
    }

private:
    std::vector<Measurement> measurements_;
    std::vector<int> years_;
    std::vector<std::string> sampled_;
    std::vector<std::size_t> obs_catchment_;
    std::vector<std::size_t> obs_year_;
    std::vector<double> obs_logval_;
    std::vector<std::uint8_t> obs_censored_;
    std::vector<std::uint8_t> catchment_sampled_;
};

/// Log-likelihood contribution of one sample: normal density of the log
/// value when observed, normal CDF at the log detection limit when censored.
inline double obs_loglik(double log_value_or_log_dl, double mean, double sigma0,
                         bool censored) {
    if (std::isnan(log_value_or_log_dl) || std::isnan(mean) || std::isnan(sigma0))
        throw NonFinite("obs_loglik received a NaN input");
    if (censored) return normal_logcdf(log_value_or_log_dl, mean, sigma0);
    return normal_logpdf(log_value_or_log_dl, mean, sigma0);
}

namespace detail {

/// Observation, residual-prior, and year-prior parts of the joint negative
/// log-likelihood given a finished propagation. Summed pairwise in canonical
/// order so the reduction is reproducible.
inline double joint_nll_terms(const CatchmentNetwork& net, const ParameterSet& params,
                              const LatentState& latent, const MeasurementSet& data,
                              const Propagation& prop, std::vector<double>& scratch) {
    const double sigma0 = params.sigma0();
    const double sigmap = params.sigmap();
    const double sigmay = params.sigmay();

    scratch.clear();
    scratch.reserve(data.size() + net.size() + latent.delta.size());
    for (std::size_t o = 0; o < data.size(); ++o) {
        const double mean = prop.lc[data.obs_catchment(o)] + latent.delta[data.obs_year(o)];
        const double x = data.obs_logval(o);
        scratch.push_back(data.obs_censored(o) ? -normal_logcdf(x, mean, sigma0)
                                               : -normal_logpdf(x, mean, sigma0));
    }
    for (double e : latent.eps) scratch.push_back(-normal_logpdf(e, 0.0, sigmap));
    for (double d : latent.delta) scratch.push_back(-normal_logpdf(d, 0.0, sigmay));
    return pairwise_sum(scratch);
}

}  // namespace detail

/// Joint negative log-likelihood: censored log-normal measurement terms plus
/// Gaussian priors on every catchment residual and every year effect.
/// Unsampled catchments contribute only their prior, which is what lets
/// measurements inform them through the propagated mass balance.
inline double joint_nll(const CatchmentNetwork& net, const SourceDesign& design,
                        const ParameterSet& params, const LatentState& latent,
                        const MeasurementSet& data) {
    const Propagation prop = propagate(net, design, params, latent);
    std::vector<double> scratch;
    return detail::joint_nll_terms(net, params, latent, data, prop, scratch);
}

/// Reads the measurement CSV: catchment_id, year, value, detection_limit,
/// censored (0/1). The value column is ignored on censored rows.
inline std::vector<Measurement> read_measurements_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const int c_id = t.require_column("catchment_id", path);
    const int c_year = t.require_column("year", path);
    const int c_val = t.require_column("value", path);
    const int c_dl = t.require_column("detection_limit", path);
    const int c_cen = t.require_column("censored", path);

    std::vector<Measurement> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        Measurement m;
        m.catchment = r[c_id];
        m.year = static_cast<int>(csv::parse_long(r[c_year], path));
        m.detection_limit = csv::parse_double(r[c_dl], path);
        const long cen = csv::parse_long(r[c_cen], path);
        if (cen != 0 && cen != 1) throw IoError(path + ": censored flag must be 0 or 1");
        m.censored = cen == 1;
        m.value = m.censored ? 0.0 : csv::parse_double(r[c_val], path);
        out.push_back(std::move(m));
    }
    return out;
}

inline void write_measurements_csv(const std::vector<Measurement>& measurements,
                                   const std::string& path) {
    csv::Writer w(path);
    w.comment("concentration samples; value and detection_limit in ug/l");
    w.comment("censored=1 means reported below the detection limit (value column ignored)");
    w.row({"catchment_id", "year", "value", "detection_limit", "censored"});
    for (const auto& m : measurements) {
        w.row({m.catchment, std::to_string(m.year), format_double(m.value),
               format_double(m.detection_limit), m.censored ? "1" : "0"});
    }
}

}  // namespace catchstat

#endif  // CATCHSTAT_LIKELIHOOD_HPP
