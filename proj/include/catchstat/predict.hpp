#ifndef CATCHSTAT_PREDICT_HPP
#define CATCHSTAT_PREDICT_HPP

#include <cmath>
#include <string>
#include <vector>

#include "catchstat/laplace.hpp"
#include "catchstat/network.hpp"
#include "catchstat/sourcemodel.hpp"

namespace catchstat {

/// Mass-rate outputs are concentration * discharge, i.e. (ug/l)*(m^3/d);
/// multiply by this to get kg/day.
inline constexpr double kMassRateToKgPerDay = 1e-6;

struct PredictionRecord {
    std::string catchment;
    double lc_hat = 0.0;        // predicted log concentration
    double c_hat = 0.0;         // ug/l
    double sd_lc = 0.0;         // approximate latent sd (NaN when unavailable)
    bool sampled = false;
    double outflow_mass = 0.0;  // C_i * Q_i
    double retained_mass = 0.0; // theta * A_i * C_i
};

/// Per-catchment predictions at the posterior modes. Unsampled catchments
/// carry their mode residual, shrunk toward zero unless informed through
/// connected measurements.
inline std::vector<PredictionRecord> predict_all(const FitResult& fit,
                                                 const CatchmentNetwork& net,
                                                 const SourceDesign& design) {
    const Propagation prop = propagate(net, design, fit.params_hat, fit.latent_hat);
    const double theta = fit.params_hat.theta();
    std::vector<PredictionRecord> out;
    out.reserve(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) {
        PredictionRecord r;
        r.catchment = net.id(i);
        r.lc_hat = prop.lc[i];
        r.c_hat = prop.c[i];
        r.sd_lc = i < fit.sd_lc.size() ? fit.sd_lc[i]
                                       : std::numeric_limits<double>::quiet_NaN();
        r.sampled = i < fit.sampled.size() && fit.sampled[i] != 0;
        r.outflow_mass = r.c_hat * net.catchment(i).q_total;
        r.retained_mass = theta * net.catchment(i).area_surface * r.c_hat;
        out.push_back(std::move(r));
    }
    return out;
}

struct MassBudget {
    double marine_export = 0.0;   // sum over marine outlets of C*Q
    double total_retained = 0.0;  // sum of theta*A*C
    double total_input = 0.0;     // marine_export + total_retained
    std::vector<std::string> source_names;   // reference first
    std::vector<double> per_source_input;    // beta0 * sum_i of each source component
};

/// Network-scale mass budget at the fitted state. The per-source split is a
/// property of the source model alone (no residuals), so it adds up to
/// total_input only when the residual field is zero.
inline MassBudget mass_budget(const FitResult& fit, const CatchmentNetwork& net,
                              const SourceDesign& design) {
    const Propagation prop = propagate(net, design, fit.params_hat, fit.latent_hat);
    const double theta = fit.params_hat.theta();
    const double beta0 = fit.params_hat.beta0();

    MassBudget budget;
    std::vector<double> marine, retained;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (!net.downstream(i)) marine.push_back(prop.c[i] * net.catchment(i).q_total);
        retained.push_back(theta * net.catchment(i).area_surface * prop.c[i]);
    }
    budget.marine_export = pairwise_sum(marine);
    budget.total_retained = pairwise_sum(retained);
    budget.total_input = budget.marine_export + budget.total_retained;

    budget.source_names.push_back("reference");
    std::vector<double> terms(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) terms[i] = beta0 * design.x0(i);
    budget.per_source_input.push_back(pairwise_sum(terms));
    for (std::size_t k = 0; k < design.factor_count(); ++k) {
        budget.source_names.push_back(design.factor_names()[k]);
        const double bk = fit.params_hat.betak(k);
        for (std::size_t i = 0; i < net.size(); ++i)
            terms[i] = beta0 * bk * design.factor(k, i);
        budget.per_source_input.push_back(pairwise_sum(terms));
    }
    return budget;
}

struct YearEffect {
    int year = 0;
    double delta = 0.0;
    double lower = 0.0;  // delta - 1.96 * sigma_Y
    double upper = 0.0;
};

inline std::vector<YearEffect> year_effects(const FitResult& fit) {
    const double band = 1.96 * fit.params_hat.sigmay();
    std::vector<YearEffect> out;
    out.reserve(fit.years.size());
    for (std::size_t y = 0; y < fit.years.size(); ++y) {
        YearEffect e;
        e.year = fit.years[y];
        e.delta = fit.latent_hat.delta[y];
        e.lower = e.delta - band;
        e.upper = e.delta + band;
        out.push_back(e);
    }
    return out;
}

/// Standard deviation explained by a nested model refinement:
/// sqrt(sigma_p1^2 - sigma_p2^2).
inline double variance_decomposition(double sigma_p1, double sigma_p2) {
    if (sigma_p2 > sigma_p1) throw NegativeExplainedVariance(sigma_p1, sigma_p2);
    return std::sqrt(sigma_p1 * sigma_p1 - sigma_p2 * sigma_p2);
}

inline void write_predictions_csv(const std::vector<PredictionRecord>& records,
                                  const std::string& path) {
    csv::Writer w(path);
    w.comment("per-catchment predictions; c_hat in ug/l");
    w.comment("mass columns in (ug/l)*(m^3/d); multiply by 1e-6 for kg/day");
    w.row({"catchment_id", "lc_hat", "c_hat", "sd_lc", "sampled", "outflow_mass",
           "retained_mass"});
    for (const auto& r : records) {
        w.row({r.catchment, format_double(r.lc_hat), format_double(r.c_hat),
               format_double(r.sd_lc), r.sampled ? "1" : "0", format_double(r.outflow_mass),
               format_double(r.retained_mass)});
    }
}

inline void write_year_effects_csv(const std::vector<YearEffect>& effects,
                                   const std::string& path) {
    csv::Writer w(path);
    w.comment("year effects on the log scale with a 95% band (+-1.96*sigma_Y)");
    w.row({"year", "delta", "lower", "upper"});
    for (const auto& e : effects)
        w.row({std::to_string(e.year), format_double(e.delta), format_double(e.lower),
               format_double(e.upper)});
}

}  // namespace catchstat

#endif  // CATCHSTAT_PREDICT_HPP
