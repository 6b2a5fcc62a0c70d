#ifndef CATCHSTAT_SERIALIZE_HPP
#define CATCHSTAT_SERIALIZE_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catchstat/crossval.hpp"
#include "catchstat/laplace.hpp"
#include "catchstat/network.hpp"
#include "catchstat/predict.hpp"

namespace catchstat {

using Json = nlohmann::ordered_json;

inline void write_json_file(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing: " + path);
    out << j.dump(2) << "\n";
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    return Json::parse(in);
}

/// FNV-1a 64-bit content hash, used to pin input files in run manifests.
inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    char out[19];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

inline Json fit_result_to_json(const FitResult& fit, const CatchmentNetwork& net,
                               const SourceDesign& design) {
    Json parameters = Json::array();
    for (std::size_t k = 0; k < fit.param_names.size(); ++k) {
        Json row;
        row["name"] = fit.param_names[k];
        row["estimate"] = fit.estimate[k];
        if (std::isfinite(fit.se[k])) {
            row["se"] = fit.se[k];
            row["tfactor"] = fit.tfactor[k];
        } else {
            row["se"] = nullptr;
            row["tfactor"] = nullptr;
        }
        parameters.push_back(std::move(row));
    }
    // Derived absolute source coefficients beta_k = beta0 * beta'_k.
    Json derived = Json::array();
    for (std::size_t k = 0; k < design.factor_count(); ++k) {
        Json row;
        row["name"] = "beta_" + std::to_string(k + 1);
        row["estimate"] = fit.params_hat.beta0() * fit.params_hat.betak(k);
        derived.push_back(std::move(row));
    }

    Json j;
    j["parameters"] = std::move(parameters);
    j["derived"] = std::move(derived);
    j["factor_names"] = design.factor_names();
    j["internal"] = fit.params_hat.pack();
    j["diagnostics"] = {{"converged", fit.converged},
                        {"marginal_nll", fit.marginal_nll},
                        {"grad_norm", fit.grad_norm},
                        {"outer_iterations", fit.iterations.outer},
                        {"inner_iterations_total", fit.iterations.inner_total},
                        {"nll_evaluations", fit.iterations.nll_evaluations},
                        {"hessian_logdet", fit.hessian_logdet},
                        {"se_available", fit.se_available}};
    j["years"] = fit.years;
    j["latent"] = {{"catchment_ids", Json::array()},
                   {"eps", fit.latent_hat.eps},
                   {"delta", fit.latent_hat.delta},
                   {"sd_lc", fit.sd_lc},
                   {"sampled", Json::array()}};
    for (std::size_t i = 0; i < net.size(); ++i) {
        j["latent"]["catchment_ids"].push_back(net.id(i));
        j["latent"]["sampled"].push_back(fit.sampled[i] != 0);
    }
    return j;
}

inline FitResult fit_result_from_json(const Json& j, const CatchmentNetwork& net) {
    FitResult fit;
    const std::vector<double> internal = j.at("internal").get<std::vector<double>>();
    const std::size_t n_factors = internal.size() - 5;
    fit.params_hat = ParameterSet::unpack(internal, n_factors);
    fit.param_names = ParameterSet::names(n_factors);

    fit.estimate.resize(internal.size());
    fit.se.assign(internal.size(), std::numeric_limits<double>::quiet_NaN());
    fit.tfactor.assign(internal.size(), std::numeric_limits<double>::quiet_NaN());
    const auto& parameters = j.at("parameters");
    for (std::size_t k = 0; k < parameters.size() && k < internal.size(); ++k) {
        fit.estimate[k] = parameters[k].at("estimate").get<double>();
        if (!parameters[k].at("se").is_null()) {
            fit.se[k] = parameters[k].at("se").get<double>();
            fit.tfactor[k] = parameters[k].at("tfactor").get<double>();
        }
    }

    const auto& diag = j.at("diagnostics");
    fit.converged = diag.at("converged").get<bool>();
    fit.marginal_nll = diag.at("marginal_nll").get<double>();
    fit.grad_norm = diag.at("grad_norm").get<double>();
    fit.iterations.outer = diag.at("outer_iterations").get<int>();
    fit.iterations.inner_total = diag.at("inner_iterations_total").get<int>();
    fit.iterations.nll_evaluations = diag.at("nll_evaluations").get<int>();
    fit.hessian_logdet = diag.at("hessian_logdet").get<double>();
    fit.se_available = diag.at("se_available").get<bool>();
    fit.years = j.at("years").get<std::vector<int>>();

    const auto& latent = j.at("latent");
    const auto ids = latent.at("catchment_ids").get<std::vector<std::string>>();
    if (ids.size() != net.size())
        throw IoError("fit file covers " + std::to_string(ids.size()) +
                      " catchments but the network has " + std::to_string(net.size()));
    const auto eps = latent.at("eps").get<std::vector<double>>();
    const auto sd = latent.at("sd_lc").get<std::vector<double>>();
    const auto sampled = latent.at("sampled").get<std::vector<bool>>();
    fit.latent_hat.eps.resize(net.size());
    fit.sd_lc.assign(net.size(), std::numeric_limits<double>::quiet_NaN());
    fit.sampled.assign(net.size(), 0);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const std::size_t i = net.require_index(ids[k]);
        fit.latent_hat.eps[i] = eps[k];
        if (k < sd.size()) fit.sd_lc[i] = sd[k];
        fit.sampled[i] = sampled[k] ? 1 : 0;
    }
    fit.latent_hat.delta = latent.at("delta").get<std::vector<double>>();
    return fit;
}

inline Json budget_to_json(const MassBudget& budget) {
    Json j;
    j["marine_export"] = budget.marine_export;
    j["total_retained"] = budget.total_retained;
    j["total_input"] = budget.total_input;
    Json per_source;
    for (std::size_t k = 0; k < budget.source_names.size(); ++k)
        per_source[budget.source_names[k]] = budget.per_source_input[k];
    j["per_source_input"] = std::move(per_source);
    j["units"] = {{"mass_rate", "(ug/l)*(m^3/d)"},
                  {"kg_per_day_factor", kMassRateToKgPerDay},
                  {"note", "per_source_input adds up to total_input only with a zero "
                           "residual field"}};
    return j;
}

inline Json cv_summary_to_json(const CvResult& cv) {
    Json folds = Json::array();
    for (const auto& d : cv.fold_diagnostics) {
        Json row;
        row["fold"] = d.fold;
        row["completed"] = d.completed;
        row["converged"] = d.converged;
        row["marginal_nll"] = d.marginal_nll;
        row["outer_iterations"] = d.outer_iterations;
        if (!d.error.empty()) row["error"] = d.error;
        folds.push_back(std::move(row));
    }
    Json j;
    j["r2"] = cv.r2;
    j["pairs"] = cv.pairs.size();
    j["complete"] = cv.complete;
    if (!cv.complete) j["warning"] = "r2 computed on completed folds only";
    j["folds"] = std::move(folds);
    return j;
}

}  // namespace catchstat

#endif  // CATCHSTAT_SERIALIZE_HPP
