#ifndef CATCHSTAT_CROSSVAL_HPP
#define CATCHSTAT_CROSSVAL_HPP

#include <algorithm>
#include <future>
#include <string>
#include <vector>

#include "catchstat/laplace.hpp"
#include "catchstat/math.hpp"
#include "catchstat/predict.hpp"
#include "catchstat/rng.hpp"

namespace catchstat {

struct CvPlan {
    std::vector<std::vector<std::string>> folds;  // disjoint cover of the sampled set
    std::uint64_t seed = 0;
    std::size_t k = 0;
};

/// Seeded uniform shuffle of the sampled ids followed by a round-robin
/// split, so fold sizes differ by at most one.
inline CvPlan make_folds(std::vector<std::string> sampled, std::size_t k, std::uint64_t seed) {
    if (k < 2 || sampled.size() < k) throw TooFewSampled(sampled.size(), k);
    std::sort(sampled.begin(), sampled.end());  // input-order independence
    Rng rng(seed);
    rng.shuffle(sampled);

    CvPlan plan;
    plan.seed = seed;
    plan.k = k;
    plan.folds.assign(k, {});
    for (std::size_t i = 0; i < sampled.size(); ++i)
        plan.folds[i % k].push_back(sampled[i]);
    return plan;
}

struct CvPair {
    std::string catchment;
    std::size_t fold = 0;
    double lc_with = 0.0;     // prediction from the full fit
    double lc_without = 0.0;  // prediction from the fit excluding this fold
};

struct FoldDiagnostics {
    std::size_t fold = 0;
    bool completed = false;
    bool converged = false;
    double marginal_nll = 0.0;
    int outer_iterations = 0;
    std::string error;
};

struct CvResult {
    std::vector<CvPair> pairs;  // one per sampled catchment in a completed fold
    double r2 = 0.0;            // squared Pearson correlation on the log scale
    std::vector<FoldDiagnostics> fold_diagnostics;
    bool complete = true;       // false when some fold's fit failed
    FitResult full_fit;
};

/// One full fit plus k reduced fits, each excluding every measurement from
/// one fold's catchments. All parameters are re-estimated per fold. Folds
/// are independent, so they may run on several threads; assembly is by fold
/// index either way.
inline CvResult run_cv(const MeasurementSet& data, const CatchmentNetwork& net,
                       const SourceDesign& design, const CvPlan& plan,
                       const FitConfig& config = {}, unsigned threads = 1) {
    FitConfig fold_config = config;
    fold_config.compute_latent_sd = false;

    CvResult result;
    result.full_fit = fit(data, net, design, config);
    const Propagation full_prop =
        propagate(net, design, result.full_fit.params_hat, result.full_fit.latent_hat);

    struct FoldOutcome {
        FoldDiagnostics diag;
        std::vector<CvPair> pairs;
    };

    auto run_fold = [&](std::size_t f) {
        FoldOutcome out;
        out.diag.fold = f;
        try {
            const MeasurementSet reduced = data.excluding(net, plan.folds[f]);
            const FitResult fold_fit = fit(reduced, net, design, fold_config);
            const Propagation prop =
                propagate(net, design, fold_fit.params_hat, fold_fit.latent_hat);
            for (const auto& id : plan.folds[f]) {
                const std::size_t i = net.require_index(id);
                CvPair pair;
                pair.catchment = id;
                pair.fold = f;
                pair.lc_with = full_prop.lc[i];
                pair.lc_without = prop.lc[i];
                out.pairs.push_back(std::move(pair));
            }
            out.diag.completed = true;
            out.diag.converged = fold_fit.converged;
            out.diag.marginal_nll = fold_fit.marginal_nll;
            out.diag.outer_iterations = fold_fit.iterations.outer;
        } catch (const std::exception& e) {
            out.diag.completed = false;
            out.diag.error = e.what();
        }
        return out;
    };

    std::vector<FoldOutcome> outcomes(plan.k);
    if (threads <= 1) {
        for (std::size_t f = 0; f < plan.k; ++f) outcomes[f] = run_fold(f);
    } else {
        std::vector<std::future<FoldOutcome>> futures(plan.k);
        std::size_t next = 0;
        while (next < plan.k) {
            const std::size_t batch = std::min<std::size_t>(threads, plan.k - next);
            for (std::size_t b = 0; b < batch; ++b)
                futures[next + b] =
                    std::async(std::launch::async, run_fold, next + b);
            for (std::size_t b = 0; b < batch; ++b)
                outcomes[next + b] = futures[next + b].get();
            next += batch;
        }
    }

    for (auto& out : outcomes) {
        if (!out.diag.completed) result.complete = false;
        result.fold_diagnostics.push_back(out.diag);
        for (auto& p : out.pairs) result.pairs.push_back(std::move(p));
    }

    std::vector<double> with, without;
    with.reserve(result.pairs.size());
    without.reserve(result.pairs.size());
    for (const auto& p : result.pairs) {
        with.push_back(p.lc_with);
        without.push_back(p.lc_without);
    }
    result.r2 = pearson_r2(with, without);
    return result;
}

inline void write_cv_pairs_csv(const CvResult& result, const std::string& path) {
    csv::Writer w(path);
    w.comment("paired log-concentration predictions per held-out catchment");
    w.row({"catchment_id", "lc_with", "lc_without", "fold"});
    for (const auto& p : result.pairs)
        w.row({p.catchment, format_double(p.lc_with), format_double(p.lc_without),
               std::to_string(p.fold)});
}

}  // namespace catchstat

#endif  // CATCHSTAT_CROSSVAL_HPP
