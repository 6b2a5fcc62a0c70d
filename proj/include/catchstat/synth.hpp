#ifndef CATCHSTAT_SYNTH_HPP
#define CATCHSTAT_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "catchstat/laplace.hpp"
#include "catchstat/likelihood.hpp"
#include "catchstat/math.hpp"
#include "catchstat/network.hpp"
#include "catchstat/rng.hpp"
#include "catchstat/sourcemodel.hpp"

namespace catchstat {

/// Recipe for a synthetic dataset with known truth. Shapes are plausible,
/// not calibrated to any real hydrology.
struct SynthSpec {
    enum class Template { SingleSource, TwoSource };

    std::size_t n_catchments = 100;
    std::size_t roots = 0;            // marine outlets; 0 = max(1, n/25)
    double branching = 1.5;           // approximate mean fan-in of confluence nodes
    double sampled_fraction = 0.3;    // per-catchment Bernoulli, so counts are binomial
    int years = 5;
    int first_year = 2011;
    double replicates_per_year = 3.0; // mean; every sampled (catchment, year) gets >= 1
    double detection_limit = 0.1;     // ug/l, global
    ParameterSet true_params = ParameterSet::from_natural(1.5, {}, 30.0, 0.4, 0.5, 0.12);
    std::uint64_t seed = 1;

    Template source_template = Template::SingleSource;
    double cg_median = 1.0;  // two-source: groundwater concentration draw
    double cg_log_sd = 1.0;

    double inflow_lo = 100.0, inflow_hi = 5000.0;       // Qg, Qs draw range, m^3/d
    double area_ratio_lo = 1e-4, area_ratio_hi = 1e-2;  // A_i as a fraction of Q_i
};

struct SynthData {
    CatchmentNetwork net;
    SourceDesign design;
    std::vector<double> true_lc;  // per catchment, network order
    std::vector<double> true_c;
    LatentState true_latent;      // residuals used to produce the truth
};

namespace detail {

inline std::string synth_id(std::size_t i, std::size_t n) {
    std::size_t width = 1;
    for (std::size_t v = n; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(i + 1);
    return "c" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace detail

/// Random in-tree network (every catchment has one downstream at most),
/// hydrology drawn log-uniform with the water balance enforced exactly, and
/// truth from propagation with residuals drawn from the true sigma_p.
inline SynthData generate(const SynthSpec& spec) {
    const std::size_t n = spec.n_catchments;
    const std::size_t roots = spec.roots > 0 ? std::min(spec.roots, n)
                                             : std::max<std::size_t>(1, n / 25);
    Rng rng(spec.seed);

    // Nodes join in creation order; each picks its downstream among earlier
    // nodes that still accept upstream neighbours. Capacities are drawn so
    // the fan-in of confluence nodes averages roughly `branching`.
    std::vector<SubCatchment> rows(n);
    std::vector<int> capacity(n, 0);
    std::vector<std::size_t> open;
    auto draw_capacity = [&]() {
        return 1 + (spec.branching > 1.0 ? rng.poisson(spec.branching - 1.0) : 0);
    };
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].id = detail::synth_id(i, n);
        if (i >= roots) {
            if (open.empty()) {
                const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
                capacity[j] += 1;
                open.push_back(j);
            }
            const std::size_t pick = static_cast<std::size_t>(rng.uniform_int(open.size()));
            const std::size_t parent = open[pick];
            rows[i].downstream = rows[parent].id;
            if (--capacity[parent] == 0) {
                open[pick] = open.back();
                open.pop_back();
            }
        }
        capacity[i] += draw_capacity();
        if (capacity[i] > 0) open.push_back(i);
    }

    for (auto& row : rows) {
        row.q_ground = rng.log_uniform(spec.inflow_lo, spec.inflow_hi);
        row.q_shallow = rng.log_uniform(spec.inflow_lo, spec.inflow_hi);
        row.q_total = 1.0;  // placeholder; the real value needs the topology
    }

    // First build fixes indices and upstream lists; Q then accumulates in
    // level order with the same summation order check_water_balance uses,
    // so residuals are exactly zero.
    CatchmentNetwork shape = build_network(rows);
    std::vector<double> q(n);
    for (std::size_t i : shape.order()) {
        double inflow = 0.0;
        for (std::size_t j : shape.upstream(i)) inflow += q[j];
        inflow += shape.catchment(i).q_ground + shape.catchment(i).q_shallow;
        q[i] = inflow;
    }
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].q_total = q[i];
        rows[i].area_surface = q[i] * rng.log_uniform(spec.area_ratio_lo, spec.area_ratio_hi);
    }

    SynthData data;
    data.net = build_network(std::move(rows));

    if (spec.source_template == SynthSpec::Template::TwoSource) {
        std::vector<std::optional<double>> cg(n);
        for (std::size_t i = 0; i < n; ++i)
            cg[i] = spec.cg_median * std::exp(rng.normal(0.0, spec.cg_log_sd));
        data.design = SourceDesign::two_source(data.net, cg);
    } else {
        data.design = SourceDesign::single_source(data.net);
    }

    data.true_latent = LatentState::zeros(n, 0);
    const double sigmap = spec.true_params.sigmap();
    for (std::size_t i = 0; i < n; ++i) data.true_latent.eps[i] = rng.normal(0.0, sigmap);

    const Propagation prop =
        propagate(data.net, data.design, spec.true_params, data.true_latent);
    data.true_lc = prop.lc;
    data.true_c = prop.c;
    return data;
}

/// Forward-simulates samples from the truth: picks the sampled catchments,
/// draws year effects and replicate noise, and censors below the detection
/// limit. Pass `true_delta` to capture the drawn year effects.
inline MeasurementSet simulate_measurements(const CatchmentNetwork& net,
                                            const std::vector<double>& true_lc,
                                            const SynthSpec& spec,
                                            std::vector<double>* true_delta = nullptr) {
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::size_t> sampled;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (rng.uniform() < spec.sampled_fraction) sampled.push_back(i);
    if (sampled.empty()) sampled.push_back(0);

    const double sigma0 = spec.true_params.sigma0();
    const double sigmay = spec.true_params.sigmay();
    std::vector<double> delta(spec.years);
    for (auto& d : delta) d = rng.normal(0.0, sigmay);
    if (true_delta) *true_delta = delta;

    std::vector<Measurement> ms;
    for (std::size_t i : sampled) {
        for (int y = 0; y < spec.years; ++y) {
            const int reps =
                1 + (spec.replicates_per_year > 1.0 ? rng.poisson(spec.replicates_per_year - 1.0)
                                                    : 0);
            for (int r = 0; r < reps; ++r) {
                const double logz = true_lc[i] + delta[y] + rng.normal(0.0, sigma0);
                const double z = std::exp(logz);
                Measurement m;
                m.catchment = net.id(i);
                m.year = spec.first_year + y;
                m.detection_limit = spec.detection_limit;
                m.censored = z < spec.detection_limit;
                m.value = m.censored ? 0.0 : z;
                ms.push_back(std::move(m));
            }
        }
    }
    return MeasurementSet(net, std::move(ms));
}

/// Brute-force marginal nll by tensor-product Gauss-Hermite quadrature over
/// the full latent space (residual parameterization, evaluated through the
/// public propagation path, so it is independent of the Laplace machinery).
/// Only feasible for tiny instances; guards at 6 latent dimensions.
inline double quadrature_marginal(const ParameterSet& params, const MeasurementSet& data,
                                  const CatchmentNetwork& net, const SourceDesign& design,
                                  int nodes) {
    const std::size_t n = net.size();
    const std::size_t m = data.years().size();
    const std::size_t dim = n + m;
    if (dim > 6) throw DimensionTooLarge(dim);

    const GaussHermite gh = gauss_hermite(nodes);
    std::vector<double> log_w(nodes);
    for (int k = 0; k < nodes; ++k)
        log_w[k] = std::log(gh.weights[k]) + gh.nodes[k] * gh.nodes[k];

    std::vector<double> scale(dim);
    for (std::size_t d = 0; d < n; ++d) scale[d] = M_SQRT2 * params.sigmap();
    for (std::size_t d = n; d < dim; ++d) scale[d] = M_SQRT2 * params.sigmay();
    double log_jacobian = 0.0;
    for (double s : scale) log_jacobian += std::log(s);

    LatentState latent = LatentState::zeros(n, m);
    Propagation prop;
    std::vector<double> scratch;

    std::vector<int> index(dim, 0);
    double running_max = -std::numeric_limits<double>::infinity();
    double running_sum = 0.0;
    while (true) {
        double log_weight = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double x = scale[d] * gh.nodes[index[d]];
            if (d < n)
                latent.eps[d] = x;
            else
                latent.delta[d - n] = x;
            log_weight += log_w[index[d]];
        }
        propagate_into(net, design, params, latent, prop);
        const double term =
            log_weight - detail::joint_nll_terms(net, params, latent, data, prop, scratch);
        if (std::isfinite(term)) {
            if (term > running_max) {
                running_sum = running_sum * std::exp(running_max - term) + 1.0;
                running_max = term;
            } else {
                running_sum += std::exp(term - running_max);
            }
        }

        std::size_t d = 0;
        while (d < dim && ++index[d] == nodes) index[d++] = 0;
        if (d == dim) break;
    }

    return -(running_max + std::log(running_sum) + log_jacobian);
}

/// Writes the per-catchment truth alongside the simulated files.
inline void write_truth_csv(const CatchmentNetwork& net, const SynthData& data,
                            const std::string& path) {
    csv::Writer w(path);
    w.comment("simulation truth; c_true in ug/l");
    w.row({"catchment_id", "lc_true", "c_true", "eps_true"});
    for (std::size_t i = 0; i < net.size(); ++i)
        w.row({net.id(i), format_double(data.true_lc[i]), format_double(data.true_c[i]),
               format_double(data.true_latent.eps[i])});
}

}  // namespace catchstat

#endif  // CATCHSTAT_SYNTH_HPP
