#ifndef CATCHSTAT_LAPLACE_HPP
#define CATCHSTAT_LAPLACE_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "catchstat/likelihood.hpp"
#include "catchstat/math.hpp"
#include "catchstat/network.hpp"
#include "catchstat/sourcemodel.hpp"

namespace catchstat {

using GradientHook = std::function<std::vector<double>(
    const ParameterSet&, const MeasurementSet&, const CatchmentNetwork&, const SourceDesign&)>;

struct FitConfig {
    double inner_tol = 1e-8;   // gradient-norm tolerance for the latent mode
    double outer_tol = 1e-6;   // gradient-norm tolerance for the parameters
    int max_inner = 100;
    int max_outer = 500;
    std::optional<ParameterSet> init;
    std::uint64_t seed = 0;          // reserved for stochastic restarts
    double fd_step = 1e-6;           // relative step for finite-difference gradients
    double hessian_step = 1e-3;      // relative step for the finite-difference outer Hessian
    double internal_lower = -16.0;   // box on the internal log scale; sigma_Y pins
    double internal_upper = 16.0;    //   here when a dataset carries no year contrast
    bool compute_latent_sd = true;
    GradientHook gradient_hook;      // empty = central finite differences
};

struct FitIterations {
    int outer = 0;
    int inner_total = 0;
    int nll_evaluations = 0;
};

struct FitResult {
    ParameterSet params_hat;  // internal (log) storage, natural accessors
    std::vector<std::string> param_names;
    std::vector<double> estimate;  // natural scale, reporting order
    std::vector<double> se;        // natural scale via the delta method; NaN when absent
    std::vector<double> tfactor;   // estimate / se
    bool se_available = false;

    LatentState latent_hat;
    std::vector<double> sd_lc;  // approximate latent sd of log concentration per catchment

    double marginal_nll = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    FitIterations iterations;
    double hessian_logdet = 0.0;

    std::vector<int> years;
    std::vector<std::uint8_t> sampled;  // per catchment, network input order
};

struct HessianSummary {
    double logdet = 0.0;
    int dim = 0;
    int iterations = 0;
    double grad_norm = 0.0;
    bool positive_definite = false;
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

/// Joint negative log-likelihood over the latent field, parameterized by the
/// log outlet concentrations v_i themselves (plus the year effects). The map
/// eps -> v is triangular with unit diagonal, so the joint density, its mode,
/// and the Hessian log-determinant at the mode are identical to the
/// residual parameterization, while the Hessian fill collapses from full
/// upstream reachability to the DAG edges plus per-confluence cliques.
class LatentProblem {
public:
    LatentProblem(const CatchmentNetwork& net, const SourceDesign& design,
                  const MeasurementSet& data)
        : net_(net), design_(design), data_(data) {
        n_ = net.size();
        m_ = data.years().size();
        source_.resize(n_);
        log_flow_denom_.resize(n_);
    }

    std::size_t dim() const { return n_ + m_; }
    std::size_t n_catchments() const { return n_; }
    std::size_t n_years() const { return m_; }

    void set_params(const ParameterSet& params) {
        params_ = params;
        const double theta = params.theta();
        beta0_ = params.beta0();
        inv_var_obs_ = 1.0 / (params.sigma0() * params.sigma0());
        inv_var_eps_ = 1.0 / (params.sigmap() * params.sigmap());
        inv_var_year_ = m_ > 0 ? 1.0 / (params.sigmay() * params.sigmay()) : 0.0;
        log_sigma0_ = params.log_sigma0;
        sigma0_ = params.sigma0();
        const_terms_ = n_ * (params.log_sigmap + kLogSqrt2Pi) +
                       m_ * (params.log_sigmay + kLogSqrt2Pi);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto& c = net_.catchment(i);
            source_[i] = source_term(params_, design_, i);
            log_flow_denom_[i] = std::log(c.q_total + theta * c.area_surface);
        }
    }

    /// Conditional mean of v_i given its upstream values:
    /// log((sum_up Q_j e^{v_j} + beta0 * S_i) / (Q_i + theta * A_i)).
    double conditional_mean(std::size_t i, const Vec& u) const {
        double upstream = 0.0;
        for (std::size_t j : net_.upstream(i))
            upstream += net_.catchment(j).q_total * std::exp(u[j]);
        return std::log(upstream + beta0_ * source_[i]) - log_flow_denom_[i];
    }

    /// Forward pass v_i = conditional_mean + eps_i in level order; the exact
    /// inverse of `to_latent`, so eps round-trips bit-identically.
    Vec forward(const LatentState& latent) const {
        Vec u(dim());
        for (std::size_t i : net_.order()) u[i] = conditional_mean(i, u) + latent.eps[i];
        for (std::size_t y = 0; y < m_; ++y) u[n_ + y] = latent.delta[y];
        return u;
    }

    LatentState to_latent(const Vec& u) const {
        LatentState s;
        s.eps.resize(n_);
        s.delta.resize(m_);
        for (std::size_t i = 0; i < n_; ++i) s.eps[i] = u[i] - conditional_mean(i, u);
        for (std::size_t y = 0; y < m_; ++y) s.delta[y] = u[n_ + y];
        return s;
    }

    /// Objective value only; +inf on overflow so line searches back off.
    double value(const Vec& u) const {
        double acc = const_terms_;
        for (std::size_t i = 0; i < n_; ++i) {
            const double r = u[i] - conditional_mean(i, u);
            acc += 0.5 * r * r * inv_var_eps_;
        }
        for (std::size_t y = 0; y < m_; ++y)
            acc += 0.5 * u[n_ + y] * u[n_ + y] * inv_var_year_;
        for (std::size_t o = 0; o < data_.size(); ++o) {
            const double mu = u[data_.obs_catchment(o)] + (m_ ? u[n_ + data_.obs_year(o)] : 0.0);
            acc += obs_nll(o, mu);
        }
        return std::isnan(acc) ? std::numeric_limits<double>::infinity() : acc;
    }

    double value_grad_hess(const Vec& u, Vec& grad, std::vector<Eigen::Triplet<double>>& trips) const {
        grad.setZero(dim());
        trips.clear();
        double acc = const_terms_;

        std::vector<double> p;  // d conditional_mean / d v_j over upstream j
        for (std::size_t i = 0; i < n_; ++i) {
            const auto& ups = net_.upstream(i);
            double total = beta0_ * source_[i];
            p.resize(ups.size());
            for (std::size_t a = 0; a < ups.size(); ++a) {
                p[a] = net_.catchment(ups[a]).q_total * std::exp(u[ups[a]]);
                total += p[a];
            }
            const double r = u[i] - (std::log(total) - log_flow_denom_[i]);
            for (double& pa : p) pa /= total;

            acc += 0.5 * r * r * inv_var_eps_;
            const double w = r * inv_var_eps_;
            grad[i] += w;
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i), inv_var_eps_);
            for (std::size_t a = 0; a < ups.size(); ++a) {
                grad[ups[a]] -= w * p[a];
                add_sym(trips, i, ups[a], -inv_var_eps_ * p[a]);
                for (std::size_t b = 0; b <= a; ++b) {
                    double h = inv_var_eps_ * p[a] * p[b] * (1.0 + r);
                    if (a == b) h -= inv_var_eps_ * r * p[a];
                    add_sym(trips, ups[a], ups[b], h);
                }
            }
        }

        for (std::size_t y = 0; y < m_; ++y) {
            const std::size_t k = n_ + y;
            acc += 0.5 * u[k] * u[k] * inv_var_year_;
            grad[k] += u[k] * inv_var_year_;
            trips.emplace_back(static_cast<int>(k), static_cast<int>(k), inv_var_year_);
        }

        for (std::size_t o = 0; o < data_.size(); ++o) {
            const std::size_t c = data_.obs_catchment(o);
            const std::size_t k = n_ + data_.obs_year(o);
            const double mu = u[c] + (m_ ? u[k] : 0.0);
            double g1, g2;
            acc += obs_nll_derivs(o, mu, g1, g2);
            grad[c] += g1;
            trips.emplace_back(static_cast<int>(c), static_cast<int>(c), g2);
            if (m_) {
                grad[k] += g1;
                trips.emplace_back(static_cast<int>(k), static_cast<int>(k), g2);
                add_sym(trips, c, k, g2);
            }
        }
        return std::isnan(acc) ? std::numeric_limits<double>::infinity() : acc;
    }

private:
    static void add_sym(std::vector<Eigen::Triplet<double>>& trips, std::size_t a,
                        std::size_t b, double v) {
        trips.emplace_back(static_cast<int>(a), static_cast<int>(b), v);
        if (a != b) trips.emplace_back(static_cast<int>(b), static_cast<int>(a), v);
    }

    double obs_nll(std::size_t o, double mu) const {
        const double x = data_.obs_logval(o);
        if (data_.obs_censored(o)) return -normal_logcdf((x - mu) / sigma0_);
        const double z = (x - mu) / sigma0_;
        return kLogSqrt2Pi + log_sigma0_ + 0.5 * z * z;
    }

    double obs_nll_derivs(std::size_t o, double mu, double& g1, double& g2) const {
        const double x = data_.obs_logval(o);
        if (data_.obs_censored(o)) {
            const double t = (x - mu) / sigma0_;
            const double h = normal_hazard(t);
            g1 = h / sigma0_;
            g2 = h * (t + h) * inv_var_obs_;
            return -normal_logcdf(t);
        }
        const double z = (x - mu) / sigma0_;
        g1 = -z / sigma0_;
        g2 = inv_var_obs_;
        return kLogSqrt2Pi + log_sigma0_ + 0.5 * z * z;
    }

    const CatchmentNetwork& net_;
    const SourceDesign& design_;
    const MeasurementSet& data_;
    ParameterSet params_;
    std::size_t n_ = 0, m_ = 0;
    double beta0_ = 1.0, sigma0_ = 1.0, log_sigma0_ = 0.0;
    double inv_var_obs_ = 1.0, inv_var_eps_ = 1.0, inv_var_year_ = 1.0;
    double const_terms_ = 0.0;
    std::vector<double> source_;
    std::vector<double> log_flow_denom_;
};

struct NewtonResult {
    Vec mode;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    double logdet = 0.0;
    bool positive_definite = false;
    bool converged = false;
};

/// Newton mode search with a Levenberg-style ridge that is active only while
/// iterating; the factorization reported at the mode carries no ridge.
inline NewtonResult newton_inner(const LatentProblem& prob, Vec u, double tol, int max_iter) {
    const auto dim = static_cast<Eigen::Index>(prob.dim());
    NewtonResult res;
    Vec grad(dim);
    std::vector<Eigen::Triplet<double>> trips;
    SpMat hess(dim, dim);
    Eigen::SimplicialLDLT<SpMat> solver;
    bool analyzed = false;

    auto build = [&](double ridge) {
        auto all = trips;
        if (ridge > 0.0)
            for (Eigen::Index k = 0; k < dim; ++k) all.emplace_back(k, k, ridge);
        hess.setFromTriplets(all.begin(), all.end());
        if (!analyzed) {
            solver.analyzePattern(hess);
            analyzed = true;
        }
        solver.factorize(hess);
        if (solver.info() != Eigen::Success) return false;
        return (solver.vectorD().array() > 0.0).all();
    };

    double fval = prob.value_grad_hess(u, grad, trips);
    double ridge = 0.0;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        res.grad_norm = grad.norm();
        if (std::isfinite(fval) && res.grad_norm <= tol) {
            res.converged = true;
            break;
        }
        if (!std::isfinite(fval)) break;

        if (!build(ridge)) {
            ridge = std::max(ridge * 10.0, 1e-8);
            int guard = 0;
            while (!build(ridge) && guard++ < 60) ridge *= 10.0;
            if (guard >= 60) break;
        }
        const Vec step = solver.solve(-grad);
        const double slope = grad.dot(step);

        // The Newton decrement bounds the achievable decrease; once it is
        // below rounding the current point is the mode to machine precision
        // even if steep curvature keeps the gradient norm above tolerance.
        if (ridge == 0.0 && -0.5 * slope <= 1e-13 * std::max(1.0, std::abs(fval))) {
            res.converged = true;
            break;
        }

        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Vec trial = u + t * step;
            const double ftrial = prob.value(trial);
            if (ftrial <= fval + 1e-4 * t * slope) {
                u = trial;
                fval = prob.value_grad_hess(u, grad, trips);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (accepted) {
            ridge = (t == 1.0) ? ridge / 4.0 : ridge;
            if (ridge < 1e-12) ridge = 0.0;
        } else {
            ridge = std::max(ridge * 10.0, 1e-8);
            if (ridge > 1e14) break;
        }
    }
    res.iterations = iter;
    res.mode = std::move(u);
    res.value = fval;
    if (!res.converged) return res;

    res.positive_definite = build(0.0);
    if (res.positive_definite) res.logdet = solver.vectorD().array().log().sum();
    return res;
}

}  // namespace detail

struct InnerMode {
    LatentState latent;
    HessianSummary hessian;
};

/// Latent posterior mode under fixed parameters (arg min of the joint
/// negative log-likelihood over the latent field).
inline InnerMode inner_mode(const ParameterSet& params, const MeasurementSet& data,
                            const CatchmentNetwork& net, const SourceDesign& design,
                            const LatentState* warm_start = nullptr,
                            const FitConfig& config = {}) {
    detail::LatentProblem prob(net, design, data);
    prob.set_params(params);
    const detail::Vec u0 = warm_start
                               ? prob.forward(*warm_start)
                               : prob.forward(LatentState::zeros(net.size(), data.years().size()));
    auto res = detail::newton_inner(prob, u0, config.inner_tol, config.max_inner);
    if (!res.converged) throw InnerDiverged(res.iterations, res.grad_norm);
    if (!res.positive_definite) throw IndefiniteHessian();

    InnerMode out;
    out.latent = prob.to_latent(res.mode);
    out.hessian.logdet = res.logdet;
    out.hessian.dim = static_cast<int>(prob.dim());
    out.hessian.iterations = res.iterations;
    out.hessian.grad_norm = res.grad_norm;
    out.hessian.positive_definite = true;
    return out;
}

/// Laplace-approximated marginal negative log-likelihood:
/// joint at the latent mode + 0.5*logdet(H) - (dim/2)*log(2*pi).
inline double marginal_nll(const ParameterSet& params, const MeasurementSet& data,
                           const CatchmentNetwork& net, const SourceDesign& design,
                           const FitConfig& config = {}) {
    detail::LatentProblem prob(net, design, data);
    prob.set_params(params);
    const detail::Vec u0 = prob.forward(LatentState::zeros(net.size(), data.years().size()));
    auto res = detail::newton_inner(prob, u0, config.inner_tol, config.max_inner);
    if (!res.converged) throw InnerDiverged(res.iterations, res.grad_norm);
    if (!res.positive_definite) throw IndefiniteHessian();
    return res.value + 0.5 * res.logdet - 0.5 * static_cast<double>(prob.dim()) * kLog2Pi;
}

namespace detail {

/// Shared evaluation state for the outer optimization: one LatentProblem
/// (sparsity pattern reused) and a warm-started latent mode.
class MarginalEvaluator {
public:
    MarginalEvaluator(const MeasurementSet& data, const CatchmentNetwork& net,
                      const SourceDesign& design, const FitConfig& config)
        : prob_(net, design, data), config_(config),
          zeros_(LatentState::zeros(net.size(), data.years().size())) {}

    /// Marginal nll at packed internal parameters; +inf when the inner
    /// solver fails so the outer search simply backs away.
    double operator()(const std::vector<double>& u_params) {
        ++evaluations_;
        const auto params = ParameterSet::unpack(u_params, n_factors_);
        prob_.set_params(params);
        Vec u0 = have_warm_ ? warm_ : prob_.forward(zeros_);
        auto res = newton_inner(prob_, u0, config_.inner_tol, config_.max_inner);
        if (!res.converged || !res.positive_definite) {
            // A cold restart occasionally rescues a stale warm start.
            if (have_warm_) {
                res = newton_inner(prob_, prob_.forward(zeros_), config_.inner_tol,
                                   config_.max_inner);
            }
            if (!res.converged || !res.positive_definite)
                return std::numeric_limits<double>::infinity();
        }
        inner_total_ += res.iterations;
        last_mode_ = res.mode;
        last_logdet_ = res.logdet;
        return res.value + 0.5 * res.logdet - 0.5 * static_cast<double>(prob_.dim()) * kLog2Pi;
    }

    void promote_warm() {
        warm_ = last_mode_;
        have_warm_ = true;
    }

    void set_factor_count(std::size_t p) { n_factors_ = p; }

    std::vector<double> fd_gradient(const std::vector<double>& u, double rel_step) {
        std::vector<double> g(u.size());
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double h = rel_step * std::max(1.0, std::abs(u[k]));
            auto up = u, dn = u;
            up[k] += h;
            dn[k] -= h;
            g[k] = ((*this)(up) - (*this)(dn)) / (2.0 * h);
        }
        return g;
    }

    LatentProblem& problem() { return prob_; }
    const Vec& last_mode() const { return last_mode_; }
    double last_logdet() const { return last_logdet_; }
    int evaluations() const { return evaluations_; }
    int inner_total() const { return inner_total_; }

private:
    LatentProblem prob_;
    FitConfig config_;
    LatentState zeros_;
    std::size_t n_factors_ = 0;
    Vec warm_, last_mode_;
    bool have_warm_ = false;
    double last_logdet_ = 0.0;
    int evaluations_ = 0, inner_total_ = 0;
};

inline void clamp_to_box(std::vector<double>& u, double lo, double hi) {
    for (double& x : u) x = std::min(hi, std::max(lo, x));
}

/// Gradient with bound-blocked coordinates zeroed out.
inline double projected_grad_norm(const std::vector<double>& u, const std::vector<double>& g,
                                  double lo, double hi) {
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        double gk = g[k];
        if (u[k] <= lo && gk > 0.0) gk = 0.0;
        if (u[k] >= hi && gk < 0.0) gk = 0.0;
        s += gk * gk;
    }
    return std::sqrt(s);
}

}  // namespace detail

/// Default starting point: beta0 from the mean log uncensored measurement,
/// relative coefficients and theta at one, spread parameters at
/// order-of-magnitude scale.
inline ParameterSet default_init(const MeasurementSet& data, std::size_t n_factors) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t o = 0; o < data.size(); ++o) {
        if (!data.obs_censored(o)) {
            sum += data.obs_logval(o);
            ++n;
        }
    }
    ParameterSet p;
    p.log_beta0 = n > 0 ? sum / static_cast<double>(n) : (data.size() ? data.obs_logval(0) : 0.0);
    p.log_theta = 0.0;
    p.log_sigma0 = std::log(0.5);
    p.log_sigmap = std::log(0.5);
    p.log_sigmay = std::log(0.1);
    p.log_betak.assign(n_factors, 0.0);
    return p;
}

/// Maximizes the Laplace marginal likelihood over the internal parameter
/// scale with a BFGS search; finite-difference gradients by default, an
/// exact-derivative hook when the config provides one. Standard errors come
/// from the finite-difference outer Hessian, delta-mapped to natural scale.
inline FitResult fit(const MeasurementSet& data, const CatchmentNetwork& net,
                     const SourceDesign& design, const FitConfig& config = {}) {
    if (data.sampled_catchments().empty())
        throw InvalidMeasurement("fit requires at least one sampled catchment");

    const std::size_t p_factors = design.factor_count();
    const std::size_t dim = 5 + p_factors;
    const double lo = config.internal_lower, hi = config.internal_upper;

    detail::MarginalEvaluator eval(data, net, design, config);
    eval.set_factor_count(p_factors);

    auto gradient = [&](const std::vector<double>& u) {
        if (config.gradient_hook)
            return config.gradient_hook(ParameterSet::unpack(u, p_factors), data, net, design);
        return eval.fd_gradient(u, config.fd_step);
    };

    std::vector<double> u = (config.init ? *config.init : default_init(data, p_factors)).pack();
    detail::clamp_to_box(u, lo, hi);

    double fval = eval(u);
    eval.promote_warm();
    std::vector<double> g = gradient(u);

    Eigen::MatrixXd binv = Eigen::MatrixXd::Identity(dim, dim);
    FitResult result;
    result.converged = false;

    int outer = 0;
    for (; outer < config.max_outer; ++outer) {
        const double pg = detail::projected_grad_norm(u, g, lo, hi);
        if (std::isfinite(fval) && pg <= config.outer_tol) {
            result.converged = true;
            break;
        }
        if (!std::isfinite(fval)) break;

        Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(dim));
        Eigen::VectorXd dir = -(binv * gv);
        if (dir.dot(gv) >= 0.0) {
            binv.setIdentity();
            dir = -gv;
        }

        // Damp the very first step; later steps are scaled by the BFGS curvature.
        double t = outer == 0 ? std::min(1.0, 1.0 / std::max(1.0, dir.norm())) : 1.0;
        std::vector<double> u_new(dim);
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (std::size_t k = 0; k < dim; ++k) u_new[k] = u[k] + t * dir[k];
            detail::clamp_to_box(u_new, lo, hi);
            f_new = eval(u_new);
            double reduction = 0.0;
            for (std::size_t k = 0; k < dim; ++k) reduction += g[k] * (u_new[k] - u[k]);
            if (std::isfinite(f_new) && f_new <= fval + 1e-4 * reduction) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // stalled against finite-difference noise
        eval.promote_warm();

        const std::vector<double> g_new = gradient(u_new);
        Eigen::VectorXd s(dim), yv(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            s[k] = u_new[k] - u[k];
            yv[k] = g_new[k] - g[k];
        }
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            if (outer == 0) binv *= sy / yv.squaredNorm();  // standard initial scaling
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
            binv = (eye - rho * s * yv.transpose()) * binv *
                       (eye - rho * yv * s.transpose()) +
                   rho * s * s.transpose();
        }
        u = u_new;
        fval = f_new;
        g = g_new;
    }

    result.grad_norm = detail::projected_grad_norm(u, g, lo, hi);
    if (std::isfinite(fval) && result.grad_norm <= config.outer_tol) result.converged = true;

    // Re-evaluate at the accepted optimum so the stored mode matches u.
    fval = eval(u);
    if (!std::isfinite(fval))
        throw Error("fit cannot evaluate the marginal at its final iterate");
    eval.promote_warm();
    result.marginal_nll = fval;
    result.params_hat = ParameterSet::unpack(u, p_factors);
    result.param_names = ParameterSet::names(p_factors);
    result.latent_hat = eval.problem().to_latent(eval.last_mode());
    result.hessian_logdet = eval.last_logdet();
    result.iterations.outer = outer;
    result.years = data.years();
    result.sampled.assign(net.size(), 0);
    for (std::size_t i = 0; i < net.size(); ++i)
        result.sampled[i] = data.is_sampled(i) ? 1 : 0;

    // Outer Hessian by central finite differences, skipping coordinates
    // pinned at the box; their standard error is reported absent.
    {
        std::vector<bool> pinned(dim);
        std::vector<std::size_t> free;
        for (std::size_t k = 0; k < dim; ++k) {
            pinned[k] = (u[k] <= lo || u[k] >= hi);
            if (!pinned[k]) free.push_back(k);
        }
        const std::size_t q = free.size();
        Eigen::MatrixXd hess(q, q);
        std::vector<double> steps(q);
        for (std::size_t a = 0; a < q; ++a)
            steps[a] = config.hessian_step * std::max(1.0, std::abs(u[free[a]]));
        bool finite = q > 0;
        for (std::size_t a = 0; a < q && finite; ++a) {
            auto up = u, dn = u;
            up[free[a]] += steps[a];
            dn[free[a]] -= steps[a];
            const double fp = eval(up), fm = eval(dn);
            hess(a, a) = (fp - 2.0 * fval + fm) / (steps[a] * steps[a]);
            if (!std::isfinite(hess(a, a))) finite = false;
            for (std::size_t b = 0; b < a; ++b) {
                auto pp = u, pm = u, mp = u, mm = u;
                pp[free[a]] += steps[a]; pp[free[b]] += steps[b];
                pm[free[a]] += steps[a]; pm[free[b]] -= steps[b];
                mp[free[a]] -= steps[a]; mp[free[b]] += steps[b];
                mm[free[a]] -= steps[a]; mm[free[b]] -= steps[b];
                const double v =
                    (eval(pp) - eval(pm) - eval(mp) + eval(mm)) / (4.0 * steps[a] * steps[b]);
                hess(a, b) = hess(b, a) = v;
                if (!std::isfinite(v)) finite = false;
            }
        }

        const double nan = std::numeric_limits<double>::quiet_NaN();
        result.estimate.resize(dim);
        result.se.assign(dim, nan);
        result.tfactor.assign(dim, nan);
        for (std::size_t k = 0; k < dim; ++k) result.estimate[k] = std::exp(u[k]);

        if (finite) {
            Eigen::LLT<Eigen::MatrixXd> llt(hess);
            if (llt.info() == Eigen::Success) {
                const Eigen::MatrixXd cov =
                    llt.solve(Eigen::MatrixXd::Identity(q, q));
                result.se_available = true;
                for (std::size_t a = 0; a < q; ++a) {
                    const double var = cov(a, a);
                    if (var > 0.0) {
                        const std::size_t k = free[a];
                        result.se[k] = std::exp(u[k]) * std::sqrt(var);  // delta method
                        result.tfactor[k] = result.estimate[k] / result.se[k];
                    }
                }
            }
        }
    }

    // Approximate latent sd of each log concentration from the inverse
    // latent Hessian diagonal.
    if (config.compute_latent_sd) {
        detail::LatentProblem& prob = eval.problem();
        detail::Vec grad;
        std::vector<Eigen::Triplet<double>> trips;
        prob.value_grad_hess(eval.last_mode(), grad, trips);
        const auto d = static_cast<Eigen::Index>(prob.dim());
        detail::SpMat hess(d, d);
        hess.setFromTriplets(trips.begin(), trips.end());
        Eigen::SimplicialLDLT<detail::SpMat> solver(hess);
        result.sd_lc.assign(net.size(), std::numeric_limits<double>::quiet_NaN());
        if (solver.info() == Eigen::Success) {
            detail::Vec e = detail::Vec::Zero(d);
            for (std::size_t i = 0; i < net.size(); ++i) {
                e[static_cast<Eigen::Index>(i)] = 1.0;
                const double var = solver.solve(e)[static_cast<Eigen::Index>(i)];
                e[static_cast<Eigen::Index>(i)] = 0.0;
                if (var > 0.0) result.sd_lc[i] = std::sqrt(var);
            }
        }
    }

    result.iterations.inner_total = eval.inner_total();
    result.iterations.nll_evaluations = eval.evaluations();
    return result;
}

struct GradientCheckEntry {
    std::string name;
    double hook = 0.0;
    double fd = 0.0;
    double rel_deviation = 0.0;
};

struct GradientCheckReport {
    std::vector<GradientCheckEntry> entries;
    double max_rel_deviation = 0.0;
    bool flagged = false;  // any coordinate deviating by 0.1 or more
};

/// Compares a derivative hook against central finite differences of the
/// marginal nll, coordinate by coordinate.
inline GradientCheckReport gradient_check(const ParameterSet& params, const MeasurementSet& data,
                                          const CatchmentNetwork& net, const SourceDesign& design,
                                          const GradientHook& hook = {},
                                          const FitConfig& config = {}) {
    detail::MarginalEvaluator eval(data, net, design, config);
    eval.set_factor_count(design.factor_count());
    const auto u = params.pack();
    const auto fd = eval.fd_gradient(u, config.fd_step);
    const auto hg = hook ? hook(params, data, net, design) : fd;
    const auto names = ParameterSet::names(design.factor_count());

    GradientCheckReport report;
    for (std::size_t k = 0; k < fd.size(); ++k) {
        GradientCheckEntry e;
        e.name = names[k];
        e.fd = fd[k];
        e.hook = hg[k];
        e.rel_deviation =
            std::abs(e.hook - e.fd) / std::max({std::abs(e.fd), std::abs(e.hook), 1e-8});
        report.max_rel_deviation = std::max(report.max_rel_deviation, e.rel_deviation);
        report.entries.push_back(std::move(e));
    }
    report.flagged = report.max_rel_deviation >= 0.1;
    return report;
}

}  // namespace catchstat

#endif  // CATCHSTAT_LAPLACE_HPP
