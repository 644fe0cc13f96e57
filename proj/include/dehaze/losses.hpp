#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

#include "dehaze/metrics.hpp"

namespace dehaze {

// Scalar loss plus its exact gradient w.r.t. the prediction.
struct LossValue {
    double value = 0.0;
    Image grad;
};

struct MixedLossConfig {
    double alpha = 0.1;  // 0.1 for the l2 mix, 0.025 for the l1 mix
    MsSsimConfig ms_cfg;

    double weighting_sigma() const { return ms_cfg.sigmas.back(); }
};

inline LossValue l1_loss(const Image& pred, const Image& target) {
    require_same_shape(pred, target, "l1_loss");
    const double inv_n = 1.0 / static_cast<double>(pred.data.size());
    LossValue out;
    out.grad = Image(pred.width, pred.height, pred.channels);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double d = pred.data[i] - target.data[i];
        out.value += std::abs(d) * inv_n;
        out.grad.data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
    }
    return out;
}

inline LossValue l2_loss(const Image& pred, const Image& target) {
    require_same_shape(pred, target, "l2_loss");
    const double inv_n = 1.0 / static_cast<double>(pred.data.size());
    LossValue out;
    out.grad = Image(pred.width, pred.height, pred.channels);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double d = pred.data[i] - target.data[i];
        out.value += d * d * inv_n;
        out.grad.data[i] = 2.0 * d * inv_n;
    }
    return out;
}

namespace detail {

// Chain a per-sample sensitivity field through the Gaussian-window
// statistics back to the prediction. f_mu, f_var, f_cov hold
// d(objective)/d(mu_x), d/d(var_x), d/d(cov_xy) per sample; the exact
// adjoint of the windowing operator handles the reflected borders.
inline void accumulate_stat_grads(Image& grad, const Image& x, const Image& y,
                                  const SsimStats& s, const Kernel& k,
                                  const Image& f_mu, const Image& f_var,
                                  const Image& f_cov) {
    Image fv_mux(x.width, x.height, x.channels);
    Image fc_muy(x.width, x.height, x.channels);
    for (size_t i = 0; i < x.data.size(); ++i) {
        fv_mux.data[i] = f_var.data[i] * s.mu_x.data[i];
        fc_muy.data[i] = f_cov.data[i] * s.mu_y.data[i];
    }
    Image a_mu = convolve_adjoint(f_mu, k);
    Image a_var = convolve_adjoint(f_var, k);
    Image a_fv_mux = convolve_adjoint(fv_mux, k);
    Image a_cov = convolve_adjoint(f_cov, k);
    Image a_fc_muy = convolve_adjoint(fc_muy, k);
    for (size_t i = 0; i < x.data.size(); ++i) {
        grad.data[i] += a_mu.data[i] +
                        2.0 * x.data[i] * a_var.data[i] - 2.0 * a_fv_mux.data[i] +
                        y.data[i] * a_cov.data[i] - a_fc_muy.data[i];
    }
}

}  // namespace detail

// 1 - mean per-sample SSIM, analytic gradient.
inline LossValue ssim_loss(const Image& pred, const Image& target,
                           const SsimConfig& cfg = {}) {
    require_same_shape(pred, target, "ssim_loss");
    const size_t n = pred.data.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    Kernel k = gaussian_kernel(cfg.sigma_g);
    detail::SsimStats s = detail::ssim_stats(pred, target, k);

    LossValue out;
    out.grad = Image(pred.width, pred.height, pred.channels);
    Image f_mu(pred.width, pred.height, pred.channels);
    Image f_var(pred.width, pred.height, pred.channels);
    Image f_cov(pred.width, pred.height, pred.channels);

    double mean_ssim = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double mx = s.mu_x.data[i], my = s.mu_y.data[i];
        double a1 = 2.0 * mx * my + cfg.c1;
        double b1 = mx * mx + my * my + cfg.c1;
        double a2 = 2.0 * s.cov_xy.data[i] + cfg.c2;
        double b2 = s.var_x.data[i] + s.var_y.data[i] + cfg.c2;
        double l = a1 / b1, cs = a2 / b2;
        mean_ssim += l * cs * inv_n;
        // d(ssim)/d(stat), scaled by -1/N for the 1 - mean objective
        double dl_dmu = (2.0 * my * b1 - 2.0 * mx * a1) / (b1 * b1);
        f_mu.data[i] = -inv_n * cs * dl_dmu;
        f_var.data[i] = -inv_n * l * (-a2 / (b2 * b2));
        f_cov.data[i] = -inv_n * l * (2.0 / b2);
    }
    out.value = 1.0 - mean_ssim;
    detail::accumulate_stat_grads(out.grad, pred, target, s, k, f_mu, f_var, f_cov);
    return out;
}

// 1 - same-resolution multi-sigma MS-SSIM, analytic gradient.
inline LossValue ms_ssim_loss(const Image& pred, const Image& target,
                              const MsSsimConfig& cfg = {}) {
    require_same_shape(pred, target, "ms_ssim_loss");
    const size_t n = pred.data.size();
    const size_t m = cfg.sigmas.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double c1 = 0.01, c2 = 0.03;

    // Pass 1: all per-scale stats and raw factors.
    std::vector<Kernel> kernels(m);
    std::vector<detail::SsimStats> stats(m);
    std::vector<std::vector<double>> cs_raw(m, std::vector<double>(n));
    std::vector<double> l_raw(n);
    for (size_t j = 0; j < m; ++j) {
        kernels[j] = gaussian_kernel(cfg.sigmas[j]);
        stats[j] = detail::ssim_stats(pred, target, kernels[j]);
        for (size_t i = 0; i < n; ++i) {
            cs_raw[j][i] = (2.0 * stats[j].cov_xy.data[i] + c2) /
                           (stats[j].var_x.data[i] + stats[j].var_y.data[i] + c2);
        }
    }
    const detail::SsimStats& sm = stats[m - 1];
    for (size_t i = 0; i < n; ++i) {
        double mx = sm.mu_x.data[i], my = sm.mu_y.data[i];
        l_raw[i] = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    }

    // Clamped factors and their powers.
    auto powc = [](double v, double e) { return std::pow(std::max(v, 0.0), e); };
    std::vector<double> value(n);
    for (size_t i = 0; i < n; ++i) {
        double v = powc(l_raw[i], cfg.alpha);
        for (size_t j = 0; j < m; ++j) v *= powc(cs_raw[j][i], cfg.beta(j));
        value[i] = v;
    }

    LossValue out;
    out.grad = Image(pred.width, pred.height, pred.channels);
    double mean_value = 0.0;
    for (double v : value) mean_value += v * inv_n;
    out.value = 1.0 - mean_value;

    // Pass 2: per-scale sensitivities chained through each scale's stats.
    Image f_mu(pred.width, pred.height, pred.channels, 0.0);
    Image f_var(pred.width, pred.height, pred.channels, 0.0);
    Image f_cov(pred.width, pred.height, pred.channels, 0.0);
    for (size_t j = 0; j < m; ++j) {
        const bool last = (j + 1 == m);
        for (size_t i = 0; i < n; ++i) {
            // d(value_i)/d(cs_j): product of every other clamped factor
            // times the power-rule derivative of this one.
            double dv_dcs;
            if (cs_raw[j][i] <= 0.0) {
                dv_dcs = 0.0;
            } else {
                double rest = powc(l_raw[i], cfg.alpha);
                for (size_t jj = 0; jj < m; ++jj)
                    if (jj != j) rest *= powc(cs_raw[jj][i], cfg.beta(jj));
                dv_dcs = rest * cfg.beta(j) * std::pow(cs_raw[j][i], cfg.beta(j) - 1.0);
            }
            double a2 = 2.0 * stats[j].cov_xy.data[i] + c2;
            double b2 = stats[j].var_x.data[i] + stats[j].var_y.data[i] + c2;
            f_var.data[i] = -inv_n * dv_dcs * (-a2 / (b2 * b2));
            f_cov.data[i] = -inv_n * dv_dcs * (2.0 / b2);

            double fm = 0.0;
            if (last && l_raw[i] > 0.0) {
                double dv_dl = cfg.alpha * std::pow(l_raw[i], cfg.alpha - 1.0);
                for (size_t jj = 0; jj < m; ++jj)
                    dv_dl *= powc(cs_raw[jj][i], cfg.beta(jj));
                double mx = stats[j].mu_x.data[i], my = stats[j].mu_y.data[i];
                double a1 = 2.0 * mx * my + c1;
                double b1 = mx * mx + my * my + c1;
                double dl_dmu = (2.0 * my * b1 - 2.0 * mx * a1) / (b1 * b1);
                fm = -inv_n * dv_dl * dl_dmu;
            }
            f_mu.data[i] = fm;
        }
        detail::accumulate_stat_grads(out.grad, pred, target, stats[j], kernels[j],
                                      f_mu, f_var, f_cov);
    }
    return out;
}

namespace detail {

// alpha*(1 - MS-SSIM) + (1-alpha)*mean(G_M smoothed pixelwise error).
// Shared by the l1 and l2 mixes.
template <typename ErrFn, typename ErrGradFn>
LossValue mixed_loss(const Image& pred, const Image& target,
                     const MixedLossConfig& cfg, ErrFn err, ErrGradFn err_grad) {
    require_same_shape(pred, target, "mixed_loss");
    const size_t n = pred.data.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    LossValue ms = ms_ssim_loss(pred, target, cfg.ms_cfg);

    Kernel k = gaussian_kernel(cfg.weighting_sigma());
    Image e(pred.width, pred.height, pred.channels);
    for (size_t i = 0; i < n; ++i) e.data[i] = err(pred.data[i] - target.data[i]);
    Image smoothed = convolve(e, k);
    double smooth_term = 0.0;
    for (double v : smoothed.data) smooth_term += v * inv_n;

    // d(mean smoothed)/d(x_i) = (W^T 1)_i * e'(x_i) / N
    Image ones(pred.width, pred.height, pred.channels, 1.0);
    Image colsum = convolve_adjoint(ones, k);

    LossValue out;
    out.value = cfg.alpha * ms.value + (1.0 - cfg.alpha) * smooth_term;
    out.grad = Image(pred.width, pred.height, pred.channels);
    for (size_t i = 0; i < n; ++i) {
        out.grad.data[i] =
            cfg.alpha * ms.grad.data[i] +
            (1.0 - cfg.alpha) * inv_n * colsum.data[i] *
                err_grad(pred.data[i] - target.data[i]);
    }
    return out;
}

}  // namespace detail

inline LossValue ms_ssim_l2_loss(const Image& pred, const Image& target,
                                 MixedLossConfig cfg = {}) {
    return detail::mixed_loss(
        pred, target, cfg, [](double d) { return d * d; },
        [](double d) { return 2.0 * d; });
}

inline LossValue ms_ssim_l1_loss(const Image& pred, const Image& target,
                                 MixedLossConfig cfg = MixedLossConfig{0.025, {}}) {
    return detail::mixed_loss(
        pred, target, cfg, [](double d) { return std::abs(d); },
        [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
}

enum class LossKind { L1, L2, Ssim, MsSsim, MsSsimL1, MsSsimL2 };

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "l1") return LossKind::L1;
    if (s == "l2") return LossKind::L2;
    if (s == "ssim") return LossKind::Ssim;
    if (s == "msssim") return LossKind::MsSsim;
    if (s == "msssim_l1") return LossKind::MsSsimL1;
    if (s == "msssim_l2") return LossKind::MsSsimL2;
    throw std::invalid_argument("unknown loss selector: " + s);
}

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::L1: return "l1";
        case LossKind::L2: return "l2";
        case LossKind::Ssim: return "ssim";
        case LossKind::MsSsim: return "msssim";
        case LossKind::MsSsimL1: return "msssim_l1";
        case LossKind::MsSsimL2: return "msssim_l2";
    }
    return "?";
}

using LossFn = std::function<LossValue(const Image&, const Image&)>;

inline LossFn make_loss(LossKind kind) {
    switch (kind) {
        case LossKind::L1:
            return [](const Image& p, const Image& t) { return l1_loss(p, t); };
        case LossKind::L2:
            return [](const Image& p, const Image& t) { return l2_loss(p, t); };
        case LossKind::Ssim:
            return [](const Image& p, const Image& t) { return ssim_loss(p, t); };
        case LossKind::MsSsim:
            return [](const Image& p, const Image& t) { return ms_ssim_loss(p, t); };
        case LossKind::MsSsimL1:
            return [](const Image& p, const Image& t) { return ms_ssim_l1_loss(p, t); };
        case LossKind::MsSsimL2:
            return [](const Image& p, const Image& t) { return ms_ssim_l2_loss(p, t); };
    }
    throw std::invalid_argument("make_loss: bad kind");
}

// Central-difference check of the analytic gradient at randomly sampled
// coordinates. Returns the max relative error, denominator
// max(|analytic|, |numeric|, 1e-8).
inline double finite_diff_check(const LossFn& loss, const Image& pred,
                                const Image& target, double epsilon = 1e-4,
                                int n_samples = 32, uint64_t seed = 0) {
    LossValue base = loss(pred, target);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, pred.data.size() - 1);
    double max_rel = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        size_t i = pick(rng);
        Image p = pred;
        p.data[i] = pred.data[i] + epsilon;
        double up = loss(p, target).value;
        p.data[i] = pred.data[i] - epsilon;
        double dn = loss(p, target).value;
        double numeric = (up - dn) / (2.0 * epsilon);
        double analytic = base.grad.data[i];
        double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
    return max_rel;
}

}  // namespace dehaze
