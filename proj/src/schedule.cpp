#include "tabgen/schedule.hpp"

#include <cmath>

#include "tabgen/error.hpp"
#include "tabgen/mathutil.hpp"

namespace tabgen {

ScheduleSet::ScheduleSet(std::size_t num_cols, std::size_t cat_cols, double rho_init,
                         double k_init, double sigma_min, double sigma_max, double delta)
    : rho_raw_(num_cols, softplus_inv(rho_init)),
      k_raw_(cat_cols, softplus_inv(k_init)),
      sigma_min_(sigma_min),
      sigma_max_(sigma_max),
      delta_(delta) {
    if (!(sigma_min_ > 0.0 && sigma_min_ < sigma_max_))
        throw ValidationError("schedule: need 0 < sigma_min < sigma_max");
    if (!(delta_ > 0.0 && delta_ < 0.5))
        throw ValidationError("schedule: need 0 < delta < 0.5");
    if (!(rho_init > 0.0 && k_init > 0.0))
        throw ValidationError("schedule: initial rho and k must be positive");
}

void ScheduleSet::check_t(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("schedule: t must lie in [0, 1]");
}

double ScheduleSet::rho(std::size_t i) const { return softplus(rho_raw_[i]); }
double ScheduleSet::k(std::size_t j) const { return softplus(k_raw_[j]); }

std::vector<double> ScheduleSet::rho_values() const {
    std::vector<double> v(rho_raw_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho(i);
    return v;
}

std::vector<double> ScheduleSet::k_values() const {
    std::vector<double> v(k_raw_.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = k(j);
    return v;
}

double ScheduleSet::sigma(std::size_t i, double t) const {
    check_t(t);
    if (t == 0.0) return sigma_min_;  // pinned ends, exact for every rho
    if (t == 1.0) return sigma_max_;
    const double r = rho(i);
    const double a = std::pow(sigma_min_, 1.0 / r);
    const double b = std::pow(sigma_max_, 1.0 / r);
    return std::pow(a + t * (b - a), r);
}

double ScheduleSet::alpha(std::size_t j, double t) const {
    check_t(t);
    return 1.0 - ((1.0 - 2.0 * delta_) * std::pow(t, k(j)) + delta_);
}

double ScheduleSet::alpha_prime(std::size_t j, double t) const {
    check_t(t);
    const double kj = k(j);
    return -(1.0 - 2.0 * delta_) * kj * std::pow(t, kj - 1.0);
}

double ScheduleSet::weight(std::size_t j, double t) const {
    return alpha_prime(j, t) / (1.0 - alpha(j, t));
}

double ScheduleSet::dsigma_drho(std::size_t i, double t) const {
    check_t(t);
    if (t == 0.0 || t == 1.0) return 0.0;  // ends pinned to sigma_min/sigma_max
    const double r = rho(i);
    const double la = std::log(sigma_min_);
    const double lb = std::log(sigma_max_);
    const double a = std::exp(la / r);
    const double b = std::exp(lb / r);
    const double u = a + t * (b - a);
    // du/drho: a and b carry the rho dependence, a' = -a log(sigma_min)/rho^2.
    const double du = -((1.0 - t) * a * la + t * b * lb) / (r * r);
    return std::pow(u, r) * (std::log(u) + r * du / u);
}

double ScheduleSet::dalpha_dk(std::size_t j, double t) const {
    check_t(t);
    if (t == 0.0 || t == 1.0) return 0.0;  // t^k log t vanishes at both ends
    return -(1.0 - 2.0 * delta_) * std::pow(t, k(j)) * std::log(t);
}

double ScheduleSet::dweight_dk(std::size_t j, double t) const {
    check_t(t);
    const double kj = k(j);
    const double c = 1.0 - 2.0 * delta_;
    const double one_m_alpha = c * std::pow(t, kj) + delta_;
    const double ap = -c * kj * std::pow(t, kj - 1.0);
    // d alpha'/dk = -c t^(k-1) (1 + k log t); log t is finite on (0, 1].
    const double dap = -c * std::pow(t, kj - 1.0) * (1.0 + kj * std::log(t));
    const double dalpha = (t == 0.0) ? 0.0 : -c * std::pow(t, kj) * std::log(t);
    return dap / one_m_alpha + ap * dalpha / (one_m_alpha * one_m_alpha);
}

std::vector<double> ScheduleSet::sigma_all(double t) const {
    std::vector<double> v(rho_raw_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigma(i, t);
    return v;
}

std::vector<double> ScheduleSet::alpha_all(double t) const {
    std::vector<double> v(k_raw_.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = alpha(j, t);
    return v;
}

}  // namespace tabgen
