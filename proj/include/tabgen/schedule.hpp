#pragma once

#include <cstddef>
#include <vector>

namespace tabgen {

// Learnable per-column noise schedules.
//
// Numerical columns use a power-mean level
//     sigma_rho(t) = (sigma_min^(1/rho) + t (sigma_max^(1/rho) - sigma_min^(1/rho)))^rho,
// which pins sigma(0)=sigma_min and sigma(1)=sigma_max for every rho and lets
// rho shape how fast noise ramps up in between.
//
// Categorical columns use a bounded survival probability
//     alpha_k(t) = 1 - ((1 - 2 delta) t^k + delta),
// so alpha(0)=1-delta and alpha(1)=delta: the induced noise level
// -log(alpha) stays finite at both ends.
//
// rho and k are stored as unconstrained reals and mapped through softplus,
// keeping them positive under plain gradient steps.
class ScheduleSet {
  public:
    ScheduleSet() = default;
    ScheduleSet(std::size_t num_cols, std::size_t cat_cols, double rho_init = 7.0,
                double k_init = 1.0, double sigma_min = 0.002, double sigma_max = 80.0,
                double delta = 1e-3);

    std::size_t num_cols() const { return rho_raw_.size(); }
    std::size_t cat_cols() const { return k_raw_.size(); }
    double sigma_min() const { return sigma_min_; }
    double sigma_max() const { return sigma_max_; }
    double delta() const { return delta_; }

    // Positive parameter values.
    double rho(std::size_t i) const;
    double k(std::size_t j) const;
    std::vector<double> rho_values() const;
    std::vector<double> k_values() const;

    // Unconstrained (pre-softplus) values, what the optimizer actually moves.
    std::vector<double>& rho_raw() { return rho_raw_; }
    std::vector<double>& k_raw() { return k_raw_; }
    const std::vector<double>& rho_raw() const { return rho_raw_; }
    const std::vector<double>& k_raw() const { return k_raw_; }

    // --- per-column evaluations; t in [0, 1] (checked) ---

    // Noise level of numerical column i; exactly sigma_min/sigma_max at the
    // ends.
    double sigma(std::size_t i, double t) const;

    // Survival probability of categorical column j, in [delta, 1 - delta].
    double alpha(std::size_t j, double t) const;

    // d/dt alpha; negative on (0, 1].
    double alpha_prime(std::size_t j, double t) const;

    // Loss weight alpha'(t) / (1 - alpha(t)); negative, and finite at t=1
    // thanks to the delta bound.
    double weight(std::size_t j, double t) const;

    // --- parameter gradients (with respect to the positive values; chain
    // through softplus_grad of the raw value to get raw gradients) ---

    // d sigma / d rho; zero at t=0 and t=1 where sigma is pinned.
    double dsigma_drho(std::size_t i, double t) const;

    // d alpha / d k; zero at t=0 and t=1 where alpha is pinned.
    double dalpha_dk(std::size_t j, double t) const;

    // d weight / d k, the piece the categorical loss differentiates.
    double dweight_dk(std::size_t j, double t) const;

    // Vectorized conveniences.
    std::vector<double> sigma_all(double t) const;
    std::vector<double> alpha_all(double t) const;

    bool operator==(const ScheduleSet&) const = default;

  private:
    static void check_t(double t);

    std::vector<double> rho_raw_;
    std::vector<double> k_raw_;
    double sigma_min_ = 0.002;
    double sigma_max_ = 80.0;
    double delta_ = 1e-3;
};

}  // namespace tabgen
