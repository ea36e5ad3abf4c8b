#ifndef FVCR_THERMO_HPP
#define FVCR_THERMO_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fvcr/fields.hpp"

namespace fvcr {

/// Constitutive law p(rho) = a_lin rho + b rho^gamma with the induced free
/// energy H (normalized by H(1) = 0, extended by continuity with H(0) = 0).
/// The linear term keeps p'(0) > 0; a_lin = 0 is constructible for comparison
/// runs but falls outside that hypothesis.
class PressureLaw {
public:
  PressureLaw(double a_lin, double b, double gamma)
      : a_(a_lin), b_(b), gamma_(gamma) {
    if (!(gamma > 1.0))
      throw std::invalid_argument("PressureLaw: gamma must be > 1");
    if (a_lin < 0.0 || b < 0.0)
      throw std::invalid_argument("PressureLaw: coefficients must be >= 0");
    if (a_lin == 0.0 && b == 0.0)
      throw std::invalid_argument("PressureLaw: a_lin and b cannot both vanish");
  }

  double a_lin() const { return a_; }
  double b_coef() const { return b_; }
  double gamma() const { return gamma_; }

  /// True when p'(0) > 0 holds (the strictly monotone regime the theory needs).
  bool positive_p_prime_at_zero() const { return a_ > 0.0; }

  /// High-density limit of p'(rho)/rho^(gamma-1).
  double p_infinity() const { return b_ * gamma_; }

  double p(double rho) const { return a_ * rho + b_ * std::pow(rho, gamma_); }
  double dp(double rho) const {
    return a_ + b_ * gamma_ * std::pow(rho, gamma_ - 1.0);
  }

  /// Free energy H(rho) = a rho ln rho + b (rho^gamma - rho)/(gamma-1); the
  /// solution of rho H' - H = p with H(1) = 0.
  double H(double rho) const {
    if (rho == 0.0) return 0.0;
    return a_ * rho * std::log(rho) +
           b_ * (std::pow(rho, gamma_) - rho) / (gamma_ - 1.0);
  }
  double dH(double rho) const {
    return a_ * (std::log(rho) + 1.0) +
           b_ * (gamma_ * std::pow(rho, gamma_ - 1.0) - 1.0) / (gamma_ - 1.0);
  }
  double d2H(double rho) const {
    return a_ / rho + b_ * gamma_ * std::pow(rho, gamma_ - 2.0);
  }

private:
  double a_, b_, gamma_;
};

inline PressureLaw make_law(double a_lin, double b, double gamma) {
  return PressureLaw(a_lin, b, gamma);
}

/// Bregman distance of the free energy, E(rho|z) = H(rho) - H'(z)(rho-z) - H(z).
/// Nonnegative by convexity, zero iff rho = z.
inline double E_rel(double rho, double z, const PressureLaw& law) {
  if (!(z > 0.0)) throw std::invalid_argument("E_rel: reference z must be > 0");
  if (rho < 0.0) throw std::invalid_argument("E_rel: rho must be >= 0");
  return law.H(rho) - law.dH(z) * (rho - z) - law.H(z);
}

/// Partition of the cells into the essential set (rho within [r_lo/2, 2 r_hi])
/// and its residual complement.
struct EssentialResidualMasks {
  std::vector<bool> essential;  ///< per cell
  int n_essential = 0;
  int n_residual = 0;
};

inline EssentialResidualMasks essential_residual_split(const ScalarCellField& rho,
                                                       double r_lo, double r_hi) {
  if (!(r_lo > 0.0) || !(r_hi >= r_lo))
    throw std::invalid_argument("essential_residual_split: need 0 < r_lo <= r_hi");
  EssentialResidualMasks m;
  m.essential.resize(rho.size());
  for (int c = 0; c < rho.size(); ++c) {
    const bool ess = rho[c] >= 0.5 * r_lo && rho[c] <= 2.0 * r_hi;
    m.essential[c] = ess;
    if (ess)
      ++m.n_essential;
    else
      ++m.n_residual;
  }
  return m;
}

}  // namespace fvcr

#endif
