#pragma once

// Pseudo-Lindblad data model: a Hamiltonian plus jump channels whose
// strengths gamma_i(t) may be negative, the effective Hamiltonian of the
// no-jump drift, the master-equation right-hand side, and the exact
// one-step process average used to certify unbiasedness of the stochastic
// update rules.

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "plqt/linops.hpp"
#include "plqt/state.hpp"

namespace plqt {

/// A square matrix that may depend on time. Constant matrices are cached so
/// the stepping loop never re-evaluates them.
class TimeMatrix {
 public:
  TimeMatrix() = default;

  static TimeMatrix constant(ComplexMatrix m) {
    TimeMatrix tm;
    tm.constant_ = std::make_shared<const ComplexMatrix>(std::move(m));
    return tm;
  }

  static TimeMatrix from_function(Eigen::Index dim, std::function<ComplexMatrix(double)> fn) {
    TimeMatrix tm;
    tm.fn_ = std::move(fn);
    tm.fn_dim_ = dim;
    return tm;
  }

  bool is_constant() const { return constant_ != nullptr; }

  Eigen::Index dim() const { return constant_ ? constant_->rows() : fn_dim_; }

  /// Value at time t; `scratch` receives the result for the time-dependent
  /// case so the hot loop can reuse storage.
  const ComplexMatrix& at(double t, ComplexMatrix& scratch) const {
    if (constant_) return *constant_;
    scratch = fn_(t);
    return scratch;
  }

  ComplexMatrix value(double t) const {
    if (constant_) return *constant_;
    return fn_(t);
  }

 private:
  std::shared_ptr<const ComplexMatrix> constant_;
  std::function<ComplexMatrix(double)> fn_;
  Eigen::Index fn_dim_ = 0;
};

/// One dissipation channel: jump operator L, signed strength gamma(t), and
/// the cached product L^dagger L (kept in sync with L).
struct JumpChannel {
  std::string label;
  ComplexMatrix L;
  ComplexMatrix ldag_l;
  double gamma_value = 0.0;
  std::function<double(double)> gamma_fn;  // overrides gamma_value when set

  double gamma(double t) const { return gamma_fn ? gamma_fn(t) : gamma_value; }

  void set_operator(const ComplexMatrix& l_new) {
    L = l_new;
    ldag_l.resize(L.cols(), L.cols());
    ldag_l.noalias() = L.adjoint() * L;
  }

  static JumpChannel constant(std::string label, ComplexMatrix l, double gamma) {
    JumpChannel ch;
    ch.label = std::move(label);
    ch.set_operator(l);
    ch.gamma_value = gamma;
    return ch;
  }

  static JumpChannel time_dependent(std::string label, ComplexMatrix l,
                                    std::function<double(double)> gamma) {
    JumpChannel ch;
    ch.label = std::move(label);
    ch.set_operator(l);
    ch.gamma_fn = std::move(gamma);
    return ch;
  }
};

/// Rebuilds the channel list from the current state; must be a pure
/// function of (psi, t). Used by state-dependent channel decompositions.
using ChannelRefresher =
    std::function<void(const ComplexVector& psi, double t, std::vector<JumpChannel>& out)>;

struct PseudoLindbladModel {
  Eigen::Index dim = 0;
  TimeMatrix hamiltonian;
  std::vector<JumpChannel> channels;  // selection order is this order
  ChannelRefresher refresher;         // optional
};

inline PseudoLindbladModel make_model(TimeMatrix hamiltonian, std::vector<JumpChannel> channels,
                                      ChannelRefresher refresher = nullptr) {
  PseudoLindbladModel m;
  m.dim = hamiltonian.dim();
  m.hamiltonian = std::move(hamiltonian);
  m.channels = std::move(channels);
  m.refresher = std::move(refresher);
  const ComplexMatrix h0 = m.hamiltonian.value(0.0);
  if (!is_hermitian(h0)) {
    throw std::invalid_argument("PseudoLindbladModel: hamiltonian(0) is not Hermitian");
  }
  for (const auto& ch : m.channels) {
    if (ch.L.rows() != m.dim || ch.L.cols() != m.dim) {
      throw std::invalid_argument("PseudoLindbladModel: channel '" + ch.label +
                                  "' dimension mismatch");
    }
  }
  return m;
}

/// H(t) - (i/2) sum_i gamma_i(t) L_i^dagger L_i. Non-Hermitian in general.
inline ComplexMatrix effective_hamiltonian(const PseudoLindbladModel& m, double t) {
  ComplexMatrix h = m.hamiltonian.value(t);
  const Complex half_i(0.0, 0.5);
  for (const auto& ch : m.channels) {
    h -= half_i * ch.gamma(t) * ch.ldag_l;
  }
  return h;
}

/// -i[H, rho] + sum_i gamma_i (L_i rho L_i^dagger - {L_i^dagger L_i, rho}/2).
/// Hermitian and traceless up to rounding for Hermitian input.
inline DensityMatrix master_rhs(const PseudoLindbladModel& m, const DensityMatrix& rho, double t) {
  const ComplexMatrix h = m.hamiltonian.value(t);
  const Complex minus_i(0.0, -1.0);
  DensityMatrix out = minus_i * (h * rho - rho * h);
  for (const auto& ch : m.channels) {
    const double g = ch.gamma(t);
    if (g == 0.0) continue;
    out.noalias() += g * (ch.L * rho * ch.L.adjoint());
    out.noalias() -= (0.5 * g) * (ch.ldag_l * rho);
    out.noalias() -= (0.5 * g) * (rho * ch.ldag_l);
  }
  return out;
}

/// Exact probability-weighted average of all one-step outcomes of the
/// update rules (no sampling): sum_i r_i dt sigma^(i) + (1 - sum r_i dt)
/// sigma^(0). Equals sigma + dt * master_rhs(sigma) up to the single
/// dt^2 H_eff sigma H_eff^dagger remainder of the drift branch.
inline DensityMatrix one_step_average(const PseudoLindbladModel& m, const SignedState& st,
                                      double dt, const std::vector<double>& rates) {
  if (dt <= 0.0) {
    if (dt == 0.0) return static_cast<double>(st.sign) * (st.psi * st.psi.adjoint());
    throw std::invalid_argument("one_step_average: dt must be non-negative");
  }
  if (rates.size() != m.channels.size()) {
    throw std::invalid_argument("one_step_average: one rate per channel required");
  }
  double rate_sum = 0.0;
  for (double r : rates) {
    if (r <= 0.0) throw std::invalid_argument("one_step_average: rates must be strictly positive");
    rate_sum += r;
  }
  if (rate_sum * dt >= 1.0) {
    std::ostringstream msg;
    msg << "one_step_average: sum(r_i) * dt = " << rate_sum * dt << " >= 1 at t = " << st.t;
    throw std::invalid_argument(msg.str());
  }

  const double s = static_cast<double>(st.sign);
  DensityMatrix avg = DensityMatrix::Zero(m.dim, m.dim);

  // Jump branches: psi^(i) = sqrt(|gamma_i|) L_i psi / sqrt(r_i),
  // sign^(i) = sign(gamma_i) s, weight r_i dt.
  for (std::size_t i = 0; i < m.channels.size(); ++i) {
    const auto& ch = m.channels[i];
    const double g = ch.gamma(st.t);
    if (g == 0.0) continue;
    const ComplexVector jumped = std::sqrt(std::abs(g) / rates[i]) * (ch.L * st.psi);
    const double branch_sign = (g < 0.0 ? -s : s);
    avg.noalias() += (rates[i] * dt * branch_sign) * (jumped * jumped.adjoint());
  }

  // Drift branch: psi^(0) = (1 - i dt H_eff) psi / sqrt(1 - dt sum r).
  const ComplexMatrix h_eff = effective_hamiltonian(m, st.t);
  const Complex minus_i_dt(0.0, -dt);
  const ComplexVector drifted =
      (st.psi + minus_i_dt * (h_eff * st.psi)) / std::sqrt(1.0 - dt * rate_sum);
  avg.noalias() += ((1.0 - dt * rate_sum) * s) * (drifted * drifted.adjoint());
  return avg;
}

}  // namespace plqt
