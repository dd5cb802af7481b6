#pragma once

// Concrete models: the eternal non-Markovian qubit with its closed-form
// Bloch solution, and the extended chain of spinless fermions with
// site-density bath couplings in a fixed-particle-number sector.

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "plqt/linops.hpp"
#include "plqt/model.hpp"

namespace plqt {

inline ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}

inline ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

/// Purely dissipative qubit with channels (sigma_x, 1/2), (sigma_y, 1/2),
/// (sigma_z, -tanh(t)/2). The negative z-strength makes it inaccessible to
/// conventional quantum-jump unravelings at all times.
inline PseudoLindbladModel eternal_qubit() {
  std::vector<JumpChannel> channels;
  channels.push_back(JumpChannel::constant("sx", pauli_x(), 0.5));
  channels.push_back(JumpChannel::constant("sy", pauli_y(), 0.5));
  channels.push_back(
      JumpChannel::time_dependent("sz", pauli_z(), [](double t) { return -0.5 * std::tanh(t); }));
  return make_model(TimeMatrix::constant(ComplexMatrix::Zero(2, 2)), std::move(channels));
}

/// (cos(theta/2), e^{i phi} sin(theta/2)); unit norm.
inline ComplexVector bloch_state(double theta, double phi) {
  ComplexVector v(2);
  v(0) = std::cos(0.5 * theta);
  v(1) = std::polar(std::sin(0.5 * theta), phi);
  return v;
}

struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline BlochVector bloch_vector(double theta, double phi) {
  return BlochVector{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                     std::cos(theta)};
}

inline BlochVector bloch_of_state(const ComplexVector& psi) {
  const double n = psi.squaredNorm();
  const Complex od = std::conj(psi(0)) * psi(1);
  return BlochVector{2.0 * od.real() / n, 2.0 * od.imag() / n,
                     (std::norm(psi(0)) - std::norm(psi(1))) / n};
}

/// Closed-form solution of the eternal qubit master equation:
/// x(t) = x0 (1+e^{-2t})/2, y likewise, z(t) = z0 e^{-2t}.
inline BlochVector eternal_qubit_analytic(const BlochVector& b0, double t) {
  const double planar = 0.5 * (1.0 + std::exp(-2.0 * t));
  return BlochVector{b0.x * planar, b0.y * planar, b0.z * std::exp(-2.0 * t)};
}

inline double rho00_of_bloch(const BlochVector& b) { return 0.5 * (1.0 + b.z); }

inline Complex rho01_of_bloch(const BlochVector& b) { return 0.5 * Complex(b.x, -b.y); }

enum class Boundary { periodic, open };

inline std::string to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "open"; }

/// Fixed-particle-number occupation basis: bit l of a state word is the
/// occupancy of site l, words listed in increasing integer order.
struct FermionBasis {
  int sites = 0;
  int particles = 0;
  std::vector<std::uint32_t> states;

  std::size_t size() const { return states.size(); }

  /// Position of an occupation word in the sector; -1 if absent.
  std::ptrdiff_t index_of(std::uint32_t word) const {
    auto it = std::lower_bound(states.begin(), states.end(), word);
    if (it == states.end() || *it != word) return -1;
    return it - states.begin();
  }
};

inline FermionBasis fermion_basis(int sites, int particles) {
  if (sites < 1 || sites > 30 || particles < 0 || particles > sites) {
    throw std::invalid_argument("fermion_basis: invalid sector");
  }
  FermionBasis basis;
  basis.sites = sites;
  basis.particles = particles;
  for (std::uint32_t word = 0; word < (1u << sites); ++word) {
    if (std::popcount(word) == particles) basis.states.push_back(word);
  }
  return basis;
}

namespace detail {

/// Jordan-Wigner string parity: (-1)^(number of occupied sites below l).
inline int jw_sign(std::uint32_t word, int site) {
  const std::uint32_t below = word & ((1u << site) - 1u);
  return (std::popcount(below) & 1) ? -1 : 1;
}

}  // namespace detail

/// Tight-binding chain with nearest-neighbour density-density interaction,
/// built in the (sites, particles) sector:
///   H = -J sum_l (a_l^+ a_{l+1} + h.c.) + V sum_l n_l n_{l+1},
/// with the boundary choosing whether the l = sites-1 term wraps around.
inline std::pair<ComplexMatrix, FermionBasis> hubbard_chain(int sites, int particles, double j_hop,
                                                            double v_int, Boundary boundary) {
  if (sites < 2) throw std::invalid_argument("hubbard_chain: need at least 2 sites");
  FermionBasis basis = fermion_basis(sites, particles);
  const auto dim = static_cast<Eigen::Index>(basis.size());
  ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
  const int n_bonds = boundary == Boundary::periodic ? sites : sites - 1;

  for (std::size_t col = 0; col < basis.size(); ++col) {
    const std::uint32_t word = basis.states[col];
    double diag = 0.0;
    for (int l = 0; l < n_bonds; ++l) {
      const int lp = (l + 1) % sites;
      const bool occ_l = (word >> l) & 1u;
      const bool occ_lp = (word >> lp) & 1u;
      if (occ_l && occ_lp) diag += v_int;

      // hopping a_l^+ a_{lp}: annihilate at lp, create at l
      if (occ_lp && !occ_l) {
        int sign = detail::jw_sign(word, lp);
        const std::uint32_t mid = word & ~(1u << lp);
        sign *= detail::jw_sign(mid, l);
        const std::uint32_t dest = mid | (1u << l);
        const std::ptrdiff_t row = basis.index_of(dest);
        h(row, static_cast<Eigen::Index>(col)) += -j_hop * sign;
      }
      // hopping a_{lp}^+ a_l
      if (occ_l && !occ_lp) {
        int sign = detail::jw_sign(word, l);
        const std::uint32_t mid = word & ~(1u << l);
        sign *= detail::jw_sign(mid, lp);
        const std::uint32_t dest = mid | (1u << lp);
        const std::ptrdiff_t row = basis.index_of(dest);
        h(row, static_cast<Eigen::Index>(col)) += -j_hop * sign;
      }
    }
    h(static_cast<Eigen::Index>(col), static_cast<Eigen::Index>(col)) += diag;
  }
  return {std::move(h), std::move(basis)};
}

/// Site density operators n_l = a_l^+ a_l, diagonal in the occupation basis.
inline std::vector<ComplexMatrix> site_density_couplings(const FermionBasis& basis) {
  const auto dim = static_cast<Eigen::Index>(basis.size());
  std::vector<ComplexMatrix> ops;
  ops.reserve(static_cast<std::size_t>(basis.sites));
  for (int l = 0; l < basis.sites; ++l) {
    ComplexMatrix n_l = ComplexMatrix::Zero(dim, dim);
    for (std::size_t k = 0; k < basis.size(); ++k) {
      if ((basis.states[k] >> l) & 1u) n_l(static_cast<Eigen::Index>(k),
                                           static_cast<Eigen::Index>(k)) = 1.0;
    }
    ops.push_back(std::move(n_l));
  }
  return ops;
}

/// V sum_l n_l n_{l+1} with the same boundary convention as hubbard_chain.
inline ComplexMatrix interaction_energy_observable(const FermionBasis& basis, double v_int,
                                                   Boundary boundary) {
  const auto dim = static_cast<Eigen::Index>(basis.size());
  const int n_bonds = boundary == Boundary::periodic ? basis.sites : basis.sites - 1;
  ComplexMatrix obs = ComplexMatrix::Zero(dim, dim);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const std::uint32_t word = basis.states[k];
    int pairs = 0;
    for (int l = 0; l < n_bonds; ++l) {
      const int lp = (l + 1) % basis.sites;
      if (((word >> l) & 1u) && ((word >> lp) & 1u)) ++pairs;
    }
    obs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = v_int * pairs;
  }
  return obs;
}

/// Unit basis vector for an occupation pattern such as "0110" (site 0 is the
/// leftmost character).
inline ComplexVector cdw_state(const FermionBasis& basis, std::string_view pattern) {
  if (static_cast<int>(pattern.size()) != basis.sites) {
    throw std::invalid_argument("cdw_state: pattern length must equal the number of sites");
  }
  std::uint32_t word = 0;
  for (int l = 0; l < basis.sites; ++l) {
    const char c = pattern[static_cast<std::size_t>(l)];
    if (c == '1') {
      word |= (1u << l);
    } else if (c != '0') {
      throw std::invalid_argument("cdw_state: pattern must contain only '0' and '1'");
    }
  }
  const std::ptrdiff_t idx = basis.index_of(word);
  if (idx < 0) {
    throw std::invalid_argument("cdw_state: pattern '" + std::string(pattern) +
                                "' lies outside the basis sector");
  }
  ComplexVector v = ComplexVector::Zero(static_cast<Eigen::Index>(basis.size()));
  v(static_cast<Eigen::Index>(idx)) = 1.0;
  return v;
}

}  // namespace plqt
