#pragma once
#include <array>
#include <vector>

#include "tflow/superop.hpp"

namespace tflow {

// One reservoir: spin-resolved hybridization strengths, chemical potential and
// the temperature it is quenched to at the cold end of the flow.
struct Reservoir {
  double gamma_up = 1.0;
  double gamma_dn = 1.0;
  double mu = 0.0;
  double T_final = 0.0;
};

struct ModelParams {
  double epsilon = 0.0;  // level position
  double U = 0.0;        // on-site interaction
  std::vector<Reservoir> reservoirs;

  double gamma_tot(int sigma) const {
    double g = 0.0;
    for (const auto& r : reservoirs) g += (sigma == 0 ? r.gamma_up : r.gamma_dn);
    return g;
  }
  double gamma_mu_sum(int sigma) const {  // sum_r Gamma_{r sigma} mu_r
    double g = 0.0;
    for (const auto& r : reservoirs) g += (sigma == 0 ? r.gamma_up : r.gamma_dn) * r.mu;
    return g;
  }
  bool spin_symmetric() const {
    for (const auto& r : reservoirs)
      if (r.gamma_up != r.gamma_dn) return false;
    return true;
  }
};

// Field multi-index: eta = +1 creation / -1 annihilation part, sigma = 0 (up)
// or 1 (down). Packed as so = (eta==+1 ? 0 : 2) + sigma.
struct SpinOrbital {
  int eta;    // +1 or -1
  int sigma;  // 0 = up, 1 = down
};

inline constexpr int kNSO = 4;
inline SpinOrbital so_unpack(int i) { return {i < 2 ? +1 : -1, i % 2}; }
inline int so_pack(int eta, int sigma) { return (eta > 0 ? 0 : 2) + sigma; }
inline int so_bar(int i) { return (i + 2) % 4; }       // eta -> -eta
inline int so_spinflip(int i) { return i ^ 1; }        // sigma -> sigma-bar

// Fock-space operators (basis |0>,|up>,|dn>,|up dn>, |up dn> = d+_up d+_dn |0>).
Mat4 op_d(int eta, int sigma);  // d_{eta sigma}: d+_sigma for eta=+1, d_sigma for eta=-1
Mat4 op_n(int sigma);
Mat4 op_parity();  // (-1)^n
Mat4 op_hamiltonian(const ModelParams& p);

// Superfermion field superoperators G^p_{eta sigma}; p = +1 ("+" field) or -1.
// G^p = (1/sqrt2) [ L(d) + p L(P) R(P d) ] with P the parity operator.
SuperOp superfermion(int p, int eta, int sigma);

// Cached table of the eight fields, G[p][so] with p index 0 -> p=+1, 1 -> p=-1.
struct FieldTable {
  std::array<std::array<SuperOp, kNSO>, 2> G;
  const SuperOp& plus(int so) const { return G[0][so]; }
  const SuperOp& minus(int so) const { return G[1][so]; }
};
const FieldTable& fields();  // built once, immutable

// Bare Liouvillian L = [H, .] (as a superoperator, without any -i).
SuperOp liouvillian(const ModelParams& p);
// Same operator assembled from superfermion bilinears/quartics; equals
// liouvillian() identically and exists as an algebra cross-check.
SuperOp liouvillian_superfermion(const ModelParams& p);

// Infinite-temperature self-energy: -i Sigma_inf = -(1/2) sum_{1} Gamma_{sigma_1}
// G+_1 G-_{1bar} (the contraction reduces to a delta at T=infinity).
// Returned as Sigma_inf itself (the i already divided out).
SuperOp sigma_infty(const ModelParams& p);
// Reservoir-restricted current variant: -i Sigma_I_inf = -(1/4) sum_1 eta_1
// Gamma_{r sigma_1} G-_1 G-_{1bar}; returns Sigma_I_inf.
SuperOp sigma_infty_current(const ModelParams& p, int reservoir);

// L_inf = L + Sigma_inf, the generator of the T=infinity semigroup.
SuperOp l_infty(const ModelParams& p);

// Pi_inf(t) = exp(-i L_inf t) via scaling-and-squaring Pade (Eigen).
SuperOp propagator_infty(const ModelParams& p, double t);
// General exp(-i A t) for a superoperator A.
SuperOp exp_minus_i(const SuperOp& A, double t);

// Spin-swap superoperator X -> S X S with S|up> = |dn>, S|dn> = |up>,
// S|up dn> = -|up dn>. Conjugating a component superoperator with it maps
// sigma -> sigma-bar in every field index.
SuperOp spin_swap();

}  // namespace tflow
