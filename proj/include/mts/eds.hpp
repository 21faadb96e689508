#pragma once

#include <cstdint>
#include <vector>

#include "mts/qp.hpp"

namespace mts {

// Finite-horizon LQ problem with additive stage disturbances p_k:
//   min sum_{k=1}^{N-1} x_k'Q x_k + u_k'R u_k  +  x_N'S x_N
//   s.t. x_{k+1} = A x_k + B u_k + p_k.
struct LqInstance {
  Mat A, B;
  Mat Q;  // stage state weight, PSD
  Mat R;  // input weight, PD
  Mat S;  // terminal weight; defaults to the DARE solution when empty
  int N = 0;
  Vec x0;

  void validate() const;
};

// Stacked prediction matrices: X = calX x0 + calU U + calP P with
// X = [x_1; ...; x_N], U = [u_0; ...; u_{N-1}], P = [p_0; ...; p_{N-1}].
struct LiftedLq {
  Mat calX;  // Nn x n
  Mat calU;  // Nn x Nm, block lower triangular
  Mat calP;  // Nn x Nn, block lower triangular
  Mat calQ;  // blkdiag(Q, ..., Q, S)
  Mat calR;  // blkdiag(R, ..., R)
};

LiftedLq lift(const LqInstance& inst);

struct SensitivityResult {
  Vec U_star;  // optimal stacked input at P = 0
  Mat dU_dP;   // Nm x Nn
};

// Closed-form optimum and sensitivity:
//   U* = -(calU'calQ calU + calR)^{-1} calU'calQ (calX x0 + calP P).
SensitivityResult closed_form_sensitivity(const LqInstance& inst);

// m x n block d u_0* / d p_k of a sensitivity result.
Mat u0_block(const SensitivityResult& sens, const LqInstance& inst, int k);

// Central-difference estimate of d u_0* / d p_k by re-solving the
// equality-constrained QP with perturbed stage offsets.
Mat fd_sensitivity_oracle(const LqInstance& inst, int k, double h = 1e-6);

// Frobenius norms ||d u_0* / d p_k||_F for k = 0..N-1.
std::vector<double> sensitivity_norms(const LqInstance& inst);

struct DecayFit {
  std::vector<double> norms;
  double slope = 0.0;      // of log norm_k vs. k, fitted over k >= 1
  double intercept = 0.0;
  double r2 = 0.0;
};

DecayFit decay_fit(const std::vector<double>& norms);

// Seeded random instance: A scaled to the target spectral radius, B standard
// normal, Q = M'M + 1e-6 I, R = I, S from the DARE, x0 standard normal.
LqInstance random_instance(std::uint64_t seed, int n, int m, int N,
                           double spectral_radius = 0.95);

}  // namespace mts
