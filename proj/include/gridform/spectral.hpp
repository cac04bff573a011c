#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace gridform {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns, orthonormal, matching order
};

/// Cyclic Jacobi rotations on a symmetric matrix. Robust and dependency
/// free; throws if the off-diagonal norm has not collapsed after
/// `max_sweeps` sweeps (not expected for symmetric input).
SymmetricEigen jacobi_eigen(Eigen::MatrixXd a, int max_sweeps = 64);

/// Eigenvalues of the susceptance Laplacian, ascending. For a connected
/// graph the smallest is 0 (within roundoff) and the rest are positive.
Eigen::VectorXd laplacian_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& laplacian);

/// Block companion form of the linearized angle/frequency network dynamics
/// for identically tuned nodes: [[0, I], [-L/m, -(d/m) I]].
struct LargerLaplacian {
  Eigen::MatrixXd matrix;  // 2n x 2n
  double inertia = 1.0;
  double damping = 1.0;
};

LargerLaplacian assemble_larger_laplacian(const Eigen::Ref<const Eigen::MatrixXd>& laplacian,
                                          double inertia, double damping);

enum class ModeClass { zero_mode, real_stable, complex_stable };

const char* to_string(ModeClass c);

struct Mode {
  std::complex<double> eta;
  double source_lambda = 0.0;
  ModeClass cls = ModeClass::real_stable;
};

struct ModeSet {
  std::vector<Mode> modes;   // 2 per lambda, grouped by ascending lambda
  Eigen::VectorXd lambdas;   // source Laplacian eigenvalues, ascending
  double inertia = 1.0;
  double damping = 1.0;
  double eta2 = 0.0;         // largest real part over the nonzero modes
};

/// Roots of m*eta^2 + d*eta + lambda = 0 per Laplacian eigenvalue; lambda=0
/// yields {0, -d/m}. Eigenvalues below 1e-10 * max(lambda) are snapped to 0
/// first so the zero mode stays exactly on the axis.
ModeSet closed_form_modes(const Eigen::Ref<const Eigen::VectorXd>& lambdas, double inertia,
                          double damping);

struct ModeResidual {
  std::complex<double> eta;
  double pivot_ratio = 0.0;    // smallest |pivot| of (L - eta I) over ||L||
  double poly_residual = 0.0;  // normalized |m eta^2 + d eta + lambda|
  bool ok = false;
};

struct VerifyReport {
  std::vector<ModeResidual> entries;
  double tol = 0.0;
  bool all_ok = false;
};

/// Independent singularity check: each claimed mode must make
/// (matrix - eta I) numerically rank deficient.
VerifyReport verify_modes(const LargerLaplacian& sys, const ModeSet& modes, double tol = 1e-9);

/// Deterministic orthonormal basis of the complement of the constant vector
/// (Helmert construction), n x (n-1).
Eigen::MatrixXd difference_basis(int n);

struct AvgDiffState {
  double theta_avg = 0.0;
  double omega_avg = 0.0;
  Eigen::VectorXd delta_theta;  // length n-1
  Eigen::VectorXd delta_omega;
};

/// [theta; omega] (length 2n) -> average/difference coordinates and back.
/// The round trip is exact up to roundoff.
AvgDiffState to_avg_diff(const Eigen::Ref<const Eigen::VectorXd>& state);
Eigen::VectorXd from_avg_diff(const AvgDiffState& s);

struct SteadyStatePrediction {
  double omega_avg = 0.0;            // common post-disturbance frequency
  Eigen::VectorXd theta_deviation;   // zero-mean angle profile
  double theta_avg_slope = 0.0;      // ramp rate of the average angle
};

/// Post-step constants for an injected power disturbance p_d:
/// omega -> mean(p_d)/d on every node, and L * theta = p_d - d*omega*1
/// solved on the complement of the constant vector.
SteadyStatePrediction predict_disturbance_steady_state(
    const Eigen::Ref<const Eigen::MatrixXd>& laplacian, double inertia, double damping,
    const Eigen::Ref<const Eigen::VectorXd>& p_d);

/// Eigenvalues -(1 + r_q*lambda)/tau_f of the voltage channel, in ascending
/// lambda order (so from -1/tau_f downward).
Eigen::VectorXd voltage_mode_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& laplacian,
                                      double r_q, double tau_f);

struct TuningReport {
  double eta2 = 0.0;
  double lambda_2 = 0.0;    // smallest nonzero Laplacian eigenvalue
  double lambda_max = 0.0;
  bool oscillatory = false;           // d^2 < 4 * lambda_max * m
  double d_crit = 0.0;                // 2*sqrt(lambda_max * m)
  double rocof_per_unit_step = 0.0;   // 1/m
};

TuningReport tuning_report(const Eigen::Ref<const Eigen::MatrixXd>& laplacian, double inertia,
                           double damping);

}  // namespace gridform
