#include "gridform/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gridform/errors.hpp"

namespace gridform {

namespace {

double offdiag_norm(const Eigen::MatrixXd& a) {
  double s = 0.0;
  for (Eigen::Index p = 0; p < a.rows(); ++p)
    for (Eigen::Index q = p + 1; q < a.cols(); ++q) s += a(p, q) * a(p, q);
  return std::sqrt(2.0 * s);
}

}  // namespace

SymmetricEigen jacobi_eigen(Eigen::MatrixXd a, int max_sweeps) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ValidationError("jacobi_eigen: matrix must be square");
  const double scale = a.norm();
  if ((a - a.transpose()).norm() > 1e-9 * std::max(scale, 1.0))
    throw ValidationError("jacobi_eigen: matrix must be symmetric");

  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  if (n > 1 && scale > 0.0) {
    const double stop = 1e-15 * scale;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
      if (offdiag_norm(a) <= stop) {
        converged = true;
        break;
      }
      for (Eigen::Index p = 0; p < n - 1; ++p) {
        for (Eigen::Index q = p + 1; q < n; ++q) {
          const double apq = a(p, q);
          if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
          const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
          const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          const double tau = s / (1.0 + c);
          const double app = a(p, p), aqq = a(q, q);
          a(p, p) = app - t * apq;
          a(q, q) = aqq + t * apq;
          a(p, q) = a(q, p) = 0.0;
          for (Eigen::Index r = 0; r < n; ++r) {
            if (r != p && r != q) {
              const double arp = a(r, p), arq = a(r, q);
              a(r, p) = a(p, r) = arp - s * (arq + tau * arp);
              a(r, q) = a(q, r) = arq + s * (arp - tau * arq);
            }
            const double vrp = v(r, p), vrq = v(r, q);
            v(r, p) = vrp - s * (vrq + tau * vrp);
            v(r, q) = vrq + s * (vrp - tau * vrq);
          }
        }
      }
    }
    if (!converged && offdiag_norm(a) > stop)
      throw std::runtime_error("jacobi_eigen: no convergence after " +
                               std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

Eigen::VectorXd laplacian_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& laplacian) {
  return jacobi_eigen(laplacian).values;
}

LargerLaplacian assemble_larger_laplacian(const Eigen::Ref<const Eigen::MatrixXd>& laplacian,
                                          double inertia, double damping) {
  if (!(inertia > 0.0) || !(damping > 0.0))
    throw ValidationError("assemble_larger_laplacian: inertia and damping must be > 0");
  const Eigen::Index n = laplacian.rows();
  if (laplacian.cols() != n)
    throw ValidationError("assemble_larger_laplacian: laplacian must be square");
  LargerLaplacian out;
  out.inertia = inertia;
  out.damping = damping;
  out.matrix = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  out.matrix.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
  out.matrix.bottomLeftCorner(n, n) = -laplacian / inertia;
  out.matrix.bottomRightCorner(n, n) =
      -(damping / inertia) * Eigen::MatrixXd::Identity(n, n);
  return out;
}

const char* to_string(ModeClass c) {
  switch (c) {
    case ModeClass::zero_mode: return "zero-mode";
    case ModeClass::real_stable: return "real-stable";
    case ModeClass::complex_stable: return "complex-stable";
  }
  return "?";
}

ModeSet closed_form_modes(const Eigen::Ref<const Eigen::VectorXd>& lambdas, double inertia,
                          double damping) {
  if (!(inertia > 0.0) || !(damping > 0.0))
    throw ValidationError("closed_form_modes: inertia and damping must be > 0");
  ModeSet set;
  set.inertia = inertia;
  set.damping = damping;
  set.lambdas = lambdas;
  std::sort(set.lambdas.data(), set.lambdas.data() + set.lambdas.size());
  const double lmax = set.lambdas.size() ? set.lambdas.maxCoeff() : 0.0;
  const double snap = 1e-10 * std::max(lmax, 0.0);
  const double half_rate = damping / (2.0 * inertia);
  for (Eigen::Index i = 0; i < set.lambdas.size(); ++i) {
    double lambda = set.lambdas[i];
    if (std::abs(lambda) <= snap) lambda = set.lambdas[i] = 0.0;
    if (lambda == 0.0) {
      set.modes.push_back({{0.0, 0.0}, 0.0, ModeClass::zero_mode});
      set.modes.push_back({{-damping / inertia, 0.0}, 0.0, ModeClass::real_stable});
      continue;
    }
    const double disc = half_rate * half_rate - lambda / inertia;
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      set.modes.push_back({{-half_rate - root, 0.0}, lambda, ModeClass::real_stable});
      set.modes.push_back({{-half_rate + root, 0.0}, lambda, ModeClass::real_stable});
    } else {
      const double imag = std::sqrt(-disc);
      set.modes.push_back({{-half_rate, -imag}, lambda, ModeClass::complex_stable});
      set.modes.push_back({{-half_rate, imag}, lambda, ModeClass::complex_stable});
    }
  }
  set.eta2 = -std::numeric_limits<double>::infinity();
  for (const auto& m : set.modes)
    if (m.cls != ModeClass::zero_mode) set.eta2 = std::max(set.eta2, m.eta.real());
  return set;
}

VerifyReport verify_modes(const LargerLaplacian& sys, const ModeSet& modes, double tol) {
  VerifyReport report;
  report.tol = tol;
  report.all_ok = true;
  const Eigen::Index dim = sys.matrix.rows();
  const double scale = std::max(sys.matrix.norm(), 1e-300);
  const Eigen::MatrixXcd base = sys.matrix.cast<std::complex<double>>();
  for (const auto& m : modes.modes) {
    Eigen::MatrixXcd shifted = base;
    shifted.diagonal().array() -= m.eta;
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(shifted);
    double smallest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dim; ++i)
      smallest = std::min(smallest, std::abs(lu.matrixLU()(i, i)));
    ModeResidual r;
    r.eta = m.eta;
    r.pivot_ratio = smallest / scale;
    const std::complex<double> poly =
        modes.inertia * m.eta * m.eta + modes.damping * m.eta + m.source_lambda;
    const double poly_scale = std::max(1.0, modes.inertia * std::norm(m.eta) +
                                                modes.damping * std::abs(m.eta) +
                                                std::abs(m.source_lambda));
    r.poly_residual = std::abs(poly) / poly_scale;
    r.ok = r.pivot_ratio < tol;
    report.all_ok = report.all_ok && r.ok;
    report.entries.push_back(r);
  }
  return report;
}

Eigen::MatrixXd difference_basis(int n) {
  if (n < 1) throw ValidationError("difference_basis: n must be >= 1");
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, n - 1);
  for (int j = 0; j < n - 1; ++j) {
    const double k = static_cast<double>(j + 1);
    const double norm = std::sqrt(k * (k + 1.0));
    for (int i = 0; i <= j; ++i) u(i, j) = 1.0 / norm;
    u(j + 1, j) = -k / norm;
  }
  return u;
}

AvgDiffState to_avg_diff(const Eigen::Ref<const Eigen::VectorXd>& state) {
  if (state.size() % 2 != 0)
    throw ValidationError("to_avg_diff: state length must be even ([theta; omega])");
  const Eigen::Index n = state.size() / 2;
  const Eigen::MatrixXd u = difference_basis(static_cast<int>(n));
  AvgDiffState s;
  s.theta_avg = state.head(n).mean();
  s.omega_avg = state.tail(n).mean();
  s.delta_theta = u.transpose() * state.head(n);
  s.delta_omega = u.transpose() * state.tail(n);
  return s;
}

Eigen::VectorXd from_avg_diff(const AvgDiffState& s) {
  const Eigen::Index n = s.delta_theta.size() + 1;
  if (s.delta_omega.size() != n - 1)
    throw ValidationError("from_avg_diff: delta vectors must have equal length");
  const Eigen::MatrixXd u = difference_basis(static_cast<int>(n));
  Eigen::VectorXd state(2 * n);
  state.head(n) = Eigen::VectorXd::Constant(n, s.theta_avg) + u * s.delta_theta;
  state.tail(n) = Eigen::VectorXd::Constant(n, s.omega_avg) + u * s.delta_omega;
  return state;
}

SteadyStatePrediction predict_disturbance_steady_state(
    const Eigen::Ref<const Eigen::MatrixXd>& laplacian, double inertia, double damping,
    const Eigen::Ref<const Eigen::VectorXd>& p_d) {
  if (!(inertia > 0.0) || !(damping > 0.0))
    throw ValidationError("predict_disturbance_steady_state: inertia and damping must be > 0");
  const Eigen::Index n = laplacian.rows();
  if (p_d.size() != n)
    throw ValidationError("predict_disturbance_steady_state: p_d length must match laplacian");
  SteadyStatePrediction out;
  out.omega_avg = p_d.mean() / damping;
  out.theta_avg_slope = out.omega_avg;
  if (n == 1) {
    out.theta_deviation = Eigen::VectorXd::Zero(1);
    return out;
  }
  const Eigen::VectorXd rhs =
      p_d - Eigen::VectorXd::Constant(n, damping * out.omega_avg);
  const Eigen::MatrixXd u = difference_basis(static_cast<int>(n));
  const Eigen::MatrixXd reduced = u.transpose() * laplacian * u;  // SPD for connected graphs
  const Eigen::VectorXd y = reduced.ldlt().solve(u.transpose() * rhs);
  out.theta_deviation = u * y;
  return out;
}

Eigen::VectorXd voltage_mode_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& laplacian,
                                      double r_q, double tau_f) {
  if (!(tau_f > 0.0)) throw ValidationError("voltage_mode_spectrum: tau_f must be > 0");
  if (r_q < 0.0) throw ValidationError("voltage_mode_spectrum: r_q must be >= 0");
  const Eigen::VectorXd lambdas = laplacian_spectrum(laplacian);
  return (-(1.0 + r_q * lambdas.array()) / tau_f).matrix();
}

TuningReport tuning_report(const Eigen::Ref<const Eigen::MatrixXd>& laplacian, double inertia,
                           double damping) {
  const ModeSet modes = closed_form_modes(laplacian_spectrum(laplacian), inertia, damping);
  TuningReport r;
  r.eta2 = modes.eta2;
  r.lambda_max = modes.lambdas.size() ? modes.lambdas.maxCoeff() : 0.0;
  r.lambda_2 = 0.0;
  for (Eigen::Index i = 0; i < modes.lambdas.size(); ++i)
    if (modes.lambdas[i] > 0.0) {
      r.lambda_2 = modes.lambdas[i];
      break;
    }
  r.oscillatory = damping * damping < 4.0 * r.lambda_max * inertia;
  r.d_crit = 2.0 * std::sqrt(r.lambda_max * inertia);
  r.rocof_per_unit_step = 1.0 / inertia;
  return r;
}

}  // namespace gridform
