#include "xfer/descriptors.hpp"

#include <cmath>

namespace xfer {


DescriptorBasis::DescriptorBasis(double cutoff, int n_radial, int n_angular, int n_angular_radial)
    : cutoff_(cutoff), n_radial_(n_radial), n_angular_(n_angular), n_ar_(n_angular_radial) {
  if (!(cutoff > 0.0) || n_radial < 1 || n_angular < 1 || n_angular_radial < 1) {
    throw Error("descriptor basis needs cutoff > 0 and at least one function per channel");
  }
  if (n_angular > 12) throw Error("angular order above 11 is not supported");
  const double r_lo = 0.3 * cutoff;
  const double spacing = (cutoff - r_lo) / n_radial;
  for (int m = 0; m < n_radial; ++m) centers_.push_back(r_lo + m * spacing);
  eta_ = 0.5 / (spacing * spacing);
  const double ar_spacing = (cutoff - r_lo) / n_angular_radial;
  for (int a = 0; a < n_angular_radial; ++a) ar_centers_.push_back(r_lo + a * ar_spacing);
  ar_eta_ = 0.5 / (ar_spacing * ar_spacing);

  pair_index_.assign(n_ar_ * n_ar_, -1);
  for (int a = 0; a < n_ar_; ++a) {
    for (int b = a; b < n_ar_; ++b) {
      pair_index_[a * n_ar_ + b] = pair_index_[b * n_ar_ + a] = static_cast<int>(pairs_.size());
      pairs_.push_back({a, b});
    }
  }

  for (int p = 0; p < n_angular; ++p) {
    for (int a = p; a >= 0; --a) {
      for (int b = p - a; b >= 0; --b) {
        const int c = p - a - b;
        exponents_.push_back({a, b, c});
        degree_.push_back(p);
        multinomial_.push_back(std::tgamma(p + 1.0) /
                               (std::tgamma(a + 1.0) * std::tgamma(b + 1.0) * std::tgamma(c + 1.0)));
      }
    }
  }

  // T_0 = 1, T_1 = c, T_{l+1} = 2 c T_l - T_{l-1}, stored as monomial coefficients.
  cheb_.assign(n_angular, std::vector<double>(n_angular, 0.0));
  cheb_[0][0] = 1.0;
  if (n_angular > 1) cheb_[1][1] = 1.0;
  for (int l = 1; l + 1 < n_angular; ++l) {
    for (int p = 0; p < n_angular; ++p) {
      double v = -cheb_[l - 1][p];
      if (p > 0) v += 2.0 * cheb_[l][p - 1];
      cheb_[l + 1][p] = v;
    }
  }
}

void DescriptorBasis::gaussians(double r, double cutoff, const std::vector<double>& centers,
                                double eta, double* value, double* derivative) {
  const double fc = cutoff_envelope(r, cutoff);
  const double dfc = cutoff_envelope_derivative(r, cutoff);
  for (std::size_t m = 0; m < centers.size(); ++m) {
    const double x = r - centers[m];
    const double g = std::exp(-eta * x * x);
    value[m] = g * fc;
    derivative[m] = g * (dfc - 2.0 * eta * x * fc);
  }
}

void DescriptorBasis::radial(double r, double* value, double* derivative) const {
  gaussians(r, cutoff_, centers_, eta_, value, derivative);
}

void DescriptorBasis::angular_radial(double r, double* value, double* derivative) const {
  gaussians(r, cutoff_, ar_centers_, ar_eta_, value, derivative);
}

void DescriptorBasis::evaluate_monomials(const Vec3& u, double* value, double* gx, double* gy,
                                         double* gz) const {
  // pw[k][e + 1] = u_k^e, with pw[k][0] = 0 standing in for u_k^-1 times a zero exponent.
  double pw[3][17];
  for (int k = 0; k < 3; ++k) {
    pw[k][0] = 0.0;
    pw[k][1] = 1.0;
    for (int e = 1; e < n_angular_; ++e) pw[k][e + 1] = pw[k][e] * u[k];
  }
  const int nm = static_cast<int>(exponents_.size());
  for (int idx = 0; idx < nm; ++idx) {
    const auto& ex = exponents_[idx];
    const double px = pw[0][ex[0] + 1], py = pw[1][ex[1] + 1], pz = pw[2][ex[2] + 1];
    value[idx] = px * py * pz;
    if (gx) {
      gx[idx] = ex[0] * pw[0][ex[0]] * py * pz;
      gy[idx] = ex[1] * px * pw[1][ex[1]] * pz;
      gz[idx] = ex[2] * px * py * pw[2][ex[2]];
    }
  }
}

void DescriptorBasis::accumulate_moments(const NeighborList& nl, int i, Moments& mom) const {
  const auto list = nl.of(i);
  const int nn = static_cast<int>(list.size());
  const int nm = static_cast<int>(exponents_.size());
  mom.R.resize(n_radial_, nn);
  mom.dR.resize(n_radial_, nn);
  mom.A.resize(n_ar_, nn);
  mom.dA.resize(n_ar_, nn);
  mom.mono.resize(nm, nn);
  mom.gx.resize(nm, nn);
  mom.gy.resize(nm, nn);
  mom.gz.resize(nm, nn);
  mom.r.resize(nn);
  mom.u.resize(3, nn);
  for (int n = 0; n < nn; ++n) {
    const auto& p = list[n];
    mom.r[n] = p.r;
    const Vec3 u = p.d / p.r;
    mom.u.col(n) = u;
    radial(p.r, mom.R.col(n).data(), mom.dR.col(n).data());
    angular_radial(p.r, mom.A.col(n).data(), mom.dA.col(n).data());
    evaluate_monomials(u, mom.mono.col(n).data(), mom.gx.col(n).data(), mom.gy.col(n).data(),
                       mom.gz.col(n).data());
  }
  mom.S.noalias() = mom.A * mom.mono.transpose();
  mom.Q.noalias() = mom.A * mom.A.transpose();
}

Eigen::MatrixXd DescriptorBasis::compute(const NeighborList& nl, int n_atoms, Workspace* ws) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), n_atoms);
  Moments local;
  if (ws) ws->resize(n_atoms);
  const int nm = static_cast<int>(exponents_.size());
  const int np = n_pairs();
  // power[p](a, b) = sum over degree-p monomials of mult S_a S_b
  std::vector<Eigen::MatrixXd> power(n_angular_);
  Eigen::MatrixXd weighted;
  for (int i = 0; i < n_atoms; ++i) {
    if (nl.of(i).empty()) continue;
    Moments& mom = ws ? (*ws)[i] : local;
    accumulate_moments(nl, i, mom);
    for (auto& pw : power) pw = Eigen::MatrixXd::Zero(n_ar_, n_ar_);
    for (int k = 0; k < nm; ++k) {
      power[degree_[k]].noalias() += multinomial_[k] * mom.S.col(k) * mom.S.col(k).transpose();
    }
    auto col = out.col(i);
    col.head(n_radial_) = mom.R.rowwise().sum();
    for (int l = 0; l < n_angular_; ++l) {
      Eigen::MatrixXd acc = -mom.Q;
      for (int p = 0; p <= l; ++p) {
        if (cheb_[l][p] != 0.0) acc += cheb_[l][p] * power[p];
      }
      for (int q = 0; q < np; ++q) {
        col[n_radial_ + l * np + q] = 0.5 * acc(pairs_[q][0], pairs_[q][1]);
      }
    }
  }
  return out;
}

Matrix3X<double> DescriptorBasis::pair_gradients(const NeighborList& nl,
                                                 const Eigen::MatrixXd& adjoint,
                                                 const Workspace* ws) const {
  const int n_atoms = nl.atom_count();
  Matrix3X<double> out(3, nl.pairs().size());
  Moments local;
  if (ws && static_cast<int>(ws->size()) != n_atoms) throw Error("descriptor workspace size mismatch");
  const int nm = static_cast<int>(exponents_.size());
  const int np = n_pairs();
  Eigen::MatrixXd sbar(n_ar_, nm), Am, Bm;
  Eigen::VectorXd degree_vec(nm);
  for (int k = 0; k < nm; ++k) degree_vec[k] = degree_[k];
  std::vector<Eigen::MatrixXd> w(n_angular_);
  Eigen::MatrixXd qbar(n_ar_, n_ar_);

  for (int i = 0; i < n_atoms; ++i) {
    const int nn = static_cast<int>(nl.of(i).size());
    if (nn == 0) continue;
    const Moments* cached = ws ? &(*ws)[i] : nullptr;
    if (!cached) accumulate_moments(nl, i, local);
    const Moments& mom = cached ? *cached : local;
    const auto g = adjoint.col(i);
    // Symmetric per-degree weights: w[p](a, b) = sum_l t_{l,p} g_{l,(a,b)}, halved off the diagonal.
    for (auto& wp : w) wp = Eigen::MatrixXd::Zero(n_ar_, n_ar_);
    qbar.setZero();
    for (int l = 0; l < n_angular_; ++l) {
      for (int q = 0; q < np; ++q) {
        const int a = pairs_[q][0], b = pairs_[q][1];
        const double gl = g[n_radial_ + l * np + q] * (a == b ? 1.0 : 0.5);
        qbar(a, b) += gl;
        if (a != b) qbar(b, a) += gl;
        for (int p = 0; p <= l; ++p) {
          const double t = cheb_[l][p];
          if (t == 0.0) continue;
          w[p](a, b) += t * gl;
          if (a != b) w[p](b, a) += t * gl;
        }
      }
    }
    for (int k = 0; k < nm; ++k) {
      sbar.col(k) = multinomial_[k] * (w[degree_[k]] * mom.S.col(k));
    }
    Am.noalias() = sbar.transpose() * mom.dA;  // nm x nn
    Bm.noalias() = sbar.transpose() * mom.A;
    const Eigen::RowVectorXd inv_r = mom.r.cwiseInverse().transpose();
    Bm.array().rowwise() *= inv_r.array();
    const Eigen::MatrixXd qa = qbar * mom.A;  // n_ar x nn
    const auto g_rad = g.head(n_radial_);
    const int base = nl.offset(i);
    for (int n = 0; n < nn; ++n) {
      double s = (mom.mono.col(n).array() * (Am.col(n).array() - degree_vec.array() * Bm.col(n).array()))
                     .sum();
      s -= mom.dA.col(n).dot(qa.col(n));
      s += g_rad.dot(mom.dR.col(n));
      const Vec3 v(Bm.col(n).dot(mom.gx.col(n)), Bm.col(n).dot(mom.gy.col(n)),
                   Bm.col(n).dot(mom.gz.col(n)));
      out.col(base + n) = s * mom.u.col(n) + v;
    }
  }
  return out;
}

Eigen::MatrixXd DescriptorBasis::jacobian(const NeighborList& nl, int n_atoms) const {
  const int nd = size();
  const int np = n_pairs();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nd, 3 * static_cast<Eigen::Index>(nl.pairs().size()));
  Moments mom;
  const int nm = static_cast<int>(exponents_.size());
  // Per neighbour, angular radial b and degree p: s1 = sum_k mult_k S_bk mono_k
  // and v = sum_k mult_k S_bk grad mono_k.
  Eigen::MatrixXd s1(n_ar_, n_angular_);
  std::vector<Eigen::Matrix3Xd> vp(n_ar_, Eigen::Matrix3Xd(3, n_angular_));
  // X[a][b] per degree: d/dd of sum_k mult S_ak S_bk with only S_a varying.
  std::vector<Eigen::Matrix3Xd> X(n_ar_ * n_ar_, Eigen::Matrix3Xd(3, n_angular_));
  for (int i = 0; i < n_atoms; ++i) {
    const int nn = static_cast<int>(nl.of(i).size());
    if (nn == 0) continue;
    accumulate_moments(nl, i, mom);
    Eigen::MatrixXd coeff(n_ar_, nm);
    for (int k = 0; k < nm; ++k) coeff.col(k) = multinomial_[k] * mom.S.col(k);
    const int base = nl.offset(i);
    for (int n = 0; n < nn; ++n) {
      const Vec3 u = mom.u.col(n);
      const double r = mom.r[n];
      s1.setZero();
      for (auto& v : vp) v.setZero();
      for (int k = 0; k < nm; ++k) {
        const int p = degree_[k];
        const Vec3 gk(mom.gx(k, n), mom.gy(k, n), mom.gz(k, n));
        for (int b = 0; b < n_ar_; ++b) {
          s1(b, p) += coeff(b, k) * mom.mono(k, n);
          vp[b].col(p) += coeff(b, k) * gk;
        }
      }
      for (int a = 0; a < n_ar_; ++a) {
        const double A = mom.A(a, n), dA = mom.dA(a, n);
        for (int b = 0; b < n_ar_; ++b) {
          auto& x = X[a * n_ar_ + b];
          for (int p = 0; p < n_angular_; ++p) {
            x.col(p) = (dA * s1(b, p) - (A / r) * p * s1(b, p)) * u + (A / r) * vp[b].col(p);
          }
        }
      }
      auto block = jac.block(0, 3 * (base + n), nd, 3);
      for (int m = 0; m < n_radial_; ++m) block.row(m) = mom.dR(m, n) * u.transpose();
      for (int q = 0; q < np; ++q) {
        const int a = pairs_[q][0], b = pairs_[q][1];
        const Vec3 dq = (mom.dA(a, n) * mom.A(b, n) + mom.A(a, n) * mom.dA(b, n)) * u;
        const auto& xab = X[a * n_ar_ + b];
        const auto& xba = X[b * n_ar_ + a];
        for (int l = 0; l < n_angular_; ++l) {
          Vec3 row = -dq;
          for (int p = 0; p <= l; ++p) {
            const double t = cheb_[l][p];
            if (t != 0.0) row += t * (xab.col(p) + xba.col(p));
          }
          block.row(n_radial_ + l * np + q) = 0.5 * row.transpose();
        }
      }
    }
  }
  return jac;
}

}  // namespace xfer
