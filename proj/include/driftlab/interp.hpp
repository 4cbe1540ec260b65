#pragma once

#include "driftlab/common.hpp"

#include <array>
#include <vector>

namespace driftlab {

/// Cubic Lagrange weights on the stencil {-1,0,1,2} at local coordinate s, with derivatives.
inline void lagrange4(double s, double w[4], double dw[4]) {
  const double a = s + 1.0, b = s, c = s - 1.0, d = s - 2.0;
  w[0] = -b * c * d / 6.0;
  w[1] = a * c * d / 2.0;
  w[2] = -a * b * d / 2.0;
  w[3] = a * b * c / 6.0;
  dw[0] = -(c * d + b * d + b * c) / 6.0;
  dw[1] = (c * d + a * d + a * c) / 2.0;
  dw[2] = -(b * d + a * d + a * b) / 2.0;
  dw[3] = (b * c + a * c + a * b) / 6.0;
}

/// Multi-component field on a tensor grid over [0,2pi) x [lo,hi]. Periodic in phi,
/// clamped stencil (extrapolating) in the second coordinate. Bicubic Lagrange.
class GridField {
 public:
  GridField() = default;
  GridField(int n_phi, int n_I, double lo, double hi, int ncomp)
      : n_phi_(n_phi), n_I_(n_I), ncomp_(ncomp), lo_(lo), hi_(hi),
        data_(static_cast<std::size_t>(n_phi) * n_I * ncomp, 0.0) {
    if (n_phi < 4 || n_I < 4 || !(hi > lo) || ncomp < 1)
      throw Error(ErrorCode::InvalidArgument, "GridField needs >=4 nodes per axis and hi > lo");
  }

  int n_phi() const { return n_phi_; }
  int n_I() const { return n_I_; }
  int ncomp() const { return ncomp_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double h_phi() const { return kTwoPi / n_phi_; }
  double h_I() const { return (hi_ - lo_) / (n_I_ - 1); }
  double phi_at(int i) const { return kTwoPi * i / n_phi_; }
  double I_at(int j) const { return j == n_I_ - 1 ? hi_ : lo_ + j * h_I(); }
  std::size_t nodes() const { return static_cast<std::size_t>(n_phi_) * n_I_; }

  double& at(int i, int j, int c) { return data_[(static_cast<std::size_t>(j) * n_phi_ + i) * ncomp_ + c]; }
  double at(int i, int j, int c) const { return data_[(static_cast<std::size_t>(j) * n_phi_ + i) * ncomp_ + c]; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  /// out[c] value, dphi[c], dI[c] (derivative arrays optional).
  void eval(double phi, double I, double* out, double* dphi = nullptr, double* dI = nullptr) const {
    double tp = reduce_angle(phi) / h_phi();
    int i0 = static_cast<int>(std::floor(tp));
    double sp = tp - i0;
    double tI = (I - lo_) / h_I();
    int j0 = static_cast<int>(std::floor(tI));
    j0 = std::clamp(j0, 1, n_I_ - 3);
    double sI = tI - j0;
    double wp[4], dwp[4], wI[4], dwI[4];
    lagrange4(sp, wp, dwp);
    lagrange4(sI, wI, dwI);
    for (int c = 0; c < ncomp_; ++c) {
      out[c] = 0.0;
      if (dphi) dphi[c] = 0.0;
      if (dI) dI[c] = 0.0;
    }
    for (int b = 0; b < 4; ++b) {
      int j = j0 - 1 + b;
      for (int a = 0; a < 4; ++a) {
        int i = (i0 - 1 + a) % n_phi_;
        if (i < 0) i += n_phi_;
        const double* v = &data_[(static_cast<std::size_t>(j) * n_phi_ + i) * ncomp_];
        double w = wp[a] * wI[b];
        for (int c = 0; c < ncomp_; ++c) {
          out[c] += w * v[c];
          if (dphi) dphi[c] += dwp[a] * wI[b] * v[c];
          if (dI) dI[c] += wp[a] * dwI[b] * v[c];
        }
      }
    }
    if (dphi)
      for (int c = 0; c < ncomp_; ++c) dphi[c] /= h_phi();
    if (dI)
      for (int c = 0; c < ncomp_; ++c) dI[c] /= h_I();
  }

 private:
  int n_phi_ = 0, n_I_ = 0, ncomp_ = 0;
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> data_;
};

}  // namespace driftlab
