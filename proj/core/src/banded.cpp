#include "sglab/banded.hpp"

#include <lapacke.h>

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sglab {

double SymBanded::at(std::size_t i, std::size_t j) const {
  std::size_t lo = std::min(i, j), hi = std::max(i, j);
  std::size_t b = hi - lo;
  if (b > static_cast<std::size_t>(hb)) return 0.0;
  return bands[b * n + lo];
}

Field SymBanded::apply(const Field& f) const {
  if (f.size() != n) throw std::invalid_argument("SymBanded::apply: size mismatch");
  Field out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i] = bands[i] * f[i];
  for (int b = 1; b <= hb; ++b) {
    const double* band = bands.data() + static_cast<std::size_t>(b) * n;
    for (std::size_t i = 0; i + static_cast<std::size_t>(b) < n; ++i) {
      out[i] += band[i] * f[i + static_cast<std::size_t>(b)];
      out[i + static_cast<std::size_t>(b)] += band[i] * f[i];
    }
  }
  return out;
}

EigenPairs sym_banded_eigs(const SymBanded& m, int n_eigs, bool with_vectors) {
  const lapack_int n = static_cast<lapack_int>(m.n);
  const lapack_int kd = m.hb;
  const lapack_int ldab = kd + 1;
  if (n_eigs < 1 || n_eigs > n) throw std::invalid_argument("sym_banded_eigs: bad n_eigs");

  // LAPACK 'U' band storage, column-major: AB(kd + i - j, j) = A(i,j), i <= j.
  std::vector<double> ab(static_cast<std::size_t>(ldab) * static_cast<std::size_t>(n), 0.0);
  for (int b = 0; b <= kd; ++b) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(b) < m.n; ++i) {
      std::size_t j = i + static_cast<std::size_t>(b);
      ab[static_cast<std::size_t>(kd - b) + j * static_cast<std::size_t>(ldab)] =
          m.bands[static_cast<std::size_t>(b) * m.n + i];
    }
  }

  std::vector<double> w(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) * static_cast<std::size_t>(n_eigs));
  std::vector<double> q(with_vectors ? static_cast<std::size_t>(n) * static_cast<std::size_t>(n)
                                     : 1);
  std::vector<lapack_int> ifail(static_cast<std::size_t>(n));
  lapack_int found = 0;
  double abstol = 2.0 * LAPACKE_dlamch('S');
  lapack_int info = LAPACKE_dsbevx(
      LAPACK_COL_MAJOR, with_vectors ? 'V' : 'N', 'I', 'U', n, kd, ab.data(), ldab, q.data(),
      with_vectors ? n : 1, 0.0, 0.0, 1, static_cast<lapack_int>(n_eigs), abstol, &found,
      w.data(), z.data(), n, ifail.data());
  if (info != 0)
    throw std::runtime_error("sym_banded_eigs: dsbevx failed, info=" + std::to_string(info));
  if (found < n_eigs)
    throw std::runtime_error("sym_banded_eigs: eigensolver converged only " +
                             std::to_string(found) + " of " + std::to_string(n_eigs));

  EigenPairs out;
  out.values.assign(w.begin(), w.begin() + n_eigs);
  if (with_vectors) {
    out.vectors.resize(static_cast<std::size_t>(n_eigs));
    for (int k = 0; k < n_eigs; ++k) {
      out.vectors[static_cast<std::size_t>(k)].assign(
          z.begin() + static_cast<std::ptrdiff_t>(k) * n,
          z.begin() + static_cast<std::ptrdiff_t>(k + 1) * n);
    }
  }
  return out;
}

Field banded_inverse_iteration(const SymBanded& m, double shift, int iters) {
  BandedLU lu(m.n, m.hb, m.hb);
  for (int b = 0; b <= m.hb; ++b) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(b) < m.n; ++i) {
      double v = m.bands[static_cast<std::size_t>(b) * m.n + i];
      if (b == 0) {
        lu.add(i, i, v - shift);
      } else {
        lu.add(i, i + static_cast<std::size_t>(b), v);
        lu.add(i + static_cast<std::size_t>(b), i, v);
      }
    }
  }
  lu.factor();
  Field x(m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    x[i] = 1.0 / std::sqrt(static_cast<double>(m.n) + static_cast<double>(i));
  for (int it = 0; it < iters; ++it) {
    x = lu.solve(x);
    double nx = 0.0;
    for (double v : x) nx += v * v;
    nx = std::sqrt(nx);
    if (!(nx > 0.0)) throw std::runtime_error("banded_inverse_iteration: breakdown");
    for (double& v : x) v /= nx;
  }
  return x;
}

BandedLU::BandedLU(std::size_t n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1),
      ab_(static_cast<std::size_t>(ldab_) * n, 0.0), ipiv_(n) {}

void BandedLU::add(std::size_t i, std::size_t j, double v) {
  // column-major band storage: AB(kl + ku + i - j, j)
  std::ptrdiff_t r = static_cast<std::ptrdiff_t>(kl_ + ku_) + static_cast<std::ptrdiff_t>(i) -
                     static_cast<std::ptrdiff_t>(j);
  if (r < static_cast<std::ptrdiff_t>(kl_) || r >= static_cast<std::ptrdiff_t>(ldab_))
    throw std::invalid_argument("BandedLU::add: entry outside band");
  ab_[static_cast<std::size_t>(r) + j * static_cast<std::size_t>(ldab_)] += v;
}

void BandedLU::set(std::size_t i, std::size_t j, double v) {
  std::ptrdiff_t r = static_cast<std::ptrdiff_t>(kl_ + ku_) + static_cast<std::ptrdiff_t>(i) -
                     static_cast<std::ptrdiff_t>(j);
  if (r < static_cast<std::ptrdiff_t>(kl_) || r >= static_cast<std::ptrdiff_t>(ldab_))
    throw std::invalid_argument("BandedLU::set: entry outside band");
  ab_[static_cast<std::size_t>(r) + j * static_cast<std::size_t>(ldab_)] = v;
}

void BandedLU::factor() {
  lapack_int info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, static_cast<lapack_int>(n_),
                                   static_cast<lapack_int>(n_), kl_, ku_, ab_.data(), ldab_,
                                   ipiv_.data());
  if (info < 0) throw std::runtime_error("BandedLU::factor: bad argument");
  // info > 0 flags an exactly singular pivot; keep going, the bordered
  // solve handles near-singular cores through refinement.
  factored_ = true;
}

std::vector<double> BandedLU::solve(const std::vector<double>& rhs) const {
  if (!factored_) throw std::logic_error("BandedLU::solve before factor");
  if (rhs.size() != n_) throw std::invalid_argument("BandedLU::solve: size mismatch");
  std::vector<double> x = rhs;
  lapack_int info = LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(n_), kl_, ku_, 1,
                                   ab_.data(), ldab_, ipiv_.data(), x.data(),
                                   static_cast<lapack_int>(n_));
  if (info != 0) throw std::runtime_error("BandedLU::solve: dgbtrs failed");
  return x;
}

ComplexBandedLU::ComplexBandedLU(std::size_t n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1),
      ab_(static_cast<std::size_t>(ldab_) * n, cplx(0.0, 0.0)), ipiv_(n) {}

void ComplexBandedLU::add(std::size_t i, std::size_t j, cplx v) {
  std::ptrdiff_t r = static_cast<std::ptrdiff_t>(kl_ + ku_) + static_cast<std::ptrdiff_t>(i) -
                     static_cast<std::ptrdiff_t>(j);
  if (r < static_cast<std::ptrdiff_t>(kl_) || r >= static_cast<std::ptrdiff_t>(ldab_))
    throw std::invalid_argument("ComplexBandedLU::add: entry outside band");
  ab_[static_cast<std::size_t>(r) + j * static_cast<std::size_t>(ldab_)] += v;
}

void ComplexBandedLU::factor() {
  lapack_int info = LAPACKE_zgbtrf(LAPACK_COL_MAJOR, static_cast<lapack_int>(n_),
                                   static_cast<lapack_int>(n_), kl_, ku_,
                                   reinterpret_cast<lapack_complex_double*>(ab_.data()), ldab_,
                                   ipiv_.data());
  if (info < 0) throw std::runtime_error("ComplexBandedLU::factor: bad argument");
  factored_ = true;
}

std::vector<cplx> ComplexBandedLU::solve(const std::vector<cplx>& rhs) const {
  if (!factored_) throw std::logic_error("ComplexBandedLU::solve before factor");
  if (rhs.size() != n_) throw std::invalid_argument("ComplexBandedLU::solve: size mismatch");
  std::vector<cplx> x = rhs;
  lapack_int info = LAPACKE_zgbtrs(LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(n_), kl_, ku_, 1,
                                   reinterpret_cast<const lapack_complex_double*>(ab_.data()),
                                   ldab_, ipiv_.data(),
                                   reinterpret_cast<lapack_complex_double*>(x.data()),
                                   static_cast<lapack_int>(n_));
  if (info != 0) throw std::runtime_error("ComplexBandedLU::solve: zgbtrs failed");
  return x;
}

std::vector<double> dense_sym_generalized_eigs(std::vector<double> a, std::vector<double> b,
                                               std::size_t n) {
  if (a.size() != n * n || b.size() != n * n)
    throw std::invalid_argument("dense_sym_generalized_eigs: size mismatch");
  std::vector<double> w(n);
  lapack_int info = LAPACKE_dsygvd(LAPACK_ROW_MAJOR, 1, 'N', 'U', static_cast<lapack_int>(n),
                                   a.data(), static_cast<lapack_int>(n), b.data(),
                                   static_cast<lapack_int>(n), w.data());
  if (info != 0)
    throw std::runtime_error("dense_sym_generalized_eigs: dsygvd failed, info=" +
                             std::to_string(info));
  return w;
}

}  // namespace sglab
