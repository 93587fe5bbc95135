#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "sglab/grid.hpp"

namespace sglab {

using cplx = std::complex<double>;

// Symmetric banded matrix, upper-diagonal storage: band b in 0..hb holds
// A(i, i+b). Used for the Schrodinger-type operators.
struct SymBanded {
  std::size_t n = 0;
  int hb = 0;  // number of superdiagonals
  std::vector<double> bands;  // bands[b * n + i] = A(i, i+b), i + b < n

  double at(std::size_t i, std::size_t j) const;
  Field apply(const Field& f) const;
};

// Lowest n_eigs eigenvalues (ascending) and eigenvectors of a SymBanded
// matrix, via LAPACK dsbevx.
struct EigenPairs {
  std::vector<double> values;
  std::vector<Field> vectors;  // empty when with_vectors is false
};
EigenPairs sym_banded_eigs(const SymBanded& m, int n_eigs, bool with_vectors = true);

// Inverse iteration for the eigenvector at an isolated eigenvalue.
Field banded_inverse_iteration(const SymBanded& m, double shift, int iters = 4);

// General banded LU (LAPACK dgbtrf / zgbtrf band storage), kl sub- and ku
// superdiagonals. Assemble with add(i, j, v), then factor() once and
// solve() any number of right-hand sides.
class BandedLU {
 public:
  BandedLU(std::size_t n, int kl, int ku);
  void add(std::size_t i, std::size_t j, double v);
  void set(std::size_t i, std::size_t j, double v);
  void factor();
  std::vector<double> solve(const std::vector<double>& rhs) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  int kl_, ku_, ldab_;
  bool factored_ = false;
  std::vector<double> ab_;
  std::vector<int> ipiv_;
};

class ComplexBandedLU {
 public:
  ComplexBandedLU(std::size_t n, int kl, int ku);
  void add(std::size_t i, std::size_t j, cplx v);
  void factor();
  std::vector<cplx> solve(const std::vector<cplx>& rhs) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  int kl_, ku_, ldab_;
  bool factored_ = false;
  std::vector<cplx> ab_;
  std::vector<int> ipiv_;
};

// Dense symmetric-definite generalized eigenproblem A z = mu B z (B SPD),
// row-major packed; returns eigenvalues ascending. LAPACK dsygvd.
std::vector<double> dense_sym_generalized_eigs(std::vector<double> a, std::vector<double> b,
                                               std::size_t n);

}  // namespace sglab
