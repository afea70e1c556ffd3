#include "ahcl/solver.hpp"

#include <cmath>
#include <stdexcept>

namespace ahcl {

void CodeMatrix::validate() const {
  if (n < 0 || bits < 1 || codes.size() != static_cast<size_t>(n) * bits) {
    throw std::invalid_argument("code matrix shape is inconsistent");
  }
  for (const int8_t c : codes) {
    if (c != 1 && c != -1) {
      throw std::invalid_argument("code matrix entry " + std::to_string(int(c)) +
                                  " is not +-1");
    }
  }
}

namespace {

void check_relaxed_shape(std::span<const double> relaxed, int32_t m, int32_t bits,
                         const char* what) {
  if (relaxed.size() != static_cast<size_t>(m) * bits) {
    throw std::invalid_argument(std::string(what) + " has wrong shape");
  }
}

}  // namespace

std::vector<double> build_u_bar(std::span<const double> relaxed, const IndexSets& idx,
                                int32_t bits) {
  const int32_t m = idx.m();
  check_relaxed_shape(relaxed, m, bits, "relaxed code block");
  std::vector<double> u_bar(static_cast<size_t>(idx.n) * bits, 0.0);
  for (int32_t i = 0; i < m; ++i) {
    const int32_t row = idx.omega[i];
    if (row < 0 || row >= idx.n) {
      throw std::out_of_range("omega index " + std::to_string(row) + " outside [0, " +
                              std::to_string(idx.n) + ")");
    }
    std::copy(relaxed.begin() + static_cast<size_t>(i) * bits,
              relaxed.begin() + static_cast<size_t>(i + 1) * bits,
              u_bar.begin() + static_cast<size_t>(row) * bits);
  }
  return u_bar;
}

std::vector<double> build_q(const SimilarityMatrix& sim, std::span<const double> relaxed,
                            std::span<const double> u_bar, int32_t bits, double lambda) {
  check_relaxed_shape(relaxed, sim.m, bits, "relaxed code block");
  check_relaxed_shape(u_bar, sim.n, bits, "zero-padded relaxed block");

  std::vector<double> q(static_cast<size_t>(sim.n) * bits);
  const double scale = -2.0 * bits;
  for (int32_t j = 0; j < sim.n; ++j) {
    double* qrow = q.data() + static_cast<size_t>(j) * bits;
    const double* ubar_row = u_bar.data() + static_cast<size_t>(j) * bits;
    for (int32_t k = 0; k < bits; ++k) qrow[k] = -2.0 * lambda * ubar_row[k];
    for (int32_t i = 0; i < sim.m; ++i) {
      const double s = sim.entries[static_cast<size_t>(i) * sim.n + j];
      const double* urow = relaxed.data() + static_cast<size_t>(i) * bits;
      for (int32_t k = 0; k < bits; ++k) qrow[k] += scale * s * urow[k];
    }
  }
  return q;
}

double objective_b_terms(const CodeMatrix& b, std::span<const double> relaxed,
                         const SimilarityMatrix& sim, double lambda, const IndexSets& idx) {
  const int32_t m = idx.m(), n = b.n, K = b.bits;
  if (sim.m != m || sim.n != n || idx.n != n) {
    throw std::invalid_argument("objective shapes are inconsistent");
  }
  check_relaxed_shape(relaxed, m, K, "relaxed code block");

  double fit = 0;
  for (int32_t i = 0; i < m; ++i) {
    const double* urow = relaxed.data() + static_cast<size_t>(i) * K;
    const int8_t* srow = sim.entries.data() + static_cast<size_t>(i) * n;
    for (int32_t j = 0; j < n; ++j) {
      const int8_t* brow = b.codes.data() + static_cast<size_t>(j) * K;
      double dot = 0;
      for (int32_t k = 0; k < K; ++k) dot += urow[k] * brow[k];
      const double r = dot - static_cast<double>(K) * srow[j];
      fit += r * r;
    }
  }

  double bind = 0;
  for (int32_t i = 0; i < m; ++i) {
    const double* urow = relaxed.data() + static_cast<size_t>(i) * K;
    const int8_t* brow = b.codes.data() + static_cast<size_t>(idx.omega[i]) * K;
    for (int32_t k = 0; k < K; ++k) {
      const double d = brow[k] - urow[k];
      bind += d * d;
    }
  }
  return fit + lambda * bind;
}

int32_t update_column(CodeMatrix& b, int32_t k, std::span<const double> relaxed,
                      std::span<const double> q) {
  const int32_t n = b.n, K = b.bits;
  if (k < 0 || k >= K) throw std::out_of_range("column index outside [0, K)");
  const int32_t m = static_cast<int32_t>(relaxed.size()) / K;
  check_relaxed_shape(relaxed, m, K, "relaxed code block");
  if (q.size() != static_cast<size_t>(n) * K) {
    throw std::invalid_argument("coefficient matrix has wrong shape");
  }

  // Gram column w_c = U~_{*c} . U~_{*k}; the excluded-column product
  // Bhat * Uhat^T * U~_{*k} is then sum_{c != k} B_{jc} w_c.
  std::vector<double> w(K, 0.0);
  for (int32_t i = 0; i < m; ++i) {
    const double* urow = relaxed.data() + static_cast<size_t>(i) * K;
    const double uik = urow[k];
    for (int32_t c = 0; c < K; ++c) w[c] += urow[c] * uik;
  }

  int32_t flips = 0;
  for (int32_t j = 0; j < n; ++j) {
    int8_t* brow = b.codes.data() + static_cast<size_t>(j) * K;
    double coef = q[static_cast<size_t>(j) * K + k];
    for (int32_t c = 0; c < K; ++c) {
      if (c != k) coef += 2.0 * brow[c] * w[c];
    }
    // -sign with sign(0) = -1: a zero coefficient yields +1
    const int8_t next = coef > 0 ? int8_t{-1} : int8_t{1};
    if (next != brow[k]) {
      brow[k] = next;
      ++flips;
    }
  }
  return flips;
}

SolveStats solve_codes(CodeMatrix& b, std::span<const double> relaxed,
                       const SimilarityMatrix& sim, double lambda, const IndexSets& idx,
                       int32_t max_sweeps) {
  if (max_sweeps < 1) throw std::invalid_argument("max_sweeps must be >= 1");
  if (b.n != idx.n || sim.n != b.n || sim.m != idx.m()) {
    throw std::invalid_argument("solver shapes are inconsistent");
  }
  b.validate();

  const std::vector<double> u_bar = build_u_bar(relaxed, idx, b.bits);
  const std::vector<double> q = build_q(sim, relaxed, u_bar, b.bits, lambda);

  SolveStats stats;
  for (int32_t sweep = 0; sweep < max_sweeps; ++sweep) {
    int32_t flips = 0;
    for (int32_t k = 0; k < b.bits; ++k) {
      flips += update_column(b, k, relaxed, q);
    }
    ++stats.sweeps;
    stats.bits_flipped += flips;
    if (flips == 0) break;
  }
  return stats;
}

CodeMatrix init_codes(std::span<const double> relaxed, const IndexSets& idx,
                      int32_t bits, uint64_t seed) {
  check_relaxed_shape(relaxed, idx.m(), bits, "relaxed code block");
  CodeMatrix b(idx.n, bits);
  Rng rng(derive_seed(seed, SeedStream::code_init));
  for (int32_t j = 0; j < idx.n; ++j) {
    int8_t* row = b.codes.data() + static_cast<size_t>(j) * bits;
    for (int32_t k = 0; k < bits; ++k) row[k] = rng.sign();
  }
  for (int32_t i = 0; i < idx.m(); ++i) {
    int8_t* row = b.codes.data() + static_cast<size_t>(idx.omega[i]) * bits;
    const double* urow = relaxed.data() + static_cast<size_t>(i) * bits;
    for (int32_t k = 0; k < bits; ++k) {
      row[k] = urow[k] > 0 ? int8_t{1} : int8_t{-1};
    }
  }
  return b;
}

}  // namespace ahcl
