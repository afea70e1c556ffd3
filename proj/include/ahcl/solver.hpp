#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ahcl/codes.hpp"
#include "ahcl/dataset.hpp"

namespace ahcl {

// Closed-form alternating update of the database code matrix B with the head
// parameters frozen. Sweeps are inherently sequential (each column update
// reads the others' current values), so everything here is single-threaded;
// independent solves may run on distinct threads.

/// Zero-padded relaxed codes: row omega[i] equals row i of `relaxed`
/// (m x bits), all other rows zero. Result is n x bits.
std::vector<double> build_u_bar(std::span<const double> relaxed, const IndexSets& idx,
                                int32_t bits);

/// Linear coefficient of the code objective:
///   Q = -2*K*S^T*U~ - 2*lambda*Ubar,  n x bits.
std::vector<double> build_q(const SimilarityMatrix& sim, std::span<const double> relaxed,
                            std::span<const double> u_bar, int32_t bits, double lambda);

/// The B-dependent part of the objective:
///   |U~ B^T - K*S|_F^2 + lambda * |B_omega - U~|_F^2.
double objective_b_terms(const CodeMatrix& b, std::span<const double> relaxed,
                         const SimilarityMatrix& sim, double lambda, const IndexSets& idx);

/// Column k <- -sign(2 * Bhat * Uhat^T * U~_{*k} + Q_{*k}) where Bhat, Uhat
/// exclude column k. sign(0) = -1, so a zero argument yields +1 after the
/// leading minus. Returns the number of flipped bits.
int32_t update_column(CodeMatrix& b, int32_t k, std::span<const double> relaxed,
                      std::span<const double> q);

struct SolveStats {
  int32_t sweeps = 0;
  int64_t bits_flipped = 0;
};

/// Full column sweeps in ascending k until a sweep changes no bit or
/// max_sweeps is reached. The objective is non-increasing across every
/// column update.
SolveStats solve_codes(CodeMatrix& b, std::span<const double> relaxed,
                       const SimilarityMatrix& sim, double lambda, const IndexSets& idx,
                       int32_t max_sweeps = 20);

/// Initial codes: sign of the relaxed codes on omega rows (sign(0) = -1),
/// seeded random +-1 elsewhere.
CodeMatrix init_codes(std::span<const double> relaxed, const IndexSets& idx,
                      int32_t bits, uint64_t seed);

}  // namespace ahcl
