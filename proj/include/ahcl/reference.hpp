#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ahcl/hamming.hpp"
#include "ahcl/metrics.hpp"
#include "ahcl/model.hpp"

// Serial reference implementations written straight from the definitions as
// plain scalar loops. They share no code with the production kernels; tests
// check the two paths against each other and the benchmark compares their
// speed. Not meant to be fast.
namespace ahcl::reference {

LossTerms loss(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp);

std::vector<double> build_q(const SimilarityMatrix& sim, std::span<const double> relaxed,
                            std::span<const double> u_bar, int32_t bits, double lambda);

/// Per-bit comparison on unpacked codes.
int32_t hamming(std::span<const int8_t> a, std::span<const int8_t> b);

int32_t inner_product(std::span<const int8_t> a, std::span<const int8_t> b);

/// Full sort of all (distance, index) pairs, then the first k.
std::vector<Hit> rank_topk(std::span<const int8_t> query, const CodeMatrix& db, int32_t k);

std::vector<int32_t> radius_search(std::span<const int8_t> query, const CodeMatrix& db,
                                   int32_t radius);

/// Definitional AP by integer counting down the list.
double average_precision(std::span<const uint8_t> rel, int32_t total_relevant);

std::vector<PrPoint> pr_curve_by_radius(const CodeMatrix& queries, const CodeMatrix& db,
                                        std::span<const int32_t> query_labels,
                                        std::span<const int32_t> db_labels,
                                        std::span<const int32_t> self_index = {});

}  // namespace ahcl::reference
