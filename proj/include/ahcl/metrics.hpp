#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ahcl/hamming.hpp"

namespace ahcl {

/// Relevance flags down one query's ranked database list, plus the total
/// number of relevant items that exist for the query.
struct RankedRelevance {
  std::vector<uint8_t> rel;
  int32_t total_relevant = 0;  // r; must be >= 1 for AP / recall
};

enum class ApVariant {
  standard,   // precision at the rank of each relevant retrieved item
  truncated,  // mean precision over the first r positions
};

/// AP = (1/r) * sum over relevant hits of (hit count / rank). Throws when
/// total_relevant == 0; such queries are excluded upstream.
double average_precision(const RankedRelevance& rr, ApVariant variant = ApVariant::standard);

double mean_average_precision(std::span<const RankedRelevance> queries,
                              ApVariant variant = ApVariant::standard);

/// (relevant among top k) / k. The denominator stays k even when fewer than
/// k results exist.
double precision_at_k(const RankedRelevance& rr, int32_t k);

/// (relevant among top k) / total_relevant.
double recall_at_k(const RankedRelevance& rr, int32_t k);

/// Relevance flags for a ranking against labeled database rows. A
/// non-negative self_index drops that database row from the ranking and
/// from the relevant-item count.
RankedRelevance relevance_from_ranking(std::span<const Hit> ranked, int32_t query_label,
                                       std::span<const int32_t> db_labels,
                                       int32_t self_index = -1);

struct PrPoint {
  int32_t radius = 0;
  double precision = 0;  // NaN when not defined
  double recall = 0;
  bool defined = false;  // false when no query retrieved anything at this radius
};

/// Precision and recall of the set retrieved within each Hamming radius
/// 0..K, averaged over queries. Precision at a radius averages only queries
/// that retrieved at least one item; a point with no retrievals anywhere is
/// flagged undefined. self_index[i] >= 0 excludes that database row for
/// query i.
std::vector<PrPoint> pr_curve_by_radius(const PackedCodeMatrix& queries,
                                        const PackedCodeMatrix& db,
                                        std::span<const int32_t> query_labels,
                                        std::span<const int32_t> db_labels,
                                        std::span<const int32_t> self_index = {});

}  // namespace ahcl
