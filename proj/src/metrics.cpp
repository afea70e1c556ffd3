#include "ahcl/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ahcl {

double average_precision(const RankedRelevance& rr, ApVariant variant) {
  if (rr.total_relevant < 1) {
    throw std::invalid_argument("average precision is undefined without relevant items");
  }
  if (variant == ApVariant::standard) {
    // mean over relevant hits of (hits so far / rank)
    int64_t hits = 0;
    double sum = 0;
    for (size_t pos = 0; pos < rr.rel.size(); ++pos) {
      if (rr.rel[pos]) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
      }
    }
    return sum / rr.total_relevant;
  }
  // truncated: mean precision over the first r positions
  int64_t hits = 0;
  double sum = 0;
  const size_t depth = std::min<size_t>(rr.rel.size(), rr.total_relevant);
  for (size_t pos = 0; pos < depth; ++pos) {
    if (rr.rel[pos]) ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
  }
  return sum / rr.total_relevant;
}

double mean_average_precision(std::span<const RankedRelevance> queries, ApVariant variant) {
  if (queries.empty()) throw std::invalid_argument("no queries to average over");
  std::vector<double> ap(queries.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(queries.size()); ++i) {
    ap[i] = average_precision(queries[i], variant);
  }
  double sum = 0;
  for (double v : ap) sum += v;
  return sum / static_cast<double>(queries.size());
}

double precision_at_k(const RankedRelevance& rr, int32_t k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  int64_t hits = 0;
  const size_t depth = std::min<size_t>(rr.rel.size(), k);
  for (size_t pos = 0; pos < depth; ++pos) hits += rr.rel[pos] ? 1 : 0;
  return static_cast<double>(hits) / k;
}

double recall_at_k(const RankedRelevance& rr, int32_t k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (rr.total_relevant < 1) {
    throw std::invalid_argument("recall is undefined without relevant items");
  }
  int64_t hits = 0;
  const size_t depth = std::min<size_t>(rr.rel.size(), k);
  for (size_t pos = 0; pos < depth; ++pos) hits += rr.rel[pos] ? 1 : 0;
  return static_cast<double>(hits) / rr.total_relevant;
}

RankedRelevance relevance_from_ranking(std::span<const Hit> ranked, int32_t query_label,
                                       std::span<const int32_t> db_labels,
                                       int32_t self_index) {
  RankedRelevance rr;
  rr.rel.reserve(ranked.size());
  for (const Hit& hit : ranked) {
    if (hit.index == self_index) continue;
    rr.rel.push_back(db_labels[hit.index] == query_label ? 1 : 0);
  }
  for (size_t j = 0; j < db_labels.size(); ++j) {
    if (static_cast<int32_t>(j) == self_index) continue;
    if (db_labels[j] == query_label) ++rr.total_relevant;
  }
  return rr;
}

std::vector<PrPoint> pr_curve_by_radius(const PackedCodeMatrix& queries,
                                        const PackedCodeMatrix& db,
                                        std::span<const int32_t> query_labels,
                                        std::span<const int32_t> db_labels,
                                        std::span<const int32_t> self_index) {
  if (queries.n < 1 || db.n < 1) throw std::invalid_argument("empty code set");
  if (queries.bits != db.bits) throw std::invalid_argument("code lengths differ");
  if (query_labels.size() != static_cast<size_t>(queries.n) ||
      db_labels.size() != static_cast<size_t>(db.n)) {
    throw std::invalid_argument("label counts do not match code counts");
  }
  if (!self_index.empty() && self_index.size() != static_cast<size_t>(queries.n)) {
    throw std::invalid_argument("self-index count does not match query count");
  }

  const int32_t K = db.bits;
  const int32_t nq = queries.n;

  // Per-query distance histograms of all items and of relevant items; the
  // per-radius counts are then prefix sums.
  std::vector<int64_t> retrieved(static_cast<size_t>(nq) * (K + 1), 0);
  std::vector<int64_t> relevant(static_cast<size_t>(nq) * (K + 1), 0);
  std::vector<int64_t> total_relevant(nq, 0);

#pragma omp parallel for schedule(static)
  for (int32_t i = 0; i < nq; ++i) {
    int64_t* ret = retrieved.data() + static_cast<size_t>(i) * (K + 1);
    int64_t* rel = relevant.data() + static_cast<size_t>(i) * (K + 1);
    const int32_t self = self_index.empty() ? -1 : self_index[i];
    const auto q = queries.row(i);
    for (int32_t j = 0; j < db.n; ++j) {
      if (j == self) continue;
      int32_t dist = 0;
      const auto d = db.row(j);
      for (size_t w = 0; w < d.size(); ++w) dist += std::popcount(q[w] ^ d[w]);
      ++ret[dist];
      if (db_labels[j] == query_labels[i]) {
        ++rel[dist];
        ++total_relevant[i];
      }
    }
    for (int32_t r = 1; r <= K; ++r) {
      ret[r] += ret[r - 1];
      rel[r] += rel[r - 1];
    }
  }

  for (int32_t i = 0; i < nq; ++i) {
    if (total_relevant[i] < 1) {
      throw std::invalid_argument("query " + std::to_string(i) +
                                  " has no relevant database items");
    }
  }

  std::vector<PrPoint> curve(K + 1);
  for (int32_t r = 0; r <= K; ++r) {
    PrPoint& pt = curve[r];
    pt.radius = r;
    double precision_sum = 0;
    int32_t with_retrievals = 0;
    double recall_sum = 0;
    for (int32_t i = 0; i < nq; ++i) {
      const int64_t ret = retrieved[static_cast<size_t>(i) * (K + 1) + r];
      const int64_t rel = relevant[static_cast<size_t>(i) * (K + 1) + r];
      if (ret > 0) {
        precision_sum += static_cast<double>(rel) / static_cast<double>(ret);
        ++with_retrievals;
      }
      recall_sum += static_cast<double>(rel) / static_cast<double>(total_relevant[i]);
    }
    pt.recall = recall_sum / nq;
    if (with_retrievals > 0) {
      pt.defined = true;
      pt.precision = precision_sum / with_retrievals;
    } else {
      pt.defined = false;
      pt.precision = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return curve;
}

}  // namespace ahcl
