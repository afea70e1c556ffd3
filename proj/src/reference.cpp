#include "ahcl/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ahcl::reference {

LossTerms loss(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp) {
  const int32_t m = batch.m, n = batch.n, K = p.bits, d = p.dim, C = p.num_classes;
  LossTerms out;

  for (int32_t i = 0; i < m; ++i) {
    const float* f = batch.features.data() + static_cast<size_t>(i) * d;

    std::vector<double> u(K), ut(K);
    for (int32_t k = 0; k < K; ++k) {
      double acc = p.hash_b[k];
      for (int32_t c = 0; c < d; ++c) acc += p.hash_w[static_cast<size_t>(k) * d + c] * f[c];
      u[k] = acc;
      ut[k] = std::tanh(acc);
    }

    for (int32_t j = 0; j < n; ++j) {
      double dot = 0;
      for (int32_t k = 0; k < K; ++k) {
        dot += ut[k] * batch.db_codes->codes[static_cast<size_t>(j) * K + k];
      }
      const double target =
          static_cast<double>(K) * batch.similarity[static_cast<size_t>(i) * n + j];
      out.similarity += (dot - target) * (dot - target);
    }

    for (int32_t k = 0; k < K; ++k) {
      const double diff = batch.own_codes[static_cast<size_t>(i) * K + k] - ut[k];
      out.quantization += diff * diff;
    }

    std::vector<double> logits(C);
    double biggest = -std::numeric_limits<double>::infinity();
    for (int32_t c = 0; c < C; ++c) {
      double acc = p.sem_b[c];
      for (int32_t k = 0; k < K; ++k) acc += p.sem_w[static_cast<size_t>(c) * K + k] * u[k];
      logits[c] = acc;
      biggest = std::max(biggest, acc);
    }
    double z = 0;
    for (int32_t c = 0; c < C; ++c) z += std::exp(logits[c] - biggest);
    const double prob = std::exp(logits[batch.labels[i]] - biggest) / z;
    out.semantic += -std::log(std::max(prob, 1e-12));
  }

  out.total = out.similarity + hp.lambda * out.quantization + hp.gamma * out.semantic;
  return out;
}

std::vector<double> build_q(const SimilarityMatrix& sim, std::span<const double> relaxed,
                            std::span<const double> u_bar, int32_t bits, double lambda) {
  std::vector<double> q(static_cast<size_t>(sim.n) * bits, 0.0);
  for (int32_t j = 0; j < sim.n; ++j) {
    for (int32_t k = 0; k < bits; ++k) {
      double acc = 0;
      for (int32_t i = 0; i < sim.m; ++i) {
        acc += sim.entries[static_cast<size_t>(i) * sim.n + j] *
               relaxed[static_cast<size_t>(i) * bits + k];
      }
      q[static_cast<size_t>(j) * bits + k] =
          -2.0 * bits * acc - 2.0 * lambda * u_bar[static_cast<size_t>(j) * bits + k];
    }
  }
  return q;
}

int32_t hamming(std::span<const int8_t> a, std::span<const int8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("code lengths differ");
  int32_t count = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    if (a[k] != b[k]) ++count;
  }
  return count;
}

int32_t inner_product(std::span<const int8_t> a, std::span<const int8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("code lengths differ");
  int32_t acc = 0;
  for (size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

std::vector<Hit> rank_topk(std::span<const int8_t> query, const CodeMatrix& db, int32_t k) {
  std::vector<Hit> all(db.n);
  for (int32_t j = 0; j < db.n; ++j) {
    all[j] = {j, hamming(query, db.row(j))};
  }
  std::stable_sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  if (static_cast<int32_t>(all.size()) > k) all.resize(k);
  return all;
}

std::vector<int32_t> radius_search(std::span<const int8_t> query, const CodeMatrix& db,
                                   int32_t radius) {
  std::vector<int32_t> hits;
  for (int32_t j = 0; j < db.n; ++j) {
    if (hamming(query, db.row(j)) <= radius) hits.push_back(j);
  }
  return hits;
}

double average_precision(std::span<const uint8_t> rel, int32_t total_relevant) {
  double sum = 0;
  for (size_t pos = 0; pos < rel.size(); ++pos) {
    if (!rel[pos]) continue;
    int32_t hits_here = 0;
    for (size_t q = 0; q <= pos; ++q) hits_here += rel[q] ? 1 : 0;
    sum += static_cast<double>(hits_here) / static_cast<double>(pos + 1);
  }
  return sum / total_relevant;
}

std::vector<PrPoint> pr_curve_by_radius(const CodeMatrix& queries, const CodeMatrix& db,
                                        std::span<const int32_t> query_labels,
                                        std::span<const int32_t> db_labels,
                                        std::span<const int32_t> self_index) {
  const int32_t K = db.bits;
  std::vector<PrPoint> curve(K + 1);
  for (int32_t r = 0; r <= K; ++r) {
    curve[r].radius = r;
    double precision_sum = 0;
    int32_t defined_queries = 0;
    double recall_sum = 0;
    for (int32_t i = 0; i < queries.n; ++i) {
      const int32_t self = self_index.empty() ? -1 : self_index[i];
      int64_t retrieved = 0, relevant_retrieved = 0, relevant_total = 0;
      for (int32_t j = 0; j < db.n; ++j) {
        if (j == self) continue;
        const bool is_relevant = db_labels[j] == query_labels[i];
        if (is_relevant) ++relevant_total;
        if (hamming(queries.row(i), db.row(j)) <= r) {
          ++retrieved;
          if (is_relevant) ++relevant_retrieved;
        }
      }
      if (retrieved > 0) {
        precision_sum += static_cast<double>(relevant_retrieved) / retrieved;
        ++defined_queries;
      }
      recall_sum += static_cast<double>(relevant_retrieved) / relevant_total;
    }
    curve[r].recall = recall_sum / queries.n;
    if (defined_queries > 0) {
      curve[r].defined = true;
      curve[r].precision = precision_sum / defined_queries;
    } else {
      curve[r].defined = false;
      curve[r].precision = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return curve;
}

}  // namespace ahcl::reference
