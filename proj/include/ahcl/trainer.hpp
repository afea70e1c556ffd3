#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ahcl/dataset.hpp"
#include "ahcl/model.hpp"
#include "ahcl/solver.hpp"

namespace ahcl {

struct TrainConfig {
  int32_t bits = 16;
  Hyperparams hp{};           // lambda=200, gamma=20, lr=1e-4
  int32_t outer_iters = 50;
  int32_t inner_epochs = 3;   // SGD passes over omega per outer iteration
  int32_t batch_size = 32;
  int32_t query_count = 0;    // m; 0 means min(n, 1000)
  uint64_t seed = 0;
  bool deterministic = true;  // fixed-order reductions, thread-count independent
  bool resample_omega = true;
  bool standardize = false;
  int32_t solver_max_sweeps = 20;

  int32_t resolved_query_count(int32_t n) const;
  void validate(const FeatureDataset& ds) const;
};

struct IterationRecord {
  int32_t iter = 0;  // 1-based
  double loss = 0;
  double similarity = 0;
  double quantization = 0;
  double semantic = 0;
  int64_t bits_flipped = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<IterationRecord> iterations;
};

struct TrainResult {
  HeadParams params;
  CodeMatrix db_codes;
  TrainReport report;
  Standardizer standardizer;
};

/// Alternating optimization: per outer iteration, (1) sample or keep omega,
/// (2) rebuild the similarity matrix, (3) inner_epochs of minibatch SGD on
/// the head with the codes fixed, (4) recompute the relaxed codes, (5) solve
/// the database codes warm-started from the current ones. The code phase
/// never increases objective_b_terms.
TrainResult train(const FeatureDataset& ds, const TrainConfig& cfg);

/// Symmetric baseline: row j = encode(params, feature row j).
CodeMatrix encode_database(const HeadParams& params, const FeatureDataset& ds);

/// CSV: iter,loss,term1,term2,term3,bits_flipped,seconds
void save_report_csv(const TrainReport& report, const std::string& path);

}  // namespace ahcl
