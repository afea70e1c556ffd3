#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ahcl/codes.hpp"
#include "ahcl/dataset.hpp"

namespace ahcl {

struct Hyperparams {
  double lambda = 200.0;  // quantization-constraint weight, >= 0
  double gamma = 20.0;    // semantic-loss weight, >= 0
  double lr = 1e-4;       // SGD step size, > 0
};

/// Trainable head: hash layer (linear + tanh) and semantic layer
/// (linear + softmax). The semantic layer reads the hash layer's
/// pre-activation.
struct HeadParams {
  int32_t bits = 0;         // K, code length
  int32_t dim = 0;          // input feature dimension
  int32_t num_classes = 0;  // C

  std::vector<double> hash_w;  // K x dim
  std::vector<double> hash_b;  // K
  std::vector<double> sem_w;   // C x K
  std::vector<double> sem_b;   // C

  /// Weights i.i.d. uniform in [-a, a] with a = sqrt(6/(fan_in+fan_out)),
  /// biases zero.
  static HeadParams init(int32_t bits, int32_t dim, int32_t num_classes, uint64_t seed);

  void validate() const;
};

struct ForwardCache {
  std::vector<double> pre;      // u = hash_w * f + hash_b
  std::vector<double> relaxed;  // tanh(u), in (-1, 1)
  std::vector<double> logits;   // o = sem_w * u + sem_b
  std::vector<double> probs;    // softmax(o), sums to 1
};

ForwardCache forward(const HeadParams& p, std::span<const float> feature);
/// Buffer-reusing variant for hot loops.
void forward_into(const HeadParams& p, std::span<const float> feature, ForwardCache& out);

/// code_k = +1 if u_k > 0 else -1 (zero maps to -1).
void encode(const HeadParams& p, std::span<const float> feature, std::span<int8_t> code_out);

/// Relaxed (tanh) codes for the selected dataset rows: |rows| x K, row-major.
std::vector<double> relaxed_codes(const HeadParams& p, const FeatureDataset& ds,
                                  std::span<const int32_t> rows);

/// One slice of the training objective: query features and labels, the full
/// database code matrix, the query rows of that matrix, and the matching
/// similarity slice.
struct QueryBatch {
  int32_t m = 0;
  int32_t n = 0;
  std::span<const float> features;     // m x dim
  std::span<const int32_t> labels;     // m
  const CodeMatrix* db_codes = nullptr;  // n x K
  std::span<const int8_t> own_codes;   // m x K, database rows of the queries
  std::span<const int8_t> similarity;  // m x n, +-1

  void validate(const HeadParams& p) const;
};

struct LossTerms {
  double similarity = 0;    // sum_i sum_j (relaxed_i . b_j - K s_ij)^2
  double quantization = 0;  // sum_i |b_i - relaxed_i|^2
  double semantic = 0;      // sum_i cross-entropy(label_i, probs_i)
  double total = 0;         // similarity + lambda*quantization + gamma*semantic
};

struct GradBundle {
  std::vector<double> hash_w, hash_b, sem_w, sem_b;

  static GradBundle zeros(const HeadParams& p);
};

/// Raw sums, not normalized by m or n. `deterministic` forces fixed-order
/// reductions so the result is independent of the OpenMP thread count.
LossTerms loss(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp,
               bool deterministic = true);

/// Analytic gradient of loss() with respect to the four head parameters.
/// Per-sample contributions are computed in parallel and reduced in a fixed
/// order, so the result never depends on the thread count.
GradBundle grad(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp);

/// Central finite differences of loss().total; the arbitration oracle.
GradBundle finite_difference_grad(const HeadParams& p, const QueryBatch& batch,
                                  const Hyperparams& hp, double step);

/// Worst per-entry relative error, denominator max(|a|,|b|,1e-8).
double max_relative_error(const GradBundle& a, const GradBundle& b);

/// max_relative_error(grad(...), finite_difference_grad(...)).
double grad_check(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp,
                  double step);

/// xi <- xi - lr * d/dxi for each parameter.
void sgd_step(HeadParams& p, const GradBundle& g, double lr);

/// Checkpoint layout: "AHM1" | u32 version=1 | u32 K | u32 d | u32 C |
/// u8 standardize | [d means + d stddevs, f64] | hash_w | hash_b | sem_w |
/// sem_b as f64 little-endian row-major.
struct ModelCheckpoint {
  HeadParams params;
  Standardizer standardizer;
};

void save_model(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_model(const std::string& path);

}  // namespace ahcl
