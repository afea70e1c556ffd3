#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ahcl/common.hpp"

namespace ahcl {

/// Fixed feature vectors with integer class labels. Features are stored as
/// 32-bit floats, matching the on-disk format bit for bit; all downstream
/// math promotes to double.
struct FeatureDataset {
  int32_t n = 0;            // samples
  int32_t dim = 0;          // feature dimension
  int32_t num_classes = 0;  // labels lie in [0, num_classes)
  std::vector<float> features;   // n x dim, row-major
  std::vector<int32_t> labels;   // n

  std::span<const float> row(int32_t i) const {
    return {features.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)};
  }

  /// Throws parse_error / std::invalid_argument on any invariant violation
  /// (shape mismatch, label out of range, non-finite feature).
  void validate() const;
};

enum class FileFormat { binary, csv };

/// Binary layout: "AHF1" | u32 version=1 | u32 n | u32 d | u32 C |
/// n x u32 labels | n*d x f32 features, row-major, little-endian.
/// CSV layout: optional "# C=<count>" line, header "label,f0,...,f{d-1}",
/// one sample per line. Without the count line C is inferred as max label+1.
FeatureDataset load_features(const std::string& path, FileFormat format);
void save_features(const FeatureDataset& ds, const std::string& path, FileFormat format);

/// Pairwise same-class indicator over (query, database) pairs:
/// +1 when labels match, -1 otherwise.
struct SimilarityMatrix {
  int32_t m = 0;  // queries
  int32_t n = 0;  // database
  std::vector<int8_t> entries;  // m x n

  int8_t at(int32_t i, int32_t j) const {
    return entries[static_cast<size_t>(i) * n + j];
  }
  std::span<const int8_t> qrow(int32_t i) const {
    return {entries.data() + static_cast<size_t>(i) * n, static_cast<size_t>(n)};
  }
};

SimilarityMatrix build_similarity_matrix(std::span<const int32_t> query_labels,
                                         std::span<const int32_t> db_labels);

/// The database index set is implicitly {0..n-1}; omega is the sampled
/// query subset, kept sorted ascending, no duplicates.
struct IndexSets {
  int32_t n = 0;
  std::vector<int32_t> omega;

  int32_t m() const { return static_cast<int32_t>(omega.size()); }
};

/// Uniform random m-subset of {0..n-1}, deterministic for a given seed.
IndexSets sample_query_indices(int32_t n, int32_t m, uint64_t seed);

/// Desk-scale stand-in for externally extracted features: class centers on
/// seeded random directions with pairwise distance >= separation*noise_sigma,
/// plus isotropic Gaussian noise. Row order is class-major.
FeatureDataset generate_synthetic(int32_t num_classes, int32_t per_class, int32_t dim,
                                  double separation, double noise_sigma, uint64_t seed);

/// Optional per-dimension standardization. Fitted at training time and
/// recorded in the model checkpoint so encode-time preprocessing matches.
struct Standardizer {
  bool enabled = false;
  std::vector<double> mean;    // dim entries when enabled
  std::vector<double> stddev;  // dim entries when enabled, floored at 1e-12

  static Standardizer fit(const FeatureDataset& ds);
  FeatureDataset apply(const FeatureDataset& ds) const;
};

}  // namespace ahcl
