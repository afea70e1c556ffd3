#include "ahcl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"

namespace ahcl {

void FeatureDataset::validate() const {
  if (n < 1 || dim < 1 || num_classes < 1) {
    throw std::invalid_argument("dataset requires n >= 1, dim >= 1, classes >= 1");
  }
  if (labels.size() != static_cast<size_t>(n) ||
      features.size() != static_cast<size_t>(n) * dim) {
    throw std::invalid_argument("dataset buffer sizes disagree with n and dim");
  }
  for (int32_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " at row " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
  for (size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) {
      throw std::invalid_argument("non-finite feature at flat index " + std::to_string(i));
    }
  }
}

namespace {

constexpr uint32_t kFeatureVersion = 1;

FeatureDataset load_binary(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("AHF1");
  const uint32_t version = in.u32("version");
  if (version != kFeatureVersion) {
    throw parse_error(path + ": unsupported version " + std::to_string(version) +
                      " at byte 4");
  }
  FeatureDataset ds;
  ds.n = static_cast<int32_t>(in.u32("sample count"));
  ds.dim = static_cast<int32_t>(in.u32("dimension"));
  ds.num_classes = static_cast<int32_t>(in.u32("class count"));
  if (ds.n < 1 || ds.dim < 1 || ds.num_classes < 1) {
    throw parse_error(path + ": header declares empty dataset (n=" + std::to_string(ds.n) +
                      ", d=" + std::to_string(ds.dim) + ", C=" +
                      std::to_string(ds.num_classes) + ")");
  }

  ds.labels.resize(ds.n);
  for (int32_t i = 0; i < ds.n; ++i) {
    const size_t at = in.offset();
    const uint32_t label = in.u32("label");
    if (label >= static_cast<uint32_t>(ds.num_classes)) {
      throw parse_error(path + ": label " + std::to_string(label) + " >= C=" +
                        std::to_string(ds.num_classes) + " at byte " + std::to_string(at));
    }
    ds.labels[i] = static_cast<int32_t>(label);
  }

  ds.features.resize(static_cast<size_t>(ds.n) * ds.dim);
  const size_t features_at = in.offset();
  in.span<float>(ds.features, "features");
  for (size_t i = 0; i < ds.features.size(); ++i) {
    if (!std::isfinite(ds.features[i])) {
      throw parse_error(path + ": non-finite feature at byte " +
                        std::to_string(features_at + i * sizeof(float)));
    }
  }
  in.expect_eof();
  return ds;
}

void save_binary(const FeatureDataset& ds, const std::string& path) {
  detail::BinaryWriter out(path);
  out.magic("AHF1");
  out.u32(kFeatureVersion);
  out.u32(static_cast<uint32_t>(ds.n));
  out.u32(static_cast<uint32_t>(ds.dim));
  out.u32(static_cast<uint32_t>(ds.num_classes));
  for (int32_t label : ds.labels) out.u32(static_cast<uint32_t>(label));
  out.span<float>(ds.features);
  out.finish();
}

[[noreturn]] void csv_fail(const std::string& path, size_t line, const std::string& what) {
  throw parse_error(path + ": " + what + " at line " + std::to_string(line));
}

FeatureDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "' for reading");

  std::string line;
  size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    return false;
  };

  if (!next_line()) csv_fail(path, 1, "empty file");

  int32_t declared_classes = -1;
  if (line.rfind("#", 0) == 0) {
    const auto eq = line.find("C=");
    if (eq == std::string::npos) csv_fail(path, lineno, "unrecognized metadata line");
    const char* first = line.data() + eq + 2;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, declared_classes);
    if (ec != std::errc{} || ptr != last || declared_classes < 1) {
      csv_fail(path, lineno, "malformed class count");
    }
    if (!next_line()) csv_fail(path, lineno + 1, "missing header");
  }

  if (line.rfind("label", 0) != 0) csv_fail(path, lineno, "malformed header");
  const int32_t dim =
      static_cast<int32_t>(std::count(line.begin(), line.end(), ','));
  if (dim < 1) csv_fail(path, lineno, "header declares no feature columns");

  FeatureDataset ds;
  ds.dim = dim;
  while (next_line()) {
    if (line.empty()) continue;
    const char* cur = line.data();
    const char* last = line.data() + line.size();

    int32_t label = -1;
    {
      auto [ptr, ec] = std::from_chars(cur, last, label);
      if (ec != std::errc{} || ptr == last || *ptr != ',' || label < 0) {
        csv_fail(path, lineno, "malformed label");
      }
      cur = ptr + 1;
    }
    if (declared_classes >= 0 && label >= declared_classes) {
      csv_fail(path, lineno,
               "label " + std::to_string(label) + " >= declared C=" +
                   std::to_string(declared_classes));
    }
    ds.labels.push_back(label);

    for (int32_t c = 0; c < dim; ++c) {
      float value = 0.0f;
      auto [ptr, ec] = std::from_chars(cur, last, value);
      if (ec != std::errc{}) csv_fail(path, lineno, "malformed feature value");
      if (!std::isfinite(value)) csv_fail(path, lineno, "non-finite feature value");
      ds.features.push_back(value);
      cur = ptr;
      if (c + 1 < dim) {
        if (cur == last || *cur != ',') csv_fail(path, lineno, "too few feature columns");
        ++cur;
      }
    }
    if (cur != last) csv_fail(path, lineno, "trailing characters");
  }

  ds.n = static_cast<int32_t>(ds.labels.size());
  if (ds.n < 1) csv_fail(path, lineno, "no data rows");

  const int32_t max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
  ds.num_classes = declared_classes >= 0 ? declared_classes : max_label + 1;
  return ds;
}

void save_csv(const FeatureDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out << "# C=" << ds.num_classes << "\n";
  out << "label";
  for (int32_t c = 0; c < ds.dim; ++c) out << ",f" << c;
  out << "\n";
  char buf[40];
  for (int32_t i = 0; i < ds.n; ++i) {
    out << ds.labels[i];
    const auto row = ds.row(i);
    for (int32_t c = 0; c < ds.dim; ++c) {
      // 17 significant digits round-trips the stored value exactly
      std::snprintf(buf, sizeof buf, ",%.17g", static_cast<double>(row[c]));
      out << buf;
    }
    out << "\n";
  }
  out.flush();
  if (!out) throw io_error("write failed on '" + path + "'");
}

}  // namespace

FeatureDataset load_features(const std::string& path, FileFormat format) {
  FeatureDataset ds =
      format == FileFormat::binary ? load_binary(path) : load_csv(path);
  ds.validate();
  return ds;
}

void save_features(const FeatureDataset& ds, const std::string& path, FileFormat format) {
  ds.validate();
  if (path.empty()) throw io_error("empty output path");
  if (format == FileFormat::binary) {
    save_binary(ds, path);
  } else {
    save_csv(ds, path);
  }
}

SimilarityMatrix build_similarity_matrix(std::span<const int32_t> query_labels,
                                         std::span<const int32_t> db_labels) {
  SimilarityMatrix sim;
  sim.m = static_cast<int32_t>(query_labels.size());
  sim.n = static_cast<int32_t>(db_labels.size());
  sim.entries.resize(static_cast<size_t>(sim.m) * sim.n);
  for (int32_t i = 0; i < sim.m; ++i) {
    int8_t* row = sim.entries.data() + static_cast<size_t>(i) * sim.n;
    const int32_t qi = query_labels[i];
    for (int32_t j = 0; j < sim.n; ++j) {
      row[j] = qi == db_labels[j] ? int8_t{1} : int8_t{-1};
    }
  }
  return sim;
}

IndexSets sample_query_indices(int32_t n, int32_t m, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("database is empty");
  if (m < 1 || m > n) {
    throw std::invalid_argument("query count " + std::to_string(m) +
                                " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<int32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  for (int32_t i = 0; i < m; ++i) {
    const int32_t j = i + static_cast<int32_t>(rng.below(static_cast<uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  IndexSets idx;
  idx.n = n;
  idx.omega.assign(pool.begin(), pool.begin() + m);
  std::sort(idx.omega.begin(), idx.omega.end());
  return idx;
}

FeatureDataset generate_synthetic(int32_t num_classes, int32_t per_class, int32_t dim,
                                  double separation, double noise_sigma, uint64_t seed) {
  if (num_classes < 1 || per_class < 1 || dim < 1) {
    throw std::invalid_argument("class count, per-class count, and dimension must be positive");
  }
  if (!(noise_sigma > 0) || !(separation >= 0)) {
    throw std::invalid_argument("noise sigma must be > 0 and separation >= 0");
  }

  // Unit directions for the centers, redrawn when two come closer than 0.5
  // so the later rescaling stays bounded.
  Rng center_rng(derive_seed(seed, SeedStream::synthetic_centers));
  std::vector<double> units(static_cast<size_t>(num_classes) * dim);
  double min_dist = std::numeric_limits<double>::infinity();
  for (int32_t c = 0; c < num_classes; ++c) {
    double* u = units.data() + static_cast<size_t>(c) * dim;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      double norm2 = 0;
      for (int32_t k = 0; k < dim; ++k) {
        u[k] = center_rng.normal();
        norm2 += u[k] * u[k];
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (int32_t k = 0; k < dim; ++k) u[k] *= inv;

      double closest = std::numeric_limits<double>::infinity();
      for (int32_t prev = 0; prev < c; ++prev) {
        const double* v = units.data() + static_cast<size_t>(prev) * dim;
        double d2 = 0;
        for (int32_t k = 0; k < dim; ++k) d2 += (u[k] - v[k]) * (u[k] - v[k]);
        closest = std::min(closest, std::sqrt(d2));
      }
      if (closest >= 0.5) {
        min_dist = std::min(min_dist, closest);
        break;
      }
      if (attempt == 999) {
        throw std::invalid_argument("cannot place " + std::to_string(num_classes) +
                                    " separated centers in dimension " + std::to_string(dim));
      }
    }
  }

  // Scale so the closest center pair sits exactly separation*sigma apart.
  const double radius =
      num_classes > 1 ? separation * noise_sigma / min_dist : 0.0;

  FeatureDataset ds;
  ds.n = num_classes * per_class;
  ds.dim = dim;
  ds.num_classes = num_classes;
  ds.labels.resize(ds.n);
  ds.features.resize(static_cast<size_t>(ds.n) * dim);

  Rng noise_rng(derive_seed(seed, SeedStream::synthetic_noise));
  for (int32_t c = 0; c < num_classes; ++c) {
    const double* center = units.data() + static_cast<size_t>(c) * dim;
    for (int32_t s = 0; s < per_class; ++s) {
      const int32_t row = c * per_class + s;
      ds.labels[row] = c;
      float* dst = ds.features.data() + static_cast<size_t>(row) * dim;
      for (int32_t k = 0; k < dim; ++k) {
        dst[k] = static_cast<float>(center[k] * radius + noise_sigma * noise_rng.normal());
      }
    }
  }
  return ds;
}

Standardizer Standardizer::fit(const FeatureDataset& ds) {
  Standardizer st;
  st.enabled = true;
  st.mean.assign(ds.dim, 0.0);
  st.stddev.assign(ds.dim, 0.0);
  for (int32_t i = 0; i < ds.n; ++i) {
    const auto row = ds.row(i);
    for (int32_t k = 0; k < ds.dim; ++k) st.mean[k] += row[k];
  }
  for (int32_t k = 0; k < ds.dim; ++k) st.mean[k] /= ds.n;
  for (int32_t i = 0; i < ds.n; ++i) {
    const auto row = ds.row(i);
    for (int32_t k = 0; k < ds.dim; ++k) {
      const double d = row[k] - st.mean[k];
      st.stddev[k] += d * d;
    }
  }
  for (int32_t k = 0; k < ds.dim; ++k) {
    st.stddev[k] = std::max(std::sqrt(st.stddev[k] / ds.n), 1e-12);
  }
  return st;
}

FeatureDataset Standardizer::apply(const FeatureDataset& ds) const {
  if (!enabled) return ds;
  if (mean.size() != static_cast<size_t>(ds.dim)) {
    throw std::invalid_argument("standardizer dimension " + std::to_string(mean.size()) +
                                " does not match dataset dimension " +
                                std::to_string(ds.dim));
  }
  FeatureDataset out = ds;
  for (int32_t i = 0; i < ds.n; ++i) {
    float* row = out.features.data() + static_cast<size_t>(i) * ds.dim;
    for (int32_t k = 0; k < ds.dim; ++k) {
      row[k] = static_cast<float>((static_cast<double>(row[k]) - mean[k]) / stddev[k]);
    }
  }
  return out;
}

}  // namespace ahcl
