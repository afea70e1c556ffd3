#include "ahcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ahcl {

int32_t TrainConfig::resolved_query_count(int32_t n) const {
  if (query_count > 0) return query_count;
  return std::min(n, 1000);
}

void TrainConfig::validate(const FeatureDataset& ds) const {
  if (bits < 1) throw std::invalid_argument("code length must be >= 1");
  if (outer_iters < 1) throw std::invalid_argument("outer iterations must be >= 1");
  if (inner_epochs < 0) throw std::invalid_argument("inner epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (solver_max_sweeps < 1) throw std::invalid_argument("solver sweeps must be >= 1");
  if (!(hp.lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(hp.gamma >= 0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(hp.lr > 0)) throw std::invalid_argument("learning rate must be > 0");
  const int32_t m = resolved_query_count(ds.n);
  if (m < 1 || m > ds.n) {
    throw std::invalid_argument("query count " + std::to_string(m) + " outside [1, " +
                                std::to_string(ds.n) + "]");
  }
}

namespace {

// Gathered views of one minibatch: scattered omega rows copied into
// contiguous buffers the loss/grad kernels can scan.
struct BatchBuffers {
  std::vector<float> features;
  std::vector<int32_t> labels;
  std::vector<int8_t> own_codes;
  std::vector<int8_t> similarity;

  QueryBatch gather(const FeatureDataset& ds, const CodeMatrix& codes,
                    const SimilarityMatrix& sim, const IndexSets& idx,
                    std::span<const int32_t> positions) {
    const int32_t bs = static_cast<int32_t>(positions.size());
    const int32_t d = ds.dim, K = codes.bits, n = codes.n;
    features.resize(static_cast<size_t>(bs) * d);
    labels.resize(bs);
    own_codes.resize(static_cast<size_t>(bs) * K);
    similarity.resize(static_cast<size_t>(bs) * n);
    for (int32_t b = 0; b < bs; ++b) {
      const int32_t pos = positions[b];   // position within omega
      const int32_t row = idx.omega[pos]; // database row
      const auto f = ds.row(row);
      std::copy(f.begin(), f.end(), features.begin() + static_cast<size_t>(b) * d);
      labels[b] = ds.labels[row];
      const auto code = codes.row(row);
      std::copy(code.begin(), code.end(), own_codes.begin() + static_cast<size_t>(b) * K);
      const auto srow = sim.qrow(pos);
      std::copy(srow.begin(), srow.end(), similarity.begin() + static_cast<size_t>(b) * n);
    }
    QueryBatch batch;
    batch.m = bs;
    batch.n = n;
    batch.features = features;
    batch.labels = labels;
    batch.db_codes = &codes;
    batch.own_codes = own_codes;
    batch.similarity = similarity;
    return batch;
  }
};

std::vector<int32_t> omega_labels(const FeatureDataset& ds, const IndexSets& idx) {
  std::vector<int32_t> out(idx.m());
  for (int32_t i = 0; i < idx.m(); ++i) out[i] = ds.labels[idx.omega[i]];
  return out;
}

}  // namespace

TrainResult train(const FeatureDataset& input, const TrainConfig& cfg) {
  input.validate();
  cfg.validate(input);

  TrainResult result;
  result.standardizer.enabled = cfg.standardize;
  if (cfg.standardize) result.standardizer = Standardizer::fit(input);
  const FeatureDataset ds = result.standardizer.apply(input);

  const int32_t m = cfg.resolved_query_count(ds.n);
  result.params = HeadParams::init(cfg.bits, ds.dim, ds.num_classes, cfg.seed);

  IndexSets idx = sample_query_indices(
      ds.n, m, derive_seed(cfg.seed, SeedStream::omega_sampling, 0));
  SimilarityMatrix sim = build_similarity_matrix(omega_labels(ds, idx), ds.labels);

  // Codes must exist before the first SGD pass; start from the sign of the
  // initial relaxed codes on omega rows, random elsewhere.
  std::vector<double> relaxed = relaxed_codes(result.params, ds, idx.omega);
  result.db_codes = init_codes(relaxed, idx, cfg.bits, cfg.seed);

  BatchBuffers buffers;
  std::vector<int32_t> order(m);

  for (int32_t iter = 0; iter < cfg.outer_iters; ++iter) {
    const auto started = std::chrono::steady_clock::now();

    if (iter > 0 && cfg.resample_omega) {
      idx = sample_query_indices(
          ds.n, m, derive_seed(cfg.seed, SeedStream::omega_sampling, iter));
      sim = build_similarity_matrix(omega_labels(ds, idx), ds.labels);
    }

    std::iota(order.begin(), order.end(), 0);
    for (int32_t epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      Rng shuffle_rng(derive_seed(cfg.seed, SeedStream::batch_shuffle,
                                  static_cast<uint64_t>(iter) * 100003 + epoch));
      for (int32_t i = m - 1; i > 0; --i) {
        const int32_t j = static_cast<int32_t>(shuffle_rng.below(i + 1));
        std::swap(order[i], order[j]);
      }
      for (int32_t start = 0; start < m; start += cfg.batch_size) {
        const int32_t bs = std::min(cfg.batch_size, m - start);
        const QueryBatch batch = buffers.gather(
            ds, result.db_codes, sim, idx, std::span(order).subspan(start, bs));
        const GradBundle g = grad(result.params, batch, cfg.hp);
        sgd_step(result.params, g, cfg.hp.lr);
      }
    }

    relaxed = relaxed_codes(result.params, ds, idx.omega);
    const double before_obj =
        objective_b_terms(result.db_codes, relaxed, sim, cfg.hp.lambda, idx);
    const SolveStats stats = solve_codes(result.db_codes, relaxed, sim, cfg.hp.lambda,
                                         idx, cfg.solver_max_sweeps);
    const double after_obj =
        objective_b_terms(result.db_codes, relaxed, sim, cfg.hp.lambda, idx);
    if (after_obj > before_obj + 1e-9 * std::max(1.0, std::fabs(before_obj))) {
      throw std::logic_error("code phase increased its objective");
    }

    // Full-slice loss on the end-of-iteration state for the report.
    std::vector<int32_t> all(m);
    std::iota(all.begin(), all.end(), 0);
    const QueryBatch full = buffers.gather(ds, result.db_codes, sim, idx, all);
    const LossTerms terms = loss(result.params, full, cfg.hp, cfg.deterministic);

    IterationRecord rec;
    rec.iter = iter + 1;
    rec.loss = terms.total;
    rec.similarity = terms.similarity;
    rec.quantization = terms.quantization;
    rec.semantic = terms.semantic;
    rec.bits_flipped = stats.bits_flipped;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                      .count();
    result.report.iterations.push_back(rec);
  }
  return result;
}

CodeMatrix encode_database(const HeadParams& params, const FeatureDataset& ds) {
  if (ds.dim != params.dim) {
    throw std::invalid_argument("dataset dimension does not match the model");
  }
  CodeMatrix codes(ds.n, params.bits);
#pragma omp parallel for schedule(static)
  for (int32_t i = 0; i < ds.n; ++i) {
    encode(params, ds.row(i), codes.row(i));
  }
  return codes;
}

void save_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out << "iter,loss,term1,term2,term3,bits_flipped,seconds\n";
  char buf[256];
  for (const IterationRecord& r : report.iterations) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%lld,%.6f\n", r.iter,
                  r.loss, r.similarity, r.quantization, r.semantic,
                  static_cast<long long>(r.bits_flipped), r.seconds);
    out << buf;
  }
  out.flush();
  if (!out) throw io_error("write failed on '" + path + "'");
}

}  // namespace ahcl
