// Timing comparison between the serial reference implementations and the
// OpenMP kernels. Not a correctness gate; equality is covered by the tests.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "ahcl/metrics.hpp"
#include "ahcl/reference.hpp"
#include "ahcl/trainer.hpp"

using namespace ahcl;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, s);
  }
  return best;
}

void report(const char* kernel, const char* size, double ref_s, double omp1_s,
            double ompn_s, int threads) {
  std::printf("%-18s %-26s %10.1f %10.1f %10.1f %8.2fx %8.2fx\n", kernel, size,
              ref_s * 1e3, omp1_s * 1e3, ompn_s * 1e3, ref_s / omp1_s, ref_s / ompn_s);
  (void)threads;
}

volatile double g_sink = 0;

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
  std::printf("threads for the parallel column: %d\n\n", threads);
  std::printf("%-18s %-26s %10s %10s %10s %8s %8s\n", "kernel", "size", "ref ms",
              "omp(1) ms", "omp(N) ms", "x(1)", "x(N)");

  Rng rng(99);

  {  // loss over a query slice
    const int32_t m = 256, n = 4000, d = 64, K = 64, C = 8;
    HeadParams p = HeadParams::init(K, d, C, 1);
    CodeMatrix db(n, K);
    for (int8_t& v : db.codes) v = rng.sign();
    std::vector<float> features(static_cast<size_t>(m) * d);
    for (float& f : features) f = static_cast<float>(rng.uniform(-1, 1));
    std::vector<int32_t> labels(m), dlabels(n);
    for (auto& l : labels) l = static_cast<int32_t>(rng.below(C));
    for (auto& l : dlabels) l = static_cast<int32_t>(rng.below(C));
    std::vector<int8_t> own(static_cast<size_t>(m) * K);
    for (int8_t& v : own) v = rng.sign();
    const SimilarityMatrix sim = build_similarity_matrix(labels, dlabels);
    QueryBatch batch;
    batch.m = m;
    batch.n = n;
    batch.features = features;
    batch.labels = labels;
    batch.db_codes = &db;
    batch.own_codes = own;
    batch.similarity = sim.entries;
    const Hyperparams hp{200.0, 20.0, 1e-4};

    const double ref = time_best_of(3, [&] { g_sink = reference::loss(p, batch, hp).total; });
    omp_set_num_threads(1);
    const double omp1 = time_best_of(3, [&] { g_sink = loss(p, batch, hp).total; });
    omp_set_num_threads(threads);
    const double ompn = time_best_of(3, [&] { g_sink = loss(p, batch, hp).total; });
    report("loss", "m=256 n=4000 d=64 K=64", ref, omp1, ompn, threads);

    omp_set_num_threads(1);
    const double grad1 = time_best_of(3, [&] { g_sink = grad(p, batch, hp).hash_b[0]; });
    omp_set_num_threads(threads);
    const double gradn = time_best_of(3, [&] { g_sink = grad(p, batch, hp).hash_b[0]; });
    report("grad", "m=256 n=4000 d=64 K=64", grad1, grad1, gradn, threads);
  }

  {  // batch encoding
    const FeatureDataset ds = generate_synthetic(8, 4000, 64, 5.0, 1.0, 2);
    const HeadParams p = HeadParams::init(64, ds.dim, ds.num_classes, 3);
    std::vector<int32_t> rows(ds.n);
    for (int32_t i = 0; i < ds.n; ++i) rows[i] = i;
    const double ref = time_best_of(3, [&] {
      // per-row forward without the parallel loop
      double acc = 0;
      for (int32_t i = 0; i < ds.n; ++i) acc += forward(p, ds.row(i)).relaxed[0];
      g_sink = acc;
    });
    omp_set_num_threads(1);
    const double omp1 = time_best_of(3, [&] { g_sink = relaxed_codes(p, ds, rows)[0]; });
    omp_set_num_threads(threads);
    const double ompn = time_best_of(3, [&] { g_sink = relaxed_codes(p, ds, rows)[0]; });
    report("relaxed_codes", "n=32000 d=64 K=64", ref, omp1, ompn, threads);
  }

  {  // retrieval
    const int32_t n = 200000, nq = 100, K = 64, k = 50;
    CodeMatrix db(n, K), queries(nq, K);
    for (int8_t& v : db.codes) v = rng.sign();
    for (int8_t& v : queries.codes) v = rng.sign();
    const PackedCodeMatrix pdb = pack(db);
    const PackedCodeMatrix pq = pack(queries);

    const double ref = time_best_of(3, [&] {
      size_t total = 0;
      for (int32_t i = 0; i < nq; ++i) total += reference::rank_topk(queries.row(i), db, k).size();
      g_sink = static_cast<double>(total);
    });
    omp_set_num_threads(1);
    const double omp1 =
        time_best_of(3, [&] { g_sink = static_cast<double>(rank_topk_batch(pq, pdb, k).size()); });
    omp_set_num_threads(threads);
    const double ompn =
        time_best_of(3, [&] { g_sink = static_cast<double>(rank_topk_batch(pq, pdb, k).size()); });
    report("rank_topk", "100 queries x 200k K=64", ref, omp1, ompn, threads);
  }

  {  // PR curve
    const int32_t n = 20000, nq = 100, K = 32;
    CodeMatrix db(n, K), queries(nq, K);
    for (int8_t& v : db.codes) v = rng.sign();
    for (int8_t& v : queries.codes) v = rng.sign();
    std::vector<int32_t> dl(n), ql(nq);
    for (auto& v : dl) v = static_cast<int32_t>(rng.below(4));
    for (auto& v : ql) v = static_cast<int32_t>(rng.below(4));
    const PackedCodeMatrix pdb = pack(db);
    const PackedCodeMatrix pq = pack(queries);

    const double ref = time_best_of(3, [&] {
      g_sink = reference::pr_curve_by_radius(queries, db, ql, dl).back().recall;
    });
    omp_set_num_threads(1);
    const double omp1 =
        time_best_of(3, [&] { g_sink = pr_curve_by_radius(pq, pdb, ql, dl).back().recall; });
    omp_set_num_threads(threads);
    const double ompn =
        time_best_of(3, [&] { g_sink = pr_curve_by_radius(pq, pdb, ql, dl).back().recall; });
    report("pr_curve", "100 queries x 20k K=32", ref, omp1, ompn, threads);
  }

  return 0;
}
