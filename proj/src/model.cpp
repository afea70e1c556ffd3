#include "ahcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "binary_io.hpp"

namespace ahcl {

namespace {
constexpr double kProbFloor = 1e-12;
}

HeadParams HeadParams::init(int32_t bits, int32_t dim, int32_t num_classes,
                            uint64_t seed) {
  if (bits < 1 || dim < 1 || num_classes < 1) {
    throw std::invalid_argument("head shape must be positive");
  }
  HeadParams p;
  p.bits = bits;
  p.dim = dim;
  p.num_classes = num_classes;
  p.hash_w.resize(static_cast<size_t>(bits) * dim);
  p.hash_b.assign(bits, 0.0);
  p.sem_w.resize(static_cast<size_t>(num_classes) * bits);
  p.sem_b.assign(num_classes, 0.0);

  Rng rng(derive_seed(seed, SeedStream::param_init));
  const double a_hash = std::sqrt(6.0 / (dim + bits));
  for (double& w : p.hash_w) w = rng.uniform(-a_hash, a_hash);
  const double a_sem = std::sqrt(6.0 / (bits + num_classes));
  for (double& w : p.sem_w) w = rng.uniform(-a_sem, a_sem);
  return p;
}

void HeadParams::validate() const {
  if (bits < 1 || dim < 1 || num_classes < 1 ||
      hash_w.size() != static_cast<size_t>(bits) * dim ||
      hash_b.size() != static_cast<size_t>(bits) ||
      sem_w.size() != static_cast<size_t>(num_classes) * bits ||
      sem_b.size() != static_cast<size_t>(num_classes)) {
    throw std::invalid_argument("head parameter shapes are inconsistent");
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(hash_w) || !finite(hash_b) || !finite(sem_w) || !finite(sem_b)) {
    throw std::invalid_argument("head parameters contain non-finite entries");
  }
}

void forward_into(const HeadParams& p, std::span<const float> feature, ForwardCache& out) {
  if (feature.size() != static_cast<size_t>(p.dim)) {
    throw std::invalid_argument("feature dimension " + std::to_string(feature.size()) +
                                " does not match head dimension " + std::to_string(p.dim));
  }
  const int32_t K = p.bits, d = p.dim, C = p.num_classes;
  out.pre.resize(K);
  out.relaxed.resize(K);
  out.logits.resize(C);
  out.probs.resize(C);

  for (int32_t k = 0; k < K; ++k) {
    const double* w = p.hash_w.data() + static_cast<size_t>(k) * d;
    double acc = p.hash_b[k];
    for (int32_t c = 0; c < d; ++c) acc += w[c] * feature[c];
    out.pre[k] = acc;
    out.relaxed[k] = std::tanh(acc);
  }

  // semantic layer reads the pre-activation
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int32_t c = 0; c < C; ++c) {
    const double* w = p.sem_w.data() + static_cast<size_t>(c) * K;
    double acc = p.sem_b[c];
    for (int32_t k = 0; k < K; ++k) acc += w[k] * out.pre[k];
    out.logits[c] = acc;
    max_logit = std::max(max_logit, acc);
  }
  double z = 0;
  for (int32_t c = 0; c < C; ++c) {
    out.probs[c] = std::exp(out.logits[c] - max_logit);
    z += out.probs[c];
  }
  for (int32_t c = 0; c < C; ++c) out.probs[c] /= z;
}

ForwardCache forward(const HeadParams& p, std::span<const float> feature) {
  ForwardCache fc;
  forward_into(p, feature, fc);
  return fc;
}

void encode(const HeadParams& p, std::span<const float> feature, std::span<int8_t> code_out) {
  if (feature.size() != static_cast<size_t>(p.dim) ||
      code_out.size() != static_cast<size_t>(p.bits)) {
    throw std::invalid_argument("encode buffer shapes do not match the head");
  }
  for (int32_t k = 0; k < p.bits; ++k) {
    const double* w = p.hash_w.data() + static_cast<size_t>(k) * p.dim;
    double acc = p.hash_b[k];
    for (int32_t c = 0; c < p.dim; ++c) acc += w[c] * feature[c];
    code_out[k] = acc > 0 ? int8_t{1} : int8_t{-1};
  }
}

std::vector<double> relaxed_codes(const HeadParams& p, const FeatureDataset& ds,
                                  std::span<const int32_t> rows) {
  if (ds.dim != p.dim) {
    throw std::invalid_argument("dataset dimension does not match the head");
  }
  const int32_t m = static_cast<int32_t>(rows.size());
  std::vector<double> out(static_cast<size_t>(m) * p.bits);
#pragma omp parallel
  {
    ForwardCache fc;
#pragma omp for schedule(static)
    for (int32_t i = 0; i < m; ++i) {
      forward_into(p, ds.row(rows[i]), fc);
      std::copy(fc.relaxed.begin(), fc.relaxed.end(),
                out.begin() + static_cast<size_t>(i) * p.bits);
    }
  }
  return out;
}

void QueryBatch::validate(const HeadParams& p) const {
  if (db_codes == nullptr) throw std::invalid_argument("query batch has no database codes");
  if (db_codes->bits != p.bits || db_codes->n != n) {
    throw std::invalid_argument("database code shape does not match the batch");
  }
  if (features.size() != static_cast<size_t>(m) * p.dim ||
      labels.size() != static_cast<size_t>(m) ||
      own_codes.size() != static_cast<size_t>(m) * p.bits ||
      similarity.size() != static_cast<size_t>(m) * n) {
    throw std::invalid_argument("query batch buffer sizes are inconsistent");
  }
  for (int32_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || labels[i] >= p.num_classes) {
      throw std::invalid_argument("batch label outside [0, C)");
    }
  }
}

namespace {

// Per-sample pieces shared by loss and grad. The database scan accumulates
// the similarity residual r_ij = relaxed_i . b_j - K*s_ij.
struct SampleEval {
  double term1 = 0;  // sum_j r_ij^2
  double term2 = 0;  // |b_i - relaxed_i|^2
  double term3 = 0;  // cross-entropy
};

SampleEval eval_sample(const HeadParams& p, const QueryBatch& b, int32_t i,
                       const ForwardCache& fc, double* residual_acc) {
  const int32_t K = p.bits, n = b.n;
  SampleEval ev;
  const int8_t* srow = b.similarity.data() + static_cast<size_t>(i) * n;
  for (int32_t j = 0; j < n; ++j) {
    const int8_t* bj = b.db_codes->codes.data() + static_cast<size_t>(j) * K;
    double dot = 0;
    for (int32_t k = 0; k < K; ++k) dot += fc.relaxed[k] * bj[k];
    const double r = dot - static_cast<double>(K) * srow[j];
    ev.term1 += r * r;
    if (residual_acc != nullptr) {
      for (int32_t k = 0; k < K; ++k) residual_acc[k] += r * bj[k];
    }
  }
  const int8_t* bi = b.own_codes.data() + static_cast<size_t>(i) * K;
  for (int32_t k = 0; k < K; ++k) {
    const double d = bi[k] - fc.relaxed[k];
    ev.term2 += d * d;
  }
  ev.term3 = -std::log(std::max(fc.probs[b.labels[i]], kProbFloor));
  return ev;
}

}  // namespace

LossTerms loss(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp,
               bool deterministic) {
  p.validate();
  batch.validate(p);
  batch.db_codes->validate();

  const int32_t m = batch.m;
  LossTerms out;
  if (deterministic) {
    std::vector<double> t1(m), t2(m), t3(m);
#pragma omp parallel
    {
      ForwardCache fc;
#pragma omp for schedule(static)
      for (int32_t i = 0; i < m; ++i) {
        forward_into(p, batch.features.subspan(static_cast<size_t>(i) * p.dim, p.dim), fc);
        const SampleEval ev = eval_sample(p, batch, i, fc, nullptr);
        t1[i] = ev.term1;
        t2[i] = ev.term2;
        t3[i] = ev.term3;
      }
    }
    for (int32_t i = 0; i < m; ++i) {
      out.similarity += t1[i];
      out.quantization += t2[i];
      out.semantic += t3[i];
    }
  } else {
    double s1 = 0, s2 = 0, s3 = 0;
#pragma omp parallel
    {
      ForwardCache fc;
#pragma omp for schedule(static) reduction(+ : s1, s2, s3)
      for (int32_t i = 0; i < m; ++i) {
        forward_into(p, batch.features.subspan(static_cast<size_t>(i) * p.dim, p.dim), fc);
        const SampleEval ev = eval_sample(p, batch, i, fc, nullptr);
        s1 += ev.term1;
        s2 += ev.term2;
        s3 += ev.term3;
      }
    }
    out.similarity = s1;
    out.quantization = s2;
    out.semantic = s3;
  }
  out.total = out.similarity + hp.lambda * out.quantization + hp.gamma * out.semantic;
  return out;
}

GradBundle GradBundle::zeros(const HeadParams& p) {
  GradBundle g;
  g.hash_w.assign(static_cast<size_t>(p.bits) * p.dim, 0.0);
  g.hash_b.assign(p.bits, 0.0);
  g.sem_w.assign(static_cast<size_t>(p.num_classes) * p.bits, 0.0);
  g.sem_b.assign(p.num_classes, 0.0);
  return g;
}

GradBundle grad(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp) {
  p.validate();
  batch.validate(p);
  batch.db_codes->validate();

  const int32_t m = batch.m, K = p.bits, d = p.dim, C = p.num_classes;

  // Per-sample gradient seeds:
  //   g_pre = [2*sum_j r_ij*b_j - 2*lambda*(b_i - relaxed_i)] .* (1 - relaxed_i^2)
  //           + gamma * sem_w^T (probs - onehot)
  //   g_logit = gamma * (probs - onehot)
  std::vector<double> g_pre(static_cast<size_t>(m) * K);
  std::vector<double> g_logit(static_cast<size_t>(m) * C, 0.0);
  std::vector<double> pre(static_cast<size_t>(m) * K);

#pragma omp parallel
  {
    ForwardCache fc;
    std::vector<double> residual_acc(K);
#pragma omp for schedule(static)
    for (int32_t i = 0; i < m; ++i) {
      forward_into(p, batch.features.subspan(static_cast<size_t>(i) * d, d), fc);
      std::fill(residual_acc.begin(), residual_acc.end(), 0.0);
      eval_sample(p, batch, i, fc, residual_acc.data());

      double* gp = g_pre.data() + static_cast<size_t>(i) * K;
      const int8_t* bi = batch.own_codes.data() + static_cast<size_t>(i) * K;
      for (int32_t k = 0; k < K; ++k) {
        double gu = 2.0 * residual_acc[k];
        gu -= 2.0 * hp.lambda * (bi[k] - fc.relaxed[k]);
        gp[k] = gu * (1.0 - fc.relaxed[k] * fc.relaxed[k]);
      }
      if (hp.gamma != 0.0) {
        double* gl = g_logit.data() + static_cast<size_t>(i) * C;
        for (int32_t c = 0; c < C; ++c) {
          const double delta = fc.probs[c] - (c == batch.labels[i] ? 1.0 : 0.0);
          gl[c] = hp.gamma * delta;
          const double* w = p.sem_w.data() + static_cast<size_t>(c) * K;
          for (int32_t k = 0; k < K; ++k) gp[k] += hp.gamma * delta * w[k];
        }
      }
      std::copy(fc.pre.begin(), fc.pre.end(), pre.begin() + static_cast<size_t>(i) * K);
    }
  }

  // Accumulate outer products row by row; each output element is a fixed
  // serial sum over samples, so results do not depend on the thread count.
  GradBundle g = GradBundle::zeros(p);
#pragma omp parallel for schedule(static)
  for (int32_t k = 0; k < K; ++k) {
    double* wrow = g.hash_w.data() + static_cast<size_t>(k) * d;
    double bacc = 0;
    for (int32_t i = 0; i < m; ++i) {
      const double gu = g_pre[static_cast<size_t>(i) * K + k];
      bacc += gu;
      const float* f = batch.features.data() + static_cast<size_t>(i) * d;
      for (int32_t c = 0; c < d; ++c) wrow[c] += gu * f[c];
    }
    g.hash_b[k] = bacc;
  }
#pragma omp parallel for schedule(static)
  for (int32_t c = 0; c < C; ++c) {
    double* wrow = g.sem_w.data() + static_cast<size_t>(c) * K;
    double bacc = 0;
    for (int32_t i = 0; i < m; ++i) {
      const double gl = g_logit[static_cast<size_t>(i) * C + c];
      bacc += gl;
      const double* u = pre.data() + static_cast<size_t>(i) * K;
      for (int32_t k = 0; k < K; ++k) wrow[k] += gl * u[k];
    }
    g.sem_b[c] = bacc;
  }
  return g;
}

GradBundle finite_difference_grad(const HeadParams& p, const QueryBatch& batch,
                                  const Hyperparams& hp, double step) {
  if (!(step > 0)) throw std::invalid_argument("finite-difference step must be > 0");
  GradBundle g = GradBundle::zeros(p);
  HeadParams probe = p;

  auto central = [&](std::vector<double>& param, std::vector<double>& out) {
    for (size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + step;
      const double hi = loss(probe, batch, hp).total;
      param[i] = saved - step;
      const double lo = loss(probe, batch, hp).total;
      param[i] = saved;
      out[i] = (hi - lo) / (2.0 * step);
    }
  };
  central(probe.hash_w, g.hash_w);
  central(probe.hash_b, g.hash_b);
  central(probe.sem_w, g.sem_w);
  central(probe.sem_b, g.sem_b);
  return g;
}

double max_relative_error(const GradBundle& a, const GradBundle& b) {
  double worst = 0;
  auto scan = [&](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("gradient shape mismatch");
    for (size_t i = 0; i < x.size(); ++i) {
      const double denom = std::max({std::fabs(x[i]), std::fabs(y[i]), 1e-8});
      worst = std::max(worst, std::fabs(x[i] - y[i]) / denom);
    }
  };
  scan(a.hash_w, b.hash_w);
  scan(a.hash_b, b.hash_b);
  scan(a.sem_w, b.sem_w);
  scan(a.sem_b, b.sem_b);
  return worst;
}

double grad_check(const HeadParams& p, const QueryBatch& batch, const Hyperparams& hp,
                  double step) {
  return max_relative_error(grad(p, batch, hp),
                            finite_difference_grad(p, batch, hp, step));
}

void sgd_step(HeadParams& p, const GradBundle& g, double lr) {
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be > 0");
  auto apply = [lr](std::vector<double>& param, const std::vector<double>& grad_) {
    if (param.size() != grad_.size()) {
      throw std::invalid_argument("gradient shape does not match parameters");
    }
    for (size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad_[i];
  };
  apply(p.hash_w, g.hash_w);
  apply(p.hash_b, g.hash_b);
  apply(p.sem_w, g.sem_w);
  apply(p.sem_b, g.sem_b);
}

namespace {
constexpr uint32_t kModelVersion = 1;
}

void save_model(const ModelCheckpoint& ckpt, const std::string& path) {
  ckpt.params.validate();
  detail::BinaryWriter out(path);
  out.magic("AHM1");
  out.u32(kModelVersion);
  out.u32(static_cast<uint32_t>(ckpt.params.bits));
  out.u32(static_cast<uint32_t>(ckpt.params.dim));
  out.u32(static_cast<uint32_t>(ckpt.params.num_classes));
  out.u8(ckpt.standardizer.enabled ? 1 : 0);
  if (ckpt.standardizer.enabled) {
    if (ckpt.standardizer.mean.size() != static_cast<size_t>(ckpt.params.dim)) {
      throw std::invalid_argument("standardizer dimension does not match the model");
    }
    out.span<double>(ckpt.standardizer.mean);
    out.span<double>(ckpt.standardizer.stddev);
  }
  out.span<double>(ckpt.params.hash_w);
  out.span<double>(ckpt.params.hash_b);
  out.span<double>(ckpt.params.sem_w);
  out.span<double>(ckpt.params.sem_b);
  out.finish();
}

ModelCheckpoint load_model(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("AHM1");
  const uint32_t version = in.u32("version");
  if (version != kModelVersion) {
    throw parse_error(path + ": unsupported version " + std::to_string(version) +
                      " at byte 4");
  }
  ModelCheckpoint ckpt;
  HeadParams& p = ckpt.params;
  p.bits = static_cast<int32_t>(in.u32("code length"));
  p.dim = static_cast<int32_t>(in.u32("dimension"));
  p.num_classes = static_cast<int32_t>(in.u32("class count"));
  if (p.bits < 1 || p.dim < 1 || p.num_classes < 1) {
    throw parse_error(path + ": header declares empty model");
  }
  const uint8_t standardize = in.u8("standardize flag");
  if (standardize > 1) {
    throw parse_error(path + ": standardize flag must be 0 or 1 at byte 16");
  }
  if (standardize == 1) {
    ckpt.standardizer.enabled = true;
    ckpt.standardizer.mean.resize(p.dim);
    ckpt.standardizer.stddev.resize(p.dim);
    in.span<double>(ckpt.standardizer.mean, "standardizer means");
    in.span<double>(ckpt.standardizer.stddev, "standardizer stddevs");
  }
  p.hash_w.resize(static_cast<size_t>(p.bits) * p.dim);
  p.hash_b.resize(p.bits);
  p.sem_w.resize(static_cast<size_t>(p.num_classes) * p.bits);
  p.sem_b.resize(p.num_classes);
  in.span<double>(p.hash_w, "hash weights");
  in.span<double>(p.hash_b, "hash biases");
  in.span<double>(p.sem_w, "semantic weights");
  in.span<double>(p.sem_b, "semantic biases");
  in.expect_eof();
  p.validate();
  return ckpt;
}

}  // namespace ahcl
