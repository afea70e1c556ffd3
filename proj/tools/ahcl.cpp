// Command-line surface for the hashing pipeline: dataset generation,
// training, encoding, retrieval, and evaluation.

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ahcl/metrics.hpp"
#include "ahcl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ahcl;

namespace {

FileFormat sniff_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  char tag[4] = {};
  in.read(tag, 4);
  return std::string_view(tag, 4) == "AHF1" ? FileFormat::binary : FileFormat::csv;
}

void apply_threads(int threads) {
  omp_set_num_threads(std::max(1, threads));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct GenArgs {
  int32_t classes = 0, per_class = 0, dim = 0;
  double separation = 6.0, noise_sigma = 1.0;
  uint64_t seed = 0;
  std::string output;
  std::string format = "binary";
};

int run_gen(const GenArgs& args) {
  const FeatureDataset ds = generate_synthetic(args.classes, args.per_class, args.dim,
                                               args.separation, args.noise_sigma, args.seed);
  save_features(ds, args.output,
                args.format == "csv" ? FileFormat::csv : FileFormat::binary);
  std::cout << "wrote " << args.output << ": n=" << ds.n << " dim=" << ds.dim
            << " classes=" << ds.num_classes << "\n";
  return 0;
}

struct TrainArgs {
  std::string input, output;
  TrainConfig cfg;
  int threads = 1;
};

int run_train(const TrainArgs& args) {
  apply_threads(args.threads);
  const fs::path dir(args.output);
  fs::create_directories(dir);  // fail on a bad output path before training
  const FeatureDataset ds = load_features(args.input, sniff_format(args.input));
  const TrainResult result = train(ds, args.cfg);
  save_model({result.params, result.standardizer}, (dir / "model.ahm").string());
  save_codes(pack(result.db_codes), (dir / "codes.ahc").string());
  save_report_csv(result.report, (dir / "report.csv").string());

  const IterationRecord& last = result.report.iterations.back();
  std::cout << "iter " << last.iter << ": loss=" << format_double(last.loss)
            << " term1=" << format_double(last.similarity)
            << " term2=" << format_double(last.quantization)
            << " term3=" << format_double(last.semantic) << "\n";
  std::cout << "wrote " << (dir / "model.ahm").string() << ", "
            << (dir / "codes.ahc").string() << ", " << (dir / "report.csv").string()
            << "\n";
  return 0;
}

struct EncodeArgs {
  std::string model, input, output;
  int threads = 1;
};

int run_encode(const EncodeArgs& args) {
  apply_threads(args.threads);
  const ModelCheckpoint ckpt = load_model(args.model);
  FeatureDataset ds = load_features(args.input, sniff_format(args.input));
  if (ds.dim != ckpt.params.dim) {
    throw std::invalid_argument("feature dimension " + std::to_string(ds.dim) +
                                " does not match model dimension " +
                                std::to_string(ckpt.params.dim));
  }
  ds = ckpt.standardizer.apply(ds);
  const CodeMatrix codes = encode_database(ckpt.params, ds);
  save_codes(pack(codes), args.output);
  std::cout << "wrote " << args.output << ": n=" << codes.n << " bits=" << codes.bits
            << "\n";
  return 0;
}

struct RetrieveArgs {
  std::string queries, db, output;
  int32_t k = 10;
  int threads = 1;
};

int run_retrieve(const RetrieveArgs& args) {
  apply_threads(args.threads);
  const PackedCodeMatrix queries = load_codes(args.queries);
  const PackedCodeMatrix db = load_codes(args.db);
  if (queries.bits != db.bits) {
    throw std::invalid_argument("query code length " + std::to_string(queries.bits) +
                                " does not match database code length " +
                                std::to_string(db.bits));
  }
  const auto rankings = rank_topk_batch(queries, db, args.k);

  std::ofstream out(args.output, std::ios::trunc);
  if (!out) throw io_error("cannot open '" + args.output + "' for writing");
  out << "query_id,rank,db_id,distance\n";
  for (int32_t q = 0; q < queries.n; ++q) {
    for (size_t r = 0; r < rankings[q].size(); ++r) {
      out << q << ',' << (r + 1) << ',' << rankings[q][r].index << ','
          << rankings[q][r].distance << "\n";
    }
  }
  out.flush();
  if (!out) throw io_error("write failed on '" + args.output + "'");
  std::cout << "wrote " << args.output << ": " << queries.n << " queries, top-"
            << std::min(args.k, db.n) << "\n";
  return 0;
}

struct EvalArgs {
  std::string results, query_features, db_features;
  std::string query_codes, db_codes;
  std::string metrics_out, pr_out;
  std::vector<int32_t> at{1, 5, 10, 50};
  bool exclude_self = false;
  int threads = 1;
};

std::vector<std::vector<Hit>> load_rankings(const std::string& path, int32_t n_queries,
                                            int32_t n_db) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw parse_error(path + ": empty file");
  if (line.rfind("query_id", 0) != 0) throw parse_error(path + ": malformed header");

  std::vector<std::vector<Hit>> rankings(n_queries);
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int32_t fields[4];
    const char* cur = line.data();
    const char* last = line.data() + line.size();
    for (int f = 0; f < 4; ++f) {
      auto [ptr, ec] = std::from_chars(cur, last, fields[f]);
      if (ec != std::errc{} || (f < 3 && (ptr == last || *ptr != ','))) {
        throw parse_error(path + ": malformed row at line " + std::to_string(lineno));
      }
      cur = f < 3 ? ptr + 1 : ptr;
    }
    if (fields[0] < 0 || fields[0] >= n_queries) {
      throw parse_error(path + ": query id " + std::to_string(fields[0]) +
                        " out of range at line " + std::to_string(lineno));
    }
    if (fields[2] < 0 || fields[2] >= n_db) {
      throw parse_error(path + ": db id " + std::to_string(fields[2]) +
                        " out of range at line " + std::to_string(lineno));
    }
    rankings[fields[0]].push_back({fields[2], fields[3]});
  }
  return rankings;
}

int run_eval(const EvalArgs& args) {
  apply_threads(args.threads);
  const FeatureDataset qf = load_features(args.query_features, sniff_format(args.query_features));
  const FeatureDataset df = load_features(args.db_features, sniff_format(args.db_features));
  const auto rankings = load_rankings(args.results, qf.n, df.n);

  std::vector<RankedRelevance> rels;
  std::vector<int32_t> kept;  // query ids with at least one relevant item
  int32_t skipped = 0;
  for (int32_t q = 0; q < qf.n; ++q) {
    const int32_t self = args.exclude_self ? q : -1;
    RankedRelevance rr =
        relevance_from_ranking(rankings[q], qf.labels[q], df.labels, self);
    if (rr.total_relevant < 1) {
      ++skipped;
      continue;
    }
    kept.push_back(q);
    rels.push_back(std::move(rr));
  }
  if (rels.empty()) throw std::invalid_argument("no query has relevant database items");
  if (skipped > 0) {
    std::cerr << "ahcl: note: skipped " << skipped << " queries without relevant items\n";
  }

  const double map_value = mean_average_precision(rels);

  std::ofstream out(args.metrics_out, std::ios::trunc);
  if (!out) throw io_error("cannot open '" + args.metrics_out + "' for writing");
  out << "metric,k_or_radius,value\n";
  out << "map,," << format_double(map_value) << "\n";
  for (const int32_t k : args.at) {
    double p = 0, r = 0;
    for (const RankedRelevance& rr : rels) {
      p += precision_at_k(rr, k);
      r += recall_at_k(rr, k);
    }
    out << "precision_at_k," << k << ',' << format_double(p / rels.size()) << "\n";
    out << "recall_at_k," << k << ',' << format_double(r / rels.size()) << "\n";
  }
  out.flush();
  if (!out) throw io_error("write failed on '" + args.metrics_out + "'");

  if (!args.pr_out.empty()) {
    const PackedCodeMatrix qc = load_codes(args.query_codes);
    const PackedCodeMatrix dc = load_codes(args.db_codes);
    if (qc.n != qf.n || dc.n != df.n) {
      throw std::invalid_argument("code counts do not match label counts");
    }
    // restrict the curve to queries that have relevant items
    PackedCodeMatrix qkept;
    qkept.n = static_cast<int32_t>(kept.size());
    qkept.bits = qc.bits;
    qkept.words_per_code = qc.words_per_code;
    qkept.words.reserve(static_cast<size_t>(qkept.n) * qc.words_per_code);
    std::vector<int32_t> kept_labels, self_index;
    for (const int32_t q : kept) {
      const auto row = qc.row(q);
      qkept.words.insert(qkept.words.end(), row.begin(), row.end());
      kept_labels.push_back(qf.labels[q]);
      if (args.exclude_self) self_index.push_back(q);
    }
    const auto curve =
        pr_curve_by_radius(qkept, dc, kept_labels, df.labels, self_index);
    std::ofstream pr(args.pr_out, std::ios::trunc);
    if (!pr) throw io_error("cannot open '" + args.pr_out + "' for writing");
    pr << "radius,precision,recall,defined\n";
    for (const PrPoint& pt : curve) {
      pr << pt.radius << ',' << (pt.defined ? format_double(pt.precision) : "nan") << ','
         << format_double(pt.recall) << ',' << (pt.defined ? 1 : 0) << "\n";
    }
    pr.flush();
    if (!pr) throw io_error("write failed on '" + args.pr_out + "'");
  }

  std::cout << "MAP " << format_double(map_value) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymmetric hash-code learning and Hamming retrieval"};
  app.require_subcommand(1);
  app.set_config("--config");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.failure_message([](const CLI::App*, const CLI::Error& e) {
    return std::string("ahcl: error: ") + e.what() + "\n";
  });

  GenArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("gen", "generate a synthetic feature dataset");
  cmd_gen->add_option("--classes", gen.classes, "number of classes")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--per-class", gen.per_class, "samples per class")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--dim", gen.dim, "feature dimension")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--separation", gen.separation,
                      "pairwise center distance in noise sigmas")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd_gen->add_option("--noise-sigma", gen.noise_sigma, "isotropic noise scale")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  cmd_gen->add_option("-o,--output", gen.output, "output feature file")->required();
  cmd_gen->add_option("--format", gen.format, "binary or csv")
      ->capture_default_str()
      ->check(CLI::IsMember({"binary", "csv"}));

  TrainArgs tr;
  CLI::App* cmd_train = app.add_subcommand("train", "train the hash head and database codes");
  cmd_train->add_option("-i,--input", tr.input, "feature file")->required();
  cmd_train->add_option("-o,--output", tr.output, "output directory")->required();
  cmd_train->add_option("--bits", tr.cfg.bits, "code length in bits")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--lambda", tr.cfg.hp.lambda, "quantization-constraint weight")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--gamma", tr.cfg.hp.gamma, "semantic-loss weight")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--lr", tr.cfg.hp.lr, "SGD learning rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--outer-iters", tr.cfg.outer_iters, "alternating iterations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--inner-epochs", tr.cfg.inner_epochs,
                        "SGD epochs per outer iteration")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--batch-size", tr.cfg.batch_size, "minibatch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--queries", tr.cfg.query_count,
                        "training query-sample count (0 = min(n, 1000))")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--seed", tr.cfg.seed, "random seed")->capture_default_str();
  cmd_train->add_flag("--standardize", tr.cfg.standardize,
                      "standardize features per dimension (recorded in the model)");
  cmd_train->add_flag("--resample-omega,!--no-resample-omega", tr.cfg.resample_omega,
                      "resample the query subset each outer iteration")
      ->capture_default_str();
  cmd_train->add_flag("--deterministic,!--no-deterministic", tr.cfg.deterministic,
                      "bit-reproducible reductions independent of thread count")
      ->capture_default_str();
  cmd_train->add_option("--solver-sweeps", tr.cfg.solver_max_sweeps,
                        "maximum code-solver sweeps per outer iteration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--threads", tr.threads, "OpenMP threads")
      ->capture_default_str()
      ->envname("AHCL_THREADS");

  EncodeArgs en;
  CLI::App* cmd_encode = app.add_subcommand("encode", "encode features with a trained model");
  cmd_encode->add_option("--model", en.model, "model checkpoint")->required();
  cmd_encode->add_option("-i,--input", en.input, "feature file")->required();
  cmd_encode->add_option("-o,--output", en.output, "output codes file")->required();
  cmd_encode->add_option("--threads", en.threads, "OpenMP threads")
      ->capture_default_str()
      ->envname("AHCL_THREADS");

  RetrieveArgs re;
  CLI::App* cmd_retrieve = app.add_subcommand("retrieve", "rank database codes per query");
  cmd_retrieve->add_option("--queries", re.queries, "query codes file")->required();
  cmd_retrieve->add_option("--db", re.db, "database codes file")->required();
  cmd_retrieve->add_option("-k,--topk", re.k, "results per query")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_retrieve->add_option("-o,--output", re.output, "ranked results csv")->required();
  cmd_retrieve->add_option("--threads", re.threads, "OpenMP threads")
      ->capture_default_str()
      ->envname("AHCL_THREADS");

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "compute retrieval metrics");
  cmd_eval->add_option("--results", ev.results, "ranked results csv")->required();
  cmd_eval->add_option("--query-features", ev.query_features, "query feature/label file")
      ->required();
  cmd_eval->add_option("--db-features", ev.db_features, "database feature/label file")
      ->required();
  cmd_eval->add_option("--query-codes", ev.query_codes, "query codes (for the PR curve)");
  cmd_eval->add_option("--db-codes", ev.db_codes, "database codes (for the PR curve)");
  cmd_eval->add_option("--at", ev.at, "k values for precision/recall@k")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_eval->add_flag("--exclude-self", ev.exclude_self,
                     "drop database row i from query i's ranking");
  cmd_eval->add_option("--metrics-out", ev.metrics_out, "metrics csv path")->required();
  cmd_eval->add_option("--pr-out", ev.pr_out, "PR-curve csv path (needs code files)");
  cmd_eval->add_option("--threads", ev.threads, "OpenMP threads")
      ->capture_default_str()
      ->envname("AHCL_THREADS");

  try {
    app.parse(argc, argv);
    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_encode->parsed()) return run_encode(en);
    if (cmd_retrieve->parsed()) return run_retrieve(re);
    if (cmd_eval->parsed()) {
      if (!ev.pr_out.empty() && (ev.query_codes.empty() || ev.db_codes.empty())) {
        throw std::invalid_argument("--pr-out requires --query-codes and --db-codes");
      }
      return run_eval(ev);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "ahcl: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
