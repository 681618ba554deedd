/* Copyright 2026 the certsmooth authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: generate data, train the base classifier, sample
// class counts, train the surrogate, certify, evaluate, benchmark, and run
// the sampling-variance study. Every command validates its configuration
// before doing any work, echoes a reproducibility stanza to stderr, and
// writes only the artifacts it declares.
//
// Exit codes: 0 success, 1 usage or invalid configuration, 2 missing input
// artifact, 3 malformed artifact or config file, 4 diverged training,
// 5 interrupted checkpointable I/O.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "certsmooth/dataset.hpp"
#include "certsmooth/errors.hpp"
#include "certsmooth/evaluation.hpp"
#include "certsmooth/model.hpp"
#include "certsmooth/numerics.hpp"
#include "certsmooth/smoothing.hpp"
#include "certsmooth/surrogate.hpp"

namespace cs = certsmooth;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitMissingArtifact = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitCheckpoint = 5;

// ---------------------------------------------------------------------------
// RunConfig: structured-text defaults shared by all commands. Flags override
// config values; CERTSMOOTH_SEED overrides the seed everywhere.
// ---------------------------------------------------------------------------

struct RunConfig {
  // dataset spec
  std::optional<std::string> generator;
  std::optional<std::size_t> d, k, train_size, test_size;
  std::optional<double> separation;
  std::optional<std::uint64_t> data_seed;
  // smoothing
  std::optional<double> sigma, alpha;
  std::optional<std::uint64_t> n, n0, seed;
  // training
  std::optional<std::size_t> epochs, batch_size, lr_step;
  std::optional<double> learning_rate, adam_beta1, adam_beta2, lr_gamma;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<unsigned> threads;
  // paths
  std::map<std::string, std::string> paths;
};

const std::vector<std::string> kKnownPathKeys = {
    "train_data", "test_data", "base_weights",    "surrogate_weights",
    "counts",     "log",       "metrics",         "report",
    "bench",      "variance_prefix"};

template <typename T>
T get_number(const json& v, const std::string& key) {
  if (!v.is_number()) {
    throw cs::format_error("config: key '" + key + "' must be a number");
  }
  return v.get<T>();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cs::missing_artifact_error("config: cannot open " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw cs::format_error("config: " + path + ": " + e.what());
  }
  if (!root.is_object()) throw cs::format_error("config: top level must be an object");

  RunConfig cfg;
  for (const auto& [key, value] : root.items()) {
    if (key == "generator") {
      if (!value.is_string()) throw cs::format_error("config: 'generator' must be a string");
      cfg.generator = value.get<std::string>();
    } else if (key == "d") {
      cfg.d = get_number<std::size_t>(value, key);
    } else if (key == "k") {
      cfg.k = get_number<std::size_t>(value, key);
    } else if (key == "train_size") {
      cfg.train_size = get_number<std::size_t>(value, key);
    } else if (key == "test_size") {
      cfg.test_size = get_number<std::size_t>(value, key);
    } else if (key == "separation") {
      cfg.separation = get_number<double>(value, key);
    } else if (key == "data_seed") {
      cfg.data_seed = get_number<std::uint64_t>(value, key);
    } else if (key == "sigma") {
      cfg.sigma = get_number<double>(value, key);
    } else if (key == "alpha") {
      cfg.alpha = get_number<double>(value, key);
    } else if (key == "n") {
      cfg.n = get_number<std::uint64_t>(value, key);
    } else if (key == "n0") {
      cfg.n0 = get_number<std::uint64_t>(value, key);
    } else if (key == "seed") {
      cfg.seed = get_number<std::uint64_t>(value, key);
    } else if (key == "epochs") {
      cfg.epochs = get_number<std::size_t>(value, key);
    } else if (key == "batch_size") {
      cfg.batch_size = get_number<std::size_t>(value, key);
    } else if (key == "lr_step") {
      cfg.lr_step = get_number<std::size_t>(value, key);
    } else if (key == "learning_rate") {
      cfg.learning_rate = get_number<double>(value, key);
    } else if (key == "adam_beta1") {
      cfg.adam_beta1 = get_number<double>(value, key);
    } else if (key == "adam_beta2") {
      cfg.adam_beta2 = get_number<double>(value, key);
    } else if (key == "lr_gamma") {
      cfg.lr_gamma = get_number<double>(value, key);
    } else if (key == "hidden") {
      if (!value.is_array()) throw cs::format_error("config: 'hidden' must be an array");
      std::vector<std::size_t> dims;
      for (const auto& v : value) dims.push_back(get_number<std::size_t>(v, key));
      cfg.hidden = std::move(dims);
    } else if (key == "threads") {
      cfg.threads = get_number<unsigned>(value, key);
    } else if (key == "paths") {
      if (!value.is_object()) throw cs::format_error("config: 'paths' must be an object");
      for (const auto& [pkey, pvalue] : value.items()) {
        if (std::find(kKnownPathKeys.begin(), kKnownPathKeys.end(), pkey) ==
            kKnownPathKeys.end()) {
          throw cs::format_error("config: unknown path key '" + pkey + "'");
        }
        if (!pvalue.is_string()) {
          throw cs::format_error("config: path '" + pkey + "' must be a string");
        }
        cfg.paths[pkey] = pvalue.get<std::string>();
      }
    } else {
      throw cs::format_error("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared option plumbing
// ---------------------------------------------------------------------------

struct Common {
  std::string config_path;
  bool force = false;
  std::optional<unsigned> threads_flag;
  RunConfig cfg;

  void load() {
    if (!config_path.empty()) cfg = load_run_config(config_path);
  }

  unsigned threads() const {
    return threads_flag.value_or(cfg.threads.value_or(1u));
  }
};

template <typename T>
T resolve(const std::optional<T>& flag, const std::optional<T>& config,
          T fallback) {
  return flag.value_or(config.value_or(fallback));
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const std::optional<std::uint64_t>& config,
                           std::uint64_t fallback) {
  if (const char* env = std::getenv("CERTSMOOTH_SEED")) {
    return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
  }
  return flag.value_or(config.value_or(fallback));
}

std::string resolve_path(const std::string& flag, const RunConfig& cfg,
                         const std::string& key) {
  if (!flag.empty()) return flag;
  const auto it = cfg.paths.find(key);
  if (it != cfg.paths.end()) return it->second;
  throw std::invalid_argument("missing required path: pass the " + key +
                              " flag or set paths." + key + " in the config");
}

void ensure_writable(const std::string& path, bool force) {
  if (!force && std::filesystem::exists(path)) {
    throw std::invalid_argument("refusing to overwrite existing file " + path +
                                " (use --force)");
  }
}

// FNV-1a over the canonical "key=value\n" serialization of the semantic
// fields; paths, thread counts, and --force are excluded so the hash changes
// exactly when a field that affects artifact content changes.
std::uint64_t config_hash(const std::map<std::string, std::string>& fields) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [key, value] : fields) {
    for (const char c : key + "=" + value + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string fmt(double v) { return cs::data::detail::format_double(v); }

void stanza(const std::string& command,
            const std::map<std::string, std::string>& fields) {
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(config_hash(fields)));
  std::cerr << "[certsmooth] command=" << command << " version=" << kVersion
            << " config_hash=" << hex << "\n";
  std::cerr << "[certsmooth]";
  for (const auto& [key, value] : fields) std::cerr << ' ' << key << '=' << value;
  std::cerr << "\n";
}

void note_written(const std::string& path) {
  std::cerr << "[certsmooth] wrote " << path << "\n";
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  for (const auto part : cs::data::detail::split(text, ',')) {
    dims.push_back(static_cast<std::size_t>(
        cs::data::detail::parse_int(part, "--hidden")));
  }
  return dims;
}

std::vector<std::uint64_t> parse_sweep(const std::string& text) {
  std::vector<std::uint64_t> sweep;
  for (const auto part : cs::data::detail::split(text, ',')) {
    sweep.push_back(static_cast<std::uint64_t>(
        cs::data::detail::parse_int(part, "--n-sweep")));
  }
  return sweep;
}

std::vector<double> parse_radii(const std::string& text) {
  std::vector<double> radii;
  for (const auto part : cs::data::detail::split(text, ',')) {
    radii.push_back(cs::data::detail::parse_double(part, "--radii"));
  }
  return radii;
}

cs::model::NetworkParams load_network(const std::string& path,
                                      std::size_t expect_dim,
                                      std::size_t expect_classes) {
  auto net = cs::model::load_weights(path);
  if (net.input_dim() != expect_dim || net.num_classes() != expect_classes) {
    throw cs::config_error(path + ": network is " +
                           std::to_string(net.input_dim()) + "->" +
                           std::to_string(net.num_classes()) +
                           " but the dataset needs " + std::to_string(expect_dim) +
                           "->" + std::to_string(expect_classes));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct GenDataArgs {
  Common common;
  std::optional<std::string> generator;
  std::optional<std::size_t> d, k, train_size, test_size;
  std::optional<double> separation;
  std::optional<std::uint64_t> data_seed;
  std::string out_train, out_test;
};

int cmd_gen_data(GenDataArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  cs::data::GenConfig gen;
  gen.generator = resolve(args.generator, cfg.generator, std::string("blobs"));
  gen.dim = resolve(args.d, cfg.d, std::size_t{16});
  gen.num_classes = resolve(args.k, cfg.k, std::size_t{4});
  gen.train_size = resolve(args.train_size, cfg.train_size, std::size_t{2000});
  gen.test_size = resolve(args.test_size, cfg.test_size, std::size_t{500});
  gen.separation = resolve(args.separation, cfg.separation, 6.0);
  gen.data_seed = resolve(args.data_seed, cfg.data_seed, std::uint64_t{7});
  gen.validate();
  const std::string out_train = resolve_path(args.out_train, cfg, "train_data");
  const std::string out_test = resolve_path(args.out_test, cfg, "test_data");
  ensure_writable(out_train, args.common.force);
  ensure_writable(out_test, args.common.force);

  stanza("gen-data", {{"generator", gen.generator},
                      {"d", std::to_string(gen.dim)},
                      {"k", std::to_string(gen.num_classes)},
                      {"train_size", std::to_string(gen.train_size)},
                      {"test_size", std::to_string(gen.test_size)},
                      {"separation", fmt(gen.separation)},
                      {"data_seed", std::to_string(gen.data_seed)}});

  const auto [train, test] = cs::data::generate(gen);
  cs::data::save_dataset(train, out_train);
  note_written(out_train);
  cs::data::save_dataset(test, out_test);
  note_written(out_test);
  return 0;
}

struct TrainArgs {
  Common common;
  std::string data_path, counts_path, out_path;
  std::optional<double> sigma;
  std::optional<std::size_t> epochs, batch_size, lr_step;
  std::optional<double> learning_rate, adam_beta1, adam_beta2, lr_gamma;
  std::optional<std::string> hidden;
  std::optional<std::uint64_t> seed;

  cs::model::TrainConfig train_config(const RunConfig& cfg) const {
    cs::model::TrainConfig tc;
    tc.epochs = resolve(epochs, cfg.epochs, std::size_t{200});
    tc.batch_size = resolve(batch_size, cfg.batch_size, std::size_t{128});
    tc.learning_rate = resolve(learning_rate, cfg.learning_rate, 1e-3);
    tc.adam_beta1 = resolve(adam_beta1, cfg.adam_beta1, 0.5);
    tc.adam_beta2 = resolve(adam_beta2, cfg.adam_beta2, 0.999);
    tc.lr_step = resolve(lr_step, cfg.lr_step, std::size_t{20});
    tc.lr_gamma = resolve(lr_gamma, cfg.lr_gamma, 0.5);
    tc.seed = resolve_seed(seed, cfg.seed, 42);
    tc.validate();
    return tc;
  }

  std::vector<std::size_t> hidden_dims(const RunConfig& cfg) const {
    if (hidden) return parse_dims(*hidden);
    return cfg.hidden.value_or(std::vector<std::size_t>{64, 64});
  }

  std::map<std::string, std::string> stanza_fields(
      const cs::model::TrainConfig& tc,
      const std::vector<std::size_t>& dims) const {
    std::string arch;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) arch += 'x';
      arch += std::to_string(dims[i]);
    }
    return {{"epochs", std::to_string(tc.epochs)},
            {"batch_size", std::to_string(tc.batch_size)},
            {"learning_rate", fmt(tc.learning_rate)},
            {"adam_beta1", fmt(tc.adam_beta1)},
            {"adam_beta2", fmt(tc.adam_beta2)},
            {"lr_step", std::to_string(tc.lr_step)},
            {"lr_gamma", fmt(tc.lr_gamma)},
            {"seed", std::to_string(tc.seed)},
            {"hidden", arch}};
  }
};

int cmd_train_base(TrainArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  const auto tc = args.train_config(cfg);
  const auto hidden = args.hidden_dims(cfg);
  const double sigma = resolve(args.sigma, cfg.sigma, 0.5);
  if (!(sigma >= 0.0)) throw std::invalid_argument("--sigma must be >= 0");
  const std::string data_path = resolve_path(args.data_path, cfg, "train_data");
  const std::string out_path = resolve_path(args.out_path, cfg, "base_weights");
  ensure_writable(out_path, args.common.force);

  auto fields = args.stanza_fields(tc, hidden);
  fields["sigma"] = fmt(sigma);
  stanza("train-base", fields);

  const auto dataset = cs::data::load_dataset(data_path);
  cs::model::TrainingSet set;
  for (const auto& ex : dataset.examples) {
    set.inputs.push_back(ex.features);
    set.targets.push_back(cs::data::one_hot(ex.label, dataset.num_classes));
  }
  std::vector<std::size_t> dims{dataset.dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(dataset.num_classes);
  auto net = cs::model::init_network(dims, cs::model::Head::kArgmaxClassifier,
                                     tc.seed);
  cs::model::TrainStats stats;
  net = cs::model::train(std::move(net), set, cs::model::Loss::kCrossEntropy,
                         tc, sigma, &stats);
  std::cerr << "[certsmooth] final_epoch_loss=" << fmt(stats.epoch_mean_loss.back())
            << "\n";
  cs::model::save_weights(net, out_path);
  note_written(out_path);
  return 0;
}

struct SampleArgs {
  Common common;
  std::string data_path, model_path, out_path;
  std::optional<double> sigma;
  std::optional<std::uint64_t> n, seed;
  bool resume = false;
};

int cmd_sample(SampleArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  const double sigma = resolve(args.sigma, cfg.sigma, 0.5);
  const std::uint64_t n = resolve(args.n, cfg.n, std::uint64_t{10000});
  const std::uint64_t seed = resolve_seed(args.seed, cfg.seed, 42);
  if (!(sigma > 0.0) || n < 1) {
    throw std::invalid_argument("sample: require sigma > 0 and n >= 1");
  }
  const std::string data_path = resolve_path(args.data_path, cfg, "train_data");
  const std::string model_path = resolve_path(args.model_path, cfg, "base_weights");
  const std::string out_path = resolve_path(args.out_path, cfg, "counts");
  if (!args.resume) ensure_writable(out_path, args.common.force);

  stanza("sample", {{"sigma", fmt(sigma)},
                    {"n", std::to_string(n)},
                    {"seed", std::to_string(seed)}});

  const auto dataset = cs::data::load_dataset(data_path);
  const auto net = load_network(model_path, dataset.dim, dataset.num_classes);
  const auto counts = cs::surrogate::build_counts_dataset_file(
      net, dataset.examples, sigma, n, seed, out_path, args.resume,
      args.common.threads());
  std::cerr << "[certsmooth] records=" << counts.records.size() << "\n";
  note_written(out_path);
  return 0;
}

int cmd_train_surrogate(TrainArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  const auto tc = args.train_config(cfg);
  const auto hidden = args.hidden_dims(cfg);
  const std::string data_path = resolve_path(args.data_path, cfg, "train_data");
  const std::string counts_path = resolve_path(args.counts_path, cfg, "counts");
  const std::string out_path =
      resolve_path(args.out_path, cfg, "surrogate_weights");
  ensure_writable(out_path, args.common.force);

  stanza("train-surrogate", args.stanza_fields(tc, hidden));

  const auto dataset = cs::data::load_dataset(data_path);
  const auto counts = cs::surrogate::load_counts_dataset(counts_path);
  if (counts.num_classes != dataset.num_classes) {
    throw cs::config_error("counts dataset has k=" +
                           std::to_string(counts.num_classes) +
                           " but the training data has k=" +
                           std::to_string(dataset.num_classes));
  }
  cs::model::TrainStats stats;
  const auto h = cs::surrogate::train_surrogate(dataset.examples, counts,
                                                hidden, tc, &stats);
  std::cerr << "[certsmooth] final_epoch_loss=" << fmt(stats.epoch_mean_loss.back())
            << "\n";
  cs::model::save_weights(h, out_path);
  note_written(out_path);
  return 0;
}

struct CertifyArgs {
  Common common;
  std::string data_path, model_path, surrogate_path, out_path;
  std::string method = "mc";
  std::optional<double> sigma, alpha;
  std::optional<std::uint64_t> n, n0, seed;
  bool log_times = false;
};

int cmd_certify(CertifyArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  if (args.method != "mc" && args.method != "surrogate" &&
      args.method != "baseline") {
    throw std::invalid_argument("--method must be mc, surrogate, or baseline");
  }
  cs::smoothing::SmoothingParams params;
  params.sigma = resolve(args.sigma, cfg.sigma, 0.5);
  params.n = resolve(args.n, cfg.n, std::uint64_t{10000});
  params.n0 = resolve(args.n0, cfg.n0, std::uint64_t{100});
  params.alpha = resolve(args.alpha, cfg.alpha, 0.001);
  params.seed = resolve_seed(args.seed, cfg.seed, 42);
  if (args.method == "baseline") {
    params.n = 100;  // baseline is plain Monte Carlo certification at N=100
    params.n0 = std::min<std::uint64_t>(params.n0, params.n);
  }
  params.validate();
  const std::string data_path = resolve_path(args.data_path, cfg, "test_data");
  const std::string model_path = resolve_path(args.model_path, cfg, "base_weights");
  const std::string out_path = resolve_path(args.out_path, cfg, "log");
  ensure_writable(out_path, args.common.force);

  stanza("certify", {{"method", args.method},
                     {"sigma", fmt(params.sigma)},
                     {"n", std::to_string(params.n)},
                     {"n0", std::to_string(params.n0)},
                     {"alpha", fmt(params.alpha)},
                     {"seed", std::to_string(params.seed)}});

  const auto dataset = cs::data::load_dataset(data_path);
  const auto f = load_network(model_path, dataset.dim, dataset.num_classes);
  std::optional<cs::model::NetworkParams> h;
  if (args.method == "surrogate") {
    const std::string surrogate_path =
        resolve_path(args.surrogate_path, cfg, "surrogate_weights");
    h = load_network(surrogate_path, dataset.dim, dataset.num_classes);
    if (h->head != cs::model::Head::kSimplexPredictor) {
      throw cs::config_error(surrogate_path + ": not a simplex-predictor network");
    }
  }
  const auto log = cs::evaluation::run_certification(
      f, h ? &*h : nullptr, dataset.examples, params, args.method,
      args.common.threads());
  cs::evaluation::save_certification_log(log, out_path, args.log_times);
  std::cerr << "[certsmooth] rows=" << log.rows.size()
            << " acr=" << fmt(cs::evaluation::average_certified_radius(log))
            << "\n";
  note_written(out_path);
  return 0;
}

struct EvaluateArgs {
  Common common;
  std::string log_path, compare_path, out_path, report_path;
  std::string radii = "0.25,0.5,0.75,1,1.25,1.5";
  double r_min = 0.25;
};

int cmd_evaluate(EvaluateArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  const std::string log_path = resolve_path(args.log_path, cfg, "log");
  const std::string out_path = resolve_path(args.out_path, cfg, "metrics");
  const auto radii = parse_radii(args.radii);
  ensure_writable(out_path, args.common.force);
  if (!args.compare_path.empty()) {
    if (args.report_path.empty()) {
      args.report_path = resolve_path("", cfg, "report");
    }
    ensure_writable(args.report_path, args.common.force);
  }

  stanza("evaluate", {{"radii", args.radii}, {"r_min", fmt(args.r_min)}});

  const auto log = cs::evaluation::load_certification_log(log_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("evaluate: cannot open " + out_path);
  out << "metric\tvalue\n";
  for (const double r : radii) {
    out << "certified_accuracy@" << fmt(r) << '\t'
        << fmt(cs::evaluation::certified_accuracy(log, r)) << "\n";
  }
  out << "acr\t" << fmt(cs::evaluation::average_certified_radius(log)) << "\n";
  out.close();
  note_written(out_path);

  if (!args.compare_path.empty()) {
    const auto surrogate_log =
        cs::evaluation::load_certification_log(args.compare_path);
    const auto report =
        cs::evaluation::estimation_report(log, surrogate_log, args.r_min);
    cs::evaluation::save_estimation_report(report, args.report_path);
    note_written(args.report_path);
  }
  return 0;
}

struct BenchArgs {
  Common common;
  std::string data_path, model_path, surrogate_path, out_path;
  std::string sweep = "100,1000,10000,100000";
  std::size_t reps = 20;
  std::size_t limit = 20;
  std::optional<double> sigma, alpha;
  std::optional<std::uint64_t> n0, seed;
};

int cmd_bench(BenchArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  cs::smoothing::SmoothingParams params;
  params.sigma = resolve(args.sigma, cfg.sigma, 0.5);
  params.n0 = resolve(args.n0, cfg.n0, std::uint64_t{100});
  params.alpha = resolve(args.alpha, cfg.alpha, 0.001);
  params.seed = resolve_seed(args.seed, cfg.seed, 42);
  const auto sweep = parse_sweep(args.sweep);
  const std::string data_path = resolve_path(args.data_path, cfg, "test_data");
  const std::string model_path = resolve_path(args.model_path, cfg, "base_weights");
  const std::string surrogate_path =
      resolve_path(args.surrogate_path, cfg, "surrogate_weights");
  const std::string out_path = resolve_path(args.out_path, cfg, "bench");
  ensure_writable(out_path, args.common.force);

  stanza("bench", {{"sweep", args.sweep},
                   {"reps", std::to_string(args.reps)},
                   {"sigma", fmt(params.sigma)},
                   {"n0", std::to_string(params.n0)},
                   {"alpha", fmt(params.alpha)},
                   {"seed", std::to_string(params.seed)}});

  auto dataset = cs::data::load_dataset(data_path);
  if (dataset.examples.size() > args.limit) {
    dataset.examples.resize(args.limit);
  }
  const auto f = load_network(model_path, dataset.dim, dataset.num_classes);
  const auto h =
      load_network(surrogate_path, dataset.dim, dataset.num_classes);
  const auto table =
      cs::evaluation::bench(f, h, dataset.examples, params, sweep, args.reps);
  cs::evaluation::save_bench_table(table, out_path);
  for (const auto& row : table.rows) {
    std::cerr << "[certsmooth] " << row.method << " N=" << row.n
              << " median_ms=" << fmt(row.median_ms)
              << (row.below_resolution ? " below_resolution" : "") << "\n";
  }
  note_written(out_path);
  return 0;
}

struct VarianceArgs {
  Common common;
  std::string data_path, model_path, out_prefix;
  std::optional<double> sigma;
  std::optional<std::uint64_t> n, seed;
  std::uint64_t resamples = 50;
  std::size_t limit = 50;
};

int cmd_variance(VarianceArgs& args) {
  args.common.load();
  const RunConfig& cfg = args.common.cfg;
  const double sigma = resolve(args.sigma, cfg.sigma, 0.5);
  const std::uint64_t n = resolve(args.n, cfg.n, std::uint64_t{10000});
  const std::uint64_t seed = resolve_seed(args.seed, cfg.seed, 42);
  const std::string data_path = resolve_path(args.data_path, cfg, "test_data");
  const std::string model_path = resolve_path(args.model_path, cfg, "base_weights");
  const std::string prefix =
      resolve_path(args.out_prefix, cfg, "variance_prefix");
  const std::string per_class_path = prefix + "_per_class.tsv";
  const std::string summary_path = prefix + "_summary.tsv";
  ensure_writable(per_class_path, args.common.force);
  ensure_writable(summary_path, args.common.force);

  stanza("variance", {{"sigma", fmt(sigma)},
                      {"n", std::to_string(n)},
                      {"resamples", std::to_string(args.resamples)},
                      {"limit", std::to_string(args.limit)},
                      {"seed", std::to_string(seed)}});

  auto dataset = cs::data::load_dataset(data_path);
  if (dataset.examples.size() > args.limit) dataset.examples.resize(args.limit);
  const auto f = load_network(model_path, dataset.dim, dataset.num_classes);
  const auto study = cs::evaluation::variance_study(
      f, dataset.examples, sigma, n, args.resamples, seed,
      args.common.threads());
  cs::evaluation::save_variance_study(study, per_class_path, summary_path);
  std::cerr << "[certsmooth] normalized_variance_pct="
            << fmt(study.normalized_variance_pct) << "\n";
  note_written(per_class_path);
  note_written(summary_path);
  return 0;
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_path,
                  "JSON run configuration (flags override)");
  app->add_flag("--force", common.force, "overwrite existing output files");
  app->add_option("--threads", common.threads_flag,
                  "worker cap for sampling fan-out (results are identical "
                  "for any value; 1 is the reproducibility reference)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certsmooth: randomized-smoothing certification, Monte Carlo "
               "and surrogate-accelerated"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, gen_args.common);
  gen->add_option("--generator", gen_args.generator, "blobs | shells");
  gen->add_option("--d", gen_args.d, "feature dimension");
  gen->add_option("--k", gen_args.k, "class count");
  gen->add_option("--train-size", gen_args.train_size);
  gen->add_option("--test-size", gen_args.test_size);
  gen->add_option("--separation", gen_args.separation);
  gen->add_option("--data-seed", gen_args.data_seed);
  gen->add_option("--out-train", gen_args.out_train, "training split path");
  gen->add_option("--out-test", gen_args.out_test, "test split path");

  TrainArgs base_args;
  auto* base = app.add_subcommand("train-base",
                                  "train the Gaussian-augmented base classifier");
  add_common(base, base_args.common);
  base->add_option("--train", base_args.data_path, "training dataset");
  base->add_option("--out", base_args.out_path, "weights output");
  base->add_option("--sigma", base_args.sigma, "augmentation noise level");
  base->add_option("--epochs", base_args.epochs);
  base->add_option("--batch-size", base_args.batch_size);
  base->add_option("--lr", base_args.learning_rate);
  base->add_option("--beta1", base_args.adam_beta1);
  base->add_option("--beta2", base_args.adam_beta2);
  base->add_option("--lr-step", base_args.lr_step);
  base->add_option("--lr-gamma", base_args.lr_gamma);
  base->add_option("--hidden", base_args.hidden, "hidden widths, e.g. 64,64");
  base->add_option("--seed", base_args.seed);

  SampleArgs sample_args;
  auto* sample = app.add_subcommand(
      "sample", "sample per-example class counts from the base classifier");
  add_common(sample, sample_args.common);
  sample->add_option("--train", sample_args.data_path, "dataset to sample");
  sample->add_option("--model", sample_args.model_path, "base weights");
  sample->add_option("--out", sample_args.out_path, "counts dataset output");
  sample->add_option("--sigma", sample_args.sigma);
  sample->add_option("--n", sample_args.n, "noisy samples per example");
  sample->add_option("--seed", sample_args.seed);
  sample->add_flag("--resume", sample_args.resume,
                   "continue an interrupted sampling run");

  TrainArgs surr_args;
  auto* surr = app.add_subcommand("train-surrogate",
                                  "distill sampled counts into a surrogate");
  add_common(surr, surr_args.common);
  surr->add_option("--train", surr_args.data_path, "training dataset");
  surr->add_option("--counts", surr_args.counts_path, "counts dataset");
  surr->add_option("--out", surr_args.out_path, "weights output");
  surr->add_option("--epochs", surr_args.epochs);
  surr->add_option("--batch-size", surr_args.batch_size);
  surr->add_option("--lr", surr_args.learning_rate);
  surr->add_option("--beta1", surr_args.adam_beta1);
  surr->add_option("--beta2", surr_args.adam_beta2);
  surr->add_option("--lr-step", surr_args.lr_step);
  surr->add_option("--lr-gamma", surr_args.lr_gamma);
  surr->add_option("--hidden", surr_args.hidden);
  surr->add_option("--seed", surr_args.seed);

  CertifyArgs cert_args;
  auto* cert = app.add_subcommand("certify", "certify a test set");
  add_common(cert, cert_args.common);
  cert->add_option("--test", cert_args.data_path, "test dataset");
  cert->add_option("--model", cert_args.model_path, "base weights");
  cert->add_option("--surrogate", cert_args.surrogate_path, "surrogate weights");
  cert->add_option("--method", cert_args.method, "mc | surrogate | baseline");
  cert->add_option("--sigma", cert_args.sigma);
  cert->add_option("--n", cert_args.n, "estimation samples N");
  cert->add_option("--n0", cert_args.n0, "selection samples");
  cert->add_option("--alpha", cert_args.alpha, "failure rate");
  cert->add_option("--seed", cert_args.seed);
  cert->add_option("--out", cert_args.out_path, "certification log output");
  cert->add_flag("--log-times", cert_args.log_times,
                 "record wall times in the log (breaks byte determinism)");

  EvaluateArgs eval_args;
  auto* eval = app.add_subcommand("evaluate",
                                  "certified accuracy, ACR, estimation report");
  add_common(eval, eval_args.common);
  eval->add_option("--log", eval_args.log_path, "certification log");
  eval->add_option("--compare", eval_args.compare_path,
                   "surrogate log to compare against --log");
  eval->add_option("--out", eval_args.out_path, "metrics output");
  eval->add_option("--report-out", eval_args.report_path,
                   "estimation report output (with --compare)");
  eval->add_option("--radii", eval_args.radii, "accuracy radii grid");
  eval->add_option("--r-min", eval_args.r_min,
                   "radius floor for the estimation report");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "certification timing benchmark");
  add_common(bench, bench_args.common);
  bench->add_option("--test", bench_args.data_path, "dataset");
  bench->add_option("--model", bench_args.model_path, "base weights");
  bench->add_option("--surrogate", bench_args.surrogate_path, "surrogate weights");
  bench->add_option("--out", bench_args.out_path, "timing table output");
  bench->add_option("--n-sweep", bench_args.sweep, "ascending N values");
  bench->add_option("--reps", bench_args.reps, "certifications per cell (>= 20)");
  bench->add_option("--limit", bench_args.limit, "examples rotated through");
  bench->add_option("--sigma", bench_args.sigma);
  bench->add_option("--n0", bench_args.n0);
  bench->add_option("--alpha", bench_args.alpha);
  bench->add_option("--seed", bench_args.seed);

  VarianceArgs var_args;
  auto* var = app.add_subcommand("variance", "sampling-variance study");
  add_common(var, var_args.common);
  var->add_option("--test", var_args.data_path, "dataset");
  var->add_option("--model", var_args.model_path, "base weights");
  var->add_option("--out-prefix", var_args.out_prefix,
                  "prefix for _per_class.tsv and _summary.tsv");
  var->add_option("--sigma", var_args.sigma);
  var->add_option("--n", var_args.n, "samples per resampling");
  var->add_option("--resamples", var_args.resamples);
  var->add_option("--limit", var_args.limit, "examples studied");
  var->add_option("--seed", var_args.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (base->parsed()) return cmd_train_base(base_args);
    if (sample->parsed()) return cmd_sample(sample_args);
    if (surr->parsed()) return cmd_train_surrogate(surr_args);
    if (cert->parsed()) return cmd_certify(cert_args);
    if (eval->parsed()) return cmd_evaluate(eval_args);
    if (bench->parsed()) return cmd_bench(bench_args);
    if (var->parsed()) return cmd_variance(var_args);
  } catch (const cs::missing_artifact_error& e) {
    std::cerr << "[certsmooth] missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const cs::format_error& e) {
    std::cerr << "[certsmooth] format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const cs::training_diverged_error& e) {
    std::cerr << "[certsmooth] training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const cs::checkpoint_error& e) {
    std::cerr << "[certsmooth] checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "[certsmooth] error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
