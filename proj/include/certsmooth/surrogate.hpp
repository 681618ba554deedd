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

// Accelerated certification via a surrogate network: building the
// class-counts training set by Monte Carlo sampling, distilling it into a
// simplex-predictor network with Jensen-Shannon loss, and certifying with a
// single surrogate forward pass in place of the estimation sampling pass.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "certsmooth/dataset.hpp"
#include "certsmooth/errors.hpp"
#include "certsmooth/model.hpp"
#include "certsmooth/numerics.hpp"
#include "certsmooth/rng.hpp"
#include "certsmooth/smoothing.hpp"

namespace certsmooth::surrogate {

using numerics::Probability;
using numerics::SimplexVector;
using smoothing::CertOutcome;
using smoothing::CountsRecord;
using smoothing::SmoothingParams;

/// A sampled class-counts training set: per-example Monte Carlo counts plus
/// the sampling configuration they were drawn under.
struct CountsDataset {
  std::uint32_t format_version = 1;
  std::size_t num_classes = 0;
  std::uint64_t n_total = 0;
  double sigma = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<CountsRecord> records;

  void validate() const {
    if (num_classes < 2) throw format_error("CountsDataset: k must be >= 2");
    std::unordered_set<std::int64_t> seen;
    for (const CountsRecord& rec : records) {
      if (rec.counts.size() != num_classes) {
        throw format_error("CountsDataset: record " + std::to_string(rec.example_id) +
                           " has wrong class count");
      }
      const std::uint64_t sum =
          std::accumulate(rec.counts.begin(), rec.counts.end(), std::uint64_t{0});
      if (sum != n_total) {
        throw format_error("CountsDataset: record " + std::to_string(rec.example_id) +
                           " counts sum to " + std::to_string(sum) +
                           ", expected " + std::to_string(n_total));
      }
      if (!seen.insert(rec.example_id).second) {
        throw format_error("CountsDataset: duplicate example id " +
                           std::to_string(rec.example_id));
      }
    }
  }
};

/// Normalized class counts: the training target for the surrogate.
inline SimplexVector normalized_counts(const CountsRecord& rec) {
  std::vector<double> probs(rec.counts.size());
  const double n = static_cast<double>(rec.n_total);
  for (std::size_t c = 0; c < probs.size(); ++c) {
    probs[c] = static_cast<double>(rec.counts[c]) / n;
  }
  return SimplexVector(std::move(probs));
}

inline std::uint64_t dataset_stream_seed(std::uint64_t master_seed,
                                         std::int64_t example_id) {
  return rng::derive(master_seed, static_cast<std::uint64_t>(example_id),
                     rng::kDatasetStream);
}

/// Samples one CountsRecord per example. Deterministic under a fixed seed;
/// each example draws from its own derived stream, so examples may be
/// processed in any order or in parallel.
inline CountsDataset build_counts_dataset(
    const model::NetworkParams& f,
    const std::vector<data::LabeledExample>& examples, double sigma,
    std::uint64_t n, std::uint64_t seed, unsigned threads = 1) {
  if (examples.empty()) {
    throw std::invalid_argument("build_counts_dataset: no examples");
  }
  if (n < 1) throw std::invalid_argument("build_counts_dataset: n must be >= 1");
  CountsDataset ds;
  ds.num_classes = f.num_classes();
  ds.n_total = n;
  ds.sigma = sigma;
  ds.master_seed = seed;
  ds.records.reserve(examples.size());
  for (const data::LabeledExample& ex : examples) {
    CountsRecord rec;
    rec.example_id = ex.id;
    rec.label = ex.label;
    rec.n_total = n;
    rec.sigma = sigma;
    rec.counts = smoothing::sample_counts(f, ex.features, sigma, n,
                                          dataset_stream_seed(seed, ex.id),
                                          threads);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CountsDataset file format (line-oriented text):
//   CSDS <version> k=<k> N=<n> sigma=<s> seed=<seed>
//   id,label,c0,c1,...,c(k-1)
// Byte-identical under a fixed seed; resumable record by record.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string header_line(const CountsDataset& ds) {
  return "CSDS " + std::to_string(ds.format_version) +
         " k=" + std::to_string(ds.num_classes) +
         " N=" + std::to_string(ds.n_total) +
         " sigma=" + data::detail::format_double(ds.sigma) +
         " seed=" + std::to_string(ds.master_seed);
}

inline std::string record_line(const CountsRecord& rec) {
  std::string line = std::to_string(rec.example_id) + ',' +
                     std::to_string(rec.label);
  for (std::uint64_t c : rec.counts) {
    line += ',';
    line += std::to_string(c);
  }
  return line;
}

inline CountsDataset parse_header(const std::string& header,
                                  const std::string& path) {
  const auto tokens = data::detail::split(header, ' ');
  if (tokens.size() != 6 || tokens[0] != "CSDS") {
    throw format_error(path + ": bad counts-dataset header");
  }
  CountsDataset ds;
  ds.format_version = static_cast<std::uint32_t>(
      data::detail::parse_int(tokens[1], path + " header version"));
  if (ds.format_version != 1) {
    throw format_error(path + ": unsupported counts-dataset version " +
                       std::to_string(ds.format_version));
  }
  ds.num_classes = static_cast<std::size_t>(data::detail::parse_int(
      data::detail::header_field(tokens[2], "k", path), path + " header k"));
  ds.n_total = static_cast<std::uint64_t>(data::detail::parse_int(
      data::detail::header_field(tokens[3], "N", path), path + " header N"));
  ds.sigma = data::detail::parse_double(
      data::detail::header_field(tokens[4], "sigma", path), path + " header sigma");
  ds.master_seed = static_cast<std::uint64_t>(data::detail::parse_int(
      data::detail::header_field(tokens[5], "seed", path), path + " header seed"));
  return ds;
}

// Parses a record line; returns false (instead of throwing) when the line is
// incomplete and may_be_partial is set, so an interrupted trailing write can
// be dropped and recomputed on resume.
inline bool parse_record(const std::string& line, std::size_t k,
                         std::uint64_t n_total, double sigma,
                         const std::string& context, bool may_be_partial,
                         CountsRecord& out) {
  const auto fields = data::detail::split(line, ',');
  auto fail = [&](const std::string& what) -> bool {
    if (may_be_partial) return false;
    throw format_error(context + ": " + what);
  };
  if (fields.size() != k + 2) return fail("expected " + std::to_string(k + 2) + " fields");
  try {
    out.example_id = data::detail::parse_int(fields[0], context + " id");
    out.label = static_cast<int>(data::detail::parse_int(fields[1], context + " label"));
    out.counts.clear();
    std::uint64_t sum = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const std::int64_t v = data::detail::parse_int(fields[c + 2], context + " count");
      if (v < 0) return fail("negative count");
      out.counts.push_back(static_cast<std::uint64_t>(v));
      sum += static_cast<std::uint64_t>(v);
    }
    if (sum != n_total) return fail("counts sum to " + std::to_string(sum));
  } catch (const format_error&) {
    if (may_be_partial) return false;
    throw;
  }
  out.n_total = n_total;
  out.sigma = sigma;
  return true;
}

}  // namespace detail

inline void save_counts_dataset(const CountsDataset& ds,
                                const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_counts_dataset: cannot open " + path);
  out << detail::header_line(ds) << "\n";
  for (const CountsRecord& rec : ds.records) {
    out << detail::record_line(rec) << "\n";
  }
  if (!out) throw std::runtime_error("save_counts_dataset: write failed for " + path);
}

/// Loads a counts dataset. tolerate_partial_tail keeps a well-formed prefix
/// and drops one trailing malformed record (an interrupted write).
inline CountsDataset load_counts_dataset(const std::string& path,
                                         bool tolerate_partial_tail = false) {
  std::ifstream in(path);
  if (!in) throw missing_artifact_error("load_counts_dataset: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) {
    throw format_error(path + ": empty counts-dataset file");
  }
  CountsDataset ds = detail::parse_header(header, path);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool last = i + 1 == lines.size();
    const std::string context = path + ":" + std::to_string(i + 2);
    CountsRecord rec;
    if (detail::parse_record(lines[i], ds.num_classes, ds.n_total, ds.sigma,
                             context, tolerate_partial_tail && last, rec)) {
      ds.records.push_back(std::move(rec));
    }
  }
  ds.validate();
  return ds;
}

/// Builds (or resumes) a counts dataset on disk. Records are flushed one by
/// one in example order, so an interrupted run loses at most the record being
/// written; rerunning with resume=true recomputes only the missing examples.
/// The completed file is byte-identical to a single uninterrupted run.
inline CountsDataset build_counts_dataset_file(
    const model::NetworkParams& f,
    const std::vector<data::LabeledExample>& examples, double sigma,
    std::uint64_t n, std::uint64_t seed, const std::string& path,
    bool resume = false, unsigned threads = 1) {
  if (examples.empty()) {
    throw std::invalid_argument("build_counts_dataset_file: no examples");
  }
  CountsDataset ds;
  ds.num_classes = f.num_classes();
  ds.n_total = n;
  ds.sigma = sigma;
  ds.master_seed = seed;

  std::unordered_map<std::int64_t, CountsRecord> existing;
  if (resume) {
    std::ifstream probe(path);
    if (probe.good()) {
      CountsDataset prior = load_counts_dataset(path, /*tolerate_partial_tail=*/true);
      if (prior.num_classes != ds.num_classes || prior.n_total != n ||
          prior.sigma != sigma || prior.master_seed != seed) {
        throw format_error(path + ": existing checkpoint header does not match "
                                  "the requested sampling configuration");
      }
      for (CountsRecord& rec : prior.records) {
        existing.emplace(rec.example_id, std::move(rec));
      }
    }
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw checkpoint_error("build_counts_dataset_file: cannot open " + path, -1);
  }
  out << detail::header_line(ds) << "\n";
  std::int64_t last_completed = -1;
  for (const data::LabeledExample& ex : examples) {
    CountsRecord rec;
    const auto it = existing.find(ex.id);
    if (it != existing.end()) {
      rec = it->second;
      if (rec.label != ex.label) {
        throw format_error(path + ": checkpoint label mismatch for id " +
                           std::to_string(ex.id));
      }
    } else {
      rec.example_id = ex.id;
      rec.label = ex.label;
      rec.n_total = n;
      rec.sigma = sigma;
      rec.counts = smoothing::sample_counts(
          f, ex.features, sigma, n, dataset_stream_seed(seed, ex.id), threads);
    }
    out << detail::record_line(rec) << "\n";
    out.flush();
    if (!out) {
      throw checkpoint_error("build_counts_dataset_file: write failed for " + path,
                             last_completed);
    }
    last_completed = ex.id;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

/// Trains the surrogate h on (x_i, counts_i / N) pairs with JS loss. Inputs
/// are joined to counts records by example id.
inline model::NetworkParams train_surrogate(
    const std::vector<data::LabeledExample>& examples, const CountsDataset& ds,
    const std::vector<std::size_t>& hidden_dims, const model::TrainConfig& cfg,
    model::TrainStats* stats = nullptr) {
  if (ds.records.empty()) {
    throw std::invalid_argument("train_surrogate: empty counts dataset");
  }
  std::unordered_map<std::int64_t, const data::LabeledExample*> by_id;
  for (const data::LabeledExample& ex : examples) by_id[ex.id] = &ex;

  model::TrainingSet set;
  set.inputs.reserve(ds.records.size());
  set.targets.reserve(ds.records.size());
  for (const CountsRecord& rec : ds.records) {
    const auto it = by_id.find(rec.example_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("train_surrogate: counts record " +
                                  std::to_string(rec.example_id) +
                                  " has no matching example");
    }
    set.inputs.push_back(it->second->features);
    set.targets.push_back(normalized_counts(rec).probs());
  }

  std::vector<std::size_t> dims;
  dims.push_back(set.inputs.front().size());
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(ds.num_classes);
  model::NetworkParams h =
      model::init_network(dims, model::Head::kSimplexPredictor, cfg.seed);
  return model::train(std::move(h), set, model::Loss::kJs, cfg,
                      /*augment_sigma=*/0.0, stats);
}

/// Largest-remainder rounding of N * probs to an integer vector summing to
/// exactly N. No entry exceeds its real value by more than 1; remainder ties
/// are broken toward the lower class index.
inline std::vector<std::uint64_t> counts_from_simplex(const SimplexVector& probs,
                                                      std::uint64_t n) {
  const std::size_t k = probs.num_classes();
  std::vector<std::uint64_t> counts(k);
  std::vector<double> remainder(k);
  std::uint64_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double scaled = static_cast<double>(n) * probs[c];
    const double floored = std::floor(scaled);
    counts[c] = static_cast<std::uint64_t>(floored);
    remainder[c] = scaled - floored;
    assigned += counts[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return a < b;
  });
  for (std::size_t i = 0; assigned < n; ++i) {
    counts[order[i % k]] += 1;
    ++assigned;
  }
  return counts;
}

/// Accelerated certification: PREDICT runs a real n0-sample Monte Carlo pass
/// for the decision; the estimation pass is replaced by one surrogate forward
/// pass whose predicted counts N * h(x) feed the Clopper-Pearson bound. The
/// surrogate is consulted exactly once per call, whatever N is. Abstains when
/// PREDICT abstains, when the surrogate's top class disagrees with PREDICT,
/// or when the bound does not clear 1/2.
inline CertOutcome accelerated_certify(const model::NetworkParams& f,
                                       const model::NetworkParams& h,
                                       std::span<const double> x,
                                       const SmoothingParams& params,
                                       std::int64_t example_id = 0,
                                       unsigned threads = 1) {
  params.validate();
  if (f.num_classes() != h.num_classes()) {
    throw config_error("accelerated_certify: base classifier has " +
                       std::to_string(f.num_classes()) + " classes, surrogate has " +
                       std::to_string(h.num_classes()));
  }
  if (x.size() != h.input_dim()) {
    throw std::invalid_argument("accelerated_certify: input dim mismatch");
  }
  const auto start = std::chrono::steady_clock::now();

  const int predicted = smoothing::predict(f, x, params, example_id, threads);

  model::Workspace ws;
  ws.resize_for(h);
  const SimplexVector probs(model::forward_probs(h, x.data(), ws));
  const auto counts = counts_from_simplex(probs, params.n);
  const int top = smoothing::detail::top_two(counts).first;

  CertOutcome outcome;
  if (predicted != smoothing::kAbstain && top == predicted) {
    const double p_lower = numerics::clopper_pearson_lower(
        counts[static_cast<std::size_t>(top)], params.n,
        Probability(params.alpha));
    outcome.p_a_lower = p_lower;
    if (p_lower > 0.5) {
      outcome.decision = top;
      outcome.radius = smoothing::certified_radius(p_lower, params.sigma);
    }
  }
  outcome.elapsed = std::chrono::steady_clock::now() - start;
  return outcome;
}

}  // namespace certsmooth::surrogate
