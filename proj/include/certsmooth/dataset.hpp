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

// Labeled feature-vector datasets: synthetic generators (Gaussian blobs and
// a concentric-shells hard mode) and the line-oriented text format. Floats
// are serialized with shortest round-trip formatting so files are
// byte-stable and lossless.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <utility>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "certsmooth/errors.hpp"
#include "certsmooth/rng.hpp"

namespace certsmooth::data {

/// A d-dimensional real feature vector with an integer class label.
struct LabeledExample {
  std::int64_t id = 0;
  int label = 0;
  std::vector<double> features;
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  std::vector<LabeledExample> examples;
};

struct GenConfig {
  std::string generator = "blobs";  // "blobs" | "shells"
  std::size_t dim = 16;
  std::size_t num_classes = 4;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  double separation = 6.0;  // blob-center spacing in blob-sigma units
  std::uint64_t data_seed = 7;

  void validate() const {
    if (generator != "blobs" && generator != "shells") {
      throw std::invalid_argument("GenConfig: unknown generator '" + generator + "'");
    }
    if (dim == 0 || num_classes < 2) {
      throw std::invalid_argument("GenConfig: require dim >= 1 and k >= 2");
    }
    if (train_size == 0 || test_size == 0) {
      throw std::invalid_argument("GenConfig: empty split");
    }
    if (!(separation > 0.0)) {
      throw std::invalid_argument("GenConfig: separation must be > 0");
    }
  }
};

namespace detail {

// Axis-aligned blob centers: class c sits at separation * (+/-)e_{c mod d},
// giving every pair of centers a distance of at least separation.
inline std::vector<double> blob_center(std::size_t label, std::size_t dim,
                                       double separation) {
  std::vector<double> center(dim, 0.0);
  const double sign = (label / dim) % 2 == 0 ? 1.0 : -1.0;
  center[label % dim] = sign * separation;
  return center;
}

inline Dataset generate_split(const GenConfig& cfg, std::size_t count,
                              std::uint64_t split_tag) {
  Dataset out;
  out.dim = cfg.dim;
  out.num_classes = cfg.num_classes;
  out.seed = cfg.data_seed;
  out.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LabeledExample ex;
    ex.id = static_cast<std::int64_t>(i);
    ex.label = static_cast<int>(i % cfg.num_classes);
    ex.features.resize(cfg.dim);
    rng::CounterRng gen(
        rng::derive(cfg.data_seed, rng::kDataGenStream, split_tag, i));
    if (cfg.generator == "blobs") {
      const auto center =
          blob_center(static_cast<std::size_t>(ex.label), cfg.dim, cfg.separation);
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        ex.features[d] = center[d] + gen.next_gaussian();
      }
    } else {
      // Concentric shells: class c lives at radius (c+1) * separation / 2
      // with radial jitter. Not linearly separable.
      double norm2 = 0.0;
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        ex.features[d] = gen.next_gaussian();
        norm2 += ex.features[d] * ex.features[d];
      }
      const double radius = (ex.label + 1) * cfg.separation * 0.5 +
                            0.25 * gen.next_gaussian();
      const double scale = radius / std::sqrt(std::max(norm2, 1e-12));
      for (double& v : ex.features) v *= scale;
    }
    out.examples.push_back(std::move(ex));
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw format_error(context + ": bad float '" + std::string(text) + "'");
  }
  return v;
}

inline std::int64_t parse_int(std::string_view text,
                              const std::string& context) {
  std::int64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw format_error(context + ": bad integer '" + std::string(text) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

// Parses "key=<value>" and returns the value part.
inline std::string_view header_field(std::string_view token,
                                     std::string_view key,
                                     const std::string& context) {
  if (token.substr(0, key.size()) != key || token.size() <= key.size() ||
      token[key.size()] != '=') {
    throw format_error(context + ": expected '" + std::string(key) +
                       "=<value>', got '" + std::string(token) + "'");
  }
  return token.substr(key.size() + 1);
}

}  // namespace detail

/// Deterministic train/test split for the configured generator.
inline std::pair<Dataset, Dataset> generate(const GenConfig& cfg) {
  cfg.validate();
  return {detail::generate_split(cfg, cfg.train_size, 0),
          detail::generate_split(cfg, cfg.test_size, 1)};
}

// File format:
//   CSDATA <version> d=<dim> k=<classes> n=<rows> seed=<seed>
//   id,label,f0,...,f(d-1)
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << "CSDATA 1 d=" << ds.dim << " k=" << ds.num_classes
      << " n=" << ds.examples.size() << " seed=" << ds.seed << "\n";
  for (const LabeledExample& ex : ds.examples) {
    out << ex.id << ',' << ex.label;
    for (double v : ex.features) out << ',' << detail::format_double(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw missing_artifact_error("load_dataset: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) {
    throw format_error(path + ": empty dataset file");
  }
  const auto tokens = detail::split(header, ' ');
  if (tokens.size() != 6 || tokens[0] != "CSDATA") {
    throw format_error(path + ": bad dataset header");
  }
  if (tokens[1] != "1") {
    throw format_error(path + ": unsupported dataset version '" +
                       std::string(tokens[1]) + "'");
  }
  Dataset ds;
  ds.dim = static_cast<std::size_t>(
      detail::parse_int(detail::header_field(tokens[2], "d", path), path + " header d"));
  ds.num_classes = static_cast<std::size_t>(
      detail::parse_int(detail::header_field(tokens[3], "k", path), path + " header k"));
  const std::int64_t n =
      detail::parse_int(detail::header_field(tokens[4], "n", path), path + " header n");
  ds.seed = static_cast<std::uint64_t>(
      detail::parse_int(detail::header_field(tokens[5], "seed", path), path + " header seed"));
  if (ds.dim == 0 || ds.num_classes < 2 || n < 0) {
    throw format_error(path + ": invalid header values");
  }

  std::unordered_set<std::int64_t> seen;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string context = path + ":" + std::to_string(line_no);
    const auto fields = detail::split(line, ',');
    if (fields.size() != ds.dim + 2) {
      throw format_error(context + ": expected " + std::to_string(ds.dim + 2) +
                         " fields, got " + std::to_string(fields.size()));
    }
    LabeledExample ex;
    ex.id = detail::parse_int(fields[0], context + " id");
    ex.label = static_cast<int>(detail::parse_int(fields[1], context + " label"));
    if (ex.label < 0 || ex.label >= static_cast<int>(ds.num_classes)) {
      throw format_error(context + ": label out of range");
    }
    if (!seen.insert(ex.id).second) {
      throw format_error(context + ": duplicate example id " +
                         std::to_string(ex.id));
    }
    ex.features.reserve(ds.dim);
    for (std::size_t d = 0; d < ds.dim; ++d) {
      ex.features.push_back(
          detail::parse_double(fields[d + 2], context + " feature"));
    }
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.size() != static_cast<std::size_t>(n)) {
    throw format_error(path + ": header says n=" + std::to_string(n) +
                       " but file has " + std::to_string(ds.examples.size()) +
                       " rows");
  }
  return ds;
}

inline std::vector<double> one_hot(int label, std::size_t num_classes) {
  std::vector<double> t(num_classes, 0.0);
  t.at(static_cast<std::size_t>(label)) = 1.0;
  return t;
}

}  // namespace certsmooth::data
