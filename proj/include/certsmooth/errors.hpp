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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace certsmooth {

/// Malformed or inconsistent artifact file (bad magic, truncated payload,
/// dimension mismatch, unparseable field). The message names the offending
/// field.
class format_error : public std::runtime_error {
 public:
  explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

/// A referenced input artifact does not exist or cannot be opened.
class missing_artifact_error : public std::runtime_error {
 public:
  explicit missing_artifact_error(const std::string& what)
      : std::runtime_error(what) {}
};

/// Training produced a non-finite loss.
class training_diverged_error : public std::runtime_error {
 public:
  training_diverged_error(const std::string& what, std::size_t epoch,
                          std::size_t batch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch) + ")"),
        epoch(epoch),
        batch(batch) {}
  std::size_t epoch;
  std::size_t batch;
};

/// I/O failure during a checkpointable run. Carries the last example id that
/// was durably written so the run can be resumed.
class checkpoint_error : public std::runtime_error {
 public:
  checkpoint_error(const std::string& what, std::int64_t last_completed_id)
      : std::runtime_error(what + " (last completed id " +
                           std::to_string(last_completed_id) + ")"),
        last_completed_id(last_completed_id) {}
  std::int64_t last_completed_id;
};

/// Incompatible configuration, e.g. a surrogate whose class count does not
/// match the base classifier.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace certsmooth
