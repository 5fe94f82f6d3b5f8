// Copyright 2026 The PCC Testbed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pcc {

/// Base class for all project errors. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad shapes, unknown keys, ...).
struct ConfigError : Error {
  using Error::Error;
};

/// Filesystem trouble: unwritable directory, missing file, short read.
struct IoError : Error {
  using Error::Error;
};

/// Structurally corrupt input: bad magic, version mismatch, crc failure.
struct FormatError : Error {
  using Error::Error;
};

/// Scene synthesis gave up (e.g. vehicle placement retries exhausted).
struct GenerationError : Error {
  using Error::Error;
};

/// A training step produced a non-finite loss; nothing was checkpointed.
struct TrainAbort : Error {
  using Error::Error;
};

/// A required artifact (dataset, checkpoint) is absent.
struct MissingPrerequisite : Error {
  using Error::Error;
};

}  // namespace pcc
