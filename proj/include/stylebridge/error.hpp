// Copyright 2026 The stylebridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace stylebridge {

// Distinct exception types so callers (and tests) can tell failure classes
// apart. All derive from std::runtime_error.

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArchitectureMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FreezePatternError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a loss or parameter becomes non-finite during optimization.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DigestMismatch : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct VersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};

/// A semantic basis used with a model other than the one it was derived from.
struct BasisMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace stylebridge
