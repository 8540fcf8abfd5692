// Copyright 2026 The rnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace rnet {

// Shape disagreement between operands. Messages carry both shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct RoutingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed binary input (IDX files, checkpoints).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or incompatible experiment configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace rnet
