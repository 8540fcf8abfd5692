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

#include "rnet/autodiff.hpp"
#include "rnet/baselines.hpp"
#include "rnet/blocks.hpp"
#include "rnet/datasets.hpp"
#include "rnet/diagnostics.hpp"
#include "rnet/errors.hpp"
#include "rnet/experiment.hpp"
#include "rnet/model.hpp"
#include "rnet/params.hpp"
#include "rnet/policies.hpp"
#include "rnet/rl.hpp"
#include "rnet/routing.hpp"
#include "rnet/tensor.hpp"
