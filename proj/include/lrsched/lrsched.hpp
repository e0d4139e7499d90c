// Copyright 2026 The lrsched Authors
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


/// @file lrsched.hpp
/// Umbrella header.

#pragma once

#include "lrsched/core.hpp"
#include "lrsched/data.hpp"
#include "lrsched/objective.hpp"
#include "lrsched/problems.hpp"
#include "lrsched/mlp.hpp"
#include "lrsched/dynamics.hpp"
#include "lrsched/schedulers.hpp"
#include "lrsched/oracle.hpp"
#include "lrsched/config.hpp"
#include "lrsched/experiment.hpp"
#include "lrsched/sweep.hpp"
#include "lrsched/verify.hpp"
