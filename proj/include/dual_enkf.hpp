/*
 Copyright 2026 The dual-enkf Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#pragma once

#include "dual_enkf/baselines.hpp"
#include "dual_enkf/bench.hpp"
#include "dual_enkf/enkf.hpp"
#include "dual_enkf/error.hpp"
#include "dual_enkf/experiment.hpp"
#include "dual_enkf/io.hpp"
#include "dual_enkf/model.hpp"
#include "dual_enkf/noise.hpp"
#include "dual_enkf/parallel.hpp"
#include "dual_enkf/policy.hpp"
#include "dual_enkf/riccati.hpp"
#include "dual_enkf/version.hpp"
