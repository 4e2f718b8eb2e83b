// Copyright 2026 The qpdstrat Authors
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

#include "qpdstrat/allocation.hpp"
#include "qpdstrat/circuits.hpp"
#include "qpdstrat/counts.hpp"
#include "qpdstrat/density_matrix.hpp"
#include "qpdstrat/errors.hpp"
#include "qpdstrat/estimator.hpp"
#include "qpdstrat/model.hpp"
#include "qpdstrat/numeric.hpp"
#include "qpdstrat/oracle.hpp"
#include "qpdstrat/commands.hpp"
#include "qpdstrat/parallel.hpp"
#include "qpdstrat/qpd.hpp"
#include "qpdstrat/random.hpp"
