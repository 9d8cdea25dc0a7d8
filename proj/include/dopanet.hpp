// Copyright 2026 The DoPaNet Authors. All Rights Reserved.
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


// Umbrella header.

#pragma once

#include "dopanet/distributions.hpp"
#include "dopanet/errors.hpp"
#include "dopanet/evaluation.hpp"
#include "dopanet/models.hpp"
#include "dopanet/nn_core.hpp"
#include "dopanet/rng.hpp"
#include "dopanet/runner.hpp"
#include "dopanet/theory.hpp"
#include "dopanet/training.hpp"
