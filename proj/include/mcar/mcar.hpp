// mcar/mcar.hpp

// Copyright 2026  The mcar Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mcar/adversary.hpp"
#include "mcar/autograd.hpp"
#include "mcar/backbone.hpp"
#include "mcar/config.hpp"
#include "mcar/consistency.hpp"
#include "mcar/data.hpp"
#include "mcar/detector.hpp"
#include "mcar/errors.hpp"
#include "mcar/evaluation.hpp"
#include "mcar/experiment.hpp"
#include "mcar/geometry.hpp"
#include "mcar/layers.hpp"
#include "mcar/model.hpp"
#include "mcar/multilabel.hpp"
#include "mcar/png_io.hpp"
#include "mcar/tensor.hpp"
#include "mcar/train.hpp"
