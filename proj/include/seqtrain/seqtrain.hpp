// seqtrain/seqtrain.hpp

// Copyright 2026  The seqtrain Authors

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

// Umbrella header.

#include "seqtrain/common.hpp"
#include "seqtrain/tensor_net.hpp"
#include "seqtrain/checkpoint.hpp"
#include "seqtrain/lattice.hpp"
#include "seqtrain/forward_backward.hpp"
#include "seqtrain/levenshtein.hpp"
#include "seqtrain/criteria.hpp"
#include "seqtrain/cg.hpp"
#include "seqtrain/curvature.hpp"
#include "seqtrain/optim.hpp"
#include "seqtrain/sequence_problem.hpp"
#include "seqtrain/oracle.hpp"
#include "seqtrain/synthetic.hpp"
#include "seqtrain/dataset_io.hpp"
#include "seqtrain/config.hpp"
#include "seqtrain/training.hpp"
#include "seqtrain/verify.hpp"
