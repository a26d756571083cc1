// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "shiftc/interop.hpp"

namespace shiftc {

// Whole-model execution on the virtual chip: operators run sequentially
// (setup -> schedule -> layout transitions -> demote to idle residency) with
// continuous per-core capacity checks and liveness-driven frees.

struct ModelSimResult {
  TensorMap outputs;
  SimStats stats;
  double max_rel_err = -1;  // vs reference_execute when verification is on
};

struct ModelSimOptions {
  int workers = 1;
  bool verify = false;
};

ModelSimResult simulate_model(const ModelGraph& graph, const EndToEndPlan& plan,
                              const ChipConfig& chip, const TensorMap& inputs,
                              const ModelSimOptions& opts = {});

}  // namespace shiftc
