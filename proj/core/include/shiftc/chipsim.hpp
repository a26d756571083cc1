// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shiftc/costmodel.hpp"

namespace shiftc {

// Virtual inter-core-connected chip: placement inference, schedule
// construction and BSP execution on real numeric data.

// Initial residency of one tensor on one core: a circular window per
// dimension over the (padded) sub-tensor, plus which sub-tensor it is.
struct CoreWindow {
  std::vector<i64> subtensor_coord;  // per dim: index along f_s
  std::vector<i64> start;            // per dim: window start within sub-tensor
  std::vector<i64> extent;           // per dim: window extent (elements)
  i64 sharing_rank = 0;              // rank among the P sharing cores
  i64 ring_id = 0;
  i64 ring_pos = 0;
};

struct Placement {
  i64 cores = 0;
  std::vector<i64> grid;  // core grid shape = F_op
  // tensor slot (output mapped to inputs.size()) -> per-core window
  std::vector<std::vector<CoreWindow>> windows;
  // rotated axis -> per-core phase (slot-free element offset of the step-0
  // sub-task along that axis)
  std::map<int, std::vector<i64>> phase;
  RingLayout rings;

  std::vector<i64> core_coord(i64 core) const;
  i64 core_of(const std::vector<i64>& coord) const;
  int output_slot() const { return static_cast<int>(windows.size()) - 1; }
};

// Infers the initial placement: output partitions by the partitioning plan,
// rotating tensors aligned so every step's dependency is satisfied by one
// ring rotation. Deterministic; throws SimError if the plan's ring phases are
// inconsistent (invalid plan).
Placement place(const Operator& op, const PlanCore& plan);

// True iff the plan admits a consistent placement (used as a validation step
// during enumeration).
bool placement_feasible(const Operator& op, const PlanCore& plan);

struct ShiftMove {
  int slot = 0;
  int axis = 0;
};

struct Phase {
  PhaseKind kind = PhaseKind::Compute;
  i64 step = 0;                  // global compute-shift step index
  std::vector<ShiftMove> moves;  // Shift: tiles moving at this boundary
  int reduce_axis = -1;          // Reduce: spatially partitioned reduction axis
  i64 reduce_hop = 0;
};

struct Schedule {
  std::vector<RotatedAxisInfo> loops;  // outermost first
  i64 steps = 1;
  std::vector<Phase> phases;
  bool has_setup = false;  // SetupPhase prepended (end-to-end execution)

  std::string dump(const Operator& op) const;
};

Schedule build_schedule(const Operator& op, const PlanCore& plan, bool with_setup = false);

struct SimStats {
  i64 compute_cycles = 0;
  i64 comm_cycles = 0;
  i64 sync_cycles = 0;
  i64 setup_cycles = 0;
  i64 transition_cycles = 0;
  i64 total_cycles = 0;
  i64 steps = 0;
  i64 bytes_shifted_per_core = 0;
  i64 high_water_per_core = 0;      // max over cores
  i64 max_link_bytes_per_phase = 0;
  std::vector<i64> bytes_per_step;  // shifted bytes per core per step

  std::string csv() const;
  std::string text() const;
};

struct SimOptions {
  int workers = 1;              // >1 exercises the data-parallel mode
  bool check_conservation = true;
};

struct SimResult {
  DenseTensor output;
  SimStats stats;
};

// Executes one operator's schedule on real data through the
// allocate/compute/shift abstraction. Inputs are unpadded dense tensors in
// operator slot order. Every operand access is checked for locality; cycle
// accounting comes from the shared phase profile.
SimResult simulate(const Operator& op, const PlanCore& plan, const ChipConfig& chip,
                   const std::vector<DenseTensor>& inputs, const SimOptions& opts = {});

}  // namespace shiftc
