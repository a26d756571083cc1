// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftc/rtensor.hpp"

namespace shiftc {

// Abstract accelerator and the latency rulebook. The simulator charges cycles
// from the same phase profile this module computes, so the cost model is
// exact with respect to the virtual chip by construction.

struct ChipConfig {
  std::string name = "custom";
  i64 num_cores = 0;
  i64 mem_per_core = 0;        // bytes
  double link_bandwidth = 0;   // bytes/cycle/core
  i64 sync_overhead = 0;       // cycles per BSP phase boundary
  double compute_rate = 0;     // per-core f32 MAC/cycle
  double elementwise_rate = 0; // per-core elementwise ops/cycle
  i64 shift_buffer = 0;        // bytes
  double clock = 0;            // cycles/second, reporting only

  void validate() const;
};

ChipConfig builtin_chip(const std::string& name);  // knows "ipu-mk2"
ChipConfig parse_chip(const std::string& json_text);
ChipConfig load_chip(const std::string& name_or_path);  // honors SHIFTC_CHIP_DIR
std::string serialize_chip(const ChipConfig& chip);

// Optional custom compute-cost function (from `shiftc fit`): cycles per
// compute step = max(0, round(c0*macs + c1*out_elems + c2*in_elems + bias)).
struct CostCoefficients {
  std::vector<std::string> features;
  std::vector<double> coeffs;  // one per feature, bias last if features+1
  double bias = 0;
  double r2 = 0;
};

struct MemoryFootprint {
  struct Part {
    std::string tensor;
    i64 partition_bytes = 0;  // resident window, excluding halo
    i64 halo_bytes = 0;
    i64 copies = 1;  // chip-wide replication count (per-core bytes unaffected)
  };
  std::vector<Part> parts;
  i64 shift_buffer = 0;
  i64 total = 0;  // per-core bytes = sum of parts + shift buffer
  i64 tensor_bytes() const { return total - shift_buffer; }
};

struct CostEstimate {
  i64 compute_cycles = 0;
  i64 comm_cycles = 0;
  i64 sync_cycles = 0;
  i64 total_cycles = 0;
  i64 bytes_shifted_per_core = 0;  // total over all steps
  i64 steps = 1;
};

enum class PhaseKind { Compute, Shift, Reduce, Setup, Transition };

// One BSP phase of the rulebook; the simulator executes phases 1:1 against
// this profile and charges exactly these cycles.
struct PhaseCost {
  PhaseKind kind = PhaseKind::Compute;
  i64 compute_cycles = 0;
  i64 comm_cycles = 0;
  i64 sync_boundaries = 0;
  i64 bytes_per_core = 0;
};

i64 sync_cycles_of(const std::vector<PhaseCost>& phases, const ChipConfig& chip);

// Loop order over rotated axes: the axis whose smallest rotating tensor has
// fewer total bytes goes innermost. Returns outermost-first.
std::vector<RotatedAxisInfo> loop_order(const Operator& op, const PlanCore& plan);

// Per-step shifted tile bytes for one rotating tensor when `axis` advances.
i64 shift_tile_bytes(const Operator& op, const PlanCore& plan, int slot, int axis);

std::vector<PhaseCost> phase_profile(const Operator& op, const PlanCore& plan,
                                     const ChipConfig& chip,
                                     const CostCoefficients* custom = nullptr);

MemoryFootprint footprint(const Operator& op, const PlanCore& plan, const ChipConfig& chip);

CostEstimate estimate(const Operator& op, const PlanCore& plan, const ChipConfig& chip,
                      const CostCoefficients* custom = nullptr);

// Cycles for a one-shot transfer phase (plan setup / layout transition):
// ceil(max per-core incoming bytes / bandwidth) + one sync boundary.
i64 transfer_phase_cycles(i64 max_incoming_bytes_per_core, const ChipConfig& chip);

// Least-squares fit of `cycles` against the named feature columns of a CSV
// (header row, last column "cycles"). Throws on a rank-deficient design.
CostCoefficients fit_linear(const std::string& csv_text);
CostCoefficients fit_linear_file(const std::string& path);
std::string serialize_coefficients(const CostCoefficients& c);
CostCoefficients parse_coefficients(const std::string& json_text);

}  // namespace shiftc
