// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "shiftc/chipsim.hpp"

namespace shiftc {

// End-to-end scheduling: idle/active plan assignment per operator under the
// per-core memory budget (greedy reconciliation), setup transitions, layout
// transitions and tensor liveness.

struct OpStatePair {
  ExecutionPlan idle_plan;
  ExecutionPlan active_plan;
  i64 setup_cycles = 0;  // 0 iff idle and active plans are identical
};

struct TransferSet {
  // per core: incoming element count (bytes follow from the element size)
  std::vector<i64> incoming_elems;
  i64 elem_size = 4;

  i64 max_incoming_bytes() const;
  i64 total_bytes() const;
  bool empty() const { return max_incoming_bytes() == 0; }
};

// Residency diff of one tensor between two placements sharing F_op: each core
// receives the elements of its target window it does not already hold.
TransferSet diff_placements(const Operator& op, const PlanCore& from_plan,
                            const PlanCore& to_plan, int slot);

// Setup cost between two plans of one operator (same F_op): transfers cover
// the operator's persistent tensors (graph inputs).
i64 estimate_setup(const Operator& op, const ExecutionPlan& from_plan,
                   const ExecutionPlan& to_plan, const std::vector<int>& persistent_slots,
                   const ChipConfig& chip);

struct LivenessTable {
  // tensor -> [definition position, last-use position] over the sequential
  // operator schedule; graph outputs live to the end.
  std::map<std::string, std::pair<int, int>> interval;

  bool live_at(const std::string& tensor, int position) const;
};

LivenessTable liveness(const ModelGraph& graph);

struct SearchTracePoint {
  i64 step = 0;
  i64 idle_mem = 0;    // bytes per core, static idle residency
  i64 total_time = 0;  // cycles
  std::string upgraded_op;
};

struct EndToEndPlan {
  std::vector<OpStatePair> ops;  // by operator position
  i64 idle_mem_size = 0;         // persistent idle bytes per core + shift buffer
  i64 peak_mem = 0;              // conservative max resident bytes per core
  i64 active_mem_budget = 0;     // mem_per_core - idle_mem_size
  i64 total_time = 0;            // setup + execution + layout transitions
  i64 combinations_evaluated = 0;
  std::vector<SearchTracePoint> trace;
};

struct ParetoSets {
  std::vector<ParetoSet> by_op;  // by operator position
};

// Element-level layout transition of `tensor` from the producer's output
// placement to the consumer's input placement; zero when layouts match.
struct LayoutTransition {
  TransferSet transfers;
  i64 cycles = 0;
};

LayoutTransition layout_transition(const Operator& producer, const PlanCore& producer_plan,
                                   const Operator& consumer, const PlanCore& consumer_plan,
                                   const std::string& tensor, const ChipConfig& chip);

// Greedy memory reconciliation: start every operator at its min-memory plan,
// repeatedly upgrade the operator with the highest setup-time saving per byte
// of idle memory, keep the best total time seen.
EndToEndPlan reconcile(const ModelGraph& graph, const ParetoSets& sets, const ChipConfig& chip);

std::string trace_csv(const EndToEndPlan& plan);

}  // namespace shiftc
