// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftc/costmodel.hpp"

namespace shiftc {

// Intra-operator plan enumeration under the parallelism and padding
// constraints, scoring, and Pareto filtering.

struct ExecutionPlan {
  std::string op_id;
  PlanCore core;
  MemoryFootprint fp;
  CostEstimate cost;
  i64 cores_used = 0;
  bool relaxed = false;  // produced under relaxed constraints
  std::string plan_id;   // canonical (F_op, f_t*, rp) encoding

  i64 mem_bytes() const { return fp.total; }
  i64 time_cycles() const { return cost.total_cycles; }
};

enum class Relaxation { None, IterativeDoubling };

struct SearchConstraints {
  double min_core_utilization = 0.9;
  double min_padding_ratio = 0.75;
  Relaxation relaxation = Relaxation::IterativeDoubling;
  bool search_rp = false;  // opt-in exhaustive rp enumeration
  int jobs = 1;
};

// Pareto frontier sorted by footprint ascending / cycles strictly descending.
struct ParetoSet {
  std::vector<ExecutionPlan> plans;

  const ExecutionPlan& min_memory() const { return plans.front(); }
  const ExecutionPlan& fastest() const { return plans.back(); }
};

std::string plan_identity(const PlanCore& plan);

std::vector<OpPartitionFactor> enumerate_fop(const Operator& op, const ChipConfig& chip,
                                             const SearchConstraints& cons);

std::vector<ExecutionPlan> enumerate_plans(const Operator& op, const ChipConfig& chip,
                                           const SearchConstraints& cons,
                                           const CostCoefficients* custom = nullptr);

ParetoSet pareto_filter(std::vector<ExecutionPlan> plans);

// Doubles the allowed idle-core fraction / halves the padding bound in
// alternating rounds until plans appear or both bounds hit their floors.
std::vector<ExecutionPlan> relax_and_retry(const Operator& op, const ChipConfig& chip,
                                           SearchConstraints cons,
                                           const CostCoefficients* custom = nullptr);

// Full per-operator pipeline: enumerate (relaxing if allowed) then filter.
ParetoSet pareto_plans(const Operator& op, const ChipConfig& chip,
                       const SearchConstraints& cons,
                       const CostCoefficients* custom = nullptr);

// Builds one plan from explicit factors (per-input f_t, optional forced rp).
// `validate=false` skips rp alignment for simulator fault-injection tests.
ExecutionPlan make_plan(const Operator& op, const ChipConfig& chip,
                        const OpPartitionFactor& fop,
                        const std::map<int, std::vector<i64>>& ft_by_slot,
                        std::optional<i64> forced_rp = std::nullopt,
                        bool validate = true);

i64 max_parallelism(const Operator& op);

}  // namespace shiftc
