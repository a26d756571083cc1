// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "shiftc/texpr.hpp"

namespace shiftc {

// Partitioning algebra: spatial factors derived from the operator partition
// factor, temporal factors and rotating paces with their alignment rules,
// ring structure and step counts.

struct OpPartitionFactor {
  std::vector<i64> factors;  // ordered by operator axis order

  i64 cores_used() const { return product(factors); }
};

// Per-tensor rTensor configuration. `slot` is -1 for the output, else the
// input index. Vectors are per tensor dimension.
struct RTensorConfig {
  int slot = 0;
  std::vector<i64> f_s;
  std::vector<i64> f_t;
  std::vector<i64> rp;  // elements shifted per step; 0 = not rotated
  i64 sharing_count = 1;  // P: cores sharing each sub-tensor

  i64 ring_size() const { return product(f_t); }
  i64 replication() const { return sharing_count / ring_size(); }
  bool rotated() const { return ring_size() > 1; }
};

// Everything geometry derives from: the operator partition factor, the padded
// axis extents it implies, and one validated RTensorConfig per tensor.
struct PlanCore {
  OpPartitionFactor fop;
  std::vector<i64> padded_extents;     // per operator axis
  std::vector<RTensorConfig> configs;  // inputs in slot order, output last
  std::map<int, i64> shared_rp;        // rotated axis -> pace

  const RTensorConfig& config(int slot) const;
  i64 cores_used() const { return fop.cores_used(); }
};

struct RotatedAxisInfo {
  int axis = 0;
  i64 rp = 0;
  i64 steps = 0;                   // local extent / rp
  std::vector<int> tensor_slots;   // tensors rotating along this axis
};

// Ring layout of one tensor: replication-many rings, each an ordered list of
// core ranks (positions within the P sharing cores). Ring j takes the sharing
// cores with rank % replication == j; slot order ascends with rank so
// partition indices ascend contiguously along the sharing-core order.
struct RingLayout {
  struct TensorRings {
    int slot = 0;
    i64 ring_size = 1;
    i64 replication = 1;
    std::vector<std::vector<i64>> rings;  // ring -> ordered sharing-core ranks
  };
  std::vector<TensorRings> tensors;
};

std::vector<i64> padded_axis_extents(const Operator& op, const OpPartitionFactor& fop);

// Local (per sub-operator) extent of an axis: padded extent / F_op factor.
i64 local_axis_extent(const Operator& op, const OpPartitionFactor& fop, int axis);

// f_s per tensor follows data dependencies: a dimension inherits the F_op
// factor of its (dominant) axis. Returns configs with f_t = 1, rp = 0.
std::vector<RTensorConfig> derive_spatial_factors(const Operator& op,
                                                  const OpPartitionFactor& fop);

// Sub-tensor extent of dimension d (elements), including the halo
// of partitioned compound dimensions.
i64 subtensor_dim_extent(const Operator& op, const OpPartitionFactor& fop,
                         const TensorRef& t, const RTensorConfig& cfg, int d);

// Resident window extent of dimension d: sub-tensor extent / f_t[d].
i64 window_dim_extent(const Operator& op, const OpPartitionFactor& fop,
                      const TensorRef& t, const RTensorConfig& cfg, int d);

i64 window_elems(const Operator& op, const OpPartitionFactor& fop,
                 const TensorRef& t, const RTensorConfig& cfg);

// All per-dimension temporal factor vectors with prod(f_t) dividing P and
// each f_t[d] dividing the sub-tensor extent along d. Compound dimensions
// stay unsplit. Includes the all-ones vector.
std::vector<std::vector<i64>> enumerate_temporal_factors(
    const Operator& op, const OpPartitionFactor& fop, const TensorRef& t,
    const RTensorConfig& cfg);

// Validates the shared rotating pace per rotated axis: equality across
// tensors, rp <= K/(2 f_t) + 1/2 or rp == K/f_t for every rotating tensor
// (checked in exact integer arithmetic), rp bounded by and dividing the
// partition extents. Returns per-axis pace and step count.
std::map<int, i64> check_rp_alignment(const Operator& op, const OpPartitionFactor& fop,
                                      const std::vector<RTensorConfig>& configs);

// Assigns the designated pace: per rotated axis the minimum partition length
// over rotating tensors. Asserts the result passes check_rp_alignment.
void default_rp(const Operator& op, const OpPartitionFactor& fop,
                std::vector<RTensorConfig>& configs);

std::vector<RotatedAxisInfo> rotated_axes(const Operator& op, const PlanCore& plan);

RingLayout build_rings(const Operator& op, const OpPartitionFactor& fop,
                       const std::vector<RTensorConfig>& configs);

// Core grid utilities: cores form a row-major grid of shape F_op in operator
// axis order.
std::vector<i64> grid_coord(const OpPartitionFactor& fop, i64 core);
i64 grid_rank(const OpPartitionFactor& fop, const std::vector<i64>& coord);

// Axes a tensor owns (dominant axis of each dim) and the ones it misses, in
// operator axis order. P = prod F_op[missing axes].
std::vector<int> own_axes(const Operator& op, const TensorRef& t);
std::vector<int> missing_axes(const Operator& op, const TensorRef& t);

// Rank of a core among the P cores sharing one sub-tensor of `t` (row-major
// over the missing-axis coordinates), and the ordered sharing group through a
// representative member.
i64 sharing_rank(const Operator& op, const OpPartitionFactor& fop, const TensorRef& t,
                 const std::vector<i64>& core_coord);
std::vector<i64> sharing_cores(const Operator& op, const OpPartitionFactor& fop,
                               const TensorRef& t, const std::vector<i64>& member_coord);

// Assembles a PlanCore from validated parts (computes shared_rp via
// check_rp_alignment; throws on any violated invariant).
PlanCore make_plan_core(const Operator& op, OpPartitionFactor fop,
                        std::vector<RTensorConfig> configs);

}  // namespace shiftc
