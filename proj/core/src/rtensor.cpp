// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#include "shiftc/rtensor.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace shiftc {

const RTensorConfig& PlanCore::config(int slot) const {
  for (const auto& c : configs)
    if (c.slot == slot) return c;
  throw Error("no config for tensor slot " + std::to_string(slot));
}

std::vector<i64> padded_axis_extents(const Operator& op, const OpPartitionFactor& fop) {
  if (fop.factors.size() != op.axes.size())
    throw InfeasibleError("F_op rank mismatch for operator '" + op.id + "'");
  std::vector<i64> padded(op.axes.size());
  for (size_t a = 0; a < op.axes.size(); ++a) {
    if (fop.factors[a] < 1)
      throw InfeasibleError("F_op factor must be positive on axis '" + op.axes[a].name + "'");
    padded[a] = round_up(op.axes[a].extent, fop.factors[a]);
  }
  return padded;
}

i64 local_axis_extent(const Operator& op, const OpPartitionFactor& fop, int axis) {
  return padded_axis_extents(op, fop)[static_cast<size_t>(axis)] /
         fop.factors[static_cast<size_t>(axis)];
}

namespace {

// Axes that occur as non-dominant terms of some compound dim: spatial
// partitioning of those axes is not supported (kernel axes are shared by
// duplication or rotation only).
std::set<int> non_dominant_compound_axes(const Operator& op) {
  std::set<int> s;
  auto scan = [&](const TensorRef& t) {
    for (const auto& im : t.dims)
      if (im.compound())
        for (size_t j = 0; j < im.terms.size(); ++j)
          if (static_cast<int>(j) != im.dominant) s.insert(im.terms[j]);
  };
  for (const auto& t : op.inputs) scan(t);
  scan(op.output);
  return s;
}

std::vector<i64> divisors(i64 n) {
  std::vector<i64> d;
  for (i64 i = 1; i <= n; ++i)
    if (n % i == 0) d.push_back(i);
  return d;
}

}  // namespace

std::vector<RTensorConfig> derive_spatial_factors(const Operator& op,
                                                  const OpPartitionFactor& fop) {
  auto kernel_axes = non_dominant_compound_axes(op);
  for (int a : kernel_axes)
    if (fop.factors[static_cast<size_t>(a)] != 1)
      throw InfeasibleError("axis '" + op.axes[static_cast<size_t>(a)].name +
                            "' is a non-dominant compound term and cannot be "
                            "spatially partitioned");
  (void)padded_axis_extents(op, fop);  // validates factors

  std::vector<RTensorConfig> configs;
  i64 total = fop.cores_used();
  auto derive = [&](const TensorRef& t, int slot) {
    RTensorConfig cfg;
    cfg.slot = slot;
    for (const auto& im : t.dims)
      cfg.f_s.push_back(fop.factors[static_cast<size_t>(im.dominant_axis())]);
    cfg.f_t.assign(t.dims.size(), 1);
    cfg.rp.assign(t.dims.size(), 0);
    cfg.sharing_count = total / product(cfg.f_s);
    configs.push_back(std::move(cfg));
  };
  for (size_t i = 0; i < op.inputs.size(); ++i) derive(op.inputs[i], static_cast<int>(i));
  derive(op.output, -1);
  return configs;
}

i64 subtensor_dim_extent(const Operator& op, const OpPartitionFactor& fop,
                         const TensorRef& t, const RTensorConfig& cfg, int d) {
  const IndexMap& im = t.dims[static_cast<size_t>(d)];
  auto padded = padded_axis_extents(op, fop);
  int dom = im.dominant_axis();
  i64 e = padded[static_cast<size_t>(dom)] / cfg.f_s[static_cast<size_t>(d)];
  for (size_t j = 0; j < im.terms.size(); ++j)
    if (static_cast<int>(j) != im.dominant)
      e += padded[static_cast<size_t>(im.terms[j])] - 1;  // halo
  return e;
}

i64 window_dim_extent(const Operator& op, const OpPartitionFactor& fop,
                      const TensorRef& t, const RTensorConfig& cfg, int d) {
  return subtensor_dim_extent(op, fop, t, cfg, d) / cfg.f_t[static_cast<size_t>(d)];
}

i64 window_elems(const Operator& op, const OpPartitionFactor& fop,
                 const TensorRef& t, const RTensorConfig& cfg) {
  i64 n = 1;
  for (int d = 0; d < t.rank(); ++d) n *= window_dim_extent(op, fop, t, cfg, d);
  return n;
}

std::vector<std::vector<i64>> enumerate_temporal_factors(
    const Operator& op, const OpPartitionFactor& fop, const TensorRef& t,
    const RTensorConfig& cfg) {
  std::vector<std::vector<i64>> per_dim;
  for (int d = 0; d < t.rank(); ++d) {
    if (t.dims[static_cast<size_t>(d)].compound()) {
      per_dim.push_back({1});  // compound dims are never split temporally
      continue;
    }
    std::vector<i64> cands;
    for (i64 f : divisors(subtensor_dim_extent(op, fop, t, cfg, d)))
      if (cfg.sharing_count % f == 0) cands.push_back(f);
    per_dim.push_back(cands);
  }
  std::vector<std::vector<i64>> result;
  std::vector<i64> cur(static_cast<size_t>(t.rank()), 1);
  std::function<void(int)> rec = [&](int d) {
    if (d == t.rank()) {
      if (cfg.sharing_count % product(cur) == 0) result.push_back(cur);
      return;
    }
    for (i64 f : per_dim[static_cast<size_t>(d)]) {
      cur[static_cast<size_t>(d)] = f;
      rec(d + 1);
    }
    cur[static_cast<size_t>(d)] = 1;
  };
  rec(0);
  return result;
}

namespace {

struct AxisRotation {
  int axis;
  i64 rp = -1;
  // (slot, f_t along this axis)
  std::vector<std::pair<int, i64>> tensors;
};

// Collects rotation per axis and validates the per-config invariants that do
// not involve the shared pace.
std::vector<AxisRotation> collect_rotations(const Operator& op, const OpPartitionFactor& fop,
                                            const std::vector<RTensorConfig>& configs) {
  std::map<int, AxisRotation> by_axis;
  for (const auto& cfg : configs) {
    const TensorRef& t = op.tensor(cfg.slot);
    if (cfg.ring_size() > cfg.sharing_count || cfg.sharing_count % cfg.ring_size() != 0)
      throw InfeasibleError("tensor '" + t.name + "': prod(f_t)=" +
                            std::to_string(cfg.ring_size()) + " does not divide P=" +
                            std::to_string(cfg.sharing_count));
    for (int d = 0; d < t.rank(); ++d) {
      i64 ft = cfg.f_t[static_cast<size_t>(d)];
      i64 sub = subtensor_dim_extent(op, fop, t, cfg, d);
      if (ft < 1 || sub % ft != 0)
        throw InfeasibleError("tensor '" + t.name + "': f_t=" + std::to_string(ft) +
                              " does not divide sub-tensor extent " + std::to_string(sub));
      if (ft == 1) {
        if (cfg.rp[static_cast<size_t>(d)] != 0)
          throw InfeasibleError("tensor '" + t.name + "': rp must be 0 on non-rotated dims");
        continue;
      }
      if (cfg.slot < 0)
        throw InfeasibleError("output tensor '" + t.name +
                              "' is duplicated for partial sums, never rotated");
      const IndexMap& im = t.dims[static_cast<size_t>(d)];
      if (im.compound())
        throw InfeasibleError("tensor '" + t.name + "': compound dims cannot rotate");
      int axis = im.terms[0];
      i64 rp = cfg.rp[static_cast<size_t>(d)];
      i64 part = sub / ft;
      if (rp < 1)
        throw InfeasibleError("tensor '" + t.name + "': rotated dim needs rp >= 1");
      if (rp > part)
        throw InfeasibleError("tensor '" + t.name + "': rp=" + std::to_string(rp) +
                              " exceeds partition extent " + std::to_string(part) +
                              " on axis '" + op.axes[static_cast<size_t>(axis)].name + "'");
      if (sub % rp != 0)
        throw InfeasibleError("tensor '" + t.name + "': rp=" + std::to_string(rp) +
                              " does not divide sub-tensor extent " + std::to_string(sub));
      auto& rot = by_axis.emplace(axis, AxisRotation{axis}).first->second;
      if (rot.rp == -1) rot.rp = rp;
      if (rot.rp != rp)
        throw InfeasibleError("axis '" + op.axes[static_cast<size_t>(axis)].name +
                              "': tensors disagree on the shared rotating pace (" +
                              std::to_string(rot.rp) + " vs " + std::to_string(rp) +
                              " on '" + t.name + "')");
      rot.tensors.emplace_back(cfg.slot, ft);
    }
  }
  std::vector<AxisRotation> out;
  for (auto& [axis, rot] : by_axis) out.push_back(std::move(rot));
  return out;
}

}  // namespace

std::map<int, i64> check_rp_alignment(const Operator& op, const OpPartitionFactor& fop,
                                      const std::vector<RTensorConfig>& configs) {
  std::map<int, i64> result;
  for (const auto& rot : collect_rotations(op, fop, configs)) {
    i64 K = local_axis_extent(op, fop, rot.axis);
    for (auto [slot, ft] : rot.tensors) {
      // rp <= K/(2 f_t) + 1/2  evaluated exactly as  2*f_t*rp <= K + f_t,
      // or rp == K / f_t.
      bool slack = 2 * ft * rot.rp <= K + ft;
      bool whole = ft * rot.rp == K;
      if (!slack && !whole)
        throw InfeasibleError(
            "axis '" + op.axes[static_cast<size_t>(rot.axis)].name + "': rp=" +
            std::to_string(rot.rp) + " violates the pace bound for tensor '" +
            op.tensor(slot).name + "' (need rp <= " + std::to_string(K) + "/(2*" +
            std::to_string(ft) + ")+1/2 or rp == " + std::to_string(K) + "/" +
            std::to_string(ft) + ")");
    }
    result[rot.axis] = rot.rp;
  }
  return result;
}

void default_rp(const Operator& op, const OpPartitionFactor& fop,
                std::vector<RTensorConfig>& configs) {
  // Designated pace: minimum of the rotating tensors' partition lengths.
  std::map<int, i64> pace;
  for (auto& cfg : configs) {
    const TensorRef& t = op.tensor(cfg.slot);
    for (int d = 0; d < t.rank(); ++d) {
      if (cfg.f_t[static_cast<size_t>(d)] == 1) continue;
      int axis = t.dims[static_cast<size_t>(d)].terms[0];
      i64 part = subtensor_dim_extent(op, fop, t, cfg, d) / cfg.f_t[static_cast<size_t>(d)];
      auto it = pace.find(axis);
      pace[axis] = it == pace.end() ? part : std::min(it->second, part);
    }
  }
  for (auto& cfg : configs) {
    const TensorRef& t = op.tensor(cfg.slot);
    for (int d = 0; d < t.rank(); ++d)
      cfg.rp[static_cast<size_t>(d)] =
          cfg.f_t[static_cast<size_t>(d)] == 1
              ? 0
              : pace.at(t.dims[static_cast<size_t>(d)].terms[0]);
  }
  check_rp_alignment(op, fop, configs);  // must hold for every valid config
}

std::vector<RotatedAxisInfo> rotated_axes(const Operator& op, const PlanCore& plan) {
  std::vector<RotatedAxisInfo> out;
  for (const auto& [axis, rp] : plan.shared_rp) {
    RotatedAxisInfo info;
    info.axis = axis;
    info.rp = rp;
    info.steps = plan.padded_extents[static_cast<size_t>(axis)] /
                 plan.fop.factors[static_cast<size_t>(axis)] / rp;
    for (const auto& cfg : plan.configs) {
      const TensorRef& t = op.tensor(cfg.slot);
      for (int d = 0; d < t.rank(); ++d)
        if (cfg.f_t[static_cast<size_t>(d)] > 1 &&
            t.dims[static_cast<size_t>(d)].terms[0] == axis)
          info.tensor_slots.push_back(cfg.slot);
    }
    out.push_back(std::move(info));
  }
  return out;
}

RingLayout build_rings(const Operator& op, const OpPartitionFactor& fop,
                       const std::vector<RTensorConfig>& configs) {
  RingLayout layout;
  for (const auto& cfg : configs) {
    RingLayout::TensorRings tr;
    tr.slot = cfg.slot;
    tr.ring_size = cfg.ring_size();
    tr.replication = cfg.replication();
    tr.rings.assign(static_cast<size_t>(tr.replication), {});
    for (i64 rank = 0; rank < cfg.sharing_count; ++rank)
      tr.rings[static_cast<size_t>(rank % tr.replication)].push_back(rank);
    layout.tensors.push_back(std::move(tr));
  }
  (void)op;
  (void)fop;
  return layout;
}

std::vector<i64> grid_coord(const OpPartitionFactor& fop, i64 core) {
  std::vector<i64> coord(fop.factors.size());
  for (size_t a = fop.factors.size(); a-- > 0;) {
    coord[a] = core % fop.factors[a];
    core /= fop.factors[a];
  }
  return coord;
}

i64 grid_rank(const OpPartitionFactor& fop, const std::vector<i64>& coord) {
  i64 rank = 0;
  for (size_t a = 0; a < fop.factors.size(); ++a) rank = rank * fop.factors[a] + coord[a];
  return rank;
}

std::vector<int> own_axes(const Operator& op, const TensorRef& t) {
  std::set<int> s;
  for (const auto& im : t.dims) s.insert(im.dominant_axis());
  (void)op;
  return {s.begin(), s.end()};
}

std::vector<int> missing_axes(const Operator& op, const TensorRef& t) {
  std::set<int> own;
  for (const auto& im : t.dims) own.insert(im.dominant_axis());
  std::vector<int> out;
  for (size_t a = 0; a < op.axes.size(); ++a)
    if (!own.count(static_cast<int>(a))) out.push_back(static_cast<int>(a));
  return out;
}

i64 sharing_rank(const Operator& op, const OpPartitionFactor& fop, const TensorRef& t,
                 const std::vector<i64>& core_coord) {
  i64 rank = 0;
  for (int a : missing_axes(op, t))
    rank = rank * fop.factors[static_cast<size_t>(a)] + core_coord[static_cast<size_t>(a)];
  return rank;
}

std::vector<i64> sharing_cores(const Operator& op, const OpPartitionFactor& fop,
                               const TensorRef& t, const std::vector<i64>& member_coord) {
  auto missing = missing_axes(op, t);
  std::vector<i64> coord = member_coord;
  std::vector<i64> cores;
  std::function<void(size_t)> rec = [&](size_t i) {
    if (i == missing.size()) {
      cores.push_back(grid_rank(fop, coord));
      return;
    }
    size_t a = static_cast<size_t>(missing[i]);
    for (coord[a] = 0; coord[a] < fop.factors[a]; ++coord[a]) rec(i + 1);
    coord[a] = member_coord[a];
  };
  rec(0);
  return cores;
}

PlanCore make_plan_core(const Operator& op, OpPartitionFactor fop,
                        std::vector<RTensorConfig> configs) {
  PlanCore plan;
  plan.padded_extents = padded_axis_extents(op, fop);
  plan.shared_rp = check_rp_alignment(op, fop, configs);
  plan.fop = std::move(fop);
  plan.configs = std::move(configs);
  return plan;
}

}  // namespace shiftc
