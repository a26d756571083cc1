// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#include "shiftc/plangen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <thread>

#include "shiftc/chipsim.hpp"

namespace shiftc {

std::string plan_identity(const PlanCore& plan) {
  std::string id = "F" + join_i64(plan.fop.factors);
  for (const auto& cfg : plan.configs) {
    id += "_t";
    id += cfg.slot < 0 ? 'o' : static_cast<char>('a' + cfg.slot);
    id += join_i64(cfg.f_t);
  }
  id += "_rp";
  bool first = true;
  for (const auto& [axis, rp] : plan.shared_rp) {
    if (!first) id += '.';
    id += std::to_string(axis) + ":" + std::to_string(rp);
    first = false;
  }
  if (plan.shared_rp.empty()) id += "none";
  return id;
}

namespace {

// Deterministic structural order: F_op first (so exact-tie Pareto plans keep
// the lexicographically smallest F_op), then f_t vectors, then paces.
bool plan_core_less(const PlanCore& a, const PlanCore& b) {
  if (a.fop.factors != b.fop.factors) return a.fop.factors < b.fop.factors;
  for (size_t i = 0; i < a.configs.size() && i < b.configs.size(); ++i) {
    if (a.configs[i].f_t != b.configs[i].f_t) return a.configs[i].f_t < b.configs[i].f_t;
    if (a.configs[i].rp != b.configs[i].rp) return a.configs[i].rp < b.configs[i].rp;
  }
  return false;
}

}  // namespace

i64 max_parallelism(const Operator& op) {
  // Non-dominant compound-term axes cannot be partitioned spatially.
  std::set<int> blocked;
  auto scan = [&](const TensorRef& t) {
    for (const auto& im : t.dims)
      if (im.compound())
        for (size_t j = 0; j < im.terms.size(); ++j)
          if (static_cast<int>(j) != im.dominant) blocked.insert(im.terms[j]);
  };
  for (const auto& t : op.inputs) scan(t);
  scan(op.output);
  i64 p = 1;
  for (size_t a = 0; a < op.axes.size(); ++a)
    if (!blocked.count(static_cast<int>(a))) p *= op.axes[a].extent;
  return p;
}

namespace {

double padding_ratio(i64 extent, i64 factor) {
  return static_cast<double>(extent) /
         static_cast<double>(factor * ceil_div(extent, factor));
}

// Parallelism bound: strictly above util*min(C, max_par) for util < 1 (a plan
// at exactly the threshold counts as low parallelism), exact saturation at
// util >= 1.
i64 min_cores_bound(double util, i64 cap) {
  if (util >= 1.0) return static_cast<i64>(std::ceil(util * static_cast<double>(cap)));
  double t = util * static_cast<double>(cap);
  i64 floor_t = static_cast<i64>(std::floor(t));
  return static_cast<double>(floor_t) == t ? floor_t + 1 : floor_t + (t > floor_t ? 1 : 0);
}

}  // namespace

std::vector<OpPartitionFactor> enumerate_fop(const Operator& op, const ChipConfig& chip,
                                             const SearchConstraints& cons) {
  std::set<int> blocked;
  auto scan = [&](const TensorRef& t) {
    for (const auto& im : t.dims)
      if (im.compound())
        for (size_t j = 0; j < im.terms.size(); ++j)
          if (static_cast<int>(j) != im.dominant) blocked.insert(im.terms[j]);
  };
  for (const auto& t : op.inputs) scan(t);
  scan(op.output);

  const i64 cap = std::min(chip.num_cores, max_parallelism(op));
  const i64 min_cores = min_cores_bound(cons.min_core_utilization, cap);

  std::vector<OpPartitionFactor> out;
  std::vector<i64> cur(op.axes.size(), 1);
  std::function<void(size_t, i64)> rec = [&](size_t a, i64 prod) {
    if (prod > chip.num_cores) return;
    if (a == op.axes.size()) {
      if (prod >= min_cores) out.push_back(OpPartitionFactor{cur});
      return;
    }
    i64 extent = op.axes[a].extent;
    i64 top = blocked.count(static_cast<int>(a)) ? 1 : extent;
    for (i64 f = 1; f <= top && prod * f <= chip.num_cores; ++f) {
      if (padding_ratio(extent, f) < cons.min_padding_ratio) continue;
      cur[a] = f;
      rec(a + 1, prod * f);
    }
    cur[a] = 1;
  };
  rec(0, 1);
  return out;
}

namespace {

ExecutionPlan score_plan(const Operator& op, const ChipConfig& chip, PlanCore core,
                         const CostCoefficients* custom, bool relaxed) {
  ExecutionPlan p;
  p.op_id = op.id;
  p.fp = footprint(op, core, chip);
  p.cost = estimate(op, core, chip, custom);
  p.cores_used = core.cores_used();
  p.relaxed = relaxed;
  p.plan_id = plan_identity(core);
  p.core = std::move(core);
  return p;
}

// All plans for one F_op: cartesian product of per-input temporal factors
// (only tensors shared by P > 1 cores are split; the output is duplicated,
// never rotated), default or exhaustive rp, alignment- and placement-checked.
std::vector<ExecutionPlan> plans_for_fop(const Operator& op, const ChipConfig& chip,
                                         const SearchConstraints& cons,
                                         const OpPartitionFactor& fop,
                                         const CostCoefficients* custom, bool relaxed) {
  std::vector<ExecutionPlan> out;
  std::vector<RTensorConfig> base = derive_spatial_factors(op, fop);

  std::vector<std::vector<std::vector<i64>>> choices;  // per config
  for (const auto& cfg : base) {
    const TensorRef& t = op.tensor(cfg.slot);
    if (cfg.slot < 0 || cfg.sharing_count == 1) {
      choices.push_back({cfg.f_t});
    } else {
      choices.push_back(enumerate_temporal_factors(op, fop, t, cfg));
    }
  }

  std::vector<RTensorConfig> cur = base;
  std::function<void(size_t)> rec = [&](size_t i) {
    if (i == base.size()) {
      auto emit = [&](std::vector<RTensorConfig> cfgs) {
        try {
          PlanCore core = make_plan_core(op, fop, std::move(cfgs));
          if (!placement_feasible(op, core)) return;
          ExecutionPlan p = score_plan(op, chip, std::move(core), custom, relaxed);
          if (p.fp.total <= chip.mem_per_core) out.push_back(std::move(p));
        } catch (const InfeasibleError&) {
          // combination has no aligned pace; skip
        }
      };
      if (!cons.search_rp) {
        std::vector<RTensorConfig> cfgs = cur;
        try {
          default_rp(op, fop, cfgs);
        } catch (const InfeasibleError&) {
          return;
        }
        emit(std::move(cfgs));
        return;
      }
      // Exhaustive pace search: per rotated axis, every divisor of the local
      // extent within the partition bounds; the alignment check prunes.
      std::map<int, std::vector<i64>> axis_paces;
      for (const auto& cfg : cur) {
        const TensorRef& t = op.tensor(cfg.slot);
        for (int d = 0; d < t.rank(); ++d) {
          if (cfg.f_t[static_cast<size_t>(d)] == 1) continue;
          int axis = t.dims[static_cast<size_t>(d)].terms[0];
          if (axis_paces.count(axis)) continue;
          i64 local = local_axis_extent(op, fop, axis);
          std::vector<i64> paces;
          for (i64 rp = 1; rp <= local; ++rp)
            if (local % rp == 0) paces.push_back(rp);
          axis_paces[axis] = paces;
        }
      }
      std::vector<std::pair<int, std::vector<i64>>> items(axis_paces.begin(),
                                                          axis_paces.end());
      std::map<int, i64> chosen;
      std::function<void(size_t)> pick = [&](size_t k) {
        if (k == items.size()) {
          std::vector<RTensorConfig> cfgs = cur;
          for (auto& cfg : cfgs) {
            const TensorRef& t = op.tensor(cfg.slot);
            for (int d = 0; d < t.rank(); ++d)
              if (cfg.f_t[static_cast<size_t>(d)] > 1)
                cfg.rp[static_cast<size_t>(d)] =
                    chosen.at(t.dims[static_cast<size_t>(d)].terms[0]);
          }
          emit(std::move(cfgs));
          return;
        }
        for (i64 rp : items[k].second) {
          chosen[items[k].first] = rp;
          pick(k + 1);
        }
      };
      pick(0);
      return;
    }
    for (const auto& ft : choices[i]) {
      cur[i].f_t = ft;
      rec(i + 1);
    }
    cur[i].f_t = base[i].f_t;
  };
  rec(0);
  return out;
}

}  // namespace

std::vector<ExecutionPlan> enumerate_plans(const Operator& op, const ChipConfig& chip,
                                           const SearchConstraints& cons,
                                           const CostCoefficients* custom) {
  auto fops = enumerate_fop(op, chip, cons);
  std::vector<ExecutionPlan> all;
  int jobs = std::max(1, cons.jobs);
  if (jobs == 1 || fops.size() < 2) {
    for (const auto& fop : fops) {
      auto part = plans_for_fop(op, chip, cons, fop, custom, false);
      all.insert(all.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
  } else {
    // Embarrassingly parallel over F_op candidates; merged in candidate order
    // so the result is independent of the worker count.
    std::atomic<size_t> next{0};
    std::vector<std::vector<ExecutionPlan>> results(fops.size());
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          size_t i = next.fetch_add(1);
          if (i >= fops.size()) return;
          results[i] = plans_for_fop(op, chip, cons, fops[i], custom, false);
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& part : results)
      all.insert(all.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
  }
  std::stable_sort(all.begin(), all.end(), [](const ExecutionPlan& a, const ExecutionPlan& b) {
    return plan_core_less(a.core, b.core);
  });
  return all;
}

ParetoSet pareto_filter(std::vector<ExecutionPlan> plans) {
  // Sort by (mem asc, time asc, id asc) and sweep; a plan survives iff no
  // earlier survivor is at least as fast.
  std::stable_sort(plans.begin(), plans.end(),
                   [](const ExecutionPlan& a, const ExecutionPlan& b) {
                     if (a.mem_bytes() != b.mem_bytes()) return a.mem_bytes() < b.mem_bytes();
                     if (a.time_cycles() != b.time_cycles())
                       return a.time_cycles() < b.time_cycles();
                     return plan_core_less(a.core, b.core);
                   });
  ParetoSet set;
  i64 best_time = std::numeric_limits<i64>::max();
  for (auto& p : plans) {
    if (p.time_cycles() >= best_time) continue;
    best_time = p.time_cycles();
    set.plans.push_back(std::move(p));
  }
  return set;
}

std::vector<ExecutionPlan> relax_and_retry(const Operator& op, const ChipConfig& chip,
                                           SearchConstraints cons,
                                           const CostCoefficients* custom) {
  auto plans = enumerate_plans(op, chip, cons, custom);
  if (!plans.empty()) return plans;
  if (cons.relaxation != Relaxation::IterativeDoubling)
    throw InfeasibleError("no feasible plan for operator '" + op.id +
                          "' under the given constraints");

  const i64 cap = std::min(chip.num_cores, max_parallelism(op));
  const double util_floor = 1.0 / static_cast<double>(cap);
  const double pad_floor = 0.25;
  bool relax_util = true;
  for (;;) {
    bool util_at_floor = cons.min_core_utilization <= util_floor;
    bool pad_at_floor = cons.min_padding_ratio <= pad_floor;
    if (util_at_floor && pad_at_floor)
      throw InfeasibleError("no feasible plan for operator '" + op.id +
                            "' even after relaxation");
    if (relax_util && !util_at_floor) {
      // Double the allowed idle fraction.
      double idle = 1.0 - cons.min_core_utilization;
      idle = idle <= 0 ? util_floor : idle * 2;
      cons.min_core_utilization = std::max(util_floor, 1.0 - idle);
    } else if (!pad_at_floor) {
      cons.min_padding_ratio = std::max(pad_floor, cons.min_padding_ratio / 2);
    }
    relax_util = !relax_util;
    auto relaxed = enumerate_plans(op, chip, cons, custom);
    if (!relaxed.empty()) {
      for (auto& p : relaxed) p.relaxed = true;
      return relaxed;
    }
  }
}

ParetoSet pareto_plans(const Operator& op, const ChipConfig& chip,
                       const SearchConstraints& cons, const CostCoefficients* custom) {
  std::vector<ExecutionPlan> plans;
  if (cons.relaxation == Relaxation::IterativeDoubling)
    plans = relax_and_retry(op, chip, cons, custom);
  else
    plans = enumerate_plans(op, chip, cons, custom);
  if (plans.empty())
    throw InfeasibleError("no feasible plan for operator '" + op.id + "'");
  return pareto_filter(std::move(plans));
}

ExecutionPlan make_plan(const Operator& op, const ChipConfig& chip,
                        const OpPartitionFactor& fop,
                        const std::map<int, std::vector<i64>>& ft_by_slot,
                        std::optional<i64> forced_rp, bool validate) {
  std::vector<RTensorConfig> cfgs = derive_spatial_factors(op, fop);
  for (auto& cfg : cfgs) {
    auto it = ft_by_slot.find(cfg.slot);
    if (it != ft_by_slot.end()) cfg.f_t = it->second;
  }
  if (forced_rp) {
    for (auto& cfg : cfgs) {
      const TensorRef& t = op.tensor(cfg.slot);
      for (int d = 0; d < t.rank(); ++d)
        cfg.rp[static_cast<size_t>(d)] = cfg.f_t[static_cast<size_t>(d)] > 1 ? *forced_rp : 0;
    }
  } else {
    default_rp(op, fop, cfgs);
  }
  PlanCore core;
  if (validate) {
    core = make_plan_core(op, fop, std::move(cfgs));
    if (!placement_feasible(op, core))
      throw InfeasibleError("plan has no consistent ring placement");
  } else {
    core.fop = fop;
    core.padded_extents = padded_axis_extents(op, fop);
    core.configs = std::move(cfgs);
    for (const auto& cfg : core.configs) {
      const TensorRef& t = op.tensor(cfg.slot);
      for (int d = 0; d < t.rank(); ++d)
        if (cfg.f_t[static_cast<size_t>(d)] > 1)
          core.shared_rp[t.dims[static_cast<size_t>(d)].terms[0]] =
              cfg.rp[static_cast<size_t>(d)];
    }
  }
  return score_plan(op, chip, std::move(core), nullptr, false);
}

}  // namespace shiftc
