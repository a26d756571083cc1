// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#include "shiftc/chipsim.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace shiftc {

std::vector<i64> Placement::core_coord(i64 core) const {
  std::vector<i64> coord(grid.size());
  for (size_t a = grid.size(); a-- > 0;) {
    coord[a] = core % grid[a];
    core /= grid[a];
  }
  return coord;
}

i64 Placement::core_of(const std::vector<i64>& coord) const {
  i64 rank = 0;
  for (size_t a = 0; a < grid.size(); ++a) rank = rank * grid[a] + coord[a];
  return rank;
}

namespace {

struct DimGeom {
  i64 subext = 1;   // sub-tensor extent (incl. halo)
  i64 window = 1;   // resident extent
  i64 f_t = 1;
  int axis = -1;    // rotated axis, -1 if not rotated
  i64 rp = 0;
};

std::vector<DimGeom> tensor_geometry(const Operator& op, const PlanCore& plan, int slot) {
  const TensorRef& t = op.tensor(slot);
  const RTensorConfig& cfg = plan.config(slot);
  std::vector<DimGeom> g(static_cast<size_t>(t.rank()));
  for (int d = 0; d < t.rank(); ++d) {
    auto& dg = g[static_cast<size_t>(d)];
    dg.subext = subtensor_dim_extent(op, plan.fop, t, cfg, d);
    dg.f_t = cfg.f_t[static_cast<size_t>(d)];
    dg.window = dg.subext / dg.f_t;
    if (dg.f_t > 1) {
      dg.axis = t.dims[static_cast<size_t>(d)].terms[0];
      dg.rp = plan.shared_rp.at(dg.axis);
    }
  }
  return g;
}

// Per-tensor ring coordinates of one core: rank within the sharing group,
// ring id and the per-dim partition coordinate (row-major over f_t).
struct RingCoord {
  i64 rank = 0;
  i64 ring_id = 0;
  i64 flat_pos = 0;
  std::vector<i64> part;  // per tensor dim
};

RingCoord ring_coord(const Operator& op, const PlanCore& plan, int slot,
                     const std::vector<i64>& core_coord) {
  const TensorRef& t = op.tensor(slot);
  const RTensorConfig& cfg = plan.config(slot);
  RingCoord rc;
  rc.rank = sharing_rank(op, plan.fop, t, core_coord);
  i64 repl = cfg.replication();
  rc.ring_id = rc.rank % repl;
  rc.flat_pos = rc.rank / repl;
  rc.part.assign(static_cast<size_t>(t.rank()), 0);
  i64 rest = rc.flat_pos;
  for (size_t d = t.dims.size(); d-- > 0;) {
    rc.part[d] = rest % cfg.f_t[d];
    rest /= cfg.f_t[d];
  }
  return rc;
}

// Core id of the ring neighbor whose partition coordinate along `d` is
// part[d] + delta (other coordinates unchanged).
i64 ring_neighbor(const Operator& op, const PlanCore& plan, int slot,
                  const Placement& pl, i64 core, int d, i64 delta) {
  const TensorRef& t = op.tensor(slot);
  const RTensorConfig& cfg = plan.config(slot);
  auto coord = pl.core_coord(core);
  RingCoord rc = ring_coord(op, plan, slot, coord);
  std::vector<i64> part = rc.part;
  part[static_cast<size_t>(d)] =
      positive_mod(part[static_cast<size_t>(d)] + delta, cfg.f_t[static_cast<size_t>(d)]);
  i64 flat = 0;
  for (size_t k = 0; k < part.size(); ++k) flat = flat * cfg.f_t[k] + part[k];
  i64 rank = flat * cfg.replication() + rc.ring_id;
  // rank -> missing-axis coordinates (row-major, axis order)
  auto missing = missing_axes(op, t);
  std::vector<i64> nb = coord;
  for (size_t i = missing.size(); i-- > 0;) {
    size_t a = static_cast<size_t>(missing[i]);
    nb[a] = rank % plan.fop.factors[a];
    rank /= plan.fop.factors[a];
  }
  return pl.core_of(nb);
}

}  // namespace

Placement place(const Operator& op, const PlanCore& plan) {
  Placement pl;
  pl.grid = plan.fop.factors;
  pl.cores = plan.cores_used();
  pl.rings = build_rings(op, plan.fop, plan.configs);

  auto rots = rotated_axes(op, plan);

  // Phase of each core along each rotated axis: the sum over rotating tensors
  // of ring position * partition length. This realizes the paper's placement
  // inference (outputs first, first temporally partitioned input in ascending
  // ring order, the rest by step-0 data dependency).
  for (const auto& rot : rots) {
    i64 L = plan.padded_extents[static_cast<size_t>(rot.axis)] /
            plan.fop.factors[static_cast<size_t>(rot.axis)];
    std::vector<i64> phi(static_cast<size_t>(pl.cores), 0);
    for (i64 c = 0; c < pl.cores; ++c) {
      auto coord = pl.core_coord(c);
      i64 sum = 0;
      for (int slot : rot.tensor_slots) {
        const TensorRef& t = op.tensor(slot);
        const RTensorConfig& cfg = plan.config(slot);
        RingCoord rc = ring_coord(op, plan, slot, coord);
        for (int d = 0; d < t.rank(); ++d) {
          if (cfg.f_t[static_cast<size_t>(d)] == 1) continue;
          if (t.dims[static_cast<size_t>(d)].terms[0] != rot.axis) continue;
          i64 w = subtensor_dim_extent(op, plan.fop, t, cfg, d) /
                  cfg.f_t[static_cast<size_t>(d)];
          sum += rc.part[static_cast<size_t>(d)] * w;
        }
      }
      phi[static_cast<size_t>(c)] = positive_mod(sum, L);
    }
    pl.phase[rot.axis] = std::move(phi);
  }

  // Ring consistency: within every sub-ring the windows must tile the cycle,
  // i.e. the phase steps by exactly one partition length between neighbors.
  for (const auto& rot : rots) {
    i64 L = plan.padded_extents[static_cast<size_t>(rot.axis)] /
            plan.fop.factors[static_cast<size_t>(rot.axis)];
    const auto& phi = pl.phase.at(rot.axis);
    for (int slot : rot.tensor_slots) {
      const TensorRef& t = op.tensor(slot);
      const RTensorConfig& cfg = plan.config(slot);
      for (int d = 0; d < t.rank(); ++d) {
        if (cfg.f_t[static_cast<size_t>(d)] == 1) continue;
        if (t.dims[static_cast<size_t>(d)].terms[0] != rot.axis) continue;
        i64 w = subtensor_dim_extent(op, plan.fop, t, cfg, d) /
                cfg.f_t[static_cast<size_t>(d)];
        for (i64 c = 0; c < pl.cores; ++c) {
          RingCoord rc = ring_coord(op, plan, slot, pl.core_coord(c));
          if (rc.part[static_cast<size_t>(d)] + 1 == cfg.f_t[static_cast<size_t>(d)])
            continue;  // wrap edge follows from the others mod L
          i64 nb = ring_neighbor(op, plan, slot, pl, c, d, +1);
          i64 want = positive_mod(phi[static_cast<size_t>(c)] + w, L);
          if (phi[static_cast<size_t>(nb)] != want)
            throw SimError("plan has no consistent ring placement: tensor '" + t.name +
                           "' on axis '" + op.axes[static_cast<size_t>(rot.axis)].name +
                           "' cannot tile its rotation ring");
        }
      }
    }
  }

  // Materialize the windows.
  pl.windows.resize(static_cast<size_t>(op.num_tensors()));
  for (int slot_i = 0; slot_i < op.num_tensors(); ++slot_i) {
    int slot = slot_i < static_cast<int>(op.inputs.size()) ? slot_i : -1;
    const TensorRef& t = op.tensor(slot);
    const RTensorConfig& cfg = plan.config(slot);
    auto geom = tensor_geometry(op, plan, slot);
    auto& per_core = pl.windows[static_cast<size_t>(slot_i)];
    per_core.resize(static_cast<size_t>(pl.cores));
    for (i64 c = 0; c < pl.cores; ++c) {
      auto coord = pl.core_coord(c);
      CoreWindow w;
      RingCoord rc = ring_coord(op, plan, slot, coord);
      w.sharing_rank = rc.rank;
      w.ring_id = rc.ring_id;
      w.ring_pos = rc.flat_pos;
      for (int d = 0; d < t.rank(); ++d) {
        const auto& dg = geom[static_cast<size_t>(d)];
        w.subtensor_coord.push_back(
            coord[static_cast<size_t>(t.dims[static_cast<size_t>(d)].dominant_axis())]);
        if (dg.axis < 0) {
          w.start.push_back(0);
          w.extent.push_back(dg.subext);
        } else {
          w.start.push_back(positive_mod(pl.phase.at(dg.axis)[static_cast<size_t>(c)],
                                         dg.subext));
          w.extent.push_back(dg.window);
        }
      }
      per_core[static_cast<size_t>(c)] = std::move(w);
    }
  }
  return pl;
}

bool placement_feasible(const Operator& op, const PlanCore& plan) {
  try {
    place(op, plan);
    return true;
  } catch (const SimError&) {
    return false;
  }
}

Schedule build_schedule(const Operator& op, const PlanCore& plan, bool with_setup) {
  Schedule s;
  s.loops = loop_order(op, plan);
  s.steps = 1;
  for (const auto& l : s.loops) s.steps *= l.steps;
  s.has_setup = with_setup;

  for (i64 t = 0; t < s.steps; ++t) {
    Phase compute;
    compute.kind = PhaseKind::Compute;
    compute.step = t;
    s.phases.push_back(compute);

    Phase shift;
    shift.kind = PhaseKind::Shift;
    shift.step = t;
    i64 suffix = 1;
    for (size_t j = s.loops.size(); j-- > 0;) {
      if ((t + 1) % suffix == 0)
        for (int slot : s.loops[j].tensor_slots)
          shift.moves.push_back(ShiftMove{slot, s.loops[j].axis});
      suffix *= s.loops[j].steps;
    }
    s.phases.push_back(shift);
  }

  const RTensorConfig& out_cfg = plan.config(-1);
  if (out_cfg.sharing_count > 1) {
    for (size_t a = 0; a < op.axes.size(); ++a) {
      if (!op.is_reduction(static_cast<int>(a))) continue;
      i64 group = plan.fop.factors[a];
      for (i64 hop = 0; hop + 1 < group; ++hop) {
        Phase red;
        red.kind = PhaseKind::Reduce;
        red.reduce_axis = static_cast<int>(a);
        red.reduce_hop = hop;
        s.phases.push_back(red);
      }
    }
  }
  return s;
}

std::string Schedule::dump(const Operator& op) const {
  std::ostringstream os;
  os << "schedule op=" << op.id << " steps=" << steps << "\n";
  if (has_setup) os << "  setup: idle -> active transfer set\n";
  os << "  loops (outermost first):";
  if (loops.empty()) os << " none";
  for (const auto& l : loops)
    os << " " << op.axes[static_cast<size_t>(l.axis)].name << "[steps=" << l.steps
       << ",rp=" << l.rp << "]";
  os << "\n";
  for (const auto& p : phases) {
    switch (p.kind) {
      case PhaseKind::Compute:
        os << "  step " << p.step << ": compute sub-task\n";
        break;
      case PhaseKind::Shift: {
        os << "  step " << p.step << ": shift";
        if (p.moves.empty()) os << " (none)";
        for (const auto& m : p.moves)
          os << " " << op.tensor(m.slot).name << "@"
             << op.axes[static_cast<size_t>(m.axis)].name;
        os << "\n";
        break;
      }
      case PhaseKind::Reduce:
        os << "  reduce axis " << op.axes[static_cast<size_t>(p.reduce_axis)].name
           << " hop " << p.reduce_hop << "\n";
        break;
      default:
        break;
    }
  }
  return os.str();
}

namespace {

// Simulation state of one tensor on one core: a circular window over the
// (padded) sub-tensor. Storage slot of sub-tensor index i along a rotated dim
// is i mod window_extent, so shifting never moves retained bytes.
struct TensorState {
  std::vector<i64> start;    // logical window start per dim
  std::vector<i64> extent;   // window extent per dim
  std::vector<i64> subext;   // sub-tensor extent per dim
  std::vector<i64> sub_off;  // global offset of the sub-tensor per dim
  std::vector<float> data;   // row-major over extent with circular dims

  i64 slot_of(const std::vector<i64>& local) const {
    i64 off = 0;
    for (size_t d = 0; d < extent.size(); ++d) off = off * extent[d] + local[d] % extent[d];
    return off;
  }
  bool contains(i64 idx, size_t d) const {
    i64 rel = positive_mod(idx - start[d], subext[d]);
    return rel < extent[d];
  }
};

struct CoreArena {
  std::vector<TensorState> tensors;  // by slot index (output last)
  i64 bytes = 0;
};

i64 global_dim_offset(const Operator& op, const PlanCore& plan, const TensorRef& t,
                      const CoreWindow& w, int d) {
  const IndexMap& im = t.dims[static_cast<size_t>(d)];
  int dom = im.dominant_axis();
  i64 local = plan.padded_extents[static_cast<size_t>(dom)] /
              plan.fop.factors[static_cast<size_t>(dom)];
  return w.subtensor_coord[static_cast<size_t>(d)] * local;
}

double padded_value(const DenseTensor& t, const std::vector<i64>& padded_idx) {
  for (size_t d = 0; d < t.extents.size(); ++d)
    if (padded_idx[d] >= t.extents[d]) return 0.0;  // zero-filled padding
  return t.at(padded_idx);
}

void run_cores(i64 cores, int workers, const std::function<void(i64)>& body) {
  if (workers <= 1 || cores < 2) {
    for (i64 c = 0; c < cores; ++c) body(c);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<i64> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  int n = std::min<int>(workers, static_cast<int>(cores));
  for (int w = 0; w < n; ++w)
    pool.emplace_back([&] {
      for (;;) {
        i64 c = next.fetch_add(1);
        if (c >= cores) return;
        try {
          body(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

SimResult simulate(const Operator& op, const PlanCore& plan, const ChipConfig& chip,
                   const std::vector<DenseTensor>& inputs, const SimOptions& opts) {
  if (static_cast<int>(inputs.size()) != static_cast<int>(op.inputs.size()))
    throw VerifyError("operator '" + op.id + "': expected " +
                      std::to_string(op.inputs.size()) + " inputs");
  for (size_t i = 0; i < inputs.size(); ++i) {
    const TensorRef& ref = op.inputs[i];
    if (inputs[i].extents.size() != ref.dims.size())
      throw VerifyError("tensor '" + ref.name + "': rank mismatch");
    for (size_t d = 0; d < ref.dims.size(); ++d)
      if (inputs[i].extents[d] != op.dim_extent(ref.dims[d]))
        throw VerifyError("tensor '" + ref.name + "': shape mismatch");
  }
  if (plan.cores_used() > chip.num_cores)
    throw CapacityError("plan uses more cores than the chip has");

  Placement pl = place(op, plan);
  Schedule sched = build_schedule(op, plan);
  auto profile = phase_profile(op, plan, chip);

  // Device-precision copies of the inputs (f32), still unpadded; padding is
  // handled on access.
  std::vector<DenseTensor> dev = inputs;
  for (auto& t : dev)
    for (auto& v : t.data) v = static_cast<float>(v);

  const int n_slots = op.num_tensors();
  const int out_slot_i = n_slots - 1;

  // allocate: all windows resident for the whole schedule.
  std::vector<CoreArena> arenas(static_cast<size_t>(pl.cores));
  i64 high_water = 0;
  for (i64 c = 0; c < pl.cores; ++c) {
    CoreArena& ar = arenas[static_cast<size_t>(c)];
    ar.tensors.resize(static_cast<size_t>(n_slots));
    ar.bytes = chip.shift_buffer;
    for (int si = 0; si < n_slots; ++si) {
      int slot = si < static_cast<int>(op.inputs.size()) ? si : -1;
      const TensorRef& t = op.tensor(slot);
      const CoreWindow& w = pl.windows[static_cast<size_t>(si)][static_cast<size_t>(c)];
      TensorState st;
      st.start = w.start;
      st.extent = w.extent;
      for (int d = 0; d < t.rank(); ++d) {
        st.subext.push_back(
            subtensor_dim_extent(op, plan.fop, t, plan.config(slot), d));
        st.sub_off.push_back(global_dim_offset(op, plan, t, w, d));
      }
      i64 elems = 1;
      for (i64 e : st.extent) elems *= e;
      st.data.assign(static_cast<size_t>(elems), 0.0f);
      ar.bytes += elems * t.elem_size();

      if (slot >= 0) {
        // Fill from the (unpadded) source tensor, zero beyond the edge.
        std::vector<i64> local(static_cast<size_t>(t.rank()), 0);
        std::function<void(int)> fill = [&](int d) {
          if (d == t.rank()) {
            std::vector<i64> gl(static_cast<size_t>(t.rank()));
            std::vector<i64> idx(static_cast<size_t>(t.rank()));
            for (int k = 0; k < t.rank(); ++k) {
              i64 sub_idx = positive_mod(st.start[static_cast<size_t>(k)] +
                                          local[static_cast<size_t>(k)],
                                          st.subext[static_cast<size_t>(k)]);
              idx[static_cast<size_t>(k)] = sub_idx;
              gl[static_cast<size_t>(k)] = st.sub_off[static_cast<size_t>(k)] + sub_idx;
            }
            st.data[static_cast<size_t>(st.slot_of(idx))] =
                static_cast<float>(padded_value(dev[static_cast<size_t>(slot)], gl));
            return;
          }
          for (local[static_cast<size_t>(d)] = 0;
               local[static_cast<size_t>(d)] < st.extent[static_cast<size_t>(d)];
               ++local[static_cast<size_t>(d)])
            fill(d + 1);
          local[static_cast<size_t>(d)] = 0;
        };
        fill(0);
      }
      ar.tensors[static_cast<size_t>(si)] = std::move(st);
    }
    if (ar.bytes > chip.mem_per_core)
      throw CapacityError("plan footprint " + std::to_string(ar.bytes) +
                          " exceeds per-core memory " + std::to_string(chip.mem_per_core));
    high_water = std::max(high_water, ar.bytes);
  }

  // Execution. Loop counters per rotated axis resolve each core's sub-task.
  SimStats stats;
  stats.steps = sched.steps;
  stats.high_water_per_core = high_water;

  const auto& loops = sched.loops;
  std::vector<i64> suffix(loops.size(), 1);
  for (size_t j = loops.size(); j-- > 0;)
    suffix[j] = (j + 1 < loops.size()) ? suffix[j + 1] * loops[j + 1].steps : 1;

  size_t profile_pos = 0;
  std::vector<std::vector<float>> reduce_circ;
  auto charge = [&](const PhaseCost& pc) {
    stats.compute_cycles += pc.compute_cycles;
    stats.comm_cycles += pc.comm_cycles;
    stats.sync_cycles += pc.sync_boundaries * chip.sync_overhead;
    stats.total_cycles += pc.compute_cycles + pc.comm_cycles +
                          pc.sync_boundaries * chip.sync_overhead;
  };

  auto axis_counter = [&](i64 t, size_t j) { return (t / suffix[j]) % loops[j].steps; };

  for (const Phase& phase : sched.phases) {
    if (profile_pos >= profile.size()) throw SimError("schedule/profile phase mismatch");
    const PhaseCost& pc = profile[profile_pos++];

    if (phase.kind == PhaseKind::Compute) {
      if (pc.kind != PhaseKind::Compute) throw SimError("profile out of sync");
      // Task ranges per axis: rotated axes take an rp slice at the core's
      // phase; the rest cover the whole local extent.
      run_cores(pl.cores, opts.workers, [&](i64 c) {
        CoreArena& ar = arenas[static_cast<size_t>(c)];
        std::vector<i64> task_start(op.axes.size(), 0), task_len(op.axes.size(), 0);
        for (size_t a = 0; a < op.axes.size(); ++a) {
          task_len[a] = plan.padded_extents[a] / plan.fop.factors[a];
          task_start[a] = 0;
        }
        for (size_t j = 0; j < loops.size(); ++j) {
          const auto& l = loops[j];
          i64 L = plan.padded_extents[static_cast<size_t>(l.axis)] /
                  plan.fop.factors[static_cast<size_t>(l.axis)];
          i64 phi = pl.phase.at(l.axis)[static_cast<size_t>(c)];
          task_start[static_cast<size_t>(l.axis)] =
              positive_mod(phi + axis_counter(phase.step, j) * l.rp, L);
          task_len[static_cast<size_t>(l.axis)] = l.rp;
        }
        // Locality check once per tensor: the task footprint must sit inside
        // the resident window along every dimension.
        for (int si = 0; si < n_slots; ++si) {
          int slot = si < static_cast<int>(op.inputs.size()) ? si : -1;
          const TensorRef& t = op.tensor(slot);
          const TensorState& st = ar.tensors[static_cast<size_t>(si)];
          for (int d = 0; d < t.rank(); ++d) {
            const IndexMap& im = t.dims[static_cast<size_t>(d)];
            // The task touches, along this dim, the sum of the per-term task
            // ranges (local coordinates within the sub-tensor).
            i64 lo = 0, len = 0;
            for (size_t k = 0; k < im.terms.size(); ++k) {
              size_t ax = static_cast<size_t>(im.terms[k]);
              lo += task_start[ax];
              len += task_len[ax];
            }
            len -= static_cast<i64>(im.terms.size()) - 1;
            for (i64 o = 0; o < len; ++o) {
              if (!st.contains(positive_mod(lo + o, st.subext[static_cast<size_t>(d)]),
                               static_cast<size_t>(d)))
                throw SimError("nonlocal operand: core " + std::to_string(c) +
                               " needs tensor '" + t.name + "' index " +
                               std::to_string(lo + o) + " on dim " + std::to_string(d) +
                               " outside its resident window (rp misalignment)");
            }
          }
        }
        // Evaluate the sub-task.
        std::vector<i64> idx(op.axes.size(), 0);
        TensorState& out = ar.tensors[static_cast<size_t>(out_slot_i)];
        std::function<void(size_t)> walk = [&](size_t a) {
          if (a == op.axes.size()) {
            auto local_of = [&](const TensorRef& t, const TensorState& st) {
              std::vector<i64> li(t.dims.size());
              for (size_t d = 0; d < t.dims.size(); ++d) {
                i64 v = 0;
                for (int term : t.dims[d].terms) v += idx[static_cast<size_t>(term)];
                li[d] = positive_mod(v, st.subext[d]);
              }
              return li;
            };
            if (op.kind == ExprKind::Elementwise) {
              std::vector<double> vals;
              for (size_t i = 0; i < op.inputs.size(); ++i) {
                TensorState& st = ar.tensors[i];
                vals.push_back(st.data[static_cast<size_t>(st.slot_of(
                    local_of(op.inputs[i], st)))]);
              }
              double r = op.fn == ElemFn::Relu ? (vals[0] > 0 ? vals[0] : 0.0)
                         : op.fn == ElemFn::Add ? vals[0] + vals[1]
                         : op.fn == ElemFn::Mul ? vals[0] * vals[1]
                                                : vals[0];
              out.data[static_cast<size_t>(out.slot_of(local_of(op.output, out)))] =
                  static_cast<float>(r);
            } else {
              float prod = 1.0f;
              for (size_t i = 0; i < op.inputs.size(); ++i) {
                TensorState& st = ar.tensors[i];
                prod *= st.data[static_cast<size_t>(st.slot_of(local_of(op.inputs[i], st)))];
              }
              out.data[static_cast<size_t>(out.slot_of(local_of(op.output, out)))] += prod;
            }
            return;
          }
          i64 lo = task_start[a], len = task_len[a];
          i64 L = plan.padded_extents[a] / plan.fop.factors[a];
          for (i64 o = 0; o < len; ++o) {
            idx[a] = positive_mod(lo + o, L);
            walk(a + 1);
          }
          return;
        };
        walk(0);
      });
      charge(pc);
      continue;
    }

    if (phase.kind == PhaseKind::Shift) {
      if (pc.kind != PhaseKind::Shift) throw SimError("profile out of sync");
      // Stage all outgoing tiles against pre-phase state, then commit.
      i64 link_bytes = 0;
      for (const auto& mv : phase.moves) {
        int si = mv.slot < 0 ? out_slot_i : mv.slot;
        const TensorRef& t = op.tensor(mv.slot);
        const RTensorConfig& cfg = plan.config(mv.slot);
        i64 rp = plan.shared_rp.at(mv.axis);
        int dim = -1;
        for (int d = 0; d < t.rank(); ++d)
          if (cfg.f_t[static_cast<size_t>(d)] > 1 &&
              t.dims[static_cast<size_t>(d)].terms[0] == mv.axis)
            dim = d;
        if (dim < 0) throw SimError("shift move without rotated dim");
        link_bytes += shift_tile_bytes(op, plan, mv.slot, mv.axis);

        // Outgoing tile: the rp-slice at the bottom of the window, all other
        // dims full window. Receiver is the ring neighbor at part-1.
        std::vector<std::vector<float>> outbox(static_cast<size_t>(pl.cores));
        run_cores(pl.cores, opts.workers, [&](i64 c) {
          TensorState& st = arenas[static_cast<size_t>(c)].tensors[static_cast<size_t>(si)];
          std::vector<i64> local(t.dims.size(), 0);
          std::vector<float>& buf = outbox[static_cast<size_t>(c)];
          std::function<void(int)> emit = [&](int d) {
            if (d == t.rank()) {
              std::vector<i64> li(t.dims.size());
              for (size_t k = 0; k < t.dims.size(); ++k)
                li[k] = positive_mod(st.start[k] + local[k], st.subext[k]);
              buf.push_back(st.data[static_cast<size_t>(st.slot_of(li))]);
              return;
            }
            i64 lim = d == dim ? rp : st.extent[static_cast<size_t>(d)];
            for (local[static_cast<size_t>(d)] = 0; local[static_cast<size_t>(d)] < lim;
                 ++local[static_cast<size_t>(d)])
              emit(d + 1);
            local[static_cast<size_t>(d)] = 0;
          };
          emit(0);
        });
        run_cores(pl.cores, opts.workers, [&](i64 c) {
          // Receive from the +1 neighbor: its outgoing tile extends my window
          // at the top; it lands at [start + extent, start + extent + rp).
          i64 src = ring_neighbor(op, plan, mv.slot, pl, c, dim, +1);
          TensorState& st = arenas[static_cast<size_t>(c)].tensors[static_cast<size_t>(si)];
          const std::vector<float>& buf = outbox[static_cast<size_t>(src)];
          std::vector<i64> local(t.dims.size(), 0);
          size_t pos = 0;
          std::function<void(int)> put = [&](int d) {
            if (d == t.rank()) {
              std::vector<i64> li(t.dims.size());
              for (size_t k = 0; k < t.dims.size(); ++k) {
                i64 base = static_cast<int>(k) == dim ? st.start[k] + st.extent[k]
                                                      : st.start[k];
                li[k] = positive_mod(base + local[k], st.subext[k]);
              }
              st.data[static_cast<size_t>(st.slot_of(li))] = buf[pos++];
              return;
            }
            i64 lim = d == dim ? rp : st.extent[static_cast<size_t>(d)];
            for (local[static_cast<size_t>(d)] = 0; local[static_cast<size_t>(d)] < lim;
                 ++local[static_cast<size_t>(d)])
              put(d + 1);
            local[static_cast<size_t>(d)] = 0;
          };
          put(0);
          st.start[static_cast<size_t>(dim)] =
              positive_mod(st.start[static_cast<size_t>(dim)] + rp,
                           st.subext[static_cast<size_t>(dim)]);
        });
      }
      if (pc.bytes_per_core != link_bytes) throw SimError("shift byte accounting mismatch");
      stats.bytes_shifted_per_core += pc.bytes_per_core;
      stats.bytes_per_step.push_back(pc.bytes_per_core);
      stats.max_link_bytes_per_phase = std::max(stats.max_link_bytes_per_phase,
                                                pc.bytes_per_core);
      charge(pc);
      continue;
    }

    if (phase.kind == PhaseKind::Reduce) {
      if (pc.kind != PhaseKind::Reduce) throw SimError("profile out of sync");
      // Ring all-reduce along one spatially partitioned reduction axis:
      // partial buffers circulate ascending the axis coordinate; each core
      // accumulates what it receives. Hop h passes the buffer received at
      // hop h-1 (its own partial at hop 0).
      size_t ax = static_cast<size_t>(phase.reduce_axis);
      if (phase.reduce_hop == 0) {
        reduce_circ.assign(static_cast<size_t>(pl.cores), {});
        for (i64 c = 0; c < pl.cores; ++c)
          reduce_circ[static_cast<size_t>(c)] =
              arenas[static_cast<size_t>(c)].tensors[static_cast<size_t>(out_slot_i)].data;
      }
      std::vector<std::vector<float>> staged(static_cast<size_t>(pl.cores));
      run_cores(pl.cores, opts.workers, [&](i64 c) {
        auto coord = pl.core_coord(c);
        coord[ax] = positive_mod(coord[ax] - 1, pl.grid[ax]);
        staged[static_cast<size_t>(c)] = reduce_circ[static_cast<size_t>(pl.core_of(coord))];
      });
      run_cores(pl.cores, opts.workers, [&](i64 c) {
        TensorState& out = arenas[static_cast<size_t>(c)].tensors[static_cast<size_t>(out_slot_i)];
        const auto& in = staged[static_cast<size_t>(c)];
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += in[i];
        reduce_circ[static_cast<size_t>(c)] = std::move(staged[static_cast<size_t>(c)]);
      });
      stats.max_link_bytes_per_phase =
          std::max(stats.max_link_bytes_per_phase, pc.bytes_per_core);
      charge(pc);
      continue;
    }
  }
  if (profile_pos != profile.size()) throw SimError("schedule/profile phase mismatch");
  reduce_circ.clear();

  // Full-rotation coverage: every rotating window is back at its initial
  // position after the complete schedule.
  for (i64 c = 0; c < pl.cores; ++c)
    for (int si = 0; si < n_slots; ++si) {
      const auto& st = arenas[static_cast<size_t>(c)].tensors[static_cast<size_t>(si)];
      const auto& w = pl.windows[static_cast<size_t>(si)][static_cast<size_t>(c)];
      if (st.start != w.start)
        throw SimError("rotation did not return to the initial placement");
    }

  // Assemble the unpadded output from duplication-group rank 0.
  SimResult res;
  res.output.dtype = op.output.dtype;
  for (const auto& im : op.output.dims) res.output.extents.push_back(op.dim_extent(im));
  res.output.data.assign(static_cast<size_t>(res.output.elems()), 0.0);
  {
    std::vector<i64> gidx(op.output.dims.size(), 0);
    std::function<void(size_t)> walk = [&](size_t d) {
      if (d == op.output.dims.size()) {
        std::vector<i64> coord(op.axes.size(), 0);
        std::vector<i64> li(op.output.dims.size());
        for (size_t k = 0; k < op.output.dims.size(); ++k) {
          size_t axis = static_cast<size_t>(op.output.dims[k].terms[0]);
          i64 local = plan.padded_extents[axis] / plan.fop.factors[axis];
          coord[axis] = gidx[k] / local;
          li[k] = gidx[k] % local;
        }
        i64 c = pl.core_of(coord);
        const TensorState& st =
            arenas[static_cast<size_t>(c)].tensors[static_cast<size_t>(out_slot_i)];
        res.output.at(gidx) = st.data[static_cast<size_t>(st.slot_of(li))];
        return;
      }
      for (gidx[d] = 0; gidx[d] < res.output.extents[d]; ++gidx[d]) walk(d + 1);
      gidx[d] = 0;
    };
    walk(0);
  }
  res.stats = stats;
  return res;
}

std::string SimStats::csv() const {
  std::ostringstream os;
  os << "metric,value\n";
  os << "compute_cycles," << compute_cycles << "\n";
  os << "comm_cycles," << comm_cycles << "\n";
  os << "sync_cycles," << sync_cycles << "\n";
  os << "setup_cycles," << setup_cycles << "\n";
  os << "transition_cycles," << transition_cycles << "\n";
  os << "total_cycles," << total_cycles << "\n";
  os << "steps," << steps << "\n";
  os << "bytes_shifted_per_core," << bytes_shifted_per_core << "\n";
  os << "high_water_per_core," << high_water_per_core << "\n";
  os << "max_link_bytes_per_phase," << max_link_bytes_per_phase << "\n";
  return os.str();
}

std::string SimStats::text() const {
  std::ostringstream os;
  os << "cycles: total=" << total_cycles << " compute=" << compute_cycles
     << " comm=" << comm_cycles << " sync=" << sync_cycles << " setup=" << setup_cycles
     << " transition=" << transition_cycles << "\n"
     << "steps=" << steps << " bytes_shifted_per_core=" << bytes_shifted_per_core
     << " high_water_per_core=" << high_water_per_core << "\n";
  return os.str();
}

}  // namespace shiftc
