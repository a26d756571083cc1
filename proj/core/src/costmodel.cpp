// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#include "shiftc/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace shiftc {

using nlohmann::ordered_json;

void ChipConfig::validate() const {
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw ParseError("chip '" + name + "': " + what);
  };
  need(num_cores > 0, "num_cores must be positive");
  need(mem_per_core > 0, "mem_per_core must be positive");
  need(link_bandwidth > 0, "link_bandwidth must be positive");
  need(sync_overhead > 0, "sync_overhead must be positive");
  need(compute_rate > 0, "compute_rate must be positive");
  need(elementwise_rate > 0, "elementwise_rate must be positive");
  need(shift_buffer > 0, "shift_buffer must be positive");
  need(shift_buffer < mem_per_core, "shift_buffer must be smaller than mem_per_core");
}

ChipConfig builtin_chip(const std::string& name) {
  if (name == "ipu-mk2") {
    ChipConfig c;
    c.name = "ipu-mk2";
    c.num_cores = 1472;
    c.mem_per_core = 638976;  // 624 KB
    c.link_bandwidth = 3.57;
    c.sync_overhead = 118;
    // ~250 TFLOPS fp16 aggregate / (1472 cores * 1.325 GHz * 2 flop per MAC).
    c.compute_rate = 64.0;
    c.elementwise_rate = 16.0;
    c.shift_buffer = 8192;
    c.clock = 1.325e9;
    return c;
  }
  throw ParseError("unknown builtin chip profile '" + name + "'");
}

ChipConfig parse_chip(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("chip config is not valid JSON: ") + e.what());
  }
  ChipConfig c;
  c.name = doc.value("name", std::string("custom"));
  c.num_cores = doc.at("num_cores").get<i64>();
  c.mem_per_core = doc.at("mem_per_core").get<i64>();
  c.link_bandwidth = doc.at("link_bandwidth").get<double>();
  c.sync_overhead = doc.at("sync_overhead").get<i64>();
  c.compute_rate = doc.at("compute_rate").get<double>();
  c.elementwise_rate = doc.value("elementwise_rate", c.compute_rate);
  c.shift_buffer = doc.at("shift_buffer").get<i64>();
  c.clock = doc.value("clock", 0.0);
  c.validate();
  return c;
}

ChipConfig load_chip(const std::string& name_or_path) {
  if (name_or_path == "ipu-mk2") return builtin_chip(name_or_path);
  namespace fs = std::filesystem;
  auto read_file = [](const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  if (fs::exists(name_or_path)) return parse_chip(read_file(name_or_path));
  if (const char* dir = std::getenv("SHIFTC_CHIP_DIR")) {
    fs::path p = fs::path(dir) / (name_or_path + ".json");
    if (fs::exists(p)) return parse_chip(read_file(p));
  }
  throw ParseError("chip profile '" + name_or_path + "' not found (not a builtin, "
                   "not a file, not in SHIFTC_CHIP_DIR)");
}

std::string serialize_chip(const ChipConfig& c) {
  ordered_json doc;
  doc["name"] = c.name;
  doc["num_cores"] = c.num_cores;
  doc["mem_per_core"] = c.mem_per_core;
  doc["link_bandwidth"] = c.link_bandwidth;
  doc["sync_overhead"] = c.sync_overhead;
  doc["compute_rate"] = c.compute_rate;
  doc["elementwise_rate"] = c.elementwise_rate;
  doc["shift_buffer"] = c.shift_buffer;
  doc["clock"] = c.clock;
  return doc.dump(2);
}

namespace {

i64 padded_tensor_bytes(const Operator& op, const PlanCore& plan, int slot) {
  const TensorRef& t = op.tensor(slot);
  i64 elems = 1;
  for (const auto& im : t.dims) elems *= op.dim_extent(im, plan.padded_extents);
  return elems * t.elem_size();
}

i64 task_extent(const Operator& op, const PlanCore& plan, int axis) {
  auto it = plan.shared_rp.find(axis);
  if (it != plan.shared_rp.end()) return it->second;
  return plan.padded_extents[static_cast<size_t>(axis)] /
         plan.fop.factors[static_cast<size_t>(axis)];
}

i64 subtask_macs(const Operator& op, const PlanCore& plan) {
  i64 m = 1;
  for (size_t a = 0; a < op.axes.size(); ++a) m *= task_extent(op, plan, static_cast<int>(a));
  return m;
}

i64 subtask_out_elems(const Operator& op, const PlanCore& plan) {
  i64 m = 1;
  for (const auto& im : op.output.dims) m *= task_extent(op, plan, im.terms[0]);
  return m;
}

i64 subtask_in_elems(const Operator& op, const PlanCore& plan) {
  i64 total = 0;
  for (const auto& t : op.inputs) {
    i64 m = 1;
    for (const auto& im : t.dims) {
      i64 e = 0;
      for (int a : im.terms) e += task_extent(op, plan, a);
      m *= e - (static_cast<i64>(im.terms.size()) - 1);
    }
    total += m;
  }
  return total;
}

i64 compute_step_cycles(const Operator& op, const PlanCore& plan, const ChipConfig& chip,
                        const CostCoefficients* custom) {
  if (custom && (op.kind == ExprKind::Contraction || op.kind == ExprKind::CustomTemplate)) {
    double acc = custom->bias;
    for (size_t i = 0; i < custom->features.size(); ++i) {
      const std::string& f = custom->features[i];
      double v = 0;
      if (f == "macs")
        v = static_cast<double>(subtask_macs(op, plan));
      else if (f == "out_elems")
        v = static_cast<double>(subtask_out_elems(op, plan));
      else if (f == "in_elems")
        v = static_cast<double>(subtask_in_elems(op, plan));
      else
        throw ParseError("unknown cost-model feature '" + f + "'");
      acc += custom->coeffs[i] * v;
    }
    return std::max<i64>(0, static_cast<i64>(std::llround(acc)));
  }
  if (op.kind == ExprKind::Elementwise)
    return ceil_div(subtask_out_elems(op, plan),
                    static_cast<i64>(chip.elementwise_rate));
  return static_cast<i64>(
      std::ceil(static_cast<double>(subtask_macs(op, plan)) / chip.compute_rate));
}

i64 comm_cycles_for(i64 bytes, i64 buffer_iterations, const ChipConfig& chip) {
  if (bytes == 0) return 0;
  return static_cast<i64>(std::ceil(static_cast<double>(bytes) / chip.link_bandwidth)) *
         buffer_iterations;
}

}  // namespace

std::vector<RotatedAxisInfo> loop_order(const Operator& op, const PlanCore& plan) {
  auto axes = rotated_axes(op, plan);
  // The axis whose (smallest) rotating tensor is smaller goes innermost: the
  // inner loop runs more often, so it should move less data.
  std::stable_sort(axes.begin(), axes.end(), [&](const RotatedAxisInfo& x,
                                                 const RotatedAxisInfo& y) {
    auto key = [&](const RotatedAxisInfo& r) {
      i64 best = std::numeric_limits<i64>::max();
      for (int slot : r.tensor_slots)
        best = std::min(best, padded_tensor_bytes(op, plan, slot));
      return best;
    };
    i64 kx = key(x), ky = key(y);
    if (kx != ky) return kx > ky;  // larger tensor -> outer
    return x.axis < y.axis;
  });
  return axes;
}

i64 shift_tile_bytes(const Operator& op, const PlanCore& plan, int slot, int axis) {
  const TensorRef& t = op.tensor(slot);
  const RTensorConfig& cfg = plan.config(slot);
  i64 elems = 1;
  for (int d = 0; d < t.rank(); ++d) {
    const IndexMap& im = t.dims[static_cast<size_t>(d)];
    if (!im.compound() && im.terms[0] == axis && cfg.f_t[static_cast<size_t>(d)] > 1)
      elems *= plan.shared_rp.at(axis);  // the advancing tile
    else
      elems *= window_dim_extent(op, plan.fop, t, cfg, d);
  }
  return elems * t.elem_size();
}

std::vector<PhaseCost> phase_profile(const Operator& op, const PlanCore& plan,
                                     const ChipConfig& chip,
                                     const CostCoefficients* custom) {
  std::vector<PhaseCost> phases;
  auto loops = loop_order(op, plan);
  i64 total_steps = 1;
  for (const auto& l : loops) total_steps *= l.steps;

  const i64 cstep = compute_step_cycles(op, plan, chip, custom);
  for (i64 t = 0; t < total_steps; ++t) {
    PhaseCost compute;
    compute.kind = PhaseKind::Compute;
    compute.compute_cycles = cstep;
    compute.sync_boundaries = 1;
    phases.push_back(compute);

    // Which axes advance at this boundary: the innermost always, plus every
    // outer loop whose inner block just completed (the last boundary restores
    // all rings to their initial state).
    PhaseCost shift;
    shift.kind = PhaseKind::Shift;
    i64 max_tile = 0;
    i64 suffix = 1;  // loop j advances when the block strictly inside wrapped
    for (size_t j = loops.size(); j-- > 0;) {
      if ((t + 1) % suffix == 0) {
        for (int slot : loops[j].tensor_slots) {
          i64 tile = shift_tile_bytes(op, plan, slot, loops[j].axis);
          shift.bytes_per_core += tile;
          max_tile = std::max(max_tile, tile);
        }
      }
      suffix *= loops[j].steps;
    }
    i64 bufiters = max_tile == 0 ? 1 : std::max<i64>(1, ceil_div(max_tile, chip.shift_buffer));
    shift.comm_cycles = comm_cycles_for(shift.bytes_per_core, bufiters, chip);
    shift.sync_boundaries = bufiters;
    phases.push_back(shift);
  }

  // Final reduction of partial sums, one staged ring all-reduce per spatially
  // partitioned reduction axis.
  const RTensorConfig& out_cfg = plan.config(-1);
  if (out_cfg.sharing_count > 1) {
    i64 out_bytes = window_elems(op, plan.fop, op.output, out_cfg) * op.output.elem_size();
    i64 out_elems = window_elems(op, plan.fop, op.output, out_cfg);
    for (size_t a = 0; a < op.axes.size(); ++a) {
      if (!op.is_reduction(static_cast<int>(a))) continue;
      i64 group = plan.fop.factors[a];
      if (group == 1) continue;
      i64 bufiters = std::max<i64>(1, ceil_div(out_bytes, chip.shift_buffer));
      for (i64 hop = 0; hop < group - 1; ++hop) {
        PhaseCost red;
        red.kind = PhaseKind::Reduce;
        red.bytes_per_core = out_bytes;
        red.comm_cycles = comm_cycles_for(out_bytes, bufiters, chip);
        red.compute_cycles = ceil_div(out_elems, static_cast<i64>(chip.elementwise_rate));
        red.sync_boundaries = bufiters + 1;  // exchange rounds + the add
        phases.push_back(red);
      }
    }
  }
  return phases;
}

i64 sync_cycles_of(const std::vector<PhaseCost>& phases, const ChipConfig& chip) {
  i64 b = 0;
  for (const auto& p : phases) b += p.sync_boundaries;
  return b * chip.sync_overhead;
}

MemoryFootprint footprint(const Operator& op, const PlanCore& plan, const ChipConfig& chip) {
  MemoryFootprint fp;
  fp.shift_buffer = chip.shift_buffer;
  fp.total = chip.shift_buffer;
  for (const auto& cfg : plan.configs) {
    const TensorRef& t = op.tensor(cfg.slot);
    MemoryFootprint::Part part;
    part.tensor = t.name;
    part.copies = cfg.replication();
    i64 with_halo = window_elems(op, plan.fop, t, cfg);
    i64 without_halo = 1;
    for (int d = 0; d < t.rank(); ++d) {
      const IndexMap& im = t.dims[static_cast<size_t>(d)];
      i64 e = plan.padded_extents[static_cast<size_t>(im.dominant_axis())] /
              cfg.f_s[static_cast<size_t>(d)] / cfg.f_t[static_cast<size_t>(d)];
      without_halo *= e;
    }
    part.partition_bytes = without_halo * t.elem_size();
    part.halo_bytes = (with_halo - without_halo) * t.elem_size();
    fp.total += with_halo * t.elem_size();
    fp.parts.push_back(std::move(part));
  }
  return fp;
}

CostEstimate estimate(const Operator& op, const PlanCore& plan, const ChipConfig& chip,
                      const CostCoefficients* custom) {
  CostEstimate c;
  auto phases = phase_profile(op, plan, chip, custom);
  c.steps = 1;
  for (const auto& l : rotated_axes(op, plan)) c.steps *= l.steps;
  for (const auto& p : phases) {
    c.compute_cycles += p.compute_cycles;
    c.comm_cycles += p.comm_cycles;
    if (p.kind == PhaseKind::Shift) c.bytes_shifted_per_core += p.bytes_per_core;
  }
  c.sync_cycles = sync_cycles_of(phases, chip);
  c.total_cycles = c.compute_cycles + c.comm_cycles + c.sync_cycles;
  return c;
}

i64 transfer_phase_cycles(i64 max_incoming_bytes_per_core, const ChipConfig& chip) {
  return static_cast<i64>(std::ceil(static_cast<double>(max_incoming_bytes_per_core) /
                                    chip.link_bandwidth)) +
         chip.sync_overhead;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CostCoefficients fit_linear(const std::string& csv_text) {
  std::istringstream is(csv_text);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty sample CSV");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "cycles")
    throw ParseError("sample CSV needs feature columns and a final 'cycles' column");
  const size_t nf = header.size() - 1;

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("sample CSV row has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(header.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw ParseError("sample CSV cell '" + c + "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < nf + 1)
    throw InfeasibleError("need at least " + std::to_string(nf + 1) + " samples for " +
                          std::to_string(nf) + " features");

  // Normal equations over [features, 1]; tiny systems, plain Gaussian
  // elimination with partial pivoting.
  const size_t n = nf + 1;
  std::vector<std::vector<double>> ata(n, std::vector<double>(n, 0.0));
  std::vector<double> aty(n, 0.0);
  for (const auto& row : rows) {
    std::vector<double> x(n, 1.0);
    for (size_t i = 0; i < nf; ++i) x[i] = row[i];
    double y = row[nf];
    for (size_t i = 0; i < n; ++i) {
      aty[i] += x[i] * y;
      for (size_t j = 0; j < n; ++j) ata[i][j] += x[i] * x[j];
    }
  }
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(ata[r][col]) > std::abs(ata[piv][col])) piv = r;
    if (std::abs(ata[piv][col]) < 1e-9)
      throw InfeasibleError("rank-deficient design matrix: feature '" +
                            (col < nf ? header[col] : std::string("bias")) +
                            "' is not identifiable from the samples");
    std::swap(ata[col], ata[piv]);
    std::swap(aty[col], aty[piv]);
    for (size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = ata[r][col] / ata[col][col];
      for (size_t j = col; j < n; ++j) ata[r][j] -= f * ata[col][j];
      aty[r] -= f * aty[col];
    }
  }
  CostCoefficients c;
  c.features.assign(header.begin(), header.end() - 1);
  for (size_t i = 0; i < nf; ++i) c.coeffs.push_back(aty[i] / ata[i][i]);
  c.bias = aty[nf] / ata[nf][nf];

  double mean = 0;
  for (const auto& row : rows) mean += row[nf];
  mean /= static_cast<double>(rows.size());
  double ss_res = 0, ss_tot = 0;
  for (const auto& row : rows) {
    double pred = c.bias;
    for (size_t i = 0; i < nf; ++i) pred += c.coeffs[i] * row[i];
    ss_res += (row[nf] - pred) * (row[nf] - pred);
    ss_tot += (row[nf] - mean) * (row[nf] - mean);
  }
  c.r2 = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return c;
}

CostCoefficients fit_linear_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open sample CSV '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return fit_linear(ss.str());
}

std::string serialize_coefficients(const CostCoefficients& c) {
  ordered_json doc;
  doc["features"] = c.features;
  doc["coeffs"] = c.coeffs;
  doc["bias"] = c.bias;
  doc["r2"] = c.r2;
  return doc.dump(2);
}

CostCoefficients parse_coefficients(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("coefficients file is not valid JSON: ") + e.what());
  }
  CostCoefficients c;
  for (const auto& f : doc.at("features")) c.features.push_back(f.get<std::string>());
  for (const auto& v : doc.at("coeffs")) c.coeffs.push_back(v.get<double>());
  c.bias = doc.value("bias", 0.0);
  c.r2 = doc.value("r2", 0.0);
  if (c.coeffs.size() != c.features.size())
    throw ParseError("coefficients/features size mismatch");
  return c;
}

}  // namespace shiftc
