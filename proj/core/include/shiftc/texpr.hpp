// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftc/common.hpp"

namespace shiftc {

// Tensor-expression IR. An operator graph is the single source of truth for
// axes, extents and data dependencies; everything downstream (partitioning,
// cost, simulation) works against these types.

enum class AxisKind { SpatialOutput, Reduction };
enum class TensorRole { Input, Output };
enum class Dtype { F32, F16 };
enum class ExprKind { Contraction, Elementwise, CustomTemplate };
enum class ElemFn { None, Relu, Add, Mul, Id };

inline int element_size(Dtype dt) { return dt == Dtype::F32 ? 4 : 2; }

struct Axis {
  std::string name;
  i64 extent = 0;
  AxisKind kind = AxisKind::SpatialOutput;
};

// One tensor dimension: a single axis or a unit-stride sum of axes (h+kh).
// `terms` are indices into the owning operator's axis list; `dominant` is the
// index *within terms* of the representative axis for partitioning.
struct IndexMap {
  std::vector<int> terms;
  int dominant = 0;

  bool compound() const { return terms.size() > 1; }
  int dominant_axis() const { return terms[dominant]; }
};

struct Operator;  // fwd

struct TensorRef {
  std::string name;
  TensorRole role = TensorRole::Input;
  std::vector<IndexMap> dims;
  Dtype dtype = Dtype::F32;

  int elem_size() const { return element_size(dtype); }
  int rank() const { return static_cast<int>(dims.size()); }
};

struct Operator {
  std::string id;
  ExprKind kind = ExprKind::Contraction;
  ElemFn fn = ElemFn::None;
  std::vector<Axis> axes;
  std::vector<TensorRef> inputs;
  TensorRef output;

  int axis_index(const std::string& name) const;
  bool is_reduction(int axis) const { return axes[axis].kind == AxisKind::Reduction; }
  i64 axis_extent(int axis) const { return axes[axis].extent; }
  // Extent of one tensor dimension given per-axis extents (sum of term
  // extents minus (#terms - 1) for compound dims).
  i64 dim_extent(const IndexMap& im, const std::vector<i64>& axis_extents) const;
  i64 dim_extent(const IndexMap& im) const;
  const TensorRef& tensor(int slot) const { return slot < 0 ? output : inputs[slot]; }
  int num_tensors() const { return static_cast<int>(inputs.size()) + 1; }
  // Canonical structural signature; equal operators share cached plan sets.
  std::string signature() const;
};

struct ModelGraph {
  std::vector<Operator> operators;  // topologically ordered
  std::vector<std::string> graph_inputs;
  std::vector<std::string> graph_outputs;
  // producer tensor name -> index of producing operator
  std::map<std::string, int> producer_of;
  // tensor name -> indices of consuming operators
  std::map<std::string, std::vector<int>> consumers_of;

  bool is_external_input(const std::string& tensor) const;
  const Operator& op(int i) const { return operators[static_cast<size_t>(i)]; }
};

// Selects a compound dimension's representative term: largest extent, ties
// broken by declaration order inside the sum.
int dominant_axis(const Operator& op, const IndexMap& im);

ModelGraph parse_model(const std::string& json_text);
std::string serialize_model(const ModelGraph& graph);

// Dense tensors carry f64 values regardless of declared dtype; the oracle
// accumulates in f64 to give a stable comparison target.
struct DenseTensor {
  Dtype dtype = Dtype::F32;
  std::vector<i64> extents;
  std::vector<double> data;

  i64 elems() const;
  double at(const std::vector<i64>& idx) const;
  double& at(const std::vector<i64>& idx);
};

using TensorMap = std::map<std::string, DenseTensor>;

// Single-core nested-loop evaluation in topological order; lexicographic
// (declaration) axis order, f64 accumulation.
TensorMap reference_execute(const ModelGraph& graph, const TensorMap& inputs);

// Row-major binary I/O with a small {dtype, rank, extents} header.
void write_tensor(std::ostream& os, const DenseTensor& t);
DenseTensor read_tensor(std::istream& is);
void write_tensor_file(const std::string& path, const DenseTensor& t);
DenseTensor read_tensor_file(const std::string& path);

double max_rel_error(const DenseTensor& got, const DenseTensor& want);

}  // namespace shiftc
