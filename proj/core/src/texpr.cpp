// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#include "shiftc/texpr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

namespace shiftc {

using nlohmann::ordered_json;

int Operator::axis_index(const std::string& name) const {
  for (size_t i = 0; i < axes.size(); ++i)
    if (axes[i].name == name) return static_cast<int>(i);
  throw ParseError("operator '" + id + "': unknown axis '" + name + "'");
}

i64 Operator::dim_extent(const IndexMap& im, const std::vector<i64>& axis_extents) const {
  i64 e = 0;
  for (int a : im.terms) e += axis_extents[static_cast<size_t>(a)];
  return e - (static_cast<i64>(im.terms.size()) - 1);
}

i64 Operator::dim_extent(const IndexMap& im) const {
  std::vector<i64> ex(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) ex[i] = axes[i].extent;
  return dim_extent(im, ex);
}

std::string Operator::signature() const {
  std::ostringstream os;
  os << static_cast<int>(kind) << '/' << static_cast<int>(fn) << '|';
  for (const auto& a : axes)
    os << a.extent << (a.kind == AxisKind::Reduction ? 'r' : 's') << ',';
  auto dump_ref = [&](const TensorRef& t) {
    os << '|' << static_cast<int>(t.dtype) << ':';
    for (const auto& im : t.dims) {
      for (size_t j = 0; j < im.terms.size(); ++j) os << (j ? '+' : ' ') << im.terms[j];
      os << ';';
    }
  };
  for (const auto& t : inputs) dump_ref(t);
  dump_ref(output);
  return os.str();
}

bool ModelGraph::is_external_input(const std::string& tensor) const {
  return std::find(graph_inputs.begin(), graph_inputs.end(), tensor) != graph_inputs.end();
}

int dominant_axis(const Operator& op, const IndexMap& im) {
  int best = 0;
  for (size_t i = 1; i < im.terms.size(); ++i) {
    if (op.axes[static_cast<size_t>(im.terms[i])].extent >
        op.axes[static_cast<size_t>(im.terms[best])].extent)
      best = static_cast<int>(i);
  }
  return best;
}

namespace {

struct TensorDecl {
  std::string name;
  Dtype dtype = Dtype::F32;
  ordered_json dims;  // raw dim entries, resolved per operator
};

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::F32;
  if (s == "f16") return Dtype::F16;
  throw ParseError("unsupported dtype '" + s + "' (expected f32 or f16)");
}

ElemFn parse_fn(const std::string& s) {
  if (s == "relu") return ElemFn::Relu;
  if (s == "add") return ElemFn::Add;
  if (s == "mul") return ElemFn::Mul;
  if (s == "id") return ElemFn::Id;
  throw ParseError("unsupported elementwise fn '" + s + "'");
}

IndexMap resolve_dim(const ordered_json& entry, Operator& op,
                     const std::map<std::string, i64>& axis_extents) {
  auto intern_axis = [&](const std::string& name) {
    for (size_t i = 0; i < op.axes.size(); ++i)
      if (op.axes[i].name == name) return static_cast<int>(i);
    auto it = axis_extents.find(name);
    if (it == axis_extents.end())
      throw ParseError("operator '" + op.id + "': undefined axis '" + name + "'");
    op.axes.push_back(Axis{name, it->second, AxisKind::SpatialOutput});
    return static_cast<int>(op.axes.size() - 1);
  };
  IndexMap im;
  if (entry.is_string()) {
    im.terms.push_back(intern_axis(entry.get<std::string>()));
  } else if (entry.is_object() && entry.contains("sum")) {
    if (entry.size() != 1)
      throw ParseError("compound dims support unit-stride sums only; "
                       "strides/dilations are not supported");
    for (const auto& t : entry["sum"]) im.terms.push_back(intern_axis(t.get<std::string>()));
    if (im.terms.size() < 2)
      throw ParseError("compound dim needs at least 2 axis terms");
  } else {
    throw ParseError("tensor dim must be an axis name or {\"sum\": [...]}; "
                     "strides/dilations are not supported");
  }
  std::set<int> uniq(im.terms.begin(), im.terms.end());
  if (uniq.size() != im.terms.size())
    throw ParseError("operator '" + op.id + "': axis repeated within one dim");
  return im;
}

void validate_operator(Operator& op) {
  // Axis kinds: reduction iff the axis indexes no output dimension.
  std::set<int> out_axes;
  for (const auto& im : op.output.dims)
    for (int a : im.terms) out_axes.insert(a);
  for (size_t a = 0; a < op.axes.size(); ++a) {
    op.axes[a].kind = out_axes.count(static_cast<int>(a)) ? AxisKind::SpatialOutput
                                                          : AxisKind::Reduction;
    if (op.axes[a].extent < 1)
      throw ParseError("axis '" + op.axes[a].name + "' has non-positive extent");
  }
  std::set<int> used;
  std::set<std::string> in_names;
  for (const auto& t : op.inputs) {
    if (t.dims.empty()) throw ParseError("tensor '" + t.name + "' has no dims");
    if (!in_names.insert(t.name).second)
      throw ParseError("operator '" + op.id + "': tensor '" + t.name +
                       "' appears twice among the inputs");
    for (const auto& im : t.dims)
      for (int a : im.terms) used.insert(a);
  }
  if (op.output.dims.empty()) throw ParseError("output tensor has no dims");
  for (const auto& im : op.output.dims) {
    if (im.compound())
      throw ParseError("operator '" + op.id + "': output dims must be single axes");
    used.insert(im.terms[0]);
  }
  for (size_t a = 0; a < op.axes.size(); ++a)
    if (!used.count(static_cast<int>(a)))
      throw ParseError("axis '" + op.axes[a].name + "' indexes no tensor of '" + op.id + "'");
  // Repeated axis across dims of one tensor (diagonal access) is unsupported.
  for (const auto& t : op.inputs) {
    std::set<int> per;
    for (const auto& im : t.dims)
      for (int a : im.terms)
        if (!per.insert(a).second)
          throw ParseError("tensor '" + t.name + "': axis used by two dims (diagonal "
                           "access is not supported)");
  }
  if (op.kind == ExprKind::Elementwise) {
    if (op.fn == ElemFn::None)
      throw ParseError("elementwise operator '" + op.id + "' needs a 'fn'");
    for (const auto& t : op.inputs)
      if (t.dims.size() != op.output.dims.size())
        throw ParseError("elementwise operator '" + op.id + "': rank mismatch");
    for (size_t a = 0; a < op.axes.size(); ++a)
      if (op.axes[a].kind == AxisKind::Reduction)
        throw ParseError("elementwise operator '" + op.id + "' cannot reduce");
    if ((op.fn == ElemFn::Add || op.fn == ElemFn::Mul) && op.inputs.size() != 2)
      throw ParseError("elementwise fn of '" + op.id + "' expects 2 inputs");
    if ((op.fn == ElemFn::Relu || op.fn == ElemFn::Id) && op.inputs.size() != 1)
      throw ParseError("elementwise fn of '" + op.id + "' expects 1 input");
  }
}

}  // namespace

ModelGraph parse_model(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("model is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("axes") || !doc.contains("tensors") ||
      !doc.contains("operators"))
    throw ParseError("model needs top-level 'axes', 'tensors' and 'operators'");

  std::map<std::string, i64> axis_extents;
  std::vector<std::string> axis_order;
  for (const auto& a : doc["axes"]) {
    std::string name = a.at("name").get<std::string>();
    i64 extent = a.at("extent").get<i64>();
    if (extent < 1) throw ParseError("axis '" + name + "' has non-positive extent");
    if (axis_extents.count(name)) throw ParseError("axis '" + name + "' declared twice");
    axis_extents[name] = extent;
    axis_order.push_back(name);
  }

  std::map<std::string, TensorDecl> tensors;
  for (const auto& t : doc["tensors"]) {
    TensorDecl d;
    d.name = t.at("name").get<std::string>();
    d.dtype = parse_dtype(t.value("dtype", std::string("f32")));
    d.dims = t.at("dims");
    if (tensors.count(d.name)) throw ParseError("tensor '" + d.name + "' declared twice");
    tensors[d.name] = d;
  }

  ModelGraph g;
  if (doc.contains("graph_inputs"))
    for (const auto& s : doc["graph_inputs"]) g.graph_inputs.push_back(s.get<std::string>());
  if (doc.contains("graph_outputs"))
    for (const auto& s : doc["graph_outputs"]) g.graph_outputs.push_back(s.get<std::string>());

  std::set<std::string> produced;
  for (const auto& o : doc["operators"]) {
    Operator op;
    op.id = o.at("id").get<std::string>();
    std::string kind = o.value("kind", std::string("contraction"));
    if (kind == "contraction") {
      op.kind = ExprKind::Contraction;
    } else if (kind == "elementwise") {
      op.kind = ExprKind::Elementwise;
      op.fn = parse_fn(o.at("fn").get<std::string>());
    } else if (kind == "custom-template") {
      // Same expression semantics as a contraction; custom cost coefficients
      // may be supplied at compile time.
      op.kind = ExprKind::CustomTemplate;
    } else {
      throw ParseError("operator '" + op.id + "': kind '" + kind +
                       "' is not expressible as a tensor expression "
                       "(vendor-library ops are out of scope)");
    }
    auto resolve_ref = [&](const std::string& name, TensorRole role) {
      auto it = tensors.find(name);
      if (it == tensors.end())
        throw ParseError("operator '" + op.id + "': undefined tensor '" + name + "'");
      TensorRef r;
      r.name = name;
      r.role = role;
      r.dtype = it->second.dtype;
      for (const auto& dim : it->second.dims)
        r.dims.push_back(resolve_dim(dim, op, axis_extents));
      return r;
    };
    for (const auto& in : o.at("inputs")) {
      op.inputs.push_back(resolve_ref(in.get<std::string>(), TensorRole::Input));
    }
    if (op.inputs.empty()) throw ParseError("operator '" + op.id + "' has no inputs");
    op.output = resolve_ref(o.at("output").get<std::string>(), TensorRole::Output);

    // Keep the document's axis declaration order.
    std::vector<Axis> ordered;
    std::vector<int> remap(op.axes.size());
    for (const auto& name : axis_order) {
      for (size_t i = 0; i < op.axes.size(); ++i)
        if (op.axes[i].name == name) {
          remap[i] = static_cast<int>(ordered.size());
          ordered.push_back(op.axes[i]);
        }
    }
    op.axes = ordered;
    auto remap_ref = [&](TensorRef& t) {
      for (auto& im : t.dims)
        for (auto& a : im.terms) a = remap[static_cast<size_t>(a)];
    };
    for (auto& t : op.inputs) remap_ref(t);
    remap_ref(op.output);
    for (auto& t : op.inputs)
      for (auto& im : t.dims)
        if (im.compound()) im.dominant = dominant_axis(op, im);

    validate_operator(op);

    const std::string& out = op.output.name;
    if (produced.count(out) || g.is_external_input(out))
      throw ParseError("tensor '" + out + "' produced twice");
    produced.insert(out);
    g.operators.push_back(std::move(op));
  }

  // Dependency validation: consumed tensors are external inputs or outputs of
  // a *prior* operator (the document order must be topological).
  std::set<std::string> avail(g.graph_inputs.begin(), g.graph_inputs.end());
  for (size_t i = 0; i < g.operators.size(); ++i) {
    const Operator& op = g.operators[i];
    for (const auto& in : op.inputs) {
      if (!avail.count(in.name)) {
        bool later = false;
        for (size_t j = i; j < g.operators.size(); ++j)
          if (g.operators[j].output.name == in.name) later = true;
        throw ParseError(later ? "operator graph is cyclic or not topologically ordered at '" +
                                     op.id + "' (tensor '" + in.name + "')"
                               : "tensor '" + in.name + "' consumed by '" + op.id +
                                     "' is never produced and is not a graph input");
      }
      g.consumers_of[in.name].push_back(static_cast<int>(i));
    }
    avail.insert(op.output.name);
    g.producer_of[op.output.name] = static_cast<int>(i);
  }
  for (const auto& out : g.graph_outputs)
    if (!avail.count(out)) throw ParseError("graph output '" + out + "' is never produced");
  return g;
}

std::string serialize_model(const ModelGraph& g) {
  ordered_json doc;
  std::map<std::string, i64> axis_extents;
  std::vector<std::string> axis_order;
  ordered_json tensors = ordered_json::array();
  std::set<std::string> seen;
  auto emit_tensor = [&](const Operator& op, const TensorRef& t) {
    if (!seen.insert(t.name).second) return;
    ordered_json jt;
    jt["name"] = t.name;
    jt["dtype"] = t.dtype == Dtype::F32 ? "f32" : "f16";
    ordered_json dims = ordered_json::array();
    for (const auto& im : t.dims) {
      if (!im.compound()) {
        dims.push_back(op.axes[static_cast<size_t>(im.terms[0])].name);
      } else {
        ordered_json sum = ordered_json::array();
        for (int a : im.terms) sum.push_back(op.axes[static_cast<size_t>(a)].name);
        dims.push_back(ordered_json{{"sum", sum}});
      }
    }
    jt["dims"] = dims;
    tensors.push_back(jt);
  };
  ordered_json ops = ordered_json::array();
  for (const auto& op : g.operators) {
    for (const auto& a : op.axes) {
      if (!axis_extents.count(a.name)) {
        axis_extents[a.name] = a.extent;
        axis_order.push_back(a.name);
      }
    }
    for (const auto& t : op.inputs) emit_tensor(op, t);
    emit_tensor(op, op.output);
    ordered_json jo;
    jo["id"] = op.id;
    jo["kind"] = op.kind == ExprKind::Contraction
                     ? "contraction"
                     : (op.kind == ExprKind::Elementwise ? "elementwise" : "custom-template");
    if (op.kind == ExprKind::Elementwise) {
      const char* fn = op.fn == ElemFn::Relu ? "relu"
                       : op.fn == ElemFn::Add ? "add"
                       : op.fn == ElemFn::Mul ? "mul"
                                              : "id";
      jo["fn"] = fn;
    }
    ordered_json ins = ordered_json::array();
    for (const auto& t : op.inputs) ins.push_back(t.name);
    jo["inputs"] = ins;
    jo["output"] = op.output.name;
    ops.push_back(jo);
  }
  ordered_json axes = ordered_json::array();
  for (const auto& name : axis_order)
    axes.push_back(ordered_json{{"name", name}, {"extent", axis_extents[name]}});
  doc["axes"] = axes;
  doc["tensors"] = tensors;
  doc["operators"] = ops;
  doc["graph_inputs"] = g.graph_inputs;
  doc["graph_outputs"] = g.graph_outputs;
  return doc.dump(2);
}

i64 DenseTensor::elems() const {
  i64 n = 1;
  for (i64 e : extents) n *= e;
  return n;
}

double DenseTensor::at(const std::vector<i64>& idx) const {
  i64 off = 0;
  for (size_t d = 0; d < extents.size(); ++d) off = off * extents[d] + idx[d];
  return data[static_cast<size_t>(off)];
}

double& DenseTensor::at(const std::vector<i64>& idx) {
  i64 off = 0;
  for (size_t d = 0; d < extents.size(); ++d) off = off * extents[d] + idx[d];
  return data[static_cast<size_t>(off)];
}

namespace {

void check_shape(const Operator& op, const TensorRef& ref, const DenseTensor& t) {
  if (t.extents.size() != ref.dims.size())
    throw VerifyError("tensor '" + ref.name + "': rank mismatch");
  for (size_t d = 0; d < ref.dims.size(); ++d) {
    if (t.extents[d] != op.dim_extent(ref.dims[d]))
      throw VerifyError("tensor '" + ref.name + "': extent mismatch on dim " +
                        std::to_string(d) + " (got " + std::to_string(t.extents[d]) +
                        ", want " + std::to_string(op.dim_extent(ref.dims[d])) + ")");
  }
}

double apply_fn(ElemFn fn, const std::vector<double>& vals) {
  switch (fn) {
    case ElemFn::Relu: return vals[0] > 0 ? vals[0] : 0.0;
    case ElemFn::Id: return vals[0];
    case ElemFn::Add: return vals[0] + vals[1];
    case ElemFn::Mul: return vals[0] * vals[1];
    default: throw Error("bad elementwise fn");
  }
}

}  // namespace

TensorMap reference_execute(const ModelGraph& graph, const TensorMap& inputs) {
  TensorMap env = inputs;
  for (const auto& op : graph.operators) {
    for (const auto& in : op.inputs) {
      auto it = env.find(in.name);
      if (it == env.end()) throw VerifyError("missing input tensor '" + in.name + "'");
      check_shape(op, in, it->second);
    }
    DenseTensor out;
    out.dtype = op.output.dtype;
    for (const auto& im : op.output.dims) out.extents.push_back(op.dim_extent(im));
    out.data.assign(static_cast<size_t>(out.elems()), 0.0);

    const size_t n_axes = op.axes.size();
    std::vector<i64> idx(n_axes, 0);
    std::vector<const DenseTensor*> ins;
    for (const auto& in : op.inputs) ins.push_back(&env.at(in.name));

    // Plain nested loop over every axis index combination, declaration order.
    std::function<void(size_t)> walk = [&](size_t a) {
      if (a == n_axes) {
        auto gather = [&](const TensorRef& ref) {
          std::vector<i64> ti(ref.dims.size());
          for (size_t d = 0; d < ref.dims.size(); ++d) {
            i64 v = 0;
            for (int t : ref.dims[d].terms) v += idx[static_cast<size_t>(t)];
            ti[d] = v;
          }
          return ti;
        };
        if (op.kind == ExprKind::Elementwise) {
          std::vector<double> vals;
          for (size_t i = 0; i < ins.size(); ++i)
            vals.push_back(ins[i]->at(gather(op.inputs[i])));
          out.at(gather(op.output)) = apply_fn(op.fn, vals);
        } else {
          double prod = 1.0;
          for (size_t i = 0; i < ins.size(); ++i) prod *= ins[i]->at(gather(op.inputs[i]));
          out.at(gather(op.output)) += prod;
        }
        return;
      }
      for (idx[a] = 0; idx[a] < op.axes[a].extent; ++idx[a]) walk(a + 1);
      idx[a] = 0;
    };
    walk(0);
    env[op.output.name] = std::move(out);
  }
  TensorMap result;
  for (const auto& name : graph.graph_outputs) result[name] = env.at(name);
  if (result.empty() && !graph.operators.empty())
    result[graph.operators.back().output.name] = env.at(graph.operators.back().output.name);
  return result;
}

namespace {
constexpr char kMagic[6] = {'S', 'T', 'N', 'S', 'R', '1'};
}

void write_tensor(std::ostream& os, const DenseTensor& t) {
  os.write(kMagic, 6);
  std::uint8_t dt = t.dtype == Dtype::F32 ? 0 : 1;
  std::uint8_t rank = static_cast<std::uint8_t>(t.extents.size());
  os.write(reinterpret_cast<const char*>(&dt), 1);
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (i64 e : t.extents) os.write(reinterpret_cast<const char*>(&e), 8);
  for (double v : t.data) {
    float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
}

DenseTensor read_tensor(std::istream& is) {
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kMagic, 6) != 0)
    throw ParseError("bad tensor file header");
  std::uint8_t dt = 0, rank = 0;
  is.read(reinterpret_cast<char*>(&dt), 1);
  is.read(reinterpret_cast<char*>(&rank), 1);
  DenseTensor t;
  t.dtype = dt == 0 ? Dtype::F32 : Dtype::F16;
  t.extents.resize(rank);
  for (auto& e : t.extents) is.read(reinterpret_cast<char*>(&e), 8);
  t.data.resize(static_cast<size_t>(t.elems()));
  for (auto& v : t.data) {
    float f;
    is.read(reinterpret_cast<char*>(&f), 4);
    v = f;
  }
  if (!is) throw ParseError("truncated tensor file");
  return t;
}

void write_tensor_file(const std::string& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_tensor(os, t);
}

DenseTensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open tensor file '" + path + "'");
  return read_tensor(is);
}

double max_rel_error(const DenseTensor& got, const DenseTensor& want) {
  if (got.extents != want.extents) throw VerifyError("shape mismatch in comparison");
  double worst = 0;
  for (size_t i = 0; i < got.data.size(); ++i) {
    double denom = std::max(1.0, std::abs(want.data[i]));
    worst = std::max(worst, std::abs(got.data[i] - want.data[i]) / denom);
  }
  return worst;
}

}  // namespace shiftc
