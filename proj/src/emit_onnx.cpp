#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "certbench/emit.hpp"
#include "certbench/errors.hpp"
#include "certbench/net.hpp"

// ONNX serialization without a protobuf dependency.  The writer emits the
// wire format directly and the reader is a recursive-descent walker over the
// same subset; both use the field numbers of onnx.proto3:
//   ModelProto   ir_version=1  producer_name=2  producer_version=3
//                graph=7  opset_import=8 { domain=1  version=2 }
//   GraphProto   node=1  name=2  initializer=5  input=11  output=12
//   NodeProto    input=1  output=2  name=3  op_type=4  attribute=5
//   AttributeProto  name=1  f=2  i=3  ints=8  type=20   (INT=2, FLOAT=1,
//                                                        INTS=7)
//   TensorProto  dims=1  data_type=2  float_data=4  int64_data=7  name=8
//                raw_data=9  double_data=10   (FLOAT=1, INT64=7, DOUBLE=11)
//   ValueInfoProto name=1 type=2; TypeProto tensor_type=1 { elem_type=1,
//                shape=2 { dim=1 { dim_value=1 } } }

namespace certbench {
namespace {

constexpr int kDtFloat32 = 1;
constexpr int kDtInt64 = 7;
constexpr int kDtFloat64 = 11;

// ---- wire-format writer -----------------------------------------------------

struct Pb {
  std::string out;

  void raw_varint(std::uint64_t v) {
    do {
      unsigned char b = v & 0x7f;
      v >>= 7;
      if (v) b |= 0x80;
      out.push_back(static_cast<char>(b));
    } while (v);
  }
  void tag(int field, int wire) {
    raw_varint((static_cast<std::uint64_t>(field) << 3) | wire);
  }
  void vint(int field, std::uint64_t v) {
    tag(field, 0);
    raw_varint(v);
  }
  void sint(int field, std::int64_t v) {
    vint(field, static_cast<std::uint64_t>(v));
  }
  void str(int field, const std::string& s) {
    tag(field, 2);
    raw_varint(s.size());
    out += s;
  }
  void f32(int field, float v) {
    tag(field, 5);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    for (int b = 0; b < 4; ++b)
      out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  }
  void packed_ints(int field, const std::vector<std::int64_t>& v) {
    Pb body;
    for (std::int64_t x : v) body.raw_varint(static_cast<std::uint64_t>(x));
    str(field, body.out);
  }
};

void append_le64(std::string& out, std::uint64_t u) {
  for (int b = 0; b < 8; ++b)
    out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

std::string raw_doubles(const double* data, std::size_t n, bool f32) {
  std::string raw;
  if (f32) {
    raw.reserve(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const float f = static_cast<float>(data[i]);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      for (int b = 0; b < 4; ++b)
        raw.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
    }
  } else if constexpr (std::endian::native == std::endian::little) {
    raw.assign(reinterpret_cast<const char*>(data), 8 * n);
  } else {
    raw.reserve(8 * n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t u;
      std::memcpy(&u, &data[i], 8);
      append_le64(raw, u);
    }
  }
  return raw;
}

std::string tensor_msg(const std::string& name,
                       const std::vector<std::int64_t>& dims, int dtype,
                       const std::string& raw) {
  Pb t;
  for (std::int64_t d : dims) t.sint(1, d);
  t.vint(2, static_cast<std::uint64_t>(dtype));
  t.str(8, name);
  t.str(9, raw);
  return t.out;
}

std::string attr_int(const std::string& name, std::int64_t v) {
  Pb a;
  a.str(1, name);
  a.sint(3, v);
  a.vint(20, 2);  // INT
  return a.out;
}

std::string attr_float(const std::string& name, float v) {
  Pb a;
  a.str(1, name);
  a.f32(2, v);
  a.vint(20, 1);  // FLOAT
  return a.out;
}

std::string attr_ints(const std::string& name,
                      const std::vector<std::int64_t>& v) {
  Pb a;
  a.str(1, name);
  a.packed_ints(8, v);
  a.vint(20, 7);  // INTS
  return a.out;
}

std::string node_msg(const std::string& op, const std::string& name,
                     const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs,
                     const std::vector<std::string>& attrs) {
  Pb n;
  for (const auto& s : inputs) n.str(1, s);
  for (const auto& s : outputs) n.str(2, s);
  n.str(3, name);
  n.str(4, op);
  for (const auto& a : attrs) n.str(5, a);
  return n.out;
}

std::string value_info_msg(const std::string& name, int elem_type,
                           const std::vector<std::int64_t>& dims) {
  Pb shape;
  for (std::int64_t d : dims) {
    Pb dim;
    dim.sint(1, d);
    shape.str(1, dim.out);
  }
  Pb tt;
  tt.vint(1, static_cast<std::uint64_t>(elem_type));
  tt.str(2, shape.out);
  Pb tp;
  tp.str(1, tt.out);
  Pb vi;
  vi.str(1, name);
  vi.str(2, tp.out);
  return vi.out;
}

// ---- exporter ----------------------------------------------------------------

std::vector<std::int64_t> canonical_dims(const Shape& s) {
  switch (s.size()) {
    case 1: return {1, s[0]};
    case 2: return {s[0], s[1]};
    case 3: return {1, s[0], s[1], s[2]};
    default:
      throw StructuralError("onnx export: unsupported tensor rank " +
                            std::to_string(s.size()));
  }
}

struct Emitter {
  const Network& net;
  const bool f32;
  const int dtype;

  std::vector<std::string> nodes;
  std::vector<std::string> inits;
  int values = 0;
  std::string cur = "input";
  std::vector<std::int64_t> cur_dims;

  Emitter(const Network& n, bool downcast)
      : net(n), f32(downcast), dtype(downcast ? kDtFloat32 : kDtFloat64) {}

  std::string fresh() { return "t" + std::to_string(values++); }

  std::string add_floats(const std::string& name,
                         const std::vector<std::int64_t>& dims,
                         const double* data, std::size_t n) {
    inits.push_back(tensor_msg(name, dims, dtype, raw_doubles(data, n, f32)));
    return name;
  }

  std::string add_i64(const std::string& name,
                      const std::vector<std::int64_t>& values64) {
    std::string raw;
    for (std::int64_t v : values64)
      append_le64(raw, static_cast<std::uint64_t>(v));
    inits.push_back(tensor_msg(
        name, {static_cast<std::int64_t>(values64.size())}, kDtInt64, raw));
    return name;
  }

  void emit(const std::string& op, const std::vector<std::string>& in,
            const std::string& out, const std::vector<std::string>& attrs = {}) {
    nodes.push_back(
        node_msg(op, "n" + std::to_string(nodes.size()), in, {out}, attrs));
  }

  std::string pname(int layer, const char* suffix) {
    return "l" + std::to_string(layer) + "_" + suffix;
  }

  void reshape_to(const std::vector<std::int64_t>& want, int layer) {
    if (cur_dims == want) return;
    const std::string shp = add_i64(pname(layer, "shape"), want);
    const std::string o = fresh();
    emit("Reshape", {cur, shp}, o);
    cur = o;
    cur_dims = want;
  }
};

}  // namespace

std::string onnx_bytes(const Network& net, const OnnxOptions& opts) {
  net.validate();
  const auto shapes = net.layer_shapes();
  const int classes = net.num_classes();

  Emitter em(net, opts.downcast_f32);
  em.cur_dims = canonical_dims(net.input_shape);
  const std::vector<std::int64_t> input_dims = em.cur_dims;

  Shape in_shape = net.input_shape;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const int li = static_cast<int>(l);
    const Layer& layer = net.layers[l];
    const Shape& out_shape = shapes[l];

    if (const auto* a = std::get_if<Affine>(&layer)) {
      em.reshape_to({1, a->w.cols}, li);
      const std::string w =
          em.add_floats(em.pname(li, "w"), {a->w.rows, a->w.cols},
                        a->w.a.data(), a->w.a.size());
      const std::string b = em.add_floats(em.pname(li, "b"), {a->w.rows},
                                          a->b.data(), a->b.size());
      const std::string o = em.fresh();
      em.emit("Gemm", {em.cur, w, b}, o,
              {attr_float("alpha", 1.0f), attr_float("beta", 1.0f),
               attr_int("transA", 0), attr_int("transB", 1)});
      em.cur = o;
      em.cur_dims = {1, a->w.rows};
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      em.reshape_to({1, in_shape[0], in_shape[1], in_shape[2]}, li);
      const std::string w = em.add_floats(
          em.pname(li, "w"), {c->out_ch, c->in_ch, c->kh, c->kw},
          c->filters.data(), c->filters.size());
      const std::string b = em.add_floats(em.pname(li, "b"), {c->out_ch},
                                          c->bias.data(), c->bias.size());
      const std::string o = em.fresh();
      em.emit("Conv", {em.cur, w, b}, o,
              {attr_ints("dilations", {1, 1}), attr_int("group", 1),
               attr_ints("kernel_shape", {c->kh, c->kw}),
               attr_ints("pads", {c->pad, c->pad, c->pad, c->pad}),
               attr_ints("strides", {c->stride, c->stride})});
      em.cur = o;
      em.cur_dims = {1, out_shape[0], out_shape[1], out_shape[2]};
    } else if (std::holds_alternative<Relu>(layer)) {
      const std::string o = em.fresh();
      em.emit("Relu", {em.cur}, o);
      em.cur = o;
    } else if (const auto* mp = std::get_if<MonomialPower>(&layer)) {
      const double e = static_cast<double>(mp->degree);
      const std::string ei = em.add_floats(em.pname(li, "exp"), {}, &e, 1);
      const std::string o = em.fresh();
      em.emit("Pow", {em.cur, ei}, o);
      em.cur = o;
    } else if (std::holds_alternative<RowSoftmax>(layer)) {
      em.reshape_to({in_shape[0], in_shape[1]}, li);
      const std::string o = em.fresh();
      em.emit("Softmax", {em.cur}, o, {attr_int("axis", -1)});
      em.cur = o;
    } else if (const auto* bs = std::get_if<BilinearScore>(&layer)) {
      em.reshape_to({in_shape[0], in_shape[1]}, li);
      const std::string m =
          em.add_floats(em.pname(li, "m"), {bs->m.rows, bs->m.cols},
                        bs->m.a.data(), bs->m.a.size());
      const std::string xm = em.fresh();
      em.emit("MatMul", {em.cur, m}, xm);
      const std::string xt = em.fresh();
      em.emit("Transpose", {em.cur}, xt, {attr_ints("perm", {1, 0})});
      const std::string o = em.fresh();
      em.emit("MatMul", {xm, xt}, o);
      em.cur = o;
      em.cur_dims = {in_shape[0], in_shape[0]};
    } else if (const auto* la = std::get_if<LinearAttnScore>(&layer)) {
      em.reshape_to({in_shape[0], in_shape[1]}, li);
      auto branch = [&](const Mat& proj, const char* wn, const char* zn) {
        const std::string w = em.add_floats(
            em.pname(li, wn), {proj.rows, proj.cols}, proj.a.data(),
            proj.a.size());
        const std::string raw = em.fresh();
        em.emit("MatMul", {em.cur, w}, raw);
        const std::string pos = em.fresh();
        em.emit("Relu", {raw}, pos);
        const std::string z = em.add_floats(em.pname(li, zn), {}, &la->zeta, 1);
        const std::string shifted = em.fresh();
        em.emit("Add", {pos, z}, shifted);
        return shifted;
      };
      const std::string q = branch(la->wq, "wq", "zq");
      const std::string k = branch(la->wk, "wk", "zk");
      const std::string kt = em.fresh();
      em.emit("Transpose", {k}, kt, {attr_ints("perm", {1, 0})});
      const std::string o = em.fresh();
      em.emit("MatMul", {q, kt}, o);
      em.cur = o;
      em.cur_dims = {in_shape[0], in_shape[0]};
    } else if (std::holds_alternative<RowNormalize>(layer)) {
      em.reshape_to({in_shape[0], in_shape[1]}, li);
      const std::string axes = em.add_i64(em.pname(li, "axes"), {-1});
      const std::string sums = em.fresh();
      em.emit("ReduceSum", {em.cur, axes}, sums, {attr_int("keepdims", 1)});
      const std::string o = em.fresh();
      em.emit("Div", {em.cur, sums}, o);
      em.cur = o;
    } else if (const auto* vp = std::get_if<ValueProject>(&layer)) {
      // The value side reads the *network* input, which for these nets is
      // already the (n,dt) token matrix.
      if (net.input_shape.size() != 2)
        throw StructuralError(
            "onnx export: value projection needs a rank-2 network input");
      const std::string wv =
          em.add_floats(em.pname(li, "wv"), {vp->wv.rows, vp->wv.cols},
                        vp->wv.a.data(), vp->wv.a.size());
      const std::string v = em.fresh();
      em.emit("MatMul", {"input", wv}, v);
      const std::string o = em.fresh();
      em.emit("MatMul", {em.cur, v}, o);
      em.cur = o;
      em.cur_dims = {in_shape[0], vp->wv.cols};
    } else if (const auto* rs = std::get_if<Reshape>(&layer)) {
      em.reshape_to(canonical_dims(rs->target), li);
    } else {
      throw StructuralError("onnx export: unsupported layer kind");
    }
    in_shape = out_shape;
  }

  em.reshape_to({1, classes}, static_cast<int>(net.layers.size()));
  if (em.nodes.empty()) {
    // Degenerate zero-layer network: emit an explicit no-op reshape so the
    // graph output is produced by a node rather than aliasing the input.
    const std::string shp = em.add_i64("l0_shape", em.cur_dims);
    const std::string o = em.fresh();
    em.emit("Reshape", {em.cur, shp}, o);
    em.cur = o;
  }

  Pb graph;
  for (const auto& n : em.nodes) graph.str(1, n);
  graph.str(2, "net");
  for (const auto& t : em.inits) graph.str(5, t);
  graph.str(11, value_info_msg("input", em.dtype, input_dims));
  graph.str(12, value_info_msg(em.cur, em.dtype, em.cur_dims));

  Pb opset;
  opset.str(1, "");
  opset.vint(2, 13);

  Pb model;
  model.vint(1, 7);  // ir_version
  model.str(2, kToolName);
  model.str(3, kToolVersion);
  model.str(7, graph.out);
  model.str(8, opset.out);
  return model.out;
}

std::size_t write_onnx(const Network& net, const std::string& path,
                       const OnnxOptions& opts) {
  const std::string bytes = onnx_bytes(net, opts);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.good()) throw ResourceError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out.good()) throw ResourceError("short write: " + path);
  return bytes.size();
}

// ---- wire-format reader -------------------------------------------------------

namespace {

struct Cursor {
  const unsigned char* p;
  std::size_t n;
  std::size_t base;  // absolute offset of p[0] within the file
  std::size_t i = 0;

  bool done() const { return i >= n; }
  std::size_t abs() const { return base + i; }

  [[noreturn]] void die(const std::string& what) const {
    throw ParseError("onnx parse error at byte " + std::to_string(abs()) +
                     ": " + what);
  }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    int shift = 0;
    for (;;) {
      if (i >= n) die("truncated varint");
      const unsigned char b = p[i++];
      if (shift >= 64) die("varint exceeds 64 bits");
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
      shift += 7;
    }
  }

  void tag(int* field, int* wire) {
    const std::uint64_t k = varint();
    *field = static_cast<int>(k >> 3);
    *wire = static_cast<int>(k & 7);
    if (*field <= 0) die("zero field number");
  }

  Cursor sub() {
    const std::uint64_t len = varint();
    if (len > n - i) die("length prefix runs past the end of the buffer");
    Cursor c{p + i, static_cast<std::size_t>(len), base + i, 0};
    i += static_cast<std::size_t>(len);
    return c;
  }

  std::string str() {
    Cursor c = sub();
    return std::string(reinterpret_cast<const char*>(c.p), c.n);
  }

  std::uint64_t fixed64() {
    if (n - i < 8) die("truncated fixed64");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
      v |= static_cast<std::uint64_t>(p[i + b]) << (8 * b);
    i += 8;
    return v;
  }

  std::uint32_t fixed32() {
    if (n - i < 4) die("truncated fixed32");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
      v |= static_cast<std::uint32_t>(p[i + b]) << (8 * b);
    i += 4;
    return v;
  }

  void skip(int wire) {
    switch (wire) {
      case 0: varint(); return;
      case 1: fixed64(); return;
      case 2: sub(); return;
      case 5: fixed32(); return;
      default: die("unsupported wire type " + std::to_string(wire));
    }
  }
};

struct PTensor {
  std::string name;
  int dtype = 0;
  std::vector<std::int64_t> dims;
  Vec dbl;                       // decoded float payload
  std::vector<std::int64_t> i64;  // decoded int64 payload
};

struct PAttr {
  std::string name;
  std::int64_t i = 0;
  float f = 0.0f;
  std::vector<std::int64_t> ints;
  bool has_i = false;
};

struct PNode {
  std::string op;
  std::vector<std::string> in, out;
  std::vector<PAttr> attrs;

  const PAttr* attr(const std::string& name) const {
    for (const auto& a : attrs)
      if (a.name == name) return &a;
    return nullptr;
  }
  std::int64_t attr_or(const std::string& name, std::int64_t dflt) const {
    const PAttr* a = attr(name);
    return a && a->has_i ? a->i : dflt;
  }
};

struct PValueInfo {
  std::string name;
  std::vector<std::int64_t> dims;
};

struct PGraph {
  std::vector<PNode> nodes;
  std::map<std::string, PTensor> inits;
  std::vector<PValueInfo> inputs, outputs;
};

void read_rep_i64(Cursor& c, int wire, std::vector<std::int64_t>* out) {
  if (wire == 0) {
    out->push_back(static_cast<std::int64_t>(c.varint()));
  } else if (wire == 2) {
    Cursor s = c.sub();
    while (!s.done())
      out->push_back(static_cast<std::int64_t>(s.varint()));
  } else {
    c.die("repeated integer field with unexpected wire type");
  }
}

double f64_bits(std::uint64_t u) {
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

float f32_bits(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

PTensor parse_tensor(Cursor c) {
  PTensor t;
  std::string raw;
  while (!c.done()) {
    int f, w;
    c.tag(&f, &w);
    switch (f) {
      case 1: read_rep_i64(c, w, &t.dims); break;
      case 2: t.dtype = static_cast<int>(c.varint()); break;
      case 4:
        if (w == 2) {
          Cursor s = c.sub();
          while (!s.done()) t.dbl.push_back(f32_bits(s.fixed32()));
        } else {
          t.dbl.push_back(f32_bits(c.fixed32()));
        }
        break;
      case 7: read_rep_i64(c, w, &t.i64); break;
      case 8: t.name = c.str(); break;
      case 9: raw = c.str(); break;
      case 10:
        if (w == 2) {
          Cursor s = c.sub();
          while (!s.done()) t.dbl.push_back(f64_bits(s.fixed64()));
        } else {
          t.dbl.push_back(f64_bits(c.fixed64()));
        }
        break;
      default: c.skip(w); break;
    }
  }
  if (!raw.empty()) {
    const auto* u = reinterpret_cast<const unsigned char*>(raw.data());
    if (t.dtype == kDtFloat64) {
      if (raw.size() % 8) c.die("raw float64 payload size not divisible by 8");
      t.dbl.resize(raw.size() / 8);
      for (std::size_t k = 0; k < t.dbl.size(); ++k) {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
          v |= static_cast<std::uint64_t>(u[8 * k + b]) << (8 * b);
        t.dbl[k] = f64_bits(v);
      }
    } else if (t.dtype == kDtFloat32) {
      if (raw.size() % 4) c.die("raw float32 payload size not divisible by 4");
      t.dbl.resize(raw.size() / 4);
      for (std::size_t k = 0; k < t.dbl.size(); ++k) {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
          v |= static_cast<std::uint32_t>(u[4 * k + b]) << (8 * b);
        t.dbl[k] = f32_bits(v);
      }
    } else if (t.dtype == kDtInt64) {
      if (raw.size() % 8) c.die("raw int64 payload size not divisible by 8");
      t.i64.resize(raw.size() / 8);
      for (std::size_t k = 0; k < t.i64.size(); ++k) {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
          v |= static_cast<std::uint64_t>(u[8 * k + b]) << (8 * b);
        t.i64[k] = static_cast<std::int64_t>(v);
      }
    } else {
      c.die("initializer with unsupported data type " +
            std::to_string(t.dtype));
    }
  }
  return t;
}

PAttr parse_attr(Cursor c) {
  PAttr a;
  while (!c.done()) {
    int f, w;
    c.tag(&f, &w);
    switch (f) {
      case 1: a.name = c.str(); break;
      case 2: a.f = f32_bits(c.fixed32()); break;
      case 3:
        a.i = static_cast<std::int64_t>(c.varint());
        a.has_i = true;
        break;
      case 8: read_rep_i64(c, w, &a.ints); break;
      default: c.skip(w); break;
    }
  }
  return a;
}

PNode parse_node(Cursor c) {
  PNode nd;
  while (!c.done()) {
    int f, w;
    c.tag(&f, &w);
    switch (f) {
      case 1: nd.in.push_back(c.str()); break;
      case 2: nd.out.push_back(c.str()); break;
      case 4: nd.op = c.str(); break;
      case 5: nd.attrs.push_back(parse_attr(c.sub())); break;
      default: c.skip(w); break;
    }
  }
  if (nd.op.empty()) c.die("node without op_type");
  if (nd.out.empty()) c.die("node without outputs");
  return nd;
}

PValueInfo parse_value_info(Cursor c) {
  PValueInfo vi;
  while (!c.done()) {
    int f, w;
    c.tag(&f, &w);
    if (f == 1) {
      vi.name = c.str();
    } else if (f == 2) {
      Cursor tp = c.sub();
      while (!tp.done()) {
        int tf, tw;
        tp.tag(&tf, &tw);
        if (tf != 1) {
          tp.skip(tw);
          continue;
        }
        Cursor tt = tp.sub();
        while (!tt.done()) {
          int sf, sw;
          tt.tag(&sf, &sw);
          if (sf != 2) {
            tt.skip(sw);
            continue;
          }
          Cursor sh = tt.sub();
          while (!sh.done()) {
            int df, dw;
            sh.tag(&df, &dw);
            if (df != 1) {
              sh.skip(dw);
              continue;
            }
            Cursor dim = sh.sub();
            std::int64_t value = -1;
            while (!dim.done()) {
              int vf, vw;
              dim.tag(&vf, &vw);
              if (vf == 1)
                value = static_cast<std::int64_t>(dim.varint());
              else
                dim.skip(vw);
            }
            vi.dims.push_back(value);
          }
        }
      }
    } else {
      c.skip(w);
    }
  }
  return vi;
}

PGraph parse_graph(Cursor c) {
  PGraph g;
  while (!c.done()) {
    int f, w;
    c.tag(&f, &w);
    switch (f) {
      case 1: g.nodes.push_back(parse_node(c.sub())); break;
      case 5: {
        PTensor t = parse_tensor(c.sub());
        g.inits[t.name] = std::move(t);
        break;
      }
      case 11: g.inputs.push_back(parse_value_info(c.sub())); break;
      case 12: g.outputs.push_back(parse_value_info(c.sub())); break;
      default: c.skip(w); break;
    }
  }
  return g;
}

// ---- reconstruction ------------------------------------------------------------

[[noreturn]] void sdie(const std::string& what) { throw StructuralError(what); }

Shape internal_shape(const std::vector<std::int64_t>& dims,
                     const char* what) {
  for (std::int64_t d : dims)
    if (d < 1)
      sdie(std::string("onnx import: ") + what +
           " has a dynamic or nonpositive dimension");
  std::vector<std::int64_t> v = dims;
  if (v.size() == 2 && v[0] == 1) v.erase(v.begin());
  else if (v.size() == 4 && v[0] == 1) v.erase(v.begin());
  if (v.size() > 3)
    sdie(std::string("onnx import: ") + what + " has unsupported rank");
  Shape s;
  for (std::int64_t d : v) s.push_back(static_cast<int>(d));
  return s;
}

struct Rebuilder {
  const PGraph& g;
  std::string input_name;

  const PTensor& init(const std::string& name) const {
    auto it = g.inits.find(name);
    if (it == g.inits.end())
      sdie("onnx import: expected an initializer named '" + name + "'");
    return it->second;
  }
  bool is_init(const std::string& name) const {
    return g.inits.count(name) != 0;
  }

  const Vec& floats(const std::string& name) const {
    const PTensor& t = init(name);
    if (t.dtype != kDtFloat64 && t.dtype != kDtFloat32)
      sdie("onnx import: tensor '" + name + "' is not a float tensor");
    return t.dbl;
  }

  Mat mat(const std::string& name) const {
    const PTensor& t = init(name);
    if (t.dims.size() != 2)
      sdie("onnx import: tensor '" + name + "' is not a matrix");
    Mat m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    if (t.dbl.size() != m.a.size())
      sdie("onnx import: tensor '" + name + "' payload size mismatch");
    m.a = t.dbl;
    return m;
  }

  double scalar(const std::string& name) const {
    const Vec& v = floats(name);
    if (v.size() != 1)
      sdie("onnx import: tensor '" + name + "' is not a scalar");
    return v[0];
  }
};

bool perm_is_swap(const PNode& nd) {
  const PAttr* a = nd.attr("perm");
  if (!a) return true;  // default permutation reverses a rank-2 tensor
  return a->ints == std::vector<std::int64_t>{1, 0};
}

}  // namespace

Network parse_onnx(const std::string& bytes) {
  Cursor top{reinterpret_cast<const unsigned char*>(bytes.data()),
             bytes.size(), 0, 0};
  bool saw_graph = false;
  PGraph g;
  while (!top.done()) {
    int f, w;
    top.tag(&f, &w);
    if (f == 7) {
      g = parse_graph(top.sub());
      saw_graph = true;
    } else {
      top.skip(w);
    }
  }
  if (!saw_graph)
    throw ParseError("onnx parse error at byte " + std::to_string(bytes.size()) +
                     ": model has no graph");

  if (g.inputs.size() != 1) sdie("onnx import: expected exactly one input");
  if (g.outputs.size() != 1) sdie("onnx import: expected exactly one output");

  Network net;
  net.input_shape = internal_shape(g.inputs[0].dims, "graph input");

  Rebuilder rb{g, g.inputs[0].name};
  std::string cur = rb.input_name;

  const auto& nodes = g.nodes;
  std::size_t i = 0;
  auto expect_chain = [&](const PNode& nd) {
    if (nd.in.empty() || nd.in[0] != cur)
      sdie("onnx import: node '" + nd.op + "' does not continue the chain");
  };

  while (i < nodes.size()) {
    const PNode& nd = nodes[i];
    if (nd.op == "Reshape") {
      expect_chain(nd);
      if (nd.in.size() != 2) sdie("onnx import: reshape needs a shape input");
      const PTensor& shp = rb.init(nd.in[1]);
      net.layers.push_back(Reshape{internal_shape(shp.i64, "reshape target")});
      cur = nd.out[0];
      ++i;
    } else if (nd.op == "Gemm") {
      expect_chain(nd);
      if (nd.in.size() < 2) sdie("onnx import: gemm needs a weight input");
      if (nd.attr_or("transA", 0) != 0)
        sdie("onnx import: gemm with transA is unsupported");
      const PAttr* alpha = nd.attr("alpha");
      const PAttr* beta = nd.attr("beta");
      if ((alpha && alpha->f != 1.0f) || (beta && beta->f != 1.0f))
        sdie("onnx import: gemm with scaling is unsupported");
      Mat w = rb.mat(nd.in[1]);
      if (nd.attr_or("transB", 0) == 0) {
        Mat t(w.cols, w.rows);
        for (int r = 0; r < w.rows; ++r)
          for (int c = 0; c < w.cols; ++c) t.at(c, r) = w.at(r, c);
        w = std::move(t);
      }
      Vec b(static_cast<std::size_t>(w.rows), 0.0);
      if (nd.in.size() >= 3) {
        b = rb.floats(nd.in[2]);
        if (static_cast<int>(b.size()) != w.rows)
          sdie("onnx import: gemm bias length mismatch");
      }
      net.layers.push_back(Affine{std::move(w), std::move(b)});
      cur = nd.out[0];
      ++i;
    } else if (nd.op == "Conv") {
      expect_chain(nd);
      if (nd.in.size() < 2) sdie("onnx import: conv needs a weight input");
      const PTensor& wt = rb.init(nd.in[1]);
      if (wt.dims.size() != 4) sdie("onnx import: conv weight must be rank 4");
      Conv2d c;
      c.out_ch = static_cast<int>(wt.dims[0]);
      c.in_ch = static_cast<int>(wt.dims[1]);
      c.kh = static_cast<int>(wt.dims[2]);
      c.kw = static_cast<int>(wt.dims[3]);
      c.filters = wt.dbl;
      if (nd.in.size() >= 3) {
        c.bias = rb.floats(nd.in[2]);
      } else {
        c.bias.assign(static_cast<std::size_t>(c.out_ch), 0.0);
      }
      if (nd.attr_or("group", 1) != 1)
        sdie("onnx import: grouped conv is unsupported");
      if (const PAttr* d = nd.attr("dilations"))
        for (std::int64_t v : d->ints)
          if (v != 1) sdie("onnx import: dilated conv is unsupported");
      std::int64_t stride = 1;
      if (const PAttr* s = nd.attr("strides")) {
        if (s->ints.empty()) sdie("onnx import: empty conv strides");
        stride = s->ints[0];
        for (std::int64_t v : s->ints)
          if (v != stride) sdie("onnx import: anisotropic conv stride");
      }
      std::int64_t pad = 0;
      if (const PAttr* p = nd.attr("pads")) {
        if (p->ints.empty()) sdie("onnx import: empty conv pads");
        pad = p->ints[0];
        for (std::int64_t v : p->ints)
          if (v != pad) sdie("onnx import: asymmetric conv padding");
      }
      c.stride = static_cast<int>(stride);
      c.pad = static_cast<int>(pad);
      net.layers.push_back(std::move(c));
      cur = nd.out[0];
      ++i;
    } else if (nd.op == "Relu") {
      expect_chain(nd);
      net.layers.push_back(Relu{});
      cur = nd.out[0];
      ++i;
    } else if (nd.op == "Pow") {
      expect_chain(nd);
      if (nd.in.size() != 2) sdie("onnx import: pow needs an exponent input");
      const double e = rb.scalar(nd.in[1]);
      const double r = std::llround(e);
      if (!(e >= 1.0) || std::abs(e - r) > 1e-9)
        sdie("onnx import: pow exponent must be a positive integer");
      net.layers.push_back(MonomialPower{static_cast<int>(r)});
      cur = nd.out[0];
      ++i;
    } else if (nd.op == "Softmax") {
      expect_chain(nd);
      const std::int64_t axis = nd.attr_or("axis", -1);
      if (axis != -1 && axis != 1)
        sdie("onnx import: softmax must act on the last axis");
      net.layers.push_back(RowSoftmax{});
      cur = nd.out[0];
      ++i;
    } else if (nd.op == "ReduceSum") {
      expect_chain(nd);
      if (nd.in.size() != 2) sdie("onnx import: reduce-sum needs an axes input");
      const PTensor& ax = rb.init(nd.in[1]);
      if (ax.i64.size() != 1 || (ax.i64[0] != -1 && ax.i64[0] != 1))
        sdie("onnx import: reduce-sum must reduce the last axis");
      if (nd.attr_or("keepdims", 1) != 1)
        sdie("onnx import: reduce-sum must keep dimensions");
      if (i + 1 >= nodes.size() || nodes[i + 1].op != "Div")
        sdie("onnx import: reduce-sum must feed a division");
      const PNode& dv = nodes[i + 1];
      if (dv.in.size() != 2 || dv.in[0] != cur || dv.in[1] != nd.out[0])
        sdie("onnx import: row-normalize wiring mismatch");
      net.layers.push_back(RowNormalize{});
      cur = dv.out[0];
      i += 2;
    } else if (nd.op == "MatMul") {
      const bool attn =
          i + 7 < nodes.size() && nd.in.size() == 2 && nd.in[0] == cur &&
          rb.is_init(nd.in[1]) && nodes[i + 1].op == "Relu" &&
          nodes[i + 2].op == "Add" && nodes[i + 3].op == "MatMul" &&
          nodes[i + 4].op == "Relu" && nodes[i + 5].op == "Add" &&
          nodes[i + 6].op == "Transpose" && nodes[i + 7].op == "MatMul";
      const bool bilinear =
          !attn && i + 2 < nodes.size() && nd.in.size() == 2 &&
          nd.in[0] == cur && rb.is_init(nd.in[1]) &&
          nodes[i + 1].op == "Transpose" && nodes[i + 2].op == "MatMul";
      const bool project =
          !attn && !bilinear && i + 1 < nodes.size() && nd.in.size() == 2 &&
          nd.in[0] == rb.input_name && rb.is_init(nd.in[1]) &&
          nodes[i + 1].op == "MatMul";
      if (attn) {
        const PNode& rq = nodes[i + 1];
        const PNode& aq = nodes[i + 2];
        const PNode& mk = nodes[i + 3];
        const PNode& rk = nodes[i + 4];
        const PNode& ak = nodes[i + 5];
        const PNode& tr = nodes[i + 6];
        const PNode& fin = nodes[i + 7];
        const bool wired =
            rq.in.size() == 1 && rq.in[0] == nd.out[0] &&
            aq.in.size() == 2 && aq.in[0] == rq.out[0] &&
            rb.is_init(aq.in[1]) && mk.in.size() == 2 && mk.in[0] == cur &&
            rb.is_init(mk.in[1]) && rk.in.size() == 1 &&
            rk.in[0] == mk.out[0] && ak.in.size() == 2 &&
            ak.in[0] == rk.out[0] && rb.is_init(ak.in[1]) &&
            tr.in.size() == 1 && tr.in[0] == ak.out[0] && perm_is_swap(tr) &&
            fin.in.size() == 2 && fin.in[0] == aq.out[0] &&
            fin.in[1] == tr.out[0];
        if (!wired) sdie("onnx import: attention score wiring mismatch");
        LinearAttnScore la;
        la.wq = rb.mat(nd.in[1]);
        la.wk = rb.mat(mk.in[1]);
        la.zeta = rb.scalar(aq.in[1]);
        if (rb.scalar(ak.in[1]) != la.zeta)
          sdie("onnx import: attention offsets disagree between branches");
        net.layers.push_back(std::move(la));
        cur = fin.out[0];
        i += 8;
      } else if (bilinear) {
        const PNode& tr = nodes[i + 1];
        const PNode& fin = nodes[i + 2];
        const bool wired = tr.in.size() == 1 && tr.in[0] == cur &&
                           perm_is_swap(tr) && fin.in.size() == 2 &&
                           fin.in[0] == nd.out[0] && fin.in[1] == tr.out[0];
        if (!wired) sdie("onnx import: bilinear score wiring mismatch");
        net.layers.push_back(BilinearScore{rb.mat(nd.in[1])});
        cur = fin.out[0];
        i += 3;
      } else if (project) {
        const PNode& fin = nodes[i + 1];
        const bool wired = fin.in.size() == 2 && fin.in[0] == cur &&
                           fin.in[1] == nd.out[0];
        if (!wired) sdie("onnx import: value projection wiring mismatch");
        net.layers.push_back(ValueProject{rb.mat(nd.in[1])});
        cur = fin.out[0];
        i += 2;
      } else {
        sdie("onnx import: unsupported matmul composition");
      }
    } else {
      sdie("onnx import: unsupported operator '" + nd.op + "'");
    }
  }

  if (cur != g.outputs[0].name)
    sdie("onnx import: graph output is not the end of the layer chain");
  net.validate();
  return net;
}

Network read_back(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ParseError("cannot open onnx file: " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return parse_onnx(bytes);
}

}  // namespace certbench
