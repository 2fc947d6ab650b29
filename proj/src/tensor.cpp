#include "crl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crl {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument("shape mismatch in " + op + ": " + shape_str(a) + " vs " +
                              shape_str(b));
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a) {
  throw std::invalid_argument("bad shape in " + op + ": " + shape_str(a));
}

// True when b may broadcast across the leading dims of a (b is a suffix of a).
bool suffix_of(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

std::vector<double> sum_to_suffix(const std::vector<double>& g, std::int64_t nb) {
  std::vector<double> out(static_cast<std::size_t>(nb), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) out[i % nb] += g[i];
  return out;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (numel(shape_) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape_));
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), 0.0));
}

Tensor Tensor::full(const Shape& shape, double v) {
  return Tensor(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), v));
}

const std::vector<double>& Tensor::data() const {
  static const std::vector<double> kEmpty;
  return data_ ? *data_ : kEmpty;
}

double Tensor::value() const {
  if (size() != 1) throw std::invalid_argument("value() needs a single-element tensor, got " +
                                               shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

const Tensor& GradientMap::at(const Tensor& leaf) const { return at(leaf.node_id()); }

const Tensor& GradientMap::at(int node_id) const {
  auto it = grads_.find(node_id);
  if (it == grads_.end())
    throw std::invalid_argument("no gradient recorded for node " + std::to_string(node_id));
  return it->second;
}

Tensor Tape::var(const Tensor& value) {
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.shape_, {}, true, nullptr});
  return t;
}

void Tape::accumulate(int node, const std::vector<double>& g) {
  auto& slot = slots_[static_cast<std::size_t>(node)];
  if (slot.empty()) {
    slot = g;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
  }
}

void detail_accumulate(Tape& t, int node, const std::vector<double>& g) {
  t.accumulate(node, g);
}

GradientMap Tape::backward(const Tensor& root) {
  if (root.size() != 1)
    throw std::invalid_argument("backward root must be scalar, got " + shape_str(root.shape()));
  if (root.tape() != this || root.node_id() < 0)
    throw std::invalid_argument("backward root is not attached to this tape");

  slots_.assign(nodes_.size(), {});
  slots_[static_cast<std::size_t>(root.node_id())] = {1.0};

  for (int i = root.node_id(); i >= 0; --i) {
    const auto& slot = slots_[static_cast<std::size_t>(i)];
    if (slot.empty()) continue;
    const Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.backward) node.backward(slot, *this);
  }

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf && !slots_[i].empty())
      out.grads_.emplace(static_cast<int>(i), Tensor(nodes_[i].shape, slots_[i]));
  }
  slots_.clear();
  return out;
}

Tensor record_op(Tape* tape, Tensor value, std::vector<int> input_nodes,
                 std::function<void(const std::vector<double>&, Tape&)> backward) {
  value.tape_ = tape;
  value.node_ = static_cast<int>(tape->nodes_.size());
  tape->nodes_.push_back(Tape::Node{value.shape_, std::move(input_nodes), false,
                                    std::move(backward)});
  return value;
}

namespace {

Tape* joint_tape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape())
    throw std::invalid_argument(op + ": operands live on different tapes");
  return a.tape() ? a.tape() : b.tape();
}

// Shared driver for elementwise binaries with right-suffix broadcast.
Tensor binary_op(const std::string& op, const Tensor& a, const Tensor& b,
                 const std::function<double(double, double)>& fwd,
                 const std::function<double(double, double, double)>& da,
                 const std::function<double(double, double, double)>& db) {
  if (!suffix_of(a.shape(), b.shape())) shape_error(op, a.shape(), b.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  const std::int64_t nb = b.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % nb]);

  Tensor result(a.shape(), std::move(out));
  Tape* tape = joint_tape(op, a, b);
  if (!tape) return result;

  int an = a.node_id(), bn = b.node_id();
  Tensor ac = a.detached(), bc = b.detached();
  return record_op(tape, result, {an, bn},
                   [an, bn, ac, bc, nb, da, db](const std::vector<double>& g, Tape& t) {
                     const auto& av = ac.data();
                     const auto& bv = bc.data();
                     if (an >= 0) {
                       std::vector<double> ga(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] = g[i] * da(av[i], bv[i % nb], 0.0);
                       detail_accumulate(t, an, ga);
                     }
                     if (bn >= 0) {
                       std::vector<double> gb(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gb[i] = g[i] * db(av[i], bv[i % nb], 0.0);
                       detail_accumulate(t, bn, sum_to_suffix(gb, nb));
                     }
                   });
}

Tensor unary_op(const std::string& op, const Tensor& x,
                const std::function<double(double)>& fwd,
                const std::function<double(double, double)>& dfdx_from_x_y) {
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);

  Tensor result(x.shape(), std::move(out));
  if (!x.tape()) return result;

  int xn = x.node_id();
  Tensor xc = x.detached();
  Tensor yc = result;
  return record_op(x.tape(), result, {xn},
                   [xn, xc, yc, dfdx_from_x_y](const std::vector<double>& g, Tape& t) {
                     if (xn < 0) return;
                     const auto& xv = xc.data();
                     const auto& yv = yc.data();
                     std::vector<double> gx(g.size());
                     for (std::size_t i = 0; i < g.size(); ++i)
                       gx[i] = g[i] * dfdx_from_x_y(xv[i], yv[i]);
                     detail_accumulate(t, xn, gx);
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double, double) { return 1.0; },
                   [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double, double) { return 1.0; },
                   [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double, double y, double) { return y; },
                   [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data())
    if (v == 0.0) throw std::domain_error("div: zero divisor, shapes " + shape_str(a.shape()) +
                                          " / " + shape_str(b.shape()));
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](double, double y, double) { return 1.0 / y; },
                   [](double x, double y, double) { return -x / (y * y); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    shape_error("matmul", a.shape(), b.shape());
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] += aip * bv[static_cast<std::size_t>(p) * n + j];
    }

  Tensor result({m, n}, std::move(out));
  Tape* tape = joint_tape("matmul", a, b);
  if (!tape) return result;

  int an = a.node_id(), bn = b.node_id();
  Tensor ac = a.detached(), bc = b.detached();
  return record_op(tape, result, {an, bn},
                   [an, bn, ac, bc, m, k, n](const std::vector<double>& g, Tape& t) {
                     const auto& av = ac.data();
                     const auto& bv = bc.data();
                     if (an >= 0) {  // gA = g * B^T
                       std::vector<double> ga(static_cast<std::size_t>(m) * k, 0.0);
                       for (int i = 0; i < m; ++i)
                         for (int j = 0; j < n; ++j) {
                           const double gij = g[static_cast<std::size_t>(i) * n + j];
                           if (gij == 0.0) continue;
                           for (int p = 0; p < k; ++p)
                             ga[static_cast<std::size_t>(i) * k + p] +=
                                 gij * bv[static_cast<std::size_t>(p) * n + j];
                         }
                       detail_accumulate(t, an, ga);
                     }
                     if (bn >= 0) {  // gB = A^T * g
                       std::vector<double> gb(static_cast<std::size_t>(k) * n, 0.0);
                       for (int i = 0; i < m; ++i)
                         for (int p = 0; p < k; ++p) {
                           const double aip = av[static_cast<std::size_t>(i) * k + p];
                           if (aip == 0.0) continue;
                           for (int j = 0; j < n; ++j)
                             gb[static_cast<std::size_t>(p) * n + j] +=
                                 aip * g[static_cast<std::size_t>(i) * n + j];
                         }
                       detail_accumulate(t, bn, gb);
                     }
                   });
}

Tensor relu(const Tensor& x) {
  return unary_op("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double alpha) {
  return unary_op("leaky_relu", x, [alpha](double v) { return v > 0.0 ? v : alpha * v; },
                  [alpha](double v, double) { return v > 0.0 ? 1.0 : alpha; });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op("tanh", x, [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& x) {
  return unary_op("exp", x, [](double v) { return std::exp(v); },
                  [](double, double y) { return y; });
}

Tensor log_op(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0))
      throw std::domain_error("log: non-positive input, shape " + shape_str(x.shape()));
  return unary_op("log", x, [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_op("square", x, [](double v) { return v * v; },
                  [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("clamp: lo must be < hi");
  return unary_op("clamp", x,
                  [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
                  [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  if (!x.tape()) return result;
  int xn = x.node_id();
  std::size_t n = x.data().size();
  return record_op(x.tape(), result, {xn}, [xn, n](const std::vector<double>& g, Tape& t) {
    if (xn >= 0) detail_accumulate(t, xn, std::vector<double>(n, g[0]));
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean of empty tensor");
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor result = Tensor::scalar(total * inv);
  if (!x.tape()) return result;
  int xn = x.node_id();
  std::size_t n = x.data().size();
  return record_op(x.tape(), result, {xn}, [xn, n, inv](const std::vector<double>& g, Tape& t) {
    if (xn >= 0) detail_accumulate(t, xn, std::vector<double>(n, g[0] * inv));
  });
}

namespace {

void check_2d_axis(const std::string& op, const Tensor& x, int axis) {
  if (x.shape().size() != 2) shape_error(op, x.shape());
  if (axis != 0 && axis != 1) throw std::invalid_argument(op + ": axis must be 0 or 1");
}

}  // namespace

Tensor logsumexp(const Tensor& x, int axis) {
  check_2d_axis("logsumexp", x, axis);
  const int m = x.shape()[0], n = x.shape()[1];
  const int outer = axis == 1 ? m : n;
  const int inner = axis == 1 ? n : m;
  const auto& xv = x.data();
  auto at = [&](int o, int i) -> double {
    return axis == 1 ? xv[static_cast<std::size_t>(o) * n + i]
                     : xv[static_cast<std::size_t>(i) * n + o];
  };
  std::vector<double> out(static_cast<std::size_t>(outer));
  for (int o = 0; o < outer; ++o) {
    double mx = at(o, 0);
    for (int i = 1; i < inner; ++i) mx = std::max(mx, at(o, i));
    double s = 0.0;
    for (int i = 0; i < inner; ++i) s += std::exp(at(o, i) - mx);
    out[static_cast<std::size_t>(o)] = mx + std::log(s);
  }
  Shape oshape = axis == 1 ? Shape{m, 1} : Shape{1, n};
  Tensor result(oshape, out);
  if (!x.tape()) return result;

  int xn = x.node_id();
  Tensor xc = x.detached(), yc = result;
  return record_op(x.tape(), result, {xn},
                   [xn, xc, yc, m, n, axis](const std::vector<double>& g, Tape& t) {
                     if (xn < 0) return;
                     const auto& xv = xc.data();
                     const auto& yv = yc.data();
                     std::vector<double> gx(xv.size());
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j) {
                         const int o = axis == 1 ? i : j;
                         gx[static_cast<std::size_t>(i) * n + j] =
                             g[static_cast<std::size_t>(o)] *
                             std::exp(xv[static_cast<std::size_t>(i) * n + j] -
                                      yv[static_cast<std::size_t>(o)]);
                       }
                     detail_accumulate(t, xn, gx);
                   });
}

Tensor softmax(const Tensor& x, int axis) {
  check_2d_axis("softmax", x, axis);
  const int m = x.shape()[0], n = x.shape()[1];
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  const int outer = axis == 1 ? m : n;
  const int inner = axis == 1 ? n : m;
  auto idx = [&](int o, int i) -> std::size_t {
    return axis == 1 ? static_cast<std::size_t>(o) * n + i : static_cast<std::size_t>(i) * n + o;
  };
  for (int o = 0; o < outer; ++o) {
    double mx = xv[idx(o, 0)];
    for (int i = 1; i < inner; ++i) mx = std::max(mx, xv[idx(o, i)]);
    double s = 0.0;
    for (int i = 0; i < inner; ++i) {
      out[idx(o, i)] = std::exp(xv[idx(o, i)] - mx);
      s += out[idx(o, i)];
    }
    for (int i = 0; i < inner; ++i) out[idx(o, i)] /= s;
  }
  Tensor result(x.shape(), std::move(out));
  if (!x.tape()) return result;

  int xn = x.node_id();
  Tensor yc = result;
  return record_op(x.tape(), result, {xn},
                   [xn, yc, m, n, axis](const std::vector<double>& g, Tape& t) {
                     if (xn < 0) return;
                     const auto& yv = yc.data();
                     const int outer = axis == 1 ? m : n;
                     const int inner = axis == 1 ? n : m;
                     auto idx = [&](int o, int i) -> std::size_t {
                       return axis == 1 ? static_cast<std::size_t>(o) * n + i
                                        : static_cast<std::size_t>(i) * n + o;
                     };
                     std::vector<double> gx(yv.size());
                     for (int o = 0; o < outer; ++o) {
                       double dot = 0.0;
                       for (int i = 0; i < inner; ++i) dot += g[idx(o, i)] * yv[idx(o, i)];
                       for (int i = 0; i < inner; ++i)
                         gx[idx(o, i)] = yv[idx(o, i)] * (g[idx(o, i)] - dot);
                     }
                     detail_accumulate(t, xn, gx);
                   });
}

namespace {

// Decomposes a shape around `axis` into [outer, axis_len, inner].
void axis_split(const Shape& s, int axis, std::int64_t& outer, std::int64_t& alen,
                std::int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  alen = s[static_cast<std::size_t>(axis)];
  inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input list");
  const Shape& base = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(base.size()))
    throw std::invalid_argument("concat: axis out of range");
  Shape oshape = base;
  oshape[static_cast<std::size_t>(axis)] = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != base.size()) shape_error("concat", base, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != base[i]) shape_error("concat", base, s);
    oshape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
    if (p.tape()) {
      if (tape && tape != p.tape())
        throw std::invalid_argument("concat: operands live on different tapes");
      tape = p.tape();
    }
  }

  std::int64_t outer, alen_total, inner;
  axis_split(oshape, axis, outer, alen_total, inner);
  std::vector<double> out(static_cast<std::size_t>(numel(oshape)));
  std::int64_t aoff = 0;
  for (const Tensor& p : parts) {
    const std::int64_t alen = p.shape()[static_cast<std::size_t>(axis)];
    const auto& pv = p.data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t a = 0; a < alen; ++a)
        for (std::int64_t i = 0; i < inner; ++i)
          out[static_cast<std::size_t>((o * alen_total + aoff + a) * inner + i)] =
              pv[static_cast<std::size_t>((o * alen + a) * inner + i)];
    aoff += alen;
  }

  Tensor result(oshape, std::move(out));
  if (!tape) return result;

  std::vector<int> input_nodes;
  std::vector<std::int64_t> alens;
  for (const Tensor& p : parts) {
    input_nodes.push_back(p.node_id());
    alens.push_back(p.shape()[static_cast<std::size_t>(axis)]);
  }
  return record_op(tape, result, input_nodes,
                   [input_nodes, alens, outer, alen_total, inner](const std::vector<double>& g,
                                                                  Tape& t) {
                     std::int64_t aoff = 0;
                     for (std::size_t pi = 0; pi < input_nodes.size(); ++pi) {
                       const std::int64_t alen = alens[pi];
                       if (input_nodes[pi] >= 0) {
                         std::vector<double> gp(static_cast<std::size_t>(outer * alen * inner));
                         for (std::int64_t o = 0; o < outer; ++o)
                           for (std::int64_t a = 0; a < alen; ++a)
                             for (std::int64_t i = 0; i < inner; ++i)
                               gp[static_cast<std::size_t>((o * alen + a) * inner + i)] =
                                   g[static_cast<std::size_t>(
                                       (o * alen_total + aoff + a) * inner + i)];
                         detail_accumulate(t, input_nodes[pi], gp);
                       }
                       aoff += alen;
                     }
                   });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("slice: axis out of range for shape " + shape_str(s));
  if (start < 0 || len <= 0 || start + len > s[static_cast<std::size_t>(axis)])
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for shape " +
                                shape_str(s));
  Shape oshape = s;
  oshape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer, alen, inner;
  axis_split(s, axis, outer, alen, inner);
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t a = 0; a < len; ++a)
      for (std::int64_t i = 0; i < inner; ++i)
        out[static_cast<std::size_t>((o * len + a) * inner + i)] =
            xv[static_cast<std::size_t>((o * alen + start + a) * inner + i)];

  Tensor result(oshape, std::move(out));
  if (!x.tape()) return result;

  int xn = x.node_id();
  std::size_t xsize = x.data().size();
  return record_op(x.tape(), result, {xn},
                   [xn, xsize, outer, alen, inner, start, len](const std::vector<double>& g,
                                                               Tape& t) {
                     if (xn < 0) return;
                     std::vector<double> gx(xsize, 0.0);
                     for (std::int64_t o = 0; o < outer; ++o)
                       for (std::int64_t a = 0; a < len; ++a)
                         for (std::int64_t i = 0; i < inner; ++i)
                           gx[static_cast<std::size_t>((o * alen + start + a) * inner + i)] =
                               g[static_cast<std::size_t>((o * len + a) * inner + i)];
                     detail_accumulate(t, xn, gx);
                   });
}

Tensor transpose(const Tensor& x) {
  if (x.shape().size() != 2) shape_error("transpose", x.shape());
  const int m = x.shape()[0], n = x.shape()[1];
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * n + j];
  Tensor result({n, m}, std::move(out));
  if (!x.tape()) return result;

  int xn = x.node_id();
  return record_op(x.tape(), result, {xn}, [xn, m, n](const std::vector<double>& g, Tape& t) {
    if (xn < 0) return;
    std::vector<double> gx(g.size());
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        gx[static_cast<std::size_t>(i) * n + j] = g[static_cast<std::size_t>(j) * m + i];
    detail_accumulate(t, xn, gx);
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  Tensor result(shape, x.data());
  if (!x.tape()) return result;
  int xn = x.node_id();
  return record_op(x.tape(), result, {xn}, [xn](const std::vector<double>& g, Tape& t) {
    if (xn >= 0) detail_accumulate(t, xn, g);
  });
}

Tensor stop_gradient(const Tensor& x) { return x.detached(); }

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double s) { return mul(x, Tensor::scalar(s)); }

Tensor add_scalar(const Tensor& x, double s) { return add(x, Tensor::scalar(s)); }

Tensor abs_op(const Tensor& x) { return add(relu(x), relu(neg(x))); }

}  // namespace crl
