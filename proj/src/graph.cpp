#include "mvin/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mvin {

namespace {
constexpr double kBceEps = 1e-12;
}

// Note: push() may reallocate nodes_ and vals_, so ops copy input dimensions
// into locals before calling it and only read input values through in_val()
// afterwards.
Graph::NodeId Graph::push(Op op, int rows, int cols, std::span<const NodeId> ins,
                          double aux) {
  Node nd;
  nd.op = op;
  nd.rows = rows;
  nd.cols = cols;
  nd.val_off = static_cast<int>(vals_.size());
  nd.in_begin = static_cast<int>(inputs_.size());
  nd.in_count = static_cast<int>(ins.size());
  nd.aux = aux;
  inputs_.insert(inputs_.end(), ins.begin(), ins.end());
  vals_.resize(vals_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
  nodes_.push_back(nd);
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Graph::check_finite(NodeId n) const {
  for (double v : value(n)) {
    if (!std::isfinite(v))
      fail("non-finite value produced by kernel op ", static_cast<int>(nodes_[n].op),
           " at node ", n);
  }
}

Graph::NodeId Graph::leaf(const double* data, int rows, int cols) {
  NodeId id = push(Op::kLeaf, rows, cols, {});
  std::memcpy(out(id), data, sizeof(double) * rows * cols);
  check_finite(id);
  leaves_.push_back(id);
  return id;
}

Graph::NodeId Graph::leaf(const Tensor& t) {
  int r = static_cast<int>(t.shape[0]);
  int c = t.shape.size() > 1 ? static_cast<int>(t.shape[1]) : 1;
  return leaf(t.data.data(), r, c);
}

Graph::NodeId Graph::constant(const double* data, int rows, int cols) {
  NodeId id = push(Op::kConst, rows, cols, {});
  std::memcpy(out(id), data, sizeof(double) * rows * cols);
  check_finite(id);
  return id;
}

Graph::NodeId Graph::constant_scalar(double v) { return constant(&v, 1, 1); }

Graph::NodeId Graph::matvec(NodeId m, NodeId x) {
  const int mr = nodes_[m].rows, mc = nodes_[m].cols;
  const int xr = nodes_[x].rows, xc = nodes_[x].cols;
  check(xc == 1 && mc == xr, "matvec shape mismatch: (", mr, "x", mc, ") * (", xr,
        "x", xc, ")");
  NodeId id = push(Op::kMatVec, mr, 1, {{m, x}});
  const double* mv = in_val(nodes_[id], 0);
  const double* xv = in_val(nodes_[id], 1);
  double* y = out(id);
  for (int r = 0; r < mr; ++r) {
    double acc = 0.0;
    for (int c = 0; c < mc; ++c) acc += mv[r * mc + c] * xv[c];
    y[r] = acc;
  }
  check_finite(id);
  return id;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  const int ar = nodes_[a].rows, ac = nodes_[a].cols;
  const int br = nodes_[b].rows, bc = nodes_[b].cols;
  check(ac == br, "matmul shape mismatch: (", ar, "x", ac, ") * (", br, "x", bc, ")");
  NodeId id = push(Op::kMatMul, ar, bc, {{a, b}});
  const double* av = in_val(nodes_[id], 0);
  const double* bv = in_val(nodes_[id], 1);
  double* y = out(id);
  for (int r = 0; r < ar; ++r)
    for (int c = 0; c < bc; ++c) {
      double acc = 0.0;
      for (int k = 0; k < ac; ++k) acc += av[r * ac + k] * bv[k * bc + c];
      y[r * bc + c] = acc;
    }
  check_finite(id);
  return id;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const int ar = nodes_[a].rows, ac = nodes_[a].cols;
  const int br = nodes_[b].rows, bc = nodes_[b].cols;
  check(ar == br && ac == bc, "add shape mismatch: (", ar, "x", ac, ") + (", br, "x",
        bc, ")");
  NodeId id = push(Op::kAdd, ar, ac, {{a, b}});
  const double* av = in_val(nodes_[id], 0);
  const double* bv = in_val(nodes_[id], 1);
  double* y = out(id);
  const int n = ar * ac;
  for (int i = 0; i < n; ++i) y[i] = av[i] + bv[i];
  check_finite(id);
  return id;
}

Graph::NodeId Graph::concat(std::span<const NodeId> parts) {
  check(!parts.empty(), "concat of zero parts");
  int total = 0;
  for (NodeId p : parts) {
    check(nodes_[p].cols == 1, "concat expects vectors, got (", nodes_[p].rows, "x",
          nodes_[p].cols, ")");
    total += nodes_[p].rows;
  }
  NodeId id = push(Op::kConcat, total, 1, parts);
  double* y = out(id);
  int off = 0;
  const Node& nd = nodes_[id];
  for (int i = 0; i < nd.in_count; ++i) {
    int n = nodes_[inputs_[nd.in_begin + i]].rows;
    std::memcpy(y + off, in_val(nd, i), sizeof(double) * n);
    off += n;
  }
  check_finite(id);
  return id;
}

Graph::NodeId Graph::relu(NodeId x) {
  const int xr = nodes_[x].rows, xc = nodes_[x].cols;
  NodeId id = push(Op::kRelu, xr, xc, {{x}});
  const double* xv = in_val(nodes_[id], 0);
  double* y = out(id);
  const int n = xr * xc;
  for (int i = 0; i < n; ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  check_finite(id);
  return id;
}

Graph::NodeId Graph::sigmoid(NodeId x) {
  const int xr = nodes_[x].rows, xc = nodes_[x].cols;
  NodeId id = push(Op::kSigmoid, xr, xc, {{x}});
  const double* xv = in_val(nodes_[id], 0);
  double* y = out(id);
  const int n = xr * xc;
  for (int i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  check_finite(id);
  return id;
}

Graph::NodeId Graph::softmax(NodeId x) {
  const int xr = nodes_[x].rows, xc = nodes_[x].cols;
  check(xc == 1, "softmax expects a vector, got (", xr, "x", xc, ")");
  NodeId id = push(Op::kSoftmax, xr, 1, {{x}});
  const double* xv = in_val(nodes_[id], 0);
  double* y = out(id);
  double mx = xv[0];
  for (int i = 1; i < xr; ++i) mx = std::max(mx, xv[i]);
  double sum = 0.0;
  for (int i = 0; i < xr; ++i) {
    y[i] = std::exp(xv[i] - mx);
    sum += y[i];
  }
  for (int i = 0; i < xr; ++i) y[i] /= sum;
  check_finite(id);
  return id;
}

Graph::NodeId Graph::weighted_sum(NodeId w, std::span<const NodeId> vs) {
  const int wr = nodes_[w].rows, wc = nodes_[w].cols;
  check(wc == 1 && wr == static_cast<int>(vs.size()), "weighted_sum: weight length ",
        wr, " vs ", vs.size(), " vectors");
  const int dim = nodes_[vs[0]].rows;
  for (NodeId v : vs)
    check(nodes_[v].cols == 1 && nodes_[v].rows == dim,
          "weighted_sum: vector shape mismatch");
  std::vector<NodeId> ins;
  ins.reserve(vs.size() + 1);
  ins.push_back(w);
  ins.insert(ins.end(), vs.begin(), vs.end());
  NodeId id = push(Op::kWeightedSum, dim, 1, ins);
  const Node& nd = nodes_[id];
  const double* wv = in_val(nd, 0);
  double* y = out(id);
  for (int i = 0; i < static_cast<int>(vs.size()); ++i) {
    const double* v = in_val(nd, i + 1);
    for (int d = 0; d < dim; ++d) y[d] += wv[i] * v[d];
  }
  check_finite(id);
  return id;
}

Graph::NodeId Graph::dot(NodeId a, NodeId b) {
  const int ar = nodes_[a].rows, ac = nodes_[a].cols;
  const int br = nodes_[b].rows, bc = nodes_[b].cols;
  check(ac == 1 && bc == 1 && ar == br, "dot shape mismatch: (", ar, "x", ac, ") . (",
        br, "x", bc, ")");
  NodeId id = push(Op::kDot, 1, 1, {{a, b}});
  const double* av = in_val(nodes_[id], 0);
  const double* bv = in_val(nodes_[id], 1);
  double acc = 0.0;
  for (int i = 0; i < ar; ++i) acc += av[i] * bv[i];
  out(id)[0] = acc;
  check_finite(id);
  return id;
}

Graph::NodeId Graph::l2_norm_sq(NodeId x) {
  const int n = nodes_[x].rows * nodes_[x].cols;
  NodeId id = push(Op::kL2NormSq, 1, 1, {{x}});
  const double* xv = in_val(nodes_[id], 0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += xv[i] * xv[i];
  out(id)[0] = acc;
  check_finite(id);
  return id;
}

Graph::NodeId Graph::scale(NodeId x, double c) {
  const int xr = nodes_[x].rows, xc = nodes_[x].cols;
  NodeId id = push(Op::kScale, xr, xc, {{x}}, c);
  const double* xv = in_val(nodes_[id], 0);
  double* y = out(id);
  const int n = xr * xc;
  for (int i = 0; i < n; ++i) y[i] = c * xv[i];
  check_finite(id);
  return id;
}

Graph::NodeId Graph::bce(NodeId prob, double label) {
  check(nodes_[prob].rows == 1 && nodes_[prob].cols == 1,
        "bce expects a scalar probability");
  check(label == 0.0 || label == 1.0, "bce label must be 0 or 1, got ", label);
  NodeId id = push(Op::kBce, 1, 1, {{prob}}, label);
  double p = std::clamp(in_val(nodes_[id], 0)[0], kBceEps, 1.0 - kBceEps);
  out(id)[0] = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  check_finite(id);
  return id;
}

void Graph::backward(NodeId loss) {
  const Node& ln = nodes_[loss];
  check(ln.rows == 1 && ln.cols == 1, "backward: loss node must be scalar, got (",
        ln.rows, "x", ln.cols, ")");
  grads_.assign(vals_.size(), 0.0);
  grads_[ln.val_off] = 1.0;

  // Creation order is a topological order, so one reverse sweep suffices and
  // visits every node exactly once.
  for (int n = loss; n >= 0; --n) {
    const Node& nd = nodes_[n];
    const double* g = grads_.data() + nd.val_off;
    auto gin = [&](int i) {
      return grads_.data() + nodes_[inputs_[nd.in_begin + i]].val_off;
    };
    switch (nd.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kMatVec: {
        const Node& mn = nodes_[inputs_[nd.in_begin]];
        const double* mv = in_val(nd, 0);
        const double* xv = in_val(nd, 1);
        double* gm = gin(0);
        double* gx = gin(1);
        for (int r = 0; r < mn.rows; ++r)
          for (int c = 0; c < mn.cols; ++c) {
            gm[r * mn.cols + c] += g[r] * xv[c];
            gx[c] += g[r] * mv[r * mn.cols + c];
          }
        break;
      }
      case Op::kMatMul: {
        const Node& an = nodes_[inputs_[nd.in_begin]];
        const Node& bn = nodes_[inputs_[nd.in_begin + 1]];
        const double* av = in_val(nd, 0);
        const double* bv = in_val(nd, 1);
        double* ga = gin(0);
        double* gb = gin(1);
        for (int r = 0; r < an.rows; ++r)
          for (int c = 0; c < bn.cols; ++c) {
            double gv = g[r * bn.cols + c];
            for (int k = 0; k < an.cols; ++k) {
              ga[r * an.cols + k] += gv * bv[k * bn.cols + c];
              gb[k * bn.cols + c] += gv * av[r * an.cols + k];
            }
          }
        break;
      }
      case Op::kAdd: {
        double* ga = gin(0);
        double* gb = gin(1);
        int cnt = nd.rows * nd.cols;
        for (int i = 0; i < cnt; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kConcat: {
        int off = 0;
        for (int i = 0; i < nd.in_count; ++i) {
          int cnt = nodes_[inputs_[nd.in_begin + i]].rows;
          double* gi = gin(i);
          for (int k = 0; k < cnt; ++k) gi[k] += g[off + k];
          off += cnt;
        }
        break;
      }
      case Op::kRelu: {
        const double* xv = in_val(nd, 0);
        double* gx = gin(0);
        int cnt = nd.rows * nd.cols;
        for (int i = 0; i < cnt; ++i)
          if (xv[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::kSigmoid: {
        const double* y = vals_.data() + nd.val_off;
        double* gx = gin(0);
        int cnt = nd.rows * nd.cols;
        for (int i = 0; i < cnt; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::kSoftmax: {
        const double* y = vals_.data() + nd.val_off;
        double* gx = gin(0);
        double gy = 0.0;
        for (int i = 0; i < nd.rows; ++i) gy += g[i] * y[i];
        for (int i = 0; i < nd.rows; ++i) gx[i] += y[i] * (g[i] - gy);
        break;
      }
      case Op::kWeightedSum: {
        const double* wv = in_val(nd, 0);
        double* gw = gin(0);
        int nvec = nd.in_count - 1;
        for (int i = 0; i < nvec; ++i) {
          const double* v = in_val(nd, i + 1);
          double* gv = gin(i + 1);
          double acc = 0.0;
          for (int d = 0; d < nd.rows; ++d) {
            acc += g[d] * v[d];
            gv[d] += g[d] * wv[i];
          }
          gw[i] += acc;
        }
        break;
      }
      case Op::kDot: {
        const double* av = in_val(nd, 0);
        const double* bv = in_val(nd, 1);
        double* ga = gin(0);
        double* gb = gin(1);
        int cnt = nodes_[inputs_[nd.in_begin]].rows;
        for (int i = 0; i < cnt; ++i) {
          ga[i] += g[0] * bv[i];
          gb[i] += g[0] * av[i];
        }
        break;
      }
      case Op::kL2NormSq: {
        const double* xv = in_val(nd, 0);
        double* gx = gin(0);
        const Node& xn = nodes_[inputs_[nd.in_begin]];
        int cnt = xn.rows * xn.cols;
        for (int i = 0; i < cnt; ++i) gx[i] += g[0] * 2.0 * xv[i];
        break;
      }
      case Op::kScale: {
        double* gx = gin(0);
        int cnt = nd.rows * nd.cols;
        for (int i = 0; i < cnt; ++i) gx[i] += nd.aux * g[i];
        break;
      }
      case Op::kBce: {
        double p = in_val(nd, 0)[0];
        if (p > kBceEps && p < 1.0 - kBceEps) {
          double t = nd.aux;
          gin(0)[0] += g[0] * (-t / p + (1.0 - t) / (1.0 - p));
        }
        break;
      }
    }
  }
}

std::unordered_map<Graph::NodeId, Tensor> Graph::backward_map(NodeId loss) {
  backward(loss);
  std::unordered_map<NodeId, Tensor> result;
  result.reserve(leaves_.size());
  for (NodeId l : leaves_) result.emplace(l, grad_tensor(l));
  return result;
}

Tensor Graph::value_tensor(NodeId n) const {
  auto v = value(n);
  const Node& nd = nodes_[n];
  std::vector<std::size_t> shape =
      nd.cols == 1 ? std::vector<std::size_t>{static_cast<std::size_t>(nd.rows)}
                   : std::vector<std::size_t>{static_cast<std::size_t>(nd.rows),
                                              static_cast<std::size_t>(nd.cols)};
  return Tensor(std::move(shape), std::vector<double>(v.begin(), v.end()));
}

Tensor Graph::grad_tensor(NodeId n) const {
  auto g = grad(n);
  const Node& nd = nodes_[n];
  std::vector<std::size_t> shape =
      nd.cols == 1 ? std::vector<std::size_t>{static_cast<std::size_t>(nd.rows)}
                   : std::vector<std::size_t>{static_cast<std::size_t>(nd.rows),
                                              static_cast<std::size_t>(nd.cols)};
  return Tensor(std::move(shape), std::vector<double>(g.begin(), g.end()));
}

void Graph::reset() {
  nodes_.clear();
  inputs_.clear();
  vals_.clear();
  grads_.clear();
  leaves_.clear();
}

}  // namespace mvin
