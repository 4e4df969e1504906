// Copyright 2026 The TagSum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense row-major Eigen
// matrices. A Tape records every operation of one forward pass; calling
// backward() on a 1x1 result accumulates gradients into the Parameters that
// were read through the tape.
//
// Rows are the item axis everywhere (one token, node or example per row),
// columns are features.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tagsum {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Contiguous run of rows [begin, begin + count).
struct Segment {
  Index begin = 0;
  Index count = 0;
};

enum class InitKind { kZeros, kOnes, kXavier, kNormal };

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  InitKind init = InitKind::kXavier;
};

/// Owns every trainable matrix of a model, in registration order. The
/// order is the serialization order of checkpoints.
template <typename Scalar>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<Scalar>& create(std::string name, Index rows, Index cols, InitKind init) {
    if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<Scalar>>();
    p->name = std::move(name);
    p->value = Matrix<Scalar>::Zero(rows, cols);
    p->grad = Matrix<Scalar>::Zero(rows, cols);
    p->init = init;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return *params_[i]; }

  Parameter<Scalar>* find(std::string_view name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  /// Embeddings get N(0, normal_std); weight matrices get Xavier-uniform.
  void initialize(std::uint64_t seed, double normal_std = 0.02) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      auto& v = p->value;
      switch (p->init) {
        case InitKind::kZeros: v.setZero(); break;
        case InitKind::kOnes: v.setOnes(); break;
        case InitKind::kNormal: {
          std::normal_distribution<double> dist(0.0, normal_std);
          for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<Scalar>(dist(rng));
          break;
        }
        case InitKind::kXavier: {
          const double limit = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
          std::uniform_real_distribution<double> dist(-limit, limit);
          for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<Scalar>(dist(rng));
          break;
        }
      }
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
};

template <typename Scalar>
class Tape;

/// Handle to one recorded value.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix<Scalar>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Reads a parameter without copying it; gradients flow into p.grad.
  Var<Scalar> parameter(Parameter<Scalar>& p) {
    Node n;
    n.view = &p.value;
    n.param = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> push(Mat value, std::initializer_list<int> inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    if (record_) {
      for (int in : inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
      if (n.needs_grad) n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> push(Mat value, const std::vector<int>& inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    if (record_) {
      for (int in : inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
      if (n.needs_grad) n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[id];
    return n.view != nullptr ? *n.view : n.value;
  }

  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, zero-initialized on first access.
  Mat& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      const Mat& v = value(id);
      n.grad = Mat::Zero(v.rows(), v.cols());
    }
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  void backward(Var<Scalar> root) {
    if (!record_) throw std::logic_error("backward() on a non-recording tape");
    if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward() needs a 1x1 root");
    grad(root.id).setOnes();
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

  /// Drops every node recorded after the first `size`; Vars pointing past
  /// the new end become dangling.
  void truncate(std::size_t size) {
    if (size < nodes_.size()) nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(size), nodes_.end());
  }

 private:
  struct Node {
    Mat value;
    const Mat* view = nullptr;
    Mat grad;
    bool needs_grad = false;
    Parameter<Scalar>* param = nullptr;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void check_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
}

template <typename Scalar>
void check_shape(bool ok, const char* op) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  detail::check_shape<Scalar>(a.cols() == b.rows(), "matmul");
  Matrix<Scalar> out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

/// x * W + b with b broadcast over rows (b is 1 x out, or invalid for none).
template <typename Scalar>
Var<Scalar> affine(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b = {}) {
  detail::check_same_tape(x, w);
  detail::check_shape<Scalar>(x.cols() == w.rows(), "affine");
  Matrix<Scalar> out = x.value() * w.value();
  const bool has_bias = b.valid();
  if (has_bias) {
    detail::check_shape<Scalar>(b.rows() == 1 && b.cols() == w.cols(), "affine bias");
    out.rowwise() += b.value().row(0);
  }
  const int ix = x.id, iw = w.id, ib = has_bias ? b.id : -1;
  std::vector<int> inputs{ix, iw};
  if (has_bias) inputs.push_back(ib);
  return x.tape->push(std::move(out), inputs, [ix, iw, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ix)) t.grad(ix).noalias() += g * t.value(iw).transpose();
    if (t.needs_grad(iw)) t.grad(iw).noalias() += t.value(ix).transpose() * g;
    if (ib >= 0 && t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  detail::check_shape<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Matrix<Scalar> out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Matrix<Scalar> out = a.value() * s;
  const int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia, s](Tape<Scalar>& t, int self) {
    t.grad(ia) += t.grad(self) * s;
  });
}

template <typename Scalar>
Var<Scalar> cwise_mul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  detail::check_shape<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_mul");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  Matrix<Scalar> out = x.value().cwiseMax(Scalar(0));
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix](Tape<Scalar>& t, int self) {
    const auto& v = t.value(ix);
    t.grad(ix) += (v.array() > Scalar(0)).select(t.grad(self), Scalar(0)).matrix();
  });
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar stable_softplus(Scalar z) {
  return std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar z) { return stable_sigmoid(z); });
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix](Tape<Scalar>& t, int self) {
    const auto& y = t.value(self);
    t.grad(ix) += t.grad(self).cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
  });
}

/// log(1 + exp(x)); equals -log(sigmoid(-x)).
template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> x) {
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar z) { return stable_softplus(z); });
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix](Tape<Scalar>& t, int self) {
    const auto& v = t.value(ix);
    t.grad(ix) += t.grad(self).cwiseProduct(v.unaryExpr([](Scalar z) { return stable_sigmoid(z); }));
  });
}

// ---------------------------------------------------------------------------
// Normalization and regularization

/// Row-wise layer normalization with learned gain and bias (both 1 x d).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-6)) {
  const auto& v = x.value();
  const Index n = v.rows(), d = v.cols();
  detail::check_shape<Scalar>(gain.cols() == d && bias.cols() == d, "layer_norm");
  Matrix<Scalar> xhat(n, d);
  std::vector<Scalar> inv_std(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Scalar mean = v.row(i).mean();
    const Scalar var = (v.row(i).array() - mean).square().mean();
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = (v.row(i).array() - mean) * is;
  }
  Matrix<Scalar> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(std::move(out), {ix, ig, ib},
                      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, int self) {
                        const auto& g = t.grad(self);
                        if (t.needs_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
                        if (t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
                        if (!t.needs_grad(ix)) return;
                        auto& gx = t.grad(ix);
                        const auto& gamma = t.value(ig);
                        const Index d = xhat.cols();
                        for (Index i = 0; i < xhat.rows(); ++i) {
                          const auto dxhat = (g.row(i).array() * gamma.row(0).array()).matrix();
                          const Scalar m1 = dxhat.sum() / Scalar(d);
                          const Scalar m2 = dxhat.dot(xhat.row(i)) / Scalar(d);
                          gx.row(i).array() += inv_std[static_cast<std::size_t>(i)] *
                                               (dxhat.array() - m1 - xhat.row(i).array() * m2);
                        }
                      });
}

/// Inverted dropout; the identity when p == 0 or rng is null.
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> x, double p, std::mt19937_64* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  // Four 16-bit uniforms per 64-bit draw; an element is dropped when its
  // uniform falls below p * 2^16.
  const auto threshold = static_cast<std::uint64_t>(std::lround(p * 65536.0));
  const Scalar s = static_cast<Scalar>(1.0 / (1.0 - p));
  Matrix<Scalar> mask(x.rows(), x.cols());
  std::uint64_t bits = 0;
  for (Index i = 0; i < mask.size(); ++i) {
    if ((i & 3) == 0) bits = (*rng)();
    mask.data()[i] = (bits & 0xFFFF) >= threshold ? s : Scalar(0);
    bits >>= 16;
  }
  Matrix<Scalar> out = x.value().cwiseProduct(mask);
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix, mask = std::move(mask)](Tape<Scalar>& t, int self) {
    t.grad(ix) += t.grad(self).cwiseProduct(mask);
  });
}

// ---------------------------------------------------------------------------
// Row plumbing

/// out.row(i) = x.row(indices[i]); index -1 yields a zero row.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> x, std::vector<Index> indices) {
  const auto& v = x.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(indices.size()), v.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index r = indices[i];
    if (r < -1 || r >= v.rows()) throw std::out_of_range("gather_rows index out of range");
    if (r >= 0) out.row(static_cast<Index>(i)) = v.row(r);
  }
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix, indices = std::move(indices)](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < indices.size(); ++i)
      if (indices[i] >= 0) gx.row(indices[i]) += g.row(static_cast<Index>(i));
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const Index n = parts.front().rows();
  Index total = 0;
  for (const auto& p : parts) {
    detail::check_same_tape(parts.front(), p);
    detail::check_shape<Scalar>(p.rows() == n, "concat_cols");
    total += p.cols();
  }
  Matrix<Scalar> out(n, total);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.cols();
  }
  return parts.front().tape->push(std::move(out), ids, [ids, offsets](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (t.needs_grad(ids[k])) t.grad(ids[k]) += g.middleCols(offsets[k], t.value(ids[k]).cols());
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  const Index d = parts.front().cols();
  Index total = 0;
  for (const auto& p : parts) {
    detail::check_same_tape(parts.front(), p);
    detail::check_shape<Scalar>(p.cols() == d, "concat_rows");
    total += p.rows();
  }
  Matrix<Scalar> out(total, d);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.rows();
  }
  return parts.front().tape->push(std::move(out), ids, [ids, offsets](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (t.needs_grad(ids[k])) t.grad(ids[k]) += g.middleRows(offsets[k], t.value(ids[k]).rows());
  });
}

// ---------------------------------------------------------------------------
// Segment reductions. One output row per segment; empty segments give zeros.

template <typename Scalar>
Var<Scalar> segment_mean(Var<Scalar> x, std::vector<Segment> segments) {
  const auto& v = x.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(segments.size()), v.cols());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (seg.count > 0) out.row(static_cast<Index>(s)) = v.middleRows(seg.begin, seg.count).colwise().mean();
  }
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix, segments = std::move(segments)](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& seg = segments[s];
      if (seg.count == 0) continue;
      const auto row = (g.row(static_cast<Index>(s)) / Scalar(seg.count)).eval();
      gx.middleRows(seg.begin, seg.count).rowwise() += row;
    }
  });
}

/// Column-wise max over the rows of each segment.
template <typename Scalar>
Var<Scalar> segment_max(Var<Scalar> x, std::vector<Segment> segments) {
  const auto& v = x.value();
  const Index d = v.cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(segments.size()), d);
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg =
      Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(
          static_cast<Index>(segments.size()), d, -1);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    for (Index c = 0; c < d && seg.count > 0; ++c) {
      Index best = seg.begin;
      for (Index r = seg.begin + 1; r < seg.begin + seg.count; ++r)
        if (v(r, c) > v(best, c)) best = r;
      out(static_cast<Index>(s), c) = v(best, c);
      arg(static_cast<Index>(s), c) = best;
    }
  }
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix, arg = std::move(arg)](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (Index s = 0; s < arg.rows(); ++s)
      for (Index c = 0; c < arg.cols(); ++c)
        if (arg(s, c) >= 0) gx(arg(s, c), c) += g(s, c);
  });
}

/// Softmax of a column vector within each segment.
template <typename Scalar>
Var<Scalar> segment_softmax(Var<Scalar> x, std::vector<Segment> segments) {
  detail::check_shape<Scalar>(x.cols() == 1, "segment_softmax");
  const auto& v = x.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(v.rows(), 1);
  for (const auto& seg : segments) {
    if (seg.count == 0) continue;
    const auto block = v.middleRows(seg.begin, seg.count);
    const Scalar m = block.maxCoeff();
    auto e = (block.array() - m).exp().eval();
    out.middleRows(seg.begin, seg.count) = (e / e.sum()).matrix();
  }
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix, segments = std::move(segments)](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    const auto& p = t.value(self);
    auto& gx = t.grad(ix);
    for (const auto& seg : segments) {
      if (seg.count == 0) continue;
      const auto pb = p.middleRows(seg.begin, seg.count);
      const auto gb = g.middleRows(seg.begin, seg.count);
      const Scalar dot = pb.cwiseProduct(gb).sum();
      gx.middleRows(seg.begin, seg.count).array() += pb.array() * (gb.array() - dot);
    }
  });
}

/// out.row(i) = x.row(i) * s(i, 0).
template <typename Scalar>
Var<Scalar> scale_rows(Var<Scalar> x, Var<Scalar> s) {
  detail::check_same_tape(x, s);
  detail::check_shape<Scalar>(s.cols() == 1 && s.rows() == x.rows(), "scale_rows");
  Matrix<Scalar> out = x.value().array().colwise() * s.value().col(0).array();
  const int ix = x.id, is = s.id;
  return x.tape->push(std::move(out), {ix, is}, [ix, is](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ix)) t.grad(ix).array() += g.array().colwise() * t.value(is).col(0).array();
    if (t.needs_grad(is)) t.grad(is) += g.cwiseProduct(t.value(ix)).rowwise().sum();
  });
}

/// Per-row inner product, n x 1.
template <typename Scalar>
Var<Scalar> row_dot(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  detail::check_shape<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "row_dot");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia).array() += t.value(ib).array().colwise() * g.col(0).array();
    if (t.needs_grad(ib)) t.grad(ib).array() += t.value(ia).array().colwise() * g.col(0).array();
  });
}

template <typename Scalar>
Var<Scalar> sum_all(Var<Scalar> x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id;
  return x.tape->push(std::move(out), {ix}, [ix](Tape<Scalar>& t, int self) {
    t.grad(ix).array() += t.grad(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> mean_all(Var<Scalar> x) {
  if (x.value().size() == 0) throw std::invalid_argument("mean_all of an empty matrix");
  return scale(sum_all(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

// ---------------------------------------------------------------------------
// Attention

/// One independent attention problem: queries [q_begin, q_begin + q_count)
/// attend keys [k_begin, k_begin + k_count). Causal blocks let query i see
/// keys 0..i only and require q_count == k_count.
struct AttentionBlock {
  Index q_begin = 0;
  Index q_count = 0;
  Index k_begin = 0;
  Index k_count = 0;
  bool causal = false;
};

/// Attention probabilities, probs[block][head] is q_count x k_count.
template <typename Scalar>
struct AttentionTrace {
  std::vector<std::vector<Matrix<Scalar>>> probs;
};

/// Multi-head scaled dot-product attention over already-projected Q, K, V.
/// Query rows covered by no block, or by a block with no keys, produce zero.
template <typename Scalar>
Var<Scalar> attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, int heads, std::vector<AttentionBlock> blocks,
                      AttentionTrace<Scalar>* trace = nullptr) {
  detail::check_same_tape(q, k);
  detail::check_same_tape(q, v);
  const Index d = q.cols();
  detail::check_shape<Scalar>(heads > 0 && d % heads == 0 && k.cols() == d && v.cols() == d &&
                                  k.rows() == v.rows(),
                              "attention");
  const Index dh = d / heads;
  const Scalar scale_factor = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(Q.rows(), d);
  std::vector<std::vector<Matrix<Scalar>>> probs(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    if (blk.causal && blk.q_count != blk.k_count) throw std::invalid_argument("causal block must be square");
    if (blk.q_begin + blk.q_count > Q.rows() || blk.k_begin + blk.k_count > K.rows())
      throw std::out_of_range("attention block exceeds operand rows");
    if (blk.q_count == 0 || blk.k_count == 0) continue;
    probs[b].resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto Qh = Q.block(blk.q_begin, h * dh, blk.q_count, dh);
      const auto Kh = K.block(blk.k_begin, h * dh, blk.k_count, dh);
      const auto Vh = V.block(blk.k_begin, h * dh, blk.k_count, dh);
      Matrix<Scalar> s = (Qh * Kh.transpose()) * scale_factor;
      for (Index i = 0; i < s.rows(); ++i) {
        const Index visible = blk.causal ? i + 1 : s.cols();
        const Scalar m = s.row(i).head(visible).maxCoeff();
        Scalar total = 0;
        for (Index j = 0; j < s.cols(); ++j) {
          const Scalar e = j < visible ? std::exp(s(i, j) - m) : Scalar(0);
          s(i, j) = e;
          total += e;
        }
        s.row(i) /= total;
      }
      out.block(blk.q_begin, h * dh, blk.q_count, dh).noalias() = s * Vh;
      probs[b][static_cast<std::size_t>(h)] = std::move(s);
    }
  }
  if (trace != nullptr) trace->probs = probs;
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.tape->push(
      std::move(out), {iq, ik, iv},
      [iq, ik, iv, heads, dh, scale_factor, blocks = std::move(blocks), probs = std::move(probs)](Tape<Scalar>& t,
                                                                                                 int self) {
        const auto& g = t.grad(self);
        const auto& Q = t.value(iq);
        const auto& K = t.value(ik);
        const auto& V = t.value(iv);
        const bool gq = t.needs_grad(iq), gk = t.needs_grad(ik), gv = t.needs_grad(iv);
        Matrix<Scalar>* dQ = gq ? &t.grad(iq) : nullptr;
        Matrix<Scalar>* dK = gk ? &t.grad(ik) : nullptr;
        Matrix<Scalar>* dV = gv ? &t.grad(iv) : nullptr;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          const auto& blk = blocks[b];
          if (blk.q_count == 0 || blk.k_count == 0) continue;
          for (int h = 0; h < heads; ++h) {
            const auto& P = probs[b][static_cast<std::size_t>(h)];
            const auto dO = g.block(blk.q_begin, h * dh, blk.q_count, dh);
            const auto Vh = V.block(blk.k_begin, h * dh, blk.k_count, dh);
            if (dV) dV->block(blk.k_begin, h * dh, blk.k_count, dh).noalias() += P.transpose() * dO;
            if (!dQ && !dK) continue;
            Matrix<Scalar> dP = dO * Vh.transpose();
            const auto row_dot = dP.cwiseProduct(P).rowwise().sum().eval();
            Matrix<Scalar> dS = (P.array() * (dP.colwise() - row_dot).array()).matrix() * scale_factor;
            if (dQ)
              dQ->block(blk.q_begin, h * dh, blk.q_count, dh).noalias() +=
                  dS * K.block(blk.k_begin, h * dh, blk.k_count, dh);
            if (dK)
              dK->block(blk.k_begin, h * dh, blk.k_count, dh).noalias() +=
                  dS.transpose() * Q.block(blk.q_begin, h * dh, blk.q_count, dh);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean cross-entropy of row-wise softmax(logits) against the smoothed target
/// (1 - eps) * onehot(y) + eps * uniform over every class except `ignore`.
/// Rows whose target equals `ignore` are skipped entirely.
template <typename Scalar>
Var<Scalar> smoothed_cross_entropy(Var<Scalar> logits, std::vector<int> targets, Scalar eps, int ignore) {
  const auto& z = logits.value();
  const Index n = z.rows(), vsize = z.cols();
  detail::check_shape<Scalar>(static_cast<Index>(targets.size()) == n, "smoothed_cross_entropy");
  if (vsize < 2) throw std::invalid_argument("need at least two classes");
  const bool has_ignore = ignore >= 0 && ignore < vsize;
  const Scalar off = eps / static_cast<Scalar>(has_ignore ? vsize - 1 : vsize);
  Matrix<Scalar> prob(n, vsize);
  Scalar total = 0;
  Index counted = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y == ignore) continue;
    if (y < 0 || y >= vsize) throw std::out_of_range("target class out of range");
    const Scalar m = z.row(i).maxCoeff();
    const auto shifted = (z.row(i).array() - m).eval();
    const Scalar lse = std::log(shifted.exp().sum());
    const auto logp = (shifted - lse).eval();
    prob.row(i) = logp.exp().matrix();
    Scalar row = -(Scalar(1) - eps) * logp(y);
    if (eps != Scalar(0)) {
      Scalar s = logp.sum();
      if (has_ignore) s -= logp(ignore);
      row -= off * s;
    }
    total += row;
    ++counted;
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = counted > 0 ? total / static_cast<Scalar>(counted) : Scalar(0);
  const int il = logits.id;
  return logits.tape->push(
      std::move(out), {il},
      [il, targets = std::move(targets), prob = std::move(prob), eps, off, ignore, has_ignore, counted](Tape<Scalar>& t,
                                                                                                       int self) {
        if (counted == 0) return;
        const Scalar g = t.grad(self)(0, 0) / static_cast<Scalar>(counted);
        auto& gz = t.grad(il);
        for (std::size_t i = 0; i < targets.size(); ++i) {
          const int y = targets[i];
          if (y == ignore) continue;
          const Index r = static_cast<Index>(i);
          // q sums to one, so d/dz of -sum_v q_v log p_v is p - q.
          auto row = prob.row(r).eval();
          row(y) -= (Scalar(1) - eps);
          if (eps != Scalar(0)) {
            row.array() -= off;
            if (has_ignore) row(ignore) += off;
          }
          gz.row(r) += g * row;
        }
      });
}

}  // namespace tagsum
