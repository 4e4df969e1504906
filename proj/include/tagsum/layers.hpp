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

// Transformer building blocks. Each block registers its parameters in a
// ParameterSet at construction and reads them through a Tape per forward
// pass.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tagsum/autodiff.hpp"

namespace tagsum {

/// Per-forward-pass switches. Dropout is active only when rng is set.
struct ForwardContext {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  bool training() const { return rng != nullptr; }
};

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, bool with_bias = true)
      : weight_(&params.create(name + ".weight", in, out, InitKind::kXavier)),
        bias_(with_bias ? &params.create(name + ".bias", 1, out, InitKind::kZeros) : nullptr) {}

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) const {
    return affine(x, tape.parameter(*weight_), bias_ ? tape.parameter(*bias_) : Var<Scalar>{});
  }

  Parameter<Scalar>& weight() const { return *weight_; }
  Parameter<Scalar>* bias() const { return bias_; }

 private:
  Parameter<Scalar>* weight_ = nullptr;
  Parameter<Scalar>* bias_ = nullptr;
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet<Scalar>& params, const std::string& name, Index d)
      : gain_(&params.create(name + ".gain", 1, d, InitKind::kOnes)),
        bias_(&params.create(name + ".bias", 1, d, InitKind::kZeros)) {}

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) const {
    return layer_norm(x, tape.parameter(*gain_), tape.parameter(*bias_));
  }

 private:
  Parameter<Scalar>* gain_ = nullptr;
  Parameter<Scalar>* bias_ = nullptr;
};

/// Two-layer ReLU network: in -> hidden -> out.
template <typename Scalar>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet<Scalar>& params, const std::string& name, Index in, Index hidden, Index out)
      : inner_(params, name + ".inner", in, hidden), outer_(params, name + ".outer", hidden, out) {}

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x, const ForwardContext& ctx) const {
    auto h = relu(inner_(tape, x));
    return outer_(tape, dropout(h, ctx.dropout, ctx.rng));
  }

  const Linear<Scalar>& inner() const { return inner_; }
  const Linear<Scalar>& outer() const { return outer_; }

 private:
  Linear<Scalar> inner_;
  Linear<Scalar> outer_;
};

/// Q/K/V projections with bias, block attention, output projection without
/// bias so that a query with no visible keys maps to the zero vector.
template <typename Scalar>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet<Scalar>& params, const std::string& name, Index d, int heads)
      : heads_(heads),
        query_(params, name + ".query", d, d),
        key_(params, name + ".key", d, d),
        value_(params, name + ".value", d, d),
        output_(params, name + ".output", d, d, /*with_bias=*/false) {}

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> queries, Var<Scalar> memory,
                         std::vector<AttentionBlock> blocks, AttentionTrace<Scalar>* trace = nullptr) const {
    auto q = query_(tape, queries);
    auto k = key_(tape, memory);
    auto v = value_(tape, memory);
    return output_(tape, attention(q, k, v, heads_, std::move(blocks), trace));
  }

  int heads() const { return heads_; }
  const Linear<Scalar>& query() const { return query_; }
  const Linear<Scalar>& key() const { return key_; }
  const Linear<Scalar>& value() const { return value_; }
  const Linear<Scalar>& output() const { return output_; }

 private:
  int heads_ = 1;
  Linear<Scalar> query_;
  Linear<Scalar> key_;
  Linear<Scalar> value_;
  Linear<Scalar> output_;
};

/// Post-norm transformer layer: LN(x + MHAtt(x, x)) then LN(h + FFN(h)).
template <typename Scalar>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterSet<Scalar>& params, const std::string& name, Index d, int heads, Index d_ff)
      : attention_(params, name + ".self", d, heads),
        norm1_(params, name + ".norm1", d),
        ffn_(params, name + ".ffn", d, d_ff, d),
        norm2_(params, name + ".norm2", d) {}

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x, std::vector<AttentionBlock> blocks,
                         const ForwardContext& ctx) const {
    auto a = attention_(tape, x, x, std::move(blocks));
    auto h = norm1_(tape, x + dropout(a, ctx.dropout, ctx.rng));
    return norm2_(tape, h + dropout(ffn_(tape, h, ctx), ctx.dropout, ctx.rng));
  }

 private:
  MultiHeadAttention<Scalar> attention_;
  LayerNorm<Scalar> norm1_;
  FeedForward<Scalar> ffn_;
  LayerNorm<Scalar> norm2_;
};

/// Integrates several d-dimensional sources into a residual stream:
/// LN(h + Linear(concat(sources))) followed by a residual FFN sublayer.
template <typename Scalar>
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParameterSet<Scalar>& params, const std::string& name, Index d, int sources, Index d_ff)
      : combine_(params, name + ".combine", d * sources, d),
        norm1_(params, name + ".norm1", d),
        ffn_(params, name + ".ffn", d, d_ff, d),
        norm2_(params, name + ".norm2", d) {}

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> residual, const std::vector<Var<Scalar>>& sources,
                         const ForwardContext& ctx) const {
    auto joined = sources.size() == 1 ? sources.front() : concat_cols(sources);
    auto h = norm1_(tape, residual + dropout(combine_(tape, joined), ctx.dropout, ctx.rng));
    return norm2_(tape, h + dropout(ffn_(tape, h, ctx), ctx.dropout, ctx.rng));
  }

 private:
  Linear<Scalar> combine_;
  LayerNorm<Scalar> norm1_;
  FeedForward<Scalar> ffn_;
  LayerNorm<Scalar> norm2_;
};

/// Fixed sinusoidal encoding; row p is the encoding of position p.
template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Index length, Index d) {
  Matrix<Scalar> pe(length, d);
  for (Index p = 0; p < length; ++p) {
    for (Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(p) * rate;
      pe(p, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace tagsum
