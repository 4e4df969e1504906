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

// Scalar-loop re-implementation of the model's forward pass. Everything is
// computed element by element from the named parameters, one example and
// one document at a time, without the tape or the packed-batch helpers.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tagsum/batch.hpp"
#include "tagsum/model.hpp"

namespace oracle {

using M = Eigen::MatrixXd;
using tagsum::TagModel;
using Params = tagsum::ParameterSet<double>;

inline M param(Params& model, const std::string& name) {
  auto* p = model.find(name);
  if (p == nullptr) throw std::invalid_argument("oracle: no parameter " + name);
  return p->value;
}

inline M linear(Params& model, const M& x, const std::string& name, bool bias = true) {
  const M& w = param(model, name + ".weight");
  M out(x.rows(), w.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
      out(i, j) = s;
    }
  if (bias) {
    const M& b = param(model, name + ".bias");
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out(i, j) += b(0, j);
  }
  return out;
}

inline M relu(M x) {
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) x(i, j) = x(i, j) > 0.0 ? x(i, j) : 0.0;
  return x;
}

inline M ffn(Params& model, const M& x, const std::string& name) {
  return linear(model, relu(linear(model, x, name + ".inner")), name + ".outer");
}

inline M layer_norm(Params& model, const M& x, const std::string& name) {
  const M& g = param(model, name + ".gain");
  const M& b = param(model, name + ".bias");
  M out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (int j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols());
    double var = 0.0;
    for (int j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.cols());
    for (int j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean) / std::sqrt(var + 1e-6) * g(0, j) + b(0, j);
  }
  return out;
}

inline M add(const M& a, const M& b) {
  M out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + b(i, j);
  return out;
}

inline M hconcat(const std::vector<M>& parts) {
  int cols = 0;
  for (const auto& p : parts) cols += static_cast<int>(p.cols());
  M out(parts.front().rows(), cols);
  int c0 = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) out(i, c0 + j) = p(i, j);
    c0 += static_cast<int>(p.cols());
  }
  return out;
}

inline M vconcat(const std::vector<M>& parts, int cols) {
  int rows = 0;
  for (const auto& p : parts) rows += static_cast<int>(p.rows());
  M out(rows, cols);
  int r0 = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < cols; ++j) out(r0 + i, j) = p(i, j);
    r0 += static_cast<int>(p.rows());
  }
  return out;
}

inline M row(const M& x, int i) {
  M out(1, x.cols());
  for (int j = 0; j < x.cols(); ++j) out(0, j) = x(i, j);
  return out;
}

/// softmax(Q K^T / sqrt(d_head)) V per head on projected inputs, then the
/// bias-free output projection. `visible(i, j)` gates key j for query i; a
/// query with no visible key yields zero. probs[h] receives each head's
/// weights when given.
inline M mha(Params& model, const M& queries, const M& memory, const std::string& name, int heads,
             const std::function<bool(int, int)>& visible = {}, std::vector<M>* probs = nullptr) {
  const M q = linear(model, queries, name + ".query");
  const M k = linear(model, memory, name + ".key");
  const M v = linear(model, memory, name + ".value");
  const int d = static_cast<int>(q.cols());
  const int dh = d / heads;
  M context = M::Zero(q.rows(), d);
  if (probs) probs->assign(static_cast<std::size_t>(heads), M::Zero(q.rows(), k.rows()));
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < q.rows(); ++i) {
      std::vector<double> w(static_cast<std::size_t>(k.rows()), 0.0);
      double top = -1e300;
      bool any = false;
      for (int j = 0; j < k.rows(); ++j) {
        if (visible && !visible(i, j)) continue;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        w[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        top = std::max(top, w[static_cast<std::size_t>(j)]);
        any = true;
      }
      if (!any) continue;
      double z = 0.0;
      for (int j = 0; j < k.rows(); ++j) {
        const auto jj = static_cast<std::size_t>(j);
        w[jj] = (visible && !visible(i, j)) ? 0.0 : std::exp(w[jj] - top);
        z += w[jj];
      }
      for (int j = 0; j < k.rows(); ++j) {
        const double p = w[static_cast<std::size_t>(j)] / z;
        if (probs) (*probs)[static_cast<std::size_t>(h)](i, j) = p;
        for (int c = 0; c < dh; ++c) context(i, h * dh + c) += p * v(j, h * dh + c);
      }
    }
  }
  return linear(model, context, name + ".output", false);
}

/// LN(residual + Linear(concat(sources))) then LN(h + FFN(h)).
inline M fusion_block(Params& model, const M& residual, const std::vector<M>& sources,
                      const std::string& name) {
  const M h = layer_norm(model, add(residual, linear(model, hconcat(sources), name + ".combine")), name + ".norm1");
  return layer_norm(model, add(h, ffn(model, h, name + ".ffn")), name + ".norm2");
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Document {
  std::vector<int> ids;
  M tokens;  // token-encoder states
  M node;    // mean-pooled, 1 x d
};

struct ExampleTrace {
  Document target;
  std::vector<Document> references, keyphrases, negatives;
  std::vector<M> beta;                  // per graph layer, column over references
  M target_node, reference_nodes, keyphrase_nodes;  // after the graph layers
  M target_memory, reference_memory, keyphrase_memory;
  M logits;                             // one row per teacher-forced position
  M state, c_keyphrase, c_target, c_reference;  // last decoder layer
  std::vector<M> keyphrase_probs;       // last decoder layer, per head
  std::vector<double> local_positive, local_negative;  // logits
  double global_positive = 0, global_negative = 0;     // logits
};

struct Trace {
  std::vector<ExampleTrace> examples;
  double generation = 0, local = 0, global = 0, total = 0;
};

inline M embed(Params& model, const std::vector<int>& ids) {
  const M& table = param(model, "embedding");
  const int d = static_cast<int>(table.cols());
  M out(static_cast<int>(ids.size()), d);
  for (int p = 0; p < out.rows(); ++p)
    for (int i = 0; i < d; ++i) {
      const double angle = p / std::pow(10000.0, (2.0 * (i / 2)) / d);
      const double pe = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
      out(p, i) = table(ids[static_cast<std::size_t>(p)], i) * std::sqrt(static_cast<double>(d)) + pe;
    }
  return out;
}

inline Document encode_document(Params& model, const tagsum::ModelConfig& cfg, const std::vector<int>& ids) {
  Document doc;
  doc.ids = ids;
  M h = embed(model, ids);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string n = "encoder.tokens.layer" + std::to_string(l);
    const M a = mha(model, h, h, n + ".self", cfg.heads);
    const M x = layer_norm(model, add(h, a), n + ".norm1");
    h = layer_norm(model, add(x, ffn(model, x, n + ".ffn")), n + ".norm2");
  }
  doc.tokens = h;
  doc.node = M::Zero(1, cfg.d_model);
  for (int t = 0; t < h.rows(); ++t)
    for (int j = 0; j < h.cols(); ++j) doc.node(0, j) += h(t, j) / static_cast<double>(h.rows());
  return doc;
}

inline M stack_nodes(const std::vector<Document>& docs, int d) {
  std::vector<M> rows;
  for (const auto& doc : docs) rows.push_back(doc.node);
  return vconcat(rows, d);
}

/// beta_i = softmax_i FFN(<h_i, h_0>) over the example's references.
inline std::vector<double> target_centered_beta(Params& model, const M& refs, const M& target,
                                                const std::string& name) {
  std::vector<double> s;
  for (int i = 0; i < refs.rows(); ++i) {
    double dot = 0.0;
    for (int j = 0; j < refs.cols(); ++j) dot += refs(i, j) * target(0, j);
    M in(1, 1);
    in(0, 0) = dot;
    s.push_back(ffn(model, in, name + ".scorer")(0, 0));
  }
  double top = -1e300, z = 0.0;
  for (double v : s) top = std::max(top, v);
  for (double& v : s) z += (v = std::exp(v - top));
  for (double& v : s) v /= z;
  return s;
}

inline void graph_layer(Params& model, const tagsum::ModelConfig& cfg, ExampleTrace& ex,
                        const std::vector<std::pair<int, int>>& edges, const std::string& n) {
  const int heads = cfg.heads;
  const int d = cfg.d_model;
  const M T = ex.target_node, R = ex.reference_nodes, K = ex.keyphrase_nodes;
  const int nr = static_cast<int>(R.rows()), nk = static_cast<int>(K.rows());
  auto linked = [&](int c, int r) {
    for (const auto& [ec, er] : edges)
      if (ec == c && er == r) return true;
    return false;
  };

  // Keyphrases attend to each other and to their adjacent papers.
  const M kp_self = mha(model, K, K, n + ".keyphrase_self", heads);
  M kp_cross(nk, d);
  for (int c = 0; c < nk; ++c) {
    std::vector<M> adj{T};
    for (int r = 0; r < nr; ++r)
      if (linked(c, r)) adj.push_back(row(R, r));
    const M out = mha(model, row(K, c), vconcat(adj, d), n + ".keyphrase_papers", heads);
    for (int j = 0; j < d; ++j) kp_cross(c, j) = out(0, j);
  }
  const M K2 = fusion_block(model, K, {kp_self, kp_cross}, n + ".keyphrase_fusion");

  // References: self, linked keyphrases, target-centered.
  const M ref_self = mha(model, R, R, n + ".reference_self", heads);
  M ref_cross = M::Zero(nr, d);
  for (int r = 0; r < nr; ++r) {
    std::vector<M> adj;
    for (int c = 0; c < nk; ++c)
      if (linked(c, r)) adj.push_back(row(K2, c));
    if (adj.empty()) continue;
    const M out = mha(model, row(R, r), vconcat(adj, d), n + ".reference_keyphrases", heads);
    for (int j = 0; j < d; ++j) ref_cross(r, j) = out(0, j);
  }
  const auto beta = target_centered_beta(model, R, T, n + ".target_centered");
  const M attended = mha(model, R, R, n + ".target_centered.self", heads);
  M centered(nr, d);
  M beta_col(nr, 1);
  for (int r = 0; r < nr; ++r) {
    beta_col(r, 0) = beta[static_cast<std::size_t>(r)];
    for (int j = 0; j < d; ++j) centered(r, j) = beta[static_cast<std::size_t>(r)] * attended(r, j);
  }
  const M R2 = fusion_block(model, R, {ref_self, ref_cross, centered}, n + ".reference_fusion");

  // Target: cross-attention to the updated references and keyphrases.
  const M to_refs = mha(model, T, R2, n + ".target_references", heads);
  const M to_kps = nk > 0 ? mha(model, T, K2, n + ".target_keyphrases", heads) : M::Zero(1, d);
  ex.target_node = fusion_block(model, T, {to_refs, to_kps}, n + ".target_fusion");
  ex.reference_nodes = R2;
  ex.keyphrase_nodes = K2;
  ex.beta.push_back(beta_col);
}

inline M fuse_words(Params& model, const std::vector<Document>& docs, const M& nodes) {
  std::vector<M> parts;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& tok = docs[i].tokens;
    M sum(tok.rows(), tok.cols());
    for (int t = 0; t < tok.rows(); ++t)
      for (int j = 0; j < tok.cols(); ++j) sum(t, j) = tok(t, j) + nodes(static_cast<int>(i), j);
    parts.push_back(ffn(model, sum, "encoder.word_fusion"));
  }
  return parts.empty() ? M(0, nodes.cols()) : vconcat(parts, static_cast<int>(nodes.cols()));
}

/// Full-model forward for the full (non-ablated) configuration.
inline Trace forward(TagModel<double>& full, const tagsum::Batch& batch) {
  const auto& cfg = full.config();
  auto& model = full.parameters();
  const int d = cfg.d_model, heads = cfg.heads;
  Trace trace;
  double gen_sum = 0.0;
  int gen_count = 0;
  for (std::size_t e = 0; e < batch.examples.size(); ++e) {
    const auto& layout = batch.examples[e];
    ExampleTrace ex;
    auto doc = [&](int i) { return encode_document(model, cfg, batch.documents[static_cast<std::size_t>(i)]); };
    ex.target = doc(layout.target_doc);
    for (int i : layout.reference_docs) ex.references.push_back(doc(i));
    for (int i : layout.keyphrase_docs) ex.keyphrases.push_back(doc(i));
    for (int i : layout.negative_docs) ex.negatives.push_back(doc(i));

    ex.target_node = ex.target.node;
    ex.reference_nodes = stack_nodes(ex.references, d);
    ex.keyphrase_nodes = stack_nodes(ex.keyphrases, d);
    for (int l = 0; l < cfg.graph_layers; ++l)
      graph_layer(model, cfg, ex, layout.edges, "encoder.graph" + std::to_string(l));

    ex.target_memory = fuse_words(model, {ex.target}, ex.target_node);
    ex.reference_memory = fuse_words(model, ex.references, ex.reference_nodes);
    ex.keyphrase_memory = fuse_words(model, ex.keyphrases, ex.keyphrase_nodes);

    // Decoder over the gold prefix.
    const auto& gold = batch.gold[e];
    const std::vector<int> input(gold.begin(), gold.end() - 1);
    M g = embed(model, input);
    const int steps = static_cast<int>(input.size());
    for (int l = 0; l < cfg.decoder_layers; ++l) {
      const std::string n = "decoder.layer" + std::to_string(l);
      const M self = mha(model, g, g, n + ".self", heads, [](int i, int j) { return j <= i; });
      const M s = layer_norm(model, add(g, self), n + ".self_norm");
      const bool last = l + 1 == cfg.decoder_layers;
      ex.c_keyphrase = mha(model, s, ex.keyphrase_memory, n + ".keyphrase", heads, {},
                           last ? &ex.keyphrase_probs : nullptr);
      ex.c_target = mha(model, ex.c_keyphrase, ex.target_memory, n + ".target", heads);
      ex.c_reference = mha(model, ex.c_keyphrase, ex.reference_memory, n + ".reference", heads);
      const M h = layer_norm(
          model, add(s, linear(model, hconcat({ex.c_keyphrase, ex.c_target, ex.c_reference}), n + ".combine")),
          n + ".context_norm");
      g = layer_norm(model, add(h, ffn(model, h, n + ".ffn")), n + ".ffn_norm");
    }
    ex.state = g;
    ex.logits = linear(model, hconcat({ex.state, ex.c_target, ex.c_reference, ex.c_keyphrase}), "decoder.projection");

    // Label-smoothed cross-entropy; the smoothing mass skips PAD.
    const int V = static_cast<int>(ex.logits.cols());
    for (int t = 0; t < steps; ++t) {
      const int y = gold[static_cast<std::size_t>(t + 1)];
      if (y == tagsum::kPad) continue;
      double top = -1e300;
      for (int v = 0; v < V; ++v) top = std::max(top, ex.logits(t, v));
      double z = 0.0;
      for (int v = 0; v < V; ++v) z += std::exp(ex.logits(t, v) - top);
      for (int v = 0; v < V; ++v) {
        if (v == tagsum::kPad) continue;
        const double q = (v == y ? 1.0 - cfg.label_smoothing : 0.0) + cfg.label_smoothing / (V - 1);
        gen_sum -= q * (ex.logits(t, v) - top - std::log(z));
      }
      ++gen_count;
    }

    // Matching networks read the graph-free token states.
    const M summary = row(ex.state, steps - 1);
    auto local = [&](const Document& paper) {
      const int L = static_cast<int>(paper.tokens.rows());
      M pairs(L, 2 * d);
      for (int t = 0; t < L; ++t)
        for (int j = 0; j < d; ++j) {
          pairs(t, j) = summary(0, j);
          pairs(t, d + j) = paper.tokens(t, j);
        }
      M window = M::Zero(L, 6 * d);
      for (int t = 0; t < L; ++t)
        for (int j = 0; j < 2 * d; ++j) {
          if (t > 0) window(t, j) = pairs(t - 1, j);
          window(t, 2 * d + j) = pairs(t, j);
          if (t + 1 < L) window(t, 4 * d + j) = pairs(t + 1, j);
        }
      const M conv = relu(linear(model, window, "contrastive.local.conv"));
      M pooled(1, d);
      for (int j = 0; j < d; ++j) {
        pooled(0, j) = conv(0, j);
        for (int t = 1; t < L; ++t) pooled(0, j) = std::max(pooled(0, j), conv(t, j));
      }
      return linear(model, pooled, "contrastive.local.output")(0, 0);
    };
    for (const auto& p : ex.references) ex.local_positive.push_back(local(p));
    for (const auto& p : ex.negatives) ex.local_negative.push_back(local(p));

    auto mean_node = [&](const std::vector<Document>& docs) {
      M m = M::Zero(1, d);
      for (const auto& doc : docs)
        for (int j = 0; j < d; ++j) m(0, j) += doc.node(0, j) / static_cast<double>(docs.size());
      return m;
    };
    ex.global_positive = ffn(model, hconcat({summary, mean_node(ex.references)}), "contrastive.global")(0, 0);
    ex.global_negative = ffn(model, hconcat({summary, mean_node(ex.negatives)}), "contrastive.global")(0, 0);

    // -(mean log tau_pos + mean log(1 - tau_neg)) per example.
    auto matching = [](const std::vector<double>& pos, const std::vector<double>& neg) {
      double a = 0.0, b = 0.0;
      for (double z : pos) a += std::log(sigmoid(z));
      for (double z : neg) b += std::log(1.0 - sigmoid(z));
      return -(a / static_cast<double>(pos.size()) + b / static_cast<double>(neg.size()));
    };
    trace.local += matching(ex.local_positive, ex.local_negative);
    trace.global += matching({ex.global_positive}, {ex.global_negative});
    trace.examples.push_back(std::move(ex));
  }
  const double n = static_cast<double>(batch.examples.size());
  trace.local /= n;
  trace.global /= n;
  trace.generation = gen_count ? gen_sum / gen_count : 0.0;
  trace.total = trace.generation + trace.local + trace.global;
  return trace;
}

/// Largest absolute element difference.
template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  double m = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(static_cast<double>(a(i, j)) - b(i, j)));
  return m;
}

}  // namespace oracle
