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

#include "tagsum/contrastive.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tagsum {

template <typename Scalar>
LocalMatcher<Scalar>::LocalMatcher(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config)
    : conv_(params, name + ".conv", 6 * static_cast<Index>(config.d_model), config.d_model),
      output_(params, name + ".output", config.d_model, 1) {}

template <typename Scalar>
Var<Scalar> LocalMatcher<Scalar>::operator()(Tape<Scalar>& tape, Var<Scalar> summary, Var<Scalar> token_states,
                                             const std::vector<Segment>& papers,
                                             const std::vector<int>& owner) const {
  if (papers.size() != owner.size()) throw std::invalid_argument("one owner per paper required");
  std::vector<Index> rows, owners, prev, next;
  std::vector<Segment> pooled;
  for (std::size_t p = 0; p < papers.size(); ++p) {
    const auto& seg = papers[p];
    if (seg.count == 0) throw std::invalid_argument("local matching needs non-empty papers");
    const auto begin = static_cast<Index>(rows.size());
    for (Index t = 0; t < seg.count; ++t) {
      rows.push_back(seg.begin + t);
      owners.push_back(owner[p]);
      prev.push_back(t > 0 ? begin + t - 1 : -1);
      next.push_back(t + 1 < seg.count ? begin + t + 1 : -1);
    }
    pooled.push_back({begin, seg.count});
  }
  auto pairs = concat_cols<Scalar>({gather_rows(summary, std::move(owners)), gather_rows(token_states, std::move(rows))});
  auto window = concat_cols<Scalar>({gather_rows(pairs, std::move(prev)), pairs, gather_rows(pairs, std::move(next))});
  auto features = segment_max(relu(conv_(tape, window)), std::move(pooled));
  return output_(tape, features);
}

template <typename Scalar>
GlobalMatcher<Scalar>::GlobalMatcher(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config)
    : ffn_(params, name, 2 * static_cast<Index>(config.d_model), config.d_ff, 1) {}

double matching_loss(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw std::invalid_argument("matching loss needs at least one positive and one negative score");
  double pos = 0.0, neg = 0.0;
  for (double t : positive_scores) pos += std::log(t);
  for (double t : negative_scores) neg += std::log1p(-t);
  return -(pos / static_cast<double>(positive_scores.size()) + neg / static_cast<double>(negative_scores.size()));
}

double total_loss(double generation, double local, double global, bool use_contrastive) {
  return use_contrastive ? global + local + generation : generation;
}

template class LocalMatcher<float>;
template class LocalMatcher<double>;
template class GlobalMatcher<float>;
template class GlobalMatcher<double>;

}  // namespace tagsum
