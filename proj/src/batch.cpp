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

#include "tagsum/batch.hpp"

#include <algorithm>

namespace tagsum {

Batch Batch::from_examples(std::span<const EncodedExample> examples, bool with_negatives) {
  Batch batch;
  for (const auto& ex : examples) {
    ExampleLayout layout;
    auto add_doc = [&](std::vector<int> ids) {
      batch.documents.push_back(std::move(ids));
      return static_cast<int>(batch.documents.size()) - 1;
    };
    layout.target_doc = add_doc(ex.target.row(0));

    std::vector<int> ref_compact(static_cast<std::size_t>(ex.references.ids.rows()), -1);
    for (Index r = 0; r < ex.references.ids.rows(); ++r) {
      if (!ex.references.row_present(r)) continue;
      ref_compact[static_cast<std::size_t>(r)] = static_cast<int>(layout.reference_docs.size());
      layout.reference_docs.push_back(add_doc(ex.references.row(r)));
      layout.reference_rows.push_back(static_cast<int>(r));
    }
    std::vector<int> kp_compact(static_cast<std::size_t>(ex.keyphrases.ids.rows()), -1);
    for (Index c = 0; c < ex.keyphrases.ids.rows(); ++c) {
      if (!ex.keyphrases.row_present(c)) continue;
      kp_compact[static_cast<std::size_t>(c)] = static_cast<int>(layout.keyphrase_docs.size());
      layout.keyphrase_docs.push_back(add_doc(ex.keyphrases.row(c)));
      layout.keyphrase_rows.push_back(static_cast<int>(c));
    }
    if (with_negatives) {
      for (Index n = 0; n < ex.negatives.ids.rows(); ++n)
        if (ex.negatives.row_present(n)) layout.negative_docs.push_back(add_doc(ex.negatives.row(n)));
    }
    for (const auto& [c, r] : ex.keyphrase_reference_edges) {
      if (c < 0 || r < 0 || c >= static_cast<int>(kp_compact.size()) || r >= static_cast<int>(ref_compact.size()))
        continue;
      const int cc = kp_compact[static_cast<std::size_t>(c)];
      const int rr = ref_compact[static_cast<std::size_t>(r)];
      if (cc >= 0 && rr >= 0) layout.edges.emplace_back(cc, rr);
    }
    std::sort(layout.edges.begin(), layout.edges.end());
    layout.edges.erase(std::unique(layout.edges.begin(), layout.edges.end()), layout.edges.end());
    batch.examples.push_back(std::move(layout));
    batch.gold.push_back(ex.gold);
  }
  return batch;
}

}  // namespace tagsum
