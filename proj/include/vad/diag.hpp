#pragma once

#include <ostream>
#include <vector>

#include "vad/model.hpp"

namespace vad {

// How alike the per-actor representations are at each depth. mean_cosine
// follows the global-branch contexts: entry 0 is the shared starting summary
// (always exactly 1), entry l the mean pairwise cosine after reorganization
// layer l; falling values mean the branch actually specializes its context
// per actor. actor_cosine tracks the actors' own features through the
// aggregation stack the same way (entry 0 = the pooled crops themselves).
struct SimilarityReport {
  std::vector<double> mean_cosine;
  std::vector<double> actor_cosine;
  std::size_t actors = 0;
};

// Runs the clip in eval mode with a trace and reduces the global-branch
// snapshots. Needs at least two actors and a config whose global branch
// reorganizes per actor (enabled, mode != c2a); DiagnosticError otherwise.
template <typename S>
SimilarityReport similarity_diagnostic(const HeadModel<S>& model, const ClipData<S>& clip);

// Every attention weight of one eval-mode clip pass as CSV rows.
template <typename S>
void dump_attention_csv(const HeadModel<S>& model, const ClipData<S>& clip,
                        std::ostream& os);

}  // namespace vad
