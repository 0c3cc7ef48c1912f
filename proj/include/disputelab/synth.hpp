#pragma once

// Planted-signal corpus generator for end-to-end checks.
//
// Escalated conversations drift from hedging towards certainty late in the
// conversation; per-conversation marker totals have the same expectation in
// both classes, so only the trend separates them. Escalated conversations
// also carry mostly "revert ..." edit summaries, while talk posts of the
// same two styles occur equally often in both classes.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "disputelab/corpus.hpp"
#include "disputelab/models.hpp"

namespace disputelab::synth {

struct SynthConfig {
  std::size_t conversations = 2000;
  std::size_t negatives_per_positive = 10;
  std::size_t min_utterances = 11;  // including edit summaries
  std::size_t max_utterances = 20;
  std::size_t min_words = 6;
  std::size_t max_words = 12;
  std::size_t edits = 3;
  std::size_t style_talk_posts = 4;  // short "revert"/"copyedit" talk posts
  double marker_base = 0.3;
  double drift = 0.5;
  double revert_edit_positive = 0.85;
  double revert_edit_negative = 0.15;
  std::size_t embedding_dim = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<Conversation> generate_corpus(const SynthConfig& config);

// Every token the generator can emit.
std::vector<std::string> vocabulary();

// Embedding file in the usual text format; words of the same marker group
// share a cluster centre.
void write_embeddings(const SynthConfig& config, std::ostream& out);
EmbeddingTable embeddings(const SynthConfig& config);

}  // namespace disputelab::synth
