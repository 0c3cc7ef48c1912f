#pragma once

// Length matching and stratified train/validation/test splits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "disputelab/corpus.hpp"

namespace disputelab {

struct MatchConfig {
  std::size_t max_matches_per_positive = 10;
  std::uint64_t seed = 0;
};

struct MatchShortfall {
  std::string escalated_id;
  std::size_t length = 0;
  std::size_t requested = 0;
  std::size_t matched = 0;
};

struct MatchResult {
  // Each escalated conversation followed by its matches, escalated
  // conversations in ascending id order.
  std::vector<Conversation> dataset;
  std::vector<MatchShortfall> shortfalls;
};

// Pairs every escalated conversation with up to `max_matches_per_positive`
// non-escalated conversations of the same utterance count, sampled without
// replacement across the whole run.
MatchResult match_by_length(const std::vector<Conversation>& escalated,
                            const std::vector<Conversation>& pool, const MatchConfig& cfg);

// Convenience wrapper: partitions a labelled corpus by class first.
MatchResult match_by_length(const std::vector<Conversation>& labelled, const MatchConfig& cfg);

struct ClassCounts {
  std::size_t escalated = 0;
  std::size_t not_escalated = 0;
};

struct SplitSpec {
  enum class Mode { Fractions, Counts };
  Mode mode = Mode::Fractions;
  // Fractions mode: applied per class; test receives the remainder.
  double train_fraction = 0.7;
  double validation_fraction = 0.15;
  // Counts mode: must sum to the class totals.
  ClassCounts train, validation, test;
  std::uint64_t seed = 0;

  static SplitSpec from_counts(ClassCounts train, ClassCounts validation, ClassCounts test,
                               std::uint64_t seed);
  static SplitSpec from_fractions(double train, double validation, std::uint64_t seed);
};

struct Splits {
  std::vector<Conversation> train, validation, test;
};

enum class SplitName { Train, Validation, Test };
std::string_view to_string(SplitName s);

// Stratified uniform sampling without replacement. Throws Error naming the
// class when the spec cannot be met.
Splits split(const std::vector<Conversation>& dataset, const SplitSpec& spec);

// conversation id -> split
using SplitManifest = std::map<std::string, SplitName>;

SplitManifest manifest_of(const Splits& splits);
Splits apply_manifest(const std::vector<Conversation>& dataset, const SplitManifest& manifest);

// CSV "conversation_id,split". Lines starting with '#' carry metadata
// (key=value) and are returned through `metadata` when reading.
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path,
                    const std::map<std::string, std::string>& metadata = {});
SplitManifest read_manifest(const std::filesystem::path& path,
                            std::map<std::string, std::string>* metadata = nullptr);

ClassCounts class_counts(const std::vector<Conversation>& cs);

}  // namespace disputelab
