#pragma once

// Per-utterance linguistic markers and their per-conversation aggregation
// (mean and least-squares slope over the conversation).

#include <filesystem>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "disputelab/common.hpp"
#include "disputelab/corpus.hpp"

namespace disputelab {

enum class Position { Anywhere, UtteranceStart };

struct LexiconCategory {
  std::string name;
  // Each pattern is a token sequence.
  std::vector<std::vector<std::string>> patterns;
  Position position = Position::Anywhere;
};

struct Lexicon {
  std::string name;
  std::vector<LexiconCategory> categories;

  const LexiconCategory& category(std::string_view name) const;
  bool has_category(std::string_view name) const;
  // All single-token patterns across every category.
  std::unordered_set<std::string> words() const;
};

// Plain-text lexicon: "[category]" headers (optionally followed by "@start"
// to restrict matches to the first token of an utterance), one pattern per
// line, '#' comments.
Lexicon parse_lexicon(std::istream& in, std::string name);
Lexicon load_lexicon(const std::filesystem::path& path);

// Pronoun classes "first", "second", "third".
Lexicon default_pronoun_lexicon();

enum class Normalize { RawCount, PerToken };

struct FeatureMatrix {
  std::string conversation_id;
  std::vector<std::string> names;
  Matrix values;  // rows = utterances, cols = features
};

// Appends the columns of `b` to `a`. Row counts must agree.
FeatureMatrix hcat(FeatureMatrix a, const FeatureMatrix& b);

void write_feature_csv(const FeatureMatrix& fm, std::ostream& out);

struct AggregatedFeatures {
  std::string conversation_id;
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> gradient;
};

// Non-overlapping leftmost-longest matches of any pattern in `category`.
std::size_t count_matches(const std::vector<std::string>& tokens, const LexiconCategory& category);

FeatureMatrix extract_lexicon_features(const Conversation& c, const Lexicon& lex, Normalize normalize,
                                       std::string_view prefix = "");
FeatureMatrix extract_pronoun_features(const Conversation& c);
FeatureMatrix extract_pronoun_features(const Conversation& c, const Lexicon& pronouns);
FeatureMatrix extract_idea_features(const Conversation& c, const Lexicon& certainty,
                                    const std::unordered_set<std::string>& function_words);
FeatureMatrix extract_accommodation(const Conversation& c,
                                    const std::unordered_set<std::string>& function_words);
FeatureMatrix extract_reply_gap(const Conversation& c);
FeatureMatrix toxicity_columns(const Conversation& c);

// Least-squares slope of ys against x_i = i/(n-1); 0 for n < 2.
double line_slope(const std::vector<double>& ys);

AggregatedFeatures aggregate(const FeatureMatrix& fm);

// --- featuresets ----------------------------------------------------------

enum class FeatureSet { Politeness, Collaboration, Toxicity, Sentiment };
std::string_view to_string(FeatureSet fs);
FeatureSet feature_set_from_string(std::string_view s);

struct Lexicons {
  Lexicon politeness;
  Lexicon hedges;
  Lexicon certainty;
  Lexicon pronouns;
  Lexicon sentiment;
  std::unordered_set<std::string> function_words;

  // Reads politeness.txt, hedges.txt, certainty.txt, pronouns.txt,
  // sentiment.txt and function_words.txt from `dir`.
  static Lexicons load(const std::filesystem::path& dir);
};

// Lexicon directory shipped with the sources.
std::filesystem::path default_lexicon_dir();

FeatureMatrix extract_featureset(const Conversation& c, FeatureSet fs, const Lexicons& lex);

struct DesignMatrix {
  Matrix x;
  std::vector<std::string> names;
  std::vector<std::string> ids;
  std::vector<int> labels;  // 1 = escalated
};

// One row per conversation: the column means of every requested featureset,
// followed by the slopes when `with_gradients` is set.
DesignMatrix build_design(const std::vector<Conversation>& cs, const std::vector<FeatureSet>& sets,
                          bool with_gradients, const Lexicons& lex);

void write_design_csv(const DesignMatrix& d, std::ostream& out);

}  // namespace disputelab
