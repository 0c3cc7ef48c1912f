#pragma once

// Conversation data model, corpus I/O, edit-summary merging and the
// conversation quality filters.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "disputelab/common.hpp"

namespace disputelab {

using Timestamp = std::int64_t;

enum class UtteranceKind { TalkPost, EditSummary };
enum class Label { NotEscalated, Escalated };

struct Utterance {
  std::string id;
  std::string author;
  Timestamp timestamp = 0;
  std::string text;
  UtteranceKind kind = UtteranceKind::TalkPost;
  std::optional<double> toxicity;
  std::optional<double> severe_toxicity;
};

struct Conversation {
  std::string id;
  std::string page;
  std::vector<Utterance> utterances;
  std::optional<Label> label;
  // Time the dispute was referred to mediation, when known.
  std::optional<Timestamp> escalation_time;

  std::size_t size() const { return utterances.size(); }
  bool escalated() const { return label == Label::Escalated; }
};

// Throws Error describing the first violated invariant.
void validate(const Conversation& c);

// Stable sort by timestamp; talk posts precede edit summaries that share a
// timestamp.
void sort_utterances(std::vector<Utterance>& utterances);

// Lowercased word tokens. Splits on whitespace and punctuation; an
// apostrophe between two word characters stays inside the token, so
// "don't" is one token. Non-ASCII letters are word characters; common
// Unicode spaces, dashes and quotes are separators, and U+2019 is treated
// as an apostrophe.
std::vector<std::string> tokenize(std::string_view text);

std::size_t token_count(const Conversation& c);

std::size_t participant_count(const Conversation& c);

// --- corpus files ---------------------------------------------------------

std::vector<Conversation> load_corpus(const std::filesystem::path& path);
// One conversation per line; blank lines and lines starting with '#' are
// skipped.
std::vector<Conversation> parse_corpus(std::istream& in);
void save_corpus(const std::vector<Conversation>& corpus, const std::filesystem::path& path);
void write_corpus(const std::vector<Conversation>& corpus, std::ostream& out);

std::string conversation_to_json(const Conversation& c);
Conversation conversation_from_json(std::string_view line, std::size_t line_no);

// Edit summaries keyed by talk page. One JSON object per line:
// {"page", "id", "author", "timestamp", "text"}.
std::unordered_map<std::string, std::vector<Utterance>> load_edit_summaries(
    const std::filesystem::path& path);

std::string_view to_string(Label label);
std::string_view to_string(UtteranceKind kind);

// --- merging --------------------------------------------------------------

struct MergeResult {
  Conversation conversation;
  std::size_t excluded_outside_window = 0;
  std::size_t excluded_non_participant = 0;
  std::size_t excluded() const { return excluded_outside_window + excluded_non_participant; }
};

// Interleaves edit summaries written by talk-post authors within the
// [first, last] talk-post time window. Everything else is dropped and
// counted.
MergeResult merge_edit_summaries(const Conversation& talk, const std::vector<Utterance>& edits);

// Keeps utterances strictly before `escalation_time`. Edit summaries that
// end up after the last retained talk post are dropped as well. Throws if
// nothing remains.
Conversation truncate_before_escalation(const Conversation& c, Timestamp escalation_time);

// --- filters --------------------------------------------------------------

struct FilterConfig {
  std::size_t min_utterances = 5;
  std::size_t min_tokens = 250;
  std::size_t max_utterances = 50;
  std::size_t min_participants = 2;

  void validate() const;
};

enum class RejectReason { TooFewUtterances, TooManyUtterances, TooFewTokens, TooFewParticipants };
std::string_view to_string(RejectReason reason);

struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::map<RejectReason, std::size_t> rejected;

  std::size_t rejected_total() const;
};

struct FilterResult {
  std::vector<Conversation> kept;
  FilterReport report;
};

// First failing check, or nullopt when the conversation passes.
std::optional<RejectReason> check_filters(const Conversation& c, const FilterConfig& cfg);

FilterResult apply_filters(const std::vector<Conversation>& conversations, const FilterConfig& cfg);

// --- toxicity scores ------------------------------------------------------

struct ToxicityScores {
  double toxicity = 0.0;
  double severe_toxicity = 0.0;
};

class ToxicitySource {
 public:
  virtual ~ToxicitySource() = default;
  virtual ToxicityScores score(const Utterance& u) const = 0;
};

// Offline scores read from a line-delimited file of
// {"id", "toxicity", "severe_toxicity"} records.
class FixtureToxicitySource : public ToxicitySource {
 public:
  explicit FixtureToxicitySource(const std::filesystem::path& path);
  explicit FixtureToxicitySource(std::unordered_map<std::string, ToxicityScores> scores);
  ToxicityScores score(const Utterance& u) const override;

 private:
  std::unordered_map<std::string, ToxicityScores> scores_;
};

// Perspective-style comment analysis over plain HTTP.
struct ToxicityEndpoint {
  std::string host = "localhost";
  int port = 80;
  std::string path = "/v1alpha1/comments:analyze";
  std::string api_key;
  int timeout_seconds = 10;
};

class HttpToxicitySource : public ToxicitySource {
 public:
  explicit HttpToxicitySource(ToxicityEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  ToxicityScores score(const Utterance& u) const override;

 private:
  ToxicityEndpoint endpoint_;
};

Utterance fetch_toxicity(const Utterance& u, const ToxicitySource& source);

}  // namespace disputelab
