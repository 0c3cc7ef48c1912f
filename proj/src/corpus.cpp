#include "disputelab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace disputelab {

using json = nlohmann::json;

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

// Length of a multi-byte separator starting at text[i], or 0. Also reports
// whether the sequence is the typographic apostrophe U+2019.
std::size_t unicode_separator(std::string_view text, std::size_t i, bool& apostrophe) {
  apostrophe = false;
  const auto at = [&](std::size_t k) -> unsigned char {
    return k < text.size() ? static_cast<unsigned char>(text[k]) : 0;
  };
  const unsigned char b0 = at(i), b1 = at(i + 1), b2 = at(i + 2);
  if (b0 == 0xC2 && (b1 == 0xA0 || b1 == 0xAB || b1 == 0xBB || b1 == 0xA1 || b1 == 0xBF)) {
    return 2;
  }
  if (b0 == 0xE2 && b1 == 0x80 && b2 >= 0x80 && b2 <= 0xAF) {
    apostrophe = (b2 == 0x99);
    return 3;
  }
  if (b0 == 0xE2 && b1 == 0x81 && b2 == 0x9F) return 3;
  if (b0 == 0xE3 && b1 == 0x80 && (b2 == 0x80 || b2 == 0x81 || b2 == 0x82)) return 3;
  return 0;
}

std::string_view kind_name(UtteranceKind k) {
  return k == UtteranceKind::TalkPost ? "talk" : "edit";
}

Timestamp read_timestamp(const json& j, std::size_t line_no) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) {
    if (j.is_number_float()) {
      const double v = j.get<double>();
      if (v == static_cast<double>(static_cast<Timestamp>(v))) return static_cast<Timestamp>(v);
    }
    throw ParseError("timestamp must be an integer number of seconds", line_no);
  }
  return j.get<Timestamp>();
}

std::optional<double> read_score(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ParseError(std::string(key) + " must be a number", line_no);
  return it->get<double>();
}

Utterance utterance_from_json(const json& u, std::size_t line_no) {
  if (!u.is_object()) throw ParseError("utterance must be an object", line_no);
  Utterance out;
  try {
    out.id = u.at("id").get<std::string>();
    out.author = u.at("author").get<std::string>();
    out.text = u.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("utterance: ") + e.what(), line_no);
  }
  auto ts = u.find("timestamp");
  if (ts == u.end()) throw ParseError("utterance missing timestamp", line_no);
  out.timestamp = read_timestamp(*ts, line_no);
  auto kind = u.find("kind");
  if (kind != u.end()) {
    const auto k = kind->get<std::string>();
    if (k == "talk") {
      out.kind = UtteranceKind::TalkPost;
    } else if (k == "edit") {
      out.kind = UtteranceKind::EditSummary;
    } else {
      throw ParseError("unknown utterance kind '" + k + "'", line_no);
    }
  }
  out.toxicity = read_score(u, "toxicity", line_no);
  out.severe_toxicity = read_score(u, "severe_toxicity", line_no);
  return out;
}

json utterance_to_json(const Utterance& u) {
  json j;
  j["id"] = u.id;
  j["author"] = u.author;
  j["timestamp"] = u.timestamp;
  j["kind"] = std::string(kind_name(u.kind));
  j["text"] = u.text;
  if (u.toxicity) j["toxicity"] = *u.toxicity;
  if (u.severe_toxicity) j["severe_toxicity"] = *u.severe_toxicity;
  return j;
}

std::pair<Timestamp, Timestamp> talk_window(const Conversation& c, bool& any) {
  any = false;
  Timestamp lo = 0, hi = 0;
  for (const auto& u : c.utterances) {
    if (u.kind != UtteranceKind::TalkPost) continue;
    if (!any) {
      lo = hi = u.timestamp;
      any = true;
    } else {
      lo = std::min(lo, u.timestamp);
      hi = std::max(hi, u.timestamp);
    }
  }
  return {lo, hi};
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::Escalated ? "escalated" : "not_escalated";
}

std::string_view to_string(UtteranceKind kind) { return kind_name(kind); }

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::TooFewUtterances: return "min_utterances";
    case RejectReason::TooManyUtterances: return "max_utterances";
    case RejectReason::TooFewTokens: return "min_tokens";
    case RejectReason::TooFewParticipants: return "min_participants";
  }
  return "unknown";
}

void validate(const Conversation& c) {
  if (c.utterances.empty()) throw Error("conversation " + c.id + " has no utterances");
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const auto& u = c.utterances[i];
    if (trim(u.text).empty()) throw Error("utterance " + u.id + " has empty text");
    for (const auto& score : {u.toxicity, u.severe_toxicity}) {
      if (score && !(*score >= 0.0 && *score <= 1.0)) {
        throw Error("utterance " + u.id + " has a toxicity score outside [0,1]");
      }
    }
    if (i > 0 && u.timestamp < c.utterances[i - 1].timestamp) {
      throw Error("conversation " + c.id + " is not sorted by timestamp");
    }
  }
  bool any = false;
  const auto [lo, hi] = talk_window(c, any);
  if (!any) return;
  for (const auto& u : c.utterances) {
    if (u.kind == UtteranceKind::EditSummary && (u.timestamp < lo || u.timestamp > hi)) {
      throw Error("edit summary " + u.id + " lies outside the talk-post window");
    }
  }
}

void sort_utterances(std::vector<Utterance>& utterances) {
  std::stable_sort(utterances.begin(), utterances.end(), [](const Utterance& a, const Utterance& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.kind == UtteranceKind::TalkPost && b.kind == UtteranceKind::EditSummary;
  });
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    bool typographic_apostrophe = false;
    const std::size_t sep_len = c >= 0x80 ? unicode_separator(text, i, typographic_apostrophe) : 0;
    const bool apostrophe = c == '\'' || typographic_apostrophe;
    if (apostrophe) {
      const std::size_t len = typographic_apostrophe ? 3 : 1;
      const bool next_is_word = i + len < text.size() &&
                                is_word_byte(static_cast<unsigned char>(text[i + len])) &&
                                unicode_separator(text, i + len, typographic_apostrophe) == 0;
      if (!current.empty() && next_is_word) {
        current.push_back('\'');
      } else {
        flush();
      }
      i += len;
      continue;
    }
    if (sep_len > 0) {
      flush();
      i += sep_len;
      continue;
    }
    if (is_word_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else {
      flush();
    }
    ++i;
  }
  flush();
  return tokens;
}

std::size_t token_count(const Conversation& c) {
  std::size_t n = 0;
  for (const auto& u : c.utterances) n += tokenize(u.text).size();
  return n;
}

std::size_t participant_count(const Conversation& c) {
  std::set<std::string_view> authors;
  for (const auto& u : c.utterances) authors.insert(u.author);
  return authors.size();
}

// --- corpus files ---------------------------------------------------------

std::string conversation_to_json(const Conversation& c) {
  json j;
  j["id"] = c.id;
  j["page"] = c.page;
  if (c.label) j["label"] = std::string(to_string(*c.label));
  if (c.escalation_time) j["escalation_time"] = *c.escalation_time;
  json utts = json::array();
  for (const auto& u : c.utterances) utts.push_back(utterance_to_json(u));
  j["utterances"] = std::move(utts);
  return j.dump();
}

Conversation conversation_from_json(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("record must be a JSON object", line_no);
  Conversation c;
  try {
    c.id = j.at("id").get<std::string>();
    c.page = j.value("page", std::string());
  } catch (const json::exception& e) {
    throw ParseError(std::string("record: ") + e.what(), line_no);
  }
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
    if (it->is_string()) {
      const auto v = it->get<std::string>();
      if (v == "escalated") {
        c.label = Label::Escalated;
      } else if (v == "not_escalated") {
        c.label = Label::NotEscalated;
      } else {
        throw ParseError("unknown label '" + v + "'", line_no);
      }
    } else if (it->is_boolean()) {
      c.label = it->get<bool>() ? Label::Escalated : Label::NotEscalated;
    } else {
      throw ParseError("label must be a string", line_no);
    }
  }
  if (auto it = j.find("escalation_time"); it != j.end() && !it->is_null()) {
    c.escalation_time = read_timestamp(*it, line_no);
  }
  auto utts = j.find("utterances");
  if (utts == j.end() || !utts->is_array()) throw ParseError("record missing utterances array", line_no);
  for (const auto& u : *utts) c.utterances.push_back(utterance_from_json(u, line_no));
  sort_utterances(c.utterances);
  try {
    validate(c);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), line_no);
  }
  return c;
}

std::vector<Conversation> parse_corpus(std::istream& in) {
  std::vector<Conversation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.push_back(conversation_from_json(line, line_no));
  }
  return out;
}

std::vector<Conversation> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus(const std::vector<Conversation>& corpus, std::ostream& out) {
  for (const auto& c : corpus) out << conversation_to_json(c) << "\n";
}

void save_corpus(const std::vector<Conversation>& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_corpus(corpus, out);
}

std::unordered_map<std::string, std::vector<Utterance>> load_edit_summaries(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open edit-summary file " + path.string());
  std::unordered_map<std::string, std::vector<Utterance>> by_page;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed edit record: ") + e.what(), line_no);
    }
    Utterance u = utterance_from_json(j, line_no);
    u.kind = UtteranceKind::EditSummary;
    by_page[j.value("page", std::string())].push_back(std::move(u));
  }
  return by_page;
}

// --- merging --------------------------------------------------------------

MergeResult merge_edit_summaries(const Conversation& talk, const std::vector<Utterance>& edits) {
  MergeResult result;
  result.conversation = talk;
  std::set<std::string_view> participants;
  for (const auto& u : talk.utterances) {
    if (u.kind == UtteranceKind::TalkPost) participants.insert(u.author);
  }
  bool any = false;
  const auto [lo, hi] = talk_window(talk, any);
  for (const auto& e : edits) {
    if (!any || e.timestamp < lo || e.timestamp > hi) {
      ++result.excluded_outside_window;
    } else if (!participants.contains(e.author)) {
      ++result.excluded_non_participant;
    } else {
      Utterance u = e;
      u.kind = UtteranceKind::EditSummary;
      result.conversation.utterances.push_back(std::move(u));
    }
  }
  sort_utterances(result.conversation.utterances);
  return result;
}

Conversation truncate_before_escalation(const Conversation& c, Timestamp escalation_time) {
  Conversation out = c;
  out.utterances.clear();
  for (const auto& u : c.utterances) {
    if (u.timestamp < escalation_time) out.utterances.push_back(u);
  }
  bool any = false;
  const auto [lo, hi] = talk_window(out, any);
  if (any) {
    std::erase_if(out.utterances, [hi = hi](const Utterance& u) {
      return u.kind == UtteranceKind::EditSummary && u.timestamp > hi;
    });
  }
  if (out.utterances.empty()) {
    throw Error("conversation " + c.id + " has no utterances before escalation");
  }
  return out;
}

// --- filters --------------------------------------------------------------

void FilterConfig::validate() const {
  if (min_utterances == 0 || min_tokens == 0 || max_utterances == 0 || min_participants == 0) {
    throw ConfigError("filter thresholds must be positive");
  }
  if (min_utterances > max_utterances) {
    throw ConfigError("min_utterances exceeds max_utterances");
  }
}

std::size_t FilterReport::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

std::optional<RejectReason> check_filters(const Conversation& c, const FilterConfig& cfg) {
  if (c.size() < cfg.min_utterances) return RejectReason::TooFewUtterances;
  if (c.size() > cfg.max_utterances) return RejectReason::TooManyUtterances;
  if (token_count(c) < cfg.min_tokens) return RejectReason::TooFewTokens;
  if (participant_count(c) < cfg.min_participants) return RejectReason::TooFewParticipants;
  return std::nullopt;
}

FilterResult apply_filters(const std::vector<Conversation>& conversations, const FilterConfig& cfg) {
  cfg.validate();
  FilterResult result;
  result.report.input = conversations.size();
  for (auto reason : {RejectReason::TooFewUtterances, RejectReason::TooManyUtterances,
                      RejectReason::TooFewTokens, RejectReason::TooFewParticipants}) {
    result.report.rejected[reason] = 0;
  }
  for (const auto& c : conversations) {
    if (auto reason = check_filters(c, cfg)) {
      ++result.report.rejected[*reason];
    } else {
      result.kept.push_back(c);
    }
  }
  result.report.kept = result.kept.size();
  return result;
}

// --- toxicity scores ------------------------------------------------------

namespace {

ToxicityScores checked_scores(double tox, double severe, const std::string& id) {
  if (!(tox >= 0.0 && tox <= 1.0) || !(severe >= 0.0 && severe <= 1.0)) {
    throw Error("toxicity scores for " + id + " lie outside [0,1]");
  }
  return {tox, severe};
}

}  // namespace

FixtureToxicitySource::FixtureToxicitySource(std::unordered_map<std::string, ToxicityScores> scores)
    : scores_(std::move(scores)) {}

FixtureToxicitySource::FixtureToxicitySource(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open toxicity fixture " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      scores_[id] = checked_scores(j.at("toxicity").get<double>(),
                                   j.at("severe_toxicity").get<double>(), id);
    } catch (const json::exception& e) {
      throw ParseError(std::string("toxicity fixture: ") + e.what(), line_no);
    }
  }
}

ToxicityScores FixtureToxicitySource::score(const Utterance& u) const {
  auto it = scores_.find(u.id);
  if (it == scores_.end()) throw LookupError("utterance " + u.id + " not found in toxicity fixture");
  return it->second;
}

ToxicityScores HttpToxicitySource::score(const Utterance& u) const {
  httplib::Client client(endpoint_.host, endpoint_.port);
  client.set_connection_timeout(endpoint_.timeout_seconds, 0);
  client.set_read_timeout(endpoint_.timeout_seconds, 0);
  json request;
  request["comment"]["text"] = u.text;
  request["requestedAttributes"]["TOXICITY"] = json::object();
  request["requestedAttributes"]["SEVERE_TOXICITY"] = json::object();
  std::string path = endpoint_.path;
  if (!endpoint_.api_key.empty()) path += "?key=" + endpoint_.api_key;
  auto res = client.Post(path, request.dump(), "application/json");
  if (!res) {
    throw RetryableError("toxicity service unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw RetryableError("toxicity service returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error("toxicity service rejected request: HTTP " + std::to_string(res->status));
  }
  try {
    const auto body = json::parse(res->body);
    const auto& scores = body.at("attributeScores");
    return checked_scores(scores.at("TOXICITY").at("summaryScore").at("value").get<double>(),
                          scores.at("SEVERE_TOXICITY").at("summaryScore").at("value").get<double>(),
                          u.id);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed toxicity response: ") + e.what());
  }
}

Utterance fetch_toxicity(const Utterance& u, const ToxicitySource& source) {
  const auto scores = source.score(u);
  Utterance out = u;
  out.toxicity = scores.toxicity;
  out.severe_toxicity = scores.severe_toxicity;
  return out;
}

}  // namespace disputelab
