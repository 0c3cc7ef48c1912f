#include "disputelab/serve.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

namespace disputelab::serve {

using json = nlohmann::json;

namespace {

Response error(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }

}  // namespace

ScoringService::ScoringService(std::shared_ptr<const NeuralModel> model, std::size_t samples, std::uint64_t seed)
    : model_(std::move(model)), samples_(samples), seed_(seed) {
  if (!model_) throw Error("scoring service needs a model");
  if (samples_ == 0) throw Error("scoring service needs at least one sample");
}

std::size_t ScoringService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::shared_ptr<ScoringService::Session> ScoringService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Response ScoringService::create_session() {
  std::lock_guard lock(mutex_);
  const std::string id = "s" + std::to_string(next_id_++);
  auto s = std::make_shared<Session>();
  s->conversation.id = id;
  sessions_.emplace(id, std::move(s));
  return {201, json{{"session_id", id}}.dump()};
}

Response ScoringService::append(const std::string& session_id, const std::string& body) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session " + session_id);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "body is not valid JSON");
  }
  if (!j.is_object()) return error(400, "body must be a JSON object");
  if (!j.contains("author") || !j["author"].is_string()) return error(400, "author must be a string");
  if (!j.contains("text") || !j["text"].is_string()) return error(400, "text must be a string");
  if (trim(j["text"].get<std::string>()).empty()) return error(400, "text must not be empty");
  Utterance u;
  u.author = j["author"].get<std::string>();
  u.text = j["text"].get<std::string>();
  const std::string kind = j.value("kind", "talk");
  if (kind == "talk") {
    u.kind = UtteranceKind::TalkPost;
  } else if (kind == "edit") {
    u.kind = UtteranceKind::EditSummary;
  } else {
    return error(400, "kind must be \"talk\" or \"edit\"");
  }
  if (j.contains("id") && !j["id"].is_string()) return error(400, "id must be a string");
  if (j.contains("timestamp") && !j["timestamp"].is_number_integer()) return error(400, "timestamp must be an integer");

  std::lock_guard lock(session->mutex);
  auto& utts = session->conversation.utterances;
  const Timestamp last = utts.empty() ? 0 : utts.back().timestamp;
  u.timestamp = j.contains("timestamp") ? j["timestamp"].get<Timestamp>() : (utts.empty() ? 0 : last + 1);
  if (!utts.empty() && u.timestamp < last) return error(400, "timestamp precedes the previous utterance");
  u.id = j.value("id", session_id + "-" + std::to_string(utts.size()));
  utts.push_back(std::move(u));
  return {200, json{{"session_id", session_id}, {"utterances", utts.size()}}.dump()};
}

Response ScoringService::score(const std::string& session_id) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session " + session_id);
  Conversation snapshot;
  {
    std::lock_guard lock(session->mutex);
    snapshot = session->conversation;
  }
  if (snapshot.utterances.empty()) return error(400, "session has no utterances");
  McPrediction p;
  try {
    p = predict_mc(*model_, snapshot, samples_, seed_, 1);
  } catch (const Error& e) {
    return error(400, e.what());
  }
  return {200, json{{"session_id", session_id},
                    {"prefix_length", snapshot.size()},
                    {"mean", p.mean},
                    {"uncertainty", p.uncertainty},
                    {"samples", samples_}}
                   .dump()};
}

struct HttpServer::Impl {
  ScoringService& service;
  httplib::Server server;
  explicit Impl(ScoringService& s) : service(s) {}
};

HttpServer::HttpServer(ScoringService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  const auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  srv.Post("/session", [&svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc.create_session());
  });
  srv.Post(R"(/session/([^/]+)/utterance)", [&svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.append(req.matches[1], req.body));
  });
  const auto score = [&svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.score(req.matches[1]));
  };
  srv.Get(R"(/session/([^/]+)/score)", score);
  srv.Post(R"(/session/([^/]+)/score)", score);
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(json{{"error", res.status == 404 ? "no such endpoint" : "request failed"}}.dump(),
                      "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind to " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw Error("cannot bind to " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace disputelab::serve
