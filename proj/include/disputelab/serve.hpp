#pragma once

// Session-based scoring over JSON/HTTP.
//
//   POST /session                      -> 201 {"session_id"}
//   POST /session/{id}/utterance       body {"author","text","timestamp"?,"kind"?,"id"?}
//                                      -> 200 {"session_id","utterances"}
//   GET|POST /session/{id}/score       -> 200 {"session_id","prefix_length","mean",
//                                              "uncertainty","samples"}
//
// Errors are {"error": message} with 404 for unknown sessions and 400 for
// malformed requests.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "disputelab/models.hpp"

namespace disputelab::serve {

struct Response {
  int status = 200;
  std::string body;
};

class ScoringService {
 public:
  ScoringService(std::shared_ptr<const NeuralModel> model, std::size_t samples = 30, std::uint64_t seed = 0);

  Response create_session();
  Response append(const std::string& session_id, const std::string& body);
  Response score(const std::string& session_id);

  std::size_t session_count() const;

 private:
  struct Session {
    std::mutex mutex;
    Conversation conversation;
  };
  std::shared_ptr<Session> find(const std::string& id) const;

  std::shared_ptr<const NeuralModel> model_;
  std::size_t samples_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

// HTTP front end for a ScoringService.
class HttpServer {
 public:
  explicit HttpServer(ScoringService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace disputelab::serve
