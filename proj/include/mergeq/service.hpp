#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mergeq/net.hpp"
#include "mergeq/rng.hpp"

namespace mergeq {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks an ephemeral port, readable via port()
  std::uint64_t seed = 0;
  // Simulated relay hop before each reply: fixed + uniform jitter.
  double delay_fixed_ms = 0.0;
  double delay_jitter_ms = 0.0;
};

// Answers newline-delimited JSON decision requests over TCP. The weights are
// loaded once and shared read-only by every connection thread.
class DecisionServer {
 public:
  explicit DecisionServer(Weights weights, ServerOptions opt = {});
  ~DecisionServer();

  DecisionServer(const DecisionServer&) = delete;
  DecisionServer& operator=(const DecisionServer&) = delete;

  void start();
  void stop();

  int port() const { return port_; }
  std::uint64_t decisions_served() const { return served_.load(); }
  std::uint64_t errors_sent() const { return errors_.load(); }

 private:
  void accept_loop();
  void handle_connection(int fd, std::uint64_t conn_index);
  std::string handle_line(const std::string& line, Rng& rng);

  Weights weights_;
  ServerOptions opt_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> served_{0};
  std::atomic<std::uint64_t> errors_{0};
  std::atomic<std::uint64_t> conn_counter_{0};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> open_fds_;
};

struct DecisionRequest {
  int version = 1;
  std::int64_t id = 0;
  std::vector<double> obs;
  std::string mode = "greedy";  // or "boltzmann"
  double tau = 1.0;
  std::optional<std::uint64_t> seed;  // reseeds the connection's sampler
};

struct WireError {
  int code = 0;
  std::string msg;
};

struct DecisionResponse {
  int version = 1;
  std::int64_t id = 0;
  int action = 0;
  std::vector<double> q;
  std::int64_t t_us = 0;
  std::optional<WireError> error;
};

// Wire-level error codes emitted by the server.
inline constexpr int kErrBadJson = 1;
inline constexpr int kErrBadVersion = 2;
inline constexpr int kErrBadRequest = 3;
inline constexpr int kErrBadWidth = 4;
inline constexpr int kErrBadMode = 5;

std::string encode_request(const DecisionRequest& req);
DecisionResponse parse_response_line(const std::string& line);

struct WireResult {
  DecisionResponse response;
  std::int64_t rtt_us = 0;
};

// Persistent connection; requests on one connection share a sampling stream.
class DecisionClient {
 public:
  DecisionClient(const std::string& host, int port, int timeout_ms = 1000);
  ~DecisionClient();

  DecisionClient(const DecisionClient&) = delete;
  DecisionClient& operator=(const DecisionClient&) = delete;

  WireResult roundtrip(const DecisionRequest& req);
  WireResult roundtrip_line(const std::string& line);

 private:
  int fd_ = -1;
  std::string buf_;
};

WireResult request_decision(const std::string& host, int port,
                            const DecisionRequest& req, int timeout_ms = 1000);

// Splits "host:port", validating the port range.
std::pair<std::string, int> parse_host_port(const std::string& addr);

}  // namespace mergeq
