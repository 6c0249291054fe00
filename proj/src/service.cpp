#include "mergeq/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "mergeq/dqn.hpp"
#include "mergeq/errors.hpp"

namespace mergeq {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string sys_error(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

bool send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string error_line(std::int64_t id, int code, const std::string& msg) {
  ordered_json j;
  j["v"] = 1;
  j["id"] = id;
  j["error"]["code"] = code;
  j["error"]["msg"] = msg;
  return j.dump();
}

sockaddr_in make_addr(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw ServiceError("bad IPv4 address '" + host + "'");
  return addr;
}

}  // namespace

DecisionServer::DecisionServer(Weights weights, ServerOptions opt)
    : weights_(std::move(weights)), opt_(std::move(opt)) {
  if (weights_.layers.empty()) throw ServiceError("server needs a network");
}

DecisionServer::~DecisionServer() { stop(); }

void DecisionServer::start() {
  if (listen_fd_ >= 0) return;
  const sockaddr_in addr = make_addr(opt_.host, opt_.port);

  const int fd = socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ServiceError(sys_error("socket"));
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string msg =
        sys_error("bind " + opt_.host + ":" + std::to_string(opt_.port));
    close(fd);
    throw ServiceError(msg);
  }
  if (listen(fd, 64) < 0) {
    const std::string msg = sys_error("listen");
    close(fd);
    throw ServiceError(msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  stopping_ = false;
  accept_thread_ = std::thread(&DecisionServer::accept_loop, this);
}

void DecisionServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  shutdown(listen_fd_, SHUT_RDWR);
  close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (int fd : open_fds_) shutdown(fd, SHUT_RDWR);
  }
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
}

void DecisionServer::accept_loop() {
  while (!stopping_) {
    const int fd = accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    set_nodelay(fd);
    const std::uint64_t idx = conn_counter_.fetch_add(1);
    std::lock_guard<std::mutex> lock(mu_);
    open_fds_.push_back(fd);
    workers_.emplace_back(&DecisionServer::handle_connection, this, fd, idx);
  }
}

void DecisionServer::handle_connection(int fd, std::uint64_t conn_index) {
  Rng rng(mix_seed(opt_.seed, conn_index));
  Rng delay_rng(mix_seed(opt_.seed, conn_index ^ 0x9D1Aull << 16));
  std::string buf;
  char chunk[4096];
  while (!stopping_) {
    const ssize_t n = recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (opt_.delay_fixed_ms > 0.0 || opt_.delay_jitter_ms > 0.0) {
        const double ms =
            opt_.delay_fixed_ms + delay_rng.uniform(0.0, opt_.delay_jitter_ms);
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
      }
      if (!send_all(fd, handle_line(line, rng) + "\n")) break;
    }
  }
  close(fd);
  std::lock_guard<std::mutex> lock(mu_);
  std::erase(open_fds_, fd);
}

std::string DecisionServer::handle_line(const std::string& line, Rng& rng) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    ++errors_;
    return error_line(0, kErrBadJson, "malformed JSON");
  }

  std::int64_t id = 0;
  if (j.contains("id")) {
    if (!j["id"].is_number_integer()) {
      ++errors_;
      return error_line(0, kErrBadRequest, "'id' must be an integer");
    }
    id = j["id"].get<std::int64_t>();
  }

  const auto fail = [&](int code, const std::string& msg) {
    ++errors_;
    return error_line(id, code, msg);
  };

  if (!j.contains("v") || !j["v"].is_number_integer())
    return fail(kErrBadRequest, "missing protocol version 'v'");
  if (j["v"].get<int>() != 1)
    return fail(kErrBadVersion,
                "unsupported protocol version " + j["v"].dump());
  if (!j.contains("id")) return fail(kErrBadRequest, "missing 'id'");
  if (!j.contains("obs") || !j["obs"].is_array())
    return fail(kErrBadRequest, "missing 'obs' array");
  std::vector<double> obs;
  obs.reserve(j["obs"].size());
  for (const auto& v : j["obs"]) {
    if (!v.is_number()) return fail(kErrBadRequest, "'obs' must hold numbers");
    obs.push_back(v.get<double>());
  }
  const int want = weights_.layers.front().in;
  if (static_cast<int>(obs.size()) != want)
    return fail(kErrBadWidth, "expected observation width " +
                                  std::to_string(want) + ", got " +
                                  std::to_string(obs.size()));

  std::string mode = "greedy";
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) return fail(kErrBadMode, "'mode' must be a string");
    mode = j["mode"].get<std::string>();
  }
  if (mode != "greedy" && mode != "boltzmann")
    return fail(kErrBadMode, "unknown mode '" + mode + "'");
  double tau = 1.0;
  if (j.contains("tau")) {
    if (!j["tau"].is_number()) return fail(kErrBadRequest, "'tau' must be a number");
    tau = j["tau"].get<double>();
    if (!(tau > 0.0)) return fail(kErrBadRequest, "'tau' must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      return fail(kErrBadRequest, "'seed' must be an integer");
    rng = Rng(j["seed"].get<std::uint64_t>());
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> q = forward(weights_, obs);
  const int action = mode == "greedy" ? argmax_lowest(q)
                                      : select_action_boltzmann(q, tau, rng);
  const auto t_us = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();

  ordered_json out;
  out["v"] = 1;
  out["id"] = id;
  out["action"] = action;
  out["q"] = q;
  out["t_us"] = t_us;
  ++served_;
  return out.dump();
}

std::string encode_request(const DecisionRequest& req) {
  ordered_json j;
  j["v"] = req.version;
  j["id"] = req.id;
  j["obs"] = req.obs;
  j["mode"] = req.mode;
  if (req.mode == "boltzmann") j["tau"] = req.tau;
  if (req.seed) j["seed"] = *req.seed;
  return j.dump();
}

DecisionResponse parse_response_line(const std::string& line) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw FormatError("malformed response line: " + line);
  DecisionResponse r;
  r.version = j.value("v", 0);
  r.id = j.value("id", std::int64_t{0});
  if (j.contains("error")) {
    WireError e;
    e.code = j["error"].value("code", 0);
    e.msg = j["error"].value("msg", "");
    r.error = std::move(e);
    return r;
  }
  if (!j.contains("action") || !j.contains("q"))
    throw FormatError("response missing 'action'/'q': " + line);
  r.action = j["action"].get<int>();
  r.q = j["q"].get<std::vector<double>>();
  r.t_us = j.value("t_us", std::int64_t{0});
  return r;
}

DecisionClient::DecisionClient(const std::string& host, int port,
                               int timeout_ms) {
  const sockaddr_in addr = make_addr(host, port);
  fd_ = socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ServiceError(sys_error("socket"));
  if (connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string msg =
        sys_error("connect " + host + ":" + std::to_string(port));
    close(fd_);
    fd_ = -1;
    throw ServiceError(msg);
  }
  set_nodelay(fd_);
  timeval tv{};
  tv.tv_sec = timeout_ms / 1000;
  tv.tv_usec = (timeout_ms % 1000) * 1000;
  setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

DecisionClient::~DecisionClient() {
  if (fd_ >= 0) close(fd_);
}

WireResult DecisionClient::roundtrip_line(const std::string& line) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!send_all(fd_, line + "\n")) throw ServiceError(sys_error("send"));
  std::size_t nl;
  while ((nl = buf_.find('\n')) == std::string::npos) {
    char chunk[4096];
    const ssize_t n = recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK))
      throw ServiceError("timeout waiting for response");
    if (n <= 0) throw ServiceError("connection closed by server");
    buf_.append(chunk, static_cast<std::size_t>(n));
  }
  WireResult res;
  res.rtt_us = std::chrono::duration_cast<std::chrono::microseconds>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
  std::string line_in = buf_.substr(0, nl);
  buf_.erase(0, nl + 1);
  if (!line_in.empty() && line_in.back() == '\r') line_in.pop_back();
  res.response = parse_response_line(line_in);
  return res;
}

WireResult DecisionClient::roundtrip(const DecisionRequest& req) {
  WireResult res = roundtrip_line(encode_request(req));
  if (res.response.version != req.version && !res.response.error)
    throw ServiceError("protocol version mismatch in response");
  return res;
}

WireResult request_decision(const std::string& host, int port,
                            const DecisionRequest& req, int timeout_ms) {
  DecisionClient client(host, port, timeout_ms);
  return client.roundtrip(req);
}

std::pair<std::string, int> parse_host_port(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw ConfigError("address '" + addr + "' must be host:port");
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("address '" + addr + "' has a non-numeric port");
  }
  if (port < 0 || port > 65535)
    throw ConfigError("port " + std::to_string(port) + " out of range");
  return {host, port};
}

}  // namespace mergeq
