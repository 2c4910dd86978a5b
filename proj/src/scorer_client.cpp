#include "covert/scorer_client.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "covert/errors.hpp"

namespace covert::scorer {

using nlohmann::json;

namespace {

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

ScoreReply parse_score(const json& msg, std::int64_t vocab_size) {
  if (!msg.contains("token_ids") || !msg["token_ids"].is_array()) {
    throw ProtocolError("score reply: missing token_ids array");
  }
  if (!msg.contains("surprisals") || !msg["surprisals"].is_array()) {
    throw ProtocolError("score reply: missing surprisals array");
  }
  ScoreReply r;
  for (const auto& v : msg["token_ids"]) {
    if (!v.is_number_integer()) throw ProtocolError("score reply: token id is not an integer");
    const auto id = v.get<std::int64_t>();
    if (id < 0 || id >= vocab_size) throw ProtocolError("score reply: token id outside vocabulary");
    r.token_ids.push_back(id);
  }
  for (const auto& v : msg["surprisals"]) {
    if (!v.is_number()) throw ProtocolError("score reply: surprisal is not a number");
    const double s = v.get<double>();
    if (!std::isfinite(s) || s < 0.0) throw ProtocolError("score reply: surprisal must be finite and >= 0");
    r.surprisals.push_back(s);
  }
  if (r.token_ids.empty()) throw ProtocolError("score reply: empty token list");
  if (r.surprisals.size() != r.token_ids.size() - 1) {
    throw ProtocolError("score reply: expected " + std::to_string(r.token_ids.size() - 1) + " surprisals, got " +
                        std::to_string(r.surprisals.size()));
  }
  return r;
}

}  // namespace

ScorerClient ScorerClient::launch(const std::vector<std::string>& argv, std::chrono::milliseconds timeout) {
  if (argv.empty()) throw ConfigError("scorer command is empty");
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) throw ProtocolError(sys_error("socketpair"));

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw ProtocolError(sys_error("fork"));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(sv[1]);
  return ScorerClient(sv[0], pid, timeout);
}

ScorerClient ScorerClient::launch_command(std::string_view command_line, std::chrono::milliseconds timeout) {
  std::istringstream in{std::string(command_line)};
  std::vector<std::string> argv;
  for (std::string w; in >> w;) argv.push_back(w);
  return launch(argv, timeout);
}

ScorerClient::ScorerClient(int fd, int pid, std::chrono::milliseconds timeout)
    : fd_(fd), pid_(pid), timeout_(timeout) {}

ScorerClient::ScorerClient(ScorerClient&& o) noexcept
    : fd_(std::exchange(o.fd_, -1)),
      pid_(std::exchange(o.pid_, -1)),
      timeout_(o.timeout_),
      buffer_(std::move(o.buffer_)),
      info_(std::move(o.info_)),
      next_id_(o.next_id_),
      outstanding_(std::move(o.outstanding_)),
      arrived_(std::move(o.arrived_)) {}

ScorerClient& ScorerClient::operator=(ScorerClient&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = std::exchange(o.fd_, -1);
    pid_ = std::exchange(o.pid_, -1);
    timeout_ = o.timeout_;
    buffer_ = std::move(o.buffer_);
    info_ = std::move(o.info_);
    next_id_ = o.next_id_;
    outstanding_ = std::move(o.outstanding_);
    arrived_ = std::move(o.arrived_);
  }
  return *this;
}

ScorerClient::~ScorerClient() { close(); }

void ScorerClient::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    // Closing the socket gives the child EOF; allow a short grace period.
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void ScorerClient::send_line(const std::string& line) {
  if (fd_ < 0) throw ProtocolError("scorer connection is closed");
  std::string framed = line + "\n";
  std::size_t off = 0;
  while (off < framed.size()) {
    const ssize_t n = ::send(fd_, framed.data() + off, framed.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(sys_error("scorer write"));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string ScorerClient::read_line() {
  if (fd_ < 0) throw ProtocolError("scorer connection is closed");
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimeoutError("scorer did not reply within " + std::to_string(timeout_.count()) + " ms");
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(sys_error("poll"));
    }
    if (rc == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ProtocolError(sys_error("scorer read"));
    }
    if (n == 0) throw ProtocolError("scorer closed the connection");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

const ScorerInfo& ScorerClient::handshake() {
  json reply;
  try {
    send_line(json{{"hello", {{"protocol", kProtocol}}}}.dump());
    reply = json::parse(read_line());
  } catch (const json::exception& e) {
    throw HandshakeError(std::string("malformed hello reply: ") + e.what());
  } catch (const HandshakeError&) {
    throw;
  } catch (const ProtocolError& e) {
    throw HandshakeError(std::string("handshake failed: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("hello") || !reply["hello"].is_object()) {
    throw HandshakeError("hello reply lacks a 'hello' object");
  }
  const auto& h = reply["hello"];
  if (h.contains("protocol")) {
    if (!h["protocol"].is_number_integer() || h["protocol"].get<std::int64_t>() != kProtocol) {
      throw VersionMismatchError("scorer speaks protocol " + h["protocol"].dump() + ", expected 1");
    }
  }
  if (!h.contains("vocab_size") || !h["vocab_size"].is_number_integer()) {
    throw HandshakeError("hello reply lacks an integer vocab_size");
  }
  const auto V = h["vocab_size"].get<std::int64_t>();
  if (V < 2) throw HandshakeError("scorer vocabulary size must be >= 2");
  info_.vocab_size = V;
  info_.name = h.contains("name") && h["name"].is_string() ? h["name"].get<std::string>() : std::string();
  return info_;
}

void ScorerClient::require_ready() const {
  if (!ready()) throw StateError("scorer: handshake has not completed");
}

std::uint64_t ScorerClient::send_score(const std::string& body_json) {
  require_ready();
  const std::uint64_t id = next_id_++;
  send_line("{\"id\":" + std::to_string(id) + ",\"score\":" + body_json + "}");
  outstanding_[id] = true;
  return id;
}

std::uint64_t ScorerClient::send_text(std::string_view text) {
  return send_score(json{{"text", std::string(text)}}.dump());
}

std::uint64_t ScorerClient::send_tokens(std::span<const std::int64_t> ids) {
  return send_score(json{{"token_ids", std::vector<std::int64_t>(ids.begin(), ids.end())}}.dump());
}

ScoreReply ScorerClient::receive(std::uint64_t id) {
  require_ready();
  if (!outstanding_.count(id)) throw StateError("scorer: no outstanding request with id " + std::to_string(id));
  while (!arrived_.count(id)) {
    json msg;
    try {
      msg = json::parse(read_line());
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("malformed scorer reply: ") + e.what());
    }
    if (!msg.is_object() || !msg.contains("id") || !msg["id"].is_number_unsigned()) {
      throw ProtocolError("scorer reply lacks an id");
    }
    const auto rid = msg["id"].get<std::uint64_t>();
    if (!outstanding_.count(rid) || arrived_.count(rid)) {
      throw ProtocolError("scorer reply id " + std::to_string(rid) + " does not match any outstanding request");
    }
    Pending p;
    if (msg.contains("error")) {
      p.is_error = true;
      const auto& e = msg["error"];
      p.error = e.is_object() && e.contains("message") && e["message"].is_string() ? e["message"].get<std::string>()
                                                                                   : e.dump();
    } else {
      p.reply = parse_score(msg, info_.vocab_size);
    }
    arrived_.emplace(rid, std::move(p));
  }
  Pending p = std::move(arrived_.at(id));
  arrived_.erase(id);
  outstanding_.erase(id);
  if (p.is_error) throw ScorerError(p.error);
  return std::move(p.reply);
}

ScoreReply ScorerClient::score_text(std::string_view text) { return receive(send_text(text)); }

ScoreReply ScorerClient::score_tokens(std::span<const std::int64_t> ids) { return receive(send_tokens(ids)); }

}  // namespace covert::scorer
