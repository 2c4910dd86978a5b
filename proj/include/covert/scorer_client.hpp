#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covert/pcae.hpp"

namespace covert::scorer {

struct ScorerInfo {
  std::int64_t vocab_size = 0;
  std::string name;
};

struct ScoreReply {
  std::vector<std::int64_t> token_ids;
  std::vector<double> surprisals;

  pcae::TokenSequence tokens(std::int64_t vocab_size) const { return {token_ids, vocab_size}; }
  pcae::SurprisalVector scores() const { return {surprisals}; }
};

/// Client for an external surprisal scorer speaking line-delimited JSON on
/// its stdin/stdout.
///
///   auto s = ScorerClient::launch({"python3", "-m", "scorer_bridge"});
///   s.handshake();
///   auto r = s.score_text("some prompt");
///
/// A client owns its child process. It is not safe for concurrent use.
class ScorerClient {
 public:
  static constexpr int kProtocol = 1;
  static constexpr std::chrono::milliseconds kDefaultTimeout{30000};

  /// Starts argv[0] (PATH lookup) with the remaining arguments.
  static ScorerClient launch(const std::vector<std::string>& argv,
                             std::chrono::milliseconds timeout = kDefaultTimeout);

  /// Splits a shell-like command line on whitespace and launches it.
  static ScorerClient launch_command(std::string_view command_line,
                                     std::chrono::milliseconds timeout = kDefaultTimeout);

  ScorerClient(ScorerClient&& other) noexcept;
  ScorerClient& operator=(ScorerClient&& other) noexcept;
  ScorerClient(const ScorerClient&) = delete;
  ScorerClient& operator=(const ScorerClient&) = delete;
  ~ScorerClient();

  /// Sends the hello request and records the scorer's vocabulary size.
  /// Any failure is reported as HandshakeError (VersionMismatchError for a
  /// protocol other than 1).
  const ScorerInfo& handshake();

  bool ready() const { return info_.vocab_size > 0; }
  const ScorerInfo& info() const { return info_; }

  ScoreReply score_text(std::string_view text);
  ScoreReply score_tokens(std::span<const std::int64_t> ids);

  /// Pipelined form: send now, collect later by id. Replies arriving for
  /// other outstanding ids are buffered.
  std::uint64_t send_text(std::string_view text);
  std::uint64_t send_tokens(std::span<const std::int64_t> ids);
  ScoreReply receive(std::uint64_t id);

  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }

 private:
  struct Pending {
    bool is_error = false;
    std::string error;
    ScoreReply reply;
  };

  ScorerClient(int fd, int pid, std::chrono::milliseconds timeout);

  void send_line(const std::string& line);
  std::string read_line();
  std::uint64_t send_score(const std::string& body_json);
  void require_ready() const;
  void close();

  int fd_ = -1;
  int pid_ = -1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
  ScorerInfo info_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, bool> outstanding_;
  std::map<std::uint64_t, Pending> arrived_;
};

}  // namespace covert::scorer
