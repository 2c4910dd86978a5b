// Scripted scorer process for client tests.
//
//   mock_scorer [mode] [vocab]
//
// Modes: ok, missing-vocab, protocol2, garbage, silent-hello, reverse,
// bad-id, negative, short, silent, crash.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

using nlohmann::json;

namespace {

std::int64_t word_id(const std::string& w, std::int64_t V) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : w) h = (h ^ c) * 1099511628211ULL;
  return static_cast<std::int64_t>(h % static_cast<std::uint64_t>(V));
}

json reply_for(const json& req, std::int64_t V) {
  const auto id = req["id"];
  const auto& body = req["score"];
  std::vector<std::int64_t> ids;
  if (body.contains("token_ids")) {
    ids = body["token_ids"].get<std::vector<std::int64_t>>();
  } else {
    std::istringstream in(body["text"].get<std::string>());
    for (std::string w; in >> w;) ids.push_back(word_id(w, V));
  }
  if (ids.empty()) return {{"id", id}, {"error", {{"message", "empty input"}}}};
  std::vector<double> s;
  for (std::size_t l = 1; l < ids.size(); ++l) s.push_back(static_cast<double>(ids[l] % 97) / 8.0);
  return {{"id", id}, {"token_ids", ids}, {"surprisals", s}};
}

void emit(const json& j) { std::cout << j.dump() << '\n' << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "ok";
  const std::int64_t V = argc > 2 ? std::stoll(argv[2]) : 151936;

  std::string line;
  std::vector<json> held;
  while (std::getline(std::cin, line)) {
    json req = json::parse(line);
    if (req.contains("hello")) {
      if (mode == "missing-vocab") {
        emit({{"hello", {{"name", "mock"}}}});
      } else if (mode == "protocol2") {
        emit({{"hello", {{"protocol", 2}, {"vocab_size", V}, {"name", "mock"}}}});
      } else if (mode == "garbage") {
        std::cout << "this is not json\n" << std::flush;
      } else if (mode == "silent-hello") {
        continue;
      } else {
        emit({{"hello", {{"vocab_size", V}, {"name", "mock"}}}});
      }
      continue;
    }
    if (mode == "silent") continue;
    if (mode == "crash") return 3;
    json rep = reply_for(req, V);
    if (mode == "bad-id") {
      rep["id"] = rep["id"].get<std::int64_t>() + 100;
    } else if (mode == "negative" && rep.contains("surprisals") && !rep["surprisals"].empty()) {
      rep["surprisals"][0] = -1.0;
    } else if (mode == "short" && rep.contains("surprisals")) {
      rep["surprisals"].push_back(0.5);
    }
    if (mode == "reverse") {
      // Answer in pairs, newest first, after a short delay.
      held.push_back(rep);
      if (held.size() == 2) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        emit(held[1]);
        emit(held[0]);
        held.clear();
      }
      continue;
    }
    emit(rep);
  }
  return 0;
}
