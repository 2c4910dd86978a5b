#include "covert/pcae.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "covert/errors.hpp"

namespace covert::pcae {

// -- types -----------------------------------------------------------------

void TokenSequence::validate() const {
  if (vocab_size < 1) throw DomainError("token sequence: vocabulary size must be >= 1");
  if (ids.empty()) throw DomainError("token sequence: empty");
  for (TokenId id : ids) {
    if (id < 0 || id >= vocab_size) {
      throw DomainError("token sequence: id " + std::to_string(id) + " outside [0, " +
                        std::to_string(vocab_size) + ")");
    }
  }
}

void CompressionConfig::validate() const {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw DomainError("compression ratio must be in (0, 1]");
}

void EncryptionKey::validate() const {
  if (vocab_size < 1) throw DomainError("key: vocabulary size must be >= 1");
  if (r_min < 0 || r_min > r_max) throw DomainError("key: need 0 <= r_min <= r_max");
  if (r_max >= vocab_size) throw DomainError("key: r_max must be < V");
  if (perm.empty()) throw DomainError("key: empty");
  if (offsets.size() != perm.size()) throw ShapeError("key: offsets and perm lengths differ");
  for (auto o : offsets) {
    if (o < r_min || o > r_max) throw DomainError("key: offset outside [r_min, r_max]");
  }
  std::vector<char> seen(perm.size(), 0);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p]) throw DomainError("key: perm is not a permutation");
    seen[p] = 1;
  }
}

// -- scoring ---------------------------------------------------------------

SurprisalVector score_unigram(const TokenSequence& tokens, std::span<const double> counts) {
  tokens.validate();
  if (counts.size() != static_cast<std::size_t>(tokens.vocab_size)) {
    throw ShapeError("score_unigram: count table size differs from vocabulary size");
  }
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("score_unigram: counts must be finite and >= 0");
    total += c;
  }
  if (!(total > 0.0)) throw DomainError("score_unigram: corpus has zero mass");
  const double denom = total + static_cast<double>(tokens.vocab_size);
  SurprisalVector out;
  out.scores.reserve(tokens.size() - 1);
  for (std::size_t l = 1; l < tokens.size(); ++l) {
    const double rho = (counts[static_cast<std::size_t>(tokens.ids[l])] + 1.0) / denom;
    out.scores.push_back(-std::log(rho));
  }
  return out;
}

SurprisalVector surprisal_from_logits(std::span<const std::vector<double>> logit_rows,
                                      const TokenSequence& tokens) {
  tokens.validate();
  if (logit_rows.size() != tokens.size() - 1) {
    throw ShapeError("surprisal_from_logits: need one logit row per predicted position");
  }
  const auto V = static_cast<std::size_t>(tokens.vocab_size);
  SurprisalVector out;
  out.scores.reserve(logit_rows.size());
  for (std::size_t l = 0; l < logit_rows.size(); ++l) {
    const auto& row = logit_rows[l];
    if (row.size() != V) throw ShapeError("surprisal_from_logits: row length differs from V");
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double zmax = row[top];
    if (!std::isfinite(zmax)) throw DomainError("surprisal_from_logits: non-finite logits");
    double rest = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      if (v != top) rest += std::exp(row[v] - zmax);
    }
    const double log_norm = rest >= 1.0 ? std::log(1.0 + rest) : std::log1p(rest);
    const auto next = static_cast<std::size_t>(tokens.ids[l + 1]);
    out.scores.push_back((zmax - row[next]) + log_norm);
  }
  return out;
}

// -- compression -----------------------------------------------------------

std::size_t compressed_length(std::size_t L, double kappa) {
  const double target = std::floor(kappa * static_cast<double>(L));
  return std::max<std::size_t>(1, static_cast<std::size_t>(target));
}

std::vector<std::size_t> select_positions(const TokenSequence& tokens,
                                          const SurprisalVector& scores,
                                          const CompressionConfig& cfg) {
  tokens.validate();
  cfg.validate();
  const std::size_t L = tokens.size();
  if (scores.scores.size() != L - 1) {
    throw ShapeError("compress: surprisal vector length must be L - 1");
  }
  const std::size_t target = compressed_length(L, cfg.kappa);
  const std::size_t n_head = std::min(cfg.head, L);
  const std::size_t n_tail = std::min(cfg.tail, L - n_head);

  std::vector<std::size_t> reserved(n_head);
  std::iota(reserved.begin(), reserved.end(), std::size_t{0});
  for (std::size_t p = L - n_tail; p < L; ++p) reserved.push_back(p);

  if (target <= reserved.size()) {
    reserved.resize(target);
    return reserved;
  }

  // Middle positions ranked by surprisal, earlier position first on ties.
  // Position 0 has no score; it ranks above every scored token.
  const std::size_t keep = target - reserved.size();
  std::vector<std::size_t> middle(L - n_tail - n_head);
  std::iota(middle.begin(), middle.end(), n_head);
  auto score_of = [&](std::size_t p) {
    return p == 0 ? std::numeric_limits<double>::infinity() : scores.scores[p - 1];
  };
  std::partial_sort(middle.begin(), middle.begin() + static_cast<std::ptrdiff_t>(keep), middle.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = score_of(a);
                      const double sb = score_of(b);
                      return sa != sb ? sa > sb : a < b;
                    });
  middle.resize(keep);
  reserved.insert(reserved.end(), middle.begin(), middle.end());
  std::sort(reserved.begin(), reserved.end());
  return reserved;
}

TokenSequence compress(const TokenSequence& tokens, const SurprisalVector& scores,
                       const CompressionConfig& cfg) {
  const auto positions = select_positions(tokens, scores, cfg);
  TokenSequence out{{}, tokens.vocab_size};
  out.ids.reserve(positions.size());
  for (auto p : positions) out.ids.push_back(tokens.ids[p]);
  return out;
}

// -- encryption ------------------------------------------------------------

EncryptionKey generate_key(std::size_t L_prime, std::int64_t vocab_size, std::int64_t r_min,
                           std::int64_t r_max, Rng& rng) {
  if (L_prime < 1) throw DomainError("generate_key: L' must be >= 1");
  if (r_max >= vocab_size) throw DomainError("generate_key: r_max must be < V");
  if (r_min < 0 || r_min > r_max) throw DomainError("generate_key: need 0 <= r_min <= r_max");
  EncryptionKey key;
  key.vocab_size = vocab_size;
  key.r_min = r_min;
  key.r_max = r_max;
  key.offsets.resize(L_prime);
  for (auto& o : key.offsets) o = rng.uniform_int(r_min, r_max);
  key.perm.resize(L_prime);
  std::iota(key.perm.begin(), key.perm.end(), std::size_t{0});
  for (std::size_t i = L_prime - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(key.perm[i], key.perm[j]);
  }
  return key;
}

namespace {

void check_compatible(const TokenSequence& tokens, const EncryptionKey& key) {
  tokens.validate();
  key.validate();
  if (tokens.size() != key.size()) throw ShapeError("key length differs from sequence length");
  if (tokens.vocab_size != key.vocab_size) throw ShapeError("key vocabulary differs from sequence vocabulary");
}

std::int64_t mod(std::int64_t a, std::int64_t m) {
  const std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

TokenSequence apply_offsets(const TokenSequence& tokens, const EncryptionKey& key) {
  check_compatible(tokens, key);
  TokenSequence out{tokens.ids, tokens.vocab_size};
  for (std::size_t l = 0; l < out.size(); ++l) out.ids[l] = mod(out.ids[l] + key.offsets[l], key.vocab_size);
  return out;
}

TokenSequence encrypt(const TokenSequence& tokens, const EncryptionKey& key) {
  const TokenSequence shifted = apply_offsets(tokens, key);
  TokenSequence out{std::vector<TokenId>(tokens.size()), tokens.vocab_size};
  for (std::size_t l = 0; l < out.size(); ++l) out.ids[l] = shifted.ids[key.perm[l]];
  return out;
}

TokenSequence decrypt(const TokenSequence& tokens, const EncryptionKey& key) {
  check_compatible(tokens, key);
  TokenSequence out{std::vector<TokenId>(tokens.size()), tokens.vocab_size};
  for (std::size_t l = 0; l < out.size(); ++l) out.ids[key.perm[l]] = tokens.ids[l];
  for (std::size_t l = 0; l < out.size(); ++l) out.ids[l] = mod(out.ids[l] - key.offsets[l], key.vocab_size);
  return out;
}

// -- fidelity --------------------------------------------------------------

FidelityModel FidelityModel::from_name(std::string_view name) {
  FidelityModel m;
  if (name == "analytic") {
    m.kind = FidelityKind::Analytic;
  } else if (name == "embedding-cosine") {
    m.kind = FidelityKind::EmbeddingCosine;
  } else {
    throw ConfigError("unknown fidelity model '" + std::string(name) + "'");
  }
  return m;
}

std::string FidelityModel::name() const {
  return kind == FidelityKind::Analytic ? "analytic" : "embedding-cosine";
}

void FidelityModel::validate() const {
  if (!(f_lo >= 0.0 && f_lo <= f_hi && f_hi <= 1.0)) throw ConfigError("fidelity: need 0 <= f_lo <= f_hi <= 1");
  if (!(power > 0.0)) throw ConfigError("fidelity: exponent must be > 0");
  if (embedding_dim < 1) throw ConfigError("fidelity: embedding dimension must be >= 1");
}

double analytic_fidelity(double kappa_effective, const FidelityModel& model) {
  const double k = std::clamp(kappa_effective, 0.0, 1.0);
  return model.f_hi - (model.f_hi - model.f_lo) * std::pow(1.0 - k, model.power);
}

std::vector<double> token_embedding(TokenId id, std::size_t dim) {
  Rng rng(mix64(static_cast<std::uint64_t>(id) ^ 0x5eed0f7e6b3a11ceULL));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

double fidelity(const TokenSequence& reference, const TokenSequence& candidate,
                const FidelityModel& model) {
  if (reference.ids.empty()) throw DomainError("fidelity: empty reference");
  if (model.kind == FidelityKind::Analytic) {
    return analytic_fidelity(static_cast<double>(candidate.size()) / static_cast<double>(reference.size()),
                             model);
  }
  if (candidate.ids.empty()) return 0.0;

  std::vector<TokenId> cand_ids(candidate.ids);
  std::sort(cand_ids.begin(), cand_ids.end());
  cand_ids.erase(std::unique(cand_ids.begin(), cand_ids.end()), cand_ids.end());
  const std::size_t dim = model.embedding_dim;
  std::vector<double> cand_vecs;
  cand_vecs.reserve(cand_ids.size() * dim);
  for (auto id : cand_ids) {
    auto e = token_embedding(id, dim);
    cand_vecs.insert(cand_vecs.end(), e.begin(), e.end());
  }

  std::unordered_map<TokenId, double> best_cache;
  double sum = 0.0;
  for (auto id : reference.ids) {
    auto it = best_cache.find(id);
    if (it == best_cache.end()) {
      double best = -1.0;
      if (std::binary_search(cand_ids.begin(), cand_ids.end(), id)) {
        best = 1.0;
      } else {
        const auto e = token_embedding(id, dim);
        for (std::size_t c = 0; c < cand_ids.size(); ++c) {
          double dot = 0.0;
          const double* cv = cand_vecs.data() + c * dim;
          for (std::size_t k = 0; k < dim; ++k) dot += e[k] * cv[k];
          best = std::max(best, dot);
        }
      }
      it = best_cache.emplace(id, best).first;
    }
    sum += it->second;
  }
  const double mean_cos = sum / static_cast<double>(reference.size());
  return std::clamp((mean_cos + 1.0) / 2.0, 0.0, 1.0);
}

// -- tokenizer -------------------------------------------------------------

Vocabulary::Vocabulary() { add(std::string(kUnknown)); }

TokenId Vocabulary::add(const std::string& piece) {
  auto [it, inserted] = index_.emplace(piece, static_cast<TokenId>(pieces_.size()));
  if (inserted) pieces_.push_back(piece);
  return it->second;
}

std::vector<std::string> Vocabulary::split(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

TokenSequence Vocabulary::encode(std::string_view text, bool grow) {
  TokenSequence seq;
  for (const auto& piece : split(text)) seq.ids.push_back(grow ? add(piece) : id_of(piece));
  seq.vocab_size = size();
  return seq;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += piece(id);
  }
  return out;
}

TokenId Vocabulary::id_of(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? 0 : it->second;
}

const std::string& Vocabulary::piece(TokenId id) const {
  if (id < 0 || id >= size()) throw DomainError("vocabulary: id out of range");
  return pieces_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write vocabulary " + path);
  for (const auto& p : pieces_) f << p << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read vocabulary " + path);
  Vocabulary v;
  v.pieces_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(f, line)) v.add(line);
  if (v.pieces_.empty() || v.pieces_[0] != kUnknown) throw FormatError("vocabulary must start with <unk>");
  return v;
}

// -- file formats ----------------------------------------------------------

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void dump(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
}

}  // namespace

std::string format_tokens(const TokenSequence& tokens) {
  std::string out = "# vocab=" + std::to_string(tokens.vocab_size) + "\n";
  for (auto id : tokens.ids) out += std::to_string(id) + "\n";
  return out;
}

TokenSequence parse_tokens(std::string_view text) {
  TokenSequence seq;
  bool have_header = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto at = line.find("vocab=");
      if (at == std::string::npos) continue;
      try {
        seq.vocab_size = std::stoll(line.substr(at + 6));
      } catch (const std::exception&) {
        throw FormatError("token file: bad vocab header");
      }
      have_header = true;
      continue;
    }
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(line, &used);
    } catch (const std::exception&) {
      throw FormatError("token file: line " + std::to_string(line_no) + " is not an integer");
    }
    if (used != line.size()) throw FormatError("token file: trailing characters on line " + std::to_string(line_no));
    seq.ids.push_back(v);
  }
  if (!have_header) throw FormatError("token file: missing '# vocab=V' header");
  seq.validate();
  return seq;
}

void write_tokens(const std::string& path, const TokenSequence& tokens) { dump(path, format_tokens(tokens)); }

TokenSequence read_tokens(const std::string& path) { return parse_tokens(slurp(path)); }

std::string format_key(const EncryptionKey& key) {
  nlohmann::ordered_json j;
  j["V"] = key.vocab_size;
  j["r_min"] = key.r_min;
  j["r_max"] = key.r_max;
  j["offsets"] = key.offsets;
  j["perm"] = key.perm;
  return j.dump() + "\n";
}

EncryptionKey parse_key(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("key file: ") + e.what());
  }
  auto integer = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field)) throw FormatError(std::string("key file: missing field ") + field);
    const auto& v = j.at(field);
    if (!v.is_number_integer()) throw FormatError(std::string("key file: field ") + field + " must be an integer");
    return v;
  };
  auto int_array = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field) || !j.at(field).is_array()) {
      throw FormatError(std::string("key file: field ") + field + " must be an array");
    }
    for (const auto& v : j.at(field)) {
      if (!v.is_number_integer()) throw FormatError(std::string("key file: ") + field + " must hold integers");
    }
    return j.at(field);
  };
  if (!j.is_object()) throw FormatError("key file: expected an object");
  EncryptionKey key;
  key.vocab_size = integer("V").get<std::int64_t>();
  key.r_min = integer("r_min").get<std::int64_t>();
  key.r_max = integer("r_max").get<std::int64_t>();
  key.offsets = int_array("offsets").get<std::vector<std::int64_t>>();
  for (const auto& p : int_array("perm")) {
    if (p.get<std::int64_t>() < 0) throw FormatError("key file: negative perm entry");
    key.perm.push_back(p.get<std::size_t>());
  }
  key.validate();
  return key;
}

void write_key(const std::string& path, const EncryptionKey& key) { dump(path, format_key(key)); }

EncryptionKey read_key(const std::string& path) { return parse_key(slurp(path)); }

}  // namespace covert::pcae
