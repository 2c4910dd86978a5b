#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "covert/rng.hpp"

namespace covert::pcae {

using TokenId = std::int64_t;

/// Token IDs over a vocabulary of size V. Every id lies in [0, V).
struct TokenSequence {
  std::vector<TokenId> ids;
  std::int64_t vocab_size = 0;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;

  /// Throws DomainError on an empty sequence or an out-of-range id.
  void validate() const;
};

/// Per-token surprisal in nats for positions 2..L (the first token has no
/// history and is not scored). scores[i] belongs to token i + 1.
struct SurprisalVector {
  std::vector<double> scores;
};

struct CompressionConfig {
  double kappa = 1.0;       ///< compression ratio in (0, 1]
  std::size_t head = 15;    ///< head reserve N_h
  std::size_t tail = 15;    ///< tail reserve N_t

  void validate() const;
};

/// Pre-shared secret: positional offsets plus a permutation.
/// perm[l] is the offset-stage position emitted at output position l.
struct EncryptionKey {
  std::vector<std::int64_t> offsets;
  std::vector<std::size_t> perm;
  std::int64_t vocab_size = 0;
  std::int64_t r_min = 0;
  std::int64_t r_max = 0;

  std::size_t size() const { return perm.size(); }
  bool operator==(const EncryptionKey&) const = default;
  void validate() const;
};

// -- scoring ---------------------------------------------------------------

/// Unigram surprisal -ln rho(x) with add-one smoothing over the vocabulary:
/// rho(v) = (counts[v] + 1) / (sum(counts) + V). `counts` has one
/// (possibly fractional) frequency per vocabulary entry.
SurprisalVector score_unigram(const TokenSequence& tokens, std::span<const double> counts);

/// Surprisal from language-model logits. Row l (0-based) holds the logits
/// that predict token l + 1, so there are L - 1 rows of length V.
/// Log-sum-exp is evaluated relative to the row maximum.
SurprisalVector surprisal_from_logits(std::span<const std::vector<double>> logit_rows,
                                      const TokenSequence& tokens);

// -- compression -----------------------------------------------------------

std::size_t compressed_length(std::size_t L, double kappa);

/// Original positions (0-based, strictly increasing) retained by compress().
std::vector<std::size_t> select_positions(const TokenSequence& tokens,
                                          const SurprisalVector& scores,
                                          const CompressionConfig& cfg);

/// Head/tail preserving top-surprisal compression. Retains max(1, floor(kappa L))
/// tokens in original order.
TokenSequence compress(const TokenSequence& tokens, const SurprisalVector& scores,
                       const CompressionConfig& cfg);

// -- encryption ------------------------------------------------------------

EncryptionKey generate_key(std::size_t L_prime, std::int64_t vocab_size, std::int64_t r_min,
                           std::int64_t r_max, Rng& rng);

/// Stage one only: (x[l] + offsets[l]) mod V.
TokenSequence apply_offsets(const TokenSequence& tokens, const EncryptionKey& key);

TokenSequence encrypt(const TokenSequence& tokens, const EncryptionKey& key);
TokenSequence decrypt(const TokenSequence& tokens, const EncryptionKey& key);

// -- fidelity --------------------------------------------------------------

enum class FidelityKind { EmbeddingCosine, Analytic };

struct FidelityModel {
  FidelityKind kind = FidelityKind::Analytic;
  double f_hi = 0.95;
  double f_lo = 0.70;
  double power = 1.5;
  std::size_t embedding_dim = 64;

  /// "analytic" or "embedding-cosine"; anything else is a ConfigError.
  static FidelityModel from_name(std::string_view name);
  std::string name() const;
  void validate() const;
};

/// Analytic surrogate f_hi - (f_hi - f_lo) (1 - kappa_eff)^p, kappa_eff
/// clamped to [0, 1].
double analytic_fidelity(double kappa_effective, const FidelityModel& model);

/// Deterministic pseudo-random unit vector for a token id.
std::vector<double> token_embedding(TokenId id, std::size_t dim);

double fidelity(const TokenSequence& reference, const TokenSequence& candidate,
                const FidelityModel& model);

// -- tokenizer -------------------------------------------------------------

/// Whitespace + punctuation tokenizer with a persisted integer vocabulary.
/// Id 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  Vocabulary();

  static std::vector<std::string> split(std::string_view text);

  /// Adds unseen pieces when `grow` is set, otherwise maps them to id 0.
  TokenSequence encode(std::string_view text, bool grow = false);
  std::string decode(std::span<const TokenId> ids) const;

  std::int64_t size() const { return static_cast<std::int64_t>(pieces_.size()); }
  TokenId id_of(std::string_view piece) const;
  const std::string& piece(TokenId id) const;

  /// One piece per line; line number is the id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  TokenId add(const std::string& piece);

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
};

// -- file formats ----------------------------------------------------------

/// Token file: "# vocab=V" header, then one integer per line.
std::string format_tokens(const TokenSequence& tokens);
TokenSequence parse_tokens(std::string_view text);
void write_tokens(const std::string& path, const TokenSequence& tokens);
TokenSequence read_tokens(const std::string& path);

/// Key file: one JSON object, fields in the order V, r_min, r_max, offsets,
/// perm; integers only; newline terminated.
std::string format_key(const EncryptionKey& key);
EncryptionKey parse_key(std::string_view text);
void write_key(const std::string& path, const EncryptionKey& key);
EncryptionKey read_key(const std::string& path);

}  // namespace covert::pcae
