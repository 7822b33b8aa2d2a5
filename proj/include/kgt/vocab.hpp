#pragma once

#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgt/kg.hpp"

namespace kgt {

using TokenId = std::uint32_t;

inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kQueryToken = "<query>";
inline constexpr const char* kUnkToken = "<unk>";

// Base word/symbol tokens followed by one special token per entity and per
// augmented relation: entity e -> base_count + e, relation r -> base_count +
// |E| + r.
struct Vocabulary {
  std::vector<std::string> base_tokens;
  std::unordered_map<std::string, TokenId> base_ids;
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  TokenId bos = 0, query = 0, unk = 0;
  bool has_unk = false;

  std::size_t base_count() const { return base_tokens.size(); }
  std::size_t size() const { return base_count() + entity_count + relation_count; }

  bool is_special(TokenId id) const { return id >= base_count() && id < size(); }
  bool is_entity_token(TokenId id) const { return id >= base_count() && id < base_count() + entity_count; }
  bool is_relation_token(TokenId id) const {
    return id >= base_count() + entity_count && id < size();
  }
  EntityId entity_of(TokenId id) const { return static_cast<EntityId>(id - base_count()); }
  RelationId relation_of(TokenId id) const {
    return static_cast<RelationId>(id - base_count() - entity_count);
  }
  TokenId entity_token(EntityId e) const { return static_cast<TokenId>(base_count() + e); }
  TokenId relation_token(RelationId r) const {
    return static_cast<TokenId>(base_count() + entity_count + r);
  }

  TokenId word(const std::string& w) const {
    const auto it = base_ids.find(w);
    if (it != base_ids.end()) return it->second;
    if (has_unk) return unk;
    throw DataError("word not in base vocabulary and no <unk> token: " + w);
  }
};

// Scaffold words cover the templated prompt; minimal prompts only need the
// first three markers.
inline std::vector<std::string> default_base_tokens() {
  return {kBosToken, kQueryToken, kUnkToken,
          ":",       "(",         ")",
          "?",       "suppose",   "that",
          "you",     "are",       "an",
          "excellent", "linguist", "studying",
          "a",       "new",       "three",
          "word",    "language",  "for",
          "knowledge", "graph",   "given",
          "the",     "following", "dictionary",
          "input",   "type",      "description",
          "head",    "entity",    "relation",
          "please",  "complete",  "last",
          "of",      "sentence"};
}

inline Vocabulary extend_vocabulary(const KnowledgeGraph& kg, const std::vector<std::string>& base) {
  if (base.empty()) throw DataError("base token list is empty");
  Vocabulary v;
  v.base_tokens = base;
  for (TokenId id = 0; id < base.size(); ++id)
    if (!v.base_ids.emplace(base[id], id).second) throw DataError("duplicate base token: " + base[id]);
  const auto find = [&](const char* tok) -> TokenId {
    const auto it = v.base_ids.find(tok);
    if (it == v.base_ids.end()) throw DataError(std::string("base vocabulary lacks ") + tok);
    return it->second;
  };
  v.bos = find(kBosToken);
  v.query = find(kQueryToken);
  if (const auto it = v.base_ids.find(kUnkToken); it != v.base_ids.end()) {
    v.unk = it->second;
    v.has_unk = true;
  }
  v.entity_count = kg.num_entities();
  v.relation_count = kg.num_relations();
  return v;
}

// Lowercased alphanumeric words; punctuation is dropped here and inserted
// explicitly by prompt construction where the scaffold calls for it.
inline std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace kgt
