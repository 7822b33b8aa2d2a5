#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgt/core.hpp"

namespace kgt {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  bool operator==(const Triple&) const = default;
};

enum class Split { train, valid, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    default: return "test";
  }
}

// Immutable once built; ids are dense and assigned in first-appearance order
// over train -> valid -> test.
struct KnowledgeGraph {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;  // covers inverses once augmented
  std::unordered_map<std::string, EntityId> entity_ids;
  std::unordered_map<std::string, RelationId> relation_ids;
  std::vector<std::string> entity_text;    // description, defaulting to the surface name
  std::vector<std::string> relation_text;  // relation name; "inverse of <name>" for inverses
  std::vector<Triple> train, valid, test;
  std::size_t base_relation_count = 0;
  bool augmented = false;

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }

  const std::vector<Triple>& split(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::valid: return valid;
      default: return test;
    }
  }

  RelationId inverse_of(RelationId r) const {
    const auto base = static_cast<RelationId>(base_relation_count);
    return r < base ? r + base : r - base;
  }
};

struct DatasetSchema {
  std::string train_file = "train.txt";
  std::string valid_file = "valid.txt";
  std::string test_file = "test.txt";
  std::string description_file = "descriptions.txt";  // optional on disk
};

namespace detail {

inline std::uint64_t pair_key(EntityId h, RelationId r) {
  return (static_cast<std::uint64_t>(h) << 32) | r;
}

inline std::uint64_t triple_key(const Triple& t) {
  return (static_cast<std::uint64_t>(t.head) << 40) ^ (static_cast<std::uint64_t>(t.relation) << 20) ^
         t.tail;
}

struct LoaderState {
  KnowledgeGraph kg;
  std::vector<Split> entity_first_split;
  std::vector<Split> relation_first_split;
  std::unordered_set<std::uint64_t> seen;  // split-disjointness check

  EntityId entity(const std::string& name, Split where) {
    auto it = kg.entity_ids.find(name);
    if (it != kg.entity_ids.end()) return it->second;
    const auto id = static_cast<EntityId>(kg.entity_names.size());
    kg.entity_ids.emplace(name, id);
    kg.entity_names.push_back(name);
    entity_first_split.push_back(where);
    return id;
  }

  RelationId relation(const std::string& name, Split where) {
    auto it = kg.relation_ids.find(name);
    if (it != kg.relation_ids.end()) return it->second;
    const auto id = static_cast<RelationId>(kg.relation_names.size());
    kg.relation_ids.emplace(name, id);
    kg.relation_names.push_back(name);
    relation_first_split.push_back(where);
    return id;
  }
};

inline void load_split(LoaderState& st, const std::filesystem::path& path, Split where,
                       std::vector<Triple>& out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triple file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                       ": expected 3 tab-separated fields");
    const std::string h = line.substr(0, t1);
    const std::string r = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string t = line.substr(t2 + 1);
    if (h.empty() || r.empty() || t.empty())
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": empty field");
    Triple triple{st.entity(h, where), st.relation(r, where), st.entity(t, where)};
    if (!st.seen.insert(triple_key(triple)).second) {
      // Duplicates within one split are tolerated; across splits they break
      // the disjointness invariant.
      bool in_this_split = false;
      for (const Triple& prev : out)
        if (prev == triple) {
          in_this_split = true;
          break;
        }
      if (!in_this_split)
        throw DataError(path.filename().string() + ":" + std::to_string(lineno) +
                        ": triple duplicated across splits");
    }
    out.push_back(triple);
  }
}

}  // namespace detail

inline KnowledgeGraph load_dataset(const std::filesystem::path& root, const DatasetSchema& schema = {}) {
  detail::LoaderState st;
  detail::load_split(st, root / schema.train_file, Split::train, st.kg.train);
  if (st.kg.train.empty()) throw DataError("empty-split: " + schema.train_file + " contains no triples");
  detail::load_split(st, root / schema.valid_file, Split::valid, st.kg.valid);
  detail::load_split(st, root / schema.test_file, Split::test, st.kg.test);

  // Descriptions: entity-name \t description. Entities without one fall back
  // to their surface name.
  st.kg.entity_text.assign(st.kg.num_entities(), {});
  std::vector<bool> described(st.kg.num_entities(), false);
  const auto desc_path = root / schema.description_file;
  if (std::filesystem::exists(desc_path)) {
    std::ifstream in(desc_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw ParseError(schema.description_file + ":" + std::to_string(lineno) +
                         ": expected entity\\tdescription");
      const std::string name = line.substr(0, tab);
      auto it = st.kg.entity_ids.find(name);
      if (it == st.kg.entity_ids.end()) continue;  // description for an unused entity
      st.kg.entity_text[it->second] = line.substr(tab + 1);
      described[it->second] = true;
    }
  }
  for (std::size_t e = 0; e < st.kg.num_entities(); ++e)
    if (st.kg.entity_text[e].empty()) st.kg.entity_text[e] = st.kg.entity_names[e];

  // Symbols first seen outside train must be backed by some vocabulary
  // source; the description file is the only other one for entities.
  for (std::size_t e = 0; e < st.kg.num_entities(); ++e)
    if (st.entity_first_split[e] != Split::train && !described[e])
      throw DataError("unknown-symbol: entity '" + st.kg.entity_names[e] + "' appears only in " +
                      split_name(st.entity_first_split[e]) + " and has no description");
  for (std::size_t r = 0; r < st.kg.num_relations(); ++r)
    if (st.relation_first_split[r] != Split::train)
      throw DataError("unknown-symbol: relation '" + st.kg.relation_names[r] + "' appears only in " +
                      split_name(st.relation_first_split[r]));

  st.kg.relation_text = st.kg.relation_names;
  st.kg.base_relation_count = st.kg.num_relations();
  return std::move(st.kg);
}

// Adds (t, r^-1, h) for every triple of every split and doubles the relation
// vocabulary. Inverse ids are base id + |R_base|.
inline void augment_inverses(KnowledgeGraph& kg) {
  if (kg.augmented) throw DataError("graph already inverse-augmented");
  const std::size_t base = kg.base_relation_count;
  kg.relation_names.reserve(2 * base);
  kg.relation_text.reserve(2 * base);
  for (std::size_t r = 0; r < base; ++r) {
    const std::string inv_name = kg.relation_names[r] + "^-1";
    if (kg.relation_ids.count(inv_name))
      throw DataError("inverse relation name collides with existing relation: " + inv_name);
    kg.relation_ids.emplace(inv_name, static_cast<RelationId>(base + r));
    kg.relation_names.push_back(inv_name);
    kg.relation_text.push_back("inverse of " + kg.relation_text[r]);
  }
  auto add_inverses = [&](std::vector<Triple>& split) {
    const std::size_t n = split.size();
    split.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const Triple& t = split[i];
      split.push_back({t.tail, static_cast<RelationId>(t.relation + base), t.head});
    }
  };
  add_inverses(kg.train);
  add_inverses(kg.valid);
  add_inverses(kg.test);
  kg.augmented = true;
}

enum class FilterPolicy { train_only, all_splits };

inline const char* policy_name(FilterPolicy p) {
  return p == FilterPolicy::train_only ? "train-only" : "all-splits";
}

// (head, relation) -> sorted set of known-true tails over the covered splits.
class FilterIndex {
 public:
  void add(EntityId h, RelationId r, EntityId t) {
    auto& v = map_[detail::pair_key(h, r)];
    const auto it = std::lower_bound(v.begin(), v.end(), t);
    if (it == v.end() || *it != t) v.insert(it, t);
  }

  bool contains(EntityId h, RelationId r, EntityId t) const {
    const auto it = map_.find(detail::pair_key(h, r));
    if (it == map_.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), t);
  }

  std::span<const EntityId> tails(EntityId h, RelationId r) const {
    const auto it = map_.find(detail::pair_key(h, r));
    if (it == map_.end()) return {};
    return it->second;
  }

  std::size_t num_keys() const { return map_.size(); }

 private:
  std::unordered_map<std::uint64_t, std::vector<EntityId>> map_;
};

inline FilterIndex build_filter_index(const KnowledgeGraph& kg, FilterPolicy policy = FilterPolicy::all_splits) {
  if (!kg.augmented) throw DataError("filter index requires an inverse-augmented graph");
  FilterIndex idx;
  auto cover = [&](const std::vector<Triple>& split) {
    for (const Triple& t : split) idx.add(t.head, t.relation, t.tail);
  };
  cover(kg.train);
  if (policy == FilterPolicy::all_splits) {
    cover(kg.valid);
    cover(kg.test);
  }
  return idx;
}

}  // namespace kgt
