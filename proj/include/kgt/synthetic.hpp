#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kgt/features.hpp"
#include "kgt/kg.hpp"
#include "kgt/rng.hpp"

namespace kgt {

// Compositional toy graph: entities carry a visible (type, idx) pair and a
// hidden permutation position. "Semantic" relations shift the type and keep
// the idx, so they are predictable from entity text; "structural" relations
// follow the hidden permutation, so they are only learnable from the graph.
struct SynthConfig {
  std::size_t entities = 64;
  std::size_t types = 8;
  std::size_t semantic_relations = 5;
  std::size_t struct_relations = 3;  // pi, pi^2, pi^-1, then higher powers
  double train_frac = 0.70;
  double valid_frac = 0.15;
  std::uint64_t seed = 13;
};

namespace detail {

inline std::string synth_entity_name(std::size_t e) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "e%02zu", e);
  return buf;
}

inline std::string synth_relation_name(const SynthConfig& cfg, std::size_t r) {
  if (r < cfg.semantic_relations) return "shift" + std::to_string(r + 1);
  const std::size_t k = r - cfg.semantic_relations;
  if (k == 0) return "hop";
  if (k == 1) return "hophop";
  if (k == 2) return "hopinv";
  return "hoppow" + std::to_string(k + 1);
}

}  // namespace detail

struct SynthDataset {
  SynthConfig cfg;
  std::vector<std::size_t> pi;      // hidden permutation
  std::vector<Triple> train, valid, test;

  std::size_t num_relations() const { return cfg.semantic_relations + cfg.struct_relations; }

  std::size_t type_of(std::size_t e) const { return e / (cfg.entities / cfg.types); }
  std::size_t idx_of(std::size_t e) const { return e % (cfg.entities / cfg.types); }

  std::size_t tail_of(std::size_t h, std::size_t r) const {
    const std::size_t per_type = cfg.entities / cfg.types;
    if (r < cfg.semantic_relations) {
      const std::size_t t = (type_of(h) + 1 + r) % cfg.types;
      return t * per_type + idx_of(h);
    }
    const std::size_t k = r - cfg.semantic_relations;
    if (k == 0) return pi[h];
    if (k == 1) return pi[pi[h]];
    if (k == 2) {
      for (std::size_t e = 0; e < pi.size(); ++e)
        if (pi[e] == h) return e;
    }
    std::size_t t = h;
    for (std::size_t i = 0; i <= k; ++i) t = pi[t];
    return t;
  }
};

inline SynthDataset make_synthetic_dataset(const SynthConfig& cfg = {}) {
  if (cfg.entities % cfg.types != 0) throw UsageError("synthetic: entities must divide evenly into types");
  SynthDataset ds;
  ds.cfg = cfg;
  Rng rng(cfg.seed);
  ds.pi.resize(cfg.entities);
  for (std::size_t i = 0; i < cfg.entities; ++i) ds.pi[i] = i;
  rng.shuffle(ds.pi);

  for (std::size_t r = 0; r < ds.num_relations(); ++r) {
    std::vector<std::size_t> heads(cfg.entities);
    for (std::size_t h = 0; h < cfg.entities; ++h) heads[h] = h;
    rng.shuffle(heads);
    const auto n_train = static_cast<std::size_t>(cfg.train_frac * static_cast<double>(cfg.entities));
    const auto n_valid = static_cast<std::size_t>(cfg.valid_frac * static_cast<double>(cfg.entities));
    for (std::size_t i = 0; i < heads.size(); ++i) {
      const auto h = static_cast<EntityId>(heads[i]);
      const Triple t{h, static_cast<RelationId>(r), static_cast<EntityId>(ds.tail_of(heads[i], r))};
      if (i < n_train)
        ds.train.push_back(t);
      else if (i < n_train + n_valid)
        ds.valid.push_back(t);
      else
        ds.test.push_back(t);
    }
  }
  return ds;
}

inline std::string synth_entity_description(const SynthDataset& ds, std::size_t e) {
  return "kind " + std::to_string(ds.type_of(e)) + " item " + std::to_string(ds.idx_of(e)) + " code " +
         detail::synth_entity_name(e);
}

// Writes the dataset in the on-disk layout the loader expects.
inline void write_synthetic_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_split = [&](const std::vector<Triple>& split, const std::string& file) {
    std::ofstream out(dir / file);
    for (const Triple& t : split)
      out << detail::synth_entity_name(t.head) << "\t" << detail::synth_relation_name(ds.cfg, t.relation)
          << "\t" << detail::synth_entity_name(t.tail) << "\n";
  };
  write_split(ds.train, "train.txt");
  write_split(ds.valid, "valid.txt");
  write_split(ds.test, "test.txt");
  std::ofstream desc(dir / "descriptions.txt");
  for (std::size_t e = 0; e < ds.cfg.entities; ++e)
    desc << detail::synth_entity_name(e) << "\t" << synth_entity_description(ds, e) << "\n";
}

// In-memory equivalent of loading the written dataset (not yet augmented).
inline KnowledgeGraph make_synthetic_kg(const SynthDataset& ds) {
  KnowledgeGraph kg;
  for (std::size_t e = 0; e < ds.cfg.entities; ++e) {
    kg.entity_ids.emplace(detail::synth_entity_name(e), static_cast<EntityId>(e));
    kg.entity_names.push_back(detail::synth_entity_name(e));
    kg.entity_text.push_back(synth_entity_description(ds, e));
  }
  for (std::size_t r = 0; r < ds.num_relations(); ++r) {
    kg.relation_ids.emplace(detail::synth_relation_name(ds.cfg, r), static_cast<RelationId>(r));
    kg.relation_names.push_back(detail::synth_relation_name(ds.cfg, r));
    kg.relation_text.push_back(detail::synth_relation_name(ds.cfg, r));
  }
  kg.base_relation_count = ds.num_relations();
  kg.train = ds.train;
  kg.valid = ds.valid;
  kg.test = ds.test;
  // Ids here do not follow first-appearance order; the loader path is the
  // contract, this helper just needs consistent ids for in-process use.
  return kg;
}

// Text features that reveal (type, idx) for entities and identity for
// relations, in disjoint blocks. The visible pair identifies every entity
// uniquely while staying silent about the hidden permutation.
inline FeatureMatrix make_synthetic_entity_text(const SynthDataset& ds, std::size_t num_relations_aug) {
  const std::size_t per_type = ds.cfg.entities / ds.cfg.types;
  const std::size_t d_t = ds.cfg.types + per_type + num_relations_aug;
  FeatureMatrix m(ds.cfg.entities, d_t);
  for (std::size_t e = 0; e < ds.cfg.entities; ++e) {
    auto row = m.row(e);
    row[ds.type_of(e)] = 1.0f;
    row[ds.cfg.types + ds.idx_of(e)] = 1.0f;
  }
  return m;
}

inline FeatureMatrix make_synthetic_relation_text(const SynthDataset& ds, std::size_t num_relations_aug) {
  const std::size_t per_type = ds.cfg.entities / ds.cfg.types;
  const std::size_t d_t = ds.cfg.types + per_type + num_relations_aug;
  FeatureMatrix m(num_relations_aug, d_t);
  for (std::size_t r = 0; r < num_relations_aug; ++r)
    m(r, ds.cfg.types + per_type + r) = 1.0f;
  return m;
}

}  // namespace kgt
