#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "kgt/kg.hpp"
#include "kgt/rng.hpp"
#include "kgt/synthetic.hpp"

namespace fs = std::filesystem;
using namespace kgt;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("kgt_test_" + std::to_string(Catch::rngSeed()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

fs::path write_toy_dataset(const TempDir& dir) {
  write_file(dir.path / "train.txt", "a\tlikes\tb\nb\tlikes\tc\na\tlikes\tc\n");
  write_file(dir.path / "valid.txt", "c\tlikes\ta\n");
  write_file(dir.path / "test.txt", "c\tlikes\tb\n");
  write_file(dir.path / "descriptions.txt", "a\tfirst letter\nb\tsecond letter\n");
  return dir.path;
}

}  // namespace

TEST_CASE("load_dataset assigns dense first-appearance ids") {
  TempDir dir;
  write_toy_dataset(dir);
  const KnowledgeGraph kg = load_dataset(dir.path);
  REQUIRE(kg.num_entities() == 3);
  REQUIRE(kg.base_relation_count == 1);
  REQUIRE(kg.train.size() == 3);
  REQUIRE(kg.valid.size() == 1);
  REQUIRE(kg.test.size() == 1);
  CHECK(kg.entity_ids.at("a") == 0);
  CHECK(kg.entity_ids.at("b") == 1);
  CHECK(kg.entity_ids.at("c") == 2);
  CHECK(kg.entity_text[0] == "first letter");
  CHECK(kg.entity_text[2] == "c");  // fallback to surface name
  // Round trip: ids map back to the original surface strings.
  for (const Triple& t : kg.train) {
    CHECK(kg.entity_ids.at(kg.entity_names[t.head]) == t.head);
    CHECK(kg.relation_ids.at(kg.relation_names[t.relation]) == t.relation);
    CHECK(kg.entity_ids.at(kg.entity_names[t.tail]) == t.tail);
  }
}

TEST_CASE("load_dataset rejects malformed and degenerate inputs") {
  SECTION("wrong field count carries the line number") {
    TempDir dir;
    write_toy_dataset(dir);
    write_file(dir.path / "train.txt", "a\tlikes\tb\nbad line without tabs\n");
    try {
      load_dataset(dir.path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("train.txt:2") != std::string::npos);
    }
  }
  SECTION("empty train split") {
    TempDir dir;
    write_toy_dataset(dir);
    write_file(dir.path / "train.txt", "");
    try {
      load_dataset(dir.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("empty-split") != std::string::npos);
    }
  }
  SECTION("entity only in test without description is unknown") {
    TempDir dir;
    write_toy_dataset(dir);
    write_file(dir.path / "test.txt", "ghost\tlikes\ta\n");
    try {
      load_dataset(dir.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("unknown-symbol") != std::string::npos);
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }
  SECTION("relation only in valid is unknown") {
    TempDir dir;
    write_toy_dataset(dir);
    write_file(dir.path / "valid.txt", "a\thates\tb\n");
    REQUIRE_THROWS_AS(load_dataset(dir.path), DataError);
  }
  SECTION("entity only in valid but described is accepted") {
    TempDir dir;
    write_toy_dataset(dir);
    write_file(dir.path / "valid.txt", "d\tlikes\ta\n");
    write_file(dir.path / "descriptions.txt", "d\tfourth letter\n");
    const KnowledgeGraph kg = load_dataset(dir.path);
    CHECK(kg.num_entities() == 4);
  }
}

TEST_CASE("augment_inverses doubles relations and mirrors every split") {
  TempDir dir;
  write_toy_dataset(dir);
  KnowledgeGraph kg = load_dataset(dir.path);
  augment_inverses(kg);
  REQUIRE(kg.num_relations() == 2);
  REQUIRE(kg.train.size() == 6);
  REQUIRE(kg.valid.size() == 2);
  REQUIRE(kg.test.size() == 2);
  CHECK(kg.relation_text[1] == "inverse of likes");

  const RelationId r = 0;
  const Triple expected{1, static_cast<RelationId>(kg.inverse_of(r)), 0};  // (b, likes^-1, a)
  CHECK(std::count(kg.train.begin(), kg.train.end(), expected) == 1);

  SECTION("double augmentation fails") { REQUIRE_THROWS_AS(augment_inverses(kg), DataError); }

  SECTION("involution: inverting twice restores the triple") {
    for (const Triple& t : kg.train) {
      const Triple inv{t.tail, kg.inverse_of(t.relation), t.head};
      const Triple back{inv.tail, kg.inverse_of(inv.relation), inv.head};
      CHECK(back == t);
    }
  }
}

TEST_CASE("single triple single relation augments to two and two") {
  TempDir dir;
  write_file(dir.path / "train.txt", "x\tr\ty\n");
  write_file(dir.path / "valid.txt", "");
  write_file(dir.path / "test.txt", "");
  KnowledgeGraph kg = load_dataset(dir.path);
  augment_inverses(kg);
  CHECK(kg.train.size() == 2);
  CHECK(kg.num_relations() == 2);
}

TEST_CASE("filter index matches brute force over all split triples") {
  const SynthDataset ds = make_synthetic_dataset({.entities = 24, .types = 4, .seed = 5});
  KnowledgeGraph kg = make_synthetic_kg(ds);
  augment_inverses(kg);
  const FilterIndex idx = build_filter_index(kg, FilterPolicy::all_splits);

  // Brute-force membership oracle over all splits.
  std::set<std::tuple<EntityId, RelationId, EntityId>> truth;
  for (const auto* split : {&kg.train, &kg.valid, &kg.test})
    for (const Triple& t : *split) truth.insert({t.head, t.relation, t.tail});

  for (EntityId h = 0; h < kg.num_entities(); ++h)
    for (RelationId r = 0; r < kg.num_relations(); ++r)
      for (EntityId t = 0; t < kg.num_entities(); ++t)
        REQUIRE(idx.contains(h, r, t) == (truth.count({h, r, t}) > 0));
}

TEST_CASE("train-only policy excludes valid and test tails") {
  TempDir dir;
  write_file(dir.path / "train.txt", "a\tr\tb\n");
  write_file(dir.path / "valid.txt", "a\tr\tc\n");
  write_file(dir.path / "test.txt", "");
  write_file(dir.path / "descriptions.txt", "c\tthird\n");
  KnowledgeGraph kg = load_dataset(dir.path);
  augment_inverses(kg);

  const FilterIndex train_only = build_filter_index(kg, FilterPolicy::train_only);
  const FilterIndex all = build_filter_index(kg, FilterPolicy::all_splits);
  const EntityId a = kg.entity_ids.at("a"), b = kg.entity_ids.at("b"), c = kg.entity_ids.at("c");
  CHECK(train_only.contains(a, 0, b));
  CHECK_FALSE(train_only.contains(a, 0, c));
  CHECK(all.contains(a, 0, c));
  CHECK(all.tails(a, 0).size() == 2);
}

TEST_CASE("filter index requires augmentation and tolerates empty coverage") {
  TempDir dir;
  write_file(dir.path / "train.txt", "a\tr\tb\n");
  write_file(dir.path / "valid.txt", "");
  write_file(dir.path / "test.txt", "");
  KnowledgeGraph kg = load_dataset(dir.path);
  REQUIRE_THROWS_AS(build_filter_index(kg), DataError);
  augment_inverses(kg);
  const FilterIndex idx = build_filter_index(kg);
  CHECK(idx.num_keys() == 2);
  CHECK(idx.tails(0, 1).empty());  // no (a, r^-1, *) triples
}

TEST_CASE("duplicate triple across splits violates disjointness") {
  TempDir dir;
  write_file(dir.path / "train.txt", "a\tr\tb\n");
  write_file(dir.path / "valid.txt", "a\tr\tb\n");
  write_file(dir.path / "test.txt", "");
  REQUIRE_THROWS_AS(load_dataset(dir.path), DataError);
}

TEST_CASE("loader handles a benchmark-sized synthetic dataset") {
  // Mirrors the published MKG-W scale: 15000 entities, 169 relations, 34196
  // train triples; augmentation doubles triples and relations.
  TempDir dir;
  Rng rng(99);
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> seen;
  const std::tuple<std::uint64_t, std::uint64_t, std::uint64_t> held_valid{3, 7, 5}, held_test{5, 7, 3};
  seen.insert(held_valid);
  seen.insert(held_test);
  {
    std::ofstream out(dir.path / "train.txt");
    std::size_t count = 0;
    // Every entity and relation appears at least once in train.
    for (std::uint64_t e = 0; e + 1 < 15000; e += 2) {
      out << "n" << e << "\tr" << (count % 169) << "\tn" << (e + 1) << "\n";
      seen.insert({e, count % 169, e + 1});
      ++count;
    }
    while (count < 34196) {
      const auto h = rng.uniform_int(15000), r = rng.uniform_int(169), t = rng.uniform_int(15000);
      if (!seen.insert({h, r, t}).second) continue;
      out << "n" << h << "\tr" << r << "\tn" << t << "\n";
      ++count;
    }
  }
  write_file(dir.path / "valid.txt", "n3\tr7\tn5\n");
  write_file(dir.path / "test.txt", "n5\tr7\tn3\n");
  KnowledgeGraph kg = load_dataset(dir.path);
  CHECK(kg.num_entities() == 15000);
  CHECK(kg.base_relation_count == 169);
  CHECK(kg.train.size() == 34196);
  augment_inverses(kg);
  CHECK(kg.train.size() == 68392);
  CHECK(kg.num_relations() == 338);
}
