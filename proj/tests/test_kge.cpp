#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "kgt/kge.hpp"
#include "kgt/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace kgt;

namespace {

KnowledgeGraph toy_graph(std::size_t entities = 24, std::uint64_t seed = 5) {
  SynthConfig cfg;
  cfg.entities = entities;
  cfg.types = 4;
  cfg.semantic_relations = 2;
  cfg.struct_relations = 2;
  cfg.seed = seed;
  KnowledgeGraph kg = make_synthetic_kg(make_synthetic_dataset(cfg));
  augment_inverses(kg);
  return kg;
}

template <class T>
KgeModel<T> tiny_model(const KnowledgeGraph& kg, KgeKind kind, std::size_t d, std::uint64_t seed) {
  KgeConfig cfg;
  cfg.kind = kind;
  cfg.d_s = d;
  cfg.seed = seed;
  return init_kge<T>(kg, cfg);
}

}  // namespace

TEST_CASE("transe score is zero at exact translation") {
  const KnowledgeGraph kg = toy_graph();
  KgeModel<double> m = tiny_model<double>(kg, KgeKind::transe, 6, 3);
  // force e_h + w_r = e_t for (0, 0, 1)
  for (std::size_t i = 0; i < 6; ++i) m.entity.v(1, i) = m.entity.v(0, i) + m.relation.v(0, i);
  CHECK(m.score(0, 0, 1) == Catch::Approx(0.0).margin(1e-12));
  // maximal: any other tail scores strictly lower
  CHECK(m.score(0, 0, 2) < 0.0);
}

TEST_CASE("tucker score matches the brute-force trilinear contraction") {
  const KnowledgeGraph kg = toy_graph();
  SECTION("zero core scores zero everywhere") {
    KgeModel<double> m = tiny_model<double>(kg, KgeKind::tucker, 4, 3);
    m.core.v.zero();
    for (EntityId h = 0; h < 4; ++h) CHECK(m.score(h, 1, h + 1) == 0.0);
  }
  SECTION("two-dim hand case: all-ones core") {
    KgeModel<double> m = tiny_model<double>(kg, KgeKind::tucker, 2, 3);
    for (double& v : m.core.v.a) v = 1.0;
    auto set = [&](Mat<double>& mat, std::size_t row, std::initializer_list<double> vals) {
      std::size_t j = 0;
      for (double v : vals) mat(row, j++) = v;
    };
    set(m.entity.v, 0, {1, 0});
    set(m.relation.v, 0, {1, 1});
    set(m.entity.v, 1, {0, 1});
    // explicit triple sum: only (i=0, j=0, k=1) and (i=0, j=1, k=1) survive
    CHECK(m.score(0, 0, 1) == Catch::Approx(2.0).margin(1e-12));
    CHECK(oracle::tucker_brute_force(m.core.v.a, m.entity.v.row(0), m.relation.v.row(0),
                                     m.entity.v.row(1)) == Catch::Approx(2.0).margin(1e-12));
  }
  SECTION("random instances at dims up to 4 agree within 1e-10") {
    Rng rng(11);
    for (std::size_t d : {2u, 3u, 4u}) {
      KgeModel<double> m = tiny_model<double>(kg, KgeKind::tucker, d, rng.next_u64());
      for (int rep = 0; rep < 20; ++rep) {
        const auto h = static_cast<EntityId>(rng.uniform_int(kg.num_entities()));
        const auto r = static_cast<RelationId>(rng.uniform_int(kg.num_relations()));
        const auto t = static_cast<EntityId>(rng.uniform_int(kg.num_entities()));
        const double got = m.score(h, r, t);
        const double want = oracle::tucker_brute_force(m.core.v.a, m.entity.v.row(h),
                                                       m.relation.v.row(r), m.entity.v.row(t));
        REQUIRE(got == Catch::Approx(want).margin(1e-10));
      }
    }
  }
  SECTION("score_all_tails agrees with per-triple scores") {
    KgeModel<double> m = tiny_model<double>(kg, KgeKind::tucker, 4, 9);
    std::vector<double> all;
    m.score_all_tails(2, 1, all);
    for (EntityId t = 0; t < kg.num_entities(); ++t)
      REQUIRE(all[t] == Catch::Approx(m.score(2, 1, t)).margin(1e-10));
  }
}

TEST_CASE("train_kge honors the determinism and init contracts") {
  const KnowledgeGraph kg = toy_graph();
  KgeConfig cfg;
  cfg.kind = KgeKind::tucker;
  cfg.d_s = 8;
  cfg.epochs = 0;
  cfg.seed = 42;

  SECTION("epochs=0 leaves the random initialization untouched") {
    KgeModel<float> m = init_kge<float>(kg, cfg);
    const auto init_ent = m.entity.v.a;
    train_kge(m, kg, cfg);
    CHECK(m.entity.v.a == init_ent);
  }
  SECTION("fixed seed twice gives bit-identical embeddings") {
    cfg.epochs = 3;
    KgeModel<float> m1 = init_kge<float>(kg, cfg);
    KgeModel<float> m2 = init_kge<float>(kg, cfg);
    train_kge(m1, kg, cfg);
    train_kge(m2, kg, cfg);
    CHECK(m1.entity.v.a == m2.entity.v.a);
    CHECK(m1.relation.v.a == m2.relation.v.a);
    CHECK(m1.core.v.a == m2.core.v.a);
  }
  SECTION("unaugmented graph is rejected") {
    SynthConfig scfg;
    scfg.entities = 16;
    scfg.types = 4;
    KnowledgeGraph raw = make_synthetic_kg(make_synthetic_dataset(scfg));
    KgeModel<float> m = init_kge<float>(raw, cfg);
    REQUIRE_THROWS_AS(train_kge(m, raw, cfg), DataError);
  }
}

TEST_CASE("tucker training separates true triples from corruptions") {
  const KnowledgeGraph kg = toy_graph(24, 7);
  KgeConfig cfg;
  cfg.kind = KgeKind::tucker;
  cfg.d_s = 16;
  cfg.epochs = 60;
  cfg.batch_size = 64;
  cfg.learning_rate = 5e-3;
  cfg.seed = 1;
  KgeModel<float> m = init_kge<float>(kg, cfg);
  const KgeTrainResult result = train_kge(m, kg, cfg);

  SECTION("smoothed loss is non-increasing over epochs") {
    std::vector<double> smooth;
    for (std::size_t i = 0; i + 5 <= result.epoch_losses.size(); ++i) {
      double s = 0;
      for (std::size_t k = i; k < i + 5; ++k) s += result.epoch_losses[k];
      smooth.push_back(s / 5);
    }
    for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] <= smooth[i - 1] + 1e-6);
  }
  SECTION("ranking quality on the toy graph") {
    const FilterIndex all_true = build_filter_index(kg, FilterPolicy::all_splits);
    const double auc = oracle::corruption_auc(m, kg, all_true);
    CHECK(auc >= 0.90);
  }
  SECTION("inverse relations are trained, not tied") {
    const RelationId r = 0, inv = kg.inverse_of(0);
    bool differ = false;
    for (std::size_t j = 0; j < m.dim; ++j) differ |= m.relation.v(r, j) != m.relation.v(inv, j);
    CHECK(differ);
  }
}

TEST_CASE("transe training also learns the toy graph") {
  const KnowledgeGraph kg = toy_graph(24, 3);
  KgeConfig cfg;
  cfg.kind = KgeKind::transe;
  cfg.d_s = 16;
  cfg.epochs = 60;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-2;
  cfg.negatives_per_positive = 4;
  cfg.seed = 2;
  KgeModel<float> m = init_kge<float>(kg, cfg);
  train_kge(m, kg, cfg);
  const FilterIndex all_true = build_filter_index(kg, FilterPolicy::all_splits);
  CHECK(oracle::corruption_auc(m, kg, all_true) >= 0.80);
}

TEST_CASE("export copies the embedding tables verbatim") {
  const KnowledgeGraph kg = toy_graph();
  KgeConfig cfg;
  cfg.kind = KgeKind::tucker;
  cfg.d_s = 8;
  cfg.seed = 5;
  KgeModel<float> m = init_kge<float>(kg, cfg);
  const auto [ent, rel] = export_structural_features(m);
  REQUIRE(ent.rows == kg.num_entities());
  REQUIRE(ent.cols == 8);
  REQUIRE(rel.rows == kg.num_relations());
  for (std::size_t e = 0; e < ent.rows; ++e)
    for (std::size_t j = 0; j < ent.cols; ++j) REQUIRE(ent(e, j) == m.entity.v(e, j));

  SECTION("save then reload is bit-identical") {
    const fs::path dir =
        fs::temp_directory_path() / ("kgt_kge_" + std::to_string(::getpid()));
    save_kge(m, dir);
    const FeatureMatrix ent_back = load_features(dir / "entity_struct.kgtf");
    const FeatureMatrix rel_back = load_features(dir / "relation_struct.kgtf");
    CHECK(ent_back.a == ent.a);
    CHECK(rel_back.a == rel.a);
    std::ifstream meta(dir / "kge_meta.txt");
    std::string line;
    std::getline(meta, line);
    CHECK(line == "kind=tucker");
    fs::remove_all(dir);
  }
}

TEST_CASE("kge config validation") {
  CHECK_THROWS_AS(parse_kge_kind("rotate"), UsageError);
  KgeConfig cfg;
  cfg.d_s = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.d_s = 4;
  cfg.negatives_per_positive = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}
