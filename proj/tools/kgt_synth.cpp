// Generates the compositional synthetic dataset in the on-disk layout the
// kgt pipeline consumes.

#include <CLI11.hpp>

#include "kgt/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic compositional knowledge-graph generator"};
  std::string out;
  kgt::SynthConfig cfg;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--entities", cfg.entities, "entity count");
  app.add_option("--types", cfg.types, "visible type count");
  app.add_option("--semantic", cfg.semantic_relations, "text-predictable relations");
  app.add_option("--struct", cfg.struct_relations, "permutation-based relations");
  app.add_option("--train-frac", cfg.train_frac, "train fraction per relation");
  app.add_option("--valid-frac", cfg.valid_frac, "valid fraction per relation");
  app.add_option("--seed", cfg.seed, "generator seed");
  try {
    app.parse(argc, argv);
    const kgt::SynthDataset ds = kgt::make_synthetic_dataset(cfg);
    kgt::write_synthetic_dataset(ds, out);
    std::printf("wrote %zu train / %zu valid / %zu test triples to %s\n", ds.train.size(),
                ds.valid.size(), ds.test.size(), out.c_str());
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const kgt::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
