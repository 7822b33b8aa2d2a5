#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <string>
#include <vector>

#include "kgt/kg.hpp"
#include "kgt/model.hpp"

namespace kgt {

// Filtered rank with pessimistic ties: competitors scoring >= the target
// count as ranked above it; entities known true for (h, r) are excluded,
// except the target itself.
template <class T>
std::uint32_t filtered_rank(std::span<const T> logits, EntityId h, RelationId r, EntityId target,
                            const FilterIndex& filter) {
  if (target >= logits.size()) throw DataError("filtered_rank: target outside the logits domain");
  const T ts = logits[target];
  std::uint32_t rank = 1;
  for (std::size_t e = 0; e < logits.size(); ++e) {
    if (e == target) continue;
    if (logits[e] < ts) continue;
    if (filter.contains(h, r, static_cast<EntityId>(e))) continue;
    ++rank;
  }
  return rank;
}

struct RankAggregates {
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
  std::size_t count = 0;
};

inline RankAggregates aggregate_ranks(std::span<const std::uint32_t> ranks) {
  RankAggregates a;
  a.count = ranks.size();
  if (ranks.empty()) return a;
  for (std::uint32_t r : ranks) {
    a.mrr += 1.0 / r;
    a.hits1 += r <= 1;
    a.hits3 += r <= 3;
    a.hits10 += r <= 10;
  }
  const auto n = static_cast<double>(ranks.size());
  a.mrr /= n;
  a.hits1 /= n;
  a.hits3 /= n;
  a.hits10 /= n;
  return a;
}

struct QueryRank {
  Triple query;
  std::uint32_t fused = 0;
  std::uint32_t text = 0;    // 0 when the view is ablated away
  std::uint32_t struct_ = 0;
};

struct RankReport {
  std::vector<QueryRank> per_query;
  RankAggregates fused, text, struct_;
  bool has_text = true, has_struct = true;
  std::string split;
  std::string filter_policy;
};

// Evaluates every augmented query of a split; head queries appear as their
// inverse-relation tail form, so both directions are covered.
template <class T>
RankReport evaluate(const KgtModel<T>& model, const KnowledgeGraph& kg, Split split,
                    const FilterIndex& filter, FilterPolicy policy = FilterPolicy::all_splits) {
  const auto& queries = kg.split(split);
  if (queries.empty()) throw DataError("evaluate: empty split");
  RankReport report;
  report.split = split_name(split);
  report.filter_policy = policy_name(policy);
  report.has_text = model.text_pred;
  report.has_struct = model.struct_pred;
  std::vector<std::uint32_t> fused_ranks, text_ranks, struct_ranks;
  for (const Triple& q : queries) {
    const ViewLogits<T> logits = model.score_query(q.head, q.relation);
    QueryRank row;
    row.query = q;
    row.fused = filtered_rank<T>(logits.fused, q.head, q.relation, q.tail, filter);
    fused_ranks.push_back(row.fused);
    if (report.has_text) {
      row.text = filtered_rank<T>(logits.p_t, q.head, q.relation, q.tail, filter);
      text_ranks.push_back(row.text);
    }
    if (report.has_struct) {
      row.struct_ = filtered_rank<T>(logits.p_s, q.head, q.relation, q.tail, filter);
      struct_ranks.push_back(row.struct_);
    }
    report.per_query.push_back(row);
  }
  report.fused = aggregate_ranks(fused_ranks);
  report.text = aggregate_ranks(text_ranks);
  report.struct_ = aggregate_ranks(struct_ranks);
  return report;
}

inline void write_rank_csv(const RankReport& r, const KnowledgeGraph& kg,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "head,relation,target,fused_rank,text_rank,struct_rank\n";
  for (const QueryRank& q : r.per_query) {
    out << kg.entity_names[q.query.head] << "," << kg.relation_names[q.query.relation] << ","
        << kg.entity_names[q.query.tail] << "," << q.fused << ",";
    if (q.text) out << q.text;
    out << ",";
    if (q.struct_) out << q.struct_;
    out << "\n";
  }
}

inline void write_summary_json(const RankReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << std::setprecision(10);
  auto agg = [&](const char* name, const RankAggregates& a, bool present) {
    out << "  \"" << name << "\": ";
    if (!present) {
      out << "null";
      return;
    }
    out << "{\"mrr\": " << a.mrr << ", \"hits1\": " << a.hits1 << ", \"hits3\": " << a.hits3
        << ", \"hits10\": " << a.hits10 << ", \"queries\": " << a.count << "}";
  };
  out << "{\n";
  out << "  \"split\": \"" << r.split << "\",\n";
  out << "  \"filter_policy\": \"" << r.filter_policy << "\",\n";
  if (r.filter_policy == "train-only")
    out << "  \"filter_policy_note\": \"train-only filtering diverges from the standard all-splits "
           "protocol; metrics are not comparable with all-splits numbers\",\n";
  agg("fused", r.fused, true);
  out << ",\n";
  agg("text", r.text, r.has_text);
  out << ",\n";
  agg("struct", r.struct_, r.has_struct);
  out << "\n}\n";
}

// ---- gamma sweep ----

struct GammaPoint {
  double gamma = 0;
  RankAggregates fused;
};

// Rescore mode: p_t and p_s are computed once per query and refused per
// gamma with lambda = (gamma, 1).
template <class T>
std::vector<GammaPoint> sweep_gamma_rescore(const KgtModel<T>& model, const KnowledgeGraph& kg,
                                            Split split, const FilterIndex& filter,
                                            const std::vector<double>& gammas) {
  if (gammas.empty()) throw UsageError("sweep-gamma: empty gamma list");
  const auto& queries = kg.split(split);
  if (queries.empty()) throw DataError("sweep-gamma: empty split");
  std::vector<ViewLogits<T>> cached;
  cached.reserve(queries.size());
  for (const Triple& q : queries) cached.push_back(model.score_query(q.head, q.relation));

  std::vector<GammaPoint> out;
  for (double gamma : gammas) {
    std::vector<std::uint32_t> ranks;
    ranks.reserve(queries.size());
    std::vector<T> fused;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& v = cached[i];
      fused.resize(v.p_t.size());
      for (std::size_t e = 0; e < fused.size(); ++e)
        fused[e] = T(0.5) * (static_cast<T>(gamma) * v.p_t[e] + v.p_s[e]);
      ranks.push_back(
          filtered_rank<T>(fused, queries[i].head, queries[i].relation, queries[i].tail, filter));
    }
    out.push_back({gamma, aggregate_ranks(ranks)});
  }
  return out;
}

inline void write_gamma_csv(const std::vector<GammaPoint>& points, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "gamma,mrr,hits1,hits3,hits10\n";
  for (const auto& p : points)
    out << p.gamma << "," << p.fused.mrr << "," << p.fused.hits1 << "," << p.fused.hits3 << ","
        << p.fused.hits10 << "\n";
}

}  // namespace kgt
