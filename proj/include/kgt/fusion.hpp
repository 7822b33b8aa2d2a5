#pragma once

#include <optional>
#include <span>
#include <vector>

#include "kgt/core.hpp"
#include "kgt/features.hpp"
#include "kgt/mlp.hpp"
#include "kgt/vocab.hpp"

namespace kgt {

// Relation-guided gate over the two projected streams. z_m =
// (U_m(e'_m)/sqrt(d) + delta_m) / sigma(eps_r), with delta_m drawn from
// N(0, softplus(U'_m(e'_m))/sqrt(d)) in train mode only; the gate is the
// 2-way softmax of (z_t, z_s).
template <class T>
struct GateParams {
  Tensor<T> u_t, u_s;    // 1 x d logit maps
  Tensor<T> un_t, un_s;  // 1 x d noise maps
  Tensor<T> eps;         // |R_aug| x 1 per-relation temperature parameters
  bool noise_enabled = true;
  bool temp_enabled = true;

  void init(std::size_t d, std::size_t num_relations, Rng& rng) {
    const T std = T(1) / std::sqrt(static_cast<T>(d));
    u_t.init("gate.u_t", 1, d);
    u_s.init("gate.u_s", 1, d);
    un_t.init("gate.un_t", 1, d);
    un_s.init("gate.un_s", 1, d);
    eps.init("gate.eps", num_relations, 1);
    for (auto* t : {&u_t, &u_s, &un_t, &un_s})
      for (T& v : t->v.a) v = static_cast<T>(rng.normal()) * std;
  }

  std::vector<Tensor<T>*> params() { return {&u_t, &u_s, &un_t, &un_s, &eps}; }
};

template <class T>
struct GateCache {
  std::vector<T> et, es;   // projected inputs
  T raw_t = 0, raw_s = 0;  // dot(u_m, e'_m)
  T nraw_t = 0, nraw_s = 0;
  T var_t = 0, var_s = 0;
  T n_t = 0, n_s = 0;  // standard normal draws
  T temp = 1;
  T z_t = 0, z_s = 0;
  T g_t = 0, g_s = 0;
  RelationId relation = 0;
  bool noise_active = false;
};

template <class T>
std::pair<T, T> gate(std::span<const T> et_proj, std::span<const T> es_proj, RelationId relation,
                     const GateParams<T>& p, bool train_mode, Rng& rng, GateCache<T>* cache = nullptr) {
  if (relation >= p.eps.v.rows) throw DataError("gate: relation id out of range");
  const std::size_t d = et_proj.size();
  const T sqrt_d = std::sqrt(static_cast<T>(d));
  GateCache<T> local;
  GateCache<T>& c = cache ? *cache : local;
  c.et.assign(et_proj.begin(), et_proj.end());
  c.es.assign(es_proj.begin(), es_proj.end());
  c.relation = relation;
  c.raw_t = dot(p.u_t.v.row(0), et_proj);
  c.raw_s = dot(p.u_s.v.row(0), es_proj);
  c.noise_active = train_mode && p.noise_enabled;
  T delta_t = 0, delta_s = 0;
  if (c.noise_active) {
    c.nraw_t = dot(p.un_t.v.row(0), et_proj);
    c.nraw_s = dot(p.un_s.v.row(0), es_proj);
    c.var_t = softplus(c.nraw_t) / sqrt_d;
    c.var_s = softplus(c.nraw_s) / sqrt_d;
    c.n_t = static_cast<T>(rng.normal());
    c.n_s = static_cast<T>(rng.normal());
    delta_t = std::sqrt(c.var_t) * c.n_t;
    delta_s = std::sqrt(c.var_s) * c.n_s;
  }
  c.temp = p.temp_enabled ? sigmoid(p.eps.v(relation, 0)) : T(1);
  c.z_t = (c.raw_t / sqrt_d + delta_t) / c.temp;
  c.z_s = (c.raw_s / sqrt_d + delta_s) / c.temp;
  const T m = std::max(c.z_t, c.z_s);
  const T wt = std::exp(c.z_t - m), ws = std::exp(c.z_s - m);
  c.g_t = wt / (wt + ws);
  c.g_s = ws / (wt + ws);
  return {c.g_t, c.g_s};
}

template <class T>
void gate_backward(T dg_t, T dg_s, const GateCache<T>& c, GateParams<T>& p, std::span<T> det_acc,
                   std::span<T> des_acc) {
  const std::size_t d = c.et.size();
  const T sqrt_d = std::sqrt(static_cast<T>(d));
  const T s = dg_t * c.g_t + dg_s * c.g_s;
  const T dz_t = c.g_t * (dg_t - s);
  const T dz_s = c.g_s * (dg_s - s);

  auto stream = [&](T dz, T raw_n, T var, T n_draw, Tensor<T>& u, Tensor<T>& un,
                    std::span<const T> e, std::span<T> de) {
    const T dnum = dz / c.temp;
    const T da = dnum / sqrt_d;
    axpy(u.g.row(0), da, e);
    axpy(de, da, u.v.row(0));
    if (c.noise_active && var > T(0)) {
      const T dvar = dnum * n_draw / (T(2) * std::sqrt(var));
      const T dnraw = dvar * sigmoid(raw_n) / sqrt_d;
      axpy(un.g.row(0), dnraw, e);
      axpy(de, dnraw, un.v.row(0));
    }
  };
  stream(dz_t, c.nraw_t, c.var_t, c.n_t, p.u_t, p.un_t, c.et, det_acc);
  stream(dz_s, c.nraw_s, c.var_s, c.n_s, p.u_s, p.un_s, c.es, des_acc);

  if (p.temp_enabled) {
    const T dtemp = -(dz_t * c.z_t + dz_s * c.z_s) / c.temp;
    const T t = c.temp;
    p.eps.g(c.relation, 0) += dtemp * t * (T(1) - t);
  }
}

// Soft weighted summation of the projected streams.
template <class T>
std::vector<T> fuse(std::span<const T> et_proj, std::span<const T> es_proj, std::pair<T, T> gates) {
  std::vector<T> out(et_proj.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = gates.first * et_proj[i] + gates.second * es_proj[i];
  return out;
}

// Everything behind E_specialized: modality projectors, the gate, and the
// ablation toggles that force a single stream.
template <class T>
struct FusionParams {
  ProjectionBlock<T> proj_t;  // d_t -> d
  ProjectionBlock<T> proj_s;  // d_s -> d
  GateParams<T> gate;
  bool text_stream = true;
  bool struct_stream = true;

  void init(std::size_t d, std::size_t d_t, std::size_t d_s, std::size_t num_relations, Rng& rng,
            T text_dropout, T struct_dropout) {
    proj_t.init("fusion.proj_t", d_t, d, rng, text_dropout);
    proj_s.init("fusion.proj_s", d_s, d, rng, struct_dropout);
    gate.init(d, num_relations, rng);
  }

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out;
    if (text_stream) {
      out.push_back(&proj_t.weight);
      out.push_back(&proj_t.gain);
    }
    if (struct_stream) {
      out.push_back(&proj_s.weight);
      out.push_back(&proj_s.gain);
    }
    if (text_stream && struct_stream)
      for (auto* t : gate.params()) out.push_back(t);
    return out;
  }
};

template <class T>
struct SpecialEmbedCache {
  bool is_entity = true;
  std::size_t row = 0;
  RelationId gate_relation = 0;
  bool gated = false;  // false when an input ablation forces a single stream
  ProjectionCache<T> pc_t, pc_s;
  GateCache<T> gc;
  std::vector<T> et, es;    // projected streams
  std::pair<T, T> gates{0, 0};
  std::vector<T> value;     // fused embedding
  std::vector<T> grad;      // accumulated d(loss)/d(value)
};

// Embeds one special token: looks up its raw feature rows, projects both
// streams, gates with eps of the query relation (entities) or the token's
// own relation, and fuses. Raw features are frozen inputs.
template <class T>
SpecialEmbedCache<T> embed_special_token(const Vocabulary& vocab, TokenId token,
                                         RelationId query_relation, const FeatureBank& bank,
                                         const FusionParams<T>& params, bool train_mode, Rng& rng) {
  if (!vocab.is_special(token)) throw DataError("embed_special_token: not a special token");
  SpecialEmbedCache<T> c;
  c.is_entity = vocab.is_entity_token(token);
  std::span<const float> raw_t, raw_s;
  if (c.is_entity) {
    c.row = vocab.entity_of(token);
    if (c.row >= bank.entity_text.rows || c.row >= bank.entity_struct.rows)
      throw DataError("entity token lacks feature rows: id " + std::to_string(c.row));
    raw_t = bank.entity_text.row(c.row);
    raw_s = bank.entity_struct.row(c.row);
    c.gate_relation = query_relation;
  } else {
    c.row = vocab.relation_of(token);
    if (c.row >= bank.relation_text.rows || c.row >= bank.relation_struct.rows)
      throw DataError("relation token lacks feature rows: id " + std::to_string(c.row));
    raw_t = bank.relation_text.row(c.row);
    raw_s = bank.relation_struct.row(c.row);
    c.gate_relation = static_cast<RelationId>(c.row);
  }

  std::vector<T> rt(raw_t.begin(), raw_t.end());
  std::vector<T> rs(raw_s.begin(), raw_s.end());
  if (params.text_stream) c.et = project<T>(rt, params.proj_t, train_mode, rng, &c.pc_t);
  if (params.struct_stream) c.es = project<T>(rs, params.proj_s, train_mode, rng, &c.pc_s);

  if (params.text_stream && params.struct_stream) {
    c.gated = true;
    c.gates = gate<T>(c.et, c.es, c.gate_relation, params.gate, train_mode, rng, &c.gc);
    c.value = fuse<T>(c.et, c.es, c.gates);
  } else if (params.text_stream) {
    c.gates = {T(1), T(0)};
    c.value = c.et;
  } else if (params.struct_stream) {
    c.gates = {T(0), T(1)};
    c.value = c.es;
  } else {
    throw DataError("both modality streams disabled");
  }
  c.grad.assign(c.value.size(), T(0));
  return c;
}

// Consumes the gradient accumulated in cache.grad.
template <class T>
void embed_special_token_backward(SpecialEmbedCache<T>& c, FusionParams<T>& params) {
  const std::span<const T> dout(c.grad);
  if (c.gated) {
    std::vector<T> det(c.et.size(), T(0)), des(c.es.size(), T(0));
    T dg_t = 0, dg_s = 0;
    for (std::size_t i = 0; i < dout.size(); ++i) {
      det[i] += c.gates.first * dout[i];
      des[i] += c.gates.second * dout[i];
      dg_t += dout[i] * c.et[i];
      dg_s += dout[i] * c.es[i];
    }
    gate_backward<T>(dg_t, dg_s, c.gc, params.gate, det, des);
    project_backward<T>(det, c.pc_t, params.proj_t);
    project_backward<T>(des, c.pc_s, params.proj_s);
  } else if (params.text_stream) {
    project_backward<T>(dout, c.pc_t, params.proj_t);
  } else {
    project_backward<T>(dout, c.pc_s, params.proj_s);
  }
}

}  // namespace kgt
