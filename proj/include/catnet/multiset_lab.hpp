#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "catnet/tensor.hpp"

// Executable counterpart of the expressiveness analysis: multiset pairs that
// collide under the plain conjoint aggregators and are separated once the
// eps/|X| self term is added.

namespace catnet::lab {

/// Multiset of neighborhood feature vectors: distinct ground elements with
/// multiplicities, a designated center element, and per-ground-element
/// feature logits m(c,x) and structural scores C(c,x). All occurrences of
/// one ground element share its scores.
struct Multiset {
  std::vector<std::vector<double>> ground;  // S, pairwise distinct
  std::vector<int> multiplicity;            // mu(x) >= 1
  int center = 0;                           // index into ground; c is in S
  std::vector<double> feat_logit;           // m(c, x) per ground element
  std::vector<double> struct_score;         // C(c, x) per ground element

  int size() const {
    int n = 0;
    for (int m : multiplicity) n += m;
    return n;
  }

  void validate() const {
    ad::require(!ground.empty(), "Multiset: empty ground set");
    ad::require(ground.size() == multiplicity.size() && ground.size() == feat_logit.size() &&
                    ground.size() == struct_score.size(),
                "Multiset: per-element arrays must align with the ground set");
    for (int m : multiplicity) ad::require(m >= 1, "Multiset: multiplicities must be >= 1");
    ad::require(0 <= center && center < static_cast<int>(ground.size()),
                "Multiset: center must index a ground element");
    for (std::size_t i = 0; i < ground.size(); ++i)
      for (std::size_t j = i + 1; j < ground.size(); ++j)
        ad::require(ground[i] != ground[j], "Multiset: ground elements must be distinct");
  }
};

enum class LabStrategy { Implicit, Explicit };
enum class TheoremKind { ImplicitCollision, ExplicitCollision };

/// How to aggregate a multiset: strategy, whether the eps/|X| self term is
/// included, the significance ratio q = r_s / r_f (implicit), eps, and an
/// optional linear feature map g (identity when empty).
struct AggregatorSpec {
  LabStrategy strategy = LabStrategy::Implicit;
  bool include_eps_term = false;
  double q = 1.0;
  double eps = 0.5;
  std::vector<std::vector<double>> g_map;  // rows of the linear map; empty = identity

  std::vector<double> apply_g(const std::vector<double>& x) const {
    if (g_map.empty()) return x;
    std::vector<double> out(g_map.size(), 0.0);
    for (std::size_t r = 0; r < g_map.size(); ++r) {
      ad::require(g_map[r].size() == x.size(), "AggregatorSpec: g map width mismatch");
      for (std::size_t c = 0; c < x.size(); ++c) out[r] += g_map[r][c] * x[c];
    }
    return out;
  }
};

/// Fused per-ground-element attention weights: f and s are softmax-normalized
/// over the multiset (multiplicities weighting the partition sums), combined
/// per the strategy. Every occurrence of a ground element shares its weight.
inline std::vector<double> attention_weights(const AggregatorSpec& spec, const Multiset& m) {
  m.validate();
  ad::require(spec.q > 0.0, "attention_weights: q must be > 0");
  const std::size_t k = m.ground.size();
  double fmax = m.feat_logit[0], smax = m.struct_score[0];
  for (std::size_t i = 1; i < k; ++i) {
    fmax = std::max(fmax, m.feat_logit[i]);
    smax = std::max(smax, m.struct_score[i]);
  }
  std::vector<double> f(k), s(k);
  double zf = 0.0, zs = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    f[i] = std::exp(m.feat_logit[i] - fmax);
    s[i] = std::exp(m.struct_score[i] - smax);
    zf += m.multiplicity[i] * f[i];
    zs += m.multiplicity[i] * s[i];
  }
  for (std::size_t i = 0; i < k; ++i) {
    f[i] /= zf;
    s[i] /= zs;
  }
  std::vector<double> alpha(k);
  if (spec.strategy == LabStrategy::Implicit) {
    const double r_f = 1.0 / (1.0 + spec.q);
    const double r_s = spec.q / (1.0 + spec.q);
    for (std::size_t i = 0; i < k; ++i) alpha[i] = r_f * f[i] + r_s * s[i];
  } else {
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += m.multiplicity[i] * f[i] * s[i];
    for (std::size_t i = 0; i < k; ++i) alpha[i] = f[i] * s[i] / z;
  }
  return alpha;
}

/// h(c, X) = sum_{x in X} alpha_cx g(x). With the eps term on, (eps / |X|)
/// g(c) is added for the center's slot, exactly as the layer's aggregation
/// rule does.
inline std::vector<double> aggregate_multiset(const AggregatorSpec& spec, const Multiset& m) {
  const std::vector<double> alpha = attention_weights(spec, m);
  const std::size_t k = m.ground.size();
  const int n = m.size();
  std::vector<double> gc = spec.apply_g(m.ground[static_cast<std::size_t>(m.center)]);
  std::vector<double> out(gc.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::vector<double> gx = spec.apply_g(m.ground[i]);
    for (std::size_t c = 0; c < out.size(); ++c)
      out[c] += m.multiplicity[i] * alpha[i] * gx[c];
  }
  if (spec.include_eps_term) {
    ad::require(spec.eps > 0.0 && spec.eps < 1.0, "aggregate_multiset: eps must be in (0,1)");
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += (spec.eps / n) * gc[c];
  }
  return out;
}

/// The center's fused attention weight alpha_cc in the given multiset.
inline double center_weight(const AggregatorSpec& spec, const Multiset& m) {
  return attention_weights(spec, m)[static_cast<std::size_t>(m.center)];
}

struct CollisionPair {
  Multiset x1, x2;
  AggregatorSpec spec;
};

/// Canonical colliding pair: singleton ground set S = {v}, center c = v,
/// multiplicities n1 and n2, uniform feature logits and equal structural
/// scores. Both partition-sum conditions hold trivially (the implicit
/// condition with difference 0 = q * 0; the explicit proportionality with
/// q = n2/n1 through exp), so the plain aggregators map both multisets to
/// g(v).
inline CollisionPair build_collision_pair(TheoremKind kind, int n1, int n2,
                                          const std::vector<double>& v = {1.0, 0.0}) {
  ad::require(n1 >= 1 && n2 >= 1, "build_collision_pair: sizes must be >= 1");
  ad::require(n1 != n2, "build_collision_pair: equal sizes are not a collision demo");
  CollisionPair pair;
  for (Multiset* m : {&pair.x1, &pair.x2}) {
    m->ground = {v};
    m->center = 0;
    m->feat_logit = {0.0};
    m->struct_score = {0.0};
  }
  pair.x1.multiplicity = {n1};
  pair.x2.multiplicity = {n2};
  pair.spec.strategy =
      kind == TheoremKind::ImplicitCollision ? LabStrategy::Implicit : LabStrategy::Explicit;
  pair.spec.include_eps_term = false;
  pair.spec.q = kind == TheoremKind::ImplicitCollision
                    ? 1.0
                    : static_cast<double>(n2) / static_cast<double>(n1);
  return pair;
}

struct SeparationReport {
  bool collided_without_eps = false;
  bool separated = false;
  bool formula_matched = false;
  double collision_diff = 0.0;   // max |h1 - h2| without the eps term
  double separation_diff = 0.0;  // max |h1 - h2| with it
  double formula_err = 0.0;      // max |(h1 - h2) - eps (1/n1 - 1/n2) g(c)|
  double alpha_cc_1 = 0.0;
  double alpha_cc_2 = 0.0;
  std::vector<double> h1, h2;
};

/// Evaluates both eps-augmented aggregations and checks (a) the outputs
/// differ and (b) the difference equals the closed form
/// eps * (1/n1 - 1/n2) * g(c) componentwise within 1e-9. Under the layer's
/// aggregation rule the center-weight factor drops out of the closed form
/// for this construction; alpha_cc values are still reported.
inline SeparationReport verify_separation(const CollisionPair& pair, double eps_value) {
  ad::require(eps_value > 0.0 && eps_value < 1.0, "verify_separation: eps must be in (0,1)");
  SeparationReport rep;

  AggregatorSpec free_spec = pair.spec;
  free_spec.include_eps_term = false;
  const std::vector<double> h1f = aggregate_multiset(free_spec, pair.x1);
  const std::vector<double> h2f = aggregate_multiset(free_spec, pair.x2);
  for (std::size_t c = 0; c < h1f.size(); ++c)
    rep.collision_diff = std::max(rep.collision_diff, std::abs(h1f[c] - h2f[c]));
  rep.collided_without_eps = rep.collision_diff <= 1e-12;

  AggregatorSpec aug = pair.spec;
  aug.include_eps_term = true;
  aug.eps = eps_value;
  rep.h1 = aggregate_multiset(aug, pair.x1);
  rep.h2 = aggregate_multiset(aug, pair.x2);
  rep.alpha_cc_1 = center_weight(pair.spec, pair.x1);
  rep.alpha_cc_2 = center_weight(pair.spec, pair.x2);

  const double n1 = pair.x1.size(), n2 = pair.x2.size();
  const std::vector<double> gc = aug.apply_g(pair.x1.ground[static_cast<std::size_t>(pair.x1.center)]);
  double gc_inf = 0.0;
  for (std::size_t c = 0; c < rep.h1.size(); ++c) {
    const double d = rep.h1[c] - rep.h2[c];
    rep.separation_diff = std::max(rep.separation_diff, std::abs(d));
    const double predicted = eps_value * (1.0 / n1 - 1.0 / n2) * gc[c];
    rep.formula_err = std::max(rep.formula_err, std::abs(d - predicted));
    gc_inf = std::max(gc_inf, std::abs(gc[c]));
  }
  const double min_acc = std::min(rep.alpha_cc_1, rep.alpha_cc_2);
  rep.separated =
      rep.separation_diff >= eps_value * std::abs(1.0 / n1 - 1.0 / n2) * min_acc * gc_inf - 1e-10;
  rep.formula_matched = rep.formula_err <= 1e-9;
  return rep;
}

struct TheoremGridResult {
  bool all_passed = true;
  int n_checked = 0;
  int n_failed = 0;
  std::string table;
};

/// Collision + separation over (n1, n2) in {1..max_n}^2, n1 != n2, both
/// strategies, plus an eps sweep on the (2,3) pair that must be strictly
/// increasing. With include_eps_term false, separation checks report the
/// collision instead and the run fails (expected failure mode).
inline TheoremGridResult run_theorem_grid(int max_n, const std::vector<double>& eps_sweep,
                                          bool include_eps_term) {
  TheoremGridResult res;
  std::ostringstream out;
  out << "n1\tn2\tstrategy\tcollision_diff\tseparation_diff\tformula_err\tstatus\n";
  for (TheoremKind kind : {TheoremKind::ImplicitCollision, TheoremKind::ExplicitCollision}) {
    for (int n1 = 1; n1 <= max_n; ++n1) {
      for (int n2 = 1; n2 <= max_n; ++n2) {
        if (n1 == n2) continue;
        CollisionPair pair = build_collision_pair(kind, n1, n2);
        bool ok = true;
        SeparationReport rep;
        if (include_eps_term) {
          rep = verify_separation(pair, 0.5);
          ok = rep.collided_without_eps && rep.separated && rep.separation_diff > 0.0;
          if (kind == TheoremKind::ImplicitCollision) ok = ok && rep.formula_matched;
        } else {
          AggregatorSpec free_spec = pair.spec;
          free_spec.include_eps_term = false;
          const auto h1 = aggregate_multiset(free_spec, pair.x1);
          const auto h2 = aggregate_multiset(free_spec, pair.x2);
          for (std::size_t c = 0; c < h1.size(); ++c)
            rep.collision_diff = std::max(rep.collision_diff, std::abs(h1[c] - h2[c]));
          rep.separation_diff = rep.collision_diff;
          ok = rep.collision_diff > 1e-12;  // cannot hold: the pair collides
        }
        ++res.n_checked;
        if (!ok) {
          ++res.n_failed;
          res.all_passed = false;
        }
        out << n1 << '\t' << n2 << '\t'
            << (kind == TheoremKind::ImplicitCollision ? "implicit" : "explicit") << '\t'
            << rep.collision_diff << '\t' << rep.separation_diff << '\t' << rep.formula_err
            << '\t' << (ok ? "pass" : "FAIL") << '\n';
      }
    }
  }

  if (include_eps_term && !eps_sweep.empty()) {
    CollisionPair pair = build_collision_pair(TheoremKind::ImplicitCollision, 2, 3);
    double prev = -1.0;
    bool monotone = true;
    for (double e : eps_sweep) {
      SeparationReport rep = verify_separation(pair, e);
      out << "2\t3\teps=" << e << '\t' << rep.collision_diff << '\t' << rep.separation_diff
          << "\t-\t" << (rep.separation_diff > prev ? "pass" : "FAIL") << '\n';
      if (rep.separation_diff <= prev) monotone = false;
      prev = rep.separation_diff;
      ++res.n_checked;
    }
    if (!monotone) {
      ++res.n_failed;
      res.all_passed = false;
    }
  }
  res.table = out.str();
  return res;
}

}  // namespace catnet::lab
