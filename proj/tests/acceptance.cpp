// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Run a subset with e.g. `acceptance 1 2 11`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mca/attention.hpp"
#include "mca/chair.hpp"
#include "mca/masks.hpp"
#include "mca/positions.hpp"
#include "mca/rope.hpp"
#include "mca/stats.hpp"
#include "mca/toy_model.hpp"

namespace {

using namespace mca;
using Eigen::MatrixXd;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Dense rotation built straight from the block definition.
MatrixXd oracle_rotation(Position m, int d, double base) {
  MatrixXd r = MatrixXd::Zero(d, d);
  for (int b = 0; b < d / 2; ++b) {
    const double a = static_cast<double>(m) * std::pow(base, -2.0 * b / d);
    r(2 * b, 2 * b) = std::cos(a);
    r(2 * b, 2 * b + 1) = -std::sin(a);
    r(2 * b + 1, 2 * b) = std::sin(a);
    r(2 * b + 1, 2 * b + 1) = std::cos(a);
  }
  return r;
}

// 1. R(i)^T R(j) = R(j - i).
Outcome c1_relative_identity() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Position> pos(-4096, 4096);
  double worst = 0.0;
  for (int d : {4, 64, 128}) {
    const auto freq = make_frequencies(d, 10000.0);
    for (int t = 0; t < 100; ++t) {
      const Position i = pos(rng), j = pos(rng);
      const MatrixXd lhs = rotation_matrix(i, freq).transpose() * rotation_matrix(j, freq);
      worst = std::max(worst, (lhs - rotation_matrix(j - i, freq)).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-9, "max |R(i)^T R(j) - R(j-i)| = " + fmt("%.3g", worst)};
}

// 2. Distinct index counts.
Outcome c2_index_counts() {
  const int mca24 = make_layout(Scheme::mca, GridSpec(24)).num_distinct;
  const int cca24 = make_layout(Scheme::cca, GridSpec(24)).num_distinct;
  bool law = true;
  for (int s = 2; s <= 32; s += 2) {
    const auto l = make_layout(Scheme::mca, GridSpec(s));
    law = law && l.num_distinct == s - 1 && count_distinct(l.indices) == s - 1;
  }
  std::ostringstream os;
  os << "mca 24x24 = " << mca24 << ", cca 24x24 = " << cca24 << ", side-1 law for sides 2..32: " << (law ? "yes" : "no");
  return {mca24 == 23 && cca24 == 12 && law, os.str()};
}

// 3. Signed Manhattan delta equals the index difference.
Outcome c3_mu_consistency() {
  const GridSpec g(24);
  const auto coords = manhattan_coords(g);
  const auto layout = manhattan_indices(g);
  long mismatches = 0;
  for (int a = 0; a < g.total(); ++a) {
    for (int b = 0; b < g.total(); ++b) {
      const Position delta = signed_manhattan_delta(coords[static_cast<std::size_t>(a)], coords[static_cast<std::size_t>(b)]);
      if (delta != layout.indices[static_cast<std::size_t>(b)] - layout.indices[static_cast<std::size_t>(a)]) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(g.total() * g.total()) + " pairs, " + std::to_string(mismatches) + " mismatches"};
}

// 4. Raster index mask is the plain causal mask.
Outcome c4_mask_reduction() {
  int checked = 0, bad = 0;
  auto check = [&](const MultimodalSequence& seq) {
    ++checked;
    if (!(index_causal_mask(seq) == lower_triangular_mask(seq.size())).all()) ++bad;
  };
  for (int prefix : {0, 1, 5, 35, 62, 124}) {
    for (int suffix : {0, 1, 7, 62}) {
      if (prefix + 576 + suffix > 700) continue;
      check(build_sequence(prefix, GridSpec(24), suffix, make_layout(Scheme::raster, GridSpec(24))));
    }
  }
  check(build_sequence(60, GridSpec(24), 64, make_layout(Scheme::raster, GridSpec(24))));
  for (int side = 2; side <= 26; side += 2) {
    check(build_sequence(3, GridSpec(side), 4, make_layout(Scheme::raster, GridSpec(side))));
  }
  for (int n = 1; n <= 700; n += 23) check(MultimodalSequence::text_only(n));
  check(MultimodalSequence::text_only(700));
  return {bad == 0, std::to_string(checked) + " sequences up to length 700, " + std::to_string(bad) + " differ"};
}

struct Instance {
  std::vector<MatrixXd> q, k, v;
  std::vector<Position> pos;
  MaskMatrix mask;
  int d = 0;
};

Instance random_instance(std::mt19937_64& rng, int n, int d, int heads) {
  Instance in;
  in.d = d;
  std::uniform_int_distribution<Position> p(-100, 1000);
  std::bernoulli_distribution coin(0.5);
  for (int h = 0; h < heads; ++h) {
    in.q.push_back(MatrixXd::Random(n, d));
    in.k.push_back(MatrixXd::Random(n, d));
    in.v.push_back(MatrixXd::Random(n, d));
  }
  for (int i = 0; i < n; ++i) in.pos.push_back(p(rng));
  in.mask = MaskMatrix::Constant(n, n, false);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) in.mask(i, j) = coin(rng);
    in.mask(i, static_cast<Eigen::Index>(rng() % static_cast<unsigned>(n))) = true;
  }
  return in;
}

// 5. Fast attention against full-matrix brute force.
Outcome c5_oracle_equivalence() {
  std::mt19937_64 rng(5);
  std::srand(5);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const int d = 2 * (1 + static_cast<int>(rng() % 8));
    const int heads = 1 + static_cast<int>(rng() % 3);
    const Instance in = random_instance(rng, n, d, heads);
    const auto res =
        rope_attention(in.q, in.k, in.v, in.pos, in.mask, make_frequencies(d, 10000.0), AttentionConfig::make(d, heads));
    for (int h = 0; h < heads; ++h) {
      MatrixXd scores(n, n);
      for (int i = 0; i < n; ++i) {
        const Eigen::RowVectorXd qi = (oracle_rotation(in.pos[static_cast<std::size_t>(i)], d, 1e4) *
                                       in.q[static_cast<std::size_t>(h)].row(i).transpose())
                                          .transpose();
        for (int j = 0; j < n; ++j) {
          const Eigen::VectorXd kj =
              oracle_rotation(in.pos[static_cast<std::size_t>(j)], d, 1e4) * in.k[static_cast<std::size_t>(h)].row(j).transpose();
          scores(i, j) = qi.dot(kj) / std::sqrt(static_cast<double>(d));
        }
      }
      MatrixXd w = MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
          if (in.mask(i, j)) z += std::exp(scores(i, j));
        }
        for (int j = 0; j < n; ++j) {
          if (in.mask(i, j)) w(i, j) = std::exp(scores(i, j)) / z;
        }
      }
      const auto hs = static_cast<std::size_t>(h);
      worst = std::max(worst, (res.weights[hs] - w).cwiseAbs().maxCoeff());
      worst = std::max(worst, (res.outputs[hs] - w * in.v[hs]).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-9, "50 instances, max deviation " + fmt("%.3g", worst)};
}

// 6. Row normalization, exact zeros, shift invariance.
Outcome c6_normalization() {
  std::mt19937_64 rng(6);
  std::srand(6);
  double row_err = 0.0, shift_err = 0.0;
  long masked_nonzero = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + static_cast<int>(rng() % 12);
    const int d = 2 * (1 + static_cast<int>(rng() % 16));
    Instance in = random_instance(rng, n, d, 2);
    const auto freq = make_frequencies(d, 10000.0);
    const auto cfg = AttentionConfig::make(d, 2);
    const auto a = rope_attention(in.q, in.k, in.v, in.pos, in.mask, freq, cfg);
    const Position shift = static_cast<Position>(rng() % 5000) - 2500;
    for (auto& p : in.pos) p += shift;
    const auto b = rope_attention(in.q, in.k, in.v, in.pos, in.mask, freq, cfg);
    for (std::size_t h = 0; h < 2; ++h) {
      row_err = std::max(row_err, (a.weights[h].rowwise().sum().array() - 1.0).abs().maxCoeff());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (!in.mask(i, j) && a.weights[h](i, j) != 0.0) ++masked_nonzero;
        }
      }
      shift_err = std::max(shift_err, (a.weights[h] - b.weights[h]).cwiseAbs().maxCoeff());
    }
  }
  std::ostringstream os;
  os << "row-sum error " << fmt("%.3g", row_err) << ", masked nonzeros " << masked_nonzero << ", shift error "
     << fmt("%.3g", shift_err);
  return {row_err < 1e-9 && masked_nonzero == 0 && shift_err < 1e-9, os.str()};
}

// 7. Decay monotonicity of the content-matched score.
Outcome c7_decay() {
  const int d = 64;
  const auto profile = decay_profile(make_frequencies(d, 10000.0), d, 2048, 256, 7);
  std::vector<double> dist(profile.distances.begin(), profile.distances.end());
  const double rho = spearman(std::span<const double>(dist), std::span<const double>(profile.mean_score));
  return {rho < -0.8, "Spearman(delta, score) over delta in [0, 256] = " + fmt("%.4f", rho) + " (threshold -0.8)"};
}

// Attention of one instruction query over a grid whose keys all share one
// content vector. The query follows the image at position max_index + 1.
MatrixXd instruction_attention(Scheme scheme, int side, const Eigen::RowVectorXd& content, const Eigen::RowVectorXd& query) {
  const GridSpec g(side);
  const auto seq = build_sequence(0, g, 1, make_layout(scheme, g));
  const int n = seq.size();
  const int d = static_cast<int>(content.size());
  MatrixXd q = content.replicate(n, 1);
  q.row(n - 1) = query;
  const MatrixXd k = content.replicate(n, 1);
  const MatrixXd v = MatrixXd::Zero(n, d);
  const std::vector<MatrixXd> qs{q}, ks{k}, vs{v};
  const auto res = rope_attention(qs, ks, vs, seq.assigned_index(), index_causal_mask(seq), make_frequencies(d, 10000.0),
                                  AttentionConfig::make(d, 1));
  MatrixXd grid(side, side);
  for (int c = 0; c < g.total(); ++c) grid(g.row_of(c), g.col_of(c)) = res.weights[0](n - 1, seq.image_begin() + c);
  return grid;
}

std::array<double, 4> quadrants(const MatrixXd& m) {
  const Eigen::Index h = m.rows() / 2;
  return {m.topLeftCorner(h, h).sum(), m.topRightCorner(h, h).sum(), m.bottomLeftCorner(h, h).sum(),
          m.bottomRightCorner(h, h).sum()};
}

// 8. Mirror symmetry under the Manhattan layout.
Outcome c8_mirror_symmetry() {
  std::srand(8);
  const int side = 24;
  double cell_err = 0.0, mass_err = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Eigen::RowVectorXd content = Eigen::RowVectorXd::Random(64);
    const Eigen::RowVectorXd query = Eigen::RowVectorXd::Random(64) * 3.0;
    const MatrixXd a = instruction_attention(Scheme::mca, side, content, query);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        cell_err = std::max({cell_err, std::abs(a(r, c) - a(side - 1 - r, c)), std::abs(a(r, c) - a(r, side - 1 - c)),
                             std::abs(a(r, c) - a(side - 1 - r, side - 1 - c))});
      }
    }
    const auto q = quadrants(a);
    mass_err = std::max(mass_err, *std::max_element(q.begin(), q.end()) - *std::min_element(q.begin(), q.end()));
  }
  return {cell_err < 1e-9 && mass_err < 1e-6,
          "mirrored-cell error " + fmt("%.3g", cell_err) + ", quadrant mass spread " + fmt("%.3g", mass_err)};
}

// 9. Raster ordering. Query and keys share one content vector whose energy
// sits in the slow rotary blocks (theta * 576 < pi), where the matched score
// cos(delta * theta) falls strictly with distance over the whole grid.
Outcome c9_raster_bias() {
  const int side = 24, d = 64;
  const auto freq = make_frequencies(d, 10000.0);
  Eigen::RowVectorXd content = Eigen::RowVectorXd::Zero(d);
  int used = 0;
  for (int b = 0; b < d / 2; ++b) {
    if (freq.theta(b) * side * side < M_PI) {
      content(2 * b) = 1.0;
      ++used;
    }
  }
  content *= 4.0;
  const MatrixXd a = instruction_attention(Scheme::raster, side, content, content);
  const auto q = quadrants(a);
  const bool br_max = q[3] > q[0] && q[3] > q[1] && q[3] > q[2];
  long violations = 0;
  for (int idx = 1; idx < side * side; ++idx) {
    if (a((idx - 1) / side, (idx - 1) % side) > a(idx / side, idx % side)) ++violations;
  }
  std::ostringstream os;
  os << used << " slow blocks; masses TL " << fmt("%.4f", q[0]) << " TR " << fmt("%.4f", q[1]) << " BL "
     << fmt("%.4f", q[2]) << " BR " << fmt("%.4f", q[3]) << "; ordering violations " << violations;
  return {br_max && violations == 0, os.str()};
}

// 10. Finite-difference gradient checks.
Outcome c10_gradients() {
  std::mt19937_64 rng(10);
  std::srand(10);
  const int n = 6, d = 8, heads = 2;
  const Instance in = random_instance(rng, n, d, heads);
  const auto freq = make_frequencies(d, 10000.0);
  const auto cfg = AttentionConfig::make(d, heads);
  std::vector<MatrixXd> target;
  for (int h = 0; h < heads; ++h) target.push_back(MatrixXd::Random(n, d));
  const Eigen::Index block = n * d;

  auto unpack = [&](const Eigen::VectorXd& x, int which) {
    std::vector<MatrixXd> out;
    for (int h = 0; h < heads; ++h) {
      out.push_back(Eigen::Map<const MatrixXd>(x.data() + (which * heads + h) * block, n, d));
    }
    return out;
  };
  Eigen::VectorXd x0(3 * heads * block);
  for (int which = 0; which < 3; ++which) {
    const auto& src = which == 0 ? in.q : which == 1 ? in.k : in.v;
    for (int h = 0; h < heads; ++h) {
      x0.segment((which * heads + h) * block, block) = Eigen::Map<const Eigen::VectorXd>(src[static_cast<std::size_t>(h)].data(), block);
    }
  }
  Differentiable fn;
  fn.value = [&](const Eigen::VectorXd& x) {
    const auto res = rope_attention(unpack(x, 0), unpack(x, 1), unpack(x, 2), in.pos, in.mask, freq, cfg);
    double l = 0.0;
    for (int h = 0; h < heads; ++h) l += 0.5 * (res.outputs[static_cast<std::size_t>(h)] - target[static_cast<std::size_t>(h)]).squaredNorm();
    return l;
  };
  fn.gradient = [&](const Eigen::VectorXd& x) {
    const auto q = unpack(x, 0), k = unpack(x, 1), v = unpack(x, 2);
    const auto res = rope_attention(q, k, v, in.pos, in.mask, freq, cfg);
    std::vector<MatrixXd> d_out;
    for (int h = 0; h < heads; ++h) d_out.push_back(res.outputs[static_cast<std::size_t>(h)] - target[static_cast<std::size_t>(h)]);
    const auto g = rope_attention_backward(q, k, v, in.pos, freq, cfg, res, d_out);
    Eigen::VectorXd out(x.size());
    for (int h = 0; h < heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      out.segment(h * block, block) = Eigen::Map<const Eigen::VectorXd>(g.d_q[hs].data(), block);
      out.segment((heads + h) * block, block) = Eigen::Map<const Eigen::VectorXd>(g.d_k[hs].data(), block);
      out.segment((2 * heads + h) * block, block) = Eigen::Map<const Eigen::VectorXd>(g.d_v[hs].data(), block);
    }
    return out;
  };
  const double attn_err = grad_check(fn, x0, 1e-6);

  ToyModelConfig tc;
  tc.side = 4;
  tc.model_dim = 16;
  tc.ffn_dim = 24;
  tc.heads = 2;
  tc.vocab = 6;
  tc.instruction_len = 2;
  tc.scheme = Scheme::mca;
  tc.seed = 10;
  const ToyModel model(tc);
  const auto ds = gen_dataset(tc.grid(), 2, 10, tc.mode, tc.vocab);
  Differentiable toy;
  toy.value = [&](const Eigen::VectorXd& x) {
    ToyModel m = model;
    m.parameters() = x;
    return m.loss(ds[0]) + m.loss(ds[1]);
  };
  toy.gradient = [&](const Eigen::VectorXd& x) {
    ToyModel m = model;
    m.parameters() = x;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    m.accumulate_gradient(ds[0], g);
    m.accumulate_gradient(ds[1], g);
    return g;
  };
  const double toy_err = grad_check(toy, model.parameters(), 1e-5);
  return {attn_err < 1e-4 && toy_err < 1e-3,
          "attention rel err " + fmt("%.3g", attn_err) + " (< 1e-4), toy model 4x4 rel err " + fmt("%.3g", toy_err) +
              " (< 1e-3)"};
}

// 11. Paired raster/Manhattan training runs.
Outcome c11_bias_experiment() {
  constexpr int kSeeds = 5, kSteps = 2000, kTrain = 4096, kEval = 512;
  constexpr double kLr = 1e-3;
  int br_ge_tl = 0, mca_smaller = 0;
  std::ostringstream os;
  for (int s = 0; s < kSeeds; ++s) {
    ToyModelConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto train_set = gen_dataset(cfg.grid(), kTrain, cfg.seed + 1000, cfg.mode, cfg.vocab);
    const auto eval_set = gen_dataset(cfg.grid(), kEval, cfg.seed + 2000, cfg.mode, cfg.vocab);
    RegionReport rep[2];
    for (int k = 0; k < 2; ++k) {
      cfg.scheme = k == 0 ? Scheme::raster : Scheme::mca;
      const auto res = train(cfg, train_set, kSteps, kLr);
      rep[k] = eval_by_region(res.model, eval_set);
      std::printf("      seed %d %-6s acc TL %.3f TR %.3f BL %.3f BR %.3f overall %.3f spread %.3f\n", s,
                  k == 0 ? "raster" : "mca", rep[k].accuracy[0], rep[k].accuracy[1], rep[k].accuracy[2],
                  rep[k].accuracy[3], rep[k].overall_accuracy, rep[k].spread);
      std::fflush(stdout);
    }
    if (rep[0].accuracy[3] >= rep[0].accuracy[0]) ++br_ge_tl;
    if (rep[1].spread < rep[0].spread) ++mca_smaller;
  }
  os << "(a) raster BR >= TL in " << br_ge_tl << "/5 seeds; (b) mca spread < raster spread in " << mca_smaller
     << "/5 seeds";
  return {br_ge_tl >= 4 && mca_smaller >= 4, os.str()};
}

// 12. CHAIR ratios.
Outcome c12_chair() {
  using Batch = std::vector<CaptionAnnotation>;
  const Batch one{CaptionAnnotation::make({"dog", "cat", "car"}, {"dog", "car"})};
  const Batch two{CaptionAnnotation::make({"dog", "cat"}, {"dog"}), CaptionAnnotation::make({"car"}, {"car"})};
  const double obj = chair_object_ratio(one);
  const double cap = chair_caption_ratio(two);
  bool monotone = true;
  std::mt19937_64 rng(12);
  const std::vector<std::string> names{"dog", "cat", "car", "tree", "cup"};
  for (int t = 0; t < 100; ++t) {
    Batch b;
    for (int c = 0; c < 1 + t % 5; ++c) {
      std::vector<std::string> m, g;
      for (const auto& nm : names) {
        if (rng() % 2) m.push_back(nm);
        if (rng() % 2) g.push_back(nm);
      }
      if (m.empty()) m.push_back("dog");
      b.push_back(CaptionAnnotation::make(m, g));
    }
    double o = chair_object_ratio(b), c = chair_caption_ratio(b);
    for (int add = 0; add < 3; ++add) {
      b.push_back(CaptionAnnotation::make({"cup"}, {"cup", "tree"}));
      const double o2 = chair_object_ratio(b), c2 = chair_caption_ratio(b);
      monotone = monotone && o2 <= o && c2 <= c;
      o = o2;
      c = c2;
    }
  }
  return {obj == 1.0 / 3.0 && cap == 0.5 && monotone,
          "object ratio " + fmt("%.17g", obj) + ", caption ratio " + fmt("%.17g", cap) + ", monotone under clean captions: " +
              (monotone ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "rotation relative-position identity", c1_relative_identity},
      {2, "distinct index counts", c2_index_counts},
      {3, "signed Manhattan delta consistency", c3_mu_consistency},
      {4, "raster index mask equals causal mask", c4_mask_reduction},
      {5, "attention oracle equivalence", c5_oracle_equivalence},
      {6, "normalization, masking, shift invariance", c6_normalization},
      {7, "decay monotonicity", c7_decay},
      {8, "Manhattan mirror symmetry", c8_mirror_symmetry},
      {9, "raster bias direction", c9_raster_bias},
      {10, "gradient correctness", c10_gradients},
      {11, "desk-scale bias experiment", c11_bias_experiment},
      {12, "CHAIR ratio exactness", c12_chair},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
