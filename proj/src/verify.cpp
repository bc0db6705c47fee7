#include "srtrl/verify.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

#include "srtrl/oracles.hpp"

namespace srtrl {

namespace {

using Outcome = std::pair<bool, std::string>;

TensorXd random_tensor(const Shape& s, Rng& rng) {
  TensorXd t(s);
  for (Index j = 0; j < t.size(); ++j) t.data()(j) = rng.normal();
  return t;
}

MatrixXd random_matrix(Index rows, Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Index random_dim(Rng& rng, Index lo, Index hi) { return lo + rng.uniform_index(hi - lo + 1); }

Shape random_shape(Rng& rng, Index order, Index lo, Index hi) {
  Shape s;
  for (Index k = 0; k < order; ++k) s.push_back(random_dim(rng, lo, hi));
  return s;
}

std::vector<MatrixXd> random_factors(const Shape& dims, Index rank, Rng& rng) {
  std::vector<MatrixXd> f;
  for (Index d : dims) f.push_back(random_matrix(d, rank, rng));
  return f;
}

double max_abs_diff(const TensorXd& a, const TensorXd& b) {
  if (a.shape() != b.shape()) return INFINITY;
  return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

Outcome within(double err, double tol, const std::string& what) {
  return {err <= tol, what + " max error " + fmt(err) + " (tol " + fmt(tol) + ")"};
}

SketchDraw mask_from_bits(unsigned long long bits, Index rank) {
  std::vector<Index> m;
  for (Index r = 0; r < rank; ++r) m.push_back(static_cast<Index>((bits >> r) & 1ULL));
  return SketchDraw::bernoulli_mask(std::move(m));
}

TrlModelXd random_kruskal_model(Rng& rng, Index max_rank, SketchSpec sketch) {
  const Index order = random_dim(rng, 1, 3);
  const Shape in = random_shape(rng, order, 2, 4);
  const Index out = random_dim(rng, 1, 3);
  const Index rank = random_dim(rng, 1, max_rank);
  TrlModelXd m = init_kruskal_model<double>(in, out, rank, sketch, rng);
  for (Index o = 0; o < out; ++o) m.bias(o) = rng.normal();
  return m;
}

TrlModelXd random_tucker_model(Rng& rng, SketchSpec sketch) {
  const Index order = random_dim(rng, 1, 3);
  const Shape in = random_shape(rng, order, 2, 4);
  const Index out = random_dim(rng, 1, 3);
  Shape ranks;
  if (sketch.tie_modes) {
    ranks.assign(static_cast<std::size_t>(order + 1), random_dim(rng, 1, 3));
  } else {
    ranks = random_shape(rng, order + 1, 1, 3);
  }
  TrlModelXd m = init_tucker_model<double>(in, out, ranks, sketch, rng);
  for (Index o = 0; o < out; ++o) m.bias(o) = rng.normal();
  return m;
}

TensorXd random_batch(const TrlModelXd& m, Index batch, Rng& rng) {
  Shape s{batch};
  const Shape in = m.input_shape();
  s.insert(s.end(), in.begin(), in.end());
  return random_tensor(s, rng);
}

double gradient_error(const Gradients<double>& a, const Gradients<double>& n, std::string& why) {
  if (a.factors.size() != n.factors.size()) {
    why = "factor count mismatch";
    return INFINITY;
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < a.factors.size(); ++k) {
    if (a.factors[k].rows() != n.factors[k].rows() || a.factors[k].cols() != n.factors[k].cols()) {
      why = "factor gradient shape mismatch";
      return INFINITY;
    }
    worst = std::max(worst, oracle::max_relative_error(a.factors[k], n.factors[k], kGradFloor));
  }
  if (n.core) {
    if (!a.core || a.core->shape() != n.core->shape()) {
      why = "core gradient missing";
      return INFINITY;
    }
    worst = std::max(worst, oracle::max_relative_error(a.core->data(), n.core->data(), kGradFloor));
  }
  if (n.weights && a.weights) worst = std::max(worst, oracle::max_relative_error(*a.weights, *n.weights, kGradFloor));
  if (a.bias.size() != n.bias.size()) {
    why = "bias gradient shape mismatch";
    return INFINITY;
  }
  return std::max(worst, oracle::max_relative_error(a.bias, n.bias, kGradFloor));
}

class Runner {
 public:
  explicit Runner(const VerifyOptions& o) : options_(o) {
    if (!options_.backward)
      options_.backward = [](const TrlModelXd& m, const TensorXd& x, const MatrixXd& y, const SketchDraw* d) {
        return backward(m, x, y, d);
      };
  }

  template <typename Fn>
  void check(const std::string& suite, const std::string& name, Fn&& fn) {
    const std::string full = suite + "." + name;
    if (!selected(suite, full)) return;
    Rng rng = Rng(options_.seed).split(full);
    CheckResult r{suite, name, false, ""};
    try {
      std::tie(r.passed, r.detail) = fn(rng);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    results_.push_back(std::move(r));
  }

  // A suite name selects exactly that suite; anything else is a substring of
  // "suite.check".
  bool selected(const std::string& suite, const std::string& full) const {
    static const std::set<std::string> suites{"algebra", "sketch", "srr", "enum", "grad"};
    const std::string& f = options_.filter;
    if (f.empty()) return true;
    if (suites.count(f)) return f == suite;
    return full.find(f) != std::string::npos;
  }

  const BackwardFn& backward_fn() const { return options_.backward; }
  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  VerifyOptions options_;
  std::vector<CheckResult> results_;
};

void algebra_suite(Runner& run) {
  run.check("algebra", "unfold_index_map", [](Rng& rng) -> Outcome {
    for (int trial = 0; trial < 10; ++trial) {
      const TensorXd t = random_tensor(random_shape(rng, random_dim(rng, 1, 4), 1, 4), rng);
      for (Index n = 0; n < t.order(); ++n)
        if (unfold(t, n) != oracle::unfold(t, n)) return {false, "mismatch at mode " + std::to_string(n)};
    }
    return {true, "exact on 10 random tensors, all modes"};
  });
  run.check("algebra", "fold_roundtrip", [](Rng& rng) -> Outcome {
    for (int trial = 0; trial < 10; ++trial) {
      const TensorXd t = random_tensor(random_shape(rng, random_dim(rng, 1, 4), 1, 4), rng);
      for (Index n = 0; n < t.order(); ++n)
        if (!(fold(unfold(t, n), n, t.shape()) == t)) return {false, "roundtrip differs at mode " + std::to_string(n)};
    }
    return {true, "bitwise exact"};
  });
  run.check("algebra", "vectorize_index_map", [](Rng& rng) -> Outcome {
    const TensorXd t = random_tensor(random_shape(rng, 3, 2, 4), rng);
    const VectorXd v = vectorize(t);
    bool ok = true;
    oracle::for_each_index(t.shape(), [&](const std::vector<Index>& idx) {
      ok = ok && v(oracle::vec_position(idx, t.shape())) == t(idx);
    });
    return {ok, "vec position formula"};
  });
  run.check("algebra", "mode_dot_bruteforce", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const TensorXd t = random_tensor(random_shape(rng, random_dim(rng, 1, 4), 1, 4), rng);
      const Index n = rng.uniform_index(t.order());
      const MatrixXd m = random_matrix(random_dim(rng, 1, 5), t.dim(n), rng);
      err = std::max(err, max_abs_diff(mode_dot(t, m, n), oracle::mode_dot(t, m, n)));
    }
    return within(err, 1e-12, "mode_dot vs triple sum");
  });
  run.check("algebra", "mode_dot_identity_and_commutation", [](Rng& rng) -> Outcome {
    const TensorXd t = random_tensor(random_shape(rng, 3, 2, 4), rng);
    for (Index n = 0; n < 3; ++n)
      if (!(mode_dot(t, MatrixXd(MatrixXd::Identity(t.dim(n), t.dim(n))), n) == t))
        return {false, "identity law fails at mode " + std::to_string(n)};
    const MatrixXd a = random_matrix(3, t.dim(0), rng), b = random_matrix(2, t.dim(1), rng);
    return within(max_abs_diff(mode_dot(mode_dot(t, a, 0), b, 1), mode_dot(mode_dot(t, b, 1), a, 0)), 1e-12,
                  "commutation");
  });
  run.check("algebra", "inner_contract_bruteforce", [](Rng& rng) -> Outcome {
    const TensorXd x = random_tensor({4, 2, 3}, rng), w = random_tensor({2, 3, 5}, rng);
    double err = max_abs_diff(inner_contract(x, w, 2), oracle::inner_contract(x, w, 2));
    const TensorXd y = random_tensor(x.shape(), rng);
    err = std::max(err, std::abs(inner_contract(x, y, 3).data()(0) - vectorize(x).dot(vectorize(y))));
    return within(err, 1e-12, "generalized inner product");
  });
  run.check("algebra", "khatri_rao_vectorization", [](Rng& rng) -> Outcome {
    const KruskalXd k(random_factors({2, 3, 2}, 2, rng), VectorXd::Random(2));
    const VectorXd v = khatri_rao(k.factors()) * k.effective_weights();
    return within((v - vectorize(oracle::kruskal_full(k))).cwiseAbs().maxCoeff(), 1e-12, "vec(full) vs KR lambda");
  });
  run.check("algebra", "cp_as_superdiagonal_tucker", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Index order = random_dim(rng, 2, 4), rank = random_dim(rng, 1, 4);
      const auto factors = random_factors(random_shape(rng, order, 1, 4), rank, rng);
      VectorXd lambda(rank);
      for (Index r = 0; r < rank; ++r) lambda(r) = rng.normal();
      const TuckerXd t(super_diagonal_core(lambda, order), factors);
      err = std::max(err, max_abs_diff(tucker_to_full(t), kruskal_to_full(KruskalXd(factors, lambda))));
      err = std::max(err, max_abs_diff(kruskal_to_full(KruskalXd(factors, lambda)), oracle::kruskal_full(factors, lambda)));
    }
    return within(err, 1e-12, "Tucker(super-diagonal) vs Kruskal vs brute sum");
  });
}

void sketch_suite(Runner& run) {
  run.check("sketch", "kruskal_bernoulli_exhaustive", [](Rng& rng) -> Outcome {
    double err = 0.0;
    int count = 0;
    for (Index rank = 1; rank <= 6; ++rank) {
      const KruskalXd k(random_factors({2, 3, 2}, rank, rng));
      for (unsigned long long bits = 0; bits < (1ULL << rank); ++bits, ++count) {
        const SketchDraw d = mask_from_bits(bits, rank);
        err = std::max(err, max_abs_diff(kruskal_to_full(apply_sketch_kruskal(k, d)), oracle::sketched_kruskal_full(k, d)));
      }
    }
    return within(err, 1e-12, std::to_string(count) + " masks, R<=6");
  });
  run.check("sketch", "tucker_bernoulli_exhaustive", [](Rng& rng) -> Outcome {
    // ranks (2,2,2) untied: all 2^6 joint masks
    const TuckerXd t(random_tensor({2, 2, 2}, rng), random_factors({3, 2, 4}, 2, rng));
    double err = 0.0;
    for (unsigned long long bits = 0; bits < 64; ++bits) {
      SketchDraw d{SketchScheme::bernoulli, false, {}};
      for (int k = 0; k < 3; ++k) d.entries.push_back({static_cast<Index>((bits >> (2 * k)) & 1), static_cast<Index>((bits >> (2 * k + 1)) & 1)});
      err = std::max(err, max_abs_diff(tucker_to_full(apply_sketch_tucker(t, d)), oracle::sketched_tucker_full(t, d)));
    }
    return within(err, 1e-12, "64 joint masks");
  });
  run.check("sketch", "replacement_vs_selection_matrix", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const double theta = 0.2 + 0.8 * static_cast<double>(rng.uniform_index(5)) / 4.0;
      const Index rank = random_dim(rng, 1, 6);
      const KruskalXd k(random_factors({3, 2, 2}, rank, rng), VectorXd::Constant(rank, 1.5));
      const SketchDraw dk = draw_sketch({SketchScheme::replacement, theta, true}, {rank}, rng);
      err = std::max(err, max_abs_diff(kruskal_to_full(apply_sketch_kruskal(k, dk)), oracle::sketched_kruskal_full(k, dk)));
      const Shape ranks = random_shape(rng, 3, 1, 4);
      const TuckerXd t(random_tensor(ranks, rng), {random_matrix(3, ranks[0], rng), random_matrix(2, ranks[1], rng), random_matrix(4, ranks[2], rng)});
      const SketchDraw dt = draw_sketch({SketchScheme::replacement, theta, false}, ranks, rng);
      err = std::max(err, max_abs_diff(tucker_to_full(apply_sketch_tucker(t, dt)), oracle::sketched_tucker_full(t, dt)));
    }
    return within(err, 1e-12, "20 random draws, CP and Tucker");
  });
  run.check("sketch", "bernoulli_idempotence_and_identity", [](Rng& rng) -> Outcome {
    const TuckerXd t(random_tensor({3, 2, 2}, rng),
                     {random_matrix(4, 3, rng), random_matrix(2, 2, rng), random_matrix(3, 2, rng)});
    const SketchDraw d = draw_sketch({SketchScheme::bernoulli, 0.5, false}, t.ranks(), rng);
    const SketchDraw ones = draw_sketch({SketchScheme::bernoulli, 1.0, false}, t.ranks(), rng);
    const bool idem = tucker_to_full(apply_sketch_tucker(apply_sketch_tucker(t, d), d)) == tucker_to_full(apply_sketch_tucker(t, d));
    const bool ident = tucker_to_full(apply_sketch_tucker(t, ones)) == tucker_to_full(t);
    const KruskalXd k(random_factors({2, 3, 2}, 4, rng));
    const SketchDraw dk = draw_sketch({SketchScheme::bernoulli, 0.5, true}, {4}, rng);
    const bool idem_k = kruskal_to_full(apply_sketch_kruskal(apply_sketch_kruskal(k, dk), dk)) == kruskal_to_full(apply_sketch_kruskal(k, dk));
    return {idem && ident && idem_k, std::string("idempotence ") + (idem && idem_k ? "ok" : "FAILED") + ", theta=1 identity " + (ident ? "ok" : "FAILED")};
  });
  run.check("sketch", "inverted_scaling_unbiased", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (double theta : {0.5, 0.3, 0.8}) {
      const Index rank = 5;
      const KruskalXd k(random_factors({2, 3, 2}, rank, rng));
      const TensorXd full = kruskal_to_full(k);
      VectorXd mean = VectorXd::Zero(full.size());
      for (unsigned long long bits = 0; bits < (1ULL << rank); ++bits) {
        const auto kept = static_cast<double>(__builtin_popcountll(bits));
        const double p = std::pow(theta, kept) * std::pow(1.0 - theta, static_cast<double>(rank) - kept);
        mean += p / theta * kruskal_to_full(apply_sketch_kruskal(k, mask_from_bits(bits, rank))).data();
      }
      err = std::max(err, (mean - full.data()).cwiseAbs().maxCoeff());
    }
    return within(err, 1e-10, "E[(1/theta) full(sketched)] - full");
  });
}

void srr_suite(Runner& run) {
  run.check("srr", "factored_vs_materialized_forward", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const TrlModelXd m = trial % 2 ? random_tucker_model(rng, {}) : random_kruskal_model(rng, 4, {});
      const TensorXd x = random_batch(m, 5, rng);
      const Index n = m.input_shape().size();
      MatrixXd ref = as_matrix(oracle::inner_contract(x, to_full(m.weight), static_cast<Index>(n)));
      ref.rowwise() += m.bias.transpose();
      const MatrixXd y = forward(m, x);
      err = std::max(err, (y - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
    return within(err, 1e-10, "relative");
  });
  run.check("srr", "mode_n_unfolded_form", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const TrlModelXd m = random_kruskal_model(rng, 5, {SketchScheme::bernoulli, 0.6, true});
      const TensorXd x = random_batch(m, 4, rng);
      const SketchDraw d = draw_sketch(m.sketch, m.sketch_ranks(), rng);
      const auto& k = m.kruskal();
      std::vector<MatrixXd> inputs(k.factors().begin(), k.factors().end() - 1);
      const MatrixXd kr = khatri_rao(inputs);
      VectorXd mask = sketch_multiplicity(d, 0, k.rank());
      const Index row = x.size() / x.dim(0);
      MatrixXd ref(x.dim(0), m.output_dim());
      for (Index s = 0; s < x.dim(0); ++s) {
        const VectorXd xs = x.data().segment(s * row, row);
        ref.row(s) = (k.factors().back() * mask.asDiagonal() * kr.transpose() * xs / 0.6 + m.bias).transpose();
      }
      err = std::max(err, (forward_srr(m, x, d) - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
    return within(err, 1e-10, "U^(N) diag(mask) KR^T vec(x) / theta");
  });
  run.check("srr", "element_equivalence", [](Rng& rng) -> Outcome {
    double err = 0.0;
    for (Index rank = 1; rank <= 5; ++rank) {
      TrlModelXd m = random_kruskal_model(rng, 1, {SketchScheme::bernoulli, 0.7, true});
      m = init_kruskal_model<double>(m.input_shape(), m.output_dim(), rank, m.sketch, rng);
      const TensorXd x = random_batch(m, 3, rng);
      for (unsigned long long bits = 0; bits < (1ULL << rank); ++bits) {
        const SketchDraw d = mask_from_bits(bits, rank);
        TrlModelXd reduced = m;
        VectorXd lam = sketch_multiplicity(d, 0, rank) / 0.7;
        reduced.kruskal() = KruskalXd(m.kruskal().factors(), lam);
        err = std::max(err, (forward_srr(m, x, d) - forward(reduced, x)).cwiseAbs().maxCoeff());
      }
    }
    return within(err, 1e-12, "all masks R<=5");
  });
  run.check("srr", "zero_mask_gives_bias", [](Rng& rng) -> Outcome {
    const TrlModelXd m = random_kruskal_model(rng, 4, {SketchScheme::bernoulli, 0.3, true});
    const TensorXd x = random_batch(m, 6, rng);
    const MatrixXd y = forward_srr(m, x, mask_from_bits(0, m.kruskal().rank()));
    bool exact = true;
    for (Index s = 0; s < y.rows(); ++s) exact = exact && y.row(s) == m.bias.transpose();
    return {exact, "y == b exactly"};
  });
}

void enum_suite(Runner& run) {
  run.check("enum", "enumeration_vs_closed_form", [](Rng& rng) -> Outcome {
    double err = 0.0;
    int instances = 0;
    for (int trial = 0; trial < 24; ++trial) {
      const double theta = std::array{0.3, 0.5, 0.9}[static_cast<std::size_t>(trial % 3)];
      const TrlModelXd m = random_kruskal_model(rng, 8, {SketchScheme::bernoulli, theta, true});
      const TensorXd x = random_batch(m, random_dim(rng, 1, 16), rng);
      MatrixXd y(x.dim(0), m.output_dim());
      for (Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
      const VectorXd a = expected_stochastic_loss_enumerated(m, x, y, theta);
      const VectorXd b = expected_stochastic_loss_closed_form(m, x, y, theta);
      err = std::max(err, rel_diff(a.mean(), b.mean()));
      for (Index s = 0; s < a.size(); ++s) err = std::max(err, rel_diff(a(s), b(s)));
      ++instances;
    }
    return within(err, 1e-10, std::to_string(instances) + " models, relative");
  });
}

void grad_suite(Runner& run) {
  struct Case {
    const char* name;
    bool kruskal;
    SketchScheme scheme;
    bool stochastic;
    bool tied;
  };
  const Case cases[] = {
      {"kruskal_stochastic_bernoulli", true, SketchScheme::bernoulli, true, true},
      {"kruskal_stochastic_replacement", true, SketchScheme::replacement, true, true},
      {"kruskal_deterministic", true, SketchScheme::bernoulli, false, true},
      {"tucker_stochastic_bernoulli", false, SketchScheme::bernoulli, true, false},
      {"tucker_stochastic_replacement", false, SketchScheme::replacement, true, false},
      {"tucker_unsketched", false, SketchScheme::none, false, true},
  };
  const BackwardFn& bw = run.backward_fn();
  for (const Case& c : cases) {
    run.check("grad", c.name, [&bw, c](Rng& rng) -> Outcome {
      double worst = 0.0;
      constexpr int kInstances = 20;
      for (int i = 0; i < kInstances; ++i) {
        const double theta = 0.2 + 0.7 * static_cast<double>(rng.uniform_index(8)) / 7.0;
        const SketchSpec spec{c.scheme, c.scheme == SketchScheme::none ? 1.0 : theta, c.tied};
        const TrlModelXd m = c.kruskal ? random_kruskal_model(rng, 4, spec) : random_tucker_model(rng, spec);
        const TensorXd x = random_batch(m, random_dim(rng, 1, 6), rng);
        MatrixXd y(x.dim(0), m.output_dim());
        for (Index j = 0; j < y.size(); ++j) y.data()[j] = rng.normal();
        std::optional<SketchDraw> draw;
        if (c.stochastic) draw = draw_sketch(spec, m.sketch_ranks(), rng);
        const SketchDraw* dp = draw ? &*draw : nullptr;
        const Gradients<double> analytic = bw(m, x, y, dp);
        const Gradients<double> numeric = oracle::finite_difference_gradients(m, x, y, dp, kGradStep);
        std::string why;
        worst = std::max(worst, gradient_error(analytic, numeric, why));
        if (!why.empty()) return {false, why};
      }
      return within(worst, kGradRelTol, std::to_string(kInstances) + " instances, central differences h=1e-5");
    });
  }
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  Runner run(options);
  algebra_suite(run);
  sketch_suite(run);
  srr_suite(run);
  enum_suite(run);
  grad_suite(run);
  return run.take();
}

void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
  std::size_t width = 10;
  for (const auto& r : results) width = std::max(width, r.suite.size() + r.name.size() + 1);
  int failed = 0;
  for (const auto& r : results) {
    os << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width) + 2)
       << (r.suite + "." + r.name) << r.detail << '\n';
    failed += r.passed ? 0 : 1;
  }
  os << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed\n";
}

}  // namespace srtrl
