// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "csp/checkpoint.hpp"
#include "csp/objectives.hpp"
#include "csp/pipeline.hpp"
#include "objective_fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace csp;
using namespace csp::testing;

namespace {

// Tolerances and budgets.
constexpr double kClosedFormTol = 1e-10;
constexpr double kOracleTol = 1e-10;
constexpr int kOracleInstances = 1000;
constexpr double kOracleBudget = 10.0;
constexpr double kGradientTol = 1e-4;
constexpr int kGradientConfigs = 20;
constexpr double kGradientBudget = 120.0;
constexpr int kSphereDraws = 1000000;
constexpr int kSphereBands = 100;
constexpr double kSphereSignificance = 0.01;
constexpr double kBandTol = 0.005;
constexpr double kSphereBudget = 30.0;
constexpr double kImageOnlyLow = 0.4;
constexpr double kImageOnlyHigh = 0.7;
constexpr int kBenchmarkSeeds = 5;
constexpr int kMinPairedWins = 4;
constexpr double kBenchmarkBudget = 15.0 * 60.0;
constexpr int kCombinerInstances = 10000;
constexpr double kSimcseOneTol = 1e-10;
constexpr double kSimcseLnTol = 1e-9;

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double production(const oracle::Batch& x, const ContrastiveConfig& cfg) {
  Tape t;
  BatchEmbeddings emb;
  emb.locations = t.constant(x.loc);
  emb.images = t.constant(x.img);
  if (cfg.components.negative_locations) {
    emb.negative_locations = t.constant(x.negloc);
    emb.negatives_per_image = x.per_image;
  }
  if (cfg.components.simcse) emb.second_pass = t.constant(x.second);
  Var v = cfg.loss == LossKind::kMc ? combine_mc(t, emb, cfg) : combine_nce(t, emb, cfg);
  return t.value(v)(0, 0);
}

Outcome closed_form_oracles() {
  const auto start = Clock::now();
  Tape t;
  // Orthogonal unit rows give similarity 0.
  Var e = t.constant(Matrix(2, 2, {1, 0, 0, 1}));
  PairSet nce;
  nce.pairs = {{{e, 0}, {e, 1}, true, 0}, {{e, 1}, {e, 0}, false, 0}};
  const double nce_value = t.value(nce_loss(t, nce))(0, 0);
  PairSet mc;
  mc.pairs = {{{e, 0}, {e, 1}, true, 0}};
  for (int k = 0; k < 3; ++k) mc.pairs.push_back({{e, 1}, {e, 0}, false, 0});
  const double mc_value = t.value(mc_loss(t, mc, 1.0))(0, 0);
  const double nce_err = std::abs(nce_value - 2.0 * std::log(2.0));
  const double mc_err = std::abs(mc_value - std::log(4.0));

  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < kOracleInstances; ++trial) {
    const std::size_t n = 2 + rng.below(3), d = 2 + rng.below(4);
    oracle::Batch x;
    x.per_image = 1 + rng.below(3);
    x.loc = random_matrix(n, d, rng);
    x.img = random_matrix(n, d, rng);
    x.negloc = random_matrix(n * x.per_image, d, rng);
    x.second = random_matrix(n, d, rng);
    ContrastiveConfig cfg;
    do {
      cfg.components = {rng.bernoulli(0.6), rng.bernoulli(0.6), rng.bernoulli(0.6)};
    } while (!cfg.components.any());
    cfg.alpha1 = 2 * rng.uniform();
    cfg.alpha2 = 2 * rng.uniform();
    cfg.beta1 = 2 * rng.uniform();
    cfg.beta2 = 2 * rng.uniform();
    cfg.tau0 = 0.1 + rng.uniform();
    cfg.tau1 = 0.1 + rng.uniform();
    cfg.tau2 = 0.1 + rng.uniform();
    const oracle::Weights w{cfg.components.in_batch, cfg.components.negative_locations,
                            cfg.components.simcse, cfg.alpha1, cfg.alpha2, cfg.beta1,
                            cfg.beta2, cfg.tau0, cfg.tau1, cfg.tau2};
    cfg.loss = LossKind::kNce;
    worst = std::max(worst, std::abs(production(x, cfg) - oracle::combined_nce(x, w)));
    cfg.loss = LossKind::kMc;
    worst = std::max(worst, std::abs(production(x, cfg) - oracle::combined_mc(x, w)));
  }
  const double elapsed = seconds_since(start);
  const bool pass = nce_err <= kClosedFormTol && mc_err <= kClosedFormTol && worst < kOracleTol &&
                    elapsed < kOracleBudget;
  return {pass, "|nce-2ln2|=" + fmt(nce_err) + " |mc-ln4|=" + fmt(mc_err) +
                    " oracle max diff=" + fmt(worst) + " over " + std::to_string(kOracleInstances) +
                    " instances, " + fmt(elapsed, 3) + " s"};
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  Rng rng(202);
  struct Objective {
    std::string name;
    double worst = 0.0;
    int failures = 0;
  };
  std::array<Objective, 5> obj{{{"csp_nce"}, {"csp_mc"}, {"mse"}, {"presence"}, {"head"}}};
  for (int i = 0; i < kGradientConfigs; ++i) {
    const std::size_t n = i % 2 ? 4 : 2;
    const std::size_t d = (i / 2) % 2 ? 16 : 8;
    auto record = [&](Objective& o, double err) {
      o.worst = std::max(o.worst, err);
      o.failures += !(err < kGradientTol);
    };
    const LossKind kinds[] = {LossKind::kNce, LossKind::kMc, LossKind::kMse};
    for (int k = 0; k < 3; ++k) {
      const ObjectiveCase c = make_objective_case(n, d, kinds[k], rng);
      record(obj[k], finite_difference_check(objective_function(c), c.point()));
    }
    const ObjectiveCase p = make_presence_case(n, d, rng);
    record(obj[3], finite_difference_check(presence_function(p, 0.5 + rng.uniform()),
                                           presence_point(p)));
    const ObjectiveCase h = make_head_case(n, d, rng);
    record(obj[4], finite_difference_check(head_function(h), {h.head.weight, h.head.bias}));
  }
  const double elapsed = seconds_since(start);
  bool pass = elapsed < kGradientBudget;
  std::string detail;
  for (const Objective& o : obj) {
    pass = pass && o.failures == 0;
    detail += o.name + " max=" + fmt(o.worst, 3) + " (" + std::to_string(o.failures) + " over) ";
  }
  return {pass, detail + fmt(elapsed, 3) + " s"};
}

Outcome sphere_sampler() {
  const auto start = Clock::now();
  Rng rng(303);
  std::vector<long> counts(kSphereBands, 0);
  long central = 0;
  for (int i = 0; i < kSphereDraws; ++i) {
    const GeoLocation p = uniform_sphere_sample(rng);
    // Equal-area bands are equal steps in sin(lat).
    const double z = std::sin(p.lat());
    const int band = std::min(kSphereBands - 1, static_cast<int>((z + 1.0) / 2.0 * kSphereBands));
    ++counts[band];
    central += std::abs(p.lat()) < std::numbers::pi / 6;
  }
  const double expected = static_cast<double>(kSphereDraws) / kSphereBands;
  double chi2 = 0.0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(kSphereBands - 1);
  const double critical = boost::math::quantile(dist, 1.0 - kSphereSignificance);
  const double fraction = static_cast<double>(central) / kSphereDraws;
  const double elapsed = seconds_since(start);
  const bool pass = chi2 < critical && std::abs(fraction - 0.5) <= kBandTol && elapsed < kSphereBudget;
  return {pass, "chi2=" + fmt(chi2) + " critical=" + fmt(critical) + " |lat|<pi/6 fraction=" +
                    fmt(fraction, 6) + ", " + fmt(elapsed, 3) + " s"};
}

// Benchmark world shared by the trend and ablation criteria.
TrainConfig benchmark_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.apply({{"seed", std::to_string(seed)},
             {"data.feature_noise", "2"},
             {"encoder.scales", "16"},
             {"encoder.hidden_units", "128"},
             {"encoder.dim", "64"},
             {"pretrain.epochs", "20"},
             {"pretrain.lr", "0.001"},
             {"finetune.ratios", "5"}});
  cfg.validate();
  return cfg;
}

struct BenchmarkRow {
  double sup_only, mc_bld, nce_bld, mse, mc_b, image_only;
};

struct Benchmark {
  std::vector<BenchmarkRow> rows;
  double seconds = 0.0;
};

Benchmark run_benchmark() {
  const auto start = Clock::now();
  Benchmark b;
  for (int seed = 1; seed <= kBenchmarkSeeds; ++seed) {
    const TrainConfig base = benchmark_config(seed);
    const DataSplits data = generate_data(base);
    auto top1 = [&](const std::string& loss, const std::string& components) {
      TrainConfig cfg = base;
      cfg.apply({{"pretrain.loss", loss}, {"pretrain.components", components}});
      cfg.validate();
      return *run_experiment(cfg, data).cells.front().report.top1;
    };
    BenchmarkRow row{};
    const Accuracies sup = top1("none", "BLD");
    row.sup_only = sup.combined;
    row.image_only = sup.image;
    row.mc_bld = top1("mc", "BLD").combined;
    row.nce_bld = top1("nce", "BLD").combined;
    row.mse = top1("mse", "BLD").combined;
    row.mc_b = top1("mc", "B").combined;
    std::printf("  seed %d: sup-only=%.4f mc-BLD=%.4f nce-BLD=%.4f mse=%.4f mc-B=%.4f image-only=%.4f\n",
                seed, row.sup_only, row.mc_bld, row.nce_bld, row.mse, row.mc_b, row.image_only);
    std::fflush(stdout);
    b.rows.push_back(row);
  }
  b.seconds = seconds_since(start);
  return b;
}

double mean_of(const Benchmark& b, double BenchmarkRow::*field) {
  double s = 0.0;
  for (const BenchmarkRow& r : b.rows) s += r.*field;
  return s / b.rows.size();
}

// Standard error of the mean across seeds.
double se_of(const Benchmark& b, double BenchmarkRow::*field) {
  const double m = mean_of(b, field);
  double ss = 0.0;
  for (const BenchmarkRow& r : b.rows) ss += (r.*field - m) * (r.*field - m);
  return std::sqrt(ss / (b.rows.size() - 1)) / std::sqrt(static_cast<double>(b.rows.size()));
}

// a >= b in mean, or within one standard error (the larger of the two).
bool at_least_within_se(const Benchmark& b, double BenchmarkRow::*x, double BenchmarkRow::*y) {
  const double tol = std::max(se_of(b, x), se_of(b, y));
  return mean_of(b, x) >= mean_of(b, y) - tol;
}

Outcome trend_reproduction(const Benchmark& b) {
  int wins = 0;
  bool image_in_range = true;
  for (const BenchmarkRow& r : b.rows) {
    wins += r.mc_bld > r.sup_only;
    image_in_range = image_in_range && r.image_only >= kImageOnlyLow && r.image_only <= kImageOnlyHigh;
  }
  const double sup = mean_of(b, &BenchmarkRow::sup_only);
  const double mc = mean_of(b, &BenchmarkRow::mc_bld);
  const double nce = mean_of(b, &BenchmarkRow::nce_bld);
  const double mse = mean_of(b, &BenchmarkRow::mse);
  const bool ordering = at_least_within_se(b, &BenchmarkRow::mc_bld, &BenchmarkRow::nce_bld) &&
                        at_least_within_se(b, &BenchmarkRow::nce_bld, &BenchmarkRow::mse);
  const bool pass = image_in_range && mc > sup && wins >= kMinPairedWins && ordering &&
                    b.seconds < kBenchmarkBudget;
  return {pass, "mean sup-only=" + fmt(sup) + " mc-BLD=" + fmt(mc) + " (se " +
                    fmt(se_of(b, &BenchmarkRow::mc_bld), 2) + ") nce-BLD=" + fmt(nce) + " (se " +
                    fmt(se_of(b, &BenchmarkRow::nce_bld), 2) + ") mse=" + fmt(mse) + " (se " +
                    fmt(se_of(b, &BenchmarkRow::mse), 2) + "), mc wins " + std::to_string(wins) +
                    "/" + std::to_string(b.rows.size()) + ", image-only " +
                    (image_in_range ? "in" : "outside") + " [0.4, 0.7], " + fmt(b.seconds, 4) +
                    " s"};
}

Outcome ablation(const Benchmark& b) {
  const double bld = mean_of(b, &BenchmarkRow::mc_bld);
  const double only_b = mean_of(b, &BenchmarkRow::mc_b);
  return {bld >= only_b, "mean {B,L,D}=" + fmt(bld) + " {B}=" + fmt(only_b)};
}

Outcome combiner() {
  Rng rng(606);
  const LocationEncoderParams params = random_encoder(small_encoder(8), rng);
  int image_agree = 0, location_agree = 0;
  for (int i = 0; i < kCombinerInstances; ++i) {
    const std::size_t q = 2 + rng.below(20);
    const std::size_t f = 1 + rng.below(6);
    ClassifierHead head{random_matrix(f, q, rng), random_matrix(1, q, rng)};
    const Matrix T = random_matrix(8, q, rng);
    const GeoLocation loc = uniform_sphere_sample(rng);
    Vector feature(f);
    for (double& v : feature) v = rng.normal();
    // T = 0 gives sigma(0) for every class; a zero head gives a uniform softmax.
    image_agree += combined_predict(loc, feature, params, Matrix(8, q, 0.0), head) ==
                   static_cast<int>(argmax(image_posterior(feature, head)));
    ClassifierHead zero{Matrix(f, q), Matrix(1, q)};
    location_agree += combined_predict(loc, feature, params, T, zero) ==
                      static_cast<int>(argmax(location_posterior(loc, params, T)));
  }
  const bool pass = image_agree == kCombinerInstances && location_agree == kCombinerInstances;
  return {pass, "uniform location: " + std::to_string(image_agree) + "/" +
                    std::to_string(kCombinerInstances) + " agree with image argmax, uniform image: " +
                    std::to_string(location_agree) + "/" + std::to_string(kCombinerInstances) +
                    " agree with location argmax"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  TrainConfig cfg;
  cfg.apply({{"seed", "7"},
             {"data.train_size", "600"},
             {"data.eval_size", "300"},
             {"encoder.hidden_units", "64"},
             {"encoder.dim", "32"},
             {"pretrain.epochs", "3"},
             {"finetune.ratios", "5,20"}});
  cfg.validate();
  const fs::path root = fs::temp_directory_path() / "geocsp_acceptance";
  fs::remove_all(root);
  run_experiment(cfg, root / "a");
  run_experiment(cfg, root / "b");
  bool reports_equal = true;
  for (double r : cfg.ratios) {
    const std::string a = slurp(root / "a" / cell_name(r) / "report.txt");
    reports_equal = reports_equal && !a.empty() && a == slurp(root / "b" / cell_name(r) / "report.txt");
  }
  const Checkpoint ckpt = load_checkpoint(root / "a" / cell_name(cfg.ratios[0]) / "finetune.ckpt");
  save_checkpoint(root / "copy.ckpt", ckpt);
  const bool bit_exact = load_checkpoint(root / "copy.ckpt") == ckpt &&
                         slurp(root / "copy.ckpt") ==
                             slurp(root / "a" / cell_name(cfg.ratios[0]) / "finetune.ckpt");
  fs::remove_all(root);
  return {reports_equal && bit_exact,
          std::string("reports ") + (reports_equal ? "byte-identical" : "differ") +
              ", checkpoint round trip " + (bit_exact ? "bit-exact" : "not bit-exact")};
}

Outcome simcse_degeneracy() {
  Rng rng(808);
  double worst_one = 0.0, worst_ln = 0.0;
  bool passes_identical = true;
  for (std::size_t n : {2u, 3u, 4u, 8u, 16u}) {
    const LocationEncoderParams params = random_encoder(small_encoder(8, 0.0), rng);
    Tape t;
    const EncoderBinding enc = bind(t, params);
    // Distinct locations: positives compare each row with its own second pass.
    const std::vector<GeoLocation> locs = random_locations(n, rng);
    const SimcseSample s = build_simcse_pairs(t, enc, params, locs, rng);
    passes_identical = passes_identical && t.value(s.first_pass) == t.value(s.second_pass);
    std::vector<RowRef> a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back({s.first_pass, i});
      b.push_back({s.second_pass, i});
    }
    const Matrix sims = t.value(pair_similarity(t, a, b, Similarity::kCosine));
    for (double v : sims.data()) worst_one = std::max(worst_one, std::abs(v - 1.0));

    // All-identical embeddings: every cross similarity equals the positive one.
    const std::vector<GeoLocation> same(n, locs[0]);
    const SimcseSample z = build_simcse_pairs(t, enc, params, same, rng);
    const double loss = t.value(mc_loss(t, z.pairs, 1.0))(0, 0);
    worst_ln = std::max(worst_ln, std::abs(loss - std::log(static_cast<double>(n))));
  }
  const bool pass = passes_identical && worst_one <= kSimcseOneTol && worst_ln <= kSimcseLnTol;
  return {pass, std::string("D=0 passes ") + (passes_identical ? "bitwise identical" : "differ") +
                    ", max |s-1|=" + fmt(worst_one) + ", max |mc-ln N|=" + fmt(worst_ln)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "closed-form loss oracles", closed_form_oracles);
  report(2, "gradient suite", gradient_suite);
  report(3, "sphere sampler", sphere_sampler);
  Benchmark bench;
  std::string bench_error;
  try {
    bench = run_benchmark();
  } catch (const std::exception& e) {
    bench_error = e.what();
  }
  auto guarded = [&](Outcome (*f)(const Benchmark&)) {
    return [&, f]() -> Outcome {
      if (!bench_error.empty()) return {false, "benchmark threw: " + bench_error};
      return f(bench);
    };
  };
  report(4, "trend reproduction", guarded(trend_reproduction));
  report(5, "ablation monotonicity", guarded(ablation));
  report(6, "inference combiner", combiner);
  report(7, "determinism and persistence", determinism);
  report(8, "SimCSE degeneracy", simcse_degeneracy);
  std::printf("%d of 8 criteria failed\n", failed);
  return failed;
}
