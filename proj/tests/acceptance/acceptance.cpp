// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "gapweld/error.hpp"
#include "gapweld/eval.hpp"
#include "gapweld/json_io.hpp"
#include "gapweld/synth.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace gapweld;

namespace {

// Tolerances.
constexpr double kViTol = 1e-12;
constexpr double kViSeconds = 10.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kPermTol = 1e-9;
constexpr double kParallelMinReduction = 95.0;
constexpr double kParallelSeconds = 300.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome vi_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  bool identity = true, permutation = true;
  for (int i = 0; i < 200; ++i) {
    const auto gt = oracle::random_volume(rng, 8, 5);
    auto pred = gt;
    std::uniform_int_distribution<Label> lab(0, 5);
    for (auto& x : pred.data()) x = lab(rng);
    const std::vector<std::uint8_t> mask(gt.size(), 1);

    const auto vi = variation_of_information(pred, gt, mask);
    const auto ref = oracle::vi_contingency(pred, gt, mask);
    worst = std::max({worst, std::abs(vi.split - ref.split), std::abs(vi.merge - ref.merge),
                      std::abs(vi.total - ref.total)});
    const auto self = variation_of_information(gt, gt, mask);
    identity = identity && self.split == 0.0 && self.merge == 0.0 && self.total == 0.0;

    std::vector<Label> relabel{0, 1, 2, 3, 4, 5};
    std::shuffle(relabel.begin(), relabel.end(), rng);
    auto perm = pred;
    for (auto& x : perm.data()) x = relabel[x] + 100;
    const auto pv = variation_of_information(perm, gt, mask);
    permutation = permutation && pv.split == vi.split && pv.merge == vi.merge && pv.total == vi.total;
  }
  const double secs = seconds_since(t0);
  return {worst <= kViTol && identity && permutation && secs < kViSeconds,
          fmt("max |vi - oracle| %.3g (tol %.0e), VI(S,S)=0 %s, permutation exact %s, %.2f s",
              worst, kViTol, identity ? "yes" : "no", permutation ? "yes" : "no", secs)};
}

Outcome percent_reduction_formula() {
  std::mt19937_64 rng(202);
  std::size_t pairs = 0, negatives = 0, positives = 0, mismatches = 0;
  for (std::uint64_t seed = 0; pairs < 100 && seed < 1000; ++seed) {
    SynthConfig cfg;
    cfg.dims = {24, 24, 12};
    cfg.n_tubes = 6;
    cfg.max_angle_deg = 45;
    cfg.seed = seed;
    const auto gt = generate_volume(cfg).volume;
    const auto inst = make_gap_instance(gt, {1 + seed % 8, 1 + seed % 3});
    ScoreTable scores;
    // Truth pairs lean high so that both improvements and regressions occur.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double noise = 0.2 + 0.7 * u(rng);
    for (const auto& g : all_candidate_groups(inst))
      for (const auto& c : g.candidates) {
        const double p = inst.is_truth_pair(g.top, c.bottom) ? 1.0 - noise * u(rng) : noise * u(rng);
        scores.push_back({pair_id(inst, g.top, c.bottom), g.top, c.bottom, p});
      }
    EvalReport rep;
    try {
      rep = evaluate_instance(gt, inst, scores, 0.5);
    } catch (const ValidationError&) {
      continue;  // no top fragments or nothing to reduce at this position
    }
    ++pairs;
    negatives += rep.percent_reduction < 0.0;
    positives += rep.percent_reduction > 0.0;
    mismatches += rep.percent_reduction != (rep.vi_pre - rep.vi_post) * 100.0 / rep.vi_pre;
  }
  return {pairs == 100 && mismatches == 0 && negatives > 0 && positives > 0,
          fmt("%zu pairs, %zu exact mismatches, %zu negative / %zu positive outcomes", pairs,
              mismatches, negatives, positives)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const auto random_example = [&](std::size_t n) {
    PointCloudExample ex;
    ex.points.resize(n);
    for (auto& p : ex.points) p = {u(rng), u(rng), u(rng)};
    return ex;
  };
  double worst = 0.0;
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    auto params = init_scorer(1000 + draw);
    std::uniform_real_distribution<double> b(-0.1, 0.1);
    for (auto* l : params.layers())
      for (Eigen::Index i = 0; i < l->bias.size(); ++i) l->bias(i) = b(rng);
    worst = std::max(worst, grad_check(params, random_example(32), static_cast<int>(draw % 2), kGradEps));
  }
  const auto params = init_scorer(7);
  auto ex = random_example(512);
  const double base = forward(params, to_matrix(ex))[1];
  double drift = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::shuffle(ex.points.begin(), ex.points.end(), rng);
    drift = std::max(drift, std::abs(forward(params, to_matrix(ex))[1] - base));
  }
  return {worst < kGradTol && drift <= kPermTol,
          fmt("max relative error %.3g over 20 draws (tol %.0e, eps %.0e); shuffle drift %.3g (tol %.0e)",
              worst, kGradTol, kGradEps, drift, kPermTol)};
}

Outcome threshold_monotonicity() {
  std::mt19937_64 rng(404);
  SynthConfig cfg;
  cfg.max_angle_deg = 45;
  cfg.seed = 404;
  const auto inst = make_gap_instance(generate_volume(cfg).volume, {12, 2});
  const auto groups = all_candidate_groups(inst);
  std::size_t violations = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreTable table;
    for (const auto& g : groups)
      for (const auto& c : g.candidates) table.push_back({pair_id(inst, g.top, c.bottom), g.top, c.bottom, u(rng)});
    std::optional<MergeDecisionSet> prev;
    std::optional<MergeRates> prev_rates;
    for (double t : kDefaultThresholds) {
      const auto cur = apply_threshold(table, t);
      const auto rates = merge_rates(cur, inst);
      if (prev) {
        violations += !std::includes(prev->pairs.begin(), prev->pairs.end(), cur.pairs.begin(), cur.pairs.end());
        violations += rates.counts.true_positives > prev_rates->counts.true_positives;
        violations += rates.counts.false_positives > prev_rates->counts.false_positives;
      }
      prev = cur;
      prev_rates = rates;
    }
  }
  return {violations == 0, fmt("100 tables x 9 thresholds, %zu violations", violations)};
}

Outcome gap_simulation() {
  std::mt19937_64 rng(505);
  std::size_t pair_mismatch = 0, nonzero_gap = 0, origin_bad = 0, truth_total = 0;
  for (std::uint64_t v = 0; v < 50; ++v) {
    SynthConfig cfg;
    cfg.max_angle_deg = std::uniform_real_distribution<double>(0.0, 60.0)(rng);
    cfg.wobble = v % 2 ? 1.0 : 0.0;
    cfg.seed = 5000 + v;
    const auto gt = generate_volume(cfg).volume;
    const std::size_t ns = 1 + rng() % 6;
    const std::size_t z0 = rng() % (gt.dims().z - ns + 1);
    const auto inst = make_gap_instance(gt, {z0, ns});

    std::set<std::pair<Label, Label>> got;
    for (const auto& p : inst.truth_pairs) got.insert({p.top_fragment, p.bottom_fragment});
    pair_mismatch += got != oracle::truth_pairs_exhaustive(gt, inst);
    truth_total += got.size();

    std::map<Label, std::set<Label>> origins;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto z = gt.coord(i).z;
      const Label f = inst.gapped.data()[i];
      if (z >= z0 && z < z0 + ns) nonzero_gap += f != 0;
      if (f != 0) origins[f].insert(gt.data()[i]);
    }
    for (const auto& [f, o] : origins) {
      const auto it = inst.origin_of.find(f);
      origin_bad += o.size() != 1 || it == inst.origin_of.end() || it->second != *o.begin();
    }
    origin_bad += inst.origin_of.size() != origins.size();
  }
  return {pair_mismatch == 0 && nonzero_gap == 0 && origin_bad == 0,
          fmt("50 volumes, %zu truth pairs; %zu pair-set mismatches, %zu nonzero gap voxels, "
              "%zu origin_of errors",
              truth_total, pair_mismatch, nonzero_gap, origin_bad)};
}

// ---------------------------------------------------------------------------
// Training helpers shared by the end-to-end criteria.

std::vector<GapInstance> instances_of(const LabelVolume& vol, const std::vector<std::size_t>& ns_values,
                                      std::size_t stride) {
  std::vector<GapInstance> out;
  for (auto ns : ns_values)
    for (std::size_t z0 = 1 + ns % stride; z0 + ns + 1 <= vol.dims().z; z0 += stride)
      out.push_back(make_gap_instance(vol, {z0, ns}));
  return out;
}

std::vector<CandidatePair> pairs_of(const std::vector<GapInstance>& instances) {
  std::vector<CandidatePair> pairs;
  for (const auto& inst : instances) {
    const auto more = candidate_pairs(inst, all_candidate_groups(inst));
    pairs.insert(pairs.end(), more.begin(), more.end());
  }
  return pairs;
}

// One normalization scale for the whole fixture family, training and test volumes
// alike, so every sliding-eval example fits the scale the model was trained with.
double family_scale(const std::vector<LabelVolume>& vols, const std::vector<std::size_t>& ns_values,
                    std::size_t cs) {
  double s = 0.0;
  for (const auto& vol : vols) s = std::max(s, compute_norm_scale(pairs_of(instances_of(vol, ns_values, 1)), cs));
  return s;
}

// Gap instances every `stride` slices for each ns, labeled from their truth pairs.
Dataset training_set(const std::vector<LabelVolume>& vols, const std::vector<std::size_t>& ns_values,
                     std::size_t stride, RepConfig rep) {
  std::vector<GapInstance> instances;
  for (const auto& vol : vols) {
    auto more = instances_of(vol, ns_values, stride);
    std::move(more.begin(), more.end(), std::back_inserter(instances));
  }
  return build_dataset(pairs_of(instances), rep, false, worker_count());
}

NativeModel train_model(const Dataset& ds, std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = 0.001;
  tc.seed = 1;
  tc.jobs = worker_count();
  const auto r = train(init_scorer(1), ds.examples, tc);
  return {r.params, ds.cs, ds.np, ds.norm_scale_nm};
}

std::vector<LabelVolume> volumes(SynthConfig cfg, std::uint64_t first, std::size_t n) {
  std::vector<LabelVolume> out;
  for (std::size_t i = 0; i < n; ++i) {
    cfg.seed = first + i;
    out.push_back(generate_volume(cfg).volume);
  }
  return out;
}

PipelineConfig pipeline() {
  PipelineConfig pc;
  pc.jobs = worker_count();
  return pc;
}

// ---------------------------------------------------------------------------

Outcome parallel_fixture() {
  const auto t0 = Clock::now();
  SynthConfig cfg;  // 64x64x32, (4,4,40), 20 tubes, radius 2-4
  cfg.max_angle_deg = 10;
  const auto gt = volumes(cfg, 0, 1).front();

  const auto base = sliding_eval(gt, 1, BaselineDistanceScorer(), 0.5, pipeline());

  const auto train_vols = volumes(cfg, 100, 2);
  auto family = train_vols;
  family.push_back(gt);
  const auto ds = training_set(train_vols, {1}, 1, {3, 512, family_scale(family, {1}, 3), 0});
  const auto model = train_model(ds, 50);
  const auto sw = sweep(gt, 1, NativeScorer(model, 0, worker_count()), kDefaultThresholds, pipeline());
  const auto& best = sw.rows[sw.optimal];
  const double secs = seconds_since(t0);

  const bool ok = base.merge_success_rate == 1.0 && base.merge_error_rate == 0.0 &&
                  best.percent_reduction >= kParallelMinReduction && secs < kParallelSeconds;
  return {ok, fmt("baseline success %.3f error %.3f; native %.2f%% at t=%.1f (need >= %.0f), "
                  "%zu training examples, %.0f s (limit %.0f)",
                  base.merge_success_rate, base.merge_error_rate, best.percent_reduction,
                  best.threshold, kParallelMinReduction, ds.examples.size(), secs,
                  kParallelSeconds)};
}

Outcome oblique_trend() {
  const std::vector<std::size_t> ns_values{1, 2, 4, 6};
  SynthConfig cfg;
  cfg.max_angle_deg = 60;
  const auto train_vols = volumes(cfg, 1000, 8);
  const auto tests = volumes(cfg, 5000, 5);
  auto family = train_vols;
  family.insert(family.end(), tests.begin(), tests.end());
  const auto ds = training_set(train_vols, ns_values, 3, {3, 512, family_scale(family, ns_values, 3), 0});
  const auto model = train_model(ds, 30);
  const NativeScorer native(model, 0, worker_count());
  const BaselineDistanceScorer baseline;

  std::map<std::size_t, double> nat, bas;
  for (const auto& gt : tests)
    for (auto ns : ns_values) {
      const auto sn = sweep(gt, ns, native, kDefaultThresholds, pipeline());
      nat[ns] += sn.rows[sn.optimal].percent_reduction / static_cast<double>(tests.size());
      bas[ns] += sliding_eval(gt, ns, baseline, 0.5, pipeline()).percent_reduction /
                 static_cast<double>(tests.size());
    }
  bool decreasing = true, beaten = true;
  std::string table;
  for (std::size_t i = 0; i < ns_values.size(); ++i) {
    const auto ns = ns_values[i];
    if (i > 0) decreasing = decreasing && bas[ns] < bas[ns_values[i - 1]];
    if (ns >= 2) beaten = beaten && nat[ns] > bas[ns];
    table += fmt(" NS%zu %.1f/%.1f", ns, bas[ns], nat[ns]);
  }
  const bool positive = nat[6] > 0.0;
  return {decreasing && beaten && positive,
          fmt("baseline/native mean %% over %zu volumes:%s; baseline decreasing %s, native ahead "
              "for NS>=2 %s",
              tests.size(), table.c_str(), decreasing ? "yes" : "no", beaten ? "yes" : "no")};
}

Outcome ablation() {
  constexpr std::size_t ns = 4;
  SynthConfig cfg;
  cfg.max_angle_deg = 60;
  const auto train_vols = volumes(cfg, 2000, 8);
  const auto tests = volumes(cfg, 6000, 5);
  auto family = train_vols;
  family.insert(family.end(), tests.begin(), tests.end());
  std::map<std::size_t, double> scale_for_cs;
  for (std::size_t cs : {1, 2, 3, 4}) scale_for_cs[cs] = family_scale(family, {ns}, cs);
  gapweld::test::TempDir dir;

  const auto run = [&](std::size_t cs, std::size_t np) {
    const auto ds = training_set(train_vols, {ns}, 3, {cs, np, scale_for_cs[cs], 0});
    // Trained to convergence: at 30 epochs the spread between training seeds
    // exceeds the NP effect being measured.
    const auto model = train_model(ds, 80);
    const NativeScorer native(model, 0, worker_count());
    double mean = 0.0;
    bool well_formed = true;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      const auto rows = sweep_rows(sweep(tests[i], ns, native, kDefaultThresholds, pipeline()));
      const auto path = dir / fmt("cs%zu_np%zu_v%zu.csv", cs, np, i);
      write_sweep_csv(rows, path);
      const auto back = read_sweep_csv(path);
      well_formed = well_formed && back == rows && back.size() == kDefaultThresholds.size() &&
                    std::count_if(back.begin(), back.end(), [](const SweepRow& r) { return r.optimal; }) == 1;
      for (const auto& r : back)
        if (r.optimal) mean += r.percent_reduction / static_cast<double>(tests.size());
    }
    return std::pair{mean, well_formed};
  };

  std::map<std::pair<std::size_t, std::size_t>, double> results;
  bool well_formed = true;
  std::string table;
  for (std::size_t cs : {1, 2, 3, 4}) {
    const auto [m, ok] = run(cs, 512);
    results[{cs, 512}] = m;
    well_formed = well_formed && ok;
    table += fmt(" CS%zu=%.1f", cs, m);
  }
  for (std::size_t np : {64, 128, 2048}) {
    const auto [m, ok] = run(3, np);
    results[{3, np}] = m;
    well_formed = well_formed && ok;
  }
  for (std::size_t np : {64, 128, 512, 2048}) table += fmt(" NP%zu=%.1f", np, results[{3, np}]);
  const bool drop = results[{3, 64}] < results[{3, 512}];
  return {well_formed && drop,
          fmt("NS%zu mean %%:%s; tables well formed %s, NP64 below NP512 %s", ns, table.c_str(),
              well_formed ? "yes" : "no", drop ? "yes" : "no")};
}

Outcome format_round_trips() {
  gapweld::test::TempDir dir;
  std::vector<std::string> failures;
  const auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const auto expect_validation = [&](const std::function<void()>& f, const std::string& what) {
    try {
      f();
      failures.push_back(what + " accepted");
    } catch (const ValidationError&) {
    } catch (const std::exception& e) {
      failures.push_back(what + " threw the wrong error");
    }
  };
  const auto same_bytes = [&](const std::filesystem::path& a, const std::filesystem::path& b) {
    return read_text_file(a) == read_text_file(b);
  };

  SynthConfig cfg;
  cfg.max_angle_deg = 30;
  cfg.seed = 9;
  const auto vol = generate_volume(cfg).volume;
  save_volume(vol, dir / "v.json");
  const auto vol_back = load_volume(dir / "v.json");
  std::filesystem::create_directories(dir / "again");
  save_volume(vol_back, dir / "again" / "v.json");
  expect(vol_back == vol && same_bytes(dir / "v.bin", dir / "again" / "v.bin") &&
             same_bytes(dir / "v.json", dir / "again" / "v.json"),
         "volume");
  write_text_file(dir / "short.bin", read_text_file(dir / "v.bin").substr(8));
  auto hdr = read_json_file(dir / "v.json");
  hdr["payload"] = "short.bin";
  write_text_file(dir / "short.json", hdr.dump());
  expect_validation([&] { load_volume(dir / "short.json"); }, "truncated payload");
  hdr = read_json_file(dir / "v.json");
  hdr["dtype"] = "u32le";
  write_text_file(dir / "dtype.json", hdr.dump());
  expect_validation([&] { load_volume(dir / "dtype.json"); }, "wrong dtype");

  const auto inst = make_gap_instance(vol, {10, 2});
  const auto pairs = candidate_pairs(inst, all_candidate_groups(inst));
  const auto ds = build_dataset(pairs, {3, 64, 1.0, 0});
  write_dataset(ds, dir / "d.jsonl");
  const auto ds_back = read_dataset(dir / "d.jsonl");
  write_dataset(ds_back, dir / "d2.jsonl");
  expect(ds_back == ds && same_bytes(dir / "d.jsonl", dir / "d2.jsonl"), "dataset");
  auto lines = read_text_file(dir / "d.jsonl");
  write_text_file(dir / "d_bad.jsonl", lines.substr(0, lines.rfind(',')) + "]}\n");
  expect_validation([&] { read_dataset(dir / "d_bad.jsonl"); }, "dataset with a missing coordinate");

  const auto scores = BaselineDistanceScorer().score(inst, all_candidate_groups(inst));
  write_scores(scores, dir / "s.tsv");
  const auto scores_back = load_external_scores(dir / "s.tsv");
  write_scores(scores_back, dir / "s2.tsv");
  expect(scores_back == scores && same_bytes(dir / "s.tsv", dir / "s2.tsv"), "scores");
  write_text_file(dir / "s_bad.tsv", "example_id\ttop\tbottom\tp_merge\nx\t1\t2\t1.5\n");
  expect_validation([&] { load_external_scores(dir / "s_bad.tsv"); }, "p_merge out of range");
  write_text_file(dir / "s_dup.tsv", "example_id\ttop\tbottom\tp_merge\nx\t1\t2\t0.5\nx\t1\t2\t0.5\n");
  expect_validation([&] { load_external_scores(dir / "s_dup.tsv"); }, "duplicate score id");

  const auto report = evaluate_instance(vol, inst, scores, 0.5);
  write_report(report, dir / "r.json");
  const auto report_back = read_report(dir / "r.json");
  write_report(report_back, dir / "r2.json");
  expect(report_back == report && same_bytes(dir / "r.json", dir / "r2.json"), "report");
  write_text_file(dir / "r_bad.json", "{\"ns\": \"two\"}");
  expect_validation([&] { read_report(dir / "r_bad.json"); }, "malformed report");

  const auto rows = sweep_rows(sweep(vol, 2, BaselineDistanceScorer(), kDefaultThresholds));
  write_sweep_csv(rows, dir / "w.csv");
  const auto rows_back = read_sweep_csv(dir / "w.csv");
  write_sweep_csv(rows_back, dir / "w2.csv");
  expect(rows_back == rows && same_bytes(dir / "w.csv", dir / "w2.csv"), "sweep");
  write_text_file(dir / "w_bad.csv", "threshold,vi_pre,vi_post,percent_reduction,success_rate,error_rate,optimal\n0.1,1,1,0,0,0,2\n");
  expect_validation([&] { read_sweep_csv(dir / "w_bad.csv"); }, "sweep optimal flag");

  std::string detail = "volume, dataset, scores, report, sweep";
  if (failures.empty()) {
    detail += " round-trip bit-exactly; malformed inputs rejected";
  } else {
    detail += "; failed:";
    for (const auto& f : failures) detail += " [" + f + "]";
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"VI oracle equivalence", vi_oracle},
      {"percent-reduction formula", percent_reduction_formula},
      {"gradient check", gradient_check},
      {"threshold monotonicity", threshold_monotonicity},
      {"gap-simulation correctness", gap_simulation},
      {"parallel fixture end to end", parallel_fixture},
      {"oblique trend vs baseline", oblique_trend},
      {"CS/NP ablation", ablation},
      {"format round-trips", format_round_trips},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %-30s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
