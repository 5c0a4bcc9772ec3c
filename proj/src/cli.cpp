#include "gapweld/cli.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "gapweld/candidates.hpp"
#include "gapweld/error.hpp"
#include "gapweld/eval.hpp"
#include "gapweld/gap.hpp"
#include "gapweld/log.hpp"
#include "gapweld/pointcloud.hpp"
#include "gapweld/scoring.hpp"
#include "gapweld/synth.hpp"
#include "gapweld/volume.hpp"

namespace gapweld {

namespace fs = std::filesystem;

namespace {

struct Options {
  // shared
  std::vector<std::string> volumes;
  std::vector<std::string> instances;
  std::string out;
  std::size_t z0 = 0;
  std::size_t ns = 1;
  std::size_t cs = kDefaultContextSlices;
  std::size_t np = kDefaultPointCount;
  std::size_t group_size = kDefaultGroupSize;
  std::uint64_t seed = 0;
  std::string scorer = "baseline";
  std::string scores;
  std::string params;
  double threshold = 0.7;
  std::string thresholds = "0.1:0.9:0.1";
  std::size_t jobs = 1;
  bool include_background = false;
  // extract-examples
  std::optional<double> norm_scale;
  std::string candidates;
  // train
  std::string dataset;
  std::size_t epochs = 50;
  double lr = 0.001;
  std::size_t batch_size = 32;
  std::string optimizer = "adam";
  // gen-synth
  std::vector<std::size_t> dims{64, 64, 32};
  std::vector<double> resolution{4.0, 4.0, 40.0};
  std::size_t tubes = 20;
  std::size_t radius_min = 2;
  std::size_t radius_max = 4;
  double max_angle = 10.0;
  double wobble = 0.0;
};

std::unique_ptr<Scorer> make_scorer(const Options& o, NativeModel* model_out = nullptr) {
  if (o.scorer == "baseline") return std::make_unique<BaselineDistanceScorer>();
  if (o.scorer == "native") {
    if (o.params.empty()) throw ValidationError("--params: required for --scorer native");
    NativeModel model = load_model(o.params);
    if (model_out) *model_out = model;
    return std::make_unique<NativeScorer>(std::move(model), o.seed, o.jobs);
  }
  if (o.scorer == "external") {
    if (o.scores.empty()) throw ValidationError("--scores: required for --scorer external");
    return std::make_unique<ExternalScorer>(load_external_scores(o.scores));
  }
  throw ValidationError("--scorer: expected baseline, native or external");
}

PipelineConfig pipeline(const Options& o) {
  return {o.group_size, o.seed, o.include_background, o.jobs};
}

const std::string& single(const std::vector<std::string>& v, const char* flag) {
  if (v.size() != 1) throw ValidationError(std::string(flag) + ": exactly one value required");
  return v.front();
}

int cmd_gen_synth(const Options& o, std::ostream& out) {
  if (o.dims.size() != 3) throw ValidationError("--dims: expected x,y,z");
  if (o.resolution.size() != 3) throw ValidationError("--resolution: expected rx,ry,rz");
  SynthConfig cfg;
  cfg.dims = {o.dims[0], o.dims[1], o.dims[2]};
  cfg.resolution = {o.resolution[0], o.resolution[1], o.resolution[2]};
  cfg.n_tubes = o.tubes;
  cfg.radius_min = o.radius_min;
  cfg.radius_max = o.radius_max;
  cfg.max_angle_deg = o.max_angle;
  cfg.wobble = o.wobble;
  cfg.seed = o.seed;
  const auto synth = generate_volume(cfg);
  save_synth(synth, cfg, o.out);
  out << "wrote " << o.out << " (" << synth.tubes.size() << " tubes)\n";
  return kExitOk;
}

int cmd_simulate_gap(const Options& o, std::ostream& out) {
  const LabelVolume gt = load_volume(single(o.volumes, "--volume"));
  const GapInstance inst = make_gap_instance(gt, {o.z0, o.ns});
  save_gap_instance(inst, o.out);
  out << "wrote " << o.out << " (" << inst.origin_of.size() << " fragments, "
      << inst.truth_pairs.size() << " truth pairs)\n";
  return kExitOk;
}

int cmd_extract(const Options& o, std::ostream& out) {
  std::vector<GapInstance> instances;
  for (const auto& p : o.instances) instances.push_back(load_gap_instance(p));
  for (const auto& v : o.volumes) {
    const LabelVolume gt = load_volume(v);
    if (gt.dims().z < o.ns + 2) throw ValidationError("--ns: volume " + v + " has no admissible gap positions");
    for (std::size_t z0 = 1; z0 + o.ns + 1 <= gt.dims().z; ++z0) {
      instances.push_back(make_gap_instance(gt, {z0, o.ns}));
    }
  }
  if (instances.empty()) throw ValidationError("--instance/--volume: no inputs given");

  std::vector<CandidateGroup> all_groups;
  std::vector<CandidatePair> pairs;
  for (const auto& inst : instances) {
    const auto groups = all_candidate_groups(inst, o.group_size, o.seed);
    const auto p = candidate_pairs(inst, groups);
    pairs.insert(pairs.end(), p.begin(), p.end());
    all_groups.insert(all_groups.end(), groups.begin(), groups.end());
  }
  if (!o.candidates.empty()) write_candidate_manifest(all_groups, o.candidates);
  RepConfig cfg{o.cs, o.np, o.norm_scale.value_or(1.0), o.seed};
  const Dataset ds = build_dataset(pairs, cfg, !o.norm_scale.has_value(), o.jobs);
  write_dataset(ds, o.out);
  out << "wrote " << o.out << " (" << ds.examples.size() << " examples, norm_scale_nm "
      << ds.norm_scale_nm << ")\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Dataset ds = read_dataset(o.dataset);
  if (ds.examples.empty()) throw ValidationError("--dataset: no examples");
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.jobs = o.jobs;
  if (o.optimizer == "adam") {
    cfg.optimizer = Optimizer::Adam;
  } else if (o.optimizer == "sgd") {
    cfg.optimizer = Optimizer::Sgd;
  } else {
    throw ValidationError("--optimizer: expected adam or sgd");
  }
  const auto result = train(init_scorer(o.seed), ds.examples, cfg);
  save_model({result.params, ds.cs, ds.np, ds.norm_scale_nm}, o.out);
  out << "wrote " << o.out << " (final loss " << result.loss_history.back() << ", accuracy "
      << accuracy(result.params, ds.examples) << ")\n";
  return kExitOk;
}

int cmd_score(const Options& o, std::ostream& out) {
  const GapInstance inst = load_gap_instance(single(o.instances, "--instance"));
  const auto groups = all_candidate_groups(inst, o.group_size, o.seed);
  ScoreTable table;
  if (o.scorer == "external") {
    std::set<std::string> ids;
    for (const auto& g : groups) {
      for (const auto& c : g.candidates) ids.insert(pair_id(inst, g.top, c.bottom));
    }
    if (o.scores.empty()) throw ValidationError("--scores: required for --scorer external");
    table = ExternalScorer(load_external_scores(o.scores, &ids)).score(inst, groups);
  } else {
    table = make_scorer(o)->score(inst, groups);
  }
  write_scores(table, o.out);
  out << "wrote " << o.out << " (" << table.size() << " pairs)\n";
  return kExitOk;
}

int cmd_stitch(const Options& o, std::ostream& out) {
  const GapInstance inst = load_gap_instance(single(o.instances, "--instance"));
  const auto decisions = apply_threshold(load_external_scores(o.scores), o.threshold);
  save_volume(stitch(inst, decisions), o.out);
  out << "wrote " << o.out << " (" << decisions.pairs.size() << " merges)\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const LabelVolume gt = load_volume(single(o.volumes, "--volume"));
  EvalReport report;
  if (!o.instances.empty()) {
    if (o.scores.empty()) throw ValidationError("--scores: required with --instance");
    const GapInstance inst = load_gap_instance(single(o.instances, "--instance"));
    report = evaluate_instance(gt, inst, load_external_scores(o.scores), o.threshold,
                               o.include_background);
  } else {
    report = sliding_eval(gt, o.ns, *make_scorer(o), o.threshold, pipeline(o));
  }
  write_report(report, o.out);
  out << "wrote " << o.out << " (percent_reduction " << report.percent_reduction << ")\n";
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const LabelVolume gt = load_volume(single(o.volumes, "--volume"));
  const auto grid = parse_threshold_grid(o.thresholds);
  const auto table = sweep(gt, o.ns, *make_scorer(o), grid, pipeline(o));
  write_sweep_csv(sweep_rows(table), o.out);
  out << "wrote " << o.out << " (" << table.rows.size() << " thresholds, optimal t="
      << table.rows[table.optimal].threshold << ")\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Repair segmentations split by missing sections"};
  app.require_subcommand(1);
  Options o;

  const auto add_out = [&](CLI::App* c, const char* what) {
    c->add_option("--out", o.out, what)->required();
  };
  const auto add_jobs = [&](CLI::App* c) {
    c->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  };
  const auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed"); };
  const auto add_scorer = [&](CLI::App* c) {
    c->add_option("--scorer", o.scorer, "baseline | native | external")
        ->check(CLI::IsMember({"baseline", "native", "external"}));
    c->add_option("--params", o.params, "Native scorer params file");
    c->add_option("--scores", o.scores, "Score TSV");
    c->add_option("--group-size", o.group_size, "Candidates per top fragment (G)")
        ->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic tube volume");
  add_out(gen, "Volume header path");
  gen->add_option("--dims", o.dims, "x,y,z")->delimiter(',');
  gen->add_option("--resolution", o.resolution, "rx,ry,rz in nm")->delimiter(',');
  gen->add_option("--tubes", o.tubes, "Number of tubes")->check(CLI::PositiveNumber);
  gen->add_option("--radius-min", o.radius_min, "Minimum radius (voxels)");
  gen->add_option("--radius-max", o.radius_max, "Maximum radius (voxels)");
  gen->add_option("--max-angle", o.max_angle, "Maximum inclination from z (degrees)");
  gen->add_option("--wobble", o.wobble, "Center drift amplitude (voxels)");
  add_seed(gen);

  auto* sim = app.add_subcommand("simulate-gap", "Drop slices and relabel fragments");
  sim->add_option("--volume", o.volumes, "Ground-truth volume header")->required();
  sim->add_option("--z0", o.z0, "First dropped slice")->required();
  sim->add_option("--ns", o.ns, "Number of dropped slices")->check(CLI::PositiveNumber);
  add_out(sim, "Gap manifest path");

  auto* ext = app.add_subcommand("extract-examples", "Build point-cloud examples");
  ext->add_option("--instance", o.instances, "Gap manifest (repeatable)");
  ext->add_option("--volume", o.volumes, "Ground truth; every admissible z0 is used (repeatable)");
  ext->add_option("--ns", o.ns, "Dropped slices for --volume inputs")->check(CLI::PositiveNumber);
  ext->add_option("--cs", o.cs, "Context slices per side")->check(CLI::PositiveNumber);
  ext->add_option("--np", o.np, "Points per example")->check(CLI::PositiveNumber);
  ext->add_option("--group-size", o.group_size, "Candidates per top fragment (G)")
      ->check(CLI::PositiveNumber);
  ext->add_option("--norm-scale", o.norm_scale, "Fixed normalization scale in nm")
      ->check(CLI::PositiveNumber);
  ext->add_option("--candidates", o.candidates, "Also write the candidate manifest here");
  add_seed(ext);
  add_jobs(ext);
  add_out(ext, "Dataset path");

  auto* tr = app.add_subcommand("train", "Train the native point scorer");
  tr->add_option("--dataset", o.dataset, "Labeled dataset")->required();
  tr->add_option("--epochs", o.epochs, "Epochs")->check(CLI::PositiveNumber);
  tr->add_option("--lr", o.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch-size", o.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  tr->add_option("--optimizer", o.optimizer, "adam | sgd")->check(CLI::IsMember({"adam", "sgd"}));
  add_seed(tr);
  add_jobs(tr);
  add_out(tr, "Params path");

  auto* sc = app.add_subcommand("score", "Score the candidates of one gap instance");
  sc->add_option("--instance", o.instances, "Gap manifest")->required();
  add_scorer(sc);
  add_seed(sc);
  add_jobs(sc);
  add_out(sc, "Score TSV path");

  auto* st = app.add_subcommand("stitch", "Apply thresholded merges");
  st->add_option("--instance", o.instances, "Gap manifest")->required();
  st->add_option("--scores", o.scores, "Score TSV")->required();
  st->add_option("--threshold", o.threshold, "Merge when p_merge > threshold")
      ->check(CLI::Range(0.0, 1.0));
  add_out(st, "Stitched volume header path");

  auto* ev = app.add_subcommand("evaluate", "VI and merge rates");
  ev->add_option("--volume", o.volumes, "Ground-truth volume")->required();
  ev->add_option("--instance", o.instances, "Evaluate one instance with --scores");
  ev->add_option("--ns", o.ns, "Sliding-gap size when no --instance")->check(CLI::PositiveNumber);
  ev->add_option("--threshold", o.threshold, "Merge when p_merge > threshold")
      ->check(CLI::Range(0.0, 1.0));
  ev->add_flag("--include-background", o.include_background, "Count background voxels in VI");
  add_scorer(ev);
  add_seed(ev);
  add_jobs(ev);
  add_out(ev, "Report JSON path");

  auto* sw = app.add_subcommand("sweep", "Merge curve over a threshold grid");
  sw->add_option("--volume", o.volumes, "Ground-truth volume")->required();
  sw->add_option("--ns", o.ns, "Dropped slices")->check(CLI::PositiveNumber);
  sw->add_option("--thresholds", o.thresholds, "start:stop:step");
  sw->add_flag("--include-background", o.include_background, "Count background voxels in VI");
  add_scorer(sw);
  add_seed(sw);
  add_jobs(sw);
  add_out(sw, "Sweep CSV path");

  std::vector<const char*> argv{"gapweld"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(o, out);
    if (sim->parsed()) return cmd_simulate_gap(o, out);
    if (ext->parsed()) return cmd_extract(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (sc->parsed()) return cmd_score(o, out);
    if (st->parsed()) return cmd_stitch(o, out);
    if (ev->parsed()) return cmd_evaluate(o, out);
    if (sw->parsed()) return cmd_sweep(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitValidation;
}

}  // namespace gapweld
