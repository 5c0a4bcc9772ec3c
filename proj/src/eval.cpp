#include "gapweld/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"
#include "gapweld/union_find.hpp"
#include "gapweld/util.hpp"

namespace gapweld {

namespace fs = std::filesystem;

MergeDecisionSet apply_threshold(const ScoreTable& scores, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("threshold: must lie in [0,1]");
  MergeDecisionSet out{t, {}};
  for (const auto& r : scores) {
    if (r.p_merge > t) out.pairs.push_back({r.top, r.bottom});
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.pairs.erase(std::unique(out.pairs.begin(), out.pairs.end()), out.pairs.end());
  return out;
}

LabelVolume stitch(const GapInstance& inst, const MergeDecisionSet& decisions) {
  std::vector<Label> labels;
  labels.reserve(inst.origin_of.size());
  for (const auto& [f, o] : inst.origin_of) labels.push_back(f);
  const auto index_of = [&](Label l) {
    const auto it = std::lower_bound(labels.begin(), labels.end(), l);
    if (it == labels.end() || *it != l) {
      throw ValidationError("stitch: unknown fragment label " + std::to_string(l));
    }
    return static_cast<std::size_t>(it - labels.begin());
  };
  DisjointSet sets(labels.size());
  for (const auto& p : decisions.pairs) sets.unite(index_of(p.top_fragment), index_of(p.bottom_fragment));

  // labels are ascending, so the first member seen per root is the class minimum.
  std::vector<Label> representative(labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t root = sets.find(i);
    if (representative[root] == 0) representative[root] = labels[i];
  }
  std::map<Label, Label> relabel;
  for (std::size_t i = 0; i < labels.size(); ++i) relabel[labels[i]] = representative[sets.find(i)];

  LabelVolume out = inst.gapped;
  Label last_in = 0, last_out = 0;
  for (auto& v : out.data()) {
    if (v == 0) continue;
    if (v != last_in) {
      last_in = v;
      last_out = relabel.at(v);
    }
    v = last_out;
  }
  return out;
}

VariationOfInformation variation_of_information(const LabelVolume& pred, const LabelVolume& gt,
                                                std::span<const std::uint8_t> mask) {
  if (pred.dims() != gt.dims()) throw ValidationError("VI: volumes have different dims");
  if (mask.size() != gt.data().size()) throw ValidationError("VI: mask size differs from volume");
  std::vector<std::pair<Label, Label>> joint;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) joint.emplace_back(pred.data()[i], gt.data()[i]);
  }
  if (joint.empty()) throw ValidationError("VI: mask selects no voxels");
  std::sort(joint.begin(), joint.end());

  const double n = static_cast<double>(joint.size());
  std::map<Label, std::size_t> pred_count, gt_count;
  for (const auto& [s, t] : joint) {
    ++pred_count[s];
    ++gt_count[t];
  }
  std::vector<double> split_terms, merge_terms;
  for (std::size_t i = 0; i < joint.size();) {
    std::size_t j = i;
    while (j < joint.size() && joint[j] == joint[i]) ++j;
    const double c = static_cast<double>(j - i);
    const double p = c / n;
    // H(S|T) = sum p(s,t) log(p(t)/p(s,t)); H(T|S) = sum p(s,t) log(p(s)/p(s,t))
    split_terms.push_back(p * std::log(static_cast<double>(gt_count[joint[i].second]) / c));
    merge_terms.push_back(p * std::log(static_cast<double>(pred_count[joint[i].first]) / c));
    i = j;
  }
  // Summing in value order makes the result independent of the label values.
  const auto sorted_sum = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0);
  };
  const double split = sorted_sum(split_terms);
  const double merge = sorted_sum(merge_terms);
  return {split, merge, split + merge};
}

std::vector<std::uint8_t> evaluation_mask(const LabelVolume& gt, const GapSpec& gap,
                                          bool include_background) {
  std::vector<std::uint8_t> mask(gt.data().size(), 0);
  const std::size_t slice = gt.dims().slice_size();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::size_t z = i / slice;
    const bool in_gap = z >= gap.z0 && z < gap.z0 + gap.ns;
    mask[i] = !in_gap && (include_background || gt.data()[i] != 0);
  }
  return mask;
}

double percent_reduction(double vi_pre, double vi_post) {
  if (vi_pre == 0.0) throw ValidationError("percent_reduction: vi_pre is zero");
  return (vi_pre - vi_post) * 100.0 / vi_pre;
}

MergeRates merge_rates(const MergeDecisionSet& decisions, const GapInstance& inst) {
  MergeRates r;
  const auto tz = inst.top_border_z();
  std::size_t tops = 0;
  if (tz) {
    std::map<Label, bool> present;
    const std::size_t slice = inst.gapped.dims().slice_size();
    for (std::size_t i = *tz * slice; i < (*tz + 1) * slice; ++i) {
      if (inst.gapped.data()[i] != 0) present[inst.gapped.data()[i]] = true;
    }
    tops = present.size();
  }
  if (tops == 0) throw ValidationError("merge_rates: no top border fragments");
  r.counts.top_fragments = tops;
  r.counts.truth_pairs = inst.truth_pairs.size();
  for (const auto& p : decisions.pairs) {
    if (inst.is_truth_pair(p.top_fragment, p.bottom_fragment)) {
      ++r.counts.true_positives;
    } else {
      ++r.counts.false_positives;
    }
  }
  r.success_rate = r.counts.truth_pairs == 0 ? 0.0
                                             : static_cast<double>(r.counts.true_positives) /
                                                   static_cast<double>(r.counts.truth_pairs);
  r.error_rate = static_cast<double>(r.counts.false_positives) / static_cast<double>(tops);
  return r;
}

namespace {

// Per-position, per-threshold measurements prior to averaging.
struct PositionResult {
  bool has_tops = false;
  double vi_pre = 0.0;
  std::vector<double> vi_post;
  std::vector<MergeRates> rates;
};

PositionResult evaluate_scores(const LabelVolume& gt, const GapInstance& inst,
                               const ScoreTable& scores, const std::vector<double>& thresholds,
                               bool include_background) {
  PositionResult pr;
  const auto mask = evaluation_mask(gt, inst.spec, include_background);
  pr.vi_pre = variation_of_information(inst.gapped, gt, mask).total;
  for (double t : thresholds) {
    const auto decisions = apply_threshold(scores, t);
    pr.vi_post.push_back(variation_of_information(stitch(inst, decisions), gt, mask).total);
    try {
      pr.rates.push_back(merge_rates(decisions, inst));
      pr.has_tops = true;
    } catch (const ValidationError&) {
      pr.rates.push_back({});
    }
  }
  return pr;
}

std::vector<EvalReport> aggregate(const std::vector<PositionResult>& positions, std::size_t ns,
                                  const std::vector<double>& thresholds) {
  std::vector<EvalReport> reports;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    EvalReport r;
    r.ns = ns;
    r.threshold = thresholds[k];
    r.positions = positions.size();
    double pct_sum = 0.0, success_sum = 0.0, error_sum = 0.0;
    std::size_t pct_n = 0, success_n = 0, error_n = 0;
    for (const auto& p : positions) {
      r.vi_pre += p.vi_pre;
      r.vi_post += p.vi_post[k];
      if (p.vi_pre > 0.0) {
        pct_sum += percent_reduction(p.vi_pre, p.vi_post[k]);
        ++pct_n;
      }
      const auto& m = p.rates[k];
      if (p.has_tops) {
        error_sum += m.error_rate;
        ++error_n;
      }
      if (m.counts.truth_pairs > 0) {
        success_sum += m.success_rate;
        ++success_n;
      }
      r.counts.true_positives += m.counts.true_positives;
      r.counts.false_positives += m.counts.false_positives;
      r.counts.truth_pairs += m.counts.truth_pairs;
      r.counts.top_fragments += m.counts.top_fragments;
    }
    const double n = static_cast<double>(positions.size());
    r.vi_pre /= n;
    r.vi_post /= n;
    r.percent_reduction = pct_n ? pct_sum / static_cast<double>(pct_n) : 0.0;
    r.merge_success_rate = success_n ? success_sum / static_cast<double>(success_n) : 0.0;
    r.merge_error_rate = error_n ? error_sum / static_cast<double>(error_n) : 0.0;
    reports.push_back(r);
  }
  return reports;
}

std::vector<EvalReport> run_sliding(const LabelVolume& gt, std::size_t ns, const Scorer& scorer,
                                    const std::vector<double>& thresholds,
                                    const PipelineConfig& cfg) {
  if (thresholds.empty()) throw ValidationError("thresholds: at least one is required");
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("thresholds: values must lie in [0,1]");
  }
  if (ns < 1) throw ValidationError("ns: must be at least 1");
  const std::size_t zdim = gt.dims().z;
  if (zdim < ns + 2) throw ValidationError("ns: volume has no admissible gap positions");
  const std::size_t count = zdim - ns - 1;  // z0 in [1, zdim - ns - 1]
  std::vector<PositionResult> positions(count);
  parallel_for(count, cfg.jobs, [&](std::size_t i) {
    const GapInstance inst = make_gap_instance(gt, {i + 1, ns});
    const auto groups = all_candidate_groups(inst, cfg.group_size, cfg.seed);
    const auto scores = scorer.score(inst, groups);
    positions[i] = evaluate_scores(gt, inst, scores, thresholds, cfg.include_background);
  });
  return aggregate(positions, ns, thresholds);
}

}  // namespace

EvalReport evaluate_instance(const LabelVolume& gt, const GapInstance& inst,
                             const ScoreTable& scores, double t, bool include_background) {
  if (gt.dims() != inst.gapped.dims()) throw ValidationError("evaluate: volume dims differ from instance");
  return aggregate({evaluate_scores(gt, inst, scores, {t}, include_background)}, inst.spec.ns, {t})
      .front();
}

EvalReport sliding_eval(const LabelVolume& gt, std::size_t ns, const Scorer& scorer, double t,
                        const PipelineConfig& cfg) {
  return run_sliding(gt, ns, scorer, {t}, cfg).front();
}

SweepTable sweep(const LabelVolume& gt, std::size_t ns, const Scorer& scorer,
                 const std::vector<double>& thresholds, const PipelineConfig& cfg) {
  SweepTable table{run_sliding(gt, ns, scorer, thresholds, cfg), 0};
  for (std::size_t k = 1; k < table.rows.size(); ++k) {
    if (table.rows[k].percent_reduction > table.rows[table.optimal].percent_reduction) table.optimal = k;
  }
  return table;
}

std::vector<double> parse_threshold_grid(const std::string& spec) {
  const auto bad = [&](const std::string& why) {
    return ValidationError("thresholds: '" + spec + "' " + why + " (expected start:stop:step)");
  };
  double start = 0, stop = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(spec);
  if (!(in >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' ||
      in.peek() != std::char_traits<char>::eof()) {
    throw bad("is malformed");
  }
  if (!(step > 0.0)) throw bad("needs a positive step");
  if (!(start >= 0.0 && stop <= 1.0 && start <= stop)) throw bad("must satisfy 0 <= start <= stop <= 1");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) {
    // Round to 12 decimals so 0.1 + 2*0.1 prints as 0.3.
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return out;
}

void write_report(const EvalReport& r, const fs::path& path) {
  nlohmann::ordered_json j;
  j["ns"] = r.ns;
  j["threshold"] = r.threshold;
  j["vi_pre"] = r.vi_pre;
  j["vi_post"] = r.vi_post;
  j["percent_reduction"] = r.percent_reduction;
  j["merge_success_rate"] = r.merge_success_rate;
  j["merge_error_rate"] = r.merge_error_rate;
  j["counts"] = {{"true_positives", r.counts.true_positives},
                 {"false_positives", r.counts.false_positives},
                 {"truth_pairs", r.counts.truth_pairs},
                 {"top_fragments", r.counts.top_fragments}};
  j["positions"] = r.positions;
  write_text_file(path, j.dump(2) + "\n");
}

EvalReport read_report(const fs::path& path) {
  const auto j = read_json_file(path);
  EvalReport r;
  try {
    r.ns = j.at("ns").get<std::size_t>();
    r.threshold = j.at("threshold").get<double>();
    r.vi_pre = j.at("vi_pre").get<double>();
    r.vi_post = j.at("vi_post").get<double>();
    r.percent_reduction = j.at("percent_reduction").get<double>();
    r.merge_success_rate = j.at("merge_success_rate").get<double>();
    r.merge_error_rate = j.at("merge_error_rate").get<double>();
    const auto& c = j.at("counts");
    r.counts = {c.at("true_positives").get<std::size_t>(), c.at("false_positives").get<std::size_t>(),
                c.at("truth_pairs").get<std::size_t>(), c.at("top_fragments").get<std::size_t>()};
    r.positions = j.at("positions").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed report: " + e.what());
  }
  return r;
}

std::vector<SweepRow> sweep_rows(const SweepTable& table) {
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& r = table.rows[k];
    rows.push_back({r.threshold, r.vi_pre, r.vi_post, r.percent_reduction, r.merge_success_rate,
                    r.merge_error_rate, k == table.optimal});
  }
  return rows;
}

namespace {

constexpr const char* kSweepHeader =
    "threshold,vi_pre,vi_post,percent_reduction,success_rate,error_rate,optimal";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_sweep_csv(const std::vector<SweepRow>& rows, const fs::path& path) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt(r.threshold) + ',' + fmt(r.vi_pre) + ',' + fmt(r.vi_post) + ',' +
           fmt(r.percent_reduction) + ',' + fmt(r.success_rate) + ',' + fmt(r.error_rate) + ',' +
           (r.optimal ? "1" : "0") + '\n';
  }
  write_text_file(path, out);
}

std::vector<SweepRow> read_sweep_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (lineno == 1) {
      if (line != kSweepHeader) throw ValidationError(where + ": unexpected sweep header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ValidationError(where + ": expected 7 columns");
    SweepRow r;
    double* targets[] = {&r.threshold, &r.vi_pre, &r.vi_post, &r.percent_reduction,
                         &r.success_rate, &r.error_rate};
    for (std::size_t i = 0; i < 6; ++i) {
      char* end = nullptr;
      *targets[i] = std::strtod(f[i].c_str(), &end);
      if (f[i].empty() || *end != '\0') throw ValidationError(where + ": column " + std::to_string(i + 1) + " is not a number");
    }
    if (f[6] != "0" && f[6] != "1") throw ValidationError(where + ": optimal must be 0 or 1");
    r.optimal = f[6] == "1";
    rows.push_back(r);
  }
  if (lineno == 0) throw ValidationError(path.string() + ": missing sweep header");
  return rows;
}

}  // namespace gapweld
