#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gapweld/gap.hpp"
#include "gapweld/scoring.hpp"

namespace gapweld {

struct MergeDecisionSet {
  double threshold = 0.0;
  std::vector<TruthPair> pairs;  // (top, bottom), sorted and unique
};

// Rows with p_merge strictly greater than t.
MergeDecisionSet apply_threshold(const ScoreTable& scores, double t);

// Union-find over the decision pairs; every fragment takes the smallest label of its class.
LabelVolume stitch(const GapInstance& inst, const MergeDecisionSet& decisions);

struct VariationOfInformation {
  double split = 0.0;  // H(pred | gt)
  double merge = 0.0;  // H(gt | pred)
  double total = 0.0;
};

// Natural-log VI over voxels whose mask byte is non-zero.
VariationOfInformation variation_of_information(const LabelVolume& pred, const LabelVolume& gt,
                                                std::span<const std::uint8_t> mask);

// Voxels outside the dropped slices; background (gt == 0) only when include_background.
std::vector<std::uint8_t> evaluation_mask(const LabelVolume& gt, const GapSpec& gap,
                                          bool include_background = false);

double percent_reduction(double vi_pre, double vi_post);

struct MergeCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t truth_pairs = 0;
  std::size_t top_fragments = 0;

  bool operator==(const MergeCounts&) const = default;
};

struct MergeRates {
  double success_rate = 0.0;  // TP / truth pairs (0 when there are none)
  double error_rate = 0.0;    // FP / top fragments
  MergeCounts counts;
};

MergeRates merge_rates(const MergeDecisionSet& decisions, const GapInstance& inst);

struct EvalReport {
  std::size_t ns = 0;
  double threshold = 0.0;
  double vi_pre = 0.0;
  double vi_post = 0.0;
  double percent_reduction = 0.0;
  double merge_success_rate = 0.0;
  double merge_error_rate = 0.0;
  MergeCounts counts;  // summed over positions
  std::size_t positions = 0;

  bool operator==(const EvalReport&) const = default;
};

struct PipelineConfig {
  std::size_t group_size = kDefaultGroupSize;
  std::uint64_t seed = 0;  // candidate distance subsampling
  bool include_background = false;
  std::size_t jobs = 1;
};

// Single instance with precomputed scores.
EvalReport evaluate_instance(const LabelVolume& gt, const GapInstance& inst,
                             const ScoreTable& scores, double t, bool include_background = false);

// Gap of ns slices at every z0 in [1, zdim - ns - 1]; per-position results averaged.
EvalReport sliding_eval(const LabelVolume& gt, std::size_t ns, const Scorer& scorer, double t,
                        const PipelineConfig& cfg = {});

struct SweepTable {
  std::vector<EvalReport> rows;
  std::size_t optimal = 0;  // row with the largest percent_reduction (first on ties)
};

inline const std::vector<double> kDefaultThresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

// Scores each position once and re-thresholds.
SweepTable sweep(const LabelVolume& gt, std::size_t ns, const Scorer& scorer,
                 const std::vector<double>& thresholds, const PipelineConfig& cfg = {});

// "start:stop:step", inclusive of stop within rounding.
std::vector<double> parse_threshold_grid(const std::string& spec);

void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

struct SweepRow {
  double threshold = 0.0;
  double vi_pre = 0.0;
  double vi_post = 0.0;
  double percent_reduction = 0.0;
  double success_rate = 0.0;
  double error_rate = 0.0;
  bool optimal = false;

  bool operator==(const SweepRow&) const = default;
};

std::vector<SweepRow> sweep_rows(const SweepTable& table);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

}  // namespace gapweld
