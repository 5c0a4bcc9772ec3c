#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gapweld/candidates.hpp"
#include "gapweld/pointcloud.hpp"

namespace gapweld {

struct ScoreRow {
  std::string example_id;
  Label top = 0;
  Label bottom = 0;
  double p_merge = 0.0;

  bool operator==(const ScoreRow&) const = default;
};

using ScoreTable = std::vector<ScoreRow>;

// TSV: header `example_id\ttop\tbottom\tp_merge`, LF line endings.
void write_scores(const ScoreTable& table, const std::filesystem::path& path);

// Validates range and uniqueness; when `known_ids` is given, every id must be in it.
ScoreTable load_external_scores(const std::filesystem::path& path,
                                const std::set<std::string>* known_ids = nullptr);

// Minimum-distance candidate of each group scores 1, the rest 0.
ScoreTable score_baseline(const GapInstance& inst, const std::vector<CandidateGroup>& groups);

// ---------------------------------------------------------------------------
// Native point scorer: shared per-point MLP 3->64->128 (ReLU), max-pool over
// points, head 128->64 (ReLU) ->2, softmax. Weights are stored (fan_in x fan_out).

inline constexpr std::array<std::size_t, 5> kLayerWidths{3, 64, 128, 64, 2};

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::VectorXd bias;    // fan_out

  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

struct ScorerParams {
  DenseLayer point1;  // 3 -> 64
  DenseLayer point2;  // 64 -> 128
  DenseLayer head1;   // 128 -> 64
  DenseLayer head2;   // 64 -> 2

  std::array<DenseLayer*, 4> layers() { return {&point1, &point2, &head1, &head2}; }
  std::array<const DenseLayer*, 4> layers() const { return {&point1, &point2, &head1, &head2}; }
  std::size_t parameter_count() const;
  bool operator==(const ScorerParams&) const = default;
};

// Glorot-uniform weights, zero biases.
ScorerParams init_scorer(std::uint64_t seed);

// Zero-valued params with the canonical shapes.
ScorerParams zero_params();

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

PointMatrix to_matrix(const PointCloudExample& ex);

// Distinct points only, in lexicographic order. Max-pooling ignores multiplicity,
// so the network output is unchanged while repeated samples cost nothing.
PointMatrix unique_point_matrix(const PointCloudExample& ex);

// (p_split, p_merge)
std::array<double, 2> forward(const ScorerParams& params, const PointCloudExample& ex);
std::array<double, 2> forward(const ScorerParams& params, const PointMatrix& points);

// Cross-entropy -log p_y and its gradient (same shapes as params).
struct LossGradient {
  double loss = 0.0;
  std::array<double, 2> probs{};
  ScorerParams grad;
};
LossGradient loss_and_gradient(const ScorerParams& params, const PointMatrix& points, int y);

// Max over every weight and bias of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6),
// numeric by central differences with step eps. Parameters whose probe crosses a kink
// (argmax or ReLU switch) are skipped.
double grad_check(const ScorerParams& params, const PointCloudExample& ex, int y, double eps);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  std::size_t jobs = 1;
};

struct TrainResult {
  ScorerParams params;
  std::vector<double> loss_history;  // mean loss per epoch, measured before each step
};

// Examples without a label are skipped.
TrainResult train(ScorerParams params, const std::vector<PointCloudExample>& examples,
                  const TrainConfig& cfg);

double accuracy(const ScorerParams& params, const std::vector<PointCloudExample>& examples);

// Network plus the representation it was trained on.
struct NativeModel {
  ScorerParams params;
  std::size_t cs = kDefaultContextSlices;
  std::size_t np = kDefaultPointCount;
  double norm_scale_nm = 1.0;

  bool operator==(const NativeModel&) const = default;
};

void save_model(const NativeModel& model, const std::filesystem::path& path);
NativeModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoreTable score(const GapInstance& inst,
                           const std::vector<CandidateGroup>& groups) const = 0;
};

class BaselineDistanceScorer final : public Scorer {
 public:
  ScoreTable score(const GapInstance& inst,
                   const std::vector<CandidateGroup>& groups) const override;
};

class NativeScorer final : public Scorer {
 public:
  NativeScorer(NativeModel model, std::uint64_t seed = 0, std::size_t jobs = 1)
      : model_(std::move(model)), seed_(seed), jobs_(jobs) {}
  ScoreTable score(const GapInstance& inst,
                   const std::vector<CandidateGroup>& groups) const override;
  const NativeModel& model() const { return model_; }

 private:
  NativeModel model_;
  std::uint64_t seed_;
  std::size_t jobs_;
};

// Looks candidates up by example id in a precomputed table.
class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(ScoreTable table);
  ScoreTable score(const GapInstance& inst,
                   const std::vector<CandidateGroup>& groups) const override;

 private:
  ScoreTable table_;
};

// Example id for a candidate pair of an instance.
std::string pair_id(const GapInstance& inst, Label top, Label bottom);

}  // namespace gapweld
