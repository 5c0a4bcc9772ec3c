#include "gapweld/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"
#include "gapweld/log.hpp"
#include "gapweld/util.hpp"

namespace gapweld {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Score tables

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& field, const std::string& where) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || in.peek() != std::char_traits<char>::eof() || text.empty()) {
    throw ValidationError(where + ": field " + field + " is not a valid number: '" + text + "'");
  }
  return v;
}

}  // namespace

void write_scores(const ScoreTable& table, const fs::path& path) {
  std::string out = "example_id\ttop\tbottom\tp_merge\n";
  for (const auto& r : table) {
    out += r.example_id + '\t' + std::to_string(r.top) + '\t' + std::to_string(r.bottom) + '\t' +
           format_double(r.p_merge) + '\n';
  }
  write_text_file(path, out);
}

ScoreTable load_external_scores(const fs::path& path, const std::set<std::string>* known_ids) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  ScoreTable table;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!line.empty() && line.back() == '\r') {
      throw ValidationError(where + ": CRLF line endings are not accepted");
    }
    if (lineno == 1) {
      if (line != "example_id\ttop\tbottom\tp_merge") {
        throw ValidationError(where + ": expected header example_id<TAB>top<TAB>bottom<TAB>p_merge");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) throw ValidationError(where + ": expected 4 tab-separated fields");
    ScoreRow row;
    row.example_id = fields[0];
    if (row.example_id.empty()) throw ValidationError(where + ": empty example_id");
    row.top = parse_number<Label>(fields[1], "top", where);
    row.bottom = parse_number<Label>(fields[2], "bottom", where);
    row.p_merge = parse_number<double>(fields[3], "p_merge", where);
    if (!(row.p_merge >= 0.0 && row.p_merge <= 1.0)) {
      throw ValidationError(where + ": p_merge " + fields[3] + " outside [0,1]");
    }
    if (!seen.insert(row.example_id).second) {
      throw ValidationError(where + ": duplicate example id " + row.example_id);
    }
    if (known_ids && !known_ids->contains(row.example_id)) {
      throw ValidationError(where + ": unknown example id " + row.example_id);
    }
    table.push_back(std::move(row));
  }
  if (lineno == 0) throw ValidationError(path.string() + ": missing header line");
  return table;
}

std::string pair_id(const GapInstance& inst, Label top, Label bottom) {
  return example_id({top, bottom, inst.spec.z0, inst.spec.ns, 0});
}

ScoreTable score_baseline(const GapInstance& inst, const std::vector<CandidateGroup>& groups) {
  ScoreTable table;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      const Label b = g.candidates[i].bottom;
      table.push_back({pair_id(inst, g.top, b), g.top, b, i == 0 ? 1.0 : 0.0});
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Network

std::size_t ScorerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* l : layers()) n += static_cast<std::size_t>(l->weight.size() + l->bias.size());
  return n;
}

ScorerParams zero_params() {
  ScorerParams p;
  auto layers = p.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(kLayerWidths[i]);
    const auto out = static_cast<Eigen::Index>(kLayerWidths[i + 1]);
    layers[i]->weight = Eigen::MatrixXd::Zero(in, out);
    layers[i]->bias = Eigen::VectorXd::Zero(out);
  }
  return p;
}

ScorerParams init_scorer(std::uint64_t seed) {
  ScorerParams p = zero_params();
  std::mt19937_64 rng(seed);
  for (auto* l : p.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l->weight.rows() + l->weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < l->weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l->weight.cols(); ++c) l->weight(r, c) = dist(rng);
    }
  }
  return p;
}

PointMatrix to_matrix(const PointCloudExample& ex) {
  PointMatrix m(static_cast<Eigen::Index>(ex.points.size()), 3);
  for (std::size_t i = 0; i < ex.points.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double v = ex.points[i][a];
      if (!std::isfinite(v)) throw ValidationError("example " + example_id(ex.meta) + ": non-finite point");
      m(static_cast<Eigen::Index>(i), a) = v;
    }
  }
  return m;
}

PointMatrix unique_point_matrix(const PointCloudExample& ex) {
  std::vector<Point3f> pts = ex.points;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  PointCloudExample distinct{std::move(pts), ex.label, ex.meta};
  return to_matrix(distinct);
}

namespace {

struct ForwardCache {
  Eigen::MatrixXd a1, h1, a2;
  Eigen::VectorXd pooled;
  std::vector<Eigen::Index> argmax;
  Eigen::VectorXd a3, h3, logits;
  std::array<double, 2> probs{};
};

void run_forward(const ScorerParams& p, const PointMatrix& x, ForwardCache& c) {
  if (x.rows() == 0) throw ValidationError("forward: example has no points");
  c.a1 = (x * p.point1.weight).rowwise() + p.point1.bias.transpose();
  c.h1 = c.a1.cwiseMax(0.0);
  c.a2 = (c.h1 * p.point2.weight).rowwise() + p.point2.bias.transpose();
  const Eigen::Index width = c.a2.cols();
  c.pooled.resize(width);
  c.argmax.assign(static_cast<std::size_t>(width), 0);
  for (Eigen::Index j = 0; j < width; ++j) {
    Eigen::Index best = 0;
    double best_v = c.a2(0, j);
    for (Eigen::Index i = 1; i < c.a2.rows(); ++i) {
      if (c.a2(i, j) > best_v) {
        best_v = c.a2(i, j);
        best = i;
      }
    }
    // max(relu(a)) == relu(max(a))
    c.pooled(j) = std::max(best_v, 0.0);
    c.argmax[static_cast<std::size_t>(j)] = best;
  }
  c.a3 = p.head1.weight.transpose() * c.pooled + p.head1.bias;
  c.h3 = c.a3.cwiseMax(0.0);
  c.logits = p.head2.weight.transpose() * c.h3 + p.head2.bias;
  const double m = std::max(c.logits(0), c.logits(1));
  const double e0 = std::exp(c.logits(0) - m);
  const double e1 = std::exp(c.logits(1) - m);
  c.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// Which argmax rows and ReLU gates the loss currently flows through.
std::vector<std::int64_t> activation_pattern(const ScorerParams& p, const PointMatrix& x) {
  ForwardCache c;
  run_forward(p, x, c);
  std::vector<std::int64_t> out(c.argmax.begin(), c.argmax.end());
  for (std::size_t j = 0; j < c.argmax.size(); ++j) {
    const Eigen::Index r = c.argmax[j];
    out.push_back(c.a2(r, static_cast<Eigen::Index>(j)) > 0.0);
    for (Eigen::Index k = 0; k < c.a1.cols(); ++k) out.push_back(c.a1(r, k) > 0.0);
  }
  for (Eigen::Index k = 0; k < c.a3.size(); ++k) out.push_back(c.a3(k) > 0.0);
  return out;
}

void add_scaled(ScorerParams& acc, const ScorerParams& g, double scale) {
  auto a = acc.layers();
  auto b = g.layers();
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i]->weight += scale * b[i]->weight;
    a[i]->bias += scale * b[i]->bias;
  }
}

}  // namespace

std::array<double, 2> forward(const ScorerParams& params, const PointMatrix& points) {
  if (!points.allFinite()) throw ValidationError("forward: non-finite input");
  ForwardCache c;
  run_forward(params, points, c);
  return c.probs;
}

std::array<double, 2> forward(const ScorerParams& params, const PointCloudExample& ex) {
  return forward(params, unique_point_matrix(ex));
}

LossGradient loss_and_gradient(const ScorerParams& p, const PointMatrix& x, int y) {
  if (y != 0 && y != 1) throw ValidationError("label: must be 0 or 1");
  ForwardCache c;
  run_forward(p, x, c);

  LossGradient out;
  out.probs = c.probs;
  const double m = std::max(c.logits(0), c.logits(1));
  const double lse = m + std::log(std::exp(c.logits(0) - m) + std::exp(c.logits(1) - m));
  out.loss = lse - c.logits(y);
  out.grad = zero_params();
  ScorerParams& g = out.grad;

  Eigen::Vector2d dlogits(c.probs[0], c.probs[1]);
  dlogits(y) -= 1.0;
  g.head2.weight = c.h3 * dlogits.transpose();
  g.head2.bias = dlogits;

  Eigen::VectorXd da3 = p.head2.weight * dlogits;
  for (Eigen::Index k = 0; k < da3.size(); ++k) {
    if (c.a3(k) <= 0.0) da3(k) = 0.0;
  }
  g.head1.weight = c.pooled * da3.transpose();
  g.head1.bias = da3;

  // Gradient reaches only the argmax row of each pooled channel, and only if it is active.
  const Eigen::VectorXd dpooled = p.head1.weight * da3;
  std::map<Eigen::Index, Eigen::VectorXd> dh1_rows;
  for (Eigen::Index j = 0; j < dpooled.size(); ++j) {
    const Eigen::Index r = c.argmax[static_cast<std::size_t>(j)];
    if (c.a2(r, j) <= 0.0 || dpooled(j) == 0.0) continue;
    const double da2 = dpooled(j);
    g.point2.weight.col(j) += da2 * c.h1.row(r).transpose();
    g.point2.bias(j) += da2;
    auto [it, fresh] = dh1_rows.try_emplace(r, Eigen::VectorXd::Zero(p.point2.weight.rows()));
    it->second += da2 * p.point2.weight.col(j);
  }
  for (auto& [r, dh1] : dh1_rows) {
    for (Eigen::Index k = 0; k < dh1.size(); ++k) {
      if (c.a1(r, k) <= 0.0) dh1(k) = 0.0;
    }
    g.point1.weight += x.row(r).transpose() * dh1.transpose();
    g.point1.bias += dh1;
  }
  return out;
}

double grad_check(const ScorerParams& params, const PointCloudExample& ex, int y, double eps) {
  if (!(eps > 0.0)) throw ValidationError("eps: must be positive");
  const PointMatrix x = to_matrix(ex);
  const ScorerParams analytic = loss_and_gradient(params, x, y).grad;
  ScorerParams probe = params;
  auto probe_layers = probe.layers();
  const auto grad_layers = analytic.layers();
  const auto pattern = activation_pattern(params, x);
  double worst = 0.0;
  std::size_t kinks = 0;
  const auto compare = [&](double& slot, double a) {
    const double saved = slot;
    slot = saved + eps;
    const double up = loss_and_gradient(probe, x, y).loss;
    const bool up_same = activation_pattern(probe, x) == pattern;
    slot = saved - eps;
    const double down = loss_and_gradient(probe, x, y).loss;
    const bool down_same = activation_pattern(probe, x) == pattern;
    slot = saved;
    // The loss is not differentiable across a switch in argmax or ReLU gate.
    if (!up_same || !down_same) {
      ++kinks;
      return;
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe_layers.size(); ++l) {
    auto& w = probe_layers[l]->weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) compare(w.data()[i], grad_layers[l]->weight.data()[i]);
    auto& b = probe_layers[l]->bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) compare(b.data()[i], grad_layers[l]->bias.data()[i]);
  }
  if (kinks > 0) log_debug("grad_check: skipped " + std::to_string(kinks) + " parameters at a kink");
  return worst;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(ScorerParams params, const std::vector<PointCloudExample>& examples,
                  const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("epochs: must be at least 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ValidationError("learning_rate: must be finite and non-negative");
  }
  if (cfg.batch_size < 1) throw ValidationError("batch_size: must be at least 1");

  std::vector<PointMatrix> inputs;
  std::vector<int> labels;
  for (const auto& ex : examples) {
    if (!ex.label) continue;
    inputs.push_back(unique_point_matrix(ex));
    labels.push_back(*ex.label);
  }
  if (inputs.empty()) throw ValidationError("train: dataset has no labeled examples");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<long>(labels.size())) {
    log_warn("train: dataset contains a single class; training anyway");
  }

  ScorerParams first_moment = zero_params();
  ScorerParams second_moment = zero_params();
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  std::size_t step = 0;

  TrainResult result;
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LossGradient> slots(cfg.batch_size);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed({cfg.seed, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      parallel_for(count, cfg.jobs, [&](std::size_t k) {
        const std::size_t idx = order[start + k];
        slots[k] = loss_and_gradient(params, inputs[idx], labels[idx]);
      });
      ScorerParams batch_grad = zero_params();
      for (std::size_t k = 0; k < count; ++k) {
        epoch_loss += slots[k].loss;
        add_scaled(batch_grad, slots[k].grad, 1.0 / static_cast<double>(count));
      }
      if (cfg.learning_rate == 0.0) continue;
      if (cfg.optimizer == Optimizer::Sgd) {
        add_scaled(params, batch_grad, -cfg.learning_rate);
        continue;
      }
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      auto p = params.layers();
      auto g = batch_grad.layers();
      auto m = first_moment.layers();
      auto v = second_moment.layers();
      for (std::size_t l = 0; l < p.size(); ++l) {
        const auto update = [&](auto& param, const auto& grad, auto& mom1, auto& mom2) {
          mom1 = kBeta1 * mom1 + (1.0 - kBeta1) * grad;
          mom2 = kBeta2 * mom2 + (1.0 - kBeta2) * grad.cwiseProduct(grad);
          param.array() -= cfg.learning_rate * (mom1.array() / c1) /
                           ((mom2.array() / c2).sqrt() + kAdamEps);
        };
        update(p[l]->weight, g[l]->weight, m[l]->weight, v[l]->weight);
        update(p[l]->bias, g[l]->bias, m[l]->bias, v[l]->bias);
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(inputs.size()));
    log_debug("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(result.loss_history.back()));
  }
  result.params = std::move(params);
  return result;
}

double accuracy(const ScorerParams& params, const std::vector<PointCloudExample>& examples) {
  std::size_t correct = 0, total = 0;
  for (const auto& ex : examples) {
    if (!ex.label) continue;
    const auto p = forward(params, ex);
    correct += (p[1] > p[0] ? 1 : 0) == *ex.label;
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

constexpr std::array<const char*, 4> kLayerNames{"point1", "point2", "head1", "head2"};

}  // namespace

void save_model(const NativeModel& model, const fs::path& path) {
  nlohmann::ordered_json j;
  auto layers = nlohmann::ordered_json::array();
  const auto ls = model.params.layers();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    nlohmann::ordered_json l;
    l["name"] = kLayerNames[i];
    l["shape"] = {ls[i]->weight.rows(), ls[i]->weight.cols()};
    auto w = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < ls[i]->weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < ls[i]->weight.cols(); ++c) w.push_back(ls[i]->weight(r, c));
    }
    l["weight"] = std::move(w);
    auto b = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < ls[i]->bias.size(); ++k) b.push_back(ls[i]->bias(k));
    l["bias"] = std::move(b);
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  j["representation"] = {{"cs", model.cs}, {"np", model.np}, {"norm_scale_nm", model.norm_scale_nm}};
  write_text_file(path, j.dump() + "\n");
}

NativeModel load_model(const fs::path& path) {
  const nlohmann::json j = read_json_file(path);
  NativeModel model;
  model.params = zero_params();
  auto ls = model.params.layers();
  try {
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != ls.size()) {
      throw ValidationError(path.string() + ": layers: expected 4 entries");
    }
    for (std::size_t i = 0; i < ls.size(); ++i) {
      const auto& l = layers[i];
      if (l.at("name").get<std::string>() != kLayerNames[i]) {
        throw ValidationError(path.string() + ": layers[" + std::to_string(i) + "].name: expected " +
                              kLayerNames[i]);
      }
      const auto rows = l.at("shape").at(0).get<Eigen::Index>();
      const auto cols = l.at("shape").at(1).get<Eigen::Index>();
      if (rows != ls[i]->weight.rows() || cols != ls[i]->weight.cols()) {
        throw ValidationError(path.string() + ": layers[" + std::to_string(i) + "].shape mismatch");
      }
      const auto& w = l.at("weight");
      const auto& b = l.at("bias");
      if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != cols) {
        throw ValidationError(path.string() + ": layers[" + std::to_string(i) + "]: wrong value count");
      }
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          ls[i]->weight(r, c) = w.at(static_cast<std::size_t>(r * cols + c)).get<double>();
        }
      }
      for (Eigen::Index k = 0; k < cols; ++k) ls[i]->bias(k) = b.at(static_cast<std::size_t>(k)).get<double>();
      if (!ls[i]->weight.allFinite() || !ls[i]->bias.allFinite()) {
        throw ValidationError(path.string() + ": layers[" + std::to_string(i) + "]: non-finite value");
      }
    }
    const auto& rep = j.at("representation");
    model.cs = rep.at("cs").get<std::size_t>();
    model.np = rep.at("np").get<std::size_t>();
    model.norm_scale_nm = rep.at("norm_scale_nm").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed params file: " + e.what());
  }
  validate_rep_config({model.cs, model.np, model.norm_scale_nm, 0});
  return model;
}

// ---------------------------------------------------------------------------
// Scorers

ScoreTable BaselineDistanceScorer::score(const GapInstance& inst,
                                         const std::vector<CandidateGroup>& groups) const {
  return score_baseline(inst, groups);
}

ScoreTable NativeScorer::score(const GapInstance& inst,
                               const std::vector<CandidateGroup>& groups) const {
  const auto pairs = candidate_pairs(inst, groups);
  const RepConfig cfg{model_.cs, model_.np, model_.norm_scale_nm, seed_};
  ScoreTable table(pairs.size());
  parallel_for(pairs.size(), jobs_, [&](std::size_t i) {
    const auto& p = pairs[i];
    const auto ex = build_example(inst, p.top, p.bottom, cfg);
    table[i] = {pair_id(inst, p.top, p.bottom), p.top, p.bottom, forward(model_.params, ex)[1]};
  });
  return table;
}

ExternalScorer::ExternalScorer(ScoreTable table) : table_(std::move(table)) {}

ScoreTable ExternalScorer::score(const GapInstance& inst,
                                 const std::vector<CandidateGroup>& groups) const {
  std::map<std::string, const ScoreRow*> by_id;
  for (const auto& r : table_) by_id.emplace(r.example_id, &r);
  ScoreTable out;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      const std::string id = pair_id(inst, g.top, c.bottom);
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("scores: no row for example id " + id);
      if (it->second->top != g.top || it->second->bottom != c.bottom) {
        throw ValidationError("scores: row " + id + " has mismatched top/bottom");
      }
      out.push_back(*it->second);
    }
  }
  return out;
}

}  // namespace gapweld
