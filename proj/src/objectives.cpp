#include "quantimed/objectives.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace quantimed {

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct MlpView {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::VectorXd> v;
  double c;
};

MlpView mlp_view(const Objective& obj, const Eigen::VectorXd& x) {
  const auto h = static_cast<Eigen::Index>(obj.hidden);
  const auto d = static_cast<Eigen::Index>(obj.in_dim);
  const double* p = x.data();
  return {Eigen::Map<const Eigen::MatrixXd>(p, h, d), Eigen::Map<const Eigen::VectorXd>(p + h * d, h),
          Eigen::Map<const Eigen::VectorXd>(p + h * d + h, h), p[h * d + 2 * h]};
}

void check_dimension(const Objective& obj, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != obj.dimension)
    throw std::invalid_argument("objective: model dimension mismatch");
}

// Newton iterations on the ridge-regularized logistic loss.
Eigen::VectorXd logistic_optimum(const Objective& obj, const DataShards& data) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.dimension));
  const auto p = x.size();
  const double inv_n = 1.0 / static_cast<double>(data.total_samples());
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd grad = obj.ridge * x;
    Eigen::MatrixXd hess = obj.ridge * Eigen::MatrixXd::Identity(p, p);
    for (const auto& node : data.nodes) {
      for (std::size_t s : node) {
        const auto a = data.features.col(static_cast<Eigen::Index>(s));
        const double y = data.labels(static_cast<Eigen::Index>(s));
        const double sg = sigmoid(-y * x.dot(a));
        grad.noalias() -= inv_n * y * sg * a;
        hess.noalias() += inv_n * sg * (1.0 - sg) * a * a.transpose();
      }
    }
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    x -= step;
    if (step.norm() <= 1e-14 * (1.0 + x.norm())) break;
  }
  return x;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& text, double& out) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) return false;
  const auto last = text.find_last_not_of(" \t\r");
  const std::string trimmed = text.substr(first, last - first + 1);
  std::size_t used = 0;
  try {
    out = std::stod(trimmed, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == trimmed.size() && std::isfinite(out);
}

}  // namespace

const char* to_string(ObjectiveFamily family) {
  switch (family) {
    case ObjectiveFamily::kQuadratic: return "quadratic";
    case ObjectiveFamily::kLogistic: return "logistic";
    case ObjectiveFamily::kMlp: return "mlp";
  }
  return "unknown";
}

ObjectiveFamily parse_family(const std::string& name) {
  if (name == "quadratic") return ObjectiveFamily::kQuadratic;
  if (name == "logistic") return ObjectiveFamily::kLogistic;
  if (name == "mlp") return ObjectiveFamily::kMlp;
  throw std::invalid_argument("unknown objective family '" + name + "'");
}

std::vector<std::vector<std::size_t>> contiguous_partition(std::size_t n, std::size_t m) {
  std::vector<std::vector<std::size_t>> nodes(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) nodes[i].push_back(i * m + j);
  return nodes;
}

Problem make_quadratic(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed, double center_scale) {
  if (n == 0 || m == 0 || p == 0) throw std::invalid_argument("make_quadratic: n, m, p must be >= 1");
  Rng rng(StreamKey{seed, 0, StreamPurpose::kData, 0});
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n * m));
  for (Eigen::Index s = 0; s < centers.cols(); ++s)
    for (Eigen::Index k = 0; k < centers.rows(); ++k) centers(k, s) = center_scale * rng.normal();
  Problem prob = make_quadratic(n, m, centers);
  prob.shards.source = "synthetic:quadratic:seed=" + std::to_string(seed);
  return prob;
}

Problem make_quadratic(std::size_t n, std::size_t m, const Eigen::MatrixXd& centers) {
  if (n == 0 || m == 0 || centers.rows() == 0) throw std::invalid_argument("make_quadratic: empty problem");
  if (static_cast<std::size_t>(centers.cols()) != n * m)
    throw std::invalid_argument("make_quadratic: need n*m center columns");
  Problem prob;
  prob.shards.features = centers;
  prob.shards.labels = Eigen::VectorXd::Zero(centers.cols());
  prob.shards.nodes = contiguous_partition(n, m);
  prob.shards.source = "explicit";
  auto& obj = prob.objective;
  obj.family = ObjectiveFamily::kQuadratic;
  obj.dimension = static_cast<std::size_t>(centers.rows());
  obj.smoothness = 1.0;
  obj.strong_convexity = 1.0;
  obj.optimum = centers.rowwise().mean();
  return prob;
}

Problem make_logistic(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed, double ridge) {
  if (n == 0 || m == 0 || p == 0) throw std::invalid_argument("make_logistic: n, m, p must be >= 1");
  Rng rng(StreamKey{seed, 0, StreamPurpose::kData, 0});
  Eigen::VectorXd truth(static_cast<Eigen::Index>(p));
  for (Eigen::Index k = 0; k < truth.size(); ++k) truth(k) = rng.normal();
  Eigen::MatrixXd features(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n * m));
  Eigen::VectorXd labels(features.cols());
  for (Eigen::Index s = 0; s < features.cols(); ++s) {
    for (Eigen::Index k = 0; k < features.rows(); ++k) features(k, s) = rng.normal();
    labels(s) = rng.uniform() < sigmoid(truth.dot(features.col(s))) ? 1.0 : -1.0;
  }
  Problem prob = make_logistic(n, m, features, labels, ridge);
  prob.shards.source = "synthetic:logistic:seed=" + std::to_string(seed);
  return prob;
}

Problem make_logistic(std::size_t n, std::size_t m, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                      double ridge) {
  if (n == 0 || m == 0 || features.rows() == 0) throw std::invalid_argument("make_logistic: empty problem");
  if (static_cast<std::size_t>(features.cols()) < n * m || labels.size() != features.cols())
    throw std::invalid_argument("make_logistic: need n*m labelled samples");
  if (ridge < 0.0) throw std::invalid_argument("make_logistic: ridge must be >= 0");
  for (Eigen::Index s = 0; s < labels.size(); ++s)
    if (labels(s) != 1.0 && labels(s) != -1.0) throw std::invalid_argument("make_logistic: labels must be +1 or -1");
  if (!features.allFinite()) throw std::invalid_argument("make_logistic: non-finite feature");

  Problem prob;
  prob.shards.features = features.leftCols(static_cast<Eigen::Index>(n * m));
  prob.shards.labels = labels.head(static_cast<Eigen::Index>(n * m));
  prob.shards.nodes = contiguous_partition(n, m);
  prob.shards.source = "explicit";
  auto& obj = prob.objective;
  obj.family = ObjectiveFamily::kLogistic;
  obj.dimension = static_cast<std::size_t>(features.rows());
  obj.ridge = ridge;
  obj.smoothness = ridge + prob.shards.features.colwise().squaredNorm().maxCoeff() / 4.0;
  if (ridge > 0.0) {
    obj.strong_convexity = ridge;
    obj.optimum = logistic_optimum(obj, prob.shards);
    obj.optimum_is_numeric = true;
  }
  return prob;
}

Problem make_logistic_csv(const std::filesystem::path& csv, std::size_t n, std::size_t m, double ridge) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("make_logistic_csv: cannot open " + csv.string());
  std::vector<std::vector<double>> rows;
  std::size_t arity = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line) && rows.size() < n * m) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    std::vector<double> values(cells.size());
    bool numeric = cells.size() >= 2;
    for (std::size_t c = 0; numeric && c < cells.size(); ++c) numeric = parse_double(cells[c], values[c]);
    if (!numeric) {
      if (line_no == 1) continue;  // header
      throw std::runtime_error(csv.string() + ":" + std::to_string(line_no) + ": non-numeric or empty field");
    }
    if (arity == 0) arity = values.size();
    if (values.size() != arity)
      throw std::runtime_error(csv.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(arity) +
                               " columns, found " + std::to_string(values.size()));
    if (values.back() != 1.0 && values.back() != -1.0)
      throw std::runtime_error(csv.string() + ":" + std::to_string(line_no) + ": label must be +1 or -1");
    rows.push_back(std::move(values));
  }
  if (rows.size() < n * m)
    throw std::runtime_error("make_logistic_csv: " + csv.string() + " has " + std::to_string(rows.size()) +
                             " rows, need n*m = " + std::to_string(n * m));

  const auto p = static_cast<Eigen::Index>(arity - 1);
  Eigen::MatrixXd features(p, static_cast<Eigen::Index>(n * m));
  Eigen::VectorXd labels(features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index k = 0; k < p; ++k) features(k, static_cast<Eigen::Index>(r)) = rows[r][static_cast<std::size_t>(k)];
    labels(static_cast<Eigen::Index>(r)) = rows[r].back();
  }
  Problem prob = make_logistic(n, m, features, labels, ridge);
  // Round-robin: row r belongs to node r mod n.
  prob.shards.nodes.assign(n, {});
  for (std::size_t r = 0; r < n * m; ++r) prob.shards.nodes[r % n].push_back(r);
  if (prob.objective.optimum) prob.objective.optimum = logistic_optimum(prob.objective, prob.shards);
  prob.shards.source = "csv:" + csv.string();
  return prob;
}

std::size_t mlp_parameter_count(std::size_t in_dim, std::size_t hidden) { return hidden * (in_dim + 2) + 1; }

Problem make_mlp(std::size_t n, std::size_t m, std::size_t in_dim, std::size_t hidden, std::uint64_t seed) {
  if (n == 0 || m == 0 || in_dim == 0 || hidden == 0) throw std::invalid_argument("make_mlp: sizes must be >= 1");
  Objective shape;
  shape.family = ObjectiveFamily::kMlp;
  shape.in_dim = in_dim;
  shape.hidden = hidden;
  shape.dimension = mlp_parameter_count(in_dim, hidden);

  Rng teacher_rng(StreamKey{seed, 0, StreamPurpose::kTeacher, 0});
  Eigen::VectorXd teacher(static_cast<Eigen::Index>(shape.dimension));
  const double fan_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double fan_hidden = 1.0 / std::sqrt(static_cast<double>(hidden));
  const auto hd = static_cast<Eigen::Index>(hidden * in_dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  for (Eigen::Index k = 0; k < teacher.size(); ++k) {
    const double z = teacher_rng.normal();
    if (k < hd) teacher(k) = fan_in * z;
    else if (k < hd + h) teacher(k) = 0.1 * z;
    else if (k < hd + 2 * h) teacher(k) = fan_hidden * z;
    else teacher(k) = 0.1 * z;
  }

  Rng data_rng(StreamKey{seed, 0, StreamPurpose::kData, 0});
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(in_dim), static_cast<Eigen::Index>(n * m));
  Eigen::VectorXd targets(inputs.cols());
  for (Eigen::Index s = 0; s < inputs.cols(); ++s) {
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) inputs(k, s) = data_rng.normal();
    targets(s) = mlp_forward(shape, teacher, inputs.col(s));
  }
  Problem prob = make_mlp(n, m, in_dim, hidden, inputs, targets);
  prob.objective.teacher = teacher;
  prob.objective.smoothness = estimate_smoothness(prob.objective, prob.shards, seed);
  prob.shards.source = "synthetic:mlp:seed=" + std::to_string(seed);
  return prob;
}

Problem make_mlp(std::size_t n, std::size_t m, std::size_t in_dim, std::size_t hidden, const Eigen::MatrixXd& inputs,
                 const Eigen::VectorXd& targets) {
  if (hidden == 0) throw std::invalid_argument("make_mlp: hidden must be >= 1");
  if (static_cast<std::size_t>(inputs.rows()) != in_dim || static_cast<std::size_t>(inputs.cols()) != n * m ||
      targets.size() != inputs.cols())
    throw std::invalid_argument("make_mlp: need in_dim x (n*m) inputs and n*m targets");
  Problem prob;
  prob.shards.features = inputs;
  prob.shards.labels = targets;
  prob.shards.nodes = contiguous_partition(n, m);
  prob.shards.source = "explicit";
  auto& obj = prob.objective;
  obj.family = ObjectiveFamily::kMlp;
  obj.in_dim = in_dim;
  obj.hidden = hidden;
  obj.dimension = mlp_parameter_count(in_dim, hidden);
  obj.smoothness_is_estimate = true;
  return prob;
}

double mlp_forward(const Objective& obj, const Eigen::VectorXd& x, const Eigen::VectorXd& input) {
  const MlpView net = mlp_view(obj, x);
  return net.v.dot((net.w1 * input + net.b1).array().tanh().matrix()) + net.c;
}

double sample_loss(const Objective& obj, const DataShards& data, std::size_t sample, const Eigen::VectorXd& x) {
  check_dimension(obj, x);
  const auto s = static_cast<Eigen::Index>(sample);
  const auto theta = data.features.col(s);
  switch (obj.family) {
    case ObjectiveFamily::kQuadratic:
      return 0.5 * (x - theta).squaredNorm();
    case ObjectiveFamily::kLogistic:
      return softplus(-data.labels(s) * x.dot(theta)) + 0.5 * obj.ridge * x.squaredNorm();
    case ObjectiveFamily::kMlp: {
      const double r = mlp_forward(obj, x, theta) - data.labels(s);
      return 0.5 * r * r;
    }
  }
  return 0.0;
}

void add_sample_gradient(const Objective& obj, const DataShards& data, std::size_t sample, const Eigen::VectorXd& x,
                         Eigen::Ref<Eigen::VectorXd> acc) {
  const auto s = static_cast<Eigen::Index>(sample);
  const auto theta = data.features.col(s);
  switch (obj.family) {
    case ObjectiveFamily::kQuadratic:
      acc += x - theta;
      return;
    case ObjectiveFamily::kLogistic: {
      const double y = data.labels(s);
      acc += (-y * sigmoid(-y * x.dot(theta))) * theta + obj.ridge * x;
      return;
    }
    case ObjectiveFamily::kMlp: {
      const MlpView net = mlp_view(obj, x);
      const auto h = static_cast<Eigen::Index>(obj.hidden);
      const auto d = static_cast<Eigen::Index>(obj.in_dim);
      const Eigen::VectorXd act = (net.w1 * theta + net.b1).array().tanh().matrix();
      const double r = net.v.dot(act) + net.c - data.labels(s);
      const Eigen::VectorXd delta = (r * net.v.array() * (1.0 - act.array().square())).matrix();
      Eigen::Map<Eigen::MatrixXd>(acc.data(), h, d) += delta * theta.transpose();
      acc.segment(h * d, h) += delta;
      acc.segment(h * d + h, h) += r * act;
      acc(h * d + 2 * h) += r;
      return;
    }
  }
}

Eigen::VectorXd sample_gradient(const Objective& obj, const DataShards& data, std::size_t sample,
                                const Eigen::VectorXd& x) {
  check_dimension(obj, x);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  add_sample_gradient(obj, data, sample, x, g);
  return g;
}

double local_loss(const Objective& obj, const DataShards& data, std::size_t node, const Eigen::VectorXd& x) {
  const auto& samples = data.nodes.at(node);
  double sum = 0.0;
  for (std::size_t s : samples) sum += sample_loss(obj, data, s, x);
  return sum / static_cast<double>(samples.size());
}

Eigen::VectorXd local_full_gradient(const Objective& obj, const DataShards& data, std::size_t node,
                                    const Eigen::VectorXd& x) {
  check_dimension(obj, x);
  const auto& samples = data.nodes.at(node);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (std::size_t s : samples) add_sample_gradient(obj, data, s, x, g);
  return g / static_cast<double>(samples.size());
}

double global_loss(const Objective& obj, const DataShards& data, const Eigen::VectorXd& x) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.node_count(); ++i) sum += local_loss(obj, data, i, x);
  return sum / static_cast<double>(data.node_count());
}

Eigen::VectorXd global_gradient(const Objective& obj, const DataShards& data, const Eigen::VectorXd& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (std::size_t i = 0; i < data.node_count(); ++i) g += local_full_gradient(obj, data, i, x);
  return g / static_cast<double>(data.node_count());
}

std::vector<std::size_t> draw_batch(std::size_t m, std::size_t size, Rng& rng) {
  std::vector<std::size_t> batch(size);
  for (auto& idx : batch) idx = static_cast<std::size_t>(rng.below(m));
  return batch;
}

GradSample deadline_stochastic_gradient(const Objective& obj, const DataShards& data, std::size_t node,
                                        const Eigen::VectorXd& x, std::span<const std::size_t> batch,
                                        std::uint64_t iteration) {
  check_dimension(obj, x);
  GradSample out;
  out.node = node;
  out.iteration = iteration;
  out.batch.assign(batch.begin(), batch.end());
  out.gradient = Eigen::VectorXd::Zero(x.size());
  if (batch.empty()) return out;
  const std::size_t m = data.nodes.at(node).size();
  for (std::size_t local : batch) {
    if (local >= m) throw std::out_of_range("deadline_stochastic_gradient: batch index out of range");
    add_sample_gradient(obj, data, data.global_index(node, local), x, out.gradient);
  }
  out.gradient /= static_cast<double>(batch.size());
  return out;
}

double gradient_variance(const Objective& obj, const DataShards& data, const Eigen::VectorXd& x) {
  const Eigen::VectorXd mean = global_gradient(obj, data, x);
  double sum = 0.0;
  for (const auto& node : data.nodes)
    for (std::size_t s : node) sum += (sample_gradient(obj, data, s, x) - mean).squaredNorm();
  return sum / static_cast<double>(data.total_samples());
}

double estimate_smoothness(const Objective& obj, const DataShards& data, std::uint64_t seed, int samples,
                           int iterations) {
  Rng rng(StreamKey{seed, 0, StreamPurpose::kEstimate, 0});
  const auto p = static_cast<Eigen::Index>(obj.dimension);
  double best = 0.0;
  for (int k = 0; k < samples; ++k) {
    const std::size_t sample = data.global_index(rng.below(data.node_count()), rng.below(data.samples_per_node()));
    Eigen::VectorXd point(p);
    for (Eigen::Index c = 0; c < p; ++c) point(c) = rng.normal();
    if (k == 0 && obj.teacher) point = *obj.teacher;
    Eigen::VectorXd v(p);
    for (Eigen::Index c = 0; c < p; ++c) v(c) = rng.normal();
    v.normalize();
    double curvature = 0.0;
    const double h = 1e-5 * (1.0 + point.norm());
    for (int it = 0; it < iterations; ++it) {
      const Eigen::VectorXd hv = (sample_gradient(obj, data, sample, point + h * v) -
                                  sample_gradient(obj, data, sample, point - h * v)) /
                                 (2.0 * h);
      curvature = hv.norm();
      if (curvature == 0.0) break;
      v = hv / curvature;
    }
    best = std::max(best, curvature);
  }
  return best;
}

double local_minimum_value(const Objective& obj, const DataShards& data, std::size_t node, int steps) {
  if (obj.family == ObjectiveFamily::kQuadratic) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.dimension));
    for (std::size_t s : data.nodes.at(node)) center += data.features.col(static_cast<Eigen::Index>(s));
    center /= static_cast<double>(data.nodes.at(node).size());
    return local_loss(obj, data, node, center);
  }
  const double step = 1.0 / std::max(obj.smoothness, 1e-12);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.dimension));
  double best = local_loss(obj, data, node, x);
  for (int k = 0; k < steps; ++k) {
    x -= step * local_full_gradient(obj, data, node, x);
    best = std::min(best, local_loss(obj, data, node, x));
  }
  return best;
}

std::string dump_shards(const DataShards& data) {
  nlohmann::json doc;
  doc["n"] = data.node_count();
  doc["m"] = data.samples_per_node();
  doc["source"] = data.source;
  doc["nodes"] = data.nodes;
  return doc.dump(1) + "\n";
}

}  // namespace quantimed
