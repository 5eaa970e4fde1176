#include "quantimed/topology.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace quantimed {

namespace {

Eigen::VectorXd sorted_descending(const Eigen::VectorXd& values) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) > values(b); });
  Eigen::VectorXd out(values.size());
  for (Eigen::Index k = 0; k < values.size(); ++k) out(k) = values(order[static_cast<std::size_t>(k)]);
  return out;
}

double beta_of(const Eigen::VectorXd& desc) {
  if (desc.size() < 2) return 0.0;
  return std::max(std::abs(desc(1)), std::abs(desc(desc.size() - 1)));
}

}  // namespace

Graph::Graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges) : n_(n) {
  for (auto& [i, j] : edges) {
    if (i >= n || j >= n) throw std::invalid_argument("Graph: edge endpoint out of range");
    if (i == j) throw std::invalid_argument("Graph: self-loop");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  adjacency_.assign(n, {});
  for (const auto& [i, j] : edges_) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& list : adjacency_) std::sort(list.begin(), list.end());
}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) return false;
  const auto& list = adjacency_[i];
  return std::binary_search(list.begin(), list.end(), j);
}

std::size_t Graph::component_count() const {
  std::vector<bool> seen(n_, false);
  std::size_t components = 0;
  for (std::size_t start = 0; start < n_; ++start) {
    if (seen[start]) continue;
    ++components;
    std::queue<std::size_t> frontier;
    frontier.push(start);
    seen[start] = true;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t v : adjacency_[u]) {
        if (!seen[v]) {
          seen[v] = true;
          frontier.push(v);
        }
      }
    }
  }
  return components;
}

Eigen::MatrixXd Graph::laplacian() const {
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : edges_) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    lap(a, b) -= 1.0;
    lap(b, a) -= 1.0;
    lap(a, a) += 1.0;
    lap(b, b) += 1.0;
  }
  return lap;
}

Graph build_erdos_renyi(std::size_t n, double p_c, Rng& rng) {
  if (n < 2) throw std::invalid_argument("build_erdos_renyi: n must be >= 2");
  if (!(p_c >= 0.0 && p_c <= 1.0)) throw std::invalid_argument("build_erdos_renyi: p_c must lie in [0, 1]");
  for (int attempt = 0; attempt < kMaxConnectivityResamples; ++attempt) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (rng.uniform() < p_c) edges.emplace_back(i, j);
      }
    }
    Graph g(n, std::move(edges));
    if (g.connected()) return g;
  }
  std::ostringstream msg;
  msg << "build_erdos_renyi: no connected graph after " << kMaxConnectivityResamples
      << " samples (p_c=" << p_c << " too small for n=" << n << ")";
  throw std::runtime_error(msg.str());
}

Graph build_ring(std::size_t n) {
  if (n < 3) return build_path(n);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  return Graph(n, std::move(edges));
}

Graph build_path(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return Graph(n, std::move(edges));
}

Graph build_complete(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return Graph(n, std::move(edges));
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << "n=" << g.size() << '\n';
  for (const auto& [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

Graph read_edge_list(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("n=", 0) != 0)
    throw std::runtime_error("read_edge_list: missing `n=<count>` header");
  std::size_t n = 0;
  try {
    n = std::stoul(line.substr(2));
  } catch (const std::exception&) {
    throw std::runtime_error("read_edge_list: bad node count in header");
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::size_t i = 0, j = 0;
    std::string rest;
    if (!(row >> i >> j) || (row >> rest))
      throw std::runtime_error("read_edge_list: malformed line " + std::to_string(line_no));
    edges.emplace_back(i, j);
  }
  return Graph(n, std::move(edges));
}

MixingMatrix::MixingMatrix(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols() || weights_.rows() == 0)
    throw std::invalid_argument("MixingMatrix: weights must be a non-empty square matrix");
  if (weights_ != weights_.transpose()) throw std::invalid_argument("MixingMatrix: weights must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(weights_, Eigen::EigenvaluesOnly);
  eigenvalues_ = sorted_descending(solver.eigenvalues());
  beta_ = beta_of(eigenvalues_);
}

double laplacian_lambda_max(const Graph& g) {
  if (g.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g.laplacian(), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

MixingMatrix laplacian_mixing(const Graph& g, double kappa) {
  const double threshold = laplacian_lambda_max(g) / 2.0;
  // The eigensolver's rounding must not let the boundary kappa = lambda_max/2 through.
  if (!(kappa > threshold * (1.0 + 1e-12))) {
    std::ostringstream msg;
    msg << "laplacian_mixing: kappa=" << kappa << " must exceed lambda_max(L)/2=" << threshold;
    throw std::invalid_argument(msg.str());
  }
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n) - g.laplacian() / kappa;
  return MixingMatrix(std::move(w));
}

double default_kappa(const Graph& g, double margin) {
  if (margin < 0.0) throw std::invalid_argument("default_kappa: margin must be >= 0");
  return (1.0 + margin) * laplacian_lambda_max(g) / 2.0;
}

MixingMatrix lazy_mixing(const MixingMatrix& w, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("lazy_mixing: eps must lie in (0, 1]");
  if (eps == 1.0) return w;
  const auto n = w.weights().rows();
  Eigen::MatrixXd lazy = (1.0 - eps) * Eigen::MatrixXd::Identity(n, n) + eps * w.weights();
  return MixingMatrix(std::move(lazy));
}

bool lazy_eigen_monotone(const MixingMatrix& w, double eps) {
  return eps <= 1.0 / (1.0 - w.lambda_min());
}

double lazy_beta(const MixingMatrix& w, double eps) {
  if (w.size() < 2) return 0.0;
  const Eigen::VectorXd& lam = w.eigenvalues();
  const double l2 = 1.0 - eps + eps * lam(1);
  const double ln = 1.0 - eps + eps * lam(lam.size() - 1);
  return std::max(std::abs(l2), std::abs(ln));
}

bool SpectralReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const InvariantCheck& c) { return c.passed; });
}

const InvariantCheck* SpectralReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

SpectralReport validate_mixing(const Eigen::MatrixXd& w, const Graph* support) {
  SpectralReport report;
  if (w.rows() != w.cols() || w.rows() == 0) {
    report.checks.push_back({"square", false, "matrix is not square and non-empty"});
    return report;
  }
  const Eigen::Index n = w.rows();
  report.checks.push_back({"square", true, ""});

  // W = I - L/kappa only needs kappa > lambda_max(L)/2, which allows negative
  // self-weights; the sign requirement is enforced on neighbor weights.
  Eigen::MatrixXd off = w;
  off.diagonal().setZero();
  const double min_off = off.minCoeff();
  const double min_diag = w.diagonal().minCoeff();
  report.checks.push_back({"offdiag_nonnegative", min_off >= 0.0,
                           "min neighbor weight " + std::to_string(min_off) +
                               (min_diag < 0.0 ? ", min self-weight " + std::to_string(min_diag) : "")});

  const bool symmetric = (w == w.transpose());
  report.checks.push_back({"symmetric", symmetric, symmetric ? "" : "w_ij != w_ji"});

  const double row_err = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  std::ostringstream row_detail;
  row_detail << "max |row sum - 1| = " << row_err;
  report.checks.push_back({"row_sums", row_err <= kRowSumTolerance, row_detail.str()});

  if (support != nullptr) {
    bool ok = support->size() == static_cast<std::size_t>(n);
    for (Eigen::Index i = 0; ok && i < n; ++i)
      for (Eigen::Index j = 0; ok && j < n; ++j)
        if (i != j && w(i, j) != 0.0 &&
            !support->has_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(j)))
          ok = false;
    report.checks.push_back({"graph_support", ok, ok ? "" : "nonzero weight off the edge set"});
  }

  Eigen::VectorXd eig;
  if (symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w, Eigen::EigenvaluesOnly);
    eig = solver.eigenvalues();
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(w, false);
    eig = solver.eigenvalues().real();
  }
  report.eigenvalues = sorted_descending(eig);
  report.beta = beta_of(report.eigenvalues);
  report.spectral_gap = 1.0 - report.beta;

  report.unit_eigenvalue_multiplicity = static_cast<int>(
      ((report.eigenvalues.array() - 1.0).abs() <= kUnitEigenvalueTolerance).count());
  const bool top_is_one = std::abs(report.eigenvalues(0) - 1.0) <= kUnitEigenvalueTolerance;
  report.checks.push_back({"lambda_1_is_one", top_is_one, "lambda_1 = " + std::to_string(report.eigenvalues(0))});
  report.checks.push_back({"unit_eigenvalue_simple", report.unit_eigenvalue_multiplicity == 1,
                           "eigenvalue-1 multiplicity " + std::to_string(report.unit_eigenvalue_multiplicity)});
  const double lam_n = report.eigenvalues(n - 1);
  report.checks.push_back({"lambda_n_above_minus_one", lam_n > -1.0 + kUnitEigenvalueTolerance, "lambda_n = " + std::to_string(lam_n)});
  report.checks.push_back({"beta_below_one", report.beta < 1.0 - kUnitEigenvalueTolerance, "beta = " + std::to_string(report.beta)});
  return report;
}

std::string format_report(const SpectralReport& report) {
  std::ostringstream out;
  out.precision(12);
  for (const auto& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << '\n';
  }
  out << "beta " << report.beta << '\n';
  out << "spectral_gap " << report.spectral_gap << '\n';
  out << "eigenvalues";
  for (Eigen::Index k = 0; k < report.eigenvalues.size(); ++k) out << ' ' << report.eigenvalues(k);
  out << '\n';
  return out.str();
}

}  // namespace quantimed
