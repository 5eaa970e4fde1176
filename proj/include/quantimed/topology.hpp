// Communication graphs and gossip mixing matrices.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "quantimed/rng.hpp"

namespace quantimed {

/// Undirected simple graph. Edges are stored as (i, j) with i < j, sorted.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges);

  std::size_t size() const { return n_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_.at(i); }
  std::size_t degree(std::size_t i) const { return adjacency_.at(i).size(); }
  bool has_edge(std::size_t i, std::size_t j) const;

  std::size_t component_count() const;
  bool connected() const { return component_count() == 1; }

  /// Combinatorial Laplacian D - A.
  Eigen::MatrixXd laplacian() const;

  bool operator==(const Graph&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Each pair joins independently with probability p_c; whole graphs are
/// redrawn until connected. Throws std::runtime_error after 1000 misses.
Graph build_erdos_renyi(std::size_t n, double p_c, Rng& rng);
Graph build_ring(std::size_t n);
Graph build_path(std::size_t n);
Graph build_complete(std::size_t n);

inline constexpr int kMaxConnectivityResamples = 1000;

/// Edge-list text: header `n=<count>` then one `i j` pair per line, 0-indexed.
void write_edge_list(std::ostream& out, const Graph& g);
Graph read_edge_list(std::istream& in);

/// Symmetric gossip weights with cached spectrum (descending).
class MixingMatrix {
 public:
  /// Requires a square symmetric matrix; throws std::invalid_argument otherwise.
  explicit MixingMatrix(Eigen::MatrixXd weights);

  const Eigen::MatrixXd& weights() const { return weights_; }
  std::size_t size() const { return static_cast<std::size_t>(weights_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  /// lambda_1 >= ... >= lambda_n.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  double lambda_min() const { return eigenvalues_(eigenvalues_.size() - 1); }
  /// max{|lambda_2|, |lambda_n|}; 0 for n = 1.
  double beta() const { return beta_; }
  double spectral_gap() const { return 1.0 - beta_; }

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd eigenvalues_;
  double beta_ = 0.0;
};

/// Largest Laplacian eigenvalue.
double laplacian_lambda_max(const Graph& g);

/// W = I - L / kappa. Rejects kappa <= lambda_max(L) / 2.
MixingMatrix laplacian_mixing(const Graph& g, double kappa);

/// (1 + margin) * lambda_max(L) / 2.
double default_kappa(const Graph& g, double margin = 0.2);

/// W_eps = (1 - eps) I + eps W, eps in (0, 1].
MixingMatrix lazy_mixing(const MixingMatrix& w, double eps);

/// eps <= 1 / (1 - lambda_n(W)): the range in which eigenvalue order is kept
/// and beta_eps = 1 - eps (1 - lambda_2(W)).
bool lazy_eigen_monotone(const MixingMatrix& w, double eps);
double lazy_beta(const MixingMatrix& w, double eps);

struct InvariantCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SpectralReport {
  std::vector<InvariantCheck> checks;
  Eigen::VectorXd eigenvalues;  // descending (real parts if W is not symmetric)
  double beta = 0.0;
  double spectral_gap = 0.0;
  int unit_eigenvalue_multiplicity = 0;

  bool passed() const;
  const InvariantCheck* find(const std::string& name) const;
};

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kUnitEigenvalueTolerance = 1e-10;

/// Checks the gossip-matrix assumptions on an arbitrary square matrix.
/// Eigenvalue conditions are decided with kUnitEigenvalueTolerance slack.
/// When `support` is given, also checks w_ij = 0 off the edge set.
SpectralReport validate_mixing(const Eigen::MatrixXd& w, const Graph* support = nullptr);
inline SpectralReport validate_mixing(const MixingMatrix& w, const Graph* support = nullptr) {
  return validate_mixing(w.weights(), support);
}

std::string format_report(const SpectralReport& report);

}  // namespace quantimed
