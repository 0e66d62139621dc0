#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace etmg {

/// Directed graph with stable integer node/edge ids.
///
/// Node ids are 0..node_count-1, edge ids are positions in the edge list.
/// Parallel edges are allowed, self loops are not. The graph must be
/// connected (in the undirected sense); this is checked on construction so
/// that matrix assembly downstream can rely on it.
class DirectedGraph {
 public:
  DirectedGraph(int node_count, std::vector<std::pair<int, int>> edges);

  int node_count() const { return node_count_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  int source(int edge) const { return edges_[edge].first; }
  int sink(int edge) const { return edges_[edge].second; }

 private:
  int node_count_;
  std::vector<std::pair<int, int>> edges_;
};

/// Node-edge incidence matrix: +1 where the node is the sink of the edge,
/// -1 where it is the source, 0 elsewhere. Rows are nodes, columns edges.
Eigen::MatrixXd build_incidence(const DirectedGraph& g);

/// Splits an incidence matrix into nonnegative parts with
/// F_plus = (F + |F|)/2 and F_minus = (|F| - F)/2, so F_plus - F_minus = F.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_incidence(const Eigen::MatrixXd& F);

/// Edge ids incident to `node`, partitioned by orientation.
/// Returns (incoming, outgoing), each sorted ascending.
std::pair<std::vector<int>, std::vector<int>> in_out_edge_sets(const DirectedGraph& g, int node);

}  // namespace etmg
