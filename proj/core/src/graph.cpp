#include "etmg/graph.hpp"

#include <queue>
#include <sstream>

#include "etmg/errors.hpp"

namespace etmg {

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out << ", ";
    out << ids[i];
  }
  return out.str();
}

}  // namespace

DirectedGraph::DirectedGraph(int node_count, std::vector<std::pair<int, int>> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  if (node_count_ <= 0) {
    throw ConfigError("graph must have at least one node");
  }
  for (std::size_t j = 0; j < edges_.size(); ++j) {
    const auto [src, dst] = edges_[j];
    if (src < 0 || src >= node_count_ || dst < 0 || dst >= node_count_) {
      std::ostringstream msg;
      msg << "edge " << j << " references node outside [0, " << node_count_ << ")";
      throw ConfigError(msg.str());
    }
    if (src == dst) {
      std::ostringstream msg;
      msg << "edge " << j << " is a self loop at node " << src;
      throw ConfigError(msg.str());
    }
  }

  // Connectivity over the undirected view, BFS from node 0.
  std::vector<std::vector<int>> adjacency(node_count_);
  for (const auto& [src, dst] : edges_) {
    adjacency[src].push_back(dst);
    adjacency[dst].push_back(src);
  }
  std::vector<bool> seen(node_count_, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  while (!frontier.empty()) {
    const int node = frontier.front();
    frontier.pop();
    for (int next : adjacency[node]) {
      if (!seen[next]) {
        seen[next] = true;
        frontier.push(next);
      }
    }
  }
  std::vector<int> unreachable;
  for (int node = 0; node < node_count_; ++node) {
    if (!seen[node]) unreachable.push_back(node);
  }
  if (!unreachable.empty()) {
    throw ConfigError("graph is disconnected; nodes {" + join_ids(unreachable) +
                      "} are not reachable from node 0");
  }
}

Eigen::MatrixXd build_incidence(const DirectedGraph& g) {
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(g.node_count(), g.edge_count());
  for (int j = 0; j < g.edge_count(); ++j) {
    F(g.source(j), j) = -1.0;
    F(g.sink(j), j) = 1.0;
  }
  return F;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_incidence(const Eigen::MatrixXd& F) {
  const Eigen::MatrixXd abs = F.cwiseAbs();
  return {0.5 * (F + abs), 0.5 * (abs - F)};
}

std::pair<std::vector<int>, std::vector<int>> in_out_edge_sets(const DirectedGraph& g, int node) {
  if (node < 0 || node >= g.node_count()) {
    std::ostringstream msg;
    msg << "node " << node << " outside [0, " << g.node_count() << ")";
    throw ConfigError(msg.str());
  }
  std::vector<int> incoming;
  std::vector<int> outgoing;
  for (int j = 0; j < g.edge_count(); ++j) {
    if (g.sink(j) == node) incoming.push_back(j);
    if (g.source(j) == node) outgoing.push_back(j);
  }
  return {incoming, outgoing};
}

}  // namespace etmg
