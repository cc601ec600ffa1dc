#pragma once

// Hierarchical semantic tree: recursive L-way spectral clustering of tiles
// under the rotation-searched descriptor distance, and randomized best-child
// traversal at query time.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/matcher.hpp"
#include "semloc/parallel.hpp"

namespace semloc {

/// D(i, j) = min_rotation_distance(desc_i, desc_j) under a full mask.
inline Eigen::MatrixXd pairwise_distance_matrix(std::span<const SslDescriptor> descs) {
  const auto n = static_cast<Eigen::Index>(descs.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  if (n == 0) return d;
  const FovMask mask = full_mask(descs[0].n_rings, descs[0].n_sectors);
  parallel_for(descs.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < descs.size(); ++j) {
      if (i == j) continue;
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = min_rotation_distance(descs[i], descs[j], mask).distance;
    }
  });
  return d;
}

struct SpectralOptions {
  int restarts = 50;
  int max_iterations = 100;
  std::uint64_t seed = 1;
};

namespace detail {

// Lloyd iterations from k-means++ seeds; best of `restarts` by inertia.
inline std::vector<int> kmeans(const Eigen::MatrixXd& x, int k, const SpectralOptions& opt) {
  const Eigen::Index n = x.rows();
  std::mt19937_64 rng(opt.seed);
  std::vector<int> best_labels(static_cast<std::size_t>(n), 0);
  double best_inertia = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < opt.restarts; ++restart) {
    Eigen::MatrixXd centers(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = x.row(pick(rng));
    Eigen::VectorXd d2(n);
    for (int c = 1; c < k; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) m = std::min(m, (x.row(i) - centers.row(j)).squaredNorm());
        d2(i) = m;
      }
      const double total = d2.sum();
      Eigen::Index chosen = pick(rng);
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double t = u(rng);
        for (chosen = 0; chosen < n - 1 && t >= d2(chosen); ++chosen) t -= d2(chosen);
      }
      centers.row(c) = x.row(chosen);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int it = 0; it < opt.max_iterations; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int arg = 0;
        double m = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double v = (x.row(i) - centers.row(c)).squaredNorm();
          if (v < m) {
            m = v;
            arg = c;
          }
        }
        inertia += m;
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

// Moves the member farthest from its centre out of the largest cluster into
// each empty cluster until all k clusters are populated.
inline void fill_empty_clusters(const Eigen::MatrixXd& x, std::vector<int>& labels, int k) {
  for (;;) {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    const auto empty = std::find(counts.begin(), counts.end(), 0);
    if (empty == counts.end()) return;
    const int target = static_cast<int>(empty - counts.begin());
    const int donor = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    Eigen::RowVectorXd center = Eigen::RowVectorXd::Zero(x.cols());
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == donor) center += x.row(static_cast<Eigen::Index>(i));
    center /= counts[static_cast<std::size_t>(donor)];
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != donor) continue;
      const double v = (x.row(static_cast<Eigen::Index>(i)) - center).squaredNorm();
      if (v > far_d) {
        far_d = v;
        far = i;
      }
    }
    labels[far] = target;
  }
}

// Renames clusters in order of their first member.
inline void canonicalize_labels(std::vector<int>& labels, int k) {
  std::vector<int> rename(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& l : labels) {
    if (rename[static_cast<std::size_t>(l)] < 0) rename[static_cast<std::size_t>(l)] = next++;
    l = rename[static_cast<std::size_t>(l)];
  }
}

}  // namespace detail

/// Partitions N items into L nonempty groups by spectral clustering of the
/// (symmetrised) distance matrix.
///
/// Affinity exp(-S^2 / (2 sigma^2)), sigma the median positive off-diagonal
/// distance; symmetric normalised Laplacian; the L-1 eigenvectors after the
/// trivial one (rescaled by D^-1/2) form the embedding clustered by k-means.
inline std::vector<int> spectral_split(const Eigen::MatrixXd& dist, int branches, const SpectralOptions& opt = {}) {
  const Eigen::Index n = dist.rows();
  if (dist.cols() != n) throw ParameterError("distance matrix must be square");
  if (branches < 2) throw ParameterError("spectral_split needs at least two branches");
  if (n < branches) throw ParameterError("spectral_split: fewer items than branches");
  std::vector<int> labels(static_cast<std::size_t>(n));
  if (n == branches) {
    std::iota(labels.begin(), labels.end(), 0);
    return labels;
  }

  const Eigen::MatrixXd s = 0.5 * (dist + dist.transpose());
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (s(i, j) > 0.0) off.push_back(s(i, j));
  if (off.empty()) {
    // Every item identical: any balanced labelling will do.
    for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % branches);
    return labels;
  }
  std::nth_element(off.begin(), off.begin() + static_cast<std::ptrdiff_t>(off.size() / 2), off.end());
  const double sigma = off[off.size() / 2];

  const Eigen::MatrixXd affinity = (-s.array().square() / (2.0 * sigma * sigma)).exp().matrix();
  const Eigen::VectorXd inv_sqrt_deg = affinity.rowwise().sum().array().rsqrt();
  Eigen::MatrixXd lap = -(inv_sqrt_deg.asDiagonal() * affinity * inv_sqrt_deg.asDiagonal());
  lap.diagonal().array() += 1.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (lap + lap.transpose()));
  if (es.info() != Eigen::Success) throw DomainError("eigendecomposition of the graph Laplacian failed");
  Eigen::MatrixXd embed = inv_sqrt_deg.asDiagonal() * es.eigenvectors().middleCols(1, branches - 1);
  // Make the embedding scale-free so k-means behaves the same at every tree level.
  const double scale = embed.cwiseAbs().maxCoeff();
  if (scale > 0.0) embed /= scale;

  labels = detail::kmeans(embed, branches, opt);
  detail::fill_empty_clusters(embed, labels, branches);
  detail::canonicalize_labels(labels, branches);
  return labels;
}

struct TreeNode {
  int id = 0;
  int layer = 0;
  int parent = -1;
  std::vector<int> children;
  std::vector<int> tiles;  // positions in the tile list the tree was built from

  bool leaf() const { return children.empty(); }
};

struct SemanticTree {
  int branches = 3;
  int leaf_capacity = 8;
  std::vector<TreeNode> nodes;  // nodes[0] is the root; breadth-first order

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.layer);
    return d;
  }
  std::size_t tile_count() const { return nodes.empty() ? 0 : nodes[0].tiles.size(); }
};

/// Recursive spectral splitting until every node holds at most leaf_capacity tiles.
inline SemanticTree build_tree(const Eigen::MatrixXd& dist, int branches, int leaf_capacity, std::uint64_t seed = 1) {
  if (branches < 2) throw ParameterError("tree needs at least two branches");
  if (leaf_capacity < 1) throw ParameterError("leaf capacity must be at least 1");
  const auto n = static_cast<int>(dist.rows());
  if (n < 1) throw ParameterError("tree needs at least one tile");

  SemanticTree tree;
  tree.branches = branches;
  tree.leaf_capacity = leaf_capacity;
  TreeNode root;
  root.tiles.resize(static_cast<std::size_t>(n));
  std::iota(root.tiles.begin(), root.tiles.end(), 0);
  tree.nodes.push_back(std::move(root));

  for (std::size_t cur = 0; cur < tree.nodes.size(); ++cur) {
    const std::vector<int> members = tree.nodes[cur].tiles;
    const auto m = static_cast<int>(members.size());
    if (m <= leaf_capacity) continue;
    const int k = std::min(branches, m);
    Eigen::MatrixXd sub(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) sub(i, j) = dist(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(j)]);
    SpectralOptions opt;
    opt.seed = seed + cur;
    const std::vector<int> labels = spectral_split(sub, k, opt);
    for (int c = 0; c < k; ++c) {
      TreeNode child;
      child.id = static_cast<int>(tree.nodes.size());
      child.layer = tree.nodes[cur].layer + 1;
      child.parent = static_cast<int>(cur);
      for (int i = 0; i < m; ++i)
        if (labels[static_cast<std::size_t>(i)] == c) child.tiles.push_back(members[static_cast<std::size_t>(i)]);
      tree.nodes[cur].children.push_back(child.id);
      tree.nodes.push_back(std::move(child));
    }
  }
  return tree;
}

inline SemanticTree build_tree(std::span<const SslDescriptor> descs, int branches, int leaf_capacity, std::uint64_t seed = 1) {
  return build_tree(pairwise_distance_matrix(descs), branches, leaf_capacity, seed);
}

/// For every tile, the id of the node containing it at `layer` (its leaf when
/// the branch ends earlier).
inline std::vector<int> layer_assignment(const SemanticTree& tree, int layer) {
  std::vector<int> out(tree.tile_count(), -1);
  for (const auto& node : tree.nodes) {
    if (node.layer == layer || (node.leaf() && node.layer < layer))
      for (int t : node.tiles) out[static_cast<std::size_t>(t)] = node.id;
  }
  return out;
}

enum class SamplingMode {
  PerLevel,  // M tiles per expanded node, spread over its children
  PerChild,  // M tiles from every child
};

struct TraversalBudget {
  int samples = 5;  // M
  std::uint64_t seed = 1;
  int spill = 1;  // children kept per level (1 = greedy descent)
  SamplingMode mode = SamplingMode::PerLevel;
};

struct TreeSearchResult {
  MatchResult best;
  std::size_t comparisons = 0;         // distinct descriptor comparisons
  std::vector<MatchResult> scored;     // every tile scored, ranked
  std::vector<int> path;               // node ids visited on the greedy path
};

namespace detail {

inline std::vector<int> sampling_quotas(const SemanticTree& tree, const TreeNode& node, const TraversalBudget& b) {
  const std::size_t c = node.children.size();
  std::vector<int> quota(c, b.samples);
  if (b.mode == SamplingMode::PerLevel) {
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t z) {
      return tree.nodes[static_cast<std::size_t>(node.children[a])].tiles.size() >
             tree.nodes[static_cast<std::size_t>(node.children[z])].tiles.size();
    });
    const int base = b.samples / static_cast<int>(c);
    const int extra = b.samples % static_cast<int>(c);
    for (std::size_t r = 0; r < c; ++r) quota[order[r]] = base + (static_cast<int>(r) < extra ? 1 : 0);
  }
  for (std::size_t i = 0; i < c; ++i) {
    const auto size = static_cast<int>(tree.nodes[static_cast<std::size_t>(node.children[i])].tiles.size());
    quota[i] = std::clamp(quota[i], 1, size);
  }
  return quota;
}

}  // namespace detail

/// Descends from the root, choosing at every level the child whose best
/// randomly sampled tile is closest to the query, then scans the leaf.
/// The result is the best tile scored along the way.
inline TreeSearchResult tree_search(const SemanticTree& tree, std::span<const IndexedTile> tiles, const SslDescriptor& query,
                                    const FovMask& mask, const RankParams& params, const TraversalBudget& budget) {
  if (budget.samples < 1) throw ParameterError("traversal budget needs M >= 1");
  if (budget.spill < 1) throw ParameterError("spill width must be at least 1");
  if (tree.nodes.empty() || tree.tile_count() != tiles.size()) throw ContractError("tree does not match the tile list");

  std::mt19937_64 rng(budget.seed);
  std::vector<double> cache(tiles.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<MatchResult> scored;
  TreeSearchResult out;

  auto score = [&](int t) {
    const auto i = static_cast<std::size_t>(t);
    if (std::isnan(cache[i])) {
      MatchResult r = score_tile(query, mask, tiles[i], params);
      cache[i] = r.distance;
      scored.push_back(r);
    }
    return cache[i];
  };

  std::vector<int> frontier{0};
  out.path.push_back(0);
  for (;;) {
    const bool all_leaves = std::all_of(frontier.begin(), frontier.end(),
                                        [&](int id) { return tree.nodes[static_cast<std::size_t>(id)].leaf(); });
    if (all_leaves) break;
    struct Candidate {
      double dist;
      int node;
    };
    std::vector<Candidate> cands;
    for (int id : frontier) {
      const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
      if (node.leaf()) {
        double best = std::numeric_limits<double>::infinity();
        for (int t : node.tiles) best = std::min(best, score(t));
        cands.push_back({best, id});
        continue;
      }
      const std::vector<int> quota = detail::sampling_quotas(tree, node, budget);
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        const TreeNode& child = tree.nodes[static_cast<std::size_t>(node.children[c])];
        std::vector<int> picked;
        std::sample(child.tiles.begin(), child.tiles.end(), std::back_inserter(picked), quota[c], rng);
        double best = std::numeric_limits<double>::infinity();
        for (int t : picked) best = std::min(best, score(t));
        cands.push_back({best, child.id});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.dist < b.dist || (a.dist == b.dist && a.node < b.node);
    });
    frontier.clear();
    for (std::size_t i = 0; i < cands.size() && i < static_cast<std::size_t>(budget.spill); ++i)
      frontier.push_back(cands[i].node);
    out.path.push_back(frontier.front());
  }
  for (int id : frontier)
    for (int t : tree.nodes[static_cast<std::size_t>(id)].tiles) score(t);

  out.comparisons = scored.size();
  assign_ranks(scored);
  out.best = scored.front();
  out.scored = std::move(scored);
  return out;
}

}  // namespace semloc
