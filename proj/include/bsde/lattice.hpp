#pragma once

/// Non-recombining binary scenario trees for a one-dimensional driving noise,
/// together with adapted node processes, exact change-of-measure reweighting
/// and deterministic expectation/conditional-expectation kernels.
///
/// Conventions shared by every module built on top of this one:
///  * uniform grid t_k = k*dt, dt = horizon/steps;
///  * each node at level k has two children; child 0 carries the increment
///    +sqrt(dt), child 1 carries -sqrt(dt); reference probability 1/2 each;
///  * node ids are level-major: id = (2^k - 1) + j, j in [0, 2^k);
///  * all reductions run in a fixed level-by-level pairwise order (children
///    combined in child order, nodes left to right), which makes every
///    expectation bit-reproducible and independent of the worker count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bsde {

struct TimeGrid {
  double horizon = 1.0;   // T
  int steps = 0;          // number of increments
  double dt = 0.0;
  double sqrt_dt = 0.0;
  std::vector<double> t;  // grid points, size steps + 1
};

class ScenarioTree {
 public:
  static constexpr int kDefaultDepthCap = 16;

  const TimeGrid& grid() const { return grid_; }
  int depth() const { return grid_.steps; }
  double dt() const { return grid_.dt; }
  double sqrt_dt() const { return grid_.sqrt_dt; }

  std::size_t node_count() const { return w_.size(); }
  std::size_t leaf_count() const { return std::size_t{1} << depth(); }
  std::size_t nonleaf_count() const { return level_begin(depth()); }

  std::size_t level_begin(int k) const { return (std::size_t{1} << k) - 1; }
  std::size_t level_size(int k) const { return std::size_t{1} << k; }
  std::size_t leaf_begin() const { return level_begin(depth()); }

  int level_of(std::size_t id) const;
  std::size_t parent(std::size_t id) const { return (id - 1) / 2; }
  std::size_t child(std::size_t id, int c) const { return 2 * id + 1 + c; }
  bool is_leaf(std::size_t id) const { return id >= leaf_begin(); }

  /// Increment carried by the edge into child c of any node.
  double edge_dw(int c) const { return c == 0 ? grid_.sqrt_dt : -grid_.sqrt_dt; }

  /// Brownian value accumulated along the path to a node.
  double w(std::size_t id) const { return w_[id]; }

  /// Writes one row per node: node_id,level,parent,dW,prob (reference).
  void dump_csv(const std::string& path) const;

  friend ScenarioTree build_tree(double horizon, int steps, int depth_cap);

 private:
  TimeGrid grid_;
  std::vector<double> w_;
};

/// Builds the full non-recombining binary tree. Throws SizeError when steps
/// exceeds the depth cap (node storage grows like 2^steps) and on
/// non-positive horizon/steps.
ScenarioTree build_tree(double horizon, int steps,
                        int depth_cap = ScenarioTree::kDefaultDepthCap);

enum class ProcessRole : std::uint8_t { value, control, delta, gamma, density, kernel };

/// One scalar per node; measurability is structural (a node is its own
/// path history). Control-type processes are only ever read on non-leaf
/// nodes; leaf entries are kept for uniform indexing and stay untouched.
struct AdaptedProcess {
  ProcessRole role = ProcessRole::value;
  std::vector<double> v;

  double& operator[](std::size_t id) { return v[id]; }
  double operator[](std::size_t id) const { return v[id]; }
  std::size_t size() const { return v.size(); }
};

AdaptedProcess make_process(const ScenarioTree& tree, ProcessRole role,
                            double init = 0.0);

/// Equivalent measure produced by a predictable reweighting kernel q:
/// edge probabilities p(+/-) = (1 +/- q*sqrt(dt))/2, so the conditional mean
/// of the increment at a node is q*dt. Probabilities of sibling edges are
/// exact complements and the density satisfies the pairwise martingale
/// identity v_up + v_down = 2 v bit-exactly.
struct GirsanovMeasure {
  std::vector<double> p_up;   // per node (leaf entries unused)
  std::vector<double> p_dn;   // exact complement of p_up
  AdaptedProcess density;     // v, running product of p_edge / (1/2)
  AdaptedProcess kernel;      // q per non-leaf node
  bool deterministic = false; // kernel depends on the level only
  std::vector<double> kernel_levels;  // per-level q when deterministic

  double p(std::size_t id, int c) const { return c == 0 ? p_up[id] : p_dn[id]; }
};

/// Reference measure expressed in the same structure (q = 0, p = 1/2, v = 1).
GirsanovMeasure reference_measure(const ScenarioTree& tree);

/// Reweights by a node-wise kernel. Throws KernelError unless
/// |q(n)|*sqrt(dt) < 1 at every non-leaf node.
GirsanovMeasure girsanov_reweight(const ScenarioTree& tree,
                                  const AdaptedProcess& q);

/// Reweights by a deterministic (per-level) kernel, size = depth.
GirsanovMeasure girsanov_reweight(const ScenarioTree& tree,
                                  std::span<const double> q_levels);

/// Expectation of leaf-indexed values (size 2^depth) under the measure.
double expectation(const ScenarioTree& tree, std::span<const double> leaf_x,
                   const GirsanovMeasure& mu);
/// Reference-measure overload.
double expectation(const ScenarioTree& tree, std::span<const double> leaf_x);

/// Expectation of values given at a single level (size 2^level).
double expectation_at_level(const ScenarioTree& tree, int level,
                            std::span<const double> x,
                            const GirsanovMeasure& mu);

/// One backward step: values at level k+1 (size 2^(k+1)) -> values at level k.
std::vector<double> conditional_expectation(const ScenarioTree& tree,
                                            int level_from,
                                            std::span<const double> x,
                                            const GirsanovMeasure& mu);

struct SupermartingaleReport {
  bool ok = true;
  std::size_t worst_node = 0;
  double worst_slack = 0.0;  // min over nodes of Y(n) - E_mu[Y(child)|n]
};

/// Checks Y(n) >= E_mu[Y(child)|n] - tol at every non-leaf node.
SupermartingaleReport is_supermartingale(const ScenarioTree& tree,
                                         const AdaptedProcess& y,
                                         const GirsanovMeasure& mu,
                                         double tol = 1e-12);

}  // namespace bsde
