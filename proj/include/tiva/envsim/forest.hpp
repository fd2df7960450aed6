#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

namespace tiva::envsim {

// Row-major dense matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}
  std::span<double> row(int i) { return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 12;    // <= 0 means unlimited
  int min_leaf = 5;
  int max_features = 5;  // candidates per split; <= 0 or >= p means all
  bool bootstrap = true;
  int segment_length = 32;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
  bool operator==(const ForestConfig&) const = default;
};

nlohmann::json to_json(const ForestConfig& c);
ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig defaults = {});

// One regression tree stored as parallel node arrays. Leaves have
// feature == -1 and own `n_outputs` consecutive entries of `values`.
struct Tree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<int> value_offset;
  std::vector<double> values;

  int node_count() const { return static_cast<int>(feature.size()); }
  // Pointer to the leaf vector reached by x; x[f] <= threshold goes left.
  const double* leaf(std::span<const double> x) const;
  bool operator==(const Tree&) const = default;
};

class Forest {
 public:
  // `segments` lists the first row of each contiguous trajectory in X
  // (ascending, starting at 0); bootstrap draws never cross them.
  static Forest fit(const Matrix& X, const Matrix& Y, const std::vector<int>& segments,
                    const ForestConfig& config);

  bool fitted() const { return !trees_.empty(); }
  int n_features() const { return n_features_; }
  int n_outputs() const { return n_outputs_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const ForestConfig& config() const { return config_; }

  // Mean of the trees' leaf vectors. Throws DomainError on a dimension
  // mismatch and ConfigError when unfitted.
  std::vector<double> predict(std::span<const double> x) const;
  void predict_into(std::span<const double> x, std::span<double> out) const;
  std::vector<double> predict_tree(int tree, std::span<const double> x) const;

  // Impurity decrease per feature summed over trees and outputs, normalized
  // to sum 1 (all zeros when no tree ever split).
  std::vector<double> feature_importance() const;

  void write(std::ostream& out) const;
  static Forest read(std::istream& in);
  bool operator==(const Forest&) const = default;

 private:
  std::vector<Tree> trees_;
  std::vector<double> raw_importance_;
  ForestConfig config_;
  int n_features_ = 0;
  int n_outputs_ = 0;
};

}  // namespace tiva::envsim
