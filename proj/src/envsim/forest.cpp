#include "tiva/envsim/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "tiva/core/errors.hpp"
#include "tiva/core/parallel.hpp"
#include "tiva/core/random.hpp"

namespace tiva::envsim {

void ForestConfig::validate() const {
  if (n_trees < 1) throw ConfigError("forest needs at least one tree");
  if (min_leaf < 1) throw ConfigError("forest min_leaf must be >= 1");
  if (segment_length < 1) throw ConfigError("forest segment_length must be >= 1");
}

nlohmann::json to_json(const ForestConfig& c) {
  return {{"n_trees", c.n_trees},       {"max_depth", c.max_depth},
          {"min_leaf", c.min_leaf},     {"max_features", c.max_features},
          {"bootstrap", c.bootstrap},   {"segment_length", c.segment_length},
          {"seed", c.seed}};
}

ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig c) {
  try {
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_leaf = j.value("min_leaf", c.min_leaf);
    c.max_features = j.value("max_features", c.max_features);
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.segment_length = j.value("segment_length", c.segment_length);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("forest config: ") + e.what());
  }
  c.validate();
  return c;
}

const double* Tree::leaf(std::span<const double> x) const {
  int node = 0;
  while (feature[node] >= 0) {
    node = x[feature[node]] <= threshold[node] ? left[node] : right[node];
  }
  return values.data() + value_offset[node];
}

namespace {

struct Task {
  int node;
  int begin;
  int end;
  int depth;
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const Matrix& Y, const ForestConfig& cfg,
              std::uint64_t seed, std::vector<double>& importance)
      : X_(X), Y_(Y), cfg_(cfg), rng_(seed), importance_(importance) {}

  Tree build(const std::vector<int>& segments) {
    draw_rows(segments);
    tree_ = Tree{};
    std::vector<Task> stack;
    stack.push_back({new_node(), 0, static_cast<int>(rows_.size()), 0});
    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      const SplitChoice split = find_split(task);
      if (split.feature < 0) {
        make_leaf(task);
        continue;
      }
      auto first = rows_.begin() + task.begin;
      auto last = rows_.begin() + task.end;
      auto mid = std::stable_partition(first, last, [&](int r) {
        return X_.at(r, split.feature) <= split.threshold;
      });
      const int m = static_cast<int>(mid - rows_.begin());
      importance_[split.feature] += split.gain;
      const int l = new_node();
      const int r = new_node();
      tree_.feature[task.node] = split.feature;
      tree_.threshold[task.node] = split.threshold;
      tree_.left[task.node] = l;
      tree_.right[task.node] = r;
      // Right first so the left subtree is expanded first.
      stack.push_back({r, m, task.end, task.depth + 1});
      stack.push_back({l, task.begin, m, task.depth + 1});
    }
    return std::move(tree_);
  }

 private:
  void draw_rows(const std::vector<int>& segments) {
    const int n = X_.rows;
    rows_.clear();
    rows_.reserve(n);
    if (!cfg_.bootstrap) {
      rows_.resize(n);
      std::iota(rows_.begin(), rows_.end(), 0);
      return;
    }
    std::uniform_int_distribution<int> pick(0, n - 1);
    while (static_cast<int>(rows_.size()) < n) {
      const int r = pick(rng_);
      auto it = std::upper_bound(segments.begin(), segments.end(), r);
      const int seg_begin = *(it - 1);
      const int seg_end = it == segments.end() ? n : *it;
      const int start = std::max(seg_begin, std::min(r, seg_end - cfg_.segment_length));
      const int stop = std::min({start + cfg_.segment_length, seg_end,
                                 start + n - static_cast<int>(rows_.size())});
      for (int k = start; k < stop; ++k) rows_.push_back(k);
    }
  }

  int new_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value_offset.push_back(-1);
    return tree_.node_count() - 1;
  }

  void make_leaf(const Task& task) {
    const int q = Y_.cols;
    const int n = task.end - task.begin;
    tree_.value_offset[task.node] = static_cast<int>(tree_.values.size());
    std::vector<double> sum(q, 0.0);
    for (int i = task.begin; i < task.end; ++i) {
      const auto y = Y_.row(rows_[i]);
      for (int k = 0; k < q; ++k) sum[k] += y[k];
    }
    for (int k = 0; k < q; ++k) tree_.values.push_back(sum[k] / n);
  }

  SplitChoice find_split(const Task& task) {
    SplitChoice best;
    const int n = task.end - task.begin;
    const int p = X_.cols;
    const int q = Y_.cols;
    if (cfg_.max_depth > 0 && task.depth >= cfg_.max_depth) return best;
    if (n < 2 * cfg_.min_leaf) return best;

    // Node impurity, two-pass for accuracy.
    std::vector<double> total(q, 0.0);
    for (int i = task.begin; i < task.end; ++i) {
      const auto y = Y_.row(rows_[i]);
      for (int k = 0; k < q; ++k) total[k] += y[k];
    }
    double sse = 0.0;
    for (int i = task.begin; i < task.end; ++i) {
      const auto y = Y_.row(rows_[i]);
      for (int k = 0; k < q; ++k) {
        const double d = y[k] - total[k] / n;
        sse += d * d;
      }
    }
    if (sse <= 1e-14 * n) return best;
    double parent_score = 0.0;
    for (int k = 0; k < q; ++k) parent_score += total[k] * total[k] / n;
    const double min_gain = 1e-12 * sse;

    // Candidate features: a random subset first, then the rest if none of
    // them yields a valid split.
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    const int m = (cfg_.max_features <= 0 || cfg_.max_features >= p) ? p : cfg_.max_features;
    for (int i = 0; i < m; ++i) {
      std::uniform_int_distribution<int> d(i, p - 1);
      std::swap(order[i], order[d(rng_)]);
    }
    std::sort(order.begin(), order.begin() + m);
    std::sort(order.begin() + m, order.end());

    std::vector<std::pair<double, int>> vals(n);
    std::vector<double> left_sum(q);
    for (int c = 0; c < p; ++c) {
      if (c == m && best.feature >= 0) break;
      const int f = order[c];
      for (int i = 0; i < n; ++i) {
        const int r = rows_[task.begin + i];
        vals[i] = {X_.at(r, f), r};
      }
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      for (int i = 0; i < n - cfg_.min_leaf; ++i) {
        const auto y = Y_.row(vals[i].second);
        for (int k = 0; k < q; ++k) left_sum[k] += y[k];
        const int nl = i + 1;
        if (nl < cfg_.min_leaf) continue;
        if (!(vals[i].first < vals[i + 1].first)) continue;
        const int nr = n - nl;
        double score = 0.0;
        for (int k = 0; k < q; ++k) {
          const double rs = total[k] - left_sum[k];
          score += left_sum[k] * left_sum[k] / nl + rs * rs / nr;
        }
        const double gain = score - parent_score;
        if (gain > best.gain && gain > min_gain) {
          double thr = 0.5 * (vals[i].first + vals[i + 1].first);
          if (!(thr < vals[i + 1].first)) thr = vals[i].first;
          best = {f, thr, gain};
        }
      }
    }
    return best;
  }

  const Matrix& X_;
  const Matrix& Y_;
  const ForestConfig& cfg_;
  std::mt19937_64 rng_;
  std::vector<double>& importance_;
  std::vector<int> rows_;
  Tree tree_;
};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated forest data");
  return v;
}

template <typename T>
std::vector<T> get_vec(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw DataError("corrupt forest data");
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw DataError("truncated forest data");
  return v;
}

constexpr char kForestMagic[8] = {'T', 'I', 'V', 'A', 'F', 'R', 'S', '1'};

}  // namespace

Forest Forest::fit(const Matrix& X, const Matrix& Y, const std::vector<int>& segments,
                   const ForestConfig& config) {
  config.validate();
  if (X.rows == 0 || X.rows != Y.rows || X.cols == 0 || Y.cols == 0) {
    throw ConfigError("forest fit needs matching, non-empty X and Y");
  }
  std::vector<int> segs = segments.empty() ? std::vector<int>{0} : segments;
  if (segs.front() != 0 || !std::is_sorted(segs.begin(), segs.end()) ||
      segs.back() >= X.rows) {
    throw ConfigError("forest segments must start at 0 and be ascending row indices");
  }
  Forest forest;
  forest.config_ = config;
  forest.config_.jobs = 1;
  forest.n_features_ = X.cols;
  forest.n_outputs_ = Y.cols;
  forest.trees_.resize(config.n_trees);
  std::vector<std::vector<double>> importance(config.n_trees,
                                              std::vector<double>(X.cols, 0.0));
  parallel_for(config.n_trees, config.jobs, [&](int b) {
    TreeBuilder builder(X, Y, config, derive_seed(config.seed, static_cast<std::uint64_t>(b)),
                        importance[b]);
    forest.trees_[b] = builder.build(segs);
  });
  forest.raw_importance_.assign(X.cols, 0.0);
  for (const auto& imp : importance) {
    for (int f = 0; f < X.cols; ++f) forest.raw_importance_[f] += imp[f];
  }
  return forest;
}

void Forest::predict_into(std::span<const double> x, std::span<double> out) const {
  if (!fitted()) throw ConfigError("forest used before fit");
  if (static_cast<int>(x.size()) != n_features_ || static_cast<int>(out.size()) != n_outputs_) {
    throw DomainError("forest predict: dimension mismatch");
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& tree : trees_) {
    const double* leaf = tree.leaf(x);
    for (int k = 0; k < n_outputs_; ++k) out[k] += leaf[k];
  }
  const double inv = static_cast<double>(trees_.size());
  for (auto& v : out) v /= inv;
}

std::vector<double> Forest::predict(std::span<const double> x) const {
  std::vector<double> out(n_outputs_);
  predict_into(x, out);
  return out;
}

std::vector<double> Forest::predict_tree(int tree, std::span<const double> x) const {
  if (!fitted()) throw ConfigError("forest used before fit");
  if (static_cast<int>(x.size()) != n_features_) {
    throw DomainError("forest predict: dimension mismatch");
  }
  const double* leaf = trees_.at(tree).leaf(x);
  return {leaf, leaf + n_outputs_};
}

std::vector<double> Forest::feature_importance() const {
  std::vector<double> imp = raw_importance_;
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : imp) v /= total;
  }
  return imp;
}

void Forest::write(std::ostream& out) const {
  out.write(kForestMagic, sizeof(kForestMagic));
  const std::string header = nlohmann::json{{"config", to_json(config_)},
                                            {"n_features", n_features_},
                                            {"n_outputs", n_outputs_},
                                            {"n_trees", trees_.size()}}
                                 .dump();
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_vec(out, raw_importance_);
  for (const auto& t : trees_) {
    put_vec(out, t.feature);
    put_vec(out, t.threshold);
    put_vec(out, t.left);
    put_vec(out, t.right);
    put_vec(out, t.value_offset);
    put_vec(out, t.values);
  }
  if (!out) throw DataError("failed writing forest");
}

Forest Forest::read(std::istream& in) {
  char magic[sizeof(kForestMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kForestMagic, sizeof(magic)) != 0) {
    throw DataError("not a forest model (bad magic)");
  }
  const auto len = get<std::uint64_t>(in);
  if (len > (1 << 20)) throw DataError("corrupt forest header");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated forest header");
  Forest f;
  try {
    const auto h = nlohmann::json::parse(header);
    f.config_ = forest_config_from_json(h.at("config"));
    f.n_features_ = h.at("n_features").get<int>();
    f.n_outputs_ = h.at("n_outputs").get<int>();
    f.trees_.resize(h.at("n_trees").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt forest header: ") + e.what());
  }
  f.raw_importance_ = get_vec<double>(in);
  for (auto& t : f.trees_) {
    t.feature = get_vec<int>(in);
    t.threshold = get_vec<double>(in);
    t.left = get_vec<int>(in);
    t.right = get_vec<int>(in);
    t.value_offset = get_vec<int>(in);
    t.values = get_vec<double>(in);
    const std::size_t n = t.feature.size();
    if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n ||
        t.value_offset.size() != n) {
      throw DataError("corrupt forest tree");
    }
  }
  return f;
}

}  // namespace tiva::envsim
