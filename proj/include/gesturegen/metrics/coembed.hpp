#pragma once

// Text-motion co-embedding used by FID, MM-Dist, Div and R-Precision.
// Motion tower: per-clip mean and stddev over time of normalized features,
// then a two-layer MLP. Text tower: two-layer MLP on sentence embeddings.
// Both outputs are L2-normalized; training is symmetric InfoNCE.

#include "gesturegen/metrics/frechet.hpp"
#include "gesturegen/nn/checkpoint.hpp"
#include "gesturegen/nn/optim.hpp"
#include "gesturegen/vae/gesture_vae.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace gesturegen::metrics {

struct CoEmbeddingConfig {
  int feature_dim = 659;
  int text_dim = 512;
  int hidden = 256;
  int embed_dim = 128;
  double temperature = 0.07;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CoEmbeddingConfig, feature_dim, text_dim, hidden, embed_dim, temperature)

struct CoEmbeddingTrainSettings {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CoEmbeddingTrainSettings, epochs, batch_size, lr, seed)

/// Mean and stddev over time, concatenated (1 x 2F).
inline Eigen::RowVectorXd pooled_stats(const motion::FeatureMatrix& f) {
  if (f.rows() < 1) throw std::invalid_argument("pooled_stats: empty clip");
  const Eigen::RowVectorXd mean = f.colwise().mean();
  const Eigen::RowVectorXd sd = ((f.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  Eigen::RowVectorXd out(2 * f.cols());
  out << mean, sd;
  return out;
}

template <typename S>
class CoEmbedding {
 public:
  CoEmbedding(CoEmbeddingConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    std::mt19937_64 rng(seed);
    m1_ = nn::Linear<S>(store_, "coembed.motion.fc1", 2 * cfg_.feature_dim, cfg_.hidden, rng);
    m2_ = nn::Linear<S>(store_, "coembed.motion.fc2", cfg_.hidden, cfg_.embed_dim, rng);
    t1_ = nn::Linear<S>(store_, "coembed.text.fc1", cfg_.text_dim, cfg_.hidden, rng);
    t2_ = nn::Linear<S>(store_, "coembed.text.fc2", cfg_.hidden, cfg_.embed_dim, rng);
    normalizer_ = vae::FeatureNormalizer::identity(cfg_.feature_dim);
  }

  CoEmbedding(const CoEmbedding&) = delete;
  CoEmbedding& operator=(const CoEmbedding&) = delete;
  CoEmbedding(CoEmbedding&&) noexcept = default;
  CoEmbedding& operator=(CoEmbedding&&) noexcept = default;

  [[nodiscard]] const CoEmbeddingConfig& config() const { return cfg_; }
  nn::ParameterStore<S>& parameters() { return store_; }

  nn::Var motion_tower(nn::Graph<S>& g, nn::Var stats) const {
    return g.l2_normalize_rows(m2_(g, g.gelu(m1_(g, stats))));
  }

  nn::Var text_tower(nn::Graph<S>& g, nn::Var text) const {
    return g.l2_normalize_rows(t2_(g, g.gelu(t1_(g, text))));
  }

  [[nodiscard]] Eigen::RowVectorXd motion_stats(const motion::FeatureMatrix& f) const {
    if (f.cols() != cfg_.feature_dim) throw std::invalid_argument("co-embedding: feature width mismatch");
    return pooled_stats(normalizer_.normalize(f));
  }

  [[nodiscard]] SampleMatrix embed_motions(const std::vector<motion::FeatureMatrix>& clips) const {
    if (clips.empty()) return SampleMatrix(0, cfg_.embed_dim);
    nn::Matrix<S> stats(static_cast<Eigen::Index>(clips.size()), 2 * cfg_.feature_dim);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      stats.row(static_cast<Eigen::Index>(i)) = motion_stats(clips[i]).template cast<S>();
    }
    nn::Graph<S> g(false);
    return g.value(motion_tower(g, g.constant(std::move(stats)))).template cast<double>();
  }

  [[nodiscard]] SampleMatrix embed_texts(const std::vector<Eigen::RowVectorXd>& texts) const {
    if (texts.empty()) return SampleMatrix(0, cfg_.embed_dim);
    nn::Matrix<S> x(static_cast<Eigen::Index>(texts.size()), cfg_.text_dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].size() != cfg_.text_dim) throw std::invalid_argument("co-embedding: text width mismatch");
      x.row(static_cast<Eigen::Index>(i)) = texts[i].template cast<S>();
    }
    nn::Graph<S> g(false);
    return g.value(text_tower(g, g.constant(std::move(x)))).template cast<double>();
  }

  /// Symmetric InfoNCE over shuffled minibatches; returns mean loss per epoch.
  std::vector<double> train(const std::vector<motion::FeatureMatrix>& clips, const std::vector<Eigen::RowVectorXd>& texts,
                            const CoEmbeddingTrainSettings& settings) {
    if (clips.size() != texts.size()) throw std::invalid_argument("co-embedding: clips and texts differ in count");
    if (clips.size() < 2) throw std::invalid_argument("co-embedding: need at least two pairs");
    std::vector<const motion::FeatureMatrix*> ptrs;
    for (const auto& c : clips) ptrs.push_back(&c);
    normalizer_ = vae::FeatureNormalizer::fit(ptrs, std::vector<const std::vector<bool>*>(clips.size(), nullptr));
    nn::Matrix<S> stats(static_cast<Eigen::Index>(clips.size()), 2 * cfg_.feature_dim);
    nn::Matrix<S> text(static_cast<Eigen::Index>(clips.size()), cfg_.text_dim);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      stats.row(static_cast<Eigen::Index>(i)) = motion_stats(clips[i]).template cast<S>();
      text.row(static_cast<Eigen::Index>(i)) = texts[i].template cast<S>();
    }
    nn::AdamW<S> opt(store_.all(), {.lr = settings.lr, .weight_decay = 0.0, .clip_norm = 1.0});
    std::mt19937_64 rng(settings.seed);
    std::vector<Eigen::Index> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> history;
    const auto batch = static_cast<std::size_t>(std::max(2, settings.batch_size));
    for (int e = 0; e < settings.epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      double total = 0;
      int batches = 0;
      for (std::size_t start = 0; start + 1 < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        const auto n = static_cast<Eigen::Index>(stop - start);
        if (n < 2) break;
        nn::Matrix<S> bs(n, stats.cols());
        nn::Matrix<S> bt(n, text.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
          bs.row(i) = stats.row(order[start + static_cast<std::size_t>(i)]);
          bt.row(i) = text.row(order[start + static_cast<std::size_t>(i)]);
        }
        nn::Graph<S> g;
        nn::Var zm = motion_tower(g, g.constant(std::move(bs)));
        nn::Var zt = text_tower(g, g.constant(std::move(bt)));
        nn::Var logits = g.scale(g.matmul_nt(zm, zt), static_cast<S>(1.0 / cfg_.temperature));
        std::vector<int> targets(static_cast<std::size_t>(n));
        std::iota(targets.begin(), targets.end(), 0);
        nn::Var loss = g.scale(g.add(g.cross_entropy_rows(logits, targets), g.cross_entropy_rows(g.transpose(logits), targets)),
                               S(0.5));
        total += g.scalar(loss);
        ++batches;
        g.backward(loss);
        opt.step();
      }
      history.push_back(batches > 0 ? total / batches : 0.0);
    }
    return history;
  }

  [[nodiscard]] nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.kind = "coembedding";
    ck.config = cfg_;
    ck.put_store(store_);
    ck.put<double>("normalizer.mean", normalizer_.mean);
    ck.put<double>("normalizer.std", normalizer_.std);
    return ck;
  }

  static CoEmbedding from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.kind != "coembedding") throw nn::CheckpointError("checkpoint is not a co-embedding model");
    CoEmbedding m(ck.config.get<CoEmbeddingConfig>(), 0);
    ck.load_store(m.store_);
    m.normalizer_.mean = ck.at("normalizer.mean").row(0).template cast<double>();
    m.normalizer_.std = ck.at("normalizer.std").row(0).template cast<double>();
    return m;
  }

 private:
  CoEmbeddingConfig cfg_;
  nn::ParameterStore<S> store_;
  nn::Linear<S> m1_, m2_, t1_, t2_;
  vae::FeatureNormalizer normalizer_;
};

// ---- metrics over embedding matrices ---------------------------------------

/// Mean Euclidean distance between row i of `motion` and row i of `text`.
inline double mm_dist(const SampleMatrix& motion, const SampleMatrix& text) {
  if (motion.rows() != text.rows() || motion.cols() != text.cols() || motion.rows() == 0) {
    throw std::invalid_argument("mm_dist: embedding sets must be non-empty and paired");
  }
  return (motion - text).rowwise().norm().mean();
}

/// Per-row distances, for paired tests.
inline Eigen::VectorXd paired_distances(const SampleMatrix& motion, const SampleMatrix& text) {
  if (motion.rows() != text.rows() || motion.cols() != text.cols()) throw std::invalid_argument("paired_distances: shape mismatch");
  return (motion - text).rowwise().norm();
}

/// Mean pairwise Euclidean distance within a random subset of `subset` rows.
inline double embedding_diversity(const SampleMatrix& emb, int subset, std::uint64_t seed) {
  if (subset < 2 || subset > emb.rows()) throw std::invalid_argument("embedding_diversity: subset must be in [2, N]");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(emb.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  double total = 0;
  std::size_t pairs = 0;
  for (int i = 0; i < subset; ++i) {
    for (int j = i + 1; j < subset; ++j) {
      total += (emb.row(idx[static_cast<std::size_t>(i)]) - emb.row(idx[static_cast<std::size_t>(j)])).norm();
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

/// Top-1..top_k retrieval accuracy. For each motion the candidate pool is its
/// paired text plus pool-1 distinct other texts drawn at random; ties count
/// against the paired text.
inline std::vector<double> r_precision(const SampleMatrix& motion, const SampleMatrix& text, int pool, int top_k,
                                       std::uint64_t seed) {
  const auto n = motion.rows();
  if (text.rows() != n || text.cols() != motion.cols()) throw std::invalid_argument("r_precision: embeddings are not paired");
  if (pool < 1 || pool > n) throw std::invalid_argument("r_precision: pool size exceeds sample count");
  if (top_k < 1 || top_k > pool) throw std::invalid_argument("r_precision: top_k must be in [1, pool]");
  std::mt19937_64 rng(seed);
  std::vector<double> hits(static_cast<std::size_t>(top_k), 0.0);
  std::vector<Eigen::Index> others(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0, k = 0; j < n; ++j)
      if (j != i) others[static_cast<std::size_t>(k++)] = j;
    std::shuffle(others.begin(), others.end(), rng);
    const double own = (motion.row(i) - text.row(i)).norm();
    int rank = 0;
    for (int c = 0; c < pool - 1; ++c) {
      if ((motion.row(i) - text.row(others[static_cast<std::size_t>(c)])).norm() <= own) ++rank;
    }
    for (int k = rank; k < top_k; ++k) hits[static_cast<std::size_t>(k)] += 1.0;
  }
  for (auto& h : hits) h /= static_cast<double>(n);
  return hits;
}

struct TextMotionScores {
  double fid = 0;
  double mm_dist = 0;
  double diversity = 0;
  std::vector<double> r_precision;  // top-1, top-2, top-3
};

/// All four text-motion metrics from precomputed embeddings. `gen_motion`
/// rows are paired with `texts`; `ref_motion` is the real-side reference.
inline TextMotionScores text_motion_scores(const SampleMatrix& gen_motion, const SampleMatrix& ref_motion,
                                           const SampleMatrix& texts, int div_subset, int pool, std::uint64_t seed) {
  TextMotionScores s;
  s.fid = frechet_distance(gen_motion, ref_motion);
  s.mm_dist = mm_dist(gen_motion, texts);
  s.diversity = embedding_diversity(gen_motion, std::min<int>(div_subset, static_cast<int>(gen_motion.rows())), seed);
  s.r_precision = r_precision(gen_motion, texts, pool, std::min(3, pool), seed + 1);
  return s;
}

}  // namespace gesturegen::metrics
