#pragma once

// Palm verification: embedding distance, hinged triplet loss with analytic
// gradients, a two-layer encoder trained with Adam, and threshold gating.
// Numeric code is templated on the scalar type; the CLI instantiates double.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "palmctl/errors.hpp"

namespace palmctl::auth {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean_distance(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("euclidean_distance: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  return (a - b).norm();
}

enum class Reduction { Mean, Sum };

template <typename Scalar>
struct TripletEmbedding {
  Vec<Scalar> anchor;
  Vec<Scalar> positive;
  Vec<Scalar> negative;
};

template <typename Scalar>
struct TripletGrad {
  Vec<Scalar> anchor;
  Vec<Scalar> positive;
  Vec<Scalar> negative;
};

namespace detail {

template <typename Scalar>
void check_triplet(const TripletEmbedding<Scalar>& t) {
  if (t.anchor.size() != t.positive.size() || t.anchor.size() != t.negative.size()) {
    throw DimensionError("triplet: anchor/positive/negative dimensions differ");
  }
}

/// ||a-p||^2 - ||a-n||^2 + alpha, before the hinge.
template <typename Scalar>
Scalar triplet_margin(const TripletEmbedding<Scalar>& t, Scalar alpha) {
  return (t.anchor - t.positive).squaredNorm() - (t.anchor - t.negative).squaredNorm() + alpha;
}

template <typename Scalar>
Scalar reduction_scale(std::size_t n, Reduction r) {
  return r == Reduction::Mean ? Scalar(1) / static_cast<Scalar>(n) : Scalar(1);
}

}  // namespace detail

/// max(0, ||a-p||^2 - ||a-n||^2 + alpha), averaged (or summed) over the batch.
template <typename Scalar>
Scalar triplet_loss(std::span<const TripletEmbedding<Scalar>> batch, Scalar alpha,
                    Reduction reduction = Reduction::Mean) {
  if (batch.empty()) throw EmptyBatchError("triplet_loss: empty batch");
  Scalar total(0);
  for (const auto& t : batch) {
    detail::check_triplet(t);
    total += std::max(Scalar(0), detail::triplet_margin(t, alpha));
  }
  return total * detail::reduction_scale<Scalar>(batch.size(), reduction);
}

/// Per-triplet gradients of triplet_loss. Triplets sitting on or below the
/// hinge get zero gradients.
template <typename Scalar>
std::vector<TripletGrad<Scalar>> triplet_grad(std::span<const TripletEmbedding<Scalar>> batch, Scalar alpha,
                                              Reduction reduction = Reduction::Mean) {
  if (batch.empty()) throw EmptyBatchError("triplet_grad: empty batch");
  const Scalar k = Scalar(2) * detail::reduction_scale<Scalar>(batch.size(), reduction);
  std::vector<TripletGrad<Scalar>> out;
  out.reserve(batch.size());
  for (const auto& t : batch) {
    detail::check_triplet(t);
    const auto d = t.anchor.size();
    if (detail::triplet_margin(t, alpha) > Scalar(0)) {
      out.push_back({k * (t.negative - t.positive), k * (t.positive - t.anchor), k * (t.anchor - t.negative)});
    } else {
      out.push_back({Vec<Scalar>::Zero(d), Vec<Scalar>::Zero(d), Vec<Scalar>::Zero(d)});
    }
  }
  return out;
}

// --- encoder --------------------------------------------------------------------

/// e = W2 * relu(W1 * x + b1) + b2, optionally projected onto the unit sphere.
template <typename Scalar>
struct EncoderParams {
  Mat<Scalar> w1;  // hidden x input
  Vec<Scalar> b1;
  Mat<Scalar> w2;  // output x hidden
  Vec<Scalar> b2;
  bool normalize = true;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index output_dim() const { return w2.rows(); }
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  static EncoderParams zeros(Eigen::Index input, Eigen::Index hidden, Eigen::Index output, bool normalize) {
    return {Mat<Scalar>::Zero(hidden, input), Vec<Scalar>::Zero(hidden), Mat<Scalar>::Zero(output, hidden),
            Vec<Scalar>::Zero(output), normalize};
  }

  void validate() const {
    if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
      throw DimensionError("encoder: inconsistent layer shapes");
    }
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
      throw NumericsError("encoder: non-finite weight");
    }
  }

  /// Concatenation of W1, b1, W2, b2 (column-major within each matrix).
  Vec<Scalar> flatten() const {
    Vec<Scalar> flat(parameter_count());
    Eigen::Index at = 0;
    for (auto block : {std::span<const Scalar>(w1.data(), w1.size()), std::span<const Scalar>(b1.data(), b1.size()),
                       std::span<const Scalar>(w2.data(), w2.size()), std::span<const Scalar>(b2.data(), b2.size())}) {
      for (Scalar v : block) flat[at++] = v;
    }
    return flat;
  }

  void assign(const Vec<Scalar>& flat) {
    if (flat.size() != parameter_count()) throw DimensionError("encoder: flat parameter size mismatch");
    Eigen::Index at = 0;
    for (auto block : {std::span<Scalar>(w1.data(), w1.size()), std::span<Scalar>(b1.data(), b1.size()),
                       std::span<Scalar>(w2.data(), w2.size()), std::span<Scalar>(b2.data(), b2.size())}) {
      for (Scalar& v : block) v = flat[at++];
    }
  }
};

inline constexpr double kNormFloor = 1e-12;

template <typename Scalar>
struct ForwardTrace {
  Vec<Scalar> pre_hidden;  // W1 x + b1
  Vec<Scalar> hidden;      // relu
  Vec<Scalar> raw;         // W2 h + b2
  Vec<Scalar> output;
};

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> encoder_trace(const EncoderParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != p.input_dim()) {
    throw DimensionError("encoder: input has " + std::to_string(x.size()) + " features, expected " +
                         std::to_string(p.input_dim()));
  }
  ForwardTrace<Scalar> t;
  t.pre_hidden = p.w1 * x + p.b1;
  t.hidden = t.pre_hidden.cwiseMax(Scalar(0));
  t.raw = p.w2 * t.hidden + p.b2;
  if (p.normalize) {
    t.output = t.raw / std::max(t.raw.norm(), Scalar(kNormFloor));
  } else {
    t.output = t.raw;
  }
  return t;
}

template <typename Scalar, typename Derived>
Vec<Scalar> encoder_forward(const EncoderParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  return encoder_trace(p, x).output;
}

/// Feature vectors for one triplet, before encoding.
template <typename Scalar>
struct FeatureTriplet {
  Vec<Scalar> anchor;
  Vec<Scalar> positive;
  Vec<Scalar> negative;
};

template <typename Scalar>
struct EncoderGrad {
  EncoderParams<Scalar> grad;  // same shapes as the parameters
  Scalar loss{};
};

/// Exact gradient of triplet_loss(encoder_forward(.)) with respect to every
/// encoder parameter, by back-propagation through the normalization, the
/// second layer, the rectifier and the first layer.
template <typename Scalar>
EncoderGrad<Scalar> encoder_backward(const EncoderParams<Scalar>& p, std::span<const FeatureTriplet<Scalar>> batch,
                                     Scalar alpha, Reduction reduction = Reduction::Mean) {
  if (batch.empty()) throw EmptyBatchError("encoder_backward: empty batch");
  p.validate();
  EncoderGrad<Scalar> out{EncoderParams<Scalar>::zeros(p.input_dim(), p.hidden_dim(), p.output_dim(), p.normalize),
                          Scalar(0)};

  auto accumulate = [&](const Vec<Scalar>& x, const ForwardTrace<Scalar>& t, const Vec<Scalar>& g_out) {
    Vec<Scalar> g_raw = g_out;
    if (p.normalize) {
      const Scalar n = t.raw.norm();
      if (n > Scalar(kNormFloor)) {
        g_raw = (g_out - t.output * t.output.dot(g_out)) / n;
      } else {
        g_raw = g_out / Scalar(kNormFloor);
      }
    }
    out.grad.w2.noalias() += g_raw * t.hidden.transpose();
    out.grad.b2 += g_raw;
    Vec<Scalar> g_hidden = p.w2.transpose() * g_raw;
    Vec<Scalar> g_pre = (t.pre_hidden.array() > Scalar(0)).select(g_hidden.array(), Scalar(0)).matrix();
    out.grad.w1.noalias() += g_pre * x.transpose();
    out.grad.b1 += g_pre;
  };

  std::vector<TripletEmbedding<Scalar>> embedded;
  std::vector<std::array<ForwardTrace<Scalar>, 3>> traces;
  embedded.reserve(batch.size());
  traces.reserve(batch.size());
  for (const auto& ft : batch) {
    traces.push_back({encoder_trace(p, ft.anchor), encoder_trace(p, ft.positive), encoder_trace(p, ft.negative)});
    embedded.push_back({traces.back()[0].output, traces.back()[1].output, traces.back()[2].output});
  }
  const std::span<const TripletEmbedding<Scalar>> emb(embedded);
  out.loss = triplet_loss<Scalar>(emb, alpha, reduction);
  const auto grads = triplet_grad<Scalar>(emb, alpha, reduction);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    accumulate(batch[i].anchor, traces[i][0], grads[i].anchor);
    accumulate(batch[i].positive, traces[i][1], grads[i].positive);
    accumulate(batch[i].negative, traces[i][2], grads[i].negative);
  }
  return out;
}

// --- Adam -------------------------------------------------------------------------

template <typename Scalar>
struct AdamHyper {
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

template <typename Scalar>
struct AdamState {
  AdamHyper<Scalar> hyper;
  Vec<Scalar> m;
  Vec<Scalar> v;
  std::int64_t t = 0;

  AdamState() = default;
  AdamState(Eigen::Index n, AdamHyper<Scalar> h) : hyper(h), m(Vec<Scalar>::Zero(n)), v(Vec<Scalar>::Zero(n)) {}
};

/// One bias-corrected Adam update of `params` in place. Throws NumericsError on
/// a non-finite gradient, leaving params and state untouched.
template <typename Scalar>
void adam_step(Eigen::Ref<Vec<Scalar>> params, const Eigen::Ref<const Vec<Scalar>>& grads, AdamState<Scalar>& st) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: gradient size mismatch");
  if (!grads.allFinite()) throw NumericsError("adam_step: non-finite gradient");
  if (st.m.size() == 0 && st.v.size() == 0 && st.t == 0) {
    st.m = Vec<Scalar>::Zero(params.size());
    st.v = Vec<Scalar>::Zero(params.size());
  }
  if (st.m.size() != params.size() || st.v.size() != params.size()) {
    throw DimensionError("adam_step: state size mismatch");
  }

  const auto& h = st.hyper;
  st.t += 1;
  st.m = h.beta1 * st.m + (Scalar(1) - h.beta1) * grads;
  st.v = h.beta2 * st.v + (Scalar(1) - h.beta2) * grads.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(h.beta1, static_cast<Scalar>(st.t));
  const Scalar c2 = Scalar(1) - std::pow(h.beta2, static_cast<Scalar>(st.t));
  params.array() -= h.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + h.epsilon);
}

// --- data and training --------------------------------------------------------------

template <typename Scalar>
struct LabelledFeature {
  std::string subject;
  Vec<Scalar> features;
};

/// Indices into the dataset a triplet was mined from.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

namespace detail {

/// Subject name -> sample indices, in first-appearance order.
template <typename Scalar>
std::vector<std::vector<std::size_t>> group_by_subject(std::span<const LabelledFeature<Scalar>> data) {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto it = std::find(names.begin(), names.end(), data[i].subject);
    if (it == names.end()) {
      names.push_back(data[i].subject);
      groups.push_back({i});
    } else {
      groups[static_cast<std::size_t>(it - names.begin())].push_back(i);
    }
  }
  return groups;
}

inline std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace detail

/// Uniform valid triplets: anchor sample uniform over the dataset, positive
/// uniform over the anchor's other samples, negative subject uniform over the
/// remaining subjects and negative sample uniform within it.
template <typename Scalar>
std::vector<Triplet> mine_triplets(std::span<const LabelledFeature<Scalar>> data, std::size_t count,
                                   std::mt19937_64& rng) {
  const auto groups = detail::group_by_subject(data);
  if (groups.size() < 2) throw DataError("mine_triplets: need at least 2 subjects");
  std::vector<std::size_t> group_of(data.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < 2) throw DataError("mine_triplets: subject \"" + data[groups[g][0]].subject + "\" has one sample");
    for (std::size_t i : groups[g]) group_of[i] = g;
  }

  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Triplet t;
    t.anchor = detail::draw(rng, data.size());
    const auto& own = groups[group_of[t.anchor]];
    std::size_t p = detail::draw(rng, own.size() - 1);
    if (own[p] == t.anchor) p = own.size() - 1;
    t.positive = own[p];
    std::size_t ng = detail::draw(rng, groups.size() - 1);
    if (ng >= group_of[t.anchor]) ++ng;
    t.negative = groups[ng][detail::draw(rng, groups[ng].size())];
    out.push_back(t);
  }
  return out;
}

template <typename Scalar>
std::vector<Triplet> mine_triplets(std::span<const LabelledFeature<Scalar>> data, std::size_t count,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return mine_triplets(data, count, rng);
}

template <typename Scalar>
struct TrainConfig {
  int epochs = 100;
  Scalar alpha = Scalar(0.2);
  Eigen::Index hidden_dim = 64;
  Eigen::Index embedding_dim = 32;
  bool normalize = true;
  std::size_t triplets_per_epoch = 256;
  std::size_t batch_size = 32;
  Reduction reduction = Reduction::Mean;
  AdamHyper<Scalar> adam{};
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct TrainResult {
  EncoderParams<Scalar> params;
  std::vector<Scalar> loss_curve;  // mean batch loss per epoch
};

template <typename Scalar>
EncoderParams<Scalar> init_encoder(Eigen::Index input, Eigen::Index hidden, Eigen::Index output, bool normalize,
                                   std::mt19937_64& rng) {
  auto p = EncoderParams<Scalar>::zeros(input, hidden, output, normalize);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Vec<Scalar> flat(p.parameter_count());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = static_cast<Scalar>(u(rng));
  p.assign(flat);
  return p;
}

template <typename Scalar>
TrainResult<Scalar> train(std::span<const LabelledFeature<Scalar>> data, const TrainConfig<Scalar>& cfg) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size == 0 || cfg.triplets_per_epoch == 0) {
    throw ConfigError("train: epochs >= 0, batch_size >= 1 and triplets_per_epoch >= 1 required");
  }
  const Eigen::Index input = data[0].features.size();
  for (const auto& s : data) {
    if (s.features.size() != input) throw DimensionError("train: feature dimensions differ across samples");
    if (!s.features.allFinite()) throw DataError("train: non-finite feature in subject \"" + s.subject + "\"");
  }

  std::mt19937_64 rng(cfg.seed);
  TrainResult<Scalar> res;
  res.params = init_encoder<Scalar>(input, cfg.hidden_dim, cfg.embedding_dim, cfg.normalize, rng);
  Vec<Scalar> flat = res.params.flatten();
  AdamState<Scalar> adam(flat.size(), cfg.adam);

  std::vector<FeatureTriplet<Scalar>> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto triplets = mine_triplets(data, cfg.triplets_per_epoch, rng);
    Scalar epoch_loss(0);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < triplets.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(triplets.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back({data[triplets[i].anchor].features, data[triplets[i].positive].features,
                         data[triplets[i].negative].features});
      }
      const auto g = encoder_backward<Scalar>(res.params, batch, cfg.alpha, cfg.reduction);
      epoch_loss += g.loss;
      ++batches;
      adam_step<Scalar>(flat, g.grad.flatten(), adam);
      res.params.assign(flat);
    }
    res.loss_curve.push_back(epoch_loss / static_cast<Scalar>(batches));
  }
  return res;
}

// --- enrollment and verification -------------------------------------------------

template <typename Scalar>
struct EnrollmentRecord {
  std::string subject_id;
  std::vector<Vec<Scalar>> anchors;
  Scalar threshold{};

  friend bool operator==(const EnrollmentRecord&, const EnrollmentRecord&) = default;
};

template <typename Scalar>
struct AuthDecision {
  bool accepted = false;
  Scalar distance{};
  std::string subject_id;
};

template <typename Scalar>
EnrollmentRecord<Scalar> enroll(std::string subject_id, std::span<const Vec<Scalar>> samples,
                                const EncoderParams<Scalar>& params, Scalar threshold) {
  if (samples.empty()) throw DataError("enroll: no samples for \"" + subject_id + "\"");
  if (!(threshold >= Scalar(0))) throw DataError("enroll: threshold must be non-negative");
  EnrollmentRecord<Scalar> rec{std::move(subject_id), {}, threshold};
  rec.anchors.reserve(samples.size());
  for (const auto& s : samples) rec.anchors.push_back(encoder_forward(params, s));
  return rec;
}

/// Minimum distance from an embedding to any anchor of the record.
template <typename Scalar>
Scalar min_anchor_distance(const Vec<Scalar>& embedding, const EnrollmentRecord<Scalar>& record) {
  if (record.anchors.empty()) throw DataError("record \"" + record.subject_id + "\" has no anchors");
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (const auto& a : record.anchors) best = std::min(best, euclidean_distance(embedding, a));
  return best;
}

template <typename Scalar, typename Derived>
AuthDecision<Scalar> verify(const Eigen::MatrixBase<Derived>& feature, const EnrollmentRecord<Scalar>& record,
                            const EncoderParams<Scalar>& params) {
  const Scalar d = min_anchor_distance<Scalar>(encoder_forward(params, feature), record);
  return {d <= record.threshold, d, record.subject_id};
}

// --- ROC ---------------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // ascending threshold; last is +inf
  double eer_threshold = 0.0;
  double eer = 0.0;  // (FAR + FRR) / 2 at eer_threshold
  double best_accuracy_threshold = 0.0;
  double best_accuracy = 0.0;  // fraction of all trials decided correctly
};

/// FAR = impostors with distance <= t, FRR = genuines with distance > t, at
/// t = 0, every distinct observed distance, and +inf. The EER point is the
/// first (lowest) threshold minimizing |FAR - FRR|.
RocResult roc_sweep(std::span<const double> genuine, std::span<const double> impostor);

}  // namespace palmctl::auth
