#pragma once

// Frequency-informed deep learning: a one-hidden-layer rectifier network
// trained on a token list expanded from scaled word frequencies, minibatch
// MSE with adaptive-moment updates. Everything is seeded and single-threaded
// with a fixed reduction order, so training is bit-reproducible.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/form.hpp"
#include "lexilearn/io.hpp"
#include "lexilearn/linear.hpp"
#include "lexilearn/semantics.hpp"

namespace lexilearn {

// Adam moment constants; unstated in the source method, so community defaults
// are used and recorded in checkpoint manifests.
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

// Ordered token list: row id i appears ceil(freq(word i) / scale) times,
// uniformly shuffled by the seed.
struct TokenSchedule {
  std::vector<std::size_t> tokens;
  std::uint64_t scale = 1;
  std::uint64_t seed = 0;

  std::uint64_t content_hash() const {
    std::uint64_t h = kFnvOffset;
    h = fnv1a64(&scale, sizeof(scale), h);
    h = fnv1a64(&seed, sizeof(seed), h);
    h = fnv1a64(tokens.data(), tokens.size() * sizeof(std::size_t), h);
    return h;
  }
};

inline std::uint64_t ceil_div(std::uint64_t value, std::uint64_t divisor) {
  return value / divisor + (value % divisor != 0 ? 1 : 0);
}

inline TokenSchedule expand_token_schedule(const FrequencyTable& freq,
                                           const std::vector<std::string>& words,
                                           std::uint64_t scale,
                                           std::uint64_t seed) {
  if (scale == 0) throw DataError("schedule scale must be >= 1");
  std::vector<std::string> missing;
  TokenSchedule schedule;
  schedule.scale = scale;
  schedule.seed = seed;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto f = freq.get(words[i]);
    if (!f || *f == 0) {
      missing.push_back(words[i]);
      continue;
    }
    const std::uint64_t count = ceil_div(*f, scale);
    for (std::uint64_t k = 0; k < count; ++k) schedule.tokens.push_back(i);
  }
  if (!missing.empty()) {
    std::string msg = "words without frequency:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  Rng rng(seed);
  rng.shuffle(schedule.tokens);
  return schedule;
}

struct FiddlHyper {
  std::size_t hidden = 1000;
  double rate = 0.001;
  std::size_t batch = 512;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
};

// One hidden rectifier layer, linear output, biases in both layers.
struct DeepMap {
  Eigen::MatrixXd w1;  // cue_count x hidden
  Eigen::RowVectorXd b1;
  Eigen::MatrixXd w2;  // hidden x dim
  Eigen::RowVectorXd b2;
  std::uint64_t seed = 0;

  // Adam state (not persisted in checkpoints).
  Eigen::MatrixXd m_w1, v_w1, m_w2, v_w2;
  Eigen::RowVectorXd m_b1, v_b1, m_b2, v_b2;
  std::uint64_t step = 0;

  // Mean per-token training loss per epoch.
  std::vector<double> epoch_losses;

  std::size_t inputs() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(w2.cols()); }

  std::size_t parameter_count() const {
    return inputs() * hidden() + hidden() + hidden() * outputs() + outputs();
  }
};

// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases. Draw order is
// w1 row-major then w2 row-major, so a seed pins the full initialization.
inline DeepMap init_deep_map(std::size_t inputs, std::size_t hidden,
                             std::size_t outputs, std::uint64_t seed) {
  if (inputs == 0 || hidden == 0 || outputs == 0) {
    throw DataError("network dimensions must be positive");
  }
  DeepMap net;
  net.seed = seed;
  Rng rng(seed);
  const double a1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + outputs));
  net.w1.resize(static_cast<Eigen::Index>(inputs),
                static_cast<Eigen::Index>(hidden));
  for (Eigen::Index i = 0; i < net.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < net.w1.cols(); ++j) {
      net.w1(i, j) = rng.uniform(-a1, a1);
    }
  }
  net.b1 = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(hidden));
  net.w2.resize(static_cast<Eigen::Index>(hidden),
                static_cast<Eigen::Index>(outputs));
  for (Eigen::Index i = 0; i < net.w2.rows(); ++i) {
    for (Eigen::Index j = 0; j < net.w2.cols(); ++j) {
      net.w2(i, j) = rng.uniform(-a2, a2);
    }
  }
  net.b2 = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(outputs));
  net.m_w1 = Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols());
  net.v_w1 = net.m_w1;
  net.m_w2 = Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols());
  net.v_w2 = net.m_w2;
  net.m_b1 = Eigen::RowVectorXd::Zero(net.b1.cols());
  net.v_b1 = net.m_b1;
  net.m_b2 = Eigen::RowVectorXd::Zero(net.b2.cols());
  net.v_b2 = net.m_b2;
  return net;
}

namespace detail {

inline Eigen::MatrixXd dense_rows(const FormMatrix& c,
                                  const std::vector<std::size_t>& rows,
                                  std::size_t begin, std::size_t end) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(c.cols));
  for (std::size_t k = begin; k < end; ++k) {
    for (std::uint32_t j : c.row_cues[rows[k]]) {
      x(static_cast<Eigen::Index>(k - begin), j) = 1.0;
    }
  }
  return x;
}

inline void adam_update(Eigen::MatrixXd& param, Eigen::MatrixXd& m,
                        Eigen::MatrixXd& v, const Eigen::MatrixXd& grad,
                        double rate, std::uint64_t step) {
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
  v = kAdamBeta2 * v.array().matrix() +
      (1.0 - kAdamBeta2) * grad.array().square().matrix();
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  param.array() -= rate * (m.array() / c1) /
                   ((v.array() / c2).sqrt() + kAdamEpsilon);
}

inline void adam_update(Eigen::RowVectorXd& param, Eigen::RowVectorXd& m,
                        Eigen::RowVectorXd& v, const Eigen::RowVectorXd& grad,
                        double rate, std::uint64_t step) {
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
  v = kAdamBeta2 * v.array().matrix() +
      (1.0 - kAdamBeta2) * grad.array().square().matrix();
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  param.array() -= rate * (m.array() / c1) /
                   ((v.array() / c2).sqrt() + kAdamEpsilon);
}

}  // namespace detail

// Forward pass for a dense batch of form rows.
inline Eigen::MatrixXd forward_fiddl(const DeepMap& net,
                                     const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != net.inputs()) {
    throw DataError("shape mismatch: input has " + std::to_string(x.cols()) +
                    " columns, network expects " +
                    std::to_string(net.inputs()));
  }
  Eigen::MatrixXd z1 = (x * net.w1).rowwise() + net.b1;
  const Eigen::MatrixXd h = z1.cwiseMax(0.0);
  return (h * net.w2).rowwise() + net.b2;
}

// Minibatch training over the token schedule: consecutive chunks of `batch`
// tokens per epoch, incomplete final batch included, schedule order fixed
// across epochs. Loss is the element-mean squared error of the batch.
inline DeepMap train_fiddl(const FormMatrix& c, const SemanticMatrix& s,
                           const TokenSchedule& schedule,
                           const FiddlHyper& hyper) {
  detail::check_paired_shapes(c, s);
  if (hyper.hidden == 0) throw DataError("hidden size must be positive");
  if (!(hyper.rate > 0.0)) throw DataError("learning rate must be positive");
  if (hyper.batch == 0) throw DataError("batch size must be positive");
  for (std::size_t t : schedule.tokens) {
    if (t >= c.rows()) {
      throw DataError("schedule names invalid row " + std::to_string(t));
    }
  }
  DeepMap net = init_deep_map(c.cols, hyper.hidden, s.dim(), hyper.seed);
  const std::size_t n_tokens = schedule.tokens.size();
  if (n_tokens == 0 || hyper.epochs == 0) return net;
  const std::size_t batch = std::min(hyper.batch, n_tokens);
  const double dim = static_cast<double>(s.dim());

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    double epoch_sq_sum = 0.0;
    for (std::size_t begin = 0; begin < n_tokens; begin += batch) {
      const std::size_t end = std::min(begin + batch, n_tokens);
      const auto b = static_cast<double>(end - begin);
      const Eigen::MatrixXd x =
          detail::dense_rows(c, schedule.tokens, begin, end);
      Eigen::MatrixXd t(static_cast<Eigen::Index>(end - begin),
                        static_cast<Eigen::Index>(s.dim()));
      for (std::size_t k = begin; k < end; ++k) {
        t.row(static_cast<Eigen::Index>(k - begin)) =
            s.values.row(static_cast<Eigen::Index>(schedule.tokens[k]));
      }

      const Eigen::MatrixXd z1 = (x * net.w1).rowwise() + net.b1;
      const Eigen::MatrixXd h = z1.cwiseMax(0.0);
      const Eigen::MatrixXd y = (h * net.w2).rowwise() + net.b2;
      const Eigen::MatrixXd resid = y - t;
      const double sq_sum = resid.squaredNorm();
      const double loss = sq_sum / (b * dim);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training loss became non-finite at step " +
                              std::to_string(net.step));
      }
      epoch_sq_sum += sq_sum;

      const Eigen::MatrixXd dy = (2.0 / (b * dim)) * resid;
      const Eigen::MatrixXd grad_w2 = h.transpose() * dy;
      const Eigen::RowVectorXd grad_b2 = dy.colwise().sum();
      Eigen::MatrixXd dz1 = dy * net.w2.transpose();
      dz1 = (z1.array() > 0.0).select(dz1, 0.0);
      const Eigen::MatrixXd grad_w1 = x.transpose() * dz1;
      const Eigen::RowVectorXd grad_b1 = dz1.colwise().sum();

      ++net.step;
      detail::adam_update(net.w1, net.m_w1, net.v_w1, grad_w1, hyper.rate,
                          net.step);
      detail::adam_update(net.b1, net.m_b1, net.v_b1, grad_b1, hyper.rate,
                          net.step);
      detail::adam_update(net.w2, net.m_w2, net.v_w2, grad_w2, hyper.rate,
                          net.step);
      detail::adam_update(net.b2, net.m_b2, net.v_b2, grad_b2, hyper.rate,
                          net.step);
      if (!net.w1.allFinite() || !net.b1.allFinite() || !net.w2.allFinite() ||
          !net.b2.allFinite()) {
        throw DivergenceError("parameters became non-finite at step " +
                              std::to_string(net.step));
      }
    }
    net.epoch_losses.push_back(epoch_sq_sum /
                               (static_cast<double>(n_tokens) * dim));
  }
  return net;
}

// Row-wise forward pass over a form matrix.
inline Eigen::MatrixXd predict_fiddl(const FormMatrix& c, const DeepMap& net) {
  if (c.cols != net.inputs()) {
    throw DataError("shape mismatch: form matrix has " +
                    std::to_string(c.cols) + " cues, network expects " +
                    std::to_string(net.inputs()));
  }
  std::vector<std::size_t> all(c.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return forward_fiddl(net, detail::dense_rows(c, all, 0, all.size()));
}

// ---------------------------------------------------------------------------
// Gradient correctness harness: analytic parameter gradients of the
// per-example MSE against central differences.

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_analytic_abs = 0.0;
  double max_rel_w1 = 0.0;
  double max_rel_b1 = 0.0;
  double max_rel_w2 = 0.0;
  double max_rel_b2 = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kink = 0;
};

namespace detail {

// Per-example loss (1/dim) * ||f(c) - s||^2 with parameters taken from `net`.
inline double example_loss(const DeepMap& net, const Eigen::RowVectorXd& c,
                           const Eigen::RowVectorXd& s) {
  const Eigen::RowVectorXd z1 = c * net.w1 + net.b1;
  const Eigen::RowVectorXd h = z1.cwiseMax(0.0);
  const Eigen::RowVectorXd y = h * net.w2 + net.b2;
  return (y - s).squaredNorm() / static_cast<double>(s.size());
}

enum class ParamGroup : std::uint8_t { w1, b1, w2, b2 };

struct ParamCoord {
  ParamGroup group;
  Eigen::Index i;
  Eigen::Index j;
};

inline double* coord_ptr(DeepMap& net, const ParamCoord& p) {
  switch (p.group) {
    case ParamGroup::w1: return &net.w1(p.i, p.j);
    case ParamGroup::b1: return &net.b1(p.j);
    case ParamGroup::w2: return &net.w2(p.i, p.j);
    case ParamGroup::b2: return &net.b2(p.j);
  }
  return nullptr;
}

}  // namespace detail

// Compares analytic gradients against central differences over a seeded
// random parameter subset (all parameters when the net is small). Rectifier
// kink avoidance: hidden units with |pre-activation| < 10 h are excluded
// from the w1/b1 sample, where the loss is not differentiable.
inline GradCheckResult finite_difference_check_detailed(
    const DeepMap& net, const Eigen::RowVectorXd& c,
    const Eigen::RowVectorXd& s, double h = 1e-5, std::size_t subset = 100,
    std::uint64_t seed = 42) {
  if (!(h >= 1e-6 && h <= 1e-4)) {
    throw DataError("perturbation h must lie in [1e-6, 1e-4]");
  }
  if (static_cast<std::size_t>(c.size()) != net.inputs() ||
      static_cast<std::size_t>(s.size()) != net.outputs()) {
    throw DataError("gradient check: example shape mismatch");
  }

  // Analytic gradients of (1/dim)||f(c) - s||^2.
  const Eigen::RowVectorXd z1 = c * net.w1 + net.b1;
  const Eigen::RowVectorXd hid = z1.cwiseMax(0.0);
  const Eigen::RowVectorXd y = hid * net.w2 + net.b2;
  const double dim = static_cast<double>(s.size());
  const Eigen::RowVectorXd dy = (2.0 / dim) * (y - s);
  const Eigen::MatrixXd g_w2 = hid.transpose() * dy;
  const Eigen::RowVectorXd g_b2 = dy;
  Eigen::RowVectorXd dz1 = dy * net.w2.transpose();
  dz1 = (z1.array() > 0.0).select(dz1, 0.0);
  const Eigen::MatrixXd g_w1 = c.transpose() * dz1;
  const Eigen::RowVectorXd g_b1 = dz1;

  GradCheckResult result;
  result.max_analytic_abs =
      std::max({g_w1.cwiseAbs().maxCoeff(), g_b1.cwiseAbs().maxCoeff(),
                g_w2.cwiseAbs().maxCoeff(), g_b2.cwiseAbs().maxCoeff()});

  std::vector<bool> unit_ok(net.hidden());
  for (std::size_t j = 0; j < net.hidden(); ++j) {
    unit_ok[j] = std::abs(z1[static_cast<Eigen::Index>(j)]) >= 10.0 * h;
    if (!unit_ok[j]) ++result.skipped_kink;
  }

  using detail::ParamCoord;
  using detail::ParamGroup;
  std::vector<ParamCoord> groups[4];
  for (Eigen::Index i = 0; i < net.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < net.w1.cols(); ++j) {
      if (unit_ok[static_cast<std::size_t>(j)]) {
        groups[0].push_back({ParamGroup::w1, i, j});
      }
    }
  }
  for (Eigen::Index j = 0; j < net.b1.cols(); ++j) {
    if (unit_ok[static_cast<std::size_t>(j)]) {
      groups[1].push_back({ParamGroup::b1, 0, j});
    }
  }
  for (Eigen::Index i = 0; i < net.w2.rows(); ++i) {
    for (Eigen::Index j = 0; j < net.w2.cols(); ++j) {
      groups[2].push_back({ParamGroup::w2, i, j});
    }
  }
  for (Eigen::Index j = 0; j < net.b2.cols(); ++j) {
    groups[3].push_back({ParamGroup::b2, 0, j});
  }

  Rng rng(seed);
  DeepMap probe = net;
  const std::size_t per_group = (subset + 3) / 4;
  for (int g = 0; g < 4; ++g) {
    auto& coords = groups[g];
    rng.shuffle(coords);
    const std::size_t take = std::min(coords.size(),
                                      std::max<std::size_t>(per_group, 1));
    for (std::size_t k = 0; k < take; ++k) {
      const ParamCoord& p = coords[k];
      double analytic = 0.0;
      switch (p.group) {
        case ParamGroup::w1: analytic = g_w1(p.i, p.j); break;
        case ParamGroup::b1: analytic = g_b1(p.j); break;
        case ParamGroup::w2: analytic = g_w2(p.i, p.j); break;
        case ParamGroup::b2: analytic = g_b2(p.j); break;
      }
      double* slot = detail::coord_ptr(probe, p);
      const double saved = *slot;
      *slot = saved + h;
      const double up = detail::example_loss(probe, c, s);
      *slot = saved - h;
      const double down = detail::example_loss(probe, c, s);
      *slot = saved;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(analytic - fd) /
                         std::max({std::abs(analytic), std::abs(fd), 1e-8});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      switch (p.group) {
        case ParamGroup::w1:
          result.max_rel_w1 = std::max(result.max_rel_w1, rel);
          break;
        case ParamGroup::b1:
          result.max_rel_b1 = std::max(result.max_rel_b1, rel);
          break;
        case ParamGroup::w2:
          result.max_rel_w2 = std::max(result.max_rel_w2, rel);
          break;
        case ParamGroup::b2:
          result.max_rel_b2 = std::max(result.max_rel_b2, rel);
          break;
      }
      ++result.checked;
    }
  }
  return result;
}

inline double finite_difference_check(const DeepMap& net,
                                      const Eigen::RowVectorXd& c,
                                      const Eigen::RowVectorXd& s,
                                      double h = 1e-5) {
  return finite_difference_check_detailed(net, c, s, h).max_rel_error;
}

// ---------------------------------------------------------------------------
// Checkpoint: all network parameters with a trailing checksum; bit-exact
// reload. Hyperparameters, seed, and schedule hash belong to the sidecar
// manifest.

constexpr char kDeepMagic[4] = {'L', 'X', 'D', 'N'};

inline void save_deep_map(const DeepMap& net,
                          const std::filesystem::path& path) {
  std::string buf;
  detail::put_bytes(buf, kDeepMagic, 4);
  const std::uint32_t version = 1;
  detail::put_bytes(buf, &version, sizeof(version));
  const std::uint64_t dims[3] = {net.inputs(), net.hidden(), net.outputs()};
  detail::put_bytes(buf, dims, sizeof(dims));
  detail::put_bytes(buf, &net.seed, sizeof(net.seed));
  auto put_matrix = [&buf](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        detail::put_bytes(buf, &v, sizeof(v));
      }
    }
  };
  auto put_vector = [&buf](const Eigen::RowVectorXd& v) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double x = v[j];
      detail::put_bytes(buf, &x, sizeof(x));
    }
  };
  put_matrix(net.w1);
  put_vector(net.b1);
  put_matrix(net.w2);
  put_vector(net.b2);
  const std::uint64_t checksum = fnv1a64(buf.data(), buf.size());
  detail::put_bytes(buf, &checksum, sizeof(checksum));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

inline DeepMap load_deep_map(const std::filesystem::path& path) {
  const std::string buf = read_file_bytes(path);
  if (buf.size() < 4 + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kDeepMagic, 4) != 0) {
    throw DataError("not a deep map checkpoint: " + path.string());
  }
  const std::uint64_t computed =
      fnv1a64(buf.data(), buf.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - sizeof(std::uint64_t),
              sizeof(stored));
  if (computed != stored) {
    throw DataError("corrupt checkpoint (checksum mismatch): " +
                    path.string());
  }
  std::size_t off = 4;
  const auto version = detail::take<std::uint32_t>(buf, off, "version");
  if (version != 1) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version));
  }
  const auto inputs = detail::take<std::uint64_t>(buf, off, "inputs");
  const auto hidden = detail::take<std::uint64_t>(buf, off, "hidden");
  const auto outputs = detail::take<std::uint64_t>(buf, off, "outputs");
  const auto seed = detail::take<std::uint64_t>(buf, off, "seed");
  const std::size_t params = static_cast<std::size_t>(inputs * hidden + hidden +
                                                      hidden * outputs + outputs);
  if (buf.size() - off - sizeof(std::uint64_t) != params * sizeof(double)) {
    throw DataError("checkpoint payload size mismatch: " + path.string());
  }
  DeepMap net = init_deep_map(inputs, hidden, outputs, seed);
  auto get_matrix = [&buf, &off](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = detail::take<double>(buf, off, "parameters");
      }
    }
  };
  auto get_vector = [&buf, &off](Eigen::RowVectorXd& v) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      v[j] = detail::take<double>(buf, off, "parameters");
    }
  };
  get_matrix(net.w1);
  get_vector(net.b1);
  get_matrix(net.w2);
  get_vector(net.b2);
  return net;
}

}  // namespace lexilearn
