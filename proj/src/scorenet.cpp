#include "scoremean/scorenet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "scoremean/parallel.hpp"
#include "scoremean/time_derivative.hpp"

namespace scoremean {

std::string to_string(Representation r) { return r == Representation::Embedded ? "embedded" : "chart"; }
std::string to_string(NetKind k) { return k == NetKind::Potential ? "potential" : "score"; }
std::string to_string(DsmMode m) { return m == DsmMode::MetricWeighted ? "metric_weighted" : "isotropic"; }

Representation parse_representation(std::string_view text) {
  if (text == "chart") return Representation::Chart;
  if (text == "embedded") return Representation::Embedded;
  throw ValidationError("unknown representation '" + std::string(text) + "'");
}

NetKind parse_net_kind(std::string_view text) {
  if (text == "score") return NetKind::Score;
  if (text == "potential") return NetKind::Potential;
  throw ValidationError("unknown network kind '" + std::string(text) + "'");
}

DsmMode parse_dsm_mode(std::string_view text) {
  if (text == "isotropic") return DsmMode::Isotropic;
  if (text == "metric_weighted") return DsmMode::MetricWeighted;
  throw ValidationError("unknown dsm mode '" + std::string(text) + "'");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (epoch <= 0) return 0.0;
  if (epoch >= cfg.epochs) return 0.0;
  if (epoch < cfg.warmup_epochs) return cfg.lr * epoch / cfg.warmup_epochs;
  const double span = cfg.epochs - cfg.warmup_epochs;
  const double progress = (epoch - cfg.warmup_epochs) / span;
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<int> default_hidden(const ManifoldId& id) {
  switch (id.family) {
    case Family::Euclidean:
      return {128, 128, 128};
    case Family::Sphere:
      return {512, 512, 512, 512, 512};
    default:
      return {512, 512, 512};
  }
}

Representation default_representation(const ManifoldId& id) {
  return id.family == Family::Sphere ? Representation::Embedded : Representation::Chart;
}

int feature_dim(const ManifoldId& id, Representation rep) {
  return rep == Representation::Embedded ? id.embedding_dim() : id.dim();
}

ScoreModel init_model(const ManifoldId& id, const std::vector<int>& hidden, NetKind kind,
                      Representation rep, std::uint64_t seed) {
  if (rep != default_representation(id)) {
    throw ValidationError(id.name() + " networks use the " + to_string(default_representation(id)) +
                          " representation");
  }
  const int D = feature_dim(id, rep);
  std::vector<int> dims{2 * D + 1};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(kind == NetKind::Potential ? 1 : D);
  Rng rng(seed);
  ScoreModel model;
  model.manifold = id;
  model.representation = rep;
  model.kind = kind;
  model.net = Mlp::glorot(std::move(dims), rng);
  model.seed = seed;
  return model;
}

namespace {

constexpr int kChunk = 64;

Vec features(const Manifold& m, Representation rep, const Point& p) {
  return rep == Representation::Embedded ? m.embed(p) : p.coords;
}

void check_model(const ScoreModel& model) {
  const int D = feature_dim(model.manifold, model.representation);
  const int out = model.kind == NetKind::Potential ? 1 : D;
  if (model.net.input_dim() != 2 * D + 1 || model.net.output_dim() != out) {
    throw ValidationError("network shape does not match " + model.manifold.name());
  }
}

// Record-major inputs and targets for a set of records.
struct Encoded {
  int in = 0;
  int out = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::size_t size() const { return in == 0 ? 0 : inputs.size() / in; }
};

Encoded encode_records(const ScoreModel& model, std::span<const DatasetRecord> records, int threads) {
  const Manifold m(model.manifold);
  const int D = feature_dim(model.manifold, model.representation);
  Encoded e;
  e.in = 2 * D + 1;
  e.out = D;
  e.inputs.resize(records.size() * e.in);
  e.targets.resize(records.size() * e.out);
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const DatasetRecord& r = records[i];
    if (!(r.dt > 0.0)) throw ValidationError("dataset record has a non-positive step");
    double* in = e.inputs.data() + i * e.in;
    Vec fx = features(m, model.representation, r.x0);
    Vec fy = features(m, model.representation, r.y);
    std::copy(fx.data(), fx.data() + D, in);
    std::copy(fy.data(), fy.data() + D, in + D);
    in[2 * D] = r.t;
    Vec tau = dsm_target(m, model.representation, model.dsm_mode, r);
    std::copy(tau.data(), tau.data() + D, e.targets.data() + i * e.out);
  });
  return e;
}

// Gathers the listed records into a feature-major block.
void gather(const Encoded& e, std::span<const std::size_t> idx, std::vector<double>& x, std::vector<double>& tau) {
  const std::size_t n = idx.size();
  x.resize(static_cast<std::size_t>(e.in) * n);
  tau.resize(static_cast<std::size_t>(e.out) * n);
  for (std::size_t c = 0; c < n; ++c) {
    const double* src = e.inputs.data() + idx[c] * e.in;
    for (int r = 0; r < e.in; ++r) x[r * n + c] = src[r];
    const double* t = e.targets.data() + idx[c] * e.out;
    for (int r = 0; r < e.out; ++r) tau[r * n + c] = t[r];
  }
}

// Raw predictions (D × n, feature-major) for a feature-major input block.
void predictions(const ScoreModel& model, const double* x, int n, MlpWorkspace& ws, std::vector<double>& pred) {
  const int D = feature_dim(model.manifold, model.representation);
  pred.resize(static_cast<std::size_t>(D) * n);
  if (model.kind == NetKind::Potential) {
    model.net.forward(x, n, ws);
    std::vector<double> ones(n, 1.0);
    std::vector<double> d_in(static_cast<std::size_t>(model.net.input_dim()) * n);
    model.net.backward(ws, ones.data(), nullptr, d_in.data());
    std::copy(d_in.begin() + static_cast<std::ptrdiff_t>(D) * n, d_in.begin() + static_cast<std::ptrdiff_t>(2 * D) * n,
              pred.begin());
  } else {
    model.net.forward(x, n, ws);
    pred = ws.act.back();
  }
  if (model.representation == Representation::Embedded) {
    const double* y = x + static_cast<std::size_t>(D) * n;
    for (int c = 0; c < n; ++c) {
      double dot = 0.0;
      for (int r = 0; r < D; ++r) dot += y[r * n + c] * pred[r * n + c];
      for (int r = 0; r < D; ++r) pred[r * n + c] -= dot * y[r * n + c];
    }
  }
}

// Loss and gradient over one chunk of gathered records; gradient scaled by `scale`.
double chunk_loss(const ScoreModel& model, const std::vector<double>& x, const std::vector<double>& tau, int n,
                  double scale, MlpWorkspace& ws, double* grad) {
  std::vector<double> pred;
  predictions(model, x.data(), n, ws, pred);
  const int D = static_cast<int>(pred.size()) / n;
  std::vector<double> resid(pred.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    resid[i] = pred[i] - tau[i];
    loss += 0.5 * resid[i] * resid[i];
  }
  if (grad == nullptr) return loss;
  for (double& r : resid) r *= scale;
  if (model.kind == NetKind::Potential) {
    std::vector<double> xdot(x.size(), 0.0);
    std::copy(resid.begin(), resid.end(), xdot.begin() + static_cast<std::ptrdiff_t>(D) * n);
    model.net.directional_param_grad(x.data(), xdot.data(), n, ws, grad);
  } else {
    model.net.backward(ws, resid.data(), grad, nullptr);
  }
  return loss;
}

DsmEvaluation dsm_core(const ScoreModel& model, const Encoded& e, std::span<const std::size_t> idx,
                       bool with_grad, int threads) {
  const std::size_t n = idx.size();
  if (n == 0) throw ValidationError("empty batch");
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  const std::size_t P = model.net.param_count();
  std::vector<double> losses(chunks, 0.0);
  std::vector<std::vector<double>> grads(with_grad ? chunks : 0);
  const double scale = 1.0 / static_cast<double>(n);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    std::vector<double> x, tau;
    gather(e, idx.subspan(lo, hi - lo), x, tau);
    MlpWorkspace ws;
    double* g = nullptr;
    if (with_grad) {
      grads[c].assign(P, 0.0);
      g = grads[c].data();
    }
    losses[c] = chunk_loss(model, x, tau, static_cast<int>(hi - lo), scale, ws, g);
  });
  DsmEvaluation out;
  for (double l : losses) out.loss += l;
  out.loss *= scale;
  if (with_grad) {
    out.grad = std::move(grads[0]);
    for (std::size_t c = 1; c < chunks; ++c) {
      for (std::size_t i = 0; i < P; ++i) out.grad[i] += grads[c][i];
    }
  }
  return out;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<double> encode_input(const ScoreModel& model, const Point& x0, const Point& y, double t) {
  const Manifold m(model.manifold);
  const int D = feature_dim(model.manifold, model.representation);
  Vec fx = features(m, model.representation, x0);
  Vec fy = features(m, model.representation, y);
  std::vector<double> in(2 * D + 1);
  std::copy(fx.data(), fx.data() + D, in.begin());
  std::copy(fy.data(), fy.data() + D, in.begin() + D);
  in[2 * D] = t;
  return in;
}

Vec dsm_target(const Manifold& m, Representation rep, DsmMode mode, const DatasetRecord& r) {
  if (!(r.dt > 0.0)) throw ValidationError("dataset record has a non-positive step");
  if (rep == Representation::Embedded) {
    // Ambient form of spherical Brownian motion: dX = -(n/2) X dt + P_X dW.
    Vec prev = m.embed(r.prev);
    Vec y = m.embed(r.y);
    Vec drifted = prev * (1.0 - 0.5 * m.dim() * r.dt);
    return m.project_ambient(r.y, (drifted - y) / r.dt);
  }
  Point prev = m.id().anchored() ? m.in_chart(r.prev, r.y.anchor) : r.prev;
  Vec drifted = prev.coords + r.dt * m.brownian_drift(prev);
  Vec diff = (drifted - r.y.coords) / r.dt;
  if (mode == DsmMode::MetricWeighted) return m.metric_tensor(prev) * diff;
  return diff;
}

Vec predict(const ScoreModel& model, const Point& x0, const Point& y, double t) {
  check_model(model);
  std::vector<double> in = encode_input(model, x0, y, t);
  MlpWorkspace ws;
  std::vector<double> pred;
  predictions(model, in.data(), 1, ws, pred);
  return Eigen::Map<Vec>(pred.data(), static_cast<Eigen::Index>(pred.size()));
}

namespace {

// Converts raw predictions at one fixed y into chart covectors.
class Decoder {
 public:
  Decoder(const ScoreModel& model, const Manifold& m, const Point& y) : rep_(model.representation) {
    if (rep_ == Representation::Embedded) {
      jt_ = m.embedding_jacobian(y).transpose();
    } else if (model.dsm_mode == DsmMode::Isotropic) {
      g_ = m.metric_tensor(y);
      shift_ = 2.0 * m.brownian_drift(y);
    } else {
      shift_ = m.christoffel_at(y).trace();
    }
  }

  Vec operator()(const Vec& pred) const {
    if (rep_ == Representation::Embedded) return jt_ * pred;
    if (g_.size() > 0) return g_ * (pred - shift_);
    return pred - shift_;
  }

 private:
  Representation rep_;
  Mat jt_;
  Mat g_;
  Vec shift_;
};

}  // namespace

Vec prediction_to_score(const ScoreModel& model, const Point& y, const Vec& prediction) {
  const Manifold m(model.manifold);
  return Decoder(model, m, y)(prediction);
}

DsmEvaluation dsm_loss(const ScoreModel& model, std::span<const DatasetRecord> records, bool with_grad,
                       int threads) {
  check_model(model);
  Encoded e = encode_records(model, records, threads);
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return dsm_core(model, e, idx, with_grad, threads);
}

ScoreModel train(const PathDataset& data, ScoreModel model, const TrainConfig& cfg, const TrainProgress& progress) {
  check_model(model);
  if (!(data.manifold == model.manifold)) {
    throw ValidationError("dataset is on " + data.manifold.name() + " but the model is for " + model.manifold.name());
  }
  if (data.records.empty()) throw ValidationError("dataset is empty");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.warmup_epochs < 0 || !(cfg.lr > 0.0)) {
    throw ValidationError("training configuration values must be positive");
  }
  model.dsm_mode = cfg.dsm_mode;
  model.seed = cfg.seed;
  model.t_max = 0.0;
  for (const DatasetRecord& r : data.records) model.t_max = std::max(model.t_max, r.t);

  const Encoded e = encode_records(model, data.records, cfg.threads);
  const std::size_t N = e.size();
  const std::size_t B = std::min<std::size_t>(cfg.batch_size, N);
  const std::size_t P = model.net.param_count();
  std::vector<double> m1(P, 0.0), m2(P, 0.0);
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  std::size_t cursor = N;
  const kernels::KernelTable& k = model.net.kernel_table();
  kernels::AdamCoeffs coeffs;

  model.loss_curve.clear();
  model.loss_curve.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cursor + B > N) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      cursor = 0;
    }
    std::span<const std::size_t> batch(order.data() + cursor, B);
    cursor += B;
    DsmEvaluation ev = dsm_core(model, e, batch, true, cfg.threads);
    if (!std::isfinite(ev.loss) || !all_finite(ev.grad)) {
      model.epochs_run = epoch;
      throw TrainingFailure("training diverged at epoch " + std::to_string(epoch), model);
    }
    const int step = epoch + 1;
    coeffs.step = learning_rate(cfg, epoch) / (1.0 - std::pow(coeffs.beta1, step));
    coeffs.bias2 = 1.0 / (1.0 - std::pow(coeffs.beta2, step));
    k.adam(P, model.net.params().data(), ev.grad.data(), m1.data(), m2.data(), coeffs);
    model.loss_curve.push_back(ev.loss);
    model.final_loss = ev.loss;
    model.epochs_run = epoch + 1;
    if (progress) progress(epoch, ev.loss);
  }
  return model;
}

// ---------------------------------------------------------------------------

namespace {

class NetworkProvider final : public ScoreProvider {
 public:
  explicit NetworkProvider(ScoreModel model) : model_(std::move(model)), manifold_(model_.manifold) {
    check_model(model_);
  }

  const Manifold& manifold() const override { return manifold_; }
  TimeInterval domain() const override { return {0.0, model_.t_max, false}; }
  std::string kind() const override { return "network"; }

  Vec score(const Point& x, const Point& y, double t) const override {
    return score_many(std::span<const Point>(&x, 1), y, t).front();
  }

  double dt_log_p(const Point& x, const Point& y, double t) const override {
    return dt_log_p_many(std::span<const Point>(&x, 1), y, t).front();
  }

  std::optional<double> log_p(const Point& x, const Point& y, double t) const override {
    if (model_.kind != NetKind::Potential) return std::nullopt;
    check_time(t);
    return model_.net(encode_input(model_, x, y, t)).front();
  }

  std::vector<Vec> score_many(std::span<const Point> xs, const Point& y, double t) const override {
    check_time(t);
    manifold_.validate(y);
    const Decoder decode(model_, manifold_, y);
    std::vector<Point> ys{y};
    Mat raw = raw_predictions(xs, ys, t);
    std::vector<Vec> out;
    out.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(decode(raw.col(static_cast<Eigen::Index>(i))));
    return out;
  }

  std::vector<double> dt_log_p_many(std::span<const Point> xs, const Point& y, double t) const override {
    return score_and_dt_many(xs, y, t).dts;
  }

  ScoresAndDts score_and_dt_many(std::span<const Point> xs, const Point& y, double t) const override {
    check_time(t);
    manifold_.validate(y);
    const int d = manifold_.dim();
    const double h = kScoreJacobianStep;
    std::vector<Point> ys{y};
    for (int l = 0; l < d; ++l) {
      for (double sign : {1.0, -1.0}) {
        Point p = y;
        p.coords[l] += sign * h;
        ys.push_back(std::move(p));
      }
    }
    std::vector<Decoder> decoders;
    decoders.reserve(ys.size());
    for (const Point& p : ys) decoders.emplace_back(model_, manifold_, p);
    const MetricData md = manifold_.metric_at(y);
    if (model_.kind == NetKind::Score) return with_tangents(xs, y, t, decoders, md);

    Mat raw = raw_predictions(xs, ys, t);
    const Eigen::Index per_x = static_cast<Eigen::Index>(ys.size());
    ScoresAndDts out;
    out.scores.reserve(xs.size());
    out.dts.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Eigen::Index base = static_cast<Eigen::Index>(i) * per_x;
      Vec s = decoders[0](raw.col(base));
      Mat J(d, d);
      for (int l = 0; l < d; ++l) {
        J.col(l) = (decoders[1 + 2 * l](raw.col(base + 1 + 2 * l)) -
                    decoders[2 + 2 * l](raw.col(base + 2 + 2 * l))) / (2.0 * h);
      }
      if (!J.allFinite()) throw NumericalError("network score Jacobian is not finite");
      out.dts.push_back(heat_equation_rhs(md, s, J));
      out.scores.push_back(std::move(s));
    }
    return out;
  }

 private:
  // Score nets: exact network Jacobian by forward-mode tangents along the chart
  // directions of y; the decoder's own dependence on y by central differences
  // at fixed network output.
  ScoresAndDts with_tangents(std::span<const Point> xs, const Point& y, double t,
                             const std::vector<Decoder>& decoders, const MetricData& md) const {
    const int d = manifold_.dim();
    const int D = feature_dim(model_.manifold, model_.representation);
    const int in = 2 * D + 1;
    const int blocks = d + 1;
    const bool embedded = model_.representation == Representation::Embedded;
    const Vec fy = features(manifold_, model_.representation, y);
    const Mat dfy = embedded ? manifold_.embedding_jacobian(y) : Mat(Mat::Identity(d, d));
    const double h = kScoreJacobianStep;
    const Vec offset = decoders[0](Vec::Zero(D));

    ScoresAndDts out;
    out.scores.reserve(xs.size());
    out.dts.reserve(xs.size());
    const std::size_t chunk = std::max<std::size_t>(1, 1024 / blocks);
    MlpWorkspace ws;
    std::vector<double> x;
    for (std::size_t lo = 0; lo < xs.size(); lo += chunk) {
      const int n = static_cast<int>(std::min(chunk, xs.size() - lo));
      const std::size_t wide = static_cast<std::size_t>(n) * blocks;
      x.assign(static_cast<std::size_t>(in) * wide, 0.0);
      for (int c = 0; c < n; ++c) {
        const Vec fx = features(manifold_, model_.representation, xs[lo + c]);
        for (int r = 0; r < D; ++r) {
          x[r * wide + c] = fx[r];
          x[(D + r) * wide + c] = fy[r];
          for (int l = 0; l < d; ++l) x[(D + r) * wide + static_cast<std::size_t>(l + 1) * n + c] = dfy(r, l);
        }
        x[2 * D * wide + c] = t;
      }
      model_.net.forward_tangents(x.data(), n, blocks, ws);
      const std::vector<double>& a = ws.act.back();
      for (int c = 0; c < n; ++c) {
        Vec raw(D);
        for (int r = 0; r < D; ++r) raw[r] = a[r * wide + c];
        Mat raw_dot(D, d);
        for (int l = 0; l < d; ++l) {
          for (int r = 0; r < D; ++r) raw_dot(r, l) = a[r * wide + static_cast<std::size_t>(l + 1) * n + c];
        }
        if (embedded) {
          // Tangent projection p - (y·p) y and its derivative.
          const double yp = fy.dot(raw);
          for (int l = 0; l < d; ++l) {
            const double rate = dfy.col(l).dot(raw) + fy.dot(raw_dot.col(l));
            raw_dot.col(l) -= rate * fy + yp * dfy.col(l);
          }
          raw -= yp * fy;
        }
        Vec s = decoders[0](raw);
        Mat J(d, d);
        for (int l = 0; l < d; ++l) {
          J.col(l) = decoders[0](raw_dot.col(l)) - offset +
                     (decoders[1 + 2 * l](raw) - decoders[2 + 2 * l](raw)) / (2.0 * h);
        }
        if (!J.allFinite()) throw NumericalError("network score Jacobian is not finite");
        out.dts.push_back(heat_equation_rhs(md, s, J));
        out.scores.push_back(std::move(s));
      }
    }
    return out;
  }

  // Predictions for every (x, y) pair, x-major, as columns.
  Mat raw_predictions(std::span<const Point> xs, const std::vector<Point>& ys, double t) const {
    const int D = feature_dim(model_.manifold, model_.representation);
    const int in = 2 * D + 1;
    std::vector<Vec> fy;
    for (const Point& y : ys) fy.push_back(features(manifold_, model_.representation, y));
    const std::size_t total = xs.size() * ys.size();
    Mat out(D, static_cast<Eigen::Index>(total));
    constexpr std::size_t kBlock = 1024;
    MlpWorkspace ws;
    std::vector<double> x, pred;
    for (std::size_t lo = 0; lo < total; lo += kBlock) {
      const std::size_t n = std::min(kBlock, total - lo);
      x.assign(static_cast<std::size_t>(in) * n, 0.0);
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t q = lo + c;
        Vec fx = features(manifold_, model_.representation, xs[q / ys.size()]);
        const Vec& f = fy[q % ys.size()];
        for (int r = 0; r < D; ++r) {
          x[r * n + c] = fx[r];
          x[(D + r) * n + c] = f[r];
        }
        x[2 * D * n + c] = t;
      }
      predictions(model_, x.data(), static_cast<int>(n), ws, pred);
      for (std::size_t c = 0; c < n; ++c) {
        for (int r = 0; r < D; ++r) out(r, static_cast<Eigen::Index>(lo + c)) = pred[r * n + c];
      }
    }
    return out;
  }

  ScoreModel model_;
  Manifold manifold_;
};

}  // namespace

std::unique_ptr<ScoreProvider> network_provider(ScoreModel model) {
  return std::make_unique<NetworkProvider>(std::move(model));
}

}  // namespace scoremean
