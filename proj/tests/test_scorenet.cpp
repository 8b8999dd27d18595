#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "scoremean/error.hpp"
#include "scoremean/heat_kernel.hpp"
#include "scoremean/scorenet.hpp"
#include "scoremean/time_derivative.hpp"

using namespace scoremean;
using namespace scoremean::heat_kernel;
using doctest::Approx;

namespace {

Manifold make(const char* name) { return Manifold(ManifoldId::parse(name)); }

Point random_point(const Manifold& m, Rng& rng) {
  if (m.id().family == Family::Sphere) {
    return m.point_from_embedded(rng.normal_vector(m.id().embedding_dim()).normalized());
  }
  Point p = m.origin();
  p.coords += 0.3 * rng.normal_vector(p.coords.size());
  return p;
}

DatasetRecord record_1d(double x0, double prev, double y, double t, double dt) {
  DatasetRecord r;
  r.x0.coords = Vec::Constant(1, x0);
  r.prev.coords = Vec::Constant(1, prev);
  r.y.coords = Vec::Constant(1, y);
  r.t = t;
  r.dt = dt;
  return r;
}

PathDataset small_dataset(const char* name, int starts, int steps, std::uint64_t seed) {
  const Manifold m = make(name);
  SamplingConfig cfg;
  cfg.n_starts = starts;
  cfg.n_steps = steps;
  return build_dataset(m, m.origin(), cfg, seed);
}

}  // namespace

TEST_CASE("enum names round trip") {
  for (Representation r : {Representation::Chart, Representation::Embedded})
    CHECK(parse_representation(to_string(r)) == r);
  for (NetKind k : {NetKind::Score, NetKind::Potential}) CHECK(parse_net_kind(to_string(k)) == k);
  for (DsmMode d : {DsmMode::Isotropic, DsmMode::MetricWeighted}) CHECK(parse_dsm_mode(to_string(d)) == d);
  CHECK_THROWS_AS(parse_dsm_mode("weighted"), ValidationError);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.epochs = 50000;
  CHECK(learning_rate(cfg, 0) == 0.0);
  CHECK(learning_rate(cfg, 500) == Approx(5e-4));
  CHECK(learning_rate(cfg, 1000) == Approx(1e-3));
  CHECK(learning_rate(cfg, 25500) == Approx(5e-4));
  CHECK(learning_rate(cfg, 49999) < 1e-11);
  CHECK(learning_rate(cfg, 50000) == 0.0);
  for (int e = 1000; e < 50000; e += 997) CHECK(learning_rate(cfg, e + 1) <= learning_rate(cfg, e));
}

TEST_CASE("model shapes") {
  const ManifoldId s2 = ManifoldId::parse("s2");
  const ScoreModel sm = init_model(s2, {8, 8}, NetKind::Score, Representation::Embedded, 1);
  CHECK(sm.net.dims() == std::vector<int>{7, 8, 8, 3});
  const ScoreModel pm = init_model(ManifoldId::parse("spd2"), {4}, NetKind::Potential, Representation::Chart, 1);
  CHECK(pm.net.dims() == std::vector<int>{7, 4, 1});
  CHECK(default_hidden(s2) == std::vector<int>(5, 512));
  CHECK(default_hidden(ManifoldId::parse("r2")) == std::vector<int>(3, 128));
  CHECK_THROWS_AS(init_model(s2, {4}, NetKind::Score, Representation::Chart, 1), ValidationError);
}

TEST_CASE("a zero network gives zero predictions") {
  ScoreModel model = init_model(ManifoldId::parse("r3"), {8, 8}, NetKind::Score, Representation::Chart, 3);
  std::fill(model.net.params().begin(), model.net.params().end(), 0.0);
  const Manifold m = make("r3");
  Rng rng(3);
  CHECK(predict(model, random_point(m, rng), random_point(m, rng), 0.5).norm() == 0.0);
}

TEST_CASE("single-record DSM loss") {
  ScoreModel model = init_model(ManifoldId::parse("r1"), {4}, NetKind::Score, Representation::Chart, 1);
  std::fill(model.net.params().begin(), model.net.params().end(), 0.0);
  const std::vector<DatasetRecord> recs{record_1d(0.0, 0.0, 0.1, 0.1, 0.01)};
  const Manifold m = make("r1");
  CHECK(dsm_target(m, Representation::Chart, DsmMode::Isotropic, recs[0])[0] == Approx(-10.0));
  CHECK(dsm_loss(model, recs).loss == Approx(50.0));

  DatasetRecord bad = recs[0];
  bad.dt = 0.0;
  CHECK_THROWS_AS(dsm_target(m, Representation::Chart, DsmMode::Isotropic, bad), ValidationError);
  CHECK_THROWS_AS(dsm_loss(model, std::vector<DatasetRecord>{bad}), ValidationError);
}

TEST_CASE("a network equal to the target has zero loss") {
  // With prev = x0 the target (x0 - y)/δ is linear in the input.
  const double dt = 0.02;
  ScoreModel model = init_model(ManifoldId::parse("r1"), {}, NetKind::Score, Representation::Chart, 1);
  model.net.params() = {1.0 / dt, -1.0 / dt, 0.0, 0.0};
  std::vector<DatasetRecord> recs;
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const double x0 = rng.normal();
    recs.push_back(record_1d(x0, x0, x0 + 0.1 * rng.normal(), dt, dt));
  }
  const DsmEvaluation ev = dsm_loss(model, recs);
  CHECK(ev.loss < 1e-24);
  for (double g : ev.grad) CHECK(std::abs(g) < 1e-10);
}

TEST_CASE("metric-weighted targets multiply by the metric at prev") {
  const Manifold m = make("spd2");
  const PathDataset d = small_dataset("spd2", 2, 5, 9);
  for (const DatasetRecord& r : d.records) {
    const Vec iso = dsm_target(m, Representation::Chart, DsmMode::Isotropic, r);
    const Vec weighted = dsm_target(m, Representation::Chart, DsmMode::MetricWeighted, r);
    CHECK((weighted - m.metric_tensor(r.prev) * iso).norm() < 1e-9 * (1.0 + weighted.norm()));
  }
}

TEST_CASE("DSM parameter gradient matches finite differences") {
  struct Case {
    const char* manifold;
    NetKind kind;
    DsmMode mode;
  };
  const Case cases[] = {{"r2", NetKind::Score, DsmMode::Isotropic},
                        {"r2", NetKind::Potential, DsmMode::Isotropic},
                        {"s2", NetKind::Score, DsmMode::Isotropic},
                        {"s2", NetKind::Potential, DsmMode::Isotropic},
                        {"sym2", NetKind::Score, DsmMode::MetricWeighted},
                        {"spd2", NetKind::Score, DsmMode::MetricWeighted}};
  for (const Case& c : cases) {
    CAPTURE(std::string(c.manifold));
    CAPTURE(to_string(c.kind));
    const ManifoldId id = ManifoldId::parse(c.manifold);
    ScoreModel model = init_model(id, {6, 5}, c.kind, default_representation(id), 21);
    model.dsm_mode = c.mode;
    PathDataset d = small_dataset(c.manifold, 3, 4, 22);
    const DsmEvaluation ev = dsm_loss(model, d.records);
    REQUIRE(ev.grad.size() == model.net.param_count());
    const double h = 1e-6;
    // Differences of a loss of size L carry roundoff near eps·L/h.
    const double floor = 1e-3 * std::max(1.0, ev.loss);
    double worst = 0.0;
    for (std::size_t i = 0; i < model.net.param_count(); ++i) {
      ScoreModel probe = model;
      probe.net.params()[i] += h;
      const double up = dsm_loss(probe, d.records, false).loss;
      probe.net.params()[i] -= 2 * h;
      const double down = dsm_loss(probe, d.records, false).loss;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - ev.grad[i]) / std::max({std::abs(fd), std::abs(ev.grad[i]), floor}));
    }
    CAPTURE(ev.loss);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("embedded predictions are tangent") {
  const ManifoldId id = ManifoldId::parse("s2");
  const Manifold m(id);
  Rng rng(5);
  for (NetKind kind : {NetKind::Score, NetKind::Potential}) {
    const ScoreModel model = init_model(id, {16, 16}, kind, Representation::Embedded, 6);
    for (int i = 0; i < 20; ++i) {
      const Point x = random_point(m, rng), y = random_point(m, rng);
      const Vec p = predict(model, x, y, rng.uniform(0.1, 1.0));
      CHECK(std::abs(p.dot(m.embed(y))) < 1e-12);
      CHECK((m.project_ambient(y, p) - p).norm() < 1e-10);
    }
  }
}

TEST_CASE("decoding raw predictions into chart covectors") {
  Rng rng(6);
  SUBCASE("embedded nets pull back with the embedding Jacobian") {
    const ScoreModel model = init_model(ManifoldId::parse("s2"), {8}, NetKind::Score, Representation::Embedded, 1);
    const Manifold m = make("s2");
    const Point y = random_point(m, rng);
    const Vec p = m.project_ambient(y, rng.normal_vector(3));
    CHECK((prediction_to_score(model, y, p) - m.embedding_jacobian(y).transpose() * p).norm() < 1e-14);
  }
  SUBCASE("flat isotropic nets are already covectors") {
    const ScoreModel model = init_model(ManifoldId::parse("r2"), {8}, NetKind::Score, Representation::Chart, 1);
    const Vec p = rng.normal_vector(2);
    CHECK((prediction_to_score(model, make("r2").origin(), p) - p).norm() == 0.0);
  }
  SUBCASE("curved chart nets remove the drift") {
    ScoreModel model = init_model(ManifoldId::parse("spd2"), {8}, NetKind::Score, Representation::Chart, 1);
    const Manifold m = make("spd2");
    const Point y = random_point(m, rng);
    const Vec p = rng.normal_vector(3);
    const Vec iso = m.metric_tensor(y) * (p - 2.0 * m.brownian_drift(y));
    CHECK((prediction_to_score(model, y, p) - iso).norm() < 1e-10 * (1.0 + iso.norm()));
    model.dsm_mode = DsmMode::MetricWeighted;
    const Vec weighted = p - m.christoffel_at(y).trace();
    CHECK((prediction_to_score(model, y, p) - weighted).norm() < 1e-12 * (1.0 + weighted.norm()));
  }
}

TEST_CASE("potential-net scores are gradients of the potential") {
  Rng rng(7);
  for (const char* name : {"r2", "s2"}) {
    CAPTURE(name);
    const ManifoldId id = ManifoldId::parse(name);
    const Manifold m(id);
    ScoreModel model = init_model(id, {12, 12}, NetKind::Potential, default_representation(id), 8);
    model.t_max = 1.0;
    const auto provider = network_provider(model);
    for (int i = 0; i < 10; ++i) {
      const Point x = random_point(m, rng), y = random_point(m, rng);
      const double t = rng.uniform(0.1, 1.0);
      const Vec s = provider->score(x, y, t);
      const double h = 1e-5;
      for (int k = 0; k < m.dim(); ++k) {
        Point yp = y, ym = y;
        yp.coords[k] += h;
        ym.coords[k] -= h;
        const double fd = (*provider->log_p(x, yp, t) - *provider->log_p(x, ym, t)) / (2 * h);
        CHECK(s[k] == Approx(fd).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("network provider") {
  const ManifoldId id = ManifoldId::parse("r2");
  ScoreModel model = init_model(id, {8}, NetKind::Score, Representation::Chart, 2);
  model.t_max = 0.8;
  const auto provider = network_provider(model);
  CHECK(provider->kind() == "network");
  CHECK(provider->domain().hi == 0.8);
  CHECK(!provider->log_p(make("r2").origin(), make("r2").origin(), 0.5).has_value());
  CHECK_THROWS_AS(provider->score(make("r2").origin(), make("r2").origin(), 0.9), DomainError);
  Rng rng(8);
  const Manifold m(id);
  const Point x = random_point(m, rng), y = random_point(m, rng);
  CHECK((provider->score(x, y, 0.5) - predict(model, x, y, 0.5)).norm() < 1e-14);

  ScoreModel wrong = model;
  wrong.manifold = ManifoldId::parse("r3");
  CHECK_THROWS_AS(network_provider(wrong), ValidationError);
}

TEST_CASE("network time derivative matches finite differences of its score") {
  struct Case {
    const char* manifold;
    Representation rep;
    DsmMode mode;
  };
  const std::vector<Case> cases{{"s2", Representation::Embedded, DsmMode::Isotropic},
                                {"r2", Representation::Chart, DsmMode::Isotropic},
                                {"lm2x2", Representation::Chart, DsmMode::MetricWeighted},
                                {"spd2", Representation::Chart, DsmMode::Isotropic},
                                {"spd2", Representation::Chart, DsmMode::MetricWeighted}};
  Rng rng(31);
  for (const Case& c : cases) {
    CAPTURE(std::string(c.manifold));
    const Manifold m = make(c.manifold);
    ScoreModel model = init_model(m.id(), {12, 12}, NetKind::Score, c.rep, 5);
    model.dsm_mode = c.mode;
    const auto provider = network_provider(model);
    std::vector<Point> xs;
    for (int i = 0; i < 7; ++i) xs.push_back(random_point(m, rng));
    const Point y = random_point(m, rng);
    const ScoresAndDts both = provider->score_and_dt_many(xs, y, 0.4);
    const std::vector<Vec> scores = provider->score_many(xs, y, 0.4);
    REQUIRE(both.dts.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK((both.scores[i] - scores[i]).norm() <= 1e-12 * (1.0 + scores[i].norm()));
      const double fd = dt_log_p_from_score(*provider, xs[i], y, 0.4, JacobianMode::FiniteDifference);
      CHECK(both.dts[i] == Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("time derivative from the score") {
  Rng rng(9);
  SUBCASE("Euclidean reduction is exact") {
    const auto oracle = oracle_provider(ManifoldId::parse("r3"));
    const Manifold& m = oracle->manifold();
    for (int i = 0; i < 20; ++i) {
      const Point x = random_point(m, rng), y = random_point(m, rng);
      const double t = rng.uniform(0.05, 1.0);
      const double want = euclid_dt_log_p(x.coords, y.coords, t);
      const double exact = dt_log_p_from_score(*oracle, x, y, t, JacobianMode::Exact);
      const double r = (x.coords - y.coords).squaredNorm();
      CHECK(want == Approx(0.5 * (-3.0 / t + r / (t * t))).epsilon(1e-14));
      CHECK(std::abs(exact - want) <= 1e-13 * (1.0 + std::abs(want)));
      CHECK(dt_log_p_from_score(*oracle, x, y, t, JacobianMode::FiniteDifference) ==
            Approx(want).epsilon(1e-6).scale(1.0));
    }
  }
  SUBCASE("sphere agrees with the series") {
    const auto oracle = oracle_provider(ManifoldId::parse("s2"));
    const Manifold& m = oracle->manifold();
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Point x = random_point(m, rng), y = random_point(m, rng);
      const double t = rng.uniform(0.2, 1.0);
      const double want = sphere_dt_log_p(m.embed(x), m.embed(y), t);
      worst = std::max(worst, std::abs(dt_log_p_from_score(*oracle, x, y, t, JacobianMode::FiniteDifference) - want));
    }
    CHECK(worst < 1e-3);
  }
  SUBCASE("sphere peak is negative with no score term") {
    const auto oracle = oracle_provider(ManifoldId::parse("s2"));
    const Manifold& m = oracle->manifold();
    const Point x = random_point(m, rng);
    CHECK(oracle->score(x, x, 0.5).norm() < 1e-12);
    CHECK(dt_log_p_from_score(*oracle, x, x, 0.5, JacobianMode::FiniteDifference) < 0.0);
  }
}

TEST_CASE("training is deterministic in the seed") {
  const PathDataset d = small_dataset("r1", 32, 10, 10);
  const ScoreModel init = init_model(d.manifold, {16, 16}, NetKind::Score, Representation::Chart, 11);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.warmup_epochs = 10;
  cfg.batch_size = 64;
  cfg.seed = 12;
  const ScoreModel a = train(d, init, cfg);
  const ScoreModel b = train(d, init, cfg);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.net.params() == b.net.params());
  CHECK(a.epochs_run == 60);
  CHECK(a.final_loss == a.loss_curve.back());
  CHECK(a.t_max == Approx(1.0));
  cfg.seed = 13;
  CHECK(train(d, init, cfg).loss_curve != a.loss_curve);
}

TEST_CASE("training input validation") {
  const PathDataset d = small_dataset("r1", 4, 5, 1);
  const ScoreModel model = init_model(ManifoldId::parse("r2"), {4}, NetKind::Score, Representation::Chart, 1);
  CHECK_THROWS_AS(train(d, model, TrainConfig{}), ValidationError);
  TrainConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(train(d, init_model(d.manifold, {4}, NetKind::Score, Representation::Chart, 1), bad),
                  ValidationError);
}

TEST_CASE("divergent training reports the last good model") {
  const PathDataset d = small_dataset("r1", 8, 5, 2);
  const ScoreModel init = init_model(d.manifold, {8}, NetKind::Score, Representation::Chart, 3);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.warmup_epochs = 0;
  cfg.lr = 1e300;
  try {
    train(d, init, cfg);
    FAIL("training should have diverged");
  } catch (const TrainingFailure& e) {
    const ScoreModel& good = e.last_good();
    CHECK(good.epochs_run < 50);
    for (double p : good.net.params()) CHECK(std::isfinite(p));
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("toy training reaches the analytic loss floor") {
  const Manifold m = make("r1");
  const PathDataset train_set = small_dataset("r1", 256, 100, 31);
  const PathDataset held_out = small_dataset("r1", 256, 100, 32);
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.seed = 33;
  const ScoreModel model =
      train(train_set, init_model(m.id(), default_hidden(m.id()), NetKind::Score, Representation::Chart, 34), cfg);

  // Plug the analytic score into the same loss.
  double floor = 0.0, floor_sq = 0.0;
  const std::size_t n = held_out.records.size();
  for (const DatasetRecord& r : held_out.records) {
    const Vec s = euclid_score(r.x0.coords, r.y.coords, r.t);
    const double l = 0.5 * (s - dsm_target(m, Representation::Chart, DsmMode::Isotropic, r)).squaredNorm();
    floor += l / n;
    floor_sq += l * l / n;
  }
  const double se = std::sqrt((floor_sq - floor * floor) / n);
  const double trained = dsm_loss(model, held_out.records, false).loss;
  CAPTURE(floor);
  CAPTURE(trained);
  CHECK(std::abs(trained - floor) < 0.1 * floor);
  CHECK(trained > floor - 3.0 * se);
}
