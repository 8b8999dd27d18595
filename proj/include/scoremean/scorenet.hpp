#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scoremean/error.hpp"
#include "scoremean/mlp.hpp"
#include "scoremean/sampler.hpp"
#include "scoremean/score_provider.hpp"

namespace scoremean {

/// Chart: the network sees chart coordinates. Embedded: it sees ambient
/// coordinates and its output is projected onto T_y.
enum class Representation { Chart, Embedded };
/// Score: the network outputs the score. Potential: it outputs a scalar whose
/// y-gradient is the score.
enum class NetKind { Score, Potential };
/// Isotropic regresses on (prev_drifted - y)/δ; metric-weighted on
/// g(prev)(prev_drifted - y)/δ.
enum class DsmMode { Isotropic, MetricWeighted };

std::string to_string(Representation r);
std::string to_string(NetKind k);
std::string to_string(DsmMode m);
Representation parse_representation(std::string_view text);
NetKind parse_net_kind(std::string_view text);
DsmMode parse_dsm_mode(std::string_view text);

struct TrainConfig {
  int epochs = 50000;  // one epoch is one minibatch step
  double lr = 1e-3;
  int warmup_epochs = 1000;
  int batch_size = 256;
  DsmMode dsm_mode = DsmMode::Isotropic;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

/// Linear warmup from 0 to cfg.lr, then cosine decay to 0 at cfg.epochs.
double learning_rate(const TrainConfig& cfg, int epoch);

/// A trained (or initialized) score model and its training record.
struct ScoreModel {
  ManifoldId manifold;
  Representation representation = Representation::Chart;
  NetKind kind = NetKind::Score;
  DsmMode dsm_mode = DsmMode::Isotropic;
  Mlp net;
  double t_max = 1.0;
  std::uint64_t seed = kDefaultSeed;
  int epochs_run = 0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;
};

/// Hidden widths per family: 512×5 for spheres, 128×3 otherwise.
std::vector<int> default_hidden(const ManifoldId& id);
/// Embedded for spheres, chart for the rest.
Representation default_representation(const ManifoldId& id);
/// Width of the coordinates the network sees for one point.
int feature_dim(const ManifoldId& id, Representation rep);

/// Glorot-initialized model with input 2D+1 and output D (score) or 1 (potential).
ScoreModel init_model(const ManifoldId& id, const std::vector<int>& hidden, NetKind kind,
                      Representation rep, std::uint64_t seed);

/// Network input [x0; y; t] for one query.
std::vector<double> encode_input(const ScoreModel& model, const Point& x0, const Point& y, double t);
/// DSM regression target for one record, in the network's output space.
Vec dsm_target(const Manifold& m, Representation rep, DsmMode mode, const DatasetRecord& r);

/// Raw network prediction of the regression target (projected onto T_y when
/// embedded). For potential nets this is the y-gradient of the output.
Vec predict(const ScoreModel& model, const Point& x0, const Point& y, double t);
/// Chart covector ∂_y log p_t(x0, y) implied by a raw prediction.
Vec prediction_to_score(const ScoreModel& model, const Point& y, const Vec& prediction);

struct DsmEvaluation {
  double loss = 0.0;
  std::vector<double> grad;  // empty unless requested
};

/// Mean over records of ½‖prediction - target‖², with the exact parameter
/// gradient when `with_grad`.
DsmEvaluation dsm_loss(const ScoreModel& model, std::span<const DatasetRecord> records,
                       bool with_grad = true, int threads = 1);

/// Thrown when the loss or gradient becomes non-finite. Holds the parameters
/// from before the failing step.
class TrainingFailure : public NumericalError {
 public:
  TrainingFailure(const std::string& what, ScoreModel last_good)
      : NumericalError(what), last_good_(std::make_shared<ScoreModel>(std::move(last_good))) {}
  const ScoreModel& last_good() const { return *last_good_; }

 private:
  std::shared_ptr<ScoreModel> last_good_;
};

using TrainProgress = std::function<void(int epoch, double loss)>;

/// Adam with bias correction on minibatches drawn with the config seed.
ScoreModel train(const PathDataset& data, ScoreModel model, const TrainConfig& cfg,
                 const TrainProgress& progress = {});

/// ScoreProvider backed by a model. dt_log_p uses the score-Laplacian identity
/// with a finite-difference Jacobian.
std::unique_ptr<ScoreProvider> network_provider(ScoreModel model);

}  // namespace scoremean
