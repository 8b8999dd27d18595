#include "scoremean/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "scoremean/apps.hpp"
#include "scoremean/error.hpp"
#include "scoremean/estimators.hpp"
#include "scoremean/io.hpp"
#include "scoremean/sampler.hpp"
#include "scoremean/scorenet.hpp"

namespace scoremean::cli {

namespace {

using io::Json;

int default_threads() {
  const char* env = std::getenv(kThreadsEnv);
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  return (end != env && *end == '\0' && v >= 1) ? static_cast<int>(v) : 1;
}

struct Common {
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

struct ProviderOptions {
  std::string manifold;
  std::string provider = "oracle";
  bool oracle = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (default from SCOREMEAN_THREADS)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_provider(CLI::App* sub, ProviderOptions& p) {
  sub->add_option("--manifold", p.manifold, "Manifold id: r<n>, s<n>, sym<n>, spd<n>, lm<k>x<a>");
  sub->add_option("--provider", p.provider, "'oracle' or a checkpoint path")->capture_default_str();
  sub->add_flag("--oracle", p.oracle, "Use the closed-form heat kernel (same as --provider oracle)");
}

std::unique_ptr<ScoreProvider> make_provider(const ProviderOptions& p) {
  if (p.oracle || p.provider == "oracle") {
    if (p.manifold.empty()) throw ValidationError("--manifold is required with the oracle provider");
    return oracle_provider(ManifoldId::parse(p.manifold));
  }
  ScoreModel model = io::load_checkpoint(p.provider);
  if (!p.manifold.empty() && !(ManifoldId::parse(p.manifold) == model.manifold)) {
    throw ValidationError("--manifold " + p.manifold + " does not match the checkpoint's " + model.manifold.name());
  }
  return network_provider(std::move(model));
}

std::vector<Point> read_points(const std::string& path, const Manifold& m) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return io::read_points_csv(in, m);
}

void emit(const Json& j, const std::string& out_path, std::ostream& out) {
  const std::string text = j.dump(1) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    io::write_text_file(out_path, text);
  }
}

Json provider_config(const ProviderOptions& p, const ScoreProvider& provider) {
  return Json{{"manifold", provider.manifold().id().name()},
              {"provider", p.oracle ? std::string("oracle") : p.provider},
              {"provider_kind", provider.kind()}};
}

std::vector<int> parse_arch(const std::string& text) {
  std::vector<int> widths;
  auto to_int = [&](const std::string& s) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || v < 1) throw ValidationError("--arch '" + text + "' is malformed");
    return static_cast<int>(v);
  };
  if (const auto x = text.find('x'); x != std::string::npos) {
    widths.assign(to_int(text.substr(x + 1)), to_int(text.substr(0, x)));
    return widths;
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) widths.push_back(to_int(part));
  if (widths.empty()) throw ValidationError("--arch '" + text + "' is malformed");
  return widths;
}

// ---------------------------------------------------------------------------

struct SampleOptions {
  Common common;
  std::string manifold;
  std::string x0 = "origin";
  int paths = 1024;
  int per_start = 1;
  int batches = 1;
  double T = 1.0;
  int steps = 100;
  std::string sampler = "coords";
  std::string out;
  std::string endpoints_out;
};

int cmd_sample(const SampleOptions& o, std::ostream& out) {
  if (o.out.empty() && o.endpoints_out.empty()) throw ValidationError("give --out and/or --endpoints-out");
  const Manifold m(ManifoldId::parse(o.manifold));
  SamplingConfig cfg;
  cfg.n_starts = o.paths;
  cfg.paths_per_start = o.per_start;
  cfg.n_batches = o.batches;
  cfg.T = o.T;
  cfg.n_steps = o.steps;
  if (o.sampler == "coords") {
    cfg.kind = SamplerKind::Coords;
  } else if (o.sampler == "tangent") {
    cfg.kind = SamplerKind::Tangent;
  } else {
    throw ValidationError("--sampler must be 'coords' or 'tangent'");
  }
  const Point x0 = io::parse_point(m, o.x0);
  const PathDataset data = build_dataset(m, x0, cfg, o.common.seed, o.common.threads);
  const Json config{{"command", "sample"},   {"manifold", m.id().name()}, {"x0", io::to_json(x0)},
                    {"paths", o.paths},      {"per_start", o.per_start},  {"batches", o.batches},
                    {"T", o.T},              {"steps", o.steps},          {"sampler", o.sampler},
                    {"seed", o.common.seed}};
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + o.out + "'");
    io::write_dataset(f, data, Json{{"config", config}});
  }
  if (!o.endpoints_out.empty()) {
    std::vector<Point> ends;
    for (std::size_t i = o.steps - 1; i < data.records.size(); i += o.steps) ends.push_back(data.records[i].y);
    std::ofstream f(o.endpoints_out, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + o.endpoints_out + "'");
    io::write_points_csv(f, m, ends, {config.dump()});
  }
  out << Json{{"command", "sample"}, {"records", data.records.size()}, {"seed", o.common.seed}}.dump() << '\n';
  return 0;
}

struct TrainOptions {
  Common common;
  std::string data;
  std::string arch;
  std::string kind = "score";
  std::string dsm_mode = "isotropic";
  int epochs = 50000;
  double lr = 1e-3;
  int warmup = 1000;
  int batch = 256;
  int log_every = 0;
  std::string out;
};

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  std::ifstream in(o.data);
  if (!in) throw ValidationError("cannot open '" + o.data + "'");
  const PathDataset data = io::read_dataset(in);
  const std::vector<int> hidden = o.arch.empty() ? default_hidden(data.manifold) : parse_arch(o.arch);
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.warmup_epochs = o.warmup;
  cfg.batch_size = o.batch;
  cfg.dsm_mode = parse_dsm_mode(o.dsm_mode);
  cfg.seed = o.common.seed;
  cfg.threads = o.common.threads;
  ScoreModel model = init_model(data.manifold, hidden, parse_net_kind(o.kind),
                                default_representation(data.manifold), o.common.seed);
  TrainProgress progress;
  if (o.log_every > 0) {
    progress = [&](int epoch, double loss) {
      if (epoch % o.log_every == 0) err << "epoch " << epoch << " loss " << io::format_double(loss) << '\n';
    };
  }
  try {
    model = train(data, std::move(model), cfg, progress);
  } catch (const TrainingFailure& f) {
    io::save_checkpoint(o.out, f.last_good());
    throw;
  }
  io::save_checkpoint(o.out, model);
  out << Json{{"command", "train-score"},
              {"checkpoint", o.out},
              {"manifold", model.manifold.name()},
              {"layer_dims", model.net.dims()},
              {"epochs", model.epochs_run},
              {"final_loss", model.final_loss},
              {"seed", model.seed},
              {"simd", kernels::isa_name(model.net.kernel_table().isa)}}
             .dump()
      << '\n';
  return 0;
}

struct MeanOptions {
  Common common;
  ProviderOptions provider;
  std::string data;
  double alpha = 0.1;
  std::optional<double> alpha_t;
  double t0 = 0.2;
  int iters = 1000;
  std::string method;
  double grad_tol = 1e-6;
  double t_min = 0.01;
  std::string mu0;
  std::string out;
};

int cmd_diffusion_mean(const MeanOptions& o, std::ostream& out) {
  auto provider = make_provider(o.provider);
  const Manifold& m = provider->manifold();
  const std::vector<Point> data = read_points(o.data, m);
  OptimizerConfig cfg;
  cfg.alpha = o.alpha;
  cfg.alpha_t = o.alpha_t;
  cfg.t0 = o.t0;
  cfg.iters = o.iters;
  if (!o.method.empty()) cfg.method = parse_optim_method(o.method);
  cfg.grad_tol = o.grad_tol;
  cfg.t_min = o.t_min;
  if (!o.mu0.empty()) cfg.mu0 = io::parse_point(m, o.mu0);
  cfg.threads = o.common.threads;
  const MeanEstimate est = diffusion_mean(*provider, data, cfg);
  Json config = provider_config(o.provider, *provider);
  config.update(Json{{"data", o.data},
                     {"alpha", o.alpha},
                     {"alpha_t", cfg.alpha_t.value_or(o.alpha)},
                     {"t0", o.t0},
                     {"iters", o.iters},
                     {"method", to_string(cfg.method.value_or(default_method(m.id())))},
                     {"grad_tol", o.grad_tol},
                     {"t_min", o.t_min},
                     {"seed", o.common.seed}});
  emit(Json{{"command", "diffusion-mean"}, {"config", config}, {"estimate", io::to_json(est, m)}}, o.out, out);
  return 0;
}

struct FrechetOptions {
  Common common;
  ProviderOptions provider;
  std::string data;
  std::optional<double> alpha;
  int iters = 1000;
  double grad_tol = 1e-6;
  double t_small = 0.05;
  std::string mu0;
  std::string out;
};

int cmd_frechet_mean(const FrechetOptions& o, std::ostream& out) {
  auto provider = make_provider(o.provider);
  const Manifold& m = provider->manifold();
  const std::vector<Point> data = read_points(o.data, m);
  FrechetConfig cfg;
  cfg.alpha = o.alpha;
  cfg.iters = o.iters;
  cfg.grad_tol = o.grad_tol;
  if (!o.mu0.empty()) cfg.mu0 = io::parse_point(m, o.mu0);
  cfg.threads = o.common.threads;
  const MeanEstimate est = frechet_mean(*provider, data, cfg, o.t_small);
  Json config = provider_config(o.provider, *provider);
  config.update(Json{{"data", o.data},
                     {"alpha", cfg.alpha.value_or(m.id().family == Family::Sphere ? 0.01 : 0.1)},
                     {"iters", o.iters},
                     {"grad_tol", o.grad_tol},
                     {"t_small", o.t_small},
                     {"seed", o.common.seed}});
  emit(Json{{"command", "frechet-mean"}, {"config", config}, {"estimate", io::to_json(est, m)}}, o.out, out);
  return 0;
}

struct PairOptions {
  Common common;
  ProviderOptions provider;
  std::string x;
  std::string y;
  double t = 0.05;
  std::string out;
};

int cmd_logmap(const PairOptions& o, std::ostream& out) {
  auto provider = make_provider(o.provider);
  const Manifold& m = provider->manifold();
  const Point x = io::parse_point(m, o.x);
  const Point y = io::parse_point(m, o.y);
  const TangentVector v = log_map_score(*provider, x, y, o.t);
  Json result{{"base", io::to_json(y)}, {"log", io::to_json(v.components)}, {"norm", m.norm(v)}};
  if (m.has_embedding()) result["ambient"] = io::to_json(m.pushforward(v));
  if (m.has_closed_form_log()) {
    try {
      result["closed_form"] = io::to_json(m.log(y, x).components);
    } catch (const CutLocusError&) {
      result["closed_form"] = nullptr;
    }
  }
  Json config = provider_config(o.provider, *provider);
  config.update(Json{{"x", o.x}, {"y", o.y}, {"t", o.t}, {"seed", o.common.seed}});
  emit(Json{{"command", "logmap"}, {"config", config}, {"result", result}}, o.out, out);
  return 0;
}

int cmd_dist(const PairOptions& o, std::ostream& out) {
  auto provider = make_provider(o.provider);
  const Manifold& m = provider->manifold();
  const Point x = io::parse_point(m, o.x);
  const Point y = io::parse_point(m, o.y);
  const VaradhanDistance d = varadhan_distance(*provider, x, y, o.t);
  Json result{{"distance", d.value}, {"clamped", d.clamped}};
  if (m.has_closed_form_log()) {
    try {
      result["geodesic"] = m.distance(x, y);
    } catch (const CutLocusError&) {
      result["geodesic"] = nullptr;
    }
  }
  Json config = provider_config(o.provider, *provider);
  config.update(Json{{"x", o.x}, {"y", o.y}, {"t", o.t}, {"seed", o.common.seed}});
  emit(Json{{"command", "dist"}, {"config", config}, {"result", result}}, o.out, out);
  return 0;
}

struct KMeansOptions {
  Common common;
  ProviderOptions provider;
  std::string data;
  int k = 0;
  int iters = 10;
  double t_rank = 0.1;
  double t_small = 0.1;
  int frechet_iters = 100;
  double frechet_step = 0.1;
  std::string init;
  std::string out;
};

int cmd_kmeans(const KMeansOptions& o, std::ostream& out) {
  auto provider = make_provider(o.provider);
  const Manifold& m = provider->manifold();
  const std::vector<Point> data = read_points(o.data, m);
  KMeansConfig cfg;
  cfg.k = o.k;
  cfg.iters = o.iters;
  cfg.t_rank = o.t_rank;
  cfg.t_small = o.t_small;
  cfg.frechet_iters = o.frechet_iters;
  cfg.frechet_step = o.frechet_step;
  if (!o.init.empty()) cfg.init_centroids = read_points(o.init, m);
  cfg.seed = o.common.seed;
  cfg.threads = o.common.threads;
  const KMeansResult res = riemannian_kmeans(*provider, data, cfg);
  Json config = provider_config(o.provider, *provider);
  config.update(Json{{"data", o.data},
                     {"k", o.k},
                     {"iters", o.iters},
                     {"t_rank", o.t_rank},
                     {"t_small", o.t_small},
                     {"frechet_iters", o.frechet_iters},
                     {"frechet_step", o.frechet_step},
                     {"seed", o.common.seed}});
  emit(Json{{"command", "kmeans"}, {"config", config}, {"result", io::to_json(res, m)}}, o.out, out);
  return 0;
}

struct RegressOptions {
  Common common;
  ProviderOptions provider;
  std::string covariates;
  std::string responses;
  std::string mode = "geodesic";
  std::string sigma_mode = "constant_sigma";
  int iters = 1000;
  double lr = 0.01;
  double sigma0 = 0.5;
  std::string out;
};

int cmd_regress(const RegressOptions& o, std::ostream& out) {
  if (o.mode != "geodesic") throw ValidationError("--mode must be 'geodesic'");
  auto provider = make_provider(o.provider);
  const Manifold& m = provider->manifold();
  std::ifstream cin_file(o.covariates);
  if (!cin_file) throw ValidationError("cannot open '" + o.covariates + "'");
  const std::vector<Vec> xs = io::read_rows_csv(cin_file);
  const std::vector<Point> ys = read_points(o.responses, m);
  RegressionConfig cfg;
  cfg.iters = o.iters;
  cfg.lr = o.lr;
  cfg.sigma0 = o.sigma0;
  cfg.sigma_mode = parse_sigma_mode(o.sigma_mode);
  cfg.seed = o.common.seed;
  cfg.threads = o.common.threads;
  const RegressionModel model = mlrr_fit(*provider, xs, ys, cfg);
  Json config = provider_config(o.provider, *provider);
  config.update(Json{{"covariates", o.covariates},
                     {"responses", o.responses},
                     {"mode", o.mode},
                     {"sigma_mode", to_string(cfg.sigma_mode)},
                     {"iters", o.iters},
                     {"lr", o.lr},
                     {"sigma0", o.sigma0},
                     {"seed", o.common.seed}});
  emit(Json{{"command", "regress"}, {"config", config}, {"model", io::to_json(model, m)}}, o.out, out);
  return 0;
}

struct BenchmarkOptions {
  Common common;
  std::string suite = "table1-desk";
  bool oracle_only = false;
  std::string checkpoints;
  std::vector<std::string> manifolds{"r2", "r3", "s2", "s3", "sym2"};
  int paths = 1000;
  double T = 0.5;
  int steps = 100;
  int iters = 1000;
  std::string out;
};

int cmd_benchmark(const BenchmarkOptions& o, std::ostream& out, std::ostream& err) {
  if (o.suite != "table1-desk") throw ValidationError("unknown --suite '" + o.suite + "'");
  std::ostringstream csv;
  csv << "manifold,provider,mu_err,t_err,iters,seed\n";
  for (const std::string& name : o.manifolds) {
    const ManifoldId id = ManifoldId::parse(name);
    const Manifold m(id);
    const Point x0 = m.origin();
    const std::vector<Point> data =
        sample_endpoints(m, x0, o.T, o.steps, o.paths, o.common.seed, SamplerKind::Coords, o.common.threads);
    std::vector<std::pair<std::string, std::unique_ptr<ScoreProvider>>> providers;
    providers.emplace_back("oracle", oracle_provider(id));
    if (!o.oracle_only) {
      const std::filesystem::path ckpt = std::filesystem::path(o.checkpoints) / (name + ".json");
      if (!o.checkpoints.empty() && std::filesystem::exists(ckpt)) {
        providers.emplace_back("network", network_provider(io::load_checkpoint(ckpt)));
      } else {
        err << "benchmark: no checkpoint " << ckpt.string() << ", skipping the network row for " << name << '\n';
      }
    }
    for (const auto& [label, provider] : providers) {
      OptimizerConfig cfg;
      cfg.iters = o.iters;
      cfg.threads = o.common.threads;
      const MeanEstimate est = diffusion_mean(*provider, data, cfg);
      csv << name << ',' << label << ',' << io::format_double(m.distance(est.mu, x0)) << ','
          << io::format_double(std::abs(*est.t - o.T)) << ',' << est.iters_used << ',' << o.common.seed << '\n';
    }
  }
  if (o.out.empty()) {
    out << csv.str();
  } else {
    io::write_text_file(o.out, csv.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

// Appends settings from a JSON --config file for every option not given on
// the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  auto it = std::find_if(args.begin(), args.end(),
                         [](const std::string& a) { return a == "--config" || a.starts_with("--config="); });
  if (it == args.end()) return args;
  std::string path;
  if (*it == "--config") {
    if (std::next(it) == args.end()) throw ValidationError("--config needs a file name");
    path = *std::next(it);
    args.erase(it, std::next(it, 2));
  } else {
    path = it->substr(9);
    args.erase(it);
  }
  const Json cfg = io::read_json_file(path);
  if (!cfg.is_object()) throw ValidationError("config file must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.starts_with(flag + "=");
    });
    if (given) continue;
    auto scalar = [&](const Json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_float()) return io::format_double(v.get<double>());
      return v.dump();
    };
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const Json& v : value) args.push_back(scalar(v));
    } else if (!value.is_null()) {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion means, Fréchet means and distances on Riemannian manifolds from heat-kernel scores",
               "scoremean"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");
  app.add_option("--config", "JSON file whose keys stand in for command-line flags");

  const int threads = default_threads();

  SampleOptions sample;
  sample.common.threads = threads;
  auto* s = app.add_subcommand("sample", "Simulate Brownian paths and write a training dataset");
  add_common(s, sample.common);
  s->add_option("--manifold", sample.manifold, "Manifold id")->required();
  s->add_option("--x0", sample.x0, "Start point (name or comma-separated coordinates)")->capture_default_str();
  s->add_option("--paths", sample.paths, "Starting points per batch")->capture_default_str();
  s->add_option("--per-start", sample.per_start, "Paths per starting point")->capture_default_str();
  s->add_option("--batches", sample.batches, "Batches; later batches start at earlier endpoints")
      ->capture_default_str();
  s->add_option("--t", sample.T, "Path horizon T")->capture_default_str();
  s->add_option("--steps", sample.steps, "Steps per path")->capture_default_str();
  s->add_option("--sampler", sample.sampler, "coords or tangent")->capture_default_str();
  s->add_option("--out", sample.out, "Dataset output (JSON lines)");
  s->add_option("--endpoints-out", sample.endpoints_out, "Path endpoints as observation CSV");

  TrainOptions trainer;
  trainer.common.threads = threads;
  auto* t = app.add_subcommand("train-score", "Fit a score network by denoising score matching");
  add_common(t, trainer.common);
  t->add_option("--data", trainer.data, "Dataset from `sample`")->required();
  t->add_option("--arch", trainer.arch, "Hidden widths: WIDTHxDEPTH or comma list (default per manifold)");
  t->add_option("--kind", trainer.kind, "score or potential")->capture_default_str();
  t->add_option("--dsm-mode", trainer.dsm_mode, "isotropic or metric_weighted")->capture_default_str();
  t->add_option("--epochs", trainer.epochs, "Minibatch steps")->capture_default_str();
  t->add_option("--lr", trainer.lr, "Peak learning rate")->capture_default_str();
  t->add_option("--warmup", trainer.warmup, "Linear warmup steps")->capture_default_str();
  t->add_option("--batch", trainer.batch, "Minibatch size")->capture_default_str();
  t->add_option("--log-every", trainer.log_every, "Print the loss every N steps to stderr");
  t->add_option("--out", trainer.out, "Checkpoint output (JSON)")->required();

  MeanOptions mean;
  mean.common.threads = threads;
  auto* dm = app.add_subcommand("diffusion-mean", "Estimate the diffusion t-mean and diffusion time");
  add_common(dm, mean.common);
  add_provider(dm, mean.provider);
  dm->add_option("--data", mean.data, "Observation CSV")->required();
  dm->add_option("--alpha", mean.alpha, "Step size for mu")->capture_default_str();
  dm->add_option("--alpha-t", mean.alpha_t, "Step size for t (default: alpha)");
  dm->add_option("--t0", mean.t0, "Initial diffusion time")->capture_default_str();
  dm->add_option("--iters", mean.iters, "Iteration cap")->capture_default_str();
  dm->add_option("--method", mean.method, "plain or adam (default per manifold)");
  dm->add_option("--grad-tol", mean.grad_tol, "Gradient-norm stopping tolerance")->capture_default_str();
  dm->add_option("--t-min", mean.t_min, "Lower clamp for t")->capture_default_str();
  dm->add_option("--mu0", mean.mu0, "Initial mean (default: first observation)");
  dm->add_option("--out", mean.out, "Estimate output (JSON); stdout when omitted");

  FrechetOptions frechet;
  frechet.common.threads = threads;
  auto* fm = app.add_subcommand("frechet-mean", "Estimate the Fréchet mean via the score log map");
  add_common(fm, frechet.common);
  add_provider(fm, frechet.provider);
  fm->add_option("--data", frechet.data, "Observation CSV")->required();
  fm->add_option("--alpha", frechet.alpha, "Step length (default 0.01 on spheres, 0.1 otherwise)");
  fm->add_option("--iters", frechet.iters, "Iteration cap")->capture_default_str();
  fm->add_option("--grad-tol", frechet.grad_tol, "Stopping tolerance")->capture_default_str();
  fm->add_option("--t-small", frechet.t_small, "Time for the score log map")->capture_default_str();
  fm->add_option("--mu0", frechet.mu0, "Initial mean (default: first observation)");
  fm->add_option("--out", frechet.out, "Estimate output (JSON); stdout when omitted");

  PairOptions logmap;
  logmap.common.threads = threads;
  auto* lm = app.add_subcommand("logmap", "Estimate Log_y(x) as t times the score");
  add_common(lm, logmap.common);
  add_provider(lm, logmap.provider);
  lm->add_option("--x", logmap.x, "Target point")->required();
  lm->add_option("--y", logmap.y, "Base point")->required();
  lm->add_option("--t", logmap.t, "Small time")->capture_default_str();
  lm->add_option("--out", logmap.out, "Output (JSON); stdout when omitted");

  PairOptions dist;
  dist.common.threads = threads;
  auto* di = app.add_subcommand("dist", "Estimate a geodesic distance with Varadhan's formula");
  add_common(di, dist.common);
  add_provider(di, dist.provider);
  di->add_option("--x", dist.x, "First point")->required();
  di->add_option("--y", dist.y, "Second point")->required();
  di->add_option("--t", dist.t, "Small time")->capture_default_str();
  di->add_option("--out", dist.out, "Output (JSON); stdout when omitted");

  KMeansOptions kmeans;
  kmeans.common.threads = threads;
  auto* km = app.add_subcommand("kmeans", "Riemannian k-means");
  add_common(km, kmeans.common);
  add_provider(km, kmeans.provider);
  km->add_option("--data", kmeans.data, "Observation CSV")->required();
  km->add_option("--k", kmeans.k, "Number of clusters")->required();
  km->add_option("--iters", kmeans.iters, "Outer iterations")->capture_default_str();
  km->add_option("--t-rank", kmeans.t_rank, "Time for the ranking distance")->capture_default_str();
  km->add_option("--t-small", kmeans.t_small, "Time for the log map")->capture_default_str();
  km->add_option("--frechet-iters", kmeans.frechet_iters, "Centroid update iterations")->capture_default_str();
  km->add_option("--frechet-step", kmeans.frechet_step, "Centroid update step")->capture_default_str();
  km->add_option("--init", kmeans.init, "Initial centroids (CSV); farthest-point seeding when omitted");
  km->add_option("--out", kmeans.out, "Output (JSON); stdout when omitted");

  RegressOptions regress;
  regress.common.threads = threads;
  auto* rg = app.add_subcommand("regress", "Maximum-likelihood geodesic regression");
  add_common(rg, regress.common);
  add_provider(rg, regress.provider);
  rg->add_option("--covariates", regress.covariates, "Covariate CSV (one row per observation)")->required();
  rg->add_option("--responses", regress.responses, "Response CSV (points)")->required();
  rg->add_option("--mode", regress.mode, "Regression curve; only 'geodesic'")->capture_default_str();
  rg->add_option("--sigma-mode", regress.sigma_mode, "constant_sigma or learned_sigma")->capture_default_str();
  rg->add_option("--iters", regress.iters, "Iteration cap")->capture_default_str();
  rg->add_option("--lr", regress.lr, "Adam learning rate")->capture_default_str();
  rg->add_option("--sigma0", regress.sigma0, "Initial sigma")->capture_default_str();
  rg->add_option("--out", regress.out, "Output (JSON); stdout when omitted");

  BenchmarkOptions bench;
  bench.common.threads = threads;
  auto* bm = app.add_subcommand("benchmark", "Desk-scale diffusion-mean benchmark (CSV)");
  add_common(bm, bench.common);
  bm->add_option("--suite", bench.suite, "Benchmark suite")->capture_default_str();
  bm->add_flag("--oracle-only", bench.oracle_only, "Skip trained providers");
  bm->add_option("--checkpoints", bench.checkpoints, "Directory with <manifold>.json checkpoints");
  bm->add_option("--manifolds", bench.manifolds, "Manifolds to run (comma-separated)")
      ->delimiter(',')
      ->capture_default_str();
  bm->add_option("--paths", bench.paths, "Observations per manifold")->capture_default_str();
  bm->add_option("--t", bench.T, "Sampling horizon")->capture_default_str();
  bm->add_option("--steps", bench.steps, "Sampler steps")->capture_default_str();
  bm->add_option("--iters", bench.iters, "Estimator iteration cap")->capture_default_str();
  bm->add_option("--out", bench.out, "CSV output; stdout when omitted");

  try {
    const std::vector<std::string> args = merge_config(raw_args);
    std::vector<const char*> argv{"scoremean"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& e) {
      app.exit(e, out, err);
      return 0;
    } catch (const CLI::ParseError& e) {
      app.exit(e, out, err);
      return 1;
    }

    if (s->parsed()) return cmd_sample(sample, out);
    if (t->parsed()) return cmd_train(trainer, out, err);
    if (dm->parsed()) return cmd_diffusion_mean(mean, out);
    if (fm->parsed()) return cmd_frechet_mean(frechet, out);
    if (lm->parsed()) return cmd_logmap(logmap, out);
    if (di->parsed()) return cmd_dist(dist, out);
    if (km->parsed()) return cmd_kmeans(kmeans, out);
    if (rg->parsed()) return cmd_regress(regress, out);
    if (bm->parsed()) return cmd_benchmark(bench, out, err);
    return 1;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace scoremean::cli
