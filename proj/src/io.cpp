#include "scoremean/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "scoremean/error.hpp"

namespace scoremean::io {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json to_json(const Vec& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vec vec_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError("field '" + field + "' must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("field '" + field + "' must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json to_json(const Point& p) {
  Json j{{"coords", to_json(p.coords)}};
  if (p.anchor.size() > 0) j["anchor"] = to_json(p.anchor);
  return j;
}

Point point_from_json(const Json& j, const Manifold& m, const std::string& field) {
  Point p;
  if (j.is_array()) {
    p.coords = vec_from_json(j, field);
  } else if (j.is_object() && j.contains("coords")) {
    p.coords = vec_from_json(j.at("coords"), field + ".coords");
    if (j.contains("anchor")) p.anchor = vec_from_json(j.at("anchor"), field + ".anchor");
  } else {
    throw ValidationError("field '" + field + "' is not a point");
  }
  if (m.id().anchored() && p.anchor.size() == 0) p.anchor = sphere_chart::north(m.id().n);
  try {
    m.validate(p);
  } catch (const ValidationError& e) {
    throw ValidationError("field '" + field + "': " + e.what());
  }
  return p;
}

namespace {

std::vector<double> parse_numbers(const std::string& text, char sep, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, sep)) {
    const auto first = cell.find_first_not_of(" \t\r");
    if (first == std::string::npos) throw ValidationError(what + ": empty value");
    const char* begin = cell.c_str() + first;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    while (end != nullptr && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
      throw ValidationError(what + ": '" + cell + "' is not a finite number");
    }
    out.push_back(v);
  }
  return out;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

}  // namespace

Point parse_point(const Manifold& m, const std::string& text) {
  const ManifoldId& id = m.id();
  if (text == "origin") return m.origin();
  if (id.anchored()) {
    Vec e = Vec::Zero(id.n + 1);
    if (text == "north") return m.origin();
    if (text == "south") {
      e[id.n] = -1.0;
      return m.point_from_embedded(e);
    }
    if (text == "equator") {
      e[0] = 1.0;
      return m.point_from_embedded(e);
    }
  }
  std::vector<double> v = parse_numbers(text, ',', "point '" + text + "'");
  Vec coords = Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (id.anchored() && coords.size() == id.n + 1) {
    if (coords.norm() == 0.0) throw ValidationError("point '" + text + "' is the zero vector");
    return m.point_from_embedded(coords);
  }
  Point p{coords, id.anchored() ? sphere_chart::north(id.n) : Vec()};
  m.validate(p);
  return m.maybe_recenter(p);
}

// ---------------------------------------------------------------------------

void write_dataset(std::ostream& out, const PathDataset& data, const Json& header_extra) {
  Json header = header_extra;
  header["manifold"] = data.manifold.name();
  header["seed"] = data.seed;
  header["records"] = data.records.size();
  out << header.dump() << '\n';
  const bool anchored = data.manifold.anchored();
  for (const DatasetRecord& r : data.records) {
    Json j{{"x0", to_json(r.x0.coords)}, {"y", to_json(r.y.coords)}, {"prev", to_json(r.prev.coords)},
           {"t", r.t}, {"dt", r.dt}};
    if (anchored) {
      j["anchor_x0"] = to_json(r.x0.anchor);
      j["anchor_y"] = to_json(r.y.anchor);
      j["anchor_prev"] = to_json(r.prev.anchor);
    }
    out << j.dump() << '\n';
  }
  if (!out) throw ValidationError("failed to write dataset");
}

PathDataset read_dataset(std::istream& in) {
  std::string line;
  PathDataset data;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ValidationError("dataset line " + std::to_string(line_no) + " is not valid JSON");
    }
    if (!have_header) {
      if (!j.contains("manifold")) throw ValidationError("dataset header is missing field 'manifold'");
      data.manifold = ManifoldId::parse(j.at("manifold").get<std::string>());
      if (j.contains("seed")) data.seed = j.at("seed").get<std::uint64_t>();
      have_header = true;
      continue;
    }
    const Manifold m(data.manifold);
    auto point = [&](const char* key, const char* anchor_key) {
      const std::string where = "line " + std::to_string(line_no) + " field '" + key + "'";
      if (!j.contains(key)) throw ValidationError("dataset " + where + " is missing");
      Point p{vec_from_json(j.at(key), where), Vec()};
      if (m.id().anchored()) {
        p.anchor = j.contains(anchor_key) ? vec_from_json(j.at(anchor_key), anchor_key)
                                          : sphere_chart::north(m.id().n);
      }
      try {
        m.validate(p);
      } catch (const ValidationError& e) {
        throw ValidationError("dataset " + where + ": " + e.what());
      }
      return p;
    };
    DatasetRecord r;
    r.x0 = point("x0", "anchor_x0");
    r.y = point("y", "anchor_y");
    r.prev = point("prev", "anchor_prev");
    if (!j.contains("t") || !j.contains("dt")) {
      throw ValidationError("dataset line " + std::to_string(line_no) + " is missing field 't' or 'dt'");
    }
    r.t = j.at("t").get<double>();
    r.dt = j.at("dt").get<double>();
    if (!(r.t > 0.0) || !(r.dt > 0.0)) {
      throw ValidationError("dataset line " + std::to_string(line_no) + " has a non-positive 't' or 'dt'");
    }
    data.records.push_back(std::move(r));
  }
  if (!have_header) throw ValidationError("dataset is empty");
  return data;
}

void write_points_csv(std::ostream& out, const Manifold& m, const std::vector<Point>& points,
                      const std::vector<std::string>& comments) {
  for (const std::string& c : comments) out << "# " << c << '\n';
  for (const Point& p : points) {
    m.validate(p);
    std::string row;
    auto append = [&](const Vec& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!row.empty()) row += ',';
        row += format_double(v[i]);
      }
    };
    append(p.coords);
    append(p.anchor);
    out << row << '\n';
  }
  if (!out) throw ValidationError("failed to write points");
}

std::vector<Point> read_points_csv(std::istream& in, const Manifold& m) {
  const int d = m.dim();
  const int a = m.id().anchored() ? m.id().n + 1 : 0;
  std::vector<Point> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    const std::string where = "observation row " + std::to_string(line_no);
    std::vector<double> v = parse_numbers(line, ',', where);
    const int n = static_cast<int>(v.size());
    if (n != d && n != d + a) {
      throw ValidationError(where + " has " + std::to_string(n) + " columns, expected " + std::to_string(d) +
                            (a > 0 ? " or " + std::to_string(d + a) : std::string()));
    }
    Point p{Eigen::Map<Vec>(v.data(), d), Vec()};
    if (a > 0) p.anchor = n == d + a ? Vec(Eigen::Map<Vec>(v.data() + d, a)) : sphere_chart::north(m.id().n);
    try {
      m.validate(p);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw ValidationError("no observations found");
  return out;
}

std::vector<Vec> read_rows_csv(std::istream& in) {
  std::vector<Vec> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::vector<double> v = parse_numbers(line, ',', "row " + std::to_string(line_no));
    out.emplace_back(Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    if (out.back().size() != out.front().size()) {
      throw ValidationError("row " + std::to_string(line_no) + " has a different number of columns");
    }
  }
  if (out.empty()) throw ValidationError("no rows found");
  return out;
}

// ---------------------------------------------------------------------------

Json checkpoint_to_json(const ScoreModel& model) {
  return Json{{"format", "scoremean-checkpoint"},
              {"manifold", model.manifold.name()},
              {"representation", to_string(model.representation)},
              {"kind", to_string(model.kind)},
              {"dsm_mode", to_string(model.dsm_mode)},
              {"layer_dims", model.net.dims()},
              {"params", model.net.params()},
              {"t_max", model.t_max},
              {"seed", model.seed},
              {"epochs", model.epochs_run},
              {"final_loss", model.final_loss},
              {"loss_curve", model.loss_curve}};
}

ScoreModel checkpoint_from_json(const Json& j) {
  auto need = [&](const char* key) -> const Json& {
    if (!j.contains(key)) throw ValidationError(std::string("checkpoint is missing field '") + key + "'");
    return j.at(key);
  };
  try {
    ScoreModel model;
    model.manifold = ManifoldId::parse(need("manifold").get<std::string>());
    model.representation = parse_representation(need("representation").get<std::string>());
    model.kind = parse_net_kind(need("kind").get<std::string>());
    model.dsm_mode = parse_dsm_mode(need("dsm_mode").get<std::string>());
    model.net = Mlp(need("layer_dims").get<std::vector<int>>());
    std::vector<double> params = need("params").get<std::vector<double>>();
    if (params.size() != model.net.param_count()) {
      throw ValidationError("checkpoint field 'params' has " + std::to_string(params.size()) +
                            " values, layer_dims need " + std::to_string(model.net.param_count()));
    }
    model.net.params() = std::move(params);
    model.t_max = need("t_max").get<double>();
    model.seed = j.value("seed", kDefaultSeed);
    model.epochs_run = j.value("epochs", 0);
    model.final_loss = j.value("final_loss", 0.0);
    if (j.contains("loss_curve")) model.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    return model;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ScoreModel& model) {
  write_text_file(path, checkpoint_to_json(model).dump() + "\n");
}

ScoreModel load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json_file(path)); }

namespace {

Json point_with_embedding(const Point& p, const Manifold& m) {
  Json j = to_json(p);
  if (m.has_embedding()) j["embedded"] = to_json(m.embed(p));
  return j;
}

}  // namespace

Json to_json(const MeanEstimate& est, const Manifold& m) {
  Json trace = Json::array();
  for (const TraceEntry& e : est.trace) {
    Json row{{"mu", to_json(e.mu)}, {"grad_mu_norm", e.grad_mu_norm}};
    if (std::isfinite(e.t)) {
      row["t"] = e.t;
      row["grad_t"] = e.grad_t;
    }
    trace.push_back(std::move(row));
  }
  Json j{{"mu", point_with_embedding(est.mu, m)},
         {"converged", est.converged},
         {"iters", est.iters_used},
         {"warnings", est.warnings},
         {"trace", std::move(trace)}};
  if (est.t) j["t"] = *est.t;
  return j;
}

Json to_json(const KMeansResult& res, const Manifold& m) {
  Json centroids = Json::array();
  for (const Point& c : res.centroids) centroids.push_back(point_with_embedding(c, m));
  return Json{{"centroids", std::move(centroids)},
              {"labels", res.labels},
              {"inertia", res.inertia},
              {"iters", res.iters_used},
              {"warnings", res.warnings}};
}

Json to_json(const RegressionModel& model, const Manifold& m) {
  Json v = Json::array();
  for (Eigen::Index c = 0; c < model.v.cols(); ++c) v.push_back(to_json(Vec(model.v.col(c))));
  Json trace = Json::array();
  for (const RegressionTraceEntry& e : model.trace) {
    Json row{{"mean_sigma", e.mean_sigma}, {"grad_norm", e.grad_norm}};
    if (e.log_likelihood) row["log_likelihood"] = *e.log_likelihood;
    trace.push_back(std::move(row));
  }
  Json j{{"manifold", model.manifold.name()},
         {"mu", point_with_embedding(model.mu, m)},
         {"v", std::move(v)},
         {"sigma_mode", to_string(model.sigma_mode)},
         {"converged", model.converged},
         {"iters", model.iters_used},
         {"warnings", model.warnings},
         {"trace", std::move(trace)}};
  if (model.sigma_mode == SigmaMode::Constant) {
    j["sigma"] = softplus(model.rho);
  } else {
    j["sigma_net"] = Json{{"layer_dims", model.sigma_net.dims()}, {"params", model.sigma_net.params()}};
  }
  return j;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON");
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace scoremean::io
