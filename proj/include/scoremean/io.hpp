#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "scoremean/apps.hpp"
#include "scoremean/estimators.hpp"
#include "scoremean/sampler.hpp"
#include "scoremean/scorenet.hpp"

// File formats. JSON doubles use the shortest representation that reads back
// to the same bits; CSV doubles are written with 17 significant digits.
namespace scoremean::io {

using Json = nlohmann::json;

std::string format_double(double x);

Json to_json(const Vec& v);
Vec vec_from_json(const Json& j, const std::string& field);
/// {"coords": [...], "anchor": [...]} (anchor only for spheres).
Json to_json(const Point& p);
Point point_from_json(const Json& j, const Manifold& m, const std::string& field);

/// Named points ("origin", "north", "south", "equator") or comma-separated
/// numbers: d chart coordinates (spheres: around the north pole) or, for
/// spheres, n+1 ambient coordinates.
Point parse_point(const Manifold& m, const std::string& text);

// Datasets: a header line {"manifold": ..., "seed": ..., ...} followed by one
// record per line {"x0", "y", "prev", "t", "dt"} with "anchor_x0",
// "anchor_y", "anchor_prev" on spheres.
void write_dataset(std::ostream& out, const PathDataset& data, const Json& header_extra = Json::object());
PathDataset read_dataset(std::istream& in);

// Observation CSV: one point per row, d chart columns followed by the anchor
// columns on spheres. Lines starting with '#' are comments.
void write_points_csv(std::ostream& out, const Manifold& m, const std::vector<Point>& points,
                      const std::vector<std::string>& comments = {});
std::vector<Point> read_points_csv(std::istream& in, const Manifold& m);
/// Plain numeric rows (covariates).
std::vector<Vec> read_rows_csv(std::istream& in);

Json checkpoint_to_json(const ScoreModel& model);
ScoreModel checkpoint_from_json(const Json& j);
void save_checkpoint(const std::filesystem::path& path, const ScoreModel& model);
ScoreModel load_checkpoint(const std::filesystem::path& path);

Json to_json(const MeanEstimate& est, const Manifold& m);
Json to_json(const KMeansResult& res, const Manifold& m);
Json to_json(const RegressionModel& model, const Manifold& m);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace scoremean::io
