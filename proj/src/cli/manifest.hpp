#pragma once

// Manifest loading: JSON text -> resolved engine objects, with diagnostics
// keyed by JSON pointer.

#include <map>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "leafsolve/cah.hpp"
#include "leafsolve/cli.hpp"
#include "leafsolve/connection.hpp"
#include "leafsolve/distribution.hpp"
#include "leafsolve/metric.hpp"
#include "leafsolve/spray.hpp"

namespace leafsolve::cli {

using json = nlohmann::ordered_json;

struct Chart {
  std::vector<std::string> vars;
  Box box;
};

struct SeedSpec {
  std::string connection;
  MetricSeed seed;
};

struct CahSpec {
  std::string source;
  std::string target;
  Eigen::VectorXd x0;
  Eigen::VectorXd y0;
  Eigen::MatrixXd sigma0;
};

struct Settings {
  std::optional<double> step;
  std::optional<int> grid;
  std::optional<int> order;
  std::optional<double> tol;
};

struct Manifest {
  json raw;
  std::map<std::string, Chart> charts;
  std::map<std::string, BundleConnection> connections;
  std::map<std::string, GraphDistribution> distributions;
  std::map<std::string, Spray> sprays;
  std::map<std::string, SeedSpec> metric_seeds;
  std::map<std::string, CahSpec> cah_problems;
  Settings settings;
  json jobs = json::object();

  /// True if raw[section] has an entry `name`, whether or not it loaded.
  bool declared(const std::string& section, const std::string& name) const {
    return raw.contains(section) && raw[section].is_object() && raw[section].contains(name);
  }
};

/// Collects diagnostics while walking a JSON document.
class Diagnostics {
 public:
  void add(const std::string& pointer, const std::string& message, std::optional<std::size_t> offset = std::nullopt) {
    items_.push_back({pointer, message, offset});
  }
  bool empty() const { return items_.empty(); }
  const std::vector<Diagnostic>& items() const { return items_; }

 private:
  std::vector<Diagnostic> items_;
};

/// Parses and resolves a manifest. Returns nullopt when diagnostics were added.
std::optional<Manifest> load_manifest(const std::string& text, Diagnostics& diag);
/// Like load_manifest, but keeps whatever loaded; nullopt only if the text is
/// not a JSON object.
std::optional<Manifest> load_manifest_partial(const std::string& text, Diagnostics& diag);

// Typed readers used by the loader and by job parsing. Each returns nullopt
// and records a diagnostic on failure.
std::optional<double> read_number(const json& j, const std::string& ptr, Diagnostics& diag);
std::optional<int> read_int(const json& j, const std::string& ptr, Diagnostics& diag);
std::optional<std::string> read_string(const json& j, const std::string& ptr, Diagnostics& diag);
std::optional<Eigen::VectorXd> read_vector(const json& j, const std::string& ptr, Diagnostics& diag,
                                           long expected = -1);
std::optional<Eigen::MatrixXd> read_matrix(const json& j, const std::string& ptr, Diagnostics& diag, long rows = -1,
                                           long cols = -1);
std::optional<Expr> read_expr(const json& j, const std::string& ptr, const std::vector<std::string>& vars,
                              Diagnostics& diag);

/// Grid spec: {"center": [..], "half_width": h, "count": N} or
/// {"lo": [..], "hi": [..], "counts": [..]}. count_override replaces the
/// node count on every axis.
std::optional<RectGrid> read_grid(const json& j, const std::string& ptr, std::size_t dim,
                                  std::optional<int> count_override, Diagnostics& diag);

std::string pointer_child(const std::string& ptr, const std::string& key);
std::string pointer_child(const std::string& ptr, std::size_t index);

}  // namespace leafsolve::cli
