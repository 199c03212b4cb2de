#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "manifest.hpp"

namespace leafsolve::cli {

/// Values given on the command line; each overrides the manifest settings.
struct Overrides {
  std::optional<double> step;
  std::optional<int> grid;
  std::optional<int> order;
  std::optional<double> tol;
};

struct Check {
  std::string name;
  double value = 0;
  std::string relation;  // "<", "<=" or ">"
  double bound = 0;
  bool pass = false;
};

/// Tabular output written to --out as CSV or JSON.
struct DataFile {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<json>> rows;
};

struct Outcome {
  json results = json::object();
  std::vector<Check> checks;
  json failures = json::array();
  std::vector<DataFile> files;

  void check(std::string name, double value, const std::string& relation, double bound);
  void fail(json where, const std::string& reason);
};

struct Context {
  const Manifest& manifest;
  Overrides overrides;
  std::string command;

  const json& job() const;
  std::string job_ptr(const std::string& key) const;
  double step() const;
  int order(int fallback) const;
  double tol(double fallback) const;
  std::optional<int> grid_count() const;
};

/// Parses the job (recording diagnostics) and, unless dry_run, computes.
/// Returns false when the job is invalid.
using Command = std::function<bool(const Context&, Diagnostics&, bool dry_run, Outcome&)>;

const std::map<std::string, Command>& commands();

/// Sign and index conventions embedded in every report.
json convention_table();

}  // namespace leafsolve::cli
