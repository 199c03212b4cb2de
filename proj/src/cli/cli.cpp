#include "leafsolve/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "commands.hpp"

namespace leafsolve {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string csv_record(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out += f;
      continue;
    }
    out += '"';
    for (char c : f) {
      if (c == '"') out += '"';
      out += c;
    }
    out += '"';
  }
  out += "\r\n";
  return out;
}

namespace {

using cli::json;

json diagnostics_json(const std::vector<Diagnostic>& diags) {
  json a = json::array();
  for (const auto& d : diags) {
    json e{{"pointer", d.pointer}, {"message", d.message}};
    if (d.offset) e["offset"] = *d.offset;
    a.push_back(e);
  }
  return a;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell_text(const json& c) {
  if (c.is_null()) return "";
  if (c.is_boolean()) return c.get<bool>() ? "1" : "0";
  if (c.is_number_integer()) return std::to_string(c.get<long long>());
  if (c.is_number_unsigned()) return std::to_string(c.get<unsigned long long>());
  if (c.is_number()) return format_number(c.get<double>());
  if (c.is_string()) return c.get<std::string>();
  return c.dump();
}

void write_data_file(const std::filesystem::path& dir, const cli::DataFile& f, const std::string& format) {
  const auto path = dir / (f.name + (format == "csv" ? ".csv" : ".json"));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  if (format == "csv") {
    os << csv_record(f.header);
    for (const auto& row : f.rows) {
      std::vector<std::string> cells;
      for (const auto& c : row) cells.push_back(cell_text(c));
      os << csv_record(cells);
    }
  } else {
    json rows = json::array();
    for (const auto& row : f.rows) {
      json r = json::object();
      for (std::size_t i = 0; i < row.size() && i < f.header.size(); ++i) r[f.header[i]] = row[i];
      rows.push_back(r);
    }
    os << rows.dump(2) << "\n";
  }
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int input_error(std::ostream& err, const std::string& what, const std::vector<Diagnostic>& diags = {}) {
  json e{{"error", what}};
  if (!diags.empty()) e["diagnostics"] = diagnostics_json(diags);
  err << e.dump(2) << "\n";
  return 2;
}

}  // namespace

std::vector<Diagnostic> validate_manifest(const std::string& text) {
  cli::Diagnostics diag;
  auto m = cli::load_manifest_partial(text, diag);
  if (m) {
    for (auto it = m->jobs.begin(); it != m->jobs.end(); ++it) {
      const auto& table = cli::commands();
      auto cmd = table.find(it.key());
      if (cmd == table.end() || it.key() == "selftest") {
        diag.add(cli::pointer_child("/jobs", it.key()), "unknown subcommand");
        continue;
      }
      if (!it.value().is_object()) {
        diag.add(cli::pointer_child("/jobs", it.key()), "expected an object");
        continue;
      }
      cli::Context ctx{*m, {}, it.key()};
      cli::Outcome unused;
      cmd->second(ctx, diag, true, unused);
    }
  }
  return diag.items();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"leafsolve: chart-level Frobenius, connection and affine-map engine"};
  std::string subcommand, manifest_path, format = "json", out_dir;
  std::optional<double> step, tol;
  std::optional<int> grid, order;
  bool timing = false;
  app.add_option("subcommand", subcommand, "levi | integrability | solve-tde | curvature | transport | geodesic | exp | "
                                           "log | recover-metric | verify-metric | cah-map | cah-check | "
                                           "affine-symmetry | selftest | validate")
      ->required();
  app.add_option("--manifest", manifest_path, "problem manifest (JSON)")->required();
  app.add_option("--step", step, "integrator step");
  app.add_option("--grid", grid, "nodes per grid axis");
  app.add_option("--order", order, "derivative / bracket order K");
  app.add_option("--tol", tol, "check tolerance");
  app.add_option("--out", out_dir, "directory for report.json and data files");
  app.add_option("--format", format, "data file format")->check(CLI::IsMember({"json", "csv"}));
  app.add_flag("--timing", timing, "add wall-clock timing to the report");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return input_error(err, e.what());
  }
  if (step && !(*step > 0)) return input_error(err, "--step must be positive");
  if (tol && !(*tol > 0)) return input_error(err, "--tol must be positive");
  if (grid && *grid < 1) return input_error(err, "--grid must be positive");
  if (order && *order < 0) return input_error(err, "--order must be >= 0");

  const auto text = read_file(manifest_path);
  if (!text) return input_error(err, "cannot read manifest '" + manifest_path + "'");

  if (subcommand == "validate") {
    const auto diags = validate_manifest(*text);
    out << json{{"diagnostics", diagnostics_json(diags)}}.dump(2) << "\n";
    return diags.empty() ? 0 : 2;
  }
  const auto& table = cli::commands();
  auto cmd = table.find(subcommand);
  if (cmd == table.end()) return input_error(err, "unknown subcommand '" + subcommand + "'");

  cli::Diagnostics diag;
  auto manifest = cli::load_manifest(*text, diag);
  if (!manifest) return input_error(err, "manifest is invalid", diag.items());
  if (subcommand != "selftest" && !manifest->jobs.contains(subcommand)) {
    return input_error(err, "manifest has no job for '" + subcommand + "'",
                       {{cli::pointer_child("/jobs", subcommand), "missing job", std::nullopt}});
  }
  cli::Context ctx{*manifest, {step, grid, order, tol}, subcommand};
  cli::Outcome outcome;
  if (!cmd->second(ctx, diag, true, outcome)) return input_error(err, "job is invalid", diag.items());

  const auto t0 = std::chrono::steady_clock::now();
  cmd->second(ctx, diag, false, outcome);
  const auto t1 = std::chrono::steady_clock::now();

  json overrides = json::object();
  if (step) overrides["step"] = *step;
  if (grid) overrides["grid"] = *grid;
  if (order) overrides["order"] = *order;
  if (tol) overrides["tol"] = *tol;
  overrides["format"] = format;
  const std::uint64_t manifest_hash = fnv1a64(*text);
  const std::uint64_t digest = fnv1a64(subcommand + "\n" + overrides.dump(), manifest_hash);

  bool pass = outcome.failures.empty();
  json checks = json::array();
  for (const auto& c : outcome.checks) {
    checks.push_back(json{{"name", c.name}, {"value", c.value}, {"relation", c.relation}, {"bound", c.bound}, {"pass", c.pass}});
    pass = pass && c.pass;
  }
  json report{
      {"tool", "leafsolve"},
      {"command", subcommand},
      {"inputs", json{{"manifest_fnv1a64", hex64(manifest_hash)}, {"overrides", overrides}, {"digest", hex64(digest)}}},
      {"settings", json{{"step", ctx.step()}}},
      {"conventions", cli::convention_table()},
      {"results", outcome.results},
      {"checks", checks},
      {"failures", outcome.failures},
      {"pass", pass},
  };
  json files = json::array();
  if (!out_dir.empty()) {
    try {
      std::filesystem::create_directories(out_dir);
      for (const auto& f : outcome.files) {
        write_data_file(out_dir, f, format);
        files.push_back(f.name + (format == "csv" ? ".csv" : ".json"));
      }
    } catch (const std::exception& e) {
      return input_error(err, e.what());
    }
  }
  report["files"] = files;
  if (timing) report["timing_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  const std::string text_out = report.dump(2) + "\n";
  if (!out_dir.empty()) {
    std::ofstream os(std::filesystem::path(out_dir) / "report.json", std::ios::binary);
    os << text_out;
  }
  out << text_out;
  return pass ? 0 : 1;
}

}  // namespace leafsolve
