#include "nlspec/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;
using namespace nlspec;

struct Flags {
  std::string config;
  std::string out = ".";
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  bool expect_pass = false;
  unsigned threads = 1;
  std::string theorem;
};

unsigned default_threads() {
  if (const char *env = std::getenv("NLSPEC_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1)
        return static_cast<unsigned>(v);
    } catch (const std::exception &) {
    }
    std::cerr << "nlspec: ignoring invalid NLSPEC_THREADS='" << env << "'\n";
  }
  return 1;
}

json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

/// Fills in or checks the task against the subcommand.
void bind_task(json &doc, const std::string &command, const std::string &theorem) {
  std::string wanted;
  if (command == "certify") {
    if (!theorem.empty())
      wanted = "certify_" + theorem;
  } else {
    wanted = command;
  }
  if (!doc.is_object())
    throw ConfigError("scenario must be a JSON object");
  if (!doc.contains("task")) {
    if (wanted.empty())
      throw ConfigError("certify needs --theorem or a 'task' in the scenario");
    doc["task"] = wanted;
    return;
  }
  const std::string given = doc["task"].is_string() ? doc["task"].get<std::string>() : "";
  const bool ok = wanted.empty() ? given.rfind("certify_", 0) == 0 : given == wanted;
  if (!ok)
    throw ConfigError("scenario task '" + given + "' does not match subcommand '" + command + "'");
}

int run(const std::string &command, const Flags &f) {
  const ReportFormat format = format_from_string(f.format);
  if (command == "emit") {
    const json report = read_json(f.config);
    const auto stem = std::filesystem::path(f.config).stem().string();
    for (const auto &p : emit_report(report, format, f.out, stem))
      std::cout << p.string() << '\n';
    return exit_ok;
  }
  json doc = read_json(f.config);
  bind_task(doc, command, f.theorem);
  const Scenario sc = Scenario::from_json(doc, std::filesystem::path(f.config).parent_path());
  RunOptions opts;
  opts.seed = f.seed;
  opts.threads = f.threads;
  const json report = run_scenario(sc, opts);
  for (const auto &p : emit_report(report, format, f.out, sc.name))
    std::cout << p.string() << '\n';
  if (format != ReportFormat::json)
    emit_report(report, ReportFormat::json, f.out, sc.name);
  std::cout << "status " << report.value("status", "error");
  if (report.contains("verdict") && report["verdict"].contains("pass"))
    std::cout << ", verdict " << (report["verdict"]["pass"].get<bool>() ? "pass" : "fail");
  std::cout << ", hash " << determinism_hash(report) << '\n';
  if (report.contains("error"))
    std::cerr << "nlspec: " << report["error"].value("kind", "") << ": "
              << report["error"].value("message", "") << '\n';
  return exit_code_for(report, f.expect_pass);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Matrix-free spectral lab for convolution-plus-potential operators"};
  app.set_version_flag("--version", std::string(tool_version));
  app.require_subcommand(1);
  Flags f;
  f.threads = default_threads();

  const std::vector<std::pair<std::string, std::string>> commands{
      {"essential", "essential spectrum, gaps and vanishing radii"},
      {"eigs", "eigenvalues above a threshold or inside a window, with classification"},
      {"weyl", "Weyl-sequence residual tables"},
      {"certify", "Gram-matrix certificates (scaled, heavy-tail or dual families)"},
      {"gap", "perturbative gap certificate"},
      {"sweep", "run a task over an L ladder or a parameter grid"},
      {"emit", "re-emit an existing JSON report in another format"}};
  for (const auto &[name, help] : commands) {
    auto *sub = app.add_subcommand(name, help);
    sub->add_option("--config", f.config, name == "emit" ? "report JSON" : "scenario JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory")->capture_default_str();
    sub->add_option("--format", f.format, "json, csv or plotdata")
        ->check(CLI::IsMember({"json", "csv", "plotdata"}))
        ->capture_default_str();
    if (name != "emit") {
      sub->add_option("--seed", f.seed, "override the scenario seed");
      sub->add_flag("--expect-pass", f.expect_pass, "treat a failed certificate as an error");
      sub->add_option("--threads", f.threads, "sweep worker count (default NLSPEC_THREADS)")
          ->check(CLI::PositiveNumber);
    }
    if (name == "certify")
      sub->add_option("--theorem", f.theorem, "t2, heavy or t5 when the scenario has no task")
          ->check(CLI::IsMember({"t2", "heavy", "t5"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, f);
  } catch (const Error &e) {
    std::cerr << "nlspec: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "nlspec: " << e.what() << '\n';
    return exit_other;
  }
}
