// headprune: implant a textual backdoor, defend with head pruning, report.
//
//   headprune run     --config exp.json --out runs/
//   headprune sweep   --config exp.json --out runs/ --tau 0.85,0.90,0.95
//   headprune project --checkpoint runs/.../defended.ckpt --data test.jsonl --out proj.csv
//   headprune report  runs/ --format text
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "headprune/experiment.hpp"

namespace fs = std::filesystem;
using namespace headprune;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::vector<double> parse_taus(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw experiment::ConfigError("--tau", "bad value '" + item + "'");
    }
    if (used != item.size()) throw experiment::ConfigError("--tau", "bad value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

struct Options {
  std::string config;
  std::string out;
  std::string tau;
  std::string format = "text";
  std::size_t jobs = 1;
  std::string seed_override;
  std::string checkpoint;
  std::string data;
  std::vector<std::string> dirs;
};

experiment::ExperimentConfig resolve(const Options& o, fs::path& out) {
  experiment::ExperimentConfig cfg = experiment::load_config(o.config);
  if (const char* env = std::getenv("HEADPRUNE_SEED"); env && *env) cfg.seeds = experiment::parse_seed_list(env);
  if (!o.seed_override.empty()) cfg.seeds = experiment::parse_seed_list(o.seed_override);
  out = !o.out.empty() ? fs::path(o.out) : fs::path(cfg.output_dir);
  if (out.empty()) throw experiment::ConfigError("--out", "no output directory (flag or output_dir field)");
  if (o.jobs < 1) throw experiment::ConfigError("--jobs", "must be >= 1");
  cfg.validate();
  return cfg;
}

int cmd_run(Options o) {
  fs::path out;
  experiment::ExperimentConfig cfg = resolve(o, out);
  if (!o.tau.empty()) {
    const std::vector<double> t = parse_taus(o.tau);
    if (t.size() != 1) throw experiment::ConfigError("--tau", "run takes a single threshold");
    cfg.defense.tau = t.front();
    cfg.validate();
  }
  experiment::run(cfg, out, o.jobs);
  std::cout << experiment::read_text(out / "report.txt");
  return 0;
}

int cmd_sweep(Options o) {
  fs::path out;
  experiment::ExperimentConfig cfg = resolve(o, out);
  if (!o.tau.empty()) {
    cfg.taus = parse_taus(o.tau);
    cfg.validate();
  }
  experiment::sweep(cfg, out, o.jobs);
  std::cout << experiment::read_text(out / "sweep.csv");
  return 0;
}

int cmd_project(const Options& o) {
  const model::EncoderModel m = model::load_checkpoint(o.checkpoint);
  const data::Dataset ds = data::load_jsonl(o.data);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds[i].tokens.size() > m.config().max_seq_len)
      throw std::runtime_error("example " + std::to_string(i) + " is longer than the checkpoint's max_seq_len");
    for (int t : ds[i].tokens)
      if (t < 0 || static_cast<std::size_t>(t) >= m.config().vocab_size)
        throw std::runtime_error("example " + std::to_string(i) + " has a token outside the checkpoint vocabulary");
  }
  const std::string csv = eval::projection_csv(eval::embedding_projection(m, ds));
  if (o.out.empty()) std::cout << csv;
  else experiment::write_text(o.out, csv);
  return 0;
}

int cmd_report(const Options& o) {
  const eval::Format f = eval::format_from_string(o.format);
  std::vector<fs::path> dirs(o.dirs.begin(), o.dirs.end());
  const std::string doc = eval::report_table(experiment::collect_reports(dirs), f);
  if (o.out.empty()) std::cout << doc;
  else experiment::write_text(o.out, doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor implantation and attention-head pruning defenses"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "poison, implant, defend and evaluate");
  auto* sweep = app.add_subcommand("sweep", "accuracy threshold sweep");
  for (CLI::App* sub : {run, sweep}) {
    sub->add_option("--config", o.config, "experiment JSON")->required();
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
    sub->add_option("--tau", o.tau, "threshold, or comma-separated list for sweep");
    sub->add_option("--jobs", o.jobs, "parallel (attack, seed) jobs");
    sub->add_option("--seed-override", o.seed_override, "comma-separated seeds");
  }
  auto* project = app.add_subcommand("project", "2D PCA of CLS embeddings");
  project->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  project->add_option("--data", o.data, "JSONL dataset")->required();
  project->add_option("--out", o.out, "CSV path (stdout when omitted)");
  auto* report = app.add_subcommand("report", "aggregate run directories");
  report->add_option("dirs", o.dirs, "run directories")->required();
  report->add_option("--format", o.format, "csv, json or text")->check(CLI::IsMember({"csv", "json", "text"}));
  report->add_option("--out", o.out, "output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(o);
    if (*sweep) return cmd_sweep(o);
    if (*project) return cmd_project(o);
    return cmd_report(o);
  } catch (const experiment::ConfigError& e) {
    std::cerr << "headprune: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "headprune: " << e.what() << "\n";
    return kRuntimeError;
  }
}
