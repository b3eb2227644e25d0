// Command-line front end: validate, preprocess, train, ablate, report, synth.

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "affuse/cli.hpp"
#include "affuse/synthetic.hpp"

namespace {

using affuse::cli::RunConfig;

struct Options {
  RunConfig run;
  std::vector<std::string> combos;
  std::string target = "both";
  std::string annotation = "experienced";
  std::string format = "text";
  std::string holdout;
};

void add_dataset_options(CLI::App& cmd, Options& o) {
  cmd.add_option("--dataset", o.run.dataset, "Dataset root containing manifest.affx.json")->required();
  cmd.add_option("--annotation-file", o.run.annotations,
                 "Annotation CSV (movie_id,dimension,kind,time_s,value); defaults to the manifest entry");
  cmd.add_option("--annotation", o.annotation, "Annotation track to label with")
      ->check(CLI::IsMember({"experienced", "intended"}))
      ->capture_default_str();
}

void add_pipeline_options(CLI::App& cmd, Options& o) {
  auto& p = o.run.pipeline;
  cmd.add_option("--smooth-window", p.smoother.window, "Savitzky-Golay window (odd, samples)")->capture_default_str();
  cmd.add_option("--smooth-polyorder", p.smoother.polyorder, "Savitzky-Golay polynomial order")->capture_default_str();
  cmd.add_option("--bins", p.quantizer.num_bins, "Number of label classes")->capture_default_str();
}

void add_training_options(CLI::App& cmd, Options& o) {
  auto& t = o.run.eval.train;
  auto& s = o.run.eval.shape;
  cmd.add_option("--labels", o.run.labels, "Labeled-segment CSV from `preprocess`; computed on the fly if omitted");
  cmd.add_option("--lr", t.learning_rate, "SGD learning rate")->capture_default_str();
  cmd.add_option("--weight-decay", t.weight_decay, "L2 weight decay on weights")->capture_default_str();
  cmd.add_option("--temperature", t.temperature, "Softmax temperature")->capture_default_str();
  cmd.add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str();
  cmd.add_option("--batch-size", t.batch_size, "Mini-batch size")->capture_default_str();
  cmd.add_option("--patience", t.patience, "Early-stopping patience (epochs)")->capture_default_str();
  cmd.add_option("--seed", t.seed, "Random seed (AFFUSE_SEED overrides the config file)")->capture_default_str();
  cmd.add_option("--val-fraction", t.validation_fraction, "Per-movie temporal validation tail")->capture_default_str();
  cmd.add_option("--proj-dim", s.proj_dim, "Per-modality projection width")->capture_default_str();
  cmd.add_option("--hidden-dim", s.hidden_dim, "Fusion hidden width")->capture_default_str();
  cmd.add_option("--combos", o.combos,
                 "Modality combinations, comma separated, e.g. sound,visual+sound (default: table rows)")
      ->delimiter(',');
  cmd.add_option("--target", o.target, "Target dimension")
      ->check(CLI::IsMember({"both", "valence", "arousal"}))
      ->capture_default_str();
}

bool flag_on_command_line(int argc, char** argv, std::string_view flag) {
  for (int i = 1; i < argc; ++i) {
    std::string_view a(argv[i]);
    if (a == flag || (a.size() > flag.size() && a.substr(0, flag.size()) == flag && a[flag.size()] == '=')) return true;
  }
  return false;
}

// Fills the typed fields that need parsing after CLI11 is done.
void finalize(Options& o, int argc, char** argv) {
  o.run.pipeline.kind = affuse::parse_annotation_kind(o.annotation);
  if (!o.combos.empty()) {
    o.run.combos.clear();
    for (const auto& c : o.combos) o.run.combos.push_back(affuse::ModalityCombo::parse(c));
  }
  if (o.target == "both") {
    o.run.targets = {affuse::TargetDimension::arousal, affuse::TargetDimension::valence};
  } else {
    o.run.targets = {affuse::parse_target_dimension(o.target)};
  }
  if (!o.holdout.empty()) o.run.holdout = o.holdout;
  o.run.format = o.format == "delimited" ? affuse::ReportFormat::delimited : affuse::ReportFormat::text_table;
  // Precedence: flag > AFFUSE_SEED > config file > default.
  if (const char* env = std::getenv("AFFUSE_SEED"); env && !flag_on_command_line(argc, argv, "--seed")) {
    try {
      o.run.eval.train.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw CLI::ValidationError("AFFUSE_SEED", "must be a non-negative integer");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"affuse: late-fusion emotion classifier trainer and evaluator"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.fallthrough();  // accept --config after the subcommand name too

  Options o;
  std::string report_in;
  affuse::SyntheticSpec synth;

  auto* validate = app.add_subcommand("validate", "Check a dataset manifest and its feature files");
  validate->add_option("dataset", o.run.dataset, "Dataset root")->required();

  auto* preprocess = app.add_subcommand("preprocess", "Turn annotation tracks into 7-class segment labels");
  add_dataset_options(*preprocess, o);
  add_pipeline_options(*preprocess, o);
  preprocess->add_option("--out", o.run.output, "Output labeled-segment CSV")->required();

  auto* train = app.add_subcommand("train", "Train a single fusion model and write a checkpoint");
  add_dataset_options(*train, o);
  add_pipeline_options(*train, o);
  add_training_options(*train, o);
  train->add_option("--holdout", o.holdout, "Movie excluded from training");
  train->add_option("--out", o.run.output, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Leave-one-movie-out evaluation over modality combinations");
  add_dataset_options(*ablate, o);
  add_pipeline_options(*ablate, o);
  add_training_options(*ablate, o);
  ablate->add_option("--jobs", o.run.jobs, "Parallel fold workers")->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_flag("--with-reference", o.run.with_reference, "Append the published reference rows");
  ablate->add_option("--out", o.run.output, "Output directory for report files")->required();

  auto* report = app.add_subcommand("report", "Render a report.json written by ablate");
  report->add_option("report", report_in, "Path to report.json")->required();
  report->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"text", "delimited"}))->capture_default_str();
  report->add_flag("--with-reference", o.run.with_reference, "Append the published reference rows");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a Gaussian-cluster fixture dataset");
  synth_cmd->add_option("--out", o.run.output, "Output dataset root")->required();
  synth_cmd->add_option("--movies", synth.num_movies, "Number of movies")->capture_default_str();
  synth_cmd->add_option("--segments", synth.segments_per_movie, "Segments per movie")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
    finalize(o, argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return affuse::cli::kExitUsage;
  } catch (const affuse::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return affuse::cli::kExitUsage;
  }

  if (validate->parsed()) return affuse::cli::cmd_validate(o.run.dataset, std::cout, std::cerr);
  if (preprocess->parsed()) return affuse::cli::cmd_preprocess(o.run, std::cout, std::cerr);
  if (train->parsed()) {
    if (o.combos.size() != 1) {
      std::cerr << "error: train needs exactly one --combos value\n";
      return affuse::cli::kExitUsage;
    }
    return affuse::cli::cmd_train(o.run, std::cout, std::cerr);
  }
  if (ablate->parsed()) return affuse::cli::cmd_ablate(o.run, std::cout, std::cerr);
  if (report->parsed()) {
    return affuse::cli::cmd_report(report_in, o.run.format, o.run.with_reference, std::cout, std::cerr);
  }
  if (synth_cmd->parsed()) {
    try {
      const auto manifest = affuse::generate_synthetic_dataset(synth, o.run.output);
      std::cout << "wrote " << manifest.movies.size() << " movies to " << o.run.output.string() << '\n';
      return affuse::cli::kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return affuse::cli::kExitFailure;
    }
  }
  return affuse::cli::kExitUsage;
}
