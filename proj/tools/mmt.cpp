// Command-line front end: train/evaluate experiment conditions, compute noise
// statistics, run the gradient checker, and render comparison tables.

#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mmt/mmt.hpp"

namespace {

using mmt::experiment::ExperimentConfig;

struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> overrides;  // flag values, applied last
};

/// Register --config plus one string flag per config key.
void add_config_options(CLI::App* cmd, ConfigCli& cli) {
  cmd->add_option("--config", cli.config_path, "config file (key = value lines)");
  for (const auto& key : mmt::experiment::config_schema()) {
    cmd->add_option_function<std::string>(
        "--" + key.name,
        [&cli, name = key.name](const std::string& v) { cli.overrides[name] = v; },
        key.description);
  }
}

ExperimentConfig resolve_config(const ConfigCli& cli) {
  ExperimentConfig cfg;
  if (!cli.config_path.empty()) cfg = mmt::experiment::parse_config(cli.config_path);
  for (const auto& [key, value] : cli.overrides)
    mmt::experiment::apply_config_value(cfg, key, value);
  return cfg;
}

int run_train(const ConfigCli& cli) {
  ExperimentConfig cfg = resolve_config(cli);
  mmt::experiment::RunManifest manifest;
  if (cfg.precision == "float32")
    manifest = mmt::experiment::run_experiment<float>(cfg);
  else
    manifest = mmt::experiment::run_experiment<double>(cfg);
  std::cout << "condition " << manifest.condition << ": macro BLEU "
            << 100.0 * manifest.macro_average << " over " << manifest.seeds.size()
            << " seed(s)\n";
  for (const auto& s : manifest.seeds)
    std::cout << "  seed " << s.seed << ": test BLEU " << 100.0 * s.test_bleu
              << " (best dev " << 100.0 * s.best_dev_bleu << " at epoch " << s.best_epoch
              << ")\n";
  std::cout << "outputs in " << cfg.output_dir << "\n";
  return 0;
}

int run_evaluate(const ConfigCli& cli, const std::string& checkpoint,
                 std::string source_vocab, std::string target_vocab) {
  ExperimentConfig cfg = resolve_config(cli);
  if (source_vocab.empty()) source_vocab = cfg.output_dir + "/vocab_source.tsv";
  if (target_vocab.empty()) target_vocab = cfg.output_dir + "/vocab_target.tsv";
  mmt::evaluation::BleuReport report;
  if (cfg.precision == "float32")
    report = mmt::experiment::evaluate_checkpoint<float>(cfg, checkpoint, source_vocab,
                                                         target_vocab);
  else
    report = mmt::experiment::evaluate_checkpoint<double>(cfg, checkpoint, source_vocab,
                                                          target_vocab);
  std::cout << "BLEU " << 100.0 * report.score << " (BP " << report.brevity_penalty
            << ", lengths " << report.hyp_length << "/" << report.ref_length << ")\n";
  for (int n = 0; n < 4; ++n)
    std::cout << "  p" << (n + 1) << " = " << report.precisions[static_cast<std::size_t>(n)]
              << "\n";
  return 0;
}

int run_stats(const std::string& labels_path) {
  auto labels = mmt::evaluation::load_labels(labels_path);
  auto stats = mmt::evaluation::noise_statistics(labels);
  std::cout << "sentences: " << stats.n_sentences << "\n"
            << "half or more non-entity keywords: " << stats.n_half_or_more_nonentity_keywords
            << "\n"
            << "half or more noise images: " << stats.n_half_or_more_noise_images << "\n";
  return 0;
}

int run_gradcheck(double tolerance) {
  // Tiny deterministic pipeline: every parameter of the full model takes part.
  mmt::model::ModelDims dims;
  dims.source_vocab = 7;
  dims.target_vocab = 7;
  dims.embed_dim = 3;
  dims.hidden_dim = 2;
  dims.visual_dim = 4;
  dims.visual_len = 3;
  dims.key_dim = 3;
  dims.region_score_dim = 2;
  dims.region_keep = 2;
  mmt::model::Model<double> m(dims);
  mmt::Rng rng(29);
  m.store().init_uniform(rng, -0.1, 0.1);

  std::vector<int> source = {4, 5, 6};
  std::vector<int> target = {mmt::corpus::kBos, 5, 6, mmt::corpus::kEos};
  mmt::model::VisualContext<double> ctx;
  ctx.mode = mmt::model::VisualContext<double>::Mode::grids;
  mmt::Rng grid_rng(31);
  for (int g = 0; g < 2; ++g) {
    Eigen::MatrixXd grid(dims.visual_len, dims.visual_dim);
    for (Eigen::Index r = 0; r < grid.rows(); ++r)
      for (Eigen::Index c = 0; c < grid.cols(); ++c) grid(r, c) = grid_rng.uniform(-1, 1);
    ctx.grids.push_back(grid);
  }

  auto report = mmt::training::gradient_check<double>(
      m.store(), [&](mmt::Tape<double>& tape) {
        auto fwd = m.prepare(tape, source, ctx);
        return m.teacher_forced(tape, fwd, target).loss;
      });

  std::cout << "group" << std::string(28, ' ') << "max relative error\n";
  for (const auto& group : report.groups) {
    std::string pad(group.name.size() < 33 ? 33 - group.name.size() : 1, ' ');
    std::cout << group.name << pad << group.max_relative_error << "\n";
  }
  std::cout << "overall: " << report.max_relative_error << " (tolerance " << tolerance
            << ")\n";
  return report.max_relative_error < tolerance ? 0 : 1;
}

int run_table(const std::vector<std::string>& manifest_paths, const std::string& tsv_path) {
  std::vector<std::pair<std::string, double>> rows;
  std::vector<mmt::evaluation::RunReport> reports;
  for (const auto& path : manifest_paths) {
    auto manifest = mmt::experiment::RunManifest::load(path);
    rows.emplace_back(manifest.condition, manifest.macro_average);
    mmt::evaluation::RunReport report;
    report.condition = manifest.condition;
    for (const auto& s : manifest.seeds) report.per_seed_bleu.push_back(s.test_bleu);
    report.macro_average = manifest.macro_average;
    reports.push_back(std::move(report));
  }
  mmt::experiment::render_table(std::cout, rows);
  if (!tsv_path.empty()) {
    std::ofstream out(tsv_path, std::ios::binary);
    if (!out) throw mmt::Error("cannot write " + tsv_path);
    mmt::evaluation::write_results_tsv(out, reports);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieval-augmented multimodal translation experiments"};
  app.require_subcommand(1);

  ConfigCli train_cli;
  auto* train_cmd = app.add_subcommand("train", "run one experiment condition end to end");
  add_config_options(train_cmd, train_cli);

  ConfigCli eval_cli;
  std::string checkpoint, source_vocab, target_vocab;
  auto* eval_cmd = app.add_subcommand("evaluate", "decode the test set with a checkpoint");
  add_config_options(eval_cmd, eval_cli);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--source-vocab", source_vocab, "source vocabulary TSV");
  eval_cmd->add_option("--target-vocab", target_vocab, "target vocabulary TSV");

  std::string labels_path;
  auto* stats_cmd = app.add_subcommand("stats", "noise statistics from a label file");
  stats_cmd->add_option("--labels", labels_path, "label file (JSON lines)")->required();

  double tolerance = 1e-4;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad_cmd->add_option("--tolerance", tolerance, "maximum relative error");

  std::vector<std::string> manifest_paths;
  std::string tsv_path;
  auto* table_cmd = app.add_subcommand("table", "render a comparison table from manifests");
  table_cmd->add_option("--manifest", manifest_paths, "run manifest JSON file(s)")->required();
  table_cmd->add_option("--tsv", tsv_path, "also write a results TSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(train_cli);
    if (eval_cmd->parsed()) return run_evaluate(eval_cli, checkpoint, source_vocab, target_vocab);
    if (stats_cmd->parsed()) return run_stats(labels_path);
    if (grad_cmd->parsed()) return run_gradcheck(tolerance);
    if (table_cmd->parsed()) return run_table(manifest_paths, tsv_path);
  } catch (const mmt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mmt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
