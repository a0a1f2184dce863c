#include <iostream>

#include <CLI11.hpp>

#include "demi/estimators/training.hpp"
#include "demi/harness.hpp"
#include "demi/oracles.hpp"

namespace h = demi::harness;

namespace {

void add_run_flags(CLI::App* cmd, h::RunConfig& run, std::string& critic, std::string& psi_star) {
  cmd->add_option("--batch", run.batch, "anchors per step")->capture_default_str();
  cmd->add_option("--steps", run.steps, "optimizer steps")->capture_default_str();
  cmd->add_option("--lr", run.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--critic", critic, "learned | analytic")->capture_default_str();
  cmd->add_option("--psi-star", psi_star, "frozen psi of IS/BO: frozen_trained | analytic")
      ->capture_default_str();
  cmd->add_option("--eval-interval", run.eval_interval)->capture_default_str();
  cmd->add_option("--eval-batches", run.eval_batches)->capture_default_str();
  cmd->add_option("--eval-rows", run.eval_rows, "rows per eval batch, 0 = --batch")
      ->capture_default_str();
  cmd->add_flag("!--separate-encoders", run.shared_encoder,
                "give psi and phi independent encoders");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive MI estimators on synthetic Gaussian worlds"};
  app.require_subcommand(1);

  h::MakeWorldOptions world_opts;
  auto* make_world = app.add_subcommand("make-world", "synthesize a world and write its JSON");
  make_world->add_option("--mi", world_opts.mi, "target I(x, x'; y) in nats")->required();
  make_world->add_option("--dims", world_opts.dims)->capture_default_str();
  make_world->add_option("--seed", world_opts.seed)->capture_default_str();
  make_world->add_option("--out", world_opts.out)->capture_default_str();

  h::TrainOptions train_opts;
  std::string train_estimator = "nce", train_critic = "learned", train_psi = "frozen_trained";
  auto* train = app.add_subcommand("train", "train one estimator and append its curve");
  train->add_option("--world", train_opts.run.world)->required();
  train->add_option("--estimator", train_estimator,
                    "nce | demi | demi_is | demi_bo | demi_var | demi_bo_protocol")
      ->capture_default_str();
  train->add_option("--k", train_opts.run.k, "negatives budget K")->capture_default_str();
  train->add_option("--seed", train_opts.run.seed)->capture_default_str();
  train->add_option("--out", train_opts.run.out, "CSV to append to")->capture_default_str();
  train->add_option("--checkpoint", train_opts.checkpoint, "default <out>.ckpt.json");
  train->add_flag("--wall-time", train_opts.wall_time, "fill the wall_ms column");
  add_run_flags(train, train_opts.run, train_critic, train_psi);
  train_opts.run.out = "train.csv";

  h::SweepOptions sweep_opts;
  std::string sweep_critic = "learned", sweep_psi = "frozen_trained";
  auto* sweep = app.add_subcommand("sweep", "train a grid of cells");
  sweep->add_option("--worlds", sweep_opts.worlds)->required();
  sweep->add_option("--estimators", sweep_opts.estimators)->required();
  sweep->add_option("--ks", sweep_opts.ks)->required();
  sweep->add_option("--seeds", sweep_opts.seeds)->required();
  sweep->add_option("--jobs", sweep_opts.jobs)->capture_default_str();
  sweep->add_option("--out", sweep_opts.out)->capture_default_str();
  sweep->add_flag("--wall-time", sweep_opts.wall_time, "fill the wall_ms column");
  add_run_flags(sweep, sweep_opts.base, sweep_critic, sweep_psi);

  h::OracleOptions oracle_opts;
  auto* oracle = app.add_subcommand("oracle", "run Monte-Carlo validators");
  oracle->add_option("--suite", oracle_opts.suite)
      ->check(CLI::IsMember(demi::oracles::suite_names()))
      ->capture_default_str();
  oracle->add_option("--seed", oracle_opts.seed)->capture_default_str();
  oracle->add_option("--out", oracle_opts.out, "JSON-lines file, default stdout");

  h::ReportOptions report_opts;
  auto* report = app.add_subcommand("report", "summarize a sweep CSV");
  report->add_option("--csv", report_opts.csv)->required();
  report->add_option("--out", report_opts.out, "markdown file, default stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : h::kConfigError;
  }

  try {
    if (*make_world) return h::cmd_make_world(world_opts, std::cout, std::cerr);
    if (*train) {
      train_opts.run.estimator = demi::parse_estimator_kind(train_estimator);
      train_opts.run.critic = demi::parse_critic_mode(train_critic);
      train_opts.run.psi_star = demi::parse_psi_star_mode(train_psi);
      return h::cmd_train(train_opts, std::cout, std::cerr);
    }
    if (*sweep) {
      sweep_opts.base.critic = demi::parse_critic_mode(sweep_critic);
      sweep_opts.base.psi_star = demi::parse_psi_star_mode(sweep_psi);
      return h::cmd_sweep(sweep_opts, std::cout, std::cerr);
    }
    if (*oracle) return h::cmd_oracle(oracle_opts, std::cout, std::cerr);
    if (*report) return h::cmd_report(report_opts, std::cout, std::cerr);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return h::kConfigError;
  }
  return h::kConfigError;
}
