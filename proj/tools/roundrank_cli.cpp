// Experiment CLI: recover / complete / figure1 / recommend / analyze / lemmas.
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime or
// divergence failure (including lemma-suite violations).

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "roundrank/roundrank.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  roundrank::RunOptions run;
  std::optional<long long> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "key=value config file");
  if (config_required) opt->required();
  cmd->add_option("--out", flags.run.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--threads", flags.run.threads, "worker threads")->capture_default_str();
  cmd->add_flag("--no-timestamp", flags.run.no_timestamp,
                "omit the generated-at comment from CSV output");
}

roundrank::KeyValueConfig load_config(const CommonFlags& flags) {
  if (flags.config_path.empty()) return {};
  return roundrank::KeyValueConfig::from_file(flags.config_path);
}

roundrank::RunOptions run_options(const CommonFlags& flags) {
  roundrank::RunOptions run = flags.run;
  if (flags.seed) run.seed = static_cast<std::uint64_t>(*flags.seed);
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ordinal matrix factorization experiments"};
  app.require_subcommand(1);

  CommonFlags recover_flags, complete_flags, figure1_flags, recommend_flags,
      analyze_flags, lemmas_flags;

  auto* recover = app.add_subcommand("recover", "fully observed reconstruction curves");
  add_common(recover, recover_flags, true);
  auto* complete = app.add_subcommand("complete", "held-out completion tables");
  add_common(complete, complete_flags, true);
  auto* figure1 = app.add_subcommand("figure1", "SVD residual curves vs witness ranks");
  add_common(figure1, figure1_flags, false);
  auto* recommend = app.add_subcommand("recommend", "rating-data evaluation with grid tuning");
  add_common(recommend, recommend_flags, true);
  auto* analyze = app.add_subcommand("analyze", "structure/witness/uniqueness report");
  add_common(analyze, analyze_flags, true);
  auto* lemmas = app.add_subcommand("lemmas", "randomized constructive property suite");
  add_common(lemmas, lemmas_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (recover->parsed())
      roundrank::cmd_recover(load_config(recover_flags), run_options(recover_flags));
    else if (complete->parsed())
      roundrank::cmd_complete(load_config(complete_flags), run_options(complete_flags));
    else if (figure1->parsed())
      roundrank::cmd_figure1(load_config(figure1_flags), run_options(figure1_flags));
    else if (recommend->parsed())
      roundrank::cmd_recommend(load_config(recommend_flags), run_options(recommend_flags));
    else if (analyze->parsed())
      roundrank::cmd_analyze(load_config(analyze_flags), run_options(analyze_flags));
    else if (lemmas->parsed()) {
      const auto report =
          roundrank::cmd_lemmas(load_config(lemmas_flags), run_options(lemmas_flags));
      if (!report.all_passed()) return 2;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
