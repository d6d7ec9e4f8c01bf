// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

// Command-line front end. Talks to the library only through newsrec.h.

#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "newsrec/newsrec.h"

namespace {

// 0 ok, 2 config, 3 data, 4 numerical abort, 1 anything else.
int exit_code(nr_status s) {
  switch (s) {
    case NR_OK: return 0;
    case NR_ERR_CONFIG:
    case NR_ERR_ARGUMENT: return 2;
    case NR_ERR_DATA:
    case NR_ERR_IO: return 3;
    case NR_ERR_NUMERICAL: return 4;
    default: return 1;
  }
}

struct Args {
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string pretrained;
  bool scratch = false;
  std::string checkpoint;
  bool oracle = false;
};

void common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "run config (JSON)")->required();
  cmd->add_option("--out", a.out, "output directory")->capture_default_str();
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&a](const std::uint64_t& s) { a.seed = s, a.has_seed = true; }, "override the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"newsrec: two-tower news recommendation experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nr_version()));
  Args a;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset and print its summary");
  auto* pre = app.add_subcommand("pretrain", "masked-token pretraining of the MINI_PLM encoder");
  auto* trn = app.add_subcommand("train", "train a recommender");
  auto* evl = app.add_subcommand("evaluate", "score a split and write the evaluation report");
  auto* cmp = app.add_subcommand("compare", "train every variant over the configured seeds");
  auto* exp = app.add_subcommand("export-embeddings", "2-D projection of news embeddings");
  for (auto* c : {gen, pre, trn, evl, cmp, exp}) common(c, a);
  auto* from = trn->add_option("--from-pretrained", a.pretrained, "pretrain output directory (its pretrained/ folder)");
  trn->add_flag("--scratch", a.scratch, "random initialization regardless of the config")->excludes(from);
  evl->add_option("--checkpoint", a.checkpoint, "train output directory");
  evl->add_flag("--oracle-scorer", a.oracle, "debug: score candidates by their labels");
  exp->add_option("--checkpoint", a.checkpoint, "train output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  nr_config* cfg = nullptr;
  nr_status st = nr_config_load(a.config.c_str(), &cfg);
  if (st != NR_OK) {
    std::fprintf(stderr, "newsrec: %s: %s\n", nr_status_name(st), nr_last_error());
    return exit_code(st);
  }
  if (a.has_seed && (st = nr_config_set_seed(cfg, a.seed)) != NR_OK) {
    std::fprintf(stderr, "newsrec: %s: %s\n", nr_status_name(st), nr_last_error());
    nr_config_free(cfg);
    return exit_code(st);
  }
  nr_session* session = nullptr;
  if ((st = nr_session_create(&session)) != NR_OK) {
    nr_config_free(cfg);
    return exit_code(st);
  }

  const char* out = a.out.c_str();
  if (gen->parsed()) {
    st = nr_cmd_gen_data(session, cfg, out);
  } else if (pre->parsed()) {
    st = nr_cmd_pretrain(session, cfg, out);
  } else if (trn->parsed()) {
    st = nr_cmd_train(session, cfg, out, a.pretrained.empty() ? nullptr : a.pretrained.c_str(), a.scratch);
  } else if (evl->parsed()) {
    st = nr_cmd_evaluate(session, cfg, out, a.checkpoint.empty() ? nullptr : a.checkpoint.c_str(), a.oracle);
  } else if (cmp->parsed()) {
    st = nr_cmd_compare(session, cfg, out);
  } else {
    st = nr_cmd_export_embeddings(session, cfg, out, a.checkpoint.c_str());
  }
  if (st != NR_OK) {
    std::fprintf(stderr, "newsrec: %s: %s\n", nr_status_name(st), nr_session_last_error(session));
  }
  nr_session_free(session);
  nr_config_free(cfg);
  return exit_code(st);
}
