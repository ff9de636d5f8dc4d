// Copyright 2026 The cbadapter Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cba/cba.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::string utt;
  int cell = -1;
};

int exit_code(cba_status s) {
  switch (s) {
    case CBA_OK: return 0;
    case CBA_ERR_CONFIG: return 2;
    case CBA_ERR_ARGUMENT:
    case CBA_ERR_RUNTIME: break;
  }
  return 3;
}

int report(cba_status s) {
  if (s != CBA_OK) std::cerr << "error: " << cba_last_error() << '\n';
  return exit_code(s);
}

int dispatch(const std::string& command, const Options& o) {
  cba_run* raw = nullptr;
  cba_status s = cba_run_create(o.config.empty() ? nullptr : o.config.c_str(), &raw);
  if (s != CBA_OK) return report(s);
  std::unique_ptr<cba_run, decltype(&cba_run_destroy)> run(raw, cba_run_destroy);
  if (!o.out.empty() && (s = cba_run_set_out_dir(run.get(), o.out.c_str())) != CBA_OK)
    return report(s);
  if (o.seed) cba_run_set_seed(run.get(), *o.seed);
  cba_run_set_quiet(run.get(), o.quiet ? 1 : 0);

  if (command == "gen-corpus") return report(cba_gen_corpus(run.get()));
  if (command == "pretrain") return report(cba_pretrain(run.get()));
  if (command == "train-adapter") return report(cba_train_adapter(run.get()));
  if (command == "eval") return report(cba_eval(run.get()));
  if (command == "stats") return report(cba_stats(run.get()));
  if (command == "attention-dump") return report(cba_attention_dump(run.get(), o.utt.c_str()));
  return report(cba_ablate(run.get(), o.cell));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-balanced adapter toolkit", "cba"};
  app.require_subcommand(1);
  Options o;

  struct Command {
    const char* name;
    const char* help;
    bool needs_config;
  };
  const Command commands[] = {
      {"gen-corpus", "Generate the synthetic corpus", false},
      {"pretrain", "Train the backbone on the generated corpus", true},
      {"train-adapter", "Train the contextual adapter on a frozen backbone", true},
      {"eval", "Score the backbone and, when present, the adapter", true},
      {"stats", "Write the imbalance-rate curve and frequency ranks", false},
      {"attention-dump", "Write the attention matrix of one test utterance", false},
      {"ablate", "Run the ablation grid (or one cell) and tabulate it", true},
  };
  for (const Command& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    auto* config = sub->add_option("--config", o.config, "Flat JSON configuration file")
                       ->check(CLI::ExistingFile);
    if (cmd.needs_config) config->required();
    sub->add_option("--out", o.out, "Output directory (overrides out_dir)");
    sub->add_option("--seed", o.seed, "Seed for both corpus and training");
    sub->add_flag("--quiet", o.quiet, "Suppress progress lines");
    if (std::string(cmd.name) == "attention-dump")
      sub->add_option("--utt", o.utt, "Test utterance id")->required();
    if (std::string(cmd.name) == "ablate")
      sub->add_option("--cell", o.cell, "Single grid cell index")->check(CLI::NonNegativeNumber);
  }

  if (argc < 2) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  return dispatch(app.get_subcommands().front()->get_name(), o);
}
