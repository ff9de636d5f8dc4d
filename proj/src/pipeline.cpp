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

#include "cba/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cba/context.hpp"
#include "cba/text_io.hpp"

namespace cba {

namespace fs = std::filesystem;

namespace {

void say(const Run& run, const std::string& msg) {
  if (run.log) run.log(msg);
}

void snapshot(const Run& run, const fs::path& dir, const std::string& command) {
  fs::create_directories(dir);
  write_text(dir / (command + ".config.json"), serialize_config(run.config));
}

std::string corpus_fingerprint(const RunConfig& config) {
  std::string out;
  std::istringstream in(serialize_config(config));
  for (std::string line; std::getline(in, line);)
    if (line.find("\"corpus.") != std::string::npos) out += line + "\n";
  return out;
}

Corpus require_corpus(const Run& run) {
  const fs::path dir = run.dir() / "corpus";
  if (!fs::exists(dir / "train.tsv"))
    throw Error("no corpus in " + dir.string() + "; run gen-corpus first");
  const fs::path stamp = dir / "config.json";
  if (fs::exists(stamp)) {
    std::string stored;
    for (const auto& l : read_lines(stamp)) stored += l + "\n";
    if (stored != corpus_fingerprint(run.config))
      throw Error("corpus in " + dir.string() +
                      " was generated with different corpus settings; re-run gen-corpus",
                  ErrorKind::kConfig);
  }
  return load_corpus(dir, run.config.corpus.charset_size);
}

BackboneParams require_backbone(const Run& run) {
  const fs::path path = run.dir() / "backbone.ckpt";
  if (!fs::exists(path)) throw Error("no backbone in " + run.dir().string() + "; run pretrain first");
  BackboneParams b = load_params<BackboneParams>(path);
  const ModelDims& d = run.config.model;
  if (b.enc_weight.rows() != d.feature_dim || b.enc_weight.cols() != d.width ||
      b.head_weight.cols() != d.num_outputs())
    throw Error("backbone checkpoint shape disagrees with the configured model", ErrorKind::kConfig);
  return b;
}

std::string metrics_tsv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch\taed\tctc\tbalance\ttotal\n";
  for (const auto& m : history) {
    out += std::to_string(m.epoch) + "\t" + format_real(m.aed) + "\t" + format_real(m.ctc) + "\t" +
           format_real(m.balance) + "\t" + format_real(m.total) + "\n";
  }
  return out;
}

EpochCallback epoch_logger(const Run& run, const std::string& what) {
  return [&run, what](const EpochMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s epoch %zu: aed %.4f ctc %.4f balance %.4f total %.4f",
                  what.c_str(), m.epoch, m.aed, m.ctc, m.balance, m.total);
    say(run, buf);
  };
}

AdapterParams train_and_save(const Run& run, const Corpus& corpus, const BackboneParams& backbone,
                             const TrainConfig& tc, const fs::path& dir, const std::string& what) {
  const fs::path backbone_path = run.dir() / "backbone.ckpt";
  const std::string before = checkpoint_bytes(backbone_path);
  TrainConfig config = tc;
  config.stage = Stage::kAdapter;
  AdapterResult result = train_adapter(corpus.train, corpus.freq, corpus.vocab, backbone,
                                       run.config.model, config, epoch_logger(run, what));
  if (checkpoint_bytes(backbone_path) != before)
    throw Error("backbone checkpoint changed during adapter training");
  fs::create_directories(dir);
  save_params(result.adapter, dir / "adapter.ckpt");
  write_text(dir / "train_metrics.tsv", metrics_tsv(result.history));
  save_context_list(build_context_list(corpus.freq, corpus.vocab, config.gamma),
                    dir / "context_list.txt");
  return std::move(result.adapter);
}

void write_eval(const fs::path& dir, const std::string& prefix, const EvalResult& r,
                EvalMode mode, const std::vector<Utterance>& test) {
  write_text(dir / (prefix + "_report.txt"), format_report(r.report, mode));
  write_text(dir / (prefix + "_buckets.tsv"), format_bucket_tsv(r.report.words.word));
  write_text(dir / (prefix + "_context_buckets.tsv"), format_bucket_tsv(r.report.words.context));
  if (r.report.has_attention) {
    write_text(dir / (prefix + "_attention_summary.tsv"),
               format_attention_summary_tsv(r.per_utterance, test));
  }
}

std::string percent(double rate) {
  if (std::isnan(rate)) return "nan";
  return format_fixed(100.0 * rate, 2);
}

std::string ablation_row(const std::string& label, const std::string& gamma,
                         const std::string& lambda2, const std::string& alpha,
                         const EvalReport& r) {
  std::string row = label + "\t" + gamma + "\t" + lambda2 + "\t" + alpha + "\t" + percent(r.cer()) +
                    "\t" + percent(r.c_cer());
  for (std::size_t b = 0; b < kNumBuckets; ++b)
    row += "\t" + percent(r.words.word.rate(static_cast<ShotBucket>(b)));
  for (std::size_t b = 0; b < kNumBuckets; ++b)
    row += "\t" + percent(r.words.context.rate(static_cast<ShotBucket>(b)));
  return row;
}

std::string cell_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cell_%02zu", i);
  return buf;
}

}  // namespace

void run_gen_corpus(const Run& run) {
  snapshot(run, run.dir(), "gen-corpus");
  say(run, "generating corpus (seed " + std::to_string(run.config.corpus.seed) + ")");
  const Corpus corpus = generate_corpus(run.config.corpus);
  const fs::path dir = run.dir() / "corpus";
  save_corpus(corpus, dir);
  write_text(dir / "config.json", corpus_fingerprint(run.config));
  say(run, "wrote " + std::to_string(corpus.train.size()) + " train and " +
               std::to_string(corpus.test.size()) + " test utterances to " + dir.string());
}

void run_pretrain(const Run& run) {
  snapshot(run, run.dir(), "pretrain");
  const Corpus corpus = require_corpus(run);
  TrainConfig tc = run.config.train;
  tc.stage = Stage::kPretrain;
  const PretrainResult result =
      pretrain_backbone(corpus.train, run.config.model, tc, epoch_logger(run, "pretrain"));
  save_params(result.backbone, run.dir() / "backbone.ckpt");
  std::string metrics = "epoch\taed\n";
  for (const auto& m : result.history)
    metrics += std::to_string(m.epoch) + "\t" + format_real(m.aed) + "\n";
  write_text(run.dir() / "pretrain_metrics.tsv", metrics);
  write_text(run.dir() / "pretrain_report.txt",
             "heldout_utterances = " + std::to_string(result.heldout_size) +
                 "\nheldout_cer = " + format_fixed(result.heldout_cer, 6) + "\n");
  say(run, "held-out CER " + format_fixed(result.heldout_cer, 4));
}

void run_train_adapter(const Run& run) {
  snapshot(run, run.dir(), "train-adapter");
  const Corpus corpus = require_corpus(run);
  const BackboneParams backbone = require_backbone(run);
  train_and_save(run, corpus, backbone, run.config.train, run.dir(), "adapter");
  say(run, "wrote " + (run.dir() / "adapter.ckpt").string());
}

void run_eval(const Run& run) {
  snapshot(run, run.dir(), "eval");
  const Corpus corpus = require_corpus(run);
  const BackboneParams backbone = require_backbone(run);
  const EvalOptions& opts = run.config.eval;
  const EvalResult base = evaluate(corpus.test, corpus.freq, corpus.zero_shot, backbone, nullptr, opts);
  write_eval(run.dir(), "baseline", base, opts.mode, corpus.test);
  save_context_list(base.context_list, run.dir() / "inference_context_list.txt");
  say(run, "baseline CER " + percent(base.report.cer()) + "% C-CER " + percent(base.report.c_cer()) + "%");

  const fs::path adapter_path = run.dir() / "adapter.ckpt";
  if (!fs::exists(adapter_path)) {
    say(run, "no adapter checkpoint; scored the baseline only");
    return;
  }
  const AdapterParams adapter = load_params<AdapterParams>(adapter_path);
  const EvalResult r = evaluate(corpus.test, corpus.freq, corpus.zero_shot, backbone, &adapter, opts);
  write_eval(run.dir(), "eval", r, opts.mode, corpus.test);
  say(run, "adapter CER " + percent(r.report.cer()) + "% C-CER " + percent(r.report.c_cer()) + "%");
}

void run_stats(const Run& run) {
  snapshot(run, run.dir(), "stats");
  const Corpus corpus = require_corpus(run);
  std::string tsv = "gamma\tlog2_gamma\tn_ctx\tn_nctx\trate\tlist_size\n";
  for (int e = 0; e <= 16; ++e) {
    const std::uint64_t gamma = std::uint64_t{1} << e;
    std::uint64_t n_ctx = 0;
    std::size_t list_size = 0;
    for (const auto& w : corpus.vocab) {
      const auto n = corpus.freq.count(w);
      if (n <= gamma) {
        n_ctx += n;
        ++list_size;
      }
    }
    const std::string rate = n_ctx == 0 ? "inf" : format_real(imbalance_rate(corpus.freq, gamma));
    tsv += std::to_string(gamma) + "\t" + std::to_string(e) + "\t" + std::to_string(n_ctx) + "\t" +
           std::to_string(corpus.freq.total() - n_ctx) + "\t" + rate + "\t" +
           std::to_string(list_size) + "\n";
  }
  write_text(run.dir() / "imbalance.tsv", tsv);

  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  for (const auto& w : corpus.vocab) ranked.emplace_back(corpus.freq.count(w), w);
  for (const auto& w : corpus.zero_shot) ranked.emplace_back(0, w);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::string freq = "rank\tword\tcount\tbucket\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    freq += std::to_string(i + 1) + "\t" + ranked[i].second + "\t" + std::to_string(ranked[i].first) +
            "\t" + bucket_name(shot_bucket(ranked[i].first)) + "\n";
  }
  write_text(run.dir() / "freq_rank.tsv", freq);
  say(run, "wrote imbalance.tsv and freq_rank.tsv");
}

fs::path run_attention_dump(const Run& run, const std::string& utt_id) {
  snapshot(run, run.dir(), "attention-dump");
  const Corpus corpus = require_corpus(run);
  const BackboneParams backbone = require_backbone(run);
  const fs::path adapter_path = run.dir() / "adapter.ckpt";
  if (!fs::exists(adapter_path))
    throw Error("no adapter in " + run.dir().string() + "; run train-adapter first");
  const AdapterParams adapter = load_params<AdapterParams>(adapter_path);

  const Utterance* utt = nullptr;
  for (const auto* split : {&corpus.test, &corpus.train})
    for (const auto& u : *split)
      if (u.id == utt_id && utt == nullptr) utt = &u;
  if (utt == nullptr) throw Error("unknown utterance id '" + utt_id + "'", ErrorKind::kArgument);

  const ContextList list = build_inference_context_list(corpus.test, corpus.zero_shot,
                                                        run.config.eval.test_count_threshold);
  const auto entries = decoding_entries(*utt, list, run.config.eval);
  const ContextSubset subset = make_subset(entries, reference_context(*utt, list));
  const ForwardCache cache = forward_full(*utt, subset, backbone, adapter);
  const fs::path out = run.dir() / ("attention_" + utt_id + ".tsv");
  write_text(out, format_attention_tsv(cache.attention, subset.entries));
  say(run, "wrote " + out.string());
  return out;
}

const std::vector<AblationCell>& ablation_grid() {
  static const std::vector<AblationCell> grid = {
      {4, 1.0, 0.9},       {16, 1.0, 0.9},      {256, 1.0, 0.9},     {65536, 1.0, 0.9},
      {4, 0.5, 0.9},       {16, 0.5, 0.9},      {256, 0.5, 0.9},     {65536, 0.5, 0.9},
      {65536, 0.5, 0.99},  {65536, 0.5, 0.999}, {65536, 0.5, 0.9999},
  };
  return grid;
}

std::string ablation_header() {
  std::string h = "row\tgamma\tlambda2\talpha\tcer\tc_cer";
  for (const char* scope : {"word", "context"})
    for (std::size_t b = 0; b < kNumBuckets; ++b)
      h += std::string("\t") + scope + "_" + bucket_name(static_cast<ShotBucket>(b));
  return h;
}

void run_ablate(const Run& run, std::optional<std::size_t> cell) {
  const auto& grid = ablation_grid();
  if (cell && *cell >= grid.size())
    throw Error("cell index out of range [0, " + std::to_string(grid.size()) + ")",
                ErrorKind::kArgument);
  const fs::path root = run.dir() / "ablate";
  snapshot(run, root, "ablate");
  const Corpus corpus = require_corpus(run);
  const BackboneParams backbone = require_backbone(run);
  const EvalOptions& opts = run.config.eval;

  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (cell && *cell != i) continue;
    const AblationCell& c = grid[i];
    const fs::path dir = root / cell_name(i);
    Run cell_run{run.config, run.log};
    cell_run.config.train.gamma = c.gamma;
    cell_run.config.train.loss.lambda2 = c.lambda2;
    cell_run.config.train.loss.alpha = c.alpha;
    snapshot(cell_run, dir, "cell");
    say(run, "ablation " + cell_name(i) + ": gamma " + std::to_string(c.gamma) + " lambda2 " +
                 format_real(c.lambda2) + " alpha " + format_real(c.alpha));
    const AdapterParams adapter =
        train_and_save(cell_run, corpus, backbone, cell_run.config.train, dir, cell_name(i));
    const EvalResult r = evaluate(corpus.test, corpus.freq, corpus.zero_shot, backbone, &adapter, opts);
    write_eval(dir, "eval", r, opts.mode, corpus.test);
    write_text(dir / "row.tsv",
               ablation_row(cell_name(i), std::to_string(c.gamma), format_real(c.lambda2),
                            c.lambda2 == 1.0 ? "-" : format_real(c.alpha), r.report) +
                   "\n");
  }

  const EvalResult base = evaluate(corpus.test, corpus.freq, corpus.zero_shot, backbone, nullptr, opts);
  std::vector<std::string> lines{ablation_header(), ablation_row("baseline", "-", "-", "-", base.report)};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const fs::path row = root / cell_name(i) / "row.tsv";
    if (!fs::exists(row)) continue;
    for (const auto& l : read_lines(row))
      if (!l.empty()) lines.push_back(l);
  }
  write_lines(root / "ablation.tsv", lines);
  say(run, "wrote " + (root / "ablation.tsv").string());
}

}  // namespace cba
