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

#include "cba/eval.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "cba/text_io.hpp"

namespace cba {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double CharErrorCount::rate() const {
  return ref_len == 0 ? kNaN : static_cast<double>(errors) / static_cast<double>(ref_len);
}

CharErrorCount char_errors(std::span<const std::size_t> ref, std::span<const std::size_t> hyp,
                           std::span<const Span> spans) {
  CharErrorCount out;
  if (spans.empty()) {
    out.errors = edit_distance(ref, hyp);
    out.ref_len = ref.size();
    return out;
  }
  std::vector<int> span_of(ref.size(), -1);
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const Span& s = spans[k];
    if (s.start > s.end || s.end > ref.size()) throw Error("C-CER span outside the reference");
    for (std::size_t i = s.start; i < s.end; ++i) span_of[i] = static_cast<int>(k);
    out.ref_len += s.end - s.start;
  }
  for (const AlignedOp& op : align(ref, hyp)) {
    switch (op.op) {
      case EditOp::kMatch:
        break;
      case EditOp::kSub:
      case EditOp::kDel:
        if (span_of[op.ref_pos] >= 0) ++out.errors;
        break;
      case EditOp::kIns:
        // Between reference symbols p-1 and p; counted when both sit in one span.
        if (op.ref_pos > 0 && op.ref_pos < ref.size() && span_of[op.ref_pos - 1] >= 0 &&
            span_of[op.ref_pos - 1] == span_of[op.ref_pos]) {
          ++out.errors;
        }
        break;
    }
  }
  return out;
}

double cer(std::span<const std::size_t> ref, std::span<const std::size_t> hyp,
           std::span<const Span> spans) {
  if (spans.empty() && ref.empty()) throw Error("empty reference");
  const CharErrorCount c = char_errors(ref, hyp, spans);
  if (c.ref_len == 0) throw Error("empty total span length");
  return c.rate();
}

std::size_t BucketCounts::total_refs() const {
  std::size_t n = 0;
  for (auto v : ref_count) n += v;
  return n;
}

double BucketCounts::rate(ShotBucket b) const {
  const auto i = static_cast<std::size_t>(b);
  return ref_count[i] == 0 ? kNaN
                           : static_cast<double>(errors[i]) / static_cast<double>(ref_count[i]);
}

void BucketCounts::add(const BucketCounts& o) {
  for (std::size_t i = 0; i < kNumBuckets; ++i) {
    ref_count[i] += o.ref_count[i];
    errors[i] += o.errors[i];
  }
}

WordScores bucketed_word_errors(const std::vector<std::string>& ref_words,
                                const std::vector<std::string>& hyp_words, const FreqTable& freq,
                                const ContextList* context_list) {
  WordScores out;
  std::vector<bool> wrong(ref_words.size(), false);
  for (const AlignedOp& op : align(std::span<const std::string>(ref_words),
                                   std::span<const std::string>(hyp_words))) {
    if (op.op == EditOp::kSub || op.op == EditOp::kDel) wrong[op.ref_pos] = true;
  }
  for (std::size_t i = 0; i < ref_words.size(); ++i) {
    const auto b = static_cast<std::size_t>(shot_bucket(freq.count(ref_words[i])));
    ++out.word.ref_count[b];
    if (wrong[i]) ++out.word.errors[b];
    if (context_list != nullptr && context_list->contains(ref_words[i])) {
      ++out.context.ref_count[b];
      if (wrong[i]) ++out.context.errors[b];
    }
  }
  return out;
}

ContextList build_inference_context_list(const std::vector<Utterance>& test,
                                         const std::vector<std::string>& zero_shot,
                                         std::uint64_t threshold) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& u : test)
    for (const auto& w : u.words) ++counts[w];
  std::set<std::string> picked(zero_shot.begin(), zero_shot.end());
  for (const auto& [w, n] : counts)
    if (n < threshold) picked.insert(w);
  if (picked.empty()) throw Error("inference context list is empty");
  return ContextList{{picked.begin(), picked.end()}, threshold};
}

AttentionSummary attention_summary(const Matrix& attention, const ContextSubset& subset,
                                   const std::vector<Span>& word_spans) {
  AttentionSummary out;
  const std::size_t t_len = attention.rows();
  for (std::size_t r = 0; r < subset.ref_sequence.size(); ++r) {
    const std::size_t col = subset.ref_sequence[r];
    const Span span = subset.ref_spans[r];
    RefMass m{subset.entries[col], span};
    const std::size_t end = std::min(span.end, t_len);
    if (span.start < end) {
      for (std::size_t t = span.start; t < end; ++t) {
        m.ref_mass += attention(t, col);
        m.no_context_mass += attention(t, 0);
      }
      m.ref_mass /= static_cast<double>(end - span.start);
      m.no_context_mass /= static_cast<double>(end - span.start);
    }
    out.refs.push_back(m);
  }
  std::vector<bool> in_word(t_len, false);
  for (const Span& s : word_spans)
    for (std::size_t t = s.start; t < std::min(s.end, t_len); ++t) in_word[t] = true;
  double sum = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (in_word[t]) continue;
    sum += attention(t, 0);
    ++out.silence_frames;
  }
  out.silence_no_context_mass = out.silence_frames ? sum / static_cast<double>(out.silence_frames) : 0.0;
  return out;
}

std::string chars_to_string(std::span<const std::size_t> chars) {
  std::string s;
  s.reserve(chars.size());
  for (std::size_t c : chars) s.push_back(char_symbol(c));
  return s;
}

namespace {

struct Decoded {
  Matrix logits;
  AttentionSummary summary;
  bool has_attention = false;
};

std::vector<std::vector<std::string>> make_chunks(const ContextList& list, std::size_t s_hat) {
  std::vector<std::vector<std::string>> chunks;
  const std::size_t per = s_hat - 1;
  for (std::size_t i = 0; i < list.words.size(); i += per) {
    std::vector<std::string> entries{kNoContext};
    for (std::size_t j = i; j < std::min(i + per, list.words.size()); ++j)
      entries.push_back(list.words[j]);
    chunks.push_back(std::move(entries));
  }
  return chunks;
}

std::vector<std::string> diagnostic_entries(const std::vector<RefOccurrence>& refs,
                                            const ContextList& list, std::size_t s_hat) {
  std::vector<std::string> entries{kNoContext};
  std::set<std::string> used;
  for (const auto& r : refs) {
    if (entries.size() >= s_hat) break;
    if (used.insert(r.word).second) entries.push_back(r.word);
  }
  for (const auto& w : list.words) {
    if (entries.size() >= s_hat) break;
    if (used.insert(w).second) entries.push_back(w);
  }
  return entries;
}

}  // namespace

std::vector<std::string> decoding_entries(const Utterance& utt, const ContextList& list,
                                          const EvalOptions& options) {
  if (options.s_hat < 2) throw Error("evaluation s_hat must be at least 2", ErrorKind::kConfig);
  const auto refs = reference_context(utt, list);
  if (options.mode == EvalMode::kDiagnostic) return diagnostic_entries(refs, list, options.s_hat);
  auto chunks = make_chunks(list, options.s_hat);
  std::size_t best = 0, best_refs = 0;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const std::size_t n = make_subset(chunks[c], refs).ref_indices.size();
    if (n > best_refs) {
      best_refs = n;
      best = c;
    }
  }
  return chunks.at(best);
}

EvalResult evaluate(const std::vector<Utterance>& test, const FreqTable& freq,
                    const std::vector<std::string>& zero_shot, const BackboneParams& backbone,
                    const AdapterParams* adapter, const EvalOptions& options) {
  if (options.s_hat < 2) throw Error("evaluation s_hat must be at least 2", ErrorKind::kConfig);
  EvalResult result;
  result.context_list = build_inference_context_list(test, zero_shot, options.test_count_threshold);
  const ContextList& list = result.context_list;

  std::vector<std::vector<std::string>> chunks;
  std::vector<Matrix> chunk_ctx;
  if (adapter != nullptr && options.mode == EvalMode::kRealistic) {
    chunks = make_chunks(list, options.s_hat);
    for (const auto& c : chunks) chunk_ctx.push_back(encode_entries(c, *adapter).h_ctx);
  }

  EvalReport& rep = result.report;
  double silence_sum = 0.0;
  std::size_t silence_utts = 0;
  for (const Utterance& u : test) {
    Decoded dec;
    const auto refs = reference_context(u, list);
    if (adapter == nullptr) {
      dec.logits = backbone_logits(u.frames, backbone);
    } else if (options.mode == EvalMode::kDiagnostic) {
      const ContextSubset subset = make_subset(diagnostic_entries(refs, list, options.s_hat), refs);
      const ForwardCache cache = forward_full(u, subset, backbone, *adapter);
      dec.logits = cache.logits;
      dec.summary = attention_summary(cache.attention, subset, u.word_spans);
      dec.has_attention = true;
    } else {
      const Matrix h_aco = encode_acoustic(u.frames, backbone);
      std::size_t best = 0, best_refs = 0;
      std::vector<Attended> per_chunk;
      per_chunk.reserve(chunks.size());
      double silence = 0.0;
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        per_chunk.push_back(cross_attend(h_aco, chunk_ctx[c], *adapter));
        const ContextSubset subset = make_subset(chunks[c], refs);
        const AttentionSummary s = attention_summary(per_chunk.back().attention, subset, u.word_spans);
        dec.summary.refs.insert(dec.summary.refs.end(), s.refs.begin(), s.refs.end());
        dec.summary.silence_frames = s.silence_frames;
        silence += s.silence_no_context_mass;
        if (subset.ref_indices.size() > best_refs) {
          best_refs = subset.ref_indices.size();
          best = c;
        }
      }
      dec.summary.silence_no_context_mass = silence / static_cast<double>(chunks.size());
      std::sort(dec.summary.refs.begin(), dec.summary.refs.end(),
                [](const RefMass& a, const RefMass& b) { return a.span.start < b.span.start; });
      dec.logits = head_logits(per_chunk[best].h_fused, backbone);
      dec.has_attention = true;
    }

    const auto hyp_words_idx = greedy_decode_words(dec.logits, options.word_gap);
    std::vector<std::string> hyp_words;
    std::vector<std::size_t> hyp_chars;
    for (const auto& w : hyp_words_idx) {
      hyp_words.push_back(chars_to_string(w));
      hyp_chars.insert(hyp_chars.end(), w.begin(), w.end());
    }

    std::vector<Span> ctx_spans;
    std::size_t offset = 0;
    for (const auto& w : u.words) {
      if (list.contains(w)) ctx_spans.push_back({offset, offset + w.size()});
      offset += w.size();
    }
    const CharErrorCount ce = char_errors(u.chars, hyp_chars);
    rep.chars.errors += ce.errors;
    rep.chars.ref_len += ce.ref_len;
    if (!ctx_spans.empty()) {
      const CharErrorCount cc = char_errors(u.chars, hyp_chars, ctx_spans);
      rep.context_chars.errors += cc.errors;
      rep.context_chars.ref_len += cc.ref_len;
    }
    const WordScores ws = bucketed_word_errors(u.words, hyp_words, freq, &list);
    rep.words.word.add(ws.word);
    rep.words.context.add(ws.context);

    if (dec.has_attention) {
      rep.has_attention = true;
      for (const auto& r : dec.summary.refs) {
        rep.mean_ref_mass += r.ref_mass;
        rep.mean_no_context_in_context += r.no_context_mass;
        ++rep.n_ref_occurrences;
      }
      silence_sum += dec.summary.silence_no_context_mass;
      ++silence_utts;
    }
    result.per_utterance.push_back(std::move(dec.summary));
    ++rep.n_utterances;
  }
  if (rep.n_ref_occurrences > 0) {
    rep.mean_ref_mass /= static_cast<double>(rep.n_ref_occurrences);
    rep.mean_no_context_in_context /= static_cast<double>(rep.n_ref_occurrences);
  }
  if (silence_utts > 0) rep.mean_no_context_in_silence = silence_sum / static_cast<double>(silence_utts);
  return result;
}

namespace {

std::string rate_text(double r) { return std::isnan(r) ? "nan" : format_fixed(r, 6); }

}  // namespace

std::string format_report(const EvalReport& r, EvalMode mode) {
  std::ostringstream os;
  os << "# c_cer charges substitutions and deletions of context-word characters plus\n"
        "# insertions strictly inside a context word, over total context characters\n";
  os << "mode = " << (mode == EvalMode::kRealistic ? "realistic" : "diagnostic") << '\n';
  os << "n_utterances = " << r.n_utterances << '\n';
  os << "cer = " << rate_text(r.cer()) << '\n';
  os << "c_cer = " << rate_text(r.c_cer()) << '\n';
  os << "char_errors = " << r.chars.errors << '\n';
  os << "char_ref_len = " << r.chars.ref_len << '\n';
  os << "context_char_errors = " << r.context_chars.errors << '\n';
  os << "context_char_ref_len = " << r.context_chars.ref_len << '\n';
  for (const auto& [scope, counts] : {std::pair{"word", &r.words.word},
                                      std::pair{"context", &r.words.context}}) {
    for (std::size_t b = 0; b < kNumBuckets; ++b) {
      const auto bucket = static_cast<ShotBucket>(b);
      const std::string key = std::string(scope) + "." + bucket_name(bucket);
      os << key << ".ref_count = " << counts->ref_count[b] << '\n';
      os << key << ".errors = " << counts->errors[b] << '\n';
      os << key << ".rate = " << rate_text(counts->rate(bucket)) << '\n';
    }
  }
  if (r.has_attention) {
    os << "attention.ref_occurrences = " << r.n_ref_occurrences << '\n';
    os << "attention.ref_mass = " << format_fixed(r.mean_ref_mass, 6) << '\n';
    os << "attention.no_context_in_context = " << format_fixed(r.mean_no_context_in_context, 6) << '\n';
    os << "attention.no_context_in_silence = " << format_fixed(r.mean_no_context_in_silence, 6) << '\n';
  }
  return os.str();
}

std::string format_bucket_tsv(const BucketCounts& c) {
  std::ostringstream os;
  os << "bucket\tref_count\terrors\trate\n";
  for (std::size_t b = 0; b < kNumBuckets; ++b) {
    const auto bucket = static_cast<ShotBucket>(b);
    os << bucket_name(bucket) << '\t' << c.ref_count[b] << '\t' << c.errors[b] << '\t'
       << rate_text(c.rate(bucket)) << '\n';
  }
  return os.str();
}

std::string format_attention_tsv(const Matrix& attention, const std::vector<std::string>& entries) {
  std::ostringstream os;
  for (std::size_t s = 0; s < entries.size(); ++s) os << (s ? "\t" : "") << entries[s];
  os << '\n';
  for (std::size_t t = 0; t < attention.rows(); ++t) {
    for (std::size_t s = 0; s < attention.cols(); ++s) os << (s ? "\t" : "") << format_fixed(attention(t, s), 6);
    os << '\n';
  }
  return os.str();
}

std::string format_attention_summary_tsv(const std::vector<AttentionSummary>& summaries,
                                         const std::vector<Utterance>& test) {
  std::ostringstream os;
  os << "utterance\tword\tspan_start\tspan_end\tref_mass\tno_context_mass\tsilence_no_context_mass\n";
  for (std::size_t i = 0; i < summaries.size() && i < test.size(); ++i) {
    for (const auto& r : summaries[i].refs) {
      os << test[i].id << '\t' << r.word << '\t' << r.span.start << '\t' << r.span.end << '\t'
         << format_fixed(r.ref_mass, 6) << '\t' << format_fixed(r.no_context_mass, 6) << '\t'
         << format_fixed(summaries[i].silence_no_context_mass, 6) << '\n';
    }
  }
  return os.str();
}

}  // namespace cba
