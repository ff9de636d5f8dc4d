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

#include "cba/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace cba {

namespace {

using nlohmann::json;

enum class Kind { kCount, kReal, kBool, kText };

struct Field {
  std::string key;  // dotted
  Kind kind;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <class T>
Field count_field(std::string key, T RunConfig::*section, std::size_t T::*member) {
  return {key, Kind::kCount,
          [section, member](RunConfig& c, const json& v) { c.*section.*member = v.get<std::size_t>(); },
          [section, member](const RunConfig& c) { return json(c.*section.*member); }};
}

template <class T>
Field u64_field(std::string key, T RunConfig::*section, std::uint64_t T::*member) {
  return {key, Kind::kCount,
          [section, member](RunConfig& c, const json& v) { c.*section.*member = v.get<std::uint64_t>(); },
          [section, member](const RunConfig& c) { return json(c.*section.*member); }};
}

template <class T>
Field real_field(std::string key, T RunConfig::*section, double T::*member) {
  return {key, Kind::kReal,
          [section, member](RunConfig& c, const json& v) { c.*section.*member = v.get<double>(); },
          [section, member](const RunConfig& c) { return json(c.*section.*member); }};
}

template <class T>
Field bool_field(std::string key, T RunConfig::*section, bool T::*member) {
  return {key, Kind::kBool,
          [section, member](RunConfig& c, const json& v) { c.*section.*member = v.get<bool>(); },
          [section, member](const RunConfig& c) { return json(c.*section.*member); }};
}

Field loss_real(std::string key, double LossConfig::*member) {
  return {key, Kind::kReal,
          [member](RunConfig& c, const json& v) { c.train.loss.*member = v.get<double>(); },
          [member](const RunConfig& c) { return json(c.train.loss.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    using R = RunConfig;
    std::vector<Field> f;
    f.push_back(count_field("corpus.charset_size", &R::corpus, &CorpusConfig::charset_size));
    f.push_back(count_field("corpus.vocab_size", &R::corpus, &CorpusConfig::vocab_size));
    f.push_back(real_field("corpus.zipf_exponent", &R::corpus, &CorpusConfig::zipf_exponent));
    f.push_back(count_field("corpus.word_len_min", &R::corpus, &CorpusConfig::word_len_min));
    f.push_back(count_field("corpus.word_len_max", &R::corpus, &CorpusConfig::word_len_max));
    f.push_back(count_field("corpus.utt_len_min", &R::corpus, &CorpusConfig::utt_len_min));
    f.push_back(count_field("corpus.utt_len_max", &R::corpus, &CorpusConfig::utt_len_max));
    f.push_back(count_field("corpus.frames_per_char", &R::corpus, &CorpusConfig::frames_per_char));
    f.push_back(count_field("corpus.silence_frames", &R::corpus, &CorpusConfig::silence_frames));
    f.push_back(count_field("corpus.feature_dim", &R::corpus, &CorpusConfig::feature_dim));
    f.push_back(real_field("corpus.noise_sigma", &R::corpus, &CorpusConfig::noise_sigma));
    f.push_back(count_field("corpus.n_train", &R::corpus, &CorpusConfig::n_train));
    f.push_back(count_field("corpus.n_test", &R::corpus, &CorpusConfig::n_test));
    f.push_back(count_field("corpus.n_zero_shot_words", &R::corpus, &CorpusConfig::n_zero_shot_words));
    f.push_back(real_field("corpus.zero_shot_rate", &R::corpus, &CorpusConfig::zero_shot_rate));
    f.push_back(real_field("corpus.proto_scale", &R::corpus, &CorpusConfig::proto_scale));
    f.push_back(real_field("corpus.pair_offset", &R::corpus, &CorpusConfig::pair_offset));
    f.push_back(real_field("corpus.tail_char_skew", &R::corpus, &CorpusConfig::tail_char_skew));
    f.push_back(u64_field("corpus.seed", &R::corpus, &CorpusConfig::seed));

    f.push_back(count_field("model.width", &R::model, &ModelDims::width));
    f.push_back(count_field("model.embed", &R::model, &ModelDims::embed));
    f.push_back(count_field("model.hidden", &R::model, &ModelDims::hidden));

    f.push_back(u64_field("train.gamma", &R::train, &TrainConfig::gamma));
    f.push_back(count_field("train.s_hat", &R::train, &TrainConfig::s_hat));
    f.push_back(loss_real("train.lambda1", &LossConfig::lambda1));
    f.push_back(loss_real("train.lambda2", &LossConfig::lambda2));
    f.push_back(loss_real("train.alpha", &LossConfig::alpha));
    f.push_back({"train.dedupe_ctc_labels", Kind::kBool,
                 [](RunConfig& c, const json& v) { c.train.loss.dedupe_ctc_labels = v.get<bool>(); },
                 [](const RunConfig& c) { return json(c.train.loss.dedupe_ctc_labels); }});
    f.push_back(real_field("train.learning_rate", &R::train, &TrainConfig::learning_rate));
    f.push_back(count_field("train.epochs", &R::train, &TrainConfig::epochs));
    f.push_back(count_field("train.batch_size", &R::train, &TrainConfig::batch_size));
    f.push_back(u64_field("train.seed", &R::train, &TrainConfig::seed));
    f.push_back(real_field("train.pretrain_learning_rate", &R::train,
                           &TrainConfig::pretrain_learning_rate));
    f.push_back(count_field("train.pretrain_epochs", &R::train, &TrainConfig::pretrain_epochs));
    f.push_back(bool_field("train.resample_each_epoch", &R::train, &TrainConfig::resample_each_epoch));
    f.push_back(bool_field("train.shuffle", &R::train, &TrainConfig::shuffle));
    f.push_back(real_field("train.init_sigma", &R::train, &TrainConfig::init_sigma));

    f.push_back(count_field("eval.s_hat", &R::eval, &EvalOptions::s_hat));
    f.push_back(u64_field("eval.test_count_threshold", &R::eval, &EvalOptions::test_count_threshold));
    f.push_back({"eval.mode", Kind::kText,
                 [](RunConfig& c, const json& v) {
                   const auto s = v.get<std::string>();
                   if (s == "realistic") {
                     c.eval.mode = EvalMode::kRealistic;
                   } else if (s == "diagnostic") {
                     c.eval.mode = EvalMode::kDiagnostic;
                   } else {
                     throw Error("eval.mode must be \"realistic\" or \"diagnostic\"", ErrorKind::kConfig);
                   }
                 },
                 [](const RunConfig& c) {
                   return json(c.eval.mode == EvalMode::kRealistic ? "realistic" : "diagnostic");
                 }});
    f.push_back({"out_dir", Kind::kText,
                 [](RunConfig& c, const json& v) { c.out_dir = v.get<std::string>(); },
                 [](const RunConfig& c) { return json(c.out_dir); }});
    return f;
  }();
  return all;
}

std::string bare(const std::string& key) {
  const auto dot = key.rfind('.');
  return dot == std::string::npos ? key : key.substr(dot + 1);
}

std::size_t line_of(std::string_view text, const std::string& key) {
  const std::string needle = "\"" + key + "\"";
  const auto pos = text.find(needle);
  if (pos == std::string_view::npos) return 0;
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos; ++i)
    if (text[i] == '\n') ++line;
  return line;
}

[[noreturn]] void key_error(std::string_view text, const std::string& written,
                            const std::string& what) {
  std::ostringstream os;
  os << "config key '" << written << "'";
  if (const auto line = line_of(text, written)) os << " (line " << line << ")";
  os << ": " << what;
  throw Error(os.str(), ErrorKind::kConfig);
}

bool kind_matches(Kind kind, const json& v) {
  switch (kind) {
    case Kind::kCount:
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case Kind::kReal:
      return v.is_number();
    case Kind::kBool:
      return v.is_boolean();
    case Kind::kText:
      return v.is_string();
  }
  return false;
}

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::kCount: return "a nonnegative integer";
    case Kind::kReal: return "a number";
    case Kind::kBool: return "true or false";
    case Kind::kText: return "a string";
  }
  return "";
}

void sync_model(RunConfig& c) {
  c.model.charset = c.corpus.charset_size;
  c.model.feature_dim = c.corpus.feature_dim;
  c.eval.word_gap = c.corpus.silence_frames;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void validate(const RunConfig& c) {
  validate(c.corpus);
  validate(c.model);
  if (c.model.charset != c.corpus.charset_size || c.model.feature_dim != c.corpus.feature_dim)
    throw Error("model dimensions disagree with the corpus", ErrorKind::kConfig);
  validate(c.train);
  if (c.eval.s_hat < 2) throw Error("eval.s_hat must be at least 2", ErrorKind::kConfig);
  if (c.eval.test_count_threshold < 1)
    throw Error("eval.test_count_threshold must be at least 1", ErrorKind::kConfig);
  if (c.out_dir.empty()) throw Error("out_dir must not be empty", ErrorKind::kConfig);
}

RunConfig parse_config_text(std::string_view text) {
  RunConfig config;
  sync_model(config);
  bool blank = true;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
  if (blank) return config;

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what(), ErrorKind::kConfig);
  }
  if (!doc.is_object()) throw Error("config must be a JSON object", ErrorKind::kConfig);

  std::map<std::string, const Field*> by_key;
  std::map<std::string, std::vector<const Field*>> by_bare;
  for (const auto& f : fields()) {
    by_key[f.key] = &f;
    by_bare[bare(f.key)].push_back(&f);
  }

  std::vector<std::pair<std::string, const Field*>> applied;  // written key, field
  for (const auto& [written, value] : doc.items()) {
    const Field* field = nullptr;
    if (auto it = by_key.find(written); it != by_key.end()) {
      field = it->second;
    } else if (auto b = by_bare.find(written); b != by_bare.end()) {
      if (b->second.size() > 1) {
        std::string opts;
        for (const Field* f : b->second) opts += (opts.empty() ? "" : ", ") + f->key;
        key_error(text, written, "ambiguous key; use one of " + opts);
      }
      field = b->second.front();
    } else {
      key_error(text, written, "unknown key");
    }
    if (!kind_matches(field->kind, value))
      key_error(text, written, std::string("expected ") + kind_name(field->kind));
    try {
      field->set(config, value);
    } catch (const Error& e) {
      key_error(text, written, e.what());
    } catch (const json::exception& e) {
      key_error(text, written, e.what());
    }
    applied.emplace_back(written, field);
  }
  sync_model(config);

  try {
    validate(config);
  } catch (const Error& e) {
    const std::string msg = e.what();
    // Attribute the violation to the key it names, when the file set it.
    for (const auto& [written, field] : applied) {
      const std::string name = bare(field->key);
      const auto pos = msg.find(name);
      const bool word = pos != std::string::npos &&
                        (pos + name.size() == msg.size() || msg[pos + name.size()] == ' ');
      if (msg.find(field->key) != std::string::npos || (word && pos == 0))
        key_error(text, written, msg);
    }
    throw Error("config: " + msg, ErrorKind::kConfig);
  }
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read config " + path.string(), ErrorKind::kConfig);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& config) {
  json doc = json::object();
  for (const auto& f : fields()) doc[f.key] = f.get(config);
  return doc.dump(2) + "\n";
}

}  // namespace cba
