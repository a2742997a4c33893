#include "cli.hpp"

#include "seqdec/ctc_prefix.hpp"
#include "seqdec/ctc_tools.hpp"
#include "seqdec/logmath.hpp"
#include "seqdec/maskctc.hpp"
#include "seqdec/oracle.hpp"
#include "seqdec/table_scorer.hpp"
#include "seqdec/transducer.hpp"
#include "seqdec/word_lm.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace seqdec::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string task;
  std::string config_path;
  std::vector<std::string> emissions;
  std::string output;
  bool sequential = false;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
};

/// Parsed config file plus the directory its relative paths refer to.
struct Config {
  json doc;
  fs::path base;

  fs::path path(const json& value, const std::string& what) const {
    if (!value.is_string()) throw ConfigError(what + " must be a path string");
    fs::path p = value.get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
    return p;
  }

  const json& block(const std::string& name) const {
    static const json empty = json::object();
    if (!doc.contains(name)) return empty;
    if (!doc[name].is_object()) throw ConfigError("'" + name + "' must be an object");
    return doc[name];
  }
};

template <typename T>
T field(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

Config read_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path);
  std::ifstream in(path);
  Config c;
  try {
    c.doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!c.doc.is_object()) throw ConfigError(path + ": config must be a JSON object");
  c.base = fs::path(path).parent_path();
  return c;
}

Vocabulary read_vocab(const Config& c) {
  if (!c.doc.contains("vocab")) throw ConfigError("config has no 'vocab'");
  const json& v = c.doc["vocab"];
  std::vector<std::string> tokens;
  json names = json::object();
  if (v.is_array()) {
    tokens = v.get<std::vector<std::string>>();
  } else if (v.is_object()) {
    names = v;
    if (v.contains("tokens")) {
      tokens = field<std::vector<std::string>>(v, "tokens", {});
    } else if (v.contains("path")) {
      std::ifstream in(c.path(v["path"], "vocab path"));
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) tokens.push_back(line);
    } else {
      throw ConfigError("vocab needs 'tokens' or 'path'");
    }
  } else {
    throw ConfigError("vocab must be a list or an object");
  }
  auto has = [&](const std::string& t) { return std::find(tokens.begin(), tokens.end(), t) != tokens.end(); };
  auto optional_name = [&](const char* key, const std::string& fallback) -> std::optional<std::string> {
    if (names.contains(key)) return field<std::string>(names, key, "");
    if (has(fallback)) return fallback;
    return std::nullopt;
  };
  return Vocabulary::from_names(tokens, field<std::string>(names, "blank", "<blank>"),
                                field<std::string>(names, "sos", "<sos>"),
                                field<std::string>(names, "eos", "<eos>"), optional_name("mask", "<mask>"),
                                optional_name("unk", "<unk>"));
}

std::vector<fs::path> emission_paths(const Config& c, const Options& o) {
  std::vector<fs::path> out;
  if (!o.emissions.empty()) {
    for (const auto& e : o.emissions) {
      if (!fs::exists(e)) throw ConfigError("emission not found: " + e);
      out.emplace_back(e);
    }
    return out;
  }
  if (!c.doc.contains("emission")) throw ConfigError("no emission given (config 'emission' or --emission)");
  const json& e = c.doc["emission"];
  if (e.is_array())
    for (const auto& item : e) out.push_back(c.path(item, "emission"));
  else
    out.push_back(c.path(e, "emission"));
  if (out.empty()) throw ConfigError("emission list is empty");
  return out;
}

EmissionMatrix read_emission(const Config& c, const fs::path& p) {
  const auto format = c.doc.contains("emission_format")
                          ? parse_emission_format(field<std::string>(c.doc, "emission_format", ""))
                          : emission_format_for(p);
  return load_emission(p, format);
}

json tokens_json(const TokenSeq& ids, const std::function<std::string(TokenId)>& name) {
  json arr = json::array();
  for (TokenId id : ids) arr.push_back(name(id));
  return arr;
}

json nbest_json(const NBestList& list, const std::function<std::string(TokenId)>& name) {
  json arr = json::array();
  for (const auto& e : list) arr.push_back({{"tokens", tokens_json(e.yseq, name)}, {"score", e.score}, {"scores", e.scores}});
  return {{"nbest", arr}};
}

TokenSeq lookup_tokens(const json& tokens, const std::function<std::optional<TokenId>(const std::string&)>& find,
                       const std::string& what) {
  std::vector<std::string> words;
  if (tokens.is_string()) {
    std::istringstream ss(tokens.get<std::string>());
    for (std::string w; ss >> w;) words.push_back(w);
  } else if (tokens.is_array()) {
    words = tokens.get<std::vector<std::string>>();
  } else {
    throw ConfigError(what + " must be a string or a list of tokens");
  }
  TokenSeq out;
  for (const auto& w : words) {
    const auto id = find(w);
    if (!id) throw ConfigError(what + ": unknown token '" + w + "'");
    out.push_back(*id);
  }
  return out;
}

std::shared_ptr<const FullScorer> make_full_lm(const Config& c, const json& spec, const Vocabulary& vocab,
                                               const std::string& name) {
  const std::string type = field<std::string>(spec, "type", "");
  if (type == "table") return std::make_shared<TableScorer>(load_table_scorer(c.path(spec.at("path"), name), name));
  if (type == "lookahead" || type == "multilevel") {
    auto word_lm = std::make_shared<NGramModel>(load_arpa(c.path(spec.at("arpa"), name + " arpa")));
    WordLmOptions opts;
    opts.delimiter = spec.contains("delimiter")
                         ? vocab.find(field<std::string>(spec, "delimiter", "")).value_or(-2)
                         : default_delimiter(vocab);
    if (opts.delimiter == -2) throw ConfigError(name + ": delimiter token not in vocabulary");
    opts.oov_penalty = field<Scalar>(spec, "oov_penalty", opts.oov_penalty);
    if (type == "lookahead") {
      auto trie = std::make_shared<WordTrie>(vocab, load_lexicon(c.path(spec.at("lexicon"), name + " lexicon")),
                                             *word_lm);
      return std::make_shared<LookaheadLmScorer>(name, vocab, trie, word_lm, opts);
    }
    if (!spec.contains("char_lm")) throw ConfigError(name + ": multilevel needs 'char_lm'");
    MultiLevelModels m{make_full_lm(c, spec["char_lm"], vocab, name + ".char"), word_lm, vocab, opts};
    return std::make_shared<MultiLevelLmScorer>(name, std::move(m));
  }
  if (type == "length_bonus") return std::make_shared<LengthBonus>(name, vocab.size());
  throw ConfigError(name + ": unknown scorer type '" + type + "'");
}

ScorerSet read_scorers(const Config& c, const Vocabulary& vocab) {
  if (!c.doc.contains("scorers") || !c.doc["scorers"].is_array())
    throw ConfigError("config needs a 'scorers' list");
  ScorerSet set;
  for (const auto& spec : c.doc["scorers"]) {
    const std::string name = field<std::string>(spec, "name", "");
    if (name.empty()) throw ConfigError("every scorer needs a name");
    if (field<std::string>(spec, "type", "") == "ctc")
      set.partial.push_back(std::make_shared<CtcPrefixScorer>(name, vocab.size(), vocab.blank_id(), vocab.eos_id()));
    else
      set.full.push_back(make_full_lm(c, spec, vocab, name));
  }
  return set;
}

/// Runs `work` over every item, `jobs` at a time; results stay in input order.
std::vector<json> map_jobs(size_t n, int jobs, const std::function<json(size_t)>& work) {
  std::vector<json> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        results[i] = work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

json per_emission(const Config& c, const Options& o, const std::function<json(const EmissionMatrix&)>& work) {
  const auto paths = emission_paths(c, o);
  auto results = map_jobs(paths.size(), o.jobs, [&](size_t i) { return work(read_emission(c, paths[i])); });
  if (results.size() == 1) return results.front();
  return {{"utterances", results}};
}

json run_decode(const Config& c, const Options& o) {
  const Vocabulary vocab = read_vocab(c);
  const ScorerSet scorers = read_scorers(c, vocab);
  const BeamConfig beam = parse_beam_config(c.block("beam").dump());
  auto name = [&](TokenId id) { return vocab.token(id); };
  return per_emission(c, o, [&](const EmissionMatrix& x) {
    const NBestList list = o.sequential ? beam_search(x, vocab, scorers, beam)
                                        : batch_beam_search(x, vocab, scorers, beam);
    json out = nbest_json(list, name);
    if (o.oracle) {
      const auto bounds = length_bounds(beam, x.frames());
      const OracleResult best = oracle_best_sequence(scorers, beam.weights, x, vocab, bounds.max_len, bounds.min_len);
      out["oracle"] = {{"tokens", tokens_json(best.yseq, name)},
                       {"score", best.score},
                       {"match", !list.empty() && list.front().yseq == best.yseq &&
                                     std::abs(list.front().score - best.score) <= 1e-6}};
    }
    return out;
  });
}

json run_transducer(const Config& c, const Options& o) {
  const json& t = c.block("transducer");
  if (!t.contains("model")) throw ConfigError("transducer block needs 'model'");
  const TableTransducer model = load_table_transducer(c.path(t["model"], "transducer model"));
  TransducerBeamConfig cfg;
  cfg.algorithm = parse_transducer_algorithm(field<std::string>(t, "algorithm", "beam"));
  cfg.beam_size = field(t, "beam_size", cfg.beam_size);
  cfg.max_sym_exp = field(t, "max_sym_exp", cfg.max_sym_exp);
  cfg.max_exp_per_step = field(t, "max_exp_per_step", cfg.max_exp_per_step);
  cfg.u_max_ratio = field(t, "u_max_ratio", cfg.u_max_ratio);
  cfg.n_steps = field(t, "n_steps", cfg.n_steps);
  cfg.lm_weight = field(t, "lm_weight", cfg.lm_weight);
  if (t.contains("lm"))
    cfg.lm = std::make_shared<TableScorer>(load_table_scorer(c.path(t["lm"], "transducer lm"), "lm"));

  std::vector<std::string> labels;
  if (t.contains("labels")) {
    labels = field<std::vector<std::string>>(t, "labels", {});
    if (static_cast<int>(labels.size()) != model.num_labels())
      throw ConfigError("transducer labels list has the wrong length");
  } else {
    for (int i = 0; i < model.num_labels(); ++i) labels.push_back(std::to_string(i));
  }
  auto name = [&](TokenId id) { return labels.at(static_cast<size_t>(id)); };
  const NBestList list = transducer_decode(model, cfg);
  json out = nbest_json(list, name);
  if (o.oracle) {
    json probs = json::array();
    for (const auto& e : list) probs.push_back(oracle_transducer_prob(model, model.frames(), e.yseq));
    out["oracle_prob"] = probs;
  }
  return out;
}

json run_maskctc(const Config& c, const Options& o) {
  const Vocabulary vocab = read_vocab(c);
  const json& m = c.block("maskctc");
  if (!m.contains("mlm")) throw ConfigError("maskctc block needs 'mlm'");
  const TableMLM mlm = load_table_mlm(c.path(m["mlm"], "mlm"));
  MaskCtcConfig cfg;
  cfg.threshold = field(m, "threshold", cfg.threshold);
  cfg.iterations = field(m, "iterations", cfg.iterations);
  auto name = [&](TokenId id) { return vocab.token(id); };
  return per_emission(c, o, [&](const EmissionMatrix& x) {
    const MaskCtcResult r = mask_ctc_decode(x, vocab, mlm, cfg);
    return json{{"tokens", tokens_json(r.tokens, name)}, {"mlm_calls", r.trace.mlm_calls}, {"masked", r.trace.masked}};
  });
}

json run_align(const Config& c, const Options& o) {
  const Vocabulary vocab = read_vocab(c);
  const json& a = c.block("align");
  if (!a.contains("labels")) throw ConfigError("align block needs 'labels'");
  const TokenSeq labels = lookup_tokens(a["labels"], [&](const std::string& s) { return vocab.find(s); }, "align labels");
  return per_emission(c, o, [&](const EmissionMatrix& x) {
    const Alignment al = ctc_forced_align(x, labels, vocab.blank_id());
    json spans = json::array();
    for (const auto& s : al.spans) spans.push_back({{"token", s.token}, {"start", s.start}, {"end", s.end}});
    json out{{"path", al.path}, {"spans", spans}, {"log_prob", al.log_prob}};
    if (o.oracle) out["oracle_forward"] = oracle_ctc_prob(x, labels, vocab.blank_id());
    return out;
  });
}

json run_vad(const Config& c, const Options& o) {
  const Vocabulary vocab = read_vocab(c);
  const json& v = c.block("vad");
  VadOptions opts;
  opts.on_threshold = field(v, "on_threshold", opts.on_threshold);
  opts.min_gap_frames = field(v, "min_gap", opts.min_gap_frames);
  opts.margin_frames = field(v, "margin", opts.margin_frames);
  return per_emission(c, o, [&](const EmissionMatrix& x) {
    json segs = json::array();
    for (const auto& s : ctc_vad(x, vocab.blank_id(), opts))
      segs.push_back({{"start", s.start}, {"end", s.end}, {"kind", s.kind == SegmentKind::Speech ? "speech" : "nonspeech"}});
    return json{{"segments", segs}};
  });
}

void write_output(const json& doc, const Options& o, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (o.output.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.output, std::ios::binary);
  f << text;
  if (!f) throw ConfigError("cannot write " + o.output);
}

int dispatch(const Options& o, std::ostream& out) {
  const Config c = read_config(o.config_path);
  if (o.task == "bench") {
    const json& b = c.block("bench");
    BenchSpec spec;
    spec.vocab_size = field(b, "vocab_size", spec.vocab_size);
    spec.frames = field(b, "frames", spec.frames);
    spec.beam_size = field(b, "beam_size", spec.beam_size);
    spec.repeats = field(b, "repeats", spec.repeats);
    spec.seed = o.seed.value_or(field<std::uint64_t>(c.doc, "seed", 0));
    const BenchReport report = run_bench(spec);
    write_output(json::parse(bench_report_json(report)), o, out);
    return bench_exit_code(report);
  }
  json result;
  if (o.task == "decode") result = run_decode(c, o);
  else if (o.task == "transducer") result = run_transducer(c, o);
  else if (o.task == "maskctc") result = run_maskctc(c, o);
  else if (o.task == "align") result = run_align(c, o);
  else result = run_vad(c, o);
  write_output(result, o, out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence decoding over emission matrices and table models", "seqdec"};
  app.require_subcommand(1, 1);
  Options o;
  const std::pair<const char*, const char*> tasks[] = {
      {"decode", "Joint CTC/attention/LM beam search"},
      {"transducer", "Transducer decoding"},
      {"maskctc", "Mask-CTC non-autoregressive decoding"},
      {"align", "CTC forced alignment"},
      {"vad", "CTC-based speech segmentation"},
      {"bench", "Time sequential against batched beam search"},
  };
  for (const auto& [name, help] : tasks) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "Run configuration (JSON)")->required();
    sub->add_option("--emission", o.emissions, "Emission file; repeat for several utterances");
    sub->add_option("--output", o.output, "Output file (default: standard output)");
    sub->add_flag("--sequential", o.sequential, "Score one hypothesis at a time");
    sub->add_option("--jobs", o.jobs, "Utterances decoded in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_flag("--oracle", o.oracle, "Add brute-force reference results (tiny inputs only)");
    sub->callback([&o, n = std::string(name)] { o.task = n; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    return dispatch(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 3;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

TimingStats timing_stats(std::vector<double> samples_ms) {
  TimingStats s;
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  double sum = 0;
  for (double v : samples_ms) sum += v;
  s.mean_ms = sum / static_cast<double>(samples_ms.size());
  // Nearest-rank percentiles.
  auto rank = [&](double p) {
    const auto k = static_cast<size_t>(std::ceil(p * static_cast<double>(samples_ms.size())));
    return samples_ms[std::max<size_t>(k, 1) - 1];
  };
  s.p50_ms = rank(0.50);
  s.p95_ms = rank(0.95);
  return s;
}

namespace {

Matrix random_log_softmax(std::mt19937_64& rng, int rows, int cols, double spread) {
  std::uniform_real_distribution<double> u(0.0, spread);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) m(r, k) = u(rng);
    m.row(r).array() -= logsumexp(m.row(r));
  }
  return m;
}

bool same_output(const NBestList& a, const NBestList& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].yseq != b[i].yseq || a[i].score != b[i].score || a[i].scores != b[i].scores) return false;
  return true;
}

}  // namespace

BenchReport run_bench(const BenchSpec& spec, bool corrupt) {
  if (spec.vocab_size < 4 || spec.frames < 1 || spec.beam_size < 1 || spec.repeats < 1)
    throw ConfigError("bench needs vocab_size >= 4 and positive frames, beam_size, repeats");
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> labels;
  for (int i = 3; i < spec.vocab_size; ++i) labels.push_back("t" + std::to_string(i));
  const Vocabulary vocab = Vocabulary::with_labels(labels);
  const EmissionMatrix x(random_log_softmax(rng, spec.frames, spec.vocab_size, 8.0));

  const Matrix table = random_log_softmax(rng, spec.vocab_size, spec.vocab_size, 4.0);
  std::map<TokenSeq, Vector> rows;
  for (TokenId k = 0; k < spec.vocab_size; ++k) rows.emplace(TokenSeq{k}, table.row(k).transpose());
  ScorerSet scorers;
  scorers.full.push_back(std::make_shared<TableScorer>("decoder", 1, spec.vocab_size, std::move(rows)));
  scorers.partial.push_back(std::make_shared<CtcPrefixScorer>("ctc", spec.vocab_size, vocab.blank_id(), vocab.eos_id()));
  BeamConfig cfg;
  cfg.beam_size = spec.beam_size;
  cfg.weights = {{"decoder", 0.7}, {"ctc", 0.3}};

  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  std::vector<double> seq_ms, bat_ms;
  NBestList seq_out, bat_out;
  for (int r = 0; r < spec.repeats; ++r) {
    auto t0 = clock::now();
    seq_out = beam_search(x, vocab, scorers, cfg);
    auto t1 = clock::now();
    bat_out = batch_beam_search(x, vocab, scorers, cfg);
    auto t2 = clock::now();
    seq_ms.push_back(ms(t1 - t0));
    bat_ms.push_back(ms(t2 - t1));
  }
  if (corrupt && !bat_out.empty()) bat_out.front().score += 1.0;

  BenchReport rep;
  rep.spec = spec;
  rep.sequential = timing_stats(seq_ms);
  rep.batched = timing_stats(bat_ms);
  rep.equal = same_output(seq_out, bat_out);
  if (rep.equal && rep.batched.mean_ms > 0) rep.speedup = rep.sequential.mean_ms / rep.batched.mean_ms;
  return rep;
}

std::string bench_report_json(const BenchReport& r) {
  auto stats = [](const TimingStats& s) { return json{{"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms}}; };
  json doc{{"config",
            {{"vocab_size", r.spec.vocab_size},
             {"frames", r.spec.frames},
             {"beam_size", r.spec.beam_size},
             {"repeats", r.spec.repeats},
             {"seed", r.spec.seed}}},
           {"sequential", stats(r.sequential)},
           {"batched", stats(r.batched)},
           {"equal", r.equal}};
  if (r.equal) doc["speedup"] = r.speedup;
  return doc.dump(2);
}

int bench_exit_code(const BenchReport& report) { return report.equal ? 0 : 1; }

}  // namespace seqdec::cli
