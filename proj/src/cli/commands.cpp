#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "xlt/analysis.hpp"
#include "xlt/cli.hpp"
#include "xlt/evaluation.hpp"
#include "xlt/hash.hpp"
#include "xlt/probe.hpp"
#include "xlt/training.hpp"

namespace xlt::cli {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

/// Pair labels from repeated/comma-separated --pair values plus an optional file.
std::vector<std::string> collect_pairs(const std::vector<std::string>& flags, const std::string& file) {
  std::vector<std::string> out;
  auto add = [&](const std::string& s) {
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      LanguagePair::parse(part);
      out.push_back(part);
    }
  };
  for (const auto& f : flags) add(f);
  if (!file.empty()) {
    for (const auto& line : read_lines(file)) {
      if (!line.empty() && line[0] != '#') add(line);
    }
  }
  return out;
}

ParallelCorpus restrict_pairs(const ParallelCorpus& corpus, const std::vector<std::string>& labels) {
  if (labels.empty()) return corpus;
  std::set<LanguagePair> wanted;
  for (const auto& l : labels) wanted.insert(LanguagePair::parse(l));
  const auto available = corpus.pairs();
  for (const auto& p : wanted) {
    if (std::find(available.begin(), available.end(), p) == available.end()) {
      throw CorpusError("corpus has no sentences for pair " + p.label());
    }
  }
  std::vector<SentencePair> kept;
  for (const auto& e : corpus.entries()) {
    if (wanted.count({e.source_lang, e.target_lang})) kept.push_back(e);
  }
  return ParallelCorpus(std::move(kept));
}

std::vector<std::string> corpus_text(const ParallelCorpus& c) {
  std::vector<std::string> text;
  for (const auto& e : c.entries()) {
    text.push_back(e.source);
    text.push_back(e.target);
  }
  return text;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string train_out, test_out;
  FamilySpec spec;
  std::string regime = "many-to-one";
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--train-out", a.train_out, "training corpus TSV")->required();
  app.add_option("--test-out", a.test_out, "test corpus TSV")->required();
  app.add_option("--languages", a.spec.languages, "family size")->check(CLI::Range(1, 26));
  app.add_option("--train-sentences", a.spec.train_sentences)->check(CLI::PositiveNumber);
  app.add_option("--test-sentences", a.spec.test_sentences)->check(CLI::NonNegativeNumber);
  app.add_option("--lexicon", a.spec.lexicon_size)->check(CLI::Range(2, 100000));
  app.add_option("--min-words", a.spec.min_words)->check(CLI::PositiveNumber);
  app.add_option("--max-words", a.spec.max_words)->check(CLI::PositiveNumber);
  app.add_option("--low-resource-fraction", a.spec.low_resource_fraction)->check(CLI::Range(0.0, 1.0));
  app.add_option("--low-resource-index", a.spec.low_resource_index)->check(CLI::NonNegativeNumber);
  app.add_option("--regime", a.regime)->check(CLI::IsMember({"many-to-one", "one-to-many", "many-to-many"}));
  app.add_option("--seed", a.spec.seed);
}

int cmd_synth(SynthArgs a, std::ostream& out) {
  a.spec.regime = parse_regime(a.regime);
  const auto fam = make_language_family(a.spec);
  fam.train.write_tsv(a.train_out);
  fam.test.write_tsv(a.test_out);
  out << "languages:";
  for (const auto& l : fam.languages) out << ' ' << l;
  out << "\nlow-resource: " << fam.low_resource << "\ntrain: " << fam.train.size()
      << " pairs, test: " << fam.test.size() << " pairs\n";
  return kExitOk;
}

// ---------------------------------------------------------------- bpe

struct BpeArgs {
  std::vector<std::string> corpora;
  std::size_t merges = 512;
  std::string tags = "auto";
  std::string out;
};

void add_bpe(CLI::App& app, BpeArgs& a) {
  app.add_option("--corpus", a.corpora, "corpus TSV (repeatable)")->required();
  app.add_option("--merges", a.merges, "number of merge operations");
  app.add_option("--tags", a.tags, "reserve target-language tags")->check(CLI::IsMember({"auto", "on", "off"}));
  app.add_option("--out", a.out)->required();
}

int cmd_bpe(const BpeArgs& a, std::ostream& out) {
  std::vector<std::string> text;
  std::set<std::string> languages;
  bool any_tag_regime = false;
  for (const auto& path : a.corpora) {
    const auto c = ParallelCorpus::read_tsv(path);
    any_tag_regime = any_tag_regime || regime_uses_tags(c.regime());
    for (const auto& l : c.target_languages()) languages.insert(l);
    auto t = corpus_text(c);
    text.insert(text.end(), t.begin(), t.end());
  }
  const bool tags = a.tags == "on" || (a.tags == "auto" && any_tag_regime);
  const auto model =
      learn_bpe(text, a.merges, tags ? std::vector<std::string>(languages.begin(), languages.end()) : std::vector<std::string>{});
  model.save(a.out);
  out << "merges: " << model.merges().size() << ", vocabulary: " << model.vocab_size() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train / finetune

struct TrainArgs {
  std::string config, corpus, bpe, out, log, plan, from;
  std::vector<std::string> pairs;
  std::string pairs_file;
  std::uint64_t seed = 1;
  std::optional<std::int64_t> steps, batch_tokens;
  int log_every = 0;
};

void add_train(CLI::App& app, TrainArgs& a, const std::string& default_plan) {
  a.plan = default_plan;
  app.add_option("--config", a.config, "key=value training config")->required();
  app.add_option("--corpus", a.corpus, "training corpus TSV")->required();
  app.add_option("--bpe", a.bpe, "subword model (learned from the corpus when omitted)");
  app.add_option("--out", a.out, "checkpoint to write")->required();
  app.add_option("--log", a.log, "training log CSV");
  app.add_option("--plan", a.plan, "none, load-enc, load-dec, load-both, freeze-enc, freeze-dec");
  app.add_option("--from-checkpoint", a.from, "multilingual checkpoint to transfer from");
  app.add_option("--pair", a.pairs, "restrict to language pair(s), e.g. xa-en");
  app.add_option("--pairs-file", a.pairs_file, "file listing language pairs, one per line");
  app.add_option("--seed", a.seed);
  app.add_option("--steps", a.steps, "override the config's step budget")->check(CLI::NonNegativeNumber);
  app.add_option("--batch-tokens", a.batch_tokens, "override the config's batch token budget")
      ->check(CLI::PositiveNumber);
  app.add_option("--log-every", a.log_every, "print loss every N steps (0: quiet)")->check(CLI::NonNegativeNumber);
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TransferPlan plan;
  try {
    plan = TransferPlan::parse(a.plan);
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (plan.loads_anything() && a.from.empty()) {
    throw UsageError("--plan " + a.plan + " needs --from-checkpoint");
  }
  if (!plan.loads_anything() && !a.from.empty()) {
    throw UsageError("--plan none does not take --from-checkpoint");
  }

  auto run = RunConfig::load(a.config);
  if (a.steps) run.train.steps = *a.steps;
  if (a.batch_tokens) run.train.batch_tokens = *a.batch_tokens;

  std::optional<Checkpoint> source;
  if (!a.from.empty()) source = load_checkpoint(a.from);

  const auto full = ParallelCorpus::read_tsv(a.corpus);
  const auto corpus = restrict_pairs(full, collect_pairs(a.pairs, a.pairs_file));

  SubwordModel subword;
  if (!a.bpe.empty()) {
    subword = SubwordModel::load(a.bpe);
  } else if (source) {
    subword = checkpoint_subword(*source);
  } else {
    const auto langs = regime_uses_tags(corpus.regime()) ? corpus.target_languages() : std::vector<std::string>{};
    subword = learn_bpe(corpus_text(corpus), static_cast<std::size_t>(run.bpe_merges), langs);
  }

  TrainRequest req;
  req.corpus = &corpus;
  req.subword = &subword;
  req.model = run.model;
  req.plan = plan;
  req.source = source ? &*source : nullptr;
  req.settings = run.train;
  req.seed = a.seed;
  if (a.log_every > 0) {
    req.on_step = [&](const StepRecord& r) {
      if (r.step % a.log_every == 0) err << "step " << r.step << " loss " << r.loss << "\n";
    };
  }
  const auto result = train(req);

  save_checkpoint(result.checkpoint, a.out);
  if (!a.log.empty()) {
    std::ostringstream log;
    log << "step,loss,learning_rate,target_tokens\n";
    for (const auto& r : result.log) {
      log << r.step << ',' << num(r.loss) << ',' << num(r.learning_rate) << ',' << r.target_tokens << '\n';
    }
    write_text(a.log, log.str());
  }
  if (result.skipped_examples > 0) {
    err << "skipped " << result.skipped_examples << " sentence pairs longer than max_sequence_length\n";
  }
  out << "plan " << plan.name() << ", " << result.log.size() << " steps";
  if (!result.log.empty()) out << ", final loss " << num(result.log.back().loss);
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  std::string checkpoint, corpus, pair, out;
  std::size_t samples = 100000;
  std::size_t batch_size = 32;
  bool normalize = false;
  std::uint64_t seed = 1;
};

void add_probe(CLI::App& app, ProbeArgs& a) {
  app.add_option("--checkpoint", a.checkpoint)->required();
  app.add_option("--corpus", a.corpus)->required();
  app.add_option("--pair", a.pair, "language pair to probe, e.g. xa-en")->required();
  app.add_option("--samples", a.samples, "sentence cap");
  app.add_option("--batch-size", a.batch_size, "sentences per probe minibatch");
  app.add_flag("--normalize", a.normalize, "L2-normalize each attention module");
  app.add_option("--seed", a.seed);
  app.add_option("--out", a.out, "head-score CSV")->required();
}

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  if (a.samples == 0) throw UsageError("--samples must be at least 1");
  if (a.batch_size == 0) throw UsageError("--batch-size must be at least 1");
  LanguagePair pair;
  try {
    pair = LanguagePair::parse(a.pair);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto corpus = ParallelCorpus::read_tsv(a.corpus);
  const auto slice = corpus.slice(pair);
  if (slice.empty()) throw CorpusError("corpus has no sentences for pair " + pair.label());
  ProbeSettings settings{a.samples, a.batch_size, a.seed};
  auto scores = estimate_importance(ckpt, slice, settings, sha256_file(a.checkpoint));
  if (a.normalize) scores = normalize(scores);
  write_scores_csv(scores, a.out);
  out << pair.label() << ": " << scores.size() << " heads from " << scores.sample_count << " sentences\n";
  return kExitOk;
}

// ---------------------------------------------------------------- verify-scores

struct VerifyArgs {
  std::vector<std::string> files;
  double tolerance = 1e-6;
};

void add_verify(CLI::App& app, VerifyArgs& a) {
  app.add_option("files", a.files, "head-score CSVs")->required();
  app.add_option("--tolerance", a.tolerance);
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  bool ok = true;
  for (const auto& f : a.files) {
    const auto s = read_scores_csv(f);
    const auto dev = max_norm_deviation(s);
    const bool good = s.normalized && dev <= a.tolerance &&
                      s.heads.size() == s.topology.head_count();
    ok = ok && good;
    out << f << ": " << (s.normalized ? "normalized" : "raw") << ", max |norm-1| " << num(dev) << " "
        << (good ? "ok" : "FAIL") << "\n";
  }
  return ok ? kExitOk : kExitData;
}

// ---------------------------------------------------------------- correlate / cluster / select

struct CorrelateArgs {
  std::vector<std::string> files;
  std::string subset, metric = "spearman", out;
  std::size_t k = 10;
};

void add_correlate(CLI::App& app, CorrelateArgs& a) {
  app.add_option("files", a.files, "head-score CSVs")->required();
  app.add_option("--subset", a.subset, "enc, dec, cross or self")->required()
      ->check(CLI::IsMember({"enc", "dec", "cross", "self"}));
  app.add_option("--metric", a.metric)->check(CLI::IsMember({"spearman", "f1"}));
  app.add_option("--k", a.k, "top-k size for f1")->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "report CSV")->required();
}

std::vector<HeadScores> read_all_scores(const std::vector<std::string>& files) {
  std::vector<HeadScores> out;
  for (const auto& f : files) out.push_back(read_scores_csv(f));
  return out;
}

int cmd_correlate(const CorrelateArgs& a, std::ostream& out) {
  const auto scores = read_all_scores(a.files);
  if (scores.size() < 2) throw UsageError("correlate needs at least two score files");
  const auto report = correlation_report(scores, parse_subset(a.subset), parse_metric(a.metric), a.k);
  write_report_csv(report, a.out);
  out << a.metric << " on " << a.subset << ": mean " << num(report.mean) << " std " << num(report.stddev) << "\n";
  return kExitOk;
}

struct ClusterArgs {
  std::vector<std::string> files;
  std::string subset = "dec", out, projection_out;
  KMeansSettings settings;
};

void add_cluster(CLI::App& app, ClusterArgs& a) {
  a.settings.seed = 1;
  app.add_option("files", a.files, "head-score CSVs")->required();
  app.add_option("--subset", a.subset)->check(CLI::IsMember({"enc", "dec", "cross", "self"}));
  app.add_option("--k", a.settings.k)->check(CLI::PositiveNumber);
  app.add_option("--seed", a.settings.seed);
  app.add_option("--max-iters", a.settings.max_iters)->check(CLI::PositiveNumber);
  app.add_option("--restarts", a.settings.restarts)->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "pair,cluster CSV")->required();
  app.add_option("--projection-out", a.projection_out, "pair,x,y CSV");
}

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const auto scores = read_all_scores(a.files);
  std::vector<std::vector<double>> points;
  std::vector<std::string> labels;
  for (const auto& s : scores) {
    if (!(s.topology == scores.front().topology)) throw std::invalid_argument("score files differ in head layout");
    points.push_back(subset(s, parse_subset(a.subset)).scores);
    labels.push_back(s.pair);
  }
  const auto clusters = kmeanspp(points, a.settings, labels);
  std::optional<Projection> projection;
  if (!a.projection_out.empty()) projection = project_2d(points, labels);
  write_text(a.out, clusters_csv(clusters));
  if (projection) write_text(a.projection_out, projection_csv(*projection));
  out << "k " << clusters.k << " cost " << num(clusters.cost) << " iterations " << clusters.iterations << "\n";
  return kExitOk;
}

struct SelectArgs {
  std::string report, rule, anchor, out;
  std::optional<double> threshold;
};

void add_select(CLI::App& app, SelectArgs& a) {
  app.add_option("--report", a.report, "correlation report CSV")->required();
  app.add_option("--rule", a.rule, "related (average against X-anchor) or closest (one row)")
      ->required()->check(CLI::IsMember({"related", "closest"}));
  app.add_option("--anchor", a.anchor, "anchor language or pair");
  app.add_option("--threshold", a.threshold, "strict lower bound (0.60 related, 0.80 closest)");
  app.add_option("--out", a.out, "selected items, one per line");
}

int cmd_select(const SelectArgs& a, std::ostream& out) {
  const auto report = read_report_csv(a.report);
  std::vector<std::string> chosen;
  if (a.rule == "related") {
    chosen = select_related(report, a.threshold.value_or(0.60), a.anchor.empty() ? "en" : a.anchor);
  } else {
    if (a.anchor.empty()) throw UsageError("--rule closest needs --anchor");
    chosen = select_closest(report, a.anchor, a.threshold.value_or(0.80));
  }
  std::string text;
  for (const auto& c : chosen) text += c + "\n";
  if (!a.out.empty()) write_text(a.out, text);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint, corpus, pair, hyp_file, ref_file, out, hyp_out;
  std::optional<int> beam;
  int max_len = 0;
  bool smooth = false;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  app.add_option("--checkpoint", a.checkpoint);
  app.add_option("--corpus", a.corpus, "test corpus TSV (sources and references)");
  app.add_option("--pair", a.pair, "restrict the test corpus to one pair");
  app.add_option("--beam", a.beam, "beam width (greedy when omitted)");
  app.add_option("--max-len", a.max_len, "maximum generated tokens")->check(CLI::NonNegativeNumber);
  app.add_option("--hyp-file", a.hyp_file, "score these hypotheses instead of decoding");
  app.add_option("--ref-file", a.ref_file, "references, one per line (instead of the corpus targets)");
  app.add_flag("--smooth", a.smooth, "add-one smoothing for 2- to 4-gram precisions");
  app.add_option("--out", a.out, "result record");
  app.add_option("--hyp-out", a.hyp_out, "write decoded hypotheses");
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.beam && *a.beam < 1) throw UsageError("--beam must be at least 1");
  if (a.hyp_file.empty() && (a.checkpoint.empty() || a.corpus.empty())) {
    throw UsageError("decoding needs --checkpoint and --corpus (or pass --hyp-file)");
  }
  if (a.corpus.empty() && a.ref_file.empty()) throw UsageError("need --corpus or --ref-file for references");
  if (!a.pair.empty() && a.corpus.empty()) throw UsageError("--pair needs --corpus");

  std::optional<ParallelCorpus> corpus;
  if (!a.corpus.empty()) {
    corpus = ParallelCorpus::read_tsv(a.corpus);
    if (!a.pair.empty()) corpus = corpus->slice(LanguagePair::parse(a.pair));
    if (corpus->empty()) throw CorpusError("test corpus is empty");
  }
  std::vector<std::string> refs;
  if (!a.ref_file.empty()) {
    refs = read_lines(a.ref_file);
  } else {
    for (const auto& e : corpus->entries()) refs.push_back(e.target);
  }
  std::vector<std::string> hyps;
  if (!a.hyp_file.empty()) {
    hyps = read_lines(a.hyp_file);
  } else {
    DecodeOptions opt;
    opt.beam = a.beam.value_or(0);
    opt.max_len = a.max_len;
    hyps = translate(load_checkpoint(a.checkpoint), *corpus, opt);
  }
  auto result = corpus_bleu(hyps, refs, BleuOptions{a.smooth});
  if (!a.pair.empty()) {
    result.pair = a.pair;
  } else if (corpus && corpus->pairs().size() == 1) {
    result.pair = corpus->pairs().front().label();
  }
  const auto record = result.to_json();
  if (!a.hyp_out.empty()) {
    std::string text;
    for (const auto& h : hyps) text += h + "\n";
    write_text(a.hyp_out, text);
  }
  if (!a.out.empty()) write_text(a.out, record + "\n");
  out << record << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- recipe

struct RecipeArgs {
  std::string file, runs_dir = "runs";
  std::optional<std::uint64_t> seed;
};

void add_recipe(CLI::App& app, RecipeArgs& a) {
  app.add_option("file", a.file, "recipe JSON")->required();
  app.add_option("--runs-dir", a.runs_dir, "root of the output tree");
  app.add_option("--seed", a.seed, "override the recipe's base seed");
}

}  // namespace

bool takes_seed(const std::string& command) {
  static const std::set<std::string> seeded{"synth", "train", "finetune", "probe", "cluster"};
  return seeded.count(command) != 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-lingual transfer and attention-head sharing toolkit", "xlt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  BpeArgs bpe;
  TrainArgs train_args, finetune_args;
  ProbeArgs probe;
  VerifyArgs verify;
  CorrelateArgs correlate;
  ClusterArgs cluster;
  SelectArgs select;
  EvaluateArgs evaluate;
  RecipeArgs recipe;

  add_synth(*app.add_subcommand("synth", "generate a synthetic language-family corpus"), synth);
  add_bpe(*app.add_subcommand("bpe", "learn a subword model"), bpe);
  add_train(*app.add_subcommand("train", "train a model (multilingual or bilingual)"), train_args, "none");
  add_train(*app.add_subcommand("finetune", "fine-tune from a multilingual checkpoint"), finetune_args, "load-both");
  add_probe(*app.add_subcommand("probe", "estimate attention-head importance"), probe);
  add_verify(*app.add_subcommand("verify-scores", "check per-module norms of head-score files"), verify);
  add_correlate(*app.add_subcommand("correlate", "pairwise correlation of head scores"), correlate);
  add_cluster(*app.add_subcommand("cluster", "k-means++ over head-score vectors"), cluster);
  add_select(*app.add_subcommand("select", "pick languages from a correlation report"), select);
  add_evaluate(*app.add_subcommand("evaluate", "decode and score with corpus BLEU"), evaluate);
  add_recipe(*app.add_subcommand("recipe", "run an experiment recipe"), recipe);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "xlt: " << e.what() << "\n";
    return kExitUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "synth") return cmd_synth(synth, out);
    if (name == "bpe") return cmd_bpe(bpe, out);
    if (name == "train") return cmd_train(train_args, out, err);
    if (name == "finetune") return cmd_train(finetune_args, out, err);
    if (name == "probe") return cmd_probe(probe, out);
    if (name == "verify-scores") return cmd_verify(verify, out);
    if (name == "correlate") return cmd_correlate(correlate, out);
    if (name == "cluster") return cmd_cluster(cluster, out);
    if (name == "select") return cmd_select(select, out);
    if (name == "evaluate") return cmd_evaluate(evaluate, out);
    if (name == "recipe") {
      const auto r = Recipe::load(recipe.file);
      RecipeRunOptions opt;
      opt.runs_dir = recipe.runs_dir;
      opt.seed = recipe.seed;
      return run_recipe(r, opt, out, err);
    }
  } catch (const UsageError& e) {
    err << "xlt " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "xlt " << name << ": " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace xlt::cli
