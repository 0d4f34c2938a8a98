#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "xlt/training.hpp"

using namespace xlt;
using fixtures::TempDir;

namespace {

std::vector<SentencePair> copy_task(int n, std::uint64_t seed, const std::string& src = "xa",
                                    const std::string& tgt = "en") {
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<SentencePair> out;
  while (static_cast<int>(out.size()) < n) {
    std::string s;
    const int words = 2 + static_cast<int>(rng.below(3));
    for (int w = 0; w < words; ++w) {
      if (w) s += ' ';
      const int len = 1 + static_cast<int>(rng.below(3));
      for (int k = 0; k < len; ++k) s += static_cast<char>('a' + rng.below(6));
    }
    if (seen.insert(s).second) out.push_back({src, tgt, s, s});
  }
  return out;
}

TransformerConfig small_config(Precision p = Precision::f64) {
  TransformerConfig c;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.model_dim = 16;
  c.ffn_dim = 32;
  c.max_sequence_length = 32;
  c.precision = p;
  return c;
}

struct Fixture {
  ParallelCorpus corpus;
  SubwordModel subword;

  explicit Fixture(int n = 200, std::uint64_t seed = 1) : corpus(copy_task(n, seed)) {
    std::vector<std::string> text;
    for (const auto& e : corpus.entries()) {
      text.push_back(e.source);
      text.push_back(e.target);
    }
    subword = learn_bpe(text, 20);
  }

  TrainResult run(const TransferPlan& plan, const Checkpoint* source, std::int64_t steps, std::uint64_t seed,
                  Precision p = Precision::f64) const {
    TrainRequest req;
    req.corpus = &corpus;
    req.subword = &subword;
    req.model = small_config(p);
    req.plan = plan;
    req.source = source;
    req.settings.steps = steps;
    req.settings.batch_tokens = 120;
    req.settings.optimizer.learning_rate = 3e-3;
    req.settings.optimizer.warmup_steps = 50;
    req.seed = seed;
    return train(req);
  }
};

bool same_values(const StoredTensor& a, const StoredTensor& b) {
  return a.shape == b.shape && a.values == b.values;
}

}  // namespace

TEST(TransferPlan, ParseAndName) {
  for (const char* name : {"none", "load-enc", "load-dec", "load-both", "freeze-enc", "freeze-dec",
                           "load-both+freeze-enc"}) {
    EXPECT_EQ(TransferPlan::parse(name).name(), name);
  }
  const auto fe = TransferPlan::parse("freeze-enc");
  EXPECT_TRUE(fe.load_encoder);
  EXPECT_TRUE(fe.freeze_encoder);
  EXPECT_FALSE(fe.load_decoder);
  EXPECT_THROW(TransferPlan::parse("load-everything"), std::invalid_argument);
  EXPECT_THROW(TransferPlan::parse(""), std::invalid_argument);
}

TEST(TransferPlan, FrozenMustBeLoaded) {
  TransferPlan p;
  p.freeze_decoder = true;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.load_decoder = true;
  EXPECT_NO_THROW(p.validate());
}

TEST(TransferPlan, ComponentOwnership) {
  const auto enc = TransferPlan::parse("load-enc");
  EXPECT_TRUE(enc.loads("encoder.layers.0.ffn.w1"));
  EXPECT_TRUE(enc.loads("src_embed.weight"));
  EXPECT_FALSE(enc.loads("tgt_embed.weight"));
  EXPECT_FALSE(enc.loads("out_proj.weight"));
  EXPECT_FALSE(enc.loads("decoder.final_norm.gain"));
}

TEST(Optimizer, WarmupThenInverseSquareRoot) {
  OptimizerSettings o;
  o.learning_rate = 1e-3;
  o.warmup_steps = 400;
  EXPECT_DOUBLE_EQ(o.rate(1), 1e-3 / 400);
  EXPECT_DOUBLE_EQ(o.rate(200), 5e-4);
  EXPECT_DOUBLE_EQ(o.rate(400), 1e-3);
  EXPECT_DOUBLE_EQ(o.rate(1600), 5e-4);
}

TEST(RunConfig, ParsesAndRejectsUnknownKeys) {
  const auto c = RunConfig::parse("# comment\nheads = 2\nmodel_dim=32 # inline\nsteps = 7\nlearning_rate = 0.01\n");
  EXPECT_EQ(c.model.heads, 2);
  EXPECT_EQ(c.model.model_dim, 32);
  EXPECT_EQ(c.train.steps, 7);
  EXPECT_DOUBLE_EQ(c.train.optimizer.learning_rate, 0.01);
  EXPECT_THROW(RunConfig::parse("dropout = 0.3\n"), std::invalid_argument);
  EXPECT_THROW(RunConfig::parse("vocab_size = 100\n"), std::invalid_argument);
  EXPECT_THROW(RunConfig::parse("steps = ten\n"), std::invalid_argument);
  EXPECT_THROW(RunConfig::parse("just words\n"), std::invalid_argument);
  const auto back = RunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
}

TEST(Corpus, RegimeInvariants) {
  std::vector<SentencePair> m2o{{"xa", "en", "a", "b"}, {"xb", "en", "c", "d"}};
  EXPECT_EQ(infer_regime(m2o), Regime::many_to_one);
  EXPECT_NO_THROW(ParallelCorpus(m2o, Regime::many_to_one));
  EXPECT_THROW(ParallelCorpus(m2o, Regime::one_to_many), CorpusError);
  EXPECT_THROW(ParallelCorpus(m2o, Regime::bilingual), CorpusError);
  std::vector<SentencePair> o2m{{"en", "xa", "a", "b"}, {"en", "xb", "c", "d"}};
  EXPECT_EQ(infer_regime(o2m), Regime::one_to_many);
  std::vector<SentencePair> m2m{{"en", "xa", "a", "b"}, {"xb", "en", "c", "d"}};
  EXPECT_EQ(infer_regime(m2m), Regime::many_to_many);
  EXPECT_THROW(ParallelCorpus({{"xa", "en", "", "b"}}), CorpusError);
  EXPECT_THROW(ParallelCorpus({{"xa", "en", "a", "   "}}), CorpusError);
}

TEST(Corpus, TsvRoundTripAndErrors) {
  TempDir dir("corpus");
  ParallelCorpus c({{"xa", "en", "a b", "c d"}, {"xb", "en", "e", "f"}});
  c.write_tsv(dir.path / "c.tsv");
  const auto back = ParallelCorpus::read_tsv(dir.path / "c.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries()[1].source, "e");
  EXPECT_EQ(back.regime(), Regime::many_to_one);
  EXPECT_EQ(back.slice({"xb", "en"}).size(), 1u);
  std::ofstream(dir.path / "bad.tsv") << "xa\ten\tonly three\n";
  try {
    ParallelCorpus::read_tsv(dir.path / "bad.tsv");
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos) << e.what();
  }
}

TEST(Corpus, TagsFollowRegime) {
  ParallelCorpus o2m({{"en", "xa", "ab", "ba"}, {"en", "xb", "aa", "bb"}});
  const auto sw = learn_bpe({"ab", "ba", "aa", "bb"}, 2, o2m.target_languages());
  for (const auto& ex : encode_corpus(o2m, sw, true)) EXPECT_TRUE(sw.is_language_tag(ex.source.front()));
  EXPECT_THROW(encode_corpus(o2m, sw, false), CorpusError);

  ParallelCorpus m2o({{"xa", "en", "ab", "ba"}, {"xb", "en", "aa", "bb"}});
  const auto sw2 = learn_bpe({"ab", "ba", "aa", "bb"}, 2);
  for (const auto& ex : encode_corpus(m2o, sw2, false)) {
    for (auto id : ex.source) EXPECT_FALSE(sw2.is_language_tag(id));
    EXPECT_EQ(ex.source.back(), SubwordModel::kEos);
    EXPECT_EQ(ex.target.back(), SubwordModel::kEos);
  }
}

TEST(Batching, SinglePairCoversEveryExampleOncePerEpoch) {
  const auto examples = fixtures::random_pairs(37, 30, 5);
  BatchStream stream(examples, 40, 64, 9);
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    for (const auto& batch : stream.plan_epoch(epoch)) {
      std::int64_t width = 0;
      for (auto i : batch) {
        seen.insert(i);
        width = std::max<std::int64_t>(
            width, static_cast<std::int64_t>(std::max(examples[i].source.size(), examples[i].target.size())));
      }
      EXPECT_LE(width * static_cast<std::int64_t>(batch.size()), 40);
    }
    std::multiset<std::size_t> all;
    for (std::size_t i = 0; i < examples.size(); ++i) all.insert(i);
    EXPECT_EQ(seen, all);
  }
}

TEST(Batching, PairsSampledInProportionToSize) {
  auto examples = fixtures::random_pairs(400, 30, 6, 4, 4);
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i].pair = i < 100 ? 0 : 1;
  BatchStream stream(examples, 50, 64, 3);
  std::map<std::int32_t, std::int64_t> tokens;
  std::int64_t max_batch = 0;
  // One epoch's worth of batches.
  const auto plan = stream.plan_epoch(0);
  for (std::size_t b = 0; b < plan.size(); ++b) {
    const auto batch = stream.next();
    std::int64_t in_batch = 0;
    for (std::int64_t r = 0; r < batch.size; ++r) {
      std::int64_t n = 0;
      for (std::int64_t t = 0; t < batch.target_len; ++t) n += batch.target_out[r * batch.target_len + t] != 0;
      tokens[batch.pairs[r]] += n;
      in_batch += n;
    }
    max_batch = std::max(max_batch, in_batch);
  }
  EXPECT_EQ(stream.epoch(), 0u);
  EXPECT_NEAR(static_cast<double>(tokens[1]), 3.0 * static_cast<double>(tokens[0]), static_cast<double>(max_batch));
}

TEST(Batching, SameSeedSameStream) {
  const auto examples = fixtures::random_pairs(50, 30, 7);
  BatchStream a(examples, 30, 64, 4);
  BatchStream b(examples, 30, 64, 4);
  BatchStream c(examples, 30, 64, 5);
  bool differs = false;
  for (int i = 0; i < 40; ++i) {
    const auto x = a.next();
    const auto y = b.next();
    EXPECT_EQ(x.source, y.source);
    EXPECT_EQ(x.target_out, y.target_out);
    differs |= x.source != c.next().source;
  }
  EXPECT_TRUE(differs);
}

TEST(Batching, SkipsOverlongAndRejectsTinyBudget) {
  auto examples = fixtures::random_pairs(10, 30, 8, 3, 3);
  examples[2].source.assign(40, 5);
  BatchStream s(examples, 50, 20, 1);
  EXPECT_EQ(s.skipped(), 1u);
  EXPECT_EQ(s.examples().size(), 9u);
  EXPECT_THROW(BatchStream(examples, 3, 64, 1), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  auto config = small_config(Precision::f32);
  config.vocab_size = 30;
  Transformer<float> model(config, 4);
  auto ckpt = snapshot(model);
  ckpt.metadata["seed"] = "4";
  ckpt.optimizer.push_back({"adam.m.out_proj.bias", Precision::f64, {30}, std::vector<double>(30, 0.125)});
  save_checkpoint(ckpt, dir.path / "m.ckpt");
  const auto back = load_checkpoint(dir.path / "m.ckpt");
  EXPECT_EQ(back.config, ckpt.config);
  EXPECT_EQ(back.metadata, ckpt.metadata);
  ASSERT_EQ(back.parameters.size(), ckpt.parameters.size());
  for (std::size_t i = 0; i < back.parameters.size(); ++i) EXPECT_EQ(back.parameters[i], ckpt.parameters[i]);
  EXPECT_EQ(back.optimizer, ckpt.optimizer);
  Transformer<float> restored(config, 99);
  restore(back, restored);
  for (const auto& [name, t] : model.parameters()) {
    const auto& u = restored.parameters().at(name);
    ASSERT_TRUE(std::equal(t.data().begin(), t.data().end(), u.data().begin())) << name;
  }
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ckpt));
}

TEST(Checkpoint, EveryParameterOnceUnderOnePrefix) {
  auto config = small_config();
  config.vocab_size = 20;
  const auto ckpt = snapshot(Transformer<double>(config, 1));
  std::set<std::string> names;
  for (const auto& t : ckpt.parameters) {
    EXPECT_TRUE(names.insert(t.name).second) << t.name;
    EXPECT_NO_THROW(component_of(t.name));
  }
}

TEST(Checkpoint, TruncationIsCorruption) {
  auto config = small_config();
  config.vocab_size = 20;
  const auto bytes = serialize_checkpoint(snapshot(Transformer<double>(config, 1)));
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> partial(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(deserialize_checkpoint(partial), CheckpointCorruptError) << cut;
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'Z';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointCorruptError);
}

TEST(Checkpoint, VersionMismatch) {
  auto config = small_config();
  config.vocab_size = 20;
  auto bytes = serialize_checkpoint(snapshot(Transformer<double>(config, 1)));
  bytes[4] = 9;  // u32 version follows the magic
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointVersionError);
}

TEST(Checkpoint, UnknownTensorName) {
  auto config = small_config();
  config.vocab_size = 20;
  Transformer<double> model(config, 1);
  auto ckpt = snapshot(model);
  ckpt.parameters.push_back({"encoder.layers.7.ffn.w1", Precision::f64, {2}, {1.0, 2.0}});
  EXPECT_THROW(restore(ckpt, model), UnknownTensorError);
}

TEST(Checkpoint, HeadCountMismatchListsAttentionTensors) {
  auto config = small_config();
  config.vocab_size = 20;
  const auto ckpt = snapshot(Transformer<double>(config, 1));
  auto other = config;
  other.heads = 4;
  Transformer<double> target(other, 2);
  try {
    restore(ckpt, target);
    FAIL() << "expected CheckpointShapeError";
  } catch (const CheckpointShapeError& e) {
    ASSERT_FALSE(e.tensors().empty());
    for (const auto& name : e.tensors()) EXPECT_NE(name.find("attn."), std::string::npos) << name;
    EXPECT_NE(std::string(e.what()).find("heads"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, WidthMismatchIsShapeError) {
  auto config = small_config();
  config.vocab_size = 20;
  const auto ckpt = snapshot(Transformer<double>(config, 1));
  auto other = config;
  other.ffn_dim = 8;
  Transformer<double> target(other, 2);
  EXPECT_THROW(restore(ckpt, target), CheckpointShapeError);
}

TEST(Train, LoadBothWithZeroStepsRoundTrips) {
  Fixture f(60);
  const auto source = f.run(TransferPlan{}, nullptr, 5, 1).checkpoint;
  const auto out = f.run(TransferPlan::parse("load-both"), &source, 0, 2).checkpoint;
  ASSERT_EQ(out.parameters.size(), source.parameters.size());
  for (std::size_t i = 0; i < out.parameters.size(); ++i) EXPECT_EQ(out.parameters[i], source.parameters[i]);
}

TEST(Train, LoadDecoderLeavesFreshEncoder) {
  Fixture f(60);
  const auto source = f.run(TransferPlan{}, nullptr, 5, 1).checkpoint;
  const std::uint64_t seed = 77;
  const auto out = f.run(TransferPlan::parse("load-dec"), &source, 0, seed).checkpoint;
  auto config = small_config();
  config.vocab_size = static_cast<int>(f.subword.vocab_size());
  const auto fresh = Transformer<double>::initial_parameters(config, seed);
  for (const auto& t : out.parameters) {
    if (is_encoder_side(t.name)) {
      const auto& init = fresh.at(t.name);
      EXPECT_TRUE(std::equal(t.values.begin(), t.values.end(), init.data().begin())) << t.name;
    } else {
      EXPECT_TRUE(same_values(t, source.at(t.name))) << t.name;
    }
  }
}

TEST(Train, FrozenComponentsAreBitIdentical) {
  Fixture f(60);
  const auto source = f.run(TransferPlan{}, nullptr, 5, 1).checkpoint;
  for (const char* plan_name : {"freeze-enc", "freeze-dec", "load-both+freeze-enc"}) {
    const auto plan = TransferPlan::parse(plan_name);
    const auto out = f.run(plan, &source, 30, 3).checkpoint;
    int frozen = 0;
    int moved = 0;
    for (const auto& t : out.parameters) {
      if (plan.freezes(t.name)) {
        EXPECT_TRUE(same_values(t, source.at(t.name))) << plan_name << " " << t.name;
        ++frozen;
      } else if (!same_values(t, source.at(t.name))) {
        ++moved;
      }
    }
    EXPECT_GT(frozen, 0);
    EXPECT_GT(moved, 0);
  }
}

TEST(Train, OptimizerStateIsNotTransferred) {
  Fixture f(40);
  const auto source = f.run(TransferPlan{}, nullptr, 10, 1).checkpoint;
  EXPECT_FALSE(source.optimizer.empty());
  auto doctored = source;
  for (auto& t : doctored.optimizer) std::fill(t.values.begin(), t.values.end(), 1e6);
  const auto a = f.run(TransferPlan::parse("load-both"), &source, 5, 2);
  const auto b = f.run(TransferPlan::parse("load-both"), &doctored, 5, 2);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
}

TEST(Train, PlanChecks) {
  Fixture f(20);
  const auto source = f.run(TransferPlan{}, nullptr, 1, 1).checkpoint;
  EXPECT_THROW(f.run(TransferPlan::parse("load-enc"), nullptr, 1, 1), std::invalid_argument);
  EXPECT_THROW(f.run(TransferPlan{}, &source, 1, 1), std::invalid_argument);
  TransferPlan bad;
  bad.freeze_encoder = true;
  EXPECT_THROW(f.run(bad, &source, 1, 1), std::invalid_argument);
}

TEST(Train, ShapeMismatchOnLoadNamesTensor) {
  Fixture f(20);
  auto source = f.run(TransferPlan{}, nullptr, 1, 1).checkpoint;
  source.config.ffn_dim = 8;
  for (auto& t : source.parameters) {
    if (t.name.find(".w1") != std::string::npos) {
      t.shape[1] = 8;
      t.values.resize(static_cast<std::size_t>(t.shape[0] * 8));
    }
  }
  try {
    f.run(TransferPlan::parse("load-enc"), &source, 1, 1);
    FAIL();
  } catch (const CheckpointShapeError& e) {
    ASSERT_FALSE(e.tensors().empty());
    EXPECT_NE(std::string(e.what()).find("ffn"), std::string::npos) << e.what();
  }
}

TEST(Train, SeededRunsReproduceExactly) {
  Fixture f(60);
  const auto a = f.run(TransferPlan{}, nullptr, 25, 11);
  const auto b = f.run(TransferPlan{}, nullptr, 25, 11);
  const auto c = f.run(TransferPlan{}, nullptr, 25, 12);
  ASSERT_EQ(a.log.size(), 25u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  EXPECT_NE(a.log.back().loss, c.log.back().loss);
  EXPECT_EQ(serialize_checkpoint(a.checkpoint), serialize_checkpoint(b.checkpoint));
}

TEST(Train, LossDecreasesOnCopyTaskForAllPlans) {
  Fixture f(200);
  const auto source = f.run(TransferPlan{}, nullptr, 100, 1, Precision::f32).checkpoint;
  for (const char* plan_name : {"none", "load-enc", "load-dec", "load-both", "freeze-enc", "freeze-dec"}) {
    const auto plan = TransferPlan::parse(plan_name);
    const auto r = f.run(plan, plan.loads_anything() ? &source : nullptr, 500, 5, Precision::f32);
    ASSERT_EQ(r.log.size(), 500u);
    double head = 0.0;
    double tail = 0.0;
    for (int i = 0; i < 10; ++i) {
      head += r.log[static_cast<std::size_t>(i)].loss;
      tail += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    EXPECT_LT(tail, head) << plan_name;
    EXPECT_LT(r.log.back().loss, r.log.front().loss) << plan_name;
  }
}

TEST(Train, MetadataRecordsRun) {
  Fixture f(20);
  const auto r = f.run(TransferPlan{}, nullptr, 3, 42);
  EXPECT_EQ(r.checkpoint.meta("seed"), "42");
  EXPECT_EQ(r.checkpoint.meta("step"), "3");
  EXPECT_EQ(r.checkpoint.meta("regime"), "bilingual");
  EXPECT_EQ(r.checkpoint.meta("plan"), "none");
  EXPECT_EQ(checkpoint_subword(r.checkpoint).to_text(), f.subword.to_text());
  EXPECT_FALSE(checkpoint_uses_tags(r.checkpoint));
}

TEST(Synthetic, FamilyShapeAndDeterminism) {
  FamilySpec spec;
  spec.train_sentences = 200;
  spec.test_sentences = 20;
  spec.seed = 3;
  const auto a = make_language_family(spec);
  const auto b = make_language_family(spec);
  EXPECT_EQ(a.languages, (std::vector<std::string>{"xa", "xb", "xc", "xd", "xe"}));
  EXPECT_EQ(a.low_resource, "xa");
  EXPECT_EQ(a.train.slice({"xa", "en"}).size(), 10u);
  EXPECT_EQ(a.train.slice({"xb", "en"}).size(), 200u);
  EXPECT_EQ(a.test.slice({"xa", "en"}).size(), 20u);
  EXPECT_EQ(a.train.regime(), Regime::many_to_one);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.entries()[i].source, b.train.entries()[i].source);
  // Test sentences never appear in training.
  std::set<std::string> train_targets;
  for (const auto& e : a.train.entries()) train_targets.insert(e.target);
  for (const auto& e : a.test.entries()) EXPECT_FALSE(train_targets.count(e.target)) << e.target;
}

TEST(Synthetic, TransformIsInvertible) {
  FamilySpec spec;
  spec.train_sentences = 300;
  spec.test_sentences = 10;
  const auto fam = make_language_family(spec);
  for (int idx = 0; idx < 5; ++idx) {
    std::map<std::string, std::string> back;
    const auto slice = fam.train.slice({family_language_name(idx), "en"});
    for (const auto& e : slice.entries()) {
      EXPECT_EQ(split_words(e.source).size(), split_words(e.target).size());
      const auto [it, inserted] = back.emplace(e.source, e.target);
      EXPECT_TRUE(inserted || it->second == e.target);
    }
  }
  EXPECT_EQ(family_transform("ab cd", 1, 5), family_transform("ab cd", 1, 5));
}

TEST(Synthetic, OneToManyFlipsDirection) {
  FamilySpec spec;
  spec.train_sentences = 50;
  spec.test_sentences = 5;
  spec.regime = Regime::one_to_many;
  const auto fam = make_language_family(spec);
  EXPECT_EQ(fam.train.regime(), Regime::one_to_many);
  for (const auto& e : fam.train.entries()) EXPECT_EQ(e.source_lang, "en");
}
