#include "xlt/training/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xlt/training/batching.hpp"

namespace xlt {

void TransferPlan::validate() const {
  if (freeze_encoder && !load_encoder) {
    throw std::invalid_argument("transfer plan freezes the encoder without loading it");
  }
  if (freeze_decoder && !load_decoder) {
    throw std::invalid_argument("transfer plan freezes the decoder without loading it");
  }
}

std::string TransferPlan::name() const {
  if (!loads_anything() && !freeze_encoder && !freeze_decoder) return "none";
  if (load_encoder && freeze_encoder && !load_decoder && !freeze_decoder) return "freeze-enc";
  if (load_decoder && freeze_decoder && !load_encoder && !freeze_encoder) return "freeze-dec";
  std::string out;
  auto add = [&](const char* part) { out += (out.empty() ? "" : "+") + std::string(part); };
  if (load_encoder && load_decoder) add("load-both");
  else if (load_encoder) add("load-enc");
  else if (load_decoder) add("load-dec");
  if (freeze_encoder) add("freeze-enc");
  if (freeze_decoder) add("freeze-dec");
  return out;
}

TransferPlan TransferPlan::parse(std::string_view text) {
  TransferPlan p;
  if (text == "none") return p;
  std::size_t start = 0;
  bool any = false;
  while (start <= text.size()) {
    const auto plus = text.find('+', start);
    const auto part = text.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start);
    if (part == "load-enc") p.load_encoder = true;
    else if (part == "load-dec") p.load_decoder = true;
    else if (part == "load-both") p.load_encoder = p.load_decoder = true;
    else if (part == "freeze-enc") p.load_encoder = p.freeze_encoder = true;
    else if (part == "freeze-dec") p.load_decoder = p.freeze_decoder = true;
    else throw std::invalid_argument("unknown transfer plan '" + std::string(text) + "'");
    any = true;
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  if (!any) throw std::invalid_argument("empty transfer plan");
  return p;
}

bool TransferPlan::loads(std::string_view name) const {
  return is_encoder_side(name) ? load_encoder : load_decoder;
}

bool TransferPlan::freezes(std::string_view name) const {
  return is_encoder_side(name) ? freeze_encoder : freeze_decoder;
}

double OptimizerSettings::rate(std::int64_t step) const {
  if (step < 1) step = 1;
  if (warmup_steps <= 0) return learning_rate;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return learning_rate * std::min(s / w, std::sqrt(w / s));
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  if constexpr (std::is_floating_point_v<N>) {
    try {
      std::size_t used = 0;
      out = static_cast<N>(std::stod(value, &used));
      if (used == value.size()) return out;
    } catch (const std::exception&) {
    }
  } else {
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec == std::errc() && ptr == value.data() + value.size()) return out;
  }
  throw std::invalid_argument("config: bad value '" + value + "' for " + key);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::map<std::string, std::string> model_keys;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));
    auto& t = c.train;
    auto& o = c.train.optimizer;
    if (key == "steps") t.steps = parse_number<std::int64_t>(key, value);
    else if (key == "batch_tokens") t.batch_tokens = parse_number<std::int64_t>(key, value);
    else if (key == "keep_optimizer_state") t.keep_optimizer_state = parse_number<int>(key, value) != 0;
    else if (key == "learning_rate") o.learning_rate = parse_number<double>(key, value);
    else if (key == "warmup_steps") o.warmup_steps = parse_number<int>(key, value);
    else if (key == "beta1") o.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") o.beta2 = parse_number<double>(key, value);
    else if (key == "adam_epsilon") o.epsilon = parse_number<double>(key, value);
    else if (key == "clip_norm") o.clip_norm = parse_number<double>(key, value);
    else if (key == "bpe_merges") c.bpe_merges = parse_number<int>(key, value);
    else if (key == "vocab_size") {
      throw std::invalid_argument("config: vocab_size is fixed by the subword model, not the config");
    } else {
      model_keys[key] = value;
    }
  }
  try {
    c.model = TransformerConfig::from_map(model_keys);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()));
  }
  if (c.train.steps < 0) throw std::invalid_argument("config: steps must be non-negative");
  if (c.train.batch_tokens <= 0) throw std::invalid_argument("config: batch_tokens must be positive");
  if (c.bpe_merges < 0) throw std::invalid_argument("config: bpe_merges must be non-negative");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : model.to_map()) {
    if (k != "vocab_size") out << k << " = " << v << '\n';
  }
  out << "steps = " << train.steps << '\n'
      << "batch_tokens = " << train.batch_tokens << '\n'
      << "keep_optimizer_state = " << (train.keep_optimizer_state ? 1 : 0) << '\n'
      << "learning_rate = " << fmt_double(train.optimizer.learning_rate) << '\n'
      << "warmup_steps = " << train.optimizer.warmup_steps << '\n'
      << "beta1 = " << fmt_double(train.optimizer.beta1) << '\n'
      << "beta2 = " << fmt_double(train.optimizer.beta2) << '\n'
      << "adam_epsilon = " << fmt_double(train.optimizer.epsilon) << '\n'
      << "clip_norm = " << fmt_double(train.optimizer.clip_norm) << '\n'
      << "bpe_merges = " << bpe_merges << '\n';
  return out.str();
}

bool checkpoint_uses_tags(const Checkpoint& ckpt) { return ckpt.meta("language_tags") == "1"; }

SubwordModel checkpoint_subword(const Checkpoint& ckpt) {
  const auto it = ckpt.metadata.find("subword");
  if (it == ckpt.metadata.end()) throw CheckpointError("checkpoint carries no subword model");
  return SubwordModel::from_text(it->second);
}

template <typename T>
Transformer<T> model_from_checkpoint(const Checkpoint& ckpt) {
  Transformer<T> model(ckpt.config, 0);
  restore(ckpt, model);
  return model;
}

template Transformer<float> model_from_checkpoint(const Checkpoint&);
template Transformer<double> model_from_checkpoint(const Checkpoint&);

namespace {

template <typename T>
TrainResult run_training(const TrainRequest& req, const TransformerConfig& config, bool use_tags) {
  const auto& plan = req.plan;
  Transformer<T> model(config, req.seed);
  if (req.source) {
    restore(*req.source, model, [&](std::string_view name) { return plan.loads(name); });
  }

  TrainResult result;
  auto examples = encode_corpus(*req.corpus, *req.subword, use_tags);
  BatchStream stream(std::move(examples), req.settings.batch_tokens, config.max_sequence_length,
                     derive_seed(req.seed, "batches"));
  result.skipped_examples = stream.skipped();

  struct Slot {
    std::string name;
    Tensor<T> param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots;
  for (auto& [name, tensor] : model.parameters()) {
    if (plan.freezes(name)) continue;
    const auto n = static_cast<std::size_t>(tensor.numel());
    slots.push_back({name, tensor, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }

  const auto& opt = req.settings.optimizer;
  for (std::int64_t step = 1; step <= req.settings.steps; ++step) {
    const Batch batch = stream.next();
    model.zero_grad();
    // Gates are all 1 during training; dropping them from the graph is exact.
    const auto loss = model.forward_loss(batch, /*use_gates=*/false);
    loss.backward();

    double scale = 1.0;
    if (opt.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& s : slots) {
        for (T g : s.param.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
      }
      const double norm = std::sqrt(sq);
      if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
    }

    const double lr = opt.rate(step);
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
    for (auto& s : slots) {
      if (!s.param.has_grad()) continue;
      auto g = s.param.grad();
      auto w = s.param.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * scale;
        s.m[i] = opt.beta1 * s.m[i] + (1.0 - opt.beta1) * gi;
        s.v[i] = opt.beta2 * s.v[i] + (1.0 - opt.beta2) * gi * gi;
        const double update = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + opt.epsilon);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    }

    StepRecord rec{step, static_cast<double>(loss.item()), lr, batch.target_tokens()};
    result.log.push_back(rec);
    if (req.on_step) req.on_step(rec);
  }

  result.checkpoint = snapshot(model);
  if (req.settings.keep_optimizer_state && req.settings.steps > 0) {
    for (const auto& s : slots) {
      result.checkpoint.optimizer.push_back({"adam.m." + s.name, Precision::f64, s.param.shape(), s.m});
      result.checkpoint.optimizer.push_back({"adam.v." + s.name, Precision::f64, s.param.shape(), s.v});
    }
  }
  return result;
}

}  // namespace

TrainResult train(const TrainRequest& req) {
  if (!req.corpus || !req.subword) throw std::invalid_argument("train: corpus and subword model are required");
  if (req.corpus->empty()) throw std::invalid_argument("train: empty corpus");
  req.plan.validate();
  if (!req.plan.loads_anything() && req.source) {
    throw std::invalid_argument("train: plan 'none' takes no source checkpoint");
  }
  if (req.plan.loads_anything() && !req.source) {
    throw std::invalid_argument("train: plan '" + req.plan.name() + "' needs a source checkpoint");
  }
  if (req.settings.steps < 0) throw std::invalid_argument("train: negative step budget");

  TransformerConfig config = req.model;
  config.vocab_size = static_cast<int>(req.subword->vocab_size());
  config.validate();

  if (req.source) {
    const auto it = req.source->metadata.find("subword");
    if (it != req.source->metadata.end() && it->second != req.subword->to_text()) {
      throw std::invalid_argument("train: subword model differs from the source checkpoint's");
    }
  }

  bool use_tags = regime_uses_tags(req.corpus->regime());
  if (req.source) use_tags = checkpoint_uses_tags(*req.source);
  if (req.language_tags) use_tags = *req.language_tags;

  TrainResult result = config.precision == Precision::f64
                           ? run_training<double>(req, config, use_tags)
                           : run_training<float>(req, config, use_tags);

  auto& meta = result.checkpoint.metadata;
  meta["regime"] = to_string(req.corpus->regime());
  meta["step"] = std::to_string(req.settings.steps);
  meta["seed"] = std::to_string(req.seed);
  meta["plan"] = req.plan.name();
  meta["language_tags"] = use_tags ? "1" : "0";
  meta["subword"] = req.subword->to_text();
  std::string pairs;
  for (const auto& p : req.corpus->pairs()) pairs += (pairs.empty() ? "" : ",") + p.label();
  meta["pairs"] = pairs;
  if (!result.log.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", result.log.back().loss);
    meta["final_loss"] = buf;
  }
  return result;
}

}  // namespace xlt
