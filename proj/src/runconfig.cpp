#include "comatch/runconfig.hpp"

#include <fstream>
#include <set>

namespace comatch {

namespace {

using json = nlohmann::json;

// Tracks which keys of one JSON object were consumed and rejects leftovers,
// so typos in config files fail loudly instead of silently defaulting.
// Holds its object by value: readers are routinely built from temporaries.
class ObjReader {
 public:
  ObjReader(json obj, std::string path) : obj_(std::move(obj)), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValueError(path_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return obj_.contains(key); }

  template <typename T>
  T get(const char* key, T dflt) {
    seen_.insert(key);
    if (!obj_.contains(key)) return dflt;
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValueError(path_ + "." + key + ": wrong type");
    }
  }

  std::string str(const char* key, const std::string& dflt) { return get<std::string>(key, dflt); }

  json sub(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? obj_.at(key) : json::object();
  }

  void done() const {
    for (const auto& [key, value] : obj_.items()) {
      (void)value;
      if (!seen_.count(key)) throw ValueError(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  json obj_;
  std::string path_;
  std::set<std::string> seen_;
};

SyntheticSpec parse_synthetic(const json& doc) {
  ObjReader r(doc, "synthetic");
  SyntheticSpec s;
  s.content_words = r.get<std::size_t>("content_words", s.content_words);
  s.number_words = r.get<std::size_t>("number_words", s.number_words);
  s.antonym_pairs = r.get<std::size_t>("antonym_pairs", s.antonym_pairs);
  s.filler_words = r.get<std::size_t>("filler_words", s.filler_words);
  s.min_len = r.get<std::size_t>("min_len", s.min_len);
  s.max_len = r.get<std::size_t>("max_len", s.max_len);
  s.positive_fraction = r.get<double>("positive_fraction", s.positive_fraction);
  {
    ObjReader mix(r.sub("negative_mix"), "synthetic.negative_mix");
    s.w_swap_num = mix.get<double>("swap_num", s.w_swap_num);
    s.w_swap_ant = mix.get<double>("swap_ant", s.w_swap_ant);
    s.w_overlap_high = mix.get<double>("overlap_high", s.w_overlap_high);
    s.w_random_neg = mix.get<double>("random_neg", s.w_random_neg);
    mix.done();
  }
  s.num_examples = r.get<std::size_t>("num_examples", s.num_examples);
  s.seed = r.get<std::uint64_t>("seed", s.seed);
  r.done();
  return s;
}

AttentionConfig parse_attention(const json& doc) {
  ObjReader r(doc, "attention");
  AttentionConfig a;
  a.alpha = r.get<double>("alpha", a.alpha);
  a.beta = r.get<double>("beta", a.beta);
  a.f_e = squash_from(r.str("f_e", squash_name(a.f_e)));
  a.f_n = squash_from(r.str("f_n", squash_name(a.f_n)));
  a.variant = variant_from(r.str("variant", variant_name(a.variant)));
  a.share_projections = r.get<bool>("share_projections", a.share_projections);
  a.mode = mode_from(r.str("mode", mode_name(a.mode)));
  r.done();
  return a;
}

EncoderConfig parse_encoder(const json& doc) {
  ObjReader r(doc, "encoder");
  EncoderConfig e;
  e.num_layers = r.get<std::size_t>("num_layers", e.num_layers);
  e.d_model = r.get<std::size_t>("d_model", e.d_model);
  e.d_ff = r.get<std::size_t>("d_ff", 0);  // 0: default to 4*d_model in finalize
  e.num_heads = r.get<std::size_t>("num_heads", e.num_heads);
  if (r.has("replacement_schedule")) {
    e.replacement_schedule = r.get<std::vector<double>>("replacement_schedule", {});
  }
  e.max_seq_len = r.get<std::size_t>("max_seq_len", e.max_seq_len);
  r.done();
  return e;
}

MatcherConfig parse_matcher(const json& doc) {
  ObjReader r(doc, "matcher");
  MatcherConfig m;
  m.encoding = encoding_from(r.str("encoding", encoding_name(m.encoding)));
  m.pooling = pooling_from(r.str("pooling", pooling_name(m.pooling)));
  m.num_classes = r.get<std::size_t>("num_classes", m.num_classes);
  m.symmetric_features = r.get<bool>("symmetric_features", m.symmetric_features);
  r.done();
  return m;
}

TrainConfig parse_training(const json& doc) {
  ObjReader r(doc, "training");
  TrainConfig t;
  t.lr = r.get<double>("lr", t.lr);
  t.beta1 = r.get<double>("beta1", t.beta1);
  t.beta2 = r.get<double>("beta2", t.beta2);
  t.epsilon = r.get<double>("epsilon", t.epsilon);
  t.batch_size = r.get<std::size_t>("batch_size", t.batch_size);
  t.epochs = r.get<std::size_t>("epochs", t.epochs);
  t.seed = r.get<std::uint64_t>("seed", t.seed);
  t.clip_norm = r.get<double>("clip_norm", t.clip_norm);
  t.dev_fraction = r.get<double>("dev_fraction", t.dev_fraction);
  r.done();
  return t;
}

}  // namespace

void RunConfig::finalize() {
  synthetic.validate();
  if (encoder.d_ff == 0) encoder.d_ff = 4 * encoder.d_model;
  if (encoder.replacement_schedule.empty()) {
    encoder.replacement_schedule = EncoderConfig::default_schedule(encoder.num_layers);
  }
  encoder.vocab_size = synthetic.vocab_size();
  encoder.attention = encoder.effective_attention();
  if (2 * synthetic.max_len + 3 > encoder.max_seq_len) {
    throw ValueError("config: max_seq_len " + std::to_string(encoder.max_seq_len) +
                     " cannot hold a concatenated pair of max_len " +
                     std::to_string(synthetic.max_len) + " sentences");
  }
  encoder.validate();
  matcher.validate();
  training.validate();
}

RunConfig parse_run_config(const json& doc) {
  ObjReader r(doc, "config");
  RunConfig cfg;
  cfg.synthetic = parse_synthetic(r.sub("synthetic"));
  cfg.encoder = parse_encoder(r.sub("encoder"));
  cfg.encoder.attention = parse_attention(r.sub("attention"));
  cfg.matcher = parse_matcher(r.sub("matcher"));
  cfg.training = parse_training(r.sub("training"));
  r.done();
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValueError("cannot open config '" + path + "'");
  json doc;
  try {
    f >> doc;
  } catch (const json::parse_error& e) {
    throw ValueError(path + ": bad JSON: " + e.what());
  }
  return parse_run_config(doc);
}

json run_config_to_json(const RunConfig& cfg) {
  json doc;
  doc["synthetic"] = {
      {"content_words", cfg.synthetic.content_words},
      {"number_words", cfg.synthetic.number_words},
      {"antonym_pairs", cfg.synthetic.antonym_pairs},
      {"filler_words", cfg.synthetic.filler_words},
      {"min_len", cfg.synthetic.min_len},
      {"max_len", cfg.synthetic.max_len},
      {"positive_fraction", cfg.synthetic.positive_fraction},
      {"negative_mix",
       {{"swap_num", cfg.synthetic.w_swap_num},
        {"swap_ant", cfg.synthetic.w_swap_ant},
        {"overlap_high", cfg.synthetic.w_overlap_high},
        {"random_neg", cfg.synthetic.w_random_neg}}},
      {"num_examples", cfg.synthetic.num_examples},
      {"seed", cfg.synthetic.seed},
  };
  doc["encoder"] = {
      {"num_layers", cfg.encoder.num_layers},
      {"d_model", cfg.encoder.d_model},
      {"d_ff", cfg.encoder.d_ff},
      {"num_heads", cfg.encoder.num_heads},
      {"replacement_schedule", cfg.encoder.replacement_schedule},
      {"max_seq_len", cfg.encoder.max_seq_len},
  };
  doc["attention"] = {
      {"alpha", cfg.encoder.attention.alpha},
      {"beta", cfg.encoder.attention.beta},
      {"f_e", squash_name(cfg.encoder.attention.f_e)},
      {"f_n", squash_name(cfg.encoder.attention.f_n)},
      {"variant", variant_name(cfg.encoder.attention.variant)},
      {"share_projections", cfg.encoder.attention.share_projections},
      {"mode", mode_name(cfg.encoder.attention.mode)},
  };
  doc["matcher"] = {
      {"encoding", encoding_name(cfg.matcher.encoding)},
      {"pooling", pooling_name(cfg.matcher.pooling)},
      {"num_classes", cfg.matcher.num_classes},
      {"symmetric_features", cfg.matcher.symmetric_features},
  };
  doc["training"] = {
      {"lr", cfg.training.lr},
      {"beta1", cfg.training.beta1},
      {"beta2", cfg.training.beta2},
      {"epsilon", cfg.training.epsilon},
      {"batch_size", cfg.training.batch_size},
      {"epochs", cfg.training.epochs},
      {"seed", cfg.training.seed},
      {"clip_norm", cfg.training.clip_norm},
      {"dev_fraction", cfg.training.dev_fraction},
  };
  return doc;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, MatcherModel& model) {
  json doc;
  doc["format"] = "comatch-checkpoint";
  doc["version"] = 1;
  doc["config"] = run_config_to_json(cfg);
  json params = json::object();
  visit_params(model, [&](const std::string& name, Tensor& t) {
    params[name] = {{"shape", t.shape}, {"data", t.values()}};
  });
  doc["params"] = std::move(params);
  std::ofstream f(path);
  if (!f) throw ValueError("cannot open '" + path + "' for writing");
  f << doc.dump() << "\n";
}

MatcherModel load_checkpoint(const std::string& path, RunConfig* cfg_out) {
  std::ifstream f(path);
  if (!f) throw ValueError("cannot open checkpoint '" + path + "'");
  json doc;
  try {
    f >> doc;
  } catch (const json::parse_error& e) {
    throw ValueError(path + ": bad JSON: " + e.what());
  }
  if (doc.value("format", std::string()) != "comatch-checkpoint") {
    throw ValueError(path + ": not a comatch checkpoint");
  }
  if (doc.value("version", 0) != 1) {
    throw ValueError(path + ": unsupported checkpoint version");
  }
  RunConfig cfg = parse_run_config(doc.at("config"));
  if (cfg_out) *cfg_out = cfg;

  Rng rng(cfg.training.seed);
  MatcherModel model = init_matcher(cfg.encoder, cfg.matcher, rng);
  const json& params = doc.at("params");
  std::set<std::string> used;
  visit_params(model, [&](const std::string& name, Tensor& t) {
    if (!params.contains(name)) throw ValueError(path + ": missing parameter '" + name + "'");
    const json& entry = params.at(name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != t.shape) {
      throw ValueError(path + ": parameter '" + name + "' has shape " + shape_str(shape) +
                       ", expected " + shape_str(t.shape));
    }
    t = Tensor::from(shape, entry.at("data").get<std::vector<double>>());
    used.insert(name);
  });
  for (const auto& [name, value] : params.items()) {
    (void)value;
    if (!used.count(name)) throw ValueError(path + ": unexpected parameter '" + name + "'");
  }
  return model;
}

}  // namespace comatch
