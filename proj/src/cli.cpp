#include "comatch/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "comatch/gradcheck.hpp"

namespace comatch::cli {

namespace {

using json = nlohmann::json;

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("COMATCH_LOG");
    if (env == nullptr) return LogLevel::Info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[comatch] " << msg << "\n";
}

std::vector<PairExample> load_dataset(const std::string& path, const RunConfig& cfg) {
  std::vector<PairExample> data = read_jsonl(path, &cfg.synthetic);
  const std::size_t vocab = cfg.encoder.vocab_size;
  for (const PairExample& ex : data) {
    for (std::size_t id : ex.tokens_q)
      if (id >= vocab) throw ValueError(path + ": token id " + std::to_string(id) + " out of vocabulary");
    for (std::size_t id : ex.tokens_p)
      if (id >= vocab) throw ValueError(path + ": token id " + std::to_string(id) + " out of vocabulary");
    if (ex.label >= cfg.matcher.num_classes) {
      throw ValueError(path + ": label " + std::to_string(ex.label) + " out of range");
    }
  }
  return data;
}

json metrics_to_json(const Metrics& m) {
  json per_tag = json::object();
  for (const auto& [tag, stats] : m.per_tag) {
    per_tag[tag] = {{"total", stats.total}, {"correct", stats.correct},
                    {"accuracy", stats.accuracy()}};
  }
  return json{{"total", m.total},
              {"correct", m.correct},
              {"accuracy", m.accuracy()},
              {"per_tag", per_tag},
              {"confusion", m.confusion}};
}

void print_metrics(std::ostream& os, const Metrics& m) {
  os << "accuracy: " << m.accuracy() << " (" << m.correct << "/" << m.total << ")\n";
  os << "per-tag accuracy:\n";
  for (const auto& [tag, stats] : m.per_tag) {
    os << "  " << tag << ": " << stats.accuracy() << " (" << stats.correct << "/" << stats.total
       << ")\n";
  }
  os << "confusion (rows = true label, cols = predicted):\n";
  for (const auto& row : m.confusion) {
    os << " ";
    for (std::size_t v : row) os << " " << v;
    os << "\n";
  }
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream f(path);
  if (!f) throw ValueError("cannot open '" + path + "' for writing");
  f << doc.dump(2) << "\n";
}

// ---- gradcheck battery ----------------------------------------------------

Tensor random_tensor(Rng& rng, Shape s, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

struct ComponentReport {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t excluded = 0;
  std::size_t coords = 0;
};

using Owned = std::vector<std::pair<std::string, Tensor>>;
using BuildParams = std::function<Owned(Rng&)>;
using BuildFn =
    std::function<std::function<Tensor(Graph&, const std::vector<Tensor>&)>(const Owned&)>;

ComponentReport sweep_component(const std::string& name, int points, Rng& rng,
                                const BuildParams& build_params, const BuildFn& build_fn) {
  ComponentReport rep;
  rep.name = name;
  for (int p = 0; p < points; ++p) {
    Owned owned = build_params(rng);
    // Entries named cof* are fixed cofactors captured by the function, not
    // differentiated parameters.
    NamedParams named;
    for (auto& [pname, tensor] : owned) {
      if (pname.rfind("cof", 0) != 0) named.emplace_back(pname, &tensor);
    }
    GradCheckReport r = finite_diff_check(build_fn(owned), named);
    rep.max_rel_err = std::max(rep.max_rel_err, r.max_rel_err);
    rep.excluded += r.excluded.size();
    rep.coords += r.coords_checked;
  }
  return rep;
}

// mean(out * cofactor): generic incoming gradient for matrix-valued ops.
std::function<Tensor(Graph&, const std::vector<Tensor>&)> against_cofactor(
    const Tensor& cof, std::function<Tensor(Graph&, const std::vector<Tensor>&)> op) {
  return [cof, op](Graph& g, const std::vector<Tensor>& leaves) {
    return g.mean_all(g.mul(op(g, leaves), cof));
  };
}

std::vector<ComponentReport> run_op_battery(Rng& rng, const AttentionConfig& attn_cfg) {
  std::vector<ComponentReport> reports;
  const int points = 40;

  auto unary_component = [&](const std::string& name, Unary op, bool off_zero) {
    reports.push_back(sweep_component(
        name, points, rng,
        [off_zero](Rng& r) {
          Tensor x = random_tensor(r, {2, 3});
          if (off_zero) {
            for (std::size_t i = 0; i < x.size(); ++i)
              if (std::fabs(x.at(i)) < 5e-3) x.at(i) += 0.05;
          }
          Tensor cof = random_tensor(r, {2, 3});
          return Owned{{"x", x}, {"cof", cof}};
        },
        [op](const Owned& owned) {
          return against_cofactor(owned[1].second,
                                  [op](Graph& g, const std::vector<Tensor>& leaves) {
                                    return g.unary(op, leaves[0]);
                                  });
        }));
  };
  unary_component("tanh", Unary::Tanh, false);
  unary_component("sigmoid", Unary::Sigmoid, false);
  unary_component("arctan", Unary::Arctan, false);
  unary_component("relu", Unary::Relu, true);
  unary_component("abs", Unary::Abs, true);

  auto binary_component = [&](const std::string& name, Shape sx, Shape sy, Shape so,
                              std::function<Tensor(Graph&, const Tensor&, const Tensor&)> apply,
                              bool disjoint_ranges = false) {
    reports.push_back(sweep_component(
        name, points, rng,
        [=](Rng& r) {
          Tensor x = disjoint_ranges ? random_tensor(r, sx, 0.1, 2.0) : random_tensor(r, sx);
          Tensor y = disjoint_ranges ? random_tensor(r, sy, -2.0, -0.1) : random_tensor(r, sy);
          return Owned{{"x", x}, {"y", y}, {"cof", random_tensor(r, so)}};
        },
        [apply](const Owned& owned) {
          return against_cofactor(owned[2].second,
                                  [apply](Graph& g, const std::vector<Tensor>& leaves) {
                                    return apply(g, leaves[0], leaves[1]);
                                  });
        }));
  };
  binary_component("matmul", {3, 4}, {4, 2}, {3, 2},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.matmul(a, b); });
  binary_component("add", {2, 3}, {2, 3}, {2, 3},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.add(a, b); });
  binary_component("sub", {2, 3}, {2, 3}, {2, 3},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.sub(a, b); });
  binary_component("mul", {2, 3}, {2, 3}, {2, 3},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.mul(a, b); });
  binary_component("pairwise_l1", {3, 4}, {2, 4}, {3, 2},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.pairwise_l1(a, b); },
                   /*disjoint_ranges=*/true);
  binary_component("add_rowvec", {3, 4}, {4}, {3, 4},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.add_rowvec(a, b); });
  binary_component("sub_scalar", {3, 4}, {}, {3, 4},
                   [](Graph& g, const Tensor& a, const Tensor& b) { return g.sub_scalar(a, b); });

  auto simple_component = [&](const std::string& name, Shape sx, Shape so,
                              std::function<Tensor(Graph&, const Tensor&)> apply) {
    reports.push_back(sweep_component(
        name, points, rng,
        [=](Rng& r) {
          return Owned{{"x", random_tensor(r, sx)}, {"cof", random_tensor(r, so)}};
        },
        [apply](const Owned& owned) {
          return against_cofactor(owned[1].second,
                                  [apply](Graph& g, const std::vector<Tensor>& leaves) {
                                    return apply(g, leaves[0]);
                                  });
        }));
  };
  simple_component("scale", {2, 3}, {2, 3},
                   [](Graph& g, const Tensor& x) { return g.scale(x, -1.7); });
  simple_component("transpose", {2, 4}, {4, 2},
                   [](Graph& g, const Tensor& x) { return g.transpose(x); });
  simple_component("softmax_rows", {2, 4}, {2, 4},
                   [](Graph& g, const Tensor& x) { return g.softmax_rows(x); });
  simple_component("slice_cols", {3, 5}, {3, 2},
                   [](Graph& g, const Tensor& x) { return g.slice_cols(x, 1, 3); });
  simple_component("embed_rows", {5, 3}, {4, 3},
                   [](Graph& g, const Tensor& t) { return g.embed_rows(t, {0, 2, 2, 4}); });

  reports.push_back(sweep_component(
      "mean_all", points, rng,
      [](Rng& r) { return Owned{{"x", random_tensor(r, {3, 4})}}; },
      [](const Owned&) {
        return [](Graph& g, const std::vector<Tensor>& leaves) { return g.mean_all(leaves[0]); };
      }));

  reports.push_back(sweep_component(
      "concat_cols", points, rng,
      [](Rng& r) {
        return Owned{{"x", random_tensor(r, {3, 2})},
                     {"y", random_tensor(r, {3, 3})},
                     {"cof", random_tensor(r, {3, 5})}};
      },
      [](const Owned& owned) {
        return against_cofactor(owned[2].second, [](Graph& g, const std::vector<Tensor>& leaves) {
          return g.concat_cols({leaves[0], leaves[1]});
        });
      }));

  reports.push_back(sweep_component(
      "layer_norm", points, rng,
      [](Rng& r) {
        return Owned{{"x", random_tensor(r, {3, 4})},
                     {"gain", random_tensor(r, {4}, 0.5, 1.5)},
                     {"bias", random_tensor(r, {4})},
                     {"cof", random_tensor(r, {3, 4})}};
      },
      [](const Owned& owned) {
        return against_cofactor(owned[3].second, [](Graph& g, const std::vector<Tensor>& leaves) {
          return g.layer_norm(leaves[0], leaves[1], leaves[2]);
        });
      }));

  reports.push_back(sweep_component(
      "cross_entropy", points, rng,
      [](Rng& r) { return Owned{{"logits", random_tensor(r, {3})}}; },
      [](const Owned&) {
        return [](Graph& g, const std::vector<Tensor>& leaves) {
          return g.cross_entropy(leaves[0], 1);
        };
      }));

  // attention pipeline with the configured composition
  AttentionConfig pipeline_cfg = attn_cfg;
  pipeline_cfg.num_heads = 1;
  pipeline_cfg.d_model = pipeline_cfg.d_k = 6;
  reports.push_back(sweep_component(
      "attend", 10, rng,
      [](Rng& r) {
        return Owned{{"a", random_tensor(r, {3, 6})},   {"b", random_tensor(r, {4, 6})},
                     {"w_e", random_tensor(r, {6, 6}, -0.5, 0.5)},
                     {"w_n", random_tensor(r, {6, 6}, -0.5, 0.5)},
                     {"cof_a", random_tensor(r, {3, 6})}, {"cof_b", random_tensor(r, {4, 6})}};
      },
      [pipeline_cfg](const Owned& owned) {
        const Tensor cof_a = owned[4].second;
        const Tensor cof_b = owned[5].second;
        return [pipeline_cfg, cof_a, cof_b](Graph& g, const std::vector<Tensor>& leaves) {
          ProjectionSet proj{leaves[2], leaves[3], false};
          AttendResult res = attend(g, leaves[0], leaves[1], proj, pipeline_cfg);
          return g.add(g.mean_all(g.mul(res.a_hat, cof_a)), g.mean_all(g.mul(res.b_hat, cof_b)));
        };
      }));

  AttentionConfig heads_cfg = attn_cfg;
  heads_cfg.num_heads = 2;
  heads_cfg.d_model = 6;
  heads_cfg.d_k = 3;
  reports.push_back(sweep_component(
      "combined_heads", 10, rng,
      [](Rng& r) {
        Owned owned{{"x", random_tensor(r, {3, 6})}};
        for (int h = 0; h < 2; ++h) {
          owned.emplace_back("wq" + std::to_string(h), random_tensor(r, {6, 3}, -0.6, 0.6));
          owned.emplace_back("wk" + std::to_string(h), random_tensor(r, {6, 3}, -0.6, 0.6));
          owned.emplace_back("wv" + std::to_string(h), random_tensor(r, {6, 3}, -0.6, 0.6));
        }
        owned.emplace_back("wo", random_tensor(r, {6, 6}, -0.6, 0.6));
        owned.emplace_back("bo", random_tensor(r, {6}, -0.2, 0.2));
        owned.emplace_back("cof", random_tensor(r, {3, 6}));
        return owned;
      },
      [heads_cfg](const Owned& owned) {
        const Tensor cof = owned.back().second;
        return [heads_cfg, cof](Graph& g, const std::vector<Tensor>& leaves) {
          MultiHeadProjections proj;
          for (int h = 0; h < 2; ++h) {
            proj.q.push_back(Linear{leaves[1 + 3 * h], Tensor()});
            proj.k.push_back(Linear{leaves[2 + 3 * h], Tensor()});
            proj.v.push_back(Linear{leaves[3 + 3 * h], Tensor()});
          }
          proj.out = Linear{leaves[7], leaves[8]};
          Tensor out = combined_attention_heads(g, leaves[0], leaves[0], leaves[0], proj,
                                                heads_cfg);
          return g.mean_all(g.mul(out, cof));
        };
      }));

  return reports;
}

ComponentReport run_model_gradcheck(const RunConfig& cfg, std::uint64_t seed) {
  // 2-layer shrunken model keeping the configured attention composition and
  // matcher head; small enough that central differences stay cheap.
  SyntheticSpec spec;
  spec.content_words = 6;
  spec.number_words = 4;
  spec.antonym_pairs = 2;
  spec.filler_words = 4;
  spec.min_len = 4;
  spec.max_len = 5;
  spec.seed = seed;
  spec.num_examples = 1;

  EncoderConfig ecfg;
  ecfg.num_layers = 2;
  ecfg.d_model = 8;
  ecfg.d_ff = 16;
  ecfg.num_heads = 2;
  ecfg.replacement_schedule = {0.5, 0.5};
  ecfg.max_seq_len = 2 * spec.max_len + 3;
  ecfg.vocab_size = spec.vocab_size();
  ecfg.attention = cfg.encoder.attention;
  ecfg.attention = ecfg.effective_attention();

  MatcherConfig mcfg = cfg.matcher;

  Rng rng(seed);
  MatcherModel model = init_matcher(ecfg, mcfg, rng);
  PairExample ex = generate(spec)[0];

  NamedParams named;
  visit_params(model, [&](const std::string& name, Tensor& t) { named.emplace_back(name, &t); });
  auto f = [&](Graph& g, const std::vector<Tensor>& leaves) {
    MatcherParams bound = model.params;
    std::size_t i = 0;
    visit_params(bound, "model", [&](const std::string&, Tensor& t) { t = leaves[i++]; });
    Tensor logits = pair_logits(g, bound, model.encoder_cfg, model.matcher_cfg, ex);
    return g.cross_entropy(logits, ex.label);
  };
  GradCheckReport r = finite_diff_check(f, named);
  ComponentReport rep;
  rep.name = "full_model_2layer";
  rep.max_rel_err = r.max_rel_err;
  rep.excluded = r.excluded.size();
  rep.coords = r.coords_checked;
  return rep;
}

// ---- export helpers --------------------------------------------------------

json slice_to_json(const Tensor& m, const std::vector<std::size_t>& rows,
                   const std::vector<std::size_t>& cols) {
  json out = json::array();
  for (std::size_t i : rows) {
    json row = json::array();
    for (std::size_t j : cols) row.push_back(m.at(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::size_t> parse_token_list(const std::string& text, const SyntheticSpec& vocab) {
  std::vector<std::size_t> ids;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    try {
      ids.push_back(vocab.token_id(tok));
      continue;
    } catch (const ValueError&) {
    }
    try {
      const unsigned long v = std::stoul(tok);
      if (v >= vocab.vocab_size()) {
        throw ValueError("token id " + tok + " out of vocabulary");
      }
      ids.push_back(v);
    } catch (const std::invalid_argument&) {
      throw ValueError("unknown token '" + tok + "'");
    } catch (const std::out_of_range&) {
      throw ValueError("unknown token '" + tok + "'");
    }
  }
  return ids;
}

}  // namespace

int run_generate(const GenerateArgs& args) {
  RunConfig cfg = load_run_config(args.spec_path);
  if (args.seed) {
    cfg.synthetic.seed = *args.seed;
  }
  const std::vector<PairExample> data = generate(cfg.synthetic);
  write_jsonl(args.out_path, data);

  std::map<std::size_t, std::size_t> label_counts;
  std::map<std::string, std::size_t> tag_counts;
  for (const PairExample& ex : data) {
    ++label_counts[ex.label];
    ++tag_counts[ex.tag];
  }
  std::cout << "wrote " << data.size() << " examples to " << args.out_path << "\n";
  std::cout << "labels:";
  for (const auto& [label, count] : label_counts) std::cout << " " << label << "=" << count;
  std::cout << "\ntags:";
  for (const auto& [tag, count] : tag_counts) std::cout << " " << tag << "=" << count;
  std::cout << "\n";
  return kOk;
}

int run_train(const TrainArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (args.seed) {
    cfg.training.seed = *args.seed;
  }
  const std::vector<PairExample> data = load_dataset(args.data_path, cfg);
  std::vector<PairExample> train_set, dev_set;
  split_dataset(data, cfg.training.dev_fraction, cfg.training.seed, train_set, dev_set);
  if (dev_set.empty() && !train_set.empty()) {
    // keep at least one dev example so best-checkpoint selection is defined
    dev_set.push_back(train_set.back());
    train_set.pop_back();
  }
  log_info("training on " + std::to_string(train_set.size()) + " examples, dev " +
           std::to_string(dev_set.size()));

  Rng rng(cfg.training.seed);
  MatcherModel model = init_matcher(cfg.encoder, cfg.matcher, rng);
  const TrainReport report = train(model, train_set, dev_set, cfg.training);

  std::filesystem::create_directories(args.out_dir);
  const std::string ckpt_path = args.out_dir + "/checkpoint.json";
  save_checkpoint(ckpt_path, cfg, model);

  json doc;
  doc["format"] = "comatch-report";
  doc["version"] = 1;
  doc["config"] = run_config_to_json(cfg);
  doc["train"] = {{"epoch_loss", report.epoch_loss},
                  {"dev_accuracy", report.dev_accuracy},
                  {"step_loss", report.step_loss},
                  {"best_epoch", report.best_epoch},
                  {"best_dev_accuracy", report.best_dev_accuracy},
                  {"steps", report.steps}};
  write_json_file(args.out_dir + "/report.json", doc);

  std::cout << "best dev accuracy " << report.best_dev_accuracy << " at epoch "
            << report.best_epoch << " (" << report.steps << " steps)\n";
  std::cout << "checkpoint: " << ckpt_path << "\n";
  return kOk;
}

int run_eval(const EvalArgs& args) {
  RunConfig cfg;
  MatcherModel model = load_checkpoint(args.checkpoint_path, &cfg);
  const std::vector<PairExample> data = load_dataset(args.data_path, cfg);
  const Metrics metrics = evaluate(model, data);
  print_metrics(std::cout, metrics);

  json doc = metrics_to_json(metrics);
  if (!args.compare_path.empty()) {
    RunConfig cmp_cfg;
    MatcherModel cmp_model = load_checkpoint(args.compare_path, &cmp_cfg);
    const Metrics cmp = evaluate(cmp_model, data);
    std::cout << "\ncompare checkpoint: " << args.compare_path << "\n";
    print_metrics(std::cout, cmp);
    std::cout << "\nper-tag delta (primary - compare):\n";
    json deltas = json::object();
    for (const auto& [tag, stats] : metrics.per_tag) {
      const auto it = cmp.per_tag.find(tag);
      const double other = it == cmp.per_tag.end() ? 0.0 : it->second.accuracy();
      const double delta = stats.accuracy() - other;
      std::cout << "  " << tag << ": " << delta << "\n";
      deltas[tag] = delta;
    }
    doc["compare"] = metrics_to_json(cmp);
    doc["per_tag_delta"] = deltas;
  }
  if (!args.json_out.empty()) write_json_file(args.json_out, doc);
  return kOk;
}

int run_gradcheck(const GradcheckArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = load_run_config(args.config_path);
  } else {
    cfg.finalize();
  }
  const std::uint64_t seed = args.seed ? *args.seed : cfg.training.seed;
  Rng rng(seed);

  std::vector<ComponentReport> reports = run_op_battery(rng, cfg.encoder.attention);
  reports.push_back(run_model_gradcheck(cfg, seed));

  const double tol = 1e-4;
  bool all_pass = true;
  for (const ComponentReport& rep : reports) {
    const bool pass = rep.max_rel_err < tol;
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << rep.name << ": max_rel_err=" << rep.max_rel_err
              << " coords=" << rep.coords;
    if (rep.excluded > 0) std::cout << " excluded=" << rep.excluded;
    std::cout << "\n";
  }
  std::cout << (all_pass ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << tol
            << ", eps 1e-5)\n";
  return all_pass ? kOk : kCheckFailed;
}

int run_ablate(const AblateArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (args.seed) {
    cfg.training.seed = *args.seed;
  }
  const std::vector<PairExample> data = load_dataset(args.data_path, cfg);

  // 80/10/10 shards, fixed once; every variant sees the same bytes.
  std::vector<PairExample> rest, test_set, train_set, dev_set;
  split_dataset(data, 0.1, cfg.training.seed + 1, rest, test_set);
  const double dev_frac = rest.empty() ? 0.0 : static_cast<double>(data.size()) * 0.1 /
                                                   static_cast<double>(rest.size());
  split_dataset(rest, dev_frac, cfg.training.seed + 2, train_set, dev_set);
  log_info("ablation shards: train " + std::to_string(train_set.size()) + ", dev " +
           std::to_string(dev_set.size()) + ", test " + std::to_string(test_set.size()));

  const AblationResult result =
      run_ablation(cfg.encoder, cfg.matcher, cfg.training, train_set, dev_set, test_set);

  json doc;
  doc["format"] = "comatch-ablation";
  doc["version"] = 1;
  doc["config"] = run_config_to_json(cfg);
  doc["rows"] = json::array();
  for (const AblationRow& row : result.rows) {
    doc["rows"].push_back({{"name", row.name},
                           {"dev_accuracy", row.dev_accuracy},
                           {"test_accuracy", row.test_accuracy}});
  }
  write_json_file(args.out_path, doc);

  std::cout << "variant                  dev      test\n";
  for (const AblationRow& row : result.rows) {
    std::cout << row.name;
    for (std::size_t i = row.name.size(); i < 25; ++i) std::cout << ' ';
    std::cout << row.dev_accuracy << "  " << row.test_accuracy << "\n";
  }
  std::cout << "table: " << args.out_path << "\n";
  return kOk;
}

int run_export_attention(const ExportAttentionArgs& args) {
  RunConfig cfg;
  MatcherModel model = load_checkpoint(args.checkpoint_path, &cfg);

  const std::size_t sep = args.pair.find('|');
  if (sep == std::string::npos) {
    throw UsageError("--pair must be two token lists separated by '|'");
  }
  PairExample ex;
  ex.tokens_q = parse_token_list(args.pair.substr(0, sep), cfg.synthetic);
  ex.tokens_p = parse_token_list(args.pair.substr(sep + 1), cfg.synthetic);
  if (ex.tokens_q.empty() || ex.tokens_p.empty()) {
    throw UsageError("--pair needs at least one token on each side");
  }

  const EncoderConfig& ecfg = model.encoder_cfg;
  if (args.layer >= ecfg.num_layers) {
    throw UsageError("layer " + std::to_string(args.layer) + " out of range (valid: 0.." +
                     std::to_string(ecfg.num_layers - 1) + ")");
  }
  if (args.head >= ecfg.num_heads) {
    throw UsageError("head " + std::to_string(args.head) + " out of range (valid: 0.." +
                     std::to_string(ecfg.num_heads - 1) + ")");
  }

  CombinedAttentionTrace trace;
  std::vector<std::size_t> rows, cols;
  if (model.matcher_cfg.encoding == EncodingMode::Cross) {
    const std::size_t n_combined = ecfg.combined_heads_at(args.layer);
    if (args.head >= n_combined) {
      throw UsageError(
          "head " + std::to_string(args.head) + " in layer " + std::to_string(args.layer) +
          " runs softmax attention and has no difference matrix" +
          (n_combined == 0 ? std::string(" (no combined heads in this layer)")
                           : " (combined heads: 0.." + std::to_string(n_combined - 1) + ")"));
    }
    PairTraces traces;
    classify(model, ex, &traces);
    trace = *traces.encoder.layers.at(args.layer).at(args.head);
    rows = traces.q_positions;
    cols = traces.p_positions;
  } else {
    // Siamese checkpoints expose the single standalone cross-attention trace.
    if (args.layer != 0 || args.head != 0) {
      throw UsageError(
          "siamese checkpoints have one cross-attention trace; use --layer 0 --head 0");
    }
    PairTraces traces;
    classify(model, ex, &traces);
    trace = *traces.attend;
    rows = traces.q_positions;
    cols = traces.p_positions;
  }

  json doc;
  json tokens_q = json::array(), tokens_p = json::array();
  for (std::size_t id : ex.tokens_q) tokens_q.push_back(cfg.synthetic.token_name(id));
  for (std::size_t id : ex.tokens_p) tokens_p.push_back(cfg.synthetic.token_name(id));
  doc["tokens_q"] = std::move(tokens_q);
  doc["tokens_p"] = std::move(tokens_p);
  doc["affinity"] = slice_to_json(trace.affinity, rows, cols);
  doc["difference"] = slice_to_json(trace.difference_norm, rows, cols);
  doc["combined"] = slice_to_json(trace.combined, rows, cols);
  doc["meta"] = {{"layer", args.layer},
                 {"head", args.head},
                 {"f_e", squash_name(ecfg.attention.f_e)},
                 {"f_n", squash_name(ecfg.attention.f_n)},
                 {"variant", variant_name(ecfg.attention.variant)},
                 {"alpha", ecfg.attention.alpha},
                 {"beta", ecfg.attention.beta}};
  write_json_file(args.out_path, doc);
  std::cout << "wrote " << ex.tokens_q.size() << "x" << ex.tokens_p.size()
            << " attention matrices to " << args.out_path << "\n";
  return kOk;
}

int main(int argc, char** argv) {
  CLI::App app{"combined-attention sentence matching toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  std::uint64_t seed_val = 0;
  auto* cmd_gen = app.add_subcommand("generate", "generate a synthetic pair dataset");
  cmd_gen->add_option("--spec", gen.spec_path, "run config JSON")->required();
  cmd_gen->add_option("--out", gen.out_path, "output JSONL path")->required();
  auto* gen_seed = cmd_gen->add_option("--seed", seed_val, "override synthetic.seed");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train a matcher and write checkpoint + report");
  cmd_train->add_option("--config", tr.config_path, "run config JSON")->required();
  cmd_train->add_option("--data", tr.data_path, "training dataset JSONL")->required();
  cmd_train->add_option("--out", tr.out_dir, "output directory")->required();
  auto* train_seed = cmd_train->add_option("--seed", seed_val, "override training.seed");

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint with per-tag breakdown");
  cmd_eval->add_option("--checkpoint", ev.checkpoint_path, "checkpoint JSON")->required();
  cmd_eval->add_option("--data", ev.data_path, "dataset JSONL")->required();
  cmd_eval->add_option("--json", ev.json_out, "write metrics JSON here");
  cmd_eval->add_option("--compare", ev.compare_path, "second checkpoint for per-tag deltas");

  GradcheckArgs gc;
  auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference check of every op + model");
  cmd_gc->add_option("--config", gc.config_path, "run config JSON (optional)");
  auto* gc_seed = cmd_gc->add_option("--seed", seed_val, "randomization seed");

  AblateArgs ab;
  auto* cmd_ab = app.add_subcommand("ablate", "train all composition variants plus baseline");
  cmd_ab->add_option("--config", ab.config_path, "run config JSON")->required();
  cmd_ab->add_option("--data", ab.data_path, "dataset JSONL")->required();
  cmd_ab->add_option("--out", ab.out_path, "output table JSON")->required();
  auto* ab_seed = cmd_ab->add_option("--seed", seed_val, "override training.seed");

  ExportAttentionArgs ex;
  auto* cmd_ex = app.add_subcommand("export-attention",
                                    "export affinity/difference/combined matrices for one head");
  cmd_ex->add_option("--checkpoint", ex.checkpoint_path, "checkpoint JSON")->required();
  cmd_ex->add_option("--pair", ex.pair, "token lists 'q tokens|p tokens'")->required();
  cmd_ex->add_option("--layer", ex.layer, "encoder layer index")->required();
  cmd_ex->add_option("--head", ex.head, "attention head index")->required();
  cmd_ex->add_option("--out", ex.out_path, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (cmd_gen->parsed()) {
      if (gen_seed->count() > 0) gen.seed = seed_val;
      return run_generate(gen);
    }
    if (cmd_train->parsed()) {
      if (train_seed->count() > 0) tr.seed = seed_val;
      return run_train(tr);
    }
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_gc->parsed()) {
      if (gc_seed->count() > 0) gc.seed = seed_val;
      return run_gradcheck(gc);
    }
    if (cmd_ab->parsed()) {
      if (ab_seed->count() > 0) ab.seed = seed_val;
      return run_ablate(ab);
    }
    if (cmd_ex->parsed()) return run_export_attention(ex);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace comatch::cli
