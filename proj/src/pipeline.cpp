// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "newsrec/error.hpp"

namespace newsrec {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

fs::path require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  return p;
}

void append_malformed(const std::string& file, const std::vector<MalformedLine>& bad,
                      std::vector<std::string>* issues) {
  if (!issues) return;
  for (const auto& m : bad) issues->push_back(file + ":" + std::to_string(m.line) + ": " + m.reason);
}

void load_pair(Dataset& ds, const fs::path& news, const fs::path& behaviors, const std::string& market,
               std::vector<std::string>* issues) {
  auto n = parse_news_tsv(news.string(), market);
  auto b = parse_behaviors_tsv(behaviors.string(), market);
  append_malformed(news.string(), n.malformed, issues);
  append_malformed(behaviors.string(), b.malformed, issues);
  const fs::path topics = news.parent_path() / "topics.tsv";
  if (fs::is_regular_file(topics)) apply_topics_tsv(read_text_file(topics.string()), n.items);
  for (auto& a : n.items) ds.news.push_back(std::move(a));
  for (auto& i : b.items) ds.impressions.push_back(std::move(i));
}

void filter_markets(Dataset& ds, const std::vector<std::string>& keep) {
  const std::set<std::string> wanted(keep.begin(), keep.end());
  const auto present = ds.markets();
  for (const auto& m : wanted) {
    if (std::find(present.begin(), present.end(), m) == present.end()) {
      throw ConfigError("dataset.use_markets names unknown market '" + m + "'");
    }
  }
  std::erase_if(ds.news, [&](const NewsArticle& a) { return !wanted.count(a.market); });
  std::erase_if(ds.impressions, [&](const Impression& i) { return !wanted.count(i.market); });
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

NamedTensors snapshot(const ParameterStore& store) {
  NamedTensors out;
  for (const auto& p : store) out.emplace_back(p.name, p.value);
  return out;
}

void write_config(const fs::path& out, const RunConfig& config) {
  write_text_file((out / "config.json").string(), config.source_json + "\n");
}

struct LoadedCheckpoint {
  RecModel model;
  Vocabulary vocab;
  UserIndex users;
};

LoadedCheckpoint load_trained(const std::string& dir) {
  const fs::path d(dir);
  require_file(d / "model" / "model.nrt", "checkpoint");
  LoadedCheckpoint c;
  c.model = RecModel::load((d / "model").string());
  c.vocab = Vocabulary::load(require_file(d / "vocab.txt", "vocabulary").string());
  c.users = UserIndex::deserialize(read_text_file(require_file(d / "users.txt", "user index").string()));
  if (c.model.spec().vocab_size != c.vocab.size()) {
    throw ConfigError("checkpoint vocabulary size does not match its vocab.txt");
  }
  return c;
}

void check_matches_config(const ModelSpec& loaded, const RunConfig& config) {
  if (loaded.news.kind != config.news.kind || loaded.user.kind != config.user.kind ||
      loaded.news.d_model != config.news.d_model) {
    throw ConfigError("checkpoint encoders differ from the config's model section");
  }
}

}  // namespace

Dataset load_dataset(const DatasetConfig& config, std::vector<std::string>* issues) {
  Dataset ds;
  if (config.synthetic) {
    ds = generate_synthetic(*config.synthetic);
  } else if (!config.news_tsv.empty()) {
    load_pair(ds, require_file(config.news_tsv, "news file"),
              require_file(config.behaviors_tsv, "behaviors file"), "", issues);
  } else if (!config.dir.empty()) {
    const fs::path root(config.dir);
    if (!fs::is_directory(root)) throw ConfigError("dataset directory not found: " + config.dir);
    if (fs::is_regular_file(root / "news.tsv")) {
      load_pair(ds, root / "news.tsv", require_file(root / "behaviors.tsv", "behaviors file"), "", issues);
    } else {
      std::vector<fs::path> markets;
      for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && fs::is_regular_file(e.path() / "news.tsv")) markets.push_back(e.path());
      }
      std::sort(markets.begin(), markets.end());
      if (markets.empty()) throw ConfigError("no news.tsv under " + config.dir);
      for (const auto& m : markets) {
        load_pair(ds, m / "news.tsv", require_file(m / "behaviors.tsv", "behaviors file"),
                  m.filename().string(), issues);
      }
    }
  } else {
    throw ConfigError("config has no dataset section source (synthetic, dir or news_tsv)");
  }
  if (!config.use_markets.empty()) filter_markets(ds, config.use_markets);
  ds.rebuild_index();
  return ds;
}

std::span<const std::size_t> Workspace::impressions(const std::string& split_name) const {
  if (split_name == "train") return split.train;
  if (split_name == "valid") return split.valid;
  if (split_name == "test") return split.test;
  throw ConfigError("unknown split '" + split_name + "'");
}

Workspace prepare_workspace(const RunConfig& config, const Vocabulary* vocab, const UserIndex* users) {
  Workspace ws;
  Dataset ds = load_dataset(config.dataset, &ws.issues);
  for (auto& s : ds.validate_references()) ws.issues.push_back(std::move(s));
  if (ds.impressions.empty()) throw DataError("dataset has no usable impressions");
  ws.split = split_dataset(ds.impressions, config.dataset.split);
  Vocabulary v = vocab ? *vocab : build_title_vocabulary(ds, config.text.min_count, config.text.max_vocab);
  UserIndex u = users ? *users : build_user_index(ds, ws.split.train);
  ws.data = prepare_data(std::move(ds), std::move(v), std::move(u), config.text.max_title_len);
  return ws;
}

ModelSpec model_spec(const RunConfig& config, const RecData& data) {
  ModelSpec spec;
  spec.news = config.news;
  spec.user = config.user;
  spec.user.d_model = config.news.d_model;
  spec.user.user_table_size = data.users.table_size();
  spec.vocab_size = data.vocab.size();
  spec.max_title_len = data.max_title_len;
  spec.validate();
  return spec;
}

std::string dataset_summary(const Dataset& ds) {
  struct Counts {
    std::set<std::string> users;
    std::size_t news = 0, impressions = 0, clicks = 0;
  };
  std::map<std::string, Counts> by_market;
  Counts total;
  for (const auto& a : ds.news) {
    ++by_market[a.market].news;
    ++total.news;
  }
  for (const auto& i : ds.impressions) {
    auto& c = by_market[i.market];
    c.users.insert(i.user_id);
    total.users.insert(i.market + "\t" + i.user_id);
    ++c.impressions;
    ++total.impressions;
    for (const auto& [id, label] : i.candidates) {
      c.clicks += label;
      total.clicks += label;
    }
  }
  std::vector<std::pair<std::string, const Counts*>> cols;
  for (const auto& [m, c] : by_market) cols.emplace_back(m.empty() ? "dataset" : m, &c);
  if (cols.size() > 1) cols.emplace_back("Total", &total);

  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-18s", "");
  os << buf;
  for (const auto& [name, c] : cols) {
    std::snprintf(buf, sizeof buf, " %12s", name.c_str());
    os << buf;
  }
  os << '\n';
  auto row = [&](const char* label, auto get) {
    std::snprintf(buf, sizeof buf, "%-18s", label);
    os << buf;
    for (const auto& [name, c] : cols) {
      std::snprintf(buf, sizeof buf, " %12zu", static_cast<std::size_t>(get(*c)));
      os << buf;
    }
    os << '\n';
  };
  row("# Users", [](const Counts& c) { return c.users.size(); });
  row("# News", [](const Counts& c) { return c.news; });
  row("# Impressions", [](const Counts& c) { return c.impressions; });
  row("# Click Behaviors", [](const Counts& c) { return c.clicks; });
  return os.str();
}

bool TrainedRun::frozen_ok() const {
  return std::all_of(frozen.begin(), frozen.end(), [](const FrozenCheck& f) { return f.identical; });
}

std::vector<FrozenCheck> check_frozen(const ParameterStore& store, const NamedTensors& reference) {
  std::map<std::string, const Tensor*> ref;
  for (const auto& [name, t] : reference) ref[name] = &t;
  std::vector<FrozenCheck> out;
  for (const auto& p : store) {
    if (p.trainable) continue;
    FrozenCheck f{p.name, false};
    auto it = ref.find(p.name);
    if (it != ref.end() && it->second->shape() == p.value.shape()) {
      f.identical = std::memcmp(it->second->data(), p.value.data(), p.value.size() * sizeof(double)) == 0;
    }
    out.push_back(std::move(f));
  }
  return out;
}

PretrainedEncoder run_pretraining(const RunConfig& config, const RecData& data, std::ostream* log) {
  if (config.news.kind != NewsEncoderKind::kMiniPlm) {
    throw ConfigError("pretraining needs model.news_encoder.kind = MINI_PLM");
  }
  PretrainedEncoder enc{MlmModel(config.news, data.vocab.size(), data.max_title_len, config.seed), {}};
  MlmConfig mc;
  mc.learning_rate = config.train.pretrain_learning_rate;
  mc.batch_size = config.train.pretrain_batch_size;
  mc.epochs = config.train.pretrain_epochs;
  mc.mask_rate = config.train.train.mlm_rate;
  mc.seed = mix(config.seed, 3);
  enc.losses = mlm_pretrain(enc.model, data.titles, mc, [&](std::size_t e, double loss) {
    if (log) *log << "mlm epoch " << e << " loss " << fixed6(loss) << '\n' << std::flush;
  });
  return enc;
}

TrainedRun run_training(const RunConfig& config, const Workspace& ws,
                        const std::string& pretrained_checkpoint, const EpochCallback& on_epoch,
                        std::ostream* log) {
  const ModelSpec spec = model_spec(config, ws.data);
  TrainedRun run{RecModel(spec, config.seed), {}, {}, {}};
  NamedTensors reference;
  const bool pretrained = !pretrained_checkpoint.empty() || config.train.init == InitMode::kPretrained;
  if (pretrained && spec.news.kind != NewsEncoderKind::kMiniPlm) {
    throw ConfigError("a pretrained start needs a MINI_PLM news encoder");
  }
  if (!pretrained_checkpoint.empty()) {
    reference = read_checkpoint(pretrained_checkpoint);
    const std::size_t n = load_checkpoint_into(pretrained_checkpoint, run.model.params(), false);
    if (n == 0) throw ConfigError("pretrained checkpoint shares no parameters with the model");
  } else if (pretrained) {
    auto enc = run_pretraining(config, ws.data, log);
    run.mlm_losses = std::move(enc.losses);
    copy_matching_parameters(enc.model.params(), run.model.params());
    reference = snapshot(enc.model.params());
  }
  if (pretrained) run.model.apply_finetune_policy();

  const auto& tc = config.train.train;
  const SampleSet train_samples = build_training_samples(ws.data, ws.split.train, tc.negatives, mix(config.seed, 1));
  const SampleSet valid_samples = build_training_samples(ws.data, ws.split.valid, tc.negatives, mix(config.seed, 2));
  if (train_samples.samples.empty()) throw DataError("training split has no usable clicks");
  run.result = train(run.model, ws.data, train_samples, valid_samples, ws.split.valid, tc,
                     [&](const EpochStats& e) {
                       if (log) {
                         *log << "epoch " << e.epoch << " train_loss " << fixed6(e.train_loss)
                              << " valid_loss " << fixed6(e.valid_loss) << " valid_auc "
                              << fixed6(e.valid_auc) << '\n'
                              << std::flush;
                       }
                       if (on_epoch) on_epoch(e);
                     });
  if (pretrained) run.frozen = check_frozen(run.model.params(), reference);
  return run;
}

std::string dataset_id(const RunConfig& config) {
  auto j = ojson::parse(config.source_json);
  return "dataset-" + fnv_hex(j["dataset"].dump());
}

PublishedResult published_reference(const ModelSpec& spec) {
  // Published MIND results: base encoder, then the BERT-empowered variant.
  struct Pair {
    PublishedResult base, bert;
  };
  static const std::map<UserEncoderKind, Pair> table = {
      {UserEncoderKind::kGru, {{"EBNR", 66.54, 32.43, 35.38, 40.09}, {"EBNR-BERT", 69.56, 34.77, 38.04, 43.72}}},
      {UserEncoderKind::kAdditiveAttention,
       {{"NAML", 67.78, 33.24, 36.19, 41.95}, {"NAML-BERT", 69.42, 34.66, 37.91, 43.65}}},
      {UserEncoderKind::kNpa, {{"NPA", 67.87, 33.20, 36.26, 42.03}, {"NPA-BERT", 69.50, 34.72, 37.96, 43.72}}},
      {UserEncoderKind::kLstur,
       {{"LSTUR", 68.04, 33.31, 36.28, 42.10}, {"LSTUR-BERT", 69.49, 34.72, 37.97, 43.70}}},
      {UserEncoderKind::kNrms, {{"NRMS", 68.18, 33.29, 36.31, 42.20}, {"NRMS-BERT", 69.50, 34.75, 37.99, 43.72}}},
  };
  const auto& p = table.at(spec.user.kind);
  return spec.news.kind == NewsEncoderKind::kMiniPlm ? p.bert : p.base;
}

CompareTable run_compare(const RunConfig& config, std::ostream* log) {
  CompareTable table;
  table.axis = compare_axis(config.compare);
  std::vector<std::uint64_t> seeds = config.compare.seeds;
  if (seeds.empty()) seeds.push_back(config.seed);
  std::string pointer = "/" + table.axis;
  std::replace(pointer.begin(), pointer.end(), '.', '/');

  for (const auto& variant : config.compare.variants) {
    const RunConfig base = apply_variant(config, variant);
    const Workspace ws = prepare_workspace(base);
    const ModelSpec spec = model_spec(base, ws.data);
    CompareRow row;
    row.variant = variant.name;
    const auto value = ojson::parse(variant.overrides).at(ojson::json_pointer(pointer));
    row.value = value.is_string() ? value.get<std::string>() : value.dump();
    row.param_count = param_count(spec);
    row.seeds = seeds.size();
    row.reference = published_reference(spec);
    std::vector<double> auc, mrr_v, n5, n10;
    for (std::uint64_t s : seeds) {
      const RunConfig rc = base.with_seed(s);
      auto run = run_training(rc, ws, "", {}, nullptr);
      auto rep = evaluate(run.model, ws.data, ws.impressions(rc.eval.split));
      auc.push_back(rep.mean_auc);
      mrr_v.push_back(rep.mean_mrr);
      n5.push_back(rep.mean_ndcg5);
      n10.push_back(rep.mean_ndcg10);
      if (log) {
        *log << variant.name << " seed " << s << " auc " << fixed6(rep.mean_auc) << '\n'
             << std::flush;
      }
    }
    row.auc = summarize(auc);
    row.mrr = summarize(mrr_v);
    row.ndcg5 = summarize(n5);
    row.ndcg10 = summarize(n10);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string CompareTable::csv() const {
  std::ostringstream os;
  os << "variant," << axis
     << ",param_count,seeds,auc_mean,auc_std,mrr_mean,mrr_std,ndcg5_mean,ndcg5_std,ndcg10_mean,"
        "ndcg10_std,reference_method,reference_auc,reference_mrr,reference_ndcg5,reference_ndcg10,"
        "reference_note\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.value << ',' << r.param_count << ',' << r.seeds;
    for (const auto* m : {&r.auc, &r.mrr, &r.ndcg5, &r.ndcg10}) {
      os << ',' << format_double(m->mean) << ',' << format_double(m->std);
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, ",%s,%.2f,%.2f,%.2f,%.2f", r.reference.method.c_str(), r.reference.auc,
                  r.reference.mrr, r.reference.ndcg5, r.reference.ndcg10);
    os << buf << ",published reference not reproducible at desk scale\n";
  }
  return os.str();
}

std::string CompareTable::text() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-12s %10s  %-17s %-17s %-17s %-17s | %-12s %6s\n", "variant",
                axis.substr(axis.rfind('.') + 1).c_str(), "params", "AUC", "MRR", "nDCG@5", "nDCG@10",
                "reference*", "AUC");
  os << buf;
  for (const auto& r : rows) {
    auto pm = [](const MetricSummary& m) {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f+-%.4f", m.mean, m.std);
      return std::string(b);
    };
    std::snprintf(buf, sizeof buf, "%-16s %-12s %10zu  %-17s %-17s %-17s %-17s | %-12s %6.2f\n",
                  r.variant.c_str(), r.value.c_str(), r.param_count, pm(r.auc).c_str(), pm(r.mrr).c_str(),
                  pm(r.ndcg5).c_str(), pm(r.ndcg10).c_str(), r.reference.method.c_str(), r.reference.auc);
    os << buf;
  }
  const std::size_t seeds = rows.empty() ? 0 : rows.front().seeds;
  os << "mean+-std over " << seeds << " seed(s).\n"
     << "* published MIND numbers in percent, for orientation only; not reproducible at desk scale.\n";
  return os.str();
}

void cmd_gen_data(const RunConfig& config, const std::string& out_dir, std::ostream& log) {
  if (!config.dataset.synthetic) throw ConfigError("gen-data needs a dataset.synthetic section");
  const fs::path out(out_dir);
  ensure_dir(out);
  write_config(out, config);
  Dataset ds = generate_synthetic(*config.dataset.synthetic);
  const auto markets = ds.markets();
  for (const auto& m : markets) {
    const fs::path dir = markets.size() > 1 ? out / m : out;
    ensure_dir(dir);
    std::vector<NewsArticle> news;
    std::vector<Impression> imps;
    for (const auto& a : ds.news) {
      if (a.market == m) news.push_back(a);
    }
    for (const auto& i : ds.impressions) {
      if (i.market == m) imps.push_back(i);
    }
    write_text_file((dir / "news.tsv").string(), format_news_tsv(news));
    write_text_file((dir / "behaviors.tsv").string(), format_behaviors_tsv(imps));
    write_text_file((dir / "topics.tsv").string(), format_topics_tsv(news));
  }
  const std::string summary = dataset_summary(ds);
  write_text_file((out / "summary.txt").string(), summary);
  log << summary;
  write_manifest(out_dir, "gen-data", config);
}

void cmd_pretrain(const RunConfig& config, const std::string& out_dir, std::ostream& log) {
  if (config.news.kind != NewsEncoderKind::kMiniPlm) {
    throw ConfigError("pretrain needs model.news_encoder.kind = MINI_PLM");
  }
  const Workspace ws = prepare_workspace(config);
  const fs::path out(out_dir);
  ensure_dir(out / "pretrained");
  write_config(out, config);
  const auto& n = config.news;
  log << "encoder " << to_string(n.kind) << " d_model " << n.d_model << " depth " << n.depth << " heads "
      << n.num_heads << " vocab " << ws.data.vocab.size() << " param_count "
      << param_count(n, ws.data.vocab.size(), ws.data.max_title_len) << '\n';
  log << "corpus " << ws.data.titles.size() << " titles\n" << std::flush;
  auto enc = run_pretraining(config, ws.data, &log);
  save_checkpoint((out / "pretrained" / "model.nrt").string(), enc.model.params());
  ws.data.vocab.save((out / "pretrained" / "vocab.txt").string());
  write_text_file((out / "mlm_loss.csv").string(), mlm_loss_csv(enc.losses));
  if (!enc.losses.empty()) log << "final mlm loss " << fixed6(enc.losses.back()) << '\n';
  write_manifest(out_dir, "pretrain", config);
}

void cmd_train(const RunConfig& config_in, const std::string& out_dir, const TrainOptions& options,
               std::ostream& log) {
  if (options.force_scratch && !options.pretrained_dir.empty()) {
    throw ConfigError("--scratch and --from-pretrained are mutually exclusive");
  }
  RunConfig config = config_in;
  if (options.force_scratch) config.train.init = InitMode::kScratch;
  std::string checkpoint;
  std::optional<Vocabulary> vocab;
  if (!options.pretrained_dir.empty()) {
    // Either the pretrain output directory or its pretrained/ subdirectory.
    fs::path dir(options.pretrained_dir);
    if (!fs::exists(dir / "model.nrt") && fs::exists(dir / "pretrained" / "model.nrt")) dir /= "pretrained";
    checkpoint = require_file(dir / "model.nrt", "pretrained checkpoint").string();
    vocab = Vocabulary::load(require_file(dir / "vocab.txt", "pretrained vocabulary").string());
    config.train.init = InitMode::kPretrained;
  }
  const Workspace ws = prepare_workspace(config, vocab ? &*vocab : nullptr);
  for (const auto& issue : ws.issues) log << "data: " << issue << '\n';
  const fs::path out(out_dir);
  ensure_dir(out);
  write_config(out, config);
  const ModelSpec spec = model_spec(config, ws.data);
  log << "model " << to_string(spec.news.kind) << " + " << to_string(spec.user.kind) << " params "
      << param_count(spec) << " init " << to_string(config.train.init) << '\n'
      << "impressions train " << ws.split.train.size() << " valid " << ws.split.valid.size() << " test "
      << ws.split.test.size() << '\n'
      << std::flush;

  auto run = run_training(config, ws, checkpoint, {}, &log);
  run.model.save((out / "model").string());
  ws.data.vocab.save((out / "vocab.txt").string());
  write_text_file((out / "users.txt").string(), ws.data.users.serialize());
  write_text_file((out / "loss.csv").string(), loss_csv(run.result));
  if (!run.mlm_losses.empty()) write_text_file((out / "mlm_loss.csv").string(), mlm_loss_csv(run.mlm_losses));
  if (!run.frozen.empty()) {
    std::string report = "parameter\tstatus\n";
    for (const auto& f : run.frozen) report += f.name + "\t" + (f.identical ? "identical" : "CHANGED") + "\n";
    write_text_file((out / "frozen_check.tsv").string(), report);
    log << "frozen-layer check: " << run.frozen.size() << " frozen tensors, "
        << (run.frozen_ok() ? "all bitwise identical to the pretrained checkpoint" : "MISMATCH") << '\n';
  }
  write_manifest(out_dir, "train", config);
  if (!run.frozen_ok()) throw ContractError("frozen parameters changed during finetuning");
}

void cmd_evaluate(const RunConfig& config, const std::string& out_dir, const EvaluateOptions& options,
                  std::ostream& log) {
  std::optional<LoadedCheckpoint> ckpt;
  if (!options.checkpoint_dir.empty()) ckpt = load_trained(options.checkpoint_dir);
  const Workspace ws = ckpt ? prepare_workspace(config, &ckpt->vocab, &ckpt->users) : prepare_workspace(config);
  const auto idx = ws.impressions(config.eval.split);
  ReportMetadata meta{"", config.seed, dataset_id(config)};
  std::vector<ScoredImpression> scored;
  if (options.oracle_scorer) {
    meta.spec_hash = "oracle";
    scored = oracle_scores(ws.data, idx);
    log << "scorer: oracle (scores = labels)\n";
  } else if (ckpt) {
    check_matches_config(ckpt->model.spec(), config);
    meta.spec_hash = ckpt->model.spec().hash();
    scored = score_impressions(ckpt->model, ws.data, idx);
    log << "scorer: checkpoint " << options.checkpoint_dir << '\n';
  } else {
    RecModel fresh(model_spec(config, ws.data), config.seed);
    meta.spec_hash = fresh.spec().hash();
    scored = score_impressions(fresh, ws.data, idx);
    log << "scorer: untrained model, seed " << config.seed << '\n';
  }
  const EvalReport report = build_report(scored, meta);
  const fs::path out(out_dir);
  ensure_dir(out);
  write_config(out, config);
  write_text_file((out / "eval_report.json").string(), report.to_json());
  write_text_file((out / "per_impression.csv").string(), report.per_impression_csv());
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "split %s: %zu impressions (skipped %zu without click, %zu without non-click)\n"
                "AUC %.4f  MRR %.4f  nDCG@5 %.4f  nDCG@10 %.4f\n",
                config.eval.split.c_str(), report.impressions.size(), report.skipped_no_positive,
                report.skipped_no_negative, report.mean_auc, report.mean_mrr, report.mean_ndcg5,
                report.mean_ndcg10);
  log << buf;
  write_manifest(out_dir, "evaluate", config);
}

void cmd_compare(const RunConfig& config, const std::string& out_dir, std::ostream& log) {
  compare_axis(config.compare);  // fail before any work
  const fs::path out(out_dir);
  ensure_dir(out);
  write_config(out, config);
  const CompareTable table = run_compare(config, &log);
  write_text_file((out / "compare.csv").string(), table.csv());
  write_text_file((out / "compare.txt").string(), table.text());
  log << table.text();
  write_manifest(out_dir, "compare", config);
}

void cmd_export_embeddings(const RunConfig& config, const std::string& out_dir,
                           const std::string& checkpoint_dir, std::ostream& log) {
  if (checkpoint_dir.empty()) throw ConfigError("export-embeddings needs --checkpoint");
  const auto ckpt = load_trained(checkpoint_dir);
  check_matches_config(ckpt.model.spec(), config);
  const Workspace ws = prepare_workspace(config, &ckpt.vocab, &ckpt.users);
  const auto& news = ws.data.dataset.news;
  const Tensor emb = encode_all_news(ckpt.model, ws.data.titles);
  const Projection proj = pca_project(emb, 2);

  std::string csv = "news_id,x,y,topic_id\n";
  for (std::size_t i = 0; i < news.size(); ++i) {
    csv += news[i].news_id + "," + format_double(proj.coords.at(i, 0)) + "," +
           format_double(proj.coords.at(i, 1)) + "," +
           (news[i].topic_id ? std::to_string(*news[i].topic_id) : std::string()) + "\n";
  }
  ojson summary;
  summary["num_news"] = news.size();
  summary["explained_variance_ratio"] = proj.explained_ratio;
  summary["zero_variance"] = proj.zero_variance;
  const bool has_topics =
      !news.empty() && std::all_of(news.begin(), news.end(), [](const NewsArticle& a) { return a.topic_id.has_value(); });
  if (has_topics) {
    const auto labels = topic_labels(ws.data.dataset);
    const double trained = silhouette_score(emb, labels);
    const RecModel fresh(ckpt.model.spec(), config.seed);
    const double untrained = silhouette_score(encode_all_news(fresh, ws.data.titles), labels);
    summary["silhouette_trained"] = trained;
    summary["silhouette_untrained"] = untrained;
    char buf[128];
    std::snprintf(buf, sizeof buf, "silhouette by topic: trained %.4f untrained %.4f\n", trained, untrained);
    log << buf;
  } else {
    log << "no planted topics; silhouette skipped\n";
  }
  const fs::path out(out_dir);
  ensure_dir(out);
  write_config(out, config);
  write_text_file((out / "embeddings.csv").string(), csv);
  write_text_file((out / "embeddings_summary.json").string(), summary.dump(2) + "\n");
  log << "wrote " << news.size() << " projected news embeddings\n";
  write_manifest(out_dir, "export-embeddings", config);
}

void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& config) {
  const fs::path root(out_dir);
  std::vector<std::pair<std::string, std::uintmax_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    files.emplace_back(rel, e.file_size());
  }
  std::sort(files.begin(), files.end());
  ojson j;
  j["command"] = command;
  j["config_hash"] = config.hash();
  j["seed"] = config.seed;
  j["files"] = ojson::array();
  for (const auto& [path, bytes] : files) j["files"].push_back({{"path", path}, {"bytes", bytes}});
  write_text_file((root / "manifest.json").string(), j.dump(2) + "\n");
}

}  // namespace newsrec
