#include "pars/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pars/baselines.hpp"
#include "pars/checkpoint.hpp"
#include "pars/error.hpp"
#include "pars/version.hpp"
#include "pars/finetune.hpp"
#include "pars/pretext_pars.hpp"

namespace pars {

namespace fs = std::filesystem;

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string step_line(int64_t epoch, int64_t step, double loss, double lr) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch=%lld step=%lld loss=%.9g lr=%.9g",
                static_cast<long long>(epoch), static_cast<long long>(step), loss, lr);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw InvalidInput("write failed: " + path.string());
}

void write_run_record(const fs::path& root, std::map<std::string, std::string> fields) {
  fields["code_version"] = code_version();
  fields["config"] = "config_resolved.txt";
  fields["metric_history"] = "metrics.log";
  write_text_file(root / "run_record.txt", format_metrics_report(fields));
}

std::vector<double> data_fractions(const DataConfig& d) {
  return {d.train_frac, d.val_frac, d.test_frac};
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation; the per-seed samples are the whole sweep,
// not a sample from a larger one.
double std_of(const std::vector<double>& v) {
  double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One pretext task behind a uniform step interface, so the pretraining loop
// is shared across tasks.
struct PretextTask {
  std::function<void(nn::ParameterStore&, Rng&)> register_model;
  std::function<nn::StepResult(nn::ParameterStore&, nn::AdamW&,
                               const std::vector<const MultiChannelWindow*>&, Rng&)>
      step;
  std::map<std::string, std::string> model_info;
};

std::map<std::string, std::string> encoder_info(const RunConfig& cfg) {
  return {
      {"task", task_name(cfg.task)},
      {"patch_len", std::to_string(cfg.encoder.patch_len)},
      {"d_model", std::to_string(cfg.encoder.d_model)},
      {"n_blocks", std::to_string(cfg.encoder.n_blocks)},
      {"n_heads", std::to_string(cfg.encoder.n_heads)},
      {"ff_hidden", std::to_string(cfg.encoder.ff_hidden)},
      {"window_len", std::to_string(cfg.pretrain.window_len)},
  };
}

PretextTask make_pretext_task(const RunConfig& cfg) {
  PretextTask task;
  task.model_info = encoder_info(cfg);
  const PretrainConfig& p = cfg.pretrain;
  switch (cfg.task) {
    case Task::kPars: {
      ParsConfig pc;
      pc.encoder = cfg.encoder;
      pc.n_patches = p.n_patches;
      pc.gamma_pos = p.gamma_pos;
      pc.window_len = p.window_len;
      pc.decoder = p.decoder;
      pc.mlp_hidden = p.mlp_hidden;
      pc.sampling = p.sampling;
      pc.validate();
      task.register_model = [pc](nn::ParameterStore& s, Rng& r) { register_pars_model(s, pc, r); };
      task.step = [pc](nn::ParameterStore& s, nn::AdamW& o,
                       const std::vector<const MultiChannelWindow*>& b, Rng& r) {
        return pars_training_step(s, o, pc, b, r);
      };
      task.model_info["n_patches"] = std::to_string(pc.n_patches);
      task.model_info["gamma_pos"] = fmt9(pc.gamma_pos);
      task.model_info["sampling"] = sampling_name(pc.sampling);
      task.model_info["decoder"] = decoder_name(pc.decoder);
      break;
    }
    case Task::kMae: {
      MaeConfig mc;
      mc.encoder = cfg.encoder;
      mc.mask_ratio = p.mask_ratio;
      mc.masked_loss_only = p.mae_masked_loss_only;
      mc.window_len = p.window_len;
      mc.validate();
      task.register_model = [mc](nn::ParameterStore& s, Rng& r) { register_mae_model(s, mc, r); };
      task.step = [mc](nn::ParameterStore& s, nn::AdamW& o,
                       const std::vector<const MultiChannelWindow*>& b, Rng& r) {
        return mae_step(s, o, mc, b, r);
      };
      task.model_info["mask_ratio"] = fmt9(mc.mask_ratio);
      task.model_info["masked_loss_only"] = mc.masked_loss_only ? "true" : "false";
      break;
    }
    case Task::kMp3: {
      Mp3Config mc;
      mc.encoder = cfg.encoder;
      mc.kv_mask_ratio = p.kv_mask_ratio;
      mc.window_len = p.window_len;
      mc.validate();
      task.register_model = [mc](nn::ParameterStore& s, Rng& r) { register_mp3_model(s, mc, r); };
      task.step = [mc](nn::ParameterStore& s, nn::AdamW& o,
                       const std::vector<const MultiChannelWindow*>& b, Rng& r) {
        return mp3_step(s, o, mc, b, r);
      };
      task.model_info["kv_mask_ratio"] = fmt9(mc.kv_mask_ratio);
      break;
    }
    case Task::kDropPos: {
      DropPosConfig dc;
      dc.encoder = cfg.encoder;
      dc.mask_ratio = p.mask_ratio;
      dc.pos_drop_ratio = p.pos_drop_ratio;
      dc.window_len = p.window_len;
      dc.validate();
      task.register_model = [dc](nn::ParameterStore& s, Rng& r) {
        register_droppos_model(s, dc, r);
      };
      task.step = [dc](nn::ParameterStore& s, nn::AdamW& o,
                       const std::vector<const MultiChannelWindow*>& b, Rng& r) {
        return droppos_step(s, o, dc, b, r);
      };
      task.model_info["mask_ratio"] = fmt9(dc.mask_ratio);
      task.model_info["pos_drop_ratio"] = fmt9(dc.pos_drop_ratio);
      break;
    }
    default:
      throw InvalidInput("task '" + task_name(cfg.task) + "' is not a pretext task");
  }
  return task;
}

int64_t info_i64(const std::map<std::string, std::string>& info, const std::string& key) {
  auto it = info.find(key);
  if (it == info.end()) throw InvalidInput("checkpoint model.txt is missing key '" + key + "'");
  return std::stoll(it->second);
}

double positive_class_score(nn::ParameterStore& store, const FinetuneConfig& cfg,
                            const MultiChannelWindow& window) {
  nn::Graph g(&store);
  nn::Value tokens = embed_multichannel(g, cfg, window);
  Rng unused(0);
  nn::Value logits = classify(g, cfg, tokens, false, unused);
  const nn::Tensor& t = g.value_of(logits);
  double m = std::max(t.at(0, 0), t.at(0, 1));
  double e0 = std::exp(t.at(0, 0) - m), e1 = std::exp(t.at(0, 1) - m);
  return e1 / (e0 + e1);
}

void add_pooled_metrics(std::map<std::string, std::string>& report, const ConfusionMatrix& cm,
                        const std::string& prefix) {
  report[prefix + "kappa"] = fmt9(cohens_kappa(cm));
  report[prefix + "balanced_accuracy"] = fmt9(balanced_accuracy(cm));
  report[prefix + "macro_f1"] = fmt9(macro_f1(cm));
}

std::string single_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\t') c = ' ';
  return s;
}

}  // namespace

std::string code_version() { return kCodeVersion; }

PretrainOutcome run_pretrain(const RunConfig& cfg, bool resume, std::ostream& console,
                             int64_t stop_after_epochs) {
  WindowStore store = read_store(cfg.data.store_path);
  if (store.window_len < cfg.pretrain.window_len)
    throw InvalidInput("store windows are " + std::to_string(store.window_len) +
                       " samples but pretrain.window_len is " +
                       std::to_string(cfg.pretrain.window_len));

  SplitManifest manifest =
      split_by_subject(subjects_of(store), data_fractions(cfg.data), cfg.data.split_seed);
  std::vector<const MultiChannelWindow*> train = windows_for_subjects(store, manifest.train);
  if (train.empty()) throw InvalidInput("no pretraining windows in the training split");

  PretextTask task = make_pretext_task(cfg);

  nn::ParameterStore params;
  Rng init_rng = Rng::derive(cfg.seed, 0);
  task.register_model(params, init_rng);

  nn::AdamWConfig ocfg;
  ocfg.lr = cfg.pretrain.lr;
  ocfg.weight_decay = cfg.pretrain.weight_decay;
  nn::AdamW optim(params, ocfg);
  Rng train_rng = Rng::derive(cfg.seed, 1);

  fs::path root = cfg.output_dir;
  fs::create_directories(root);
  write_text_file(root / "config_resolved.txt", serialize_run_config(cfg));
  write_split((root / "split.txt").string(), manifest);

  std::string ckpt_dir = (root / "checkpoint").string();
  int64_t start_epoch = 0;
  int64_t global_step = 0;
  bool resuming = resume && nn::checkpoint_exists(ckpt_dir);
  if (resuming) {
    nn::CheckpointState st;
    nn::load_checkpoint(ckpt_dir, params, &st);
    optim.set_steps_taken(st.adam_steps);
    train_rng = Rng::deserialize(st.rng_text);
    start_epoch = st.epoch;
    global_step = st.global_step;
    console << "resuming from epoch " << start_epoch << " (step " << global_step << ")\n";
  }

  std::ofstream metrics(root / "metrics.log",
                        resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) throw InvalidInput("cannot open metrics log under " + cfg.output_dir);

  PretrainOutcome out;
  out.checkpoint_dir = ckpt_dir;

  auto save = [&](int64_t next_epoch) {
    nn::CheckpointState st;
    st.epoch = next_epoch;
    st.global_step = global_step;
    st.adam_steps = optim.steps_taken();
    st.rng_text = train_rng.serialize();
    nn::save_checkpoint(ckpt_dir, params, st, task.model_info);
  };

  for (int64_t e = start_epoch; e < cfg.pretrain.epochs; ++e) {
    if (stop_after_epochs >= 0 && e - start_epoch >= stop_after_epochs) {
      save(e);
      break;
    }
    double lr =
        nn::lr_schedule(cfg.pretrain.lr, e, cfg.pretrain.warmup_epochs, cfg.pretrain.epochs);
    optim.set_lr(lr);

    std::vector<int64_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    train_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t steps_this_epoch = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(cfg.pretrain.batch_size)) {
      size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.pretrain.batch_size));
      std::vector<const MultiChannelWindow*> batch;
      batch.reserve(b1 - b0);
      for (size_t i = b0; i < b1; ++i) batch.push_back(train[static_cast<size_t>(order[i])]);

      nn::StepResult r = task.step(params, optim, batch, train_rng);
      ++global_step;
      std::string line = step_line(e, global_step, r.loss, lr);
      metrics << line << "\n";
      metrics.flush();
      console << line << "\n";
      if (!r.stepped) console << "update rejected: " << r.diagnostic << "\n";
      loss_sum += r.loss;
      ++steps_this_epoch;
    }
    out.epoch_loss.push_back(loss_sum / static_cast<double>(steps_this_epoch));
    if ((e + 1) % cfg.pretrain.checkpoint_every == 0 || e + 1 == cfg.pretrain.epochs) save(e + 1);
  }
  out.global_steps = global_step;

  std::map<std::string, std::string> record;
  record["task"] = task_name(cfg.task);
  record["seed"] = std::to_string(cfg.seed);
  record["checkpoint"] = "checkpoint";
  record["epochs"] = std::to_string(cfg.pretrain.epochs);
  record["steps"] = std::to_string(global_step);
  if (!out.epoch_loss.empty()) record["final_epoch_loss"] = fmt9(out.epoch_loss.back());
  write_run_record(root, record);
  return out;
}

FinetuneData select_finetune_data(const WindowStore& store, const DataConfig& data,
                                  uint64_t run_seed) {
  FinetuneData out;
  out.manifest = split_by_subject(subjects_of(store), data_fractions(data), data.split_seed);
  // Each run seed draws its own training subjects (the held-out sets stay
  // fixed by split_seed), so a multi-seed sweep varies the labeled pool.
  if (data.n_subjects > 0)
    out.manifest = subsample_subjects(out.manifest, data.n_subjects, run_seed);

  auto labeled = [&](const std::vector<std::string>& subjects) {
    std::vector<const MultiChannelWindow*> keep;
    for (const MultiChannelWindow* w : windows_for_subjects(store, subjects))
      if (w->label != kUnlabeled) keep.push_back(w);
    return keep;
  };
  out.train = labeled(out.manifest.train);
  out.val = labeled(out.manifest.val);
  out.test = labeled(out.manifest.test);

  if (data.labeled_per_class > 0) {
    std::map<int, std::vector<const MultiChannelWindow*>> by_class;
    for (const MultiChannelWindow* w : out.train) by_class[w->label].push_back(w);
    Rng pick = Rng::derive(run_seed, 2);
    std::vector<const MultiChannelWindow*> capped;
    for (auto& [label, group] : by_class) {
      pick.shuffle(group);
      int64_t take = std::min<int64_t>(data.labeled_per_class,
                                       static_cast<int64_t>(group.size()));
      capped.insert(capped.end(), group.begin(), group.begin() + take);
    }
    out.train = std::move(capped);
  }
  return out;
}

FinetuneOutcome run_finetune(const RunConfig& cfg, std::ostream& console) {
  if (cfg.task != Task::kFinetune && cfg.task != Task::kScratch)
    throw InvalidInput("run_finetune: task must be finetune or scratch");
  WindowStore store = read_store(cfg.data.store_path);
  if (store.n_classes < 2)
    throw InvalidInput("fine-tuning needs a labeled store with >= 2 classes, got " +
                       std::to_string(store.n_classes));
  if (store.window_len < cfg.encoder.patch_len)
    throw InvalidInput("store windows are shorter than one patch");

  FinetuneConfig fcfg;
  fcfg.encoder = cfg.encoder;
  fcfg.n_classes = store.n_classes;
  fcfg.spatial_drop_p = cfg.finetune.spatial_drop_p;
  fcfg.epochs = cfg.finetune.epochs;
  fcfg.batch_size = cfg.finetune.batch_size;
  fcfg.lr = cfg.finetune.lr;
  fcfg.weight_decay = cfg.finetune.weight_decay;
  fcfg.validate();

  fs::path root = cfg.output_dir;
  fs::create_directories(root);
  write_text_file(root / "config_resolved.txt", serialize_run_config(cfg));
  std::ofstream metrics(root / "metrics.log", std::ios::trunc);
  if (!metrics) throw InvalidInput("cannot open metrics log under " + cfg.output_dir);

  std::map<std::string, std::string> model_info = encoder_info(cfg);
  model_info["task"] = "finetune";
  model_info["n_classes"] = std::to_string(fcfg.n_classes);
  model_info["spatial_drop_p"] = fmt9(fcfg.spatial_drop_p);
  model_info["init"] = cfg.finetune.pretrained.empty() ? "scratch" : "warm";
  model_info.erase("window_len");

  FinetuneOutcome out;
  std::vector<double> kappas, balaccs, f1s, aurocs;

  for (int64_t s = 0; s < cfg.finetune.seeds; ++s) {
    uint64_t run_seed = cfg.seed + static_cast<uint64_t>(s);
    FinetuneData data = select_finetune_data(store, cfg.data, run_seed);
    if (data.train.empty()) throw InvalidInput("no labeled training windows after selection");
    if (data.val.empty()) throw InvalidInput("no labeled validation windows");
    if (data.test.empty()) throw InvalidInput("no labeled test windows");

    nn::ParameterStore params;
    Rng init_rng = Rng::derive(run_seed, 0);
    register_finetune_model(params, fcfg, init_rng);
    if (!cfg.finetune.pretrained.empty())
      nn::load_params_with_prefix(cfg.finetune.pretrained, params, "encoder.");

    auto sink = [&](const std::string& line) {
      std::string full = "seed=" + std::to_string(run_seed) + " " + line;
      metrics << full << "\n";
      metrics.flush();
      console << full << "\n";
    };

    Rng train_rng = Rng::derive(run_seed, 1);
    FinetuneResult res = finetune_loop(params, fcfg, data.train, data.val, train_rng, sink);

    std::vector<int> truth, predicted;
    std::vector<double> scores;
    std::vector<int> score_labels;
    for (const MultiChannelWindow* w : data.test) {
      truth.push_back(w->label);
      predicted.push_back(predict_class(params, fcfg, *w));
      if (fcfg.n_classes == 2) {
        scores.push_back(positive_class_score(params, fcfg, *w));
        score_labels.push_back(w->label);
      }
    }
    ConfusionMatrix cm = ConfusionMatrix::from_labels(truth, predicted, fcfg.n_classes);

    SeedOutcome so;
    so.seed = run_seed;
    so.best_epoch = res.best_epoch;
    so.best_val_loss = res.best_val_loss;
    so.kappa = cohens_kappa(cm);
    so.balanced_acc = balanced_accuracy(cm);
    so.macro_f1_score = macro_f1(cm);
    if (fcfg.n_classes == 2) so.auroc_score = auroc(scores, score_labels);

    std::string ckpt = (root / ("checkpoint_seed" + std::to_string(s))).string();
    nn::CheckpointState st;
    st.epoch = res.best_epoch;
    st.global_step = 0;
    st.adam_steps = 0;
    st.rng_text = train_rng.serialize();
    nn::save_checkpoint(ckpt, params, st, model_info);
    so.checkpoint_dir = ckpt;

    sink("split=test kappa=" + fmt9(so.kappa) + " balanced_accuracy=" + fmt9(so.balanced_acc) +
         " macro_f1=" + fmt9(so.macro_f1_score) +
         (fcfg.n_classes == 2 ? " auroc=" + fmt9(so.auroc_score) : ""));

    kappas.push_back(so.kappa);
    balaccs.push_back(so.balanced_acc);
    f1s.push_back(so.macro_f1_score);
    if (fcfg.n_classes == 2) aurocs.push_back(so.auroc_score);
    out.per_seed.push_back(std::move(so));
  }

  std::map<std::string, std::string>& rep = out.report;
  rep["task"] = task_name(cfg.task);
  rep["split"] = "test";
  rep["n_classes"] = std::to_string(fcfg.n_classes);
  rep["n_seeds"] = std::to_string(cfg.finetune.seeds);
  rep["pretrained"] = cfg.finetune.pretrained.empty() ? "none" : cfg.finetune.pretrained;
  rep["kappa_mean"] = fmt9(mean_of(kappas));
  rep["kappa_std"] = fmt9(std_of(kappas));
  rep["balanced_accuracy_mean"] = fmt9(mean_of(balaccs));
  rep["balanced_accuracy_std"] = fmt9(std_of(balaccs));
  rep["macro_f1_mean"] = fmt9(mean_of(f1s));
  rep["macro_f1_std"] = fmt9(std_of(f1s));
  if (!aurocs.empty()) {
    rep["auroc_mean"] = fmt9(mean_of(aurocs));
    rep["auroc_std"] = fmt9(std_of(aurocs));
  }
  for (const SeedOutcome& so : out.per_seed) {
    std::string p = "seed" + std::to_string(so.seed) + ".";
    rep[p + "kappa"] = fmt9(so.kappa);
    rep[p + "balanced_accuracy"] = fmt9(so.balanced_acc);
    rep[p + "macro_f1"] = fmt9(so.macro_f1_score);
    if (fcfg.n_classes == 2) rep[p + "auroc"] = fmt9(so.auroc_score);
    rep[p + "best_epoch"] = std::to_string(so.best_epoch);
    rep[p + "best_val_loss"] = fmt9(so.best_val_loss);
  }
  write_text_file(root / "metrics.txt", format_metrics_report(rep));

  std::map<std::string, std::string> record = rep;
  record["seed"] = std::to_string(cfg.seed);
  for (size_t s = 0; s < out.per_seed.size(); ++s)
    record["checkpoint_seed" + std::to_string(s)] = "checkpoint_seed" + std::to_string(s);
  write_run_record(root, record);
  return out;
}

EvalOutcome run_evaluate(const RunConfig& cfg, const std::string& checkpoint_dir,
                         std::ostream& console) {
  std::map<std::string, std::string> info = nn::read_model_info(checkpoint_dir);
  auto task_it = info.find("task");
  if (task_it == info.end() || task_it->second != "finetune")
    throw InvalidInput("checkpoint at " + checkpoint_dir +
                       " is not a classifier (model task: " +
                       (task_it == info.end() ? "unknown" : task_it->second) + ")");

  FinetuneConfig fcfg;
  fcfg.encoder.patch_len = info_i64(info, "patch_len");
  fcfg.encoder.d_model = info_i64(info, "d_model");
  fcfg.encoder.n_blocks = info_i64(info, "n_blocks");
  fcfg.encoder.n_heads = info_i64(info, "n_heads");
  fcfg.encoder.ff_hidden = info_i64(info, "ff_hidden");
  fcfg.n_classes = static_cast<int>(info_i64(info, "n_classes"));
  fcfg.validate();

  WindowStore store = read_store(cfg.data.store_path);
  if (store.n_classes != fcfg.n_classes)
    throw InvalidInput("store has " + std::to_string(store.n_classes) + " classes but the "
                       "checkpoint was trained for " + std::to_string(fcfg.n_classes));

  nn::ParameterStore params;
  Rng init_rng(0);
  register_finetune_model(params, fcfg, init_rng);
  nn::load_checkpoint(checkpoint_dir, params, nullptr);

  SplitManifest manifest =
      split_by_subject(subjects_of(store), data_fractions(cfg.data), cfg.data.split_seed);
  std::vector<std::string> subjects;
  switch (cfg.eval_split) {
    case EvalSplit::kTrain: subjects = manifest.train; break;
    case EvalSplit::kVal: subjects = manifest.val; break;
    case EvalSplit::kTest: subjects = manifest.test; break;
    case EvalSplit::kAll: subjects = subjects_of(store); break;
  }
  if (subjects.empty())
    throw InvalidInput("split '" + eval_split_name(cfg.eval_split) + "' has no subjects");

  EvalOutcome out;
  std::map<std::string, std::string>& rep = out.report;
  ConfusionMatrix pooled(fcfg.n_classes);
  std::vector<double> scores;
  std::vector<int> score_labels;
  int64_t scored_subjects = 0;

  for (const std::string& subject : subjects) {
    std::vector<const MultiChannelWindow*> windows = windows_for_subjects(store, {subject});
    ConfusionMatrix per(fcfg.n_classes);
    int64_t n = 0;
    for (const MultiChannelWindow* w : windows) {
      if (w->label == kUnlabeled) continue;
      int pred = predict_class(params, fcfg, *w);
      per.add(w->label, pred);
      pooled.add(w->label, pred);
      out.truth.push_back(w->label);
      out.predicted.push_back(pred);
      if (fcfg.n_classes == 2) {
        scores.push_back(positive_class_score(params, fcfg, *w));
        score_labels.push_back(w->label);
      }
      ++n;
    }
    if (n > 0) {
      rep["subject_kappa." + subject] = fmt9(cohens_kappa(per));
      ++scored_subjects;
    }
  }
  if (pooled.total() == 0)
    throw InvalidInput("no labeled windows in split '" + eval_split_name(cfg.eval_split) + "'");

  rep["split"] = eval_split_name(cfg.eval_split);
  rep["checkpoint"] = checkpoint_dir;
  rep["n_windows"] = std::to_string(pooled.total());
  rep["n_subjects"] = std::to_string(scored_subjects);
  add_pooled_metrics(rep, pooled, "");
  if (fcfg.n_classes == 2) rep["auroc"] = fmt9(auroc(scores, score_labels));
  for (int i = 0; i < fcfg.n_classes; ++i)
    for (int j = 0; j < fcfg.n_classes; ++j)
      rep["confusion." + std::to_string(i) + "." + std::to_string(j)] =
          std::to_string(pooled.at(i, j));

  fs::path root = cfg.output_dir;
  fs::create_directories(root);
  write_text_file(root / "config_resolved.txt", serialize_run_config(cfg));
  std::string report_text = format_metrics_report(rep);
  write_text_file(root / "metrics.txt", report_text);
  write_text_file(root / "metrics.log", report_text);
  std::map<std::string, std::string> record = rep;
  record["task"] = "evaluate";
  write_run_record(root, record);
  console << report_text;
  return out;
}

AblateOutcome run_ablate(const RunConfig& cfg, std::ostream& console) {
  if (cfg.data.finetune_store_path.empty())
    throw InvalidInput("ablation needs data.finetune_store (labeled corpus)");

  fs::path root = cfg.output_dir;
  fs::create_directories(root);
  write_text_file(root / "config_resolved.txt", serialize_run_config(cfg));

  AblateOutcome out;
  std::vector<std::string> rows;

  for (int64_t n : cfg.ablate.n_patches)
    for (double g : cfg.ablate.gamma_pos)
      for (PatchSampling sampling : cfg.ablate.sampling)
        for (ParsDecoder decoder : cfg.ablate.decoder) {
          AblateCellOutcome cell;
          cell.n_patches = n;
          cell.gamma_pos = g;
          cell.sampling = sampling;
          cell.decoder = decoder;
          std::string cell_name = "cell_n" + std::to_string(n) + "_g" + fmt9(g) + "_" +
                                  sampling_name(sampling) + "_" + decoder_name(decoder);
          try {
            for (int64_t k = 0; k < cfg.ablate.seeds; ++k) {
              RunConfig pre = cfg;
              pre.task = Task::kPars;
              pre.seed = cfg.seed + static_cast<uint64_t>(k);
              pre.pretrain.n_patches = n;
              pre.pretrain.gamma_pos = g;
              pre.pretrain.sampling = sampling;
              pre.pretrain.decoder = decoder;
              // The fixed grid defines its own patch count, so the window is
              // resized to keep N comparable across cells.
              if (sampling == PatchSampling::kFixed)
                pre.pretrain.window_len = n * cfg.encoder.patch_len;
              pre.output_dir =
                  (root / cell_name / ("seed" + std::to_string(k)) / "pretrain").string();
              PretrainOutcome po = run_pretrain(pre, false, console);

              RunConfig ft = cfg;
              ft.task = Task::kFinetune;
              ft.seed = cfg.seed + static_cast<uint64_t>(k);
              ft.data.store_path = cfg.data.finetune_store_path;
              ft.finetune.pretrained = po.checkpoint_dir;
              ft.finetune.seeds = 1;
              ft.output_dir =
                  (root / cell_name / ("seed" + std::to_string(k)) / "finetune").string();
              FinetuneOutcome fo = run_finetune(ft, console);
              cell.seed_kappas.push_back(fo.per_seed.front().kappa);
            }
            cell.median_kappa = median_of(cell.seed_kappas);
            cell.ok = true;
          } catch (const std::exception& ex) {
            cell.ok = false;
            cell.error = ex.what();
          }

          std::string row = "n_patches=" + std::to_string(n) + " gamma_pos=" + fmt9(g) +
                            " sampling=" + sampling_name(sampling) +
                            " decoder=" + decoder_name(decoder);
          if (cell.ok) {
            row += " status=ok median_kappa=" + fmt9(cell.median_kappa);
            for (size_t k = 0; k < cell.seed_kappas.size(); ++k)
              row += " kappa_seed" + std::to_string(k) + "=" + fmt9(cell.seed_kappas[k]);
          } else {
            row += " status=failed error=" + single_line(cell.error);
          }
          rows.push_back(row);
          console << row << "\n";
          out.cells.push_back(std::move(cell));
        }

  std::string table;
  for (const std::string& r : rows) table += r + "\n";
  out.table_path = (root / "ablate_table.txt").string();
  write_text_file(out.table_path, table);
  write_text_file(root / "metrics.log", table);

  std::map<std::string, std::string> record;
  record["task"] = "ablate";
  record["seed"] = std::to_string(cfg.seed);
  record["cells"] = std::to_string(out.cells.size());
  record["table"] = "ablate_table.txt";
  write_run_record(root, record);
  return out;
}

}  // namespace pars
