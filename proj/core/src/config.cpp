#include "pars/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pars/error.hpp"

namespace pars {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Collects one message per violation instead of stopping at the first, so an
// operator can fix a config in a single pass.
struct ParseState {
  std::vector<std::string> errors;
  std::string origin;
  int line = 0;

  void err(const std::string& msg) {
    errors.push_back(origin + ":" + std::to_string(line) + ": " + msg);
  }

  bool to_i64(const std::string& v, int64_t& out) {
    errno = 0;
    char* end = nullptr;
    long long x = std::strtoll(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0') {
      err("expected an integer, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  bool to_u64(const std::string& v, uint64_t& out) {
    errno = 0;
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos) {
      err("expected a non-negative integer, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  bool to_f64(const std::string& v, double& out) {
    errno = 0;
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (errno != 0 || end == v.c_str() || *end != '\0' || !std::isfinite(x)) {
      err("expected a finite number, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  bool to_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1") {
      out = true;
      return true;
    }
    if (v == "false" || v == "0") {
      out = false;
      return true;
    }
    err("expected true/false, got '" + v + "'");
    return false;
  }

  bool to_sampling(const std::string& v, PatchSampling& out) {
    if (v == "random") {
      out = PatchSampling::kRandom;
      return true;
    }
    if (v == "fixed") {
      out = PatchSampling::kFixed;
      return true;
    }
    err("expected random|fixed, got '" + v + "'");
    return false;
  }

  bool to_decoder(const std::string& v, ParsDecoder& out) {
    if (v == "cross_attention") {
      out = ParsDecoder::kCrossAttention;
      return true;
    }
    if (v == "pairwise_mlp") {
      out = ParsDecoder::kPairwiseMlp;
      return true;
    }
    err("expected cross_attention|pairwise_mlp, got '" + v + "'");
    return false;
  }
};

void check(bool ok, const std::string& msg, std::vector<std::string>& errors) {
  if (!ok) errors.push_back(msg);
}

}  // namespace

std::string sampling_name(PatchSampling s) {
  return s == PatchSampling::kRandom ? "random" : "fixed";
}

std::string decoder_name(ParsDecoder d) {
  return d == ParsDecoder::kCrossAttention ? "cross_attention" : "pairwise_mlp";
}

std::string task_name(Task t) {
  switch (t) {
    case Task::kPars: return "pars";
    case Task::kMae: return "mae";
    case Task::kMp3: return "mp3";
    case Task::kDropPos: return "droppos";
    case Task::kFinetune: return "finetune";
    case Task::kScratch: return "scratch";
  }
  return "?";
}

std::string eval_split_name(EvalSplit s) {
  switch (s) {
    case EvalSplit::kTrain: return "train";
    case EvalSplit::kVal: return "val";
    case EvalSplit::kTest: return "test";
    case EvalSplit::kAll: return "all";
  }
  return "?";
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  ParseState st;
  st.origin = origin;

  using Handler = std::function<void(const std::string&)>;
  std::map<std::string, Handler> handlers;

  auto i64_key = [&](const char* key, int64_t* dst) {
    handlers[key] = [&st, dst](const std::string& v) {
      int64_t x;
      if (st.to_i64(v, x)) *dst = x;
    };
  };
  auto int_key = [&](const char* key, int* dst) {
    handlers[key] = [&st, dst](const std::string& v) {
      int64_t x;
      if (st.to_i64(v, x)) *dst = static_cast<int>(x);
    };
  };
  auto f64_key = [&](const char* key, double* dst) {
    handlers[key] = [&st, dst](const std::string& v) {
      double x;
      if (st.to_f64(v, x)) *dst = x;
    };
  };
  auto str_key = [&](const char* key, std::string* dst) {
    handlers[key] = [dst](const std::string& v) { *dst = v; };
  };

  handlers["run.task"] = [&](const std::string& v) {
    if (v == "pars")
      cfg.task = Task::kPars;
    else if (v == "mae")
      cfg.task = Task::kMae;
    else if (v == "mp3")
      cfg.task = Task::kMp3;
    else if (v == "droppos")
      cfg.task = Task::kDropPos;
    else if (v == "finetune")
      cfg.task = Task::kFinetune;
    else if (v == "scratch")
      cfg.task = Task::kScratch;
    else
      st.err("unknown task '" + v + "' (expected pars|mae|mp3|droppos|finetune|scratch)");
  };
  handlers["run.seed"] = [&](const std::string& v) {
    uint64_t x;
    if (st.to_u64(v, x)) cfg.seed = x;
  };
  str_key("run.output", &cfg.output_dir);
  handlers["run.eval_split"] = [&](const std::string& v) {
    if (v == "train")
      cfg.eval_split = EvalSplit::kTrain;
    else if (v == "val")
      cfg.eval_split = EvalSplit::kVal;
    else if (v == "test")
      cfg.eval_split = EvalSplit::kTest;
    else if (v == "all")
      cfg.eval_split = EvalSplit::kAll;
    else
      st.err("unknown eval_split '" + v + "' (expected train|val|test|all)");
  };

  str_key("data.store", &cfg.data.store_path);
  str_key("data.finetune_store", &cfg.data.finetune_store_path);
  f64_key("data.train_frac", &cfg.data.train_frac);
  f64_key("data.val_frac", &cfg.data.val_frac);
  f64_key("data.test_frac", &cfg.data.test_frac);
  handlers["data.split_seed"] = [&](const std::string& v) {
    uint64_t x;
    if (st.to_u64(v, x)) cfg.data.split_seed = x;
  };
  i64_key("data.subjects", &cfg.data.n_subjects);
  i64_key("data.labeled_per_class", &cfg.data.labeled_per_class);

  i64_key("encoder.patch_len", &cfg.encoder.patch_len);
  i64_key("encoder.d_model", &cfg.encoder.d_model);
  int_key("encoder.n_blocks", &cfg.encoder.n_blocks);
  int_key("encoder.n_heads", &cfg.encoder.n_heads);
  i64_key("encoder.ff_hidden", &cfg.encoder.ff_hidden);

  i64_key("pretrain.epochs", &cfg.pretrain.epochs);
  i64_key("pretrain.warmup_epochs", &cfg.pretrain.warmup_epochs);
  i64_key("pretrain.batch_size", &cfg.pretrain.batch_size);
  f64_key("pretrain.lr", &cfg.pretrain.lr);
  f64_key("pretrain.weight_decay", &cfg.pretrain.weight_decay);
  i64_key("pretrain.window_len", &cfg.pretrain.window_len);
  i64_key("pretrain.n_patches", &cfg.pretrain.n_patches);
  f64_key("pretrain.gamma_pos", &cfg.pretrain.gamma_pos);
  handlers["pretrain.sampling"] = [&](const std::string& v) {
    st.to_sampling(v, cfg.pretrain.sampling);
  };
  handlers["pretrain.decoder"] = [&](const std::string& v) {
    st.to_decoder(v, cfg.pretrain.decoder);
  };
  i64_key("pretrain.mlp_hidden", &cfg.pretrain.mlp_hidden);
  f64_key("pretrain.mask_ratio", &cfg.pretrain.mask_ratio);
  f64_key("pretrain.kv_mask_ratio", &cfg.pretrain.kv_mask_ratio);
  f64_key("pretrain.pos_drop_ratio", &cfg.pretrain.pos_drop_ratio);
  handlers["pretrain.mae_masked_loss_only"] = [&](const std::string& v) {
    st.to_bool(v, cfg.pretrain.mae_masked_loss_only);
  };
  i64_key("pretrain.checkpoint_every", &cfg.pretrain.checkpoint_every);

  i64_key("finetune.epochs", &cfg.finetune.epochs);
  i64_key("finetune.batch_size", &cfg.finetune.batch_size);
  f64_key("finetune.lr", &cfg.finetune.lr);
  f64_key("finetune.weight_decay", &cfg.finetune.weight_decay);
  f64_key("finetune.spatial_drop_p", &cfg.finetune.spatial_drop_p);
  str_key("finetune.pretrained", &cfg.finetune.pretrained);
  i64_key("finetune.seeds", &cfg.finetune.seeds);

  handlers["ablate.n_patches"] = [&](const std::string& v) {
    std::vector<int64_t> vals;
    for (const std::string& item : split_list(v)) {
      int64_t x;
      if (st.to_i64(item, x)) vals.push_back(x);
    }
    if (!vals.empty()) cfg.ablate.n_patches = vals;
  };
  handlers["ablate.gamma_pos"] = [&](const std::string& v) {
    std::vector<double> vals;
    for (const std::string& item : split_list(v)) {
      double x;
      if (st.to_f64(item, x)) vals.push_back(x);
    }
    if (!vals.empty()) cfg.ablate.gamma_pos = vals;
  };
  handlers["ablate.sampling"] = [&](const std::string& v) {
    std::vector<PatchSampling> vals;
    for (const std::string& item : split_list(v)) {
      PatchSampling s;
      if (st.to_sampling(item, s)) vals.push_back(s);
    }
    if (!vals.empty()) cfg.ablate.sampling = vals;
  };
  handlers["ablate.decoder"] = [&](const std::string& v) {
    std::vector<ParsDecoder> vals;
    for (const std::string& item : split_list(v)) {
      ParsDecoder d;
      if (st.to_decoder(item, d)) vals.push_back(d);
    }
    if (!vals.empty()) cfg.ablate.decoder = vals;
  };
  i64_key("ablate.seeds", &cfg.ablate.seeds);

  std::istringstream in(text);
  std::string line;
  std::string section;
  bool section_known = true;
  while (std::getline(in, line)) {
    ++st.line;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        st.err("malformed section header '" + line + "'");
        section_known = false;
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"run", "data", "encoder", "pretrain", "finetune", "ablate"};
      section_known = false;
      for (const char* k : known)
        if (section == k) section_known = true;
      if (!section_known) st.err("unknown section [" + section + "]");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      st.err("expected 'key = value', got '" + line + "'");
      continue;
    }
    if (!section_known) continue;  // already reported at the header
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      st.err("key '" + key + "' appears before any [section]");
      continue;
    }
    auto it = handlers.find(section + "." + key);
    if (it == handlers.end()) {
      st.err("unknown key '" + key + "' in section [" + section + "]");
      continue;
    }
    it->second(value);
  }

  validate_run_config(cfg, st.errors);

  if (!st.errors.empty()) {
    std::string msg = origin + ": " + std::to_string(st.errors.size()) + " config error(s):";
    for (const std::string& e : st.errors) msg += "\n  - " + e;
    throw InvalidInput(msg);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

void validate_run_config(const RunConfig& cfg, std::vector<std::string>& errors) {
  auto& e = errors;
  const nn::EncoderConfig& enc = cfg.encoder;
  check(enc.patch_len >= 1, "encoder.patch_len must be >= 1", e);
  check(enc.d_model >= 2, "encoder.d_model must be >= 2", e);
  check(enc.n_blocks >= 1, "encoder.n_blocks must be >= 1", e);
  check(enc.n_heads >= 1, "encoder.n_heads must be >= 1", e);
  check(enc.ff_hidden >= 1, "encoder.ff_hidden must be >= 1", e);
  if (enc.n_heads >= 1 && enc.d_model >= 2)
    check(enc.d_model % enc.n_heads == 0, "encoder.d_model must be divisible by encoder.n_heads",
          e);

  const DataConfig& d = cfg.data;
  check(!d.store_path.empty(), "data.store is required", e);
  for (auto [frac, name] : {std::pair{d.train_frac, "data.train_frac"},
                            std::pair{d.val_frac, "data.val_frac"},
                            std::pair{d.test_frac, "data.test_frac"}})
    check(frac >= 0.0 && frac <= 1.0, std::string(name) + " must lie in [0, 1]", e);
  check(std::abs(d.train_frac + d.val_frac + d.test_frac - 1.0) <= 1e-9,
        "data split fractions must sum to 1", e);
  check(d.train_frac > 0.0, "data.train_frac must be positive", e);
  check(d.n_subjects >= 0, "data.subjects must be >= 0 (0 = all)", e);
  check(d.labeled_per_class >= 0, "data.labeled_per_class must be >= 0 (0 = all)", e);

  const PretrainConfig& p = cfg.pretrain;
  bool is_pretext = cfg.task == Task::kPars || cfg.task == Task::kMae || cfg.task == Task::kMp3 ||
                    cfg.task == Task::kDropPos;
  if (is_pretext) {
    check(p.epochs >= 1, "pretrain.epochs must be >= 1", e);
    check(p.warmup_epochs >= 0 && p.warmup_epochs <= p.epochs,
          "pretrain.warmup_epochs must lie in [0, pretrain.epochs]", e);
    check(p.batch_size >= 1, "pretrain.batch_size must be >= 1", e);
    check(p.lr > 0.0, "pretrain.lr must be positive", e);
    check(p.weight_decay >= 0.0, "pretrain.weight_decay must be >= 0", e);
    check(p.window_len >= enc.patch_len, "pretrain.window_len must be >= encoder.patch_len", e);
    check(p.checkpoint_every >= 1, "pretrain.checkpoint_every must be >= 1", e);
  }
  if (cfg.task == Task::kPars) {
    check(p.n_patches >= 2, "pretrain.n_patches must be >= 2", e);
    check(p.gamma_pos > 0.0 && p.gamma_pos <= 1.0, "pretrain.gamma_pos must lie in (0, 1]", e);
    if (p.n_patches >= 2 && p.gamma_pos > 0.0 && p.gamma_pos <= 1.0)
      check(std::llround(p.gamma_pos * static_cast<double>(p.n_patches)) >= 2,
            "pretrain.gamma_pos * pretrain.n_patches must round to >= 2 masked patches", e);
    check(p.mlp_hidden >= 1, "pretrain.mlp_hidden must be >= 1", e);
    if (p.sampling == PatchSampling::kFixed)
      check(p.window_len == p.n_patches * enc.patch_len,
            "fixed sampling requires pretrain.window_len == pretrain.n_patches * "
            "encoder.patch_len",
            e);
  }
  if (cfg.task == Task::kMae || cfg.task == Task::kMp3 || cfg.task == Task::kDropPos) {
    check(p.window_len % std::max<int64_t>(enc.patch_len, 1) == 0,
          "grid tasks require pretrain.window_len to be a multiple of encoder.patch_len", e);
    int64_t grid_n = enc.patch_len >= 1 ? p.window_len / enc.patch_len : 0;
    check(grid_n >= 2, "grid tasks need at least 2 patches per window", e);
  }
  if (cfg.task == Task::kMae)
    check(p.mask_ratio > 0.0 && p.mask_ratio < 1.0, "pretrain.mask_ratio must lie in (0, 1)", e);
  if (cfg.task == Task::kMp3)
    check(p.kv_mask_ratio >= 0.0 && p.kv_mask_ratio < 1.0,
          "pretrain.kv_mask_ratio must lie in [0, 1)", e);
  if (cfg.task == Task::kDropPos) {
    check(p.mask_ratio >= 0.0 && p.mask_ratio < 1.0, "pretrain.mask_ratio must lie in [0, 1)", e);
    check(p.pos_drop_ratio > 0.0 && p.pos_drop_ratio <= 1.0,
          "pretrain.pos_drop_ratio must lie in (0, 1]", e);
  }

  const FinetunePhaseConfig& f = cfg.finetune;
  if (cfg.task == Task::kFinetune || cfg.task == Task::kScratch) {
    check(f.epochs >= 1, "finetune.epochs must be >= 1", e);
    check(f.batch_size >= 1, "finetune.batch_size must be >= 1", e);
    check(f.lr > 0.0, "finetune.lr must be positive", e);
    check(f.weight_decay >= 0.0, "finetune.weight_decay must be >= 0", e);
    check(f.spatial_drop_p >= 0.0 && f.spatial_drop_p < 1.0,
          "finetune.spatial_drop_p must lie in [0, 1)", e);
    check(f.seeds >= 1, "finetune.seeds must be >= 1", e);
    check(d.val_frac > 0.0, "fine-tuning needs a validation split (data.val_frac > 0)", e);
    if (cfg.task == Task::kScratch)
      check(f.pretrained.empty(), "task scratch must not set finetune.pretrained", e);
  }

  const AblateGridConfig& a = cfg.ablate;
  check(!a.n_patches.empty(), "ablate.n_patches must not be empty", e);
  check(!a.gamma_pos.empty(), "ablate.gamma_pos must not be empty", e);
  check(!a.sampling.empty(), "ablate.sampling must not be empty", e);
  check(!a.decoder.empty(), "ablate.decoder must not be empty", e);
  check(a.seeds >= 1, "ablate.seeds must be >= 1", e);
  for (int64_t n : a.n_patches)
    check(n >= 2, "ablate.n_patches entries must be >= 2", e);
  for (double g : a.gamma_pos)
    check(g > 0.0 && g <= 1.0, "ablate.gamma_pos entries must lie in (0, 1]", e);
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "task = " << task_name(cfg.task) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "output = " << cfg.output_dir << "\n";
  out << "eval_split = " << eval_split_name(cfg.eval_split) << "\n";
  out << "\n[data]\n";
  out << "store = " << cfg.data.store_path << "\n";
  out << "finetune_store = " << cfg.data.finetune_store_path << "\n";
  out << "train_frac = " << fmt_double(cfg.data.train_frac) << "\n";
  out << "val_frac = " << fmt_double(cfg.data.val_frac) << "\n";
  out << "test_frac = " << fmt_double(cfg.data.test_frac) << "\n";
  out << "split_seed = " << cfg.data.split_seed << "\n";
  out << "subjects = " << cfg.data.n_subjects << "\n";
  out << "labeled_per_class = " << cfg.data.labeled_per_class << "\n";
  out << "\n[encoder]\n";
  out << "patch_len = " << cfg.encoder.patch_len << "\n";
  out << "d_model = " << cfg.encoder.d_model << "\n";
  out << "n_blocks = " << cfg.encoder.n_blocks << "\n";
  out << "n_heads = " << cfg.encoder.n_heads << "\n";
  out << "ff_hidden = " << cfg.encoder.ff_hidden << "\n";
  out << "\n[pretrain]\n";
  out << "epochs = " << cfg.pretrain.epochs << "\n";
  out << "warmup_epochs = " << cfg.pretrain.warmup_epochs << "\n";
  out << "batch_size = " << cfg.pretrain.batch_size << "\n";
  out << "lr = " << fmt_double(cfg.pretrain.lr) << "\n";
  out << "weight_decay = " << fmt_double(cfg.pretrain.weight_decay) << "\n";
  out << "window_len = " << cfg.pretrain.window_len << "\n";
  out << "n_patches = " << cfg.pretrain.n_patches << "\n";
  out << "gamma_pos = " << fmt_double(cfg.pretrain.gamma_pos) << "\n";
  out << "sampling = " << sampling_name(cfg.pretrain.sampling) << "\n";
  out << "decoder = " << decoder_name(cfg.pretrain.decoder) << "\n";
  out << "mlp_hidden = " << cfg.pretrain.mlp_hidden << "\n";
  out << "mask_ratio = " << fmt_double(cfg.pretrain.mask_ratio) << "\n";
  out << "kv_mask_ratio = " << fmt_double(cfg.pretrain.kv_mask_ratio) << "\n";
  out << "pos_drop_ratio = " << fmt_double(cfg.pretrain.pos_drop_ratio) << "\n";
  out << "mae_masked_loss_only = " << (cfg.pretrain.mae_masked_loss_only ? "true" : "false")
      << "\n";
  out << "checkpoint_every = " << cfg.pretrain.checkpoint_every << "\n";
  out << "\n[finetune]\n";
  out << "epochs = " << cfg.finetune.epochs << "\n";
  out << "batch_size = " << cfg.finetune.batch_size << "\n";
  out << "lr = " << fmt_double(cfg.finetune.lr) << "\n";
  out << "weight_decay = " << fmt_double(cfg.finetune.weight_decay) << "\n";
  out << "spatial_drop_p = " << fmt_double(cfg.finetune.spatial_drop_p) << "\n";
  out << "pretrained = " << cfg.finetune.pretrained << "\n";
  out << "seeds = " << cfg.finetune.seeds << "\n";
  out << "\n[ablate]\n";
  out << "n_patches = ";
  for (size_t i = 0; i < cfg.ablate.n_patches.size(); ++i)
    out << (i ? "," : "") << cfg.ablate.n_patches[i];
  out << "\ngamma_pos = ";
  for (size_t i = 0; i < cfg.ablate.gamma_pos.size(); ++i)
    out << (i ? "," : "") << fmt_double(cfg.ablate.gamma_pos[i]);
  out << "\nsampling = ";
  for (size_t i = 0; i < cfg.ablate.sampling.size(); ++i)
    out << (i ? "," : "") << sampling_name(cfg.ablate.sampling[i]);
  out << "\ndecoder = ";
  for (size_t i = 0; i < cfg.ablate.decoder.size(); ++i)
    out << (i ? "," : "") << decoder_name(cfg.ablate.decoder[i]);
  out << "\nseeds = " << cfg.ablate.seeds << "\n";
  return out.str();
}

}  // namespace pars
