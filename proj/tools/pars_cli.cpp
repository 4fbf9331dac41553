#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pars/config.hpp"
#include "pars/error.hpp"
#include "pars/runner.hpp"
#include "pars/synthetic.hpp"
#include "pars/version.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  std::string output;
  std::string pretrained;
  int64_t subjects = 0;
  int64_t seeds = 0;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_output = nullptr;
  CLI::Option* o_pretrained = nullptr;
  CLI::Option* o_subjects = nullptr;
  CLI::Option* o_seeds = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_pretrained, bool with_sweep) {
  cmd->add_option("--config", f.config_path, "run config file")->required();
  f.o_seed = cmd->add_option("--seed", f.seed, "override run.seed");
  f.o_output = cmd->add_option("--output", f.output, "override run.output directory");
  if (with_pretrained)
    f.o_pretrained = cmd->add_option("--pretrained", f.pretrained, "checkpoint directory");
  if (with_sweep) {
    f.o_subjects =
        cmd->add_option("--subjects", f.subjects, "override data.subjects (0 = all)");
    f.o_seeds = cmd->add_option("--seeds", f.seeds, "override the sweep seed count");
  }
}

pars::RunConfig load_with_overrides(const CommonFlags& f) {
  pars::RunConfig cfg = pars::load_run_config(f.config_path);
  if (f.o_seed && f.o_seed->count()) cfg.seed = f.seed;
  if (f.o_output && f.o_output->count()) cfg.output_dir = f.output;
  if (f.o_pretrained && f.o_pretrained->count()) cfg.finetune.pretrained = f.pretrained;
  if (f.o_subjects && f.o_subjects->count()) cfg.data.n_subjects = f.subjects;
  if (f.o_seeds && f.o_seeds->count()) {
    cfg.finetune.seeds = f.seeds;
    cfg.ablate.seeds = f.seeds;
  }
  std::vector<std::string> errors;
  pars::validate_run_config(cfg, errors);
  if (!errors.empty()) {
    std::string msg = f.config_path + " (after flag overrides): " +
                      std::to_string(errors.size()) + " config error(s):";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw pars::InvalidInput(msg);
  }
  return cfg;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw pars::InvalidInput(what + " path is empty");
  if (!fs::exists(path)) throw pars::InvalidInput(what + " does not exist: " + path);
}

bool is_pretext(pars::Task t) {
  return t == pars::Task::kPars || t == pars::Task::kMae || t == pars::Task::kMp3 ||
         t == pars::Task::kDropPos;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised pretraining workbench for biosignal transformers"};
  app.set_version_flag("--version", std::string(pars::kVersion));
  app.require_subcommand(1);

  CLI::App* pre = app.add_subcommand("pretrain", "train a pretext task");
  CommonFlags pre_f;
  bool resume = false;
  int64_t max_epochs = -1;
  add_common(pre, pre_f, false, false);
  pre->add_flag("--resume", resume, "continue from the run's last checkpoint");
  pre->add_option("--max-epochs", max_epochs,
                  "run at most this many epochs this invocation, then checkpoint and exit");

  CLI::App* fin = app.add_subcommand("finetune", "train a classifier, optionally warm-started");
  CommonFlags fin_f;
  add_common(fin, fin_f, true, true);

  CLI::App* eva = app.add_subcommand("evaluate", "score a classifier checkpoint on a split");
  CommonFlags eva_f;
  add_common(eva, eva_f, true, false);

  CLI::App* abl = app.add_subcommand("ablate", "pretrain+finetune over a hyperparameter grid");
  CommonFlags abl_f;
  add_common(abl, abl_f, false, true);

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic window store");
  std::string gen_kind, gen_out;
  uint64_t gen_seed = 1;
  int64_t gen_count = 256, gen_window = 0, gen_channels = 0, gen_subjects = 0;
  int64_t gen_per_class = 40;
  int gen_classes = 3;
  double gen_rate = 0.0;
  gen->add_option("--kind", gen_kind, "chirp (unlabeled) or classes (labeled)")
      ->required()
      ->check(CLI::IsMember({"chirp", "classes"}));
  gen->add_option("--out", gen_out, "output store path")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--count", gen_count, "windows (chirp corpus)");
  gen->add_option("--count-per-class", gen_per_class, "windows per class (classes corpus)");
  gen->add_option("--classes", gen_classes, "number of classes (classes corpus)");
  gen->add_option("--window-len", gen_window, "window length in samples");
  gen->add_option("--rate", gen_rate, "sample rate in Hz");
  gen->add_option("--channels", gen_channels, "channels per window");
  gen->add_option("--subjects", gen_subjects, "subjects to rotate over");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // flag/usage problems are validation failures
  }

  try {
    if (pre->parsed()) {
      pars::RunConfig cfg = load_with_overrides(pre_f);
      if (!is_pretext(cfg.task))
        throw pars::InvalidInput("pretrain needs run.task in {pars, mae, mp3, droppos}, got '" +
                                 pars::task_name(cfg.task) + "'");
      require_file(cfg.data.store_path, "data.store");
      pars::run_pretrain(cfg, resume, std::cout, max_epochs);
    } else if (fin->parsed()) {
      pars::RunConfig cfg = load_with_overrides(fin_f);
      if (cfg.task != pars::Task::kFinetune && cfg.task != pars::Task::kScratch)
        throw pars::InvalidInput("finetune needs run.task finetune or scratch, got '" +
                                 pars::task_name(cfg.task) + "'");
      require_file(cfg.data.store_path, "data.store");
      if (!cfg.finetune.pretrained.empty())
        require_file(cfg.finetune.pretrained, "pretrained checkpoint");
      pars::run_finetune(cfg, std::cout);
    } else if (eva->parsed()) {
      pars::RunConfig cfg = load_with_overrides(eva_f);
      require_file(cfg.data.store_path, "data.store");
      if (cfg.finetune.pretrained.empty())
        throw pars::InvalidInput("evaluate needs --pretrained (checkpoint directory)");
      require_file(cfg.finetune.pretrained, "checkpoint");
      pars::run_evaluate(cfg, cfg.finetune.pretrained, std::cout);
    } else if (abl->parsed()) {
      pars::RunConfig cfg = load_with_overrides(abl_f);
      if (cfg.task != pars::Task::kPars)
        throw pars::InvalidInput("ablate sweeps the main pretext task; set run.task = pars");
      require_file(cfg.data.store_path, "data.store");
      require_file(cfg.data.finetune_store_path, "data.finetune_store");
      pars::run_ablate(cfg, std::cout);
    } else if (gen->parsed()) {
      if (gen_kind == "chirp") {
        pars::ChirpConfig c;
        if (gen_count > 0) c.count = gen_count;
        if (gen_window > 0) c.window_len = gen_window;
        if (gen_rate > 0) c.sample_rate_hz = gen_rate;
        if (gen_channels > 0) c.n_channels = gen_channels;
        if (gen_subjects > 0) c.n_subjects = gen_subjects;
        pars::WindowStore store = pars::gen_chirp_corpus(c, gen_seed);
        pars::write_store(gen_out, store);
        std::cout << "wrote " << store.windows.size() << " unlabeled windows to " << gen_out
                  << "\n";
      } else {
        pars::ClassCorpusConfig c;
        c.n_classes = gen_classes;
        if (gen_per_class > 0) c.count_per_class = gen_per_class;
        if (gen_window > 0) c.window_len = gen_window;
        if (gen_rate > 0) c.sample_rate_hz = gen_rate;
        if (gen_channels > 0) c.n_channels = gen_channels;
        if (gen_subjects > 0) c.n_subjects = gen_subjects;
        pars::WindowStore store = pars::gen_classification_corpus(c, gen_seed);
        pars::write_store(gen_out, store);
        std::cout << "wrote " << store.windows.size() << " labeled windows (" << c.n_classes
                  << " classes) to " << gen_out << "\n";
      }
    }
    return 0;
  } catch (const pars::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
