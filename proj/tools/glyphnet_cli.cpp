// Command-line front end: train / evaluate / gen-toy / inspect.
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glyphnet/blas_tune.hpp"
#include "glyphnet/runner.hpp"

namespace {

void print_report(const glyphnet::MetricsReport& r) {
  std::printf("samples    %lld\n", static_cast<long long>(r.count));
  std::printf("top-1      %.4f\n", r.top1);
  std::printf("top-3      %.4f\n", r.top3);
  std::printf("loss       %.6f\n", r.mean_loss);
  std::printf("macro F1   %.4f\n", r.macro_f1);
}

}  // namespace

int main(int argc, char** argv) {
  glyphnet::tune_blas_kernels(argv);
  CLI::App app{"glyphnet: train and evaluate small-image glyph classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "glyphnet 1.0.0");
  app.set_config("--config", "",
                 "read option defaults from a config file ([train]/[evaluate]... sections); "
                 "explicit flags win over the file, the file wins over built-in defaults");

  // train
  auto* train = app.add_subcommand("train", "train one model on an image corpus");
  train->fallthrough();  // lets app-level flags like --config follow the subcommand
  std::string train_model = "A";
  glyphnet::TrainRunOptions topt;
  train->add_option("--model", train_model, "architecture: A, B or C")->default_val("A");
  train->add_option("--corpus", topt.corpus, "corpus root (one directory per class)")
      ->required();
  train->add_option("--out", topt.out, "output directory for checkpoint and metrics")
      ->required();
  train->add_option("--epochs", topt.epochs, "training epochs (0 = just save the init)")
      ->default_val(50);
  train->add_option("--batch-size", topt.batch_size, "batch size")->default_val(64);
  train->add_option("--lr0", topt.lr0,
                    "initial learning rate (default 0.0005 for A/B, 0.001 for C)");
  train->add_option("--seed", topt.seed, "random seed")->default_val(0);
  train->add_flag("--augment,!--no-augment", topt.augment,
                  "random affine augmentation of training batches")
      ->default_val(true);
  train->add_option("--image-size", topt.image_size, "square input size")->default_val(32);
  train->add_option("--train-frac", topt.train_frac, "per-class training fraction")
      ->default_val(0.8);
  train->callback([&] {
    topt.model = glyphnet::parse_kind(train_model);
    topt.on_epoch = [&](const glyphnet::EpochStats& st) {
      std::printf("epoch %3d/%d  lr %.6g  train loss %.4f acc %.4f  val loss %.4f acc %.4f\n",
                  st.epoch + 1, topt.epochs, st.lr, st.train_loss, st.train_acc, st.val_loss,
                  st.val_acc);
      std::fflush(stdout);
    };
    auto res = glyphnet::run_train(topt);
    std::printf("checkpoint %s\n", res.checkpoint_path.string().c_str());
    std::printf("metrics    %s\n", res.metrics_path.string().c_str());
    print_report(res.final_eval);
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score checkpoints on a corpus test split");
  evaluate->fallthrough();
  glyphnet::EvalRunOptions eopt;
  std::string single_ckpt;
  std::vector<std::string> ensemble;
  std::optional<std::uint64_t> eval_seed;
  evaluate->add_option("checkpoint", single_ckpt, "checkpoint file (single-model evaluation)");
  evaluate->add_option("--ensemble", ensemble, "checkpoint files to average (softmax mean)")
      ->expected(-1);
  evaluate->add_option("--corpus", eopt.corpus, "corpus root")->required();
  evaluate->add_option("--out", eopt.out, "output directory for metrics")->required();
  evaluate->add_option("--seed", eval_seed,
                       "split seed (default: the first checkpoint's training seed)");
  evaluate->add_option("--train-frac", eopt.train_frac, "per-class training fraction")
      ->default_val(0.8);
  evaluate->callback([&] {
    if (!single_ckpt.empty() && !ensemble.empty())
      throw CLI::ValidationError("evaluate",
                                 "give either a positional checkpoint or --ensemble, not both");
    eopt.checkpoints = single_ckpt.empty() ? ensemble : std::vector<std::string>{single_ckpt};
    if (eopt.checkpoints.empty())
      throw CLI::ValidationError("evaluate", "no checkpoint given");
    eopt.seed = eval_seed;
    auto res = glyphnet::run_evaluate(eopt);
    std::printf("metrics    %s\n", res.metrics_path.string().c_str());
    print_report(res.report);
  });

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "generate a synthetic glyph corpus");
  gen->fallthrough();
  glyphnet::ToyParams gopt;
  std::string gen_out;
  gen->add_option("--classes", gopt.classes, "number of classes")->default_val(10);
  gen->add_option("--per-class", gopt.per_class, "samples per class")->default_val(300);
  gen->add_option("--image-size", gopt.image_size, "square image size")->default_val(32);
  gen->add_option("--seed", gopt.seed, "random seed")->default_val(7);
  gen->add_option("--out", gen_out, "destination directory (must not already hold files)")
      ->required();
  gen->callback([&] {
    glyphnet::generate_toy_corpus(gen_out, gopt);
    std::printf("wrote %d classes x %d samples to %s\n", gopt.classes, gopt.per_class,
                gen_out.c_str());
  });

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print a checkpoint's verified manifest");
  inspect->fallthrough();
  std::string inspect_path;
  inspect->add_option("checkpoint", inspect_path, "checkpoint file")->required();
  inspect->callback(
      [&] { std::fputs(glyphnet::inspect_checkpoint(inspect_path).c_str(), stdout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
