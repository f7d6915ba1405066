#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "slcd/slcd.hpp"

namespace {

// --out defaults under $SLCD_OUT_ROOT when the flag is omitted.
std::string default_out(const std::string& leaf) {
  const char* root = std::getenv("SLCD_OUT_ROOT");
  if (!root || !*root) return {};
  return std::string(root) + "/" + leaf;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toy latent-diffusion sim-to-real translation toolkit"};
  app.require_subcommand(1);

  slcd::MakeDataOptions mk;
  auto* cmd_mk = app.add_subcommand("make-data", "generate a toy dataset");
  cmd_mk->add_option("--domain", mk.domain, "sim or real")
      ->required()
      ->check(CLI::IsMember({"sim", "real"}));
  cmd_mk->add_option("--n", mk.n, "sample count")->check(CLI::PositiveNumber);
  cmd_mk->add_option("--seed", mk.seed, "generation seed");
  cmd_mk->add_option("--out", mk.out, "output directory");
  cmd_mk->add_flag("--force", mk.force, "allow writing into a non-empty directory");

  slcd::TrainOptions tr;
  std::string train_config_path;
  auto* cmd_tr = app.add_subcommand("train", "train a pipeline stage");
  cmd_tr->add_option("--stage", tr.stage, "ae, teacher or distill")
      ->required()
      ->check(CLI::IsMember({"ae", "teacher", "distill"}));
  cmd_tr->add_option("--data", tr.data_dir, "training dataset directory")->required();
  cmd_tr->add_option("--out", tr.out_path, "output checkpoint path");
  cmd_tr->add_option("--codec", tr.codec_path, "codec checkpoint (teacher stage)");
  cmd_tr->add_option("--teacher", tr.teacher_path, "teacher checkpoint (distill stage)");
  cmd_tr->add_option("--seed", tr.seed, "training seed");
  cmd_tr->add_option("--config", train_config_path, "key=value hyperparameter file");

  slcd::TranslateOptions tl;
  auto* cmd_tl = app.add_subcommand("translate", "translate a dataset with SDEdit");
  cmd_tl->add_option("--model", tl.model_path, "teacher or consistency checkpoint")->required();
  cmd_tl->add_option("--input", tl.input_dir, "input dataset directory")->required();
  cmd_tl->add_option("--out", tl.out_dir, "output directory");
  cmd_tl->add_option("--steps", tl.steps, "sampling steps");
  cmd_tl->add_option("--strength", tl.strength, "partial-noising strength in [0,1]")
      ->check(CLI::Range(0.0, 1.0));
  cmd_tl->add_option("--omega", tl.omega, "guidance scale");
  cmd_tl->add_flag("--ot", tl.use_ot, "apply the color transport pre-map");
  cmd_tl->add_option("--control", tl.control, "spatial hint kind")
      ->check(CLI::IsMember({"edge", "depth"}));
  cmd_tl->add_option("--control-scale", tl.control_scale, "hint adapter scale")
      ->check(CLI::NonNegativeNumber);
  cmd_tl->add_option("--seed", tl.seed, "translation seed");
  cmd_tl->add_flag("--force", tl.force, "allow writing into a non-empty directory");
  cmd_tl->add_option("--timing-csv", tl.timing_csv,
                     "write per-image timings to this CSV (kept out of --out)");

  slcd::EvaluateOptions ev;
  std::string metric_list = "dc,mmd,fd,seg";
  auto* cmd_ev = app.add_subcommand("evaluate", "compute metrics between two datasets");
  cmd_ev->add_option("--real", ev.real_dir, "reference dataset directory")->required();
  cmd_ev->add_option("--gen", ev.gen_dir, "evaluated dataset directory")->required();
  cmd_ev->add_option("--metrics", metric_list, "comma list from: dc, mmd, fd, seg");
  cmd_ev->add_option("--out", ev.out_csv, "metrics CSV path");
  cmd_ev->add_flag("--schemes", ev.schemes, "also run the segmentation scheme comparison");
  cmd_ev->add_option("--scheme-csv", ev.scheme_csv, "scheme comparison CSV path");
  cmd_ev->add_option("--model-tag", ev.model_tag, "model column value for CSV rows");
  cmd_ev->add_option("--steps", ev.steps, "steps column value for CSV rows");
  cmd_ev->add_option("--seed", ev.seed, "evaluation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_mk->parsed()) {
      if (mk.out.empty()) mk.out = default_out("data_" + mk.domain);
      if (mk.out.empty()) {
        std::cerr << "make-data: --out required (or set SLCD_OUT_ROOT)\n";
        return 1;
      }
      slcd::run_make_data(mk);
      std::cout << "wrote " << mk.n << " " << mk.domain << " samples to " << mk.out
                << "\n";
    } else if (cmd_tr->parsed()) {
      if (tr.out_path.empty()) tr.out_path = default_out(tr.stage + ".ckpt");
      if (tr.out_path.empty()) {
        std::cerr << "train: --out required (or set SLCD_OUT_ROOT)\n";
        return 1;
      }
      if (!train_config_path.empty()) tr.cfg = slcd::KvConfig::load(train_config_path);
      std::uint64_t digest = slcd::run_train(tr);
      std::cout << "wrote " << tr.stage << " checkpoint " << tr.out_path
                << " (digest " << digest << ")\n";
    } else if (cmd_tl->parsed()) {
      if (tl.out_dir.empty()) tl.out_dir = default_out("translated");
      if (tl.out_dir.empty()) {
        std::cerr << "translate: --out required (or set SLCD_OUT_ROOT)\n";
        return 1;
      }
      slcd::TranslateReport rep = slcd::run_translate(tl);
      std::cout << "translated " << rep.n_images << " images to " << tl.out_dir
                << ", mean " << slcd::fmt_double(rep.mean_seconds)
                << " s/image\n";
    } else if (cmd_ev->parsed()) {
      ev.metrics = split_csv_list(metric_list);
      for (const auto& m : ev.metrics)
        if (!slcd::valid_metric_tag(m)) {
          std::cerr << "evaluate: unknown metric tag '" << m
                    << "'; valid tags: dc, mmd, fd, seg\n";
          return 1;
        }
      if (ev.out_csv.empty()) ev.out_csv = default_out("metrics.csv");
      if (ev.out_csv.empty()) {
        std::cerr << "evaluate: --out required (or set SLCD_OUT_ROOT)\n";
        return 1;
      }
      if (ev.schemes && ev.scheme_csv.empty()) {
        ev.scheme_csv = default_out("schemes.csv");
        if (ev.scheme_csv.empty()) {
          std::cerr << "evaluate: --scheme-csv required with --schemes (or set SLCD_OUT_ROOT)\n";
          return 1;
        }
      }
      slcd::EvaluateResult res = slcd::run_evaluate(ev);
      for (const auto& row : res.rows)
        std::cout << row.metric << "=" << slcd::fmt_double(row.value) << "\n";
      std::cout << "wrote " << ev.out_csv << "\n";
      if (ev.schemes) std::cout << "wrote " << ev.scheme_csv << "\n";
    }
  } catch (const slcd::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << " (final loss "
              << slcd::fmt_double(e.final_loss) << ")\n";
    return 2;
  } catch (const slcd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
