#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "slcd/checkpoint.hpp"
#include "slcd/config.hpp"
#include "slcd/dataset.hpp"
#include "slcd/translate.hpp"

namespace slcd {

inline constexpr std::uint64_t kEmbeddingSeed = 0xE4BED;
inline constexpr std::size_t kEmbedDim = 64;
inline constexpr std::size_t kPaletteColors = 1024;

struct MakeDataOptions {
  std::string domain = "sim";
  int n = 200;
  std::uint64_t seed = 7;
  std::string out;
  bool force = false;
};

inline void run_make_data(const MakeDataOptions& o) {
  require(o.domain == "sim" || o.domain == "real",
          "make-data: domain must be 'sim' or 'real'");
  require(o.n >= 1, "make-data: n must be >= 1");
  require(!o.out.empty(), "make-data: output directory required");
  std::vector<ToySample> samples = o.domain == "sim"
                                       ? gen_simulated(o.n, o.seed)
                                       : gen_real(o.n, o.seed);
  save_dataset(o.out, samples, o.force);
}

struct TrainOptions {
  std::string stage;         // ae | teacher | distill
  std::string data_dir;
  std::string out_path;
  std::string codec_path;    // teacher stage dependency
  std::string teacher_path;  // distill stage dependency
  std::uint64_t seed = 7;
  KvConfig cfg;              // hyperparameter overrides
};

namespace detail {

inline std::uint64_t config_digest(const TrainOptions& o) {
  std::string s = o.stage + "|" + std::to_string(o.seed);
  for (const auto& [k, v] : o.cfg.values) s += "|" + k + "=" + v;
  return fnv1a(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

inline void append_run_record(const std::string& ckpt_path, const std::string& stage,
                              std::uint64_t cfg_digest, double wall_s,
                              double final_loss) {
  std::ofstream log(ckpt_path + ".log", std::ios::app);
  require(log.good(), "train: cannot append run record for " + ckpt_path);
  log << "stage=" << stage << " config_digest=" << cfg_digest
      << " wall_s=" << fmt_double(wall_s) << " final_loss=" << fmt_double(final_loss)
      << '\n';
}

inline Tensor stack_images(const std::vector<ToySample>& samples) {
  require(!samples.empty(), "stack_images: empty dataset");
  Tensor X({samples.size(), samples[0].image.numel()});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].image.numel() == samples[0].image.numel(),
            "stack_images: ragged image sizes");
    for (std::size_t j = 0; j < samples[i].image.numel(); ++j)
      X.at(i, j) = samples[i].image.data[j];
  }
  return X;
}

inline int domain_label(Domain d) { return d == Domain::simulated ? 0 : 1; }

}  // namespace detail

// Trains one stage and writes its checkpoint. Returns the checkpoint digest.
inline std::uint64_t run_train(const TrainOptions& o) {
  require(o.stage == "ae" || o.stage == "teacher" || o.stage == "distill",
          "train: stage must be ae, teacher or distill");
  require(!o.data_dir.empty(), "train: --data required");
  require(!o.out_path.empty(), "train: --out required");
  auto t0 = std::chrono::steady_clock::now();
  std::vector<ToySample> samples = load_dataset(o.data_dir);
  std::vector<Tensor> images;
  for (const auto& s : samples) images.push_back(s.image);

  std::uint64_t digest = 0;
  double final_loss = 0.0;

  if (o.stage == "ae") {
    CodecTrainConfig cc;
    cc.latent_dim = static_cast<std::size_t>(o.cfg.get_int("ae_latent_dim", static_cast<long long>(cc.latent_dim)));
    cc.hidden = static_cast<std::size_t>(o.cfg.get_int("ae_hidden", static_cast<long long>(cc.hidden)));
    cc.lr = o.cfg.get_double("ae_lr", cc.lr);
    cc.batch = static_cast<std::size_t>(o.cfg.get_int("ae_batch", static_cast<long long>(cc.batch)));
    cc.max_epochs = static_cast<int>(o.cfg.get_int("ae_epochs", cc.max_epochs));
    cc.target = o.cfg.get_double("ae_target", cc.target);
    Codec codec = train_autoencoder(images, cc, o.seed);
    final_loss = codec.holdout_mse;
    digest = save_checkpoint(o.out_path,
                             codec_to_checkpoint(codec, {{"train.seed", std::to_string(o.seed)}}));
  } else if (o.stage == "teacher") {
    require(!o.codec_path.empty(),
            "train: teacher stage needs --codec; run the ae stage first");
    Codec codec = codec_from_checkpoint(load_checkpoint(o.codec_path).ck);
    NoiseSchedule sched = make_schedule(
        ScheduleKind::ddpm_linear, static_cast<int>(o.cfg.get_int("sched_N", 1000)),
        o.cfg.get_double("beta_lo", 1e-4), o.cfg.get_double("beta_hi", 2e-2));
    Tensor latents({samples.size(), codec.latent_dim});
    std::vector<int> labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Tensor z = encode(codec, samples[i].image);
      for (std::size_t j = 0; j < codec.latent_dim; ++j) latents.at(i, j) = z.data[j];
      labels.push_back(detail::domain_label(samples[i].domain));
    }
    TeacherTrainConfig tc;
    tc.iters = static_cast<int>(o.cfg.get_int("teacher_iters", tc.iters));
    tc.batch = static_cast<int>(o.cfg.get_int("teacher_batch", tc.batch));
    tc.lr = o.cfg.get_double("teacher_lr", tc.lr);
    tc.hidden = static_cast<std::size_t>(o.cfg.get_int("teacher_hidden", static_cast<long long>(tc.hidden)));
    tc.hidden_layers = static_cast<int>(o.cfg.get_int("teacher_layers", tc.hidden_layers));
    tc.label_dropout = o.cfg.get_double("teacher_label_dropout", tc.label_dropout);
    tc.hint_dim = static_cast<std::size_t>(kHintDim);
    TeacherTrainResult tr = train_teacher(latents, labels, sched, tc, o.seed);
    final_loss = tr.final_loss;

    std::string adapter_kind = o.cfg.get_str("adapter", "edge");
    if (!adapter_kind.empty() && adapter_kind != "none") {
      Tensor hints({samples.size(), static_cast<std::size_t>(kHintDim)});
      for (std::size_t i = 0; i < samples.size(); ++i) {
        Tensor h = make_hint(adapter_kind, samples[i].mask);
        for (std::size_t j = 0; j < h.numel(); ++j) hints.at(i, j) = h.data[j];
      }
      AdapterTrainConfig ac;
      ac.iters = static_cast<int>(o.cfg.get_int("adapter_iters", ac.iters));
      ac.batch = static_cast<int>(o.cfg.get_int("adapter_batch", ac.batch));
      ac.lr = o.cfg.get_double("adapter_lr", ac.lr);
      train_hint_adapter(tr.net, latents, labels, hints, sched, ac,
                         derive_seed(o.seed, 0xADA));
    }

    Tensor palette = build_palette(images, kPaletteColors, derive_seed(o.seed, 0x9A1));
    digest = save_checkpoint(
        o.out_path,
        teacher_to_checkpoint({tr.net, sched, codec, palette},
                              {{"train.seed", std::to_string(o.seed)},
                               {"train.final_loss", fmt_double(tr.final_loss)}}));
  } else {
    require(!o.teacher_path.empty(),
            "train: distill stage needs --teacher; run the teacher stage first");
    LoadedCheckpoint lt = load_checkpoint(o.teacher_path);
    TeacherBundle tb = teacher_from_checkpoint(lt.ck);
    Tensor latents({samples.size(), tb.codec.latent_dim});
    std::vector<int> labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Tensor z = encode(tb.codec, samples[i].image);
      for (std::size_t j = 0; j < tb.codec.latent_dim; ++j) latents.at(i, j) = z.data[j];
      labels.push_back(detail::domain_label(samples[i].domain));
    }
    DistillConfig dc;
    dc.iters = static_cast<int>(o.cfg.get_int("distill_iters", dc.iters));
    dc.batch = static_cast<int>(o.cfg.get_int("distill_batch", dc.batch));
    dc.lr = o.cfg.get_double("distill_lr", dc.lr);
    dc.ema = o.cfg.get_double("distill_ema", dc.ema);
    dc.boundary_steps = static_cast<int>(o.cfg.get_int("distill_boundary_steps", dc.boundary_steps));
    dc.omega_min = o.cfg.get_double("omega_min", dc.omega_min);
    dc.omega_max = o.cfg.get_double("omega_max", dc.omega_max);
    dc.sigma_data = o.cfg.get_double("sigma_data", dc.sigma_data);
    dc.seed = o.seed;
    if (o.cfg.get_str("distill_distance", "sq_l2") == "pseudo_huber")
      dc.distance = DistillConfig::Distance::pseudo_huber;
    DistillLog dlog;
    ConsistencyModel cm = distill(tb.net, tb.schedule, latents, labels, dc, &dlog);
    cm.teacher_digest = lt.digest;
    final_loss = dlog.final_loss;
    digest = save_checkpoint(
        o.out_path,
        consistency_to_checkpoint({cm, tb.codec, tb.palette},
                                  {{"train.seed", std::to_string(o.seed)},
                                   {"train.final_loss", fmt_double(dlog.final_loss)}}));
  }

  double wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::append_run_record(o.out_path, o.stage, detail::config_digest(o), wall_s, final_loss);
  return digest;
}

struct TranslateOptions {
  std::string model_path;
  std::string input_dir;
  std::string out_dir;
  int steps = 2;
  double strength = 0.5;
  double omega = 6.0;
  bool use_ot = false;
  std::string control;  // "", edge, depth
  double control_scale = 1.0;
  std::uint64_t seed = 7;
  bool force = false;
  std::string timing_csv;  // optional per-image timing record
};

struct TranslateReport {
  int n_images = 0;
  double mean_seconds = 0.0;
};

// Translates every input sample, copying its mask through untouched, and
// writes one output image + mask pair per input plus the pass-through
// manifest. Timing goes to stdout-level reporting and the optional CSV, never
// into the output tree.
inline TranslateReport run_translate(const TranslateOptions& o) {
  require(!o.model_path.empty() && !o.input_dir.empty() && !o.out_dir.empty(),
          "translate: --model, --input and --out are required");
  require(o.strength >= 0.0 && o.strength <= 1.0,
          "translate: strength must be in [0,1]");
  require(o.steps >= 1, "translate: steps must be >= 1");

  LoadedCheckpoint lc = load_checkpoint(o.model_path);
  require(lc.ck.kind == CkptKind::teacher || lc.ck.kind == CkptKind::consistency,
          "translate: model checkpoint must be teacher or consistency kind");

  std::vector<ToySample> inputs = load_dataset(o.input_dir);

  namespace fs = std::filesystem;
  fs::path root(o.out_dir);
  if (fs::exists(root)) {
    require(fs::is_directory(root), "translate: not a directory: " + o.out_dir);
    if (!fs::is_empty(root))
      require(o.force, "translate: refusing to write into non-empty " + o.out_dir +
                           " (use force)");
  } else {
    fs::create_directories(root);
  }

  TranslateReport report;
  report.n_images = static_cast<int>(inputs.size());
  std::vector<double> per_image_s;
  const Label target_label = 1;  // condition on the real-domain token

  auto translate_one = [&](const ToySample& sample, std::uint64_t img_seed,
                           auto&& model_call) {
    Tensor img = sample.image;
    if (o.use_ot) {
      const Tensor& palette = lc.ck.tensor_at("ot.palette");
      img = ot_color_premap(img, palette);
    }
    Tensor hint;
    const Tensor* hint_ptr = nullptr;
    if (!o.control.empty()) {
      hint = make_hint(o.control, sample.mask);
      hint_ptr = &hint;
    }
    return model_call(img, hint_ptr, img_seed);
  };

  std::vector<Tensor> outputs(inputs.size());
  if (lc.ck.kind == CkptKind::teacher) {
    TeacherBundle tb = teacher_from_checkpoint(lc.ck);
    if (!o.control.empty()) {
      require(!tb.net.hint_adapter.layers.empty(),
              "translate: model has no hint adapter; retrain the teacher with one");
      tb.net.hint_scale = o.control_scale;
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto t0 = std::chrono::steady_clock::now();
      outputs[i] = translate_one(
          inputs[i], derive_seed(o.seed, i),
          [&](const Tensor& img, const Tensor* hint, std::uint64_t s) {
            return sdedit_teacher(tb.net, tb.schedule, tb.codec, img,
                                  target_label, o.strength, o.steps, o.omega, s,
                                  hint);
          });
      per_image_s.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  } else {
    ConsistencyBundle cb = consistency_from_checkpoint(lc.ck);
    require(o.steps <= 4, "translate: consistency models support at most 4 steps");
    require(o.omega >= cb.cm.omega_min && o.omega <= cb.cm.omega_max,
            "translate: omega outside the distilled range");
    if (!o.control.empty()) {
      require(!cb.cm.net.hint_adapter.layers.empty(),
              "translate: model has no hint adapter; retrain the teacher with one");
      cb.cm.net.hint_scale = o.control_scale;
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto t0 = std::chrono::steady_clock::now();
      outputs[i] = translate_one(
          inputs[i], derive_seed(o.seed, i),
          [&](const Tensor& img, const Tensor* hint, std::uint64_t s) {
            return sdedit_cm(cb.cm, cb.codec, img, target_label, o.strength,
                             o.steps, o.omega, s, hint);
          });
      per_image_s.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string id = sample_id(static_cast<int>(i));
    write_image_png((root / ("sample_" + id + ".png")).string(), outputs[i],
                    kImageH, kImageW);
    write_mask_png((root / ("sample_" + id + "_mask.png")).string(),
                   inputs[i].mask, kImageH, kImageW);
  }
  std::ofstream manifest(root / "manifest.txt");
  require(manifest.good(), "translate: cannot write manifest in " + o.out_dir);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    manifest << sample_id(static_cast<int>(i)) << ' '
             << domain_name(inputs[i].domain) << ' ' << inputs[i].seed << '\n';
  require(manifest.good(), "translate: manifest write failed");

  double total = 0.0;
  for (double s : per_image_s) total += s;
  report.mean_seconds = inputs.empty() ? 0.0 : total / static_cast<double>(inputs.size());

  if (!o.timing_csv.empty()) {
    std::ofstream tf(o.timing_csv);
    require(tf.good(), "translate: cannot open timing csv " + o.timing_csv);
    tf << "index,seconds\n";
    for (std::size_t i = 0; i < per_image_s.size(); ++i)
      tf << i << ',' << fmt_double(per_image_s[i]) << '\n';
  }
  return report;
}

struct EvaluateOptions {
  std::string real_dir;
  std::string gen_dir;
  std::string out_csv;
  std::vector<std::string> metrics{"dc", "mmd", "fd", "seg"};
  bool schemes = false;
  std::string scheme_csv;
  std::string model_tag = "-";
  int steps = 0;
  std::uint64_t seed = 7;
  int knn_k = 5;
  int seg_iters = 1500;
  int scheme_iters = 1500;
};

struct EvaluateResult {
  std::vector<MetricRow> rows;
  std::vector<SchemeRow> scheme_rows;
};

inline bool valid_metric_tag(const std::string& tag) {
  return tag == "dc" || tag == "mmd" || tag == "fd" || tag == "seg";
}

inline EvaluateResult run_evaluate(const EvaluateOptions& o) {
  require(!o.real_dir.empty() && !o.gen_dir.empty(),
          "evaluate: --real and --gen are required");
  for (const auto& m : o.metrics)
    require(valid_metric_tag(m),
            "evaluate: unknown metric tag '" + m + "'; valid tags: dc, mmd, fd, seg");

  std::vector<ToySample> real = load_dataset(o.real_dir);
  std::vector<ToySample> gen = load_dataset(o.gen_dir);
  Tensor real_rows = detail::stack_images(real);
  Tensor gen_rows = detail::stack_images(gen);

  EvaluateResult result;
  auto push = [&](const std::string& metric, double value) {
    result.rows.push_back(MetricRow{metric, o.gen_dir, o.model_tag, o.steps, o.seed, value});
  };

  EmbeddingSpec emb;
  Tensor real_emb, gen_emb;
  bool need_emb = false;
  for (const auto& m : o.metrics)
    if (m == "dc" || m == "fd") need_emb = true;
  if (need_emb) {
    emb = make_embedding(real_rows.cols(), kEmbedDim, kEmbeddingSeed);
    real_emb = embed(emb, real_rows);
    gen_emb = embed(emb, gen_rows);
  }

  for (const auto& m : o.metrics) {
    if (m == "dc") {
      DensityCoverage dc = density_coverage(real_emb, gen_emb, o.knn_k);
      push("density", dc.density);
      push("coverage", dc.coverage);
    } else if (m == "mmd") {
      push("mmd2", mmd2(real_rows, gen_rows, false));
    } else if (m == "fd") {
      push("fd", frechet_gaussian(real_emb, gen_emb));
    } else if (m == "seg") {
      SegTrainConfig sc;
      sc.iters = o.seg_iters;
      Segmenter seg = train_segmenter(real, sc, derive_seed(o.seed, 0x5E9));
      std::vector<Tensor> gimages;
      std::vector<std::vector<int>> gmasks;
      for (const auto& s : gen) {
        gimages.push_back(s.image);
        gmasks.push_back(s.mask);
      }
      SegEvalResult r = semantic_consistency_eval(seg, gimages, gmasks);
      push("seg_pxacc", r.pixel_accuracy);
      push("seg_miou", r.mean_iou);
      push("seg_mdice", r.mean_dice);
      push("seg_hausdorff", r.mean_hausdorff);
    }
  }

  if (o.schemes) {
    require(real.size() >= 63, "evaluate: schemes need at least 63 real samples");
    std::size_t n_train = real.size() * 4 / 5;
    if (real.size() - n_train < 10) n_train = real.size() - 10;
    require(n_train >= 50, "evaluate: schemes need at least 50 training samples");
    std::vector<ToySample> train_real(real.begin(), real.begin() + static_cast<long>(n_train));
    std::vector<ToySample> eval_real(real.begin() + static_cast<long>(n_train), real.end());

    auto run_scheme = [&](const std::string& name, const std::vector<ToySample>& data,
                          bool jitter, bool spatial, const Segmenter* warm,
                          int iters) {
      SegTrainConfig sc;
      sc.iters = iters;
      sc.color_jitter = jitter;
      sc.spatial_aug = spatial;
      Segmenter seg = train_segmenter(data, sc, derive_seed(o.seed, 0x5C0 + result.scheme_rows.size()), warm);
      SegEvalResult r = eval_segmenter(seg, eval_real);
      result.scheme_rows.push_back(
          SchemeRow{name, r.pixel_accuracy, r.mean_iou, r.mean_dice, r.mean_hausdorff});
      return seg;
    };

    run_scheme("real_only", train_real, false, false, nullptr, o.scheme_iters);
    run_scheme("color_aug", train_real, true, false, nullptr, o.scheme_iters);
    run_scheme("color_spatial_aug", train_real, true, true, nullptr, o.scheme_iters);
    Segmenter translated = run_scheme("translated_only", gen, false, false, nullptr, o.scheme_iters);
    run_scheme("translated_plus_real", train_real, false, false, &translated,
               o.scheme_iters / 2);
    if (!o.scheme_csv.empty()) write_scheme_csv(o.scheme_csv, result.scheme_rows);
  }

  if (!o.out_csv.empty()) write_metrics_csv(o.out_csv, result.rows);
  return result;
}

}  // namespace slcd
