#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "slcd/pipeline.hpp"
#include "slcd/slcd.hpp"
#include "testutil.hpp"

using namespace slcd;

namespace {

int count_lines(const std::string& path) {
  std::ifstream f(path);
  int n = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

bool file_contains(const std::string& path, const std::string& needle) {
  std::ifstream f(path);
  std::string all((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return all.find(needle) != std::string::npos;
}

// One end-to-end run shared by every test below: data for both domains, the
// three training stages, then a 2-step translation of the sim set.
struct Pipe {
  testutil::TempDir dir{"pipe"};
  std::string sim_dir, real_dir, both_dir;
  std::string ae_path, teacher_path, cm_path;
  std::string translated_dir, timing_csv;
  std::uint64_t ae_digest = 0, teacher_digest = 0, cm_digest = 0;
  TranslateReport report;

  Pipe() {
    sim_dir = dir.sub("sim");
    real_dir = dir.sub("real");
    both_dir = dir.sub("both");
    ae_path = dir.sub("ae.ckpt");
    teacher_path = dir.sub("teacher.ckpt");
    cm_path = dir.sub("cm.ckpt");
    translated_dir = dir.sub("translated");
    timing_csv = dir.sub("timing.csv");

    run_make_data({"sim", 80, 11, sim_dir, false});
    run_make_data({"real", 80, 12, real_dir, false});
    std::vector<ToySample> both = load_dataset(sim_dir);
    std::vector<ToySample> real = load_dataset(real_dir);
    both.insert(both.end(), real.begin(), real.end());
    save_dataset(both_dir, both);

    TrainOptions ae;
    ae.stage = "ae";
    ae.data_dir = both_dir;
    ae.out_path = ae_path;
    ae.seed = 5;
    ae.cfg = KvConfig::parse_text(
        "ae_latent_dim=16\nae_hidden=96\nae_epochs=2000\nae_target=0.05\n");
    ae_digest = run_train(ae);

    TrainOptions te;
    te.stage = "teacher";
    te.data_dir = both_dir;
    te.out_path = teacher_path;
    te.codec_path = ae_path;
    te.seed = 6;
    te.cfg = KvConfig::parse_text(
        "sched_N=400\nteacher_iters=1500\nteacher_hidden=96\n"
        "adapter=edge\nadapter_iters=300\n");
    teacher_digest = run_train(te);

    TrainOptions di;
    di.stage = "distill";
    di.data_dir = both_dir;
    di.out_path = cm_path;
    di.teacher_path = teacher_path;
    di.seed = 7;
    di.cfg = KvConfig::parse_text(
        "distill_iters=2000\ndistill_batch=32\ndistill_lr=3e-4\n");
    cm_digest = run_train(di);

    TranslateOptions tl;
    tl.model_path = cm_path;
    tl.input_dir = sim_dir;
    tl.out_dir = translated_dir;
    tl.steps = 2;
    tl.strength = 0.5;
    tl.omega = 6.0;
    tl.seed = 7;
    tl.timing_csv = timing_csv;
    report = run_translate(tl);
  }
};

const Pipe& pipe() {
  static Pipe p;
  return p;
}

}  // namespace

TEST(MakeData, WritesLoadableDatasetAndValidates) {
  testutil::TempDir dir("mkdata");
  std::string out = dir.sub("d");
  run_make_data({"sim", 5, 3, out, false});
  std::vector<ToySample> back = load_dataset(out);
  ASSERT_EQ(back.size(), 5u);
  for (const auto& s : back) EXPECT_EQ(s.domain, Domain::simulated);

  EXPECT_THROW((run_make_data({"sim", 5, 3, out, false})), Error);
  run_make_data({"real", 4, 3, out, true});
  back = load_dataset(out);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back[0].domain, Domain::real);

  EXPECT_THROW((run_make_data({"mars", 5, 3, dir.sub("x"), false})), Error);
  EXPECT_THROW((run_make_data({"sim", 0, 3, dir.sub("x"), false})), Error);
  EXPECT_THROW((run_make_data({"sim", 5, 3, "", false})), Error);
}

TEST(Pipeline, TrainStagesWriteCheckpointsAndRunRecords) {
  const Pipe& p = pipe();
  EXPECT_NE(p.ae_digest, 0u);
  EXPECT_NE(p.teacher_digest, 0u);
  EXPECT_NE(p.cm_digest, 0u);

  LoadedCheckpoint ae = load_checkpoint(p.ae_path);
  EXPECT_EQ(ae.ck.kind, CkptKind::codec);
  EXPECT_EQ(ae.digest, p.ae_digest);
  Codec codec = codec_from_checkpoint(ae.ck);
  EXPECT_EQ(codec.latent_dim, 16u);
  EXPECT_LE(codec.holdout_mse, 0.05);

  LoadedCheckpoint te = load_checkpoint(p.teacher_path);
  EXPECT_EQ(te.digest, p.teacher_digest);
  TeacherBundle tb = teacher_from_checkpoint(te.ck);
  EXPECT_EQ(tb.schedule.N, 400);
  EXPECT_FALSE(tb.net.omega_conditioned);
  EXPECT_FALSE(tb.net.hint_adapter.layers.empty());
  EXPECT_EQ(tb.palette.rows(), kPaletteColors);

  LoadedCheckpoint cm = load_checkpoint(p.cm_path);
  EXPECT_EQ(cm.digest, p.cm_digest);
  ConsistencyBundle cb = consistency_from_checkpoint(cm.ck);
  EXPECT_TRUE(cb.cm.net.omega_conditioned);
  // the distilled checkpoint records which teacher produced it
  EXPECT_EQ(cb.cm.teacher_digest, p.teacher_digest);

  for (const std::string& ckpt : {p.ae_path, p.teacher_path, p.cm_path})
    EXPECT_TRUE(std::filesystem::exists(ckpt + ".log")) << ckpt;
  EXPECT_TRUE(file_contains(p.ae_path + ".log", "stage=ae"));
  EXPECT_TRUE(file_contains(p.teacher_path + ".log", "stage=teacher"));
  EXPECT_TRUE(file_contains(p.cm_path + ".log", "stage=distill"));
  EXPECT_TRUE(file_contains(p.cm_path + ".log", "config_digest="));
}

TEST(Pipeline, TrainStageValidation) {
  const Pipe& p = pipe();
  TrainOptions bad;
  bad.stage = "warp";
  bad.data_dir = p.sim_dir;
  bad.out_path = pipe().dir.sub("x.ckpt");
  EXPECT_THROW(run_train(bad), Error);

  bad.stage = "teacher";
  bad.codec_path = "";
  EXPECT_THROW(run_train(bad), Error);

  bad.stage = "distill";
  bad.teacher_path = "";
  EXPECT_THROW(run_train(bad), Error);

  bad.stage = "ae";
  bad.data_dir = "";
  EXPECT_THROW(run_train(bad), Error);
}

TEST(Pipeline, TranslateWritesFullOutputTree) {
  const Pipe& p = pipe();
  EXPECT_EQ(p.report.n_images, 80);
  EXPECT_GT(p.report.mean_seconds, 0.0);

  std::vector<ToySample> out = load_dataset(p.translated_dir);
  std::vector<ToySample> src = load_dataset(p.sim_dir);
  ASSERT_EQ(out.size(), src.size());
  double changed = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    // masks and manifest identity pass through untouched
    EXPECT_EQ(out[i].mask, src[i].mask);
    EXPECT_EQ(out[i].domain, src[i].domain);
    EXPECT_EQ(out[i].seed, src[i].seed);
    changed = std::max(changed, max_abs_diff(out[i].image, src[i].image));
  }
  EXPECT_GT(changed, 0.05);

  // timing CSV has a header plus one row per image and stays out of --out
  EXPECT_EQ(count_lines(p.timing_csv), 81);
  EXPECT_FALSE(std::filesystem::exists(
      std::filesystem::path(p.translated_dir) / "timing.csv"));
}

TEST(Pipeline, TranslateIsDeterministicAndGuardsTheOutputDir) {
  const Pipe& p = pipe();
  TranslateOptions tl;
  tl.model_path = p.cm_path;
  tl.input_dir = p.sim_dir;
  tl.out_dir = p.translated_dir;
  tl.steps = 2;
  tl.strength = 0.5;
  tl.omega = 6.0;
  tl.seed = 7;
  EXPECT_THROW(run_translate(tl), Error);  // non-empty, no force

  tl.out_dir = pipe().dir.sub("translated_rerun");
  run_translate(tl);
  auto a = testutil::read_bytes(
      (std::filesystem::path(p.translated_dir) / "sample_00000.png").string());
  auto b = testutil::read_bytes(
      (std::filesystem::path(tl.out_dir) / "sample_00000.png").string());
  EXPECT_EQ(a, b);

  // a different seed actually changes the pixels
  tl.out_dir = pipe().dir.sub("translated_seed9");
  tl.seed = 9;
  run_translate(tl);
  auto c = testutil::read_bytes(
      (std::filesystem::path(tl.out_dir) / "sample_00000.png").string());
  EXPECT_NE(a, c);
}

TEST(Pipeline, TranslateOptionValidation) {
  const Pipe& p = pipe();
  TranslateOptions tl;
  tl.model_path = p.cm_path;
  tl.input_dir = p.sim_dir;
  tl.out_dir = pipe().dir.sub("tv");
  tl.strength = 1.5;
  EXPECT_THROW(run_translate(tl), Error);
  tl.strength = 0.5;
  tl.steps = 0;
  EXPECT_THROW(run_translate(tl), Error);
  tl.steps = 8;  // consistency models stop at 4
  EXPECT_THROW(run_translate(tl), Error);
  tl.steps = 2;
  tl.omega = 99.0;  // outside the distilled range
  EXPECT_THROW(run_translate(tl), Error);
  tl.omega = 6.0;
  tl.model_path = p.ae_path;  // codec checkpoints cannot translate
  EXPECT_THROW(run_translate(tl), Error);
  tl.model_path = pipe().dir.sub("absent.ckpt");
  EXPECT_THROW(run_translate(tl), Error);
}

TEST(Pipeline, TeacherModelTranslatesWithManySteps) {
  const Pipe& p = pipe();
  TranslateOptions tl;
  tl.model_path = p.teacher_path;
  tl.input_dir = p.sim_dir;
  tl.out_dir = pipe().dir.sub("teacher_out");
  tl.steps = 8;
  tl.strength = 0.5;
  tl.omega = 6.0;
  tl.seed = 7;
  TranslateReport rep = run_translate(tl);
  EXPECT_EQ(rep.n_images, 80);
  EXPECT_EQ(load_dataset(tl.out_dir).size(), 80u);
}

TEST(Pipeline, ControlHintChangesOutputAndZeroScaleDoesNot) {
  const Pipe& p = pipe();
  TranslateOptions base;
  base.model_path = p.cm_path;
  base.input_dir = p.sim_dir;
  base.out_dir = pipe().dir.sub("ctl_none");
  base.steps = 2;
  base.strength = 0.5;
  base.omega = 6.0;
  base.seed = 21;
  run_translate(base);

  TranslateOptions edge = base;
  edge.control = "edge";
  edge.out_dir = pipe().dir.sub("ctl_edge");
  run_translate(edge);

  TranslateOptions zero = base;
  zero.control = "edge";
  zero.control_scale = 0.0;
  zero.out_dir = pipe().dir.sub("ctl_zero");
  run_translate(zero);

  auto none_png = testutil::read_bytes(
      (std::filesystem::path(base.out_dir) / "sample_00000.png").string());
  auto edge_png = testutil::read_bytes(
      (std::filesystem::path(edge.out_dir) / "sample_00000.png").string());
  auto zero_png = testutil::read_bytes(
      (std::filesystem::path(zero.out_dir) / "sample_00000.png").string());
  EXPECT_NE(none_png, edge_png);
  // scale 0 gates the adapter off entirely
  EXPECT_EQ(none_png, zero_png);

  TranslateOptions depth = base;
  depth.control = "depth";
  depth.out_dir = pipe().dir.sub("ctl_depth");
  EXPECT_EQ(run_translate(depth).n_images, 80);
}

TEST(Pipeline, OtPremapChangesColors) {
  const Pipe& p = pipe();
  TranslateOptions ot;
  ot.model_path = p.cm_path;
  ot.input_dir = p.sim_dir;
  ot.out_dir = pipe().dir.sub("ot_on");
  ot.steps = 1;
  ot.strength = 0.5;
  ot.omega = 6.0;
  ot.seed = 33;
  ot.use_ot = true;
  run_translate(ot);

  TranslateOptions plain = ot;
  plain.use_ot = false;
  plain.out_dir = pipe().dir.sub("ot_off");
  run_translate(plain);

  auto a = testutil::read_bytes(
      (std::filesystem::path(ot.out_dir) / "sample_00000.png").string());
  auto b = testutil::read_bytes(
      (std::filesystem::path(plain.out_dir) / "sample_00000.png").string());
  EXPECT_NE(a, b);
}

TEST(Pipeline, StrengthZeroIsTheCodecRoundTrip) {
  const Pipe& p = pipe();
  ConsistencyBundle cb = consistency_from_checkpoint(load_checkpoint(p.cm_path).ck);
  std::vector<ToySample> src = load_dataset(p.sim_dir);
  Tensor direct = decode(cb.codec, encode(cb.codec, src[0].image));
  Tensor viaZero = sdedit_cm(cb.cm, cb.codec, src[0].image, Label{1}, 0.0, 2, 6.0, 55);
  EXPECT_EQ(max_abs_diff(direct, viaZero), 0.0);

  TeacherBundle tb = teacher_from_checkpoint(load_checkpoint(p.teacher_path).ck);
  Tensor viaTeacher = sdedit_teacher(tb.net, tb.schedule, tb.codec, src[0].image,
                                     Label{1}, 0.0, 8, 6.0, 55);
  EXPECT_EQ(max_abs_diff(decode(tb.codec, encode(tb.codec, src[0].image)), viaTeacher), 0.0);
}

TEST(Pipeline, TranslationMovesImagesTowardTheRealDomain) {
  const Pipe& p = pipe();
  std::vector<ToySample> real = load_dataset(p.real_dir);
  std::vector<ToySample> sim = load_dataset(p.sim_dir);
  std::vector<ToySample> tra = load_dataset(p.translated_dir);

  auto stack = [](const std::vector<ToySample>& v) {
    Tensor X({v.size(), v[0].image.numel()});
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v[0].image.numel(); ++j)
        X.at(i, j) = v[i].image.data[j];
    return X;
  };
  Tensor xr = stack(real), xs = stack(sim), xt = stack(tra);
  EmbeddingSpec emb = make_embedding(xr.cols(), kEmbedDim, kEmbeddingSeed);
  Tensor er = embed(emb, xr), es = embed(emb, xs), et = embed(emb, xt);

  double fd_sim = frechet_gaussian(er, es);
  double fd_tra = frechet_gaussian(er, et);
  EXPECT_LT(fd_tra, fd_sim) << "translation did not reduce the domain gap";
}

TEST(Pipeline, EvaluateEmitsOneRowPerMetric) {
  const Pipe& p = pipe();
  EvaluateOptions ev;
  ev.real_dir = p.real_dir;
  ev.gen_dir = p.translated_dir;
  ev.out_csv = pipe().dir.sub("metrics.csv");
  ev.model_tag = "cm";
  ev.steps = 2;
  ev.seed = 7;
  ev.seg_iters = 300;
  EvaluateResult res = run_evaluate(ev);

  std::vector<std::string> expect_metrics{"density",   "coverage",  "mmd2",
                                          "fd",        "seg_pxacc", "seg_miou",
                                          "seg_mdice", "seg_hausdorff"};
  ASSERT_EQ(res.rows.size(), expect_metrics.size());
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    EXPECT_EQ(res.rows[i].metric, expect_metrics[i]);
    EXPECT_EQ(res.rows[i].model, "cm");
    EXPECT_EQ(res.rows[i].steps, 2);
    EXPECT_EQ(res.rows[i].seed, 7u);
    EXPECT_TRUE(std::isfinite(res.rows[i].value)) << res.rows[i].metric;
  }

  std::vector<MetricRow> back = read_metrics_csv(ev.out_csv);
  ASSERT_EQ(back.size(), res.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].metric, res.rows[i].metric);
    EXPECT_EQ(back[i].value, res.rows[i].value);
  }

  EvaluateOptions bad = ev;
  bad.metrics = {"dc", "bogus"};
  EXPECT_THROW(run_evaluate(bad), Error);
  bad = ev;
  bad.real_dir = "";
  EXPECT_THROW(run_evaluate(bad), Error);
}

TEST(Pipeline, SchemeComparisonCoversFiveTrainingRecipes) {
  const Pipe& p = pipe();
  EvaluateOptions ev;
  ev.real_dir = p.real_dir;
  ev.gen_dir = p.translated_dir;
  ev.out_csv = pipe().dir.sub("metrics2.csv");
  ev.metrics = {"mmd"};
  ev.schemes = true;
  ev.scheme_csv = pipe().dir.sub("schemes.csv");
  ev.seg_iters = 200;
  ev.scheme_iters = 250;
  EvaluateResult res = run_evaluate(ev);

  ASSERT_EQ(res.scheme_rows.size(), 5u);
  EXPECT_EQ(res.scheme_rows[0].scheme, "real_only");
  EXPECT_EQ(res.scheme_rows[1].scheme, "color_aug");
  EXPECT_EQ(res.scheme_rows[2].scheme, "color_spatial_aug");
  EXPECT_EQ(res.scheme_rows[3].scheme, "translated_only");
  EXPECT_EQ(res.scheme_rows[4].scheme, "translated_plus_real");
  for (const auto& r : res.scheme_rows) {
    EXPECT_GE(r.pxacc, 0.0);
    EXPECT_LE(r.pxacc, 1.0);
    EXPECT_GE(r.miou, 0.0);
    EXPECT_LE(r.miou, 1.0);
    EXPECT_GE(r.mdice, 0.0);
    EXPECT_LE(r.mdice, 1.0);
    EXPECT_GE(r.hausdorff, 0.0);
  }
  EXPECT_TRUE(std::filesystem::exists(ev.scheme_csv));
  EXPECT_EQ(count_lines(ev.scheme_csv), 6);
}

TEST(Pipeline, RetrainingWithSameSeedIsByteIdentical) {
  testutil::TempDir dir("detrain");
  std::string data = dir.sub("d");
  run_make_data({"sim", 70, 4, data, false});
  TrainOptions ae;
  ae.stage = "ae";
  ae.data_dir = data;
  ae.seed = 9;
  ae.cfg = KvConfig::parse_text(
      "ae_latent_dim=4\nae_hidden=16\nae_epochs=3\nae_target=1.0\n");
  ae.out_path = dir.sub("a.ckpt");
  std::uint64_t d1 = run_train(ae);
  ae.out_path = dir.sub("b.ckpt");
  std::uint64_t d2 = run_train(ae);
  EXPECT_EQ(d1, d2);
  EXPECT_EQ(testutil::read_bytes(dir.sub("a.ckpt")),
            testutil::read_bytes(dir.sub("b.ckpt")));
}

TEST(Hints, EdgeHintMarksLabelBoundaries) {
  std::vector<int> uniform(256, 2);
  Tensor flat = edge_hint(uniform);
  for (double v : flat.data) EXPECT_EQ(v, 0.0);

  // vertical split at x = 8
  std::vector<int> split(256, 0);
  for (int y = 0; y < kImageH; ++y)
    for (int x = 8; x < kImageW; ++x) split[static_cast<std::size_t>(y) * 16 + static_cast<std::size_t>(x)] = 1;
  Tensor h = edge_hint(split);
  EXPECT_DOUBLE_EQ(h.data[5 * 16 + 7], 0.25);       // interior boundary pixel
  EXPECT_DOUBLE_EQ(h.data[0 * 16 + 7], 1.0 / 3.0);  // top row has 3 neighbors
  EXPECT_DOUBLE_EQ(h.data[5 * 16 + 3], 0.0);        // away from the boundary

  std::vector<int> small(10, 0);
  EXPECT_THROW(edge_hint(small), Error);
}

TEST(Hints, DepthHintIsRadialAndMakeHintDispatches) {
  Tensor d = depth_hint();
  EXPECT_DOUBLE_EQ(d.data[0], 1.0);            // corner
  EXPECT_DOUBLE_EQ(d.data[15], 1.0);           // corner
  EXPECT_DOUBLE_EQ(d.data[255], 1.0);          // corner
  EXPECT_LT(d.data[7 * 16 + 7], 0.1);          // near the center
  EXPECT_EQ(d.data[7 * 16 + 7], d.data[8 * 16 + 8]);  // symmetric

  std::vector<int> mask(256, 0);
  EXPECT_EQ(max_abs_diff(make_hint("edge", mask), edge_hint(mask)), 0.0);
  EXPECT_EQ(max_abs_diff(make_hint("depth", mask), depth_hint()), 0.0);
  EXPECT_THROW(make_hint("pose", mask), Error);
}

TEST(Hints, PaletteSamplesImagePixels) {
  std::vector<Tensor> images;
  Tensor img({static_cast<std::size_t>(kImageDim)}, 0.5);  // maps to 0.75 in [0,1]
  images.push_back(img);
  Tensor pal = build_palette(images, 20, 3);
  ASSERT_EQ(pal.rows(), 20u);
  ASSERT_EQ(pal.cols(), 3u);
  for (double v : pal.data) EXPECT_DOUBLE_EQ(v, 0.75);

  Tensor pal2 = build_palette(images, 20, 3);
  EXPECT_EQ(max_abs_diff(pal, pal2), 0.0);
  EXPECT_THROW(build_palette({}, 4, 3), Error);
  EXPECT_THROW(build_palette(images, 0, 3), Error);
}

TEST(Hints, OtPremapMovesPixelsOntoThePalette) {
  // all pixels one color, palette entirely another color: every pixel must
  // land on the target color
  Tensor img({static_cast<std::size_t>(kImageDim)});
  for (std::size_t p = 0; p < 256; ++p) {
    img.data[3 * p] = -0.5;      // 0.25 in [0,1]
    img.data[3 * p + 1] = 0.0;   // 0.5
    img.data[3 * p + 2] = 0.5;   // 0.75
  }
  Tensor palette({300, 3});
  for (std::size_t i = 0; i < 300; ++i) {
    palette.at(i, 0) = 0.9;
    palette.at(i, 1) = 0.1;
    palette.at(i, 2) = 0.4;
  }
  Tensor out = ot_color_premap(img, palette);
  for (std::size_t p = 0; p < 256; ++p) {
    EXPECT_NEAR(out.data[3 * p], 0.8, 1e-9);
    EXPECT_NEAR(out.data[3 * p + 1], -0.8, 1e-9);
    EXPECT_NEAR(out.data[3 * p + 2], -0.2, 1e-9);
  }

  Tensor tiny({30, 3}, 0.5);
  EXPECT_THROW(ot_color_premap(img, tiny), Error);  // palette smaller than pixels
}
