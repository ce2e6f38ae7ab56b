/* Copyright 2026 The MVDeTr Toolkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// mvdetr_cli: synthetic-scene harness.
//
//   mvdetr_cli gradcheck [--config f] [--seed n] [--out dir]
//   mvdetr_cli project   [--config f] [--seed n] [--aug on|off] [--out dir]
//   mvdetr_cli augcheck  [--config f] [--seed n] [--threads n] [--out dir]
//   mvdetr_cli pipeline  [--config f] [--seed n] [--aug on|off] [--threads n]
//   mvdetr_cli fit       [--config f] [--seed n] [--aug on|off] [--threads n]
//   mvdetr_cli eval      --dets f --gts f [--threads n] [--out dir]
//
// Each run writes <out>/report.json. Exit status: 0 ok, 1 a check failed,
// 2 bad input or runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mvdetr/harness/config.hpp"

namespace {

using namespace mvdetr;
using namespace mvdetr::harness;

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = "mvdetr_out";
  int threads = 1;
  std::string aug = "off";
  std::string dets;
  std::string gts;
};

HarnessConfig load_config(const Common& o) {
  return o.config.empty() ? HarnessConfig{} : harness_config_from_json(read_json_file(o.config));
}

RunReport start_report(const std::string& command, const Common& o, const HarnessConfig& cfg) {
  RunReport r(command);
  r["seed"] = o.seed;
  r["aug"] = o.aug == "on";
  r["config"] = to_json(cfg);
  r.timing("threads", o.threads);
  return r;
}

void finish(const Common& o, const RunReport& r) {
  if (!all_finite(r.doc)) throw DivergedLoss("report contains a non-finite number");
  write_json_file((std::filesystem::path(o.out) / "report.json").string(), r.doc);
}

std::string out_file(const Common& o, const std::string& name) {
  return (std::filesystem::path(o.out) / name).string();
}

ModelParams load_or_init_model(const HarnessConfig& cfg, const SceneSpec& spec,
                               std::uint64_t seed) {
  if (!cfg.checkpoint.empty()) {
    ModelParams m = model_from_checkpoint(read_json_file(cfg.checkpoint));
    if (m.config.shape.cameras != spec.num_cameras()) {
      throw ShapeMismatch("checkpoint cameras differ from the scene");
    }
    return m;
  }
  return ModelParams::init(cfg.model_for(spec.num_cameras(), spec.feature_channels), seed);
}

PipelineOptions pipeline_options(const HarnessConfig& cfg, const Common& o) {
  PipelineOptions p;
  p.augment = o.aug == "on";
  p.aug_seed = o.seed;
  p.augmentation = cfg.augmentation;
  p.loss = cfg.loss;
  p.decode = cfg.decode;
  p.head = cfg.head;
  p.threads = o.threads;
  return p;
}

int cmd_gradcheck(const Common& o) {
  const HarnessConfig cfg = load_config(o);
  RunReport r = start_report("gradcheck", o, cfg);
  Stopwatch t;
  const GradcheckResult g = run_gradcheck(cfg.gradcheck, o.seed);
  r.timing("gradcheck_s", t.seconds());
  const bool ok = g.worst() < 1e-5 && g.zero_upstream_max_abs == 0.0;
  r["gradcheck"] = to_json(g);
  r["passed"] = ok;
  finish(o, r);
  std::cout << "gradcheck worst " << g.worst() << (ok ? " ok" : " FAILED") << '\n';
  return ok ? 0 : 1;
}

int cmd_project(const Common& o) {
  const HarnessConfig cfg = load_config(o);
  RunReport r = start_report("project", o, cfg);
  Stopwatch t;
  const Scene scene = generate_scene(cfg.scene, o.seed);
  const Prepared p = prepare(scene, pipeline_options(cfg, o));
  r.timing("project_s", t.seconds());
  Json views = Json::array();
  for (int c = 0; c < scene.num_cameras(); ++c) {
    double worst = 0.0;
    int visible = 0;
    for (const auto& a : scene.views[c].pedestrians) {
      if (!a.visible) continue;
      ++visible;
      const Point2 g = image_to_ground(scene.homographies[c], a.foot);
      const Point2 w = scene.positions[a.id];
      worst = std::max(worst, std::hypot(g.x - w.x, g.y - w.y));
    }
    views.push_back({{"camera", c},
                     {"calibration", mvdetr::to_json(scene.cameras[c])},
                     {"homography", mvdetr::to_json(scene.homographies[c])},
                     {"visible", visible},
                     {"foot_roundtrip_max_m", worst}});
    write_pgm(out_file(o, "projected_cam" + std::to_string(c) + ".pgm"), p.projected[c],
              kBlobChannel, 0.0, 1.0);
  }
  const FeatureMap score = oracle_score(p.projected);
  write_pgm(out_file(o, "oracle_score.pgm"), score, 0, 0.0, 1.0);
  Json pos = Json::array();
  for (const Point2& q : scene.positions) pos.push_back({q.x, q.y});
  r["views"] = views;
  r["positions"] = pos;
  r["heatmap_dims"] = {p.heat_grid.dims.height, p.heat_grid.dims.width};
  finish(o, r);
  std::cout << "projected " << scene.num_cameras() << " views onto "
            << p.heat_grid.dims.height << "x" << p.heat_grid.dims.width << '\n';
  return 0;
}

int cmd_augcheck(const Common& o) {
  const HarnessConfig cfg = load_config(o);
  RunReport r = start_report("augcheck", o, cfg);
  Stopwatch t;
  CoherenceResult total;
  Json scenes = Json::array();
  for (int s = 0; s < cfg.augcheck_scenes; ++s) {
    const Scene scene = generate_scene(cfg.scene, o.seed + s);
    const CoherenceResult c = coherence_check(scene, cfg.augmentation, o.seed + s, o.threads);
    total.checked += c.checked;
    total.passed += c.passed;
    total.failures.insert(total.failures.end(), c.failures.begin(), c.failures.end());
    Json sj = to_json(c);
    sj["scene_seed"] = o.seed + s;
    scenes.push_back(sj);
  }
  r.timing("augcheck_s", t.seconds());
  const bool ok = total.checked > 0 && total.passed == total.checked;
  r["checked"] = total.checked;
  r["passed"] = total.passed;
  r["all_passed"] = ok;
  r["scenes"] = scenes;
  finish(o, r);
  std::cout << "coherence " << total.passed << "/" << total.checked << (ok ? " ok" : " FAILED")
            << '\n';
  return ok ? 0 : 1;
}

int cmd_pipeline(const Common& o) {
  const HarnessConfig cfg = load_config(o);
  RunReport r = start_report("pipeline", o, cfg);
  const Scene scene = generate_scene(cfg.scene, o.seed);
  const ModelParams model = load_or_init_model(cfg, cfg.scene, o.seed);
  const PipelineResult res = run_pipeline(scene, model, pipeline_options(cfg, o));
  r.timings(res.timings);
  r["result"] = to_json(res);
  finish(o, r);
  write_pgm(out_file(o, "score.pgm"), res.score, 0, 0.0, 1.0);
  {
    std::ofstream d(out_file(o, "detections.txt"));
    write_detections(d, 0, res.detections);
    std::ofstream g(out_file(o, "ground_truth.txt"));
    write_ground_truth(g, 0, scene.positions);
  }
  std::cout << "pipeline MODA " << res.eval.moda << " MODP " << res.eval.modp << " ("
            << res.detections.size() << " detections, " << scene.positions.size()
            << " pedestrians)\n";
  return 0;
}

int cmd_fit(const Common& o) {
  const HarnessConfig cfg = load_config(o);
  RunReport r = start_report("fit", o, cfg);
  const Scene scene = generate_scene(cfg.fit_scene, o.seed);
  ModelParams model = load_or_init_model(cfg, cfg.fit_scene, o.seed);
  FitOptions fo;
  fo.steps = cfg.fit_steps;
  fo.lr = cfg.fit_lr;
  fo.pipeline = pipeline_options(cfg, o);
  const FitResult res = fit_toy(scene, model, fo);
  r.timing("fit_s", res.seconds);
  r["result"] = to_json(res);
  finish(o, r);
  write_json_file(out_file(o, "checkpoint.json"), model_checkpoint_to_json(model));
  std::cout << "fit loss " << res.loss_log.front() << " -> " << res.loss_log.back() << " after "
            << res.updates << " steps, MODA " << res.eval.moda << '\n';
  return 0;
}

int cmd_eval(const Common& o) {
  const HarnessConfig cfg = load_config(o);
  RunReport r = start_report("eval", o, cfg);
  std::ifstream dets(o.dets), gts(o.gts);
  if (!dets) throw FormatError("cannot open " + o.dets);
  if (!gts) throw FormatError("cannot open " + o.gts);
  const std::vector<Frame> frames = join_frames(read_detections(dets), read_ground_truth(gts));
  Stopwatch t;
  const EvalReport e = evaluate(frames, kMatchThreshold, o.threads);
  r.timing("eval_s", t.seconds());
  r["eval"] = to_json(e);
  r["frames"] = frames.size();
  finish(o, r);
  std::cout << "MODA " << e.moda << " MODP " << e.modp << " precision " << e.precision
            << " recall " << e.recall << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiview detection harness on synthetic scenes"};
  app.require_subcommand(1);
  Common o;

  auto add_common = [&](CLI::App* sub, bool aug, bool threads) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
    if (threads) sub->add_option("--threads", o.threads, "worker threads")->check(CLI::Range(1, 256));
    if (aug) {
      sub->add_option("--aug", o.aug, "view-coherent augmentation")
          ->check(CLI::IsMember({"on", "off"}));
    }
  };

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gc, false, true);
  CLI::App* pr = app.add_subcommand("project", "project oracle features to the ground plane");
  add_common(pr, true, true);
  CLI::App* ac = app.add_subcommand("augcheck", "augmentation coherence suite");
  add_common(ac, false, true);
  CLI::App* pl = app.add_subcommand("pipeline", "end-to-end run on a synthetic scene");
  add_common(pl, true, true);
  CLI::App* ft = app.add_subcommand("fit", "gradient-descent fit of the detector head");
  add_common(ft, true, true);
  CLI::App* ev = app.add_subcommand("eval", "MODA/MODP of interchange files");
  add_common(ev, false, true);
  ev->add_option("--dets", o.dets, "detections file")->required()->check(CLI::ExistingFile);
  ev->add_option("--gts", o.gts, "ground-truth file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(o.out);
    if (gc->parsed()) return cmd_gradcheck(o);
    if (pr->parsed()) return cmd_project(o);
    if (ac->parsed()) return cmd_augcheck(o);
    if (pl->parsed()) return cmd_pipeline(o);
    if (ft->parsed()) return cmd_fit(o);
    if (ev->parsed()) return cmd_eval(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
