#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <typeinfo>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxgen/config.hpp"
#include "voxgen/harness.hpp"
#include "voxgen/image_io.hpp"
#include "voxgen/serialize.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::string profile = "toy";
  std::string out_dir;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--profile", args.profile, "toy or paper defaults")
      ->check(CLI::IsMember({"toy", "paper"}));
  cmd->add_option("--seed", args.seed, "base seed");
  cmd->add_option("--out", args.out_dir, "output directory");
}

json load_config(const CommonArgs& args) {
  if (args.config_path.empty()) return json::object();
  std::ifstream is(args.config_path);
  if (!is) throw voxgen::ConfigError("cannot read " + args.config_path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw voxgen::ConfigError(std::string("bad config JSON: ") + e.what());
  }
}

void require_out(const CommonArgs& args) {
  if (args.out_dir.empty())
    throw voxgen::ConfigError("this command requires --out");
  fs::create_directories(args.out_dir);
}

void check_root_keys(const json& j, std::initializer_list<const char*> extra) {
  std::vector<const char*> keys = {"dataset", "model", "train", "baseline"};
  keys.insert(keys.end(), extra.begin(), extra.end());
  if (!j.is_object()) throw voxgen::ConfigError("config must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : keys)
      if (key == k) ok = true;
    if (!ok) throw voxgen::ConfigError("unknown config key \"" + key + "\"");
  }
}

std::string item_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem, i, ext);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {"count"});
  require_out(args);
  voxgen::TrainConfig cfg = voxgen::make_train_config(j, args.profile);
  cfg.seed = args.seed;
  std::size_t count = 16;
  voxgen::detail::read_field(j, "count", count, "config");

  auto scenes = voxgen::build_scenes<float>(cfg.dataset, cfg.model, cfg.seed,
                                            20, count);
  json manifest;
  manifest["kind"] = voxgen::dataset_kind_name(cfg.dataset.kind);
  manifest["extent"] = cfg.dataset.extent;
  manifest["seed"] = cfg.seed;
  manifest["items"] = json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string file = item_name("vol", i, "vox1");
    voxgen::write_vox1(args.out_dir + "/" + file, scenes[i].volume);
    voxgen::write_png(args.out_dir + "/" + item_name("vol", i, "png"),
                      voxgen::slice_montage(scenes[i].volume));
    manifest["items"].push_back({{"file", file}, {"label", scenes[i].label}});
  }
  std::ofstream os(args.out_dir + "/manifest.json");
  os << manifest.dump(2) << "\n";
  std::cout << "{\"written\":" << scenes.size() << "}" << std::endl;
  return 0;
}

int cmd_train(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {"resume"});
  require_out(args);
  voxgen::TrainConfig cfg = voxgen::make_train_config(j, args.profile);
  cfg.seed = args.seed;
  cfg.out_dir = args.out_dir;

  voxgen::VolumeTrainer<float> trainer(cfg);
  std::size_t start = 0;
  bool resume = true;
  voxgen::detail::read_field(j, "resume", resume, "config");
  const std::string ckpt = args.out_dir + "/checkpoint";
  if (resume && fs::exists(ckpt + "/manifest.json"))
    start = static_cast<std::size_t>(trainer.load(ckpt));
  voxgen::EvalStats final_stats = trainer.run(start);
  std::cout << "{\"nats\":" << final_stats.nats_mean << ",\"nats_stderr\":"
            << final_stats.nats_stderr << "}" << std::endl;
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {"checkpoint"});
  voxgen::TrainConfig cfg = voxgen::make_train_config(j, args.profile);
  cfg.seed = args.seed;
  std::string ckpt;
  voxgen::detail::read_field(j, "checkpoint", ckpt, "config");
  if (ckpt.empty()) throw voxgen::ConfigError("eval requires \"checkpoint\"");

  voxgen::VolumeTrainer<float> trainer(cfg);
  trainer.load(ckpt);
  voxgen::EvalStats es =
      trainer.evaluate(cfg.eval_importance, voxgen::derive_seed(cfg.seed, 5, 0));
  std::ostringstream line;
  line << "{\"nats\":" << es.nats_mean << ",\"nats_stderr\":" << es.nats_stderr
       << "}";
  std::cout << line.str() << std::endl;
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream os(args.out_dir + "/eval.json");
    os << line.str() << "\n";
  }
  return 0;
}

int cmd_sample(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {"checkpoint", "count", "classes"});
  require_out(args);
  voxgen::TrainConfig cfg = voxgen::make_train_config(j, args.profile);
  cfg.seed = args.seed;
  std::string ckpt;
  voxgen::detail::read_field(j, "checkpoint", ckpt, "config");
  std::size_t count = 8;
  voxgen::detail::read_field(j, "count", count, "config");
  std::vector<std::size_t> classes;
  voxgen::detail::read_field(j, "classes", classes, "config");
  if (!classes.empty() && cfg.model.context != voxgen::ContextKind::class_label)
    throw voxgen::ContextMismatch("classes given but model is not label-driven");

  voxgen::VolumeTrainer<float> trainer(cfg);
  if (!ckpt.empty()) trainer.load(ckpt);
  auto& model = trainer.model();

  voxgen::Tape::Pause pause;
  auto emit = [&](const std::string& dir, const voxgen::Context<float>& ctx,
                  std::size_t i, std::uint64_t stream) {
    voxgen::Rng rng(voxgen::derive_seed(cfg.seed, stream, i));
    auto zs = model.gen.sample_prior(rng);
    auto r = model.gen.rollout(zs, ctx);
    auto probs = model.proj.probs(r.canvas, r.final_state);
    voxgen::write_vox1(dir + "/" + item_name("sample", i, "vox1"), probs);
    voxgen::write_png(dir + "/" + item_name("sample", i, "png"),
                      voxgen::slice_montage(probs));
  };

  if (classes.empty()) {
    voxgen::Context<float> ctx;
    ctx.kind = cfg.model.context;
    if (ctx.kind != voxgen::ContextKind::none)
      throw voxgen::ContextMismatch(
          "context-driven checkpoints need \"classes\" or eval data");
    for (std::size_t i = 0; i < count; ++i) emit(args.out_dir, ctx, i, 30);
  } else {
    for (std::size_t c : classes) {
      if (c >= cfg.model.n_classes)
        throw voxgen::ConfigError("class index out of range");
      const std::string dir =
          args.out_dir + "/class_" + std::to_string(c);
      fs::create_directories(dir);
      voxgen::Context<float> ctx;
      ctx.kind = voxgen::ContextKind::class_label;
      ctx.class_index = c;
      for (std::size_t i = 0; i < count; ++i) emit(dir, ctx, i, 31 + c);
    }
  }
  std::cout << "{\"samples\":" << count << "}" << std::endl;
  return 0;
}

int cmd_complete(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {"checkpoint", "input", "iters", "mask"});
  require_out(args);
  voxgen::TrainConfig cfg = voxgen::make_train_config(j, args.profile);
  cfg.seed = args.seed;
  std::string ckpt, input, mask_kind = "left_half";
  std::size_t iters = 100;
  voxgen::detail::read_field(j, "checkpoint", ckpt, "config");
  voxgen::detail::read_field(j, "input", input, "config");
  voxgen::detail::read_field(j, "iters", iters, "config");
  voxgen::detail::read_field(j, "mask", mask_kind, "config");

  voxgen::VolumeTrainer<float> trainer(cfg);
  if (!ckpt.empty()) trainer.load(ckpt);
  auto& model = trainer.model();

  voxgen::Tensor<float> x = input.empty()
                                ? trainer.eval_scenes().at(0).volume
                                : voxgen::read_vox1<float>(input);
  voxgen::ObservationMask mask =
      mask_kind == "left_half"
          ? voxgen::ObservationMask::left_half_hidden(x.shape())
          : voxgen::ObservationMask::all_observed(x.shape());
  if (mask_kind != "left_half" && mask_kind != "none")
    throw voxgen::ConfigError("unknown mask kind: " + mask_kind);

  voxgen::Context<float> ctx;
  ctx.kind = voxgen::ContextKind::none;
  if (cfg.model.context != voxgen::ContextKind::none)
    ctx = trainer.eval_scenes().at(0).ctx;
  auto res = voxgen::complete(model.gen, model.inf, model.proj, ctx, x, mask,
                              iters, voxgen::derive_seed(cfg.seed, 40, 0));
  for (std::size_t k = 0; k < res.snapshots.size(); ++k) {
    const std::size_t it = res.snapshot_iters[k];
    voxgen::write_vox1(args.out_dir + "/" + item_name("snap", it, "vox1"),
                       res.snapshots[k]);
    voxgen::write_png(args.out_dir + "/" + item_name("snap", it, "png"),
                      voxgen::slice_montage(res.snapshots[k]));
  }
  voxgen::write_vox1(args.out_dir + "/final.vox1", res.final);
  voxgen::write_png(args.out_dir + "/final.png",
                    voxgen::slice_montage(res.final));
  std::cout << "{\"iters\":" << iters << ",\"snapshots\":"
            << res.snapshots.size() << "}" << std::endl;
  return 0;
}

int cmd_render_mesh(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {"canvas", "image", "fit"});
  require_out(args);
  voxgen::MeshProjection::Config pc;
  if (j.contains("image")) {
    const auto& im = j.at("image");
    voxgen::detail::check_keys(im, {"width", "height"}, "image");
    voxgen::detail::read_field(im, "width", pc.camera.width, "image");
    voxgen::detail::read_field(im, "height", pc.camera.height, "image");
  }
  voxgen::MeshProjection proj(pc);
  std::vector<double> canvas(proj.canvas_dim(), 0.0);
  voxgen::detail::read_field(j, "canvas", canvas, "config");
  if (canvas.size() != proj.canvas_dim())
    throw voxgen::ConfigError("canvas must have " +
                              std::to_string(proj.canvas_dim()) + " entries");

  json report;
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    voxgen::detail::check_keys(
        f, {"target_canvas", "target_image", "steps", "k", "sigma", "lr"},
        "fit");
    voxgen::MeshFitConfig fc;
    fc.seed = args.seed;
    voxgen::detail::read_field(f, "steps", fc.steps, "fit");
    voxgen::detail::read_field(f, "k", fc.k_samples, "fit");
    voxgen::detail::read_field(f, "sigma", fc.sigma, "fit");
    voxgen::detail::read_field(f, "lr", fc.lr, "fit");
    voxgen::ImageRGB target;
    if (f.contains("target_image")) {
      std::string path;
      voxgen::detail::read_field(f, "target_image", path, "fit");
      target = voxgen::read_ppm(path);
    } else {
      std::vector<double> truth;
      voxgen::detail::read_field(f, "target_canvas", truth, "fit");
      if (truth.size() != proj.canvas_dim())
        throw voxgen::ConfigError("fit.target_canvas has wrong length");
      target = proj.render(truth);
      voxgen::write_png(args.out_dir + "/target.png", target);
    }
    auto res = voxgen::fit_mesh_single_scene(target, proj, fc);
    canvas = res.canvas;
    report["initial_nll"] = res.initial_nll;
    report["final_nll"] = res.final_nll;
  }

  voxgen::write_png(args.out_dir + "/render.png", proj.render(canvas));
  voxgen::write_obj(args.out_dir + "/mesh.obj", proj.mesh(canvas).to_obj());
  report["vertices"] = proj.sphere().vertices.size();
  report["faces"] = proj.sphere().faces.size();
  std::cout << report.dump() << std::endl;
  return 0;
}

int cmd_train_baseline(const CommonArgs& args) {
  json j = load_config(args);
  check_root_keys(j, {});
  require_out(args);
  voxgen::BaselineConfig cfg = voxgen::make_baseline_config(j, args.profile);
  cfg.seed = args.seed;

  voxgen::BaselineTrainer<float> trainer(cfg);
  voxgen::EvalStats es = trainer.run();
  voxgen::save_checkpoint<float>(args.out_dir + "/checkpoint",
                                 trainer.params(), nullptr,
                                 static_cast<std::int64_t>(cfg.budget));
  std::ostringstream line;
  line << "{\"nats\":" << es.nats_mean << ",\"nats_stderr\":" << es.nats_stderr
       << "}";
  std::cout << line.str() << std::endl;
  std::ofstream os(args.out_dir + "/baseline.json");
  os << line.str() << "\n";
  return 0;
}

int classify_error(const voxgen::Error& e) {
  if (dynamic_cast<const voxgen::BadMagic*>(&e) ||
      dynamic_cast<const voxgen::TruncatedFile*>(&e) ||
      dynamic_cast<const voxgen::CheckpointCorrupt*>(&e) ||
      dynamic_cast<const voxgen::LabelCountMismatch*>(&e) ||
      typeid(e) == typeid(voxgen::Error))
    return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential generative models of volumes and meshes"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
    CommonArgs args;
    CLI::App* cmd = nullptr;
  };
  Sub subs[] = {
      {"gen-data", "materialize a dataset as VOX1 files", cmd_gen_data, {}},
      {"train", "train the sequential volume model", cmd_train, {}},
      {"eval", "score a checkpoint on held-out data", cmd_eval, {}},
      {"sample", "draw prior samples from a checkpoint", cmd_sample, {}},
      {"complete", "in-fill unobserved voxels by chained inference",
       cmd_complete, {}},
      {"render-mesh", "decode, fit, and rasterize a mesh canvas",
       cmd_render_mesh, {}},
      {"train-baseline", "train the deterministic 3-view convnet",
       cmd_train_baseline, {}},
  };
  for (auto& s : subs) {
    s.cmd = app.add_subcommand(s.name, s.help);
    add_common(s.cmd, s.args);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (auto& s : subs) {
    if (!s.cmd->parsed()) continue;
    try {
      return s.run(s.args);
    } catch (const voxgen::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return classify_error(e);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}
