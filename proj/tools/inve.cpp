// inve: headless driver for the library and the HTTP service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "inve/edit_store.hpp"
#include "inve/errors.hpp"
#include "inve/render.hpp"
#include "inve/service.hpp"
#include "inve/synthetic.hpp"
#include "inve/tracking.hpp"
#include "inve/training.hpp"

namespace fs = std::filesystem;
using namespace inve;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered neural atlas training, edit propagation and point tracking"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a procedural clip with exact flow and masks");
  fs::path synth_out;
  std::string synth_spec;
  synth->add_option("--out", synth_out, "Clip directory")->required();
  synth->add_option("--spec", synth_spec, "JSON file with synthetic spec overrides");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a clip");
  fs::path train_clip, train_out, train_config, train_log;
  std::string train_profile = "desk";
  int train_every = 100;
  std::optional<int> forward_iters, inverse_iters;
  std::optional<std::uint64_t> train_seed;
  train_cmd->add_option("--clip", train_clip, "Clip directory")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--config", train_config, "Training config JSON");
  train_cmd->add_option("--profile", train_profile, "desk or paper (ignored with --config)");
  train_cmd->add_option("--forward-iters", forward_iters);
  train_cmd->add_option("--inverse-iters", inverse_iters);
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--log", train_log, "Loss history CSV");
  train_cmd->add_option("--print-every", train_every, "Progress line interval");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Report reconstruction PSNR and inverse round trip");
  fs::path eval_clip, eval_model;
  eval_cmd->add_option("--clip", eval_clip)->required();
  eval_cmd->add_option("--model", eval_model)->required();

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "Modify an edit document directory");
  edit_cmd->require_subcommand(1);
  auto* edit_add = edit_cmd->add_subcommand("add", "Add an edit from request JSON");
  auto* edit_rm = edit_cmd->add_subcommand("remove", "Remove an edit by id");
  auto* edit_ls = edit_cmd->add_subcommand("list", "Print the document");
  fs::path edits_dir, edit_request, edit_image, edit_model;
  std::uint64_t edit_id = 0;
  for (auto* c : {edit_add, edit_rm, edit_ls}) c->add_option("--edits", edits_dir, "Edit directory")->required();
  edit_add->add_option("--request", edit_request, "Edit JSON ({kind, layer, payload})")->required();
  edit_add->add_option("--image", edit_image, "Texture PNG for texture edits");
  edit_add->add_option("--model", edit_model, "Checkpoint, needed for frame-space strokes");
  edit_rm->add_option("--id", edit_id)->required();

  // render
  auto* render_cmd = app.add_subcommand("render", "Render one edited frame to PNG");
  fs::path render_clip, render_model, render_edits, render_out;
  int render_t = 0;
  render_cmd->add_option("--clip", render_clip)->required();
  render_cmd->add_option("--model", render_model)->required();
  render_cmd->add_option("--edits", render_edits, "Edit directory (default: no edits)");
  render_cmd->add_option("--frame", render_t)->required();
  render_cmd->add_option("--out", render_out)->required();

  // export
  auto* export_cmd = app.add_subcommand("export", "Render every edited frame into a directory");
  fs::path export_clip, export_model, export_edits, export_out;
  export_cmd->add_option("--clip", export_clip)->required();
  export_cmd->add_option("--model", export_model)->required();
  export_cmd->add_option("--edits", export_edits);
  export_cmd->add_option("--out", export_out)->required();

  // atlas
  auto* atlas_cmd = app.add_subcommand("atlas", "Render an atlas sub-square to PNG");
  fs::path atlas_model, atlas_edits, atlas_out;
  std::string atlas_layer = "fg";
  int atlas_size = 512;
  atlas_cmd->add_option("--model", atlas_model)->required();
  atlas_cmd->add_option("--edits", atlas_edits);
  atlas_cmd->add_option("--layer", atlas_layer);
  atlas_cmd->add_option("--size", atlas_size);
  atlas_cmd->add_option("--out", atlas_out)->required();

  // track
  auto* track_cmd = app.add_subcommand("track", "Track a pixel through the clip (JSON to stdout)");
  fs::path track_model;
  double track_x = 0, track_y = 0;
  int track_t = 0, track_begin = 0, track_end = -1;
  std::string track_layer = "fg";
  track_cmd->add_option("--model", track_model)->required();
  track_cmd->add_option("--x", track_x)->required();
  track_cmd->add_option("--y", track_y)->required();
  track_cmd->add_option("--t", track_t)->required();
  track_cmd->add_option("--layer", track_layer);
  track_cmd->add_option("--from", track_begin);
  track_cmd->add_option("--to", track_end);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string serve_root = env_or("INVE_ROOT", "inve-data");
  std::string serve_bind = env_or("INVE_BIND", "127.0.0.1:8080");
  int serve_progress = 10;
  serve_cmd->add_option("--root", serve_root, "Data directory (env INVE_ROOT)");
  serve_cmd->add_option("--bind", serve_bind, "host:port (env INVE_BIND)");
  serve_cmd->add_option("--progress-every", serve_progress, "Iterations between progress events");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      SyntheticSpec spec;
      if (!synth_spec.empty()) spec = synthetic_spec_from_json(read_text(synth_spec));
      spec.validate();
      save_clip(generate_synthetic(spec).clip, synth_out);
      std::printf("wrote %d frames (%dx%d) to %s\n", spec.frames, spec.width, spec.height,
                  synth_out.c_str());
    } else if (*train_cmd) {
      TrainConfig cfg = !train_config.empty() ? load_train_config(train_config)
                        : train_profile == "paper" ? TrainConfig::paper()
                        : train_profile == "desk"  ? TrainConfig::desk()
                                                   : throw ConfigError("unknown profile '" + train_profile + "'");
      if (forward_iters) cfg.forward_iters = *forward_iters;
      if (inverse_iters) cfg.inverse_iters = *inverse_iters;
      if (train_seed) cfg.seed = *train_seed;
      cfg.validate();
      const VideoClip clip = load_clip(train_clip);
      Model model(ModelConfig::named(cfg.profile), clip.dims, cfg.seed);
      TrainCallbacks cb;
      cb.on_progress = [&](const LossRecord& r) {
        if (r.iteration % static_cast<std::uint64_t>(std::max(1, train_every)) != 0) return;
        if (r.phase == Phase::forward)
          std::printf("[forward %5llu] recon %.5f rigid %.5f flow %.5f sparse %.5f alpha %.5f  %.1f it/s\n",
                      static_cast<unsigned long long>(r.iteration), r.recon, r.rigid, r.flow, r.sparse,
                      r.alpha, r.iters_per_sec);
        else
          std::printf("[inverse %5llu] inverse %.6f  %.1f it/s\n", static_cast<unsigned long long>(r.iteration),
                      r.inverse, r.iters_per_sec);
        std::fflush(stdout);
      };
      const TrainState st = train(clip, model, cfg, cb);
      save_model(train_out, model);
      if (!train_log.empty()) {
        std::ofstream log(train_log);
        log << st.history.to_csv();
      }
      std::printf("done after %llu iterations%s; PSNR %.2f dB; saved %s\n",
                  static_cast<unsigned long long>(st.iteration), st.stopped_early ? " (stopped early)" : "",
                  reconstruction_psnr(model, clip), train_out.c_str());
    } else if (*eval_cmd) {
      const VideoClip clip = load_clip(eval_clip);
      const Model model = load_model(eval_model);
      std::printf("psnr_db %.4f\n", reconstruction_psnr(model, clip));
      if (model.inverse_ready()) {
        std::vector<PixelCoord> all;
        for (int t = 0; t < clip.dims.frames; ++t)
          for (int y = 0; y < clip.dims.height; ++y)
            for (int x = 0; x < clip.dims.width; ++x) all.push_back({double(x), double(y), t});
        std::printf("round_trip_px %.4f\n", round_trip_error(model, all));
      }
    } else if (*edit_cmd) {
      if (*edit_ls) {
        std::printf("%s\n", document_json(load_document(edits_dir)).c_str());
      } else if (*edit_rm) {
        EditDocument doc = load_document(edits_dir);
        if (!doc.remove(edit_id)) throw ConfigError("no edit " + std::to_string(edit_id));
        save_document(edits_dir, doc);
        std::printf("version %llu\n", static_cast<unsigned long long>(doc.version()));
      } else {
        EditDocument doc = load_document(edits_dir);
        EditPayload payload = parse_edit_request(read_text(edit_request), [&](const std::string& name) {
          if (!edit_image.empty()) return read_png_rgba(edit_image);
          return read_png_rgba(edits_dir / name);
        });
        std::optional<Model> model;
        if (!edit_model.empty()) model = load_model(edit_model);
        auto prepare = [&](SketchStroke& s) { prepare_stroke(s, model ? &*model : nullptr); };
        if (auto* s = std::get_if<SketchStroke>(&payload)) prepare(*s);
        if (auto* m = std::get_if<MetadataStroke>(&payload)) prepare(m->region);
        const std::uint64_t id = doc.add(std::move(payload));
        save_document(edits_dir, doc);
        std::printf("%s\n", edit_json(*doc.find(id)).c_str());
      }
    } else if (*render_cmd || *export_cmd) {
      const bool single = render_cmd->parsed();
      const VideoClip clip = load_clip(single ? render_clip : export_clip);
      const Model model = load_model(single ? render_model : export_model);
      const fs::path& ed = single ? render_edits : export_edits;
      const EditDocument doc = ed.empty() ? EditDocument{} : load_document(ed);
      if (single) {
        const RenderedFrames r = render_edited_frame(render_t, doc, model, clip);
        write_png(render_out, r.frames.front());
        std::printf("rendered frame %d in %.3f s\n", render_t, r.seconds);
      } else {
        const RenderedFrames r = render_edited_clip(doc, model, clip);
        export_sequence(r.frames, export_out);
        std::printf("rendered %zu frames in %.3f s (%.2f fps) to %s\n", r.frames.size(), r.seconds, r.fps,
                    export_out.c_str());
      }
    } else if (*atlas_cmd) {
      const Model model = load_model(atlas_model);
      std::optional<EditDocument> doc;
      if (!atlas_edits.empty()) doc = load_document(atlas_edits);
      write_png(atlas_out, render_atlas(model, parse_layer(atlas_layer), atlas_size, doc ? &*doc : nullptr));
    } else if (*track_cmd) {
      const Model model = load_model(track_model);
      std::printf("%s\n", trajectory_json(track_point(track_x, track_y, track_t, parse_layer(track_layer), model,
                                                      track_begin, track_end))
                              .c_str());
    } else if (*serve_cmd) {
      const auto colon = serve_bind.rfind(':');
      if (colon == std::string::npos) throw ConfigError("--bind must be host:port");
      ServiceConfig sc;
      sc.root = serve_root;
      sc.host = serve_bind.substr(0, colon);
      sc.port = std::stoi(serve_bind.substr(colon + 1));
      sc.progress_every = serve_progress;
      Service service(sc);
      const int port = service.bind();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread watcher([&] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        service.stop();
      });
      std::printf("serving %s on http://%s:%d\n", serve_root.c_str(), sc.host.c_str(), port);
      std::fflush(stdout);
      service.listen();
      g_stop = 1;
      watcher.join();
    }
  } catch (const EditFormatError& e) {
    std::fprintf(stderr, "error: %s (%s)\n", e.what(), e.field().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
