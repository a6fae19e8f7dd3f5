#include "inve/service.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "inve/errors.hpp"
#include "inve/render.hpp"
#include "inve/tracking.hpp"

namespace inve {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view state_name(ProjectState s) {
  switch (s) {
    case ProjectState::created: return "created";
    case ProjectState::training_forward: return "training-forward";
    case ProjectState::training_inverse: return "training-inverse";
    case ProjectState::ready: return "ready";
    case ProjectState::failed: return "failed";
  }
  return "?";
}

namespace {

ProjectState parse_state(const std::string& s) {
  for (auto st : {ProjectState::created, ProjectState::training_forward,
                  ProjectState::training_inverse, ProjectState::ready, ProjectState::failed})
    if (state_name(st) == s) return st;
  throw LoadError("unknown project state '" + s + "'");
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError(p.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2);
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot replace " + p.string() + ": " + ec.message());
}

json losses_json(const LossRecord& r) {
  return {{"recon", r.recon}, {"rigid", r.rigid}, {"flow", r.flow},
          {"sparse", r.sparse}, {"alpha", r.alpha}, {"inverse", r.inverse}};
}

}  // namespace

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  for (const auto& [key, v] : j.items()) {
    auto num = [&]() {
      if (!v.is_number()) throw ConfigError("synthetic." + key + " must be a number");
      return v.get<double>();
    };
    auto integer = [&]() {
      if (!v.is_number_integer()) throw ConfigError("synthetic." + key + " must be an integer");
      return v.get<long long>();
    };
    auto colour = [&]() {
      if (!v.is_array() || v.size() != 3) throw ConfigError("synthetic." + key + " must be [r, g, b]");
      Rgb c;
      for (int k = 0; k < 3; ++k) {
        if (!v[k].is_number()) throw ConfigError("synthetic." + key + " must be [r, g, b]");
        c[k] = v[k].get<float>();
      }
      return c;
    };
    if (key == "width") s.width = static_cast<int>(integer());
    else if (key == "height") s.height = static_cast<int>(integer());
    else if (key == "frames") s.frames = static_cast<int>(integer());
    else if (key == "shape") {
      if (!v.is_string() || (v != "rect" && v != "disc"))
        throw ConfigError("synthetic.shape must be \"rect\" or \"disc\"");
      s.shape = v == "rect" ? ShapeKind::rect : ShapeKind::disc;
    } else if (key == "size") s.size = num();
    else if (key == "start_x") s.start_x = num();
    else if (key == "start_y") s.start_y = num();
    else if (key == "vx") s.vx = num();
    else if (key == "vy") s.vy = num();
    else if (key == "rotation_deg") s.rotation_deg = num();
    else if (key == "texture_cell") s.texture_cell = num();
    else if (key == "background_seed") s.background_seed = static_cast<std::uint64_t>(integer());
    else if (key == "foreground_seed") s.foreground_seed = static_cast<std::uint64_t>(integer());
    else if (key == "background_color") s.background_color = colour();
    else if (key == "foreground_color") s.foreground_color = colour();
    else throw ConfigError("unknown synthetic spec key '" + key + "'");
  }
  s.validate();
  return s;
}

// ---- EventLog -----------------------------------------------------------------

std::uint64_t EventLog::publish(std::string type, std::string data) {
  std::uint64_t seq;
  {
    std::lock_guard lock(mutex_);
    seq = ++seq_;
    events_.push_back({seq, std::move(type), std::move(data)});
    if (events_.size() > capacity_) events_.pop_front();
  }
  cv_.notify_all();
  return seq;
}

std::vector<Event> EventLog::read_after(std::uint64_t after, int timeout_ms) const {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] { return seq_ > after || closed_; });
  std::vector<Event> out;
  for (const auto& e : events_)
    if (e.seq > after) out.push_back(e);
  return out;
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mutex_);
  return seq_;
}

void EventLog::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

// ---- projects -----------------------------------------------------------------

struct Project {
  std::string id;
  fs::path dir;
  VideoClip clip;
  std::string source_json;

  mutable std::mutex mutex;  // everything below except the slot and the log
  mutable std::condition_variable idle;
  ProjectState state = ProjectState::created;
  std::string error;
  std::optional<LossRecord> last;
  bool stopped_early = false;
  bool running = false;
  std::shared_ptr<const EditDocument> doc = std::make_shared<EditDocument>();
  mutable std::shared_ptr<const EditDocument> compositor_doc;
  mutable std::shared_ptr<const EditCompositor> compositor;

  std::mutex edit_mutex;  // serializes edit mutations
  SnapshotSlot slot;
  EventLog events;
  std::thread worker;
  std::atomic<bool> cancel{false};
};

namespace {

std::shared_ptr<const EditCompositor> compositor_for(const Project& p,
                                                     std::shared_ptr<const EditDocument> doc) {
  std::lock_guard lock(p.mutex);
  if (p.compositor_doc != doc) {
    p.compositor = std::make_shared<const EditCompositor>(*doc);
    p.compositor_doc = doc;
  }
  return p.compositor;
}

std::shared_ptr<const ModelSnapshot> trained_snapshot(const Project& p, bool need_inverse) {
  auto snap = p.slot.latest();
  if (!snap) throw Conflict("project " + p.id + " has no trained model yet");
  if (need_inverse && !snap->model->inverse_ready())
    throw Conflict("project " + p.id + " has no trained inverse maps yet");
  return snap;
}

std::string new_id() {
  static std::mt19937_64 rng(std::random_device{}() ^
                             static_cast<std::uint64_t>(
                                 std::chrono::steady_clock::now().time_since_epoch().count()));
  static std::mutex m;
  std::lock_guard lock(m);
  char buf[24];
  std::snprintf(buf, sizeof buf, "p%012llx",
                static_cast<unsigned long long>(rng() & 0xffffffffffffull));
  return buf;
}

}  // namespace

ProjectManager::ProjectManager(fs::path root, int progress_every)
    : root_(std::move(root)), progress_every_(std::max(1, progress_every)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw IoError("cannot create data root " + root_.string() + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(root_)) {
    const fs::path dir = entry.path();
    const std::string name = dir.filename().string();
    if (!entry.is_directory()) continue;
    if (name.rfind(".staging-", 0) == 0) {
      fs::remove_all(dir, ec);
      continue;
    }
    if (!fs::exists(dir / "project.json")) continue;
    try {
      const json j = read_json_file(dir / "project.json");
      auto p = std::make_shared<Project>();
      p->id = j.at("id").get<std::string>();
      p->dir = dir;
      p->source_json = j.value("source", json::object()).dump();
      p->state = parse_state(j.at("state").get<std::string>());
      p->error = j.value("error", "");
      p->clip = load_clip(dir / "clip");
      p->doc = std::make_shared<EditDocument>(load_document(dir));
      if (fs::exists(dir / "model.ckpt")) {
        const Model m = load_model(dir / "model.ckpt");
        p->slot.publish(m, 0);
      }
      if (p->state == ProjectState::training_forward || p->state == ProjectState::training_inverse) {
        p->state = ProjectState::failed;
        p->error = "training was interrupted";
      }
      if (p->state == ProjectState::ready && !p->slot.latest()) {
        p->state = ProjectState::failed;
        p->error = "model checkpoint missing";
      }
      projects_[p->id] = p;
    } catch (const std::exception& e) {
      std::cerr << "skipping project " << dir << ": " << e.what() << "\n";
    }
  }
}

ProjectManager::~ProjectManager() { shutdown(); }

void ProjectManager::shutdown() {
  std::vector<std::shared_ptr<Project>> all;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, p] : projects_) all.push_back(p);
  }
  for (auto& p : all) p->cancel = true;
  for (auto& p : all) {
    if (p->worker.joinable()) p->worker.join();
    p->events.close();
  }
}

std::shared_ptr<Project> ProjectManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = projects_.find(id);
  if (it == projects_.end()) throw NotFound("no project '" + id + "'");
  return it->second;
}

void ProjectManager::persist(Project& p) const {
  json j = {{"id", p.id},
            {"state", state_name(p.state)},
            {"error", p.error},
            {"source", json::parse(p.source_json)},
            {"width", p.clip.dims.width},
            {"height", p.clip.dims.height},
            {"frames", p.clip.dims.frames}};
  write_json_file(p.dir / "project.json", j);
}

std::string ProjectManager::add_project(const fs::path& staging, const std::string& id,
                                        const std::string& source_json) {
  const fs::path dir = root_ / id;
  auto p = std::make_shared<Project>();
  p->id = id;
  p->dir = staging;
  p->source_json = source_json;
  p->clip = load_clip(staging / "clip");
  persist(*p);
  std::error_code ec;
  fs::rename(staging, dir, ec);
  if (ec) throw IoError("cannot move project into place at " + dir.string() + ": " + ec.message());
  p->dir = dir;
  std::lock_guard lock(mutex_);
  projects_[id] = p;
  return id;
}

std::string ProjectManager::create_synthetic(const SyntheticSpec& spec) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    do id = new_id();
    while (projects_.count(id) || fs::exists(root_ / id));
  }
  const fs::path staging = root_ / (".staging-" + id);
  try {
    const SyntheticClip sc = generate_synthetic(spec);
    save_clip(sc.clip, staging / "clip");
    json src = {{"kind", "synthetic"},
                {"width", spec.width}, {"height", spec.height}, {"frames", spec.frames},
                {"shape", spec.shape == ShapeKind::rect ? "rect" : "disc"},
                {"size", spec.size}, {"start_x", spec.start_x}, {"start_y", spec.start_y},
                {"vx", spec.vx}, {"vy", spec.vy}, {"rotation_deg", spec.rotation_deg},
                {"texture_cell", spec.texture_cell},
                {"background_seed", spec.background_seed},
                {"foreground_seed", spec.foreground_seed}};
    return add_project(staging, id, src.dump());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

std::string ProjectManager::create_from_directory(const fs::path& source) {
  // Validate before touching the data root.
  const VideoClip clip = load_clip(source);
  std::string id;
  {
    std::lock_guard lock(mutex_);
    do id = new_id();
    while (projects_.count(id) || fs::exists(root_ / id));
  }
  const fs::path staging = root_ / (".staging-" + id);
  try {
    save_clip(clip, staging / "clip");
    return add_project(staging, id, json{{"kind", "directory"}, {"path", source.string()}}.dump());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

std::vector<std::string> ProjectManager::list() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, p] : projects_) out.push_back(id);
  return out;
}

ProjectState ProjectManager::state(const std::string& id) const {
  auto p = find(id);
  std::lock_guard lock(p->mutex);
  return p->state;
}

std::string ProjectManager::status_json(const std::string& id) const {
  auto p = find(id);
  auto snap = p->slot.latest();
  std::lock_guard lock(p->mutex);
  json j = {{"id", p->id},
            {"state", state_name(p->state)},
            {"error", p->error},
            {"width", p->clip.dims.width},
            {"height", p->clip.dims.height},
            {"frames", p->clip.dims.frames},
            {"edit_version", p->doc->version()},
            {"snapshot_iteration", snap ? json(snap->iteration) : json(nullptr)},
            {"forward_ready", snap && snap->model->forward_ready()},
            {"inverse_ready", snap && snap->model->inverse_ready()}};
  if (p->last) {
    j["training"] = {{"iteration", p->last->iteration},
                     {"phase", phase_name(p->last->phase)},
                     {"iters_per_sec", p->last->iters_per_sec},
                     {"losses", losses_json(*p->last)},
                     {"stopped_early", p->stopped_early}};
  }
  return j.dump();
}

void ProjectManager::start_training(const std::string& id, const TrainConfig& config) {
  config.validate();
  auto p = find(id);
  if (config.weights.flow > 0 && !p->clip.has_flow())
    throw ConfigError("the clip has no optical flow; set weights.flow to 0");
  if (config.weights.alpha_bootstrap > 0 && config.effective_bootstrap_iters() > 0 &&
      !p->clip.has_masks())
    throw ConfigError("the clip has no masks; set weights.alpha_bootstrap to 0");
  ModelConfig::named(config.profile);
  {
    std::lock_guard lock(p->mutex);
    if (p->running || (p->state != ProjectState::created && p->state != ProjectState::ready))
      throw Conflict("project " + id + " is " + std::string(state_name(p->state)) +
                     "; training needs created or ready");
    p->running = true;
    p->state = ProjectState::training_forward;
    p->error.clear();
    p->last.reset();
    p->stopped_early = false;
    persist(*p);
  }
  p->events.publish("state", json{{"state", state_name(ProjectState::training_forward)}}.dump());
  if (p->worker.joinable()) p->worker.join();
  p->cancel = false;
  p->worker = std::thread([this, p, config] { run_training(p, config); });
}

void ProjectManager::run_training(std::shared_ptr<Project> p, TrainConfig config) {
  auto set_state = [&](ProjectState s, const std::string& error) {
    {
      std::lock_guard lock(p->mutex);
      p->state = s;
      p->error = error;
      persist(*p);
    }
    json e = {{"state", state_name(s)}};
    if (!error.empty()) e["error"] = error;
    p->events.publish("state", e.dump());
  };
  try {
    Model model(ModelConfig::named(config.profile), p->clip.dims, config.seed);
    TrainCallbacks cb;
    Phase seen = Phase::forward;
    cb.on_progress = [&](const LossRecord& r) {
      {
        std::lock_guard lock(p->mutex);
        p->last = r;
      }
      if (r.phase == Phase::inverse && seen == Phase::forward) {
        seen = Phase::inverse;
        set_state(ProjectState::training_inverse, "");
      }
      if (r.iteration % static_cast<std::uint64_t>(progress_every_) == 0) {
        json e = {{"iteration", r.iteration},
                  {"phase", phase_name(r.phase)},
                  {"losses", losses_json(r)},
                  {"iters_per_sec", r.iters_per_sec}};
        p->events.publish("progress", e.dump());
      }
    };
    cb.on_snapshot = [&](const Model& m, std::uint64_t iteration) {
      // Mid-training snapshots are renderable previews.
      Model copy(m);
      copy.set_forward_trained(true);
      p->slot.publish(copy, iteration);
    };
    cb.should_cancel = [&] { return p->cancel.load(); };
    const TrainState st = train(p->clip, model, config, cb);
    {
      std::lock_guard lock(p->mutex);
      p->stopped_early = st.stopped_early;
    }
    if (st.cancelled) {
      set_state(ProjectState::failed, "training cancelled");
    } else {
      save_model(p->dir / "model.ckpt", model);
      p->slot.publish(model, st.iteration);
      set_state(ProjectState::ready, "");
    }
  } catch (const std::exception& e) {
    set_state(ProjectState::failed, e.what());
  }
  std::lock_guard lock(p->mutex);
  p->running = false;
  p->idle.notify_all();
}

void ProjectManager::wait_for_training(const std::string& id) const {
  auto p = find(id);
  std::unique_lock lock(p->mutex);
  p->idle.wait(lock, [&] { return !p->running; });
}

std::vector<std::uint8_t> ProjectManager::frame_png(const std::string& id, int t, bool edited,
                                                    const std::optional<LayerVisibility>& layers) const {
  auto p = find(id);
  if (t < 0 || t >= p->clip.dims.frames)
    throw NotFound("frame " + std::to_string(t) + " does not exist (0.." +
                   std::to_string(p->clip.dims.frames - 1) + ")");
  if (!edited) return encode_png(p->clip.frames[t]);
  std::shared_ptr<const EditDocument> doc;
  {
    std::lock_guard lock(p->mutex);
    doc = p->doc;
  }
  auto snap = trained_snapshot(*p, false);
  std::shared_ptr<const EditCompositor> comp;
  if (layers && !(*layers == doc->visibility())) {
    EditDocument copy = *doc;
    copy.set_visibility(*layers);
    comp = std::make_shared<const EditCompositor>(copy);
  } else {
    comp = compositor_for(*p, doc);
  }
  if (comp->needs_inverse() && !snap->model->inverse_ready())
    throw Conflict("point-tracked textures need trained inverse maps");
  return encode_png(render_edited_frame(t, *comp, *snap->model, p->clip));
}

std::vector<std::uint8_t> ProjectManager::atlas_png(const std::string& id, Layer layer, int size,
                                                    bool edits) const {
  auto p = find(id);
  if (size < 2 || size > 4096 || size % 2)
    throw ConfigError("atlas size must be an even number in [2, 4096]");
  auto snap = trained_snapshot(*p, false);
  std::shared_ptr<const EditDocument> doc;
  {
    std::lock_guard lock(p->mutex);
    doc = p->doc;
  }
  return encode_png(render_atlas(*snap->model, layer, size, edits ? doc.get() : nullptr));
}

std::string ProjectManager::edits(const std::string& id) const {
  auto p = find(id);
  std::lock_guard lock(p->mutex);
  return document_json(*p->doc);
}

std::uint64_t ProjectManager::edit_version(const std::string& id) const {
  auto p = find(id);
  std::lock_guard lock(p->mutex);
  return p->doc->version();
}

std::string ProjectManager::add_edit(const std::string& id, EditPayload payload) {
  auto p = find(id);
  std::lock_guard writer(p->edit_mutex);
  auto prepare = [&](SketchStroke& s) {
    std::shared_ptr<const ModelSnapshot> snap;
    if (s.space == CoordSpace::frame) snap = trained_snapshot(*p, false);
    if (s.space == CoordSpace::frame && (s.frame < 0 || s.frame >= p->clip.dims.frames))
      throw EditFormatError("payload.frame", "frame " + std::to_string(s.frame) + " does not exist");
    try {
      prepare_stroke(s, snap ? snap->model.get() : nullptr);
    } catch (const ContractViolation& e) {
      throw EditFormatError("payload.points", e.what());
    }
  };
  if (auto* s = std::get_if<SketchStroke>(&payload)) prepare(*s);
  if (auto* m = std::get_if<MetadataStroke>(&payload)) prepare(m->region);
  if (auto* t = std::get_if<TextureEdit>(&payload)) {
    if (t->mode == TextureMode::point_tracked) trained_snapshot(*p, true);
  }
  std::shared_ptr<EditDocument> next;
  {
    std::lock_guard lock(p->mutex);
    next = std::make_shared<EditDocument>(*p->doc);
  }
  std::uint64_t eid;
  try {
    eid = next->add(std::move(payload));
  } catch (const ContractViolation& e) {
    throw EditFormatError("payload", e.what());
  }
  save_document(p->dir, *next);
  const std::string out =
      json{{"id", eid}, {"version", next->version()}, {"edit", json::parse(edit_json(*next->find(eid)))}}.dump();
  const std::uint64_t version = next->version();
  {
    std::lock_guard lock(p->mutex);
    p->doc = std::move(next);
  }
  p->events.publish("edit", json{{"version", version}, {"op", "add"}, {"id", eid}}.dump());
  return out;
}

std::uint64_t ProjectManager::remove_edit(const std::string& id, std::uint64_t edit_id) {
  auto p = find(id);
  std::lock_guard writer(p->edit_mutex);
  std::shared_ptr<EditDocument> next;
  {
    std::lock_guard lock(p->mutex);
    next = std::make_shared<EditDocument>(*p->doc);
  }
  if (!next->remove(edit_id)) throw NotFound("no edit " + std::to_string(edit_id) + " in project " + id);
  save_document(p->dir, *next);
  const std::uint64_t version = next->version();
  {
    std::lock_guard lock(p->mutex);
    p->doc = std::move(next);
  }
  p->events.publish("edit", json{{"version", version}, {"op", "remove"}, {"id", edit_id}}.dump());
  return version;
}

std::string ProjectManager::track(const std::string& id, double x, double y, int t, Layer layer,
                                  int t_begin, int t_end) const {
  auto p = find(id);
  auto snap = trained_snapshot(*p, true);
  return trajectory_json(track_point(x, y, t, layer, *snap->model, t_begin, t_end));
}

std::string ProjectManager::export_sequence(const std::string& id, bool edited) const {
  auto p = find(id);
  const fs::path out = p->dir / "export";
  RenderedFrames r;
  if (edited) {
    auto snap = trained_snapshot(*p, false);
    std::shared_ptr<const EditDocument> doc;
    {
      std::lock_guard lock(p->mutex);
      doc = p->doc;
    }
    r = render_edited_clip(*doc, *snap->model, p->clip);
  } else {
    r.frames = p->clip.frames;
  }
  inve::export_sequence(r.frames, out);
  return json{{"path", out.string()}, {"count", r.frames.size()}, {"seconds", r.seconds}, {"fps", r.fps}}
      .dump();
}

const EventLog& ProjectManager::events(const std::string& id) const { return find(id)->events; }

std::shared_ptr<const ModelSnapshot> ProjectManager::snapshot(const std::string& id) const {
  auto snap = find(id)->slot.latest();
  if (!snap) return nullptr;
  return snap;
}

// ---- HTTP -----------------------------------------------------------------------

struct Service::Impl {
  ServiceConfig config;
  ProjectManager projects;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(ServiceConfig c) : config(std::move(c)), projects(config.root, config.progress_every) {}
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::string& field = {}) {
  json j = {{"error", message}};
  if (!field.empty()) j["field"] = field;
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const Conflict& e) {
    send_error(res, 409, e.what());
  } catch (const EditFormatError& e) {
    send_error(res, 422, e.what(), e.field());
  } catch (const ConfigError& e) {
    send_error(res, 422, e.what());
  } catch (const LoadError& e) {
    send_error(res, 422, e.what());
  } catch (const ContractViolation& e) {
    send_error(res, 422, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("request body is not valid JSON: ") + e.what());
  }
}

bool flag_param(const httplib::Request& req, const char* key, bool fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key) + " must be true or false");
}

int int_param(const httplib::Request& req, const char* key, int fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    std::size_t used = 0;
    const std::string v = req.get_param_value(key);
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(std::string(key) + " must be an integer");
  }
}

template <class T>
T json_field(const json& j, const char* key, T fallback, bool required = false) {
  if (!j.contains(key)) {
    if (required) throw EditFormatError(key, "missing");
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw EditFormatError(key, "wrong type");
  }
}

void install_routes(httplib::Server& svr, ProjectManager& pm, std::atomic<bool>& stopping_flag) {

  svr.Get("/projects", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json a = json::array();
      for (const auto& id : pm.list()) a.push_back(json::parse(pm.status_json(id)));
      res.set_content(a.dump(), "application/json");
    });
  });

  svr.Post("/projects", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json j = body_json(req);
      std::string id;
      if (j.contains("synthetic") && j.contains("source_dir"))
        throw ConfigError("give either synthetic or source_dir, not both");
      if (j.contains("synthetic")) {
        id = pm.create_synthetic(synthetic_spec_from_json(j["synthetic"].dump()));
      } else if (j.contains("source_dir")) {
        if (!j["source_dir"].is_string()) throw EditFormatError("source_dir", "expected a string");
        id = pm.create_from_directory(j["source_dir"].get<std::string>());
      } else {
        throw ConfigError("body needs \"synthetic\" or \"source_dir\"");
      }
      res.status = 201;
      res.set_content(pm.status_json(id), "application/json");
    });
  });

  svr.Get(R"(/projects/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(pm.status_json(req.matches[1]), "application/json"); });
  });

  svr.Post(R"(/projects/([^/]+)/train)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const TrainConfig cfg = req.body.empty() ? TrainConfig::desk() : train_config_from_json(req.body);
      pm.start_training(id, cfg);
      res.status = 202;
      res.set_content(pm.status_json(id), "application/json");
    });
  });

  svr.Get(R"(/projects/([^/]+)/frames/(-?\d+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const bool edited = flag_param(req, "edited", false);
      std::optional<LayerVisibility> layers;
      if (req.has_param("layers")) {
        LayerVisibility v{false, false, false};
        std::stringstream ss(req.get_param_value("layers"));
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (item.empty()) continue;
          const EditKind k = parse_kind(item);
          (k == EditKind::metadata ? v.metadata : k == EditKind::texture ? v.texture : v.sketch) = true;
        }
        layers = v;
      }
      const auto png = pm.frame_png(req.matches[1], std::stoi(req.matches[2]), edited, layers);
      res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    });
  });

  svr.Get(R"(/projects/([^/]+)/atlas)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Layer layer = parse_layer(req.has_param("layer") ? req.get_param_value("layer") : "fg");
      const auto png = pm.atlas_png(req.matches[1], layer, int_param(req, "size", 512),
                                    flag_param(req, "edits", true));
      res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    });
  });

  svr.Get(R"(/projects/([^/]+)/edits)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(pm.edits(req.matches[1]), "application/json"); });
  });

  svr.Post(R"(/projects/([^/]+)/edits)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const fs::path dir = pm.root() / id;
      pm.status_json(id);  // 404 before parsing
      std::string text = req.body;
      std::optional<RgbaImage> upload;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("edit")) throw EditFormatError("edit", "multipart body needs an \"edit\" part");
        text = req.get_file_value("edit").content;
        if (req.has_file("image")) {
          const auto& c = req.get_file_value("image").content;
          try {
            upload = decode_png_rgba(std::span(reinterpret_cast<const std::uint8_t*>(c.data()), c.size()));
          } catch (const std::exception& e) {
            throw EditFormatError("image", std::string("not a readable PNG: ") + e.what());
          }
        }
      }
      EditPayload payload = parse_edit_request(text, [&](const std::string& name) {
        if (upload) return *upload;
        if (name.rfind("tex_", 0) != 0 || name.find('/') != std::string::npos ||
            name.find("..") != std::string::npos || !fs::exists(dir / name))
          throw LoadError("no stored texture '" + name + "'; upload it as the \"image\" part");
        return read_png_rgba(dir / name);
      });
      res.status = 201;
      res.set_content(pm.add_edit(id, std::move(payload)), "application/json");
    });
  });

  svr.Delete(R"(/projects/([^/]+)/edits/(\d+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::uint64_t version = pm.remove_edit(req.matches[1], std::stoull(req.matches[2]));
      res.set_content(json{{"version", version}}.dump(), "application/json");
    });
  });

  svr.Post(R"(/projects/([^/]+)/track)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json j = body_json(req);
      const double x = json_field<double>(j, "x", 0, true);
      const double y = json_field<double>(j, "y", 0, true);
      const int t = json_field<int>(j, "t", 0, true);
      Layer layer = Layer::foreground;
      if (j.contains("layer")) layer = parse_layer(json_field<std::string>(j, "layer", "fg"));
      const int t_begin = json_field<int>(j, "t_begin", 0);
      const int t_end = json_field<int>(j, "t_end", -1);
      res.set_content(pm.track(req.matches[1], x, y, t, layer, t_begin, t_end), "application/json");
    });
  });

  svr.Post(R"(/projects/([^/]+)/export)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json j = body_json(req);
      res.set_content(pm.export_sequence(req.matches[1], json_field<bool>(j, "edited", true)),
                      "application/json");
    });
  });

  svr.Get(R"(/projects/([^/]+)/events)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const EventLog* log = &pm.events(id);
      std::uint64_t after = 0;
      const std::string last = req.has_header("Last-Event-ID") ? req.get_header_value("Last-Event-ID")
                                : req.has_param("since")        ? req.get_param_value("since")
                                                                : "";
      if (!last.empty()) {
        try {
          after = std::stoull(last);
        } catch (const std::exception&) {
          throw ConfigError("since / Last-Event-ID must be an event number");
        }
      }
      res.set_header("Cache-Control", "no-cache");
      auto* stopping = &stopping_flag;
      res.set_chunked_content_provider(
          "text/event-stream", [log, after, stopping](std::size_t, httplib::DataSink& sink) mutable {
            const auto evs = log->read_after(after, 500);
            if (evs.empty()) {
              if (log->closed() || stopping->load()) {
                sink.done();
                return true;
              }
              static const std::string keepalive = ": keepalive\n\n";
              return sink.write(keepalive.data(), keepalive.size());
            }
            for (const auto& e : evs) {
              const std::string msg = "id: " + std::to_string(e.seq) + "\nevent: " + e.type +
                                      "\ndata: " + e.data + "\n\n";
              if (!sink.write(msg.data(), msg.size())) return false;
              after = e.seq;
            }
            return true;
          });
    });
  });
}

}  // namespace

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  install_routes(impl_->server, impl_->projects, impl_->stopping);
}

Service::~Service() { stop(); }

int Service::bind() {
  int port = impl_->config.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->config.host);
    if (port < 0) throw IoError("cannot bind " + impl_->config.host);
  } else if (!impl_->server.bind_to_port(impl_->config.host, port)) {
    throw IoError("cannot bind " + impl_->config.host + ":" + std::to_string(port));
  }
  return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->projects.shutdown();
  impl_->server.stop();
}

ProjectManager& Service::projects() { return impl_->projects; }

}  // namespace inve
