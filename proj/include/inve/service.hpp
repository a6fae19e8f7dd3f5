#pragma once

// Projects on disk, background training jobs and the HTTP API.
//
// Each project lives in <root>/<id>/:
//   project.json   state and summary
//   clip/          frames, flow, masks
//   model.ckpt     written when training completes
//   edits.json     edit document (+ tex_*.png)
//   export/        exported sequences
//
// HTTP surface (JSON unless noted):
//   GET    /projects                      list
//   POST   /projects                      {"synthetic": {...}} or {"source_dir": path}
//   GET    /projects/{id}                 status
//   POST   /projects/{id}/train           training config (optional body)
//   GET    /projects/{id}/frames/{t}      PNG; ?edited=true|false&layers=metadata,texture,sketch
//   GET    /projects/{id}/atlas           PNG; ?layer=fg|bg&size=512&edits=true|false
//   GET    /projects/{id}/edits           edit document
//   POST   /projects/{id}/edits           edit JSON, or multipart with "edit" JSON and "image" PNG
//   DELETE /projects/{id}/edits/{eid}
//   POST   /projects/{id}/track           {"x","y","t", "layer"?, "t_begin"?, "t_end"?}
//   POST   /projects/{id}/export          {"edited"?: bool}
//   GET    /projects/{id}/events          server-sent events: progress, state, edit
// Errors: 404 unknown project/edit, 409 wrong state or busy, 422 malformed input.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "inve/edit_store.hpp"
#include "inve/synthetic.hpp"
#include "inve/training.hpp"

namespace inve {

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProjectState { created, training_forward, training_inverse, ready, failed };
std::string_view state_name(ProjectState s);

// Throws ConfigError on unknown keys or bad values.
SyntheticSpec synthetic_spec_from_json(const std::string& text);

struct Event {
  std::uint64_t seq = 0;
  std::string type;
  std::string data;  // JSON
};

// Bounded per-project event history with blocking reads.
class EventLog {
 public:
  explicit EventLog(std::size_t capacity = 10000) : capacity_(capacity) {}
  std::uint64_t publish(std::string type, std::string data);
  // Events with seq > after; waits up to timeout_ms for at least one.
  std::vector<Event> read_after(std::uint64_t after, int timeout_ms) const;
  std::uint64_t last_seq() const;
  void close();
  bool closed() const;

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::deque<Event> events_;
  std::size_t capacity_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

struct Project;

class ProjectManager {
 public:
  // Loads existing projects under root; interrupted training jobs come back
  // as failed.
  explicit ProjectManager(std::filesystem::path root, int progress_every = 10);
  ~ProjectManager();
  ProjectManager(const ProjectManager&) = delete;
  ProjectManager& operator=(const ProjectManager&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }

  // Both throw LoadError/ConfigError and leave nothing behind on failure.
  std::string create_synthetic(const SyntheticSpec& spec);
  std::string create_from_directory(const std::filesystem::path& source);

  std::vector<std::string> list() const;
  ProjectState state(const std::string& id) const;
  std::string status_json(const std::string& id) const;

  // Throws Conflict unless the project is created or ready.
  void start_training(const std::string& id, const TrainConfig& config);
  // Blocks until no training job runs for the project.
  void wait_for_training(const std::string& id) const;

  // Frame t as PNG; edited frames need a trained snapshot (Conflict otherwise).
  std::vector<std::uint8_t> frame_png(const std::string& id, int t, bool edited,
                                      const std::optional<LayerVisibility>& layers = {}) const;
  std::vector<std::uint8_t> atlas_png(const std::string& id, Layer layer, int size, bool edits) const;

  std::string edits(const std::string& id) const;
  // Returns the stored edit as JSON. Throws EditFormatError or Conflict.
  std::string add_edit(const std::string& id, EditPayload payload);
  // Throws NotFound for an unknown edit id.
  std::uint64_t remove_edit(const std::string& id, std::uint64_t edit_id);
  std::uint64_t edit_version(const std::string& id) const;

  std::string track(const std::string& id, double x, double y, int t, Layer layer, int t_begin,
                    int t_end) const;
  // Writes <project>/export and returns {"path", "count", "seconds", "fps"}.
  std::string export_sequence(const std::string& id, bool edited) const;

  const EventLog& events(const std::string& id) const;
  // Current snapshot of a project (null before training published one).
  std::shared_ptr<const ModelSnapshot> snapshot(const std::string& id) const;

  // Stops training jobs and wakes event readers.
  void shutdown();

 private:
  std::shared_ptr<Project> find(const std::string& id) const;
  std::string add_project(const std::filesystem::path& staging, const std::string& id,
                          const std::string& source_json);
  void persist(Project& p) const;
  void run_training(std::shared_ptr<Project> p, TrainConfig config);

  std::filesystem::path root_;
  int progress_every_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Project>> projects_;
};

struct ServiceConfig {
  std::filesystem::path root = "inve-data";
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int progress_every = 10;
};

// HTTP front end over a ProjectManager.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  // Binds the socket; returns the bound port. Throws IoError on failure.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void listen();
  void stop();
  ProjectManager& projects();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace inve
