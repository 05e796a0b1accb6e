#pragma once

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lpmm/lpmm.hpp"

namespace lpmm::service {

using nlohmann::json;

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path state_dir = "lpmm-state";
};

enum class JobState { idle, running, done, failed };

inline std::string_view job_state_name(JobState s) {
  switch (s) {
    case JobState::idle: return "idle";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "idle";
}

inline int http_status(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::validation: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::state: return 409;
    case ErrorKind::domain: return 422;
  }
  return 500;
}

struct SurrogateSpec {
  std::uint64_t seed = 0;
  int w = 16;
  RasterConfig raster;
};

/// Immutable view of everything the session holds. Handlers copy the
/// pointers under a short lock and then work without it.
struct Snapshot {
  std::shared_ptr<const LpmmModel> model;
  std::shared_ptr<const LandmarkDataset> dataset;
  std::shared_ptr<const SurrogateStack> surrogate;
  std::optional<SurrogateSpec> surrogate_spec;
  std::shared_ptr<const AdaptorFile> adaptor;
  std::shared_ptr<const BlendshapeLibrary> library;
};

struct JobStatus {
  JobState state = JobState::idle;
  int job_id = 0;
  int step = 0;
  int steps = 0;
  LossBreakdown losses;
  std::string reason;
};

namespace detail {

inline json raster_to_json(const Raster& r) {
  auto data = json::array();
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) data.push_back(r(i, j));
  return {{"shape", {r.rows(), r.cols()}}, {"data", data}};
}

inline ParamVector params_from(const json& body, std::string_view field) {
  return ParamVector(io::vector_from_json(io::require(body, field), field));
}

inline LandmarkSet points_from(const json& body, std::string_view field) {
  return lpmm::detail::points_from_json(io::require(body, field));
}

inline json model_summary(const LpmmModel& m) {
  return {{"n", m.n()},
          {"m", m.m()},
          {"eigenvalues", io::to_json(m.eigenvalues())},
          {"fingerprint", m.fingerprint()},
          {"warnings", m.warnings()}};
}

inline json surrogate_summary(const SurrogateSpec& s, int n) {
  return {{"seed", s.seed},
          {"w", s.w},
          {"n", n},
          {"raster", {{"h", s.raster.height}, {"w", s.raster.width}, {"sigma", s.raster.sigma}}}};
}

}  // namespace detail

/// Session state plus the /api/v1 handlers.
///
/// Reads take a snapshot; every mutation goes through `writer_` and publishes
/// a new snapshot atomically. At most one training job runs at a time.
class Session {
 public:
  explicit Session(std::filesystem::path state_dir) : dir_(std::move(state_dir)) {
    std::filesystem::create_directories(dir_);
    load_state();
  }

  ~Session() { shutdown(); }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::vector<std::string>& startup_errors() const noexcept { return startup_errors_; }

  Snapshot snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snap_;
  }

  JobStatus job_status() const {
    std::lock_guard lock(job_mutex_);
    return job_;
  }

  /// Stops a running training job and waits for it.
  void shutdown() {
    stop_training_ = true;
    if (trainer_.joinable()) trainer_.join();
  }

  void register_routes(httplib::Server& srv) {
    const std::string base = "/api/v1";
    route(srv, "POST", base + "/model/build", [this](const auto& req) { return build_model(req); });
    route(srv, "GET", base + "/model", [this](const auto&) { return get_model(); });
    route(srv, "GET", base + "/model/components", [this](const auto& req) { return component(req); });
    route(srv, "POST", base + "/fit", [this](const auto& req) { return fit(req); });
    route(srv, "POST", base + "/reconstruct", [this](const auto& req) { return reconstruct_ep(req); });
    route(srv, "POST", base + "/interpolate", [this](const auto& req) { return interpolate(req); });
    route(srv, "POST", base + "/scale", [this](const auto& req) { return scale(req); });
    route(srv, "GET", base + "/blendshapes", [this](const auto&) { return list_blendshapes(); });
    route(srv, "GET", base + R"(/blendshapes/([A-Za-z0-9_.\-]+))",
          [this](const auto& req) { return get_blendshape(req); });
    route(srv, "POST", base + "/blendshapes", [this](const auto& req) { return save_blendshape(req); });
    route(srv, "DELETE", base + R"(/blendshapes/([A-Za-z0-9_.\-]+))",
          [this](const auto& req) { return delete_blendshape(req); });
    route(srv, "POST", base + "/surrogate", [this](const auto& req) { return set_surrogate(req); });
    route(srv, "POST", base + "/adaptor/train", [this](const auto& req) { return train(req); });
    route(srv, "GET", base + "/adaptor/status", [this](const auto&) { return status(); });
    route(srv, "POST", base + "/adaptor/map", [this](const auto& req) { return map(req); });
    route(srv, "POST", base + "/mix", [this](const auto& req) { return mix(req); });
    route(srv, "GET", base + "/nme-sweep", [this](const auto& req) { return sweep(req); });
  }

 private:
  struct Reply {
    int status = 200;
    json body;
  };
  using Handler = std::function<Reply(const httplib::Request&)>;

  static void send_error(httplib::Response& res, int status, std::string_view code,
                         const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                    "application/json");
  }

  static void route(httplib::Server& srv, std::string_view method, const std::string& pattern,
                    Handler handler) {
    auto wrapped = [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
      try {
        Reply r = handler(req);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
      } catch (const Error& e) {
        send_error(res, http_status(e), e.code_string(), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, code_name(ErrorCode::malformed_input), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
    if (method == "GET") srv.Get(pattern, wrapped);
    else if (method == "POST") srv.Post(pattern, wrapped);
    else if (method == "DELETE") srv.Delete(pattern, wrapped);
  }

  static json body_of(const httplib::Request& req) {
    const json j = io::parse_json(req.body.empty() ? std::string_view{"{}"} : std::string_view{req.body});
    if (!j.is_object()) throw Error(ErrorCode::malformed_input, "request body must be a JSON object");
    return j;
  }

  static std::shared_ptr<const LpmmModel> need_model(const Snapshot& s) {
    if (!s.model) throw Error(ErrorCode::no_model, "no model loaded");
    return s.model;
  }

  void publish(Snapshot next) {
    std::lock_guard lock(snapshot_mutex_);
    snap_ = std::move(next);
  }

  bool training_running() const {
    std::lock_guard lock(job_mutex_);
    return job_.state == JobState::running;
  }

  // ---- persistence -------------------------------------------------------

  std::filesystem::path library_dir(const std::string& fingerprint) const {
    return dir_ / "blendshapes" / fingerprint;
  }

  void persist_surrogate(const SurrogateSpec& s, const std::string& fingerprint) const {
    json j = detail::surrogate_summary(s, 0);
    j.erase("n");
    j["model_fingerprint"] = fingerprint;
    io::write_file((dir_ / "surrogate.json").string(), j.dump(2));
  }

  template <typename F>
  void try_load(const std::string& artifact, F&& load) {
    try {
      load();
    } catch (const std::exception& e) {
      startup_errors_.push_back(artifact + ": " + e.what());
    }
  }

  void load_state() {
    Snapshot s;
    const auto model_path = dir_ / "model.json";
    if (std::filesystem::exists(model_path))
      try_load("model.json", [&] {
        s.model = std::make_shared<const LpmmModel>(deserialize_model(io::read_file(model_path.string())));
      });
    if (!s.model) {
      publish(std::move(s));
      return;
    }
    const auto fp = s.model->fingerprint();
    const auto data_path = dir_ / "dataset.jsonl";
    if (std::filesystem::exists(data_path))
      try_load("dataset.jsonl", [&] {
        s.dataset = std::make_shared<const LandmarkDataset>(
            to_canonical(parse_landmark_records(io::read_file(data_path.string()))));
      });
    try_load("blendshapes", [&] {
      s.library = std::make_shared<const BlendshapeLibrary>(
          BlendshapeLibrary::load_directory(library_dir(fp), fp));
    });
    if (!s.library) s.library = std::make_shared<const BlendshapeLibrary>(fp);
    const auto sur_path = dir_ / "surrogate.json";
    if (std::filesystem::exists(sur_path))
      try_load("surrogate.json", [&] {
        const json j = io::parse_json(io::read_file(sur_path.string()));
        if (j.value("model_fingerprint", "") != fp)
          throw Error(ErrorCode::fingerprint_mismatch, "surrogate built for different model");
        s.surrogate_spec = parse_surrogate_spec(j);
        s.surrogate = std::make_shared<const SurrogateStack>(make_surrogate(
            s.surrogate_spec->seed, s.surrogate_spec->w, s.model->mean_landmarks(), s.surrogate_spec->raster));
      });
    const auto ad_path = dir_ / "adaptor.json";
    if (s.surrogate && std::filesystem::exists(ad_path))
      try_load("adaptor.json", [&] {
        auto file = adaptor_from_json(io::parse_json(io::read_file(ad_path.string())), fp);
        if (file.surrogate_seed != s.surrogate->seed() || file.net.w() != s.surrogate->w())
          throw Error(ErrorCode::fingerprint_mismatch, "adaptor built for different surrogate");
        s.adaptor = std::make_shared<const AdaptorFile>(std::move(file));
      });
    publish(std::move(s));
  }

  static SurrogateSpec parse_surrogate_spec(const json& j) {
    SurrogateSpec s;
    s.seed = io::require_as<std::uint64_t>(j, "seed");
    s.w = j.value("w", s.w);
    if (j.contains("raster")) {
      const auto& r = j["raster"];
      if (!r.is_object()) throw Error(ErrorCode::malformed_input, "\"raster\" must be an object");
      s.raster.height = r.value("h", s.raster.height);
      s.raster.width = r.value("w", s.raster.width);
      s.raster.sigma = r.value("sigma", s.raster.sigma);
    }
    return s;
  }

  // ---- handlers ----------------------------------------------------------

  Reply build_model(const httplib::Request& req) {
    const json body = body_of(req);
    const json& src = io::require(body, "dataset");
    std::optional<LandmarkDataset> raw;
    if (src.is_string()) {
      raw = parse_landmark_records(io::read_file(src.get<std::string>()));
    } else if (src.is_array()) {
      std::vector<LandmarkRecord> recs;
      for (std::size_t i = 0; i < src.size(); ++i) {
        try {
          recs.push_back(parse_landmark_record(src[i].dump()));
        } catch (const Error& e) {
          throw Error(e.code(), "record " + std::to_string(i + 1) + ": " + e.what());
        }
      }
      raw.emplace(std::move(recs));
    } else {
      throw Error(ErrorCode::malformed_input, "\"dataset\" must be a record array or a path");
    }
    std::optional<int> m;
    if (body.contains("m") && !body["m"].is_null() && body["m"] != "auto") m = io::require_as<int>(body, "m");

    std::lock_guard writer(writer_);
    if (training_running()) throw Error(ErrorCode::job_running, "a training job is running");
    auto data = std::make_shared<const LandmarkDataset>(to_canonical(*raw));
    auto model = std::make_shared<const LpmmModel>(build_lpmm(*data, m));

    Snapshot next = snapshot();
    const bool same_model = next.model && next.model->fingerprint() == model->fingerprint() &&
                            *next.model == *model;
    next.model = model;
    next.dataset = data;
    if (!same_model) {
      next.surrogate.reset();
      next.surrogate_spec.reset();
      next.adaptor.reset();
      std::filesystem::remove(dir_ / "surrogate.json");
      std::filesystem::remove(dir_ / "adaptor.json");
      next.library = std::make_shared<const BlendshapeLibrary>(
          BlendshapeLibrary::load_directory(library_dir(model->fingerprint()), model->fingerprint()));
    }
    io::write_file((dir_ / "model.json").string(), serialize_model(*model));
    io::write_file((dir_ / "dataset.jsonl").string(), serialize_landmark_records(*data));
    publish(std::move(next));
    return {200, detail::model_summary(*model)};
  }

  Reply get_model() const { return {200, detail::model_summary(*need_model(snapshot()))}; }

  Reply component(const httplib::Request& req) const {
    const auto model = need_model(snapshot());
    if (!req.has_param("i")) throw Error(ErrorCode::malformed_input, "missing query parameter i");
    int i = 0;
    try {
      i = std::stoi(req.get_param_value("i"));
    } catch (const std::exception&) {
      throw Error(ErrorCode::malformed_input, "i must be an integer");
    }
    if (i < 0 || i >= model->m())
      throw Error(ErrorCode::out_of_range, "component index outside [0, m)");
    auto offsets = json::array();
    for (int p = 0; p < model->n(); ++p)
      offsets.push_back({model->basis()(2 * p, i), model->basis()(2 * p + 1, i)});
    return {200, {{"i", i}, {"eigenvalue", model->eigenvalues()[i]}, {"offsets", offsets}}};
  }

  Reply fit(const httplib::Request& req) const {
    const json body = body_of(req);
    const auto model = need_model(snapshot());
    const int k = body.contains("k") ? io::require_as<int>(body, "k") : model->m();
    const auto p = fit_params(*model, detail::points_from(body, "points"), k);
    return {200, {{"params", io::to_json(p.values())}, {"k", k}}};
  }

  Reply reconstruct_ep(const httplib::Request& req) const {
    const json body = body_of(req);
    const Snapshot s = snapshot();
    const auto model = need_model(s);
    const auto p = detail::params_from(body, "params");
    json out{{"points", lpmm::detail::points_to_json(reconstruct(*model, p))}, {"k", p.k()}};
    if (s.surrogate && s.adaptor && s.adaptor->net.k() == p.k())
      out["raster"] = detail::raster_to_json(render_raster(*s.surrogate, map_params_to_latent(s.adaptor->net, p)));
    return {200, out};
  }

  Reply interpolate(const httplib::Request& req) const {
    const json body = body_of(req);
    const auto from = detail::params_from(body, "from");
    const auto to = detail::params_from(body, "to");
    const int steps = body.contains("steps") ? io::require_as<int>(body, "steps") : 2;
    auto frames = json::array();
    for (const auto& f : interpolation_frames(from, to, steps)) frames.push_back(io::to_json(f.values()));
    return {200, {{"frames", frames}, {"steps", steps}, {"k", from.k()}}};
  }

  Reply scale(const httplib::Request& req) const {
    const json body = body_of(req);
    const auto p = detail::params_from(body, "params");
    const double alpha = io::require_as<double>(body, "alpha");
    return {200, {{"params", io::to_json(scale_from_base(p, alpha).values())}, {"k", p.k()}}};
  }

  std::shared_ptr<const BlendshapeLibrary> need_library(const Snapshot& s) const {
    need_model(s);
    return s.library;
  }

  Reply list_blendshapes() const {
    const Snapshot s = snapshot();
    const auto lib = need_library(s);
    return {200, {{"names", lib->list()}, {"model_fingerprint", lib->model_fingerprint()}}};
  }

  Reply get_blendshape(const httplib::Request& req) const {
    const auto lib = need_library(snapshot());
    return {200, blendshape_to_json(lib->get(req.matches[1]), lib->model_fingerprint())};
  }

  Reply save_blendshape(const httplib::Request& req) {
    const json body = body_of(req);
    std::lock_guard writer(writer_);
    Snapshot next = snapshot();
    const auto lib = need_library(next);
    Blendshape b;
    if (body.contains("format")) {
      b = blendshape_from_json(body, lib->model_fingerprint());
    } else {
      b.name = io::require_as<std::string>(body, "name");
      b.offset = detail::params_from(body, "offset");
      b.description = body.value("description", "");
    }
    if (b.offset.k() > next.model->m())
      throw Error(ErrorCode::degree_mismatch, "blendshape degree exceeds model m");
    auto updated = std::make_shared<BlendshapeLibrary>(*lib);
    updated->save(b);
    updated->save_directory(library_dir(lib->model_fingerprint()));
    next.library = std::move(updated);
    publish(std::move(next));
    return {201, blendshape_to_json(b, lib->model_fingerprint())};
  }

  Reply delete_blendshape(const httplib::Request& req) {
    std::lock_guard writer(writer_);
    Snapshot next = snapshot();
    const auto lib = need_library(next);
    auto updated = std::make_shared<BlendshapeLibrary>(*lib);
    updated->remove(req.matches[1]);
    updated->save_directory(library_dir(lib->model_fingerprint()));
    next.library = std::move(updated);
    publish(std::move(next));
    return {200, {{"deleted", std::string(req.matches[1])}}};
  }

  Reply set_surrogate(const httplib::Request& req) {
    const json body = body_of(req);
    const SurrogateSpec spec = parse_surrogate_spec(body);
    std::lock_guard writer(writer_);
    if (training_running()) throw Error(ErrorCode::job_running, "a training job is running");
    Snapshot next = snapshot();
    const auto model = need_model(next);
    auto stack = std::make_shared<const SurrogateStack>(
        make_surrogate(spec.seed, spec.w, model->mean_landmarks(), spec.raster));
    if (!next.adaptor || next.adaptor->surrogate_seed != spec.seed || next.adaptor->net.w() != spec.w ||
        !next.surrogate_spec || next.surrogate_spec->raster.height != spec.raster.height ||
        next.surrogate_spec->raster.width != spec.raster.width ||
        next.surrogate_spec->raster.sigma != spec.raster.sigma) {
      next.adaptor.reset();
      std::filesystem::remove(dir_ / "adaptor.json");
    }
    next.surrogate = std::move(stack);
    next.surrogate_spec = spec;
    persist_surrogate(spec, model->fingerprint());
    publish(std::move(next));
    return {200, detail::surrogate_summary(spec, model->n())};
  }

  Reply train(const httplib::Request& req) {
    const json body = body_of(req);
    TrainConfig defaults;
    std::lock_guard writer(writer_);
    const Snapshot s = snapshot();
    const auto model = need_model(s);
    if (!s.surrogate) throw Error(ErrorCode::no_surrogate, "no surrogate configured");
    if (!s.dataset) throw Error(ErrorCode::no_dataset, "no training dataset loaded");
    defaults.k = std::min(defaults.k, model->m());
    const TrainConfig cfg =
        body.contains("config") ? train_config_from_json(body["config"], defaults) : defaults;
    if (cfg.k > model->m()) throw Error(ErrorCode::degree_mismatch, "config k exceeds model m");

    int job_id = 0;
    {
      std::lock_guard lock(job_mutex_);
      if (job_.state == JobState::running) throw Error(ErrorCode::job_running, "a training job is running");
      job_ = JobStatus{JobState::running, job_.job_id + 1, 0, cfg.steps, {}, {}};
      job_id = job_.job_id;
    }
    if (trainer_.joinable()) trainer_.join();
    stop_training_ = false;
    trainer_ = std::thread([this, s, cfg, job_id] { run_training(s, cfg, job_id); });
    return {202, {{"job_id", job_id}, {"steps", cfg.steps}}};
  }

  void run_training(Snapshot s, TrainConfig cfg, int job_id) {
    try {
      TrainingHooks hooks;
      hooks.stop = &stop_training_;
      hooks.on_step = [this](int step, const LossBreakdown& l) {
        std::lock_guard lock(job_mutex_);
        job_.step = step;
        job_.losses = l;
      };
      auto [net, report] = train_adaptor(*s.model, *s.surrogate, *s.dataset, cfg, hooks);
      if (report.cancelled) {
        std::lock_guard lock(job_mutex_);
        job_.state = JobState::failed;
        job_.reason = "cancelled";
        return;
      }
      auto file = std::make_shared<const AdaptorFile>(
          AdaptorFile{std::move(net), cfg, s.surrogate->seed(), s.model->fingerprint(), s.surrogate->raster()});
      {
        std::lock_guard writer(writer_);
        Snapshot next = snapshot();
        // Publish only if the model and surrogate are still the ones trained against.
        if (next.model == s.model && next.surrogate == s.surrogate) {
          io::write_file((dir_ / "adaptor.json").string(),
                         adaptor_to_json(file->net, cfg, file->surrogate_seed, file->model_fingerprint, file->raster).dump());
          io::write_file((dir_ / "training_report.json").string(), report_to_json(report).dump());
          next.adaptor = file;
          publish(std::move(next));
        }
      }
      std::lock_guard lock(job_mutex_);
      if (job_.job_id == job_id) {
        job_.state = JobState::done;
        job_.losses = report.final;
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(job_mutex_);
      job_.state = JobState::failed;
      job_.reason = e.what();
    }
  }

  Reply status() const {
    const JobStatus j = job_status();
    json out{{"state", job_state_name(j.state)},
             {"job_id", j.job_id},
             {"step", j.step},
             {"steps", j.steps},
             {"losses", loss_to_json(j.losses)}};
    if (!j.reason.empty()) out["reason"] = j.reason;
    return {200, out};
  }

  static std::shared_ptr<const AdaptorFile> need_adaptor(const Snapshot& s) {
    if (!s.adaptor) throw Error(ErrorCode::no_adaptor, "no trained adaptor");
    return s.adaptor;
  }

  Reply map(const httplib::Request& req) const {
    const json body = body_of(req);
    const auto ad = need_adaptor(snapshot());
    const auto v = map_params_to_latent(ad->net, detail::params_from(body, "params"));
    return {200, {{"latent", io::to_json(v.values())}, {"w", v.w()}}};
  }

  Reply mix(const httplib::Request& req) const {
    const json body = body_of(req);
    const Snapshot s = snapshot();
    const auto model = need_model(s);
    const auto ad = need_adaptor(s);
    const std::string mode = body.value("mode", "A");
    if (mode != "A" && mode != "B") throw Error(ErrorCode::malformed_input, "mode must be \"A\" or \"B\"");
    std::vector<WeightedBlendshape> edits;
    if (body.contains("edits")) {
      const auto& list = body["edits"];
      if (!list.is_array()) throw Error(ErrorCode::malformed_input, "\"edits\" must be an array");
      for (const auto& e : list)
        edits.push_back({&s.library->get(io::require_as<std::string>(e, "name")), io::require_as<double>(e, "weight")});
    }
    const auto result = mix_driving_with_params(ad->net, *model, s.surrogate.get(),
                                                detail::points_from(body, "driving_points"), edits,
                                                mode == "A" ? MixMode::parameter : MixMode::latent_residual);
    json out{{"params", io::to_json(result.params.values())},
             {"latent", io::to_json(result.latent.values())},
             {"mode", mode}};
    if (s.surrogate) out["raster"] = detail::raster_to_json(render_raster(*s.surrogate, result.latent));
    return {200, out};
  }

  Reply sweep(const httplib::Request& req) const {
    const Snapshot s = snapshot();
    const auto model = need_model(s);
    if (!s.dataset) throw Error(ErrorCode::no_dataset, "no evaluation dataset loaded");
    std::vector<int> ks;
    if (req.has_param("ks")) {
      std::stringstream ss(req.get_param_value("ks"));
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          ks.push_back(std::stoi(item));
        } catch (const std::exception&) {
          throw Error(ErrorCode::malformed_input, "ks must be comma-separated integers");
        }
      }
    } else {
      ks.push_back(model->m());
    }
    auto reports = json::array();
    for (const auto& r : nme_sweep(*model, *s.dataset, ks))
      reports.push_back({{"k", *r.k}, {"mean", r.mean}, {"per_sample", r.per_sample}, {"skipped", r.skipped}});
    return {200, {{"reports", reports}}};
  }

  std::filesystem::path dir_;
  std::vector<std::string> startup_errors_;

  mutable std::mutex snapshot_mutex_;
  Snapshot snap_;
  std::mutex writer_;

  mutable std::mutex job_mutex_;
  JobStatus job_;
  std::thread trainer_;
  std::atomic<bool> stop_training_{false};
};

/// HTTP server owning a session. `start` binds and serves on a background
/// thread; `stop` finishes in-flight requests and cancels training.
class Server {
 public:
  explicit Server(ServerConfig cfg) : cfg_(std::move(cfg)), session_(cfg_.state_dir) {
    // The library default also sets SO_REUSEPORT, which lets a second
    // instance bind a port that is already in use.
    http_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    session_.register_routes(http_);
  }

  ~Server() { stop(); }

  Session& session() noexcept { return session_; }
  int port() const noexcept { return port_; }

  /// Binds the port; throws if it is unavailable.
  void bind() {
    if (cfg_.port == 0) {
      port_ = http_.bind_to_any_port(cfg_.host);
      if (port_ <= 0) throw Error(ErrorCode::io_error, "could not bind " + cfg_.host);
    } else {
      if (!http_.bind_to_port(cfg_.host, cfg_.port))
        throw Error(ErrorCode::io_error, "port busy: " + cfg_.host + ":" + std::to_string(cfg_.port));
      port_ = cfg_.port;
    }
  }

  void start() {
    bind();
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
  }

  /// Blocks until stop() is called from another thread.
  void run() {
    bind();
    http_.listen_after_bind();
  }

  void stop() {
    session_.shutdown();
    if (http_.is_running()) http_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  ServerConfig cfg_;
  Session session_;
  httplib::Server http_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace lpmm::service
