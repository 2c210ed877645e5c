#pragma once

// HTTP API under /api/v1/:
//   GET  /health
//   POST /enhance                       {image, alpha} | {image, alpha_field}
//   POST /volumes                       multipart field "archive" (tar)
//   GET  /volumes/{id}/planes?kind=A|B|C&index=n
//   POST /admin/checkpoint              {path}
// Every non-2xx response carries {"code","message","detail"}.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "usgan/alpha_io.hpp"
#include "usgan/codec.hpp"
#include "usgan/inference.hpp"

namespace usgan {

inline constexpr const char* kApiPrefix = "/api/v1";

/// Error carried to the client as an ApiError body.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  int status_;
  std::string code_;
  std::string detail_;
};

inline ApiError bad_request(const std::string& msg, std::string detail = {}) { return ApiError(400, "bad_request", msg, std::move(detail)); }
inline ApiError not_found(const std::string& msg, std::string detail = {}) { return ApiError(404, "not_found", msg, std::move(detail)); }

class Service {
 public:
  explicit Service(int threads = 4, std::size_t max_body_bytes = std::size_t{64} << 20) : started_(std::chrono::steady_clock::now()) {
    http_.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    http_.set_payload_max_length(max_body_bytes);
    routes();
  }
  ~Service() { stop(); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ModelStore& models() noexcept { return store_; }

  /// Loads a checkpoint directory and makes it current.
  std::string load_checkpoint(const std::filesystem::path& dir) {
    auto m = Model::load(dir);
    const std::string id = m->checkpoint_id;
    store_.swap(std::move(m));
    spdlog::info("serving checkpoint {}", id);
    return id;
  }

  std::string register_volume(Volume v) {
    const auto crc = crc32_of(v.data().data(), v.data().size() * sizeof(float));
    std::string id = "vol-" + hex32(crc);
    std::unique_lock lock(volumes_mu_);
    volumes_.emplace(id, std::make_shared<const Volume>(std::move(v)));
    return id;
  }

  /// Binds to `port` (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) return http_.bind_to_any_port(host);
    if (!http_.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
  }
  /// Blocks serving requests until stop().
  bool serve() { return http_.listen_after_bind(); }
  /// bind() + serve() on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int p = bind(host, port);
    if (p < 0) throw IoError("cannot bind " + host);
    thread_ = std::thread([this] { serve(); });
    http_.wait_until_ready();
    return p;
  }
  void stop() {
    if (http_.is_running()) http_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const ApiError& e) {
    send_json(res, e.status(), Json{{"code", e.code()}, {"message", e.what()}, {"detail", e.detail()}});
  }

  /// Runs a handler, mapping library errors onto ApiError bodies.
  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const ApiError& e) {
      send_error(res, e);
    } catch (const NotFoundError& e) {
      send_error(res, not_found(e.what()));
    } catch (const BoundsError& e) {
      send_error(res, not_found(e.what()));
    } catch (const ArgumentError& e) {
      send_error(res, bad_request(e.what()));
    } catch (const ShapeError& e) {
      send_error(res, bad_request(e.what()));
    } catch (const IoError& e) {
      send_error(res, ApiError(422, "model_error", e.what()));
    } catch (const std::exception& e) {
      spdlog::error("internal error: {}", e.what());
      send_error(res, ApiError(500, "internal", "internal error", e.what()));
    }
  }

  static Json parse_body(const httplib::Request& req) {
    try {
      return Json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw bad_request("request body is not valid JSON", e.what());
    }
  }

  static Image decode_image_field(const Json& body) {
    if (!body.contains("image") || !body["image"].is_string()) throw bad_request("missing base64 PNG field 'image'");
    try {
      return decode_png(base64_decode(body["image"].get<std::string>()));
    } catch (const std::exception& e) {
      throw bad_request("image is not a decodable PNG", e.what());
    }
  }

  static AlphaField decode_alpha_field(const Json& spec, int rows, int cols) {
    if (!spec.is_object()) throw bad_request("alpha_field must be an object");
    std::optional<Grid<double>> base;
    if (spec.contains("png")) {
      if (!spec["png"].is_string()) throw bad_request("alpha_field.png must be a base64 string");
      try {
        base = alpha_from_u8(decode_png_u8(base64_decode(spec["png"].get<std::string>())));
      } catch (const std::exception& e) {
        throw bad_request("alpha_field.png is not a decodable PNG", e.what());
      }
      if (base->rows() != rows || base->cols() != cols)
        throw bad_request("alpha_field.png is " + extent_str(base->rows(), base->cols()) + ", image is " + extent_str(rows, cols));
    }
    for (auto it = spec.begin(); it != spec.end(); ++it)
      if (it.key() != "png" && it.key() != "regions" && it.key() != "default_alpha") throw bad_request("unknown alpha_field key '" + it.key() + "'");
    try {
      return alpha_field_from_table(spec, rows, cols, base ? &*base : nullptr, [](const std::string& b64) { return base64_decode(b64); });
    } catch (const ApiError&) {
      throw;
    } catch (const std::exception& e) {
      throw bad_request(std::string("invalid alpha_field: ") + e.what());
    }
  }

  void routes() {
    const std::string p = kApiPrefix;
    http_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Headers", "Content-Type"},
                               {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    http_.Options(p + "/.*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http_.Get(p + "/health", [this](const httplib::Request&, httplib::Response& res) {
      auto m = store_.current();
      const double up = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
      send_json(res, 200, Json{{"status", m ? "ok" : "no_model"}, {"checkpoint_id", m ? Json(m->checkpoint_id) : Json(nullptr)}, {"uptime_s", up}});
    });

    http_.Post(p + "/enhance", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const Json body = parse_body(req);
        if (!body.is_object()) throw bad_request("request body must be a JSON object");
        const bool has_alpha = body.contains("alpha"), has_field = body.contains("alpha_field");
        if (has_alpha == has_field) throw bad_request("exactly one of 'alpha' and 'alpha_field' is required");
        EnhanceRequest er;
        er.image.data = decode_image_field(body);
        if (body.contains("checkpoint_id") && body["checkpoint_id"].is_string()) er.checkpoint_id = body["checkpoint_id"].get<std::string>();
        Json echo;
        if (has_alpha) {
          if (!body["alpha"].is_number()) throw bad_request("alpha must be a number");
          const double a = body["alpha"].get<double>();
          if (!(a >= 0.0 && a <= 1.0)) throw bad_request("alpha must lie in [0,1]", "got " + std::to_string(a));
          er.alpha = a;
          echo = {{"alpha", a}};
        } else {
          er.alpha_field = decode_alpha_field(body["alpha_field"], er.image.data.rows(), er.image.data.cols());
          double lo = 1.0, hi = 0.0;
          for (double v : er.alpha_field->values.pixels()) lo = std::min(lo, v), hi = std::max(hi, v);
          echo = {{"alpha_field",
                   {{"png", base64_encode(encode_alpha_png(*er.alpha_field))},
                    {"regions", er.alpha_field->region_table.size()},
                    {"min", lo},
                    {"max", hi}}}};
        }
        auto model = store_.current();
        if (!model) throw not_found("no checkpoint loaded");
        PlaneImage out;
        try {
          out = enhance_image(er, *model);
        } catch (const NotFoundError&) {
          throw;
        } catch (const ArgumentError&) {
          throw;
        } catch (const ShapeError&) {
          throw;
        } catch (const std::exception& e) {
          throw ApiError(500, "model_error", "enhancement failed", e.what());
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        send_json(res, 200, Json{{"image", base64_encode(encode_png(out.data))}, {"latency_ms", ms}, {"checkpoint_id", model->checkpoint_id}, {"alpha_echo", echo}});
      });
    });

    http_.Post(p + "/volumes", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_file("archive")) throw bad_request("multipart field 'archive' is required");
        Volume v;
        try {
          const auto& content = req.get_file_value("archive").content;
          v = volume_from_archive(std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
        } catch (const std::exception& e) {
          throw bad_request("archive is not a valid volume", e.what());
        }
        const Json extent{v.axial(), v.lateral(), v.elevation()};
        const std::string id = register_volume(std::move(v));
        send_json(res, 201, Json{{"id", id}, {"extent", extent}, {"axes", {"axial", "lateral", "elevation"}}});
      });
    });

    http_.Get(p + R"(/volumes/([^/]+)/planes)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        PlaneKind kind;
        try {
          kind = parse_plane_kind(req.get_param_value("kind"));
        } catch (const std::exception&) {
          throw bad_request("kind must be A, B or C", "got '" + req.get_param_value("kind") + "'");
        }
        int index = 0;
        try {
          std::size_t used = 0;
          const std::string s = req.get_param_value("index");
          index = std::stoi(s, &used);
          if (used != s.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
          throw bad_request("index must be an integer");
        }
        std::shared_ptr<const Volume> v;
        {
          std::shared_lock lock(volumes_mu_);
          auto it = volumes_.find(id);
          if (it == volumes_.end()) throw not_found("unknown volume '" + id + "'");
          v = it->second;
        }
        const Bytes png = encode_png(extract_plane(*v, kind, index).data);
        res.status = 200;
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      });
    });

    http_.Post(p + "/admin/checkpoint", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Json body = parse_body(req);
        if (!body.is_object() || !body.contains("path") || !body["path"].is_string()) throw bad_request("body must be {\"path\": \"<checkpoint dir>\"}");
        const std::string id = load_checkpoint(body["path"].get<std::string>());
        send_json(res, 200, Json{{"checkpoint_id", id}});
      });
    });

    http_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const std::string code = res.status == 404 ? "not_found" : res.status >= 500 ? "internal" : "bad_request";
        res.set_content(Json{{"code", code}, {"message", httplib::status_message(res.status)}, {"detail", ""}}.dump(), "application/json");
      }
    });
  }

  httplib::Server http_;
  ModelStore store_;
  std::shared_mutex volumes_mu_;
  std::map<std::string, std::shared_ptr<const Volume>> volumes_;
  std::chrono::steady_clock::time_point started_;
  std::thread thread_;
};

}  // namespace usgan
