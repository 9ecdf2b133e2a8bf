#include "earthgan/service.hpp"
#include "httplib.h"

namespace earthgan::service {

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(new Impl{service, {}}) {
  const ServerConfig& cfg = service.config();
  // Enough connection threads for every slot plus the wait queue, and one
  // more so saturation is answered with 503 instead of a stalled socket.
  const std::size_t threads = cfg.workers + cfg.queue + 1;
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  const time_t secs = std::max(1, cfg.timeout_ms / 1000);
  impl_->server.set_read_timeout(secs, 0);
  impl_->server.set_write_timeout(secs, 0);
  impl_->server.Get(R"(/api/.*)", [this](const httplib::Request& hreq, httplib::Response& hres) {
    Request req;
    req.path = hreq.path;
    for (const auto& [k, v] : hreq.params) req.params[k] = v;
    Response r = impl_->service.handle(req);
    hres.status = r.status;
    for (const auto& [k, v] : r.headers) hres.set_header(k, v);
    hres.set_content(std::move(r.body), r.content_type);
  });
}

HttpServer::~HttpServer() = default;

void HttpServer::run(const std::function<void(int)>& on_ready) {
  const ServerConfig& cfg = impl_->service.config();
  int port = cfg.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(cfg.bind);
  } else if (!impl_->server.bind_to_port(cfg.bind, port)) {
    port = -1;
  }
  if (port < 0) {
    throw IoError("cannot bind " + cfg.bind + ":" + std::to_string(cfg.port));
  }
  if (on_ready) on_ready(port);
  impl_->server.listen_after_bind();
}

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace earthgan::service
