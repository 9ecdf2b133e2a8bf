#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "earthgan/dataset.hpp"
#include "earthgan/inference.hpp"

namespace earthgan::service {

struct ServerConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::size_t workers = 4;     // concurrent generation slots
  std::size_t queue = 16;      // requests allowed to wait for a slot
  int timeout_ms = 30000;      // wait for a slot, and socket timeouts
  bool truth = true;           // serve the prepared high-res volumes as truth
  std::size_t stride = 3;      // low-res columns between wedges
  std::string blend = "feather";
  std::size_t cache_entries = 8;
  std::optional<std::filesystem::path> metrics;  // default: next to the checkpoint
  // Precomputed shells that replace generation for some timesteps.
  std::map<std::uint64_t, std::filesystem::path> fake_shells;

  static ServerConfig parse(const std::string& json_text,
                            const std::filesystem::path& base_dir = {});
  static ServerConfig load(const std::filesystem::path& path);
  // EARTHGAN_BIND, EARTHGAN_PORT and EARTHGAN_WORKERS override the fields.
  void apply_env();
};

struct Request {
  std::string path;
  std::map<std::string, std::string> params;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;
  std::string body;
};

// Bounded admission: `slots` requests run, up to `queue` more wait, the rest
// are turned away.
class Admission {
 public:
  Admission(std::size_t slots, std::size_t queue);
  // False when saturated or when no slot frees up before the deadline.
  bool enter(std::chrono::milliseconds wait);
  void leave();
  std::size_t active() const;
  std::size_t waiting() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t slots_, queue_, active_ = 0, waiting_ = 0;
};

// Keyed cache where concurrent misses on one key share a single computation.
template <typename V>
class SingleFlight {
 public:
  explicit SingleFlight(std::size_t capacity) : capacity_(capacity) {}

  std::shared_ptr<const V> get(const std::string& key,
                               const std::function<std::shared_ptr<const V>()>& compute) {
    std::shared_future<std::shared_ptr<const V>> fut;
    std::promise<std::shared_ptr<const V>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        order_.remove(key);
        order_.push_back(key);
        fut = it->second;
      } else {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        order_.push_back(key);
        owner = true;
      }
    }
    if (owner) {
      try {
        ++computations_;
        promise.set_value(compute());
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mu_);
        entries_.erase(key);
        order_.remove(key);
      }
      evict();
    }
    return fut.get();
  }

  std::size_t computations() const { return computations_; }

 private:
  void evict() {
    std::lock_guard lock(mu_);
    while (entries_.size() > capacity_ && !order_.empty()) {
      auto victim = std::find_if(order_.begin(), order_.end(), [&](const std::string& k) {
        return entries_.at(k).wait_for(std::chrono::seconds(0)) == std::future_status::ready;
      });
      if (victim == order_.end()) break;
      entries_.erase(*victim);
      order_.erase(victim);
    }
  }

  std::size_t capacity_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const V>>> entries_;
  std::list<std::string> order_;
  std::atomic<std::size_t> computations_{0};
};

// Read-only HTTP surface over one checkpoint and one prepared dataset.
// Transport-independent: the HTTP adapter forwards GET requests to handle().
class Service {
 public:
  explicit Service(ServerConfig cfg);

  Response handle(const Request& req);

  const ServerConfig& config() const { return cfg_; }
  Admission& admission() { return admission_; }
  std::size_t shell_computations() const { return shells_.computations(); }
  const infer::Model& model() const { return model_; }

  // Shells are normalised values, V x m_r x H x W.
  std::shared_ptr<const grid::ShellGrid> fake_shell(std::uint64_t t,
                                                    const infer::NoiseMode& noise);
  std::shared_ptr<const grid::ShellGrid> truth_shell(std::uint64_t t);

 private:
  Response meta() const;
  Response shell(const Request& req);
  Response wedge(const Request& req);
  Response metrics(const Request& req) const;
  std::size_t timestep_index(std::uint64_t t) const;  // IndexError if unknown

  ServerConfig cfg_;
  grid::Manifest manifest_;
  infer::Model model_;
  grid::PairGeometry geometry_;
  infer::Blend blend_;
  std::vector<long long> starts_;
  Admission admission_;
  SingleFlight<grid::ShellGrid> shells_;
  SingleFlight<grid::ShellGrid> inputs_;  // low-res globes per timestep
};

// Blocks serving HTTP until stop() is called from another thread. `on_ready`
// receives the bound port (useful with port 0).
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  void run(const std::function<void(int)>& on_ready = {});
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace earthgan::service
