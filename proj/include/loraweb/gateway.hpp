#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "loraweb/nodes.hpp"
#include "loraweb/simulator.hpp"

namespace httplib {
class Server;
}

namespace loraweb::gateway {

struct GatewayConfig {
  std::string host = "0.0.0.0";
  int port = 8080;  // 0 picks a free port
  std::optional<NodeId> client;  // attached client node; default: the scenario's monitor
  std::string admin_prefix = "/admin";
  // Simulated seconds per wall-clock second; 0 runs the radio as fast as possible.
  double time_scale = 1.0;
  // How long the core collects concurrent commands before acting on them.
  std::chrono::milliseconds batch_window{20};
  // Longest a browser request waits for its page.
  std::chrono::seconds request_timeout{600};

  void validate() const;
};

// Live HTTP front end for one simulated client node. HTTP handlers run on the
// listener's thread pool; every node interaction is a command executed on a
// single core thread that also advances the radio simulation.
class Gateway {
 public:
  Gateway(GatewayConfig config, sim::ScenarioSpec scenario, std::shared_ptr<nodes::PingBackend> ping);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds the listener and starts the core. Throws Error on bind failure.
  void start();
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  int port() const { return bound_port_; }

  // Runs `fn` on the core thread and waits for it.
  template <typename F>
  auto call(F fn) -> decltype(fn());

 private:
  struct Core;

  void post(std::function<void()> command);
  void core_loop();
  void install_routes();

  GatewayConfig config_;
  std::unique_ptr<Core> core_;
  std::unique_ptr<httplib::Server> http_;
  std::thread core_thread_;
  std::thread http_thread_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> commands_;
  bool stopping_ = false;
  bool started_ = false;
  int bound_port_ = 0;
};

template <typename F>
auto Gateway::call(F fn) -> decltype(fn()) {
  using R = decltype(fn());
  auto done = std::make_shared<std::promise<R>>();
  auto fut = done->get_future();
  post([fn = std::move(fn), done]() mutable {
    try {
      if constexpr (std::is_void_v<R>) {
        fn();
        done->set_value();
      } else {
        done->set_value(fn());
      }
    } catch (...) {
      done->set_exception(std::current_exception());
    }
  });
  return fut.get();
}

}  // namespace loraweb::gateway
