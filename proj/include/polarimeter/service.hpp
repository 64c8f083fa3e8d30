#pragma once

// Websocket streaming service: one engine loop fanned out to any number of
// client sessions. Frames, acks and the hello message share one text channel
// per client (see docs/wire-protocol.md).

#include <atomic>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "polarimeter/engine.hpp"
#include "polarimeter/wire.hpp"

namespace polarimeter {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = net::ip::tcp;

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks a free port
  std::size_t mailbox = 64;    ///< queued frames per client before the oldest is dropped
  std::optional<std::string> capture_path;
  std::optional<wire::Capture> replay;  ///< serve a recorded session instead of live control
};

class Service;

namespace detail {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Service& service, std::size_t mailbox)
      : ws_(std::move(socket)), service_(service), mailbox_(std::max<std::size_t>(mailbox, 1)) {}

  void start();
  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closed_) return;
      self->closed_ = true;
      self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) {});
    });
  }

  /// Called from any thread.
  void deliver_frame(const StreamRunner::FramePtr& frame) {
    net::post(ws_.get_executor(), [self = shared_from_this(), frame] { self->enqueue_frame(*frame); });
  }

  void deliver_ack(const Ack& ack) {
    net::post(ws_.get_executor(), [self = shared_from_this(), ack] { self->enqueue(wire::ack_to_json(ack).dump(), false); });
  }

  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  struct Outgoing {
    std::string text;
    bool frame;
  };

  void enqueue_frame(const Frame& f);

  void enqueue(std::string text, bool is_frame) {
    if (closed_) return;
    if (is_frame) {
      std::size_t frames = 0;
      for (const auto& o : queue_) frames += o.frame;
      if (frames >= mailbox_) {
        // oldest queued frame that is not already being written
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it)
          if (it->frame) {
            queue_.erase(it);
            ++dropped_;
            break;
          }
      }
    }
    queue_.push_back({std::move(text), is_frame});
    if (!writing_) write_next();
  }

  void write_next() {
    if (queue_.empty() || closed_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front().text),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->queue_.pop_front();
                      if (ec) {
                        self->fail();
                        return;
                      }
                      self->write_next();
                    });
  }

  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->fail();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->on_message(text);
      self->read_next();
    });
  }

  void on_message(const std::string& text);
  void fail();

  websocket::stream<beast::tcp_stream> ws_;
  Service& service_;
  std::size_t mailbox_;
  beast::flat_buffer buffer_;
  std::deque<Outgoing> queue_;
  bool writing_ = false;
  bool closed_ = false;
  std::atomic<std::uint64_t> dropped_{0};
};

}  // namespace detail

class Service {
 public:
  Service(EngineConfig config, SourceState source, ServiceOptions options)
      : options_(std::move(options)), acceptor_(ioc_) {
    if (options_.replay) {
      config = options_.replay->config;
      source = options_.replay->source;
      config.pacing = Pacing::realtime;
    }
    config_ = config;
    source_ = source;
    runner_ = std::make_unique<StreamRunner>(config_, source_);
    if (options_.replay) {
      runner_->schedule(options_.replay->commands);
      if (options_.replay->records) runner_->set_record_limit(options_.replay->records);
    }
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void start() {
    tcp::endpoint endpoint(net::ip::make_address(options_.address), options_.port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();

    if (options_.capture_path) {
      capture_.open(*options_.capture_path);
      if (!capture_) throw InvalidArgument("cannot write capture file '" + *options_.capture_path + "'");
      capture_ << wire::capture_header(config_, source_).dump() << '\n';
      runner_->observe_commands([this](const ScheduledCommand& c, const Ack& ack) {
        if (ack.ok()) capture_ << wire::capture_command(c, ack).dump() << '\n';
      });
    }
    runner_->subscribe([this](const StreamRunner::FramePtr& frame) { on_frame(frame); });

    accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    runner_->start();
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    if (runner_) runner_->stop();
    if (capture_.is_open()) {
      capture_ << wire::capture_footer(runner_->records_acquired()).dump() << '\n';
      capture_.close();
    }
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      std::lock_guard lock(sessions_mutex_);
      for (auto& s : sessions_) s->close();
    });
    work_.reset();
    // give sessions a moment to send close frames
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

  unsigned short port() const { return port_; }
  bool replaying() const { return options_.replay.has_value(); }
  StreamRunner& runner() { return *runner_; }
  std::uint64_t frames_rejected() const { return rejected_.load(); }
  std::size_t session_count() {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
  }

  json hello() { return wire::hello(config_, runner_->control_state(), replaying() ? "replay" : "live"); }

  void submit(Command c, std::weak_ptr<detail::Session> session) {
    runner_->submit(std::move(c), [session](const Ack& ack) {
      if (auto s = session.lock()) s->deliver_ack(ack);
    });
  }

  void add(const std::shared_ptr<detail::Session>& s) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.insert(s);
  }

  void remove(const std::shared_ptr<detail::Session>& s) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(s);
  }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<detail::Session>(std::move(socket), *this, options_.mailbox)->start();
      accept();
    });
  }

  void on_frame(const StreamRunner::FramePtr& frame) {
    // Legalization happens upstream; re-check before anything leaves the process.
    try {
      (void)DensityMatrix::from_matrix(frame->rho.matrix());
    } catch (const InvalidArgument&) {
      ++rejected_;
      return;
    }
    if (capture_.is_open()) capture_ << wire::frame_to_string(*frame) << '\n';
    std::lock_guard lock(sessions_mutex_);
    for (auto& s : sessions_) s->deliver_frame(frame);
  }

  ServiceOptions options_;
  EngineConfig config_;
  SourceState source_;
  net::io_context ioc_{1};
  std::optional<net::executor_work_guard<net::io_context::executor_type>> work_{ioc_.get_executor()};
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::unique_ptr<StreamRunner> runner_;
  std::ofstream capture_;
  std::mutex sessions_mutex_;
  std::set<std::shared_ptr<detail::Session>> sessions_;
  std::thread io_thread_;
  std::atomic<bool> stopped_{false};
  std::atomic<std::uint64_t> rejected_{0};
};

namespace detail {

inline void Session::start() {
  net::dispatch(ws_.get_executor(), [self = shared_from_this()] {
    self->ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    self->ws_.async_accept([self](beast::error_code ec) {
      if (ec) return;
      self->enqueue(self->service_.hello().dump(), false);
      self->service_.add(self);
      self->read_next();
    });
  });
}

inline void Session::enqueue_frame(const Frame& f) { enqueue(wire::frame_to_string(f, dropped_.load()), true); }

inline void Session::on_message(const std::string& text) {
  wire::DecodedCommand d = wire::command_from_text(text);
  if (d.command && service_.replaying()) {
    d.error = "replay mode: commands are disabled";
    d.command.reset();
  }
  if (!d.command) {
    enqueue(wire::ack_to_json(Ack{d.req_id, std::nullopt, d.error}).dump(), false);
    return;
  }
  service_.submit(std::move(*d.command), weak_from_this());
}

inline void Session::fail() {
  closed_ = true;
  service_.remove(shared_from_this());
}

}  // namespace detail

}  // namespace polarimeter
