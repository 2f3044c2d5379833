#include "ceiling/gateway.hpp"

#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <iostream>
#include <thread>

namespace ceiling::gateway {
namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

double number_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw std::invalid_argument(std::string("message field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace

ClientMessage parse_client_message(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("message is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
    throw std::invalid_argument("message needs a string 'type'");
  const auto type = j.at("type").get<std::string>();
  ClientMessage m;
  if (type == "toggle") {
    m.type = ClientMessage::Type::Toggle;
  } else if (type == "correct") {
    m.type = ClientMessage::Type::Correct;
    m.dx = number_field(j, "dx");
    m.dy = number_field(j, "dy");
    if (j.contains("grip")) m.grip = number_field(j, "grip");
  } else if (type == "pause") {
    m.type = ClientMessage::Type::Pause;
  } else if (type == "resume") {
    m.type = ClientMessage::Type::Resume;
  } else {
    throw std::invalid_argument("unknown message type '" + type + "'");
  }
  return m;
}

class Session;

struct Gateway::Impl {
  Impl(trainer::RunControl& c, feedback::HumanEventQueue& q, GatewayOptions o)
      : control(c), queue(q), options(std::move(o)) {}

  trainer::RunControl& control;
  feedback::HumanEventQueue& queue;
  GatewayOptions options;

  net::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread thread;
  std::atomic<unsigned short> bound_port{0};
  std::atomic<bool> connected{false};

  // io thread only
  std::shared_ptr<Session> active;
  std::optional<std::string> latest_frame;
  int frame_episode = 0;
  int frame_step = 0;
  bool held_for_absence = false;
  bool teacher_paused = false;

  void do_accept();
  void on_frame(std::string text, int episode, int step);
  void on_connected(const std::shared_ptr<Session>& s);
  void on_disconnected(const Session* s);
  void on_message(const std::string& text);
  void hold();
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Gateway::Impl* gw) : stream_(std::move(socket)), gw_(gw) {}

  void run() {
    http::async_read(stream_, buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
  }

  void send(std::string text) {
    if (!ws_) return;
    if (writing_) {
      pending_ = std::move(text);
      return;
    }
    write(std::move(text));
  }

  void close() {
    beast::error_code ec;
    if (ws_)
      beast::get_lowest_layer(*ws_).socket().close(ec);
    else
      stream_.socket().close(ec);
  }

 private:
  void on_request(beast::error_code ec) {
    if (ec) return;
    if (!websocket::is_upgrade(request_)) return reject(http::status::bad_request, "websocket upgrade required\n");
    if (gw_->active) return reject(http::status::conflict, "another teacher is connected\n");
    gw_->active = shared_from_this();
    ws_.emplace(std::move(stream_));
    ws_->set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_->async_accept(request_, [self = shared_from_this()](beast::error_code e) { self->on_accept(e); });
  }

  void reject(http::status status, const char* body) {
    response_.emplace(status, request_.version());
    response_->set(http::field::content_type, "text/plain");
    response_->body() = body;
    response_->prepare_payload();
    response_->keep_alive(false);
    http::async_write(stream_, *response_, [self = shared_from_this()](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  void on_accept(beast::error_code ec) {
    if (ec) {
      gw_->on_disconnected(this);
      return;
    }
    gw_->on_connected(shared_from_this());
    do_read();
  }

  void do_read() {
    ws_->async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      gw_->on_disconnected(this);
      return;
    }
    gw_->on_message(beast::buffers_to_string(buffer_.data()));
    buffer_.consume(buffer_.size());
    do_read();
  }

  void write(std::string text) {
    out_ = std::move(text);
    writing_ = true;
    ws_->text(true);
    ws_->async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code e, std::size_t) {
      self->writing_ = false;
      if (e) return;  // the read side reports the disconnect
      if (self->pending_) {
        auto next = std::move(*self->pending_);
        self->pending_.reset();
        self->write(std::move(next));
      }
    });
  }

  beast::tcp_stream stream_;
  Gateway::Impl* gw_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::optional<http::response<http::string_body>> response_;
  std::optional<websocket::stream<beast::tcp_stream>> ws_;
  bool writing_ = false;
  std::string out_;
  std::optional<std::string> pending_;
};

void Gateway::Impl::do_accept() {
  acceptor->async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<Session>(std::move(socket), this)->run();
    do_accept();
  });
}

void Gateway::Impl::on_frame(std::string text, int episode, int step) {
  frame_episode = episode;
  frame_step = step;
  latest_frame = text;
  if (active) active->send(std::move(text));
}

void Gateway::Impl::on_connected(const std::shared_ptr<Session>& s) {
  connected = true;
  if (held_for_absence && !teacher_paused) control.resume();
  held_for_absence = false;
  if (latest_frame) s->send(*latest_frame);
}

void Gateway::Impl::on_disconnected(const Session* s) {
  if (active.get() != s) return;
  active.reset();
  connected = false;
  hold();
}

void Gateway::Impl::hold() {
  if (active) return;
  held_for_absence = true;
  control.pause_at_episode_end();
}

void Gateway::Impl::on_message(const std::string& text) {
  ClientMessage m;
  try {
    m = parse_client_message(text);
  } catch (const std::invalid_argument& e) {
    std::cerr << "gateway: ignoring message: " << e.what() << '\n';
    return;
  }
  feedback::HumanInput in;
  in.received = std::chrono::steady_clock::now();
  switch (m.type) {
    case ClientMessage::Type::Toggle:
      in.kind = feedback::HumanInput::Kind::Toggle;
      queue.push(in);
      break;
    case ClientMessage::Type::Correct:
      in.kind = feedback::HumanInput::Kind::Correct;
      in.dx = m.dx;
      in.dy = m.dy;
      in.grip = m.grip;
      queue.push(in);
      break;
    case ClientMessage::Type::Pause:
      in.kind = feedback::HumanInput::Kind::Pause;
      queue.record_control(in, frame_episode, frame_step);
      teacher_paused = true;
      control.pause();
      break;
    case ClientMessage::Type::Resume:
      in.kind = feedback::HumanInput::Kind::Resume;
      queue.record_control(in, frame_episode, frame_step);
      teacher_paused = false;
      held_for_absence = false;
      control.resume();
      break;
  }
}

Gateway::Gateway(trainer::RunControl& control, feedback::HumanEventQueue& queue, GatewayOptions options)
    : impl_(std::make_shared<Impl>(control, queue, std::move(options))) {}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  auto& im = *impl_;
  if (im.thread.joinable()) return;
  const tcp::endpoint endpoint(net::ip::make_address(im.options.host), im.options.port);
  im.acceptor.emplace(im.ioc);
  im.acceptor->open(endpoint.protocol());
  im.acceptor->set_option(net::socket_base::reuse_address(true));
  im.acceptor->bind(endpoint);
  im.acceptor->listen();
  im.bound_port = im.acceptor->local_endpoint().port();
  im.do_accept();
  im.thread = std::thread([&im] { im.ioc.run(); });
}

void Gateway::stop() {
  auto& im = *impl_;
  if (!im.thread.joinable()) return;
  net::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor->close(ec);
    if (im.active) im.active->close();
    im.active.reset();
    im.connected = false;
  });
  im.ioc.stop();
  im.thread.join();
}

unsigned short Gateway::port() const { return impl_->bound_port.load(); }

void Gateway::publish(const sim::SceneFrame& frame) {
  auto text = sim::to_json(frame).dump();
  net::post(impl_->ioc, [im = impl_, text = std::move(text), e = frame.episode, s = frame.step]() mutable {
    im->on_frame(std::move(text), e, s);
  });
}

bool Gateway::client_connected() const { return impl_->connected.load(); }

void Gateway::hold_until_teacher() {
  net::post(impl_->ioc, [im = impl_] { im->hold(); });
}

}  // namespace ceiling::gateway
