#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ceiling/env.hpp"
#include "ceiling/feedback.hpp"
#include "ceiling/trainer.hpp"

namespace ceiling::gateway {

struct GatewayOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
};

// Parsed client message.
struct ClientMessage {
  enum class Type { Toggle, Correct, Pause, Resume };
  Type type = Type::Toggle;
  double dx = 0.0;
  double dy = 0.0;
  double grip = 0.0;
};

// Throws std::invalid_argument on malformed or unknown messages.
ClientMessage parse_client_message(const std::string& text);

// Websocket endpoint for one teacher. Frames published by the run are streamed to the
// connected client (a slow client only ever gets the latest frame). Client inputs go to
// the event queue stamped with their receive time. A second concurrent client is
// refused with HTTP 409. Losing the client pauses the run at the next episode boundary;
// the next client to connect resumes it unless the teacher had paused explicitly.
class Gateway {
 public:
  Gateway(trainer::RunControl& control, feedback::HumanEventQueue& queue, GatewayOptions options = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds and starts serving on a background thread. Throws on bind failure.
  void start();
  void stop();
  unsigned short port() const;

  // Thread-safe; meant to be the run's frame sink.
  void publish(const sim::SceneFrame& frame);
  bool client_connected() const;
  // Marks the run as unsupervised until a teacher connects.
  void hold_until_teacher();

 private:
  friend class Session;
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace ceiling::gateway
