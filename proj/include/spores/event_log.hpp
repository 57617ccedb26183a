#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace spores::sim {

// One line per event: time,event_type,actor,route_id,layer_index,message_id,outcome
// Times are seconds with exactly three decimals; -1 marks unset numeric
// fields and the empty string an unset outcome. Actors are device names
// like "u3.d2".
struct Event {
  std::int64_t t_ms = 0;
  std::string type;
  std::string actor;
  std::int32_t route_id = -1;
  std::int32_t layer_index = -1;
  std::int64_t message_id = -1;
  std::string outcome;
};

inline constexpr const char* kEventLogHeader =
    "time,event_type,actor,route_id,layer_index,message_id,outcome";

namespace event_type {
inline constexpr const char* exchange_start = "exchange_start";
inline constexpr const char* exchange_skip = "exchange_skip";
inline constexpr const char* route_created = "route_created";
inline constexpr const char* route_layer_member = "route_layer_member";
inline constexpr const char* message_sent = "message_sent";
inline constexpr const char* message_hop = "message_hop";
inline constexpr const char* message_drop = "message_drop";
inline constexpr const char* decrypt_failed = "decrypt_failed";
inline constexpr const char* cache_park = "cache_park";
inline constexpr const char* cache_deliver = "cache_deliver";
inline constexpr const char* transfer_complete = "transfer_complete";
inline constexpr const char* sender_complete = "sender_complete";
}  // namespace event_type

std::string format_event(const Event& e);
Event parse_event(const std::string& line);  // throws std::invalid_argument

std::string device_name(std::uint32_t user, std::uint16_t device);
// (user, device) from a "u<user>.d<device>" name.
std::pair<std::uint32_t, std::uint16_t> parse_device_name(const std::string& name);

class EventLogWriter {
 public:
  // Null sink drops events. The header is written on construction.
  explicit EventLogWriter(std::ostream* out);
  void emit(const Event& e);
  bool enabled() const { return out_ != nullptr; }

 private:
  std::ostream* out_;
};

}  // namespace spores::sim
