#include "spores/event_log.hpp"

#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace spores::sim {

std::string format_event(const Event& e) {
  // Sign-magnitude rendering: -4500 ms must read "-4.500", and the sign
  // must survive a zero seconds part.
  char time_buf[32];
  std::int64_t abs_ms = e.t_ms < 0 ? -e.t_ms : e.t_ms;
  std::snprintf(time_buf, sizeof(time_buf), "%s%" PRId64 ".%03" PRId64,
                e.t_ms < 0 ? "-" : "", abs_ms / 1000, abs_ms % 1000);

  std::string out;
  out.reserve(64);
  out += time_buf;
  out += ',';
  out += e.type;
  out += ',';
  out += e.actor;
  out += ',';
  out += std::to_string(e.route_id);
  out += ',';
  out += std::to_string(e.layer_index);
  out += ',';
  out += std::to_string(e.message_id);
  out += ',';
  out += e.outcome;
  return out;
}

Event parse_event(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  if (fields.size() != 7) throw std::invalid_argument("event line needs 7 fields: " + line);

  Event e;
  double t = std::stod(fields[0]);
  e.t_ms = static_cast<std::int64_t>(t < 0 ? t * 1000 - 0.5 : t * 1000 + 0.5);
  e.type = fields[1];
  e.actor = fields[2];
  e.route_id = std::stoi(fields[3]);
  e.layer_index = std::stoi(fields[4]);
  e.message_id = std::stoll(fields[5]);
  e.outcome = fields[6];
  return e;
}

std::string device_name(std::uint32_t user, std::uint16_t device) {
  return "u" + std::to_string(user) + ".d" + std::to_string(device);
}

std::pair<std::uint32_t, std::uint16_t> parse_device_name(const std::string& name) {
  if (name.size() < 4 || name[0] != 'u') throw std::invalid_argument("bad device name: " + name);
  std::size_t dot = name.find(".d");
  if (dot == std::string::npos) throw std::invalid_argument("bad device name: " + name);
  unsigned long user = std::stoul(name.substr(1, dot - 1));
  unsigned long dev = std::stoul(name.substr(dot + 2));
  return {static_cast<std::uint32_t>(user), static_cast<std::uint16_t>(dev)};
}

EventLogWriter::EventLogWriter(std::ostream* out) : out_(out) {
  if (out_) *out_ << kEventLogHeader << '\n';
}

void EventLogWriter::emit(const Event& e) {
  if (out_) *out_ << format_event(e) << '\n';
}

}  // namespace spores::sim
