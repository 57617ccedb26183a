#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "spores/bytes.hpp"

namespace spores::esquad {

using FileId = std::array<std::uint8_t, 16>;
inline constexpr FileId kNoFile{};

enum class InteractionType : std::uint8_t {
  use = 0,       // device was active this round
  download = 1,  // device is the receiving endpoint for file
  upload = 2,    // device is the sending endpoint for file
};

struct Interaction {
  double ts = 0;
  std::uint16_t device = 0;
  InteractionType type = InteractionType::use;
  FileId file = kNoFile;  // meaningful for download/upload only

  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

// Per-user shared log. Records are grouped by originating device and kept
// sorted; a device's own records only ever extend, so per-device record
// counts work as an anti-entropy digest (any replica's per-device list is
// a prefix of any longer one).
class InteractionLog {
 public:
  explicit InteractionLog(std::uint32_t user_id = 0) : user_(user_id) {}

  std::uint32_t user_id() const { return user_; }

  void append(const Interaction& rec);

  using Digest = std::map<std::uint16_t, std::size_t>;
  Digest digest() const;

  // Records the peer (described by its digest) is missing.
  std::vector<Interaction> delta_for(const Digest& peer) const;

  void absorb(const std::vector<Interaction>& records);

  // Union with another replica of the same user's log.
  void merge(const InteractionLog& other);

  std::size_t size() const;
  std::vector<Interaction> all() const;  // canonical (ts, device, type, file) order

  const std::vector<Interaction>& device_records(std::uint16_t device) const;

  Bytes serialize() const;
  static InteractionLog deserialize(std::uint32_t user_id, ByteView data);

 private:
  std::uint32_t user_;
  std::map<std::uint16_t, std::vector<Interaction>> by_device_;
};

void record_use(InteractionLog& log, std::uint16_t device, double ts);

// Availability rows: bit d of rows[i] says device d produced a USE record
// in [origin + i*period, origin + (i+1)*period). Up to 64 devices.
struct AvailabilityMatrix {
  std::vector<std::uint64_t> rows;
  std::uint16_t devices = 0;

  bool online(std::size_t round, std::uint16_t device) const {
    return rows[round] >> device & 1;
  }
  std::size_t rounds() const { return rows.size(); }
};

AvailabilityMatrix build_availability(const InteractionLog& log, double period, double origin,
                                      std::size_t rounds, std::uint16_t devices);

// Order-1 Markov predictor over whole-squad states with add-one smoothing.
// Feed rows oldest first; predictions condition on the last row seen.
class MarkovPredictor {
 public:
  explicit MarkovPredictor(std::uint16_t devices);

  void observe(std::uint64_t row);

  // P(device online in the next round | current state). In (0, 1).
  double predict(std::uint16_t device) const;
  std::vector<double> predict_all() const;

  std::uint16_t devices() const { return devices_; }

 private:
  struct StateStats {
    std::uint32_t matches = 0;
    std::vector<std::uint32_t> hits;
  };

  std::uint16_t devices_;
  std::map<std::uint64_t, StateStats> stats_;
  // Fallback: per-device online-to-online self transitions.
  std::vector<std::uint32_t> self_matches_;
  std::vector<std::uint32_t> self_hits_;
  std::uint64_t current_ = 0;
  bool has_rows_ = false;
};

// Prediction for round i+1 given rows 0..i of X.
double predict_online(const AvailabilityMatrix& x, std::size_t i, std::uint16_t device);
std::vector<double> predict_all(const AvailabilityMatrix& x, std::size_t i);

}  // namespace spores::esquad
