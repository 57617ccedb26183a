#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "spores/bytes.hpp"
#include "spores/esquad.hpp"
#include "spores/rng.hpp"
#include "spores/sha1.hpp"

namespace spores::transfer {

using FileId = esquad::FileId;
using Digest = Sha1Digest;
inline constexpr std::size_t kDigestBytes = 20;

// Integrity metadata shared out-of-band before a transfer: per-chunk
// digests concatenated, plus a digest over that list.
struct FileDescriptor {
  FileId id{};
  std::uint64_t size = 0;
  std::uint32_t chunk_size = 0;
  std::uint32_t n_chunks = 0;
  Bytes chunks_hash;  // n_chunks * 20 bytes
  Digest hash{};

  Digest chunk_digest(std::uint32_t index) const;
  std::uint32_t chunk_length(std::uint32_t index) const;  // last chunk may be short
  bool verify_integrity() const;
};

using ChunkProvider = std::function<Bytes(std::uint32_t index)>;

FileDescriptor build_file_descriptor(ByteView file, std::uint32_t chunk_size, Rng& rng);
FileDescriptor build_file_descriptor(const ChunkProvider& chunks, std::uint64_t size,
                                     std::uint32_t chunk_size, Rng& rng);

Bytes serialize(const FileDescriptor& fd);
FileDescriptor deserialize_file_descriptor(ByteView data);

struct ChunkMessage {
  FileId file{};
  std::uint32_t index = 0;
  Bytes data;
};

struct AckMessage {
  FileId file{};
  std::uint32_t index = 0;
};

Bytes serialize(const ChunkMessage& m);
Bytes serialize(const AckMessage& m);
std::optional<ChunkMessage> parse_chunk(ByteView data);
std::optional<AckMessage> parse_ack(ByteView data);
std::optional<FileId> peek_file_id(ByteView payload);

// Sending side of the selective-repeat loop: at most `window` chunks in
// flight, a chunk is retransmitted when its ack is `retry_ms` overdue.
class Sender {
 public:
  Sender(FileDescriptor fd, ChunkProvider chunks, std::size_t window, std::int64_t retry_ms);

  // Everything that should go on the wire at `now`.
  std::vector<ChunkMessage> step(std::int64_t now_ms);
  void on_ack(const AckMessage& ack);

  bool complete() const { return acked_count_ == fd_.n_chunks; }
  std::uint32_t base() const;  // lowest unacked index, n_chunks when done
  std::size_t in_flight() const { return inflight_count_; }
  // Earliest retransmit due time; int64 max when nothing is in flight.
  std::int64_t next_deadline() const;
  const FileDescriptor& descriptor() const { return fd_; }

 private:
  enum class ChunkState : std::uint8_t { unsent, inflight, acked };

  FileDescriptor fd_;
  ChunkProvider chunks_;
  std::size_t window_;
  std::int64_t retry_ms_;
  std::vector<ChunkState> state_;
  std::vector<std::int64_t> sent_at_;
  std::size_t inflight_count_ = 0;
  std::uint32_t acked_count_ = 0;
};

// Receiving side: acks every structurally valid chunk (duplicates again),
// silently drops chunks whose digest does not match the descriptor.
class Receiver {
 public:
  explicit Receiver(FileDescriptor fd, bool keep_data = true);

  std::optional<AckMessage> on_chunk(const ChunkMessage& m);

  bool complete() const { return received_count_ == fd_.n_chunks; }
  std::uint32_t received_count() const { return received_count_; }
  Bytes assemble() const;  // requires keep_data and completeness
  const FileDescriptor& descriptor() const { return fd_; }

 private:
  FileDescriptor fd_;
  bool keep_data_;
  std::vector<bool> have_;
  std::vector<Bytes> data_;
  std::uint32_t received_count_ = 0;
};

// What an e-squad member does with a transfer payload that reached it via
// the onion: hand it to the endpoint device named by the shared log, or
// park it until that device comes back.
enum class RelayAction : std::uint8_t { deliver_local, handoff, park, unknown_file };

struct RelayDecision {
  RelayAction action;
  std::uint16_t endpoint = 0;
};

RelayDecision esquad_relay(const esquad::InteractionLog& log, ByteView payload,
                           std::uint16_t self_device,
                           const std::function<bool(std::uint16_t)>& online);

}  // namespace spores::transfer
