#include "spores/transfer.hpp"

#include <algorithm>
#include <stdexcept>

#include "spores/wire.hpp"

namespace spores::transfer {

namespace {

std::uint32_t chunk_count(std::uint64_t size, std::uint32_t chunk_size) {
  return static_cast<std::uint32_t>((size + chunk_size - 1) / chunk_size);
}

}  // namespace

Digest FileDescriptor::chunk_digest(std::uint32_t index) const {
  if (index >= n_chunks) throw std::out_of_range("chunk_digest: bad index");
  Digest d;
  std::copy_n(chunks_hash.begin() + static_cast<std::size_t>(index) * kDigestBytes, kDigestBytes,
              d.begin());
  return d;
}

std::uint32_t FileDescriptor::chunk_length(std::uint32_t index) const {
  if (index >= n_chunks) throw std::out_of_range("chunk_length: bad index");
  if (index + 1 < n_chunks) return chunk_size;
  std::uint64_t rem = size - static_cast<std::uint64_t>(index) * chunk_size;
  return static_cast<std::uint32_t>(rem);
}

bool FileDescriptor::verify_integrity() const {
  if (chunk_size == 0) return false;
  if (n_chunks != chunk_count(size, chunk_size)) return false;
  if (chunks_hash.size() != static_cast<std::size_t>(n_chunks) * kDigestBytes) return false;
  return sha1(view(chunks_hash)) == hash;
}

FileDescriptor build_file_descriptor(const ChunkProvider& chunks, std::uint64_t size,
                                     std::uint32_t chunk_size, Rng& rng) {
  if (chunk_size == 0) throw std::invalid_argument("build_file_descriptor: zero chunk size");
  FileDescriptor fd;
  rng.fill(fd.id.data(), fd.id.size());
  fd.size = size;
  fd.chunk_size = chunk_size;
  fd.n_chunks = chunk_count(size, chunk_size);
  fd.chunks_hash.reserve(static_cast<std::size_t>(fd.n_chunks) * kDigestBytes);
  for (std::uint32_t i = 0; i < fd.n_chunks; ++i) {
    Bytes chunk = chunks(i);
    if (chunk.size() != fd.chunk_length(i))
      throw std::invalid_argument("build_file_descriptor: provider returned bad chunk length");
    Digest d = sha1(view(chunk));
    fd.chunks_hash.insert(fd.chunks_hash.end(), d.begin(), d.end());
  }
  fd.hash = sha1(view(fd.chunks_hash));
  return fd;
}

FileDescriptor build_file_descriptor(ByteView file, std::uint32_t chunk_size, Rng& rng) {
  if (chunk_size == 0) throw std::invalid_argument("build_file_descriptor: zero chunk size");
  auto provider = [&](std::uint32_t i) {
    std::uint64_t off = static_cast<std::uint64_t>(i) * chunk_size;
    std::uint64_t len = std::min<std::uint64_t>(chunk_size, file.size() - off);
    return Bytes(file.begin() + off, file.begin() + off + len);
  };
  return build_file_descriptor(provider, file.size(), chunk_size, rng);
}

Bytes serialize(const FileDescriptor& fd) {
  wire::Writer w;
  w.raw(ByteView(fd.id.data(), fd.id.size()));
  w.u64(fd.size);
  w.u32(fd.chunk_size);
  w.u32(fd.n_chunks);
  w.raw(view(fd.chunks_hash));
  w.raw(ByteView(fd.hash.data(), fd.hash.size()));
  return w.take();
}

FileDescriptor deserialize_file_descriptor(ByteView data) {
  wire::Reader r(data);
  FileDescriptor fd;
  auto id = r.view(16);
  std::copy(id.begin(), id.end(), fd.id.begin());
  fd.size = r.u64();
  fd.chunk_size = r.u32();
  fd.n_chunks = r.u32();
  fd.chunks_hash = r.raw(static_cast<std::size_t>(fd.n_chunks) * kDigestBytes);
  auto h = r.view(kDigestBytes);
  std::copy(h.begin(), h.end(), fd.hash.begin());
  r.expect_done();
  if (!fd.verify_integrity()) throw wire::Error("file descriptor fails integrity check");
  return fd;
}

Bytes serialize(const ChunkMessage& m) {
  wire::Writer w;
  w.raw(ByteView(m.file.data(), m.file.size()));
  w.u32(m.index);
  if (m.data.size() > 0xffffffffULL) throw wire::Error("chunk too long");
  w.u32(static_cast<std::uint32_t>(m.data.size()));
  w.raw(view(m.data));
  return w.take();
}

Bytes serialize(const AckMessage& m) {
  wire::Writer w;
  w.raw(ByteView(m.file.data(), m.file.size()));
  w.u32(m.index);
  return w.take();
}

std::optional<ChunkMessage> parse_chunk(ByteView data) {
  try {
    wire::Reader r(data);
    ChunkMessage m;
    auto id = r.view(16);
    std::copy(id.begin(), id.end(), m.file.begin());
    m.index = r.u32();
    m.data = r.raw(r.u32());
    r.expect_done();
    return m;
  } catch (const wire::Error&) {
    return std::nullopt;
  }
}

std::optional<AckMessage> parse_ack(ByteView data) {
  if (data.size() != 20) return std::nullopt;
  wire::Reader r(data);
  AckMessage m;
  auto id = r.view(16);
  std::copy(id.begin(), id.end(), m.file.begin());
  m.index = r.u32();
  return m;
}

std::optional<FileId> peek_file_id(ByteView payload) {
  if (payload.size() < 16) return std::nullopt;
  FileId id;
  std::copy_n(payload.begin(), 16, id.begin());
  return id;
}

Sender::Sender(FileDescriptor fd, ChunkProvider chunks, std::size_t window,
               std::int64_t retry_ms)
    : fd_(std::move(fd)),
      chunks_(std::move(chunks)),
      window_(window),
      retry_ms_(retry_ms),
      state_(fd_.n_chunks, ChunkState::unsent),
      sent_at_(fd_.n_chunks, 0) {
  if (window == 0) throw std::invalid_argument("Sender: window must be positive");
}

std::vector<ChunkMessage> Sender::step(std::int64_t now_ms) {
  std::vector<ChunkMessage> out;
  for (std::uint32_t i = 0; i < fd_.n_chunks; ++i) {
    if (state_[i] == ChunkState::inflight && now_ms - sent_at_[i] >= retry_ms_) {
      sent_at_[i] = now_ms;
      out.push_back(ChunkMessage{fd_.id, i, chunks_(i)});
    }
  }
  for (std::uint32_t i = 0; i < fd_.n_chunks && inflight_count_ < window_; ++i) {
    if (state_[i] != ChunkState::unsent) continue;
    state_[i] = ChunkState::inflight;
    sent_at_[i] = now_ms;
    ++inflight_count_;
    out.push_back(ChunkMessage{fd_.id, i, chunks_(i)});
  }
  return out;
}

void Sender::on_ack(const AckMessage& ack) {
  if (ack.file != fd_.id || ack.index >= fd_.n_chunks) return;
  ChunkState& st = state_[ack.index];
  if (st == ChunkState::acked) return;
  if (st == ChunkState::inflight) --inflight_count_;
  st = ChunkState::acked;
  ++acked_count_;
}

std::uint32_t Sender::base() const {
  for (std::uint32_t i = 0; i < fd_.n_chunks; ++i)
    if (state_[i] != ChunkState::acked) return i;
  return fd_.n_chunks;
}

std::int64_t Sender::next_deadline() const {
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (std::uint32_t i = 0; i < fd_.n_chunks; ++i)
    if (state_[i] == ChunkState::inflight) best = std::min(best, sent_at_[i] + retry_ms_);
  return best;
}

Receiver::Receiver(FileDescriptor fd, bool keep_data)
    : fd_(std::move(fd)),
      keep_data_(keep_data),
      have_(fd_.n_chunks, false),
      data_(keep_data ? fd_.n_chunks : 0) {}

std::optional<AckMessage> Receiver::on_chunk(const ChunkMessage& m) {
  if (m.file != fd_.id || m.index >= fd_.n_chunks) return std::nullopt;
  if (have_[m.index]) return AckMessage{fd_.id, m.index};
  if (m.data.size() != fd_.chunk_length(m.index)) return std::nullopt;
  if (sha1(view(m.data)) != fd_.chunk_digest(m.index)) return std::nullopt;
  have_[m.index] = true;
  ++received_count_;
  if (keep_data_) data_[m.index] = m.data;
  return AckMessage{fd_.id, m.index};
}

Bytes Receiver::assemble() const {
  if (!keep_data_) throw std::logic_error("Receiver::assemble: data was not kept");
  if (!complete()) throw std::logic_error("Receiver::assemble: transfer incomplete");
  Bytes out;
  out.reserve(fd_.size);
  for (const Bytes& c : data_) out.insert(out.end(), c.begin(), c.end());
  return out;
}

RelayDecision esquad_relay(const esquad::InteractionLog& log, ByteView payload,
                           std::uint16_t self_device,
                           const std::function<bool(std::uint16_t)>& online) {
  auto file = peek_file_id(payload);
  if (!file) return {RelayAction::unknown_file};

  // Chunks end at the downloading endpoint, acks at the uploading one.
  esquad::InteractionType want = parse_ack(payload)
                                     ? esquad::InteractionType::upload
                                     : esquad::InteractionType::download;
  for (const esquad::Interaction& r : log.all()) {
    if (r.type != want || r.file != *file) continue;
    if (r.device == self_device) return {RelayAction::deliver_local, r.device};
    if (online(r.device)) return {RelayAction::handoff, r.device};
    return {RelayAction::park, r.device};
  }
  return {RelayAction::unknown_file};
}

}  // namespace spores::transfer
