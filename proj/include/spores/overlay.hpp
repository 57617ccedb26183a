#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spores/bytes.hpp"
#include "spores/crypto.hpp"
#include "spores/rng.hpp"
#include "spores/wire.hpp"

namespace spores::overlay {

// Self-issued relay advertisement: contact address, onion key, the
// device's own availability prediction, and when it was issued.
struct Descriptor {
  Bytes addr;
  crypto::PublicKey pk{};
  double p_online = 0;
  double issued_at = 0;
};

Bytes serialize(const Descriptor& d);
Descriptor deserialize(ByteView data);
void write_descriptor(wire::Writer& w, const Descriptor& d);
Descriptor read_descriptor(wire::Reader& r);

// Bounded partial view. One entry per address; a fresher descriptor for a
// known address replaces the stale one; at capacity the oldest entry is
// evicted.
class RpsView {
 public:
  explicit RpsView(std::size_t capacity);

  void insert(const Descriptor& d, const Bytes& self_addr);
  void remove(const Bytes& addr);
  std::optional<Descriptor> pop_oldest();

  std::vector<Descriptor> random_subset(std::size_t k, Rng& rng) const;
  // All entries in uniformly random order: candidate stream for layer picks.
  std::vector<Descriptor> sample_candidates(Rng& rng) const;

  const std::vector<Descriptor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t oldest_index() const;

  std::size_t capacity_;
  std::vector<Descriptor> entries_;
};

// One gossip round from the initiator's side: pull the oldest entry out as
// exchange partner and pick what to offer (l_gossip random entries plus a
// fresh self descriptor). Empty view: no exchange possible.
struct TickPlan {
  Descriptor partner;
  std::vector<Descriptor> proposal;
};
std::optional<TickPlan> rps_tick(RpsView& view, const Descriptor& fresh_self,
                                 std::size_t l_gossip, Rng& rng);

// Responder's counter-offer.
std::vector<Descriptor> rps_reply(const RpsView& view, const Descriptor& fresh_self,
                                  std::size_t l_gossip, Rng& rng);

// Received entries take the place of the ones sent away.
void rps_merge(RpsView& view, const std::vector<Descriptor>& received,
               const std::vector<Descriptor>& sent, const Bytes& self_addr);

}  // namespace spores::overlay
