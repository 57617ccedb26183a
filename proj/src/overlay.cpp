#include "spores/overlay.hpp"

#include <algorithm>
#include <stdexcept>

namespace spores::overlay {

void write_descriptor(wire::Writer& w, const Descriptor& d) {
  w.blob16(view(d.addr));
  w.blob16(ByteView(d.pk.data(), d.pk.size()));
  w.f64(d.p_online);
  w.f64(d.issued_at);
}

Descriptor read_descriptor(wire::Reader& r) {
  Descriptor d;
  d.addr = r.blob16();
  Bytes pk = r.blob16();
  if (pk.size() != d.pk.size()) throw wire::Error("bad descriptor key length");
  std::copy(pk.begin(), pk.end(), d.pk.begin());
  d.p_online = r.f64();
  d.issued_at = r.f64();
  return d;
}

Bytes serialize(const Descriptor& d) {
  wire::Writer w;
  write_descriptor(w, d);
  return w.take();
}

Descriptor deserialize(ByteView data) {
  wire::Reader r(data);
  Descriptor d = read_descriptor(r);
  r.expect_done();
  return d;
}

RpsView::RpsView(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("RpsView: capacity must be positive");
}

std::size_t RpsView::oldest_index() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const Descriptor& a = entries_[i];
    const Descriptor& b = entries_[best];
    if (a.issued_at < b.issued_at || (a.issued_at == b.issued_at && a.addr < b.addr)) best = i;
  }
  return best;
}

void RpsView::insert(const Descriptor& d, const Bytes& self_addr) {
  if (d.addr == self_addr) return;
  for (Descriptor& e : entries_) {
    if (e.addr == d.addr) {
      if (d.issued_at >= e.issued_at) e = d;
      return;
    }
  }
  if (entries_.size() == capacity_) entries_.erase(entries_.begin() + oldest_index());
  entries_.push_back(d);
}

void RpsView::remove(const Bytes& addr) {
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (it->addr == addr) {
      entries_.erase(it);
      return;
    }
  }
}

std::optional<Descriptor> RpsView::pop_oldest() {
  if (entries_.empty()) return std::nullopt;
  std::size_t i = oldest_index();
  Descriptor d = std::move(entries_[i]);
  entries_.erase(entries_.begin() + i);
  return d;
}

std::vector<Descriptor> RpsView::random_subset(std::size_t k, Rng& rng) const {
  std::vector<Descriptor> pool = entries_;
  rng.shuffle(pool);
  if (pool.size() > k) pool.resize(k);
  return pool;
}

std::vector<Descriptor> RpsView::sample_candidates(Rng& rng) const {
  std::vector<Descriptor> pool = entries_;
  rng.shuffle(pool);
  return pool;
}

std::optional<TickPlan> rps_tick(RpsView& view, const Descriptor& fresh_self,
                                 std::size_t l_gossip, Rng& rng) {
  auto partner = view.pop_oldest();
  if (!partner) return std::nullopt;
  TickPlan plan;
  plan.partner = std::move(*partner);
  plan.proposal = view.random_subset(l_gossip, rng);
  plan.proposal.push_back(fresh_self);
  return plan;
}

std::vector<Descriptor> rps_reply(const RpsView& view, const Descriptor& fresh_self,
                                  std::size_t l_gossip, Rng& rng) {
  std::vector<Descriptor> out = view.random_subset(l_gossip, rng);
  out.push_back(fresh_self);
  return out;
}

void rps_merge(RpsView& view, const std::vector<Descriptor>& received,
               const std::vector<Descriptor>& sent, const Bytes& self_addr) {
  // Received entries land in free slots first; once the view is full they
  // replace the entries that were sent out, and only then the oldest. Sent
  // entries the exchange never pays for stay put, so views run saturated.
  std::size_t next_victim = 0;
  for (const Descriptor& d : received) {
    if (d.addr == self_addr) continue;
    bool known = std::any_of(view.entries().begin(), view.entries().end(),
                             [&](const Descriptor& e) { return e.addr == d.addr; });
    if (!known && view.size() == view.capacity()) {
      while (next_victim < sent.size()) {
        const Bytes& victim = sent[next_victim++].addr;
        bool present = std::any_of(view.entries().begin(), view.entries().end(),
                                   [&](const Descriptor& e) { return e.addr == victim; });
        if (present) {
          view.remove(victim);
          break;
        }
      }
    }
    view.insert(d, self_addr);
  }
}

}  // namespace spores::overlay
