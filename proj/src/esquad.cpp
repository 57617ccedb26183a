#include "spores/esquad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spores/wire.hpp"

namespace spores::esquad {

void InteractionLog::append(const Interaction& rec) {
  auto& v = by_device_[rec.device];
  auto it = std::lower_bound(v.begin(), v.end(), rec);
  if (it != v.end() && *it == rec) return;
  v.insert(it, rec);
}

InteractionLog::Digest InteractionLog::digest() const {
  Digest d;
  for (const auto& [dev, v] : by_device_) d[dev] = v.size();
  return d;
}

std::vector<Interaction> InteractionLog::delta_for(const Digest& peer) const {
  std::vector<Interaction> out;
  for (const auto& [dev, v] : by_device_) {
    auto it = peer.find(dev);
    std::size_t have = (it == peer.end()) ? 0 : it->second;
    for (std::size_t i = have; i < v.size(); ++i) out.push_back(v[i]);
  }
  return out;
}

void InteractionLog::absorb(const std::vector<Interaction>& records) {
  for (const Interaction& r : records) append(r);
}

void InteractionLog::merge(const InteractionLog& other) {
  if (other.user_ != user_)
    throw std::invalid_argument("InteractionLog::merge: logs belong to different users");
  for (const auto& [dev, v] : other.by_device_)
    for (const Interaction& r : v) append(r);
}

std::size_t InteractionLog::size() const {
  std::size_t n = 0;
  for (const auto& [dev, v] : by_device_) n += v.size();
  return n;
}

std::vector<Interaction> InteractionLog::all() const {
  std::vector<Interaction> out;
  out.reserve(size());
  for (const auto& [dev, v] : by_device_) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<Interaction>& InteractionLog::device_records(std::uint16_t device) const {
  static const std::vector<Interaction> empty;
  auto it = by_device_.find(device);
  return it == by_device_.end() ? empty : it->second;
}

Bytes InteractionLog::serialize() const {
  wire::Writer w;
  for (const Interaction& r : all()) {
    bool has_file = r.type != InteractionType::use;
    w.u16(static_cast<std::uint16_t>(8 + 2 + 1 + (has_file ? 16 : 0)));
    w.f64(r.ts);
    w.u16(r.device);
    w.u8(static_cast<std::uint8_t>(r.type));
    if (has_file) w.raw(ByteView(r.file.data(), r.file.size()));
  }
  return w.take();
}

InteractionLog InteractionLog::deserialize(std::uint32_t user_id, ByteView data) {
  InteractionLog log(user_id);
  wire::Reader r(data);
  while (!r.done()) {
    std::uint16_t len = r.u16();
    if (len != 11 && len != 27) throw wire::Error("bad interaction record length");
    Interaction rec;
    rec.ts = r.f64();
    rec.device = r.u16();
    std::uint8_t typ = r.u8();
    if (typ > 2) throw wire::Error("bad interaction type");
    rec.type = static_cast<InteractionType>(typ);
    if (len == 27) {
      auto fb = r.view(16);
      std::copy(fb.begin(), fb.end(), rec.file.begin());
    } else if (rec.type != InteractionType::use) {
      throw wire::Error("missing file id");
    }
    log.append(rec);
  }
  return log;
}

void record_use(InteractionLog& log, std::uint16_t device, double ts) {
  log.append(Interaction{ts, device, InteractionType::use, kNoFile});
}

AvailabilityMatrix build_availability(const InteractionLog& log, double period, double origin,
                                      std::size_t rounds, std::uint16_t devices) {
  if (!(period > 0)) throw std::invalid_argument("build_availability: period must be positive");
  if (devices > 64) throw std::invalid_argument("build_availability: at most 64 devices");
  AvailabilityMatrix x;
  x.devices = devices;
  x.rows.assign(rounds, 0);
  for (const Interaction& r : log.all()) {
    if (r.type != InteractionType::use || r.device >= devices) continue;
    double pos = (r.ts - origin) / period;
    if (pos < 0) continue;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i < rounds) x.rows[i] |= std::uint64_t{1} << r.device;
  }
  return x;
}

MarkovPredictor::MarkovPredictor(std::uint16_t devices)
    : devices_(devices), self_matches_(devices, 0), self_hits_(devices, 0) {
  if (devices == 0 || devices > 64)
    throw std::invalid_argument("MarkovPredictor: need 1..64 devices");
}

void MarkovPredictor::observe(std::uint64_t row) {
  if (has_rows_) {
    StateStats& st = stats_[current_];
    if (st.hits.empty()) st.hits.assign(devices_, 0);
    st.matches += 1;
    for (std::uint16_t d = 0; d < devices_; ++d) {
      bool next_online = row >> d & 1;
      if (next_online) st.hits[d] += 1;
      if (current_ >> d & 1) {
        self_matches_[d] += 1;
        if (next_online) self_hits_[d] += 1;
      }
    }
  }
  current_ = row;
  has_rows_ = true;
}

double MarkovPredictor::predict(std::uint16_t device) const {
  if (device >= devices_) throw std::out_of_range("MarkovPredictor::predict: bad device");
  auto it = stats_.find(current_);
  if (has_rows_ && it != stats_.end() && it->second.matches > 0) {
    const StateStats& st = it->second;
    return (st.hits[device] + 1.0) / (st.matches + 2.0);
  }
  // No earlier round matches the current state: back off to the device's
  // smoothed online-to-online rate; with no data this is 1/2.
  return (self_hits_[device] + 1.0) / (self_matches_[device] + 2.0);
}

std::vector<double> MarkovPredictor::predict_all() const {
  std::vector<double> out(devices_);
  for (std::uint16_t d = 0; d < devices_; ++d) out[d] = predict(d);
  return out;
}

double predict_online(const AvailabilityMatrix& x, std::size_t i, std::uint16_t device) {
  MarkovPredictor p(x.devices);
  for (std::size_t j = 0; j <= i; ++j) p.observe(x.rows.at(j));
  return p.predict(device);
}

std::vector<double> predict_all(const AvailabilityMatrix& x, std::size_t i) {
  MarkovPredictor p(x.devices);
  for (std::size_t j = 0; j <= i; ++j) p.observe(x.rows.at(j));
  return p.predict_all();
}

}  // namespace spores::esquad
