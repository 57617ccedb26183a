#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <queue>
#include <stdexcept>
#include <string>

#include "spores/esquad.hpp"
#include "spores/event_log.hpp"
#include "spores/overlay.hpp"
#include "spores/por.hpp"
#include "spores/routes.hpp"
#include "spores/simnet.hpp"
#include "spores/transfer.hpp"
#include "spores/wire.hpp"

namespace spores::sim {

void SimConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (users == 0) bad("users must be positive");
  if (users > 64) bad("at most 64 users");
  if (devices_per_user == 0 || devices_per_user > 64) bad("devices_per_user must be 1..64");
  if (!(mu > 0 && mu < 1)) bad("mu must be in (0,1)");
  if (thetas.empty()) bad("need at least one theta");
  for (double th : thetas)
    if (!(th > 0 && th <= 1)) bad("theta must be in (0,1]");
  if (!(T > 0)) bad("T must be positive");
  if (!(T_out > 0)) bad("T_out must be positive");
  if (!(latency > 0)) bad("latency must be positive");
  if (latency >= T_out) bad("latency must be below T_out");
  if (!(retry > 0)) bad("retry must be positive");
  if (chunk_bytes() == 0) bad("chunk size must be at least one byte");
  if (file_bytes() == 0) bad("file size must be at least one byte");
  if (window == 0) bad("window must be positive");
  if (view_capacity == 0) bad("view capacity must be positive");
  if (n_loc == 0) bad("n_loc must be positive");
  if (history_rounds == 0) bad("need preseeded history");
}

std::uint32_t SimConfig::chunk_bytes() const {
  return static_cast<std::uint32_t>(std::llround(chunk_kib * 1024.0));
}

std::uint64_t SimConfig::file_bytes() const {
  return static_cast<std::uint64_t>(std::llround(file_mib * 1024.0 * 1024.0));
}

namespace {

using esquad::FileId;

std::int64_t to_ms(double seconds) { return std::llround(seconds * 1000.0); }
double to_sec(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

struct MsgMeta {
  std::int32_t route_id = -1;
  std::size_t theta_slot = 0;
  std::int32_t layer = 0;  // layer of the device currently holding it
  std::int64_t message_id = -1;
};

struct SenderCtx {
  std::unique_ptr<transfer::Sender> sender;
  routes::RouteSpec route;
  std::int32_t route_id = -1;
  std::size_t theta_slot = 0;
  std::size_t file_index = 0;
  bool done = false;
};

struct ReceiverCtx {
  std::unique_ptr<transfer::Receiver> receiver;
  routes::RouteSpec back_route;
  std::int32_t fwd_route_id = -1;
  std::int32_t back_route_id = -1;
  std::size_t theta_slot = 0;
  std::size_t file_index = 0;
  bool completed = false;
};

struct Parked {
  Bytes payload;
  MsgMeta meta;
};

struct DeviceState {
  std::uint32_t user = 0;
  std::uint16_t dev = 0;
  std::string name;
  Bytes addr;
  crypto::KeyPair keys;
  std::unique_ptr<Rng> rng;
  esquad::InteractionLog log;
  std::unique_ptr<overlay::RpsView> view;
  bool online = false;
  double self_pred = 0.5;
  std::vector<double> squad_pred;

  std::map<FileId, SenderCtx> senders;
  std::map<FileId, ReceiverCtx> receivers;
  std::vector<Parked> parked;
};

class Experiment {
 public:
  Experiment(const SimConfig& cfg, std::ostream* event_log)
      : cfg_(cfg),
        T_ms_(to_ms(cfg.T)),
        tout_ms_(to_ms(cfg.T_out)),
        lat_ms_(to_ms(cfg.latency)),
        retry_ms_(to_ms(cfg.retry)),
        master_(cfg.seed),
        elog_(event_log) {
    cfg_.validate();
    t_end_ms_ = static_cast<std::int64_t>(5 * cfg_.files + 20) * T_ms_;
    n_rounds_ = 5 * cfg_.files + 21;
    metrics_.end_ms = t_end_ms_;
    metrics_.per_theta.resize(cfg_.thetas.size());
    for (std::size_t i = 0; i < cfg_.thetas.size(); ++i)
      metrics_.per_theta[i].theta = cfg_.thetas[i];
  }

  RunMetrics run();

 private:
  using Fn = std::function<void()>;

  struct QueuedEvent {
    std::int64_t t;
    std::uint64_t seq;
    std::shared_ptr<Fn> fn;
    bool operator>(const QueuedEvent& o) const {
      return t != o.t ? t > o.t : seq > o.seq;
    }
  };

  void at(std::int64_t t, Fn fn) {
    queue_.push(QueuedEvent{t, next_seq_++, std::make_shared<Fn>(std::move(fn))});
  }

  void emit(const char* type, const std::string& actor, std::int32_t route = -1,
            std::int32_t layer = -1, std::int64_t msg = -1, const std::string& outcome = "") {
    elog_.emit(Event{now_, type, actor, route, layer, msg, outcome});
  }

  DeviceState& dev_at(const Bytes& addr) { return devices_[addr_index_.at(addr)]; }

  std::size_t global_id(std::uint32_t user, std::uint16_t d) const {
    return user * cfg_.devices_per_user + d;
  }

  bool device_online(std::uint32_t user, std::uint16_t d) const {
    return devices_[global_id(user, d)].online;
  }

  overlay::Descriptor fresh_descriptor(const DeviceState& dv) const {
    return overlay::Descriptor{dv.addr, dv.keys.pk, dv.self_pred, to_sec(now_)};
  }

  overlay::Descriptor squad_descriptor(const DeviceState& owner, std::uint16_t sibling) const {
    const DeviceState& sib = devices_[global_id(owner.user, sibling)];
    double p = sibling < owner.squad_pred.size() ? owner.squad_pred[sibling] : 0.5;
    return overlay::Descriptor{sib.addr, sib.keys.pk, p, to_sec(now_)};
  }

  routes::EndpointContext make_context(DeviceState& dv);

  void setup();
  void on_round(std::size_t r);
  void do_gossip(DeviceState& dv);
  void do_predictions(DeviceState& dv, std::size_t rows);
  void do_rps(DeviceState& dv);
  void rebootstrap(DeviceState& dv);
  void retry_parked(DeviceState& dv);

  void on_exchange(std::uint32_t k);
  void log_route(const routes::RouteSpec& route, std::int32_t id, const std::string& origin,
                 const char* direction, std::size_t theta_slot);

  void sender_step(std::size_t dev_id, FileId file);
  void send_on_route(DeviceState& dv, const routes::RouteSpec& route, MsgMeta meta,
                     const Bytes& payload, const char* kind);
  por::SendFn make_send_fn(std::size_t holder_id, MsgMeta meta);
  void handle_receive(std::size_t target, Bytes msg_bytes, MsgMeta meta);
  void handle_app_payload(std::size_t dev_id, Bytes payload, MsgMeta meta);
  void endpoint_input(std::size_t dev_id, const Bytes& payload, const MsgMeta& meta);

  SimConfig cfg_;
  std::int64_t T_ms_, tout_ms_, lat_ms_, retry_ms_;
  std::int64_t t_end_ms_ = 0;
  std::size_t n_rounds_ = 0;

  Rng master_;
  EventLogWriter elog_;
  RunMetrics metrics_;

  std::vector<UserModel> models_;
  std::vector<Timeline> timelines_;
  std::vector<DeviceState> devices_;
  std::map<Bytes, std::size_t> addr_index_;
  std::unique_ptr<Rng> sched_rng_;
  std::unique_ptr<Rng> file_rng_;

  std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  std::int64_t now_ = 0;
  std::int32_t next_route_id_ = 0;
  std::int64_t next_msg_id_ = 0;
};

void Experiment::setup() {
  std::size_t total_rounds = cfg_.history_rounds + n_rounds_ + 1;
  models_.reserve(cfg_.users);
  timelines_.reserve(cfg_.users);
  for (std::uint32_t u = 0; u < cfg_.users; ++u) {
    Rng model_rng = master_.fork();
    models_.push_back(
        sample_model(cfg_.model, cfg_.mu, cfg_.n_loc, cfg_.devices_per_user, model_rng));
    Rng walk_rng = master_.fork();
    timelines_.push_back(random_walk(models_.back(), total_rounds, walk_rng));
  }

  devices_.reserve(cfg_.users * cfg_.devices_per_user);
  for (std::uint32_t u = 0; u < cfg_.users; ++u) {
    for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d) {
      DeviceState dv;
      dv.user = u;
      dv.dev = d;
      dv.name = device_name(u, d);
      dv.addr = to_bytes(dv.name);
      dv.rng = std::make_unique<Rng>(master_.fork());
      dv.keys = crypto::generate_keypair(*dv.rng);
      dv.log = esquad::InteractionLog(u);
      dv.view = std::make_unique<overlay::RpsView>(cfg_.view_capacity);
      dv.squad_pred.assign(cfg_.devices_per_user, 0.5);
      addr_index_[dv.addr] = devices_.size();
      devices_.push_back(std::move(dv));
    }
  }
  sched_rng_ = std::make_unique<Rng>(master_.fork());
  file_rng_ = std::make_unique<Rng>(master_.fork());

  // Preseeded converged history: every squad member holds the same past.
  for (std::uint32_t u = 0; u < cfg_.users; ++u) {
    for (std::size_t j = 0; j < cfg_.history_rounds; ++j) {
      std::uint64_t row = timelines_[u].rows[j];
      double ts = (static_cast<double>(j) - static_cast<double>(cfg_.history_rounds)) * cfg_.T;
      for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d) {
        if (!(row >> d & 1)) continue;
        for (std::uint16_t member = 0; member < cfg_.devices_per_user; ++member)
          record_use(devices_[global_id(u, member)].log, d, ts);
      }
    }
  }

  // View bootstrap at the start of the preseeded period: a seed list of
  // random online descriptors, as a device would get when joining.
  double t0 = -static_cast<double>(cfg_.history_rounds) * cfg_.T;
  for (std::uint32_t u = 0; u < cfg_.users; ++u) {
    std::uint64_t row = timelines_[u].rows[0];
    for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d)
      devices_[global_id(u, d)].online = row >> d & 1;
  }
  std::vector<std::size_t> online_ids;
  for (std::size_t i = 0; i < devices_.size(); ++i)
    if (devices_[i].online) online_ids.push_back(i);
  for (DeviceState& dv : devices_) {
    for (std::size_t k = 0; k < cfg_.bootstrap && !online_ids.empty(); ++k) {
      const DeviceState& pick = devices_[online_ids[dv.rng->index(online_ids.size())]];
      if (pick.addr == dv.addr) continue;
      dv.view->insert(overlay::Descriptor{pick.addr, pick.keys.pk, 0.5, t0}, dv.addr);
    }
  }

  // The overlay gossips across the whole preseeded period, so the first
  // routes are built from converged views rather than bootstrap stubs.
  for (std::size_t r = 0; r < cfg_.history_rounds; ++r) {
    now_ = (static_cast<std::int64_t>(r) - static_cast<std::int64_t>(cfg_.history_rounds)) * T_ms_;
    for (std::uint32_t u = 0; u < cfg_.users; ++u) {
      std::uint64_t row = timelines_[u].rows[r];
      for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d)
        devices_[global_id(u, d)].online = row >> d & 1;
    }
    for (DeviceState& dv : devices_)
      if (dv.online) do_predictions(dv, r + 1);
    for (DeviceState& dv : devices_)
      if (dv.online) do_rps(dv);
  }
  now_ = 0;

  // Spawn-time online states for the live period.
  for (std::uint32_t u = 0; u < cfg_.users; ++u) {
    std::uint64_t row = timelines_[u].rows[cfg_.history_rounds];
    for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d)
      devices_[global_id(u, d)].online = row >> d & 1;
  }
}

RunMetrics Experiment::run() {
  setup();
  for (std::size_t r = 0; r < n_rounds_; ++r)
    at(static_cast<std::int64_t>(r) * T_ms_, [this, r] { on_round(r); });
  for (std::uint32_t k = 0; k < cfg_.files; ++k)
    at(static_cast<std::int64_t>(k + 1) * 5 * T_ms_, [this, k] { on_exchange(k); });

  while (!queue_.empty()) {
    QueuedEvent ev = queue_.top();
    if (ev.t > t_end_ms_) break;
    queue_.pop();
    now_ = ev.t;
    (*ev.fn)();
  }
  return std::move(metrics_);
}

void Experiment::on_round(std::size_t r) {
  for (std::uint32_t u = 0; u < cfg_.users; ++u) {
    std::uint64_t row = timelines_[u].rows[cfg_.history_rounds + r];
    for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d)
      devices_[global_id(u, d)].online = row >> d & 1;
  }
  for (DeviceState& dv : devices_)
    if (dv.online) record_use(dv.log, dv.dev, to_sec(now_));
  for (DeviceState& dv : devices_)
    if (dv.online) do_gossip(dv);
  for (DeviceState& dv : devices_)
    if (dv.online) do_predictions(dv, cfg_.history_rounds + r + 1);
  for (DeviceState& dv : devices_)
    if (dv.online) do_rps(dv);
  for (DeviceState& dv : devices_)
    if (dv.online) retry_parked(dv);
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    DeviceState& dv = devices_[i];
    if (!dv.online) continue;
    for (auto& [file, ctx] : dv.senders)
      if (!ctx.done) at(now_, [this, i, file = file] { sender_step(i, file); });
  }
}

void Experiment::do_gossip(DeviceState& dv) {
  std::vector<std::uint16_t> online_sibs;
  for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d)
    if (d != dv.dev && device_online(dv.user, d)) online_sibs.push_back(d);
  if (online_sibs.empty()) return;
  DeviceState& peer = devices_[global_id(dv.user, online_sibs[dv.rng->index(online_sibs.size())])];
  // Anti-entropy both ways, driven by per-device record counts.
  peer.log.absorb(dv.log.delta_for(peer.log.digest()));
  dv.log.absorb(peer.log.delta_for(dv.log.digest()));
}

void Experiment::do_predictions(DeviceState& dv, std::size_t rows) {
  auto x = esquad::build_availability(dv.log, cfg_.T,
                                      -static_cast<double>(cfg_.history_rounds) * cfg_.T, rows,
                                      static_cast<std::uint16_t>(cfg_.devices_per_user));
  dv.squad_pred = esquad::predict_all(x, rows - 1);
  dv.self_pred = dv.squad_pred[dv.dev];
}

void Experiment::do_rps(DeviceState& dv) {
  auto plan = overlay::rps_tick(*dv.view, fresh_descriptor(dv), cfg_.gossip_len, *dv.rng);
  if (!plan) {
    // Under heavy churn every popped partner can be dead, draining the view
    // to nothing; the device then rejoins through the seed list as at spawn.
    rebootstrap(dv);
    return;
  }
  auto it = addr_index_.find(plan->partner.addr);
  if (it == addr_index_.end()) return;
  DeviceState& partner = devices_[it->second];
  if (!partner.online) return;  // descriptor already popped, nothing else to do

  auto reply = overlay::rps_reply(*partner.view, fresh_descriptor(partner), cfg_.gossip_len,
                                  *partner.rng);
  std::vector<overlay::Descriptor> sent_mine(plan->proposal.begin(), plan->proposal.end() - 1);
  std::vector<overlay::Descriptor> sent_theirs(reply.begin(), reply.end() - 1);
  overlay::rps_merge(*partner.view, plan->proposal, sent_theirs, partner.addr);
  overlay::rps_merge(*dv.view, reply, sent_mine, dv.addr);
}

void Experiment::rebootstrap(DeviceState& dv) {
  std::vector<std::size_t> online_ids;
  for (std::size_t i = 0; i < devices_.size(); ++i)
    if (devices_[i].online) online_ids.push_back(i);
  for (std::size_t k = 0; k < cfg_.bootstrap && !online_ids.empty(); ++k) {
    const DeviceState& pick = devices_[online_ids[dv.rng->index(online_ids.size())]];
    if (pick.addr == dv.addr) continue;
    dv.view->insert(overlay::Descriptor{pick.addr, pick.keys.pk, 0.5, to_sec(now_)}, dv.addr);
  }
}

void Experiment::retry_parked(DeviceState& dv) {
  if (dv.parked.empty()) return;
  std::size_t holder = global_id(dv.user, dv.dev);
  std::vector<Parked> keep;
  for (Parked& p : dv.parked) {
    auto decision = transfer::esquad_relay(
        dv.log, view(p.payload), dv.dev,
        [&](std::uint16_t d) { return device_online(dv.user, d); });
    if (decision.action == transfer::RelayAction::deliver_local) {
      endpoint_input(holder, p.payload, p.meta);
    } else if (decision.action == transfer::RelayAction::handoff) {
      std::size_t target = global_id(dv.user, decision.endpoint);
      at(now_ + lat_ms_, [this, target, p = std::move(p)]() mutable {
        DeviceState& ep = devices_[target];
        if (ep.online) {
          emit(event_type::cache_deliver, ep.name, p.meta.route_id, -1, p.meta.message_id);
          endpoint_input(target, p.payload, p.meta);
        } else {
          ep.parked.push_back(std::move(p));  // keep it in the squad
        }
      });
    } else {
      keep.push_back(std::move(p));
    }
  }
  dv.parked = std::move(keep);
}

routes::EndpointContext Experiment::make_context(DeviceState& dv) {
  routes::EndpointContext ctx;
  ctx.self = fresh_descriptor(dv);
  ctx.self_device = dv.dev;
  for (std::uint16_t d = 0; d < cfg_.devices_per_user; ++d)
    if (d != dv.dev) ctx.esquad.push_back(squad_descriptor(dv, d));
  for (const overlay::Descriptor& d : dv.view->sample_candidates(*dv.rng)) {
    auto it = addr_index_.find(d.addr);
    if (it == addr_index_.end() || devices_[it->second].user == dv.user) continue;
    ctx.candidates.push_back(d);
  }
  return ctx;
}

void Experiment::log_route(const routes::RouteSpec& route, std::int32_t id,
                           const std::string& origin, const char* direction,
                           std::size_t theta_slot) {
  emit(event_type::route_created, origin, id, -1, -1, direction);
  ThetaStats& st = metrics_.per_theta[theta_slot];
  for (std::size_t l = 0; l < route.layers.size(); ++l) {
    const routes::Layer& layer = route.layers[l];
    if (l < 3) {
      st.global_layers += 1;
      st.global_layer_members += layer.members.size();
    }
    for (const overlay::Descriptor& m : layer.members) {
      auto it = addr_index_.find(m.addr);
      std::string name = it != addr_index_.end() ? devices_[it->second].name : "?";
      emit(event_type::route_layer_member, name, id, static_cast<std::int32_t>(l));
    }
  }
}

void Experiment::on_exchange(std::uint32_t k) {
  std::size_t theta_slot = k % cfg_.thetas.size();
  double theta = cfg_.thetas[theta_slot];

  std::vector<std::size_t> online;
  for (std::size_t i = 0; i < devices_.size(); ++i)
    if (devices_[i].online) online.push_back(i);
  if (online.empty()) {
    metrics_.exchanges_skipped += 1;
    metrics_.per_theta[theta_slot].exchanges_skipped += 1;
    emit(event_type::exchange_skip, "-", -1, -1, -1, "nobody_online");
    return;
  }
  std::size_t up_id = online[sched_rng_->index(online.size())];
  DeviceState& up = devices_[up_id];
  std::vector<std::size_t> other;
  for (std::size_t i : online)
    if (devices_[i].user != up.user) other.push_back(i);
  if (other.empty()) {
    metrics_.exchanges_skipped += 1;
    metrics_.per_theta[theta_slot].exchanges_skipped += 1;
    emit(event_type::exchange_skip, up.name, -1, -1, -1, "no_remote_peer");
    return;
  }
  std::size_t down_id = other[sched_rng_->index(other.size())];
  DeviceState& down = devices_[down_id];

  // Deterministic on-demand file content, so chunks are reproducible at
  // retransmit time without holding file bytes in memory.
  std::uint64_t file_seed = file_rng_->next();
  std::uint64_t size = cfg_.file_bytes();
  std::uint32_t chunk = cfg_.chunk_bytes();
  auto n_chunks = static_cast<std::uint32_t>((size + chunk - 1) / chunk);
  transfer::ChunkProvider provider = [file_seed, size, chunk](std::uint32_t index) {
    std::uint64_t off = static_cast<std::uint64_t>(index) * chunk;
    std::uint64_t len = std::min<std::uint64_t>(chunk, size - off);
    Rng rng(file_seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return rng.bytes(static_cast<std::size_t>(len));
  };
  transfer::FileDescriptor fd = transfer::build_file_descriptor(provider, size, chunk, *up.rng);

  routes::LayerPolicy policy{theta, cfg_.fixed_layer_size};
  double now_s = to_sec(now_);

  // Handshake, serialized both ways as it would travel out-of-band.
  routes::EndpointContext ctx_a = make_context(up);
  routes::HandshakeInit init;
  routes::ReceiverSetup setup;
  routes::RouteSpec fwd_route;
  try {
    init = routes::parse_handshake_init(
        view(routes::serialize(routes::init_upload(fd, ctx_a, policy, *up.rng))));
    routes::EndpointContext ctx_b = make_context(down);
    setup = routes::on_handshake(init, ctx_b, policy, down.log, now_s, *down.rng);
    setup.reply = routes::parse_handshake_reply(view(routes::serialize(setup.reply)));
    fwd_route = routes::finalize_upload(setup.reply, fd, ctx_a, policy, up.log, now_s, *up.rng);
  } catch (const std::invalid_argument&) {
    metrics_.exchanges_skipped += 1;
    metrics_.per_theta[theta_slot].exchanges_skipped += 1;
    emit(event_type::exchange_skip, up.name, -1, -1, -1, "no_candidates");
    return;
  }

  std::int32_t fwd_id = next_route_id_++;
  std::int32_t bwd_id = next_route_id_++;
  emit(event_type::exchange_start, up.name, fwd_id, -1, -1, down.name);
  log_route(fwd_route, fwd_id, up.name, "fwd", theta_slot);
  log_route(setup.back_route, bwd_id, down.name, "bwd", theta_slot);

  std::size_t file_index = metrics_.files.size();
  FileOutcome outcome;
  outcome.exchange = k;
  outcome.theta = theta;
  outcome.uploader_user = up.user;
  outcome.downloader_user = down.user;
  outcome.chunks = n_chunks;
  outcome.start_ms = now_;
  metrics_.files.push_back(outcome);
  metrics_.per_theta[theta_slot].files_started += 1;

  SenderCtx sctx;
  sctx.sender =
      std::make_unique<transfer::Sender>(fd, provider, cfg_.window, retry_ms_);
  sctx.route = std::move(fwd_route);
  sctx.route_id = fwd_id;
  sctx.theta_slot = theta_slot;
  sctx.file_index = file_index;
  up.senders.emplace(fd.id, std::move(sctx));

  ReceiverCtx rctx;
  rctx.receiver = std::make_unique<transfer::Receiver>(fd, false);
  rctx.back_route = std::move(setup.back_route);
  rctx.fwd_route_id = fwd_id;
  rctx.back_route_id = bwd_id;
  rctx.theta_slot = theta_slot;
  rctx.file_index = file_index;
  down.receivers.emplace(fd.id, std::move(rctx));

  at(now_, [this, up_id, file = fd.id] { sender_step(up_id, file); });
}

void Experiment::sender_step(std::size_t dev_id, FileId file) {
  DeviceState& dv = devices_[dev_id];
  auto it = dv.senders.find(file);
  if (it == dv.senders.end() || it->second.done) return;
  SenderCtx& ctx = it->second;
  if (!dv.online) return;  // picked up again by the round loop

  for (const transfer::ChunkMessage& msg : ctx.sender->step(now_)) {
    MsgMeta meta{ctx.route_id, ctx.theta_slot, 0, next_msg_id_++};
    send_on_route(dv, ctx.route, meta, transfer::serialize(msg), "chunk");
  }
  if (ctx.sender->complete()) {
    ctx.done = true;
    emit(event_type::sender_complete, dv.name, ctx.route_id);
    return;
  }
  std::int64_t deadline = ctx.sender->next_deadline();
  if (deadline != std::numeric_limits<std::int64_t>::max() && deadline <= t_end_ms_)
    at(deadline, [this, dev_id, file] { sender_step(dev_id, file); });
}

void Experiment::send_on_route(DeviceState& dv, const routes::RouteSpec& route, MsgMeta meta,
                               const Bytes& payload, const char* kind) {
  emit(event_type::message_sent, dv.name, meta.route_id, -1, meta.message_id, kind);
  metrics_.per_theta[meta.theta_slot].messages_sent += 1;
  por::PorMessage m = por::message_encrypt(view(payload), routes::to_layer_specs(route), *dv.rng);
  std::string origin = dv.name;
  por::forward(m, *dv.rng, make_send_fn(addr_index_.at(dv.addr), meta),
               [this, origin, meta](const por::ForwardResult& fr) {
                 if (!fr.sent) {
                   emit(event_type::message_drop, origin, meta.route_id, meta.layer,
                        meta.message_id, "all_offline");
                   metrics_.per_theta[meta.theta_slot].drops += 1;
                 }
               });
}

por::SendFn Experiment::make_send_fn(std::size_t holder_id, MsgMeta meta) {
  MsgMeta next = meta;  // the receiver sits one layer deeper
  return [this, holder_id, next](const por::Address& to, const por::PorMessage& m,
                                 std::function<void(bool)> done) {
    if (!devices_[holder_id].online) {
      // Whoever held this message left the swarm; every attempt dies.
      at(now_, [done] { done(false); });
      return;
    }
    auto it = addr_index_.find(to);
    if (it == addr_index_.end()) {
      at(now_ + tout_ms_, [done] { done(false); });
      return;
    }
    std::size_t target = it->second;
    Bytes m_bytes = por::serialize(m);
    std::int64_t sent_at = now_;
    at(now_ + lat_ms_, [this, target, m_bytes = std::move(m_bytes), next, sent_at,
                        done = std::move(done)]() mutable {
      if (devices_[target].online) {
        handle_receive(target, std::move(m_bytes), next);
        at(sent_at + 2 * lat_ms_, [done = std::move(done)] { done(true); });
      } else {
        at(sent_at + tout_ms_, [done = std::move(done)] { done(false); });
      }
    });
  };
}

void Experiment::handle_receive(std::size_t target, Bytes msg_bytes, MsgMeta meta) {
  DeviceState& dv = devices_[target];
  por::PorMessage m;
  try {
    m = por::deserialize(view(msg_bytes));
  } catch (const wire::Error&) {
    emit(event_type::decrypt_failed, dv.name, meta.route_id, meta.layer, meta.message_id,
         "malformed");
    return;
  }
  auto plain = por::message_decrypt(m, dv.keys);
  if (!plain) {
    emit(event_type::decrypt_failed, dv.name, meta.route_id, meta.layer, meta.message_id, "");
    return;
  }

  if (plain->tag == por::PayloadTag::app_payload) {
    emit(event_type::message_hop, dv.name, meta.route_id, meta.layer, meta.message_id,
         "delivered");
    metrics_.per_theta[meta.theta_slot].deliveries += 1;
    handle_app_payload(target, std::move(plain->body), meta);
    return;
  }

  emit(event_type::message_hop, dv.name, meta.route_id, meta.layer, meta.message_id, "received");
  por::PorMessage inner;
  try {
    inner = por::deserialize(view(plain->body));
  } catch (const wire::Error&) {
    emit(event_type::decrypt_failed, dv.name, meta.route_id, meta.layer, meta.message_id,
         "malformed_inner");
    return;
  }
  MsgMeta fwd_meta = meta;
  fwd_meta.layer = meta.layer + 1;
  std::string relay_name = dv.name;
  por::forward(inner, *dv.rng, make_send_fn(target, fwd_meta),
               [this, relay_name, fwd_meta](const por::ForwardResult& fr) {
                 if (!fr.sent) {
                   emit(event_type::message_drop, relay_name, fwd_meta.route_id, fwd_meta.layer,
                        fwd_meta.message_id, "all_offline");
                   metrics_.per_theta[fwd_meta.theta_slot].drops += 1;
                 }
               });
}

void Experiment::handle_app_payload(std::size_t dev_id, Bytes payload, MsgMeta meta) {
  DeviceState& dv = devices_[dev_id];
  auto decision = transfer::esquad_relay(
      dv.log, view(payload), dv.dev,
      [&](std::uint16_t d) { return device_online(dv.user, d); });

  switch (decision.action) {
    case transfer::RelayAction::deliver_local:
      endpoint_input(dev_id, payload, meta);
      return;
    case transfer::RelayAction::handoff: {
      std::size_t target = global_id(dv.user, decision.endpoint);
      at(now_ + lat_ms_, [this, target, p = Parked{std::move(payload), meta}]() mutable {
        DeviceState& ep = devices_[target];
        if (ep.online) {
          emit(event_type::cache_deliver, ep.name, p.meta.route_id, -1, p.meta.message_id);
          endpoint_input(target, p.payload, p.meta);
        } else {
          ep.parked.push_back(std::move(p));
        }
      });
      return;
    }
    case transfer::RelayAction::park:
    case transfer::RelayAction::unknown_file:
      // Unknown files happen when the endpoint's interaction record has
      // not gossiped through the squad yet; parking retries each round.
      emit(event_type::cache_park, dv.name, meta.route_id, -1, meta.message_id);
      dv.parked.push_back(Parked{std::move(payload), meta});
      return;
  }
}

void Experiment::endpoint_input(std::size_t dev_id, const Bytes& payload,
                                [[maybe_unused]] const MsgMeta& meta) {
  DeviceState& dv = devices_[dev_id];
  if (auto ack = transfer::parse_ack(view(payload))) {
    auto it = dv.senders.find(ack->file);
    if (it == dv.senders.end()) return;
    SenderCtx& ctx = it->second;
    if (ctx.done) return;
    ctx.sender->on_ack(*ack);
    if (ctx.sender->complete()) {
      ctx.done = true;
      emit(event_type::sender_complete, dv.name, ctx.route_id);
      return;
    }
    at(now_, [this, dev_id, file = ack->file] { sender_step(dev_id, file); });
    return;
  }
  if (auto chunk = transfer::parse_chunk(view(payload))) {
    auto it = dv.receivers.find(chunk->file);
    if (it == dv.receivers.end()) return;
    ReceiverCtx& ctx = it->second;
    auto ack = ctx.receiver->on_chunk(*chunk);
    if (ack) {
      MsgMeta ack_meta{ctx.back_route_id, ctx.theta_slot, 0, next_msg_id_++};
      send_on_route(dv, ctx.back_route, ack_meta, transfer::serialize(*ack), "ack");
    }
    if (ctx.receiver->complete() && !ctx.completed) {
      ctx.completed = true;
      emit(event_type::transfer_complete, dv.name, ctx.fwd_route_id, -1, -1, "verified");
      FileOutcome& fo = metrics_.files[ctx.file_index];
      fo.completed = true;
      fo.completed_ms = now_;
      metrics_.per_theta[ctx.theta_slot].files_completed += 1;
    }
  }
}

}  // namespace

RunMetrics run_experiment(const SimConfig& cfg, std::ostream* event_log) {
  Experiment exp(cfg, event_log);
  return exp.run();
}

}  // namespace spores::sim
