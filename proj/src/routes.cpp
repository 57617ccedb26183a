#include "spores/routes.hpp"

#include <stdexcept>

#include "spores/wire.hpp"

namespace spores::routes {

double p_all_offline(const Layer& layer) {
  double p = 1;
  for (const overlay::Descriptor& d : layer.members) p *= 1 - d.p_online;
  return p;
}

Layer pick_layer(const std::vector<overlay::Descriptor>& candidates, double theta, Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("pick_layer: no candidates");
  if (!(theta > 0)) throw std::invalid_argument("pick_layer: theta must be positive");
  std::vector<overlay::Descriptor> pool = candidates;
  rng.shuffle(pool);
  Layer layer;
  double p_off = 1;
  for (overlay::Descriptor& d : pool) {
    p_off *= 1 - d.p_online;
    layer.members.push_back(std::move(d));
    if (p_off < theta) break;
  }
  layer.threshold_met = p_off < theta;
  return layer;
}

Layer pick_layer_baseline(const std::vector<overlay::Descriptor>& candidates, std::size_t size,
                          Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("pick_layer_baseline: no candidates");
  if (size == 0) throw std::invalid_argument("pick_layer_baseline: size must be positive");
  std::vector<overlay::Descriptor> pool = candidates;
  rng.shuffle(pool);
  Layer layer;
  layer.threshold_met = pool.size() >= size;
  if (pool.size() > size) pool.resize(size);
  layer.members = std::move(pool);
  return layer;
}

por::LayerSpec to_layer_spec(const Layer& layer) {
  por::LayerSpec spec;
  spec.addrs.reserve(layer.members.size());
  spec.pks.reserve(layer.members.size());
  for (const overlay::Descriptor& d : layer.members) {
    spec.addrs.push_back(d.addr);
    spec.pks.push_back(d.pk);
  }
  return spec;
}

std::vector<por::LayerSpec> to_layer_specs(const RouteSpec& route) {
  std::vector<por::LayerSpec> specs;
  specs.reserve(route.layers.size());
  for (const Layer& l : route.layers) specs.push_back(to_layer_spec(l));
  return specs;
}

namespace {

Layer pick_global(const EndpointContext& ctx, const LayerPolicy& policy, Rng& rng) {
  if (policy.fixed_size > 0)
    return pick_layer_baseline(ctx.candidates, policy.fixed_size, rng);
  return pick_layer(ctx.candidates, policy.theta, rng);
}

// The destination layer: picked siblings plus the endpoint itself, so the
// message can land anywhere in the squad and still reach the endpoint.
Layer squad_layer(const EndpointContext& ctx, const LayerPolicy& policy, Rng& rng) {
  Layer layer;
  if (!ctx.esquad.empty()) layer = pick_layer(ctx.esquad, policy.theta, rng);
  layer.members.push_back(ctx.self);
  return layer;
}

void write_layer(wire::Writer& w, const Layer& layer) {
  w.u8(layer.threshold_met ? 1 : 0);
  if (layer.members.size() > 0xffff) throw wire::Error("layer too large");
  w.u16(static_cast<std::uint16_t>(layer.members.size()));
  for (const overlay::Descriptor& d : layer.members) overlay::write_descriptor(w, d);
}

Layer read_layer(wire::Reader& r) {
  Layer layer;
  layer.threshold_met = r.u8() != 0;
  std::uint16_t n = r.u16();
  layer.members.reserve(n);
  for (std::uint16_t i = 0; i < n; ++i) layer.members.push_back(overlay::read_descriptor(r));
  return layer;
}

void write_layers(wire::Writer& w, const std::vector<Layer>& layers) {
  if (layers.size() > 0xff) throw wire::Error("too many layers");
  w.u8(static_cast<std::uint8_t>(layers.size()));
  for (const Layer& l : layers) write_layer(w, l);
}

std::vector<Layer> read_layers(wire::Reader& r) {
  std::uint8_t n = r.u8();
  std::vector<Layer> layers;
  layers.reserve(n);
  for (std::uint8_t i = 0; i < n; ++i) layers.push_back(read_layer(r));
  return layers;
}

}  // namespace

HandshakeInit init_upload(const transfer::FileDescriptor& fd, const EndpointContext& ctx,
                          const LayerPolicy& policy, Rng& rng) {
  HandshakeInit init;
  init.fd = fd;
  Layer bl3 = pick_global(ctx, policy, rng);
  Layer bl4 = squad_layer(ctx, policy, rng);
  init.back_tail = {std::move(bl3), std::move(bl4)};
  return init;
}

ReceiverSetup on_handshake(const HandshakeInit& init, const EndpointContext& ctx,
                           const LayerPolicy& policy, esquad::InteractionLog& log, double now,
                           Rng& rng) {
  if (init.back_tail.size() != 2)
    throw std::invalid_argument("on_handshake: expected two backward layers");
  ReceiverSetup setup;

  Layer fl3 = pick_global(ctx, policy, rng);
  Layer fl4 = squad_layer(ctx, policy, rng);
  setup.reply.fwd_tail = {std::move(fl3), std::move(fl4)};

  Layer bl1 = pick_global(ctx, policy, rng);
  Layer bl2 = pick_global(ctx, policy, rng);
  setup.back_route.layers = {std::move(bl1), std::move(bl2), init.back_tail[0],
                             init.back_tail[1]};

  log.append(
      esquad::Interaction{now, ctx.self_device, esquad::InteractionType::download, init.fd.id});
  return setup;
}

RouteSpec finalize_upload(const HandshakeReply& reply, const transfer::FileDescriptor& fd,
                          const EndpointContext& ctx, const LayerPolicy& policy,
                          esquad::InteractionLog& log, double now, Rng& rng) {
  if (reply.fwd_tail.size() != 2)
    throw std::invalid_argument("finalize_upload: expected two forward layers");
  RouteSpec route;
  Layer fl1 = pick_global(ctx, policy, rng);
  Layer fl2 = pick_global(ctx, policy, rng);
  route.layers = {std::move(fl1), std::move(fl2), reply.fwd_tail[0], reply.fwd_tail[1]};

  log.append(esquad::Interaction{now, ctx.self_device, esquad::InteractionType::upload, fd.id});
  return route;
}

Bytes serialize(const HandshakeInit& init) {
  wire::Writer w;
  Bytes fd = transfer::serialize(init.fd);
  if (fd.size() > 0xffff) throw wire::Error("file descriptor too large");
  w.blob16(view(fd));
  write_layers(w, init.back_tail);
  return w.take();
}

Bytes serialize(const HandshakeReply& reply) {
  wire::Writer w;
  write_layers(w, reply.fwd_tail);
  return w.take();
}

HandshakeInit parse_handshake_init(ByteView data) {
  wire::Reader r(data);
  HandshakeInit init;
  Bytes fd = r.blob16();
  init.fd = transfer::deserialize_file_descriptor(view(fd));
  init.back_tail = read_layers(r);
  r.expect_done();
  if (init.back_tail.size() != 2) throw wire::Error("handshake needs exactly two layers");
  return init;
}

HandshakeReply parse_handshake_reply(ByteView data) {
  wire::Reader r(data);
  HandshakeReply reply;
  reply.fwd_tail = read_layers(r);
  r.expect_done();
  if (reply.fwd_tail.size() != 2) throw wire::Error("handshake reply needs exactly two layers");
  return reply;
}

}  // namespace spores::routes
