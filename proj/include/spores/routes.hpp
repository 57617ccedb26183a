#pragma once

#include <cstdint>
#include <vector>

#include "spores/bytes.hpp"
#include "spores/esquad.hpp"
#include "spores/overlay.hpp"
#include "spores/por.hpp"
#include "spores/rng.hpp"
#include "spores/transfer.hpp"

namespace spores::routes {

struct Layer {
  std::vector<overlay::Descriptor> members;
  // False when the candidate pool ran out before the offline-probability
  // target was reached (normal for e-squad layers).
  bool threshold_met = true;
};

// Probability that every member is offline, by the members' own
// availability predictions.
double p_all_offline(const Layer& layer);

// Draws random candidates without replacement until P(all offline) drops
// below theta. Candidates with higher availability shrink the layer.
Layer pick_layer(const std::vector<overlay::Descriptor>& candidates, double theta, Rng& rng);

// Fixed-size uniform pick, the availability-oblivious baseline.
Layer pick_layer_baseline(const std::vector<overlay::Descriptor>& candidates, std::size_t size,
                          Rng& rng);

por::LayerSpec to_layer_spec(const Layer& layer);

// Four layers; the last is the destination endpoint's e-squad.
struct RouteSpec {
  std::vector<Layer> layers;
};

std::vector<por::LayerSpec> to_layer_specs(const RouteSpec& route);

// What a device knows when it builds route layers: its own descriptor,
// its e-squad siblings (self excluded), and global candidates from its
// partial view (entire own squad already excluded).
struct EndpointContext {
  overlay::Descriptor self;
  std::uint16_t self_device = 0;  // index within the owner's e-squad
  std::vector<overlay::Descriptor> esquad;
  std::vector<overlay::Descriptor> candidates;
};

struct LayerPolicy {
  double theta = 0.001;
  std::size_t fixed_size = 0;  // nonzero switches global layers to the baseline pick
};

// Upload handshake. The uploader contributes the two layers nearest each
// endpoint's destination; each side completes the other's route with two
// layers from its own view, so nobody knows a full route but its sender.
struct HandshakeInit {
  transfer::FileDescriptor fd;
  std::vector<Layer> back_tail;  // layers 3 and 4 of the backward route
};

struct HandshakeReply {
  std::vector<Layer> fwd_tail;  // layers 3 and 4 of the forward route
};

struct ReceiverSetup {
  HandshakeReply reply;
  RouteSpec back_route;  // complete; carries the acks
};

HandshakeInit init_upload(const transfer::FileDescriptor& fd, const EndpointContext& ctx,
                          const LayerPolicy& policy, Rng& rng);

// Also records the download interaction so the e-squad learns who the
// receiving endpoint is.
ReceiverSetup on_handshake(const HandshakeInit& init, const EndpointContext& ctx,
                           const LayerPolicy& policy, esquad::InteractionLog& log, double now,
                           Rng& rng);

// Completes the forward route and records the upload interaction.
RouteSpec finalize_upload(const HandshakeReply& reply, const transfer::FileDescriptor& fd,
                          const EndpointContext& ctx, const LayerPolicy& policy,
                          esquad::InteractionLog& log, double now, Rng& rng);

Bytes serialize(const HandshakeInit& init);
Bytes serialize(const HandshakeReply& reply);
HandshakeInit parse_handshake_init(ByteView data);
HandshakeReply parse_handshake_reply(ByteView data);

}  // namespace spores::routes
