#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "spores/bytes.hpp"
#include "spores/crypto.hpp"
#include "spores/rng.hpp"

namespace spores::por {

using Address = Bytes;

// First plaintext byte under every layer.
enum class PayloadTag : std::uint8_t {
  inner_message = 0x01,  // body is a serialized PorMessage for the next layer
  app_payload = 0x02,    // body is application data for this hop
};

// One onion layer: the candidate relays' addresses and, aligned by index,
// their public keys.
struct LayerSpec {
  std::vector<Address> addrs;
  std::vector<crypto::PublicKey> pks;
};

// A message as it travels: who may take it next, an envelope any of them
// can open, and the payload ciphertext. Relays keep no per-message state.
struct PorMessage {
  std::vector<Address> addrs;
  crypto::Envelope envelope;
  crypto::Ciphertext cipher;
};

Bytes serialize(const PorMessage& m);
PorMessage deserialize(ByteView data);  // throws wire::Error on malformed input

struct Plaintext {
  PayloadTag tag;
  Bytes body;
};

Bytes frame_app_payload(ByteView payload);
Bytes frame_inner_message(const PorMessage& m);
std::optional<Plaintext> parse_plaintext(ByteView data);

// Builds the onion for the given layers, innermost (layers.back()) first.
// The returned message is addressed to layers.front().
PorMessage message_encrypt(ByteView payload, const std::vector<LayerSpec>& layers, Rng& rng);

// Opens one layer; nullopt if the key is not in the envelope.
std::optional<Plaintext> message_decrypt(const PorMessage& m, const crypto::KeyPair& kp);

// Transport hook: attempt delivery to one address, report success or
// failure through done (possibly later; sends are sequential attempts).
using SendFn =
    std::function<void(const Address& to, const PorMessage& m, std::function<void(bool)> done)>;

struct ForwardResult {
  bool sent = false;
  Address to;               // receiver when sent
  std::size_t attempts = 0; // send attempts consumed, successful one included
};

// Tries each candidate address in uniformly random order until one send
// succeeds or all fail.
void forward(const PorMessage& m, Rng& rng, SendFn send,
             std::function<void(const ForwardResult&)> on_done);

enum class ReceiveStatus : std::uint8_t { delivered, forwarded, dropped, decrypt_failed };

struct ReceiveOutcome {
  ReceiveStatus status;
  Bytes payload;      // set when delivered
  ForwardResult fwd;  // set when forwarded or dropped
};

// Full relay behavior: open the layer, either surface the payload or
// forward the inner message to the next layer.
void receive(const PorMessage& m, const crypto::KeyPair& kp, Rng& rng, SendFn send,
             std::function<void(const ReceiveOutcome&)> on_done);

}  // namespace spores::por
