#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "spores/bytes.hpp"
#include "spores/rng.hpp"

namespace spores::crypto {

inline constexpr std::size_t kPublicKeyBytes = 32;
inline constexpr std::size_t kSecretKeyBytes = 32;
inline constexpr std::size_t kSymmetricKeyBytes = 32;

// X25519 ephemeral public key (32) + boxed 32-byte key (32 + 16 MAC).
inline constexpr std::size_t kEnvelopeEntryBytes = 80;
// XChaCha20-Poly1305: 24-byte nonce prepended + 16-byte tag.
inline constexpr std::size_t kSymmetricOverheadBytes = 40;

using PublicKey = std::array<std::uint8_t, kPublicKeyBytes>;
using SecretKey = std::array<std::uint8_t, kSecretKeyBytes>;
using SymmetricKey = std::array<std::uint8_t, kSymmetricKeyBytes>;

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

// One fixed-size entry per intended recipient, in recipient order.
struct Envelope {
  std::vector<Bytes> entries;
};

struct Ciphertext {
  Bytes bytes;
};

// All randomness (keys, nonces, ephemerals) comes from the caller's Rng so
// that seeded runs are byte-identical.
KeyPair generate_keypair(Rng& rng);
SymmetricKey generate_symmetric_key(Rng& rng);

Ciphertext symmetric_encrypt(ByteView plaintext, const SymmetricKey& key, Rng& rng);
std::optional<Bytes> symmetric_decrypt(const Ciphertext& ct, const SymmetricKey& key);

// Sealed-box style: fresh ephemeral keypair, nonce derived from the two
// public keys. Output size = plaintext size + 48.
Bytes asymmetric_encrypt(ByteView plaintext, const PublicKey& pk, Rng& rng);
std::optional<Bytes> asymmetric_decrypt(ByteView sealed, const KeyPair& recipient);

// Hybrid broadcast: one symmetric payload encryption plus one envelope
// entry per recipient. Any listed recipient can open it; nobody else can.
std::pair<Envelope, Ciphertext> broadcast_encrypt(ByteView plaintext,
                                                  const std::vector<PublicKey>& recipients,
                                                  Rng& rng);
std::optional<Bytes> broadcast_decrypt(const Envelope& env, const Ciphertext& ct,
                                       const KeyPair& recipient);

}  // namespace spores::crypto
