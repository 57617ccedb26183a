#include "spores/crypto.hpp"

#include <sodium.h>

#include <mutex>
#include <stdexcept>

namespace spores::crypto {

namespace {

void ensure_sodium() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
  });
}

using Nonce24 = std::array<std::uint8_t, 24>;

Nonce24 seal_nonce(const std::uint8_t* epk, const PublicKey& pk) {
  Nonce24 nonce;
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, nonce.size());
  crypto_generichash_update(&st, epk, kPublicKeyBytes);
  crypto_generichash_update(&st, pk.data(), pk.size());
  crypto_generichash_final(&st, nonce.data(), nonce.size());
  return nonce;
}

}  // namespace

KeyPair generate_keypair(Rng& rng) {
  ensure_sodium();
  KeyPair kp;
  rng.fill(kp.sk.data(), kp.sk.size());
  crypto_scalarmult_base(kp.pk.data(), kp.sk.data());
  return kp;
}

SymmetricKey generate_symmetric_key(Rng& rng) {
  SymmetricKey key;
  rng.fill(key.data(), key.size());
  return key;
}

Ciphertext symmetric_encrypt(ByteView plaintext, const SymmetricKey& key, Rng& rng) {
  ensure_sodium();
  Ciphertext ct;
  ct.bytes.resize(plaintext.size() + kSymmetricOverheadBytes);
  rng.fill(ct.bytes.data(), crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
  unsigned long long clen = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(
      ct.bytes.data() + crypto_aead_xchacha20poly1305_ietf_NPUBBYTES, &clen, plaintext.data(),
      plaintext.size(), nullptr, 0, nullptr, ct.bytes.data(), key.data());
  return ct;
}

std::optional<Bytes> symmetric_decrypt(const Ciphertext& ct, const SymmetricKey& key) {
  ensure_sodium();
  constexpr std::size_t npub = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
  if (ct.bytes.size() < kSymmetricOverheadBytes) return std::nullopt;
  Bytes out(ct.bytes.size() - kSymmetricOverheadBytes);
  unsigned long long mlen = 0;
  if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr,
                                                 ct.bytes.data() + npub, ct.bytes.size() - npub,
                                                 nullptr, 0, ct.bytes.data(), key.data()) != 0)
    return std::nullopt;
  out.resize(static_cast<std::size_t>(mlen));
  return out;
}

Bytes asymmetric_encrypt(ByteView plaintext, const PublicKey& pk, Rng& rng) {
  ensure_sodium();
  KeyPair eph = generate_keypair(rng);
  Nonce24 nonce = seal_nonce(eph.pk.data(), pk);
  Bytes out(kPublicKeyBytes + plaintext.size() + crypto_box_MACBYTES);
  std::copy(eph.pk.begin(), eph.pk.end(), out.begin());
  if (crypto_box_easy(out.data() + kPublicKeyBytes, plaintext.data(), plaintext.size(),
                      nonce.data(), pk.data(), eph.sk.data()) != 0)
    throw std::runtime_error("crypto_box_easy failed");
  return out;
}

std::optional<Bytes> asymmetric_decrypt(ByteView sealed, const KeyPair& recipient) {
  ensure_sodium();
  if (sealed.size() < kPublicKeyBytes + crypto_box_MACBYTES) return std::nullopt;
  const std::uint8_t* epk = sealed.data();
  Nonce24 nonce = seal_nonce(epk, recipient.pk);
  Bytes out(sealed.size() - kPublicKeyBytes - crypto_box_MACBYTES);
  if (crypto_box_open_easy(out.data(), sealed.data() + kPublicKeyBytes,
                           sealed.size() - kPublicKeyBytes, nonce.data(), epk,
                           recipient.sk.data()) != 0)
    return std::nullopt;
  return out;
}

std::pair<Envelope, Ciphertext> broadcast_encrypt(ByteView plaintext,
                                                  const std::vector<PublicKey>& recipients,
                                                  Rng& rng) {
  if (recipients.empty())
    throw std::invalid_argument("broadcast_encrypt: recipient list is empty");
  SymmetricKey key = generate_symmetric_key(rng);
  Ciphertext ct = symmetric_encrypt(plaintext, key, rng);
  Envelope env;
  env.entries.reserve(recipients.size());
  for (const PublicKey& pk : recipients)
    env.entries.push_back(asymmetric_encrypt(ByteView(key.data(), key.size()), pk, rng));
  return {std::move(env), std::move(ct)};
}

std::optional<Bytes> broadcast_decrypt(const Envelope& env, const Ciphertext& ct,
                                       const KeyPair& recipient) {
  for (const Bytes& entry : env.entries) {
    auto opened = asymmetric_decrypt(view(entry), recipient);
    if (!opened) continue;
    if (opened->size() != kSymmetricKeyBytes) continue;
    SymmetricKey key;
    std::copy(opened->begin(), opened->end(), key.begin());
    return symmetric_decrypt(ct, key);
  }
  return std::nullopt;
}

}  // namespace spores::crypto
