#include "spores/por.hpp"

#include <memory>
#include <stdexcept>

#include "spores/wire.hpp"

namespace spores::por {

Bytes serialize(const PorMessage& m) {
  wire::Writer w;
  if (m.addrs.size() > 0xffff) throw wire::Error("too many addresses");
  w.u16(static_cast<std::uint16_t>(m.addrs.size()));
  for (const Address& a : m.addrs) w.blob16(view(a));

  const auto& entries = m.envelope.entries;
  if (entries.size() > 0xffff) throw wire::Error("too many envelope entries");
  std::size_t entry_len = entries.empty() ? 0 : entries.front().size();
  for (const Bytes& e : entries)
    if (e.size() != entry_len) throw wire::Error("envelope entries differ in size");
  if (entry_len > 0xffff) throw wire::Error("envelope entry too long");
  w.u16(static_cast<std::uint16_t>(entries.size()));
  w.u16(static_cast<std::uint16_t>(entry_len));
  for (const Bytes& e : entries) w.raw(view(e));

  if (m.cipher.bytes.size() > 0xffffffffULL) throw wire::Error("ciphertext too long");
  w.u32(static_cast<std::uint32_t>(m.cipher.bytes.size()));
  w.raw(view(m.cipher.bytes));
  return w.take();
}

PorMessage deserialize(ByteView data) {
  wire::Reader r(data);
  PorMessage m;
  std::uint16_t n_addr = r.u16();
  m.addrs.reserve(n_addr);
  for (std::uint16_t i = 0; i < n_addr; ++i) m.addrs.push_back(r.blob16());
  std::uint16_t n_env = r.u16();
  std::uint16_t entry_len = r.u16();
  m.envelope.entries.reserve(n_env);
  for (std::uint16_t i = 0; i < n_env; ++i) m.envelope.entries.push_back(r.raw(entry_len));
  m.cipher.bytes = r.raw(r.u32());
  r.expect_done();
  return m;
}

Bytes frame_app_payload(ByteView payload) {
  Bytes out;
  out.reserve(payload.size() + 1);
  out.push_back(static_cast<std::uint8_t>(PayloadTag::app_payload));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Bytes frame_inner_message(const PorMessage& m) {
  Bytes body = serialize(m);
  Bytes out;
  out.reserve(body.size() + 1);
  out.push_back(static_cast<std::uint8_t>(PayloadTag::inner_message));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::optional<Plaintext> parse_plaintext(ByteView data) {
  if (data.empty()) return std::nullopt;
  auto tag = data.front();
  if (tag != static_cast<std::uint8_t>(PayloadTag::inner_message) &&
      tag != static_cast<std::uint8_t>(PayloadTag::app_payload))
    return std::nullopt;
  return Plaintext{static_cast<PayloadTag>(tag), Bytes(data.begin() + 1, data.end())};
}

PorMessage message_encrypt(ByteView payload, const std::vector<LayerSpec>& layers, Rng& rng) {
  if (layers.empty()) throw std::invalid_argument("message_encrypt: no layers");
  for (const LayerSpec& l : layers) {
    if (l.addrs.empty()) throw std::invalid_argument("message_encrypt: empty layer");
    if (l.addrs.size() != l.pks.size())
      throw std::invalid_argument("message_encrypt: layer addrs/pks size mismatch");
  }

  PorMessage m;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSpec& layer = layers[i];
    Bytes plain = (i + 1 == layers.size()) ? frame_app_payload(payload) : frame_inner_message(m);
    auto [env, ct] = crypto::broadcast_encrypt(view(plain), layer.pks, rng);
    m.addrs = layer.addrs;
    m.envelope = std::move(env);
    m.cipher = std::move(ct);
  }
  return m;
}

std::optional<Plaintext> message_decrypt(const PorMessage& m, const crypto::KeyPair& kp) {
  auto plain = crypto::broadcast_decrypt(m.envelope, m.cipher, kp);
  if (!plain) return std::nullopt;
  return parse_plaintext(view(*plain));
}

namespace {

struct ForwardState {
  PorMessage m;
  std::vector<Address> order;
  std::size_t next = 0;
  SendFn send;
  std::function<void(const ForwardResult&)> on_done;
};

void try_next(std::shared_ptr<ForwardState> st) {
  if (st->next >= st->order.size()) {
    ForwardResult r;
    r.sent = false;
    r.attempts = st->order.size();
    st->on_done(r);
    return;
  }
  Address to = st->order[st->next++];
  st->send(to, st->m, [st, to](bool ok) {
    if (ok) {
      ForwardResult r;
      r.sent = true;
      r.to = to;
      r.attempts = st->next;
      st->on_done(r);
    } else {
      try_next(st);
    }
  });
}

}  // namespace

void forward(const PorMessage& m, Rng& rng, SendFn send,
             std::function<void(const ForwardResult&)> on_done) {
  auto st = std::make_shared<ForwardState>();
  st->m = m;
  st->order = m.addrs;
  rng.shuffle(st->order);
  st->send = std::move(send);
  st->on_done = std::move(on_done);
  try_next(std::move(st));
}

void receive(const PorMessage& m, const crypto::KeyPair& kp, Rng& rng, SendFn send,
             std::function<void(const ReceiveOutcome&)> on_done) {
  auto plain = message_decrypt(m, kp);
  if (!plain) {
    on_done(ReceiveOutcome{ReceiveStatus::decrypt_failed, {}, {}});
    return;
  }
  if (plain->tag == PayloadTag::app_payload) {
    on_done(ReceiveOutcome{ReceiveStatus::delivered, std::move(plain->body), {}});
    return;
  }
  PorMessage inner;
  try {
    inner = deserialize(view(plain->body));
  } catch (const wire::Error&) {
    on_done(ReceiveOutcome{ReceiveStatus::decrypt_failed, {}, {}});
    return;
  }
  forward(inner, rng, std::move(send),
          [done = std::move(on_done)](const ForwardResult& fr) {
            done(ReceiveOutcome{fr.sent ? ReceiveStatus::forwarded : ReceiveStatus::dropped,
                                {},
                                fr});
          });
}

}  // namespace spores::por
