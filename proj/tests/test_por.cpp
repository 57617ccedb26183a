#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "spores/por.hpp"
#include "spores/wire.hpp"

using namespace spores;

namespace {

struct Node {
  por::Address addr;
  crypto::KeyPair kp;
};

struct TestNet {
  std::vector<Node> nodes;

  Node& make_node(Rng& rng, std::string name) {
    Node n;
    n.addr = to_bytes(name);
    n.kp = crypto::generate_keypair(rng);
    nodes.push_back(n);
    return nodes.back();
  }

  por::LayerSpec layer(std::initializer_list<std::size_t> idx) const {
    por::LayerSpec s;
    for (std::size_t i : idx) {
      s.addrs.push_back(nodes[i].addr);
      s.pks.push_back(nodes[i].kp.pk);
    }
    return s;
  }

  const Node& by_addr(const por::Address& a) const {
    for (const Node& n : nodes)
      if (n.addr == a) return n;
    throw std::runtime_error("unknown address");
  }
};

// Synchronous transport: each address is either up or down.
por::SendFn up_down_transport(const std::set<por::Address>& up,
                              std::vector<por::Address>* attempts = nullptr) {
  return [&up, attempts](const por::Address& to, const por::PorMessage&,
                         std::function<void(bool)> done) {
    if (attempts) attempts->push_back(to);
    done(up.count(to) > 0);
  };
}

}  // namespace

TEST_CASE("wire format round trips and is framed exactly") {
  Rng rng(1);
  TestNet net;
  net.make_node(rng, "a");
  net.make_node(rng, "b");
  por::PorMessage m;
  m.addrs = {net.nodes[0].addr, net.nodes[1].addr};
  m.envelope.entries = {rng.bytes(crypto::kEnvelopeEntryBytes),
                        rng.bytes(crypto::kEnvelopeEntryBytes)};
  m.cipher.bytes = rng.bytes(57);

  Bytes buf = por::serialize(m);
  por::PorMessage back = por::deserialize(view(buf));
  CHECK(back.addrs == m.addrs);
  CHECK(back.envelope.entries == m.envelope.entries);
  CHECK(back.cipher.bytes == m.cipher.bytes);

  // Trailing garbage and truncation are both rejected.
  Bytes longer = buf;
  longer.push_back(0x00);
  CHECK_THROWS_AS(por::deserialize(view(longer)), wire::Error);
  Bytes shorter(buf.begin(), buf.end() - 1);
  CHECK_THROWS_AS(por::deserialize(view(shorter)), wire::Error);
}

TEST_CASE("plaintext framing tags are the fixed wire constants") {
  Bytes app = por::frame_app_payload(view(to_bytes("data")));
  REQUIRE(app.size() == 5);
  CHECK(app[0] == 0x02);

  por::PorMessage m;
  m.cipher.bytes = to_bytes("x");
  Bytes inner = por::frame_inner_message(m);
  CHECK(inner[0] == 0x01);

  auto parsed = por::parse_plaintext(view(app));
  REQUIRE(parsed.has_value());
  CHECK(parsed->tag == por::PayloadTag::app_payload);
  CHECK(parsed->body == to_bytes("data"));

  CHECK_FALSE(por::parse_plaintext(spores::ByteView{}).has_value());
  Bytes bad{0x03, 0x00};
  CHECK_FALSE(por::parse_plaintext(view(bad)).has_value());
}

TEST_CASE("onion layers peel in order and expose the right addresses") {
  Rng rng(2);
  TestNet net;
  for (int i = 0; i < 8; ++i) net.make_node(rng, "n" + std::to_string(i));

  std::vector<por::LayerSpec> layers{net.layer({0, 1}), net.layer({2, 3, 4}),
                                     net.layer({5}), net.layer({6, 7})};
  Bytes payload = to_bytes("the app payload");
  por::PorMessage msg = por::message_encrypt(view(payload), layers, rng);

  // The outermost header carries layer 0's addresses.
  CHECK(msg.addrs == layers[0].addrs);
  CHECK(msg.envelope.entries.size() == 2);

  // Peel with one member per layer; each inner header matches the next layer.
  std::size_t pick[4] = {1, 2, 0, 1};
  por::PorMessage cur = msg;
  for (std::size_t depth = 0; depth < 4; ++depth) {
    const Node& relay = net.by_addr(layers[depth].addrs[pick[depth]]);
    auto plain = por::message_decrypt(cur, relay.kp);
    REQUIRE(plain.has_value());
    if (depth + 1 < 4) {
      REQUIRE(plain->tag == por::PayloadTag::inner_message);
      cur = por::deserialize(view(plain->body));
      CHECK(cur.addrs == layers[depth + 1].addrs);
      CHECK(cur.envelope.entries.size() == layers[depth + 1].addrs.size());
    } else {
      REQUIRE(plain->tag == por::PayloadTag::app_payload);
      CHECK(plain->body == payload);
    }
  }
}

TEST_CASE("every member of a layer can open it, non-members cannot") {
  Rng rng(3);
  TestNet net;
  for (int i = 0; i < 5; ++i) net.make_node(rng, "m" + std::to_string(i));
  std::vector<por::LayerSpec> layers{net.layer({0, 1, 2})};
  por::PorMessage msg =
      por::message_encrypt(view(to_bytes("p")), layers, rng);

  for (std::size_t i : {0, 1, 2})
    CHECK(por::message_decrypt(msg, net.nodes[i].kp).has_value());
  for (std::size_t i : {3, 4})
    CHECK_FALSE(por::message_decrypt(msg, net.nodes[i].kp).has_value());
}

TEST_CASE("forward tries candidates in random order until one is up") {
  Rng rng(4);
  TestNet net;
  for (int i = 0; i < 4; ++i) net.make_node(rng, "f" + std::to_string(i));
  por::PorMessage msg;
  for (const Node& n : net.nodes) msg.addrs.push_back(n.addr);

  SUBCASE("all up: exactly one attempt, uniform over members") {
    std::map<por::Address, int> firsts;
    std::set<por::Address> up;
    for (const Node& n : net.nodes) up.insert(n.addr);
    const int trials = 40000;
    for (int t = 0; t < trials; ++t) {
      por::ForwardResult got;
      por::forward(msg, rng, up_down_transport(up),
                   [&](const por::ForwardResult& r) { got = r; });
      REQUIRE(got.sent);
      CHECK(got.attempts == 1);
      firsts[got.to] += 1;
    }
    double expected = trials / 4.0;
    double chi2 = 0;
    for (const auto& [addr, c] : firsts)
      chi2 += (c - expected) * (c - expected) / expected;
    CHECK(firsts.size() == 4);
    CHECK(chi2 < 20.0);  // 3 dof, well past 99.9%
  }

  SUBCASE("only one up: it is always found") {
    std::set<por::Address> up{net.nodes[2].addr};
    for (int t = 0; t < 200; ++t) {
      por::ForwardResult got;
      std::vector<por::Address> attempts;
      por::forward(msg, rng, up_down_transport(up, &attempts),
                   [&](const por::ForwardResult& r) { got = r; });
      REQUIRE(got.sent);
      CHECK(got.to == net.nodes[2].addr);
      CHECK(got.attempts == attempts.size());
      // No address is attempted twice.
      std::set<por::Address> uniq(attempts.begin(), attempts.end());
      CHECK(uniq.size() == attempts.size());
    }
  }

  SUBCASE("all down: attempts equal the layer size, not sent") {
    for (int t = 0; t < 50; ++t) {
      por::ForwardResult got;
      por::forward(msg, rng, up_down_transport({}),
                   [&](const por::ForwardResult& r) { got = r; });
      CHECK_FALSE(got.sent);
      CHECK(got.attempts == msg.addrs.size());
    }
  }
}

TEST_CASE("attempt count distribution matches direct permutation sampling") {
  // Independent oracle: draw a random permutation of the layer, walk it
  // against the same up/down pattern, count probes until the first up node.
  Rng rng(5);
  TestNet net;
  const std::size_t width = 7;
  for (std::size_t i = 0; i < width; ++i)
    net.make_node(rng, "p" + std::to_string(i));
  por::PorMessage msg;
  for (const Node& n : net.nodes) msg.addrs.push_back(n.addr);

  const int trials = 30000;
  Rng oracle_rng(6);
  Rng pattern_rng(7);
  double sum_impl = 0, sum_oracle = 0;
  for (int t = 0; t < trials; ++t) {
    std::set<por::Address> up;
    for (const Node& n : net.nodes)
      if (pattern_rng.bernoulli(0.5)) up.insert(n.addr);

    por::ForwardResult got;
    por::forward(msg, rng, up_down_transport(up),
                 [&](const por::ForwardResult& r) { got = r; });
    sum_impl += static_cast<double>(got.attempts);

    std::vector<std::size_t> order(width);
    for (std::size_t i = 0; i < width; ++i) order[i] = i;
    oracle_rng.shuffle(order);
    std::size_t probes = 0;
    for (std::size_t i : order) {
      probes += 1;
      if (up.count(net.nodes[i].addr)) break;
    }
    sum_oracle += static_cast<double>(probes);
  }
  // Means of the same distribution; allow generous Monte Carlo noise.
  CHECK(sum_impl / trials == doctest::Approx(sum_oracle / trials).epsilon(0.03));
}

TEST_CASE("receive relays hop by hop to final delivery") {
  Rng rng(8);
  TestNet net;
  for (int i = 0; i < 6; ++i) net.make_node(rng, "r" + std::to_string(i));
  std::vector<por::LayerSpec> layers{net.layer({0, 1}), net.layer({2, 3}),
                                     net.layer({4, 5})};
  Bytes payload = to_bytes("chunk-0");
  por::PorMessage msg = por::message_encrypt(view(payload), layers, rng);

  // Loopback network: delivery invokes receive on the target synchronously.
  std::set<por::Address> up;
  for (const Node& n : net.nodes) up.insert(n.addr);
  int hops = 0;
  Bytes delivered;
  std::function<void(const por::Address&, const por::PorMessage&)> deliver =
      [&](const por::Address& to, const por::PorMessage& m) {
        hops += 1;
        por::receive(m, net.by_addr(to).kp, rng,
                     [&](const por::Address& nxt, const por::PorMessage& inner,
                         std::function<void(bool)> done) {
                       deliver(nxt, inner);
                       done(true);
                     },
                     [&](const por::ReceiveOutcome& out) {
                       REQUIRE(out.status != por::ReceiveStatus::decrypt_failed);
                       REQUIRE(out.status != por::ReceiveStatus::dropped);
                       if (out.status == por::ReceiveStatus::delivered)
                         delivered = out.payload;
                     });
      };
  // Kick off: the sender forwards to layer 0.
  por::forward(msg, rng,
               [&](const por::Address& to, const por::PorMessage& m,
                   std::function<void(bool)> done) {
                 deliver(to, m);
                 done(true);
               },
               [](const por::ForwardResult&) {});
  CHECK(hops == 3);
  CHECK(delivered == payload);
}

TEST_CASE("receive reports drop when the next layer is entirely down") {
  Rng rng(9);
  TestNet net;
  for (int i = 0; i < 4; ++i) net.make_node(rng, "d" + std::to_string(i));
  std::vector<por::LayerSpec> layers{net.layer({0}), net.layer({1, 2, 3})};
  por::PorMessage msg = por::message_encrypt(view(to_bytes("x")), layers, rng);

  auto opened = por::message_decrypt(msg, net.nodes[0].kp);
  REQUIRE(opened.has_value());
  por::ReceiveOutcome seen;
  por::receive(msg, net.nodes[0].kp, rng, up_down_transport({}),
               [&](const por::ReceiveOutcome& out) { seen = out; });
  CHECK(seen.status == por::ReceiveStatus::dropped);
  CHECK(seen.fwd.attempts == 3);  // one per candidate in the next layer

  por::ReceiveOutcome bad;
  por::receive(msg, net.nodes[1].kp, rng, up_down_transport({}),
               [&](const por::ReceiveOutcome& out) { bad = out; });
  CHECK(bad.status == por::ReceiveStatus::decrypt_failed);
}

TEST_CASE("relays are stateless: the same message processes twice identically") {
  Rng rng(10);
  TestNet net;
  for (int i = 0; i < 3; ++i) net.make_node(rng, "s" + std::to_string(i));
  std::vector<por::LayerSpec> layers{net.layer({0}), net.layer({1, 2})};
  por::PorMessage msg = por::message_encrypt(view(to_bytes("dup")), layers, rng);

  std::set<por::Address> up{net.nodes[1].addr, net.nodes[2].addr};
  for (int round = 0; round < 2; ++round) {
    por::ReceiveOutcome out;
    por::receive(msg, net.nodes[0].kp, rng, up_down_transport(up),
                 [&](const por::ReceiveOutcome& o) { out = o; });
    CHECK(out.status == por::ReceiveStatus::forwarded);
    CHECK(out.fwd.sent);
  }
}

TEST_CASE("asynchronous transport: per-attempt timeouts accumulate across a dead layer") {
  // A miniature clock: sends complete later, failure costs one timeout each.
  Rng rng(11);
  TestNet net;
  for (int i = 0; i < 5; ++i) net.make_node(rng, "t" + std::to_string(i));
  por::PorMessage msg;
  for (const Node& n : net.nodes) msg.addrs.push_back(n.addr);

  const std::int64_t timeout_ms = 800;
  std::int64_t now = 0;
  using Pending = std::pair<std::int64_t, std::function<void()>>;
  auto cmp = [](const Pending& a, const Pending& b) { return a.first > b.first; };
  std::priority_queue<Pending, std::vector<Pending>, decltype(cmp)> queue(cmp);

  por::SendFn send = [&](const por::Address&, const por::PorMessage&,
                         std::function<void(bool)> done) {
    queue.push({now + timeout_ms, [done] { done(false); }});
  };
  std::int64_t finished_at = -1;
  por::ForwardResult result;
  por::forward(msg, rng, send, [&](const por::ForwardResult& r) {
    result = r;
    finished_at = now;
  });
  while (!queue.empty()) {
    auto [t, fn] = queue.top();
    queue.pop();
    now = t;
    fn();
  }
  CHECK_FALSE(result.sent);
  CHECK(result.attempts == 5);
  // All five candidates down: the drop lands after 5 sequential timeouts.
  CHECK(finished_at == 5 * timeout_ms);
}
