#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spores/routes.hpp"
#include "spores/transfer.hpp"
#include "spores/wire.hpp"

using namespace spores;
using overlay::Descriptor;

namespace {

Descriptor desc(const std::string& addr, double p_online) {
  Descriptor d;
  d.addr = to_bytes(addr);
  d.pk[0] = static_cast<std::uint8_t>(addr.size());
  d.p_online = p_online;
  d.issued_at = 1.0;
  return d;
}

std::vector<Descriptor> pool(const std::string& prefix, std::size_t n, double p_online) {
  std::vector<Descriptor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(desc(prefix + std::to_string(i), p_online));
  return out;
}

std::set<std::string> addrs_of(const routes::Layer& layer) {
  std::set<std::string> out;
  for (const Descriptor& d : layer.members) out.insert(std::string(d.addr.begin(), d.addr.end()));
  return out;
}

// Independent restatement of the homogeneous-pool layer-size law: members
// are added until the all-offline product drops strictly below theta, so
// with identical candidates the size is ceil(log theta / log(1-p)), and at
// least one member is always picked.
std::size_t expected_size(double p_online, double theta) {
  double k = std::log(theta) / std::log(1.0 - p_online);
  auto n = static_cast<std::size_t>(std::ceil(k));
  return n < 1 ? 1 : n;
}

bool same_layer(const routes::Layer& a, const routes::Layer& b) {
  if (a.threshold_met != b.threshold_met) return false;
  if (a.members.size() != b.members.size()) return false;
  for (std::size_t i = 0; i < a.members.size(); ++i) {
    const Descriptor& x = a.members[i];
    const Descriptor& y = b.members[i];
    if (x.addr != y.addr || x.pk != y.pk || x.p_online != y.p_online ||
        x.issued_at != y.issued_at)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("all-offline probability is the product of member complements") {
  routes::Layer layer;
  CHECK(routes::p_all_offline(layer) == 1.0);
  layer.members.push_back(desc("a", 0.5));
  CHECK(routes::p_all_offline(layer) == doctest::Approx(0.5).epsilon(1e-12));
  layer.members.push_back(desc("b", 0.8));
  CHECK(routes::p_all_offline(layer) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("layer size follows the ceiling law on homogeneous pools") {
  // p = 0.5 keeps every product an exact power of two, so the strict
  // threshold comparison has no rounding ambiguity.
  Rng rng(3);
  auto cands = pool("c", 40, 0.5);
  for (double theta : {0.1, 0.01, 0.001, 0.0001}) {
    routes::Layer layer = routes::pick_layer(cands, theta, rng);
    CHECK(layer.members.size() == expected_size(0.5, theta));
    CHECK(layer.threshold_met);
  }
  CHECK(routes::pick_layer(cands, 0.1, rng).members.size() == 4);
  CHECK(routes::pick_layer(cands, 0.01, rng).members.size() == 7);
  CHECK(routes::pick_layer(cands, 0.001, rng).members.size() == 10);
  CHECK(routes::pick_layer(cands, 0.0001, rng).members.size() == 14);
}

TEST_CASE("threshold comparison is strict and theta=1 still picks one hop") {
  Rng rng(4);
  auto cands = pool("c", 10, 0.5);
  // After one member the product equals 0.5 exactly; 0.5 < 0.5 is false,
  // so a second member is required.
  CHECK(routes::pick_layer(cands, 0.5, rng).members.size() == 2);
  // The empty product 1.0 is not below theta=1, so one member is picked.
  CHECK(routes::pick_layer(cands, 1.0, rng).members.size() == 1);
}

TEST_CASE("more available candidates make shorter layers") {
  Rng rng(5);
  auto reliable = routes::pick_layer(pool("r", 40, 0.9), 0.001, rng);
  auto flaky = routes::pick_layer(pool("f", 40, 0.3), 0.001, rng);
  CHECK(reliable.members.size() < flaky.members.size());
  CHECK(flaky.members.size() == expected_size(0.3, 0.001));
}

TEST_CASE("layer picking reports when the pool runs out") {
  Rng rng(6);
  auto cands = pool("c", 3, 0.5);
  routes::Layer layer = routes::pick_layer(cands, 0.001, rng);
  CHECK(layer.members.size() == 3);
  CHECK_FALSE(layer.threshold_met);

  // Members that are never online cannot lower the product at all.
  auto dead = pool("d", 5, 0.0);
  routes::Layer hopeless = routes::pick_layer(dead, 0.5, rng);
  CHECK(hopeless.members.size() == 5);
  CHECK_FALSE(hopeless.threshold_met);
}

TEST_CASE("no candidate appears twice in one layer") {
  Rng rng(7);
  auto cands = pool("c", 12, 0.5);
  for (int t = 0; t < 200; ++t) {
    routes::Layer layer = routes::pick_layer(cands, 0.001, rng);
    CHECK(addrs_of(layer).size() == layer.members.size());
    for (const std::string& a : addrs_of(layer)) CHECK(a.substr(0, 1) == "c");
  }
}

TEST_CASE("layer membership is spread uniformly over the pool") {
  Rng rng(8);
  auto cands = pool("c", 20, 0.5);
  std::map<std::string, int> counts;
  const int trials = 8000;
  for (int t = 0; t < trials; ++t) {
    routes::Layer layer = routes::pick_layer(cands, 0.1, rng);
    REQUIRE(layer.members.size() == 4);
    for (const Descriptor& d : layer.members)
      counts[std::string(d.addr.begin(), d.addr.end())] += 1;
  }
  double expected = trials * 4 / 20.0;
  double chi2 = 0;
  for (const auto& [a, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(counts.size() == 20);
  CHECK(chi2 < 45.0);  // 19 dof
}

TEST_CASE("baseline pick ignores availability and honors the size") {
  Rng rng(9);
  auto cands = pool("c", 12, 0.2);
  routes::Layer layer = routes::pick_layer_baseline(cands, 5, rng);
  CHECK(layer.members.size() == 5);
  CHECK(layer.threshold_met);
  CHECK(addrs_of(layer).size() == 5);

  routes::Layer all = routes::pick_layer_baseline(cands, 20, rng);
  CHECK(all.members.size() == 12);
  CHECK_FALSE(all.threshold_met);
}

TEST_CASE("layer picking rejects bad arguments") {
  Rng rng(10);
  std::vector<Descriptor> empty;
  CHECK_THROWS_AS(routes::pick_layer(empty, 0.5, rng), std::invalid_argument);
  auto cands = pool("c", 3, 0.5);
  CHECK_THROWS_AS(routes::pick_layer(cands, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(routes::pick_layer(cands, -1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(routes::pick_layer_baseline(empty, 3, rng), std::invalid_argument);
  CHECK_THROWS_AS(routes::pick_layer_baseline(cands, 0, rng), std::invalid_argument);
}

TEST_CASE("layer specs carry addresses and keys in member order") {
  routes::Layer layer;
  layer.members = {desc("x", 0.5), desc("yy", 0.6)};
  por::LayerSpec spec = routes::to_layer_spec(layer);
  REQUIRE(spec.addrs.size() == 2);
  REQUIRE(spec.pks.size() == 2);
  CHECK(spec.addrs[0] == to_bytes("x"));
  CHECK(spec.addrs[1] == to_bytes("yy"));
  CHECK(spec.pks[0][0] == 1);
  CHECK(spec.pks[1][0] == 2);

  routes::RouteSpec route;
  route.layers = {layer, layer, layer, layer};
  CHECK(routes::to_layer_specs(route).size() == 4);
}

namespace {

routes::EndpointContext make_context(const std::string& squad_prefix,
                                     const std::string& foreign_prefix) {
  routes::EndpointContext ctx;
  ctx.self = desc(squad_prefix + "0", 0.5);
  ctx.self_device = 0;
  ctx.esquad = pool(squad_prefix, 6, 0.5);
  ctx.esquad.erase(ctx.esquad.begin());  // siblings exclude self
  ctx.candidates = pool(foreign_prefix, 40, 0.5);
  return ctx;
}

transfer::FileDescriptor make_fd(Rng& rng) {
  Bytes file = to_bytes("the quick brown fox jumps over the lazy dog");
  return transfer::build_file_descriptor(view(file), 8, rng);
}

bool subset_of(const routes::Layer& layer, const std::string& prefix) {
  for (const std::string& a : addrs_of(layer))
    if (a.substr(0, prefix.size()) != prefix) return false;
  return true;
}

}  // namespace

TEST_CASE("handshake splits route knowledge between the endpoints") {
  Rng rng(11);
  routes::EndpointContext up = make_context("u", "f");
  routes::EndpointContext down = make_context("d", "g");
  transfer::FileDescriptor fd = make_fd(rng);
  routes::LayerPolicy policy;  // theta = 0.001

  routes::HandshakeInit init = routes::init_upload(fd, up, policy, rng);
  REQUIRE(init.back_tail.size() == 2);
  // The uploader contributes the backward layers nearest itself: one from
  // its global view, then its own squad with itself last.
  CHECK(subset_of(init.back_tail[0], "f"));
  CHECK(init.back_tail[1].members.back().addr == up.self.addr);
  CHECK(subset_of(init.back_tail[1], "u"));

  esquad::InteractionLog down_log(2);
  routes::ReceiverSetup setup = routes::on_handshake(init, down, policy, down_log, 12.0, rng);
  REQUIRE(setup.reply.fwd_tail.size() == 2);
  CHECK(subset_of(setup.reply.fwd_tail[0], "g"));
  CHECK(setup.reply.fwd_tail[1].members.back().addr == down.self.addr);
  CHECK(subset_of(setup.reply.fwd_tail[1], "d"));

  REQUIRE(setup.back_route.layers.size() == 4);
  CHECK(subset_of(setup.back_route.layers[0], "g"));
  CHECK(subset_of(setup.back_route.layers[1], "g"));
  CHECK(same_layer(setup.back_route.layers[2], init.back_tail[0]));
  CHECK(same_layer(setup.back_route.layers[3], init.back_tail[1]));

  // The downloader's squad log now names the receiving endpoint.
  REQUIRE(down_log.size() == 1);
  esquad::Interaction rec = down_log.all()[0];
  CHECK(rec.type == esquad::InteractionType::download);
  CHECK(rec.device == down.self_device);
  CHECK(rec.file == fd.id);
  CHECK(rec.ts == 12.0);

  esquad::InteractionLog up_log(1);
  routes::RouteSpec fwd =
      routes::finalize_upload(setup.reply, fd, up, policy, up_log, 13.0, rng);
  REQUIRE(fwd.layers.size() == 4);
  CHECK(subset_of(fwd.layers[0], "f"));
  CHECK(subset_of(fwd.layers[1], "f"));
  CHECK(same_layer(fwd.layers[2], setup.reply.fwd_tail[0]));
  CHECK(same_layer(fwd.layers[3], setup.reply.fwd_tail[1]));

  REQUIRE(up_log.size() == 1);
  CHECK(up_log.all()[0].type == esquad::InteractionType::upload);
  CHECK(up_log.all()[0].file == fd.id);

  // Global layers at theta=0.001 over p=0.5 pools: ten members each; the
  // destination layers add the endpoint itself.
  for (const routes::Layer& l : {fwd.layers[0], fwd.layers[1], setup.back_route.layers[0],
                                 setup.back_route.layers[1]})
    CHECK(l.members.size() == 10);
  for (const routes::Layer& l : fwd.layers) CHECK(addrs_of(l).size() == l.members.size());
  for (const routes::Layer& l : setup.back_route.layers)
    CHECK(addrs_of(l).size() == l.members.size());
}

TEST_CASE("fixed-size policy switches global layers to the baseline pick") {
  Rng rng(12);
  routes::EndpointContext up = make_context("u", "f");
  transfer::FileDescriptor fd = make_fd(rng);
  routes::LayerPolicy policy;
  policy.fixed_size = 3;

  routes::HandshakeInit init = routes::init_upload(fd, up, policy, rng);
  CHECK(init.back_tail[0].members.size() == 3);
  // The squad layer still sizes itself by availability.
  CHECK(init.back_tail[1].members.back().addr == up.self.addr);
}

TEST_CASE("handshake messages survive the wire") {
  Rng rng(13);
  routes::EndpointContext up = make_context("u", "f");
  routes::EndpointContext down = make_context("d", "g");
  transfer::FileDescriptor fd = make_fd(rng);
  routes::LayerPolicy policy;

  routes::HandshakeInit init = routes::init_upload(fd, up, policy, rng);
  Bytes wire_init = routes::serialize(init);
  routes::HandshakeInit back = routes::parse_handshake_init(view(wire_init));
  CHECK(back.fd.id == fd.id);
  CHECK(back.fd.size == fd.size);
  CHECK(back.fd.chunk_size == fd.chunk_size);
  CHECK(back.fd.n_chunks == fd.n_chunks);
  CHECK(back.fd.chunks_hash == fd.chunks_hash);
  CHECK(back.fd.hash == fd.hash);
  REQUIRE(back.back_tail.size() == 2);
  CHECK(same_layer(back.back_tail[0], init.back_tail[0]));
  CHECK(same_layer(back.back_tail[1], init.back_tail[1]));

  esquad::InteractionLog log(2);
  routes::ReceiverSetup setup = routes::on_handshake(init, down, policy, log, 1.0, rng);
  Bytes wire_reply = routes::serialize(setup.reply);
  routes::HandshakeReply reply = routes::parse_handshake_reply(view(wire_reply));
  REQUIRE(reply.fwd_tail.size() == 2);
  CHECK(same_layer(reply.fwd_tail[0], setup.reply.fwd_tail[0]));
  CHECK(same_layer(reply.fwd_tail[1], setup.reply.fwd_tail[1]));

  SUBCASE("trailing bytes are rejected") {
    Bytes bad = wire_init;
    bad.push_back(0);
    CHECK_THROWS_AS(routes::parse_handshake_init(view(bad)), wire::Error);
  }
  SUBCASE("truncation is rejected") {
    Bytes bad(wire_reply.begin(), wire_reply.end() - 1);
    CHECK_THROWS_AS(routes::parse_handshake_reply(view(bad)), wire::Error);
  }
  SUBCASE("wrong layer counts are rejected") {
    routes::HandshakeInit lopsided = init;
    lopsided.back_tail.pop_back();
    Bytes one = routes::serialize(lopsided);
    CHECK_THROWS_AS(routes::parse_handshake_init(view(one)), wire::Error);
  }
}
