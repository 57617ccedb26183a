#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "spores/rng.hpp"

namespace spores::analysis {

// Closed-form success probabilities for an adversary controlling a
// fraction p of relays. A route is end-to-end correlated when the
// adversary relays at both its first and last position; it is fully
// traced when the adversary holds every position.

double p_correlate_tor(double p);
double p_correlate_spores(double p, std::size_t layer_size);

double p_full_route_tor(double p, std::size_t n_layers);
// Multi-candidate layers: the observed relay at each end must be
// adversarial, and some adversary must sit in every middle layer. Only
// 3 onion layers (the e-squad terminus excluded) are supported.
double p_full_route_spores(double p, std::size_t layer_size, std::size_t n_layers);

// How much more of the network an adversary must own to fully trace a
// route here than with single-relay hops, at equal correlation power.
double crossover_multiplier(std::size_t layer_size);

// Realized receptions of one route, reconstructed from an event log.
struct RouteTrace {
  std::int32_t id = -1;
  std::uint32_t origin_user = 0;
  std::uint32_t terminus_user = 0;
  // Users owning at least one member, for each of the three global layers.
  std::uint64_t layer_users[3] = {0, 0, 0};
  std::uint64_t messages_sent = 0;
  std::uint64_t first_seen_users = 0;  // users that received >= 1 message at layer 0
  std::uint64_t last_seen_users = 0;   // same at layer 2
  // (first-hop user, last-hop user, messages): receptions aggregated per pair;
  // -1 when that end's layer never received the message.
  struct Pair {
    std::int32_t first_user;
    std::int32_t last_user;
    std::uint64_t count;
  };
  std::vector<Pair> pairs;
};

struct EventLogData {
  std::uint32_t n_users = 0;
  std::vector<RouteTrace> routes;
};

EventLogData parse_event_log(std::istream& in);

struct CompromiseStats {
  std::size_t adv_users = 0;
  double adv_fraction = 0;
  double ends_fraction = 0;      // routes with adversarial receptions at both ends
  double full_fraction = 0;      // ends realized at layer 0 plus presence in layers 1 and 2
  double mean_observed = 0;      // mean share of a route's messages seen at both ends
  std::uint64_t samples = 0;
};

struct CompromiseReport {
  std::vector<CompromiseStats> per_count;
  double pooled_mean_observed = 0;  // mean_observed averaged over the scanned counts
};

// For each adversary count, samples subsets of the users eligible on each
// route (endpoint users excluded; all subsets enumerated when fewer than
// max_combinations exist) and measures what they would have seen.
CompromiseReport compromise_scan(const EventLogData& data, std::size_t max_adv_users,
                                 std::size_t max_combinations, Rng& rng);

}  // namespace spores::analysis
