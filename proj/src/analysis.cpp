#include "spores/analysis.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>

#include "spores/event_log.hpp"

namespace spores::analysis {

namespace {

void check_fraction(double p) {
  if (!(p >= 0 && p <= 1)) throw std::domain_error("adversary fraction must be in [0, 1]");
}

}  // namespace

double p_correlate_tor(double p) {
  check_fraction(p);
  return p * p;
}

double p_correlate_spores(double p, std::size_t layer_size) {
  check_fraction(p);
  if (layer_size == 0) throw std::domain_error("layer size must be positive");
  // The observed relay at each end is one uniformly random layer member,
  // so width cancels out: only the two realized positions matter.
  return p * p;
}

double p_full_route_tor(double p, std::size_t n_layers) {
  check_fraction(p);
  if (n_layers == 0) throw std::domain_error("need at least one layer");
  return std::pow(p, static_cast<double>(n_layers));
}

double p_full_route_spores(double p, std::size_t layer_size, std::size_t n_layers) {
  check_fraction(p);
  if (layer_size == 0) throw std::domain_error("layer size must be positive");
  if (n_layers != 3)
    throw std::domain_error("full-route tracing is defined for exactly 3 onion layers");
  double geo = 0;
  for (std::size_t k = 0; k < layer_size; ++k) geo += std::pow(1 - p, static_cast<double>(k));
  return p * p * p * geo * geo;
}

double crossover_multiplier(std::size_t layer_size) {
  if (layer_size == 0) throw std::domain_error("layer size must be positive");
  return std::pow(static_cast<double>(layer_size), 2.0 / 3.0);
}

EventLogData parse_event_log(std::istream& in) {
  EventLogData data;
  std::map<std::int32_t, std::size_t> route_index;
  struct MsgInfo {
    std::int32_t route = -1;
    std::int32_t first_user = -1;
    std::int32_t last_user = -1;
  };
  std::map<std::int64_t, MsgInfo> messages;

  auto route_slot = [&](std::int32_t id) -> RouteTrace& {
    auto it = route_index.find(id);
    if (it == route_index.end()) {
      it = route_index.emplace(id, data.routes.size()).first;
      data.routes.emplace_back();
      data.routes.back().id = id;
    }
    return data.routes[it->second];
  };

  auto note_user = [&](std::uint32_t user) {
    if (user >= 64) throw std::invalid_argument("event log names more than 64 users");
    if (user + 1 > data.n_users) data.n_users = user + 1;
  };

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("time,", 0) == 0) continue;
    sim::Event e = sim::parse_event(line);

    if (e.type == sim::event_type::route_created) {
      auto [user, dev] = sim::parse_device_name(e.actor);
      note_user(user);
      route_slot(e.route_id).origin_user = user;
    } else if (e.type == sim::event_type::route_layer_member) {
      auto [user, dev] = sim::parse_device_name(e.actor);
      note_user(user);
      RouteTrace& rt = route_slot(e.route_id);
      if (e.layer_index >= 0 && e.layer_index < 3)
        rt.layer_users[e.layer_index] |= std::uint64_t{1} << user;
      else if (e.layer_index == 3)
        rt.terminus_user = user;
    } else if (e.type == sim::event_type::message_sent) {
      route_slot(e.route_id).messages_sent += 1;
      messages[e.message_id].route = e.route_id;
    } else if (e.type == sim::event_type::message_hop) {
      auto [user, dev] = sim::parse_device_name(e.actor);
      note_user(user);
      auto it = messages.find(e.message_id);
      if (it == messages.end()) continue;
      if (e.layer_index == 0) it->second.first_user = static_cast<std::int32_t>(user);
      else if (e.layer_index == 2) it->second.last_user = static_cast<std::int32_t>(user);
    }
  }

  std::map<std::pair<std::int32_t, std::pair<std::int32_t, std::int32_t>>, std::uint64_t> pairs;
  for (const auto& [id, info] : messages) {
    if (info.route < 0) continue;
    pairs[{info.route, {info.first_user, info.last_user}}] += 1;
  }
  for (const auto& [key, count] : pairs) {
    auto it = route_index.find(key.first);
    if (it == route_index.end()) continue;
    data.routes[it->second].pairs.push_back(
        RouteTrace::Pair{key.second.first, key.second.second, count});
  }
  return data;
}

namespace {

struct SubsetTally {
  std::uint64_t samples = 0;
  std::uint64_t ends = 0;
  std::uint64_t full = 0;
  double observed_sum = 0;
  std::uint64_t observed_samples = 0;  // samples on routes that sent anything
};

void evaluate_subset(const RouteTrace& rt, std::uint64_t mask, SubsetTally& tally) {
  bool saw_first = rt.first_seen_users & mask;
  bool saw_last = rt.last_seen_users & mask;
  tally.samples += 1;
  if (saw_first && saw_last) tally.ends += 1;
  if (saw_first && (rt.layer_users[1] & mask) && (rt.layer_users[2] & mask)) tally.full += 1;
  if (rt.messages_sent > 0) {
    std::uint64_t seen = 0;
    for (const RouteTrace::Pair& p : rt.pairs) {
      if (p.first_user < 0 || p.last_user < 0) continue;
      if ((mask >> p.first_user & 1) && (mask >> p.last_user & 1)) seen += p.count;
    }
    tally.observed_sum += static_cast<double>(seen) / static_cast<double>(rt.messages_sent);
    tally.observed_samples += 1;
  }
}

std::uint64_t combinations_capped(std::size_t n, std::size_t k, std::uint64_t cap) {
  // C(n, k), stopping early once past cap.
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > cap) return cap + 1;
  }
  return c;
}

}  // namespace

CompromiseReport compromise_scan(const EventLogData& data, std::size_t max_adv_users,
                                 std::size_t max_combinations, Rng& rng) {
  if (data.n_users == 0) throw std::invalid_argument("compromise_scan: no users in log");
  if (max_combinations == 0)
    throw std::invalid_argument("compromise_scan: need at least one combination");

  // Derived fields filled lazily here so parse stays cheap.
  std::vector<RouteTrace> routes = data.routes;
  for (RouteTrace& rt : routes) {
    rt.first_seen_users = 0;
    rt.last_seen_users = 0;
    for (const RouteTrace::Pair& p : rt.pairs) {
      if (p.first_user >= 0) rt.first_seen_users |= std::uint64_t{1} << p.first_user;
      if (p.last_user >= 0) rt.last_seen_users |= std::uint64_t{1} << p.last_user;
    }
  }

  CompromiseReport report;
  double pooled = 0;
  std::size_t pooled_n = 0;
  for (std::size_t n = 1; n <= max_adv_users; ++n) {
    SubsetTally tally;
    for (const RouteTrace& rt : routes) {
      std::vector<std::uint32_t> eligible;
      for (std::uint32_t u = 0; u < data.n_users; ++u)
        if (u != rt.origin_user && u != rt.terminus_user) eligible.push_back(u);
      if (eligible.size() < n) continue;

      std::uint64_t combos = combinations_capped(eligible.size(), n, max_combinations);
      if (combos <= max_combinations) {
        // Full enumeration.
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (;;) {
          std::uint64_t mask = 0;
          for (std::size_t i : idx) mask |= std::uint64_t{1} << eligible[i];
          evaluate_subset(rt, mask, tally);
          std::size_t i = n;
          while (i > 0 && idx[i - 1] == eligible.size() - n + i - 1) --i;
          if (i == 0) break;
          ++idx[i - 1];
          for (std::size_t j = i; j < n; ++j) idx[j] = idx[j - 1] + 1;
        }
      } else {
        std::vector<std::uint32_t> pool = eligible;
        for (std::size_t s = 0; s < max_combinations; ++s) {
          std::uint64_t mask = 0;
          for (std::size_t i = 0; i < n; ++i) {
            std::size_t j = i + rng.index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            mask |= std::uint64_t{1} << pool[i];
          }
          evaluate_subset(rt, mask, tally);
        }
      }
    }

    CompromiseStats st;
    st.adv_users = n;
    st.adv_fraction = static_cast<double>(n) / data.n_users;
    if (tally.samples) {
      st.ends_fraction = static_cast<double>(tally.ends) / tally.samples;
      st.full_fraction = static_cast<double>(tally.full) / tally.samples;
    }
    if (tally.observed_samples)
      st.mean_observed = tally.observed_sum / static_cast<double>(tally.observed_samples);
    st.samples = tally.samples;
    report.per_count.push_back(st);
    if (tally.samples) {
      pooled += st.mean_observed;
      pooled_n += 1;
    }
  }
  report.pooled_mean_observed = pooled_n ? pooled / pooled_n : 0;
  return report;
}

}  // namespace spores::analysis
