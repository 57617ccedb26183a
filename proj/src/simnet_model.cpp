#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>

#include "spores/esquad.hpp"
#include "spores/simnet.hpp"

namespace spores::sim {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::uniform: return "uniform";
    case ModelKind::unpredictable: return "unpredictable";
    case ModelKind::predictable: return "predictable";
    case ModelKind::deterministic: return "deterministic";
  }
  return "?";
}

std::optional<ModelKind> model_from_string(std::string_view name) {
  if (name == "uniform") return ModelKind::uniform;
  if (name == "unpredictable") return ModelKind::unpredictable;
  if (name == "predictable") return ModelKind::predictable;
  if (name == "deterministic") return ModelKind::deterministic;
  return std::nullopt;
}

double alpha_for(double beta, double mu) {
  if (!(beta > 0)) throw std::invalid_argument("alpha_for: beta must be positive");
  if (!(mu > 0 && mu < 1)) throw std::invalid_argument("alpha_for: mu must be in (0,1)");
  return beta / (1.0 / mu - 1.0);
}

namespace {

UserModel stochastic_model(ModelKind kind, double beta, double mu, std::size_t n_loc,
                           std::size_t n_dev, Rng& rng) {
  UserModel m;
  m.kind = kind;
  m.mu = mu;
  m.n_loc = n_loc;
  m.n_dev = n_dev;
  double alpha = alpha_for(beta, mu);

  m.transition.assign(n_loc, std::vector<double>(n_loc, 0));
  for (auto& row : m.transition) {
    for (;;) {
      double sum = 0;
      for (double& cell : row) {
        cell = sample_beta(rng, alpha, beta);
        sum += cell;
      }
      if (sum > 0) {
        for (double& cell : row) cell /= sum;
        break;
      }
    }
  }

  m.emission.assign(n_loc, std::vector<double>(n_dev, 0));
  for (auto& row : m.emission)
    for (double& cell : row) cell = sample_beta(rng, alpha, beta);
  return m;
}

UserModel deterministic_model(double mu, std::size_t n_loc, std::size_t n_dev) {
  UserModel m;
  m.kind = ModelKind::deterministic;
  m.mu = mu;
  m.n_loc = n_loc;
  m.n_dev = n_dev;

  // Cyclic location walk, 0/1 emissions: the observable row sequence loops
  // with the locations. The squad-state predictor conditions on the current
  // row only, so the loop is learnable exactly when equal rows always have
  // equal successor rows. Whenever the device budget cannot fill n_loc
  // pairwise-distinct rows (all-on and all-off rows are unique, so e.g. two
  // all-on locations would collide), repeat a shorter row period instead.
  m.transition.assign(n_loc, std::vector<double>(n_loc, 0));
  for (std::size_t l = 0; l < n_loc; ++l) m.transition[l][(l + 1) % n_loc] = 1;

  const auto total = static_cast<std::size_t>(
      std::llround(mu * static_cast<double>(n_loc) * static_cast<double>(n_dev)));

  // Distinct equal-size rows are drawn as windows on a device ring, so at
  // most n_dev exist per size; the all-off and all-on rows are unique.
  const auto capacity = [n_dev](std::size_t k) -> std::size_t {
    return (k == 0 || k == n_dev) ? 1 : n_dev;
  };

  std::size_t period = 0;
  std::vector<std::size_t> counts;
  for (std::size_t q = n_loc; q >= 1; --q) {
    if (n_loc % q != 0 || (total * q) % n_loc != 0) continue;
    const std::size_t budget = total * q / n_loc;
    const std::size_t base = budget / q, extra = budget % q;
    if (extra > capacity(base + 1) || q - extra > capacity(base)) continue;
    counts.assign(q, base);
    for (std::size_t i = 0; i < extra; ++i) counts[i] += 1;
    period = q;
    break;
  }
  if (period == 0) {  // indivisible budget (extreme mu): best effort
    period = n_loc;
    counts.assign(n_loc, total / n_loc);
    for (std::size_t i = 0; i < total % n_loc; ++i) counts[i] += 1;
  }

  std::vector<std::vector<double>> rows(period, std::vector<double>(n_dev, 0));
  std::map<std::size_t, std::size_t> shift;  // next window start per row size
  for (std::size_t i = 0; i < period; ++i) {
    const std::size_t start = shift[counts[i]]++;
    for (std::size_t j = 0; j < counts[i]; ++j) rows[i][(start + j) % n_dev] = 1;
  }
  m.emission.assign(n_loc, {});
  for (std::size_t l = 0; l < n_loc; ++l) m.emission[l] = rows[l % period];
  return m;
}

}  // namespace

UserModel sample_model(ModelKind kind, double mu, std::size_t n_loc, std::size_t n_dev,
                       Rng& rng) {
  if (!(mu > 0 && mu < 1)) throw std::invalid_argument("sample_model: mu must be in (0,1)");
  if (n_dev == 0 || n_dev > 64) throw std::invalid_argument("sample_model: need 1..64 devices");
  if (n_loc == 0) throw std::invalid_argument("sample_model: need at least one location");

  switch (kind) {
    case ModelKind::uniform: {
      UserModel m;
      m.kind = kind;
      m.mu = mu;
      m.n_loc = 1;
      m.n_dev = n_dev;
      m.transition = {{1.0}};
      m.emission = {std::vector<double>(n_dev, mu)};
      return m;
    }
    case ModelKind::unpredictable:
      return stochastic_model(kind, 0.8, mu, n_loc, n_dev, rng);
    case ModelKind::predictable:
      return stochastic_model(kind, 0.2, mu, n_loc, n_dev, rng);
    case ModelKind::deterministic:
      return deterministic_model(mu, n_loc, n_dev);
  }
  throw std::invalid_argument("sample_model: unknown kind");
}

Timeline random_walk(const UserModel& model, std::size_t rounds, Rng& rng) {
  Timeline t;
  t.devices = model.n_dev;
  t.locations.reserve(rounds);
  t.rows.reserve(rounds);

  std::uint32_t loc = 0;
  for (std::size_t i = 0; i < rounds; ++i) {
    t.locations.push_back(loc);
    std::uint64_t row = 0;
    const auto& emit = model.emission[loc];
    for (std::size_t d = 0; d < model.n_dev; ++d) {
      double p = emit[d];
      bool online = p >= 1 ? true : (p <= 0 ? false : rng.bernoulli(p));
      if (online) row |= std::uint64_t{1} << d;
    }
    t.rows.push_back(row);

    const auto& trans = model.transition[loc];
    double u = rng.next_double();
    double acc = 0;
    std::uint32_t next = static_cast<std::uint32_t>(model.n_loc - 1);
    for (std::size_t l = 0; l < model.n_loc; ++l) {
      acc += trans[l];
      if (u < acc) {
        next = static_cast<std::uint32_t>(l);
        break;
      }
    }
    loc = next;
  }
  return t;
}

double mean_availability(const Timeline& t) {
  if (t.rows.empty() || t.devices == 0) return 0;
  std::uint64_t on = 0;
  for (std::uint64_t row : t.rows) on += static_cast<std::uint64_t>(std::popcount(row));
  return static_cast<double>(on) / (static_cast<double>(t.rows.size()) * t.devices);
}

double log_score(double p, bool outcome) {
  return outcome ? std::log(p) : std::log(1 - p);
}

double predictability_score(const Timeline& t, std::size_t warmup) {
  if (t.rows.size() < warmup + 3)
    throw std::invalid_argument("predictability_score: timeline too short");
  esquad::MarkovPredictor pred(static_cast<std::uint16_t>(t.devices));
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
    pred.observe(t.rows[i]);
    if (i <= warmup) continue;
    auto probs = pred.predict_all();
    for (std::size_t d = 0; d < t.devices; ++d) {
      sum += log_score(probs[d], t.rows[i + 1] >> d & 1);
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace spores::sim
