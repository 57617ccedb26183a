#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spores/rng.hpp"

namespace spores::sim {

// Hidden-location user models; a hidden walk over locations drives which
// of the user's devices are online each round.
enum class ModelKind : std::uint8_t { uniform, unpredictable, predictable, deterministic };

const char* to_string(ModelKind kind);
std::optional<ModelKind> model_from_string(std::string_view name);

struct UserModel {
  ModelKind kind = ModelKind::uniform;
  double mu = 0.5;
  std::size_t n_loc = 1;
  std::size_t n_dev = 1;
  std::vector<std::vector<double>> transition;  // n_loc x n_loc, rows sum to 1
  std::vector<std::vector<double>> emission;    // n_loc x n_dev, values in [0, 1]
};

// Beta shape giving mean device availability mu against shape beta.
double alpha_for(double beta, double mu);

UserModel sample_model(ModelKind kind, double mu, std::size_t n_loc, std::size_t n_dev,
                       Rng& rng);

struct Timeline {
  std::size_t devices = 0;
  std::vector<std::uint32_t> locations;
  std::vector<std::uint64_t> rows;  // bit d: device d online that round
};

Timeline random_walk(const UserModel& model, std::size_t rounds, Rng& rng);

double mean_availability(const Timeline& t);

// outcome ? ln(p) : ln(1 - p)
double log_score(double p, bool outcome);

// Mean per-device log score of the availability predictor over the
// timeline, warm-up rounds excluded. Closer to zero is more predictable.
double predictability_score(const Timeline& t, std::size_t warmup);

struct SimConfig {
  std::size_t users = 25;
  std::size_t devices_per_user = 6;
  ModelKind model = ModelKind::unpredictable;
  double mu = 0.5;
  std::vector<double> thetas = {0.001};
  double T = 6.0;           // round length, seconds
  double T_out = 0.8;       // per-attempt send timeout, seconds
  std::size_t files = 50;   // exchanges, one every 5T starting at 5T
  double chunk_kib = 512;
  double file_mib = 50;
  std::uint64_t seed = 1;

  std::size_t view_capacity = 20;
  std::size_t gossip_len = 8;
  std::size_t bootstrap = 5;       // view seeds per device at spawn
  std::size_t window = 8;          // transfer credits
  double retry = 4.0;              // chunk retransmit timeout, seconds
  double latency = 0.05;           // one-way link latency, seconds
  std::size_t history_rounds = 50; // converged log history preseeded at spawn
  std::size_t n_loc = 4;
  std::size_t fixed_layer_size = 0;  // nonzero: baseline fixed-size layers

  void validate() const;  // throws std::invalid_argument
  std::uint32_t chunk_bytes() const;
  std::uint64_t file_bytes() const;
};

struct FileOutcome {
  std::uint32_t exchange = 0;
  double theta = 0;
  std::uint32_t uploader_user = 0;
  std::uint32_t downloader_user = 0;
  std::uint32_t chunks = 0;
  std::int64_t start_ms = 0;
  bool completed = false;
  std::int64_t completed_ms = -1;
};

struct ThetaStats {
  double theta = 0;
  std::uint64_t files_started = 0;
  std::uint64_t files_completed = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t deliveries = 0;
  std::uint64_t drops = 0;
  std::uint64_t global_layers = 0;
  std::uint64_t global_layer_members = 0;
  std::uint64_t exchanges_skipped = 0;

  double transit_rate() const {
    return messages_sent ? static_cast<double>(deliveries) / messages_sent : 0;
  }
  double completion_rate() const {
    return files_started ? static_cast<double>(files_completed) / files_started : 0;
  }
  double mean_layer_size() const {
    return global_layers ? static_cast<double>(global_layer_members) / global_layers : 0;
  }
};

struct RunMetrics {
  std::vector<FileOutcome> files;
  std::vector<ThetaStats> per_theta;  // one slot per configured theta, in order
  std::uint64_t exchanges_skipped = 0;
  std::int64_t end_ms = 0;
};

// Deterministic: a config and seed fix every event byte. Pass a stream to
// capture the event log, null to skip it.
RunMetrics run_experiment(const SimConfig& cfg, std::ostream* event_log);

}  // namespace spores::sim
