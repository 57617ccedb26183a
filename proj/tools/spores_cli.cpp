#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "spores/analysis.hpp"
#include "spores/event_log.hpp"
#include "spores/sha1.hpp"
#include "spores/simnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_ms(std::int64_t ms) {
  char buf[64];
  std::int64_t abs_ms = ms < 0 ? -ms : ms;
  std::snprintf(buf, sizeof(buf), "%s%lld.%03lld", ms < 0 ? "-" : "",
                static_cast<long long>(abs_ms / 1000), static_cast<long long>(abs_ms % 1000));
  return buf;
}

std::string config_hash(const json& j) {
  std::string dump = j.dump();
  return spores::to_hex(spores::sha1(spores::view(dump)));
}

std::ofstream open_output(const fs::path& dir, const std::string& name,
                          const std::string& hash) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  out << "# config_sha1=" << hash << "\n";
  return out;
}

json config_to_json(const spores::sim::SimConfig& cfg) {
  json j;
  j["users"] = cfg.users;
  j["devices_per_user"] = cfg.devices_per_user;
  j["model"] = spores::sim::to_string(cfg.model);
  j["mu"] = cfg.mu;
  j["theta"] = cfg.thetas;
  j["T"] = cfg.T;
  j["T_out"] = cfg.T_out;
  j["files"] = cfg.files;
  j["chunk_kib"] = cfg.chunk_kib;
  j["file_mib"] = cfg.file_mib;
  j["seed"] = cfg.seed;
  return j;
}

json load_config_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  return j;
}

void apply_config_file(spores::sim::SimConfig& cfg, const fs::path& path) {
  json j = load_config_json(path);
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "users") cfg.users = value.get<std::size_t>();
      else if (key == "devices_per_user") cfg.devices_per_user = value.get<std::size_t>();
      else if (key == "model") {
        auto kind = spores::sim::model_from_string(value.get<std::string>());
        if (!kind) throw ConfigError("unknown model: " + value.get<std::string>());
        cfg.model = *kind;
      } else if (key == "mu") cfg.mu = value.get<double>();
      else if (key == "theta") {
        cfg.thetas.clear();
        if (value.is_array())
          for (const auto& v : value) cfg.thetas.push_back(v.get<double>());
        else
          cfg.thetas.push_back(value.get<double>());
      } else if (key == "T") cfg.T = value.get<double>();
      else if (key == "T_out") cfg.T_out = value.get<double>();
      else if (key == "files") cfg.files = value.get<std::size_t>();
      else if (key == "chunk_kib") cfg.chunk_kib = value.get<double>();
      else if (key == "file_mib") cfg.file_mib = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown config key: " + key);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

int cmd_run(const spores::sim::SimConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  json jcfg = config_to_json(cfg);
  std::string hash = config_hash(jcfg);

  auto events = open_output(out_dir, "events.log", hash);
  spores::sim::RunMetrics metrics = spores::sim::run_experiment(cfg, &events);
  events.close();

  {
    std::ofstream jc(out_dir / "config.json", std::ios::binary);
    jc << jcfg.dump(2) << "\n";
  }

  auto mcsv = open_output(out_dir, "metrics.csv", hash);
  mcsv << "exchange,theta,uploader_user,downloader_user,chunks,start_s,completed,completion_s\n";
  for (const auto& f : metrics.files) {
    mcsv << f.exchange << ',' << fmt(f.theta) << ',' << f.uploader_user << ','
         << f.downloader_user << ',' << f.chunks << ',' << fmt_ms(f.start_ms) << ','
         << (f.completed ? 1 : 0) << ','
         << (f.completed ? fmt_ms(f.completed_ms) : std::string("-1")) << "\n";
  }
  mcsv.close();

  auto scsv = open_output(out_dir, "summary.csv", hash);
  scsv << "theta,files_started,files_completed,completion_rate,messages_sent,deliveries,drops,"
          "transit_rate,mean_layer_size,exchanges_skipped\n";
  for (const auto& st : metrics.per_theta) {
    scsv << fmt(st.theta) << ',' << st.files_started << ',' << st.files_completed << ','
         << fmt(st.completion_rate()) << ',' << st.messages_sent << ',' << st.deliveries << ','
         << st.drops << ',' << fmt(st.transit_rate()) << ',' << fmt(st.mean_layer_size()) << ','
         << st.exchanges_skipped << "\n";
  }
  scsv.close();

  auto fig = open_output(out_dir, "fig6.csv", hash);
  fig << "theta,mean_layer_size,transit_rate,completion_rate\n";
  for (const auto& st : metrics.per_theta)
    fig << fmt(st.theta) << ',' << fmt(st.mean_layer_size()) << ',' << fmt(st.transit_rate())
        << ',' << fmt(st.completion_rate()) << "\n";
  fig.close();
  return kExitOk;
}

std::vector<spores::sim::ModelKind> parse_model_list(const std::string& models_csv) {
  std::vector<spores::sim::ModelKind> kinds;
  std::stringstream ss(models_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto kind = spores::sim::model_from_string(item);
    if (!kind) throw ConfigError("unknown model: " + item);
    kinds.push_back(*kind);
  }
  return kinds;
}

int cmd_predictability(const std::string& models_csv, const std::string& mus_csv,
                       std::size_t rounds, std::size_t samples, std::size_t devices,
                       std::size_t locations, std::uint64_t seed, const fs::path& out_dir) {
  std::vector<spores::sim::ModelKind> kinds = parse_model_list(models_csv);
  std::vector<double> mus = parse_double_list(mus_csv);
  if (kinds.empty() || mus.empty()) throw ConfigError("need at least one model and one mu");
  for (double mu : mus)
    if (!(mu > 0 && mu < 1)) throw ConfigError("mu must be in (0,1)");
  if (rounds < 53) throw ConfigError("need at least 53 rounds");
  if (samples == 0) throw ConfigError("need at least one sample");

  json jcfg;
  jcfg["command"] = "predictability";
  jcfg["models"] = models_csv;
  jcfg["mu"] = mus;
  jcfg["rounds"] = rounds;
  jcfg["samples"] = samples;
  jcfg["devices"] = devices;
  jcfg["locations"] = locations;
  jcfg["seed"] = seed;
  std::string hash = config_hash(jcfg);

  spores::Rng master(seed);
  auto csv = open_output(out_dir, "fig4.csv", hash);
  csv << "model,mu,score\n";
  for (auto kind : kinds) {
    for (double mu : mus) {
      double sum = 0;
      for (std::size_t s = 0; s < samples; ++s) {
        spores::Rng model_rng = master.fork();
        auto model = spores::sim::sample_model(kind, mu, locations, devices, model_rng);
        spores::Rng walk_rng = master.fork();
        auto walk = spores::sim::random_walk(model, rounds, walk_rng);
        sum += spores::sim::predictability_score(walk, 50);
      }
      csv << spores::sim::to_string(kind) << ',' << fmt(mu) << ',' << fmt(sum / samples) << "\n";
    }
  }
  return kExitOk;
}

int cmd_attack(const fs::path& log_path, std::size_t max_adv, std::size_t combinations,
               std::size_t layer_size, std::uint64_t seed, const fs::path& out_dir) {
  std::ifstream in(log_path);
  if (!in) throw ConfigError("cannot read event log " + log_path.string());
  spores::analysis::EventLogData data = spores::analysis::parse_event_log(in);
  if (data.routes.empty()) throw ConfigError("event log contains no routes");
  if (max_adv == 0 || max_adv >= data.n_users)
    throw ConfigError("max adversaries must be in 1..users-1");

  json jcfg;
  jcfg["command"] = "attack";
  jcfg["log"] = log_path.string();
  jcfg["max_adversaries"] = max_adv;
  jcfg["combinations"] = combinations;
  jcfg["layer_size"] = layer_size;
  jcfg["seed"] = seed;
  std::string hash = config_hash(jcfg);

  spores::Rng rng(seed);
  auto report = spores::analysis::compromise_scan(data, max_adv, combinations, rng);

  auto csv = open_output(out_dir, "fig5.csv", hash);
  csv << "adv_users,adv_fraction,ends_compromised,full_compromised,mean_observed,"
         "p_correlate_closed,p_full_route_closed\n";
  for (const auto& st : report.per_count) {
    csv << st.adv_users << ',' << fmt(st.adv_fraction) << ',' << fmt(st.ends_fraction) << ','
        << fmt(st.full_fraction) << ',' << fmt(st.mean_observed) << ','
        << fmt(spores::analysis::p_correlate_spores(st.adv_fraction, layer_size)) << ','
        << fmt(spores::analysis::p_full_route_spores(st.adv_fraction, layer_size, 3)) << "\n";
  }
  csv << "# pooled_mean_observed=" << fmt(report.pooled_mean_observed) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stateless probabilistic onion routing over device swarms: simulation and "
               "analysis toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string config_path;

  spores::sim::SimConfig cfg;
  bool seed_given = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) {
      seed_given = true;
    });
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--config", config_path, "JSON config file");
  };

  CLI::App* run = app.add_subcommand("run", "simulate a swarm and write logs and metrics");
  add_common(run);
  std::string theta_csv, model_name;
  std::size_t users_f = 0, devices_f = 0, files_f = 0;
  double mu_f = 0, T_f = 0, tout_f = 0, chunk_f = 0, file_f = 0;
  run->add_option("--users", users_f, "number of users");
  run->add_option("--devices", devices_f, "devices per user");
  run->add_option("--model", model_name, "uniform|unpredictable|predictable|deterministic");
  run->add_option("--mu", mu_f, "mean device availability");
  run->add_option("--theta", theta_csv, "offline-probability target(s), comma separated");
  run->add_option("--T", T_f, "round length in seconds");
  run->add_option("--T-out", tout_f, "send attempt timeout in seconds");
  run->add_option("--files", files_f, "number of exchanges");
  run->add_option("--chunk-kib", chunk_f, "chunk size in KiB");
  run->add_option("--file-mib", file_f, "file size in MiB");

  CLI::App* pred = app.add_subcommand("predictability", "score availability predictions per "
                                                        "user model");
  add_common(pred);
  std::string models_csv = "uniform,unpredictable,predictable,deterministic";
  std::string mus_csv = "0.3,0.5,0.7,0.9";
  std::size_t rounds = 1000, samples = 10, devices = 6, locations = 4;
  pred->add_option("--models", models_csv, "comma separated model names");
  pred->add_option("--mu", mus_csv, "comma separated availabilities");
  pred->add_option("--rounds", rounds, "timeline length");
  pred->add_option("--samples", samples, "users sampled per cell");
  pred->add_option("--devices", devices, "devices per user");
  pred->add_option("--locations", locations, "hidden locations");

  CLI::App* attack = app.add_subcommand("attack", "scan an event log for what adversary "
                                                  "coalitions would have seen");
  add_common(attack);
  std::string log_path;
  std::size_t max_adv = 17, combinations = 1000, layer_size = 10;
  attack->add_option("--log", log_path, "events.log from a run");
  attack->add_option("--max-adversaries", max_adv, "largest coalition size");
  attack->add_option("--combinations", combinations, "coalitions sampled per size");
  attack->add_option("--layer-size", layer_size, "layer size for the closed-form columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) {
      if (!config_path.empty()) apply_config_file(cfg, config_path);
      // Flags win over the config file.
      if (run->count("--users")) cfg.users = users_f;
      if (run->count("--devices")) cfg.devices_per_user = devices_f;
      if (run->count("--model")) {
        auto kind = spores::sim::model_from_string(model_name);
        if (!kind) throw ConfigError("unknown model: " + model_name);
        cfg.model = *kind;
      }
      if (run->count("--mu")) cfg.mu = mu_f;
      if (run->count("--theta")) cfg.thetas = parse_double_list(theta_csv);
      if (run->count("--T")) cfg.T = T_f;
      if (run->count("--T-out")) cfg.T_out = tout_f;
      if (run->count("--files")) cfg.files = files_f;
      if (run->count("--chunk-kib")) cfg.chunk_kib = chunk_f;
      if (run->count("--file-mib")) cfg.file_mib = file_f;
      if (seed_given) cfg.seed = seed;
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      return cmd_run(cfg, out_dir);
    }
    if (pred->parsed()) {
      if (!config_path.empty()) {
        // Flags win over the config file, as in `run`.
        json j = load_config_json(config_path);
        try {
          for (const auto& [key, value] : j.items()) {
            if (key == "models") {
              if (!pred->count("--models")) models_csv = value.get<std::string>();
            } else if (key == "mu") {
              if (!pred->count("--mu")) mus_csv = value.get<std::string>();
            } else if (key == "rounds") {
              if (!pred->count("--rounds")) rounds = value.get<std::size_t>();
            } else if (key == "samples") {
              if (!pred->count("--samples")) samples = value.get<std::size_t>();
            } else if (key == "devices") {
              if (!pred->count("--devices")) devices = value.get<std::size_t>();
            } else if (key == "locations") {
              if (!pred->count("--locations")) locations = value.get<std::size_t>();
            } else if (key == "seed") {
              if (!seed_given) seed = value.get<std::uint64_t>();
            } else {
              throw ConfigError("unknown config key: " + key);
            }
          }
        } catch (const json::exception& e) {
          throw ConfigError(std::string("bad config value: ") + e.what());
        }
      }
      return cmd_predictability(models_csv, mus_csv, rounds, samples, devices, locations, seed,
                                out_dir);
    }
    if (attack->parsed()) {
      if (!config_path.empty()) {
        json j = load_config_json(config_path);
        try {
          for (const auto& [key, value] : j.items()) {
            if (key == "log") {
              if (!attack->count("--log")) log_path = value.get<std::string>();
            } else if (key == "max_adversaries") {
              if (!attack->count("--max-adversaries")) max_adv = value.get<std::size_t>();
            } else if (key == "combinations") {
              if (!attack->count("--combinations")) combinations = value.get<std::size_t>();
            } else if (key == "layer_size") {
              if (!attack->count("--layer-size")) layer_size = value.get<std::size_t>();
            } else if (key == "seed") {
              if (!seed_given) seed = value.get<std::uint64_t>();
            } else {
              throw ConfigError("unknown config key: " + key);
            }
          }
        } catch (const json::exception& e) {
          throw ConfigError(std::string("bad config value: ") + e.what());
        }
      }
      if (log_path.empty()) throw ConfigError("attack needs an event log (--log)");
      return cmd_attack(log_path, max_adv, combinations, layer_size, seed, out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
