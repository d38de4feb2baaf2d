#include "otafl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "otafl/theory.hpp"

namespace otafl::cli {

namespace {

using engine::Aggregation;
using engine::DataSource;
using engine::ModelKind;
using engine::SimConfig;

[[noreturn]] void bad_entry(std::string_view key, const std::string& why) {
  throw std::invalid_argument("config key '" + std::string(key) + "': " + why);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    bad_entry(key, "expected a number, got '" + std::string(value) + "'");
  }
  return out;
}

template <class T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    bad_entry(key, "expected a non-negative integer, got '" + std::string(value) + "'");
  }
  return out;
}

int parse_int(std::string_view key, std::string_view value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    bad_entry(key, "expected an integer, got '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_entry(key, "expected true or false, got '" + std::string(value) + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

engine::SimConfig default_config() { return engine::SimConfig{}; }

void apply_entry(engine::SimConfig& cfg, std::string_view key,
                 std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "sim.clients") {
    cfg.clients = parse_unsigned<std::size_t>(key, value);
  } else if (key == "sim.groups") {
    cfg.groups = parse_unsigned<std::size_t>(key, value);
  } else if (key == "sim.rounds") {
    cfg.rounds = parse_int(key, value);
  } else if (key == "sim.seed") {
    cfg.seed = parse_unsigned<std::uint64_t>(key, value);
  } else if (key == "sim.eval_every") {
    cfg.eval_every = parse_int(key, value);
  } else if (key == "sim.aggregation") {
    if (value == "geomed") {
      cfg.aggregation = Aggregation::geomed;
    } else if (value == "mean") {
      cfg.aggregation = Aggregation::mean;
    } else {
      bad_entry(key, "expected geomed or mean");
    }
  } else if (key == "sim.model") {
    if (value == "logistic") {
      cfg.model = ModelKind::logistic;
    } else if (value == "ridge") {
      cfg.model = ModelKind::ridge;
    } else {
      bad_entry(key, "expected logistic or ridge");
    }
  } else if (key == "sgd.steps") {
    cfg.sgd.steps = parse_int(key, value);
  } else if (key == "sgd.batch") {
    cfg.sgd.batch = parse_unsigned<std::size_t>(key, value);
  } else if (key == "sgd.eta") {
    cfg.sgd.eta = parse_double(key, value);
  } else if (key == "sgd.lambda") {
    cfg.sgd.lambda = parse_double(key, value);
  } else if (key == "ota.power") {
    cfg.ota.P = parse_double(key, value);
  } else if (key == "ota.sigma2") {
    cfg.ota.sigma2 = parse_double(key, value);
  } else if (key == "ota.h_min") {
    cfg.ota.h_min = parse_double(key, value);
  } else if (key == "ota.rho") {
    cfg.ota.rho = parse_double(key, value);
  } else if (key == "ota.rho_mode") {
    if (value == "fixed") {
      cfg.ota.rho_mode = ota::RhoMode::fixed;
    } else if (value == "estimated") {
      cfg.ota.rho_mode = ota::RhoMode::estimated;
    } else {
      bad_entry(key, "expected fixed or estimated");
    }
  } else if (key == "ota.rayleigh_scale") {
    cfg.ota.rayleigh_scale = parse_double(key, value);
  } else if (key == "geomed.epsilon") {
    cfg.geomed.epsilon = parse_double(key, value);
  } else if (key == "geomed.tol") {
    cfg.geomed.tol = parse_double(key, value);
  } else if (key == "geomed.max_iters") {
    cfg.geomed.max_iters = parse_int(key, value);
  } else if (key == "attack.kind") {
    if (value == "none") {
      cfg.attack.kind = attack::Kind::none;
    } else if (value == "gaussian") {
      cfg.attack.kind = attack::Kind::gaussian;
    } else if (value == "classflip") {
      cfg.attack.kind = attack::Kind::classflip;
    } else {
      bad_entry(key, "expected none, gaussian or classflip");
    }
  } else if (key == "attack.byzantine") {
    cfg.attack.byzantine_count = parse_unsigned<std::size_t>(key, value);
  } else if (key == "attack.variance") {
    cfg.attack.variance = parse_double(key, value);
  } else if (key == "attack.selection_seed") {
    cfg.attack.selection_seed = parse_unsigned<std::uint64_t>(key, value);
  } else if (key == "attack.power_exempt") {
    cfg.attack.power_exempt = parse_bool(key, value);
  } else if (key == "data.source") {
    if (value == "auto") {
      cfg.data.source = DataSource::auto_detect;
    } else if (value == "mnist") {
      cfg.data.source = DataSource::mnist;
    } else if (value == "synth") {
      cfg.data.source = DataSource::synth;
    } else {
      bad_entry(key, "expected auto, mnist or synth");
    }
  } else if (key == "data.dir") {
    cfg.data.dir = std::string(value);
  } else if (key == "data.seed") {
    cfg.data.seed = parse_unsigned<std::uint64_t>(key, value);
  } else if (key == "data.synth_train") {
    cfg.data.synth_train = parse_unsigned<std::size_t>(key, value);
  } else if (key == "data.synth_test") {
    cfg.data.synth_test = parse_unsigned<std::size_t>(key, value);
  } else if (key == "data.synth_dim") {
    cfg.data.synth_dim = parse_unsigned<std::size_t>(key, value);
  } else if (key == "data.synth_classes") {
    cfg.data.synth_classes = parse_int(key, value);
  } else if (key == "data.synth_spread") {
    cfg.data.synth_spread = parse_double(key, value);
  } else if (key == "data.ridge_dim") {
    cfg.data.ridge_dim = parse_unsigned<std::size_t>(key, value);
  } else if (key == "data.ridge_per_client") {
    cfg.data.ridge_per_client = parse_unsigned<std::size_t>(key, value);
  } else if (key == "data.ridge_noise") {
    cfg.data.ridge_noise = parse_double(key, value);
  } else {
    bad_entry(key, "unknown key");
  }
}

void apply_config_text(engine::SimConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" +
                                  std::string(line) + "'");
    }
    apply_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

engine::SimConfig parse_config(std::string_view text) {
  engine::SimConfig cfg = default_config();
  apply_config_text(cfg, text);
  return cfg;
}

engine::SimConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("unable to open config file " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const engine::SimConfig& cfg) {
  std::ostringstream out;
  out << "sim.clients=" << cfg.clients << '\n';
  out << "sim.groups=" << cfg.groups << '\n';
  out << "sim.rounds=" << cfg.rounds << '\n';
  out << "sim.seed=" << cfg.seed << '\n';
  out << "sim.aggregation="
      << (cfg.aggregation == Aggregation::geomed ? "geomed" : "mean") << '\n';
  out << "sim.eval_every=" << cfg.eval_every << '\n';
  out << "sim.model=" << (cfg.model == ModelKind::ridge ? "ridge" : "logistic")
      << '\n';
  out << "sgd.steps=" << cfg.sgd.steps << '\n';
  out << "sgd.batch=" << cfg.sgd.batch << '\n';
  out << "sgd.eta=" << format_double(cfg.sgd.eta) << '\n';
  out << "sgd.lambda=" << format_double(cfg.sgd.lambda) << '\n';
  out << "ota.power=" << format_double(cfg.ota.P) << '\n';
  out << "ota.sigma2=" << format_double(cfg.ota.sigma2) << '\n';
  out << "ota.h_min=" << format_double(cfg.ota.h_min) << '\n';
  out << "ota.rho_mode="
      << (cfg.ota.rho_mode == ota::RhoMode::fixed ? "fixed" : "estimated")
      << '\n';
  out << "ota.rho=" << format_double(cfg.ota.rho) << '\n';
  out << "ota.rayleigh_scale=" << format_double(cfg.ota.rayleigh_scale) << '\n';
  out << "geomed.epsilon=" << format_double(cfg.geomed.epsilon) << '\n';
  out << "geomed.tol=" << format_double(cfg.geomed.tol) << '\n';
  out << "geomed.max_iters=" << cfg.geomed.max_iters << '\n';
  const char* kind = "none";
  if (cfg.attack.kind == attack::Kind::gaussian) kind = "gaussian";
  if (cfg.attack.kind == attack::Kind::classflip) kind = "classflip";
  out << "attack.kind=" << kind << '\n';
  out << "attack.byzantine=" << cfg.attack.byzantine_count << '\n';
  out << "attack.variance=" << format_double(cfg.attack.variance) << '\n';
  out << "attack.selection_seed=" << cfg.attack.selection_seed << '\n';
  out << "attack.power_exempt=" << (cfg.attack.power_exempt ? "true" : "false")
      << '\n';
  const char* source = "auto";
  if (cfg.data.source == DataSource::mnist) source = "mnist";
  if (cfg.data.source == DataSource::synth) source = "synth";
  out << "data.source=" << source << '\n';
  out << "data.dir=" << cfg.data.dir << '\n';
  out << "data.seed=" << cfg.data.seed << '\n';
  out << "data.synth_train=" << cfg.data.synth_train << '\n';
  out << "data.synth_test=" << cfg.data.synth_test << '\n';
  out << "data.synth_dim=" << cfg.data.synth_dim << '\n';
  out << "data.synth_classes=" << cfg.data.synth_classes << '\n';
  out << "data.synth_spread=" << format_double(cfg.data.synth_spread) << '\n';
  out << "data.ridge_dim=" << cfg.data.ridge_dim << '\n';
  out << "data.ridge_per_client=" << cfg.data.ridge_per_client << '\n';
  out << "data.ridge_noise=" << format_double(cfg.data.ridge_noise) << '\n';
  return out.str();
}

namespace {

std::vector<ExperimentPreset> build_presets() {
  std::vector<ExperimentPreset> out;

  {
    ExperimentPreset p;
    p.name = "fig1-geomed";
    p.description =
        "grouped transmission, geometric-median aggregation, gaussian attack "
        "(B=9 of N=100)";
    p.config = default_config();
    p.config.attack.kind = attack::Kind::gaussian;
    p.config.attack.byzantine_count = 9;
    out.push_back(std::move(p));
  }
  {
    ExperimentPreset p;
    p.name = "fig1-mean";
    p.description =
        "single-group plain over-the-air averaging under the same gaussian "
        "attack, for comparison";
    p.config = default_config();
    p.config.aggregation = Aggregation::mean;
    p.config.groups = 1;
    p.config.attack.kind = attack::Kind::gaussian;
    p.config.attack.byzantine_count = 9;
    out.push_back(std::move(p));
  }
  for (const std::size_t b : {std::size_t{0}, std::size_t{3}, std::size_t{6},
                              std::size_t{9}}) {
    ExperimentPreset p;
    p.name = "fig2-classflip-B" + std::to_string(b);
    p.description = "label-flip attack with " + std::to_string(b) +
                    " compromised clients, geometric-median aggregation";
    p.config = default_config();
    p.config.attack.kind = attack::Kind::classflip;
    p.config.attack.byzantine_count = b;
    out.push_back(std::move(p));
  }
  {
    ExperimentPreset p;
    p.name = "theorem-validation";
    p.description =
        "ridge regression with a known optimum; emits the convergence bound "
        "next to the measured error";
    engine::SimConfig c = default_config();
    c.model = ModelKind::ridge;
    c.clients = 40;
    c.groups = 10;
    // Long enough that the run settles into its stationary error, which is
    // what distinguishes attack sizes; the transient alone would not.
    c.rounds = 150;
    c.eval_every = 150;
    c.sgd.steps = 1;
    c.sgd.batch = 2000;
    c.sgd.eta = 0.1;
    c.sgd.lambda = 0.1;
    c.ota.sigma2 = 1e-4;
    c.ota.h_min = 0.5;
    c.ota.rho_mode = ota::RhoMode::estimated;
    c.attack.kind = attack::Kind::gaussian;
    c.attack.byzantine_count = 2;
    // Low-variance attack: the transmitted junk stays close to the current
    // parameters, which drags the aggregate coherently instead of being
    // rejected outright, so the error floor actually responds to B.
    c.attack.variance = 0.25;
    c.data.seed = 7;
    c.data.ridge_dim = 10;
    c.data.ridge_per_client = 20000;
    c.data.ridge_noise = 0.5;
    p.config = c;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::span<const ExperimentPreset> presets() {
  static const std::vector<ExperimentPreset> all = build_presets();
  return all;
}

const ExperimentPreset* find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void emit_metrics(std::span<const engine::RoundMetrics> metrics,
                  std::span<const double> bound,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out) {
    throw std::runtime_error("unable to write metrics file " + path.string());
  }
  out << "round,train_loss,test_loss,test_acc,dist_sq,bound,empty_groups,"
         "weiszfeld_iters\n";
  const auto field = [](const std::optional<double>& v) {
    return v.has_value() ? format_double(*v) : std::string();
  };
  for (const auto& m : metrics) {
    out << m.round << ',' << field(m.train_loss) << ',' << field(m.test_loss)
        << ',' << field(m.test_accuracy) << ',' << field(m.dist_sq) << ',';
    if (std::size_t(m.round) < bound.size()) {
      out << format_double(bound[std::size_t(m.round)]);
    }
    out << ',' << m.empty_groups << ',';
    if (m.weiszfeld_iterations.has_value()) out << *m.weiszfeld_iterations;
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed writing metrics file " + path.string());
  }
}

namespace {

bool idx_files_present(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "train-images-idx3-ubyte") &&
         std::filesystem::exists(dir / "train-labels-idx1-ubyte") &&
         std::filesystem::exists(dir / "t10k-images-idx3-ubyte") &&
         std::filesystem::exists(dir / "t10k-labels-idx1-ubyte");
}

}  // namespace

Experiment make_experiment(const engine::SimConfig& cfg_in) {
  Experiment exp;
  exp.config = cfg_in;
  engine::SimConfig& cfg = exp.config;
  engine::validate(cfg);

  if (cfg.attack.kind != attack::Kind::none && cfg.attack.byzantine_count > 0) {
    exp.byzantine = attack::select_byzantine(
        cfg.clients, cfg.attack.byzantine_count,
        engine::resolved_selection_seed(cfg));
  }

  const std::uint64_t data_seed = engine::resolved_data_seed(cfg);
  if (cfg.model == ModelKind::ridge) {
    exp.problem = theory::make_ridge_problem(cfg, data_seed);
    return exp;
  }

  std::filesystem::path dir = cfg.data.dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("OTA_BYZ_DATA_DIR")) dir = env;
  }

  bool use_idx = false;
  switch (cfg.data.source) {
    case DataSource::mnist:
      if (dir.empty()) {
        throw std::runtime_error(
            "data.source=mnist but no data.dir and no OTA_BYZ_DATA_DIR");
      }
      use_idx = true;
      break;
    case DataSource::synth:
      use_idx = false;
      break;
    case DataSource::auto_detect:
      use_idx = !dir.empty() && idx_files_present(dir);
      if (!use_idx) {
        exp.notices.push_back(
            "no IDX data found, generating synthetic class blobs "
            "(seed " + std::to_string(data_seed) + ")");
      }
      break;
  }

  data::Dataset train, test;
  if (use_idx) {
    train = data::load_idx(dir / "train-images-idx3-ubyte",
                           dir / "train-labels-idx1-ubyte");
    test = data::load_idx(dir / "t10k-images-idx3-ubyte",
                          dir / "t10k-labels-idx1-ubyte");
  } else {
    const data::Dataset full = data::synth_classify(
        cfg.data.synth_train + cfg.data.synth_test, cfg.data.synth_dim,
        cfg.data.synth_classes, cfg.data.synth_spread, data_seed);
    std::tie(train, test) = data::split_head(full, cfg.data.synth_train);
  }

  data::Partition partition = data::partition_uniform(
      train.size(), cfg.clients, StreamForker(data_seed).derive("partition"));
  if (partition.dropped > 0) {
    exp.notices.push_back(std::to_string(partition.dropped) +
                          " samples dropped to give every client an equal shard");
  }

  auto problem = std::make_unique<engine::LogisticProblem>(
      std::move(train), std::move(partition), std::move(test), cfg.sgd.lambda);
  if (cfg.attack.kind == attack::Kind::classflip) {
    for (const std::size_t n : exp.byzantine) problem->flip_labels(n);
  }
  exp.problem = std::move(problem);
  return exp;
}

}  // namespace otafl::cli
