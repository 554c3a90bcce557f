#include "melkit/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "melkit/rng.hpp"

namespace mel {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + value + "'");
  return v;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));

    if (key == "d_in") cfg.d_in = static_cast<int>(parse_long(key, value));
    else if (key == "d") cfg.d = static_cast<int>(parse_long(key, value));
    else if (key == "heads") cfg.heads = static_cast<int>(parse_long(key, value));
    else if (key == "dropout") cfg.dropout = parse_double(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(key, value));
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_long(key, value));
    else if (key == "max_steps") cfg.max_steps = parse_long(key, value);
    else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_long(key, value));
    else if (key == "patience") cfg.patience = static_cast<int>(parse_long(key, value));
    else if (key == "tau") cfg.loss.tau = parse_double(key, value);
    else if (key == "alpha") cfg.loss.alpha = parse_double(key, value);
    else if (key == "beta") cfg.loss.beta = parse_double(key, value);
    else if (key == "margin") cfg.loss.margin = parse_double(key, value);
    else if (key == "n_hard") cfg.loss.n_hard = static_cast<int>(parse_long(key, value));
    else if (key == "n_inbatch") cfg.loss.n_inbatch = static_cast<int>(parse_long(key, value));
    else if (key == "lambda") cfg.lambda = static_cast<int>(parse_long(key, value));
    else if (key == "retrieval") cfg.retrieval = value;
    else if (key == "dev_fraction") cfg.dev_fraction = parse_double(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "samples") cfg.samples = value;
    else if (key == "dev_samples") cfg.dev_samples = value;
    else if (key == "entities") cfg.entities = value;
    else if (key == "feature_stores") cfg.feature_stores = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "attributes") cfg.attributes = value;
    else if (key == "identity_threshold") cfg.identity_threshold = parse_double(key, value);
    else if (key == "max_er_tokens") cfg.max_er_tokens = static_cast<std::size_t>(parse_long(key, value));
    else if (key == "min_client_interval_ms") cfg.min_client_interval_ms = static_cast<int>(parse_long(key, value));
    else if (key == "kb_fixture") cfg.kb_fixture = value;
    else if (key == "llm_fixture") cfg.llm_fixture = value;
    else if (key == "refusal_patterns") cfg.refusal_patterns = value;
    else if (key == "cache_dir") cfg.cache_dir = value;
    else
      throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }

  if (cfg.d <= 0 || cfg.d_in <= 0 || cfg.heads <= 0)
    throw std::runtime_error("config: d, d_in and heads must be positive");
  if (cfg.d % cfg.heads != 0) throw std::runtime_error("config: heads must divide d");
  if (cfg.batch_size < 2) throw std::runtime_error("config: batch_size must be >= 2");
  if (!(cfg.loss.tau > 0)) throw std::runtime_error("config: tau must be > 0");
  if (cfg.loss.margin < 0 || cfg.loss.alpha < 0 || cfg.loss.beta < 0)
    throw std::runtime_error("config: margin, alpha and beta must be >= 0");
  if (cfg.retrieval != "plain" && cfg.retrieval != "typed")
    throw std::runtime_error("config: retrieval must be plain or typed");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["d_in"] = std::to_string(cfg.d_in);
  kv["d"] = std::to_string(cfg.d);
  kv["heads"] = std::to_string(cfg.heads);
  kv["dropout"] = format_double(cfg.dropout);
  kv["lr"] = format_double(cfg.lr);
  kv["weight_decay"] = format_double(cfg.weight_decay);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["max_steps"] = std::to_string(cfg.max_steps);
  kv["eval_every"] = std::to_string(cfg.eval_every);
  kv["patience"] = std::to_string(cfg.patience);
  kv["tau"] = format_double(cfg.loss.tau);
  kv["alpha"] = format_double(cfg.loss.alpha);
  kv["beta"] = format_double(cfg.loss.beta);
  kv["margin"] = format_double(cfg.loss.margin);
  kv["n_hard"] = std::to_string(cfg.loss.n_hard);
  kv["n_inbatch"] = std::to_string(cfg.loss.n_inbatch);
  kv["lambda"] = std::to_string(cfg.lambda);
  kv["retrieval"] = cfg.retrieval;
  kv["dev_fraction"] = format_double(cfg.dev_fraction);
  kv["seed"] = std::to_string(cfg.seed);
  kv["samples"] = cfg.samples;
  kv["dev_samples"] = cfg.dev_samples;
  kv["entities"] = cfg.entities;
  kv["feature_stores"] = cfg.feature_stores;
  kv["out_dir"] = cfg.out_dir;
  kv["attributes"] = cfg.attributes;
  kv["identity_threshold"] = format_double(cfg.identity_threshold);
  kv["max_er_tokens"] = std::to_string(cfg.max_er_tokens);
  kv["min_client_interval_ms"] = std::to_string(cfg.min_client_interval_ms);
  kv["kb_fixture"] = cfg.kb_fixture;
  kv["llm_fixture"] = cfg.llm_fixture;
  kv["refusal_patterns"] = cfg.refusal_patterns;
  kv["cache_dir"] = cfg.cache_dir;

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t model_signature(const RunConfig& cfg) {
  const std::string shape = "d_in=" + std::to_string(cfg.d_in) + ";d=" + std::to_string(cfg.d) +
                            ";heads=" + std::to_string(cfg.heads);
  return fnv1a64(shape);
}

std::vector<std::filesystem::path> RunConfig::feature_store_paths() const {
  std::vector<std::filesystem::path> paths;
  std::string current;
  for (char c : feature_stores) {
    if (c == ',') {
      if (!current.empty()) paths.emplace_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) paths.emplace_back(current);
  return paths;
}

}  // namespace mel
