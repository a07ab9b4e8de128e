#include "ddpc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ddpc {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double to_double(const std::string& v, const std::string& key, int line) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) + ": bad number for '" + key +
                      "': " + v);
  }
}

long to_long(const std::string& v, const std::string& key, int line) {
  try {
    std::size_t pos = 0;
    long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) + ": bad integer for '" + key +
                      "': " + v);
  }
}

bool to_bool(const std::string& v, const std::string& key, int line) {
  std::string s = lower(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config line " + std::to_string(line) + ": bad boolean for '" + key +
                    "': " + v);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;

  while (std::getline(is, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = lower(trim(s.substr(1, s.size() - 2)));
      if (section != "system" && section != "noise" && section != "horizons" &&
          section != "arx" && section != "kernel" && section != "mpc" &&
          section != "experiment")
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = lower(trim(s.substr(0, eq)));
    std::string val = trim(s.substr(eq + 1));

    auto unknown = [&]() -> ConfigError {
      return ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                         "' in section [" + section + "]");
    };

    if (section == "system") {
      throw unknown();  // the benchmark system is fixed; nothing to set yet
    } else if (section == "noise") {
      if (key == "sigma_w2") cfg.sigma_w2 = to_double(val, key, lineno);
      else if (key == "sigma_v2") cfg.sigma_v2 = to_double(val, key, lineno);
      else throw unknown();
    } else if (section == "horizons") {
      if (key == "lp") cfg.mpc.horizons.Lp = static_cast<int>(to_long(val, key, lineno));
      else if (key == "lf") cfg.mpc.horizons.Lf = static_cast<int>(to_long(val, key, lineno));
      else throw unknown();
    } else if (section == "arx") {
      if (key == "na") cfg.arx.na = static_cast<int>(to_long(val, key, lineno));
      else if (key == "nb") cfg.arx.nb = static_cast<int>(to_long(val, key, lineno));
      else if (key == "include_feedthrough") cfg.arx.include_feedthrough = to_bool(val, key, lineno);
      else throw unknown();
    } else if (section == "kernel") {
      if (key == "family") {
        std::string f = lower(val);
        if (f == "tc") cfg.kernel_family = KernelFamily::TC;
        else if (f == "ss") cfg.kernel_family = KernelFamily::SS;
        else throw ConfigError("config line " + std::to_string(lineno) +
                               ": kernel family must be tc or ss");
      } else {
        throw unknown();
      }
    } else if (section == "mpc") {
      if (key == "q_weight") cfg.mpc.Q_weight = to_double(val, key, lineno);
      else if (key == "r_weight") cfg.mpc.R_weight = to_double(val, key, lineno);
      else if (key == "u_lo") cfg.mpc.u_lo = to_double(val, key, lineno);
      else if (key == "u_hi") cfg.mpc.u_hi = to_double(val, key, lineno);
      else if (key == "y_lo") cfg.mpc.y_lo = to_double(val, key, lineno);
      else if (key == "y_hi") cfg.mpc.y_hi = to_double(val, key, lineno);
      else if (key == "soft_penalty") cfg.mpc.soft_penalty = to_double(val, key, lineno);
      else if (key == "output_mode") {
        std::string v2 = lower(val);
        if (v2 == "hard") cfg.mpc.output_mode = OutputConstraintMode::Hard;
        else if (v2 == "soft") cfg.mpc.output_mode = OutputConstraintMode::Soft;
        else throw ConfigError("config line " + std::to_string(lineno) +
                               ": output_mode must be hard or soft");
      } else {
        throw unknown();
      }
    } else if (section == "experiment") {
      if (key == "regime") {
        std::string v2 = lower(val);
        if (v2 == "informative") cfg.regime = Regime::Informative;
        else if (v2 == "weak") cfg.regime = Regime::Weak;
        else throw ConfigError("config line " + std::to_string(lineno) +
                               ": regime must be informative or weak");
      } else if (key == "variants") {
        cfg.variants.clear();
        std::istringstream vs(val);
        std::string item;
        while (std::getline(vs, item, ',')) cfg.variants.push_back(variant_from_name(lower(trim(item))));
        if (cfg.variants.empty())
          throw ConfigError("config line " + std::to_string(lineno) + ": empty variant list");
      } else if (key == "n_train") cfg.n_train = to_long(val, key, lineno);
      else if (key == "n_test") cfg.n_test = to_long(val, key, lineno);
      else if (key == "n_mc") cfg.n_mc = static_cast<int>(to_long(val, key, lineno));
      else if (key == "mu") cfg.mu = to_double(val, key, lineno);
      else if (key == "normalize_w") cfg.normalize_w = to_bool(val, key, lineno);
      else if (key == "base_seed") cfg.base_seed = static_cast<std::uint64_t>(to_long(val, key, lineno));
      else throw unknown();
    } else {
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    }
  }

  cfg.arx.n_y = 1;
  cfg.arx.n_u = 1;
  if (cfg.mpc.horizons.Lp < 1 || cfg.mpc.horizons.Lf < 1)
    throw ConfigError("config: horizons must be >= 1");
  if (cfg.arx.na > cfg.mpc.horizons.Lp || cfg.arx.nb > cfg.mpc.horizons.Lp)
    throw ConfigError("config: ARX order exceeds past horizon");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_string(const ExperimentConfig& cfg) {
  std::ostringstream os;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "[noise]\n"
     << "sigma_w2 = " << num(cfg.sigma_w2) << "\nsigma_v2 = " << num(cfg.sigma_v2) << "\n"
     << "[horizons]\nlp = " << cfg.mpc.horizons.Lp << "\nlf = " << cfg.mpc.horizons.Lf << "\n"
     << "[arx]\nna = " << cfg.arx.na << "\nnb = " << cfg.arx.nb
     << "\ninclude_feedthrough = " << (cfg.arx.include_feedthrough ? "true" : "false") << "\n"
     << "[kernel]\nfamily = " << (cfg.kernel_family == KernelFamily::TC ? "tc" : "ss") << "\n"
     << "[mpc]\nq_weight = " << num(cfg.mpc.Q_weight) << "\nr_weight = " << num(cfg.mpc.R_weight)
     << "\nu_lo = " << num(cfg.mpc.u_lo) << "\nu_hi = " << num(cfg.mpc.u_hi)
     << "\ny_lo = " << num(cfg.mpc.y_lo) << "\ny_hi = " << num(cfg.mpc.y_hi)
     << "\noutput_mode = "
     << (cfg.mpc.output_mode == OutputConstraintMode::Hard ? "hard" : "soft")
     << "\nsoft_penalty = " << num(cfg.mpc.soft_penalty) << "\n"
     << "[experiment]\nregime = " << (cfg.regime == Regime::Weak ? "weak" : "informative")
     << "\nvariants = ";
  for (std::size_t i = 0; i < cfg.variants.size(); ++i)
    os << (i ? "," : "") << variant_name(cfg.variants[i]);
  os << "\nn_train = " << cfg.n_train << "\nn_test = " << cfg.n_test << "\nn_mc = " << cfg.n_mc
     << "\nmu = " << num(cfg.mu) << "\nnormalize_w = " << (cfg.normalize_w ? "true" : "false")
     << "\nbase_seed = " << cfg.base_seed << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string s = config_to_string(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ddpc
