#include "mmsa/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "mmsa/sale.hpp"

namespace mmsa {

std::string format_double(double v) {
  // shortest string over all precisions that parses back to the same bits;
  // ties favor lower precision ("10" beats "1e+01")
  char buf[64];
  std::string best;
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v && (best.empty() || std::string(buf).size() < best.size()))
      best = buf;
  }
  return best.empty() ? buf : best;
}

namespace {

struct KeyDesc {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
  throw ConfigError("config: key \"" + key + "\": bad value \"" + value + "\" (" + why + ")");
}

double parse_num(const std::string& key, const std::string& value) {
  const char* s = value.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0') bad_value(key, value, "not a number");
  return v;
}

long long parse_int(const std::string& key, const std::string& value, long long lo) {
  const double v = parse_num(key, value);
  const long long n = static_cast<long long>(v);
  if (static_cast<double>(n) != v) bad_value(key, value, "not an integer");
  if (n < lo) bad_value(key, value, "must be >= " + std::to_string(lo));
  return n;
}

double parse_real(const std::string& key, const std::string& value, double lo, double hi) {
  const double v = parse_num(key, value);
  if (!(v >= lo && v <= hi))
    bad_value(key, value, "must be in [" + format_double(lo) + ", " + format_double(hi) + "]");
  return v;
}

const std::vector<KeyDesc>& key_table() {
  auto num = [](const char* key, auto getter, auto setter) {
    return KeyDesc{key,
                   [getter](const RunConfig& c) { return format_double(getter(c)); },
                   setter};
  };
  auto int_of = [](const char* key, auto getter, auto setter) {
    return KeyDesc{key,
                   [getter](const RunConfig& c) { return std::to_string(getter(c)); },
                   setter};
  };
  static const std::vector<KeyDesc> table{
      {"env.name", [](const RunConfig& c) { return c.env_name; },
       [](RunConfig& c, const std::string& v) { c.env_name = v; }},
      int_of("train.seed",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.seed); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.seed = static_cast<std::uint64_t>(parse_int("train.seed", v, 0));
             }),
      int_of("train.total_steps", [](const RunConfig& c) { return c.trainer.total_steps; },
             [](RunConfig& c, const std::string& v) {
               c.trainer.total_steps = parse_int("train.total_steps", v, 1);
             }),
      int_of("train.batch_size",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.batch_size); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.batch_size = static_cast<int>(parse_int("train.batch_size", v, 1));
             }),
      int_of("train.buffer_size",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.buffer_size); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.buffer_size = static_cast<int>(parse_int("train.buffer_size", v, 1));
             }),
      num("train.lr", [](const RunConfig& c) { return c.trainer.lr; },
          [](RunConfig& c, const std::string& v) {
            c.trainer.lr = parse_real("train.lr", v, 1e-12, 1.0);
          }),
      num("train.gamma", [](const RunConfig& c) { return c.trainer.gamma; },
          [](RunConfig& c, const std::string& v) {
            c.trainer.gamma = parse_real("train.gamma", v, 0.0, 1.0);
          }),
      num("train.grad_clip", [](const RunConfig& c) { return c.trainer.grad_clip; },
          [](RunConfig& c, const std::string& v) {
            c.trainer.grad_clip = parse_real("train.grad_clip", v, 0.0, 1e9);
          }),
      int_of("train.target_update_interval",
             [](const RunConfig& c) { return c.trainer.target_update_interval; },
             [](RunConfig& c, const std::string& v) {
               c.trainer.target_update_interval =
                   parse_int("train.target_update_interval", v, 1);
             }),
      int_of("train.test_interval", [](const RunConfig& c) { return c.trainer.test_interval; },
             [](RunConfig& c, const std::string& v) {
               c.trainer.test_interval = parse_int("train.test_interval", v, 1);
             }),
      int_of("train.test_episodes",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.test_episodes); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.test_episodes = static_cast<int>(parse_int("train.test_episodes", v, 1));
             }),
      num("train.epsilon_start", [](const RunConfig& c) { return c.trainer.epsilon.start; },
          [](RunConfig& c, const std::string& v) {
            c.trainer.epsilon.start = parse_real("train.epsilon_start", v, 0.0, 1.0);
          }),
      num("train.epsilon_end", [](const RunConfig& c) { return c.trainer.epsilon.finish; },
          [](RunConfig& c, const std::string& v) {
            c.trainer.epsilon.finish = parse_real("train.epsilon_end", v, 0.0, 1.0);
          }),
      int_of("train.epsilon_anneal_steps",
             [](const RunConfig& c) { return c.trainer.epsilon.anneal_steps; },
             [](RunConfig& c, const std::string& v) {
               c.trainer.epsilon.anneal_steps = parse_int("train.epsilon_anneal_steps", v, 1);
             }),
      int_of("agent.hidden",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.agent_hidden); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.agent_hidden = static_cast<int>(parse_int("agent.hidden", v, 1));
             }),
      int_of("sale.z_dim",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.z_dim); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.z_dim = static_cast<int>(parse_int("sale.z_dim", v, 1));
             }),
      int_of("sale.hidden",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.mlp_hidden); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.mlp_hidden = static_cast<int>(parse_int("sale.hidden", v, 1));
             }),
      int_of("sale.action_embed",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.action_embed); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.action_embed = static_cast<int>(parse_int("sale.action_embed", v, 1));
             }),
      {"sale.normalizer", [](const RunConfig& c) { return c.trainer.sale_norm; },
       [](RunConfig& c, const std::string& v) {
         try {
           parse_sale_norm(v);
         } catch (const std::invalid_argument& e) {
           bad_value("sale.normalizer", v, e.what());
         }
         c.trainer.sale_norm = v;
       }},
      int_of("wm.rollout_horizon",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.rollout_horizon); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.rollout_horizon = static_cast<int>(parse_int("wm.rollout_horizon", v, 1));
             }),
      num("wm.kl_balance_alpha", [](const RunConfig& c) { return c.trainer.kl_balance_alpha; },
          [](RunConfig& c, const std::string& v) {
            c.trainer.kl_balance_alpha = parse_real("wm.kl_balance_alpha", v, 0.0, 1.0);
          }),
      int_of("mixer.embed_dim",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.mixer_embed); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.mixer_embed = static_cast<int>(parse_int("mixer.embed_dim", v, 1));
             }),
      int_of("mixer.hypernet_hidden",
             [](const RunConfig& c) { return static_cast<long long>(c.trainer.hypernet_hidden); },
             [](RunConfig& c, const std::string& v) {
               c.trainer.hypernet_hidden =
                   static_cast<int>(parse_int("mixer.hypernet_hidden", v, 1));
             }),
      {"ablate.variant", [](const RunConfig& c) { return variant_name(c.trainer); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.trainer = make_ablation(c.trainer, v);
         } catch (const std::invalid_argument&) {
           std::string valid;
           for (const auto& name : ablation_variants()) valid += (valid.empty() ? "" : ", ") + name;
           bad_value("ablate.variant", v, "valid: " + valid);
         }
       }},
      int_of("run.checkpoint_interval",
             [](const RunConfig& c) { return c.checkpoint_interval; },
             [](RunConfig& c, const std::string& v) {
               c.checkpoint_interval = parse_int("run.checkpoint_interval", v, 0);
             }),
  };
  return table;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& d : key_table()) out.push_back(d.key);
  return out;
}

std::string config_get(const RunConfig& cfg, const std::string& key) {
  for (const auto& d : key_table())
    if (key == d.key) return d.get(cfg);
  throw ConfigError("config: unknown key \"" + key + "\"");
}

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& d : key_table()) {
    if (key == d.key) {
      d.set(cfg, value);
      return;
    }
  }
  std::string valid;
  for (const auto& d : key_table()) valid += std::string(valid.empty() ? "" : ", ") + d.key;
  throw ConfigError("config: unknown key \"" + key + "\" (valid keys: " + valid + ")");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    config_set(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open \"" + path + "\"");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& d : key_table()) {
    out += d.key;
    out += " = ";
    out += d.get(cfg);
    out += '\n';
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = render_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace mmsa
