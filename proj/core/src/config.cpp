#include "dgpo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "dgpo/errors.hpp"

namespace dgpo::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

struct FieldError {
  std::string expected;
};

long long parse_int(const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw FieldError{"an integer"};
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw FieldError{"an unsigned 64-bit integer"};
  return out;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw FieldError{"a number"};
  return out;
}

std::vector<std::string> parse_list(std::string v) {
  v = trim(v);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw FieldError{"a list"};
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename E>
E parse_enum(const std::string& v, E (*from)(const std::string&)) {
  try {
    return from(v);
  } catch (const std::exception& e) {
    throw FieldError{std::string("a valid choice (") + e.what() + ")"};
  }
}

int as_int(const std::string& v) { return static_cast<int>(parse_int(v)); }
std::size_t as_size(const std::string& v) {
  const long long x = parse_int(v);
  if (x < 0) throw FieldError{"a non-negative integer"};
  return static_cast<std::size_t>(x);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

#define DGPO_FIELD(KEY, MEMBER, PARSE) \
  Field { KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = PARSE(v); }, [](const RunConfig& c) { return nlohmann::json(c.MEMBER); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(DGPO_FIELD("seed", train.seed, parse_u64));
    f.push_back({"model.hidden",
                 [](RunConfig& c, const std::string& v) {
                   c.train.hidden.clear();
                   for (const std::string& s : parse_list(v)) c.train.hidden.push_back(as_size(s));
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.train.hidden); }});
    f.push_back(DGPO_FIELD("model.time_dim", train.time_dim, as_size));
    f.push_back(DGPO_FIELD("model.cond_dim", train.cond_dim, as_size));
    f.push_back(DGPO_FIELD("task.modes", train.task.modes, as_size));
    f.push_back(DGPO_FIELD("task.radius", train.task.radius, parse_double));
    f.push_back(DGPO_FIELD("task.mode_std", train.task.mode_std, parse_double));
    f.push_back({"task.reward",
                 [](RunConfig& c, const std::string& v) {
                   c.train.reward = parse_enum(v, rewards::reward_kind_from_string);
                 },
                 [](const RunConfig& c) { return nlohmann::json(rewards::to_string(c.train.reward)); }});
    f.push_back(DGPO_FIELD("task.reward_tau", train.reward_tau, parse_double));
    f.push_back(DGPO_FIELD("pretrain.steps", train.pretrain_steps, as_int));
    f.push_back(DGPO_FIELD("pretrain.batch", train.pretrain_batch, as_int));
    f.push_back(DGPO_FIELD("pretrain.lr", train.pretrain_lr, parse_double));
    f.push_back(DGPO_FIELD("pretrain.eval_every", train.pretrain_eval_every, as_int));
    f.push_back({"posttrain.algorithm",
                 [](RunConfig& c, const std::string& v) {
                   c.train.algorithm = parse_enum(v, train::algorithm_from_string);
                 },
                 [](const RunConfig& c) { return nlohmann::json(train::to_string(c.train.algorithm)); }});
    f.push_back(DGPO_FIELD("posttrain.group_size", train.group_size, as_size));
    f.push_back(DGPO_FIELD("posttrain.beta", train.beta, parse_double));
    f.push_back(DGPO_FIELD("posttrain.t_min", train.t_min, parse_double));
    f.push_back(DGPO_FIELD("posttrain.lr", train.lr, parse_double));
    f.push_back(DGPO_FIELD("posttrain.iterations", train.iterations, as_int));
    f.push_back(DGPO_FIELD("posttrain.ema_decay", train.ema_decay, parse_double));
    f.push_back(DGPO_FIELD("posttrain.ema_start", train.ema_start, as_int));
    f.push_back(DGPO_FIELD("posttrain.rollout_steps", train.rollout_steps, as_int));
    f.push_back({"posttrain.sampler",
                 [](RunConfig& c, const std::string& v) {
                   c.train.sampler = parse_enum(v, train::sampler_from_string);
                 },
                 [](const RunConfig& c) { return nlohmann::json(train::to_string(c.train.sampler)); }});
    f.push_back(DGPO_FIELD("posttrain.noise_scale", train.noise_scale, parse_double));
    f.push_back(DGPO_FIELD("posttrain.cond_drop", train.cond_drop, parse_double));
    f.push_back(DGPO_FIELD("posttrain.groups_per_iter", train.groups_per_iter, as_int));
    f.push_back(DGPO_FIELD("posttrain.eps_std", train.eps_std, parse_double));
    f.push_back(DGPO_FIELD("posttrain.clip", train.clip, parse_double));
    f.push_back(DGPO_FIELD("posttrain.grpo_inner_steps", train.grpo_inner_steps, as_int));
    f.push_back({"posttrain.optimizer",
                 [](RunConfig& c, const std::string& v) {
                   c.train.optimizer = parse_enum(v, nn::optimizer_from_string);
                 },
                 [](const RunConfig& c) { return nlohmann::json(nn::to_string(c.train.optimizer)); }});
    f.push_back({"posttrain.weighting",
                 [](RunConfig& c, const std::string& v) {
                   c.train.weighting = parse_enum(v, diffusion::weighting_from_string);
                 },
                 [](const RunConfig& c) { return nlohmann::json(diffusion::to_string(c.train.weighting)); }});
    f.push_back(DGPO_FIELD("posttrain.base_checkpoint", base_checkpoint, unquote));
    f.push_back(DGPO_FIELD("posttrain.checkpoint_every", checkpoint_every, as_int));
    f.push_back(DGPO_FIELD("eval.every", train.eval_every, as_int));
    f.push_back(DGPO_FIELD("eval.samples", train.eval_samples, as_int));
    f.push_back(DGPO_FIELD("eval.holdout", train.holdout_samples, as_int));
    f.push_back(DGPO_FIELD("eval.projections", train.projections, as_int));
    f.push_back(DGPO_FIELD("eval.checkpoint", eval_checkpoint, unquote));
    f.push_back(DGPO_FIELD("plot.input", plot_input, unquote));
    f.push_back(DGPO_FIELD("ablate.variants", variants, parse_list));
    return f;
  }();
  return table;
}

#undef DGPO_FIELD

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::string where(const std::string& origin, int line) { return origin + ":" + std::to_string(line); }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

KeyValues parse_config_text(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(where(origin, line_no) + ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where(origin, line_no) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where(origin, line_no) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (kv.contains(full)) {
      throw ConfigError(where(origin, line_no) + ": field '" + full + "' set twice (first on line " +
                        std::to_string(kv[full].line) + ")");
    }
    kv[full] = {value, line_no};
  }
  return kv;
}

KeyValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

RunConfig resolve_config(const KeyValues& kv, RunConfig base, const std::string& origin) {
  RunConfig cfg = std::move(base);
  for (const auto& [key, entry] : kv) {
    if (key.rfind("variant.", 0) == 0) {
      const std::string rest = key.substr(8);
      const auto dot = rest.find('.');
      if (dot == std::string::npos || dot == 0) {
        throw ConfigError(where(origin, entry.line) + ": malformed variant key '" + key + "'");
      }
      const std::string name = rest.substr(0, dot);
      std::string field = rest.substr(dot + 1);
      if (field.find('.') == std::string::npos) field = "posttrain." + field;
      if (find_field(field) == nullptr) {
        throw ConfigError(where(origin, entry.line) + ": unknown field '" + field + "' in variant '" + name + "'");
      }
      cfg.variant_overrides[name][field] = entry;
      continue;
    }
    const Field* f = find_field(key);
    if (f == nullptr) throw ConfigError(where(origin, entry.line) + ": unknown field '" + key + "'");
    try {
      f->set(cfg, entry.value);
    } catch (const FieldError& e) {
      throw ConfigError(where(origin, entry.line) + ": field '" + key + "' expects " + e.expected + ", got '" +
                        entry.value + "'");
    }
  }
  return cfg;
}

std::string to_config_text(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  auto render = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return "\"" + v.get<std::string>() + "\"";
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_array()) {
      std::string s = "[";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) s += ", ";
        s += v[i].is_string() ? "\"" + v[i].get<std::string>() + "\"" : v[i].dump();
      }
      return s + "]";
    }
    return v.dump();
  };
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << name << " = " << render(f.get(config)) << "\n";
  }
  for (const auto& [variant, kv] : config.variant_overrides) {
    os << "\n[variant." << variant << "]\n";
    for (const auto& [key, entry] : kv) os << key << " = \"" << entry.value << "\"\n";
  }
  return os.str();
}

nlohmann::json config_to_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const Field& f : fields()) j[f.key] = f.get(config);
  for (const auto& [variant, kv] : config.variant_overrides) {
    for (const auto& [key, entry] : kv) j["variant." + variant + "." + key] = entry.value;
  }
  return j;
}

}  // namespace dgpo::cli
