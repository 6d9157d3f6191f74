#include "piml/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "piml/error.hpp"

namespace piml {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

bool is_none(const std::string& v) { return v == "none" || v == "off" || v.empty(); }

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T to_number(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::vector<std::string> to_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw ParseError(key + ": expected a list like [0, 1, 2], got '" + v + "'");
  std::vector<std::string> items;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(unquote(item));
  }
  return items;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string fmt_list(const T& items) {
  std::string out = "[";
  bool first = true;
  for (const auto& x : items) {
    if (!first) out += ", ";
    out += fmt::format("{}", x);
    first = false;
  }
  return out + "]";
}

struct KeySpec {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    std::map<std::string, KeySpec> t;
    auto add = [&](const std::string& key, auto set, auto get) { t.emplace(key, KeySpec{set, get}); };
    using C = RunConfig;
    using S = const std::string&;

    add("condition", [](C& c, S, S v) { c.train.condition = v; }, [](const C& c) { return c.train.condition; });
    add("data_dir", [](C& c, S, S v) { c.data_dir = v; }, [](const C& c) { return c.data_dir.string(); });
    add("out_dir", [](C& c, S, S v) { c.out_dir = v; }, [](const C& c) { return c.out_dir.string(); });
    add("master_seed", [](C& c, S k, S v) { c.train.master_seed = to_number<std::uint64_t>(k, v); },
        [](const C& c) { return std::to_string(c.train.master_seed); });
    add("seeds",
        [](C& c, S k, S v) {
          c.train.seeds.clear();
          for (const auto& s : to_list(k, v)) c.train.seeds.push_back(to_number<std::uint64_t>(k, s));
        },
        [](const C& c) { return fmt_list(c.train.seeds); });
    add("use_mu", [](C& c, S k, S v) { c.train.use_mu = to_bool(k, v); },
        [](const C& c) { return fmt_bool(c.train.use_mu); });
    add("use_rho", [](C& c, S k, S v) { c.train.use_rho = to_bool(k, v); },
        [](const C& c) { return fmt_bool(c.train.use_rho); });
    add("batch_size", [](C& c, S k, S v) { c.train.batch_size = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.batch_size); });
    add("lr", [](C& c, S k, S v) { c.train.adam.lr = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.adam.lr); });
    add("adam_beta1", [](C& c, S k, S v) { c.train.adam.beta1 = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.adam.beta1); });
    add("adam_beta2", [](C& c, S k, S v) { c.train.adam.beta2 = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.adam.beta2); });
    add("adam_eps", [](C& c, S k, S v) { c.train.adam.eps = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.adam.eps); });
    add("grad_clip",
        [](C& c, S k, S v) {
          if (is_none(v)) c.train.adam.clip_norm.reset();
          else c.train.adam.clip_norm = to_number<double>(k, v);
        },
        [](const C& c) { return c.train.adam.clip_norm ? fmt_double(*c.train.adam.clip_norm) : "none"; });
    add("epochs",
        [](C& c, S k, S v) {
          if (v == "auto") c.train.epochs.reset();
          else c.train.epochs = to_number<int>(k, v);
        },
        [](const C& c) { return c.train.epochs ? std::to_string(*c.train.epochs) : "auto"; });
    add("early_stopping", [](C& c, S k, S v) { c.train.early_stopping = to_bool(k, v); },
        [](const C& c) { return fmt_bool(c.train.early_stopping); });
    add("val_fraction", [](C& c, S k, S v) { c.train.val_fraction = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.val_fraction); });
    add("paper_protocol", [](C& c, S k, S v) { c.train.paper_protocol = to_bool(k, v); },
        [](const C& c) { return fmt_bool(c.train.paper_protocol); });
    add("window_len", [](C& c, S k, S v) { c.train.window_len = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.window_len); });
    add("drop_sensors",
        [](C& c, S k, S v) {
          c.train.ingest.drop_sensors.clear();
          for (const auto& s : to_list(k, v)) c.train.ingest.drop_sensors.insert(to_number<int>(k, s));
        },
        [](const C& c) { return fmt_list(c.train.ingest.drop_sensors); });
    add("rul_cap",
        [](C& c, S k, S v) {
          if (is_none(v)) c.train.ingest.rul_cap.reset();
          else c.train.ingest.rul_cap = to_number<double>(k, v);
        },
        [](const C& c) { return c.train.ingest.rul_cap ? fmt_double(*c.train.ingest.rul_cap) : "none"; });
    add("include_extended_zeros", [](C& c, S k, S v) { c.train.physics.include_extended_zeros = to_bool(k, v); },
        [](const C& c) { return fmt_bool(c.train.physics.include_extended_zeros); });
    add("min_alive_paths",
        [](C& c, S k, S v) { c.train.physics.min_alive_paths = to_number<std::size_t>(k, v); },
        [](const C& c) { return std::to_string(c.train.physics.min_alive_paths); });
    add("modality_sse_ratio", [](C& c, S k, S v) { c.train.physics.modality.sse_ratio = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.physics.modality.sse_ratio); });
    add("modality_separation",
        [](C& c, S k, S v) { c.train.physics.modality.separation = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.physics.modality.separation); });
    add("kmeans_tol", [](C& c, S k, S v) { c.train.physics.kmeans.tol = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.train.physics.kmeans.tol); });
    add("kmeans_max_iter", [](C& c, S k, S v) { c.train.physics.kmeans.max_iter = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.physics.kmeans.max_iter); });
    add("target_scaling", [](C& c, S, S v) { c.train.target_scaling = target_scaling_from_string(v); },
        [](const C& c) { return std::string(to_string(c.train.target_scaling)); });
    add("bimodal_feed", [](C& c, S, S v) { c.train.bimodal_feed = bimodal_feed_from_string(v); },
        [](const C& c) { return std::string(to_string(c.train.bimodal_feed)); });
    add("hidden_units", [](C& c, S k, S v) { c.train.hidden = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.hidden); });
    add("mlp_hidden", [](C& c, S k, S v) { c.train.mlp_hidden = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.mlp_hidden); });
    add("mlp_activation", [](C& c, S, S v) { c.train.mlp_activation = activation_from_string(v); },
        [](const C& c) { return std::string(to_string(c.train.mlp_activation)); });
    add("threads", [](C& c, S k, S v) { c.train.threads = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.threads); });
    add("synth_paths", [](C& c, S k, S v) { c.synth_paths = to_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.synth_paths); });
    add("synth_length",
        [](C& c, S k, S v) {
          if (is_none(v) || v == "auto") c.synth_length.reset();
          else c.synth_length = to_number<int>(k, v);
        },
        [](const C& c) { return c.synth_length ? std::to_string(*c.synth_length) : "auto"; });
    add("gradcheck_step", [](C& c, S k, S v) { c.gradcheck_step = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.gradcheck_step); });
    add("gradcheck_threshold", [](C& c, S k, S v) { c.gradcheck_threshold = to_number<double>(k, v); },
        [](const C& c) { return fmt_double(c.gradcheck_threshold); });
    return t;
  }();
  return table;
}

// '#' starts a comment unless it sits inside quotes
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quote) {
      if (ch == quote) quote = 0;
    } else if (ch == '"' || ch == '\'') {
      quote = ch;
    } else if (ch == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ParseError("unknown config key '" + key + "'");
  it->second.set(config, key, unquote(trim(value)));
}

RunConfig parse_config(std::istream& in, const std::string& source_name) {
  RunConfig config;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(strip_comment(line));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    if (!seen.insert(key).second)
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      set_config_value(config, key, value);
    } catch (const ParseError& e) {
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ParseError("override '" + o + "' is not key=value");
    set_config_value(config, trim(std::string_view(o).substr(0, eq)), o.substr(eq + 1));
  }
}

std::map<std::string, std::string> canonical_config(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& [key, spec] : key_table()) out[key] = spec.get(config);
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, spec] : key_table()) keys.push_back(key);
  return keys;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : canonical_config(config)) {
    // paths do not change results
    if (key == "data_dir" || key == "out_dir" || key == "threads") continue;
    for (unsigned char ch : key + "=" + value + "\n") {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

}  // namespace piml
