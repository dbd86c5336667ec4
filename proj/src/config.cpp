#include "bisic/config.hpp"

#include <charconv>
#include <sstream>

#include "bisic/errors.hpp"

namespace bisic {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ParameterError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

float parse_float(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const float f = std::stof(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return f;
  } catch (const std::exception&) {
    throw ParameterError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ParameterError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

// Shortest text that parses back to the same float.
std::string float_str(float f) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, f);
  return std::string(buf, p);
}

}  // namespace

std::string to_string(CodingMode m) { return m == CodingMode::kAR ? "ar" : "ckbd"; }

CodingMode parse_coding_mode(const std::string& s) {
  if (s == "ar" || s == "AR") return CodingMode::kAR;
  if (s == "ckbd" || s == "CKBD") return CodingMode::kCKBD;
  throw ParameterError("mode must be ar or ckbd, got '" + s + "'");
}

std::string to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::kMutual: return "mutual";
    case AttentionMode::kRow: return "ying_style_off";
    case AttentionMode::kNone: return "none";
  }
  return "mutual";
}

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "mutual") return AttentionMode::kMutual;
  if (s == "ying_style_off" || s == "row") return AttentionMode::kRow;
  if (s == "none") return AttentionMode::kNone;
  throw ParameterError("attention must be mutual, ying_style_off or none, got '" + s + "'");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

int ModelConfig::slices() const {
  return (ablations.entropy_minnen || ablations.channel_context_off) ? 1 : K;
}

bool ModelConfig::uses_channel_context() const { return slices() > 1; }

void ModelConfig::validate() const {
  if (N <= 0 || M <= 0 || K <= 0) throw ParameterError("N, M and K must be positive");
  if (N % K != 0) {
    throw ParameterError("N=" + std::to_string(N) + " is not divisible by K=" + std::to_string(K));
  }
  if (attention_embed <= 0 || attention_embed > N) {
    throw ParameterError("attention_embed must be in [1, N], got " + std::to_string(attention_embed));
  }
  if (!(sigma_floor > 0)) throw ParameterError("sigma_floor must be > 0");
  if (channel_context_width <= 0 || context_width <= 0) {
    throw ParameterError("context widths must be positive");
  }
  if (N > 65535 || M > 65535 || K > 255) throw ParameterError("N, M or K too large for the container");
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "N") N = parse_int(key, value);
  else if (key == "M") M = parse_int(key, value);
  else if (key == "K") K = parse_int(key, value);
  else if (key == "mode") mode = parse_coding_mode(value);
  else if (key == "attention_embed") attention_embed = parse_int(key, value);
  else if (key == "sigma_floor") sigma_floor = parse_float(key, value);
  else if (key == "channel_context_width") channel_context_width = parse_int(key, value);
  else if (key == "context_width") context_width = parse_int(key, value);
  else if (key == "leaky_slope") leaky_slope = parse_float(key, value);
  else if (key == "backbone_2d") ablations.backbone_2d = parse_bool(key, value);
  else if (key == "entropy_minnen") ablations.entropy_minnen = parse_bool(key, value);
  else if (key == "attention") ablations.attention = parse_attention_mode(value);
  else if (key == "channel_context_off") ablations.channel_context_off = parse_bool(key, value);
  else if (key == "vanilla_ckbd") ablations.vanilla_ckbd = parse_bool(key, value);
  else throw ParameterError("unknown model config key '" + key + "'");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"N", std::to_string(N)},
      {"M", std::to_string(M)},
      {"K", std::to_string(K)},
      {"mode", to_string(mode)},
      {"attention_embed", std::to_string(attention_embed)},
      {"sigma_floor", float_str(sigma_floor)},
      {"channel_context_width", std::to_string(channel_context_width)},
      {"context_width", std::to_string(context_width)},
      {"leaky_slope", float_str(leaky_slope)},
      {"backbone_2d", ablations.backbone_2d ? "1" : "0"},
      {"entropy_minnen", ablations.entropy_minnen ? "1" : "0"},
      {"attention", to_string(ablations.attention)},
      {"channel_context_off", ablations.channel_context_off ? "1" : "0"},
      {"vanilla_ckbd", ablations.vanilla_ckbd ? "1" : "0"},
  };
}

std::string ModelConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  for (const auto& [k, v] : parse_key_values(text)) c.set(k, v);
  c.validate();
  return c;
}

}  // namespace bisic
