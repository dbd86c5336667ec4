#pragma once

#include <map>
#include <string>

namespace bisic {

enum class CodingMode { kAR = 0, kCKBD = 1 };

enum class AttentionMode {
  kMutual,  // bidirectional mutual attention blocks
  kRow,     // row-wise (epipolar) parallax attention in place of mutual attention
  kNone,    // no attention in the codec transforms
};

struct Ablations {
  bool backbone_2d = false;
  bool entropy_minnen = false;
  AttentionMode attention = AttentionMode::kMutual;
  bool channel_context_off = false;
  bool vanilla_ckbd = false;
};

struct ModelConfig {
  int N = 32;
  int M = 32;
  int K = 4;
  CodingMode mode = CodingMode::kAR;
  int attention_embed = 16;
  Ablations ablations;
  float sigma_floor = 0.04f;
  int channel_context_width = 128;  // width of the channel-context features
  int context_width = 64;           // spatial-context width and aggregation hidden width
  float leaky_slope = 0.1f;

  // Slice count actually used by the entropy model (ablations force 1).
  int slices() const;
  int slice_channels() const { return N / slices(); }
  bool uses_channel_context() const;

  void validate() const;
  // Applies one key=value override; unknown keys throw ParameterError.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

std::string to_string(CodingMode m);
CodingMode parse_coding_mode(const std::string& s);
std::string to_string(AttentionMode m);
AttentionMode parse_attention_mode(const std::string& s);

// Splits "k=v" lines (blank lines and '#' comments ignored).
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace bisic
